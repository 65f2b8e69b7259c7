//! Python bindings: problems loaded from TOML, solves, residual fields,
//! lattice distances and the check suites. Reports come back as dicts.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

use vexlap::cli_io::{self, Suite};
use vexlap::{Grid2D, Node, ScalarField};

create_exception!(pyvexlap, VexlapError, PyException);

fn err(e: vexlap::Error) -> PyErr {
    VexlapError::new_err(e.to_string())
}

fn to_dict<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyDict>> {
    let text = serde_json::to_string(value).map_err(|e| VexlapError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))?.cast_into::<PyDict>().map_err(Into::into)
}

fn parse_suite(name: &str) -> PyResult<Suite> {
    Ok(match name {
        "comparison" => Suite::Comparison,
        "harnack" => Suite::Harnack,
        "lemma41" => Suite::Lemma41,
        "uniqueness" => Suite::Uniqueness,
        "eikonal" => Suite::Eikonal,
        _ => return Err(VexlapError::new_err(format!("unknown suite `{name}`"))),
    })
}

/// A parsed expression in `x` and `y`.
#[pyclass(frozen)]
struct Expr(vexlap::Expr);

#[pymethods]
impl Expr {
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        vexlap::parse(text).map(Expr).map_err(|e| VexlapError::new_err(e.to_string()))
    }

    fn eval(&self, x: f64, y: f64) -> PyResult<f64> {
        self.0.eval(x, y).map_err(|e| VexlapError::new_err(e.to_string()))
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Expr('{}')", self.0)
    }
}

/// Nodal values on a problem's lattice, `y` outer and `x` inner.
#[pyclass(frozen)]
struct Field {
    values: ScalarField,
    grid: Grid2D,
}

impl Field {
    fn wrap(values: ScalarField, grid: &Grid2D) -> Self {
        Field { values, grid: grid.clone() }
    }
}

#[pymethods]
impl Field {
    #[getter]
    fn nx(&self) -> usize {
        self.grid.nx
    }

    #[getter]
    fn ny(&self) -> usize {
        self.grid.ny
    }

    fn __len__(&self) -> usize {
        self.values.len()
    }

    /// Value at node `(i, j)`.
    fn at(&self, i: usize, j: usize) -> PyResult<f64> {
        if i >= self.grid.nx || j >= self.grid.ny {
            return Err(VexlapError::new_err(format!("node ({i}, {j}) outside the lattice")));
        }
        Ok(self.values[self.grid.index(i, j)])
    }

    /// Flat list of values.
    fn values(&self) -> Vec<f64> {
        self.values.values().to_vec()
    }

    /// Rows `[j][i]`.
    fn to_rows(&self) -> Vec<Vec<f64>> {
        self.values.values().chunks(self.grid.nx).map(<[f64]>::to_vec).collect()
    }

    /// Node coordinates as `(x, y)` pairs in storage order.
    fn points(&self) -> Vec<(f64, f64)> {
        (0..self.grid.len()).map(|k| self.grid.point(k)).collect()
    }

    fn min(&self) -> f64 {
        self.values.min()
    }

    fn max(&self) -> f64 {
        self.values.max()
    }

    fn sup_distance(&self, other: &Field) -> PyResult<f64> {
        if self.grid != other.grid {
            return Err(VexlapError::new_err("fields live on different lattices"));
        }
        Ok(self.values.sup_distance(&other.values))
    }

    /// Writes the field as `x,y,value` CSV.
    fn save(&self, path: &str) -> PyResult<()> {
        cli_io::export_field(&self.values, &self.grid, path).map_err(err)
    }
}

/// A Dirichlet problem loaded from a TOML problem file.
#[pyclass(frozen)]
struct Problem(vexlap::Problem);

#[pymethods]
impl Problem {
    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        cli_io::load_problem(path).map(Problem).map_err(err)
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let spec = cli_io::parse_config(text).map_err(err)?;
        vexlap::Problem::new(spec).map(Problem).map_err(err)
    }

    #[getter]
    fn nx(&self) -> usize {
        self.0.grid.nx
    }

    #[getter]
    fn ny(&self) -> usize {
        self.0.grid.ny
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.0.spec.epsilon
    }

    #[getter]
    fn k_schedule(&self) -> Vec<f64> {
        self.0.spec.solver.k_schedule.clone()
    }

    fn with_epsilon(&self, epsilon: f64) -> Self {
        Problem(self.0.with_epsilon(epsilon))
    }

    /// Boundary data (zero on interior nodes).
    fn boundary(&self) -> Field {
        Field::wrap(self.0.f.clone(), &self.0.grid)
    }

    /// Solves and returns `(field, report)`.
    #[pyo3(signature = (init=None))]
    fn solve<'py>(&self, py: Python<'py>, init: Option<&Field>) -> PyResult<(Field, Bound<'py, PyDict>)> {
        let init = init.map(|f| &f.values);
        let (u, report) = py.detach(|| cli_io::solve(&self.0, init)).map_err(err)?;
        Ok((Field::wrap(u, &self.0.grid), to_dict(py, &report)?))
    }

    /// Pointwise infinity-Laplace residual of `u`.
    fn residual(&self, u: &Field) -> PyResult<Field> {
        let pr = &self.0;
        vexlap::infinity_x_residual_field(&u.values, &pr.frame, &pr.grid, &pr.p)
            .map(|r| Field::wrap(r, &pr.grid))
            .map_err(err)
    }

    /// Residual of the min form (`epsilon > 0`) or max form (`epsilon < 0`).
    fn jensen_residual(&self, u: &Field) -> PyResult<Field> {
        let pr = &self.0;
        let eps = pr.spec.epsilon;
        let r = if eps > 0.0 {
            vexlap::min_form_residual(&u.values, &pr.frame, &pr.grid, &pr.p, eps)
        } else if eps < 0.0 {
            vexlap::max_form_residual(&u.values, &pr.frame, &pr.grid, &pr.p, eps)
        } else {
            return Err(VexlapError::new_err("epsilon is zero; use residual()"));
        };
        r.map(|r| Field::wrap(r, &pr.grid)).map_err(err)
    }

    /// Lattice distance from node `(i, j)`.
    fn distance(&self, i: usize, j: usize) -> PyResult<Field> {
        let g = &self.0.grid;
        if i >= g.nx || j >= g.ny {
            return Err(VexlapError::new_err(format!("node ({i}, {j}) outside the lattice")));
        }
        vexlap::riemannian_distance(&self.0.frame, g, Node::new(i, j))
            .map(|d| Field::wrap(d, g))
            .map_err(err)
    }

    /// Reads a CSV field written for this problem's lattice.
    fn load_field(&self, path: &str) -> PyResult<Field> {
        cli_io::import_field(path, &self.0.grid).map(|f| Field::wrap(f, &self.0.grid)).map_err(err)
    }

    /// Runs a check suite and returns its report.
    #[pyo3(signature = (suite, source=(0, 0), exclusion=0.2))]
    fn verify<'py>(
        &self,
        py: Python<'py>,
        suite: &str,
        source: (usize, usize),
        exclusion: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let suite = parse_suite(suite)?;
        let node = Node::new(source.0, source.1);
        let report = py
            .detach(|| cli_io::verify_suite(&self.0, suite, node, exclusion))
            .map_err(err)?;
        let d = to_dict(py, &report)?;
        d.set_item("ok", report.ok())?;
        Ok(d)
    }
}

/// Runs the command-line front end; returns `(exit_code, stdout, stderr)`.
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> (i32, String, String) {
    let (mut out, mut errs) = (Vec::new(), Vec::new());
    let argv = std::iter::once("vexlap".to_string()).chain(args);
    let code = py.detach(|| cli_io::run(argv, &mut out, &mut errs));
    (
        code,
        String::from_utf8_lossy(&out).into_owned(),
        String::from_utf8_lossy(&errs).into_owned(),
    )
}

#[pymodule]
fn pyvexlap(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("VexlapError", m.py().get_type::<VexlapError>())?;
    m.add_class::<Expr>()?;
    m.add_class::<Field>()?;
    m.add_class::<Problem>()?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
