//! Problem files, field files and the command-line front end.
//!
//! Problem files are TOML with the sections `[domain]`, `[frame]`,
//! `[exponent]`, `[boundary]`, `[jensen]` and `[solver]`; `[frame]`,
//! `[jensen]` and `[solver]` may be omitted. Expression values are strings
//! in the grammar of [`crate::expr`] (plain numbers are accepted too).
//!
//! ```toml
//! [domain]
//! xmin = 0.0
//! xmax = 1.0
//! ymin = 0.0
//! ymax = 1.0
//! nx = 65
//! ny = 65
//!
//! [frame]
//! a11 = "1"
//! a12 = "0"
//! a21 = "0"
//! a22 = "1 + x/2"
//!
//! [exponent]
//! p = "2 + x^2/4"
//!
//! [boundary]
//! f = "x"            # or: cone = [2.5, -0.3]
//!
//! [jensen]
//! epsilon = 0.0
//!
//! [solver]
//! k_schedule = [2, 4, 8, 16, 32, 64]
//! ```
//!
//! Field files are CSV with header `x,y,value`, one row per node with `y`
//! outer and `x` inner, every number written with 17 significant digits.

mod cli;

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::expr::{parse, Expr};
use crate::grid::{FrameExprs, Grid2D, ScalarField};
use crate::problem::{
    BoundarySpec, DomainSpec, LinearSolver, NonlinearMethod, Problem, ProblemSpec, SolverConfig,
};
use crate::solvers::SolveReport;

pub use cli::{run, solve, verify_suite, Cli, Suite};

pub const FIELD_HEADER: &str = "x,y,value";

const SECTIONS: [&str; 6] = ["domain", "frame", "exponent", "boundary", "jensen", "solver"];

fn config_err(key: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        msg: msg.into(),
    }
}

struct Section<'a> {
    name: &'a str,
    table: Option<&'a Table>,
}

impl<'a> Section<'a> {
    fn get(root: &'a Table, name: &'a str, required: bool) -> Result<Self> {
        match root.get(name) {
            Some(Value::Table(t)) => Ok(Section { name, table: Some(t) }),
            Some(_) => Err(config_err(name, "expected a section")),
            None if required => Err(Error::MissingKey(name.to_string())),
            None => Ok(Section { name, table: None }),
        }
    }

    fn key(&self, k: &str) -> String {
        format!("{}.{}", self.name, k)
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        if let Some(t) = self.table {
            if let Some(k) = t.keys().find(|k| !allowed.contains(&k.as_str())) {
                return Err(config_err(&self.key(k), "unknown key"));
            }
        }
        Ok(())
    }

    fn value(&self, k: &str) -> Option<&'a Value> {
        self.table.and_then(|t| t.get(k))
    }

    fn require(&self, k: &str) -> Result<&'a Value> {
        self.value(k).ok_or_else(|| Error::MissingKey(self.key(k)))
    }

    fn float_of(&self, k: &str, v: &Value) -> Result<f64> {
        match v {
            Value::Float(x) => Ok(*x),
            Value::Integer(i) => Ok(*i as f64),
            _ => Err(config_err(&self.key(k), "expected a number")),
        }
    }

    fn float(&self, k: &str) -> Result<f64> {
        self.float_of(k, self.require(k)?)
    }

    fn opt_float(&self, k: &str) -> Result<Option<f64>> {
        self.value(k).map(|v| self.float_of(k, v)).transpose()
    }

    fn count(&self, k: &str, v: &Value) -> Result<usize> {
        match v {
            Value::Integer(i) if *i >= 0 => Ok(*i as usize),
            _ => Err(config_err(&self.key(k), "expected a nonnegative integer")),
        }
    }

    fn opt_count(&self, k: &str) -> Result<Option<usize>> {
        self.value(k).map(|v| self.count(k, v)).transpose()
    }

    fn expr_of(&self, k: &str, v: &Value) -> Result<Expr> {
        match v {
            Value::String(s) => parse(s).map_err(|e| config_err(&self.key(k), e.to_string())),
            Value::Float(_) | Value::Integer(_) => Ok(Expr::constant(self.float_of(k, v)?)),
            _ => Err(config_err(&self.key(k), "expected an expression string")),
        }
    }

    fn expr(&self, k: &str) -> Result<Expr> {
        self.expr_of(k, self.require(k)?)
    }

    fn opt_str(&self, k: &str) -> Result<Option<&'a str>> {
        match self.value(k) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(config_err(&self.key(k), "expected a string")),
        }
    }
}

/// Parses problem-file text into an (unsampled) spec.
pub fn parse_config(text: &str) -> Result<ProblemSpec> {
    let root: Table = text
        .parse()
        .map_err(|e: toml::de::Error| config_err("<file>", e.message().to_string()))?;
    if let Some(k) = root.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
        return Err(config_err(k, "unknown section"));
    }

    let d = Section::get(&root, "domain", true)?;
    d.check_keys(&["xmin", "xmax", "ymin", "ymax", "nx", "ny"])?;
    let domain = DomainSpec {
        xmin: d.float("xmin")?,
        xmax: d.float("xmax")?,
        ymin: d.float("ymin")?,
        ymax: d.float("ymax")?,
        nx: d.count("nx", d.require("nx")?)?,
        ny: d.count("ny", d.require("ny")?)?,
    };

    let fr = Section::get(&root, "frame", false)?;
    fr.check_keys(&["a11", "a12", "a21", "a22", "det_floor"])?;
    let frame = if fr.table.is_none_or(|t| t.keys().all(|k| k == "det_floor")) {
        FrameExprs::identity()
    } else {
        FrameExprs {
            a11: fr.expr("a11")?,
            a12: fr.expr("a12")?,
            a21: fr.expr("a21")?,
            a22: fr.expr("a22")?,
        }
    };

    let ex = Section::get(&root, "exponent", true)?;
    ex.check_keys(&["p", "p_min"])?;
    let exponent = ex.expr("p")?;

    let b = Section::get(&root, "boundary", false)?;
    b.check_keys(&["f", "cone"])?;
    let boundary = match (b.value("f"), b.value("cone")) {
        (Some(v), None) => BoundarySpec::Expr(b.expr_of("f", v)?),
        (None, Some(Value::Array(a))) if a.len() == 2 => BoundarySpec::Cone {
            x: b.float_of("cone", &a[0])?,
            y: b.float_of("cone", &a[1])?,
        },
        (None, Some(_)) => return Err(config_err("boundary.cone", "expected [x, y]")),
        (Some(_), Some(_)) => return Err(config_err("boundary", "give either `f` or `cone`, not both")),
        (None, None) => return Err(Error::MissingKey("boundary.f".into())),
    };

    let mut spec = ProblemSpec::new(domain, exponent, boundary);
    spec.frame = frame;
    if let Some(fl) = fr.opt_float("det_floor")? {
        spec.det_floor = fl;
    }
    if let Some(pm) = ex.opt_float("p_min")? {
        spec.p_min = pm;
    }

    let j = Section::get(&root, "jensen", false)?;
    j.check_keys(&["epsilon"])?;
    spec.epsilon = j.opt_float("epsilon")?.unwrap_or(0.0);

    spec.solver = parse_solver(&Section::get(&root, "solver", false)?)?;
    Ok(spec)
}

fn parse_solver(s: &Section<'_>) -> Result<SolverConfig> {
    s.check_keys(&[
        "k_schedule",
        "delta_reg",
        "damping",
        "picard_tol",
        "picard_max_iter",
        "cg_tol",
        "cg_max_iter",
        "continuation_tol",
        "method",
        "linear_solver",
        "polish_sweeps",
    ])?;
    let mut c = SolverConfig::default();
    if let Some(v) = s.value("k_schedule") {
        let Value::Array(a) = v else {
            return Err(config_err("solver.k_schedule", "expected a list of numbers"));
        };
        c.k_schedule = a.iter().map(|x| s.float_of("k_schedule", x)).collect::<Result<_>>()?;
    }
    let floats: [(&str, &mut f64); 5] = [
        ("delta_reg", &mut c.delta_reg),
        ("damping", &mut c.damping),
        ("picard_tol", &mut c.picard_tol),
        ("cg_tol", &mut c.cg_tol),
        ("continuation_tol", &mut c.continuation_tol),
    ];
    for (k, slot) in floats {
        if let Some(v) = s.opt_float(k)? {
            *slot = v;
        }
    }
    if let Some(v) = s.opt_count("picard_max_iter")? {
        c.picard_max_iter = v;
    }
    if let Some(v) = s.opt_count("cg_max_iter")? {
        c.cg_max_iter = Some(v);
    }
    if let Some(v) = s.opt_count("polish_sweeps")? {
        c.polish_sweeps = v;
    }
    c.method = match s.opt_str("method")? {
        None | Some("newton") => NonlinearMethod::Newton,
        Some("picard") => NonlinearMethod::Picard,
        Some(m) => return Err(config_err("solver.method", format!("unknown method `{m}` (newton|picard)"))),
    };
    c.linear_solver = match s.opt_str("linear_solver")? {
        None | Some("cholesky") => LinearSolver::Cholesky,
        Some("cg") => LinearSolver::Cg,
        Some(m) => {
            return Err(config_err(
                "solver.linear_solver",
                format!("unknown linear solver `{m}` (cholesky|cg)"),
            ))
        }
    };
    Ok(c)
}

/// Reads, samples and validates a problem file.
pub fn load_problem(path: impl AsRef<Path>) -> Result<Problem> {
    Problem::new(parse_config(&fs::read_to_string(path)?)?)
}

/// Writes `field` in the field-file format.
pub fn export_field(field: &ScalarField, grid: &Grid2D, path: impl AsRef<Path>) -> Result<()> {
    if field.len() != grid.len() {
        return Err(Error::InvalidInput("field does not match the grid".into()));
    }
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{FIELD_HEADER}")?;
    for k in 0..grid.len() {
        let (x, y) = grid.point(k);
        writeln!(out, "{x:.16e},{y:.16e},{:.16e}", field[k])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a field file written on `grid`. Coordinates must match the grid
/// nodes in row-major order.
pub fn import_field(path: impl AsRef<Path>, grid: &Grid2D) -> Result<ScalarField> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines();
    let bad = |line: usize, msg: String| Error::FieldFormat { line, msg };
    let header = lines.next().transpose()?;
    if header.as_deref().map(str::trim_end) != Some(FIELD_HEADER) {
        return Err(bad(1, format!("expected header `{FIELD_HEADER}`")));
    }
    let mut values = Vec::with_capacity(grid.len());
    for (n, line) in lines.enumerate() {
        let line = line?;
        let lineno = n + 2;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.trim_end().split(',').collect();
        if cols.len() != 3 {
            return Err(bad(lineno, format!("expected 3 columns, found {}", cols.len())));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(lineno, format!("`{s}`: {e}")));
        let (x, y, v) = (num(cols[0])?, num(cols[1])?, num(cols[2])?);
        let k = values.len();
        if k >= grid.len() {
            return Err(bad(lineno, format!("more than {} data rows", grid.len())));
        }
        let (gx, gy) = grid.point(k);
        let close = |a: f64, b: f64, h: f64| (a - b).abs() <= 1e-9 * h;
        if !close(x, gx, grid.hx) || !close(y, gy, grid.hy) {
            return Err(bad(lineno, format!("node ({x}, {y}) does not match grid node ({gx}, {gy})")));
        }
        values.push(v);
    }
    if values.len() != grid.len() {
        return Err(bad(values.len() + 1, format!("expected {} data rows, found {}", grid.len(), values.len())));
    }
    ScalarField::new(values)
}

/// Sibling path `<stem>.report.toml` of a field file.
pub fn report_path(field_path: &Path) -> PathBuf {
    let stem = field_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    field_path.with_file_name(format!("{stem}.report.toml"))
}

pub fn write_report(report: &SolveReport, path: impl AsRef<Path>) -> Result<()> {
    let text = toml::to_string(report).map_err(|e| Error::InvalidInput(format!("cannot serialize report: {e}")))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn read_report(path: impl AsRef<Path>) -> Result<SolveReport> {
    let text = fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| config_err("<report>", e.message().to_string()))
}
