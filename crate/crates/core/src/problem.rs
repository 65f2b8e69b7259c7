//! Problem description and its validated, grid-sampled form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::{
    grad_ln_p, riemannian_distance, sample_frame, FrameExprs, FrameField, Grid2D, ScalarField,
    DEFAULT_DET_FLOOR,
};

/// Default lower bound on the sampled exponent.
pub const DEFAULT_P_MIN: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainSpec {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
    pub nx: usize,
    pub ny: usize,
}

impl DomainSpec {
    pub fn unit_square(n: usize) -> Self {
        DomainSpec::rect(0.0, 1.0, 0.0, 1.0, n)
    }

    pub fn rect(xmin: f64, xmax: f64, ymin: f64, ymax: f64, n: usize) -> Self {
        DomainSpec {
            xmin,
            xmax,
            ymin,
            ymax,
            nx: n,
            ny: n,
        }
    }
}

/// Dirichlet data on the rectangle edge.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundarySpec {
    Expr(Expr),
    /// Trace of the lattice distance cone `d(., z0)` for a point `z0`,
    /// typically outside the rectangle.
    Cone { x: f64, y: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NonlinearMethod {
    /// Damped Newton on the discrete energy with a backtracking line search.
    Newton,
    /// Lagged-coefficient iteration with a fixed damping factor.
    Picard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearSolver {
    /// Jacobi-preconditioned conjugate gradients.
    Cg,
    /// Banded Cholesky factorization.
    Cholesky,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub k_schedule: Vec<f64>,
    pub delta_reg: f64,
    pub damping: f64,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    pub cg_tol: f64,
    /// `None` means `10 nx ny`.
    pub cg_max_iter: Option<usize>,
    pub continuation_tol: f64,
    pub method: NonlinearMethod,
    pub linear_solver: LinearSolver,
    pub polish_sweeps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            k_schedule: vec![2.0, 4.0, 8.0, 16.0, 32.0, 64.0],
            delta_reg: 1e-8,
            damping: 0.7,
            picard_tol: 1e-8,
            picard_max_iter: 500,
            cg_tol: 1e-10,
            cg_max_iter: None,
            continuation_tol: 1e-4,
            method: NonlinearMethod::Newton,
            linear_solver: LinearSolver::Cholesky,
            polish_sweeps: 50,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config {
            key: format!("solver.{what}"),
            msg: "must be positive".into(),
        });
        if self.k_schedule.is_empty() {
            return Err(Error::Config {
                key: "solver.k_schedule".into(),
                msg: "schedule is empty".into(),
            });
        }
        if self.k_schedule.iter().any(|&k| !(k >= 1.0) || !k.is_finite())
            || self.k_schedule.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::Config {
                key: "solver.k_schedule".into(),
                msg: "entries must be >= 1 and strictly increasing".into(),
            });
        }
        if !(self.delta_reg > 0.0) {
            return bad("delta_reg");
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Config {
                key: "solver.damping".into(),
                msg: "must lie in (0, 1]".into(),
            });
        }
        if !(self.picard_tol > 0.0) {
            return bad("picard_tol");
        }
        if self.picard_max_iter == 0 {
            return bad("picard_max_iter");
        }
        if !(self.cg_tol > 0.0) {
            return bad("cg_tol");
        }
        if self.cg_max_iter == Some(0) {
            return bad("cg_max_iter");
        }
        if !(self.continuation_tol > 0.0) {
            return bad("continuation_tol");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub domain: DomainSpec,
    pub frame: FrameExprs,
    pub exponent: Expr,
    pub boundary: BoundarySpec,
    /// Jensen parameter; zero gives the plain Dirichlet problem.
    pub epsilon: f64,
    pub solver: SolverConfig,
    pub det_floor: f64,
    pub p_min: f64,
}

impl ProblemSpec {
    /// Identity frame, default solver settings, `epsilon = 0`.
    pub fn new(domain: DomainSpec, exponent: Expr, boundary: BoundarySpec) -> Self {
        ProblemSpec {
            domain,
            frame: FrameExprs::identity(),
            exponent,
            boundary,
            epsilon: 0.0,
            solver: SolverConfig::default(),
            det_floor: DEFAULT_DET_FLOOR,
            p_min: DEFAULT_P_MIN,
        }
    }
}

pub fn build_grid(domain: &DomainSpec) -> Result<Grid2D> {
    Grid2D::new(domain.xmin, domain.xmax, domain.ymin, domain.ymax, domain.nx, domain.ny)
}

/// Lattice distance cone from `(px, py)` restricted to `grid`.
///
/// The lattice is extended with the same spacing until it contains the
/// apex (snapped to the nearest extended node), the frame is sampled on the
/// extended lattice, and the shortest-path distance is read back on the
/// original nodes.
pub fn distance_cone(grid: &Grid2D, frame: &FrameExprs, det_floor: f64, px: f64, py: f64) -> Result<ScalarField> {
    let si = ((px - grid.xmin) / grid.hx).round() as i64;
    let sj = ((py - grid.ymin) / grid.hy).round() as i64;
    let (i_lo, i_hi) = (si.min(0), si.max(grid.nx as i64 - 1));
    let (j_lo, j_hi) = (sj.min(0), sj.max(grid.ny as i64 - 1));
    let nx = (i_hi - i_lo + 1) as usize;
    let ny = (j_hi - j_lo + 1) as usize;
    if nx * ny > 16 * grid.len().max(1 << 16) {
        return Err(Error::InvalidInput(format!(
            "cone apex ({px}, {py}) is too far from the domain"
        )));
    }
    let ext = Grid2D {
        xmin: grid.xmin + i_lo as f64 * grid.hx,
        xmax: grid.xmin + i_hi as f64 * grid.hx,
        ymin: grid.ymin + j_lo as f64 * grid.hy,
        ymax: grid.ymin + j_hi as f64 * grid.hy,
        nx,
        ny,
        hx: grid.hx,
        hy: grid.hy,
    };
    let ext_frame = sample_frame(frame, &ext, det_floor)?;
    let apex = crate::grid::Node::new((si - i_lo) as usize, (sj - j_lo) as usize);
    let d = riemannian_distance(&ext_frame, &ext, apex)?;
    let (oi, oj) = ((-i_lo) as usize, (-j_lo) as usize);
    Ok(ScalarField::from_vec(
        (0..grid.len())
            .map(|k| {
                let n = grid.node(k);
                d[ext.index(n.i + oi, n.j + oj)]
            })
            .collect(),
    ))
}

/// A [`ProblemSpec`] sampled on its lattice and checked.
#[derive(Debug, Clone)]
pub struct Problem {
    pub spec: ProblemSpec,
    pub grid: Grid2D,
    pub frame: FrameField,
    pub p: ScalarField,
    /// Dirichlet data on boundary nodes; interior entries are zero.
    pub f: ScalarField,
}

impl Problem {
    pub fn new(spec: ProblemSpec) -> Result<Self> {
        spec.solver.validate()?;
        if !(spec.p_min > 1.0) {
            return Err(Error::Config {
                key: "exponent.p_min".into(),
                msg: "must exceed 1".into(),
            });
        }
        if !spec.epsilon.is_finite() {
            return Err(Error::Config {
                key: "jensen.epsilon".into(),
                msg: "must be finite".into(),
            });
        }
        let grid = build_grid(&spec.domain)?;
        let frame = sample_frame(&spec.frame, &grid, spec.det_floor)?;
        let p = ScalarField::sample(&spec.exponent, &grid)?;
        for k in 0..grid.len() {
            if p[k] < spec.p_min {
                let (x, y) = grid.point(k);
                return Err(Error::ExponentBelowMinimum {
                    x,
                    y,
                    p: p[k],
                    min: spec.p_min,
                });
            }
        }
        let glp = grad_ln_p(&p, &frame, &grid)?;
        if let Some(k) = (0..grid.len()).find(|&k| !(glp[k][0].is_finite() && glp[k][1].is_finite())) {
            let (x, y) = grid.point(k);
            return Err(Error::NonFinite {
                what: "D_X ln p".into(),
                x,
                y,
            });
        }
        let f = match &spec.boundary {
            BoundarySpec::Expr(e) => {
                let mut v = vec![0.0; grid.len()];
                for k in grid.boundary() {
                    let (x, y) = grid.point(k);
                    v[k] = e.eval(x, y)?;
                }
                ScalarField::from_vec(v)
            }
            BoundarySpec::Cone { x, y } => {
                let d = distance_cone(&grid, &spec.frame, spec.det_floor, *x, *y)?;
                ScalarField::from_vec(
                    (0..grid.len())
                        .map(|k| if grid.is_boundary(k) { d[k] } else { 0.0 })
                        .collect(),
                )
            }
        };
        Ok(Problem {
            spec,
            grid,
            frame,
            p,
            f,
        })
    }

    /// Same problem with a different Jensen parameter.
    pub fn with_epsilon(&self, epsilon: f64) -> Problem {
        let mut out = self.clone();
        out.spec.epsilon = epsilon;
        out
    }

    /// Same problem with boundary data replaced nodewise by `g`.
    pub fn with_boundary_values(&self, g: impl Fn(usize, f64) -> f64) -> Problem {
        let mut out = self.clone();
        let mut v = self.f.clone().into_values();
        for k in self.grid.boundary() {
            v[k] = g(k, v[k]);
        }
        out.f = ScalarField::from_vec(v);
        out
    }

    pub fn boundary_min(&self) -> f64 {
        self.grid.boundary().map(|k| self.f[k]).fold(f64::INFINITY, f64::min)
    }

    pub fn boundary_max(&self) -> f64 {
        self.grid.boundary().map(|k| self.f[k]).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn boundary_mean(&self) -> f64 {
        let (s, n) = self
            .grid
            .boundary()
            .fold((0.0, 0usize), |(s, n), k| (s + self.f[k], n + 1));
        s / n as f64
    }
}
