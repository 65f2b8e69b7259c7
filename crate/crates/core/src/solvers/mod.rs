//! Existence construction: solve the `k p(x)`-Laplace Dirichlet problem with
//! the Jensen load `sign(eps) |eps|^{kp-1}`, continue `k` upward with warm
//! starts, and return the last iterate as the infinity-limit surrogate.

mod fem;
mod linalg;
mod nonlinear;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{gradient_at, grad_ln_p, FrameField, Grid2D, ScalarField};
use crate::operators::{infinity_x_residual_field, infinity_x_residual_node};
use crate::problem::{Problem, SolverConfig};

use fem::Discretization;
use nonlinear::{tri_mean, weighted_linear, PkProblem};

/// Outcome of one `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KReport {
    pub k: f64,
    pub iterations: usize,
    /// Sup-norm of the last accepted update.
    pub update_norm: f64,
    /// Sup-norm of the normalized weak residual per unit area.
    pub residual_norm: f64,
    /// Smallest line-search step taken (the damping factor for Picard).
    pub min_step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LimitEquation {
    /// `-Delta_{X,inf(x)} u = 0`
    Plain,
    /// `min{|D_X u|^2 - eps, -Delta_{X,inf(x)} u} = 0`
    Min,
    /// `max{eps - |D_X u|^2, -Delta_{X,inf(x)} u} = 0` (with `|eps|`)
    Max,
}

impl LimitEquation {
    pub fn for_epsilon(eps: f64) -> Self {
        if eps > 0.0 {
            LimitEquation::Min
        } else if eps < 0.0 {
            LimitEquation::Max
        } else {
            LimitEquation::Plain
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolishReport {
    pub sweeps: usize,
    pub residual_before: f64,
    pub residual_after: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub epsilon: f64,
    pub equation: LimitEquation,
    pub per_k: Vec<KReport>,
    /// `|u_{k_{i+1}} - u_{k_i}|_inf` for each consecutive pair solved.
    pub gaps: Vec<f64>,
    pub stopped_early: bool,
    pub polish: Option<PolishReport>,
    pub wall_time_s: f64,
}

impl SolveReport {
    fn new(eps: f64) -> Self {
        SolveReport {
            epsilon: eps,
            equation: LimitEquation::for_epsilon(eps),
            per_k: Vec::new(),
            gaps: Vec::new(),
            stopped_early: false,
            polish: None,
            wall_time_s: 0.0,
        }
    }

    pub fn final_k(&self) -> Option<f64> {
        self.per_k.last().map(|r| r.k)
    }
}

/// Solves `-div_X(w D_X u) = rhs` with `u = f` on the boundary.
///
/// `w` must be positive on interior nodes; triangle weights are vertex
/// means over the triangle's interior vertices.
pub fn solve_linear_weighted(
    w: &ScalarField,
    rhs: &ScalarField,
    f: &ScalarField,
    grid: &Grid2D,
    frame: &FrameField,
    cfg: &SolverConfig,
) -> Result<ScalarField> {
    for k in grid.interior() {
        if !(w[k] > 0.0) {
            let (x, y) = grid.point(k);
            return Err(Error::NonPositiveWeight { x, y, w: w[k] });
        }
    }
    let disc = Discretization::new(grid, frame);
    let tw: Vec<f64> = disc
        .tris
        .iter()
        .map(|t| {
            let (s, n) = t
                .nodes
                .iter()
                .filter(|&&n| !grid.is_boundary(n))
                .fold((0.0, 0), |(s, c), &n| (s + w[n], c + 1));
            if n == 0 { 1.0 } else { s / n as f64 }
        })
        .collect();
    ScalarField::new(weighted_linear(&disc, &tw, rhs.values(), f.values(), cfg)?)
}

/// Discrete harmonic extension of the boundary data (`w = 1`, `rhs = 0`).
pub fn harmonic_extension(problem: &Problem) -> Result<ScalarField> {
    let disc = Discretization::new(&problem.grid, &problem.frame);
    harmonic_with(&disc, problem)
}

fn harmonic_with(disc: &Discretization, problem: &Problem) -> Result<ScalarField> {
    let ones = vec![1.0; disc.tris.len()];
    let zeros = vec![0.0; problem.grid.len()];
    ScalarField::new(weighted_linear(disc, &ones, &zeros, problem.f.values(), &problem.spec.solver)?)
}

struct Context {
    disc: Discretization,
    p_tri: Vec<f64>,
}

impl Context {
    fn new(problem: &Problem) -> Self {
        let disc = Discretization::new(&problem.grid, &problem.frame);
        let p_tri = tri_mean(&disc.tris, problem.p.values());
        Context { disc, p_tri }
    }

    fn pk<'a>(&'a self, problem: &'a Problem, k: f64) -> PkProblem<'a> {
        PkProblem {
            disc: &self.disc,
            p_node: problem.p.values(),
            p_tri: &self.p_tri,
            k,
            eps: problem.spec.epsilon,
            f: &problem.f,
            cfg: &problem.spec.solver,
        }
    }

    fn solve_k(&self, problem: &Problem, k: f64, init: &ScalarField) -> Result<(ScalarField, KReport)> {
        if !(k >= 1.0) {
            return Err(Error::InvalidInput(format!("k must be at least 1, got {k}")));
        }
        if init.len() != problem.grid.len() {
            return Err(Error::InvalidInput("initial field does not match the grid".into()));
        }
        self.pk(problem, k).solve(init)
    }
}

/// One `k`: minimizes the discrete `k p(x)` energy with the Jensen load,
/// starting from `init` or, when `None`, from the harmonic extension.
pub fn solve_pk(problem: &Problem, k: f64, init: Option<&ScalarField>) -> Result<(ScalarField, SolveReport)> {
    let start = Instant::now();
    let ctx = Context::new(problem);
    let cold;
    let init = match init {
        Some(u) => u,
        None => {
            cold = harmonic_with(&ctx.disc, problem)?;
            &cold
        }
    };
    let (u, kr) = ctx.solve_k(problem, k, init)?;
    let mut report = SolveReport::new(problem.spec.epsilon);
    report.per_k.push(kr);
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok((u, report))
}

/// Value of the discrete `k p(x)` energy minimized by [`solve_pk`]
/// (unnormalized, including the load term).
pub fn pk_energy(problem: &Problem, k: f64, u: &ScalarField) -> f64 {
    let ctx = Context::new(problem);
    nonlinear::scaled_energy(&ctx.pk(problem, k), u.values(), Some(0.0)).0
}

/// Runs the `k` schedule with warm starts, stopping early once the gap
/// between successive solutions drops below `continuation_tol`.
pub fn continue_k(problem: &Problem, init: Option<&ScalarField>) -> Result<(ScalarField, SolveReport)> {
    let start = Instant::now();
    let ctx = Context::new(problem);
    let mut u = match init {
        Some(u) => u.clone(),
        None => harmonic_with(&ctx.disc, problem)?,
    };
    let mut report = SolveReport::new(problem.spec.epsilon);
    let cfg = &problem.spec.solver;
    for (i, &k) in cfg.k_schedule.iter().enumerate() {
        let (next, kr) = ctx.solve_k(problem, k, &u).map_err(|e| Error::AtK {
            k,
            source: Box::new(e),
        })?;
        report.per_k.push(kr);
        let gap = next.sup_distance(&u);
        u = next;
        if i > 0 {
            report.gaps.push(gap);
            if gap < cfg.continuation_tol && i + 1 < cfg.k_schedule.len() {
                report.stopped_early = true;
                break;
            }
        }
    }
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok((u, report))
}

/// Solves the Jensen problem for the problem's `epsilon`; the sign picks the
/// limit equation recorded in the report.
pub fn solve_jensen(problem: &Problem, init: Option<&ScalarField>) -> Result<(ScalarField, SolveReport)> {
    continue_k(problem, init)
}

/// Dirichlet problem for `-Delta_{X,inf(x)} u = 0`: the `eps = 0`
/// continuation followed by pointwise residual polishing.
pub fn solve_dirichlet_infinity(problem: &Problem, init: Option<&ScalarField>) -> Result<(ScalarField, SolveReport)> {
    let start = Instant::now();
    let plain = problem.with_epsilon(0.0);
    let (u, mut report) = continue_k(&plain, init)?;
    let (u, polish) = polish(&plain, u, problem.spec.solver.polish_sweeps)?;
    report.polish = Some(polish);
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok((u, report))
}

const POLISH_DAMPING: f64 = 0.5;

fn sup_abs(f: &ScalarField) -> f64 {
    f.values().iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Gauss-Seidel sweeps of damped pointwise Newton steps on the field
/// residual. The residual at a node is affine in the node's own value, with
/// slope `2 sum_k ((A^T eta)_k / h_k)^2`. Keeps the best sweep and accepts
/// it only if the residual sup-norm went down.
pub fn polish(problem: &Problem, u: ScalarField, sweeps: usize) -> Result<(ScalarField, PolishReport)> {
    let grid = &problem.grid;
    let frame = &problem.frame;
    let glp = grad_ln_p(&problem.p, frame, grid)?;
    let before = sup_abs(&infinity_x_residual_field(&u, frame, grid, &problem.p)?);
    let mut v = u.clone().into_values();
    let mut best = (before, None);
    let (ihx2, ihy2) = (1.0 / (grid.hx * grid.hx), 1.0 / (grid.hy * grid.hy));
    for _ in 0..sweeps {
        for k in grid.interior() {
            let r = infinity_x_residual_node(&v, frame, grid, glp[k], k);
            let eta = gradient_at(&v, frame, grid, k);
            let a = frame.matrix(k);
            let at = [a[0][0] * eta[0] + a[1][0] * eta[1], a[0][1] * eta[0] + a[1][1] * eta[1]];
            let slope = 2.0 * (at[0] * at[0] * ihx2 + at[1] * at[1] * ihy2);
            if slope > 1e-300 {
                v[k] -= POLISH_DAMPING * r / slope;
            }
        }
        let field = ScalarField::new(v.clone())?;
        let res = sup_abs(&infinity_x_residual_field(&field, frame, grid, &problem.p)?);
        if res < best.0 {
            best = (res, Some(field));
        }
    }
    let accepted = best.1.is_some();
    let report = PolishReport {
        sweeps,
        residual_before: before,
        residual_after: best.0,
        accepted,
    };
    Ok((best.1.unwrap_or(u), report))
}
