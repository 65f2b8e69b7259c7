//! Discrete `k p(x)`-Laplace Dirichlet problem
//! `-div_X(|D_X u|^{kp-2} D_X u) = sign(eps) |eps|^{kp-1}`.
//!
//! The discrete problem is the minimizer of
//! `J(u) = sum_T wt_T s_T^{q_T/2} / q_T - sum_v m_v r_v u_v`
//! with `s_T = delta^2 + |g_T|^2` and `q = k p`. All weights and loads are
//! divided by the largest weight `W = max_T s_T^{(q_T-2)/2}` (and the largest
//! load magnitude) before use, which leaves the minimizer unchanged and keeps
//! `|D_X u|^{kp-2}` representable for large `k`.

use crate::error::{Error, Result};
use crate::grid::{ScalarField, Vec2};
use crate::problem::{LinearSolver, NonlinearMethod, SolverConfig};

use super::fem::{Discretization, Tri};
use super::linalg::{pcg, BandCholesky, CsrMatrix};
use super::KReport;

/// Log-weights below this are clamped.
const LOG_WEIGHT_FLOOR: f64 = -700.0;
/// Largest multiple of the Newton step tried by the step extension.
const MAX_EXTENSION: f64 = 1024.0;
/// Newton decrement, relative to the energy magnitude, treated as converged.
const DECREMENT_TOL: f64 = 1e-12;
const REFINE_STEPS: usize = 6;

pub(crate) struct PkProblem<'a> {
    pub disc: &'a Discretization,
    /// Exponent per node and per triangle.
    pub p_node: &'a [f64],
    pub p_tri: &'a [f64],
    pub k: f64,
    pub eps: f64,
    pub f: &'a ScalarField,
    pub cfg: &'a SolverConfig,
}

/// Per-iteration state at the current iterate.
struct State {
    grads: Vec<Vec2>,
    /// `ln s_T`
    log_s: Vec<f64>,
    /// normalization `ln W`
    log_scale: f64,
}

impl PkProblem<'_> {
    fn q_tri(&self, t: usize) -> f64 {
        self.k * self.p_tri[t]
    }

    /// `ln |r_v|`, or `-inf` for `eps = 0`.
    fn log_load(&self, node: usize) -> f64 {
        if self.eps == 0.0 {
            f64::NEG_INFINITY
        } else {
            (self.k * self.p_node[node] - 1.0) * self.eps.abs().ln()
        }
    }

    fn state(&self, u: &[f64]) -> State {
        self.state_scaled(u, None)
    }

    /// State at `u`; `log_scale` defaults to the normalization at `u`.
    fn state_scaled(&self, u: &[f64], log_scale: Option<f64>) -> State {
        let d2 = self.cfg.delta_reg * self.cfg.delta_reg;
        let mut grads = Vec::with_capacity(self.disc.tris.len());
        let mut log_s = Vec::with_capacity(self.disc.tris.len());
        let mut scale = f64::NEG_INFINITY;
        for (t, tri) in self.disc.tris.iter().enumerate() {
            let g = tri.grad(u);
            let ls = (d2 + g[0] * g[0] + g[1] * g[1]).ln();
            scale = scale.max(0.5 * (self.q_tri(t) - 2.0) * ls);
            grads.push(g);
            log_s.push(ls);
        }
        for &k in &self.disc.nodes {
            scale = scale.max(self.log_load(k));
        }
        let log_scale = log_scale.unwrap_or(scale);
        State {
            grads,
            log_s,
            log_scale,
        }
    }

    fn weight(&self, st: &State, t: usize) -> Result<f64> {
        let lw = 0.5 * (self.q_tri(t) - 2.0) * st.log_s[t] - st.log_scale;
        if lw > 700.0 || lw.is_nan() {
            return Err(Error::WeightOverflow {
                k: self.k,
                log_weight: lw,
            });
        }
        Ok(lw.max(LOG_WEIGHT_FLOOR).exp())
    }

    fn scaled_load(&self, node: usize, log_scale: f64) -> f64 {
        if self.eps == 0.0 {
            0.0
        } else {
            self.eps.signum() * (self.log_load(node) - log_scale).exp()
        }
    }

    /// Scaled energy and a magnitude for judging round-off.
    fn energy(&self, u: &[f64], log_scale: f64) -> (f64, f64) {
        let d2 = self.cfg.delta_reg * self.cfg.delta_reg;
        let mut e = 0.0;
        let mut mag = 0.0;
        for (t, tri) in self.disc.tris.iter().enumerate() {
            let g = tri.grad(u);
            let q = self.q_tri(t);
            let ls = (d2 + g[0] * g[0] + g[1] * g[1]).ln();
            let term = tri.wt * (0.5 * q * ls - log_scale).exp() / q;
            e += term;
            mag += term;
        }
        if self.eps != 0.0 {
            for &k in &self.disc.nodes {
                let term = self.disc.mass[k] * self.scaled_load(k, log_scale) * u[k];
                e -= term;
                mag += term.abs();
            }
        }
        (e, mag)
    }

    /// Scaled energy gradient on unknowns.
    fn gradient(&self, st: &State) -> Result<Vec<f64>> {
        let mut node_grad = vec![0.0; self.disc.grid.len()];
        for (t, tri) in self.disc.tris.iter().enumerate() {
            let w = self.weight(st, t)?;
            self.disc.add_load(&mut node_grad, tri, tri.wt * w, st.grads[t]);
        }
        Ok(self
            .disc
            .nodes
            .iter()
            .map(|&k| node_grad[k] - self.disc.mass[k] * self.scaled_load(k, st.log_scale))
            .collect())
    }

    fn assemble(&self, st: &State, newton: bool) -> Result<CsrMatrix> {
        let mut mat = self.disc.pattern.clone();
        mat.clear();
        for (t, tri) in self.disc.tris.iter().enumerate() {
            let w = self.weight(st, t)?;
            let mut m = [[1.0, 0.0], [0.0, 1.0]];
            let q = self.q_tri(t);
            if newton && q != 2.0 {
                let g = st.grads[t];
                let c = (q - 2.0) / st.log_s[t].exp();
                m[0][0] += c * g[0] * g[0];
                m[0][1] += c * g[0] * g[1];
                m[1][0] += c * g[1] * g[0];
                m[1][1] += c * g[1] * g[1];
            }
            self.disc.add_local(&mut mat, tri, tri.wt * w, m);
        }
        // keep unknowns whose weights have all underflowed from drifting
        let dmax = mat.diagonal().fold(0.0, f64::max);
        let shift = 1e-13 * dmax;
        for s in mat.diag.clone() {
            mat.vals[s] += shift;
        }
        Ok(mat)
    }

    fn linear_solve(&self, mat: &CsrMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
        match self.cfg.linear_solver {
            LinearSolver::Cholesky => Ok(BandCholesky::factor(mat)?.solve(rhs)),
            LinearSolver::Cg => {
                let g = &self.disc.grid;
                let max_iter = self.cfg.cg_max_iter.unwrap_or(10 * g.nx * g.ny);
                let mut x = vec![0.0; rhs.len()];
                pcg(mat, rhs, &mut x, self.cfg.cg_tol, max_iter)?;
                Ok(x)
            }
        }
    }

    fn residual_norm(&self, grad: &[f64]) -> f64 {
        grad.iter()
            .zip(&self.disc.nodes)
            .map(|(g, &k)| (g / self.disc.mass[k]).abs())
            .fold(0.0, f64::max)
    }

    /// Runs the configured iteration from `init` (boundary values are
    /// overwritten with `f`).
    pub fn solve(&self, init: &ScalarField) -> Result<(ScalarField, KReport)> {
        let grid = &self.disc.grid;
        let mut u = init.values().to_vec();
        for k in grid.boundary() {
            u[k] = self.f[k];
        }
        match self.cfg.method {
            NonlinearMethod::Newton => self.newton(u),
            NonlinearMethod::Picard => self.picard(u),
        }
    }

    fn set_trial(&self, u: &[f64], dir: &[f64], alpha: f64, trial: &mut [f64]) {
        for (d, &k) in dir.iter().zip(&self.disc.nodes) {
            trial[k] = u[k] + alpha * d;
        }
    }

    /// `d/da J(u + a dir)` under the fixed normalization `log_scale`;
    /// `None` when the weights overflow there.
    fn line_slope(&self, u: &[f64], dir: &[f64], alpha: f64, log_scale: f64, trial: &mut [f64]) -> Option<f64> {
        self.set_trial(u, dir, alpha, trial);
        let g = self.gradient(&self.state_scaled(trial, Some(log_scale))).ok()?;
        Some(g.iter().zip(dir).map(|(g, d)| g * d).sum())
    }

    /// Halves the step from 1 until the Armijo condition holds.
    fn backtrack(&self, u: &[f64], dir: &[f64], slope: f64, log_scale: f64, trial: &mut [f64]) -> Option<f64> {
        let (e0, mag) = self.energy(u, log_scale);
        let mut alpha = 1.0;
        while alpha >= 1e-12 {
            self.set_trial(u, dir, alpha, trial);
            let (e1, _) = self.energy(trial, log_scale);
            if e1 <= e0 + 1e-4 * alpha * slope.min(0.0) + 1e-13 * mag {
                return Some(alpha);
            }
            alpha *= 0.5;
        }
        None
    }

    /// Lengthens a full step whose line derivative is still negative.
    ///
    /// Near a degenerate minimizer the energy behaves like `|g|^q` and the
    /// Newton step only covers `1 / (q - 1)` of the distance, while energy
    /// differences drop below round-off. The step is therefore chosen from
    /// the line derivative alone: doubling to bracket its root, then regula
    /// falsi. The returned step keeps a negative derivative, so by convexity
    /// the energy decreases.
    fn extend_step(&self, u: &[f64], dir: &[f64], d1: f64, log_scale: f64, trial: &mut [f64]) -> f64 {
        let (mut lo, mut dlo) = (1.0, d1);
        let mut bracket = None;
        while lo < MAX_EXTENSION {
            let a = 2.0 * lo;
            match self.line_slope(u, dir, a, log_scale, trial) {
                Some(d) if d < 0.0 => (lo, dlo) = (a, d),
                Some(d) => {
                    bracket = Some((a, d));
                    break;
                }
                None => {
                    bracket = Some((a, f64::INFINITY));
                    break;
                }
            }
        }
        let Some((mut hi, mut dhi)) = bracket else {
            return lo;
        };
        for _ in 0..REFINE_STEPS {
            let w = hi - lo;
            let a = if dhi.is_finite() {
                lo - dlo * w / (dhi - dlo)
            } else {
                lo + 0.5 * w
            };
            let a = a.clamp(lo + 0.05 * w, hi - 0.05 * w);
            match self.line_slope(u, dir, a, log_scale, trial) {
                Some(d) if d < 0.0 => (lo, dlo) = (a, d),
                Some(d) => (hi, dhi) = (a, d),
                None => (hi, dhi) = (a, f64::INFINITY),
            }
        }
        lo
    }

    fn newton(&self, mut u: Vec<f64>) -> Result<(ScalarField, KReport)> {
        let mut history = Vec::new();
        let mut min_step: f64 = 1.0;
        for it in 1..=self.cfg.picard_max_iter {
            let st = self.state(&u);
            let grad = self.gradient(&st)?;
            let mat = self.assemble(&st, true)?;
            let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
            let dir = self.linear_solve(&mat, &neg)?;
            let slope: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
            let dmax = dir.iter().fold(0.0f64, |m, d| m.max(d.abs()));

            let mut trial = u.clone();
            let alpha = match self.line_slope(&u, &dir, 1.0, st.log_scale, &mut trial) {
                Some(d1) if d1 < 0.0 => self.extend_step(&u, &dir, d1, st.log_scale, &mut trial),
                _ => match self.backtrack(&u, &dir, slope, st.log_scale, &mut trial) {
                    Some(a) => a,
                    None => {
                        return Err(Error::NonlinearNotConverged {
                            k: self.k,
                            iterations: it,
                            last_update: history.last().copied().unwrap_or(f64::NAN),
                            history,
                        })
                    }
                },
            };
            self.set_trial(&u, &dir, alpha, &mut trial);
            min_step = min_step.min(alpha);
            u = trial;
            let update = alpha * dmax;
            history.push(update);
            // On flat stretches of a degenerate energy the update can stay large
            // while the decrement is already at round-off; nothing is left to gain.
            let flat = -slope <= DECREMENT_TOL * self.energy(&u, st.log_scale).1;
            if update < self.cfg.picard_tol || flat {
                let st = self.state(&u);
                let residual = self.residual_norm(&self.gradient(&st)?);
                return Ok((
                    ScalarField::new(u)?,
                    KReport {
                        k: self.k,
                        iterations: it,
                        update_norm: update,
                        residual_norm: residual,
                        min_step,
                    },
                ));
            }
        }
        Err(Error::NonlinearNotConverged {
            k: self.k,
            iterations: self.cfg.picard_max_iter,
            last_update: history.last().copied().unwrap_or(f64::NAN),
            history,
        })
    }

    fn picard(&self, mut u: Vec<f64>) -> Result<(ScalarField, KReport)> {
        let theta = self.cfg.damping;
        let mut history = Vec::new();
        for it in 1..=self.cfg.picard_max_iter {
            let st = self.state(&u);
            let grad = self.gradient(&st)?;
            let mat = self.assemble(&st, false)?;
            // lagged system K(u^m) u~ = load, written as a correction to u^m
            let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
            let corr = self.linear_solve(&mat, &neg)?;
            let mut update: f64 = 0.0;
            for (c, &k) in corr.iter().zip(&self.disc.nodes) {
                u[k] += theta * c;
                update = update.max((theta * c).abs());
            }
            if !update.is_finite() {
                break;
            }
            history.push(update);
            if update < self.cfg.picard_tol {
                let st = self.state(&u);
                let residual = self.residual_norm(&self.gradient(&st)?);
                return Ok((
                    ScalarField::new(u)?,
                    KReport {
                        k: self.k,
                        iterations: it,
                        update_norm: update,
                        residual_norm: residual,
                        min_step: theta,
                    },
                ));
            }
        }
        Err(Error::NonlinearNotConverged {
            k: self.k,
            iterations: history.len(),
            last_update: history.last().copied().unwrap_or(f64::NAN),
            history,
        })
    }
}

/// Scaled energy of `u` for external checks: `J(u) / W` with `W` taken at
/// `u` itself.
pub(crate) fn scaled_energy(pk: &PkProblem<'_>, u: &[f64], log_scale: Option<f64>) -> (f64, f64) {
    let ls = log_scale.unwrap_or_else(|| pk.state(u).log_scale);
    (pk.energy(u, ls).0, ls)
}

/// Weighted linear solve used for harmonic extensions and the public
/// weighted solve: `sum_T wt w_T (B u).(B phi) = m rhs`, Dirichlet `f`.
pub(crate) fn weighted_linear(
    disc: &Discretization,
    tri_weight: &[f64],
    rhs: &[f64],
    f: &[f64],
    cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    let grid = &disc.grid;
    let mut u = vec![0.0; grid.len()];
    for k in grid.boundary() {
        u[k] = f[k];
    }
    let mut mat = disc.pattern.clone();
    mat.clear();
    let mut node_grad = vec![0.0; grid.len()];
    for (tri, &w) in disc.tris.iter().zip(tri_weight) {
        disc.add_local(&mut mat, tri, tri.wt * w, [[1.0, 0.0], [0.0, 1.0]]);
        disc.add_load(&mut node_grad, tri, tri.wt * w, tri.grad(&u));
    }
    let b: Vec<f64> = disc
        .nodes
        .iter()
        .map(|&k| disc.mass[k] * rhs[k] - node_grad[k])
        .collect();
    let x = match cfg.linear_solver {
        LinearSolver::Cholesky => BandCholesky::factor(&mat)?.solve(&b),
        LinearSolver::Cg => {
            let mut x = vec![0.0; b.len()];
            let max_iter = cfg.cg_max_iter.unwrap_or(10 * grid.nx * grid.ny);
            pcg(&mat, &b, &mut x, cfg.cg_tol, max_iter)?;
            x
        }
    };
    for (v, &k) in x.iter().zip(&disc.nodes) {
        u[k] = *v;
    }
    Ok(u)
}

pub(crate) fn tri_mean(tris: &[Tri], node_values: &[f64]) -> Vec<f64> {
    tris.iter()
        .map(|t| t.nodes.iter().map(|&n| node_values[n]).sum::<f64>() / 3.0)
        .collect()
}
