//! Numerical checks of comparison, uniqueness, the Harnack inequality and
//! the log-gradient bound on computed fields.

use std::fmt;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{grad_ln_p, norm, riemannian_distance, riemannian_gradient, FrameField, Grid2D, Node, ScalarField};
use crate::problem::Problem;
use crate::solvers::{harmonic_extension, solve_dirichlet_infinity};

/// Default agreement threshold for [`uniqueness_probe`].
pub const UNIQUENESS_TOL: f64 = 1e-3;
/// Allowed `| |D_X d| - 1 |` in [`eikonal_check`].
pub const EIKONAL_TOL: f64 = 0.1;
/// Upper bound on the number of sources used for boundary Lipschitz constants.
pub const MAX_LIPSCHITZ_SOURCES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub pass: bool,
    /// False when the check's hypothesis does not hold for the inputs.
    pub applicable: bool,
    pub worst_node: Option<(usize, usize)>,
    pub worst_point: Option<(f64, f64)>,
    pub worst_value: f64,
    pub tolerance: f64,
    pub summary: Vec<(String, f64)>,
}

impl CheckReport {
    fn new(name: &str, tolerance: f64) -> Self {
        CheckReport {
            name: name.to_string(),
            pass: true,
            applicable: true,
            worst_node: None,
            worst_point: None,
            worst_value: 0.0,
            tolerance,
            summary: Vec::new(),
        }
    }

    fn at(mut self, grid: &Grid2D, k: Option<usize>) -> Self {
        if let Some(k) = k {
            let n = grid.node(k);
            self.worst_node = Some((n.i, n.j));
            self.worst_point = Some(grid.point(k));
        }
        self
    }

    fn stat(mut self, key: &str, v: f64) -> Self {
        self.summary.push((key.to_string(), v));
        self
    }

    pub fn stat_value(&self, key: &str) -> Option<f64> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    /// Pass and applicable.
    pub fn ok(&self) -> bool {
        self.pass && self.applicable
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "check = {}", self.name)?;
        writeln!(f, "pass = {}", self.pass)?;
        writeln!(f, "applicable = {}", self.applicable)?;
        writeln!(f, "worst_value = {:e}", self.worst_value)?;
        if let (Some((i, j)), Some((x, y))) = (self.worst_node, self.worst_point) {
            writeln!(f, "worst_node = [{i}, {j}]")?;
            writeln!(f, "worst_point = [{x}, {y}]")?;
        }
        writeln!(f, "tolerance = {:e}", self.tolerance)?;
        for (k, v) in &self.summary {
            writeln!(f, "{k} = {v:e}")?;
        }
        Ok(())
    }
}

/// Nonnegative cutoff vanishing on the boundary ring and its interior
/// neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct CutoffField {
    zeta: ScalarField,
}

impl CutoffField {
    pub fn new(zeta: ScalarField, grid: &Grid2D) -> Result<Self> {
        if zeta.len() != grid.len() {
            return Err(Error::InvalidInput("cutoff does not match the grid".into()));
        }
        for k in 0..grid.len() {
            let n = grid.node(k);
            let near = n.i <= 1 || n.j <= 1 || n.i + 2 >= grid.nx || n.j + 2 >= grid.ny;
            if !(zeta[k] >= 0.0) || (near && zeta[k] != 0.0) {
                let (x, y) = grid.point(k);
                return Err(Error::InvalidInput(format!(
                    "cutoff must be >= 0 and vanish next to the boundary; value {} at ({x}, {y})",
                    zeta[k]
                )));
            }
        }
        Ok(CutoffField { zeta })
    }

    /// `max(0, 1 - |z - c| / radius)`.
    pub fn tent(grid: &Grid2D, cx: f64, cy: f64, radius: f64) -> Result<Self> {
        let zeta = ScalarField::from_fn(grid, |x, y| (1.0 - (x - cx).hypot(y - cy) / radius).max(0.0));
        CutoffField::new(zeta, grid)
    }

    pub fn field(&self) -> &ScalarField {
        &self.zeta
    }
}

/// Distance fields sourced at (a subsample of) the boundary nodes.
#[derive(Debug, Clone)]
pub struct BoundaryDistances {
    pub sources: Vec<usize>,
    pub fields: Vec<ScalarField>,
}

impl BoundaryDistances {
    /// Evenly strided boundary sources, at most `max_sources` of them.
    pub fn compute(frame: &FrameField, grid: &Grid2D, max_sources: usize) -> Result<Self> {
        let all: Vec<usize> = grid.boundary().collect();
        let stride = all.len().div_ceil(max_sources.max(1));
        let sources: Vec<usize> = all.iter().copied().step_by(stride.max(1)).collect();
        let fields = sources
            .iter()
            .map(|&s| riemannian_distance(frame, grid, grid.node(s)))
            .collect::<Result<_>>()?;
        Ok(BoundaryDistances { sources, fields })
    }
}

/// `max |f(a) - f(b)| / d(a, b)` over sources `a` and boundary nodes `b`.
pub fn lipschitz_constant(f: &ScalarField, grid: &Grid2D, dist: &BoundaryDistances) -> f64 {
    let mut l: f64 = 0.0;
    for (&s, d) in dist.sources.iter().zip(&dist.fields) {
        for b in grid.boundary() {
            if b != s && d[b] > 0.0 {
                l = l.max((f[s] - f[b]).abs() / d[b]);
            }
        }
    }
    l
}

/// Checks `u <= v + tol` at interior nodes. The report is inapplicable when
/// the ordering fails on the boundary.
pub fn check_comparison(u: &ScalarField, v: &ScalarField, grid: &Grid2D, tol: f64) -> CheckReport {
    let worst_on = |nodes: &mut dyn Iterator<Item = usize>| {
        nodes.fold((f64::NEG_INFINITY, None), |(m, at), k| {
            let d = u[k] - v[k];
            if d > m { (d, Some(k)) } else { (m, at) }
        })
    };
    let (bd, _) = worst_on(&mut grid.boundary());
    let (worst, at) = worst_on(&mut grid.interior());
    let mut r = CheckReport::new("comparison", tol).at(grid, at);
    r.applicable = bd <= tol;
    r.worst_value = worst;
    r.pass = worst <= tol;
    r.stat("boundary_excess", bd)
}

/// `sup_{B_r} u / (inf_{B_r} u + r)` on the ball `dist <= r`, where `dist`
/// is the distance field from `center`.
pub fn harnack_constant(u: &ScalarField, grid: &Grid2D, center: Node, r: f64, dist: &ScalarField) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidInput(format!("radius must be positive, got {r}")));
    }
    let c = grid.index(center.i, center.j);
    if dist[c] != 0.0 {
        return Err(Error::InvalidInput("distance field is not sourced at the center".into()));
    }
    let (mut sup, mut inf) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..grid.len() {
        if dist[k] > 2.0 * r {
            continue;
        }
        let (x, y) = grid.point(k);
        if grid.is_boundary(k) {
            return Err(Error::InvalidInput(format!(
                "ball of radius {} around ({}, {}) reaches the boundary at ({x}, {y})",
                2.0 * r,
                grid.x(center.i),
                grid.y(center.j)
            )));
        }
        if !(u[k] > 0.0) {
            return Err(Error::InvalidInput(format!("u = {} is not positive at ({x}, {y})", u[k])));
        }
        if dist[k] <= r {
            sup = sup.max(u[k]);
            inf = inf.min(u[k]);
        }
    }
    Ok(sup / (inf + r))
}

/// Harnack constants on `n_balls` random balls whose doubles stay inside the
/// domain, compared with `max f / (min f + r) + tol`.
pub fn harnack_suite(u: &ScalarField, problem: &Problem, n_balls: usize, seed: u64, tol: f64) -> Result<CheckReport> {
    let grid = &problem.grid;
    let (fmin, fmax) = (problem.boundary_min(), problem.boundary_max());
    if !(fmin > 0.0) {
        return Err(Error::InvalidInput("Harnack check needs positive boundary data".into()));
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let mut r = CheckReport::new("harnack", tol);
    r.worst_value = f64::NEG_INFINITY;
    let mut done = 0;
    let mut attempts = 0;
    let span = (grid.xmax - grid.xmin).min(grid.ymax - grid.ymin);
    while done < n_balls {
        attempts += 1;
        if attempts > 200 * n_balls.max(1) {
            return Err(Error::InvalidInput("no admissible Harnack balls found".into()));
        }
        let center = Node::new(rng.gen_range(1..grid.nx - 1), rng.gen_range(1..grid.ny - 1));
        let radius = span * rng.gen_range(0.03..0.2);
        let dist = riemannian_distance(&problem.frame, grid, center)?;
        let c = match harnack_constant(u, grid, center, radius, &dist) {
            Ok(c) => c,
            Err(Error::InvalidInput(_)) => continue,
            Err(e) => return Err(e),
        };
        let bound = fmax / (fmin + radius);
        let margin = c - bound;
        if margin > r.worst_value {
            r.worst_value = margin;
            r = r.at(grid, Some(grid.index(center.i, center.j)));
        }
        r = r.stat(&format!("ball{done}_radius"), radius).stat(&format!("ball{done}_constant"), c);
        done += 1;
    }
    r.pass = r.worst_value <= tol;
    Ok(r)
}

/// Compares `sup |<D_X zeta, D_X ln u>|^p` with
/// `sup |D_X zeta + zeta ln(zeta / u) D_X ln p|^p`; passes when
/// `lhs <= rhs (1 + tol) + tol`.
pub fn check_log_gradient_bound(
    u: &ScalarField,
    zeta: &CutoffField,
    p: &ScalarField,
    frame: &FrameField,
    grid: &Grid2D,
    tol: f64,
) -> Result<CheckReport> {
    if let Some(k) = (0..grid.len()).find(|&k| !(u[k] > 0.0)) {
        let (x, y) = grid.point(k);
        return Err(Error::InvalidInput(format!("u = {} is not positive at ({x}, {y})", u[k])));
    }
    let z = zeta.field();
    let dz = riemannian_gradient(z, frame, grid);
    let dlu = riemannian_gradient(&u.map(f64::ln), frame, grid);
    let dlp = grad_ln_p(p, frame, grid)?;
    let (mut lhs, mut at) = (0.0f64, None);
    let mut rhs = 0.0f64;
    for k in 0..grid.len() {
        let (a, b) = (dz[k], dlu[k]);
        let l = (a[0] * b[0] + a[1] * b[1]).abs().powf(p[k]);
        if l > lhs {
            lhs = l;
            at = Some(k);
        }
        let c = if z[k] > 0.0 { z[k] * (z[k] / u[k]).ln() } else { 0.0 };
        let v = [a[0] + c * dlp[k][0], a[1] + c * dlp[k][1]];
        rhs = rhs.max(norm(v).powf(p[k]));
    }
    let mut r = CheckReport::new("log_gradient_bound", tol).at(grid, at);
    r.worst_value = lhs - rhs * (1.0 + tol);
    r.pass = lhs <= rhs * (1.0 + tol) + tol;
    Ok(r.stat("lhs", lhs).stat("rhs", rhs))
}

/// Boundary-respecting smooth perturbation of `base`: a random sine series
/// vanishing on the edges.
pub fn random_smooth_start(base: &ScalarField, grid: &Grid2D, amplitude: f64, seed: u64) -> ScalarField {
    use std::f64::consts::PI;
    let mut rng = StdRng::seed_from_u64(seed);
    let modes: Vec<(f64, f64, f64)> = (1..=3)
        .flat_map(|m| (1..=3).map(move |n| (m as f64, n as f64)))
        .map(|(m, n)| (m, n, rng.gen_range(-1.0..1.0) / (m * n)))
        .collect();
    let (lx, ly) = (grid.xmax - grid.xmin, grid.ymax - grid.ymin);
    let mut v = base.clone();
    for k in grid.interior() {
        let (x, y) = grid.point(k);
        let (s, t) = ((x - grid.xmin) / lx, (y - grid.ymin) / ly);
        let bump: f64 = modes.iter().map(|&(m, n, c)| c * (m * PI * s).sin() * (n * PI * t).sin()).sum();
        v[k] += amplitude * bump;
    }
    v
}

/// Solves the Dirichlet problem from `n_inits` starts (harmonic extension,
/// boundary-mean constant, then seeded random perturbations) and reports the
/// largest pairwise sup-distance.
pub fn uniqueness_probe(problem: &Problem, n_inits: usize, tol: f64) -> Result<CheckReport> {
    if n_inits < 2 {
        return Err(Error::InvalidInput("uniqueness probe needs at least two starts".into()));
    }
    let grid = &problem.grid;
    let harmonic = harmonic_extension(problem)?;
    let range = (problem.boundary_max() - problem.boundary_min()).max(1.0);
    let mut starts = vec![harmonic.clone()];
    if n_inits >= 2 {
        let mean = problem.boundary_mean();
        starts.push(ScalarField::from_vec(
            (0..grid.len())
                .map(|k| if grid.is_boundary(k) { problem.f[k] } else { mean })
                .collect(),
        ));
    }
    for s in 2..n_inits {
        starts.push(random_smooth_start(&harmonic, grid, 0.25 * range, 0x5eed + s as u64));
    }
    let sols = starts
        .iter()
        .map(|s| solve_dirichlet_infinity(problem, Some(s)).map(|(u, _)| u))
        .collect::<Result<Vec<_>>>()?;
    let mut worst = 0.0f64;
    let mut at = None;
    for a in 0..sols.len() {
        for b in a + 1..sols.len() {
            for k in 0..grid.len() {
                let d = (sols[a][k] - sols[b][k]).abs();
                if d > worst {
                    worst = d;
                    at = Some(k);
                }
            }
        }
    }
    let mut r = CheckReport::new("uniqueness", tol).at(grid, at);
    r.worst_value = worst;
    r.pass = worst < tol;
    Ok(r.stat("starts", n_inits as f64))
}

/// `sup | |D_X d| - 1 |` over interior nodes farther than
/// `exclusion_radius` (Euclidean) from the source, taken as the node where
/// `d` is smallest.
pub fn eikonal_check(d: &ScalarField, frame: &FrameField, grid: &Grid2D, exclusion_radius: f64) -> CheckReport {
    let src = (0..grid.len()).fold(0, |m, k| if d[k] < d[m] { k } else { m });
    let (sx, sy) = grid.point(src);
    let g = riemannian_gradient(d, frame, grid);
    let (mut worst, mut at, mut count) = (0.0f64, None, 0usize);
    for k in grid.interior() {
        let (x, y) = grid.point(k);
        if (x - sx).hypot(y - sy) <= exclusion_radius {
            continue;
        }
        count += 1;
        let dev = (norm(g[k]) - 1.0).abs();
        if dev > worst {
            worst = dev;
            at = Some(k);
        }
    }
    let mut r = CheckReport::new("eikonal", EIKONAL_TOL).at(grid, at);
    r.worst_value = worst;
    r.pass = worst <= EIKONAL_TOL;
    r.stat("nodes", count as f64)
}
