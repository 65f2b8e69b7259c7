//! Pointwise residuals of the frame infinity-Laplacian family.
//!
//! Jet-level functions take an explicit first-order element `eta` and a
//! symmetric second-order element `H` and evaluate the formulas exactly.
//! Field-level functions build the jet at each interior node from the
//! discrete frame gradient and symmetrized Hessian; they regularize the
//! logarithm as `ln(max(|eta|, LOG_FLOOR))`.
//!
//! All residuals are written with the leading minus sign, so a
//! supersolution has a nonnegative residual.

use crate::error::Result;
use crate::grid::{
    dot, gradient_at, grad_ln_p, norm, riemannian_gradient, second_derivative_at, FrameField, Grid2D,
    ScalarField, Sym2, Vec2,
};

/// Floor applied to `|eta|` inside logarithms of field residuals.
pub const LOG_FLOOR: f64 = 1e-12;

/// Evaluated jet pair `(eta, H)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointJet {
    pub eta: Vec2,
    pub h: Sym2,
}

impl PointJet {
    pub fn new(eta: Vec2, h: Sym2) -> Self {
        PointJet { eta, h }
    }
}

/// Exponent information at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentData {
    pub p: f64,
    pub k: f64,
    /// `D_X (k p)`
    pub grad_kp: Vec2,
    /// `D_X ln p`
    pub grad_ln_p: Vec2,
}

impl ExponentData {
    /// Constant exponent: both gradients vanish.
    pub fn constant(p: f64, k: f64) -> Self {
        ExponentData {
            p,
            k,
            grad_kp: [0.0; 2],
            grad_ln_p: [0.0; 2],
        }
    }
}

/// `<H eta, eta>`
pub fn infinity_residual_at(j: &PointJet) -> f64 {
    j.h.quad(j.eta)
}

/// `-(<H eta, eta> + |eta|^2 <eta, D ln p> ln|eta|)`, with the log term
/// taken as its limit 0 when `eta = 0`.
pub fn infinity_x_residual_at(j: &PointJet, e: &ExponentData) -> f64 {
    let n = norm(j.eta);
    let log_term = if n == 0.0 {
        0.0
    } else {
        n * n * dot(j.eta, e.grad_ln_p) * n.ln()
    };
    -(j.h.quad(j.eta) + log_term)
}

/// Viscosity residual of the `k p(x)`-Laplacian,
/// `-(|eta|^{kp-2} tr H + (kp-2)|eta|^{kp-4} <H eta, eta> + |eta|^{kp-2} <eta, D kp> ln|eta|)`.
///
/// Every term is defined as 0 at `eta = 0`, including the middle term when
/// `kp <= 4` where it has no limit.
pub fn pk_residual_at(j: &PointJet, e: &ExponentData) -> f64 {
    let n = norm(j.eta);
    if n == 0.0 {
        return 0.0;
    }
    let q = e.k * e.p;
    let a = n.powf(q - 2.0);
    let b = n.powf(q - 4.0);
    -(a * j.h.trace() + (q - 2.0) * b * j.h.quad(j.eta) + a * dot(j.eta, e.grad_kp) * n.ln())
}

#[inline]
fn regularized_residual(eta: Vec2, h: &Sym2, grad_ln_p: Vec2) -> f64 {
    let n = norm(eta);
    let log_term = n * n * dot(eta, grad_ln_p) * n.max(LOG_FLOOR).ln();
    -(h.quad(eta) + log_term)
}

/// Variable-exponent infinity residual at one interior node.
pub(crate) fn infinity_x_residual_node(
    u: &[f64],
    frame: &FrameField,
    grid: &Grid2D,
    grad_ln_p: Vec2,
    k: usize,
) -> f64 {
    let eta = gradient_at(u, frame, grid, k);
    let h = Sym2::symmetrize(second_derivative_at(u, frame, grid, k));
    regularized_residual(eta, &h, grad_ln_p)
}

/// `-Delta_{X,inf(x)} u` at interior nodes (zero on the boundary).
pub fn infinity_x_residual_field(u: &ScalarField, frame: &FrameField, grid: &Grid2D, p: &ScalarField) -> Result<ScalarField> {
    let glp = grad_ln_p(p, frame, grid)?;
    let mut out = vec![0.0; grid.len()];
    for k in grid.interior() {
        out[k] = infinity_x_residual_node(u.values(), frame, grid, glp[k], k);
    }
    Ok(ScalarField::from_vec(out))
}

fn combined_form(
    u: &ScalarField,
    frame: &FrameField,
    grid: &Grid2D,
    p: &ScalarField,
    f: impl Fn(f64, f64) -> f64,
) -> Result<ScalarField> {
    let glp = grad_ln_p(p, frame, grid)?;
    let mut out = vec![0.0; grid.len()];
    for k in grid.interior() {
        let eta = gradient_at(u.values(), frame, grid, k);
        let h = Sym2::symmetrize(second_derivative_at(u.values(), frame, grid, k));
        let r = regularized_residual(eta, &h, glp[k]);
        out[k] = f(dot(eta, eta), r);
    }
    Ok(ScalarField::from_vec(out))
}

/// `min{|D_X u|^2 - eps, -Delta_{X,inf(x)} u}` at interior nodes.
pub fn min_form_residual(u: &ScalarField, frame: &FrameField, grid: &Grid2D, p: &ScalarField, eps: f64) -> Result<ScalarField> {
    combined_form(u, frame, grid, p, |g2, r| (g2 - eps).min(r))
}

/// `max{eps - |D_X u|^2, -Delta_{X,inf(x)} u}` at interior nodes.
pub fn max_form_residual(u: &ScalarField, frame: &FrameField, grid: &Grid2D, p: &ScalarField, eps: f64) -> Result<ScalarField> {
    combined_form(u, frame, grid, p, |g2, r| (eps - g2).max(r))
}

/// Trapezoid weight of node `(i, j)` times `hx hy`.
pub(crate) fn trapezoid_weight(grid: &Grid2D, k: usize) -> f64 {
    let n = grid.node(k);
    let wx = if n.i == 0 || n.i + 1 == grid.nx { 0.5 } else { 1.0 };
    let wy = if n.j == 0 || n.j + 1 == grid.ny { 0.5 } else { 1.0 };
    wx * wy * grid.hx * grid.hy
}

/// `(integral |D_X u|^{kp} / (kp))^{1/k}` by trapezoid quadrature on the
/// lattice. Switches to log-space summation when any `kp ln|D_X u|`
/// exceeds 600.
pub fn energy_functional(u: &ScalarField, frame: &FrameField, grid: &Grid2D, p: &ScalarField, k: f64) -> Result<f64> {
    if !(k >= 1.0) {
        return Err(crate::Error::InvalidInput(format!("energy needs k >= 1, got {k}")));
    }
    let du = riemannian_gradient(u, frame, grid);
    // log of each quadrature term; -inf for a vanishing gradient
    let mut logs = Vec::with_capacity(grid.len());
    let mut big = false;
    for idx in 0..grid.len() {
        let q = k * p[idx];
        let n = norm(du[idx]);
        let lg = q * n.ln();
        big |= lg > 600.0;
        logs.push(lg - q.ln() + trapezoid_weight(grid, idx).ln());
    }
    if !big {
        let s: f64 = logs.iter().map(|l| l.exp()).sum();
        return Ok(s.powf(1.0 / k));
    }
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = logs.iter().map(|l| (l - m).exp()).sum();
    Ok(((m + s.ln()) / k).exp())
}

/// `max_x |D_X u|^{p(x)}` over interior nodes.
pub fn sup_extremal(u: &ScalarField, frame: &FrameField, grid: &Grid2D, p: &ScalarField) -> f64 {
    grid.interior()
        .map(|k| norm(gradient_at(u.values(), frame, grid, k)).powf(p[k]))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{riemannian_distance, sample_frame, FrameExprs, Node, DEFAULT_DET_FLOOR};
    use proptest::prelude::*;

    fn jet(eta: Vec2, xx: f64, xy: f64, yy: f64) -> PointJet {
        PointJet::new(eta, Sym2::new(xx, xy, yy))
    }

    #[test]
    fn infinity_jet_values() {
        assert_eq!(infinity_residual_at(&jet([1.0, 0.0], 2.0, 0.0, 7.0)), 2.0);
        assert_eq!(infinity_residual_at(&jet([0.0, 0.0], 2.0, 3.0, 7.0)), 0.0);
        // hand evaluation: eta = (1,1), H = [[0,1],[1,0]] -> H eta = (1,1), <.,eta> = 2
        assert_eq!(infinity_residual_at(&jet([1.0, 1.0], 0.0, 1.0, 0.0)), 2.0);
    }

    #[test]
    fn infinity_x_jet_values() {
        let e = ExponentData {
            p: 2.0,
            k: 1.0,
            grad_kp: [0.0; 2],
            grad_ln_p: [0.3, -4.0],
        };
        let s = 0.5f64.sqrt();
        let j = jet([s, s], 1.0, 0.25, -2.0);
        assert!((infinity_x_residual_at(&j, &e) + infinity_residual_at(&j)).abs() < 1e-15);
        assert_eq!(infinity_x_residual_at(&jet([0.0, 0.0], 1.0, 2.0, 3.0), &e), 0.0);
        // eta = (2,0), H = diag(3,5), D ln p = (1,0):
        // <H eta, eta> = 12, |eta|^2 <eta, Dlnp> ln|eta| = 4 * 2 * ln 2
        let e = ExponentData {
            grad_ln_p: [1.0, 0.0],
            ..e
        };
        let r = infinity_x_residual_at(&jet([2.0, 0.0], 3.0, 0.0, 5.0), &e);
        let expect = -(12.0 + 8.0 * 2f64.ln());
        assert!((r - expect).abs() < 1e-12);
        assert!((r + 17.545177444479562).abs() < 1e-12);
    }

    #[test]
    fn pk_jet_values() {
        // kp = 2, |eta| = 1, H = I: -(tr I + 0) = -2
        let r = pk_residual_at(&jet([0.6, 0.8], 1.0, 0.0, 1.0), &ExponentData::constant(2.0, 1.0));
        assert!((r + 2.0).abs() < 1e-12);
        assert_eq!(pk_residual_at(&jet([0.0, 0.0], 1.0, 0.0, 1.0), &ExponentData::constant(3.0, 2.0)), 0.0);
        // kp = 4, eta = (1,0), H = diag(1,0): -(1*1 + 2*1*1) = -3
        let r = pk_residual_at(&jet([1.0, 0.0], 1.0, 0.0, 0.0), &ExponentData::constant(2.0, 2.0));
        assert!((r + 3.0).abs() < 1e-12);
    }

    fn arb_jet() -> impl Strategy<Value = PointJet> {
        (-3.0f64..3.0, -3.0f64..3.0, -5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0)
            .prop_map(|(a, b, xx, xy, yy)| jet([a, b], xx, xy, yy))
    }

    proptest! {
        #[test]
        fn constant_exponent_reduces_to_infinity_laplacian(j in arb_jet(), p in 1.1f64..10.0) {
            let e = ExponentData::constant(p, 3.0);
            prop_assert_eq!(infinity_x_residual_at(&j, &e), -infinity_residual_at(&j));
        }

        #[test]
        fn infinity_residual_is_quadratic_in_eta(j in arb_jet(), c in 0.01f64..10.0) {
            let scaled = PointJet::new([c * j.eta[0], c * j.eta[1]], j.h);
            let lhs = infinity_residual_at(&scaled);
            let rhs = c * c * infinity_residual_at(&j);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }

        #[test]
        fn pk_at_kp_two_is_frame_laplacian(j in arb_jet()) {
            prop_assume!(norm(j.eta) > 1e-6);
            let r = pk_residual_at(&j, &ExponentData::constant(2.0, 1.0));
            prop_assert!((r + j.h.trace()).abs() <= 1e-12 * (1.0 + j.h.trace().abs()));
        }
    }

    #[test]
    fn variable_exponent_breaks_quadratic_scaling() {
        let e = ExponentData {
            p: 2.0,
            k: 1.0,
            grad_kp: [0.0; 2],
            grad_ln_p: [1.0, 0.0],
        };
        let j = jet([1.0, 0.0], 1.0, 0.0, 1.0);
        let j2 = jet([2.0, 0.0], 1.0, 0.0, 1.0);
        assert!((infinity_x_residual_at(&j2, &e) - 4.0 * infinity_x_residual_at(&j, &e)).abs() > 1.0);
    }

    #[test]
    fn unit_planes_have_zero_residual() {
        let g = Grid2D::unit_square(17).unwrap();
        let id = FrameField::identity(&g);
        let p = ScalarField::constant(&g, 3.0);
        let u = ScalarField::from_fn(&g, |x, y| 0.3 + 0.6 * x - 0.8 * y);
        let r = infinity_x_residual_field(&u, &id, &g, &p).unwrap();
        assert!(r.values().iter().all(|v| v.abs() < 1e-12));
        // variable exponent still cancels when |Du| = 1
        let p = ScalarField::from_fn(&g, |x, _| 2.0 * x.exp());
        let r = infinity_x_residual_field(&u, &id, &g, &p).unwrap();
        assert!(r.values().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn non_unit_plane_with_variable_exponent() {
        // u = 2x, p = e^x: -(0 + 4 * 2 * 1 * ln 2)
        let g = Grid2D::unit_square(9).unwrap();
        let id = FrameField::identity(&g);
        let p = ScalarField::from_fn(&g, |x, _| 2.0 * x.exp());
        let u = ScalarField::from_fn(&g, |x, _| 2.0 * x);
        let r = infinity_x_residual_field(&u, &id, &g, &p).unwrap();
        let expect = -8.0 * 2f64.ln();
        for k in g.interior() {
            assert!((r[k] - expect).abs() < 1e-10, "{} vs {expect}", r[k]);
        }
    }

    #[test]
    fn cone_residual_shrinks_with_refinement() {
        // Euclidean cone |z - z0| with z0 outside the domain: |Du| = 1 and
        // <D^2u Du, Du> = 0, so the residual is a pure stencil error.
        let mut errs = Vec::new();
        for n in [17usize, 33, 65] {
            let g = Grid2D::unit_square(n).unwrap();
            let id = FrameField::identity(&g);
            let p = ScalarField::from_fn(&g, |x, _| 2.0 + x * x / 4.0);
            let u = ScalarField::from_fn(&g, |x, y| ((x + 0.5).powi(2) + (y + 0.5).powi(2)).sqrt());
            let r = infinity_x_residual_field(&u, &id, &g, &p).unwrap();
            let m = min_form_residual(&u, &id, &g, &p, 1.0).unwrap();
            errs.push(r.values().iter().fold(0.0f64, |a, v| a.max(v.abs())));
            assert!(m.values().iter().all(|v| v.abs() <= errs.last().unwrap() + 1e-3));
        }
        assert!(errs[2] < errs[0] / 10.0 && errs[2] < 1e-3, "{errs:?}");
    }

    #[test]
    fn grid_cone_residual_is_small_away_from_source() {
        // lattice distance from a corner: |Du| is not exactly one but the
        // residual stays bounded far from the source
        let g = Grid2D::unit_square(33).unwrap();
        let id = FrameField::identity(&g);
        let d = riemannian_distance(&id, &g, Node::new(0, 0)).unwrap();
        let glp = grad_ln_p(&ScalarField::constant(&g, 2.0), &id, &g).unwrap();
        let k = g.index(30, 5);
        let r = infinity_x_residual_node(d.values(), &id, &g, glp[k], k);
        assert!(r.abs() < 1e-9, "{r}");
    }

    #[test]
    fn combined_forms() {
        let g = Grid2D::unit_square(9).unwrap();
        let id = FrameField::identity(&g);
        let p = ScalarField::constant(&g, 2.0);
        let c = ScalarField::constant(&g, 4.0);
        let m = min_form_residual(&c, &id, &g, &p, 1.0).unwrap();
        assert!(g.interior().all(|k| m[k] == -1.0));
        let u = ScalarField::from_fn(&g, |x, _| x);
        let m = min_form_residual(&u, &id, &g, &p, 1.0).unwrap();
        let mx = max_form_residual(&u, &id, &g, &p, 1.0).unwrap();
        assert!(g.interior().all(|k| m[k].abs() < 1e-12 && mx[k].abs() < 1e-12));
    }

    #[test]
    fn energy_values() {
        let g = Grid2D::unit_square(17).unwrap();
        let id = FrameField::identity(&g);
        let p = ScalarField::constant(&g, 2.0);
        assert_eq!(energy_functional(&ScalarField::constant(&g, 1.0), &id, &g, &p, 1.0).unwrap(), 0.0);
        let u = ScalarField::from_fn(&g, |x, _| x);
        assert!((energy_functional(&u, &id, &g, &p, 1.0).unwrap() - 0.5).abs() < 1e-12);
        // (int 1/4)^(1/2) = 1/2
        assert!((energy_functional(&u, &id, &g, &p, 2.0).unwrap() - 0.5).abs() < 1e-12);
        let shifted = u.map(|v| v + 3.5);
        let q = ScalarField::from_fn(&g, |x, y| 2.0 + x * y);
        assert_eq!(
            energy_functional(&u, &id, &g, &q, 3.0).unwrap(),
            energy_functional(&shifted, &id, &g, &q, 3.0).unwrap()
        );
    }

    #[test]
    fn energy_log_space_matches_direct() {
        // |Du| = 20, kp = 2*16*... large enough to trip the log-space branch
        let g = Grid2D::unit_square(9).unwrap();
        let id = FrameField::identity(&g);
        let p = ScalarField::constant(&g, 2.0);
        let u = ScalarField::from_fn(&g, |x, _| 20.0 * x);
        let k = 120.0; // kp ln 20 = 719 > 600
        let e = energy_functional(&u, &id, &g, &p, k).unwrap();
        // exact: (20^240 / 240)^(1/120) = 400 * 240^(-1/120)
        let exact = 400.0 * 240f64.powf(-1.0 / k);
        assert!((e - exact).abs() < 1e-10 * exact, "{e} vs {exact}");
    }

    #[test]
    fn extremal_values() {
        let g = Grid2D::unit_square(9).unwrap();
        let id = FrameField::identity(&g);
        let p = ScalarField::constant(&g, 3.0);
        assert_eq!(sup_extremal(&ScalarField::constant(&g, 2.0), &id, &g, &p), 0.0);
        let u = ScalarField::from_fn(&g, |x, _| x);
        assert!((sup_extremal(&u, &id, &g, &p) - 1.0).abs() < 1e-12);
        let half = ScalarField::from_fn(&g, |x, _| if x < 0.5 { 2.0 } else { 3.0 });
        let u2 = ScalarField::from_fn(&g, |x, _| 2.0 * x);
        assert!((sup_extremal(&u2, &id, &g, &half) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn frame_expression_sampling_feeds_operators() {
        let g = Grid2D::unit_square(9).unwrap();
        let e = FrameExprs {
            a22: crate::expr::parse("2").unwrap(),
            ..FrameExprs::identity()
        };
        let f = sample_frame(&e, &g, DEFAULT_DET_FLOOR).unwrap();
        let u = ScalarField::from_fn(&g, |_, y| y);
        let p = ScalarField::constant(&g, 2.0);
        // |D_X u| = 2 everywhere
        assert!((sup_extremal(&u, &f, &g, &p) - 4.0).abs() < 1e-12);
    }
}
