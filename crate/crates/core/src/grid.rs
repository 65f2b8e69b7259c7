//! Rectangular lattice, frame sampling, and the frame differential operators.
//!
//! A frame is given by a matrix `A(x)` whose rows are the coefficient vectors
//! of the vector fields `X_i = sum_j a_ij d/dx_j`. The frame gradient is
//! `D_X u = A grad u`, and lengths of tangent vectors `v` are measured as
//! `|(A^T)^{-1} v|`, which makes the `X_i` orthonormal.
//!
//! Fields are stored per lattice node in row-major order (`y` outer, `x`
//! inner), so node `(i, j)` lives at index `j * nx + i`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::expr::Expr;

pub type Vec2 = [f64; 2];
pub type Mat2 = [[f64; 2]; 2];

/// Default lower bound on `|det A|`.
pub const DEFAULT_DET_FLOOR: f64 = 1e-10;

/// Distance reported for nodes the shortest-path sweep never reaches.
pub const UNREACHABLE: f64 = 1e300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Node {
    pub i: usize,
    pub j: usize,
}

impl Node {
    pub fn new(i: usize, j: usize) -> Self {
        Node { i, j }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
}

impl Grid2D {
    pub fn new(xmin: f64, xmax: f64, ymin: f64, ymax: f64, nx: usize, ny: usize) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3 nodes per direction, got {nx} x {ny}"
            )));
        }
        if !(xmax > xmin) || !(ymax > ymin) || !(xmax - xmin).is_finite() || !(ymax - ymin).is_finite() {
            return Err(Error::InvalidGrid(format!(
                "nonpositive extent [{xmin}, {xmax}] x [{ymin}, {ymax}]"
            )));
        }
        Ok(Grid2D {
            xmin,
            xmax,
            ymin,
            ymax,
            nx,
            ny,
            hx: (xmax - xmin) / (nx - 1) as f64,
            hy: (ymax - ymin) / (ny - 1) as f64,
        })
    }

    pub fn unit_square(n: usize) -> Result<Self> {
        Grid2D::new(0.0, 1.0, 0.0, 1.0, n, n)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn node(&self, idx: usize) -> Node {
        Node::new(idx % self.nx, idx / self.nx)
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.xmin + i as f64 * self.hx
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        self.ymin + j as f64 * self.hy
    }

    #[inline]
    pub fn point(&self, idx: usize) -> (f64, f64) {
        let n = self.node(idx);
        (self.x(n.i), self.y(n.j))
    }

    #[inline]
    pub fn is_boundary(&self, idx: usize) -> bool {
        let n = self.node(idx);
        n.i == 0 || n.j == 0 || n.i + 1 == self.nx || n.j + 1 == self.ny
    }

    pub fn interior(&self) -> impl Iterator<Item = usize> + '_ {
        (1..self.ny - 1).flat_map(move |j| (1..self.nx - 1).map(move |i| self.index(i, j)))
    }

    pub fn boundary(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&k| self.is_boundary(k))
    }

    pub fn interior_count(&self) -> usize {
        (self.nx - 2) * (self.ny - 2)
    }

    /// Lattice node closest to `(x, y)`, clamped to the grid.
    pub fn nearest(&self, x: f64, y: f64) -> Node {
        let i = ((x - self.xmin) / self.hx).round().clamp(0.0, (self.nx - 1) as f64) as usize;
        let j = ((y - self.ymin) / self.hy).round().clamp(0.0, (self.ny - 1) as f64) as usize;
        Node::new(i, j)
    }
}

/// One value per lattice node.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite field value at index {k}")));
        }
        Ok(ScalarField { values })
    }

    pub(crate) fn from_vec(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        ScalarField { values }
    }

    pub fn constant(grid: &Grid2D, c: f64) -> Self {
        ScalarField::from_vec(vec![c; grid.len()])
    }

    pub fn from_fn(grid: &Grid2D, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        ScalarField::from_vec((0..grid.len()).map(|k| {
            let (x, y) = grid.point(k);
            f(x, y)
        }).collect())
    }

    /// Evaluates `expr` on every node; domain errors carry through.
    pub fn sample(expr: &Expr, grid: &Grid2D) -> Result<Self> {
        let values = (0..grid.len())
            .map(|k| {
                let (x, y) = grid.point(k);
                expr.eval(x, y)
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(ScalarField::from_vec(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField::from_vec(self.values.iter().map(|&v| f(v)).collect())
    }

    /// Largest absolute nodewise difference.
    pub fn sup_distance(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl std::ops::Index<usize> for ScalarField {
    type Output = f64;
    fn index(&self, k: usize) -> &f64 {
        &self.values[k]
    }
}

impl std::ops::IndexMut<usize> for ScalarField {
    fn index_mut(&mut self, k: usize) -> &mut f64 {
        &mut self.values[k]
    }
}

/// One 2-vector per node. Operators fill interior nodes with centred
/// differences and boundary nodes with one-sided second-order differences.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    values: Vec<Vec2>,
}

impl VectorField {
    pub fn values(&self) -> &[Vec2] {
        &self.values
    }
}

impl std::ops::Index<usize> for VectorField {
    type Output = Vec2;
    fn index(&self, k: usize) -> &Vec2 {
        &self.values[k]
    }
}

/// Symmetric 2x2 matrix stored as its three distinct entries.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym2 {
    pub fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Sym2 { xx, xy, yy }
    }

    /// Symmetric part of a general matrix.
    pub fn symmetrize(m: Mat2) -> Self {
        Sym2::new(m[0][0], 0.5 * (m[0][1] + m[1][0]), m[1][1])
    }

    pub fn apply(&self, v: Vec2) -> Vec2 {
        [self.xx * v[0] + self.xy * v[1], self.xy * v[0] + self.yy * v[1]]
    }

    /// `<H v, v>`
    pub fn quad(&self, v: Vec2) -> f64 {
        self.xx * v[0] * v[0] + 2.0 * self.xy * v[0] * v[1] + self.yy * v[1] * v[1]
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    pub fn to_mat(&self) -> Mat2 {
        [[self.xx, self.xy], [self.xy, self.yy]]
    }
}

/// One symmetric matrix per node; boundary nodes hold zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixField {
    values: Vec<Sym2>,
}

impl MatrixField {
    pub fn values(&self) -> &[Sym2] {
        &self.values
    }
}

impl std::ops::Index<usize> for MatrixField {
    type Output = Sym2;
    fn index(&self, k: usize) -> &Sym2 {
        &self.values[k]
    }
}

#[inline]
pub fn det2(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

#[inline]
pub fn mat_vec(m: &Mat2, v: Vec2) -> Vec2 {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

#[inline]
pub fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn norm(a: Vec2) -> f64 {
    (a[0] * a[0] + a[1] * a[1]).sqrt()
}

/// `(M^T)^{-1}`, or `None` when `|det M| < floor`.
fn inverse_transpose(m: &Mat2, floor: f64) -> Option<Mat2> {
    let d = det2(m);
    if !(d.abs() >= floor) {
        return None;
    }
    let r = 1.0 / d;
    Some([[m[1][1] * r, -m[1][0] * r], [-m[0][1] * r, m[0][0] * r]])
}

/// Expressions for the four frame coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameExprs {
    pub a11: Expr,
    pub a12: Expr,
    pub a21: Expr,
    pub a22: Expr,
}

impl FrameExprs {
    pub fn identity() -> Self {
        FrameExprs {
            a11: Expr::constant(1.0),
            a12: Expr::constant(0.0),
            a21: Expr::constant(0.0),
            a22: Expr::constant(1.0),
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<Mat2> {
        Ok([
            [self.a11.eval(x, y)?, self.a12.eval(x, y)?],
            [self.a21.eval(x, y)?, self.a22.eval(x, y)?],
        ])
    }
}

/// Frame matrix `A` sampled on every node, with `(A^T)^{-1}` cached.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameField {
    a: Vec<Mat2>,
    inv_t: Vec<Mat2>,
    det_floor: f64,
}

impl FrameField {
    pub fn from_fn(grid: &Grid2D, det_floor: f64, mut f: impl FnMut(f64, f64) -> Mat2) -> Result<Self> {
        let mut a = Vec::with_capacity(grid.len());
        let mut inv_t = Vec::with_capacity(grid.len());
        for k in 0..grid.len() {
            let (x, y) = grid.point(k);
            let m = f(x, y);
            let Some(it) = inverse_transpose(&m, det_floor) else {
                let n = grid.node(k);
                return Err(Error::FrameSingular {
                    i: n.i,
                    j: n.j,
                    x,
                    y,
                    det: det2(&m),
                    floor: det_floor,
                });
            };
            a.push(m);
            inv_t.push(it);
        }
        Ok(FrameField { a, inv_t, det_floor })
    }

    pub fn identity(grid: &Grid2D) -> Self {
        FrameField::from_fn(grid, DEFAULT_DET_FLOOR, |_, _| [[1.0, 0.0], [0.0, 1.0]])
            .expect("identity is nonsingular")
    }

    /// The frame `c A`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let a: Vec<Mat2> = self
            .a
            .iter()
            .map(|m| [[c * m[0][0], c * m[0][1]], [c * m[1][0], c * m[1][1]]])
            .collect();
        let mut inv_t = Vec::with_capacity(a.len());
        for m in &a {
            inv_t.push(inverse_transpose(m, self.det_floor).ok_or_else(|| {
                Error::InvalidInput(format!("scaling by {c} makes the frame singular"))
            })?);
        }
        Ok(FrameField {
            a,
            inv_t,
            det_floor: self.det_floor,
        })
    }

    #[inline]
    pub fn matrix(&self, k: usize) -> &Mat2 {
        &self.a[k]
    }

    #[inline]
    pub fn inverse_transpose(&self, k: usize) -> &Mat2 {
        &self.inv_t[k]
    }

    pub fn det_floor(&self) -> f64 {
        self.det_floor
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

pub fn sample_frame(exprs: &FrameExprs, grid: &Grid2D, det_floor: f64) -> Result<FrameField> {
    let mut mats = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let (x, y) = grid.point(k);
        mats.push(exprs.eval(x, y)?);
    }
    let mut it = mats.into_iter();
    FrameField::from_fn(grid, det_floor, |_, _| it.next().expect("one matrix per node"))
}

/// Partial derivatives of a node array at node `(i, j)`: centred inside,
/// three-point one-sided on the rectangle edge.
#[inline]
pub(crate) fn partials(v: &[f64], grid: &Grid2D, i: usize, j: usize) -> Vec2 {
    let at = |i: usize, j: usize| v[grid.index(i, j)];
    let dx = if i == 0 {
        (-3.0 * at(0, j) + 4.0 * at(1, j) - at(2, j)) / (2.0 * grid.hx)
    } else if i + 1 == grid.nx {
        let n = grid.nx - 1;
        (3.0 * at(n, j) - 4.0 * at(n - 1, j) + at(n - 2, j)) / (2.0 * grid.hx)
    } else {
        (at(i + 1, j) - at(i - 1, j)) / (2.0 * grid.hx)
    };
    let dy = if j == 0 {
        (-3.0 * at(i, 0) + 4.0 * at(i, 1) - at(i, 2)) / (2.0 * grid.hy)
    } else if j + 1 == grid.ny {
        let n = grid.ny - 1;
        (3.0 * at(i, n) - 4.0 * at(i, n - 1) + at(i, n - 2)) / (2.0 * grid.hy)
    } else {
        (at(i, j + 1) - at(i, j - 1)) / (2.0 * grid.hy)
    };
    [dx, dy]
}

/// Frame gradient at one node.
#[inline]
pub(crate) fn gradient_at(u: &[f64], frame: &FrameField, grid: &Grid2D, k: usize) -> Vec2 {
    let n = grid.node(k);
    mat_vec(frame.matrix(k), partials(u, grid, n.i, n.j))
}

/// `D_X u = A (d_x u, d_y u)` at every node.
pub fn riemannian_gradient(u: &ScalarField, frame: &FrameField, grid: &Grid2D) -> VectorField {
    let values = (0..grid.len())
        .map(|k| gradient_at(u.values(), frame, grid, k))
        .collect();
    VectorField { values }
}

/// Non-symmetric frame second derivative `M_ij = X_i(X_j u)` at an interior
/// node, by the product rule
/// `X_i X_j u = sum_k a_ik (sum_l (d_k a_jl) d_l u + a_jl d_kl u)`.
pub(crate) fn second_derivative_at(u: &[f64], frame: &FrameField, grid: &Grid2D, k: usize) -> Mat2 {
    let n = grid.node(k);
    let (i, j) = (n.i, n.j);
    debug_assert!(!grid.is_boundary(k));
    let (hx, hy) = (grid.hx, grid.hy);
    let at = |i: usize, j: usize| u[grid.index(i, j)];
    let c = at(i, j);
    let uxx = (at(i + 1, j) - 2.0 * c + at(i - 1, j)) / (hx * hx);
    let uyy = (at(i, j + 1) - 2.0 * c + at(i, j - 1)) / (hy * hy);
    let uxy = (at(i + 1, j + 1) - at(i + 1, j - 1) - at(i - 1, j + 1) + at(i - 1, j - 1))
        / (4.0 * hx * hy);
    let grad = [
        (at(i + 1, j) - at(i - 1, j)) / (2.0 * hx),
        (at(i, j + 1) - at(i, j - 1)) / (2.0 * hy),
    ];
    let hess = [[uxx, uxy], [uxy, uyy]];

    let a = frame.matrix(k);
    let ax_p = frame.matrix(grid.index(i + 1, j));
    let ax_m = frame.matrix(grid.index(i - 1, j));
    let ay_p = frame.matrix(grid.index(i, j + 1));
    let ay_m = frame.matrix(grid.index(i, j - 1));
    // da[kdir][row][col] = d_kdir a_{row,col}
    let mut da = [[[0.0; 2]; 2]; 2];
    for r in 0..2 {
        for s in 0..2 {
            da[0][r][s] = (ax_p[r][s] - ax_m[r][s]) / (2.0 * hx);
            da[1][r][s] = (ay_p[r][s] - ay_m[r][s]) / (2.0 * hy);
        }
    }

    let mut m = [[0.0; 2]; 2];
    for (ii, row) in m.iter_mut().enumerate() {
        for (jj, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for kk in 0..2 {
                let mut inner = 0.0;
                for l in 0..2 {
                    inner += da[kk][jj][l] * grad[l] + a[jj][l] * hess[kk][l];
                }
                acc += a[ii][kk] * inner;
            }
            *out = acc;
        }
    }
    m
}

/// `(D_X^2 u)^*` at interior nodes; boundary entries are zero.
pub fn symmetrized_hessian(u: &ScalarField, frame: &FrameField, grid: &Grid2D) -> MatrixField {
    let mut values = vec![Sym2::default(); grid.len()];
    for k in grid.interior() {
        values[k] = Sym2::symmetrize(second_derivative_at(u.values(), frame, grid, k));
    }
    MatrixField { values }
}

/// `D_X ln p`; rejects `p <= 1` anywhere.
pub fn grad_ln_p(p: &ScalarField, frame: &FrameField, grid: &Grid2D) -> Result<VectorField> {
    for k in 0..grid.len() {
        if !(p[k] > 1.0) {
            let (x, y) = grid.point(k);
            return Err(Error::ExponentBelowMinimum { x, y, p: p[k], min: 1.0 });
        }
    }
    Ok(riemannian_gradient(&p.map(f64::ln), frame, grid))
}

#[derive(Clone, Copy, PartialEq)]
struct Queued {
    dist: f64,
    node: usize,
}

impl Eq for Queued {}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, ties broken by node index for determinism
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const NEIGHBORS: [(isize, isize); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
];

/// Length of the lattice edge from node `p` to node `q` under the frame
/// metric, using entrywise-averaged `A` at the edge midpoint.
fn edge_length(frame: &FrameField, p: usize, q: usize, step: Vec2) -> Result<f64> {
    let (ap, aq) = (frame.matrix(p), frame.matrix(q));
    let mid = [
        [0.5 * (ap[0][0] + aq[0][0]), 0.5 * (ap[0][1] + aq[0][1])],
        [0.5 * (ap[1][0] + aq[1][0]), 0.5 * (ap[1][1] + aq[1][1])],
    ];
    let it = inverse_transpose(&mid, frame.det_floor()).ok_or_else(|| {
        Error::InvalidInput(format!(
            "frame is singular at the midpoint of edge {p}-{q} (det {:e})",
            det2(&mid)
        ))
    })?;
    Ok(norm(mat_vec(&it, step)))
}

/// Shortest-path distance from `source` over the 8-neighbour lattice graph.
pub fn riemannian_distance(frame: &FrameField, grid: &Grid2D, source: Node) -> Result<ScalarField> {
    if source.i >= grid.nx || source.j >= grid.ny {
        return Err(Error::InvalidInput(format!(
            "source ({}, {}) outside the {}x{} grid",
            source.i, source.j, grid.nx, grid.ny
        )));
    }
    let mut dist = vec![f64::INFINITY; grid.len()];
    let mut done = vec![false; grid.len()];
    let mut heap = BinaryHeap::new();
    let s = grid.index(source.i, source.j);
    dist[s] = 0.0;
    heap.push(Queued { dist: 0.0, node: s });
    while let Some(Queued { dist: d, node }) = heap.pop() {
        if done[node] {
            continue;
        }
        done[node] = true;
        let n = grid.node(node);
        for &(di, dj) in &NEIGHBORS {
            let (Some(i), Some(j)) = (n.i.checked_add_signed(di), n.j.checked_add_signed(dj)) else {
                continue;
            };
            if i >= grid.nx || j >= grid.ny {
                continue;
            }
            let q = grid.index(i, j);
            if done[q] {
                continue;
            }
            let step = [di as f64 * grid.hx, dj as f64 * grid.hy];
            let nd = d + edge_length(frame, node, q, step)?;
            if nd < dist[q] {
                dist[q] = nd;
                heap.push(Queued { dist: nd, node: q });
            }
        }
    }
    Ok(ScalarField::from_vec(
        dist.into_iter()
            .map(|d| if d.is_finite() { d } else { UNREACHABLE })
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn frame_of(grid: &Grid2D, a: [&str; 4]) -> Result<FrameField> {
        let e = FrameExprs {
            a11: parse(a[0]).unwrap(),
            a12: parse(a[1]).unwrap(),
            a21: parse(a[2]).unwrap(),
            a22: parse(a[3]).unwrap(),
        };
        sample_frame(&e, grid, DEFAULT_DET_FLOOR)
    }

    #[test]
    fn grid_counts() {
        let g = Grid2D::unit_square(3).unwrap();
        assert_eq!((g.len(), g.interior().count()), (9, 1));
        let g = Grid2D::unit_square(5).unwrap();
        assert_eq!((g.len(), g.interior().count()), (25, 9));
        assert_eq!(g.boundary().count(), 16);
        assert_eq!(g.x(2), 0.5);
        assert!(Grid2D::new(0.0, 1.0, 0.0, 1.0, 2, 5).is_err());
        assert!(Grid2D::new(1.0, 1.0, 0.0, 1.0, 5, 5).is_err());
        assert!(Grid2D::new(0.0, 1.0, 2.0, 1.0, 5, 5).is_err());
    }

    #[test]
    fn interior_nodes_have_full_neighbourhood() {
        let g = Grid2D::new(-1.0, 2.0, 0.0, 1.0, 7, 4).unwrap();
        for k in g.interior() {
            let n = g.node(k);
            assert!(n.i >= 1 && n.j >= 1 && n.i + 1 < g.nx && n.j + 1 < g.ny);
        }
        assert_eq!(g.interior().count() + g.boundary().count(), g.len());
    }

    #[test]
    fn frame_sampling() {
        let g = Grid2D::unit_square(5).unwrap();
        let f = frame_of(&g, ["1", "0", "0", "1"]).unwrap();
        assert!((0..g.len()).all(|k| det2(f.matrix(k)) == 1.0));
        let f = frame_of(&g, ["2", "0", "0", "1"]).unwrap();
        assert!((0..g.len()).all(|k| det2(f.matrix(k)) == 2.0));
        match frame_of(&g, ["x", "0", "0", "1"]) {
            Err(Error::FrameSingular { i: 0, j: 0, .. }) => {}
            other => panic!("expected singular frame, got {other:?}"),
        }
    }

    #[test]
    fn gradient_exact_cases() {
        let g = Grid2D::unit_square(5).unwrap();
        let id = FrameField::identity(&g);
        let u = ScalarField::from_fn(&g, |x, _| x);
        let du = riemannian_gradient(&u, &id, &g);
        for k in 0..g.len() {
            assert!((du[k][0] - 1.0).abs() < 1e-14 && du[k][1].abs() < 1e-14);
        }
        let two = frame_of(&g, ["2", "0", "0", "1"]).unwrap();
        let du = riemannian_gradient(&u, &two, &g);
        for k in g.interior() {
            assert!((du[k][0] - 2.0).abs() < 1e-14 && du[k][1] == 0.0);
        }
        let q = ScalarField::from_fn(&g, |x, y| x * x + y * y);
        let du = riemannian_gradient(&q, &id, &g);
        let c = g.index(2, 2);
        assert!((du[c][0] - 1.0).abs() < 1e-14 && (du[c][1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn hessian_exact_cases() {
        let g = Grid2D::unit_square(5).unwrap();
        let id = FrameField::identity(&g);
        let h = symmetrized_hessian(&ScalarField::from_fn(&g, |x, _| x * x), &id, &g);
        for k in g.interior() {
            assert!((h[k].xx - 2.0).abs() < 1e-12 && h[k].xy.abs() < 1e-12 && h[k].yy.abs() < 1e-12);
        }
        let h = symmetrized_hessian(&ScalarField::from_fn(&g, |x, y| x * y), &id, &g);
        for k in g.interior() {
            assert!(h[k].xx.abs() < 1e-12 && (h[k].xy - 1.0).abs() < 1e-12 && h[k].yy.abs() < 1e-12);
        }
    }

    #[test]
    fn hessian_non_commuting_frame() {
        // X1 = d_x, X2 = (1 + x) d_y, u = y:  X1 X2 u = 1, X2 X1 u = 0
        let g = Grid2D::new(-0.5, 0.5, -0.5, 0.5, 5, 5).unwrap();
        let f = frame_of(&g, ["1", "0", "0", "1 + x"]).unwrap();
        let u = ScalarField::from_fn(&g, |_, y| y);
        let k = g.index(2, 2);
        let m = second_derivative_at(u.values(), &f, &g, k);
        assert!((m[0][1] - 1.0).abs() < 1e-12);
        assert!(m[1][0].abs() < 1e-12);
        let h = symmetrized_hessian(&u, &f, &g);
        assert!((h[k].xy - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ln_p_gradient() {
        let g = Grid2D::unit_square(9).unwrap();
        let id = FrameField::identity(&g);
        let d = grad_ln_p(&ScalarField::constant(&g, 2.0), &id, &g).unwrap();
        assert!(d.values().iter().all(|v| v[0].abs() < 1e-14 && v[1].abs() < 1e-14));
        let d = grad_ln_p(&ScalarField::from_fn(&g, |x, _| 2.0 * x.exp()), &id, &g).unwrap();
        for k in g.interior() {
            assert!((d[k][0] - 1.0).abs() < 1e-12 && d[k][1].abs() < 1e-12);
        }
        assert!(grad_ln_p(&ScalarField::constant(&g, 1.0), &id, &g).is_err());
    }

    #[test]
    fn ln_p_gradient_variable() {
        // oracle: d/dx ln(2 + x^2) = 2x / (2 + x^2); at x = 0.5 that is 0.4444...
        let exact = 2.0 * 0.5 / 2.25;
        let mut errs = Vec::new();
        for n in [9usize, 17, 33] {
            let g = Grid2D::new(-1.0, 1.0, -1.0, 1.0, n, n).unwrap();
            let id = FrameField::identity(&g);
            let p = ScalarField::from_fn(&g, |x, _| 2.0 + x * x);
            let d = grad_ln_p(&p, &id, &g).unwrap();
            let node = g.nearest(0.5, 0.0);
            assert_eq!((g.x(node.i), g.y(node.j)), (0.5, 0.0));
            errs.push((d[g.index(node.i, node.j)][0] - exact).abs());
        }
        assert!(errs[0] < 2e-2, "{errs:?}");
        assert!(errs[1] < errs[0] / 3.5 && errs[2] < errs[1] / 3.5, "{errs:?}");
    }

    #[test]
    fn distance_exact_cases() {
        let g = Grid2D::unit_square(65).unwrap();
        let id = FrameField::identity(&g);
        let d = riemannian_distance(&id, &g, Node::new(0, 0)).unwrap();
        assert_eq!(d[0], 0.0);
        assert_eq!(d[g.index(64, 0)], 1.0);
        assert!((d[g.index(64, 64)] - 2f64.sqrt()).abs() < 1e-14);
        let d2 = riemannian_distance(&id.scaled(2.0).unwrap(), &g, Node::new(0, 0)).unwrap();
        for k in 0..g.len() {
            assert_eq!(d2[k], 0.5 * d[k]);
        }
    }

    #[test]
    fn distance_metrication_bound() {
        let g = Grid2D::unit_square(33).unwrap();
        let id = FrameField::identity(&g);
        let d = riemannian_distance(&id, &g, Node::new(0, 0)).unwrap();
        let mut worst: f64 = 0.0;
        for k in 1..g.len() {
            let (x, y) = g.point(k);
            let e = (x * x + y * y).sqrt();
            assert!(d[k] >= e - 1e-12);
            worst = worst.max(d[k] / e - 1.0);
        }
        assert!(worst <= 0.083, "{worst}");
        assert!(worst > 0.07);
    }
}
