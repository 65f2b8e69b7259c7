//! Weak form on the lattice.
//!
//! Every lattice cell is cut along both diagonals, giving four triangles of
//! half weight each. On a triangle the frame gradient of the piecewise
//! linear interpolant is `g_T = A_T grad u_T = B_T u_T` with `A_T` the mean
//! of the vertex frames. The discrete divergence is the negative adjoint of
//! this gradient, so every assembled operator is symmetric, and positive
//! definite on interior unknowns for positive weights.

use crate::grid::{mat_vec, FrameField, Grid2D, Mat2, Vec2};

use super::linalg::CsrMatrix;

const NO_DOF: usize = usize::MAX;

#[derive(Debug, Clone)]
pub(crate) struct Tri {
    pub nodes: [usize; 3],
    /// Columns of `B_T`: frame gradient of each vertex hat function.
    pub b: [Vec2; 3],
    /// Quadrature weight (area share).
    pub wt: f64,
    /// CSR slots of the local 3x3 block, `NO_DOF` when either end is fixed.
    slots: [[usize; 3]; 3],
}

impl Tri {
    #[inline]
    pub fn grad(&self, u: &[f64]) -> Vec2 {
        let mut g = [0.0; 2];
        for v in 0..3 {
            let x = u[self.nodes[v]];
            g[0] += self.b[v][0] * x;
            g[1] += self.b[v][1] * x;
        }
        g
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Discretization {
    pub grid: Grid2D,
    pub tris: Vec<Tri>,
    /// Unknown index -> node.
    pub nodes: Vec<usize>,
    /// Lumped mass per node.
    pub mass: Vec<f64>,
    pub pattern: CsrMatrix,
}

fn mean_frame(ms: [&Mat2; 3]) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for m in ms {
        for r in 0..2 {
            for c in 0..2 {
                out[r][c] += m[r][c] / 3.0;
            }
        }
    }
    out
}

impl Discretization {
    pub fn new(grid: &Grid2D, frame: &FrameField) -> Self {
        let mut dof = vec![NO_DOF; grid.len()];
        let mut nodes = Vec::with_capacity(grid.interior_count());
        for k in grid.interior() {
            dof[k] = nodes.len();
            nodes.push(k);
        }

        let mut rows = Vec::with_capacity(nodes.len());
        for &k in &nodes {
            let n = grid.node(k);
            let mut row = Vec::with_capacity(9);
            for j in n.j - 1..=n.j + 1 {
                for i in n.i - 1..=n.i + 1 {
                    let d = dof[grid.index(i, j)];
                    if d != NO_DOF {
                        row.push(d);
                    }
                }
            }
            row.sort_unstable();
            rows.push(row);
        }
        let pattern = CsrMatrix::from_pattern(rows);

        let (hx, hy) = (grid.hx, grid.hy);
        let wt = 0.25 * hx * hy;
        let mut tris = Vec::with_capacity(4 * (grid.nx - 1) * (grid.ny - 1));
        let mut mass = vec![0.0; grid.len()];
        for j in 0..grid.ny - 1 {
            for i in 0..grid.nx - 1 {
                // corners with local offsets
                let c = [
                    (grid.index(i, j), 0.0, 0.0),
                    (grid.index(i + 1, j), hx, 0.0),
                    (grid.index(i + 1, j + 1), hx, hy),
                    (grid.index(i, j + 1), 0.0, hy),
                ];
                for corners in [[0, 1, 2], [0, 2, 3], [0, 1, 3], [1, 2, 3]] {
                    let [p0, p1, p2] = corners.map(|q| c[q]);
                    let area2 = (p1.1 - p0.1) * (p2.2 - p0.2) - (p2.1 - p0.1) * (p1.2 - p0.2);
                    let grads = [
                        [(p1.2 - p2.2) / area2, (p2.1 - p1.1) / area2],
                        [(p2.2 - p0.2) / area2, (p0.1 - p2.1) / area2],
                        [(p0.2 - p1.2) / area2, (p1.1 - p0.1) / area2],
                    ];
                    let tn = [p0.0, p1.0, p2.0];
                    let a = mean_frame(tn.map(|n| frame.matrix(n)));
                    let b = grads.map(|g| mat_vec(&a, g));
                    let mut slots = [[NO_DOF; 3]; 3];
                    for r in 0..3 {
                        for s in 0..3 {
                            let (dr, ds) = (dof[tn[r]], dof[tn[s]]);
                            if dr != NO_DOF && ds != NO_DOF {
                                slots[r][s] = pattern.slot(dr, ds).expect("neighbour in pattern");
                            }
                        }
                    }
                    for &n in &tn {
                        mass[n] += wt / 3.0;
                    }
                    tris.push(Tri {
                        nodes: tn,
                        b,
                        wt,
                        slots,
                    });
                }
            }
        }
        Discretization {
            grid: grid.clone(),
            tris,
            nodes,
            mass,
            pattern,
        }
    }

    /// Adds `scale * B^T M B` of triangle `t` into `mat`.
    #[inline]
    pub fn add_local(&self, mat: &mut CsrMatrix, t: &Tri, scale: f64, m: [[f64; 2]; 2]) {
        let mb = t.b.map(|bv| mat_vec(&m, bv));
        for r in 0..3 {
            for s in 0..3 {
                let slot = t.slots[r][s];
                if slot != NO_DOF {
                    let v = t.b[r][0] * mb[s][0] + t.b[r][1] * mb[s][1];
                    mat.vals[slot] += scale * v;
                }
            }
        }
    }

    /// Adds `scale * B^T v` of triangle `t` into the node vector `out`.
    #[inline]
    pub fn add_load(&self, out: &mut [f64], t: &Tri, scale: f64, v: Vec2) {
        for r in 0..3 {
            out[t.nodes[r]] += scale * (t.b[r][0] * v[0] + t.b[r][1] * v[1]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ScalarField;

    #[test]
    fn gradient_exact_on_linears() {
        let g = Grid2D::new(0.0, 2.0, -1.0, 1.0, 7, 5).unwrap();
        let f = FrameField::from_fn(&g, 1e-10, |x, _| [[1.0, 0.5], [0.0, 1.0 + x]]).unwrap();
        let d = Discretization::new(&g, &f);
        let u = ScalarField::from_fn(&g, |x, y| 3.0 * x - 2.0 * y);
        for t in &d.tris {
            let gr = t.grad(u.values());
            // A_T (3, -2) with A_T the vertex mean
            let xm: f64 = t.nodes.iter().map(|&n| g.point(n).0).sum::<f64>() / 3.0;
            let expect = [3.0 - 1.0, -2.0 * (1.0 + xm)];
            assert!((gr[0] - expect[0]).abs() < 1e-12 && (gr[1] - expect[1]).abs() < 1e-12);
        }
        let total: f64 = d.mass.iter().sum();
        assert!((total - 4.0).abs() < 1e-12);
    }

    #[test]
    fn identity_laplacian_is_five_point() {
        let g = Grid2D::unit_square(6).unwrap();
        let d = Discretization::new(&g, &FrameField::identity(&g));
        let mut m = d.pattern.clone();
        for t in &d.tris {
            d.add_local(&mut m, t, t.wt, [[1.0, 0.0], [0.0, 1.0]]);
        }
        let dof = |i, j| d.nodes.iter().position(|&n| n == g.index(i, j)).unwrap();
        let (c, e, ne) = (dof(2, 2), dof(3, 2), dof(3, 3));
        assert!((m.vals[m.slot(c, c).unwrap()] - 4.0).abs() < 1e-12);
        assert!((m.vals[m.slot(c, e).unwrap()] + 1.0).abs() < 1e-12);
        assert!(m.vals[m.slot(c, ne).unwrap()].abs() < 1e-12);
    }
}
