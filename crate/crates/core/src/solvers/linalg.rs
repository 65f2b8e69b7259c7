//! Sparse symmetric systems on the interior lattice.

use crate::error::{Error, Result};

/// Symmetric matrix in compressed-row form with a fixed pattern.
#[derive(Debug, Clone)]
pub(crate) struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
    pub diag: Vec<usize>,
    /// Largest `|row - col|` in the pattern.
    pub half_band: usize,
}

impl CsrMatrix {
    /// Builds the pattern from sorted, deduplicated column lists.
    pub fn from_pattern(rows: Vec<Vec<usize>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut diag = Vec::with_capacity(n);
        let mut half_band = 0;
        row_ptr.push(0);
        for (r, row) in rows.into_iter().enumerate() {
            for c in row {
                if c == r {
                    diag.push(cols.len());
                }
                half_band = half_band.max(r.abs_diff(c));
                cols.push(c);
            }
            row_ptr.push(cols.len());
        }
        assert_eq!(diag.len(), n, "pattern must contain the diagonal");
        let vals = vec![0.0; cols.len()];
        CsrMatrix {
            n,
            row_ptr,
            cols,
            vals,
            diag,
            half_band,
        }
    }

    /// Slot index of entry `(r, c)`.
    pub fn slot(&self, r: usize, c: usize) -> Option<usize> {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[range.clone()]
            .binary_search(&c)
            .ok()
            .map(|off| range.start + off)
    }

    pub fn clear(&mut self) {
        self.vals.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn mul(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate().take(self.n) {
            let mut s = 0.0;
            for s_idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.vals[s_idx] * x[self.cols[s_idx]];
            }
            *out = s;
        }
    }

    pub fn diagonal(&self) -> impl Iterator<Item = f64> + '_ {
        self.diag.iter().map(|&s| self.vals[s])
    }
}

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradients, started from `x`.
/// Stops when `|b - A x| <= tol |b|`. Returns the iteration count.
pub(crate) fn pcg(a: &CsrMatrix, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<usize> {
    let n = a.n;
    let bnorm = dotv(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = vec![0.0; n];
    a.mul(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dotv(&r, &z);
    let mut rnorm = dotv(&r, &r).sqrt();
    for it in 0..max_iter {
        if rnorm <= tol * bnorm {
            return Ok(it);
        }
        a.mul(&p, &mut ap);
        let pap = dotv(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::CgNotConverged {
                iterations: it,
                residual: rnorm / bnorm,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dotv(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rnorm = dotv(&r, &r).sqrt();
    }
    if rnorm <= tol * bnorm {
        return Ok(max_iter);
    }
    Err(Error::CgNotConverged {
        iterations: max_iter,
        residual: rnorm / bnorm,
    })
}

/// Lower-triangular band Cholesky factor; row `i` stores columns
/// `i - bw ..= i` contiguously.
pub(crate) struct BandCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.n;
        let bw = a.half_band;
        let w = bw + 1;
        let mut l = vec![0.0; n * w];
        for r in 0..n {
            for s in a.row_ptr[r]..a.row_ptr[r + 1] {
                let c = a.cols[s];
                if c <= r {
                    l[r * w + c + bw - r] = a.vals[s];
                }
            }
        }
        for i in 0..n {
            let lo_i = i.saturating_sub(bw);
            for j in lo_i..=i {
                let lo = lo_i.max(j.saturating_sub(bw));
                let ri = i * w + bw - i;
                let rj = j * w + bw - j;
                let mut s = l[ri + j];
                for k in lo..j {
                    s -= l[ri + k] * l[rj + k];
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::InvalidInput(format!(
                            "matrix is not positive definite (pivot {s:e} at row {i})"
                        )));
                    }
                    l[ri + i] = s.sqrt();
                } else {
                    l[ri + j] = s / l[rj + j];
                }
            }
        }
        Ok(BandCholesky { n, bw, l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        let mut y = b.to_vec();
        for i in 0..n {
            let ri = i * w + bw - i;
            let mut s = y[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.l[ri + k] * y[k];
            }
            y[i] = s / self.l[ri + i];
        }
        for i in (0..n).rev() {
            let ri = i * w + bw - i;
            y[i] /= self.l[ri + i];
            let yi = y[i];
            for k in i.saturating_sub(bw)..i {
                y[k] -= self.l[ri + k] * yi;
            }
        }
        y
    }
}
