//! Dense complex linear-algebra helpers.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;

/// Eigen-decomposition of a Hermitian matrix with ascending eigenvalues.
pub fn hermitian_eigen(h: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let n = h.nrows();
    let eig = SymmetricEigen::new(h.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vecs = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    (vals, vecs)
}

pub fn hermitian_eigenvalues(h: &DMatrix<C64>) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(h.clone()).eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn max_hermiticity_defect(d: &DMatrix<C64>) -> f64 {
    let n = d.nrows();
    let mut m: f64 = 0.0;
    for j in 0..n {
        for i in 0..=j {
            m = m.max((d[(i, j)] - d[(j, i)].conj()).norm());
        }
    }
    m
}

/// Replace d by (d + d^dagger)/2.
pub fn hermitize(d: &mut DMatrix<C64>) {
    let n = d.nrows();
    for j in 0..n {
        for i in 0..j {
            let a = 0.5 * (d[(i, j)] + d[(j, i)].conj());
            d[(i, j)] = a;
            d[(j, i)] = a.conj();
        }
        d[(j, j)] = C64::new(d[(j, j)].re, 0.0);
    }
}

pub fn check_hermitian(h: &DMatrix<C64>, tol: f64) -> Result<()> {
    if !h.is_square() {
        return Err(Error::InvalidParams("matrix is not square".into()));
    }
    let defect = max_hermiticity_defect(h);
    if defect > tol {
        return Err(Error::InvalidParams(format!("matrix is not Hermitian (defect {defect:e})")));
    }
    Ok(())
}

pub fn max_abs_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn trace_re(d: &DMatrix<C64>) -> f64 {
    (0..d.nrows()).map(|i| d[(i, i)].re).sum()
}

/// Single-particle propagator built once from h = W diag(eps) W^dagger.
#[derive(Clone, Debug)]
pub struct Propagator {
    pub eps: Vec<f64>,
    pub w: DMatrix<C64>,
    /// Row-major copy of W for fast row access.
    w_rows: Vec<C64>,
}

impl Propagator {
    pub fn new(h: &DMatrix<C64>) -> Result<Self> {
        check_hermitian(h, 1e-12)?;
        let (eps, w) = hermitian_eigen(h);
        let n = h.nrows();
        let mut w_rows = vec![C64::new(0.0, 0.0); n * n];
        for x in 0..n {
            for k in 0..n {
                w_rows[x * n + k] = w[(x, k)];
            }
        }
        Ok(Self { eps, w, w_rows })
    }

    pub fn dim(&self) -> usize {
        self.eps.len()
    }

    /// Row x of W.
    pub fn w_row(&self, x: usize) -> &[C64] {
        let n = self.dim();
        &self.w_rows[x * n..(x + 1) * n]
    }

    /// E(dt) = exp(i h^T dt) = W* diag(e^{i eps dt}) W^T.
    pub fn evolution_matrix(&self, dt: f64) -> DMatrix<C64> {
        let n = self.dim();
        let mut left = self.w.map(|z| z.conj());
        for k in 0..n {
            let ph = C64::from_polar(1.0, self.eps[k] * dt);
            for i in 0..n {
                left[(i, k)] *= ph;
            }
        }
        left * self.w.transpose()
    }
}
