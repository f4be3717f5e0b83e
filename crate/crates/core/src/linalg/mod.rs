//! Sparse operators, Krylov propagation and eigensolvers.

mod krylov;
mod lanczos;
mod sparse;

pub use krylov::{evolve_snapshots, expm_multiply, KrylovOptions};
pub use lanczos::{lowest_eigenpair, LanczosOptions};
pub use sparse::{ParametricOperator, SparseOperator};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

pub trait LinearOperator {
    fn dim(&self) -> usize;
    /// `y = A x`
    fn apply(&self, x: &[C64], y: &mut [C64]);
}

pub(crate) fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub(crate) fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub(crate) fn axpy(alpha: C64, x: &[C64], y: &mut [C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn scale(alpha: f64, x: &mut [C64]) {
    for xi in x {
        *xi *= alpha;
    }
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending and
/// eigenvectors as matching columns.
pub fn hermitian_eigh(m: DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let n = m.nrows();
    let eig = nalgebra::SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Same as [`hermitian_eigh`] for real symmetric input.
pub fn symmetric_eigh(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = nalgebra::SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// `exp(-i H t)` for a dense Hermitian `H`.
pub fn dense_propagator(h: &DMatrix<C64>, t: f64) -> DMatrix<C64> {
    let (vals, vecs) = hermitian_eigh(h.clone());
    let n = vals.len();
    let phases = DMatrix::from_fn(n, n, |r, c| {
        if r == c {
            C64::from_polar(1.0, -vals[r] * t)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    &vecs * phases * vecs.adjoint()
}
