use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};

use super::{axpy, dot, hermitian_eigh, norm, scale, symmetric_eigh, LinearOperator, SparseOperator};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct LanczosOptions {
    /// Residual target `‖H x − λ x‖` relative to `max(1, |λ|)`.
    pub tol: f64,
    pub max_basis: usize,
    pub max_restarts: usize,
    /// Below this dimension the operator is diagonalized densely.
    pub dense_below: usize,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_basis: 150,
            max_restarts: 20,
            dense_below: 96,
        }
    }
}

fn residual_norm(op: &SparseOperator, x: &[C64], lambda: f64) -> f64 {
    let mut hx = vec![C64::new(0.0, 0.0); x.len()];
    op.apply(x, &mut hx);
    axpy(C64::new(-lambda, 0.0), x, &mut hx);
    norm(&hx)
}

/// Lowest eigenpair of a Hermitian operator. The returned vector is normalized;
/// its global phase is left to the caller.
pub fn lowest_eigenpair(op: &SparseOperator, opts: LanczosOptions) -> Result<(f64, Vec<C64>)> {
    let dim = op.dim();
    if dim == 0 {
        return Err(Error::DimensionMismatch { expected: 1, got: 0 });
    }
    if dim < opts.dense_below {
        let (vals, vecs) = hermitian_eigh(op.to_dense());
        let x: Vec<C64> = vecs.column(0).iter().copied().collect();
        return Ok((vals[0], x));
    }

    // Deterministic start vector with no special symmetry.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed_1a2c_2050);
    let mut start: Vec<C64> = (0..dim)
        .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    let n0 = norm(&start);
    scale(1.0 / n0, &mut start);

    let m_max = opts.max_basis.min(dim);
    let mut best_residual = f64::INFINITY;
    let mut w = vec![C64::new(0.0, 0.0); dim];
    for _cycle in 0..=opts.max_restarts {
        let mut basis: Vec<Vec<C64>> = vec![start.clone()];
        let mut alpha: Vec<f64> = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let mut ritz: Option<(f64, Vec<f64>)> = None;
        for j in 0..m_max {
            op.apply(&basis[j], &mut w);
            alpha.push(dot(&basis[j], &w).re);
            for _ in 0..2 {
                for q in &basis {
                    let p = dot(q, &w);
                    axpy(-p, q, &mut w);
                }
            }
            let b = norm(&w);
            beta.push(b);
            let m = alpha.len();
            let last = j + 1 == m_max || b < 1e-14;
            if m % 10 == 0 || last {
                let t = DMatrix::from_fn(m, m, |r, c| {
                    if r == c {
                        alpha[r]
                    } else if r + 1 == c {
                        beta[r]
                    } else if c + 1 == r {
                        beta[c]
                    } else {
                        0.0
                    }
                });
                let (vals, vecs) = symmetric_eigh(t);
                let s: Vec<f64> = vecs.column(0).iter().copied().collect();
                let est = b * s[m - 1].abs();
                ritz = Some((vals[0], s));
                if est < 0.1 * opts.tol * vals[0].abs().max(1.0) || last {
                    break;
                }
            }
            let mut q = w.clone();
            scale(1.0 / b, &mut q);
            basis.push(q);
        }
        let (lambda, s) = ritz.expect("at least one Ritz pair");
        let mut x = vec![C64::new(0.0, 0.0); dim];
        for (q, &c) in basis.iter().zip(&s) {
            axpy(C64::new(c, 0.0), q, &mut x);
        }
        let nx = norm(&x);
        scale(1.0 / nx, &mut x);
        let res = residual_norm(op, &x, lambda);
        best_residual = best_residual.min(res);
        if res < opts.tol * lambda.abs().max(1.0) {
            return Ok((lambda, x));
        }
        start = x;
    }
    Err(Error::NoConvergence {
        what: "Lanczos ground state",
        iterations: m_max * (opts.max_restarts + 1),
        residual: best_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_laplacian_lowest_mode() {
        // -2 on the diagonal, 1 off it: λ_min = -2 - 2 cos(π/(n+1)).
        let n = 300;
        let mut t = Vec::new();
        for i in 0..n as u32 {
            t.push((i, i, C64::new(-2.0, 0.0)));
            if i + 1 < n as u32 {
                t.push((i, i + 1, C64::new(1.0, 0.0)));
                t.push((i + 1, i, C64::new(1.0, 0.0)));
            }
        }
        let op = SparseOperator::from_triplets(n, t);
        let (lambda, x) = lowest_eigenpair(&op, LanczosOptions::default()).unwrap();
        let exact = -2.0 - 2.0 * (std::f64::consts::PI / (n as f64 + 1.0)).cos();
        assert!((lambda - exact).abs() < 1e-9);
        assert!(residual_norm(&op, &x, lambda) < 1e-9);
    }
}
