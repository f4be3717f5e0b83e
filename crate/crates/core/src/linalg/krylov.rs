use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use super::{axpy, dot, norm, scale, symmetric_eigh, LinearOperator};
use crate::error::{Error, Result};

/// Controls for the Lanczos approximation of `exp(-i H t) v`.
#[derive(Clone, Copy, Debug)]
pub struct KrylovOptions {
    /// Absolute error target per advanced chunk, relative to `‖v‖`.
    pub tol: f64,
    /// Largest Krylov subspace built before the step is shortened.
    pub max_dim: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_dim: 40,
        }
    }
}

struct KrylovSpace {
    basis: Vec<Vec<C64>>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    norm0: f64,
    exhausted: bool,
}

struct TridiagEigen {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
    residual: f64,
}

impl KrylovSpace {
    fn new(v: &[C64]) -> Self {
        let norm0 = norm(v);
        let mut q = v.to_vec();
        if norm0 > 0.0 {
            scale(1.0 / norm0, &mut q);
        }
        Self {
            basis: vec![q],
            alpha: Vec::new(),
            beta: Vec::new(),
            norm0,
            exhausted: norm0 == 0.0,
        }
    }

    fn len(&self) -> usize {
        self.alpha.len()
    }

    /// Adds one Lanczos vector with full reorthogonalization.
    fn extend<O: LinearOperator>(&mut self, op: &O, scratch: &mut Vec<C64>) {
        let j = self.alpha.len();
        let dim = op.dim();
        scratch.resize(dim, C64::new(0.0, 0.0));
        op.apply(&self.basis[j], scratch);
        let a = dot(&self.basis[j], scratch).re;
        self.alpha.push(a);
        // Two Gram-Schmidt passes keep the basis orthogonal to machine precision.
        for _ in 0..2 {
            for q in &self.basis {
                let p = dot(q, scratch);
                axpy(-p, q, scratch);
            }
        }
        let b = norm(scratch);
        let scale_ref = self.alpha.iter().fold(1.0f64, |m, a| m.max(a.abs()));
        self.beta.push(b);
        if b <= 1e-13 * scale_ref || j + 1 >= dim {
            self.exhausted = true;
        } else {
            let mut q = scratch.clone();
            scale(1.0 / b, &mut q);
            self.basis.push(q);
        }
    }

    fn eigen(&self) -> TridiagEigen {
        let m = self.len();
        let t = DMatrix::from_fn(m, m, |r, c| {
            if r == c {
                self.alpha[r]
            } else if r + 1 == c {
                self.beta[r]
            } else if c + 1 == r {
                self.beta[c]
            } else {
                0.0
            }
        });
        let (values, vectors) = symmetric_eigh(t);
        let residual = if self.exhausted { 0.0 } else { self.beta[m - 1] };
        TridiagEigen {
            values,
            vectors,
            residual,
        }
    }
}

impl TridiagEigen {
    /// Coefficients of `exp(-i T t) e_1` in the Krylov basis.
    fn coefficients(&self, t: f64) -> Vec<C64> {
        let m = self.values.len();
        let w: Vec<C64> = (0..m)
            .map(|k| C64::from_polar(self.vectors[(0, k)], -self.values[k] * t))
            .collect();
        (0..m)
            .map(|r| (0..m).map(|k| w[k] * self.vectors[(r, k)]).sum())
            .collect()
    }

    fn error(&self, t: f64) -> f64 {
        if self.residual == 0.0 {
            return 0.0;
        }
        let c = self.coefficients(t);
        self.residual * c[c.len() - 1].norm()
    }
}

fn combine(space: &KrylovSpace, coeffs: &[C64], out: &mut [C64]) {
    out.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
    for (q, &c) in space.basis.iter().zip(coeffs) {
        axpy(c * space.norm0, q, out);
    }
}

/// Propagates `v` under `exp(-i H t)` and hands the state at each requested time
/// (ascending, non-negative) to `emit`. Returns the state at the last time.
///
/// Chunks are as long as a single Krylov space of at most `max_dim` vectors can
/// cover within tolerance, so a constant Hamiltonian with many snapshots costs
/// a few subspace builds rather than one per snapshot.
pub fn evolve_snapshots<O: LinearOperator>(
    op: &O,
    v: &[C64],
    times: &[f64],
    opts: KrylovOptions,
    mut emit: impl FnMut(usize, &[C64]),
) -> Result<Vec<C64>> {
    if v.len() != op.dim() {
        return Err(Error::DimensionMismatch {
            expected: op.dim(),
            got: v.len(),
        });
    }
    let mut current = v.to_vec();
    let mut t_cur = 0.0;
    let mut next = 0;
    let mut scratch = Vec::new();
    let mut out = vec![C64::new(0.0, 0.0); v.len()];
    let t_end = match times.last() {
        Some(&t) => t,
        None => return Ok(current),
    };
    let eps = 1e-12 * t_end.abs().max(1.0);
    while next < times.len() && times[next] <= t_cur + eps {
        emit(next, &current);
        next += 1;
    }
    let mut stalls = 0;
    while next < times.len() {
        let remaining = t_end - t_cur;
        let mut space = KrylovSpace::new(&current);
        if space.exhausted {
            // Zero vector stays zero.
            while next < times.len() {
                emit(next, &current);
                next += 1;
            }
            break;
        }
        let tol = opts.tol;
        let mut eig = None;
        let mut check_at = 4usize;
        while !space.exhausted && space.len() < opts.max_dim {
            space.extend(op, &mut scratch);
            if space.exhausted || space.len() >= check_at || space.len() >= opts.max_dim {
                let e = space.eigen();
                if e.error(remaining) <= tol {
                    eig = Some(e);
                    break;
                }
                check_at = space.len() + 3;
            }
        }
        let eig = eig.unwrap_or_else(|| space.eigen());
        let mut tau = remaining;
        if eig.error(tau) > tol {
            let mut guard = 0;
            while eig.error(tau) > tol {
                tau *= 0.5;
                guard += 1;
                if guard > 60 {
                    return Err(Error::NoConvergence {
                        what: "Krylov exponential",
                        iterations: space.len(),
                        residual: eig.error(tau),
                    });
                }
            }
            // Grow back toward the largest admissible step.
            let (mut lo, mut hi) = (tau, (2.0 * tau).min(remaining));
            for _ in 0..8 {
                let mid = 0.5 * (lo + hi);
                if eig.error(mid) <= tol {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            tau = lo;
        }
        if tau <= eps {
            stalls += 1;
            if stalls > 4 {
                return Err(Error::NoConvergence {
                    what: "Krylov exponential",
                    iterations: space.len(),
                    residual: eig.error(tau),
                });
            }
        }
        while next < times.len() && times[next] <= t_cur + tau + eps {
            let c = eig.coefficients(times[next] - t_cur);
            combine(&space, &c, &mut out);
            emit(next, &out);
            next += 1;
        }
        let c = eig.coefficients(tau);
        combine(&space, &c, &mut current);
        if current.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
            return Err(Error::NonFinite { t: t_cur + tau });
        }
        t_cur += tau;
    }
    Ok(current)
}

/// `exp(-i H t) v`.
pub fn expm_multiply<O: LinearOperator>(op: &O, v: &[C64], t: f64, opts: KrylovOptions) -> Result<Vec<C64>> {
    evolve_snapshots(op, v, &[t], opts, |_, _| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dense_propagator, SparseOperator};
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};

    fn random_hermitian(n: usize, seed: u64) -> nalgebra::DMatrix<C64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = nalgebra::DMatrix::from_fn(n, n, |_, _| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        (&a + a.adjoint()) * C64::new(0.5, 0.0)
    }

    #[test]
    fn zero_time_is_identity() {
        let h = SparseOperator::from_dense(&random_hermitian(8, 1));
        let v: Vec<C64> = (0..8).map(|i| C64::new(i as f64, 1.0)).collect();
        let out = expm_multiply(&h, &v, 0.0, KrylovOptions::default()).unwrap();
        assert_eq!(out, v);
    }

    #[test]
    fn pauli_z_phases() {
        // h = Z/2 with |0> = down: diag(-1/2, +1/2) in the |0>,|1> basis.
        let h =
            SparseOperator::from_triplets(2, vec![(0, 0, C64::new(-0.5, 0.0)), (1, 1, C64::new(0.5, 0.0))]);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let v = vec![C64::new(s, 0.0), C64::new(s, 0.0)];
        let out = expm_multiply(&h, &v, std::f64::consts::PI, KrylovOptions::default()).unwrap();
        let e0 = C64::from_polar(s, std::f64::consts::FRAC_PI_2);
        let e1 = C64::from_polar(s, -std::f64::consts::FRAC_PI_2);
        assert!((out[0] - e0).norm() < 1e-12);
        assert!((out[1] - e1).norm() < 1e-12);
    }

    #[test]
    fn six_qubit_random_against_dense() {
        let hd = random_hermitian(64, 7) * C64::new(3.0, 0.0);
        let h = SparseOperator::from_dense(&hd);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let v: Vec<C64> = (0..64)
            .map(|_| C64::new(rng.random::<f64>(), rng.random::<f64>()))
            .collect();
        let nv = norm(&v);
        let v: Vec<C64> = v.iter().map(|x| x / nv).collect();
        for &t in &[0.3, 2.0, 11.0] {
            let exact = dense_propagator(&hd, t) * DVector::from_vec(v.clone());
            let out = expm_multiply(&h, &v, t, KrylovOptions::default()).unwrap();
            let diff: f64 = out
                .iter()
                .zip(exact.iter())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(diff < 1e-9, "t = {t}: diff {diff}");
        }
    }

    #[test]
    fn snapshots_are_emitted_in_order() {
        let hd = random_hermitian(32, 11);
        let h = SparseOperator::from_dense(&hd);
        let v: Vec<C64> = (0..32).map(|i| C64::new((i % 3) as f64, 0.0)).collect();
        let times: Vec<f64> = (0..40).map(|i| i as f64 * 0.25).collect();
        let mut seen = Vec::new();
        evolve_snapshots(&h, &v, &times, KrylovOptions::default(), |i, s| {
            let exact = dense_propagator(&hd, times[i]) * DVector::from_vec(v.clone());
            let diff: f64 = s
                .iter()
                .zip(exact.iter())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(diff < 1e-9);
            seen.push(i);
        })
        .unwrap();
        assert_eq!(seen, (0..40).collect::<Vec<_>>());
    }
}
