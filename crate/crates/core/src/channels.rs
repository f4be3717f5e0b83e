//! The single-qubit channel induced on the receiver, fidelity formulas and
//! two-qubit entanglement measures.

use nalgebra::{Matrix2, Matrix4};
use num_complex::Complex64 as C64;

use crate::dynamics::{
    initial_transfer_state, propagate, sender_amplitudes, step_count, tensor_with_channel, Ensemble,
    HamiltonianSchedule, StateVector,
};
use crate::error::{Error, Result};
use crate::linalg::hermitian_eigh;
use crate::noise::NoiseRealization;
use crate::spin_model::{bit_mask, ChainSpec};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Linear map on the receiver qubit given by its action on the operator basis:
/// `blocks[a][b] = ξ(|a⟩⟨b|)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelMap {
    pub blocks: [[Matrix2<C64>; 2]; 2],
}

impl ChannelMap {
    pub fn identity() -> Self {
        let e = |a: usize, b: usize| {
            let mut m = Matrix2::zeros();
            m[(a, b)] = ONE;
            m
        };
        Self {
            blocks: [[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]],
        }
    }

    /// `ξ(ρ) = I/2` for every input.
    pub fn depolarizing() -> Self {
        let half = Matrix2::identity() * C64::new(0.5, 0.0);
        Self {
            blocks: [[half, Matrix2::zeros()], [Matrix2::zeros(), half]],
        }
    }

    pub fn xi(&self, a: usize, b: usize) -> &Matrix2<C64> {
        &self.blocks[a][b]
    }

    /// Output for an arbitrary input operator.
    pub fn apply(&self, rho: &Matrix2<C64>) -> Matrix2<C64> {
        let mut out = Matrix2::zeros();
        for a in 0..2 {
            for b in 0..2 {
                out += self.blocks[a][b] * rho[(a, b)];
            }
        }
        out
    }

    /// Follows the channel by `R = diag(1, e^{-iγ})` on the receiver.
    pub fn rotate_receiver(&self, gamma: f64) -> Self {
        let r = Matrix2::new(ONE, ZERO, ZERO, C64::from_polar(1.0, -gamma));
        let rd = r.adjoint();
        let mut out = *self;
        for row in out.blocks.iter_mut() {
            for m in row.iter_mut() {
                *m = r * *m * rd;
            }
        }
        out
    }

    /// Weighted sum `Σ w_i ξ_i`.
    pub fn mix(maps: &[(f64, ChannelMap)]) -> Self {
        let mut out = ChannelMap {
            blocks: [[Matrix2::zeros(); 2]; 2],
        };
        for (w, m) in maps {
            for a in 0..2 {
                for b in 0..2 {
                    out.blocks[a][b] += m.blocks[a][b] * C64::new(*w, 0.0);
                }
            }
        }
        out
    }

    /// Checks the structural invariants of a channel to `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let herm = (self.blocks[0][1] - self.blocks[1][0].adjoint())
            .iter()
            .fold(0.0f64, |m, v| m.max(v.norm()));
        let mut min_eig = f64::INFINITY;
        for a in 0..2 {
            let d = &self.blocks[a][a];
            if (d.trace() - ONE).norm() > tol {
                return Err(Error::ChannelInconsistency {
                    min_eigenvalue: f64::NAN,
                });
            }
            min_eig =
                min_eig.min(hermitian_eigh(nalgebra::DMatrix::from_column_slice(2, 2, d.as_slice())).0[0]);
        }
        if herm > tol || min_eig < -tol || self.blocks[1][0].trace().norm() > 1.0 + tol {
            return Err(Error::ChannelInconsistency {
                min_eigenvalue: min_eig,
            });
        }
        Ok(())
    }
}

#[inline]
fn bit_at(s: usize, mask: usize) -> usize {
    usize::from(s & mask != 0)
}

#[inline]
fn with_bit(s: usize, mask: usize, v: usize) -> usize {
    if v == 1 {
        s | mask
    } else {
        s & !mask
    }
}

/// `Tr_rest |a⟩⟨b|` on the qubit at `position`.
pub fn reduced_cross(a: &StateVector, b: &StateVector, position: usize) -> Matrix2<C64> {
    let mask = bit_mask(a.n_sites(), position);
    let mut m = Matrix2::zeros();
    for (i, amp) in a.amps.iter().enumerate() {
        if *amp == ZERO {
            continue;
        }
        let s = a.basis.full_index(i);
        let r = bit_at(s, mask);
        for c in 0..2 {
            let other = b.amplitude(with_bit(s, mask, c));
            m[(r, c)] += amp * other.conj();
        }
    }
    m
}

/// Single-qubit marginal of a pure state.
pub fn reduced_qubit_state(state: &StateVector, position: usize) -> Matrix2<C64> {
    reduced_cross(state, state, position)
}

/// Single-qubit marginal of an ensemble.
pub fn reduced_ensemble_state(ens: &Ensemble, position: usize) -> Matrix2<C64> {
    ens.weights
        .iter()
        .zip(&ens.states)
        .map(|(p, s)| reduced_qubit_state(s, position) * C64::new(*p, 0.0))
        .sum()
}

/// Two-qubit marginal on positions `(p, q)`, index `2·bit_p + bit_q`.
pub fn reduced_pair_state(state: &StateVector, p: usize, q: usize) -> Matrix4<C64> {
    let n = state.n_sites();
    let (mp, mq) = (bit_mask(n, p), bit_mask(n, q));
    let mut m = Matrix4::zeros();
    for (i, amp) in state.amps.iter().enumerate() {
        if *amp == ZERO {
            continue;
        }
        let s = state.basis.full_index(i);
        let r = 2 * bit_at(s, mp) + bit_at(s, mq);
        for c in 0..4 {
            let t = with_bit(with_bit(s, mp, c >> 1), mq, c & 1);
            m[(r, c)] += amp * state.amplitude(t).conj();
        }
    }
    m
}

/// Channel read off from the images `φ_a = U(|a⟩ ⊗ ψ_ch)` of both sender basis
/// states: `ξ(|a⟩⟨b|) = Tr_rest |φ_a⟩⟨φ_b|`.
pub fn channel_from_pair(phi0: &StateVector, phi1: &StateVector, receiver: usize) -> ChannelMap {
    let phi = [phi0, phi1];
    let mut blocks = [[Matrix2::zeros(); 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            blocks[a][b] = reduced_cross(phi[a], phi[b], receiver);
        }
    }
    ChannelMap { blocks }
}

/// Channel from the outputs of the four inputs `|0⟩, |1⟩, |+⟩, |+i⟩` using linearity.
pub fn channel_from_four_outputs(
    out0: &Matrix2<C64>,
    out1: &Matrix2<C64>,
    out_plus: &Matrix2<C64>,
    out_plus_i: &Matrix2<C64>,
) -> ChannelMap {
    let i = C64::new(0.0, 1.0);
    let half_1pi = C64::new(0.5, 0.5);
    // |+⟩⟨+| + i|+i⟩⟨+i| = (1+i)/2 (|0⟩⟨0| + |1⟩⟨1|) + |0⟩⟨1|
    let xi01 = out_plus + out_plus_i * i - (out0 + out1) * half_1pi;
    ChannelMap {
        blocks: [[*out0, xi01], [xi01.adjoint(), *out1]],
    }
}

/// Evolves the four sender inputs through the same disorder realization and
/// reconstructs the channel at time `t` by linearity.
pub fn reconstruct_channel(
    spec: &ChainSpec,
    noise: &NoiseRealization,
    channel_state: &StateVector,
    t: f64,
    dt: f64,
) -> Result<ChannelMap> {
    let sched = HamiltonianSchedule::new(spec.clone(), noise.clone(), dt)?;
    let steps = if t == 0.0 { 0 } else { step_count(t, dt)? };
    let receiver = spec.register().receiver();
    let half = std::f64::consts::FRAC_PI_2;
    let inputs = [(0.0, 0.0), (std::f64::consts::PI, 0.0), (half, 0.0), (half, half)];
    let mut outs = Vec::with_capacity(4);
    for (theta, phi) in inputs {
        let psi = initial_transfer_state(spec, theta, phi, channel_state)?;
        let snaps = propagate(&psi, &sched, steps, steps.max(1))?;
        outs.push(reduced_qubit_state(snaps.last().unwrap(), receiver));
    }
    Ok(channel_from_four_outputs(&outs[0], &outs[1], &outs[2], &outs[3]))
}

/// Channel at every snapshot of the schedule for a (possibly mixed) channel
/// state, propagating `|0⟩ ⊗ e_i` and `|1⟩ ⊗ e_i` for each ensemble member.
pub fn channel_series(
    schedule: &HamiltonianSchedule,
    channel: &Ensemble,
    n_steps: usize,
    stride: usize,
) -> Result<Vec<ChannelMap>> {
    let spec = &schedule.spec;
    if spec.entangle_mode {
        return Err(Error::Configuration(
            "channel series are computed on the transfer register".into(),
        ));
    }
    let receiver = spec.register().receiver();
    let mut acc: Vec<ChannelMap> = Vec::new();
    for (p, member) in channel.weights.iter().zip(&channel.states) {
        let zero = tensor_with_channel(&[ONE, ZERO], 1, member);
        let one = tensor_with_channel(&[ZERO, ONE], 1, member);
        let a = propagate(&zero, schedule, n_steps, stride)?;
        let b = propagate(&one, schedule, n_steps, stride)?;
        if acc.is_empty() {
            acc = vec![ChannelMap::mix(&[]); a.len()];
        }
        for (k, (x, y)) in a.iter().zip(&b).enumerate() {
            let m = channel_from_pair(x, y, receiver);
            acc[k] = ChannelMap::mix(&[(1.0, acc[k]), (*p, m)]);
        }
    }
    Ok(acc)
}

/// `⟨ψ|ξ(|ψ⟩⟨ψ|)|ψ⟩` for the Bloch state `(θ, φ)`.
pub fn fidelity_theta_phi(ch: &ChannelMap, theta: f64, phi: f64) -> f64 {
    let psi = sender_amplitudes(theta, phi);
    let mut rho = Matrix2::zeros();
    for a in 0..2 {
        for b in 0..2 {
            rho[(a, b)] = psi[a] * psi[b].conj();
        }
    }
    let out = ch.apply(&rho);
    let mut f = ZERO;
    for a in 0..2 {
        for b in 0..2 {
            f += psi[a].conj() * out[(a, b)] * psi[b];
        }
    }
    f.re
}

/// Bloch-sphere average of [`fidelity_theta_phi`] in closed form.
pub fn average_fidelity(ch: &ChannelMap) -> f64 {
    let x = &ch.blocks;
    let diag = x[0][0][(0, 0)] + x[1][1][(1, 1)];
    let cross = x[0][0][(1, 1)] + x[1][1][(0, 0)];
    let coh = x[1][0][(1, 0)] + x[0][1][(0, 1)];
    (diag / 3.0 + cross / 6.0 + coh / 6.0).re
}

/// Ferromagnetic closed form `1/2 + |f|²/6 + |f| cos(γ − γ₀)/3`, `γ = arg f`.
pub fn fm_fidelity(f_n0: C64, gamma0: f64) -> f64 {
    let m = f_n0.norm();
    0.5 + m * m / 6.0 + m * (f_n0.arg() - gamma0).cos() / 3.0
}

/// `⟨1_N|U(t)|1_0⟩` in the single-excitation sector, with `U` generated by the
/// schedule on the transfer register.
pub fn transition_amplitude(spec: &ChainSpec, noise: &NoiseRealization, t: f64, dt: f64) -> Result<C64> {
    let sched = HamiltonianSchedule::new(spec.clone(), noise.clone(), dt)?;
    if !sched.conserves_sz() {
        return Err(Error::SymmetryViolation {
            max_commutator: noise
                .overhauser
                .fields
                .iter()
                .map(|b| b[0].hypot(b[1]))
                .fold(0.0, f64::max),
        });
    }
    let n = spec.n_sites();
    let reg = spec.register();
    let start = StateVector::basis_state(n, bit_mask(n, reg.position(0).unwrap()));
    let steps = if t == 0.0 { 0 } else { step_count(t, dt)? };
    let snaps = propagate(&start, &sched, steps, steps.max(1))?;
    Ok(snaps.last().unwrap().amplitude(bit_mask(n, reg.receiver())))
}

/// `⟨0|ξ(|0⟩⟨0|)|0⟩`, the average fidelity of a symmetric depolarizing channel.
pub fn afm_even_fidelity(ch: &ChannelMap) -> f64 {
    ch.blocks[0][0][(0, 0)].re
}

/// Largest deviation of `F(θ, φ)` from `F(0, 0)` over a fixed grid of inputs;
/// zero for a symmetric depolarizing channel.
pub fn depolarizing_spread(ch: &ChannelMap) -> f64 {
    let f0 = fidelity_theta_phi(ch, 0.0, 0.0);
    let grid = [
        (std::f64::consts::PI, 0.0),
        (0.5, 0.0),
        (1.0, 1.0),
        (1.5, 2.0),
        (2.0, 3.0),
        (2.5, 4.0),
        (0.3, 5.0),
        (1.2, 6.0),
        (std::f64::consts::FRAC_PI_2, 0.0),
        (std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2),
    ];
    grid.iter()
        .map(|&(t, p)| (fidelity_theta_phi(ch, t, p) - f0).abs())
        .fold(0.0, f64::max)
}

/// Output state of `(0′, N)` when the sender starts in a singlet with `0′`,
/// `ρ = ½[|0⟩⟨0|⊗ξ(|1⟩⟨1|) + |1⟩⟨1|⊗ξ(|0⟩⟨0|) − |0⟩⟨1|⊗ξ(|1⟩⟨0|) − |1⟩⟨0|⊗ξ(|0⟩⟨1|)]`.
pub fn entangled_output(ch: &ChannelMap) -> Result<Matrix4<C64>> {
    let rho = assemble_entangled(ch);
    let min = min_eigenvalue4(&rho);
    if min < -1e-8 {
        return Err(Error::ChannelInconsistency { min_eigenvalue: min });
    }
    Ok(rho)
}

fn assemble_entangled(ch: &ChannelMap) -> Matrix4<C64> {
    let x = &ch.blocks;
    let half = C64::new(0.5, 0.0);
    let parts = [
        [x[1][1] * half, -x[1][0] * half],
        [-x[0][1] * half, x[0][0] * half],
    ];
    let mut rho = Matrix4::zeros();
    for a in 0..2 {
        for b in 0..2 {
            rho.fixed_view_mut::<2, 2>(2 * a, 2 * b).copy_from(&parts[a][b]);
        }
    }
    rho
}

/// Inverse of [`entangled_output`]: the channel encoded in `ρ_{0′N}`.
pub fn channel_from_entangled(rho: &Matrix4<C64>) -> ChannelMap {
    let block = |a: usize, b: usize| -> Matrix2<C64> { rho.fixed_view::<2, 2>(2 * a, 2 * b).into_owned() };
    let two = C64::new(2.0, 0.0);
    ChannelMap {
        blocks: [
            [block(1, 1) * two, -block(1, 0) * two],
            [-block(0, 1) * two, block(0, 0) * two],
        ],
    }
}

fn to_dmatrix4(m: &Matrix4<C64>) -> nalgebra::DMatrix<C64> {
    nalgebra::DMatrix::from_column_slice(4, 4, m.as_slice())
}

fn min_eigenvalue4(m: &Matrix4<C64>) -> f64 {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    hermitian_eigh(to_dmatrix4(&h)).0[0]
}

/// Wootters concurrence.
pub fn concurrence(rho: &Matrix4<C64>) -> f64 {
    let h = (rho + rho.adjoint()) * C64::new(0.5, 0.0);
    let (vals, vecs) = hermitian_eigh(to_dmatrix4(&h));
    let mut sqrt_rho = nalgebra::DMatrix::<C64>::zeros(4, 4);
    for (k, &v) in vals.iter().enumerate() {
        let col = vecs.column(k);
        sqrt_rho += &col * col.adjoint() * C64::new(v.max(0.0).sqrt(), 0.0);
    }
    // σ_y ⊗ σ_y
    let mut yy = nalgebra::DMatrix::<C64>::zeros(4, 4);
    yy[(0, 3)] = -ONE;
    yy[(1, 2)] = ONE;
    yy[(2, 1)] = ONE;
    yy[(3, 0)] = -ONE;
    let conj = to_dmatrix4(&h).map(|z| z.conj());
    let tilde = &yy * conj * &yy;
    let r = &sqrt_rho * tilde * &sqrt_rho;
    let r = (&r + r.adjoint()) * C64::new(0.5, 0.0);
    let mut lam: Vec<f64> = hermitian_eigh(r)
        .0
        .into_iter()
        .map(|v| v.max(0.0).sqrt())
        .collect();
    lam.sort_by(|a, b| b.total_cmp(a));
    (lam[0] - lam[1] - lam[2] - lam[3]).max(0.0)
}

fn singlet() -> [C64; 4] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [ZERO, C64::new(s, 0.0), C64::new(-s, 0.0), ZERO]
}

/// `p |ψ⁻⟩⟨ψ⁻| + (1 − p) I/4`.
pub fn werner_state(p: f64) -> Matrix4<C64> {
    let s = singlet();
    Matrix4::from_fn(|r, c| {
        let id = if r == c { 0.25 } else { 0.0 };
        s[r] * s[c].conj() * p + C64::new((1.0 - p) * id, 0.0)
    })
}

/// Least-squares Werner weight of `rho` and the largest element-wise distance
/// to that Werner state.
pub fn werner_fit(rho: &Matrix4<C64>) -> (f64, f64) {
    // W(p) = I/4 + p D with D = |ψ⁻⟩⟨ψ⁻| − I/4 and Tr D² = 3/4.
    let d = werner_state(1.0) - Matrix4::identity() * C64::new(0.25, 0.0);
    let shifted = rho - Matrix4::identity() * C64::new(0.25, 0.0);
    let p = (shifted.adjoint() * d).trace().re / 0.75;
    let dev = (rho - werner_state(p))
        .iter()
        .fold(0.0f64, |m, v| m.max(v.norm()));
    (p, dev)
}

pub fn werner_deviation(rho: &Matrix4<C64>) -> f64 {
    werner_fit(rho).1
}

/// Trace distance `½‖a − b‖₁` between Hermitian matrices.
pub fn trace_distance(a: &Matrix4<C64>, b: &Matrix4<C64>) -> f64 {
    let d = a - b;
    let h = (d + d.adjoint()) * C64::new(0.5, 0.0);
    0.5 * hermitian_eigh(to_dmatrix4(&h))
        .0
        .iter()
        .map(|v| v.abs())
        .sum::<f64>()
}

/// Figures of merit of one channel, with the entangled output they came from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransferMetrics {
    pub f_av: f64,
    pub concurrence: f64,
    pub werner_deviation: f64,
    pub rho: Matrix4<C64>,
}

impl TransferMetrics {
    pub fn of(ch: &ChannelMap) -> Self {
        let rho = assemble_entangled(ch);
        Self::with_fidelity(average_fidelity(ch), rho)
    }

    pub fn with_fidelity(f_av: f64, rho: Matrix4<C64>) -> Self {
        Self {
            f_av,
            concurrence: concurrence(&rho),
            werner_deviation: werner_deviation(&rho),
            rho,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::channel_state;
    use crate::linalg::norm;
    use crate::spin_model::{Basis, Phase};
    use rand::{Rng, SeedableRng};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_state(n: usize, seed: u64) -> StateVector {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut v: Vec<C64> = (0..1 << n)
            .map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let nv = norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        StateVector::new(Basis::full(n), v).unwrap()
    }

    /// A random channel `ξ(ρ) = Σ_k K_k ρ K_k†` with two normalized Kraus operators.
    fn random_channel(seed: u64) -> ChannelMap {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut g = || Matrix2::from_fn(|_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let (a, b) = (g(), g());
        let s = a.adjoint() * a + b.adjoint() * b;
        let (vals, vecs) = hermitian_eigh(nalgebra::DMatrix::from_column_slice(2, 2, s.as_slice()));
        let vecs = Matrix2::from_column_slice(vecs.as_slice());
        let inv_sqrt = vecs
            * Matrix2::new(c(vals[0].powf(-0.5), 0.0), ZERO, ZERO, c(vals[1].powf(-0.5), 0.0))
            * vecs.adjoint();
        let (ka, kb) = (a * inv_sqrt, b * inv_sqrt);
        let mut blocks = [[Matrix2::zeros(); 2]; 2];
        for x in 0..2 {
            for y in 0..2 {
                let mut e = Matrix2::zeros();
                e[(x, y)] = ONE;
                blocks[x][y] = ka * e * ka.adjoint() + kb * e * kb.adjoint();
            }
        }
        ChannelMap { blocks }
    }

    #[test]
    fn product_marginal() {
        let spec = ChainSpec::new(2, Phase::Antiferro);
        let ch = channel_state(&spec, None).unwrap();
        let psi = initial_transfer_state(&spec, 1.1, 0.4, &ch).unwrap();
        let r = reduced_qubit_state(&psi, 0);
        let a = sender_amplitudes(1.1, 0.4);
        for i in 0..2 {
            for j in 0..2 {
                assert!((r[(i, j)] - a[i] * a[j].conj()).norm() < 1e-14);
            }
        }
        for pos in 1..3 {
            let m = reduced_qubit_state(&psi, pos);
            assert!((m - Matrix2::identity() * c(0.5, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn marginal_matches_index_summation() {
        let psi = random_state(4, 8);
        let got = reduced_qubit_state(&psi, 2);
        let mut want = Matrix2::zeros();
        for s in 0..16usize {
            for t in 0..16usize {
                // same bits off position 2 (mask 0b0010)
                if (s & !0b0010) == (t & !0b0010) {
                    want[((s >> 1) & 1, (t >> 1) & 1)] += psi.amps[s] * psi.amps[t].conj();
                }
            }
        }
        assert!((got - want).norm() < 1e-12);
    }

    #[test]
    fn fidelity_of_reference_channels() {
        let id = ChannelMap::identity();
        let dep = ChannelMap::depolarizing();
        for &(t, p) in &[(0.0, 0.0), (1.0, 2.0), (3.0, 5.5)] {
            assert!((fidelity_theta_phi(&id, t, p) - 1.0).abs() < 1e-14);
            assert!((fidelity_theta_phi(&dep, t, p) - 0.5).abs() < 1e-14);
        }
        assert!((average_fidelity(&id) - 1.0).abs() < 1e-15);
        assert!((average_fidelity(&dep) - 0.5).abs() < 1e-15);
        assert!((afm_even_fidelity(&id) - 1.0).abs() < 1e-15);
        assert!((afm_even_fidelity(&dep) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn fidelity_by_linearity() {
        let ch = random_channel(4);
        ch.validate(1e-12).unwrap();
        for &(t, p) in &[(0.3, 0.1), (1.7, 4.0), (2.9, 2.2)] {
            let psi = sender_amplitudes(t, p);
            // ξ applied to the density matrix built from its elements
            let mut out = Matrix2::zeros();
            for a in 0..2 {
                for b in 0..2 {
                    out += ch.blocks[a][b] * (psi[a] * psi[b].conj());
                }
            }
            let v = nalgebra::Vector2::new(psi[0], psi[1]);
            let direct = (v.adjoint() * out * v)[(0, 0)].re;
            assert!((fidelity_theta_phi(&ch, t, p) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn average_equals_quadrature_over_sphere() {
        // Gauss-Legendre in cos θ times uniform φ integrates the degree-2
        // polynomial integrand exactly.
        let ch = random_channel(17);
        let nodes = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
        let weights = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
        let mut acc = 0.0;
        for (x, w) in nodes.iter().zip(&weights) {
            let theta = f64::acos(*x);
            let n_phi = 8;
            for j in 0..n_phi {
                let phi = 2.0 * std::f64::consts::PI * j as f64 / n_phi as f64;
                acc += w / 2.0 * fidelity_theta_phi(&ch, theta, phi) / n_phi as f64;
            }
        }
        assert!((acc - average_fidelity(&ch)).abs() < 1e-12);
    }

    #[test]
    fn fm_closed_form() {
        assert!((fm_fidelity(ZERO, 0.3) - 0.5).abs() < 1e-15);
        assert!((fm_fidelity(C64::from_polar(1.0, 0.7), 0.7) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn four_input_route_matches_pair_route() {
        let spec = ChainSpec::new(3, Phase::Antiferro);
        let fields: Vec<[f64; 3]> = vec![
            [0.1, -0.05, 0.02],
            [0.0, 0.07, -0.03],
            [0.04, 0.0, 0.1],
            [-0.06, 0.02, 0.0],
        ];
        let noise = NoiseRealization {
            overhauser: crate::noise::OverhauserDraw {
                fields: fields.clone(),
                b_nuc: 0.1,
            },
            couplings: crate::noise::CouplingTrajectory::zero(3, 0.05),
            seed: 0,
            realization_index: 0,
        };
        let ch = channel_state(&spec, Some(&fields)).unwrap();
        let four = reconstruct_channel(&spec, &noise, &ch, 2.5, 0.05).unwrap();
        let sched = HamiltonianSchedule::new(spec.clone(), noise, 0.05).unwrap();
        let series = channel_series(&sched, &Ensemble::pure(ch), 50, 50).unwrap();
        let pair = series.last().unwrap();
        for a in 0..2 {
            for b in 0..2 {
                assert!((four.blocks[a][b] - pair.blocks[a][b]).norm() < 1e-10);
            }
        }
        four.validate(1e-10).unwrap();
    }

    #[test]
    fn initial_channel_forgets_input() {
        let spec = ChainSpec::new(2, Phase::Antiferro);
        let ch = channel_state(&spec, None).unwrap();
        let noise = NoiseRealization::noiseless(3, 2, 0.05);
        let m = reconstruct_channel(&spec, &noise, &ch, 0.0, 0.05).unwrap();
        let half = Matrix2::identity() * c(0.5, 0.0);
        assert!((m.blocks[0][0] - half).norm() < 1e-14);
        assert!((m.blocks[1][1] - half).norm() < 1e-14);
        assert!(m.blocks[1][0].norm() < 1e-14);
    }

    #[test]
    fn two_spin_swap_is_identity_up_to_phase() {
        let spec = ChainSpec::new(1, Phase::Antiferro);
        let noise = NoiseRealization::noiseless(2, 1, std::f64::consts::PI / 100.0);
        let ch = channel_state(&spec, None).unwrap();
        let dt = std::f64::consts::PI / 100.0;
        let m = reconstruct_channel(&spec, &noise, &ch, std::f64::consts::PI, dt).unwrap();
        assert!((m.blocks[0][0][(0, 0)] - ONE).norm() < 1e-10);
        assert!((m.blocks[1][1][(1, 1)] - ONE).norm() < 1e-10);
        // Coherence carried with a unit-modulus phase.
        assert!((m.blocks[1][0][(1, 0)].norm() - 1.0).abs() < 1e-10);
        let g = m.blocks[1][0][(1, 0)].arg();
        assert!((average_fidelity(&m.rotate_receiver(g)) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn fm_vacuum_is_stationary() {
        let spec = ChainSpec::new(4, Phase::Ferro);
        let noise = NoiseRealization::noiseless(5, 4, 0.05);
        let ch = channel_state(&spec, None).unwrap();
        let m = reconstruct_channel(&spec, &noise, &ch, 3.0, 0.05).unwrap();
        let mut want = Matrix2::zeros();
        want[(0, 0)] = ONE;
        assert!((m.blocks[0][0] - want).norm() < 1e-12);
    }

    #[test]
    fn transition_amplitude_two_spins() {
        let spec = ChainSpec::new(1, Phase::Antiferro);
        let noise = NoiseRealization::noiseless(2, 1, 0.05);
        assert_eq!(transition_amplitude(&spec, &noise, 0.0, 0.05).unwrap(), ZERO);
        for k in 1..40 {
            let t = k as f64 * 0.25;
            let f = transition_amplitude(&spec, &noise, t, 0.05).unwrap();
            assert!((f.norm() - (0.5 * t).sin().abs()).abs() < 1e-10);
        }
        let mut hyper = noise.clone();
        hyper.overhauser.fields[1] = [0.1, 0.0, 0.0];
        assert!(matches!(
            transition_amplitude(&spec, &hyper, 1.0, 0.05),
            Err(Error::SymmetryViolation { .. })
        ));
    }

    #[test]
    fn entangled_output_of_reference_channels() {
        let rho = entangled_output(&ChannelMap::identity()).unwrap();
        let s = singlet();
        let proj = Matrix4::from_fn(|r, c| s[r] * s[c].conj());
        assert!((rho - proj).norm() < 1e-15);
        let rho = entangled_output(&ChannelMap::depolarizing()).unwrap();
        assert!((rho - Matrix4::identity() * c(0.25, 0.0)).norm() < 1e-15);

        let ch = random_channel(3);
        let back = channel_from_entangled(&entangled_output(&ch).unwrap());
        for a in 0..2 {
            for b in 0..2 {
                assert!((back.blocks[a][b] - ch.blocks[a][b]).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn concurrence_reference_values() {
        assert!((concurrence(&werner_state(1.0)) - 1.0).abs() < 1e-7);
        let mut prod = Matrix4::zeros();
        prod[(1, 1)] = ONE;
        assert!(concurrence(&prod) < 1e-7);
        // product of two random pure qubits
        let a = nalgebra::Vector2::new(c(0.6, 0.0), c(0.0, 0.8));
        let b = nalgebra::Vector2::new(c(0.28, 0.96), c(0.0, 0.0)).normalize();
        let v = a.kronecker(&b);
        assert!(concurrence(&(v * v.adjoint())) < 1e-7);
        for &p in &[0.1, 0.3, 0.5, 0.8, 0.95] {
            let want = (1.5 * p - 0.5f64).max(0.0);
            assert!((concurrence(&werner_state(p)) - want).abs() < 1e-7, "p = {p}");
        }
    }

    #[test]
    fn werner_deviation_values() {
        for &p in &[0.0, 0.4, 1.0] {
            assert!(werner_deviation(&werner_state(p)) < 1e-15);
        }
        // |00⟩⟨00|: Tr[(ρ − I/4) D] = ⟨00|D|00⟩ = −1/4, so p = −1/3 and
        // W(−1/3)_{00,00} = 1/4 + 1/12; the largest gap is 1 − 1/3.
        let mut up = Matrix4::zeros();
        up[(0, 0)] = ONE;
        let (p, dev) = werner_fit(&up);
        assert!((p + 1.0 / 3.0).abs() < 1e-15);
        assert!((dev - 2.0 / 3.0).abs() < 1e-15);
    }
}
