//! Initial states and time-ordered propagation under piecewise-constant Hamiltonians.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{
    evolve_snapshots, expm_multiply, hermitian_eigh, lowest_eigenpair, KrylovOptions, LanczosOptions,
    LinearOperator, ParametricOperator, SparseOperator,
};
use crate::noise::NoiseRealization;
use crate::optctrl::PulseSchedule;
use crate::spin_model::{
    channel_terms, field_terms, link_couplings, link_terms, project_to_sector, total_sz_diagonal,
    total_sz_on, Basis, ChainSpec, Phase, SectorBasis,
};

/// Pure state on the full product basis or an excitation sector.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    pub basis: Basis,
    pub amps: Vec<C64>,
}

impl StateVector {
    pub fn new(basis: Basis, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != basis.dim() {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                got: amps.len(),
            });
        }
        Ok(Self { basis, amps })
    }

    /// Product basis state with the given bit pattern, stored in its sector.
    pub fn basis_state(n_sites: usize, bits: usize) -> Self {
        let basis = Basis::sector(n_sites, bits.count_ones() as usize).expect("valid sector");
        let mut amps = vec![C64::new(0.0, 0.0); basis.dim()];
        amps[basis.index_of(bits).expect("state in its own sector")] = C64::new(1.0, 0.0);
        Self { basis, amps }
    }

    pub fn n_sites(&self) -> usize {
        self.basis.n_sites()
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Amplitude of full-basis state `full`.
    pub fn amplitude(&self, full: usize) -> C64 {
        self.basis
            .index_of(full)
            .map_or(C64::new(0.0, 0.0), |i| self.amps[i])
    }

    pub fn to_full(&self) -> StateVector {
        let n = self.n_sites();
        if !self.basis.is_sector() {
            return self.clone();
        }
        let mut amps = vec![C64::new(0.0, 0.0); 1 << n];
        for (i, a) in self.amps.iter().enumerate() {
            amps[self.basis.full_index(i)] = *a;
        }
        StateVector {
            basis: Basis::full(n),
            amps,
        }
    }

    /// Restricts to a sector when all weight sits at one magnetization.
    pub fn to_sector(&self) -> Option<StateVector> {
        if self.basis.is_sector() {
            return Some(self.clone());
        }
        let n = self.n_sites();
        let mut k: Option<u32> = None;
        for (s, a) in self.amps.iter().enumerate() {
            if a.norm_sqr() > 0.0 {
                let c = s.count_ones();
                match k {
                    None => k = Some(c),
                    Some(x) if x != c => return None,
                    _ => {}
                }
            }
        }
        let basis = Basis::sector(n, k.unwrap_or(0) as usize).ok()?;
        let amps = (0..basis.dim()).map(|i| self.amps[basis.full_index(i)]).collect();
        Some(StateVector { basis, amps })
    }

    /// `⟨self|other⟩`, comparing amplitudes of equal full-basis states.
    pub fn overlap(&self, other: &StateVector) -> C64 {
        (0..self.basis.dim())
            .map(|i| self.amps[i].conj() * other.amplitude(self.basis.full_index(i)))
            .sum()
    }

    /// `⟨ψ|A|ψ⟩` with `A` given on this state's basis.
    pub fn expectation(&self, op: &SparseOperator) -> Result<C64> {
        if op.dim() != self.amps.len() {
            return Err(Error::DimensionMismatch {
                expected: self.amps.len(),
                got: op.dim(),
            });
        }
        let mut y = vec![C64::new(0.0, 0.0); op.dim()];
        op.apply(&self.amps, &mut y);
        Ok(self.amps.iter().zip(&y).map(|(a, b)| a.conj() * b).sum())
    }

    pub fn total_sz(&self) -> f64 {
        total_sz_on(&self.basis)
            .iter()
            .zip(&self.amps)
            .map(|(s, a)| s * a.norm_sqr())
            .sum()
    }

    /// Makes the largest-magnitude amplitude real and positive.
    pub fn fix_global_phase(&mut self) {
        let max = self.amps.iter().fold(0.0f64, |m, a| m.max(a.norm()));
        if max == 0.0 {
            return;
        }
        let pivot = self
            .amps
            .iter()
            .find(|a| a.norm() >= max * (1.0 - 1e-9))
            .copied()
            .unwrap();
        let phase = pivot.conj() / pivot.norm();
        self.amps.iter_mut().for_each(|a| *a *= phase);
    }
}

/// Density operator on the full basis of `n_sites` qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    pub n_sites: usize,
    pub data: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn from_ensemble(ens: &Ensemble) -> Result<Self> {
        let n = ens
            .states
            .first()
            .map(|s| s.n_sites())
            .ok_or(Error::InsufficientData { needed: 1, got: 0 })?;
        let dim = 1 << n;
        let mut data = DMatrix::zeros(dim, dim);
        for (p, s) in ens.weights.iter().zip(&ens.states) {
            let f = s.to_full();
            for r in 0..dim {
                if f.amps[r] == C64::new(0.0, 0.0) {
                    continue;
                }
                for c in 0..dim {
                    data[(r, c)] += f.amps[r] * f.amps[c].conj() * *p;
                }
            }
        }
        Ok(Self { n_sites: n, data })
    }

    pub fn trace(&self) -> C64 {
        self.data.trace()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigh(self.data.clone()).0[0]
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.data - self.data.adjoint())
            .iter()
            .fold(0.0, |m, v| m.max(v.norm()))
    }

    /// Spectral decomposition into a weighted pure-state ensemble.
    pub fn to_ensemble(&self, cutoff: f64) -> Ensemble {
        let (vals, vecs) = hermitian_eigh(self.data.clone());
        let mut weights = Vec::new();
        let mut states = Vec::new();
        for (k, &p) in vals.iter().enumerate() {
            if p > cutoff {
                weights.push(p);
                states.push(StateVector {
                    basis: Basis::full(self.n_sites),
                    amps: vecs.column(k).iter().copied().collect(),
                });
            }
        }
        Ensemble { weights, states }
    }
}

/// Mixed state `Σ_i p_i |ψ_i⟩⟨ψ_i|` kept as its pure components.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    pub weights: Vec<f64>,
    pub states: Vec<StateVector>,
}

impl Ensemble {
    pub fn pure(state: StateVector) -> Self {
        Self {
            weights: vec![1.0],
            states: vec![state],
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Lowest eigenvector of `h + degeneracy_break · S^z_total` with the global-phase
/// convention applied. `h` acts on the full space; Sz-conserving operators are
/// diagonalized sector by sector and the result is returned in its sector.
pub fn ground_state(h: &SparseOperator, degeneracy_break: f64) -> Result<(f64, StateVector)> {
    let n = h.dim().trailing_zeros() as usize;
    if h.dim() != 1 << n {
        return Err(Error::DimensionMismatch {
            expected: 1 << n,
            got: h.dim(),
        });
    }
    let sz = total_sz_diagonal(n);
    let opts = LanczosOptions::default();
    let mut best: Option<(f64, f64, StateVector)> = None;
    if h.diagonal_commutator_norm(&sz) < 1e-12 {
        for k in 0..=n {
            let sector = Arc::new(SectorBasis::new(n, k)?);
            let hs = project_to_sector(h, &sector)?;
            let (e, v) = lowest_eigenpair(&hs, opts)?;
            let shifted = e + degeneracy_break * (k as f64 - 0.5 * n as f64);
            let better = match &best {
                None => true,
                Some((b, _, _)) => shifted < *b - 1e-13 * b.abs().max(1.0),
            };
            if better {
                best = Some((
                    shifted,
                    e,
                    StateVector {
                        basis: Basis::Sector(sector),
                        amps: v,
                    },
                ));
            }
        }
    } else {
        let t: Vec<_> = h
            .triplets()
            .map(|(r, c, v)| (r as u32, c as u32, v))
            .chain(
                sz.iter()
                    .enumerate()
                    .map(|(i, s)| (i as u32, i as u32, C64::new(degeneracy_break * s, 0.0))),
            )
            .collect();
        let shifted = SparseOperator::from_triplets(h.dim(), t);
        let (e, v) = lowest_eigenpair(&shifted, opts)?;
        let state = StateVector {
            basis: Basis::full(n),
            amps: v,
        };
        let e_h = state.expectation(h)?.re;
        best = Some((e, e_h, state));
    }
    let (_, e, mut state) = best.expect("at least one sector");
    state.fix_global_phase();
    Ok((e, state))
}

/// Channel-only initial state: all down for FM chains, otherwise the ground
/// state of the channel Hamiltonian including any Overhauser fields.
pub fn channel_state(spec: &ChainSpec, fields: Option<&[[f64; 3]]>) -> Result<StateVector> {
    spec.validate()?;
    match spec.phase {
        Phase::Ferro => Ok(StateVector::basis_state(spec.n_channel, 0)),
        Phase::Antiferro => {
            let h = channel_terms(spec, &spec.channel_register(), fields).to_sparse();
            Ok(ground_state(&h, spec.degeneracy_break)?.1)
        }
    }
}

/// Tensor product `|head⟩ ⊗ |channel⟩` with `head` a vector over the leading
/// `n_head` qubits. Stays in a sector whenever both factors have a definite
/// magnetization.
pub fn tensor_with_channel(head: &[C64], n_head: usize, channel: &StateVector) -> StateVector {
    assert_eq!(head.len(), 1 << n_head);
    let nc = channel.n_sites();
    let n = n_head + nc;
    let mut counts = head
        .iter()
        .enumerate()
        .filter(|(_, a)| a.norm_sqr() > 0.0)
        .map(|(s, _)| s.count_ones() as usize);
    let first = counts.next();
    let uniform = first.is_some() && counts.all(|c| Some(c) == first);
    let channel_k = channel.to_sector().map(|s| s.basis);
    let basis = match (uniform, &channel_k) {
        (true, Some(Basis::Sector(cs))) => {
            Basis::sector(n, first.unwrap() + cs.n_excitations()).expect("valid sector")
        }
        _ => Basis::full(n),
    };
    let mut amps = vec![C64::new(0.0, 0.0); basis.dim()];
    for (h, a) in head.iter().enumerate() {
        if *a == C64::new(0.0, 0.0) {
            continue;
        }
        for (i, b) in channel.amps.iter().enumerate() {
            let full = (h << nc) | channel.basis.full_index(i);
            let j = basis.index_of(full).expect("product lies in chosen basis");
            amps[j] += a * b;
        }
    }
    StateVector { basis, amps }
}

/// Sender amplitudes `cos(θ/2)|0⟩ + e^{iφ} sin(θ/2)|1⟩`.
pub fn sender_amplitudes(theta: f64, phi: f64) -> [C64; 2] {
    [
        C64::new((0.5 * theta).cos(), 0.0),
        C64::from_polar((0.5 * theta).sin(), phi),
    ]
}

/// `|ψ_in(θ, φ)⟩ ⊗ |ψ_ch⟩` on the transfer register.
pub fn initial_transfer_state(
    spec: &ChainSpec,
    theta: f64,
    phi: f64,
    channel: &StateVector,
) -> Result<StateVector> {
    if spec.entangle_mode {
        return Err(Error::Configuration(
            "transfer states are defined without the ancilla".into(),
        ));
    }
    check_channel(spec, channel)?;
    let mut a = sender_amplitudes(theta, phi);
    for x in a.iter_mut() {
        if x.norm() < 1e-15 {
            *x = C64::new(0.0, 0.0);
        }
    }
    Ok(tensor_with_channel(&a, 1, channel))
}

/// Singlet on `(0′, 0)` times the channel state.
pub fn initial_entangle_state(spec: &ChainSpec, channel: &StateVector) -> Result<StateVector> {
    if !spec.entangle_mode {
        return Err(Error::Configuration(
            "entanglement distribution needs entangle_mode".into(),
        ));
    }
    check_channel(spec, channel)?;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    // |0′ 0⟩ index 0b00; (|0⟩|1⟩ − |1⟩|0⟩)/√2 in (0′, 0) order.
    let head = [
        C64::new(0.0, 0.0),
        C64::new(s, 0.0),
        C64::new(-s, 0.0),
        C64::new(0.0, 0.0),
    ];
    Ok(tensor_with_channel(&head, 2, channel))
}

fn check_channel(spec: &ChainSpec, channel: &StateVector) -> Result<()> {
    if channel.n_sites() != spec.n_channel {
        return Err(Error::DimensionMismatch {
            expected: spec.n_channel,
            got: channel.n_sites(),
        });
    }
    Ok(())
}

/// Gibbs state of a channel Hamiltonian as an eigenstate ensemble. `kT = 0`
/// returns the (degeneracy-broken) ground state.
pub fn thermal_channel_state(h: &SparseOperator, kt: f64, degeneracy_break: f64) -> Result<Ensemble> {
    if !(kt >= 0.0) {
        return Err(Error::Configuration("kT must be non-negative".into()));
    }
    if kt == 0.0 {
        return Ok(Ensemble::pure(ground_state(h, degeneracy_break)?.1));
    }
    let n = h.dim().trailing_zeros() as usize;
    let sz = total_sz_diagonal(n);
    let mut levels: Vec<(f64, StateVector)> = Vec::new();
    if h.diagonal_commutator_norm(&sz) < 1e-12 {
        for k in 0..=n {
            let sector = Arc::new(SectorBasis::new(n, k)?);
            let hs = project_to_sector(h, &sector)?;
            let (vals, vecs) = hermitian_eigh(hs.to_dense());
            for (j, e) in vals.into_iter().enumerate() {
                levels.push((
                    e,
                    StateVector {
                        basis: Basis::Sector(sector.clone()),
                        amps: vecs.column(j).iter().copied().collect(),
                    },
                ));
            }
        }
    } else {
        let (vals, vecs) = hermitian_eigh(h.to_dense());
        for (j, e) in vals.into_iter().enumerate() {
            levels.push((
                e,
                StateVector {
                    basis: Basis::full(n),
                    amps: vecs.column(j).iter().copied().collect(),
                },
            ));
        }
    }
    let e0 = levels.iter().map(|l| l.0).fold(f64::INFINITY, f64::min);
    let z: f64 = levels.iter().map(|l| (-(l.0 - e0) / kt).exp()).sum();
    let mut weights = Vec::new();
    let mut states = Vec::new();
    for (e, s) in levels {
        let p = (-(e - e0) / kt).exp() / z;
        if p > 1e-15 {
            weights.push(p);
            states.push(s);
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|p| *p /= total);
    Ok(Ensemble { weights, states })
}

/// Time-ordered Hamiltonian: chain couplings with disorder and an optional
/// boundary pulse, constant on each step `[nΔt, (n+1)Δt)`.
#[derive(Clone, Debug)]
pub struct HamiltonianSchedule {
    pub spec: ChainSpec,
    pub noise: NoiseRealization,
    pub pulse: Option<PulseSchedule>,
    pub dt: f64,
}

impl HamiltonianSchedule {
    pub fn new(spec: ChainSpec, noise: NoiseRealization, dt: f64) -> Result<Self> {
        spec.validate()?;
        if !(dt > 0.0) {
            return Err(Error::Configuration("dt must be positive".into()));
        }
        if noise.overhauser.fields.len() != spec.n_channel + 1 {
            return Err(Error::DimensionMismatch {
                expected: spec.n_channel + 1,
                got: noise.overhauser.fields.len(),
            });
        }
        if noise.couplings.n_links() != spec.n_links() {
            return Err(Error::DimensionMismatch {
                expected: spec.n_links(),
                got: noise.couplings.n_links(),
            });
        }
        Ok(Self {
            spec,
            noise,
            pulse: None,
            dt,
        })
    }

    pub fn noiseless(spec: ChainSpec, dt: f64) -> Result<Self> {
        let noise = NoiseRealization::noiseless(spec.n_channel + 1, spec.n_links(), dt);
        Self::new(spec, noise, dt)
    }

    pub fn with_pulse(mut self, pulse: PulseSchedule) -> Result<Self> {
        pulse.check_commensurate(self.dt)?;
        self.pulse = Some(pulse);
        Ok(self)
    }

    pub fn conserves_sz(&self) -> bool {
        self.noise
            .overhauser
            .fields
            .iter()
            .all(|b| b[0] == 0.0 && b[1] == 0.0)
    }

    pub fn is_time_dependent(&self) -> bool {
        self.pulse.is_some() || !self.noise.couplings.is_static()
    }

    /// Signed link couplings during step `step`.
    pub fn link_coefficients(&self, step: usize) -> Vec<f64> {
        let deltas = self.noise.couplings.deltas_at(step);
        let mut c = link_couplings(&self.spec, &deltas);
        if let Some(p) = &self.pulse {
            let t = (step as f64 + 0.5) * self.dt;
            c[0] = p.amplitude_at(t) * (1.0 + deltas[0]);
        }
        c
    }

    pub fn parametric(&self, basis: &Basis) -> Result<ParametricOperator> {
        let fixed = field_terms(&self.spec, &self.noise.overhauser.fields);
        crate::spin_model::Hamiltonian::parametric(&fixed, &link_terms(&self.spec), basis)
    }

    pub fn operator_at(&self, step: usize, basis: &Basis) -> Result<SparseOperator> {
        Ok(self.parametric(basis)?.assemble(&self.link_coefficients(step)))
    }
}

fn krylov_opts() -> KrylovOptions {
    KrylovOptions {
        tol: 1e-12,
        max_dim: 40,
    }
}

/// `exp(-i h dt) v`.
pub fn matrix_exponential_apply(h: &SparseOperator, dt: f64, v: &[C64]) -> Result<Vec<C64>> {
    expm_multiply(h, v, dt, krylov_opts())
}

/// Number of whole steps covering `t_end`, rejecting grids that do not divide it.
pub fn step_count(t_end: f64, dt: f64) -> Result<usize> {
    let n = (t_end / dt).round();
    if (n * dt - t_end).abs() > 1e-9 * t_end.abs().max(1.0) {
        return Err(Error::Configuration(format!(
            "dt = {dt} does not divide t_end = {t_end}"
        )));
    }
    Ok(n as usize)
}

/// Evolves `state` for `n_steps` steps of the schedule and returns snapshots at
/// steps `0, stride, 2·stride, …` (up to `n_steps`). Hyperfine-free schedules
/// evolve inside the excitation sector of the initial state.
pub fn propagate(
    state: &StateVector,
    schedule: &HamiltonianSchedule,
    n_steps: usize,
    stride: usize,
) -> Result<Vec<StateVector>> {
    let stride = stride.max(1);
    let n = schedule.spec.n_sites();
    if state.n_sites() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: state.n_sites(),
        });
    }
    let start = if schedule.conserves_sz() {
        state.to_sector().unwrap_or_else(|| state.to_full())
    } else {
        state.to_full()
    };
    let basis = start.basis.clone();
    let snap_steps: Vec<usize> = (0..=n_steps).step_by(stride).collect();
    let wrap = |amps: Vec<C64>| StateVector {
        basis: basis.clone(),
        amps,
    };
    let mut out = Vec::with_capacity(snap_steps.len());
    if !schedule.is_time_dependent() {
        let h = schedule.operator_at(0, &basis)?;
        let times: Vec<f64> = snap_steps.iter().map(|&s| s as f64 * schedule.dt).collect();
        evolve_snapshots(&h, &start.amps, &times, krylov_opts(), |_, v| {
            out.push(wrap(v.to_vec()))
        })?;
        return Ok(out);
    }
    let param = schedule.parametric(&basis)?;
    let mut h = param.template();
    let mut v = start.amps.clone();
    out.push(wrap(v.clone()));
    let mut last: Option<Vec<f64>> = None;
    for step in 0..n_steps {
        let c = schedule.link_coefficients(step);
        if last.as_ref() != Some(&c) {
            param.assemble_into(&c, &mut h);
            last = Some(c);
        }
        v = expm_multiply(&h, &v, schedule.dt, krylov_opts())?;
        if (step + 1) % stride == 0 {
            out.push(wrap(v.clone()));
        }
    }
    Ok(out)
}

/// `U ρ U†` at the snapshot grid of [`propagate`], via the spectral ensemble of `rho`.
pub fn propagate_density(
    rho: &DensityMatrix,
    schedule: &HamiltonianSchedule,
    n_steps: usize,
    stride: usize,
) -> Result<Vec<DensityMatrix>> {
    let ens = rho.to_ensemble(1e-15);
    let paths: Result<Vec<Vec<StateVector>>> = ens
        .states
        .iter()
        .map(|s| propagate(s, schedule, n_steps, stride))
        .collect();
    let paths = paths?;
    let n_snap = paths.first().map_or(0, |p| p.len());
    (0..n_snap)
        .map(|t| {
            DensityMatrix::from_ensemble(&Ensemble {
                weights: ens.weights.clone(),
                states: paths.iter().map(|p| p[t].clone()).collect(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin_model::build_channel_hamiltonian;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn fm_pair_ground_state_is_all_down() {
        let spec = ChainSpec::new(2, Phase::Ferro);
        let h = channel_terms(&spec, &spec.channel_register(), None).to_sparse();
        let (e, g) = ground_state(&h, spec.degeneracy_break).unwrap();
        assert!((e + 0.25).abs() < 1e-12);
        assert!((g.amplitude(0) - c(1.0)).norm() < 1e-12);
    }

    #[test]
    fn afm_pair_ground_state_is_singlet() {
        let spec = ChainSpec::new(2, Phase::Antiferro);
        let g = channel_state(&spec, None).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((g.amplitude(0b01).norm() - s).abs() < 1e-12);
        assert!((g.amplitude(0b01) + g.amplitude(0b10)).norm() < 1e-12);
        let h = channel_terms(&spec, &spec.channel_register(), None).to_sparse();
        let e = g.to_full().expectation(&h).unwrap().re;
        assert!((e + 0.75).abs() < 1e-12);
    }

    #[test]
    fn afm_four_site_energy_matches_dense() {
        let spec = ChainSpec::new(4, Phase::Antiferro);
        let h = channel_terms(&spec, &spec.channel_register(), None).to_sparse();
        let (e, _) = ground_state(&h, 0.0).unwrap();
        let dense = hermitian_eigh(h.to_dense()).0[0];
        assert!((e - dense).abs() < 1e-10);
    }

    #[test]
    fn hyperfine_ground_state_uses_full_space() {
        let spec = ChainSpec::new(7, Phase::Antiferro);
        let fields: Vec<[f64; 3]> = (0..8).map(|k| [0.03 * k as f64, -0.02, 0.01]).collect();
        let g = channel_state(&spec, Some(&fields)).unwrap();
        assert!(!g.basis.is_sector());
        let h = channel_terms(&spec, &spec.channel_register(), Some(&fields)).to_sparse();
        let dense = hermitian_eigh(h.to_dense()).0[0];
        let e = g.expectation(&h).unwrap().re;
        assert!((e - dense).abs() < 1e-8);
    }

    #[test]
    fn transfer_state_product_structure() {
        let spec = ChainSpec::new(2, Phase::Antiferro);
        let ch = channel_state(&spec, None).unwrap();
        let s0 = initial_transfer_state(&spec, 0.0, 0.0, &ch).unwrap();
        assert!(s0.basis.is_sector());
        assert!((s0.amplitude(0b001) - ch.amplitude(0b01)).norm() < 1e-15);
        let s1 = initial_transfer_state(&spec, std::f64::consts::PI, 0.3, &ch).unwrap();
        assert!((s1.amplitude(0b101) - C64::from_polar(1.0, 0.3) * ch.amplitude(0b01)).norm() < 1e-12);
        let sp = initial_transfer_state(&spec, std::f64::consts::FRAC_PI_2, 0.0, &ch).unwrap();
        assert!(!sp.basis.is_sector());
        assert!((sp.norm() - 1.0).abs() < 1e-14);
        assert!(initial_transfer_state(&spec.clone().with_entangle_mode(true), 0.0, 0.0, &ch).is_err());
    }

    #[test]
    fn entangle_state_requires_ancilla() {
        let spec = ChainSpec::new(2, Phase::Ferro);
        let ch = channel_state(&spec, None).unwrap();
        assert!(initial_entangle_state(&spec, &ch).is_err());
        let spec = spec.with_entangle_mode(true);
        let s = initial_entangle_state(&spec, &ch).unwrap();
        assert!((s.norm() - 1.0).abs() < 1e-14);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((s.amplitude(0b0100) - c(r)).norm() < 1e-15);
        assert!((s.amplitude(0b1000) - c(-r)).norm() < 1e-15);
    }

    #[test]
    fn two_spin_swap_population() {
        let spec = ChainSpec::new(1, Phase::Antiferro);
        let sched = HamiltonianSchedule::noiseless(spec.clone(), 0.05).unwrap();
        let start = StateVector::basis_state(2, 0b10);
        let snaps = propagate(&start, &sched, 80, 1).unwrap();
        for (i, s) in snaps.iter().enumerate() {
            let t = i as f64 * 0.05;
            let p = s.amplitude(0b01).norm_sqr();
            assert!((p - (0.5 * t).sin().powi(2)).abs() < 1e-10, "t = {t}");
        }
    }

    #[test]
    fn stationary_state_phase() {
        let spec = ChainSpec::new(3, Phase::Antiferro);
        let sched = HamiltonianSchedule::noiseless(spec.clone(), 0.1).unwrap();
        let h_full = crate::spin_model::build_total_hamiltonian(&spec, &[0.0; 3], &[[0.0; 3]; 4]).unwrap();
        let (e, g) = ground_state(&h_full, 0.0).unwrap();
        let snaps = propagate(&g, &sched, 30, 10).unwrap();
        for (i, s) in snaps.iter().enumerate() {
            let t = i as f64 * 1.0;
            let ov = g.overlap(s);
            assert!((ov - C64::from_polar(1.0, -e * t)).norm() < 1e-10);
        }
    }

    #[test]
    fn thermal_limits() {
        let spec = ChainSpec::new(2, Phase::Antiferro);
        let h = channel_terms(&spec, &spec.channel_register(), None).to_sparse();
        let hot = DensityMatrix::from_ensemble(&thermal_channel_state(&h, 1e6, 0.0).unwrap()).unwrap();
        for r in 0..4 {
            for col in 0..4 {
                let want = if r == col { 0.25 } else { 0.0 };
                assert!((hot.data[(r, col)] - c(want)).norm() < 1e-6);
            }
        }
        let cold = thermal_channel_state(&h, 0.0, spec.degeneracy_break).unwrap();
        let g = channel_state(&spec, None).unwrap();
        assert_eq!(cold.len(), 1);
        assert!((cold.states[0].overlap(&g).norm() - 1.0).abs() < 1e-12);

        let ens = thermal_channel_state(&h, 1.0, 0.0).unwrap();
        let rho = DensityMatrix::from_ensemble(&ens).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let singlet = [c(0.0), c(s), c(-s), c(0.0)];
        let mut w = C64::new(0.0, 0.0);
        for r in 0..4 {
            for col in 0..4 {
                w += singlet[r].conj() * rho.data[(r, col)] * singlet[col];
            }
        }
        let expect = 0.75f64.exp() / (0.75f64.exp() + 3.0 * (-0.25f64).exp());
        assert!((w.re - expect).abs() < 1e-12);
        assert!((rho.trace() - c(1.0)).norm() < 1e-12);
        assert!(rho.min_eigenvalue() > -1e-12);
    }

    #[test]
    fn incommensurate_grid_is_rejected() {
        assert_eq!(step_count(1.0, 0.05).unwrap(), 20);
        assert!(step_count(1.0, 0.03).is_err());
    }

    #[test]
    fn sector_and_full_space_agree() {
        let spec = ChainSpec::new(4, Phase::Antiferro);
        let ch = channel_state(&spec, None).unwrap();
        let start = initial_transfer_state(&spec, 0.0, 0.0, &ch).unwrap();
        let sched = HamiltonianSchedule::noiseless(spec.clone(), 0.05).unwrap();
        let a = propagate(&start, &sched, 100, 20).unwrap();
        assert!(a[0].basis.is_sector());
        let h = build_channel_hamiltonian(&spec).unwrap().scaled_add(
            c(1.0),
            &crate::spin_model::build_interaction_hamiltonian(&spec).unwrap(),
        );
        let full = start.to_full();
        for (i, s) in a.iter().enumerate() {
            let t = i as f64 * 1.0;
            let v = matrix_exponential_apply(&h, t, &full.amps).unwrap();
            let f = StateVector::new(Basis::full(5), v).unwrap();
            assert!((f.overlap(s).norm() - 1.0).abs() < 1e-10);
        }
    }
}
