//! Piecewise-constant boundary-coupling control: the noiseless transfer
//! objective, its quasi-Newton ascent and evaluation of fixed pulses under disorder.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::Rng;
use rayon::prelude::*;

use crate::channels::{channel_from_pair, channel_series, ChannelMap};
use crate::dynamics::{
    channel_state, step_count, tensor_with_channel, Ensemble, HamiltonianSchedule, StateVector,
};
use crate::error::{Error, Result};
use crate::linalg::{expm_multiply, symmetric_eigh, KrylovOptions, ParametricOperator};
use crate::montecarlo::{phase_optimal_fidelity, run_with_pulse, ExperimentConfig, MetricSeries};
use crate::noise::{stream_rng, NoiseRealization};
use crate::spin_model::{field_terms, Basis, ChainSpec, Hamiltonian, Phase};

/// Boundary coupling `J₀(t)` constant on `k` equal segments of `[0, t_f)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PulseSchedule {
    pub t_f: f64,
    pub amplitudes: Vec<f64>,
    pub bounds: (f64, f64),
}

impl PulseSchedule {
    pub fn new(t_f: f64, amplitudes: Vec<f64>, bounds: (f64, f64)) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::Configuration("pulse needs at least one segment".into()));
        }
        if !(t_f > 0.0) || !t_f.is_finite() {
            return Err(Error::Configuration("t_f must be positive".into()));
        }
        if !(bounds.0 <= bounds.1) {
            return Err(Error::Configuration("pulse bounds are reversed".into()));
        }
        if let Some(a) = amplitudes
            .iter()
            .find(|a| !(**a >= bounds.0 - 1e-12 && **a <= bounds.1 + 1e-12))
        {
            return Err(Error::Configuration(format!(
                "amplitude {a} outside [{}, {}]",
                bounds.0, bounds.1
            )));
        }
        Ok(Self {
            t_f,
            amplitudes,
            bounds,
        })
    }

    pub fn constant(t_f: f64, k: usize, amplitude: f64, bounds: (f64, f64)) -> Result<Self> {
        Self::new(t_f, vec![amplitude; k], bounds)
    }

    /// `[0, 4|J|]` for AFM chains and `[−4|J|, 0]` for FM chains.
    pub fn default_bounds(phase: Phase, j_mag: f64) -> (f64, f64) {
        match phase {
            Phase::Antiferro => (0.0, 4.0 * j_mag),
            Phase::Ferro => (-4.0 * j_mag, 0.0),
        }
    }

    pub fn k(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn segment_length(&self) -> f64 {
        self.t_f / self.k() as f64
    }

    pub fn segment_start(&self, j: usize) -> f64 {
        j as f64 * self.segment_length()
    }

    /// Amplitude in force at time `t`; the last segment is held beyond `t_f`.
    pub fn amplitude_at(&self, t: f64) -> f64 {
        let j = (t / self.segment_length()).floor().max(0.0) as usize;
        self.amplitudes[j.min(self.k() - 1)]
    }

    /// Fails unless every segment spans a whole number of steps `dt`.
    pub fn check_commensurate(&self, dt: f64) -> Result<()> {
        let r = self.segment_length() / dt;
        if (r - r.round()).abs() > 1e-9 * r.max(1.0) || r.round() < 1.0 {
            return Err(Error::Configuration(format!(
                "segment length {} is not a multiple of dt = {dt}",
                self.segment_length()
            )));
        }
        Ok(())
    }
}

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Phase-optimal average fidelity at `t_f` for `pulse`, evolved on the grid
/// `dt` with the general propagator. `noise` adds disorder terms; `None` is
/// the ideal chain.
pub fn pulse_objective(
    pulse: &PulseSchedule,
    spec: &ChainSpec,
    noise: Option<&NoiseRealization>,
    dt: f64,
) -> Result<f64> {
    pulse.check_commensurate(dt)?;
    let spec = ChainSpec {
        entangle_mode: false,
        ..spec.clone()
    };
    let n_steps = step_count(pulse.t_f, dt)?;
    let noise = match noise {
        Some(n) => n.clone(),
        None => NoiseRealization::noiseless(spec.n_channel + 1, spec.n_links(), dt),
    };
    let fields = noise.overhauser.fields.clone();
    let hyperfine = fields.iter().flatten().any(|b| *b != 0.0);
    let ch = channel_state(&spec, hyperfine.then_some(&fields[..]))?;
    let sched = HamiltonianSchedule::new(spec, noise, dt)?.with_pulse(pulse.clone())?;
    let maps = channel_series(&sched, &Ensemble::pure(ch), n_steps, n_steps.max(1))?;
    Ok(phase_optimal_fidelity(
        maps.last().expect("at least one snapshot"),
    ))
}

/// Eigensystem of one segment Hamiltonian, applied as `V e^{-iΛτ} Vᵀ`.
struct Segment {
    vectors: DMatrix<C64>,
    phases: DVector<C64>,
}

impl Segment {
    fn apply(&self, x: &DVector<C64>) -> DVector<C64> {
        let y = self.vectors.tr_mul(x).component_mul(&self.phases);
        &self.vectors * y
    }

    fn matrix(&self) -> DMatrix<C64> {
        let scaled = DMatrix::from_fn(self.vectors.nrows(), self.vectors.ncols(), |r, c| {
            self.vectors[(r, c)] * self.phases[c]
        });
        scaled * self.vectors.transpose()
    }
}

/// Excitation sector reached from one sender basis state.
struct Stage {
    basis: Basis,
    h0: DMatrix<f64>,
    h1: DMatrix<f64>,
    sparse: ParametricOperator,
    init: DVector<C64>,
}

impl Stage {
    /// `exp(-i H(a) τ) x` by Krylov projection, for single-vector probes.
    fn propagate(&self, amplitude: f64, tau: f64, x: &DVector<C64>) -> Result<DVector<C64>> {
        let h = self.sparse.assemble(&[amplitude]);
        let opts = KrylovOptions {
            tol: 1e-14,
            max_dim: 40,
        };
        Ok(DVector::from_vec(expm_multiply(&h, x.as_slice(), tau, opts)?))
    }

    fn segment(&self, amplitude: f64, tau: f64) -> Segment {
        let (vals, vecs) = symmetric_eigh(&self.h0 + &self.h1 * amplitude);
        Segment {
            vectors: vecs.map(|x| C64::new(x, 0.0)),
            phases: DVector::from_iterator(vals.len(), vals.iter().map(|e| C64::from_polar(1.0, -e * tau))),
        }
    }
}

// Hyperfine-free sector Hamiltonians are real in the product basis.
fn real_dense(h: &Hamiltonian, basis: &Basis) -> Result<DMatrix<f64>> {
    let m = h.to_operator(basis)?.to_dense();
    debug_assert!(m.iter().all(|z| z.im == 0.0));
    Ok(m.map(|z| z.re))
}

/// The noiseless transfer objective for fixed `(spec, t_f, k)`, evaluated with
/// exact segment propagators inside the two excitation sectors that the sender
/// basis states `|0⟩ ⊗ ψ` and `|1⟩ ⊗ ψ` occupy.
pub struct PulseProblem {
    t_f: f64,
    k: usize,
    receiver: usize,
    fd_step: f64,
    stages: [Stage; 2],
}

impl PulseProblem {
    pub fn new(spec: &ChainSpec, t_f: f64, k: usize) -> Result<Self> {
        let spec = ChainSpec {
            entangle_mode: false,
            ..spec.clone()
        };
        spec.validate()?;
        if k == 0 {
            return Err(Error::Configuration("pulse needs at least one segment".into()));
        }
        if !(t_f > 0.0) || !t_f.is_finite() {
            return Err(Error::Configuration("t_f must be positive".into()));
        }
        let reg = spec.register();
        let psi = channel_state(&spec, None)?;
        let mut fixed = field_terms(&spec, &[]);
        for l in 1..spec.n_links() {
            fixed.exchange(
                reg.position(l).unwrap(),
                reg.position(l + 1).unwrap(),
                spec.coupling(),
            );
        }
        let mut link0 = Hamiltonian::new(reg.n_sites);
        link0.exchange(reg.position(0).unwrap(), reg.position(1).unwrap(), 1.0);
        let stage = |head: [C64; 2]| -> Result<Stage> {
            let full = tensor_with_channel(&head, 1, &psi);
            let s = full.to_sector().unwrap_or_else(|| full.to_full());
            Ok(Stage {
                h0: real_dense(&fixed, &s.basis)?,
                h1: real_dense(&link0, &s.basis)?,
                sparse: Hamiltonian::parametric(&fixed, &[link0.terms.clone()], &s.basis)?,
                init: DVector::from_vec(s.amps),
                basis: s.basis,
            })
        };
        Ok(Self {
            t_f,
            k,
            receiver: reg.receiver(),
            fd_step: 1e-5 * spec.j_mag,
            stages: [stage([ONE, ZERO])?, stage([ZERO, ONE])?],
        })
    }

    /// Central-difference step on each amplitude.
    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = h;
        self
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn t_f(&self) -> f64 {
        self.t_f
    }

    fn tau(&self) -> f64 {
        self.t_f / self.k as f64
    }

    fn check(&self, amps: &[f64]) -> Result<()> {
        if amps.len() != self.k {
            return Err(Error::DimensionMismatch {
                expected: self.k,
                got: amps.len(),
            });
        }
        Ok(())
    }

    fn channel(&self, finals: [DVector<C64>; 2]) -> ChannelMap {
        let [a, b] = finals;
        let phi0 = StateVector {
            basis: self.stages[0].basis.clone(),
            amps: a.as_slice().to_vec(),
        };
        let phi1 = StateVector {
            basis: self.stages[1].basis.clone(),
            amps: b.as_slice().to_vec(),
        };
        channel_from_pair(&phi0, &phi1, self.receiver)
    }

    /// Channel at `t_f` for the amplitudes `amps`.
    pub fn channel_at_target(&self, amps: &[f64]) -> Result<ChannelMap> {
        self.check(amps)?;
        let tau = self.tau();
        let mut finals = [self.stages[0].init.clone(), self.stages[1].init.clone()];
        for (st, v) in self.stages.iter().zip(finals.iter_mut()) {
            for a in amps {
                *v = st.propagate(*a, tau, v)?;
            }
        }
        Ok(self.channel(finals))
    }

    /// Phase-optimal average fidelity at `t_f`.
    pub fn objective(&self, amps: &[f64]) -> Result<f64> {
        Ok(phase_optimal_fidelity(&self.channel_at_target(amps)?))
    }

    /// Receiver phase `arg ξ(|1⟩⟨0|)₁₀` that realizes [`Self::objective`].
    pub fn receiver_phase(&self, amps: &[f64]) -> Result<f64> {
        let coh = self.channel_at_target(amps)?.blocks[1][0][(1, 0)];
        Ok(if coh.norm() > 1e-12 { coh.arg() } else { 0.0 })
    }

    /// Central-difference gradient of [`Self::objective`] in the amplitudes.
    /// Prefix states and suffix propagators are shared, so each probe costs
    /// one segment diagonalization per sector.
    pub fn gradient(&self, amps: &[f64]) -> Result<Vec<f64>> {
        self.check(amps)?;
        let tau = self.tau();
        let k = self.k;
        let mut prefix: Vec<Vec<DVector<C64>>> = Vec::with_capacity(2);
        let mut suffix: Vec<Vec<DMatrix<C64>>> = Vec::with_capacity(2);
        for st in &self.stages {
            let segs: Vec<Segment> = amps.iter().map(|a| st.segment(*a, tau)).collect();
            let mut fwd = Vec::with_capacity(k);
            let mut v = st.init.clone();
            for seg in &segs {
                fwd.push(v.clone());
                v = seg.apply(&v);
            }
            let dim = st.init.len();
            let mut suf = vec![DMatrix::identity(dim, dim); k];
            for j in (0..k - 1).rev() {
                suf[j] = &suf[j + 1] * segs[j + 1].matrix();
            }
            prefix.push(fwd);
            suffix.push(suf);
        }
        let h = self.fd_step;
        let probe = |j: usize, a: f64| -> Result<f64> {
            let f0 = &suffix[0][j] * self.stages[0].propagate(a, tau, &prefix[0][j])?;
            let f1 = &suffix[1][j] * self.stages[1].propagate(a, tau, &prefix[1][j])?;
            Ok(phase_optimal_fidelity(&self.channel([f0, f1])))
        };
        (0..k)
            .map(|j| Ok((probe(j, amps[j] + h)? - probe(j, amps[j] - h)?) / (2.0 * h)))
            .collect()
    }
}

/// Settings of [`optimize_pulse`].
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizeOptions {
    pub restarts: usize,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    /// Finite-difference step in units of `|J|`.
    pub fd_step: f64,
    pub seed: u64,
    /// Amplitude bounds; `None` takes [`PulseSchedule::default_bounds`].
    pub bounds: Option<(f64, f64)>,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            restarts: 8,
            max_iterations: 500,
            gradient_tolerance: 1e-6,
            fd_step: 1e-5,
            seed: 0,
            bounds: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizationResult {
    pub pulse: PulseSchedule,
    /// Noiseless phase-optimal fidelity at `t_f`.
    pub objective: f64,
    /// Receiver phase attaining `objective`.
    pub gamma0: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
    /// Index of the restart that produced this result.
    pub restart: usize,
    /// Objective after each accepted step, starting from the initial point.
    pub history: Vec<f64>,
}

/// Quasi-Newton (BFGS) ascent of the noiseless transfer fidelity at `t_f` over
/// `k` bounded amplitudes, best of `opts.restarts` starts. Start 0 is `init`
/// (or the static boundary coupling); the others are uniform draws inside the bounds.
pub fn optimize_pulse(
    spec: &ChainSpec,
    t_f: f64,
    k: usize,
    init: Option<&PulseSchedule>,
    opts: &OptimizeOptions,
) -> Result<OptimizationResult> {
    let bounds = opts
        .bounds
        .or(init.map(|p| p.bounds))
        .unwrap_or_else(|| PulseSchedule::default_bounds(spec.phase, spec.j_mag));
    if !(bounds.0 <= bounds.1) {
        return Err(Error::Configuration("pulse bounds are reversed".into()));
    }
    let problem = PulseProblem::new(spec, t_f, k)?.with_fd_step(opts.fd_step * spec.j_mag);
    let first = match init {
        Some(p) if p.k() != k => {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: p.k(),
            })
        }
        Some(p) => p.amplitudes.clone(),
        None => vec![spec.boundary_coupling().clamp(bounds.0, bounds.1); k],
    };
    let results: Result<Vec<OptimizationResult>> = (0..opts.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let start = if r == 0 {
                first.clone()
            } else {
                let mut rng = stream_rng(opts.seed, r as u64, 0);
                (0..k)
                    .map(|_| bounds.0 + (bounds.1 - bounds.0) * rng.random::<f64>())
                    .collect()
            };
            ascend(&problem, bounds, start, opts, r)
        })
        .collect();
    let mut best: Option<OptimizationResult> = None;
    for res in results? {
        if best.as_ref().is_none_or(|b| res.objective > b.objective) {
            best = Some(res);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn ascend(
    problem: &PulseProblem,
    bounds: (f64, f64),
    start: Vec<f64>,
    opts: &OptimizeOptions,
    restart: usize,
) -> Result<OptimizationResult> {
    let (mid, half) = ((bounds.0 + bounds.1) / 2.0, (bounds.1 - bounds.0) / 2.0);
    let k = problem.k();
    let finish = |amps: Vec<f64>, f: f64, iterations, gradient_norm, converged, history| {
        Ok(OptimizationResult {
            gamma0: problem.receiver_phase(&amps)?,
            pulse: PulseSchedule::new(problem.t_f(), amps, bounds)?,
            objective: f,
            iterations,
            gradient_norm,
            converged,
            restart,
            history,
        })
    };
    if half == 0.0 {
        let amps = vec![mid; k];
        let f = problem.objective(&amps)?;
        return finish(amps, f, 0, 0.0, true, vec![f]);
    }
    // a = mid + half·sin(x) keeps every iterate inside the bounds.
    let amps_of = |x: &DVector<f64>| -> Vec<f64> { x.iter().map(|x| mid + half * x.sin()).collect() };
    let grad_of = |x: &DVector<f64>| -> Result<DVector<f64>> {
        let g = problem.gradient(&amps_of(x))?;
        Ok(DVector::from_iterator(
            k,
            g.iter().zip(x.iter()).map(|(g, x)| g * half * x.cos()),
        ))
    };
    let mut x = DVector::from_iterator(
        k,
        start
            .iter()
            .map(|a| ((a - mid) / half).clamp(-0.999, 0.999).asin()),
    );
    let mut f = problem.objective(&amps_of(&x))?;
    let mut g = grad_of(&x)?;
    let mut inv_h = DMatrix::<f64>::identity(k, k);
    let mut history = vec![f];
    let mut iterations = 0;
    let mut converged = g.norm() < opts.gradient_tolerance;
    let mut fresh = true;
    while !converged && iterations < opts.max_iterations {
        let mut d = &inv_h * &g;
        let mut slope = g.dot(&d);
        if !(slope > 0.0) {
            inv_h = DMatrix::identity(k, k);
            d = g.clone();
            slope = g.dot(&d);
            fresh = true;
        }
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-12 {
            let trial = &x + &d * step;
            let ft = problem.objective(&amps_of(&trial))?;
            if ft >= f + 1e-4 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            if fresh {
                break;
            }
            inv_h = DMatrix::identity(k, k);
            fresh = true;
            continue;
        };
        let g_new = grad_of(&x_new)?;
        let s = &x_new - &x;
        // Curvature of −F: y = −(g_new − g).
        let y = &g - &g_new;
        let sy = s.dot(&y);
        if sy > 1e-14 {
            if fresh {
                inv_h *= sy / y.dot(&y);
            }
            let rho = 1.0 / sy;
            let hy = &inv_h * &y;
            let yhy = y.dot(&hy);
            inv_h += (&s * s.transpose()) * (rho * rho * yhy + rho)
                - (&hy * s.transpose() + &s * hy.transpose()) * rho;
            fresh = false;
        }
        x = x_new;
        f = f_new;
        g = g_new;
        iterations += 1;
        history.push(f);
        converged = g.norm() < opts.gradient_tolerance;
    }
    finish(amps_of(&x), f, iterations, g.norm(), converged, history)
}

/// Smallest `t_f` in the ascending grid whose optimized fidelity reaches `threshold`.
pub fn minimal_target_time(
    spec: &ChainSpec,
    threshold: f64,
    k: usize,
    t_grid: &[f64],
    opts: &OptimizeOptions,
) -> Result<(f64, OptimizationResult)> {
    if t_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Configuration("target-time grid must be ascending".into()));
    }
    let mut best = f64::NEG_INFINITY;
    for &t_f in t_grid {
        let res = optimize_pulse(spec, t_f, k, None, opts)?;
        if res.objective >= threshold {
            return Ok((t_f, res));
        }
        best = best.max(res.objective);
    }
    Err(Error::NotReachable { threshold, best })
}

/// Disorder-averaged series under a fixed pulse. The receiver phase is the
/// noiseless optimum at `t_f` and is never re-fitted per realization.
pub fn evaluate_pulse_under_disorder(pulse: &PulseSchedule, cfg: &ExperimentConfig) -> Result<MetricSeries> {
    let gamma0 = PulseProblem::new(&cfg.spec, pulse.t_f, pulse.k())?.receiver_phase(&pulse.amplitudes)?;
    run_with_pulse(cfg, Some((pulse, gamma0)))
}

pub const PULSE_HEADER: [&str; 3] = ["segment_index", "t_start", "amplitude"];

pub fn write_pulse_csv<W: Write>(pulse: &PulseSchedule, w: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    out.write_record(PULSE_HEADER)?;
    for (j, a) in pulse.amplitudes.iter().enumerate() {
        out.write_record(&[j.to_string(), pulse.segment_start(j).to_string(), a.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a pulse file. `t_f` follows from the segment spacing when there are
/// at least two segments; a single segment needs it supplied.
pub fn read_pulse_csv<R: Read>(r: R, t_f: Option<f64>, bounds: (f64, f64)) -> Result<PulseSchedule> {
    let mut rdr = csv::Reader::from_reader(r);
    let parse_err = |line: usize, key: &str, msg: String| Error::Parse {
        line,
        key: key.into(),
        msg,
    };
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header != PULSE_HEADER {
        return Err(parse_err(
            1,
            "header",
            format!("expected {}", PULSE_HEADER.join(",")),
        ));
    }
    let mut starts = Vec::new();
    let mut amps = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let field = |c: usize| -> Result<f64> {
            let raw = rec.get(c).unwrap_or("").trim();
            raw.parse()
                .map_err(|_| parse_err(line, PULSE_HEADER[c], format!("cannot parse `{raw}`")))
        };
        let idx = field(0)?;
        if idx != i as f64 {
            return Err(parse_err(line, "segment_index", format!("expected {i}")));
        }
        starts.push(field(1)?);
        amps.push(field(2)?);
    }
    let inferred = if starts.len() >= 2 {
        let len = starts[1] - starts[0];
        if let Some(j) =
            (0..starts.len()).find(|&j| (starts[j] - j as f64 * len).abs() > 1e-9 * len.abs().max(1.0))
        {
            return Err(parse_err(j + 2, "t_start", "segments are not uniform".into()));
        }
        Some(len * starts.len() as f64)
    } else {
        None
    };
    let t_f = match (inferred, t_f) {
        (Some(a), Some(b)) if (a - b).abs() > 1e-9 * b.abs().max(1.0) => {
            return Err(Error::Configuration(format!(
                "pulse spans {a}, expected t_f = {b}"
            )))
        }
        (Some(a), _) => a,
        (None, Some(b)) => b,
        (None, None) => return Err(Error::Configuration("single-segment pulse files need t_f".into())),
    };
    PulseSchedule::new(t_f, amps, bounds)
}
