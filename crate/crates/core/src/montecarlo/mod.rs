//! Disorder-averaged experiments: realizations, metric series, first-peak
//! extraction and parameter sweeps.

mod config;
mod output;

pub use config::{ExperimentConfig, Protocol, CONFIG_KEYS};
pub use output::{write_series_csv, write_sweep_csv, SERIES_HEADER, SWEEP_HEADER};

use std::str::FromStr;

use nalgebra::{Matrix2, Matrix4};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::channels::{
    average_fidelity, channel_from_entangled, channel_series, reduced_pair_state, werner_deviation,
    ChannelMap, TransferMetrics,
};
use crate::dynamics::{
    channel_state, initial_entangle_state, propagate, step_count, thermal_channel_state, Ensemble,
    HamiltonianSchedule,
};
use crate::error::{Error, Result};
use crate::noise::NoiseRealization;
use crate::optctrl::PulseSchedule;
use crate::spin_model::{channel_terms, ChainSpec};

/// Largest Hilbert space evolved as pure states.
pub const PURE_DIM_LIMIT: usize = 4096;
/// Largest register (sites) for thermal channel states.
pub const THERMAL_SITE_LIMIT: usize = 9;

/// Averaged time series of the transfer figures of merit.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricSeries {
    pub times: Vec<f64>,
    pub f_mean: Vec<f64>,
    pub f_stderr: Vec<f64>,
    pub c_mean: Vec<f64>,
    pub c_stderr: Vec<f64>,
    /// Werner deviation of the realization-averaged `ρ_{0′N}`.
    pub werner_mean: Vec<f64>,
    /// Mean over realizations of each realization's own Werner deviation.
    pub werner_per_realization: Vec<f64>,
    pub realizations: usize,
    pub seed: u64,
    pub config_hash: u64,
    /// Receiver phase correction applied to every realization.
    pub gamma0: f64,
}

impl MetricSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn values(&self, which: Metric) -> (&[f64], &[f64]) {
        match which {
            Metric::Fidelity => (&self.f_mean, &self.f_stderr),
            Metric::Concurrence => (&self.c_mean, &self.c_stderr),
        }
    }

    /// Pointwise mean and standard error over per-realization metric rows,
    /// reduced in realization order.
    pub fn aggregate(times: Vec<f64>, rows: &[Vec<TransferMetrics>]) -> Result<Self> {
        let r = rows.len();
        if r == 0 {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        let n = times.len();
        let mut s = MetricSeries {
            f_mean: vec![0.0; n],
            f_stderr: vec![0.0; n],
            c_mean: vec![0.0; n],
            c_stderr: vec![0.0; n],
            werner_mean: vec![0.0; n],
            werner_per_realization: vec![0.0; n],
            times,
            realizations: r,
            seed: 0,
            config_hash: 0,
            gamma0: 0.0,
        };
        let mut rho = vec![Matrix4::<C64>::zeros(); n];
        for row in rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            for (i, m) in row.iter().enumerate() {
                s.f_mean[i] += m.f_av;
                s.c_mean[i] += m.concurrence;
                s.werner_per_realization[i] += m.werner_deviation;
                rho[i] += m.rho;
            }
        }
        let inv = 1.0 / r as f64;
        for i in 0..n {
            s.f_mean[i] *= inv;
            s.c_mean[i] *= inv;
            s.werner_per_realization[i] *= inv;
            s.werner_mean[i] = werner_deviation(&(rho[i] * C64::new(inv, 0.0)));
        }
        if r > 1 {
            for row in rows {
                for (i, m) in row.iter().enumerate() {
                    s.f_stderr[i] += (m.f_av - s.f_mean[i]).powi(2);
                    s.c_stderr[i] += (m.concurrence - s.c_mean[i]).powi(2);
                }
            }
            let norm = 1.0 / ((r - 1) as f64 * r as f64);
            for i in 0..n {
                s.f_stderr[i] = (s.f_stderr[i] * norm).sqrt();
                s.c_stderr[i] = (s.c_stderr[i] * norm).sqrt();
            }
        }
        Ok(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Fidelity,
    Concurrence,
}

/// Thresholds for accepting a local maximum as the first peak.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeakOptions {
    /// Minimum rise above the `t = 0` value, on top of one standard error.
    pub min_rise: f64,
    /// Minimum drop after the maximum before the curve exceeds it again.
    pub min_prominence: f64,
}

impl Default for PeakOptions {
    fn default() -> Self {
        Self {
            min_rise: 0.01,
            min_prominence: 0.01,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Peak {
    pub index: usize,
    pub t_opt: f64,
    pub value: f64,
    pub stderr: f64,
}

pub fn find_first_peak(series: &MetricSeries, which: Metric) -> Result<Peak> {
    let (v, se) = series.values(which);
    find_first_peak_in(&series.times, v, se, PeakOptions::default())
}

/// First local maximum exceeding `values[0]` by more than
/// `max(stderr, min_rise)` and standing out from what follows by
/// `max(stderr, min_prominence)`.
pub fn find_first_peak_in(times: &[f64], values: &[f64], stderr: &[f64], opts: PeakOptions) -> Result<Peak> {
    let n = values.len();
    if n == 0 || times.len() != n || stderr.len() != n {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let base = values[0];
    let t_max = times[n - 1];
    for i in 1..n.saturating_sub(1) {
        let v = values[i];
        if !(v > values[i - 1] && v >= values[i + 1]) {
            continue;
        }
        if v - base <= stderr[i].max(opts.min_rise) {
            continue;
        }
        let drop = stderr[i].max(opts.min_prominence);
        let mut confirmed = true;
        for &w in &values[i + 1..] {
            if w > v {
                confirmed = false;
                break;
            }
            if w < v - drop {
                break;
            }
        }
        if confirmed {
            return Ok(Peak {
                index: i,
                t_opt: times[i],
                value: v,
                stderr: stderr[i],
            });
        }
    }
    Err(Error::NoPeak { t_max })
}

/// Fidelity with the receiver phase chosen optimally at each time.
pub fn phase_optimal_fidelity(ch: &ChannelMap) -> f64 {
    let x = &ch.blocks;
    let diag = x[0][0][(0, 0)].re + x[1][1][(1, 1)].re;
    let cross = x[0][0][(1, 1)].re + x[1][1][(0, 0)].re;
    diag / 3.0 + cross / 6.0 + x[1][0][(1, 0)].norm() / 3.0
}

/// Receiver phase `γ₀` fixed from the noiseless zero-temperature chain: the
/// coherence phase at the first peak of the phase-optimal fidelity.
pub fn calibrate_gamma0(spec: &ChainSpec, t_max: f64, dt: f64, stride: usize) -> Result<(f64, Peak)> {
    let spec = ChainSpec {
        entangle_mode: false,
        ..spec.clone()
    };
    let n_steps = step_count(t_max, dt)?;
    let sched = HamiltonianSchedule::noiseless(spec.clone(), dt)?;
    let ch = Ensemble::pure(channel_state(&spec, None)?);
    let maps = channel_series(&sched, &ch, n_steps, stride)?;
    let times = snapshot_times(n_steps, stride, dt);
    let f: Vec<f64> = maps.iter().map(phase_optimal_fidelity).collect();
    let peak = find_first_peak_in(&times, &f, &vec![0.0; f.len()], PeakOptions::default())?;
    let coh = maps[peak.index].blocks[1][0][(1, 0)];
    let gamma0 = if coh.norm() > 1e-12 { coh.arg() } else { 0.0 };
    Ok((gamma0, peak))
}

pub fn snapshot_times(n_steps: usize, stride: usize, dt: f64) -> Vec<f64> {
    (0..=n_steps)
        .step_by(stride.max(1))
        // Rounded so grid times print as written: step 3 of 0.1 is 0.3.
        .map(|s| (s as f64 * dt * 1e12).round() / 1e12)
        .collect()
}

fn check_memory(cfg: &ExperimentConfig) -> Result<()> {
    let sites = cfg.spec.n_sites();
    let dim = 1usize << sites;
    if dim > PURE_DIM_LIMIT {
        return Err(Error::MemoryGuard {
            dim,
            limit: PURE_DIM_LIMIT,
        });
    }
    if cfg.kt > 0.0 && sites > THERMAL_SITE_LIMIT {
        return Err(Error::MemoryGuard {
            dim,
            limit: 1 << THERMAL_SITE_LIMIT,
        });
    }
    Ok(())
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    n_steps: usize,
    gamma0: f64,
    pulse: Option<&'a PulseSchedule>,
    shared_channel: Option<Ensemble>,
}

impl Runner<'_> {
    fn transfer_spec(&self) -> ChainSpec {
        ChainSpec {
            entangle_mode: false,
            ..self.cfg.spec.clone()
        }
    }

    fn channel_ensemble(&self, fields: Option<&[[f64; 3]]>) -> Result<Ensemble> {
        let spec = self.transfer_spec();
        if self.cfg.kt > 0.0 {
            let h = channel_terms(&spec, &spec.channel_register(), fields).to_sparse();
            thermal_channel_state(&h, self.cfg.kt, spec.degeneracy_break)
        } else {
            Ok(Ensemble::pure(channel_state(&spec, fields)?))
        }
    }

    fn realization(&self, r: u64) -> Result<Vec<TransferMetrics>> {
        let cfg = self.cfg;
        let spec = &cfg.spec;
        let noise = if cfg.noise_model().is_noiseless() {
            NoiseRealization::noiseless(spec.n_channel + 1, spec.n_links(), cfg.dt)
        } else {
            cfg.noise_model().draw(
                spec.n_channel + 1,
                spec.n_links(),
                self.n_steps + 1,
                cfg.dt,
                cfg.seed,
                r,
            )?
        };
        let owned;
        let ensemble = match &self.shared_channel {
            Some(e) => e,
            None => {
                owned = self.channel_ensemble(Some(&noise.overhauser.fields))?;
                &owned
            }
        };
        let schedule = |spec: ChainSpec| -> Result<HamiltonianSchedule> {
            let sched = HamiltonianSchedule::new(spec, noise.clone(), cfg.dt)?;
            match self.pulse {
                Some(p) => sched.with_pulse(p.clone()),
                None => Ok(sched),
            }
        };
        match cfg.protocol {
            Protocol::Transfer => {
                let sched = schedule(self.transfer_spec())?;
                let maps = channel_series(&sched, ensemble, self.n_steps, cfg.stride)?;
                Ok(maps
                    .iter()
                    .map(|m| TransferMetrics::of(&m.rotate_receiver(self.gamma0)))
                    .collect())
            }
            Protocol::Entangle => {
                let sched = schedule(spec.clone())?;
                let receiver = spec.register().receiver();
                let ancilla = spec.register().ancilla.expect("entangle register");
                let mut acc: Vec<Matrix4<C64>> = Vec::new();
                for (p, member) in ensemble.weights.iter().zip(&ensemble.states) {
                    let psi = initial_entangle_state(spec, member)?;
                    let snaps = propagate(&psi, &sched, self.n_steps, cfg.stride)?;
                    if acc.is_empty() {
                        acc = vec![Matrix4::zeros(); snaps.len()];
                    }
                    for (a, s) in acc.iter_mut().zip(&snaps) {
                        *a += reduced_pair_state(s, ancilla, receiver) * C64::new(*p, 0.0);
                    }
                }
                let r = Matrix2::new(
                    C64::new(1.0, 0.0),
                    C64::new(0.0, 0.0),
                    C64::new(0.0, 0.0),
                    C64::from_polar(1.0, -self.gamma0),
                );
                let rot = Matrix2::<C64>::identity().kronecker(&r);
                Ok(acc
                    .iter()
                    .map(|rho| {
                        let rho = rot * rho * rot.adjoint();
                        TransferMetrics::with_fidelity(average_fidelity(&channel_from_entangled(&rho)), rho)
                    })
                    .collect())
            }
        }
    }
}

/// Runs all realizations of `cfg` and averages their metric series.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricSeries> {
    run_with_pulse(cfg, None)
}

/// Like [`run_experiment`] with the boundary coupling driven by a fixed
/// `(pulse, γ₀)` pair instead of the static coupling and its calibrated phase.
pub(crate) fn run_with_pulse(
    cfg: &ExperimentConfig,
    pulse: Option<(&PulseSchedule, f64)>,
) -> Result<MetricSeries> {
    cfg.validate()?;
    check_memory(cfg)?;
    let n_steps = step_count(cfg.t_max, cfg.dt)?;
    let gamma0 = match pulse {
        Some((_, g)) => g,
        None => calibrate_gamma0(&cfg.spec, cfg.t_max, cfg.dt, cfg.stride)?.0,
    };
    let model = cfg.noise_model();
    let mut runner = Runner {
        cfg,
        n_steps,
        gamma0,
        pulse: pulse.map(|(p, _)| p),
        shared_channel: None,
    };
    if !model.has_hyperfine() {
        runner.shared_channel = Some(runner.channel_ensemble(None)?);
    }
    let r_eff = if model.is_noiseless() { 1 } else { cfg.realizations };
    let rows: Result<Vec<Vec<TransferMetrics>>> = (0..r_eff as u64)
        .into_par_iter()
        .map(|r| {
            runner.realization(r).map_err(|e| Error::Realization {
                index: r,
                source: Box::new(e),
            })
        })
        .collect();
    let mut series = MetricSeries::aggregate(snapshot_times(n_steps, cfg.stride, cfg.dt), &rows?)?;
    series.seed = cfg.seed;
    series.config_hash = cfg.hash();
    series.gamma0 = gamma0;
    Ok(series)
}

/// Parameter varied across a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    BNuc,
    SigmaJ,
    NChannel,
    KT,
}

impl FromStr for SweepAxis {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "b_nuc" => Ok(SweepAxis::BNuc),
            "sigma_j" => Ok(SweepAxis::SigmaJ),
            "N" | "n_channel" => Ok(SweepAxis::NChannel),
            "kT" => Ok(SweepAxis::KT),
            other => Err(format!("unknown sweep axis `{other}` (b_nuc, sigma_j, N, kT)")),
        }
    }
}

impl SweepAxis {
    pub fn apply(self, cfg: &mut ExperimentConfig, value: f64) -> Result<()> {
        match self {
            SweepAxis::BNuc => cfg.b_nuc = value,
            SweepAxis::SigmaJ => cfg.sigma_j = value,
            SweepAxis::KT => cfg.kt = value,
            SweepAxis::NChannel => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::Configuration(format!(
                        "chain length {value} is not a positive integer"
                    )));
                }
                cfg.spec.n_channel = value as usize;
            }
        }
        Ok(())
    }
}

/// First-peak summary of one sweep point. Concurrence is read at the fidelity peak.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub axis_value: f64,
    pub t_opt: f64,
    pub f_peak: f64,
    pub f_stderr: f64,
    pub c_peak: f64,
    pub c_stderr: f64,
}

impl SweepRow {
    pub fn from_series(axis_value: f64, series: &MetricSeries) -> Result<Self> {
        let p = find_first_peak(series, Metric::Fidelity)?;
        Ok(Self {
            axis_value,
            t_opt: p.t_opt,
            f_peak: p.value,
            f_stderr: p.stderr,
            c_peak: series.c_mean[p.index],
            c_stderr: series.c_stderr[p.index],
        })
    }
}

pub fn sweep(template: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepRow>> {
    values
        .iter()
        .map(|&v| {
            let mut cfg = template.clone();
            axis.apply(&mut cfg, v)?;
            let series = run_experiment(&cfg)?;
            SweepRow::from_series(v, &series)
        })
        .collect()
}
