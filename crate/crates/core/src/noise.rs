//! Disorder sampling: quasi-static Overhauser fields and exchange-coupling
//! offsets `δ_k(t)` with static, white and `1/f^α` spectra.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// RNG substream for realization `r`: channel 0 feeds the Overhauser draw and
/// channel `1 + k` the trajectory of link `k`.
pub fn stream_rng(seed: u64, realization: u64, channel: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((realization << 16) | (channel & 0xffff));
    rng
}

/// Spectral class of the coupling fluctuations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseKind {
    /// One draw per link held for the whole evolution (`α = ∞`).
    Static,
    /// Independent draw per link per time step.
    White,
    /// IDFT synthesis with spectrum `1/f^α`.
    Colored(f64),
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseKind::Static => f.write_str("static"),
            NoiseKind::White => f.write_str("white"),
            NoiseKind::Colored(a) => write!(f, "{a}"),
        }
    }
}

impl FromStr for NoiseKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "static" | "inf" | "infinity" => Ok(NoiseKind::Static),
            "white" => Ok(NoiseKind::White),
            other => {
                let a: f64 = other
                    .parse()
                    .map_err(|_| format!("`{other}` is not static, white or a number"))?;
                if a.is_infinite() && a > 0.0 {
                    Ok(NoiseKind::Static)
                } else if a >= 0.0 && a.is_finite() {
                    Ok(NoiseKind::Colored(a))
                } else {
                    Err(format!("spectral exponent {a} must be non-negative"))
                }
            }
        }
    }
}

/// Gaussian Overhauser vectors, one per site.
#[derive(Clone, Debug, PartialEq)]
pub struct OverhauserDraw {
    pub fields: Vec<[f64; 3]>,
    pub b_nuc: f64,
}

impl OverhauserDraw {
    pub fn zero(n_sites: usize) -> Self {
        Self {
            fields: vec![[0.0; 3]; n_sites],
            b_nuc: 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.fields.iter().all(|b| *b == [0.0; 3])
    }
}

/// Per-link offsets `δ_k` on the grid `0, Δt, 2Δt, …`, held constant over each step.
/// A single sample per link means the offset is static.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingTrajectory {
    pub dt: f64,
    pub kind: NoiseKind,
    pub sigma_j: f64,
    pub links: Vec<Vec<f64>>,
}

impl CouplingTrajectory {
    pub fn zero(n_links: usize, dt: f64) -> Self {
        Self {
            dt,
            kind: NoiseKind::Static,
            sigma_j: 0.0,
            links: vec![vec![0.0]; n_links],
        }
    }

    pub fn n_links(&self) -> usize {
        self.links.len()
    }

    pub fn is_static(&self) -> bool {
        self.links.iter().all(|l| l.len() <= 1)
    }

    pub fn is_zero(&self) -> bool {
        self.links.iter().all(|l| l.iter().all(|&d| d == 0.0))
    }

    /// Offset of `link` during step `step`; the last sample is held past the grid end.
    pub fn at(&self, link: usize, step: usize) -> f64 {
        let l = &self.links[link];
        match l.len() {
            0 => 0.0,
            n => l[step.min(n - 1)],
        }
    }

    pub fn deltas_at(&self, step: usize) -> Vec<f64> {
        (0..self.n_links()).map(|k| self.at(k, step)).collect()
    }
}

/// One concrete draw of all disorder.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseRealization {
    pub overhauser: OverhauserDraw,
    pub couplings: CouplingTrajectory,
    pub seed: u64,
    pub realization_index: u64,
}

impl NoiseRealization {
    pub fn noiseless(n_sites: usize, n_links: usize, dt: f64) -> Self {
        Self {
            overhauser: OverhauserDraw::zero(n_sites),
            couplings: CouplingTrajectory::zero(n_links, dt),
            seed: 0,
            realization_index: 0,
        }
    }

    pub fn is_noiseless(&self) -> bool {
        self.overhauser.is_zero() && self.couplings.is_zero()
    }
}

/// Disorder parameters shared by every realization of an experiment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    pub b_nuc: f64,
    pub sigma_j: f64,
    pub kind: NoiseKind,
    pub f_max: f64,
    pub idft_m: usize,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            b_nuc: 0.0,
            sigma_j: 0.0,
            kind: NoiseKind::Static,
            f_max: 1000.0,
            idft_m: 1 << 14,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.b_nuc >= 0.0) || !self.b_nuc.is_finite() {
            return Err(Error::Configuration("b_nuc must be non-negative".into()));
        }
        if !(self.sigma_j >= 0.0) || !self.sigma_j.is_finite() {
            return Err(Error::Configuration("sigma_j must be non-negative".into()));
        }
        if let NoiseKind::Colored(a) = self.kind {
            if !(a >= 0.0) {
                return Err(Error::InvalidExponent(a));
            }
            if !self.idft_m.is_power_of_two() {
                return Err(Error::Configuration("idft_m must be a power of two".into()));
            }
            if !(self.f_max > 0.0) {
                return Err(Error::Configuration("f_max must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn has_hyperfine(&self) -> bool {
        self.b_nuc > 0.0
    }

    pub fn has_exchange(&self) -> bool {
        self.sigma_j > 0.0
    }

    pub fn is_time_dependent(&self) -> bool {
        self.has_exchange() && !matches!(self.kind, NoiseKind::Static)
    }

    pub fn is_noiseless(&self) -> bool {
        !self.has_hyperfine() && !self.has_exchange()
    }

    /// Draws realization `r` for a chain with `n_sites` field sites and `n_links`
    /// links, sampled on `n_samples` grid points spaced by `dt`.
    pub fn draw(
        &self,
        n_sites: usize,
        n_links: usize,
        n_samples: usize,
        dt: f64,
        seed: u64,
        r: u64,
    ) -> Result<NoiseRealization> {
        let overhauser = if self.has_hyperfine() {
            sample_overhauser(n_sites, self.b_nuc, &mut stream_rng(seed, r, 0))
        } else {
            OverhauserDraw::zero(n_sites)
        };
        let couplings = if !self.has_exchange() {
            CouplingTrajectory::zero(n_links, dt)
        } else {
            let links: Result<Vec<Vec<f64>>> = (0..n_links)
                .map(|k| {
                    let mut rng = stream_rng(seed, r, 1 + k as u64);
                    match self.kind {
                        NoiseKind::Static => Ok(vec![self.sigma_j * normal(&mut rng)]),
                        NoiseKind::White => {
                            Ok((0..n_samples).map(|_| self.sigma_j * normal(&mut rng)).collect())
                        }
                        NoiseKind::Colored(alpha) => generate_colored_trajectory(
                            alpha,
                            self.sigma_j,
                            n_samples,
                            dt,
                            self.f_max,
                            self.idft_m,
                            &mut rng,
                        ),
                    }
                })
                .collect();
            CouplingTrajectory {
                dt,
                kind: self.kind,
                sigma_j: self.sigma_j,
                links: links?,
            }
        };
        Ok(NoiseRealization {
            overhauser,
            couplings,
            seed,
            realization_index: r,
        })
    }
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn sample_overhauser(n_sites: usize, b_nuc: f64, rng: &mut impl Rng) -> OverhauserDraw {
    let fields = (0..n_sites)
        .map(|_| {
            if b_nuc == 0.0 {
                [0.0; 3]
            } else {
                [b_nuc * normal(rng), b_nuc * normal(rng), b_nuc * normal(rng)]
            }
        })
        .collect();
    OverhauserDraw { fields, b_nuc }
}

pub fn sample_static(sigma_j: f64, n_links: usize, rng: &mut impl Rng) -> CouplingTrajectory {
    CouplingTrajectory {
        dt: f64::INFINITY,
        kind: NoiseKind::Static,
        sigma_j,
        links: (0..n_links).map(|_| vec![sigma_j * normal(rng)]).collect(),
    }
}

pub fn sample_white(
    sigma_j: f64,
    n_links: usize,
    n_steps: usize,
    dt: f64,
    rng: &mut impl Rng,
) -> CouplingTrajectory {
    CouplingTrajectory {
        dt,
        kind: NoiseKind::White,
        sigma_j,
        links: (0..n_links)
            .map(|_| (0..n_steps).map(|_| sigma_j * normal(rng)).collect())
            .collect(),
    }
}

/// Random terms of the IDFT sum: weights `S(f_k)/M` and shifted frequencies
/// `f_k − η_k`. The `k = 0` term is dropped whenever `S` diverges there.
pub fn idft_terms(alpha: f64, f_max: f64, m: usize, rng: &mut impl Rng) -> Result<(Vec<C64>, Vec<f64>)> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidExponent(alpha));
    }
    if m == 0 {
        return Err(Error::Configuration("IDFT needs at least one term".into()));
    }
    let mut weights = Vec::with_capacity(m);
    let mut freqs = Vec::with_capacity(m);
    for k in 0..m {
        let f = k as f64 / m as f64 * f_max;
        let eta = normal(rng);
        if k == 0 && alpha > 0.0 {
            continue;
        }
        let s = if alpha == 0.0 { 1.0 } else { f.powf(-alpha) };
        weights.push(C64::new(s / m as f64, 0.0));
        freqs.push(f - eta);
    }
    Ok((weights, freqs))
}

/// `Σ_j w_j exp(i 2π ν_j n Δt)` for `n = 0..n_samples`, summed term by term.
pub fn idft_direct(weights: &[C64], freqs: &[f64], dt: f64, n_samples: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); n_samples];
    for (w, nu) in weights.iter().zip(freqs) {
        let x = (2.0 * PI * nu * dt).rem_euclid(2.0 * PI);
        let step = C64::from_polar(1.0, x);
        let mut z = *w;
        for o in out.iter_mut() {
            *o += z;
            z *= step;
        }
    }
    out
}

/// Same sum as [`idft_direct`] evaluated by Gaussian gridding onto an
/// oversampled uniform grid followed by an FFT.
pub fn idft_fast(weights: &[C64], freqs: &[f64], dt: f64, n_samples: usize) -> Vec<C64> {
    let x: Vec<f64> = freqs
        .iter()
        .map(|nu| (2.0 * PI * nu * dt).rem_euclid(2.0 * PI))
        .collect();
    nonuniform_to_uniform(&x, weights, n_samples)
}

/// `s_n = Σ_j c_j e^{i n x_j}` for `n = 0..n_out` with `x_j ∈ [0, 2π)`.
fn nonuniform_to_uniform(x: &[f64], c: &[C64], n_out: usize) -> Vec<C64> {
    const SPREAD: i64 = 12;
    let nm = (n_out + (n_out & 1)).max(2);
    let mr = (2 * nm).max(4 * SPREAD as usize);
    let ratio = mr as f64 / nm as f64;
    let tau = PI * SPREAD as f64 / ((nm * nm) as f64 * ratio * (ratio - 0.5));
    let h = 2.0 * PI / mr as f64;
    let half = (nm / 2) as f64;

    let e3: Vec<f64> = (-SPREAD + 1..=SPREAD)
        .map(|l| (-((l as f64 * h).powi(2)) / (4.0 * tau)).exp())
        .collect();
    let mut grid = vec![C64::new(0.0, 0.0); mr];
    for (&xj, &cj) in x.iter().zip(c) {
        let shifted = cj * C64::from_polar(1.0, half * xj);
        let g0 = (xj / h).floor() as i64;
        let d0 = xj - g0 as f64 * h;
        let e1 = (-d0 * d0 / (4.0 * tau)).exp();
        let e2 = (d0 * h / (2.0 * tau)).exp();
        let mut p = e2.powi((-SPREAD + 1) as i32);
        for (i, l) in (-SPREAD + 1..=SPREAD).enumerate() {
            let g = (g0 + l).rem_euclid(mr as i64) as usize;
            grid[g] += shifted * (e1 * p * e3[i]);
            p *= e2;
        }
    }
    FftPlanner::new().plan_fft_inverse(mr).process(&mut grid);
    let norm = (PI / tau).sqrt() / mr as f64;
    (0..n_out)
        .map(|n| {
            let m = n as i64 - nm as i64 / 2;
            let idx = m.rem_euclid(mr as i64) as usize;
            grid[idx] * (norm * ((m * m) as f64 * tau).exp())
        })
        .collect()
}

/// Real part of the IDFT signal, de-meaned and rescaled to standard deviation
/// `sigma_j`, sampled at `n Δt` for `n = 0..n_samples`.
pub fn generate_colored_trajectory(
    alpha: f64,
    sigma_j: f64,
    n_samples: usize,
    dt: f64,
    f_max: f64,
    m: usize,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    if !(alpha >= 0.0) {
        return Err(Error::InvalidExponent(alpha));
    }
    if !(dt > 0.0) {
        return Err(Error::Configuration("dt must be positive".into()));
    }
    let (w, nu) = idft_terms(alpha, f_max, m, rng)?;
    if sigma_j == 0.0 {
        return Ok(vec![0.0; n_samples]);
    }
    let s = idft_fast(&w, &nu, dt, n_samples);
    Ok(standardize(s.iter().map(|z| z.re).collect(), sigma_j))
}

/// Shifts to zero mean and scales to population standard deviation `sigma`.
pub fn standardize(mut v: Vec<f64>, sigma: f64) -> Vec<f64> {
    let n = v.len() as f64;
    if v.len() < 2 {
        return vec![0.0; v.len()];
    }
    let mean = v.iter().sum::<f64>() / n;
    v.iter_mut().for_each(|x| *x -= mean);
    let sd = (v.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
    if sd > 0.0 {
        v.iter_mut().for_each(|x| *x *= sigma / sd);
    }
    v
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Window {
    Rectangular,
    Hann,
}

/// One-sided spectrum estimate on bins `k = 0..=n/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub frequencies: Vec<f64>,
    /// `|X_k|² Δt / Σ w²`
    pub power: Vec<f64>,
    /// `|X_k| / Σ w`
    pub amplitude: Vec<f64>,
}

pub fn periodogram(x: &[f64], dt: f64, window: Window) -> Result<Spectrum> {
    let n = x.len();
    if n < 8 {
        return Err(Error::InsufficientData { needed: 8, got: n });
    }
    let w: Vec<f64> = match window {
        Window::Rectangular => vec![1.0; n],
        Window::Hann => (0..n)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
            .collect(),
    };
    let mut buf: Vec<C64> = x.iter().zip(&w).map(|(a, b)| C64::new(a * b, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let sw: f64 = w.iter().sum();
    let sw2: f64 = w.iter().map(|v| v * v).sum();
    let bins = n / 2 + 1;
    Ok(Spectrum {
        frequencies: (0..bins).map(|k| k as f64 / (n as f64 * dt)).collect(),
        power: buf[..bins].iter().map(|z| z.norm_sqr() * dt / sw2).collect(),
        amplitude: buf[..bins].iter().map(|z| z.norm() / sw).collect(),
    })
}

/// Least-squares slope of `log y` against `log f` over `f_lo ≤ f ≤ f_hi`.
pub fn fit_log_slope(frequencies: &[f64], values: &[f64], f_lo: f64, f_hi: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = frequencies
        .iter()
        .zip(values)
        .filter(|(f, v)| **f >= f_lo && **f <= f_hi && **f > 0.0 && **v > 0.0)
        .map(|(f, v)| (f.ln(), v.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: pts.len(),
        });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Settings for the spectral self-check of the IDFT generator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectrumCheck {
    pub alpha: f64,
    pub realizations: usize,
    pub f_max: f64,
    pub m: usize,
    pub n_samples: usize,
    pub seed: u64,
}

impl SpectrumCheck {
    pub fn new(alpha: f64, realizations: usize) -> Self {
        Self {
            alpha,
            realizations,
            f_max: 1000.0,
            m: 1 << 14,
            n_samples: 1 << 13,
            seed: 0,
        }
    }

    /// Sampling step resolving the full band up to `f_max`.
    pub fn dt(&self) -> f64 {
        0.5 / self.f_max
    }

    /// Fit window used for the slope estimate.
    pub fn fit_band(&self) -> (f64, f64) {
        (self.f_max / 100.0, self.f_max / 2.0)
    }
}

/// Hann-windowed spectrum averaged over independent trajectories, with the
/// fitted log-log slope of the mean amplitude.
pub fn averaged_spectrum(check: &SpectrumCheck) -> Result<(Spectrum, f64)> {
    if check.realizations == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let dt = check.dt();
    let spectra: Result<Vec<Spectrum>> = (0..check.realizations as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(check.seed, r, 1);
            let s = generate_colored_trajectory(
                check.alpha,
                1.0,
                check.n_samples,
                dt,
                check.f_max,
                check.m,
                &mut rng,
            )?;
            periodogram(&s, dt, Window::Hann)
        })
        .collect();
    let spectra = spectra?;
    let mut mean = Spectrum {
        frequencies: spectra[0].frequencies.clone(),
        power: vec![0.0; spectra[0].power.len()],
        amplitude: vec![0.0; spectra[0].amplitude.len()],
    };
    let inv = 1.0 / spectra.len() as f64;
    for s in &spectra {
        for (m, v) in mean.power.iter_mut().zip(&s.power) {
            *m += v * inv;
        }
        for (m, v) in mean.amplitude.iter_mut().zip(&s.amplitude) {
            *m += v * inv;
        }
    }
    let (lo, hi) = check.fit_band();
    let slope = fit_log_slope(&mean.frequencies, &mean.amplitude, lo, hi)?;
    Ok((mean, slope))
}
