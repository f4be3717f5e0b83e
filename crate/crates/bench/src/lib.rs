//! Shared fixtures for the criterion benches.

use spinwire_core::dynamics::{channel_state, initial_transfer_state, StateVector};
use spinwire_core::noise::{sample_overhauser, stream_rng, NoiseRealization};
use spinwire_core::{ChainSpec, Phase};

pub fn chain(n: usize, phase: Phase) -> ChainSpec {
    ChainSpec::new(n, phase)
}

/// Sender in `|+⟩` on top of the channel ground state.
pub fn plus_state(spec: &ChainSpec) -> StateVector {
    let ch = channel_state(spec, None).expect("ground state");
    initial_transfer_state(spec, std::f64::consts::FRAC_PI_2, 0.0, &ch).expect("transfer state")
}

/// A fixed hyperfine realization with standard deviation `b_nuc`.
pub fn hyperfine(spec: &ChainSpec, b_nuc: f64, dt: f64) -> NoiseRealization {
    let mut noise = NoiseRealization::noiseless(spec.n_channel + 1, spec.n_links(), dt);
    noise.overhauser = sample_overhauser(spec.n_channel + 1, b_nuc, &mut stream_rng(1, 0, 0));
    noise
}
