use approx::assert_abs_diff_eq;
use nalgebra::Matrix4;
use num_complex::Complex64 as C64;
use proptest::prelude::*;

use spinwire_core::channels::{
    average_fidelity, channel_series, concurrence, entangled_output, werner_deviation, werner_state,
    ChannelMap,
};
use spinwire_core::dynamics::{
    channel_state, propagate, thermal_channel_state, Ensemble, HamiltonianSchedule, StateVector,
};
use spinwire_core::montecarlo::{phase_optimal_fidelity, ExperimentConfig};
use spinwire_core::noise::{NoiseKind, NoiseModel, NoiseRealization};
use spinwire_core::optctrl::{read_pulse_csv, write_pulse_csv, PulseSchedule};
use spinwire_core::spin_model::{build_total_hamiltonian, channel_terms, total_sz_diagonal};
use spinwire_core::{Basis, ChainSpec, Phase};

fn phase() -> impl Strategy<Value = Phase> {
    prop_oneof![Just(Phase::Ferro), Just(Phase::Antiferro)]
}

fn noise(spec: &ChainSpec, b_nuc: f64, sigma_j: f64, steps: usize, seed: u64) -> NoiseRealization {
    NoiseModel {
        b_nuc,
        sigma_j,
        kind: NoiseKind::Colored(1.0),
        ..NoiseModel::default()
    }
    .draw(spec.n_channel + 1, spec.n_links(), steps + 1, 0.05, seed, 0)
    .unwrap()
}

fn random_state(n_sites: usize, parts: &[f64]) -> StateVector {
    let dim = 1usize << n_sites;
    let mut v: Vec<C64> = (0..dim)
        .map(|i| {
            C64::new(
                parts[(2 * i) % parts.len()] + 0.01,
                parts[(2 * i + 1) % parts.len()],
            )
        })
        .collect();
    let n = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    StateVector::new(Basis::full(n_sites), v).unwrap()
}

fn channel_of(spec: &ChainSpec, noise: NoiseRealization, steps: usize) -> ChannelMap {
    let ch = channel_state(spec, Some(&noise.overhauser.fields)).unwrap();
    let sched = HamiltonianSchedule::new(spec.clone(), noise, 0.05).unwrap();
    *channel_series(&sched, &Ensemble::pure(ch), steps, steps)
        .unwrap()
        .last()
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hamiltonian_is_hermitian(
        n in 1usize..5,
        ph in phase(),
        deltas in prop::collection::vec(-0.5f64..0.5, 5),
        fields in prop::collection::vec(prop::array::uniform3(-0.3f64..0.3), 5),
    ) {
        let spec = ChainSpec::new(n, ph);
        let h = build_total_hamiltonian(&spec, &deltas[..spec.n_links()], &fields[..n + 1]).unwrap();
        prop_assert!(h.hermiticity_error() < 1e-14);
    }

    #[test]
    fn evolution_preserves_norm_and_overlaps(
        n in 1usize..5,
        ph in phase(),
        seed in 0u64..1000,
        parts in prop::collection::vec(-1.0f64..1.0, 8..40),
    ) {
        let spec = ChainSpec::new(n, ph);
        let sched = HamiltonianSchedule::new(spec.clone(), noise(&spec, 0.1, 0.1, 60, seed), 0.05).unwrap();
        let a = random_state(n + 1, &parts);
        let b = random_state(n + 1, &parts[1..]);
        let ab = a.overlap(&b);
        let pa = propagate(&a, &sched, 60, 15).unwrap();
        let pb = propagate(&b, &sched, 60, 15).unwrap();
        for (x, y) in pa.iter().zip(&pb) {
            prop_assert!((x.norm() - 1.0).abs() < 1e-11);
            prop_assert!((x.overlap(y) - ab).norm() < 1e-11);
        }
    }

    #[test]
    fn exchange_noise_conserves_magnetization(
        n in 1usize..5,
        ph in phase(),
        seed in 0u64..1000,
        parts in prop::collection::vec(-1.0f64..1.0, 8..40),
    ) {
        let spec = ChainSpec::new(n, ph);
        let sched = HamiltonianSchedule::new(spec.clone(), noise(&spec, 0.0, 0.2, 60, seed), 0.05).unwrap();
        let sz = total_sz_diagonal(n + 1);
        let moment = |s: &StateVector| -> f64 {
            s.to_full().amps.iter().zip(&sz).map(|(x, z)| x.norm_sqr() * z).sum()
        };
        let start = random_state(n + 1, &parts);
        let m0 = moment(&start);
        for s in propagate(&start, &sched, 60, 10).unwrap() {
            prop_assert!((moment(&s) - m0).abs() < 1e-11);
        }
    }

    #[test]
    fn noisy_channels_are_valid(
        n in 1usize..5,
        ph in phase(),
        seed in 0u64..1000,
        steps in 1usize..80,
        gamma in -3.2f64..3.2,
    ) {
        let spec = ChainSpec::new(n, ph);
        let m = channel_of(&spec, noise(&spec, 0.1, 0.1, steps, seed), steps);
        prop_assert!(m.validate(1e-10).is_ok());
        let f = average_fidelity(&m.rotate_receiver(gamma));
        prop_assert!((0.0..=1.0 + 1e-12).contains(&f));
        // No receiver rotation beats the phase-optimal value.
        prop_assert!(f <= phase_optimal_fidelity(&m) + 1e-12);
        let rho = entangled_output(&m).unwrap();
        assert_abs_diff_eq!(rho.trace().re, 1.0, epsilon = 1e-10);
        let c = concurrence(&rho);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&c));
    }

    #[test]
    fn fidelity_is_linear_in_the_channel(
        seed in 0u64..1000,
        w in 0.0f64..1.0,
    ) {
        let spec = ChainSpec::new(3, Phase::Antiferro);
        let a = channel_of(&spec, noise(&spec, 0.1, 0.0, 40, seed), 40);
        let b = channel_of(&spec, noise(&spec, 0.1, 0.0, 40, seed + 1), 40);
        let mixed = ChannelMap::mix(&[(w, a), (1.0 - w, b)]);
        let want = w * average_fidelity(&a) + (1.0 - w) * average_fidelity(&b);
        assert_abs_diff_eq!(average_fidelity(&mixed), want, epsilon = 1e-13);
    }

    #[test]
    fn werner_states_have_zero_deviation(p in -1.0f64 / 3.0..1.0) {
        let rho = werner_state(p);
        prop_assert!(werner_deviation(&rho) < 1e-14);
        assert_abs_diff_eq!(concurrence(&rho), (1.5 * p - 0.5).max(0.0), epsilon = 1e-12);
        let mut tilted = rho;
        tilted[(0, 0)] += C64::new(0.01, 0.0);
        tilted[(3, 3)] -= C64::new(0.01, 0.0);
        prop_assert!(werner_deviation(&tilted) > 0.009);
        prop_assert!(werner_deviation(&(Matrix4::identity() * C64::new(0.25, 0.0))) < 1e-15);
    }

    #[test]
    fn thermal_weights_are_normalized(n in 2usize..6, ph in phase(), kt in 0.01f64..5.0) {
        let spec = ChainSpec::new(n, ph);
        let h = channel_terms(&spec, &spec.channel_register(), None).to_sparse();
        let ens = thermal_channel_state(&h, kt, spec.degeneracy_break).unwrap();
        assert_abs_diff_eq!(ens.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        prop_assert!(ens.weights.iter().all(|p| *p > 0.0));
        for s in &ens.states {
            prop_assert!((s.norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn config_dump_round_trips(
        n in 1usize..12,
        ph in phase(),
        b in 0.0f64..0.3,
        s in 0.0f64..0.3,
        kind in prop_oneof![Just(NoiseKind::Static), Just(NoiseKind::White), (0.0f64..3.0).prop_map(NoiseKind::Colored)],
        kt in 0.0f64..2.0,
        r in 1usize..2000,
        seed in any::<u64>(),
    ) {
        let mut cfg = ExperimentConfig::new(ChainSpec::new(n, ph), 12.5);
        cfg.b_nuc = b;
        cfg.sigma_j = s;
        cfg.alpha = kind;
        cfg.kt = kt;
        cfg.realizations = r;
        cfg.seed = seed;
        let back = ExperimentConfig::parse(&cfg.dump()).unwrap();
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn pulse_csv_round_trips(amps in prop::collection::vec(0.0f64..4.0, 2..60), t_f in 0.5f64..30.0) {
        let bounds = PulseSchedule::default_bounds(Phase::Antiferro, 1.0);
        let pulse = PulseSchedule::new(t_f, amps, bounds).unwrap();
        let mut buf = Vec::new();
        write_pulse_csv(&pulse, &mut buf).unwrap();
        let back = read_pulse_csv(buf.as_slice(), None, bounds).unwrap();
        prop_assert_eq!(back.amplitudes, pulse.amplitudes);
        prop_assert!((back.t_f - t_f).abs() < 1e-9 * t_f);
    }
}
