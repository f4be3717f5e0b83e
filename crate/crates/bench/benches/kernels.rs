use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use spinwire_bench::{chain, hyperfine, plus_state};
use spinwire_core::channels::channel_series;
use spinwire_core::dynamics::{channel_state, propagate, Ensemble, HamiltonianSchedule};
use spinwire_core::linalg::{lowest_eigenpair, LanczosOptions};
use spinwire_core::noise::{generate_colored_trajectory, stream_rng};
use spinwire_core::optctrl::PulseProblem;
use spinwire_core::spin_model::{channel_terms, project_to_sector};
use spinwire_core::{Phase, SectorBasis};

fn propagation(c: &mut Criterion) {
    let mut g = c.benchmark_group("propagate_200_steps");
    for n in [6, 8, 10] {
        let spec = chain(n, Phase::Antiferro);
        let psi = plus_state(&spec);
        let sector = HamiltonianSchedule::noiseless(spec.clone(), 0.05).unwrap();
        g.bench_with_input(BenchmarkId::new("static_couplings", n), &n, |b, _| {
            b.iter(|| propagate(black_box(&psi), &sector, 200, 200).unwrap())
        });
        let full = HamiltonianSchedule::new(spec.clone(), hyperfine(&spec, 0.05, 0.05), 0.05).unwrap();
        g.bench_with_input(BenchmarkId::new("hyperfine", n), &n, |b, _| {
            b.iter(|| propagate(black_box(&psi), &full, 200, 200).unwrap())
        });
    }
    g.finish();
}

fn ground_state(c: &mut Criterion) {
    let spec = chain(12, Phase::Antiferro);
    let h = channel_terms(&spec, &spec.channel_register(), None).to_sparse();
    let sector = SectorBasis::new(12, 6).unwrap();
    let hs = project_to_sector(&h, &sector).unwrap();
    c.bench_function("lanczos_afm12_half_filling", |b| {
        b.iter(|| lowest_eigenpair(black_box(&hs), LanczosOptions::default()).unwrap())
    });
}

fn noise(c: &mut Criterion) {
    c.bench_function("pink_trajectory_m16384_n8192", |b| {
        b.iter(|| {
            let mut rng = stream_rng(0, 0, 1);
            generate_colored_trajectory(1.0, 0.1, 8192, 0.0005, 1000.0, 1 << 14, &mut rng).unwrap()
        })
    });
}

fn channel(c: &mut Criterion) {
    let spec = chain(10, Phase::Ferro);
    let sched = HamiltonianSchedule::noiseless(spec.clone(), 0.05).unwrap();
    let ens = Ensemble::pure(channel_state(&spec, None).unwrap());
    c.bench_function("fm10_channel_series_320_steps", |b| {
        b.iter(|| channel_series(&sched, black_box(&ens), 320, 1).unwrap())
    });
}

fn pulse_gradient(c: &mut Criterion) {
    let spec = chain(6, Phase::Antiferro);
    let problem = PulseProblem::new(&spec, 8.0, 50).unwrap();
    let amps: Vec<f64> = (0..50).map(|j| 1.0 + 0.5 * (j as f64 * 0.3).sin()).collect();
    c.bench_function("afm6_pulse_gradient_k50", |b| {
        b.iter(|| problem.gradient(black_box(&amps)).unwrap())
    });
}

criterion_group!(benches, propagation, ground_state, noise, channel, pulse_gradient);
criterion_main!(benches);
