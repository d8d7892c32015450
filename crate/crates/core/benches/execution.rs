//! Sequential against data-parallel execution on the three parallel hot
//! paths: the SEM fit, model-based reconstruction and generative draws.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vdrelabel::diagnostics::reconstruct_from_model;
use vdrelabel::oracle::generative_k_frequencies;
use vdrelabel::sinusoid::{self, SignalSpec};
use vdrelabel::{sem_fit, ApproxModel, Execution, FitConfig, GaussianComponent, InitRule, ParamSpace, SampleSet};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn three_lines() -> ApproxModel {
    ApproxModel::new(
        sinusoid::frequency_space(),
        vec![
            GaussianComponent::new(vec![0.62], vec![1e-4], 0.98),
            GaussianComponent::new(vec![0.68], vec![4e-4], 0.25),
            GaussianComponent::new(vec![0.74], vec![1e-4], 0.97),
        ],
        0.2,
    )
    .unwrap()
}

fn fit(c: &mut Criterion) {
    let model = three_lines();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut set = SampleSet::new(model.space.clone());
    for _ in 0..16_000 {
        set.push(model.sample(&mut rng).0).unwrap();
    }
    let mut g = c.benchmark_group("sem_fit_16k_samples_10_iterations");
    g.sample_size(10);
    for (name, exec) in MODES {
        let cfg = FitConfig { iterations: 10, averaging_window: 5, init_rule: InitRule::Fixed(3), execution: exec, ..FitConfig::default() };
        g.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| b.iter(|| sem_fit(&set, cfg).unwrap()));
    }
    g.finish();
}

fn reconstruction(c: &mut Criterion) {
    let model = three_lines();
    let y = sinusoid::generate_synthetic_signal(&SignalSpec::default(), 2).unwrap().y;
    let mut g = c.benchmark_group("model_reconstruction_10k_draws");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| reconstruct_from_model(&model, 10_000, &y, 20.0, true, 3, exec).unwrap()));
    }
    g.finish();
}

fn generative(c: &mut Criterion) {
    let model = ApproxModel::new(
        ParamSpace::interval(0.0, 1.0).unwrap(),
        vec![GaussianComponent::new(vec![0.3], vec![0.01], 0.8), GaussianComponent::new(vec![0.7], vec![0.02], 0.4)],
        0.3,
    )
    .unwrap();
    let mut g = c.benchmark_group("generative_draws_200k");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| generative_k_frequencies(&model, 200_000, 4, exec)));
    }
    g.finish();
}

criterion_group!(benches, fit, reconstruction, generative);
criterion_main!(benches);
