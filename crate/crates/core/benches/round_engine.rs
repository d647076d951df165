use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use apfl::datagen::{gen_synthetic, FederatedDataset, SyntheticParams};
use apfl::diagnostics::estimate_zeta;
use apfl::federation::{AlphaCadence, AlphaMode, LrSchedule, Mode, RunConfig, Simulation};
use apfl::models::{ModelSpec, ShardObjective};
use apfl::numkit::{gaussian_vector, Mean, RngStream};
use apfl::Execution;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn dataset(n: usize) -> FederatedDataset {
    let params = SyntheticParams {
        gamma: 1.0,
        beta: 1.0,
        n_clients: n,
        samples_per_client: 200,
        d_feat: 60,
        n_classes: 10,
    };
    gen_synthetic(&params, 1).unwrap().split_all(0.2, 1).unwrap()
}

fn config(n: usize) -> RunConfig {
    RunConfig {
        mode: Mode::Apfl,
        n,
        k: n,
        tau: 10,
        total_iterations: 50,
        batch_size: 20,
        alpha: 0.01,
        alpha_mode: AlphaMode::Adaptive,
        chain_rule: true,
        alpha_update_cadence: AlphaCadence::PerRound,
        schedule: LrSchedule::Geometric { eta0: 0.1, decay: 0.01 },
        seed: 1,
        eval_every: 1,
        record_wallclock: false,
    }
}

fn engine(c: &mut Criterion) {
    let n = 64;
    let data = dataset(n);
    let cfg = config(n);
    let specs = [
        ("logistic", ModelSpec::logistic(60, 10, 1e-2)),
        ("mlp", ModelSpec::mlp(60, 10, vec![32, 32])),
    ];
    let mut group = c.benchmark_group("run_50_iterations");
    group.sample_size(10);
    for (model, spec) in &specs {
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(*model, name), &exec, |b, &exec| {
                b.iter(|| {
                    let sim = Simulation::new(&cfg, spec, &data).unwrap().with_execution(exec);
                    black_box(sim.run().unwrap())
                })
            });
        }
    }
    group.finish();
}

fn diversity(c: &mut Criterion) {
    let data = dataset(64);
    let spec = ModelSpec::logistic(60, 10, 1e-2);
    let objectives: Vec<_> = data.shards().iter().map(|shard| ShardObjective { spec: &spec, shard }).collect();
    let mut rng = RngStream::new(2, 0);
    let probes: Vec<_> = (0..32)
        .map(|_| gaussian_vector(&mut rng, spec.param_count(), Mean::Scalar(0.0), 1.0).unwrap())
        .collect();
    let mut group = c.benchmark_group("estimate_zeta_32_probes");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| black_box(estimate_zeta(&objectives, &probes, exec).unwrap())));
    }
    group.finish();
}

criterion_group!(benches, engine, diversity);
criterion_main!(benches);
