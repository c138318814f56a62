use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use flan::benchmark::{generate_synthetic, split, SyntheticSpec, TabularBenchmark};
use flan::cellgraph::CellArch;
use flan::encodings::{encode_path, score_features, unify};
use flan::metrics::kendall_tau;
use flan::predictor::{FlowMode, PredictorConfig, PredictorModel};
use flan::rng;
use flan::search::{search, OracleSurrogate, SearchConfig};
use flan::training::{batch_gradients, fit, TrainConfig};

fn desk(mode: FlowMode) -> PredictorConfig {
    PredictorConfig {
        op_embedding_dim: 16,
        node_embedding_dim: 16,
        hidden_dim: 32,
        gcn_dims: vec![32; 5],
        mlp_dims: vec![64; 3],
        backward_gcn_dims: vec![32; 5],
        op_update_mlp_dims: vec![32],
        supp_embedder_dims: vec![32, 32],
        nn_emb_dim: 32,
        forward_mode: mode,
        backward_mode: mode,
        ..PredictorConfig::default()
    }
}

fn bench_1024() -> TabularBenchmark {
    generate_synthetic(&SyntheticSpec::with_random_utilities(5, 3, 1024, 1, 0.1, 1.0)).unwrap()
}

fn metrics(c: &mut Criterion) {
    let mut r = rng::rng_from_seed(1);
    let x: Vec<f64> = (0..10_000).map(|_| rng::normal(&mut r)).collect();
    let y: Vec<f64> = x.iter().map(|v| v + rng::normal(&mut r)).collect();
    c.bench_function("kendall_tau/10k", |b| b.iter(|| kendall_tau(black_box(&x), black_box(&y)).unwrap()));
}

fn encodings(c: &mut Criterion) {
    let bench = generate_synthetic(&SyntheticSpec::with_random_utilities(7, 3, 1024, 2, 0.1, 1.0)).unwrap();
    c.bench_function("encode_path/1024x7", |b| {
        b.iter(|| {
            for a in bench.archs() {
                black_box(encode_path(a, &bench.vocab, usize::MAX));
            }
        })
    });
    c.bench_function("score_features/1024x7", |b| {
        b.iter(|| {
            for a in bench.archs() {
                black_box(score_features(a, &bench.vocab));
            }
        })
    });
}

fn predictor(c: &mut Criterion) {
    let bench = bench_1024();
    let archs: Vec<&CellArch> = bench.archs().iter().collect();
    let mut group = c.benchmark_group("predict_1024");
    group.sample_size(10);
    for mode in [FlowMode::Dgf, FlowMode::Gat, FlowMode::Ensemble] {
        let model = PredictorModel::init(desk(mode), unify(&[bench.vocab.clone()]).unwrap(), 0).unwrap();
        group.bench_function(mode.to_string(), |b| b.iter(|| model.predict(black_box(&archs), None).unwrap()));
    }
    group.finish();

    let model = PredictorModel::init(desk(FlowMode::Ensemble), unify(&[bench.vocab.clone()]).unwrap(), 0).unwrap();
    let batch: Vec<&CellArch> = archs[..8].to_vec();
    let targets = [0.3, -1.2, 0.8, 0.1, 1.5, -0.4, -0.9, 0.6];
    c.bench_function("batch_gradients/ensemble/8", |b| {
        b.iter(|| batch_gradients(&model, black_box(&batch), &targets, 0.1, None).unwrap())
    });
}

fn training(c: &mut Criterion) {
    let bench = bench_1024();
    let (train, _) = split(&bench, 128, 0).unwrap();
    let cfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    let init = PredictorModel::init(desk(FlowMode::Ensemble), unify(&[bench.vocab.clone()]).unwrap(), 0).unwrap();
    let mut group = c.benchmark_group("fit");
    group.sample_size(10);
    group.bench_function("ensemble/128x1", |b| {
        b.iter_batched(
            || init.clone(),
            |mut m| fit(&mut m, &bench, &train, &cfg, None).unwrap(),
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

fn searching(c: &mut Criterion) {
    let bench = bench_1024();
    let cfg = SearchConfig {
        budget_per_iter: 16,
        max_iters: 10,
        initial_sample: None,
        pool_floor: 512,
        seed: 0,
    };
    c.bench_function("search/oracle/1024x10", |b| b.iter(|| search(&bench, &mut OracleSurrogate, &cfg).unwrap()));
}

criterion_group!(benches, metrics, encodings, predictor, training, searching);
criterion_main!(benches);
