use criterion::{black_box, criterion_group, criterion_main, Criterion};
use dmaflow::nnet::{backward, forward, predict, CellKind};
use dmaflow::sarima::{css_objective, difference, fit, SarimaCoefficients, SarimaSpec};
use dmaflow::series::{correlation_matrix, pearson, IndexRange};
use dmaflow_bench::{network, panel, window};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn network_kernels(c: &mut Criterion) {
    for channels in [1, 4] {
        let (mut cfg, params) = network(channels);
        let x = window(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        c.bench_function(&format!("lstm forward k={channels}"), |b| {
            b.iter(|| predict(black_box(&params), black_box(&x)).unwrap())
        });
        c.bench_function(&format!("lstm forward+backward k={channels}"), |b| {
            b.iter(|| {
                let (_, cache) = forward(&params, black_box(&x), true, 0.2, &mut rng).unwrap();
                backward(&params, &cache, 0.5, 1e-4)
            })
        });
        cfg.cell = CellKind::Gru;
        let gru = dmaflow::nnet::init(&cfg).unwrap();
        c.bench_function(&format!("gru forward+backward k={channels}"), |b| {
            b.iter(|| {
                let (_, cache) = forward(&gru, black_box(&x), true, 0.2, &mut rng).unwrap();
                backward(&gru, &cache, 0.5, 1e-4)
            })
        });
    }
}

fn correlation_kernels(c: &mut Criterion) {
    let p = panel();
    let (a, b) = (&p.rows()[0], &p.rows()[4]);
    c.bench_function("pearson one pair", |bch| {
        bch.iter(|| pearson(black_box(a), black_box(b)).unwrap())
    });
    let range = IndexRange::new(0, p.len());
    c.bench_function("correlation matrix", |bch| {
        bch.iter(|| correlation_matrix(black_box(&p), range).unwrap())
    });
}

fn sarima_kernels(c: &mut Criterion) {
    let p = panel();
    let series = &p.rows()[4];
    let spec = SarimaSpec::default();
    let w = difference(series, spec.d, spec.seasonal_d, spec.period).unwrap();
    let coeffs = SarimaCoefficients {
        ar: vec![0.5],
        ma: vec![0.2],
        sma: vec![-0.6],
        ..SarimaCoefficients::zeros(&spec)
    };
    c.bench_function("css objective", |b| {
        b.iter(|| css_objective(&spec, black_box(&coeffs), black_box(&w)))
    });
    let mut group = c.benchmark_group("sarima");
    group.sample_size(10);
    group.bench_function("fit two weeks", |b| {
        b.iter(|| fit(&spec, black_box(series)).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    network_kernels,
    correlation_kernels,
    sarima_kernels
);
criterion_main!(benches);
