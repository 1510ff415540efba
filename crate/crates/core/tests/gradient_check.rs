//! Analytic gradients against central finite differences.

use dmaflow::nnet::{backward, forward, init, CellKind, ModelParams, NetConfig};
use dmaflow::series::FeatureWindow;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;
const ABS_TOL: f64 = 1e-7;

fn objective(params: &ModelParams, x: &FeatureWindow, target: f64, lambda: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (y, _) = forward(params, x, false, 0.0, &mut rng).unwrap();
    (target - y).powi(2) + lambda * params.l2_penalty()
}

/// Describes every parameter whose gradient misses both tolerances.
fn check(cell: CellKind, channels: usize, width: usize, hidden: usize, seed: u64) -> Vec<String> {
    let cfg = NetConfig {
        input_channels: channels,
        window: width,
        cell,
        hidden,
        filters: 3,
        dense_hidden: 4,
        l2_lambda: 1e-3,
        dropout_rate: 0.0,
        seed,
        ..NetConfig::default()
    };
    let mut params = init(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
    // non-zero biases so every gate path is exercised
    for (i, t) in params.tensors_mut().into_iter().enumerate() {
        if !ModelParams::is_weight(i) {
            t.iter_mut().for_each(|b| *b = rng.gen_range(-0.3..0.3));
        }
    }
    let values = (0..channels * width)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let x = FeatureWindow::new(values, channels, width, width - 1).unwrap();
    let target = rng.gen_range(-1.0..1.0);

    let (_, cache) = forward(&params, &x, false, 0.0, &mut rng).unwrap();
    let analytic = backward(&params, &cache, target, cfg.l2_lambda);

    let mut failures = Vec::new();
    for ti in 0..9 {
        for j in 0..params.tensors()[ti].len() {
            let orig = params.tensors()[ti][j];
            params.tensors_mut()[ti][j] = orig + H;
            let up = objective(&params, &x, target, cfg.l2_lambda);
            params.tensors_mut()[ti][j] = orig - H;
            let down = objective(&params, &x, target, cfg.l2_lambda);
            params.tensors_mut()[ti][j] = orig;
            let numeric = (up - down) / (2.0 * H);
            let a = analytic.tensors()[ti][j];
            let diff = (a - numeric).abs();
            if diff > ABS_TOL && diff / a.abs().max(numeric.abs()) > REL_TOL {
                failures.push(format!(
                    "{cell} k={channels} W={width} seed={seed} {}[{j}]: analytic {a:e} numeric {numeric:e}",
                    ModelParams::TENSOR_NAMES[ti]
                ));
            }
        }
    }
    failures
}

#[test]
fn single_and_three_channel_windows() {
    for cell in [CellKind::Lstm, CellKind::Gru] {
        for channels in [1, 3] {
            for seed in 0..10 {
                let f = check(cell, channels, 6, 4, seed);
                assert!(f.is_empty(), "{f:#?}");
            }
        }
    }
}

#[test]
fn conv_kernel_equal_to_window() {
    // a single recurrent step
    let f = check(CellKind::Gru, 2, 3, 4, 3);
    assert!(f.is_empty(), "{f:#?}");
}
