use dmaflow::sarima::{css_objective, fit, rolling_one_step, SarimaCoefficients, SarimaSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn noise(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    (0..n).map(|_| normal.sample(&mut rng)).collect()
}

fn simulate_ar1(phi: f64, n: usize, seed: u64) -> Vec<f64> {
    let e = noise(n + 200, seed);
    let mut x = vec![0.0; e.len()];
    for t in 1..e.len() {
        x[t] = phi * x[t - 1] + e[t];
    }
    x[200..].to_vec()
}

fn simulate_ma1(theta: f64, n: usize, seed: u64) -> Vec<f64> {
    let e = noise(n + 1, seed);
    (1..=n).map(|t| e[t] + theta * e[t - 1]).collect()
}

/// Least squares slope of x_t on x_{t-1} (both centered).
fn ols_lag1(x: &[f64]) -> f64 {
    let n = x.len() - 1;
    let mean_prev = x[..n].iter().sum::<f64>() / n as f64;
    let mean_next = x[1..].iter().sum::<f64>() / n as f64;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for t in 1..x.len() {
        sxy += (x[t - 1] - mean_prev) * (x[t] - mean_next);
        sxx += (x[t - 1] - mean_prev).powi(2);
    }
    sxy / sxx
}

#[test]
fn recovers_ar1() {
    let x = simulate_ar1(0.7, 5000, 17);
    let oracle = ols_lag1(&x);
    assert!((oracle - 0.7).abs() <= 0.05, "oracle {oracle}");
    let f = fit(&SarimaSpec::arma(1, 0), &x).unwrap();
    let phi = f.coefficients.ar[0];
    assert!((0.65..=0.75).contains(&phi), "phi {phi}");
    assert!((phi - oracle).abs() <= 0.05);
    assert!(f.converged);
}

#[test]
fn recovers_ma1() {
    let x = simulate_ma1(0.5, 5000, 23);
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let c0: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    let c1: f64 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    let r1 = c1 / c0;
    // invert rho1 = theta / (1 + theta^2) on the invertible branch
    let oracle = (1.0 - (1.0 - 4.0 * r1 * r1).sqrt()) / (2.0 * r1);
    assert!((0.4..=0.6).contains(&oracle), "oracle {oracle}");
    let f = fit(&SarimaSpec::arma(0, 1), &x).unwrap();
    let theta = f.coefficients.ma[0];
    assert!((0.4..=0.6).contains(&theta), "theta {theta}");
}

#[test]
fn fit_is_deterministic_and_improves_on_start() {
    let x = simulate_ar1(0.4, 800, 5);
    let spec = SarimaSpec::arma(1, 1);
    let a = fit(&spec, &x).unwrap();
    assert_eq!(a, fit(&spec, &x).unwrap());
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let start = SarimaCoefficients {
        mean,
        ..SarimaCoefficients::zeros(&spec)
    };
    assert!(css_objective(&spec, &a.coefficients, &x) <= css_objective(&spec, &start, &x));
}

#[test]
fn periodic_series_is_forecast_accurately() {
    let period = 24;
    let e = noise(24 * 60, 3);
    let x: Vec<f64> = (0..24 * 60)
        .map(|t| {
            let phase = (t % period) as f64 / period as f64 * std::f64::consts::TAU;
            10.0 + 4.0 * phase.sin() + 2.0 * (2.0 * phase).cos() + 0.05 * e[t]
        })
        .collect();
    let split = 24 * 45;
    let spec = SarimaSpec {
        p: 0,
        d: 0,
        q: 0,
        seasonal_p: 0,
        seasonal_d: 1,
        seasonal_q: 1,
        period,
        include_mean: false,
    };
    let f = fit(&spec, &x[..split]).unwrap();
    let preds = rolling_one_step(&f, &x, split).unwrap();
    let mse: f64 = preds
        .iter()
        .zip(&x[split..])
        .map(|(p, y)| (p - y).powi(2))
        .sum::<f64>()
        / preds.len() as f64;
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64).sqrt();
    assert!(mse.sqrt() < 0.1 * sd, "rmse {} sd {sd}", mse.sqrt());
}
