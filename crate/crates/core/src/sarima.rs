//! Seasonal ARIMA baseline fitted by conditional sum of squares.
//!
//! The model on the differenced series `w_t = (1-B)^d (1-B^s)^D x_t - mean` is
//!
//! ```text
//! phi(B) Phi(B^s) w_t = theta(B) Theta(B^s) e_t
//! ```
//!
//! with the AR and MA polynomials written `1 - sum phi_i B^i` and
//! `1 + sum theta_i B^i`. Residuals are computed recursively with
//! pre-sample observations at the mean and pre-sample residuals at zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::NelderMead;

/// Added to the objective for each AR/MA coefficient with `|c| >= 1`.
pub const BOUND_PENALTY: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SarimaSpec {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    pub seasonal_p: usize,
    pub seasonal_d: usize,
    pub seasonal_q: usize,
    pub period: usize,
    pub include_mean: bool,
}

impl Default for SarimaSpec {
    /// (1,0,1)(0,1,1) with a one-day period at five-minute cadence.
    fn default() -> Self {
        Self {
            p: 1,
            d: 0,
            q: 1,
            seasonal_p: 0,
            seasonal_d: 1,
            seasonal_q: 1,
            period: 288,
            include_mean: true,
        }
    }
}

impl SarimaSpec {
    pub fn arma(p: usize, q: usize) -> Self {
        Self {
            p,
            d: 0,
            q,
            seasonal_p: 0,
            seasonal_d: 0,
            seasonal_q: 0,
            period: 1,
            include_mean: true,
        }
    }

    /// Observations consumed by differencing.
    pub fn diff_len(&self) -> usize {
        self.d + self.seasonal_d * self.period
    }

    pub fn num_coefficients(&self) -> usize {
        self.p + self.q + self.seasonal_p + self.seasonal_q
    }

    pub fn validate(&self) -> Result<()> {
        if self.period == 0 {
            return Err(Error::InvalidConfig(
                "seasonal period must be at least 1".into(),
            ));
        }
        if self.num_coefficients() == 0 && !self.include_mean {
            return Err(Error::InvalidConfig(
                "SARIMA spec needs at least one coefficient or a mean".into(),
            ));
        }
        Ok(())
    }
}

/// Coefficients of a SARIMA model (everything the objective depends on).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SarimaCoefficients {
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub sar: Vec<f64>,
    pub sma: Vec<f64>,
    pub mean: f64,
}

impl SarimaCoefficients {
    pub fn zeros(spec: &SarimaSpec) -> Self {
        Self {
            ar: vec![0.0; spec.p],
            ma: vec![0.0; spec.q],
            sar: vec![0.0; spec.seasonal_p],
            sma: vec![0.0; spec.seasonal_q],
            mean: 0.0,
        }
    }

    fn to_vec(&self, spec: &SarimaSpec) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .ar
            .iter()
            .chain(&self.ma)
            .chain(&self.sar)
            .chain(&self.sma)
            .copied()
            .collect();
        if spec.include_mean {
            v.push(self.mean);
        }
        v
    }

    fn from_slice(spec: &SarimaSpec, v: &[f64]) -> Self {
        let mut it = v.iter().copied();
        let mut take = |n: usize| (0..n).map(|_| it.next().unwrap()).collect::<Vec<_>>();
        let ar = take(spec.p);
        let ma = take(spec.q);
        let sar = take(spec.seasonal_p);
        let sma = take(spec.seasonal_q);
        let mean = if spec.include_mean {
            v[v.len() - 1]
        } else {
            0.0
        };
        Self {
            ar,
            ma,
            sar,
            sma,
            mean,
        }
    }

    fn coefficient_iter(&self) -> impl Iterator<Item = &f64> {
        self.ar
            .iter()
            .chain(&self.ma)
            .chain(&self.sar)
            .chain(&self.sma)
    }

    /// Non-zero `(lag, a_k)` with `w_t = sum a_k w_{t-k} + ...`.
    fn ar_lags(&self, period: usize) -> Vec<(usize, f64)> {
        let mut short = vec![1.0];
        short.extend(self.ar.iter().map(|c| -c));
        let mut seasonal = vec![0.0; self.sar.len() * period + 1];
        seasonal[0] = 1.0;
        for (j, c) in self.sar.iter().enumerate() {
            seasonal[(j + 1) * period] = -c;
        }
        poly_mul(&short, &seasonal)
            .into_iter()
            .enumerate()
            .skip(1)
            .filter(|(_, c)| *c != 0.0)
            .map(|(k, c)| (k, -c))
            .collect()
    }

    /// Non-zero `(lag, m_k)` of the expanded MA polynomial.
    fn ma_lags(&self, period: usize) -> Vec<(usize, f64)> {
        let mut short = vec![1.0];
        short.extend(self.ma.iter().copied());
        let mut seasonal = vec![0.0; self.sma.len() * period + 1];
        seasonal[0] = 1.0;
        for (j, c) in self.sma.iter().enumerate() {
            seasonal[(j + 1) * period] = *c;
        }
        poly_mul(&short, &seasonal)
            .into_iter()
            .enumerate()
            .skip(1)
            .filter(|(_, c)| *c != 0.0)
            .collect()
    }
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Coefficients of `(1-B)^d (1-B^s)^D` by lag, starting at lag 0.
fn diff_polynomial(d: usize, seasonal_d: usize, period: usize) -> Vec<f64> {
    let mut poly = vec![1.0];
    for _ in 0..d {
        poly = poly_mul(&poly, &[1.0, -1.0]);
    }
    let mut seasonal = vec![0.0; period + 1];
    seasonal[0] = 1.0;
    seasonal[period] = -1.0;
    for _ in 0..seasonal_d {
        poly = poly_mul(&poly, &seasonal);
    }
    poly
}

/// Applies `(1-B)^d (1-B^s)^D`; the output is `d + D*s` shorter.
pub fn difference(series: &[f64], d: usize, seasonal_d: usize, period: usize) -> Result<Vec<f64>> {
    let lost = d + seasonal_d * period;
    if series.len() <= lost {
        return Err(Error::SeriesTooShort {
            len: series.len(),
            needed: lost,
        });
    }
    let mut out = series.to_vec();
    for _ in 0..d {
        out = out.windows(2).map(|w| w[1] - w[0]).collect();
    }
    for _ in 0..seasonal_d {
        out = (period..out.len())
            .map(|t| out[t] - out[t - period])
            .collect();
    }
    Ok(out)
}

/// Inverse of [`difference`]: rebuilds the original series from its first
/// `d + D*s` values and the differenced tail.
pub fn integrate(
    differenced: &[f64],
    initial: &[f64],
    d: usize,
    seasonal_d: usize,
    period: usize,
) -> Result<Vec<f64>> {
    let poly = diff_polynomial(d, seasonal_d, period);
    let lost = poly.len() - 1;
    if initial.len() != lost {
        return Err(Error::InsufficientHistory {
            have: initial.len(),
            need: lost,
        });
    }
    let mut x = initial.to_vec();
    x.reserve(differenced.len());
    for &y in differenced {
        let t = x.len();
        let carried: f64 = (1..=lost).map(|k| poly[k] * x[t - k]).sum();
        x.push(y - carried);
    }
    Ok(x)
}

/// One-step residuals of the differenced series. `predictions[t]` is the
/// forecast of `w[t]` made before it was observed (mean included).
fn residual_pass(
    coeffs: &SarimaCoefficients,
    period: usize,
    differenced: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let ar = coeffs.ar_lags(period);
    let ma = coeffs.ma_lags(period);
    let n = differenced.len();
    let mut resid = vec![0.0; n];
    let mut preds = vec![0.0; n];
    for t in 0..n {
        let mut pred = 0.0;
        for &(k, a) in &ar {
            if k <= t {
                pred += a * (differenced[t - k] - coeffs.mean);
            }
        }
        for &(k, m) in &ma {
            if k <= t {
                pred += m * resid[t - k];
            }
        }
        preds[t] = pred + coeffs.mean;
        resid[t] = differenced[t] - preds[t];
    }
    (resid, preds)
}

/// Conditional sum of squared one-step residuals on an already differenced
/// series, plus [`BOUND_PENALTY`] per coefficient outside `(-1, 1)`.
pub fn css_objective(spec: &SarimaSpec, coeffs: &SarimaCoefficients, differenced: &[f64]) -> f64 {
    let (resid, _) = residual_pass(coeffs, spec.period, differenced);
    let css: f64 = resid.iter().map(|e| e * e).sum();
    let violations = coeffs.coefficient_iter().filter(|c| c.abs() >= 1.0).count();
    css + BOUND_PENALTY * violations as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SarimaFit {
    pub spec: SarimaSpec,
    pub coefficients: SarimaCoefficients,
    /// Objective at the fitted coefficients (without penalty when in bounds).
    pub css: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Minimizes the CSS objective by Nelder-Mead from zero coefficients and the
/// sample mean of the differenced series.
pub fn fit(spec: &SarimaSpec, series: &[f64]) -> Result<SarimaFit> {
    spec.validate()?;
    if let Some(i) = series.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput(i));
    }
    let differenced = difference(series, spec.d, spec.seasonal_d, spec.period)?;
    let n = differenced.len() as f64;
    let mut start = SarimaCoefficients::zeros(spec);
    let sd = if spec.include_mean {
        start.mean = differenced.iter().sum::<f64>() / n;
        (differenced
            .iter()
            .map(|v| (v - start.mean).powi(2))
            .sum::<f64>()
            / n)
            .sqrt()
    } else {
        0.0
    };
    let x0 = start.to_vec(spec);
    let mut steps = vec![0.1; spec.num_coefficients()];
    if spec.include_mean {
        steps.push(if sd > 0.0 { 0.1 * sd } else { 0.1 });
    }
    let objective =
        |v: &[f64]| css_objective(spec, &SarimaCoefficients::from_slice(spec, v), &differenced);
    let min = NelderMead::default().minimize(objective, &x0, &steps);
    Ok(SarimaFit {
        spec: *spec,
        coefficients: SarimaCoefficients::from_slice(spec, &min.x),
        css: min.value,
        converged: min.converged,
        iterations: min.iterations,
    })
}

/// Recursive `horizon`-step forecast following `history`, future residuals zero.
pub fn forecast(fit: &SarimaFit, history: &[f64], horizon: usize) -> Result<Vec<f64>> {
    let spec = &fit.spec;
    let lost = spec.diff_len();
    if history.len() <= lost {
        return Err(Error::InsufficientHistory {
            have: history.len(),
            need: lost + 1,
        });
    }
    let coeffs = &fit.coefficients;
    let mut w = difference(history, spec.d, spec.seasonal_d, spec.period)?;
    let (mut resid, _) = residual_pass(coeffs, spec.period, &w);
    let ar = coeffs.ar_lags(spec.period);
    let ma = coeffs.ma_lags(spec.period);
    for _ in 0..horizon {
        let t = w.len();
        let mut pred = coeffs.mean;
        for &(k, a) in &ar {
            if k <= t {
                pred += a * (w[t - k] - coeffs.mean);
            }
        }
        for &(k, m) in &ma {
            if k <= t {
                pred += m * resid[t - k];
            }
        }
        w.push(pred);
        resid.push(0.0);
    }
    let rebuilt = integrate(&w, &history[..lost], spec.d, spec.seasonal_d, spec.period)?;
    Ok(rebuilt[history.len()..].to_vec())
}

/// One-step-ahead forecasts for every index in `start..series.len()`, each
/// using only `series[..t]`. Equivalent to calling [`forecast`] with horizon
/// 1 at every step, in a single pass.
pub fn rolling_one_step(fit: &SarimaFit, series: &[f64], start: usize) -> Result<Vec<f64>> {
    let spec = &fit.spec;
    let lost = spec.diff_len();
    if start <= lost || start > series.len() {
        return Err(Error::InsufficientHistory {
            have: start,
            need: lost + 1,
        });
    }
    let w = difference(series, spec.d, spec.seasonal_d, spec.period)?;
    let (_, preds) = residual_pass(&fit.coefficients, spec.period, &w);
    let poly = diff_polynomial(spec.d, spec.seasonal_d, spec.period);
    Ok((start..series.len())
        .map(|t| {
            let carried: f64 = (1..=lost).map(|k| poly[k] * series[t - k]).sum();
            preds[t - lost] - carried
        })
        .collect())
}
