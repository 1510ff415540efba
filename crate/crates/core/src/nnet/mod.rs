//! Convolutional-recurrent regression network with hand-written gradients.
//!
//! The stack is a 1-D convolution over time (zones as channels) with ReLU,
//! one LSTM or GRU layer unrolled over the convolution output, a ReLU dense
//! layer and a scalar linear output. Dropout follows the convolution and the
//! recurrent layer during training.

mod model;
mod train;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use model::{backward, forward, predict, ForwardCache};
pub use train::{evaluate_mse, predict_dataset, train, EpochRecord, TrainReport};

/// Version tag written into serialized parameter artifacts.
pub const PARAMS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Lstm,
    Gru,
}

impl CellKind {
    /// Number of gate blocks stacked in the recurrent weight matrices.
    pub fn gates(&self) -> usize {
        match self {
            CellKind::Lstm => 4,
            CellKind::Gru => 3,
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
        })
    }
}

impl FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lstm" => Ok(CellKind::Lstm),
            "gru" => Ok(CellKind::Gru),
            other => Err(Error::InvalidConfig(format!(
                "unknown recurrent cell `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub input_channels: usize,
    pub window: usize,
    pub filters: usize,
    pub kernel: usize,
    pub cell: CellKind,
    pub hidden: usize,
    pub dense_hidden: usize,
    pub dropout_rate: f64,
    pub l2_lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    /// Global gradient-norm ceiling applied before each update.
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            input_channels: 1,
            window: 15,
            filters: 16,
            kernel: 3,
            cell: CellKind::Lstm,
            hidden: 32,
            dense_hidden: 16,
            dropout_rate: 0.2,
            l2_lambda: 1e-4,
            learning_rate: 1e-3,
            epochs: 50,
            batch_size: 32,
            patience: 5,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.input_channels == 0
            || self.window == 0
            || self.filters == 0
            || self.kernel == 0
            || self.hidden == 0
            || self.dense_hidden == 0
        {
            return bad("network dimensions must all be at least 1");
        }
        if self.kernel > self.window {
            return bad("convolution kernel cannot be wider than the window");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout rate must lie in [0, 1)");
        }
        if !self.l2_lambda.is_finite() || self.l2_lambda < 0.0 {
            return bad("l2 lambda must be finite and non-negative");
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return bad("learning rate must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return bad("epochs, batch size and patience must be positive");
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return bad("clip norm must be positive");
        }
        Ok(())
    }

    /// Length of the convolution output sequence.
    pub fn conv_len(&self) -> usize {
        self.window - self.kernel + 1
    }
}

/// All trainable tensors, stored flat and row-major.
///
/// The same type holds gradients, which keeps updates and norms uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub cell: CellKind,
    pub channels: usize,
    pub window: usize,
    pub filters: usize,
    pub kernel: usize,
    pub hidden: usize,
    pub dense_hidden: usize,
    /// `filters x channels x kernel`
    pub conv_w: Vec<f64>,
    pub conv_b: Vec<f64>,
    /// `gates*hidden x filters`, gate blocks stacked (LSTM: i, f, g, o; GRU: z, r, n)
    pub rec_wx: Vec<f64>,
    /// `gates*hidden x hidden`
    pub rec_wh: Vec<f64>,
    pub rec_b: Vec<f64>,
    /// `dense_hidden x hidden`
    pub dense_w: Vec<f64>,
    pub dense_b: Vec<f64>,
    pub out_w: Vec<f64>,
    pub out_b: Vec<f64>,
}

/// Serialized form of [`ModelParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsArtifact {
    pub format_version: u32,
    pub params: ModelParams,
}

fn glorot(rng: &mut ChaCha8Rng, len: usize, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let bound = glorot_bound(fan_in, fan_out);
    (0..len).map(|_| rng.gen_range(-bound..=bound)).collect()
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

impl ModelParams {
    /// Zero-filled parameters shaped for `config`.
    pub fn zeros(config: &NetConfig) -> Self {
        let g = config.cell.gates() * config.hidden;
        Self {
            cell: config.cell,
            channels: config.input_channels,
            window: config.window,
            filters: config.filters,
            kernel: config.kernel,
            hidden: config.hidden,
            dense_hidden: config.dense_hidden,
            conv_w: vec![0.0; config.filters * config.input_channels * config.kernel],
            conv_b: vec![0.0; config.filters],
            rec_wx: vec![0.0; g * config.filters],
            rec_wh: vec![0.0; g * config.hidden],
            rec_b: vec![0.0; g],
            dense_w: vec![0.0; config.dense_hidden * config.hidden],
            dense_b: vec![0.0; config.dense_hidden],
            out_w: vec![0.0; config.dense_hidden],
            out_b: vec![0.0; 1],
        }
    }

    /// Same shapes as `self`, all zeros.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
        z
    }

    pub fn tensors(&self) -> [&Vec<f64>; 9] {
        [
            &self.conv_w,
            &self.conv_b,
            &self.rec_wx,
            &self.rec_wh,
            &self.rec_b,
            &self.dense_w,
            &self.dense_b,
            &self.out_w,
            &self.out_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 9] {
        [
            &mut self.conv_w,
            &mut self.conv_b,
            &mut self.rec_wx,
            &mut self.rec_wh,
            &mut self.rec_b,
            &mut self.dense_w,
            &mut self.dense_b,
            &mut self.out_w,
            &mut self.out_b,
        ]
    }

    /// Tensor names in [`Self::tensors`] order.
    pub const TENSOR_NAMES: [&'static str; 9] = [
        "conv_w", "conv_b", "rec_wx", "rec_wh", "rec_b", "dense_w", "dense_b", "out_w", "out_b",
    ];

    /// Whether the tensor at `index` is a weight (L2-penalized) rather than a bias.
    pub fn is_weight(index: usize) -> bool {
        matches!(index, 0 | 2 | 3 | 5 | 7)
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn l2_penalty(&self) -> f64 {
        self.tensors()
            .iter()
            .enumerate()
            .filter(|(i, _)| Self::is_weight(*i))
            .map(|(_, t)| t.iter().map(|w| w * w).sum::<f64>())
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .map(|t| t.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn matches_shape(&self, other: &ModelParams) -> bool {
        self.cell == other.cell
            && self
                .tensors()
                .iter()
                .zip(other.tensors())
                .all(|(a, b)| a.len() == b.len())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ParamsArtifact {
            format_version: PARAMS_FORMAT_VERSION,
            params: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let artifact: ParamsArtifact = serde_json::from_str(text)?;
        if artifact.format_version != PARAMS_FORMAT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported parameter format version {}",
                artifact.format_version
            )));
        }
        let p = artifact.params;
        let expected = ModelParams::zeros(&NetConfig {
            input_channels: p.channels,
            window: p.window,
            filters: p.filters,
            kernel: p.kernel,
            cell: p.cell,
            hidden: p.hidden,
            dense_hidden: p.dense_hidden,
            ..NetConfig::default()
        });
        if !p.matches_shape(&expected) {
            return Err(Error::ShapeMismatch {
                expected: "tensor sizes implied by the stored dimensions".into(),
                got: "inconsistent tensor lengths".into(),
            });
        }
        Ok(p)
    }
}

/// Glorot-uniform weights, zero biases; deterministic per `config.seed`.
pub fn init(config: &NetConfig) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut p = ModelParams::zeros(config);
    let g = config.cell.gates() * config.hidden;
    let (c, k, f, h, d) = (
        config.input_channels,
        config.kernel,
        config.filters,
        config.hidden,
        config.dense_hidden,
    );
    p.conv_w = glorot(&mut rng, p.conv_w.len(), c * k, f * k);
    p.rec_wx = glorot(&mut rng, p.rec_wx.len(), f, g);
    p.rec_wh = glorot(&mut rng, p.rec_wh.len(), h, g);
    p.dense_w = glorot(&mut rng, p.dense_w.len(), h, d);
    p.out_w = glorot(&mut rng, p.out_w.len(), d, 1);
    Ok(p)
}

/// Glorot bound for each weight tensor, in [`ModelParams::tensors`] order
/// (biases map to 0).
pub fn init_bounds(config: &NetConfig) -> [f64; 9] {
    let g = config.cell.gates() * config.hidden;
    [
        glorot_bound(
            config.input_channels * config.kernel,
            config.filters * config.kernel,
        ),
        0.0,
        glorot_bound(config.filters, g),
        glorot_bound(config.hidden, g),
        0.0,
        glorot_bound(config.hidden, config.dense_hidden),
        0.0,
        glorot_bound(config.dense_hidden, 1),
        0.0,
    ]
}

/// `w <- w - lr * grad` for every parameter.
pub fn sgd_step(
    params: &mut ModelParams,
    gradients: &ModelParams,
    learning_rate: f64,
) -> Result<()> {
    if !params.matches_shape(gradients) {
        return Err(Error::ShapeMismatch {
            expected: "gradients shaped like params".into(),
            got: "different tensor sizes".into(),
        });
    }
    for (w, g) in params.tensors_mut().into_iter().zip(gradients.tensors()) {
        for (wi, gi) in w.iter_mut().zip(g) {
            *wi -= learning_rate * gi;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let cfg = NetConfig {
            input_channels: 3,
            seed: 11,
            ..NetConfig::default()
        };
        let a = init(&cfg).unwrap();
        assert_eq!(a, init(&cfg).unwrap());
        assert!(a
            .conv_b
            .iter()
            .chain(&a.rec_b)
            .chain(&a.dense_b)
            .chain(&a.out_b)
            .all(|&b| b == 0.0));
        let other = init(&NetConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn init_respects_glorot_bounds() {
        for cell in [CellKind::Lstm, CellKind::Gru] {
            let cfg = NetConfig {
                input_channels: 4,
                cell,
                ..NetConfig::default()
            };
            let p = init(&cfg).unwrap();
            let bounds = init_bounds(&cfg);
            for (i, t) in p.tensors().iter().enumerate() {
                assert!(
                    t.iter().all(|v| v.abs() <= bounds[i]),
                    "{}",
                    ModelParams::TENSOR_NAMES[i]
                );
                if ModelParams::is_weight(i) {
                    // a draw that is all tiny would point at a wrong bound
                    let max = t.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    assert!(max > 0.5 * bounds[i]);
                }
            }
        }
    }

    #[test]
    fn sgd_step_examples() {
        let cfg = NetConfig {
            hidden: 1,
            dense_hidden: 1,
            filters: 1,
            kernel: 1,
            window: 1,
            ..NetConfig::default()
        };
        let mut p = ModelParams::zeros(&cfg);
        p.out_w[0] = 1.0;
        let mut g = p.zeros_like();
        g.out_w[0] = 0.5;
        sgd_step(&mut p, &g, 0.1).unwrap();
        assert_eq!(p.out_w[0], 0.95);

        let before = p.clone();
        let zero = p.zeros_like();
        sgd_step(&mut p, &zero, 0.1).unwrap();
        assert_eq!(p, before);

        // pure L2 gradient 2*lambda*w with lambda = 0.5
        let mut p = ModelParams::zeros(&cfg);
        p.out_w[0] = 1.0;
        let mut g = p.zeros_like();
        g.out_w[0] = 2.0 * 0.5 * p.out_w[0];
        sgd_step(&mut p, &g, 0.1).unwrap();
        assert!((p.out_w[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn sgd_step_rejects_mismatched_shapes() {
        let mut p = ModelParams::zeros(&NetConfig::default());
        let g = ModelParams::zeros(&NetConfig {
            input_channels: 2,
            ..NetConfig::default()
        });
        assert!(sgd_step(&mut p, &g, 0.1).is_err());
    }

    #[test]
    fn params_json_round_trip_is_bit_exact() {
        let cfg = NetConfig {
            input_channels: 2,
            cell: CellKind::Gru,
            seed: 3,
            ..NetConfig::default()
        };
        let p = init(&cfg).unwrap();
        let back = ModelParams::from_json(&p.to_json().unwrap()).unwrap();
        for (a, b) in p.tensors().iter().zip(back.tensors()) {
            assert!(a
                .iter()
                .zip(b.iter())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn config_validation() {
        assert!(NetConfig {
            kernel: 16,
            ..NetConfig::default()
        }
        .validate()
        .is_err());
        assert!(NetConfig {
            dropout_rate: 1.0,
            ..NetConfig::default()
        }
        .validate()
        .is_err());
        assert!(NetConfig {
            hidden: 0,
            ..NetConfig::default()
        }
        .validate()
        .is_err());
        assert!(NetConfig::default().validate().is_ok());
    }
}
