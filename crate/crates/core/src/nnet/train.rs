use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{accumulate_backward, add_l2, forward, predict};
use super::{init, sgd_step, ModelParams, NetConfig};
use crate::error::{Error, Result};
use crate::series::WindowedDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean squared error over the epoch's training passes (dropout active).
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub params: ModelParams,
}

fn check_dataset(config: &NetConfig, data: &WindowedDataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let first = &data.inputs[0];
    if first.channels() != config.input_channels || first.width() != config.window {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}", config.input_channels, config.window),
            got: format!("{}x{}", first.channels(), first.width()),
        });
    }
    Ok(())
}

pub fn predict_dataset(params: &ModelParams, data: &WindowedDataset) -> Result<Vec<f64>> {
    data.inputs.iter().map(|x| predict(params, x)).collect()
}

pub fn evaluate_mse(params: &ModelParams, data: &WindowedDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let preds = predict_dataset(params, data)?;
    let sse: f64 = preds
        .iter()
        .zip(&data.targets)
        .map(|(p, y)| (p - y) * (p - y))
        .sum();
    Ok(sse / data.len() as f64)
}

/// Mini-batch SGD on squared error with L2, early-stopped on validation MSE.
/// Returns the parameters from the best validation epoch.
pub fn train(
    config: &NetConfig,
    train_set: &WindowedDataset,
    val_set: &WindowedDataset,
) -> Result<TrainReport> {
    config.validate()?;
    check_dataset(config, train_set)?;
    check_dataset(config, val_set)?;

    let mut params = init(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    // keep shuffling/dropout draws independent of the init stream
    rng.set_stream(1);

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut grads = params.zeros_like();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, ModelParams)> = None;
    let mut stale = 0;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut sse = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let (pred, cache) = forward(
                    &params,
                    &train_set.inputs[i],
                    true,
                    config.dropout_rate,
                    &mut rng,
                )?;
                let err = pred - train_set.targets[i];
                sse += err * err;
                accumulate_backward(&params, &cache, 2.0 * err * scale, &mut grads);
            }
            add_l2(&params, config.l2_lambda, &mut grads);
            let norm = grads.norm();
            if !norm.is_finite() {
                return Err(Error::DivergenceDetected { epoch, loss: norm });
            }
            if norm > config.clip_norm {
                grads.scale(config.clip_norm / norm);
            }
            sgd_step(&mut params, &grads, config.learning_rate)?;
        }
        let train_loss = sse / train_set.len() as f64;
        if !train_loss.is_finite() || !params.is_finite() {
            return Err(Error::DivergenceDetected {
                epoch,
                loss: train_loss,
            });
        }
        let val_loss = evaluate_mse(&params, val_set)?;
        if !val_loss.is_finite() {
            return Err(Error::DivergenceDetected {
                epoch,
                loss: val_loss,
            });
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        match &best {
            Some((_, b, _)) if val_loss >= *b => {
                stale += 1;
                if stale >= config.patience {
                    break;
                }
            }
            _ => {
                best = Some((epoch, val_loss, params.clone()));
                stale = 0;
            }
        }
    }

    let (best_epoch, best_val_loss, params) = best.expect("at least one epoch runs");
    Ok(TrainReport {
        history,
        best_epoch,
        best_val_loss,
        params,
    })
}
