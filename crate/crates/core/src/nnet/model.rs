use rand::Rng;

use super::{CellKind, ModelParams};
use crate::error::{Error, Result};
use crate::series::FeatureWindow;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `tanh` through one `exp`; libm's `tanh` is about twice as slow.
#[inline]
fn tanh(x: f64) -> f64 {
    2.0 * sigmoid(2.0 * x) - 1.0
}

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ac, bc) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ac
        .remainder()
        .iter()
        .zip(bc.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ac.zip(bc) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `out[r] += sum_c m[r, c] * x[c]` for a row-major `rows x x.len()` matrix.
#[inline]
fn matvec_acc(m: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (row, o) in m.chunks_exact(cols).zip(out.iter_mut()) {
        *o += dot(row, x);
    }
}

/// `out[c] += sum_r m[r, c] * y[r]`
#[inline]
fn matvec_t_acc(m: &[f64], y: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (row, &yr) in m.chunks_exact(cols).zip(y) {
        if yr == 0.0 {
            continue;
        }
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * yr;
        }
    }
}

/// `m[r, c] += y[r] * x[c]`
#[inline]
fn outer_acc(m: &mut [f64], y: &[f64], x: &[f64]) {
    let cols = x.len();
    for (row, &yr) in m.chunks_exact_mut(cols).zip(y) {
        if yr == 0.0 {
            continue;
        }
        for (a, b) in row.iter_mut().zip(x) {
            *a += yr * b;
        }
    }
}

/// Intermediates of one forward pass, consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Vec<f64>,
    /// conv pre-activations, `filters x steps`
    conv_pre: Vec<f64>,
    /// dropout scale per conv activation (0 or 1/(1-p)); empty at inference
    conv_mask: Vec<f64>,
    /// recurrent inputs after ReLU and dropout, `steps x filters`
    seq: Vec<f64>,
    /// post-activation gates per step, `steps x gates*hidden`
    gates: Vec<f64>,
    /// LSTM cell states per step (empty for GRU), `steps x hidden`
    cells: Vec<f64>,
    /// hidden states per step, `steps x hidden`
    hiddens: Vec<f64>,
    rec_mask: Vec<f64>,
    /// final hidden state after dropout
    rec_out: Vec<f64>,
    dense_pre: Vec<f64>,
    dense_out: Vec<f64>,
    pub prediction: f64,
}

impl ForwardCache {
    /// Conv-layer outputs after ReLU and dropout, `steps x filters`.
    pub fn conv_activations(&self) -> &[f64] {
        &self.seq
    }
}

fn dropout_mask<R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

/// Forward pass. With `training`, dropout at `dropout_rate` is sampled from
/// `rng` (inverted scaling); otherwise `rng` is never touched.
pub fn forward<R: Rng + ?Sized>(
    params: &ModelParams,
    window: &FeatureWindow,
    training: bool,
    dropout_rate: f64,
    rng: &mut R,
) -> Result<(f64, ForwardCache)> {
    if window.channels() != params.channels || window.width() != params.window {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}", params.channels, params.window),
            got: format!("{}x{}", window.channels(), window.width()),
        });
    }
    let (c_in, w, f, k, h, d) = (
        params.channels,
        params.window,
        params.filters,
        params.kernel,
        params.hidden,
        params.dense_hidden,
    );
    let steps = w - k + 1;
    let x = window.as_slice();
    let dropping = training && dropout_rate > 0.0;

    let mut conv_pre = vec![0.0; f * steps];
    for fi in 0..f {
        let kern = &params.conv_w[fi * c_in * k..(fi + 1) * c_in * k];
        for tau in 0..steps {
            let mut acc = params.conv_b[fi];
            for ch in 0..c_in {
                let xs = &x[ch * w + tau..ch * w + tau + k];
                let ks = &kern[ch * k..(ch + 1) * k];
                acc += xs.iter().zip(ks).map(|(a, b)| a * b).sum::<f64>();
            }
            conv_pre[fi * steps + tau] = acc;
        }
    }
    let conv_mask = if dropping {
        dropout_mask(f * steps, dropout_rate, rng)
    } else {
        Vec::new()
    };
    let mut seq = vec![0.0; steps * f];
    for fi in 0..f {
        for tau in 0..steps {
            let i = fi * steps + tau;
            let mut a = conv_pre[i].max(0.0);
            if dropping {
                a *= conv_mask[i];
            }
            seq[tau * f + fi] = a;
        }
    }

    let g = params.cell.gates() * h;
    let mut gates = vec![0.0; steps * g];
    let mut hiddens = vec![0.0; steps * h];
    let mut cells = match params.cell {
        CellKind::Lstm => vec![0.0; steps * h],
        CellKind::Gru => Vec::new(),
    };
    let zeros = vec![0.0; h];
    for tau in 0..steps {
        let xt = &seq[tau * f..(tau + 1) * f];
        let (prev_rows, rest) = hiddens.split_at_mut(tau * h);
        let h_prev: &[f64] = if tau == 0 {
            &zeros
        } else {
            &prev_rows[(tau - 1) * h..]
        };
        let h_cur = &mut rest[..h];
        let gt = &mut gates[tau * g..(tau + 1) * g];
        gt.copy_from_slice(&params.rec_b);
        matvec_acc(&params.rec_wx, xt, gt);
        match params.cell {
            CellKind::Lstm => {
                matvec_acc(&params.rec_wh, h_prev, gt);
                let (c_prev_rows, c_rest) = cells.split_at_mut(tau * h);
                let c_prev: &[f64] = if tau == 0 {
                    &zeros
                } else {
                    &c_prev_rows[(tau - 1) * h..]
                };
                let c_cur = &mut c_rest[..h];
                for j in 0..h {
                    let i_g = sigmoid(gt[j]);
                    let f_g = sigmoid(gt[h + j]);
                    let c_g = tanh(gt[2 * h + j]);
                    let o_g = sigmoid(gt[3 * h + j]);
                    gt[j] = i_g;
                    gt[h + j] = f_g;
                    gt[2 * h + j] = c_g;
                    gt[3 * h + j] = o_g;
                    let c = f_g * c_prev[j] + i_g * c_g;
                    c_cur[j] = c;
                    h_cur[j] = o_g * tanh(c);
                }
            }
            CellKind::Gru => {
                // update and reset gates see h_prev directly; the candidate sees r * h_prev
                matvec_acc(&params.rec_wh[..2 * h * h], h_prev, &mut gt[..2 * h]);
                for v in gt[..2 * h].iter_mut() {
                    *v = sigmoid(*v);
                }
                let rh: Vec<f64> = (0..h).map(|j| gt[h + j] * h_prev[j]).collect();
                matvec_acc(&params.rec_wh[2 * h * h..], &rh, &mut gt[2 * h..]);
                for j in 0..h {
                    let n = tanh(gt[2 * h + j]);
                    gt[2 * h + j] = n;
                    let z = gt[j];
                    h_cur[j] = z * h_prev[j] + (1.0 - z) * n;
                }
            }
        }
    }

    let last = &hiddens[(steps - 1) * h..];
    let rec_mask = if dropping {
        dropout_mask(h, dropout_rate, rng)
    } else {
        Vec::new()
    };
    let rec_out: Vec<f64> = if dropping {
        last.iter().zip(&rec_mask).map(|(a, m)| a * m).collect()
    } else {
        last.to_vec()
    };

    let mut dense_pre = params.dense_b.clone();
    matvec_acc(&params.dense_w, &rec_out, &mut dense_pre);
    let dense_out: Vec<f64> = dense_pre.iter().map(|v| v.max(0.0)).collect();
    let prediction = params.out_b[0]
        + params
            .out_w
            .iter()
            .zip(&dense_out)
            .map(|(a, b)| a * b)
            .sum::<f64>();
    debug_assert_eq!(dense_out.len(), d);

    Ok((
        prediction,
        ForwardCache {
            input: x.to_vec(),
            conv_pre,
            conv_mask,
            seq,
            gates,
            cells,
            hiddens,
            rec_mask,
            rec_out,
            dense_pre,
            dense_out,
            prediction,
        },
    ))
}

/// Inference-mode forward pass.
pub fn predict(params: &ModelParams, window: &FeatureWindow) -> Result<f64> {
    let mut no_rng = rand::rngs::mock::StepRng::new(0, 0);
    forward(params, window, false, 0.0, &mut no_rng).map(|(y, _)| y)
}

/// Gradient of `(target - prediction)^2 + l2_lambda * sum(w^2)` with respect to
/// every parameter (biases are not penalized).
pub fn backward(
    params: &ModelParams,
    cache: &ForwardCache,
    target: f64,
    l2_lambda: f64,
) -> ModelParams {
    let mut grads = params.zeros_like();
    accumulate_backward(params, cache, 2.0 * (cache.prediction - target), &mut grads);
    add_l2(params, l2_lambda, &mut grads);
    grads
}

pub(crate) fn add_l2(params: &ModelParams, l2_lambda: f64, grads: &mut ModelParams) {
    if l2_lambda == 0.0 {
        return;
    }
    for (i, (g, w)) in grads
        .tensors_mut()
        .into_iter()
        .zip(params.tensors())
        .enumerate()
    {
        if ModelParams::is_weight(i) {
            for (gi, wi) in g.iter_mut().zip(w) {
                *gi += 2.0 * l2_lambda * wi;
            }
        }
    }
}

/// Adds the data-term gradient for an output sensitivity `d_pred` into `grads`.
pub(crate) fn accumulate_backward(
    params: &ModelParams,
    cache: &ForwardCache,
    d_pred: f64,
    grads: &mut ModelParams,
) {
    let (c_in, w, f, k, h) = (
        params.channels,
        params.window,
        params.filters,
        params.kernel,
        params.hidden,
    );
    let steps = w - k + 1;
    let g = params.cell.gates() * h;

    grads.out_b[0] += d_pred;
    let mut d_dense = vec![0.0; params.dense_hidden];
    for j in 0..params.dense_hidden {
        grads.out_w[j] += d_pred * cache.dense_out[j];
        if cache.dense_pre[j] > 0.0 {
            d_dense[j] = d_pred * params.out_w[j];
        }
    }
    outer_acc(&mut grads.dense_w, &d_dense, &cache.rec_out);
    for (gb, dd) in grads.dense_b.iter_mut().zip(&d_dense) {
        *gb += dd;
    }
    let mut dh = vec![0.0; h];
    matvec_t_acc(&params.dense_w, &d_dense, &mut dh);
    if !cache.rec_mask.is_empty() {
        for (v, m) in dh.iter_mut().zip(&cache.rec_mask) {
            *v *= m;
        }
    }

    // backpropagation through time
    let zeros = vec![0.0; h];
    let mut d_seq = vec![0.0; steps * f];
    let mut dc_next = vec![0.0; h];
    let mut d_pre = vec![0.0; g];
    let mut dh_prev = vec![0.0; h];
    for tau in (0..steps).rev() {
        let gt = &cache.gates[tau * g..(tau + 1) * g];
        let h_prev: &[f64] = if tau == 0 {
            &zeros
        } else {
            &cache.hiddens[(tau - 1) * h..tau * h]
        };
        let xt = &cache.seq[tau * f..(tau + 1) * f];
        dh_prev.fill(0.0);
        match params.cell {
            CellKind::Lstm => {
                let c = &cache.cells[tau * h..(tau + 1) * h];
                let c_prev: &[f64] = if tau == 0 {
                    &zeros
                } else {
                    &cache.cells[(tau - 1) * h..tau * h]
                };
                for j in 0..h {
                    let (i_g, f_g, c_g, o_g) = (gt[j], gt[h + j], gt[2 * h + j], gt[3 * h + j]);
                    let tc = tanh(c[j]);
                    let d_o = dh[j] * tc;
                    let dc = dc_next[j] + dh[j] * o_g * (1.0 - tc * tc);
                    d_pre[j] = dc * c_g * i_g * (1.0 - i_g);
                    d_pre[h + j] = dc * c_prev[j] * f_g * (1.0 - f_g);
                    d_pre[2 * h + j] = dc * i_g * (1.0 - c_g * c_g);
                    d_pre[3 * h + j] = d_o * o_g * (1.0 - o_g);
                    dc_next[j] = dc * f_g;
                }
                outer_acc(&mut grads.rec_wh, &d_pre, h_prev);
                matvec_t_acc(&params.rec_wh, &d_pre, &mut dh_prev);
            }
            CellKind::Gru => {
                let wh_zr = &params.rec_wh[..2 * h * h];
                let wh_n = &params.rec_wh[2 * h * h..];
                let mut dn_pre = vec![0.0; h];
                for j in 0..h {
                    let (z, n) = (gt[j], gt[2 * h + j]);
                    let dz = dh[j] * (h_prev[j] - n);
                    let dn = dh[j] * (1.0 - z);
                    dh_prev[j] += dh[j] * z;
                    dn_pre[j] = dn * (1.0 - n * n);
                    d_pre[j] = dz * z * (1.0 - z);
                }
                d_pre[2 * h..].copy_from_slice(&dn_pre);
                let rh: Vec<f64> = (0..h).map(|j| gt[h + j] * h_prev[j]).collect();
                outer_acc(&mut grads.rec_wh[2 * h * h..], &dn_pre, &rh);
                let mut d_rh = vec![0.0; h];
                matvec_t_acc(wh_n, &dn_pre, &mut d_rh);
                for j in 0..h {
                    let r = gt[h + j];
                    dh_prev[j] += d_rh[j] * r;
                    d_pre[h + j] = d_rh[j] * h_prev[j] * r * (1.0 - r);
                }
                outer_acc(&mut grads.rec_wh[..2 * h * h], &d_pre[..2 * h], h_prev);
                matvec_t_acc(wh_zr, &d_pre[..2 * h], &mut dh_prev);
            }
        }
        outer_acc(&mut grads.rec_wx, &d_pre, xt);
        for (gb, dp) in grads.rec_b.iter_mut().zip(&d_pre) {
            *gb += dp;
        }
        matvec_t_acc(&params.rec_wx, &d_pre, &mut d_seq[tau * f..(tau + 1) * f]);
        std::mem::swap(&mut dh, &mut dh_prev);
    }

    // convolution
    let x = &cache.input;
    for fi in 0..f {
        for tau in 0..steps {
            let i = fi * steps + tau;
            if cache.conv_pre[i] <= 0.0 {
                continue;
            }
            let mut dz = d_seq[tau * f + fi];
            if !cache.conv_mask.is_empty() {
                dz *= cache.conv_mask[i];
            }
            if dz == 0.0 {
                continue;
            }
            grads.conv_b[fi] += dz;
            let kern = &mut grads.conv_w[fi * c_in * k..(fi + 1) * c_in * k];
            for ch in 0..c_in {
                let xs = &x[ch * w + tau..ch * w + tau + k];
                for (kw, xv) in kern[ch * k..(ch + 1) * k].iter_mut().zip(xs) {
                    *kw += dz * xv;
                }
            }
        }
    }
}
