//! Native transformer encoder with explicit forward/backward passes.
//!
//! A pre-norm encoder: token + position embeddings with layer norm, a stack
//! of self-attention + feed-forward blocks with residual connections, masked
//! mean pooling, and a linear classification head. Everything runs in f64 so
//! parameter comparisons in freeze tests are bit-exact and gradient checks
//! are tight.
//!
//! Parameters are organized into named groups — `embeddings`,
//! `layer.0 .. layer.(L-1)`, `head` — which is the unit of freezing.

use ndarray::{s, Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::tokenizer::Encoded;

const LN_EPS: f64 = 1e-5;
const MASK_BIAS: f64 = -1e30;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;
const INIT_STD: f64 = 0.02;

/// Encoder architecture description.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub num_heads: usize,
    pub ff_dim: usize,
    pub vocab_size: usize,
    pub max_position: usize,
    pub num_labels: usize,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0
            || self.hidden_dim == 0
            || self.num_heads == 0
            || self.ff_dim == 0
            || self.vocab_size <= 2
            || self.max_position == 0
            || self.num_labels == 0
        {
            return Err(Error::Argument("encoder config dimensions must be positive".into()));
        }
        if self.hidden_dim % self.num_heads != 0 {
            return Err(Error::Argument(format!(
                "hidden_dim {} not divisible by num_heads {}",
                self.hidden_dim, self.num_heads
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerTensors {
    pub ln1_gamma: Array2<f64>,
    pub ln1_beta: Array2<f64>,
    pub wq: Array2<f64>,
    pub bq: Array2<f64>,
    pub wk: Array2<f64>,
    pub bk: Array2<f64>,
    pub wv: Array2<f64>,
    pub bv: Array2<f64>,
    pub wo: Array2<f64>,
    pub bo: Array2<f64>,
    pub ln2_gamma: Array2<f64>,
    pub ln2_beta: Array2<f64>,
    pub w1: Array2<f64>,
    pub b1: Array2<f64>,
    pub w2: Array2<f64>,
    pub b2: Array2<f64>,
}

impl LayerTensors {
    fn tensors(&self) -> Vec<&Array2<f64>> {
        vec![
            &self.ln1_gamma,
            &self.ln1_beta,
            &self.wq,
            &self.bq,
            &self.wk,
            &self.bk,
            &self.wv,
            &self.bv,
            &self.wo,
            &self.bo,
            &self.ln2_gamma,
            &self.ln2_beta,
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        vec![
            &mut self.ln1_gamma,
            &mut self.ln1_beta,
            &mut self.wq,
            &mut self.bq,
            &mut self.wk,
            &mut self.bk,
            &mut self.wv,
            &mut self.bv,
            &mut self.wo,
            &mut self.bo,
            &mut self.ln2_gamma,
            &mut self.ln2_beta,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ]
    }
}

/// All learnable tensors. Reused structurally for gradients and optimizer
/// moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderTensors {
    pub token_embed: Array2<f64>,
    pub pos_embed: Array2<f64>,
    pub ln_embed_gamma: Array2<f64>,
    pub ln_embed_beta: Array2<f64>,
    pub layers: Vec<LayerTensors>,
    pub head_w: Array2<f64>,
    pub head_b: Array2<f64>,
}

/// Group names in canonical order: embeddings, layer.0 .. layer.(L-1), head.
pub fn group_names(num_layers: usize) -> Vec<String> {
    let mut names = vec!["embeddings".to_string()];
    names.extend((0..num_layers).map(|i| format!("layer.{i}")));
    names.push("head".to_string());
    names
}

impl EncoderTensors {
    pub fn init(config: &EncoderConfig, seed: u64) -> Result<EncoderTensors> {
        config.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid distribution");
        let mut randn = |r: usize, c: usize| {
            Array2::from_shape_fn((r, c), |_| normal.sample(&mut rng))
        };
        let h = config.hidden_dim;
        let layers = (0..config.num_layers)
            .map(|_| LayerTensors {
                ln1_gamma: Array2::ones((1, h)),
                ln1_beta: Array2::zeros((1, h)),
                wq: randn(h, h),
                bq: Array2::zeros((1, h)),
                wk: randn(h, h),
                bk: Array2::zeros((1, h)),
                wv: randn(h, h),
                bv: Array2::zeros((1, h)),
                wo: randn(h, h),
                bo: Array2::zeros((1, h)),
                ln2_gamma: Array2::ones((1, h)),
                ln2_beta: Array2::zeros((1, h)),
                w1: randn(h, config.ff_dim),
                b1: Array2::zeros((1, config.ff_dim)),
                w2: randn(config.ff_dim, h),
                b2: Array2::zeros((1, h)),
            })
            .collect();
        Ok(EncoderTensors {
            token_embed: randn(config.vocab_size, h),
            pos_embed: randn(config.max_position, h),
            ln_embed_gamma: Array2::ones((1, h)),
            ln_embed_beta: Array2::zeros((1, h)),
            layers,
            head_w: randn(h, config.num_labels),
            head_b: Array2::zeros((1, config.num_labels)),
        })
    }

    pub fn zeros_like(&self) -> EncoderTensors {
        let zero = |t: &Array2<f64>| Array2::zeros(t.raw_dim());
        EncoderTensors {
            token_embed: zero(&self.token_embed),
            pos_embed: zero(&self.pos_embed),
            ln_embed_gamma: zero(&self.ln_embed_gamma),
            ln_embed_beta: zero(&self.ln_embed_beta),
            layers: self
                .layers
                .iter()
                .map(|l| LayerTensors {
                    ln1_gamma: zero(&l.ln1_gamma),
                    ln1_beta: zero(&l.ln1_beta),
                    wq: zero(&l.wq),
                    bq: zero(&l.bq),
                    wk: zero(&l.wk),
                    bk: zero(&l.bk),
                    wv: zero(&l.wv),
                    bv: zero(&l.bv),
                    wo: zero(&l.wo),
                    bo: zero(&l.bo),
                    ln2_gamma: zero(&l.ln2_gamma),
                    ln2_beta: zero(&l.ln2_beta),
                    w1: zero(&l.w1),
                    b1: zero(&l.b1),
                    w2: zero(&l.w2),
                    b2: zero(&l.b2),
                })
                .collect(),
            head_w: zero(&self.head_w),
            head_b: zero(&self.head_b),
        }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Tensors of one named group, in a fixed order shared with `group_mut`.
    pub fn group(&self, name: &str) -> Option<Vec<&Array2<f64>>> {
        match name {
            "embeddings" => Some(vec![
                &self.token_embed,
                &self.pos_embed,
                &self.ln_embed_gamma,
                &self.ln_embed_beta,
            ]),
            "head" => Some(vec![&self.head_w, &self.head_b]),
            _ => {
                let idx: usize = name.strip_prefix("layer.")?.parse().ok()?;
                self.layers.get(idx).map(|l| l.tensors())
            }
        }
    }

    pub fn group_mut(&mut self, name: &str) -> Option<Vec<&mut Array2<f64>>> {
        match name {
            "embeddings" => Some(vec![
                &mut self.token_embed,
                &mut self.pos_embed,
                &mut self.ln_embed_gamma,
                &mut self.ln_embed_beta,
            ]),
            "head" => Some(vec![&mut self.head_w, &mut self.head_b]),
            _ => {
                let idx: usize = name.strip_prefix("layer.")?.parse().ok()?;
                self.layers.get_mut(idx).map(|l| l.tensors_mut())
            }
        }
    }

    pub fn group_param_count(&self, name: &str) -> usize {
        self.group(name).map(|ts| ts.iter().map(|t| t.len()).sum()).unwrap_or(0)
    }

    pub fn total_param_count(&self) -> usize {
        group_names(self.num_layers()).iter().map(|g| self.group_param_count(g)).sum()
    }

    /// Bitwise equality of one group between two tensor sets.
    pub fn group_bits_equal(&self, other: &EncoderTensors, name: &str) -> bool {
        match (self.group(name), other.group(name)) {
            (Some(a), Some(b)) => {
                a.len() == b.len()
                    && a.iter().zip(b).all(|(x, y)| {
                        x.len() == y.len()
                            && x.iter().zip(y.iter()).all(|(u, v)| u.to_bits() == v.to_bits())
                    })
            }
            _ => false,
        }
    }
}

struct LnCache {
    xhat: Array2<f64>,
    inv_std: Vec<f64>,
}

fn layer_norm(x: &Array2<f64>, gamma: &Array2<f64>, beta: &Array2<f64>) -> (Array2<f64>, LnCache) {
    let h = x.ncols() as f64;
    let mut xhat = Array2::zeros(x.raw_dim());
    let mut inv_std = Vec::with_capacity(x.nrows());
    for (i, row) in x.outer_iter().enumerate() {
        let mu = row.sum() / h;
        let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / h;
        let is = 1.0 / (var + LN_EPS).sqrt();
        inv_std.push(is);
        for (j, &v) in row.iter().enumerate() {
            xhat[[i, j]] = (v - mu) * is;
        }
    }
    let y = &xhat * gamma + beta;
    (y, LnCache { xhat, inv_std })
}

/// Returns (dx, dgamma, dbeta).
fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &LnCache,
    gamma: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let h = dy.ncols() as f64;
    let dgamma = (dy * &cache.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
    let dbeta = dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    let dxhat = dy * gamma;
    let mut dx = Array2::zeros(dy.raw_dim());
    for i in 0..dy.nrows() {
        let dxh = dxhat.row(i);
        let xh = cache.xhat.row(i);
        let m1 = dxh.sum() / h;
        let m2 = dxh.iter().zip(xh.iter()).map(|(a, b)| a * b).sum::<f64>() / h;
        let is = cache.inv_std[i];
        for j in 0..dy.ncols() {
            dx[[i, j]] = is * (dxh[j] - m1 - xh[j] * m2);
        }
    }
    (dx, dgamma, dbeta)
}

fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + GELU_A * u * u * u)).tanh())
}

fn gelu_prime(u: f64) -> f64 {
    let t = (GELU_C * (u + GELU_A * u * u * u)).tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * u * u)
}

pub fn softmax3(logits: [f64; 3]) -> [f64; 3] {
    let max = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps = [
        (logits[0] - max).exp(),
        (logits[1] - max).exp(),
        (logits[2] - max).exp(),
    ];
    let sum: f64 = exps.iter().sum();
    [exps[0] / sum, exps[1] / sum, exps[2] / sum]
}

/// Row softmax where positions >= real_len are masked out of the key axis.
fn masked_softmax_rows(mut scores: Array2<f64>, real_len: usize) -> Array2<f64> {
    let t = scores.ncols();
    for mut row in scores.rows_mut() {
        for j in real_len..t {
            row[j] = MASK_BIAS;
        }
        let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    scores
}

struct LayerTape {
    ln1: LnCache,
    h1: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    attn: Vec<Array2<f64>>,
    ctx: Array2<f64>,
    ln2: LnCache,
    h2: Array2<f64>,
    u: Array2<f64>,
    g: Array2<f64>,
}

/// Per-example activation record for the backward pass.
pub struct ExampleTape {
    ids: Vec<usize>,
    real_len: usize,
    ln_embed: Option<LnCache>,
    layers: Vec<LayerTape>,
    pooled: Array1<f64>,
    pub probs: [f64; 3],
}

/// Forward pass for one encoded example.
pub fn forward_example(
    tensors: &EncoderTensors,
    config: &EncoderConfig,
    encoded: &Encoded,
) -> ExampleTape {
    let h = config.hidden_dim;
    if encoded.real_len == 0 {
        // no tokens: the head sees a zero pooled vector
        let pooled = Array1::zeros(h);
        let probs = head_probs(tensors, &pooled);
        return ExampleTape {
            ids: encoded.ids.clone(),
            real_len: 0,
            ln_embed: None,
            layers: Vec::new(),
            pooled,
            probs,
        };
    }

    let t = encoded.ids.len();
    debug_assert!(t <= config.max_position);
    let mut embed = Array2::zeros((t, h));
    for (pos, &id) in encoded.ids.iter().enumerate() {
        let row = &tensors.token_embed.row(id) + &tensors.pos_embed.row(pos);
        embed.row_mut(pos).assign(&row);
    }
    let (mut x, ln_embed) = layer_norm(&embed, &tensors.ln_embed_gamma, &tensors.ln_embed_beta);

    let heads = config.num_heads;
    let dh = h / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut layer_tapes = Vec::with_capacity(config.num_layers);

    for layer in &tensors.layers {
        let (h1, ln1) = layer_norm(&x, &layer.ln1_gamma, &layer.ln1_beta);
        let q = h1.dot(&layer.wq) + &layer.bq;
        let k = h1.dot(&layer.wk) + &layer.bk;
        let v = h1.dot(&layer.wv) + &layer.bv;
        let mut ctx = Array2::zeros((t, h));
        let mut attn = Vec::with_capacity(heads);
        for hd in 0..heads {
            let cols = s![.., hd * dh..(hd + 1) * dh];
            let qh = q.slice(cols);
            let kh = k.slice(cols);
            let vh = v.slice(cols);
            let scores = qh.dot(&kh.t()) * scale;
            let a = masked_softmax_rows(scores, encoded.real_len);
            ctx.slice_mut(cols).assign(&a.dot(&vh));
            attn.push(a);
        }
        let attn_out = ctx.dot(&layer.wo) + &layer.bo;
        let x2 = &x + &attn_out;

        let (h2, ln2) = layer_norm(&x2, &layer.ln2_gamma, &layer.ln2_beta);
        let u = h2.dot(&layer.w1) + &layer.b1;
        let g = u.mapv(gelu);
        let f = g.dot(&layer.w2) + &layer.b2;
        let x3 = &x2 + &f;

        layer_tapes.push(LayerTape { ln1, h1, q, k, v, attn, ctx, ln2, h2, u, g });
        x = x3;
    }

    let mut pooled = Array1::zeros(h);
    for pos in 0..encoded.real_len {
        pooled += &x.row(pos);
    }
    pooled /= encoded.real_len as f64;
    let probs = head_probs(tensors, &pooled);

    ExampleTape {
        ids: encoded.ids.clone(),
        real_len: encoded.real_len,
        ln_embed: Some(ln_embed),
        layers: layer_tapes,
        pooled,
        probs,
    }
}

fn head_probs(tensors: &EncoderTensors, pooled: &Array1<f64>) -> [f64; 3] {
    let logits_arr = pooled.dot(&tensors.head_w) + tensors.head_b.row(0);
    softmax3([logits_arr[0], logits_arr[1], logits_arr[2]])
}

/// Backward pass for one example; accumulates into `grads`.
///
/// `dlogits` is the gradient of the loss w.r.t. the head logits (for
/// cross-entropy: (probs - onehot) already scaled by any batch factor).
pub fn backward_example(
    tensors: &EncoderTensors,
    config: &EncoderConfig,
    tape: &ExampleTape,
    dlogits: [f64; 3],
    grads: &mut EncoderTensors,
) {
    let h = config.hidden_dim;
    let dlog = Array2::from_shape_vec((1, 3), dlogits.to_vec()).expect("shape");
    let pooled2 = tape
        .pooled
        .clone()
        .insert_axis(Axis(0));
    grads.head_w = &grads.head_w + &pooled2.t().dot(&dlog);
    grads.head_b = &grads.head_b + &dlog;
    if tape.real_len == 0 {
        return;
    }

    let dpooled = tensors.head_w.dot(&Array1::from(dlogits.to_vec()));
    let t = tape.ids.len();
    let mut dx = Array2::zeros((t, h));
    let per_row = &dpooled / tape.real_len as f64;
    for pos in 0..tape.real_len {
        dx.row_mut(pos).assign(&per_row);
    }

    let heads = config.num_heads;
    let dh = h / heads;
    let scale = 1.0 / (dh as f64).sqrt();

    for idx in (0..tensors.layers.len()).rev() {
        let layer = &tensors.layers[idx];
        let tape_l = &tape.layers[idx];
        // FFN block: x3 = x2 + gelu(LN2(x2) W1 + b1) W2 + b2
        let df = &dx; // gradient w.r.t. f
        let dg = df.dot(&layer.w2.t());
        let dw2 = tape_l.g.t().dot(df);
        let db2 = df.sum_axis(Axis(0)).insert_axis(Axis(0));
        let du = &dg * &tape_l.u.mapv(gelu_prime);
        let dw1 = tape_l.h2.t().dot(&du);
        let db1 = du.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dh2 = du.dot(&layer.w1.t());
        let (dx2_ln, dg2, dbeta2) = layer_norm_backward(&dh2, &tape_l.ln2, &layer.ln2_gamma);
        let dx2 = &dx + &dx2_ln;

        // attention block: x2 = x + (ctx Wo + bo)
        let dattn = &dx2;
        let dctx = dattn.dot(&layer.wo.t());
        let dwo = tape_l.ctx.t().dot(dattn);
        let dbo = dattn.sum_axis(Axis(0)).insert_axis(Axis(0));

        let mut dq = Array2::zeros((t, h));
        let mut dk = Array2::zeros((t, h));
        let mut dv = Array2::zeros((t, h));
        for hd in 0..heads {
            let cols = s![.., hd * dh..(hd + 1) * dh];
            let a = &tape_l.attn[hd];
            let qh = tape_l.q.slice(cols);
            let kh = tape_l.k.slice(cols);
            let vh = tape_l.v.slice(cols);
            let dctx_h = dctx.slice(cols);
            let da = dctx_h.dot(&vh.t());
            dv.slice_mut(cols).assign(&a.t().dot(&dctx_h));
            // softmax backward, row-wise
            let mut ds = Array2::zeros((t, t));
            for i in 0..t {
                let a_row = a.row(i);
                let da_row = da.row(i);
                let dot: f64 = a_row.iter().zip(da_row.iter()).map(|(x, y)| x * y).sum();
                for j in 0..t {
                    ds[[i, j]] = a_row[j] * (da_row[j] - dot);
                }
            }
            dq.slice_mut(cols).assign(&(ds.dot(&kh) * scale));
            dk.slice_mut(cols).assign(&(ds.t().dot(&qh) * scale));
        }

        let dwq = tape_l.h1.t().dot(&dq);
        let dbq = dq.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dwk = tape_l.h1.t().dot(&dk);
        let dbk = dk.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dwv = tape_l.h1.t().dot(&dv);
        let dbv = dv.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dh1 = dq.dot(&layer.wq.t()) + dk.dot(&layer.wk.t()) + dv.dot(&layer.wv.t());
        let (dx_ln1, dg1, dbeta1) = layer_norm_backward(&dh1, &tape_l.ln1, &layer.ln1_gamma);

        let gl = &mut grads.layers[idx];
        gl.w2 = &gl.w2 + &dw2;
        gl.b2 = &gl.b2 + &db2;
        gl.w1 = &gl.w1 + &dw1;
        gl.b1 = &gl.b1 + &db1;
        gl.ln2_gamma = &gl.ln2_gamma + &dg2;
        gl.ln2_beta = &gl.ln2_beta + &dbeta2;
        gl.wo = &gl.wo + &dwo;
        gl.bo = &gl.bo + &dbo;
        gl.wq = &gl.wq + &dwq;
        gl.bq = &gl.bq + &dbq;
        gl.wk = &gl.wk + &dwk;
        gl.bk = &gl.bk + &dbk;
        gl.wv = &gl.wv + &dwv;
        gl.bv = &gl.bv + &dbv;
        gl.ln1_gamma = &gl.ln1_gamma + &dg1;
        gl.ln1_beta = &gl.ln1_beta + &dbeta1;

        dx = dx2 + dx_ln1;
    }

    let ln_embed = tape.ln_embed.as_ref().expect("non-empty example has embed cache");
    let (dembed, dg_e, db_e) = layer_norm_backward(&dx, ln_embed, &tensors.ln_embed_gamma);
    grads.ln_embed_gamma = &grads.ln_embed_gamma + &dg_e;
    grads.ln_embed_beta = &grads.ln_embed_beta + &db_e;
    for (pos, &id) in tape.ids.iter().enumerate() {
        let row = dembed.row(pos);
        let mut te = grads.token_embed.row_mut(id);
        te += &row;
        let mut pe = grads.pos_embed.row_mut(pos);
        pe += &row;
    }
}

/// Cross-entropy of the true label under the tape's probabilities.
pub fn cross_entropy(probs: &[f64; 3], label_idx: usize) -> f64 {
    -(probs[label_idx].max(1e-300)).ln()
}

/// Forward+backward over a micro-batch. Gradients are accumulated into
/// `grads` scaled by `scale / batch_len` (mean over the batch times the
/// caller's accumulation factor). Returns the mean loss.
pub fn forward_backward_batch(
    tensors: &EncoderTensors,
    config: &EncoderConfig,
    batch: &[(Encoded, usize)],
    grads: &mut EncoderTensors,
    scale: f64,
) -> f64 {
    let n = batch.len() as f64;
    let mut loss = 0.0;
    for (encoded, label_idx) in batch {
        let tape = forward_example(tensors, config, encoded);
        loss += cross_entropy(&tape.probs, *label_idx);
        let mut dlogits = tape.probs;
        dlogits[*label_idx] -= 1.0;
        for d in &mut dlogits {
            *d *= scale / n;
        }
        backward_example(tensors, config, &tape, dlogits, grads);
    }
    loss / n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::tokenizer::{encode, TokenizerSettings};
    use rand::Rng;

    fn tiny_config() -> EncoderConfig {
        EncoderConfig {
            num_layers: 2,
            hidden_dim: 4,
            num_heads: 2,
            ff_dim: 8,
            vocab_size: 16,
            max_position: 6,
            num_labels: 3,
        }
    }

    fn tiny_batch(config: &EncoderConfig) -> Vec<(Encoded, usize)> {
        let settings = TokenizerSettings::new(config.max_position).unwrap();
        vec![
            (encode("good fine great", config.vocab_size, &settings), 0),
            (encode("awful bad", config.vocab_size, &settings), 2),
        ]
    }

    fn batch_loss(
        tensors: &EncoderTensors,
        config: &EncoderConfig,
        batch: &[(Encoded, usize)],
    ) -> f64 {
        let n = batch.len() as f64;
        batch
            .iter()
            .map(|(e, l)| cross_entropy(&forward_example(tensors, config, e).probs, *l))
            .sum::<f64>()
            / n
    }

    #[test]
    fn probabilities_are_a_distribution() {
        let config = tiny_config();
        let tensors = EncoderTensors::init(&config, 1).unwrap();
        for (encoded, _) in tiny_batch(&config) {
            let tape = forward_example(&tensors, &config, &encoded);
            let sum: f64 = tape.probs.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(tape.probs.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn empty_text_uses_head_bias_only() {
        let config = tiny_config();
        let tensors = EncoderTensors::init(&config, 1).unwrap();
        let settings = TokenizerSettings::new(config.max_position).unwrap();
        let enc = encode("", config.vocab_size, &settings);
        let tape = forward_example(&tensors, &config, &enc);
        // zero head bias at init: uniform distribution
        for p in tape.probs {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let config = tiny_config();
        let tensors = EncoderTensors::init(&config, 7).unwrap();
        let batch = tiny_batch(&config);
        let a = forward_example(&tensors, &config, &batch[0].0).probs;
        let b = forward_example(&tensors, &config, &batch[0].0).probs;
        assert_eq!(a, b);
    }

    /// Central finite differences validate the analytic gradients across
    /// every parameter group.
    #[test]
    fn gradients_match_finite_differences() {
        let config = tiny_config();
        let tensors = EncoderTensors::init(&config, 42).unwrap();
        let batch = tiny_batch(&config);

        let mut grads = tensors.zeros_like();
        forward_backward_batch(&tensors, &config, &batch, &mut grads, 1.0);

        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(3);
        let step = 1e-5;
        for name in group_names(config.num_layers) {
            let n_tensors = tensors.group(&name).unwrap().len();
            for ti in 0..n_tensors {
                let len = tensors.group(&name).unwrap()[ti].len();
                // probe a few random coordinates per tensor
                for _ in 0..3 {
                    let flat = rng.gen_range(0..len);
                    let analytic = grads.group(&name).unwrap()[ti]
                        .as_slice()
                        .unwrap()[flat];
                    let mut plus = tensors.clone();
                    plus.group_mut(&name).unwrap()[ti].as_slice_mut().unwrap()[flat] += step;
                    let mut minus = tensors.clone();
                    minus.group_mut(&name).unwrap()[ti].as_slice_mut().unwrap()[flat] -= step;
                    let numeric =
                        (batch_loss(&plus, &config, &batch) - batch_loss(&minus, &config, &batch))
                            / (2.0 * step);
                    let abs_diff = (analytic - numeric).abs();
                    let denom = analytic.abs().max(numeric.abs()).max(1e-6);
                    assert!(
                        abs_diff < 1e-9 || abs_diff / denom < 1e-5,
                        "group {name} tensor {ti} flat {flat}: analytic {analytic} vs numeric {numeric}"
                    );
                }
            }
        }
    }

    #[test]
    fn group_names_cover_all_parameters() {
        let config = tiny_config();
        let tensors = EncoderTensors::init(&config, 0).unwrap();
        let names = group_names(config.num_layers);
        assert_eq!(names.first().map(String::as_str), Some("embeddings"));
        assert_eq!(names.last().map(String::as_str), Some("head"));
        assert_eq!(names.len(), config.num_layers + 2);
        let sum: usize = names.iter().map(|n| tensors.group_param_count(n)).sum();
        assert_eq!(sum, tensors.total_param_count());
        assert!(sum > 0);
    }

    #[test]
    fn serde_round_trip_is_bit_exact() {
        let config = tiny_config();
        let tensors = EncoderTensors::init(&config, 9).unwrap();
        let json = serde_json::to_string(&tensors).unwrap();
        let back: EncoderTensors = serde_json::from_str(&json).unwrap();
        for name in group_names(config.num_layers) {
            assert!(tensors.group_bits_equal(&back, &name), "group {name} drifted");
        }
    }
}
