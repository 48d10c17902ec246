//! The compact residual CNN under analysis.
//!
//! Layer graph (all convolutions 3x3, padding 1, rectifier nonlinearity,
//! no normalization layers):
//!
//! ```text
//! stem   conv s1: in_channels -> w0
//! block1 [conv s1 w0->w0, conv s1 w0->w0] + identity skip
//! trans1 conv s2: w0 -> w1
//! block2 [w1->w1, w1->w1] + identity skip
//! trans2 conv s2: w1 -> w2
//! block3 [w2->w2, w2->w2] + identity skip
//! global average pool -> linear head -> n_classes
//! ```
//!
//! Parameters live in one flat vector so SGD, checkpoints and gradient
//! buffers are plain slices.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::math::{
    col2im3x3, conv_out_side, cross_entropy_grad, gemm_nn, gemm_tn, im2col3x3,
    im2col3x3_transposed, relu_backward, relu_inplace,
};
use super::scalar::Scalar;

pub const N_CONVS: usize = 9;

/// Shape knobs of the model. The default widths keep the parameter count
/// well under 2e5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub n_classes: usize,
    pub widths: [usize; 3],
}

impl ModelConfig {
    pub fn compact(in_channels: usize, n_classes: usize) -> Self {
        ModelConfig {
            in_channels,
            n_classes,
            widths: [16, 32, 64],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ConvShape {
    in_c: usize,
    out_c: usize,
    stride: usize,
}

impl ConvShape {
    fn weight_len(&self) -> usize {
        self.out_c * self.in_c * 9
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Offsets {
    conv_w: [usize; N_CONVS],
    conv_b: [usize; N_CONVS],
    head_w: usize,
    head_b: usize,
    total: usize,
}

/// The network: configuration plus one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: Vec<T>,
    shapes: [ConvShape; N_CONVS],
    offsets: Offsets,
}

fn conv_shapes(config: &ModelConfig) -> [ConvShape; N_CONVS] {
    let [w0, w1, w2] = config.widths;
    let conv = |in_c, out_c, stride| ConvShape { in_c, out_c, stride };
    [
        conv(config.in_channels, w0, 1), // stem
        conv(w0, w0, 1),                 // block1 conv1
        conv(w0, w0, 1),                 // block1 conv2
        conv(w0, w1, 2),                 // trans1
        conv(w1, w1, 1),                 // block2 conv1
        conv(w1, w1, 1),                 // block2 conv2
        conv(w1, w2, 2),                 // trans2
        conv(w2, w2, 1),                 // block3 conv1
        conv(w2, w2, 1),                 // block3 conv2
    ]
}

fn layout(config: &ModelConfig) -> ([ConvShape; N_CONVS], Offsets) {
    let shapes = conv_shapes(config);
    let mut conv_w = [0usize; N_CONVS];
    let mut conv_b = [0usize; N_CONVS];
    let mut at = 0usize;
    for (i, s) in shapes.iter().enumerate() {
        conv_w[i] = at;
        at += s.weight_len();
        conv_b[i] = at;
        at += s.out_c;
    }
    let head_w = at;
    at += config.n_classes * config.widths[2];
    let head_b = at;
    at += config.n_classes;
    (
        shapes,
        Offsets {
            conv_w,
            conv_b,
            head_w,
            head_b,
            total: at,
        },
    )
}

/// Per-sample forward records needed by the backward pass: each conv's
/// input and pre-activation, the pooled vector, and the logits.
pub struct Cache<T> {
    conv_in: Vec<Vec<T>>,
    conv_in_side: Vec<usize>,
    conv_z: Vec<Vec<T>>,
    gap: Vec<T>,
    gap_side: usize,
    pub logits: Vec<T>,
}

/// Reusable scratch buffers so per-sample passes do not allocate.
pub struct Workspace<T> {
    cols: Vec<T>,
    dcols: Vec<T>,
    bufs: Vec<Vec<T>>,
}

impl<T: Scalar> Workspace<T> {
    pub fn new() -> Self {
        Workspace {
            cols: Vec::new(),
            dcols: Vec::new(),
            bufs: Vec::new(),
        }
    }
}

impl<T: Scalar> Default for Workspace<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn resize_zeroed<T: Scalar>(buf: &mut Vec<T>, len: usize) {
    buf.clear();
    buf.resize(len, T::ZERO);
}

impl<T: Scalar> Model<T> {
    /// Deterministic initialization: fan-in-scaled normal conv weights,
    /// zero biases, zero-mean head. Same seed, same bits.
    pub fn init(config: ModelConfig, seed: u64) -> Model<T> {
        let (shapes, offsets) = layout(&config);
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&seed.to_le_bytes());
        key[8..12].copy_from_slice(b"init");
        let mut rng = ChaCha8Rng::from_seed(key);
        let normal = StandardNormal;
        let mut params = vec![T::ZERO; offsets.total];
        for (i, s) in shapes.iter().enumerate() {
            let std = (2.0 / (s.in_c as f64 * 9.0)).sqrt();
            let w = &mut params[offsets.conv_w[i]..offsets.conv_w[i] + s.weight_len()];
            for v in w.iter_mut() {
                let z: f64 = normal.sample(&mut rng);
                *v = T::from_f64(z * std);
            }
        }
        let head_std = (1.0 / config.widths[2] as f64).sqrt();
        let head_len = config.n_classes * config.widths[2];
        for v in params[offsets.head_w..offsets.head_w + head_len].iter_mut() {
            let z: f64 = normal.sample(&mut rng);
            *v = T::from_f64(z * head_std);
        }
        Model {
            config,
            params,
            shapes,
            offsets,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.offsets.total
    }

    pub fn sample_len(&self, side: usize) -> usize {
        self.config.in_channels * side * side
    }

    fn conv_w(&self, i: usize) -> &[T] {
        &self.params[self.offsets.conv_w[i]..self.offsets.conv_w[i] + self.shapes[i].weight_len()]
    }

    fn conv_b(&self, i: usize) -> &[T] {
        &self.params[self.offsets.conv_b[i]..self.offsets.conv_b[i] + self.shapes[i].out_c]
    }

    fn head_w(&self) -> &[T] {
        let len = self.config.n_classes * self.config.widths[2];
        &self.params[self.offsets.head_w..self.offsets.head_w + len]
    }

    fn head_b(&self) -> &[T] {
        &self.params[self.offsets.head_b..self.offsets.head_b + self.config.n_classes]
    }

    /// Zero the head weights and bias (used by loss sanity checks).
    pub fn zero_head(&mut self) {
        let len = self.config.n_classes * self.config.widths[2];
        for v in self.params[self.offsets.head_w..self.offsets.head_w + len].iter_mut() {
            *v = T::ZERO;
        }
        for v in self.params[self.offsets.head_b..self.offsets.head_b + self.config.n_classes]
            .iter_mut()
        {
            *v = T::ZERO;
        }
    }

    /// `out = conv_i(input) + bias`, pre-activation.
    fn conv_forward(&self, i: usize, input: &[T], in_side: usize, ws_cols: &mut Vec<T>, out: &mut Vec<T>) {
        let s = self.shapes[i];
        let out_side = conv_out_side(in_side, s.stride);
        let n = out_side * out_side;
        let k = s.in_c * 9;
        resize_zeroed(ws_cols, k * n);
        im2col3x3(input, s.in_c, in_side, s.stride, ws_cols);
        resize_zeroed(out, s.out_c * n);
        gemm_nn(self.conv_w(i), ws_cols, out, s.out_c, k, n);
        for (row, &b) in out.chunks_exact_mut(n).zip(self.conv_b(i).iter()) {
            for v in row.iter_mut() {
                *v += b;
            }
        }
    }

    /// Forward one sample (`in_channels * side * side` values), recording
    /// everything backward needs.
    pub fn forward_cached(&self, x: &[T], side: usize) -> Cache<T> {
        assert_eq!(x.len(), self.sample_len(side), "input length mismatch");
        let mut cols = Vec::new();
        let mut conv_in: Vec<Vec<T>> = Vec::with_capacity(N_CONVS);
        let mut conv_in_side = Vec::with_capacity(N_CONVS);
        let mut conv_z: Vec<Vec<T>> = Vec::with_capacity(N_CONVS);

        let mut cur: Vec<T> = x.to_vec();
        let mut cur_side = side;
        // skip_input[i] holds the activation entering block (i/3) when i % 3 == 1
        let mut block_skip: Vec<T> = Vec::new();

        for i in 0..N_CONVS {
            let role = i % 3; // 0: stem/transition, 1: block conv1, 2: block conv2
            if role == 1 {
                block_skip = cur.clone();
            }
            let mut z = Vec::new();
            self.conv_forward(i, &cur, cur_side, &mut cols, &mut z);
            let out_side = conv_out_side(cur_side, self.shapes[i].stride);
            if role == 2 {
                for (v, &s) in z.iter_mut().zip(block_skip.iter()) {
                    *v += s;
                }
            }
            conv_in.push(std::mem::take(&mut cur));
            conv_in_side.push(cur_side);
            conv_z.push(z.clone());
            relu_inplace(&mut z);
            cur = z;
            cur_side = out_side;
        }

        // global average pool
        let w2 = self.config.widths[2];
        let plane = cur_side * cur_side;
        let inv = T::from_f64(1.0 / plane as f64);
        let mut gap = vec![T::ZERO; w2];
        for (g, row) in gap.iter_mut().zip(cur.chunks_exact(plane)) {
            let mut acc = T::ZERO;
            for &v in row {
                acc += v;
            }
            *g = acc * inv;
        }

        let n_classes = self.config.n_classes;
        let mut logits = vec![T::ZERO; n_classes];
        let hw = self.head_w();
        for (o, (logit, &b)) in logits.iter_mut().zip(self.head_b().iter()).enumerate() {
            let mut acc = b;
            for (c, &g) in gap.iter().enumerate() {
                acc += hw[o * w2 + c] * g;
            }
            *logit = acc;
        }

        Cache {
            conv_in,
            conv_in_side,
            conv_z,
            gap,
            gap_side: cur_side,
            logits,
        }
    }

    /// Forward one sample without recording, reusing workspace buffers.
    pub fn forward_logits(&self, x: &[T], side: usize, ws: &mut Workspace<T>) -> Vec<T> {
        assert_eq!(x.len(), self.sample_len(side), "input length mismatch");
        while ws.bufs.len() < 3 {
            ws.bufs.push(Vec::new());
        }
        let mut bufs = std::mem::take(&mut ws.bufs);
        let (skip_buf, rest) = bufs.split_at_mut(1);
        let (a_buf, b_buf) = rest.split_at_mut(1);
        let skip_buf = &mut skip_buf[0];
        let mut cur = &mut a_buf[0];
        let mut next = &mut b_buf[0];
        cur.clear();
        cur.extend_from_slice(x);
        let mut cur_side = side;

        for i in 0..N_CONVS {
            let role = i % 3;
            if role == 1 {
                skip_buf.clear();
                skip_buf.extend_from_slice(cur);
            }
            self.conv_forward(i, cur, cur_side, &mut ws.cols, next);
            if role == 2 {
                for (v, &s) in next.iter_mut().zip(skip_buf.iter()) {
                    *v += s;
                }
            }
            relu_inplace(next);
            cur_side = conv_out_side(cur_side, self.shapes[i].stride);
            std::mem::swap(&mut cur, &mut next);
        }

        let w2 = self.config.widths[2];
        let plane = cur_side * cur_side;
        let inv = T::from_f64(1.0 / plane as f64);
        let mut gap = vec![T::ZERO; w2];
        for (g, row) in gap.iter_mut().zip(cur.chunks_exact(plane)) {
            let mut acc = T::ZERO;
            for &v in row {
                acc += v;
            }
            *g = acc * inv;
        }
        let mut logits = vec![T::ZERO; self.config.n_classes];
        let hw = self.head_w();
        for (o, (logit, &b)) in logits.iter_mut().zip(self.head_b().iter()).enumerate() {
            let mut acc = b;
            for (c, &g) in gap.iter().enumerate() {
                acc += hw[o * w2 + c] * g;
            }
            *logit = acc;
        }
        ws.bufs = bufs;
        logits
    }

    /// Backward one sample given `d logits`; accumulates into `grads`
    /// (a buffer of `parameter_count()` values).
    pub fn backward(&self, cache: &Cache<T>, d_logits: &[T], grads: &mut [T], ws: &mut Workspace<T>) {
        assert_eq!(grads.len(), self.offsets.total);
        let n_classes = self.config.n_classes;
        let w2 = self.config.widths[2];

        // head
        let mut d_gap = vec![T::ZERO; w2];
        {
            let hw = self.head_w();
            for o in 0..n_classes {
                let d = d_logits[o];
                grads[self.offsets.head_b + o] += d;
                for c in 0..w2 {
                    grads[self.offsets.head_w + o * w2 + c] += d * cache.gap[c];
                    d_gap[c] += hw[o * w2 + c] * d;
                }
            }
        }

        // un-pool
        let plane = cache.gap_side * cache.gap_side;
        let inv = T::from_f64(1.0 / plane as f64);
        let mut d_cur = vec![T::ZERO; w2 * plane];
        for (row, &dg) in d_cur.chunks_exact_mut(plane).zip(d_gap.iter()) {
            let v = dg * inv;
            for d in row.iter_mut() {
                *d = v;
            }
        }

        // conv stack, reverse order; d_skip carries the gradient a block's
        // pre-activation sum sends back to the block input.
        let mut d_skip: Vec<T> = Vec::new();
        let mut dz = Vec::new();
        for i in (0..N_CONVS).rev() {
            let role = i % 3;
            let s = self.shapes[i];
            let in_side = cache.conv_in_side[i];
            let out_side = conv_out_side(in_side, s.stride);
            let n = out_side * out_side;
            let k = s.in_c * 9;

            resize_zeroed(&mut dz, s.out_c * n);
            relu_backward(&cache.conv_z[i], &d_cur, &mut dz);
            if role == 2 {
                d_skip = dz.clone();
            }

            // bias gradient
            for (row, g) in dz
                .chunks_exact(n)
                .zip(grads[self.offsets.conv_b[i]..self.offsets.conv_b[i] + s.out_c].iter_mut())
            {
                let mut acc = T::ZERO;
                for &v in row {
                    acc += v;
                }
                *g += acc;
            }

            // weight gradient: dW += dz * cols^T, with the patch matrix
            // built transposed so the plain kernel applies
            resize_zeroed(&mut ws.cols, n * k);
            im2col3x3_transposed(&cache.conv_in[i], s.in_c, in_side, s.stride, &mut ws.cols);
            gemm_nn(
                &dz,
                &ws.cols,
                &mut grads[self.offsets.conv_w[i]..self.offsets.conv_w[i] + s.weight_len()],
                s.out_c,
                n,
                k,
            );

            // input gradient: dcols = W^T * dz, then fold back
            resize_zeroed(&mut ws.dcols, k * n);
            gemm_tn(self.conv_w(i), &dz, &mut ws.dcols, s.out_c, k, n);
            let mut d_in = vec![T::ZERO; s.in_c * in_side * in_side];
            col2im3x3(&ws.dcols, s.in_c, in_side, s.stride, &mut d_in);
            if role == 1 {
                for (d, &sk) in d_in.iter_mut().zip(d_skip.iter()) {
                    *d += sk;
                }
            }
            d_cur = d_in;
        }
    }
}

/// A contiguous batch of flattened samples.
pub struct BatchView<'a, T> {
    pub data: &'a [T],
    pub labels: &'a [usize],
    pub count: usize,
    pub sample_len: usize,
    pub side: usize,
}

impl<'a, T> BatchView<'a, T> {
    pub fn sample(&self, i: usize) -> &'a [T] {
        &self.data[i * self.sample_len..(i + 1) * self.sample_len]
    }
}

/// Chunk width used for deterministic parallel reduction: partial sums are
/// produced per fixed-size chunk and folded in chunk order, so results do
/// not depend on thread count or scheduling.
const REDUCE_CHUNK: usize = 8;

/// Mean cross-entropy and parameter gradients over a batch.
pub fn loss_and_grads<T: Scalar>(model: &Model<T>, batch: &BatchView<'_, T>) -> Result<(f64, Vec<T>)> {
    if batch.count == 0 {
        return Err(Error::EmptyDataset);
    }
    let n_classes = model.config.n_classes;
    for &l in batch.labels {
        if l >= n_classes {
            return Err(Error::InvalidLabel {
                label: l,
                n_classes,
            });
        }
    }
    let ranges: Vec<(usize, usize)> = (0..batch.count)
        .step_by(REDUCE_CHUNK)
        .map(|s| (s, (s + REDUCE_CHUNK).min(batch.count)))
        .collect();
    let partials: Vec<(f64, Vec<T>)> = ranges
        .par_iter()
        .map(|&(lo, hi)| {
            let mut ws = Workspace::new();
            let mut grads = vec![T::ZERO; model.parameter_count()];
            let mut loss_sum = 0.0f64;
            let mut d_logits = vec![T::ZERO; n_classes];
            for i in lo..hi {
                let cache = model.forward_cached(batch.sample(i), batch.side);
                let loss = cross_entropy_grad(&cache.logits, batch.labels[i], &mut d_logits);
                loss_sum += loss.to_f64();
                model.backward(&cache, &d_logits, &mut grads, &mut ws);
            }
            (loss_sum, grads)
        })
        .collect();

    let mut grads = vec![T::ZERO; model.parameter_count()];
    let mut loss_sum = 0.0f64;
    for (l, g) in partials {
        loss_sum += l;
        for (acc, v) in grads.iter_mut().zip(g.iter()) {
            *acc += *v;
        }
    }
    let scale = T::from_f64(1.0 / batch.count as f64);
    for g in grads.iter_mut() {
        *g *= scale;
    }
    Ok((loss_sum / batch.count as f64, grads))
}

/// Logits for every sample of a batch (deterministic, order-preserving).
pub fn forward_batch<T: Scalar>(model: &Model<T>, data: &[T], count: usize, side: usize) -> Vec<Vec<T>> {
    let sample_len = model.sample_len(side);
    assert_eq!(data.len(), count * sample_len);
    (0..count)
        .into_par_iter()
        .map_init(Workspace::new, |ws, i| {
            model.forward_logits(&data[i * sample_len..(i + 1) * sample_len], side, ws)
        })
        .collect()
}

/// Mean cross-entropy of a batch without gradients.
pub fn batch_loss<T: Scalar>(
    model: &Model<T>,
    data: &[T],
    labels: &[usize],
    side: usize,
) -> f64 {
    let logits = forward_batch(model, data, labels.len(), side);
    let mut d = vec![T::ZERO; model.config.n_classes];
    let total: f64 = logits
        .iter()
        .zip(labels.iter())
        .map(|(l, &y)| cross_entropy_grad(l, y, &mut d).to_f64())
        .sum();
    total / labels.len() as f64
}

/// Argmax with deterministic tie-break toward the lower class index.
pub fn argmax_low<T: Scalar>(scores: &[T]) -> usize {
    let mut best = 0usize;
    for (i, &v) in scores.iter().enumerate().skip(1) {
        if v > scores[best] {
            best = i;
        }
    }
    best
}
