//! The "type (c)" score network: three strided 1x1 convolutions, each
//! followed by batch normalization and ReLU, then two fully connected layers
//! and a softmax over the eight score classes.
//!
//! ```text
//! input 227x227x3 (zero-centred)
//! conv_1  94 @ 1x1x3,  stride 8  -> 29x29x94   BN  ReLU
//! conv_2  36 @ 1x1x94, stride 4  -> 8x8x36     BN  ReLU
//! conv_3  36 @ 1x1x36, stride 1  -> 8x8x36     BN  ReLU
//! fc_1    2304 -> 36
//! fc_2    36 -> 8
//! softmax
//! ```
//!
//! Activations are stored row-major as `(sample, y, x, channel)`. A 1x1
//! convolution with stride `s` reads only the pixels at multiples of `s`, so
//! it is computed as a strided gather followed by a per-pixel linear map.

mod format;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

pub use format::{load_model, read_model, save_model, write_model, FORMAT_VERSION, MAGIC};
pub use train::{train, TrainConfig, Trainer};

use crate::data::{RgbImage, INPUT_SIZE};
use crate::linalg::Matrix;
use crate::score::NUM_CLASSES;

pub const CONV_CHANNELS: [usize; 4] = [3, 94, 36, 36];
pub const CONV_STRIDES: [usize; 3] = [8, 4, 1];
pub const FC1_UNITS: usize = 36;
pub const BN_EPS: f64 = 1e-5;

/// Spatial edge length after each convolution for a 227x227 input.
pub const fn conv_sizes() -> [usize; 3] {
    let s1 = (INPUT_SIZE - 1) / CONV_STRIDES[0] + 1;
    let s2 = (s1 - 1) / CONV_STRIDES[1] + 1;
    let s3 = (s2 - 1) / CONV_STRIDES[2] + 1;
    [s1, s2, s3]
}

const SIZES: [usize; 3] = conv_sizes();
pub const FINAL_MAP_SIZE: usize = SIZES[2];
pub const FC1_INPUTS: usize = SIZES[2] * SIZES[2] * CONV_CHANNELS[3];

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("training batch needs at least 2 samples, got {0}")]
    BatchTooSmall(usize),
    #[error("loss became non-finite ({0})")]
    NonFiniteLoss(f64),
    #[error("label index {0} is out of range")]
    BadLabel(usize),
    #[error("unsupported model format: {0}")]
    FormatVersionMismatch(String),
    #[error("corrupt model file: {0}")]
    CorruptFile(String),
    #[error("invalid training configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch-norm uses batch statistics.
    Train,
    /// Batch-norm uses running statistics.
    Infer,
}

/// Learnable tensors. Also used to hold gradients and optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// `[out][in]` per convolution.
    pub conv_w: [Vec<f64>; 3],
    pub conv_b: [Vec<f64>; 3],
    pub bn_gamma: [Vec<f64>; 3],
    pub bn_beta: [Vec<f64>; 3],
    /// `[36][2304]`.
    pub fc1_w: Vec<f64>,
    pub fc1_b: Vec<f64>,
    /// `[8][36]`.
    pub fc2_w: Vec<f64>,
    pub fc2_b: Vec<f64>,
}

/// Parameter group names and shapes in canonical (serialization) order.
pub fn param_layout() -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    for l in 0..3 {
        let (cin, cout) = (CONV_CHANNELS[l], CONV_CHANNELS[l + 1]);
        out.push((format!("conv_{}.weight", l + 1), vec![cout, cin]));
        out.push((format!("conv_{}.bias", l + 1), vec![cout]));
        out.push((format!("batchnorm_{}.gamma", l + 1), vec![cout]));
        out.push((format!("batchnorm_{}.beta", l + 1), vec![cout]));
    }
    out.push(("fc_1.weight".into(), vec![FC1_UNITS, FC1_INPUTS]));
    out.push(("fc_1.bias".into(), vec![FC1_UNITS]));
    out.push(("fc_2.weight".into(), vec![NUM_CLASSES, FC1_UNITS]));
    out.push(("fc_2.bias".into(), vec![NUM_CLASSES]));
    out
}

impl Params {
    pub fn zeros() -> Self {
        let ch = |l: usize| vec![0.0; CONV_CHANNELS[l + 1]];
        Self {
            conv_w: std::array::from_fn(|l| vec![0.0; CONV_CHANNELS[l] * CONV_CHANNELS[l + 1]]),
            conv_b: std::array::from_fn(ch),
            bn_gamma: std::array::from_fn(ch),
            bn_beta: std::array::from_fn(ch),
            fc1_w: vec![0.0; FC1_UNITS * FC1_INPUTS],
            fc1_b: vec![0.0; FC1_UNITS],
            fc2_w: vec![0.0; NUM_CLASSES * FC1_UNITS],
            fc2_b: vec![0.0; NUM_CLASSES],
        }
    }

    /// Groups in the order of [`param_layout`].
    pub fn groups(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(16);
        for l in 0..3 {
            out.extend([&self.conv_w[l][..], &self.conv_b[l], &self.bn_gamma[l], &self.bn_beta[l]]);
        }
        out.extend([&self.fc1_w[..], &self.fc1_b, &self.fc2_w, &self.fc2_b]);
        out
    }

    pub fn groups_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(16);
        let Params { conv_w, conv_b, bn_gamma, bn_beta, fc1_w, fc1_b, fc2_w, fc2_b } = self;
        for (((w, b), g), be) in
            conv_w.iter_mut().zip(conv_b.iter_mut()).zip(bn_gamma.iter_mut()).zip(bn_beta.iter_mut())
        {
            out.extend([&mut w[..], &mut b[..], &mut g[..], &mut be[..]]);
        }
        out.extend([&mut fc1_w[..], &mut fc1_b[..], &mut fc2_w[..], &mut fc2_b[..]]);
        out
    }

    /// Whether group `index` (in layout order) is a weight matrix subject to
    /// weight decay.
    pub fn is_weight_group(index: usize) -> bool {
        matches!(index, 0 | 4 | 8 | 12 | 14)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub params: Params,
    pub running_mean: [Vec<f64>; 3],
    pub running_var: [Vec<f64>; 3],
    /// Per-channel mean subtracted from the input.
    pub zerocenter: [f64; 3],
    pub seed: u64,
}

impl NetworkModel {
    /// He-normal weights, zero biases, unit BN scale, zero BN shift.
    pub fn init_type_c(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut he = |n: usize, fan_in: usize| -> Vec<f64> {
            let std = (2.0 / fan_in as f64).sqrt();
            (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    std * z
                })
                .collect()
        };
        let mut params = Params::zeros();
        for l in 0..3 {
            params.conv_w[l] = he(CONV_CHANNELS[l] * CONV_CHANNELS[l + 1], CONV_CHANNELS[l]);
            params.bn_gamma[l].fill(1.0);
        }
        params.fc1_w = he(FC1_UNITS * FC1_INPUTS, FC1_INPUTS);
        params.fc2_w = he(NUM_CLASSES * FC1_UNITS, FC1_UNITS);
        Self {
            params,
            running_mean: std::array::from_fn(|l| vec![0.0; CONV_CHANNELS[l + 1]]),
            running_var: std::array::from_fn(|l| vec![1.0; CONV_CHANNELS[l + 1]]),
            zerocenter: [0.0; 3],
            seed,
        }
    }

    /// Final FC weights as an `I x J` matrix (`I = 36` inputs, `J = 8` score
    /// nodes); entry `(i, j)` connects penultimate node `i` to output `j`.
    pub fn final_fc_weights(&self) -> Matrix {
        let mut m = Matrix::zeros(FC1_UNITS, NUM_CLASSES);
        for j in 0..NUM_CLASSES {
            for i in 0..FC1_UNITS {
                m[(i, j)] = self.params.fc2_w[j * FC1_UNITS + i];
            }
        }
        m
    }

    pub fn forward(&self, batch: &[&RgbImage], mode: Mode) -> Result<ForwardTrace, NnError> {
        for (i, img) in batch.iter().enumerate() {
            if img.width() != INPUT_SIZE || img.height() != INPUT_SIZE {
                return Err(NnError::ShapeMismatch(format!(
                    "image {i} is {}x{}, expected {INPUT_SIZE}x{INPUT_SIZE}x3",
                    img.width(),
                    img.height()
                )));
            }
        }
        if batch.is_empty() {
            return Err(NnError::ShapeMismatch("empty batch".into()));
        }
        if mode == Mode::Train && batch.len() < 2 {
            return Err(NnError::BatchTooSmall(batch.len()));
        }
        let n = batch.len();
        let mut input = self.gather_input(batch);

        let mut convs: Vec<ConvCache> = Vec::with_capacity(3);
        for l in 0..3 {
            let size = SIZES[l];
            let (cin, cout) = (CONV_CHANNELS[l], CONV_CHANNELS[l + 1]);
            // The stride-8 gather for conv_1 happened while reading the images.
            let gathered = if l == 0 {
                std::mem::take(&mut input)
            } else {
                strided_gather(&convs[l - 1].out, n, SIZES[l - 1], cin, CONV_STRIDES[l], size)
            };
            let rows = n * size * size;
            let mut z = matmul_bt(&gathered, rows, cin, &self.params.conv_w[l], cout);
            add_bias(&mut z, &self.params.conv_b[l]);
            let bn = self.batch_norm(l, &z, rows, cout, mode);
            let out: Vec<f64> = bn.y.iter().map(|&v| v.max(0.0)).collect();
            convs.push(ConvCache { gathered, bn, out, size });
        }

        let flat = &convs[2].out;
        let mut hidden = matmul_bt(flat, n, FC1_INPUTS, &self.params.fc1_w, FC1_UNITS);
        add_bias(&mut hidden, &self.params.fc1_b);
        let mut logits = matmul_bt(&hidden, n, FC1_UNITS, &self.params.fc2_w, NUM_CLASSES);
        add_bias(&mut logits, &self.params.fc2_b);
        let probabilities = logits
            .chunks_exact(NUM_CLASSES)
            .map(|row| {
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut p = [0.0; NUM_CLASSES];
                let mut sum = 0.0;
                for (dst, &v) in p.iter_mut().zip(row) {
                    *dst = (v - max).exp();
                    sum += *dst;
                }
                p.iter_mut().for_each(|v| *v /= sum);
                p
            })
            .collect();
        Ok(ForwardTrace { mode, batch: n, convs, hidden, logits, probabilities })
    }

    /// Reads the stride-8 pixels of every image and subtracts the zerocenter
    /// mean.
    fn gather_input(&self, batch: &[&RgbImage]) -> Vec<f64> {
        let size = SIZES[0];
        let stride = CONV_STRIDES[0];
        let mut out = Vec::with_capacity(batch.len() * size * size * 3);
        for img in batch {
            for y in 0..size {
                for x in 0..size {
                    for c in 0..3 {
                        out.push(img.get(x * stride, y * stride, c) as f64 - self.zerocenter[c]);
                    }
                }
            }
        }
        out
    }

    fn batch_norm(&self, l: usize, z: &[f64], rows: usize, ch: usize, mode: Mode) -> BnCache {
        let (mean, var) = match mode {
            Mode::Train => channel_stats(z, rows, ch),
            Mode::Infer => (self.running_mean[l].clone(), self.running_var[l].clone()),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let gamma = &self.params.bn_gamma[l];
        let beta = &self.params.bn_beta[l];
        let mut xhat = vec![0.0; z.len()];
        let mut y = vec![0.0; z.len()];
        for r in 0..rows {
            for c in 0..ch {
                let i = r * ch + c;
                let h = (z[i] - mean[c]) * inv_std[c];
                xhat[i] = h;
                y[i] = gamma[c] * h + beta[c];
            }
        }
        BnCache { xhat, y, mean, var, inv_std }
    }

    /// Gradient of the mean cross-entropy loss with respect to every
    /// parameter, given a train-mode trace.
    pub fn backward(&self, trace: &ForwardTrace, labels: &[usize]) -> Result<Params, NnError> {
        let n = trace.batch;
        if labels.len() != n {
            return Err(NnError::ShapeMismatch(format!("{} labels for batch of {n}", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= NUM_CLASSES) {
            return Err(NnError::BadLabel(bad));
        }
        let mut grads = Params::zeros();

        let mut dlogits = vec![0.0; n * NUM_CLASSES];
        for (s, p) in trace.probabilities.iter().enumerate() {
            for j in 0..NUM_CLASSES {
                let target = if labels[s] == j { 1.0 } else { 0.0 };
                dlogits[s * NUM_CLASSES + j] = (p[j] - target) / n as f64;
            }
        }
        grad_weights(&dlogits, n, NUM_CLASSES, &trace.hidden, FC1_UNITS, &mut grads.fc2_w);
        sum_rows(&dlogits, NUM_CLASSES, &mut grads.fc2_b);
        let dhidden = matmul(&dlogits, n, NUM_CLASSES, &self.params.fc2_w, FC1_UNITS);

        grad_weights(&dhidden, n, FC1_UNITS, &trace.convs[2].out, FC1_INPUTS, &mut grads.fc1_w);
        sum_rows(&dhidden, FC1_UNITS, &mut grads.fc1_b);
        let mut dout = matmul(&dhidden, n, FC1_UNITS, &self.params.fc1_w, FC1_INPUTS);

        for l in (0..3).rev() {
            let cache = &trace.convs[l];
            let (cin, cout) = (CONV_CHANNELS[l], CONV_CHANNELS[l + 1]);
            let rows = n * cache.size * cache.size;
            // ReLU
            for (d, &y) in dout.iter_mut().zip(&cache.bn.y) {
                if y <= 0.0 {
                    *d = 0.0;
                }
            }
            let dz = self.batch_norm_backward(l, &cache.bn, &dout, rows, cout, trace.mode, &mut grads);
            grad_weights(&dz, rows, cout, &cache.gathered, cin, &mut grads.conv_w[l]);
            sum_rows(&dz, cout, &mut grads.conv_b[l]);
            if l > 0 {
                let dgathered = matmul(&dz, rows, cout, &self.params.conv_w[l], cin);
                let prev_size = trace.convs[l - 1].size;
                dout = strided_scatter(&dgathered, n, prev_size, cin, CONV_STRIDES[l], cache.size);
            }
        }
        Ok(grads)
    }

    #[allow(clippy::too_many_arguments)]
    fn batch_norm_backward(
        &self,
        l: usize,
        bn: &BnCache,
        dy: &[f64],
        rows: usize,
        ch: usize,
        mode: Mode,
        grads: &mut Params,
    ) -> Vec<f64> {
        let gamma = &self.params.bn_gamma[l];
        let mut sum_dxhat = vec![0.0; ch];
        let mut sum_dxhat_xhat = vec![0.0; ch];
        for r in 0..rows {
            for c in 0..ch {
                let i = r * ch + c;
                grads.bn_gamma[l][c] += dy[i] * bn.xhat[i];
                grads.bn_beta[l][c] += dy[i];
                let dxhat = dy[i] * gamma[c];
                sum_dxhat[c] += dxhat;
                sum_dxhat_xhat[c] += dxhat * bn.xhat[i];
            }
        }
        let mut dz = vec![0.0; rows * ch];
        let m = rows as f64;
        for r in 0..rows {
            for c in 0..ch {
                let i = r * ch + c;
                let dxhat = dy[i] * gamma[c];
                dz[i] = match mode {
                    Mode::Train => bn.inv_std[c] * (dxhat - sum_dxhat[c] / m - bn.xhat[i] * sum_dxhat_xhat[c] / m),
                    Mode::Infer => bn.inv_std[c] * dxhat,
                };
            }
        }
        dz
    }

    /// Mean cross-entropy and its gradient on one train-mode batch.
    pub fn loss_and_grad(&self, batch: &[&RgbImage], labels: &[usize]) -> Result<(f64, Params, ForwardTrace), NnError> {
        let trace = self.forward(batch, Mode::Train)?;
        let loss = trace.cross_entropy(labels)?;
        let grads = self.backward(&trace, labels)?;
        Ok((loss, grads, trace))
    }

    /// Class probabilities for one image in inference mode.
    pub fn predict(&self, image: &RgbImage) -> Result<[f64; NUM_CLASSES], NnError> {
        Ok(self.forward(&[image], Mode::Infer)?.probabilities[0])
    }

    /// Inference over many images in fixed-size chunks.
    pub fn predict_many(&self, images: &[&RgbImage]) -> Result<Vec<[f64; NUM_CLASSES]>, NnError> {
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(64) {
            out.extend(self.forward(chunk, Mode::Infer)?.probabilities);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
struct BnCache {
    xhat: Vec<f64>,
    /// Post-BN, pre-ReLU.
    y: Vec<f64>,
    mean: Vec<f64>,
    var: Vec<f64>,
    inv_std: Vec<f64>,
}

#[derive(Debug, Clone)]
struct ConvCache {
    /// Strided input rows seen by the 1x1 kernel, `(n * size * size) x cin`.
    gathered: Vec<f64>,
    bn: BnCache,
    /// Post-ReLU output, `(n, size, size, cout)`.
    out: Vec<f64>,
    size: usize,
}

/// Activations of one forward pass, kept for backpropagation and inspection.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub mode: Mode,
    pub batch: usize,
    convs: Vec<ConvCache>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
    pub probabilities: Vec<[f64; NUM_CLASSES]>,
}

impl ForwardTrace {
    /// Per-sample activation shapes: the three conv outputs as
    /// `(height, width, channels)`, then the FC widths.
    pub fn activation_shapes(&self) -> ([(usize, usize, usize); 3], usize, usize) {
        let conv = std::array::from_fn(|l| (self.convs[l].size, self.convs[l].size, CONV_CHANNELS[l + 1]));
        (conv, self.hidden.len() / self.batch, self.logits.len() / self.batch)
    }

    /// Post-ReLU output of convolution `layer` (0-based) for sample `s`,
    /// `(y, x, channel)` order.
    pub fn conv_output(&self, layer: usize, s: usize) -> &[f64] {
        let c = &self.convs[layer];
        let per = c.size * c.size * CONV_CHANNELS[layer + 1];
        &c.out[s * per..(s + 1) * per]
    }

    /// Post-BN, pre-ReLU values of convolution `layer` over the whole batch.
    pub fn conv_pre_activation(&self, layer: usize) -> &[f64] {
        &self.convs[layer].bn.y
    }

    /// Batch-norm normalized (before scale/shift) values of `layer`.
    pub fn bn_normalized(&self, layer: usize) -> &[f64] {
        &self.convs[layer].bn.xhat
    }

    /// Feature maps of the final convolution for sample `s`.
    pub fn final_conv_maps(&self, s: usize) -> &[f64] {
        self.conv_output(2, s)
    }

    pub fn batch_stats(&self, layer: usize) -> (&[f64], &[f64]) {
        (&self.convs[layer].bn.mean, &self.convs[layer].bn.var)
    }

    pub fn rows(&self, layer: usize) -> usize {
        self.batch * self.convs[layer].size * self.convs[layer].size
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn cross_entropy(&self, labels: &[usize]) -> Result<f64, NnError> {
        if labels.len() != self.batch {
            return Err(NnError::ShapeMismatch(format!("{} labels for batch of {}", labels.len(), self.batch)));
        }
        let mut total = 0.0;
        for (s, &label) in labels.iter().enumerate() {
            if label >= NUM_CLASSES {
                return Err(NnError::BadLabel(label));
            }
            // log-softmax from logits for accuracy when probabilities underflow
            let row = &self.logits[s * NUM_CLASSES..(s + 1) * NUM_CLASSES];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[label];
        }
        Ok(total / self.batch as f64)
    }
}

fn channel_stats(z: &[f64], rows: usize, ch: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; ch];
    for row in z.chunks_exact(ch) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= rows as f64);
    let mut var = vec![0.0; ch];
    for row in z.chunks_exact(ch) {
        for c in 0..ch {
            let d = row[c] - mean[c];
            var[c] += d * d;
        }
    }
    var.iter_mut().for_each(|v| *v /= rows as f64);
    (mean, var)
}

fn strided_gather(src: &[f64], n: usize, src_size: usize, ch: usize, stride: usize, size: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * size * size * ch);
    for s in 0..n {
        for y in 0..size {
            for x in 0..size {
                let i = ((s * src_size + y * stride) * src_size + x * stride) * ch;
                out.extend_from_slice(&src[i..i + ch]);
            }
        }
    }
    out
}

fn strided_scatter(g: &[f64], n: usize, dst_size: usize, ch: usize, stride: usize, size: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * dst_size * dst_size * ch];
    let mut k = 0;
    for s in 0..n {
        for y in 0..size {
            for x in 0..size {
                let i = ((s * dst_size + y * stride) * dst_size + x * stride) * ch;
                out[i..i + ch].copy_from_slice(&g[k..k + ch]);
                k += ch;
            }
        }
    }
    out
}

/// `a (rows x k) * w' ` where `w` is `(out x k)`.
fn matmul_bt(a: &[f64], rows: usize, k: usize, w: &[f64], out: usize) -> Vec<f64> {
    let mut res = vec![0.0; rows * out];
    for r in 0..rows {
        let x = &a[r * k..(r + 1) * k];
        let dst = &mut res[r * out..(r + 1) * out];
        for (o, d) in dst.iter_mut().enumerate() {
            *d = dot(x, &w[o * k..(o + 1) * k]);
        }
    }
    res
}

/// `d (rows x out) * w` where `w` is `(out x k)`.
fn matmul(d: &[f64], rows: usize, out: usize, w: &[f64], k: usize) -> Vec<f64> {
    let mut res = vec![0.0; rows * k];
    for r in 0..rows {
        let dst = &mut res[r * k..(r + 1) * k];
        for o in 0..out {
            let g = d[r * out + o];
            if g != 0.0 {
                axpy(g, &w[o * k..(o + 1) * k], dst);
            }
        }
    }
    res
}

/// `dw += d' a` with `d (rows x out)`, `a (rows x k)`, `dw (out x k)`.
fn grad_weights(d: &[f64], rows: usize, out: usize, a: &[f64], k: usize, dw: &mut [f64]) {
    for r in 0..rows {
        let x = &a[r * k..(r + 1) * k];
        for o in 0..out {
            let g = d[r * out + o];
            if g != 0.0 {
                axpy(g, x, &mut dw[o * k..(o + 1) * k]);
            }
        }
    }
}

fn sum_rows(d: &[f64], width: usize, acc: &mut [f64]) {
    for row in d.chunks_exact(width) {
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
}

fn add_bias(z: &mut [f64], bias: &[f64]) {
    for row in z.chunks_exact_mut(bias.len()) {
        for (v, &b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four independent accumulators; fixed order keeps results reproducible.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for j in 0..4 {
            acc[j] += a[4 * i + j] * b[4 * i + j];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
