//! Helpers shared by the integration tests: independent oracles, random
//! inputs and a finite-difference gradient checker.
#![allow(dead_code)]

pub mod golden;

use photoscore::data::{RgbImage, INPUT_SIZE};
use photoscore::linalg::Matrix;
use photoscore::nn::{param_layout, Mode, NetworkModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

pub fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let a = random_matrix(rng, n, n);
    let mut s = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] = 0.5 * (a[(i, j)] + a[(j, i)]);
        }
    }
    s
}

/// Pearson correlation of two columns, computed directly.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Closed form of the disentanglement measure: the factor-loading distance
/// between two nodes equals `sqrt(2 - 2r)` for their correlation `r`.
pub fn d_measure_oracle(w: &Matrix) -> f64 {
    let cols: Vec<Vec<f64>> = (0..w.cols()).map(|j| w.column(j)).collect();
    let j = cols.len();
    let mut total = 0.0;
    for a in 0..j {
        let min = (0..j)
            .filter(|&b| b != a)
            .map(|b| (2.0 - 2.0 * pearson(&cols[a], &cols[b])).max(0.0).sqrt())
            .fold(f64::INFINITY, f64::min);
        total += min;
    }
    total / j as f64
}

pub fn random_image(rng: &mut ChaCha8Rng) -> RgbImage {
    let pixels = (0..INPUT_SIZE * INPUT_SIZE * 3).map(|_| rng.random()).collect();
    RgbImage::from_raw(INPUT_SIZE, INPUT_SIZE, pixels).unwrap()
}

/// Worst relative error per parameter group.
#[derive(Debug, Clone)]
pub struct GroupCheck {
    pub name: String,
    pub checked: usize,
    pub skipped_kinks: usize,
    pub max_rel_err: f64,
}

/// Relative error with a floor so structurally zero gradients (for example a
/// convolution bias feeding train-mode batch norm) compare on absolute
/// scale.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-5)
}

fn relu_pattern(model: &NetworkModel, batch: &[&RgbImage], mode: Mode) -> Vec<bool> {
    let trace = model.forward(batch, mode).unwrap();
    (0..3).flat_map(|l| trace.conv_pre_activation(l).iter().map(|&v| v > 0.0).collect::<Vec<_>>()).collect()
}

fn loss(model: &NetworkModel, batch: &[&RgbImage], labels: &[usize], mode: Mode) -> f64 {
    model.forward(batch, mode).unwrap().cross_entropy(labels).unwrap()
}

/// Central-difference check of `per_group` randomly chosen entries in every
/// parameter group. Entries whose perturbation flips a ReLU are skipped and
/// replaced, since the loss is not differentiable there.
pub fn gradient_check(
    model: &NetworkModel,
    batch: &[&RgbImage],
    labels: &[usize],
    mode: Mode,
    per_group: usize,
    eps: f64,
    seed: u64,
) -> Vec<GroupCheck> {
    let trace = model.forward(batch, mode).unwrap();
    let grads = model.backward(&trace, labels).unwrap();
    let grad_groups = grads.groups();
    let mut rng = rng(seed);
    let mut out = Vec::new();
    for (g, (name, _)) in param_layout().into_iter().enumerate() {
        let len = grad_groups[g].len();
        let mut check = GroupCheck { name, checked: 0, skipped_kinks: 0, max_rel_err: 0.0 };
        let mut attempts = 0;
        while check.checked < per_group.min(len) && attempts < 20 * per_group {
            attempts += 1;
            let i = rng.random_range(0..len);
            let mut plus = model.clone();
            plus.params.groups_mut()[g][i] += eps;
            let mut minus = model.clone();
            minus.params.groups_mut()[g][i] -= eps;
            if relu_pattern(&plus, batch, mode) != relu_pattern(&minus, batch, mode) {
                check.skipped_kinks += 1;
                continue;
            }
            let numeric = (loss(&plus, batch, labels, mode) - loss(&minus, batch, labels, mode)) / (2.0 * eps);
            check.max_rel_err = check.max_rel_err.max(rel_err(grad_groups[g][i], numeric));
            check.checked += 1;
        }
        out.push(check);
    }
    out
}

/// A model with non-trivial batch-norm parameters and running statistics so
/// every parameter group has a non-degenerate gradient.
pub fn perturbed_model(seed: u64, batch: &[&RgbImage]) -> NetworkModel {
    let mut model = NetworkModel::init_type_c(seed);
    model.zerocenter = [127.5; 3];
    let mut r = rng(seed ^ 0x5eed);
    for l in 0..3 {
        for v in model.params.bn_gamma[l].iter_mut() {
            *v = r.random_range(0.5..1.5);
        }
        for v in model.params.bn_beta[l].iter_mut() {
            *v = r.random_range(-0.5..0.5);
        }
        for v in model.params.conv_b[l].iter_mut() {
            *v = r.random_range(-0.1..0.1);
        }
    }
    for v in model.params.fc1_b.iter_mut().chain(model.params.fc2_b.iter_mut()) {
        *v = r.random_range(-0.1..0.1);
    }
    let trace = model.forward(batch, Mode::Train).unwrap();
    for l in 0..3 {
        let (mean, var) = trace.batch_stats(l);
        model.running_mean[l] = mean.iter().map(|m| m + r.random_range(-0.1..0.1)).collect();
        model.running_var[l] = var.iter().map(|v| v * r.random_range(0.8..1.2)).collect();
    }
    model
}
