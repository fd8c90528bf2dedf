#![allow(dead_code)]

use mdi_core::tensor::AXES;
use mdi_core::{DataTensor, Shape, SubBlock};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Standard-normal tensor with each sample masked with probability `mask_p`.
pub fn random_tensor(rng: &mut impl Rng, shape: Shape, mask_p: f64) -> DataTensor {
    let n = shape.num_samples();
    let values = (0..n * shape.d).map(|_| normal(rng)).collect();
    let mask = (mask_p > 0.0).then(|| (0..n).map(|_| rng.random_bool(mask_p)).collect());
    DataTensor::new(shape, values, mask).unwrap()
}

pub fn white_noise(rng: &mut impl Rng, n: usize, d: usize) -> DataTensor {
    random_tensor(rng, Shape::series(n, d), 0.0)
}

pub fn random_block(rng: &mut impl Rng, extents: [usize; AXES]) -> SubBlock {
    let mut start = [0; AXES];
    let mut end = [0; AXES];
    for a in 0..AXES {
        let s = rng.random_range(0..extents[a]);
        start[a] = s;
        end[a] = rng.random_range(s + 1..=extents[a]);
    }
    SubBlock { start, end }
}

/// Direct sums over the unmasked samples selected by `keep`: (sum, full outer product, count).
pub fn brute_sums(t: &DataTensor, keep: impl Fn([usize; AXES]) -> bool) -> (Vec<f64>, Vec<f64>, u64) {
    let d = t.dims();
    let mut sum = vec![0.0; d];
    let mut outer = vec![0.0; d * d];
    let mut count = 0;
    for i in 0..t.num_samples() {
        if t.is_masked(i) || !keep(t.coords(i)) {
            continue;
        }
        let x = t.sample(i);
        for j in 0..d {
            sum[j] += x[j];
            for k in 0..d {
                outer[j * d + k] += x[j] * x[k];
            }
        }
        count += 1;
    }
    (sum, outer, count)
}

/// Packed upper triangle (row-major, `i <= j`) of a full `d × d` matrix.
pub fn pack(full: &[f64], d: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..d {
        for j in i..d {
            out.push(full[i * d + j]);
        }
    }
    out
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

pub fn all_close(a: &[f64], b: &[f64], rel: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| close(*x, *y, rel))
}

/// Two-pass mean and population covariance of the unmasked samples selected by `keep`.
pub fn two_pass(t: &DataTensor, keep: impl Fn([usize; AXES]) -> bool) -> (Vec<f64>, Vec<f64>) {
    let d = t.dims();
    let idx: Vec<usize> = (0..t.num_samples()).filter(|&i| !t.is_masked(i) && keep(t.coords(i))).collect();
    let n = idx.len() as f64;
    let mut mean = vec![0.0; d];
    for &i in &idx {
        for (m, v) in mean.iter_mut().zip(t.sample(i)) {
            *m += v / n;
        }
    }
    let mut cov = vec![0.0; d * d];
    for &i in &idx {
        let x = t.sample(i);
        for j in 0..d {
            for k in 0..d {
                cov[j * d + k] += (x[j] - mean[j]) * (x[k] - mean[k]) / n;
            }
        }
    }
    (mean, cov)
}

/// Applies `x ↦ A x + b` to every sample (`A` row-major `d × d`).
pub fn affine(t: &DataTensor, a: &[f64], b: &[f64]) -> DataTensor {
    let d = t.dims();
    t.map_samples(|x, out| {
        for i in 0..d {
            out[i] = b[i] + (0..d).map(|j| a[i * d + j] * x[j]).sum::<f64>();
        }
    })
}

/// Random well-conditioned invertible matrix: identity plus a scaled random perturbation.
pub fn random_invertible(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    let mut a: Vec<f64> = (0..d * d).map(|_| 0.4 * normal(rng)).collect();
    for i in 0..d {
        a[i * d + i] += if rng.random_bool(0.5) { 1.5 } else { -1.5 };
    }
    a
}
