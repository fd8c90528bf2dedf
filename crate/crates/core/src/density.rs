//! Density models for the inside and outside of a block.
//!
//! Gaussians are fitted in constant time from [`CumulativeStats`]; kernel density
//! estimates read from a cumulative kernel matrix built once per series.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::cumsum::{BlockSums, CumulativeStats};
use crate::error::{Error, Result};
use crate::linalg;
use crate::math;
use crate::tensor::{DataTensor, SubBlock};

/// Relative ridge added to covariance diagonals, scaled by `tr(S)/D`.
pub const RIDGE_EPS: f64 = 1e-6;
/// Absolute lower bound on the ridge.
pub const RIDGE_FLOOR: f64 = 1e-8;

/// Which covariance a Gaussian fit uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CovarianceMode {
    /// Separate covariance for the block and its complement.
    #[default]
    Full,
    /// One covariance fitted once from all data, used for both sides.
    Shared,
    /// Unit covariance on both sides; only the means are compared.
    Identity,
}

/// A fitted multivariate normal distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams {
    pub mean: Vec<f64>,
    /// Row-major `D × D`, already regularized.
    pub covariance: Vec<f64>,
    pub mode: CovarianceMode,
    pub count: u64,
}

impl GaussianParams {
    /// Standard normal in `d` dimensions.
    pub fn standard(d: usize) -> Self {
        GaussianParams { mean: vec![0.0; d], covariance: identity(d), mode: CovarianceMode::Identity, count: 0 }
    }

    pub fn new(mean: Vec<f64>, covariance: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || covariance.len() != d * d {
            return Err(Error::Input(format!("covariance must be {d}x{d}")));
        }
        Ok(GaussianParams { mean, covariance, mode: CovarianceMode::Full, count: 0 })
    }

    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    /// Factorizes the covariance for repeated density evaluation.
    pub fn prepare(&self) -> Result<PreparedGaussian> {
        let d = self.dims();
        let mut chol = self.covariance.clone();
        linalg::cholesky_in_place(&mut chol, d)?;
        let log_det = linalg::log_det_from_cholesky(&chol, d);
        Ok(PreparedGaussian { mean: self.mean.clone(), chol, log_det })
    }

    pub fn log_pdf(&self, x: &[f64]) -> Result<f64> {
        self.prepare()?.log_pdf(x)
    }
}

/// A Gaussian with its covariance factorized.
#[derive(Debug, Clone)]
pub struct PreparedGaussian {
    pub mean: Vec<f64>,
    pub chol: Vec<f64>,
    pub log_det: f64,
}

impl PreparedGaussian {
    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    pub fn log_pdf(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dims() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input(format!("expected {} finite coordinates", self.dims())));
        }
        let mut scratch = vec![0.0; 2 * self.dims()];
        Ok(self.log_pdf_unchecked(x, &mut scratch))
    }

    /// `scratch` needs `2·D` entries.
    pub fn log_pdf_unchecked(&self, x: &[f64], scratch: &mut [f64]) -> f64 {
        let d = self.dims();
        let (diff, work) = scratch.split_at_mut(d);
        for i in 0..d {
            diff[i] = x[i] - self.mean[i];
        }
        let q = linalg::mahalanobis_sq(&self.chol, d, diff, work);
        -0.5 * (q + self.log_det + d as f64 * math::LN_2PI)
    }
}

/// Log density of `N(params)` at `x`.
pub fn gaussian_logpdf(params: &GaussianParams, x: &[f64]) -> Result<f64> {
    params.log_pdf(x)
}

pub fn identity(d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        m[i * d + i] = 1.0;
    }
    m
}

/// Adds the ridge `max(RIDGE_EPS·tr(S)/D, RIDGE_FLOOR)` to the diagonal.
pub fn regularize(cov: &mut [f64], d: usize) -> f64 {
    linalg::add_ridge(cov, d, RIDGE_EPS, RIDGE_FLOOR)
}

/// Maximum-likelihood mean and covariance from block sums (population normalization).
pub fn moments_into(sums: &BlockSums, mean: &mut [f64], cov: &mut [f64]) -> Result<()> {
    if sums.count == 0 {
        return Err(Error::EmptyData("block"));
    }
    let d = mean.len();
    let inv = 1.0 / sums.count as f64;
    for i in 0..d {
        mean[i] = sums.sum[i] * inv;
    }
    linalg::unpack_symmetric(&sums.outer, d, cov);
    for i in 0..d {
        for j in 0..d {
            cov[i * d + j] = cov[i * d + j] * inv - mean[i] * mean[j];
        }
    }
    Ok(())
}

/// Regularized maximum-likelihood Gaussian over all unmasked samples.
pub fn fit_global(stats: &CumulativeStats) -> Result<GaussianParams> {
    let d = stats.dims();
    let totals = stats.totals();
    let mut mean = vec![0.0; d];
    let mut cov = vec![0.0; d * d];
    moments_into(&totals, &mut mean, &mut cov)?;
    regularize(&mut cov, d);
    Ok(GaussianParams { mean, covariance: cov, mode: CovarianceMode::Full, count: totals.count })
}

/// Fits `p_I` and `p_Ω` for `block`.
pub fn fit_gaussian_pair(stats: &CumulativeStats, block: &SubBlock, mode: CovarianceMode) -> Result<(GaussianParams, GaussianParams)> {
    let mut fitter = PairFitter::new(stats, mode)?;
    fitter.fit(block)?;
    let fit = fitter.fitted();
    let d = fit.d;
    let covs = match mode {
        CovarianceMode::Full => (fitter.cov_inner.clone(), fitter.cov_outer.clone()),
        CovarianceMode::Shared => {
            let g = fitter.shared.as_ref().map(|g| g.covariance.clone()).unwrap_or_else(|| identity(d));
            (g.clone(), g)
        }
        CovarianceMode::Identity => (identity(d), identity(d)),
    };
    Ok((
        GaussianParams { mean: fit.mean_inner.clone(), covariance: covs.0, mode, count: fit.count_inner },
        GaussianParams { mean: fit.mean_outer.clone(), covariance: covs.1, mode, count: fit.count_outer },
    ))
}

/// Factorized Gaussian pair for one block, as consumed by the closed-form divergences.
#[derive(Debug, Clone)]
pub struct FittedPair {
    pub d: usize,
    pub mode: CovarianceMode,
    pub count_inner: u64,
    pub count_outer: u64,
    pub mean_inner: Vec<f64>,
    pub mean_outer: Vec<f64>,
    /// Cholesky factors. Under `Shared` both hold the global factor, under `Identity` both
    /// are the identity.
    pub chol_inner: Vec<f64>,
    pub chol_outer: Vec<f64>,
    pub log_det_inner: f64,
    pub log_det_outer: f64,
}

impl FittedPair {
    /// `log p_I(x)`; `scratch` needs `2·D` entries.
    pub fn log_pdf_inner(&self, x: &[f64], scratch: &mut [f64]) -> f64 {
        log_pdf_parts(x, &self.mean_inner, &self.chol_inner, self.log_det_inner, scratch)
    }

    /// `log p_Ω(x)`; `scratch` needs `2·D` entries.
    pub fn log_pdf_outer(&self, x: &[f64], scratch: &mut [f64]) -> f64 {
        log_pdf_parts(x, &self.mean_outer, &self.chol_outer, self.log_det_outer, scratch)
    }
}

fn log_pdf_parts(x: &[f64], mean: &[f64], chol: &[f64], log_det: f64, scratch: &mut [f64]) -> f64 {
    let d = mean.len();
    let (diff, work) = scratch.split_at_mut(d);
    for i in 0..d {
        diff[i] = x[i] - mean[i];
    }
    let q = linalg::mahalanobis_sq(chol, d, diff, work);
    -0.5 * (q + log_det + d as f64 * math::LN_2PI)
}

/// Reusable buffers for fitting Gaussian pairs against one set of cumulative statistics.
///
/// The per-block cost depends only on `D`, never on the block volume.
#[derive(Debug, Clone)]
pub struct PairFitter<'a> {
    stats: &'a CumulativeStats,
    mode: CovarianceMode,
    shared: Option<GaussianParams>,
    inner: BlockSums,
    outer: BlockSums,
    cov_inner: Vec<f64>,
    cov_outer: Vec<f64>,
    fit: FittedPair,
}

impl<'a> PairFitter<'a> {
    pub fn new(stats: &'a CumulativeStats, mode: CovarianceMode) -> Result<Self> {
        let d = stats.dims();
        let mut fit = FittedPair {
            d,
            mode,
            count_inner: 0,
            count_outer: 0,
            mean_inner: vec![0.0; d],
            mean_outer: vec![0.0; d],
            chol_inner: identity(d),
            chol_outer: identity(d),
            log_det_inner: 0.0,
            log_det_outer: 0.0,
        };
        let shared = if mode == CovarianceMode::Shared {
            let g = fit_global(stats)?;
            let p = g.prepare()?;
            fit.chol_inner.copy_from_slice(&p.chol);
            fit.chol_outer.copy_from_slice(&p.chol);
            fit.log_det_inner = p.log_det;
            fit.log_det_outer = p.log_det;
            Some(g)
        } else {
            None
        };
        Ok(PairFitter {
            stats,
            mode,
            shared,
            inner: BlockSums::zeros(d),
            outer: BlockSums::zeros(d),
            cov_inner: vec![0.0; d * d],
            cov_outer: vec![0.0; d * d],
            fit,
        })
    }

    pub fn stats(&self) -> &'a CumulativeStats {
        self.stats
    }

    /// Shared covariance fitted from all data, present in `Shared` mode.
    pub fn shared(&self) -> Option<&GaussianParams> {
        self.shared.as_ref()
    }

    pub fn fitted(&self) -> &FittedPair {
        &self.fit
    }

    pub fn fit(&mut self, block: &SubBlock) -> Result<&FittedPair> {
        let d = self.fit.d;
        self.stats.range_sum_into(block, &mut self.inner)?;
        if self.inner.count == 0 {
            return Err(Error::EmptyData("block"));
        }
        self.stats.complement_from(&self.inner, &mut self.outer)?;
        self.fit.count_inner = self.inner.count;
        self.fit.count_outer = self.outer.count;
        moments_into(&self.inner, &mut self.fit.mean_inner, &mut self.cov_inner)?;
        moments_into(&self.outer, &mut self.fit.mean_outer, &mut self.cov_outer)?;
        if self.mode == CovarianceMode::Full {
            regularize(&mut self.cov_inner, d);
            regularize(&mut self.cov_outer, d);
            self.fit.chol_inner.copy_from_slice(&self.cov_inner);
            self.fit.chol_outer.copy_from_slice(&self.cov_outer);
            linalg::cholesky_in_place(&mut self.fit.chol_inner, d)?;
            linalg::cholesky_in_place(&mut self.fit.chol_outer, d)?;
            self.fit.log_det_inner = linalg::log_det_from_cholesky(&self.fit.chol_inner, d);
            self.fit.log_det_outer = linalg::log_det_from_cholesky(&self.fit.chol_outer, d);
            // keep the regularized covariances around for fit_gaussian_pair
        }
        Ok(&self.fit)
    }
}

/// Gaussian kernel density estimate over a temporal series.
///
/// Stores `C[t][k] = Σ_{s < k, s unmasked} k(x_t, x_s)` for `k = 0..=n`.
#[derive(Debug, Clone)]
pub struct KdeModel {
    sigma: f64,
    n: usize,
    cum: Vec<f64>,
    valid: Vec<u64>,
    mask: Vec<bool>,
}

/// Default kernel bandwidth.
pub const DEFAULT_KDE_SIGMA: f64 = 1.0;

/// Gaussian kernel with normalization `(2πσ²)^(−D/2)`.
pub fn gaussian_kernel(a: &[f64], b: &[f64], sigma: f64) -> f64 {
    let d = a.len() as f64;
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    math::powf(2.0 * core::f64::consts::PI * sigma * sigma, -d / 2.0) * math::exp(-sq / (2.0 * sigma * sigma))
}

/// Builds the cumulative kernel matrix for `n` samples of `d` values (row-major).
pub fn build_kernel_cumsum(samples: &[f64], d: usize, mask: Option<&[bool]>, sigma: f64) -> Result<KdeModel> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Config(format!("kernel bandwidth must be positive, got {sigma}")));
    }
    if d == 0 || samples.len() % d != 0 {
        return Err(Error::Input(format!("sample buffer length {} is not a multiple of {d}", samples.len())));
    }
    let n = samples.len() / d;
    if n < 2 {
        return Err(Error::Input(format!("kernel density estimation needs at least 2 samples, got {n}")));
    }
    let mask = mask.map(<[bool]>::to_vec).unwrap_or_else(|| vec![false; n]);
    if mask.len() != n {
        return Err(Error::Input(format!("mask has {} entries, expected {n}", mask.len())));
    }
    let norm = math::powf(2.0 * core::f64::consts::PI * sigma * sigma, -(d as f64) / 2.0);
    let denom = 2.0 * sigma * sigma;
    let w = n + 1;
    let mut cum = vec![0.0; n * w];
    for t in 0..n {
        if mask[t] {
            continue;
        }
        let xt = &samples[t * d..(t + 1) * d];
        let row = &mut cum[t * w..(t + 1) * w];
        let mut acc = 0.0;
        for s in 0..n {
            if !mask[s] {
                let xs = &samples[s * d..(s + 1) * d];
                let sq: f64 = xt.iter().zip(xs).map(|(a, b)| (a - b) * (a - b)).sum();
                acc += norm * math::exp(-sq / denom);
            }
            row[s + 1] = acc;
        }
    }
    let mut valid = vec![0u64; w];
    for s in 0..n {
        valid[s + 1] = valid[s] + u64::from(!mask[s]);
    }
    Ok(KdeModel { sigma, n, cum, valid, mask })
}

impl KdeModel {
    /// KDE over a temporal tensor. Tensors with spatial extent are rejected.
    pub fn from_tensor(tensor: &DataTensor, sigma: f64) -> Result<Self> {
        if !tensor.shape().is_temporal() {
            return Err(Error::Config("kernel density estimation supports temporal series only".into()));
        }
        build_kernel_cumsum(tensor.values(), tensor.dims(), Some(tensor.mask()), sigma)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn is_masked(&self, t: usize) -> bool {
        self.mask[t]
    }

    /// `C[t][k]`, the kernel sum of `x_t` against all unmasked samples before `k`.
    pub fn cumulative(&self, t: usize, k: usize) -> f64 {
        self.cum[t * (self.n + 1) + k]
    }

    /// Unmasked counts inside and outside `[a, b)`.
    pub fn counts(&self, a: usize, b: usize) -> (u64, u64) {
        let inside = self.valid[b] - self.valid[a];
        (inside, self.valid[self.n] - inside)
    }

    /// `(p_I(x_t), p_Ω(x_t))` for interval `[a, b)`; constant time.
    #[inline]
    pub fn densities_at(&self, t: usize, a: usize, b: usize, counts: (u64, u64)) -> (f64, f64) {
        let row = &self.cum[t * (self.n + 1)..(t + 1) * (self.n + 1)];
        let inside = row[b] - row[a];
        let outside = row[self.n] - inside;
        (inside / counts.0 as f64, outside / counts.1 as f64)
    }

    fn check(&self, a: usize, b: usize) -> Result<(u64, u64)> {
        if a >= b || b > self.n {
            return Err(Error::OutOfBounds(format!("t[{a},{b}) in a series of {}", self.n)));
        }
        let counts = self.counts(a, b);
        if counts.0 == 0 {
            return Err(Error::EmptyData("interval"));
        }
        if counts.1 == 0 {
            return Err(Error::EmptyComplement);
        }
        Ok(counts)
    }

    /// Densities of both models at every sample for interval `[a, b)`. Masked samples
    /// get `NaN`.
    pub fn densities(&self, a: usize, b: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let counts = self.check(a, b)?;
        let mut p_in = vec![f64::NAN; self.n];
        let mut p_out = vec![f64::NAN; self.n];
        for t in 0..self.n {
            if !self.mask[t] {
                let (pi, po) = self.densities_at(t, a, b, counts);
                p_in[t] = pi;
                p_out[t] = po;
            }
        }
        Ok((p_in, p_out))
    }

    /// Validated counts for `[a, b)`, for use with [`densities_at`](Self::densities_at).
    pub fn interval_counts(&self, a: usize, b: usize) -> Result<(u64, u64)> {
        self.check(a, b)
    }
}

/// Densities of `p_I` and `p_Ω` at every sample of the model for `[a, b)`.
pub fn kde_densities(model: &KdeModel, a: usize, b: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    model.densities(a, b)
}
