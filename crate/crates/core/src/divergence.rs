//! Divergence measures between `p_I` and `p_Ω`.
//!
//! Closed forms assume Gaussian models; empirical estimators average log-density ratios
//! over the samples and work with any model.

use alloc::format;

use crate::density::{CovarianceMode, FittedPair, GaussianParams, PreparedGaussian};
use crate::error::{Error, Result};
use crate::linalg;
use crate::math;
use crate::special;

/// Which divergence scores a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Divergence {
    CrossEntropy,
    Kl,
    /// `2 |I| · KL(p_I ‖ p_Ω)`, comparable across block sizes.
    #[default]
    UnbiasedKl,
    SymmetricKl,
    /// Jensen–Shannon; empirical only.
    Js,
}

/// How a divergence is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Estimator {
    /// Gaussian closed form.
    #[default]
    ClosedForm,
    /// Averages over the samples using the model's densities.
    Empirical,
}

/// Divergence kind plus estimator and score normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DivergenceSpec {
    pub kind: Divergence,
    pub estimator: Estimator,
    /// Divide unbiased KL scores by the χ² degrees of freedom `d + d(d+1)/2`.
    pub normalize_by_df: bool,
}

impl DivergenceSpec {
    pub fn new(kind: Divergence, estimator: Estimator) -> Result<Self> {
        let spec = DivergenceSpec { kind, estimator, normalize_by_df: false };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == Divergence::Js && self.estimator == Estimator::ClosedForm {
            return Err(Error::Config("Jensen-Shannon divergence has no Gaussian closed form; use the empirical estimator".into()));
        }
        if self.normalize_by_df && self.kind != Divergence::UnbiasedKl {
            return Err(Error::Config("degree-of-freedom normalization applies to unbiased KL only".into()));
        }
        Ok(())
    }

    /// Applies the optional normalization to a raw score with `df` degrees of freedom.
    pub fn finish(&self, raw: f64, df: usize) -> f64 {
        if self.normalize_by_df {
            raw / df as f64
        } else {
            raw
        }
    }
}

/// `KL(p ‖ q)` between two Gaussians.
pub fn kl_gaussian(p: &GaussianParams, q: &GaussianParams) -> Result<f64> {
    let (pp, qp) = (p.prepare()?, q.prepare()?);
    Ok(kl_prepared(&pp, &qp))
}

/// `H(p, q) = E_p[−log q]` between two Gaussians.
pub fn cross_entropy_gaussian(p: &GaussianParams, q: &GaussianParams) -> Result<f64> {
    let (pp, qp) = (p.prepare()?, q.prepare()?);
    let d = pp.dims();
    let mut scratch = alloc::vec![0.0; 2 * d];
    let (delta, work) = scratch.split_at_mut(d);
    for i in 0..d {
        delta[i] = qp.mean[i] - pp.mean[i];
    }
    let m = linalg::mahalanobis_sq(&qp.chol, d, delta, work);
    let tr = linalg::trace_inv_product(&qp.chol, &pp.chol, d, work);
    Ok(0.5 * (tr + qp.log_det + d as f64 * math::LN_2PI + m))
}

/// Differential entropy of a Gaussian.
pub fn gaussian_entropy(p: &GaussianParams) -> Result<f64> {
    let pp = p.prepare()?;
    let d = pp.dims() as f64;
    Ok(0.5 * (pp.log_det + d + d * math::LN_2PI))
}

fn kl_prepared(p: &PreparedGaussian, q: &PreparedGaussian) -> f64 {
    let d = p.dims();
    let mut scratch = alloc::vec![0.0; 2 * d];
    let (delta, work) = scratch.split_at_mut(d);
    for i in 0..d {
        delta[i] = q.mean[i] - p.mean[i];
    }
    kl_full(d, delta, &p.chol, p.log_det, &q.chol, q.log_det, work)
}

#[inline]
fn kl_full(d: usize, delta: &[f64], lp: &[f64], ldp: f64, lq: &[f64], ldq: f64, work: &mut [f64]) -> f64 {
    let m = linalg::mahalanobis_sq(lq, d, delta, work);
    let tr = linalg::trace_inv_product(lq, lp, d, work);
    (0.5 * (m + tr + ldq - ldp - d as f64)).max(0.0)
}

/// `2 · volume · kl`.
pub fn unbiased_kl(kl: f64, volume: u64) -> f64 {
    2.0 * volume as f64 * kl
}

/// Degrees of freedom of the asymptotic χ² distribution of unbiased KL scores: one per
/// parameter that is fitted separately inside the block.
pub fn chi2_degrees_of_freedom(d: usize, mode: CovarianceMode) -> usize {
    match mode {
        CovarianceMode::Full => d + d * (d + 1) / 2,
        CovarianceMode::Shared | CovarianceMode::Identity => d,
    }
}

/// Unbiased KL score above which a block is significant at level `alpha`.
pub fn chi2_score_threshold(d: usize, mode: CovarianceMode, alpha: f64) -> Result<f64> {
    if d == 0 {
        return Err(Error::Config("attribute count must be positive".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("significance level must lie in (0, 1), got {alpha}")));
    }
    special::chi2_quantile(1.0 - alpha, chi2_degrees_of_freedom(d, mode) as f64)
}

/// Scratch space for [`closed_form_score`]: `2·D` entries.
pub fn closed_form_scratch_len(d: usize) -> usize {
    2 * d
}

/// Closed-form score of a fitted pair. `kind` must not be [`Divergence::Js`].
pub fn closed_form_score(kind: Divergence, fit: &FittedPair, scratch: &mut [f64]) -> f64 {
    let d = fit.d;
    let (delta, work) = scratch[..2 * d].split_at_mut(d);
    for i in 0..d {
        delta[i] = fit.mean_outer[i] - fit.mean_inner[i];
    }
    let df = d as f64;
    let kl = |delta: &[f64], work: &mut [f64]| match fit.mode {
        CovarianceMode::Identity => 0.5 * delta.iter().map(|v| v * v).sum::<f64>(),
        CovarianceMode::Shared => 0.5 * linalg::mahalanobis_sq(&fit.chol_outer, d, delta, work),
        CovarianceMode::Full => {
            kl_full(d, delta, &fit.chol_inner, fit.log_det_inner, &fit.chol_outer, fit.log_det_outer, work)
        }
    };
    match kind {
        Divergence::Kl => kl(delta, work),
        Divergence::UnbiasedKl => unbiased_kl(kl(delta, work), fit.count_inner),
        Divergence::CrossEntropy => match fit.mode {
            CovarianceMode::Identity => 0.5 * (df + df * math::LN_2PI + delta.iter().map(|v| v * v).sum::<f64>()),
            CovarianceMode::Shared => {
                let m = linalg::mahalanobis_sq(&fit.chol_outer, d, delta, work);
                0.5 * (df + fit.log_det_outer + df * math::LN_2PI + m)
            }
            CovarianceMode::Full => {
                let m = linalg::mahalanobis_sq(&fit.chol_outer, d, delta, work);
                let tr = linalg::trace_inv_product(&fit.chol_outer, &fit.chol_inner, d, work);
                0.5 * (tr + fit.log_det_outer + df * math::LN_2PI + m)
            }
        },
        Divergence::SymmetricKl => match fit.mode {
            // same quadratic form in both directions
            CovarianceMode::Identity | CovarianceMode::Shared => kl(delta, work),
            CovarianceMode::Full => {
                let forward = kl_full(d, delta, &fit.chol_inner, fit.log_det_inner, &fit.chol_outer, fit.log_det_outer, work);
                let backward = kl_full(d, delta, &fit.chol_outer, fit.log_det_outer, &fit.chol_inner, fit.log_det_inner, work);
                0.5 * (forward + backward)
            }
        },
        Divergence::Js => f64::NAN,
    }
}

/// Densities below this value are floored before taking logs.
pub const DENSITY_FLOOR: f64 = 1e-300;

/// `ln(DENSITY_FLOOR)`.
pub const LOG_DENSITY_FLOOR: f64 = -690.775_527_898_213_7;

/// Log densities of both models at one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDensityPair {
    pub inner: f64,
    pub outer: f64,
}

/// Result of an empirical estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalScore {
    pub value: f64,
    /// Number of log densities that were floored.
    pub saturated: usize,
}

/// Floors a log density at [`LOG_DENSITY_FLOOR`], counting saturations.
#[inline]
pub fn floor_log(log_p: f64, saturated: &mut usize) -> f64 {
    if log_p >= LOG_DENSITY_FLOOR {
        log_p
    } else {
        *saturated += 1;
        LOG_DENSITY_FLOOR
    }
}

/// Log of a density with flooring.
#[inline]
pub fn log_density(p: f64, saturated: &mut usize) -> f64 {
    if p >= DENSITY_FLOOR {
        math::ln(p)
    } else {
        *saturated += 1;
        LOG_DENSITY_FLOOR
    }
}

#[inline]
fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + math::ln(math::exp(a - m) + math::exp(b - m))
}

/// Empirical divergence from log densities evaluated at the samples inside (`inner`)
/// and outside (`outer`) the block.
///
/// Cross entropy and KL only read `inner`; symmetric KL and JS also need `outer`.
pub fn empirical_divergence(kind: Divergence, inner: &[LogDensityPair], outer: &[LogDensityPair]) -> Result<EmpiricalScore> {
    if inner.is_empty() {
        return Err(Error::EmptyData("block"));
    }
    let needs_outer = matches!(kind, Divergence::SymmetricKl | Divergence::Js);
    if needs_outer && outer.is_empty() {
        return Err(Error::EmptyComplement);
    }
    let mut saturated = 0;
    let mut avg = |pairs: &[LogDensityPair], f: &dyn Fn(f64, f64) -> f64| {
        let sum: f64 = pairs
            .iter()
            .map(|p| {
                let a = floor_log(p.inner, &mut saturated);
                let b = floor_log(p.outer, &mut saturated);
                f(a, b)
            })
            .sum();
        sum / pairs.len() as f64
    };
    let value = match kind {
        Divergence::CrossEntropy => avg(inner, &|_, lo| -lo),
        Divergence::Kl => avg(inner, &|li, lo| li - lo),
        Divergence::UnbiasedKl => unbiased_kl(avg(inner, &|li, lo| li - lo), inner.len() as u64),
        Divergence::SymmetricKl => 0.5 * avg(inner, &|li, lo| li - lo) + 0.5 * avg(outer, &|li, lo| lo - li),
        Divergence::Js => {
            let ln2 = core::f64::consts::LN_2;
            let a = avg(inner, &|li, lo| ln2 + li - log_add_exp(li, lo));
            let b = avg(outer, &|li, lo| ln2 + lo - log_add_exp(li, lo));
            0.5 * a + 0.5 * b
        }
    };
    Ok(EmpiricalScore { value, saturated })
}
