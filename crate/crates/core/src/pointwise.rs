//! Point-wise anomaly scores and conversions to and from interval detections.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::density::regularize;
use crate::error::{Error, Result};
use crate::linalg;
use crate::search::{non_max_suppression, Detection};
use crate::tensor::{DataTensor, SubBlock, AXES};

/// One real score per `(t, x, y, z)` sample, laid out like the tensor's samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseScores {
    pub extents: [usize; AXES],
    pub values: Vec<f64>,
}

impl PointwiseScores {
    pub fn zeros(extents: [usize; AXES]) -> Self {
        PointwiseScores { extents, values: vec![0.0; extents.iter().product()] }
    }

    #[inline]
    pub fn index(&self, p: [usize; AXES]) -> usize {
        let e = &self.extents;
        ((p[0] * e[1] + p[1]) * e[2] + p[2]) * e[3] + p[3]
    }

    pub fn get(&self, p: [usize; AXES]) -> f64 {
        self.values[self.index(p)]
    }

    /// Number of spatial locations per time step.
    pub fn locations(&self) -> usize {
        self.extents[1] * self.extents[2] * self.extents[3]
    }

    /// Scores over time at one spatial location (linear location index).
    pub fn series_at(&self, loc: usize) -> impl Iterator<Item = f64> + '_ {
        let l = self.locations();
        (0..self.extents[0]).map(move |t| self.values[t * l + loc])
    }

    /// Per-time maximum over all locations.
    pub fn temporal_max(&self) -> Vec<f64> {
        let l = self.locations();
        self.values.chunks_exact(l).map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect()
    }
}

/// Hotelling's T² of every sample against a global Gaussian fit. Masked samples score 0.
pub fn hotellings_t2(tensor: &DataTensor) -> Result<PointwiseScores> {
    let d = tensor.dims();
    let n = tensor.unmasked_count();
    if n < d + 1 {
        return Err(Error::EmptyData("tensor (need more unmasked samples than attributes)"));
    }
    let mut mean = vec![0.0; d];
    let valid = || (0..tensor.num_samples()).filter(|&i| !tensor.is_masked(i));
    for i in valid() {
        for (m, v) in mean.iter_mut().zip(tensor.sample(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0; d * d];
    let mut diff = vec![0.0; d];
    for i in valid() {
        for k in 0..d {
            diff[k] = tensor.sample(i)[k] - mean[k];
        }
        for r in 0..d {
            for c in 0..d {
                cov[r * d + c] += diff[r] * diff[c];
            }
        }
    }
    cov.iter_mut().for_each(|c| *c /= n as f64);
    regularize(&mut cov, d);
    linalg::cholesky_in_place(&mut cov, d)?;

    let mut out = PointwiseScores::zeros(tensor.extents());
    let mut work = vec![0.0; d];
    for i in valid() {
        for k in 0..d {
            diff[k] = tensor.sample(i)[k] - mean[k];
        }
        out.values[i] = linalg::mahalanobis_sq(&cov, d, &diff, &mut work);
    }
    Ok(out)
}

/// Paints each detection's score onto its samples; everything else gets `floor`.
pub fn detections_to_pointwise(detections: &[Detection], extents: [usize; AXES], floor: f64) -> Result<PointwiseScores> {
    for (i, a) in detections.iter().enumerate() {
        if !a.block.lies_within(extents) {
            return Err(Error::OutOfBounds(format!("{}", a.block)));
        }
        if let Some(b) = detections[i + 1..].iter().find(|b| a.block.overlaps(&b.block)) {
            return Err(Error::Contract(format!("detections {} and {} overlap", a.block, b.block)));
        }
    }
    let mut out = PointwiseScores { extents, values: vec![floor; extents.iter().product()] };
    for det in detections {
        let b = &det.block;
        for t in b.start[0]..b.end[0] {
            for x in b.start[1]..b.end[1] {
                for y in b.start[2]..b.end[2] {
                    for z in b.start[3]..b.end[3] {
                        let i = out.index([t, x, y, z]);
                        out.values[i] = det.score;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// `count` thresholds at the quantile levels `i / (count + 1)`, deduplicated and ascending.
pub fn quantile_thresholds(scores: &PointwiseScores, count: usize) -> Vec<f64> {
    let mut sorted: Vec<f64> = scores.values.iter().copied().filter(|v| v.is_finite()).collect();
    if sorted.is_empty() || count == 0 {
        return Vec::new();
    }
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut out: Vec<f64> = (1..=count)
        .map(|i| {
            let pos = i as f64 / (count + 1) as f64 * (n - 1) as f64;
            let lo = pos as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = pos - lo as f64;
            sorted[lo] + frac * (sorted[hi] - sorted[lo])
        })
        .collect();
    out.dedup();
    out
}

/// Groups above-threshold temporal runs at each location into interval candidates scored
/// by their mean point-wise score, pools them over all thresholds and suppresses overlaps.
pub fn pointwise_to_detections(scores: &PointwiseScores, thresholds: &[f64]) -> Result<Vec<Detection>> {
    if thresholds.is_empty() {
        return Err(Error::Config("at least one threshold is required".into()));
    }
    let e = scores.extents;
    let mut candidates = Vec::new();
    for loc in 0..scores.locations() {
        let z = loc % e[3];
        let y = (loc / e[3]) % e[2];
        let x = loc / (e[3] * e[2]);
        let series: Vec<f64> = scores.series_at(loc).collect();
        for &th in thresholds {
            let mut t = 0;
            while t < series.len() {
                if series[t] > th {
                    let start = t;
                    let mut sum = 0.0;
                    while t < series.len() && series[t] > th {
                        sum += series[t];
                        t += 1;
                    }
                    let block = SubBlock { start: [start, x, y, z], end: [t, x + 1, y + 1, z + 1] };
                    candidates.push(Detection { block, score: sum / (t - start) as f64 });
                } else {
                    t += 1;
                }
            }
        }
    }
    Ok(non_max_suppression(candidates, 0.0, None))
}
