//! Evaluation metrics: IoU matching, average precision, point-wise AUC, proposal recall,
//! and benchmark-wide aggregation.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::pointwise::{detections_to_pointwise, hotellings_t2, pointwise_to_detections, quantile_thresholds};
use crate::preprocess::{embed, EmbeddingConfig};
use crate::search::Detection;
use crate::synth::{Dataset, SyntheticSeries, TestCase};
use crate::tensor::{DataTensor, SubBlock};

/// Default IoU needed for a detection to count as a hit.
pub const DEFAULT_IOU: f64 = 0.5;

/// Intersection over union of two blocks.
pub fn iou(a: &SubBlock, b: &SubBlock) -> f64 {
    a.iou(b)
}

/// Greedy matching of ranked detections: returns the true-positive flags.
fn match_detections<'a>(ranked: impl Iterator<Item = (&'a [SubBlock], &'a SubBlock)>, used: &mut [Vec<bool>], series: &[usize], threshold: f64) -> Vec<bool> {
    let mut hits = Vec::new();
    for (k, (truth, block)) in ranked.enumerate() {
        let s = series[k];
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in truth.iter().enumerate() {
            if used[s][j] {
                continue;
            }
            let v = block.iou(g);
            if v >= threshold && best.is_none_or(|(_, b)| v > b) {
                best = Some((j, v));
            }
        }
        if let Some((j, _)) = best {
            used[s][j] = true;
        }
        hits.push(best.is_some());
    }
    hits
}

fn ap_from_hits(hits: &[bool], total_truth: usize) -> f64 {
    let mut tp = 0usize;
    let mut ap = 0.0;
    for (k, &hit) in hits.iter().enumerate() {
        if hit {
            tp += 1;
            ap += tp as f64 / (k + 1) as f64;
        }
    }
    ap / total_truth as f64
}

/// Non-interpolated average precision of `detections`, taken in the given order.
pub fn average_precision(detections: &[Detection], truth: &[SubBlock], iou_threshold: f64) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::UndefinedMetric("average precision without ground truth"));
    }
    let mut used = vec![vec![false; truth.len()]];
    let series = vec![0; detections.len()];
    let hits = match_detections(detections.iter().map(|d| (truth, &d.block)), &mut used, &series, iou_threshold);
    Ok(ap_from_hits(&hits, truth.len()))
}

/// Average precision over one ranked list pooled from several series. Detections are
/// ordered by score, ties by series then block, and match only their own series' truth.
pub fn pooled_average_precision(detections: &[Vec<Detection>], truths: &[Vec<SubBlock>], iou_threshold: f64) -> Result<f64> {
    let total: usize = truths.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(Error::UndefinedMetric("average precision without ground truth"));
    }
    let mut pooled: Vec<(usize, &Detection)> =
        detections.iter().enumerate().flat_map(|(s, ds)| ds.iter().map(move |d| (s, d))).collect();
    pooled.sort_by(|a, b| b.1.score.total_cmp(&a.1.score).then(a.0.cmp(&b.0)).then_with(|| a.1.block.cmp(&b.1.block)));
    let series: Vec<usize> = pooled.iter().map(|p| p.0).collect();
    let mut used: Vec<Vec<bool>> = truths.iter().map(|t| vec![false; t.len()]).collect();
    let hits = match_detections(pooled.iter().map(|(s, d)| (truths[*s].as_slice(), &d.block)), &mut used, &series, iou_threshold);
    Ok(ap_from_hits(&hits, total))
}

/// IoU thresholds `0.5, 0.55, …, 0.95` for the sweep mode.
pub fn sweep_thresholds() -> Vec<f64> {
    (0..10).map(|i| 0.5 + 0.05 * i as f64).collect()
}

/// Area under the ROC curve by the rank-sum formula; ties count one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Input(alloc::format!("{} scores but {} labels", scores.len(), labels.len())));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("AUC needs both positive and negative samples"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]].total_cmp(&scores[order[i]]) == Ordering::Equal {
            j += 1;
        }
        // midrank of the tie group, 1-based
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Fraction of ground-truth blocks matched by some proposal at `iou_threshold`.
pub fn proposal_recall(proposals: &[Vec<SubBlock>], truths: &[Vec<SubBlock>], iou_threshold: f64) -> Result<f64> {
    let total: usize = truths.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(Error::UndefinedMetric("recall without ground truth"));
    }
    let found: usize = truths
        .iter()
        .zip(proposals)
        .map(|(ts, ps)| ts.iter().filter(|t| ps.iter().any(|p| p.iou(t) >= iou_threshold)).count())
        .sum();
    Ok(found as f64 / total as f64)
}

/// Point-wise labels and scores of one series, derived from its detections.
pub fn pointwise_labels(data: &DataTensor, truth: &[SubBlock], detections: &[Detection]) -> Result<(Vec<f64>, Vec<bool>)> {
    let extents = data.extents();
    let field = detections_to_pointwise(detections, extents, f64::NEG_INFINITY)?;
    let labels = (0..data.num_samples()).map(|i| truth.iter().any(|b| b.contains(data.coords(i)))).collect();
    Ok((field.values, labels))
}

/// How detections are scored against the ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalMode {
    pub iou_threshold: f64,
    /// Pool all series of a case into one ranking (otherwise average per-series values).
    pub pooled: bool,
    /// Average AP over the IoU thresholds of [`sweep_thresholds`] instead of one threshold.
    pub sweep: bool,
}

impl Default for EvalMode {
    fn default() -> Self {
        EvalMode { iou_threshold: DEFAULT_IOU, pooled: true, sweep: false }
    }
}

/// Metrics of one method on one test case.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CaseReport {
    pub case: TestCase,
    pub ap: f64,
    pub auc: f64,
    pub recall: Option<f64>,
}

/// Metrics of one method over the whole benchmark.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MethodReport {
    pub name: String,
    pub cases: Vec<CaseReport>,
    pub mean_ap: f64,
    pub mean_auc: f64,
    pub mean_recall: Option<f64>,
}

impl MethodReport {
    pub fn case(&self, case: TestCase) -> Option<&CaseReport> {
        self.cases.iter().find(|c| c.case == case)
    }
}

/// Results of several methods on one dataset.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub num_cases: usize,
    pub num_series: usize,
    pub num_anomalies: usize,
    pub methods: Vec<MethodReport>,
}

impl EvalReport {
    pub fn new(dataset: &Dataset) -> Self {
        EvalReport {
            num_cases: dataset.num_cases(),
            num_series: dataset.series.len(),
            num_anomalies: dataset.num_anomalies(),
            methods: Vec::new(),
        }
    }

    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.name == name)
    }
}

fn ap_for(mode: &EvalMode, detections: &[Vec<Detection>], truths: &[Vec<SubBlock>]) -> Result<f64> {
    let thresholds = if mode.sweep { sweep_thresholds() } else { vec![mode.iou_threshold] };
    let mut total = 0.0;
    for &th in &thresholds {
        total += if mode.pooled {
            pooled_average_precision(detections, truths, th)?
        } else {
            let mut sum = 0.0;
            for (d, t) in detections.iter().zip(truths) {
                sum += average_precision(d, t, th)?;
            }
            sum / truths.len() as f64
        };
    }
    Ok(total / thresholds.len() as f64)
}

/// Scores one method given its detections for every series of `dataset` (same order).
/// `proposals`, if present, adds proposal recall per case.
pub fn evaluate_method(
    dataset: &Dataset,
    name: &str,
    detections: &[Vec<Detection>],
    proposals: Option<&[Vec<SubBlock>]>,
    mode: &EvalMode,
) -> Result<MethodReport> {
    if detections.len() != dataset.series.len() {
        return Err(Error::Input(alloc::format!(
            "{} detection lists for {} series",
            detections.len(),
            dataset.series.len()
        )));
    }
    let mut cases = Vec::new();
    for case in TestCase::ALL {
        let idx: Vec<usize> = (0..dataset.series.len()).filter(|&i| dataset.series[i].truth.case == case).collect();
        if idx.is_empty() {
            continue;
        }
        let truths: Vec<Vec<SubBlock>> = idx.iter().map(|&i| dataset.series[i].truth.ranges.clone()).collect();
        let dets: Vec<Vec<Detection>> = idx.iter().map(|&i| detections[i].clone()).collect();
        let ap = ap_for(mode, &dets, &truths)?;

        let mut all_scores = Vec::new();
        let mut all_labels = Vec::new();
        let mut per_series = 0.0;
        for (&i, d) in idx.iter().zip(&dets) {
            let s = &dataset.series[i];
            let (scores, labels) = pointwise_labels(&s.data, &s.truth.ranges, d)?;
            if !mode.pooled {
                per_series += auc(&scores, &labels)?;
            }
            all_scores.extend(scores);
            all_labels.extend(labels);
        }
        let auc_value = if mode.pooled { auc(&all_scores, &all_labels)? } else { per_series / idx.len() as f64 };

        let recall = match proposals {
            Some(p) => {
                let props: Vec<Vec<SubBlock>> = idx.iter().map(|&i| p[i].clone()).collect();
                Some(proposal_recall(&props, &truths, mode.iou_threshold)?)
            }
            None => None,
        };
        cases.push(CaseReport { case, ap, auc: auc_value, recall });
    }
    let n = cases.len() as f64;
    let mean_ap = cases.iter().map(|c| c.ap).sum::<f64>() / n;
    let mean_auc = cases.iter().map(|c| c.auc).sum::<f64>() / n;
    let mean_recall = proposals.map(|_| cases.iter().filter_map(|c| c.recall).sum::<f64>() / n);
    Ok(MethodReport { name: name.into(), cases, mean_ap, mean_auc, mean_recall })
}

/// A named detector for [`evaluate_benchmark`].
pub struct Method<'a> {
    pub name: &'a str,
    pub run: &'a dyn Fn(&SyntheticSeries) -> Result<Vec<Detection>>,
}

/// Runs every method on every series sequentially and evaluates them.
pub fn evaluate_benchmark(dataset: &Dataset, methods: &[Method<'_>], mode: &EvalMode) -> Result<EvalReport> {
    let mut report = EvalReport::new(dataset);
    for m in methods {
        let dets = dataset.series.iter().map(|s| (m.run)(s)).collect::<Result<Vec<_>>>()?;
        report.methods.push(evaluate_method(dataset, m.name, &dets, None, mode)?);
    }
    Ok(report)
}

/// Number of thresholds in the baseline's quantile grid.
pub const BASELINE_THRESHOLDS: usize = 20;

/// Hotelling's T² baseline: point-wise scores after embedding, grouped into runs over a
/// quantile threshold grid, suppressed and truncated to the top `k`, in input coordinates.
pub fn hotelling_baseline(data: &DataTensor, embedding: &EmbeddingConfig, k: usize) -> Result<Vec<Detection>> {
    let (emb, offset) = embed(data, embedding)?;
    let scores = hotellings_t2(&emb)?;
    let thresholds = quantile_thresholds(&scores, BASELINE_THRESHOLDS);
    if thresholds.is_empty() {
        return Ok(Vec::new());
    }
    let mut dets = pointwise_to_detections(&scores, &thresholds)?;
    dets.truncate(k);
    for d in &mut dets {
        d.block = d.block.shifted(offset);
    }
    Ok(dets)
}
