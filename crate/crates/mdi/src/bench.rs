//! Benchmark runner: generate the synthetic dataset, run every detector variant on every
//! series, evaluate, and write the report files.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use mdi_core::divergence::{Divergence, DivergenceSpec, Estimator};
use mdi_core::eval::{evaluate_method, hotelling_baseline, proposal_recall, EvalMode, EvalReport};
use mdi_core::preprocess::EmbeddingConfig;
use mdi_core::search::{prepare, propose_intervals, ModelKind, NmsMode, ProposalGenerator};
use mdi_core::synth::{build_benchmark, BenchmarkConfig, Dataset, TestCase};
use mdi_core::{Detection, DetectorConfig, SizeConstraints, SubBlock};

use crate::error::{MdiError, Result};
use crate::parallel::{map_ordered, run_prepared};
use crate::records::{dataset_info, write_json, DatasetInfo};

/// Default master seed of the benchmark.
pub const DEFAULT_SEED: u64 = 2016;

/// Proposal thresholds of the recall curve.
pub fn recall_thetas() -> Vec<f64> {
    (0..=8).map(|i| i as f64 * 0.5).collect()
}

/// Detector settings used on the benchmark: Gaussian model, unbiased KL, time-delay
/// embedding with dimension 6 and lag 2, Hotelling proposals, temporal lengths 10..=60.
pub fn benchmark_detector() -> DetectorConfig {
    DetectorConfig {
        model: ModelKind::GaussianFull,
        divergence: DivergenceSpec { kind: Divergence::UnbiasedKl, estimator: Estimator::ClosedForm, normalize_by_df: false },
        constraints: SizeConstraints::temporal(10, 60).expect("valid"),
        embedding: EmbeddingConfig::time_delay(6, 2),
        proposals: ProposalGenerator::HotellingT2 { theta: 1.5 },
        num_detections: 10,
        overlap: 0.0,
        nms: NmsMode::Exact,
        ..DetectorConfig::default()
    }
}

/// A detector under evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum VariantKind {
    Mdi(DetectorConfig),
    Hotelling { embedding: EmbeddingConfig, num_detections: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Variant {
    pub name: String,
    pub kind: VariantKind,
}

impl Variant {
    pub fn mdi(name: &str, config: DetectorConfig) -> Self {
        Variant { name: name.into(), kind: VariantKind::Mdi(config) }
    }
}

/// The comparison set; `full_scan` adds the unbiased-KL detector without proposals.
pub fn standard_variants(full_scan: bool) -> Vec<Variant> {
    let base = benchmark_detector();
    let with = |kind: Divergence| DetectorConfig { divergence: DivergenceSpec { kind, ..base.divergence }, ..base };
    let mut v = vec![
        Variant::mdi("mdi_gaussian_ukl", base),
        Variant::mdi("mdi_gaussian_kl", with(Divergence::Kl)),
        Variant::mdi("mdi_gaussian_ce", with(Divergence::CrossEntropy)),
        Variant::mdi("mdi_gaussian_ukl_noembed", DetectorConfig { embedding: EmbeddingConfig::none(), ..base }),
        Variant::mdi(
            "mdi_kde_kl",
            DetectorConfig {
                model: ModelKind::kde(),
                divergence: DivergenceSpec { kind: Divergence::Kl, estimator: Estimator::Empirical, normalize_by_df: false },
                ..base
            },
        ),
        Variant {
            name: "hotelling_t2".into(),
            kind: VariantKind::Hotelling { embedding: base.embedding, num_detections: base.num_detections },
        },
    ];
    if full_scan {
        v.push(full_scan_variant());
    }
    v
}

pub fn full_scan_variant() -> Variant {
    Variant::mdi("mdi_gaussian_ukl_fullscan", DetectorConfig { proposals: ProposalGenerator::None, ..benchmark_detector() })
}

/// Detections (and proposals, if the variant uses them) for every series.
pub struct VariantRun {
    pub detections: Vec<Vec<Detection>>,
    pub proposals: Option<Vec<Vec<SubBlock>>>,
    pub seconds: f64,
}

/// Runs one variant over the dataset, parallel across series.
pub fn run_variant(dataset: &Dataset, variant: &Variant, workers: usize) -> Result<VariantRun> {
    let start = Instant::now();
    let results: Vec<mdi_core::Result<(Vec<Detection>, Option<Vec<SubBlock>>)>> = match &variant.kind {
        VariantKind::Mdi(cfg) => map_ordered(&dataset.series, workers, |s| {
            let det = prepare(&s.data, cfg)?;
            Ok((run_prepared(&det, 1)?, det.proposals()))
        }),
        VariantKind::Hotelling { embedding, num_detections } => {
            map_ordered(&dataset.series, workers, |s| Ok((hotelling_baseline(&s.data, embedding, *num_detections)?, None)))
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    let mut detections = Vec::with_capacity(results.len());
    let mut proposals = Vec::new();
    for r in results {
        let (d, p) = r?;
        detections.push(d);
        if let Some(p) = p {
            proposals.push(p);
        }
    }
    let proposals = (proposals.len() == detections.len()).then_some(proposals);
    Ok(VariantRun { detections, proposals, seconds })
}

/// Proposal recall of `config`'s proposal generator for each threshold in `thetas`.
pub fn recall_curve(dataset: &Dataset, config: &DetectorConfig, thetas: &[f64], workers: usize) -> Result<Vec<(f64, f64)>> {
    let cfg = DetectorConfig { proposals: ProposalGenerator::HotellingT2 { theta: 0.0 }, ..*config };
    let per_series: Vec<mdi_core::Result<Vec<Vec<SubBlock>>>> = map_ordered(&dataset.series, workers, |s| {
        let det = prepare(&s.data, &cfg)?;
        let scores = det.proposal_scores().expect("proposals enabled");
        Ok(thetas
            .iter()
            .map(|&th| propose_intervals(scores, th, det.constraints()).iter().map(|b| b.shifted(det.offset())).collect())
            .collect())
    });
    let per_series = per_series.into_iter().collect::<mdi_core::Result<Vec<_>>>()?;
    let truths: Vec<Vec<SubBlock>> = dataset.series.iter().map(|s| s.truth.ranges.clone()).collect();
    thetas
        .iter()
        .enumerate()
        .map(|(k, &th)| {
            let props: Vec<Vec<SubBlock>> = per_series.iter().map(|p| p[k].clone()).collect();
            Ok((th, proposal_recall(&props, &truths, 0.5)?))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub seed: u64,
    pub workers: usize,
    pub benchmark: BenchmarkConfig,
    pub variants: Vec<Variant>,
    pub mode: EvalMode,
    pub thetas: Vec<f64>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            seed: DEFAULT_SEED,
            workers: 1,
            benchmark: BenchmarkConfig::default(),
            variants: standard_variants(false),
            mode: EvalMode::default(),
            thetas: recall_thetas(),
        }
    }
}

pub struct BenchOutput {
    pub dataset: DatasetInfo,
    pub report: EvalReport,
    pub recall_curve: Vec<(f64, f64)>,
    /// Wall time per variant in seconds.
    pub timings: Vec<(String, f64)>,
}

pub fn run_bench(opts: &BenchOptions) -> Result<BenchOutput> {
    let dataset = build_benchmark(opts.seed, &opts.benchmark)?;
    run_bench_on(&dataset, opts)
}

pub fn run_bench_on(dataset: &Dataset, opts: &BenchOptions) -> Result<BenchOutput> {
    let mut report = EvalReport::new(dataset);
    let mut timings = Vec::new();
    for v in &opts.variants {
        let run = run_variant(dataset, v, opts.workers)?;
        report.methods.push(evaluate_method(dataset, &v.name, &run.detections, run.proposals.as_deref(), &opts.mode)?);
        timings.push((v.name.clone(), run.seconds));
    }
    let recall_curve = recall_curve(dataset, &benchmark_detector(), &opts.thetas, opts.workers)?;
    Ok(BenchOutput { dataset: dataset_info(dataset), report, recall_curve, timings })
}

/// Report as CSV: one row per test case plus a final `mean` row, two columns per method.
pub fn report_csv(report: &EvalReport) -> String {
    let mut out = String::from("case");
    for m in &report.methods {
        out.push_str(&format!(",{0}_ap,{0}_auc", m.name));
    }
    out.push('\n');
    for case in TestCase::ALL {
        if report.methods.iter().all(|m| m.case(case).is_none()) {
            continue;
        }
        out.push_str(case.name());
        for m in &report.methods {
            match m.case(case) {
                Some(c) => out.push_str(&format!(",{:.6},{:.6}", c.ap, c.auc)),
                None => out.push_str(",,"),
            }
        }
        out.push('\n');
    }
    out.push_str("mean");
    for m in &report.methods {
        out.push_str(&format!(",{:.6},{:.6}", m.mean_ap, m.mean_auc));
    }
    out.push('\n');
    out
}

pub fn recall_csv(curve: &[(f64, f64)]) -> String {
    let mut out = String::from("theta,recall\n");
    for (th, r) in curve {
        out.push_str(&format!("{th:.2},{r:.6}\n"));
    }
    out
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    variants: &'a [Variant],
    eval_mode: EvalMode,
    recall_thetas: &'a [f64],
    dataset: &'a DatasetInfo,
}

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const RECALL_CSV: &str = "recall_curve.csv";
pub const MANIFEST: &str = "manifest.json";
pub const TIMINGS: &str = "timings.json";

/// Writes the report, recall curve and manifest; timings go to a separate file so the
/// other outputs stay byte-identical between runs.
pub fn write_outputs(dir: &Path, opts: &BenchOptions, out: &BenchOutput) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| MdiError::io(dir, e))?;
    write_json(&dir.join(REPORT_JSON), &out.report)?;
    let write = |name: &str, text: String| std::fs::write(dir.join(name), text).map_err(|e| MdiError::io(dir.join(name), e));
    write(REPORT_CSV, report_csv(&out.report))?;
    write(RECALL_CSV, recall_csv(&out.recall_curve))?;
    let manifest = Manifest {
        tool: "mdi",
        version: env!("CARGO_PKG_VERSION"),
        command: "bench",
        seed: opts.seed,
        variants: &opts.variants,
        eval_mode: opts.mode,
        recall_thetas: &opts.thetas,
        dataset: &out.dataset,
    };
    write_json(&dir.join(MANIFEST), &manifest)?;
    let timings: std::collections::BTreeMap<&str, f64> = out.timings.iter().map(|(n, s)| (n.as_str(), *s)).collect();
    write_json(&dir.join(TIMINGS), &timings)
}
