use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mdi::bench::{self, BenchOptions};
use mdi::parallel::{map_ordered, run_prepared};
use mdi::records::{
    self, detection_records, detections_from_records, load_dataset, read_json, write_json, SeriesDetections,
};
use mdi::{csv_in, format, MdiError, Result};
use mdi_core::cumsum::Summation;
use mdi_core::divergence::{Divergence, DivergenceSpec, Estimator};
use mdi_core::special::chi2_quantile;
use mdi_core::eval::{evaluate_method, EvalMode, EvalReport};
use mdi_core::pointwise::hotellings_t2;
use mdi_core::preprocess::{BorderPolicy, EmbeddingConfig};
use mdi_core::search::{prepare, ModelKind, NmsMode, PreparedDetector, ProposalGenerator};
use mdi_core::synth::{build_benchmark, describe, BenchmarkConfig};
use mdi_core::tensor::AXES;
use mdi_core::{DataTensor, Detection, DetectorConfig, SizeConstraints};

#[derive(Parser)]
#[command(name = "mdi", version, about = "Detect maximally divergent intervals in spatio-temporal data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the detector on a CSV file, a binary tensor file or a dataset directory.
    Detect(DetectArgs),
    /// Generate the synthetic benchmark dataset.
    Synth(SynthArgs),
    /// Evaluate detections against a dataset's ground truth.
    Eval(EvalArgs),
    /// Generate the benchmark, run all detector variants and evaluate them.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    GaussianFull,
    GaussianShared,
    GaussianId,
    Kde,
}

#[derive(Clone, Copy, ValueEnum)]
enum DivergenceArg {
    Ce,
    Kl,
    Ukl,
    Skl,
    Js,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Closed,
    Empirical,
}

#[derive(Clone, Copy, ValueEnum)]
enum BorderArg {
    Shorten,
    Replicate,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProposalArg {
    None,
    Hotelling,
}

#[derive(Clone, Copy, ValueEnum)]
enum NmsArg {
    Auto,
    Exact,
    Approx,
}

#[derive(Args)]
struct DetectorArgs {
    #[arg(long, value_enum, default_value = "gaussian-full")]
    model: ModelArg,
    #[arg(long, default_value_t = mdi_core::density::DEFAULT_KDE_SIGMA)]
    kde_sigma: f64,
    #[arg(long, value_enum, default_value = "ukl")]
    divergence: DivergenceArg,
    /// Defaults to `empirical` for the kde model and `closed` otherwise.
    #[arg(long, value_enum)]
    estimator: Option<EstimatorArg>,
    /// Divide unbiased KL scores by their degrees of freedom.
    #[arg(long)]
    normalize_df: bool,
    /// Keep only unbiased KL detections significant at this level.
    #[arg(long)]
    alpha: Option<f64>,
    /// Minimum block length per axis, comma separated in t,x,y,z order.
    #[arg(long, default_value = "10", value_delimiter = ',')]
    min_len: Vec<usize>,
    /// Maximum block length per axis; missing spatial axes are unbounded.
    #[arg(long, default_value = "60", value_delimiter = ',')]
    max_len: Vec<usize>,
    /// Time-delay embedding dimension.
    #[arg(long, default_value_t = 1)]
    td_dim: usize,
    #[arg(long, default_value_t = 1)]
    td_lag: usize,
    /// Spatial neighbour embedding dimension per spatial axis, in x,y,z order.
    #[arg(long, default_value = "1", value_delimiter = ',')]
    spatial_dim: Vec<usize>,
    #[arg(long, default_value = "1", value_delimiter = ',')]
    spatial_lag: Vec<usize>,
    #[arg(long, value_enum, default_value = "shorten")]
    border: BorderArg,
    #[arg(long, value_enum, default_value = "hotelling")]
    proposals: ProposalArg,
    #[arg(long, default_value_t = 1.5)]
    prop_theta: f64,
    #[arg(long, default_value_t = 10)]
    num_detections: usize,
    /// Maximum IoU between two reported detections.
    #[arg(long, default_value_t = 0.0)]
    overlap: f64,
    #[arg(long, value_enum, default_value = "auto")]
    nms: NmsArg,
    /// Buffer size of approximate NMS; defaults to max(50, 5 k).
    #[arg(long)]
    nms_buffer: Option<usize>,
    /// Z-score every attribute first.
    #[arg(long)]
    normalize: bool,
    /// Compensated summation for the cumulative tensors.
    #[arg(long)]
    kahan: bool,
}

fn per_axis<const N: usize>(name: &str, values: &[usize], fill: usize) -> Result<[usize; N]> {
    if values.is_empty() || values.len() > N {
        return Err(MdiError::Config(format!("--{name} takes 1 to {N} comma-separated values")));
    }
    Ok(std::array::from_fn(|a| values.get(a).copied().unwrap_or(fill)))
}

impl DetectorArgs {
    fn config(&self) -> Result<DetectorConfig> {
        let model = match self.model {
            ModelArg::GaussianFull => ModelKind::GaussianFull,
            ModelArg::GaussianShared => ModelKind::GaussianShared,
            ModelArg::GaussianId => ModelKind::GaussianIdentity,
            ModelArg::Kde => ModelKind::Kde { sigma: self.kde_sigma },
        };
        let kind = match self.divergence {
            DivergenceArg::Ce => Divergence::CrossEntropy,
            DivergenceArg::Kl => Divergence::Kl,
            DivergenceArg::Ukl => Divergence::UnbiasedKl,
            DivergenceArg::Skl => Divergence::SymmetricKl,
            DivergenceArg::Js => Divergence::Js,
        };
        let estimator = match (self.estimator, self.model) {
            (Some(EstimatorArg::Closed), _) => Estimator::ClosedForm,
            (Some(EstimatorArg::Empirical), _) | (None, ModelArg::Kde) => Estimator::Empirical,
            (None, _) => Estimator::ClosedForm,
        };
        let spatial_dim = per_axis::<3>("spatial-dim", &self.spatial_dim, 1)?;
        let spatial_lag = per_axis::<3>("spatial-lag", &self.spatial_lag, 1)?;
        let embedding = EmbeddingConfig {
            td_dim: self.td_dim,
            td_lag: self.td_lag,
            spatial_dim,
            spatial_lag,
            border: match self.border {
                BorderArg::Shorten => BorderPolicy::Shorten,
                BorderArg::Replicate => BorderPolicy::Replicate,
            },
        };
        let min = per_axis::<AXES>("min-len", &self.min_len, 1)?;
        let max = per_axis::<AXES>("max-len", &self.max_len, usize::MAX)?;
        let nms = match self.nms {
            NmsArg::Auto => NmsMode::Auto,
            NmsArg::Exact => NmsMode::Exact,
            NmsArg::Approx => NmsMode::Approximate { buffer: self.nms_buffer.unwrap_or((5 * self.num_detections).max(50)) },
        };
        if self.nms_buffer.is_some() && !matches!(self.nms, NmsArg::Approx) {
            return Err(MdiError::Config("--nms-buffer needs --nms approx".into()));
        }
        if self.alpha.is_some() && kind != Divergence::UnbiasedKl {
            return Err(MdiError::Config("--alpha applies to the ukl divergence only".into()));
        }
        let config = DetectorConfig {
            model,
            divergence: DivergenceSpec { kind, estimator, normalize_by_df: self.normalize_df },
            constraints: SizeConstraints::new(min, max)?,
            embedding,
            proposals: match self.proposals {
                ProposalArg::None => ProposalGenerator::None,
                ProposalArg::Hotelling => ProposalGenerator::HotellingT2 { theta: self.prop_theta },
            },
            num_detections: self.num_detections,
            overlap: self.overlap,
            nms,
            normalize: self.normalize,
            summation: if self.kahan { Summation::Kahan } else { Summation::Plain },
        };
        config.validate()?;
        Ok(config)
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Args)]
struct DetectArgs {
    /// `.csv` file, binary tensor file, or a directory written by `mdi synth`.
    input: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    detector: DetectorArgs,
    /// Also write point-wise proposal scores and detection spans as CSV.
    #[arg(long)]
    plot_data: bool,
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = bench::DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    series_per_case: Option<usize>,
    #[arg(long)]
    series_len: Option<usize>,
}

#[derive(Args)]
struct EvalOpts {
    /// IoU needed for a detection to count as a hit.
    #[arg(long, default_value_t = mdi_core::eval::DEFAULT_IOU)]
    iou: f64,
    /// Average metrics per series instead of pooling each case.
    #[arg(long)]
    per_series: bool,
    /// Average AP over a sweep of IoU thresholds.
    #[arg(long)]
    sweep: bool,
}

impl EvalOpts {
    fn mode(&self) -> Result<EvalMode> {
        if !(self.iou > 0.0 && self.iou <= 1.0) {
            return Err(MdiError::Config(format!("--iou must lie in (0, 1], got {}", self.iou)));
        }
        Ok(EvalMode { iou_threshold: self.iou, pooled: !self.per_series, sweep: self.sweep })
    }
}

#[derive(Args)]
struct EvalArgs {
    /// Dataset directory written by `mdi synth`.
    #[arg(long)]
    dataset: PathBuf,
    /// `detections.json` written by `mdi detect` on that dataset.
    #[arg(long)]
    detections: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Method name in the report.
    #[arg(long, default_value = "detections")]
    name: String,
    #[command(flatten)]
    eval: EvalOpts,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = bench::DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
    /// Add the detector without proposals (slow).
    #[arg(long)]
    full_scan: bool,
    /// Run only these variants, comma separated.
    #[arg(long, value_delimiter = ',')]
    variants: Vec<String>,
    #[arg(long)]
    series_per_case: Option<usize>,
    #[command(flatten)]
    eval: EvalOpts,
}

#[derive(Serialize)]
struct DetectManifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    input: String,
    config: &'a DetectorConfig,
    alpha: Option<f64>,
    score_threshold: Option<f64>,
}

fn read_input(path: &Path) -> Result<DataTensor> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("csv") => csv_in::load(path),
        _ => format::load(path),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| MdiError::io(dir, e))
}

/// Score required by `--alpha` for one prepared detector.
fn significance_threshold(det: &PreparedDetector, alpha: Option<f64>) -> Result<Option<f64>> {
    let Some(alpha) = alpha else { return Ok(None) };
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MdiError::Config(format!("--alpha must lie in (0, 1), got {alpha}")));
    }
    let df = det.degrees_of_freedom();
    let raw = chi2_quantile(1.0 - alpha, df as f64)?;
    Ok(Some(det.config().divergence.finish(raw, df)))
}

fn run_one(tensor: &DataTensor, config: &DetectorConfig, alpha: Option<f64>, workers: usize) -> Result<(PreparedDetector, Vec<Detection>, Option<f64>)> {
    let det = prepare(tensor, config)?;
    let threshold = significance_threshold(&det, alpha)?;
    let mut dets = run_prepared(&det, workers)?;
    if let Some(th) = threshold {
        dets.retain(|d| d.score >= th);
    }
    Ok((det, dets, threshold))
}

fn run_detect(args: &DetectArgs) -> Result<()> {
    let config = args.detector.config()?;
    let alpha = args.detector.alpha;
    create_dir(&args.out_dir)?;
    let mut threshold = None;
    if args.input.is_dir() {
        if args.plot_data {
            return Err(MdiError::Config("--plot-data needs a single input tensor".into()));
        }
        let dataset = load_dataset(&args.input)?;
        let results = map_ordered(&dataset.series, args.workers, |s| run_one(&s.data, &config, alpha, 1));
        let mut out = Vec::with_capacity(results.len());
        for (s, r) in dataset.series.iter().zip(results) {
            let (_, dets, _) = r?;
            out.push(SeriesDetections {
                case: s.truth.case.name().into(),
                series_index: s.truth.series_index,
                detections: detection_records(&dets),
            });
        }
        write_json(&args.out_dir.join("detections.json"), &out)?;
    } else {
        let tensor = read_input(&args.input)?;
        let (det, dets, th) = run_one(&tensor, &config, alpha, args.workers)?;
        threshold = th;
        write_json(&args.out_dir.join("detections.json"), &detection_records(&dets))?;
        if args.plot_data {
            write_plot_data(&args.out_dir, &det, &dets)?;
        }
    }
    let manifest = DetectManifest {
        tool: "mdi",
        version: env!("CARGO_PKG_VERSION"),
        command: "detect",
        input: args.input.display().to_string(),
        config: &config,
        alpha,
        score_threshold: threshold,
    };
    write_json(&args.out_dir.join("manifest.json"), &manifest)
}

/// `scores.csv`: point-wise Hotelling scores at 1-based input coordinates.
/// `spans.csv`: one line per detection with 1-based half-open ranges.
fn write_plot_data(dir: &Path, det: &PreparedDetector, dets: &[Detection]) -> Result<()> {
    let computed;
    let scores = match det.proposal_scores() {
        Some(s) => s,
        None => {
            computed = hotellings_t2(det.embedded())?;
            &computed
        }
    };
    let offset = det.offset();
    let e = scores.extents;
    let mut text = String::from("t,x,y,z,score\n");
    for t in 0..e[0] {
        for x in 0..e[1] {
            for y in 0..e[2] {
                for z in 0..e[3] {
                    let p = [t, x, y, z];
                    let c: [usize; AXES] = std::array::from_fn(|a| p[a] + offset[a] + 1);
                    text.push_str(&format!("{},{},{},{},{}\n", c[0], c[1], c[2], c[3], scores.get(p)));
                }
            }
        }
    }
    let path = dir.join("scores.csv");
    std::fs::write(&path, text).map_err(|e| MdiError::io(&path, e))?;

    let mut text = String::from("rank,t_start,t_end,x_start,x_end,y_start,y_end,z_start,z_end,score\n");
    for r in detection_records(dets) {
        let g = r.range;
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.rank, g.t[0], g.t[1], g.x[0], g.x[1], g.y[0], g.y[1], g.z[0], g.z[1], r.score
        ));
    }
    let path = dir.join("spans.csv");
    std::fs::write(&path, text).map_err(|e| MdiError::io(&path, e))
}

fn benchmark_config(series_per_case: Option<usize>, series_len: Option<usize>) -> Result<BenchmarkConfig> {
    let mut cfg = BenchmarkConfig::default();
    if let Some(n) = series_per_case {
        if n == 0 {
            return Err(MdiError::Config("--series-per-case must be positive".into()));
        }
        cfg.series_per_case = n;
    }
    if let Some(n) = series_len {
        cfg.series_len = n;
    }
    Ok(cfg)
}

fn run_synth(args: &SynthArgs) -> Result<()> {
    let cfg = benchmark_config(args.series_per_case, args.series_len)?;
    let dataset = build_benchmark(args.seed, &cfg)?;
    records::save_dataset(&args.out_dir, &dataset)?;
    eprintln!("{}", describe(&dataset));
    Ok(())
}

#[derive(Serialize)]
struct EvalManifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    dataset: &'a records::DatasetInfo,
    detections: String,
    eval_mode: EvalMode,
}

fn run_eval(args: &EvalArgs) -> Result<()> {
    let mode = args.eval.mode()?;
    let dataset = load_dataset(&args.dataset)?;
    let recs: Vec<SeriesDetections> = read_json(&args.detections)?;
    let mut dets = Vec::with_capacity(dataset.series.len());
    for s in &dataset.series {
        let rec = recs
            .iter()
            .find(|r| r.case == s.truth.case.name() && r.series_index == s.truth.series_index)
            .ok_or_else(|| MdiError::Format(format!("no detections for series {} #{}", s.truth.case, s.truth.series_index)))?;
        dets.push(detections_from_records(&rec.detections)?);
    }
    let mut report = EvalReport::new(&dataset);
    report.methods.push(evaluate_method(&dataset, &args.name, &dets, None, &mode)?);
    create_dir(&args.out_dir)?;
    write_json(&args.out_dir.join(bench::REPORT_JSON), &report)?;
    let csv_path = args.out_dir.join(bench::REPORT_CSV);
    std::fs::write(&csv_path, bench::report_csv(&report)).map_err(|e| MdiError::io(&csv_path, e))?;
    let info = records::dataset_info(&dataset);
    let manifest = EvalManifest {
        tool: "mdi",
        version: env!("CARGO_PKG_VERSION"),
        command: "eval",
        dataset: &info,
        detections: args.detections.display().to_string(),
        eval_mode: mode,
    };
    write_json(&args.out_dir.join(bench::MANIFEST), &manifest)
}

fn run_bench(args: &BenchArgs) -> Result<()> {
    let mut variants = bench::standard_variants(args.full_scan);
    if !args.variants.is_empty() {
        for name in &args.variants {
            if !variants.iter().any(|v| &v.name == name) {
                return Err(MdiError::Config(format!("unknown variant `{name}`")));
            }
        }
        variants.retain(|v| args.variants.contains(&v.name));
    }
    let opts = BenchOptions {
        seed: args.seed,
        workers: args.workers,
        benchmark: benchmark_config(args.series_per_case, None)?,
        variants,
        mode: args.eval.mode()?,
        thetas: bench::recall_thetas(),
    };
    let out = bench::run_bench(&opts)?;
    bench::write_outputs(&args.out_dir, &opts, &out)?;
    for m in &out.report.methods {
        let recall = m.mean_recall.map_or(String::new(), |r| format!("  recall {r:.3}"));
        eprintln!("{:<28} AP {:.3}  AUC {:.3}{recall}", m.name, m.mean_ap, m.mean_auc);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Detect(a) => run_detect(a),
        Command::Synth(a) => run_synth(a),
        Command::Eval(a) => run_eval(a),
        Command::Bench(a) => run_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
