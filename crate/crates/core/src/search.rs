//! The detector: candidate generation, scoring, non-maximum suppression and ranking.
//!
//! Work is split into chunks of consecutive temporal start indices. The chunk layout
//! depends only on the data and the configuration, so any number of workers can score
//! chunks independently and [`PreparedDetector::finish`] merges them in chunk order.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::cumsum::{CumulativeStats, Summation};
use crate::density::{CovarianceMode, KdeModel, PairFitter, DEFAULT_KDE_SIGMA};
use crate::divergence::{self, DivergenceSpec, Estimator, LogDensityPair};
use crate::error::{Error, Result};
use crate::pointwise::{hotellings_t2, PointwiseScores};
use crate::preprocess::{embed, normalize, EmbeddingConfig};
use crate::tensor::{axis_intervals, DataTensor, Intervals, SizeConstraints, SubBlock, AXES};

/// Temporal start indices per scan chunk.
pub const CHUNK_STARTS: usize = 16;

/// Above this many (embedded) samples [`NmsMode::Auto`] switches to the buffered variant.
pub const AUTO_APPROXIMATE_SAMPLES: usize = 10_000;

/// A scored block.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Detection {
    pub block: SubBlock,
    pub score: f64,
}

impl Detection {
    /// Ranking order: higher score first, ties by lexicographic block order.
    pub fn rank_cmp(&self, other: &Detection) -> Ordering {
        other.score.total_cmp(&self.score).then_with(|| self.block.cmp(&other.block))
    }
}

/// Density model for `p_I` and `p_Ω`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ModelKind {
    #[default]
    GaussianFull,
    GaussianShared,
    GaussianIdentity,
    Kde { sigma: f64 },
}

impl ModelKind {
    pub fn kde() -> Self {
        ModelKind::Kde { sigma: DEFAULT_KDE_SIGMA }
    }

    fn covariance(&self) -> Option<CovarianceMode> {
        match self {
            ModelKind::GaussianFull => Some(CovarianceMode::Full),
            ModelKind::GaussianShared => Some(CovarianceMode::Shared),
            ModelKind::GaussianIdentity => Some(CovarianceMode::Identity),
            ModelKind::Kde { .. } => None,
        }
    }
}

/// Where candidate blocks come from.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ProposalGenerator {
    /// Score every block admitted by the size constraints.
    None,
    /// Gradient-thresholded Hotelling's T² scores; `theta` scales the deviation term.
    HotellingT2 { theta: f64 },
}

impl Default for ProposalGenerator {
    fn default() -> Self {
        ProposalGenerator::HotellingT2 { theta: 1.5 }
    }
}

/// Non-maximum suppression strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum NmsMode {
    /// Exact below [`AUTO_APPROXIMATE_SAMPLES`] samples, buffered above.
    #[default]
    Auto,
    Exact,
    Approximate { buffer: usize },
}

/// Full detector configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DetectorConfig {
    pub model: ModelKind,
    pub divergence: DivergenceSpec,
    pub constraints: SizeConstraints,
    pub embedding: EmbeddingConfig,
    pub proposals: ProposalGenerator,
    pub num_detections: usize,
    /// Maximum IoU between two returned detections.
    pub overlap: f64,
    pub nms: NmsMode,
    /// Z-score attributes before embedding.
    pub normalize: bool,
    pub summation: Summation,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            model: ModelKind::GaussianFull,
            divergence: DivergenceSpec::default(),
            constraints: SizeConstraints::temporal(10, 60).expect("valid default"),
            embedding: EmbeddingConfig::none(),
            proposals: ProposalGenerator::default(),
            num_detections: 10,
            overlap: 0.0,
            nms: NmsMode::Auto,
            normalize: false,
            summation: Summation::Plain,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        self.divergence.validate()?;
        self.embedding.validate()?;
        if let ModelKind::Kde { sigma } = self.model {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::Config(format!("kernel bandwidth must be positive, got {sigma}")));
            }
            if self.divergence.estimator == Estimator::ClosedForm {
                return Err(Error::Config("kernel density models need the empirical estimator".into()));
            }
            if self.embedding.spatial_dim != [1; 3] {
                return Err(Error::Config("kernel density models support temporal data only".into()));
            }
        }
        if let ProposalGenerator::HotellingT2 { theta } = self.proposals {
            if !(theta >= 0.0 && theta.is_finite()) {
                return Err(Error::Config(format!("proposal threshold must be non-negative, got {theta}")));
            }
        }
        if self.num_detections == 0 {
            return Err(Error::Config("number of detections must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.overlap) {
            return Err(Error::Config(format!("overlap threshold must lie in [0, 1], got {}", self.overlap)));
        }
        if let NmsMode::Approximate { buffer } = self.nms {
            if buffer < self.num_detections {
                return Err(Error::Config(format!(
                    "NMS buffer {buffer} is smaller than the number of detections {}",
                    self.num_detections
                )));
            }
        }
        SizeConstraints::new(self.constraints.min, self.constraints.max)?;
        Ok(())
    }
}

enum Model {
    Gaussian { stats: CumulativeStats, mode: CovarianceMode },
    Kde(KdeModel),
}

enum Candidates {
    All,
    /// Sorted lexicographically.
    Proposed(Vec<SubBlock>),
}

/// Partial result of one scan chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkResult {
    pub candidates: Vec<Detection>,
    /// Number of blocks scored in this chunk.
    pub scored: usize,
    /// Log densities floored by empirical estimators.
    pub saturated: usize,
}

/// A detector bound to one tensor: embedded data, statistics and candidate set.
pub struct PreparedDetector {
    config: DetectorConfig,
    data: DataTensor,
    offset: [usize; AXES],
    constraints: SizeConstraints,
    model: Model,
    candidates: Candidates,
    proposal_scores: Option<PointwiseScores>,
    approximate: Option<usize>,
}

/// Embeds `tensor`, builds the model statistics and the candidate set.
pub fn prepare(tensor: &DataTensor, config: &DetectorConfig) -> Result<PreparedDetector> {
    config.validate()?;
    if matches!(config.model, ModelKind::Kde { .. }) && !tensor.shape().is_temporal() {
        return Err(Error::Config("kernel density models support temporal data only".into()));
    }
    let normalized;
    let input = if config.normalize {
        normalized = normalize(tensor)?.0;
        &normalized
    } else {
        tensor
    };
    let (data, offset) = embed(input, &config.embedding)?;
    let constraints = config.constraints.resolve(data.extents())?;

    let model = match config.model.covariance() {
        Some(mode) => Model::Gaussian { stats: CumulativeStats::build_with(&data, config.summation)?, mode },
        None => {
            let ModelKind::Kde { sigma } = config.model else { unreachable!() };
            Model::Kde(KdeModel::from_tensor(&data, sigma)?)
        }
    };

    let (candidates, proposal_scores) = match config.proposals {
        ProposalGenerator::None => (Candidates::All, None),
        ProposalGenerator::HotellingT2 { theta } => {
            let scores = hotellings_t2(&data)?;
            let proposed = propose_intervals(&scores, theta, &constraints);
            (Candidates::Proposed(proposed), Some(scores))
        }
    };

    let approximate = match config.nms {
        NmsMode::Exact => None,
        NmsMode::Approximate { buffer } => Some(buffer),
        NmsMode::Auto if data.num_samples() > AUTO_APPROXIMATE_SAMPLES => Some((5 * config.num_detections).max(50)),
        NmsMode::Auto => None,
    };

    Ok(PreparedDetector { config: *config, data, offset, constraints, model, candidates, proposal_scores, approximate })
}

impl PreparedDetector {
    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    /// The tensor after normalization and embedding.
    pub fn embedded(&self) -> &DataTensor {
        &self.data
    }

    /// Offset from embedded to input coordinates.
    pub fn offset(&self) -> [usize; AXES] {
        self.offset
    }

    /// Size constraints resolved against the embedded extents.
    pub fn constraints(&self) -> &SizeConstraints {
        &self.constraints
    }

    /// Degrees of freedom of the null distribution of unbiased KL scores.
    pub fn degrees_of_freedom(&self) -> usize {
        let mode = match &self.model {
            Model::Gaussian { mode, .. } => *mode,
            Model::Kde(_) => CovarianceMode::Full,
        };
        divergence::chi2_degrees_of_freedom(self.data.dims(), mode)
    }

    pub fn uses_approximate_nms(&self) -> bool {
        self.approximate.is_some()
    }

    /// Proposed blocks in input coordinates, if proposals are enabled.
    pub fn proposals(&self) -> Option<Vec<SubBlock>> {
        match &self.candidates {
            Candidates::All => None,
            Candidates::Proposed(p) => Some(p.iter().map(|b| b.shifted(self.offset)).collect()),
        }
    }

    /// Point-wise scores that drive the proposals, on the embedded grid.
    pub fn proposal_scores(&self) -> Option<&PointwiseScores> {
        self.proposal_scores.as_ref()
    }

    /// Number of candidate blocks that will be scored.
    pub fn candidate_count(&self) -> usize {
        match &self.candidates {
            Candidates::All => Intervals::new(self.data.extents(), &self.constraints).total(),
            Candidates::Proposed(p) => p.len(),
        }
    }

    pub fn chunk_count(&self) -> usize {
        self.data.extents()[0].div_ceil(CHUNK_STARTS)
    }

    fn chunk_blocks(&self, chunk: usize) -> ChunkBlocks<'_> {
        let lo = chunk * CHUNK_STARTS;
        let hi = lo + CHUNK_STARTS;
        match &self.candidates {
            Candidates::All => {
                ChunkBlocks::All(Intervals::new(self.data.extents(), &self.constraints).with_temporal_starts(lo..hi))
            }
            Candidates::Proposed(p) => {
                let a = p.partition_point(|b| b.start[0] < lo);
                let b = p.partition_point(|b| b.start[0] < hi);
                ChunkBlocks::Slice(p[a..b].iter())
            }
        }
    }

    /// Scores the candidates of chunk `chunk` (embedded coordinates).
    pub fn score_chunk(&self, chunk: usize) -> Result<ChunkResult> {
        let mut scorer = Scorer::new(self)?;
        let mut result = ChunkResult { candidates: Vec::new(), scored: 0, saturated: 0 };
        for block in self.chunk_blocks(chunk) {
            result.scored += 1;
            if let Some(score) = scorer.score(&block)? {
                result.candidates.push(Detection { block, score });
            }
        }
        result.saturated = scorer.saturated;
        if let Some(buffer) = self.approximate {
            result.candidates = approximate_nms(result.candidates, buffer, self.config.overlap);
        }
        Ok(result)
    }

    /// Score of a single block in embedded coordinates; `None` if the block or its
    /// complement holds no unmasked samples or the score is not finite.
    pub fn score(&self, block: &SubBlock) -> Result<Option<f64>> {
        Scorer::new(self)?.score(block)
    }

    /// Merges chunk results (in chunk order) into the final ranking in input coordinates.
    pub fn finish(&self, chunks: Vec<ChunkResult>) -> Vec<Detection> {
        let k = self.config.num_detections;
        let merged: Vec<Detection> = chunks.into_iter().flat_map(|c| c.candidates).collect();
        let mut kept = match self.approximate {
            Some(buffer) => approximate_nms(merged, buffer, self.config.overlap),
            None => non_max_suppression(merged, self.config.overlap, Some(k)),
        };
        kept.truncate(k);
        for d in &mut kept {
            d.block = d.block.shifted(self.offset);
        }
        kept
    }

    /// Scores every candidate on the calling thread and returns the ranking.
    pub fn run(&self) -> Result<Vec<Detection>> {
        let chunks = (0..self.chunk_count()).map(|c| self.score_chunk(c)).collect::<Result<Vec<_>>>()?;
        Ok(self.finish(chunks))
    }
}

enum ChunkBlocks<'a> {
    All(Intervals),
    Slice(core::slice::Iter<'a, SubBlock>),
}

impl Iterator for ChunkBlocks<'_> {
    type Item = SubBlock;

    fn next(&mut self) -> Option<SubBlock> {
        match self {
            ChunkBlocks::All(it) => it.next(),
            ChunkBlocks::Slice(it) => it.next().copied(),
        }
    }
}

struct Scorer<'a> {
    det: &'a PreparedDetector,
    fitter: Option<PairFitter<'a>>,
    scratch: Vec<f64>,
    inner: Vec<LogDensityPair>,
    outer: Vec<LogDensityPair>,
    saturated: usize,
}

impl<'a> Scorer<'a> {
    fn new(det: &'a PreparedDetector) -> Result<Self> {
        let fitter = match &det.model {
            Model::Gaussian { stats, mode } => Some(PairFitter::new(stats, *mode)?),
            Model::Kde(_) => None,
        };
        let d = det.data.dims();
        Ok(Scorer { det, fitter, scratch: vec![0.0; 2 * d], inner: Vec::new(), outer: Vec::new(), saturated: 0 })
    }

    fn score(&mut self, block: &SubBlock) -> Result<Option<f64>> {
        let spec = self.det.config.divergence;
        let raw = match &self.det.model {
            Model::Gaussian { .. } => {
                let fitter = self.fitter.as_mut().expect("gaussian fitter");
                match fitter.fit(block) {
                    Ok(_) => {}
                    Err(Error::EmptyData(_)) | Err(Error::EmptyComplement) => return Ok(None),
                    Err(e) => return Err(e),
                }
                let fit = fitter.fitted();
                match spec.estimator {
                    Estimator::ClosedForm => divergence::closed_form_score(spec.kind, fit, &mut self.scratch),
                    Estimator::Empirical => {
                        self.inner.clear();
                        self.outer.clear();
                        let data = &self.det.data;
                        for i in 0..data.num_samples() {
                            if data.is_masked(i) {
                                continue;
                            }
                            let x = data.sample(i);
                            let pair = LogDensityPair {
                                inner: fit.log_pdf_inner(x, &mut self.scratch),
                                outer: fit.log_pdf_outer(x, &mut self.scratch),
                            };
                            if block.contains(data.coords(i)) {
                                self.inner.push(pair);
                            } else {
                                self.outer.push(pair);
                            }
                        }
                        let s = divergence::empirical_divergence(spec.kind, &self.inner, &self.outer)?;
                        self.saturated += s.saturated;
                        s.value
                    }
                }
            }
            Model::Kde(kde) => {
                let (a, b) = (block.start[0], block.end[0]);
                let counts = match kde.interval_counts(a, b) {
                    Ok(c) => c,
                    Err(Error::EmptyData(_)) | Err(Error::EmptyComplement) => return Ok(None),
                    Err(e) => return Err(e),
                };
                self.inner.clear();
                self.outer.clear();
                let mut sat = 0;
                for t in 0..kde.len() {
                    if kde.is_masked(t) {
                        continue;
                    }
                    let (pi, po) = kde.densities_at(t, a, b, counts);
                    let pair = LogDensityPair {
                        inner: divergence::log_density(pi, &mut sat),
                        outer: divergence::log_density(po, &mut sat),
                    };
                    if (a..b).contains(&t) {
                        self.inner.push(pair);
                    } else {
                        self.outer.push(pair);
                    }
                }
                let s = divergence::empirical_divergence(spec.kind, &self.inner, &self.outer)?;
                self.saturated += sat;
                s.value
            }
        };
        let score = spec.finish(raw, self.det.degrees_of_freedom());
        Ok(score.is_finite().then_some(score))
    }
}

/// Runs the whole pipeline on the calling thread.
pub fn detect(tensor: &DataTensor, config: &DetectorConfig) -> Result<Vec<Detection>> {
    prepare(tensor, config)?.run()
}

/// Scores every admitted block, ignoring the proposal setting. Blocks are in input
/// coordinates and in enumeration order.
pub fn full_scan(tensor: &DataTensor, config: &DetectorConfig) -> Result<Vec<Detection>> {
    let config = DetectorConfig { proposals: ProposalGenerator::None, ..*config };
    let det = prepare(tensor, &config)?;
    let mut scorer = Scorer::new(&det)?;
    let mut out = Vec::new();
    for block in Intervals::new(det.data.extents(), &det.constraints) {
        if let Some(score) = scorer.score(&block)? {
            out.push(Detection { block: block.shifted(det.offset), score });
        }
    }
    Ok(out)
}

/// Interval proposals from point-wise scores.
///
/// The temporal score is the maximum over locations. Its centred gradient
/// `g_t = s_{t+1} − s_{t−1}` (edges replicated) marks every `t` with
/// `|g_t| ≥ mean|g| + theta · std|g|` and `|g_t| > 0`. Every admitted block whose first
/// and last time steps are both marked is proposed, combined with all admitted spatial
/// ranges. `constraints` must already be resolved against `scores.extents`.
pub fn propose_intervals(scores: &PointwiseScores, theta: f64, constraints: &SizeConstraints) -> Vec<SubBlock> {
    let marks = gradient_marks(&scores.temporal_max(), theta);
    let e = scores.extents;
    let spatial: [Vec<(usize, usize)>; 3] =
        core::array::from_fn(|a| axis_intervals(e[a + 1], constraints.min[a + 1], constraints.max[a + 1].min(e[a + 1])));
    let mut out = Vec::new();
    let (min_t, max_t) = (constraints.min[0], constraints.max[0]);
    for a in 0..e[0] {
        if !marks[a] {
            continue;
        }
        for len in min_t..=max_t {
            let last = a + len - 1;
            if last >= e[0] {
                break;
            }
            if !marks[last] {
                continue;
            }
            for &(x0, x1) in &spatial[0] {
                for &(y0, y1) in &spatial[1] {
                    for &(z0, z1) in &spatial[2] {
                        out.push(SubBlock { start: [a, x0, y0, z0], end: [a + len, x1, y1, z1] });
                    }
                }
            }
        }
    }
    out
}

/// Time steps whose absolute centred gradient reaches `mean + theta · std`.
pub fn gradient_marks(series: &[f64], theta: f64) -> Vec<bool> {
    let n = series.len();
    if n < 2 {
        return vec![false; n];
    }
    let grad: Vec<f64> = (0..n)
        .map(|t| {
            let next = series[(t + 1).min(n - 1)];
            let prev = series[t.saturating_sub(1)];
            (next - prev).abs()
        })
        .collect();
    let mean = grad.iter().sum::<f64>() / n as f64;
    let var = grad.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / n as f64;
    let threshold = mean + theta * crate::math::sqrt(var);
    grad.iter().map(|&g| g > 0.0 && g >= threshold).collect()
}

fn suppresses(kept: &Detection, candidate: &Detection, overlap: f64) -> bool {
    kept.block.overlaps(&candidate.block) && kept.block.iou(&candidate.block) > overlap
}

/// Greedy non-maximum suppression in ranking order. A candidate survives if its IoU with
/// every kept detection is at most `overlap`. Stops after `limit` detections if given.
pub fn non_max_suppression(mut candidates: Vec<Detection>, overlap: f64, limit: Option<usize>) -> Vec<Detection> {
    candidates.sort_by(Detection::rank_cmp);
    let limit = limit.unwrap_or(usize::MAX);
    let mut kept: Vec<Detection> = Vec::new();
    for c in candidates {
        if kept.len() >= limit {
            break;
        }
        if kept.iter().all(|k| !suppresses(k, &c, overlap)) {
            kept.push(c);
        }
    }
    kept
}

/// Single-pass non-maximum suppression with bounded memory.
///
/// Candidates accumulate in a pool of `2 · buffer` entries. When the pool is full it is
/// compacted to the best `buffer` NMS survivors plus some suppressed runners-up. The result is
/// exact NMS over the final pool, at most `buffer` detections in ranking order. A stream
/// of at most `2 · buffer` candidates therefore gives the exact result.
pub fn approximate_nms(stream: impl IntoIterator<Item = Detection>, buffer: usize, overlap: f64) -> Vec<Detection> {
    if buffer == 0 {
        return Vec::new();
    }
    let capacity = 2 * buffer;
    let mut pool: Vec<Detection> = Vec::with_capacity(capacity);
    for c in stream {
        if pool.len() == capacity {
            pool = compact(core::mem::take(&mut pool), buffer, overlap);
        }
        pool.push(c);
    }
    non_max_suppression(pool, overlap, Some(buffer))
}

/// Keeps the best `buffer` NMS survivors of `pool`, then refills up to `3 · buffer / 2`
/// with the best suppressed candidates: these come back if their suppressor is itself
/// suppressed by a later arrival.
fn compact(mut pool: Vec<Detection>, buffer: usize, overlap: f64) -> Vec<Detection> {
    pool.sort_by(Detection::rank_cmp);
    let mut kept: Vec<Detection> = Vec::with_capacity(2 * buffer);
    let mut suppressed = Vec::new();
    for c in pool {
        if kept.len() < buffer && kept.iter().all(|k| !suppresses(k, &c, overlap)) {
            kept.push(c);
        } else {
            suppressed.push(c);
        }
    }
    let spare = (3 * buffer / 2).saturating_sub(kept.len());
    kept.extend(suppressed.into_iter().take(spare));
    kept
}
