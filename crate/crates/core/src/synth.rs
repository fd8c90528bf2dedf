//! Seeded synthetic benchmark: Gaussian-process series with injected anomalies.
//!
//! Base series are zero-mean GP draws over the inputs `(t + 1) / n` with the kernel
//! `K(t, t') = (2πℓ²)^(−1/2) · exp(−(t/n − t'/n)² / (2ℓ²)) + σ² δ(t, t')`. Each of the eleven
//! test cases injects one or five anomalies whose lengths lie between 5% and 20% of `n`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg;
use crate::math;
use crate::tensor::{DataTensor, SubBlock};

/// Squared-exponential Gaussian-process settings.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GpConfig {
    pub len: usize,
    pub dims: usize,
    pub length_scale_sq: f64,
    pub noise_var: f64,
    pub seed: u64,
}

impl GpConfig {
    pub fn new(len: usize, dims: usize, seed: u64) -> Self {
        GpConfig { len, dims, length_scale_sq: 0.01, noise_var: 0.001, seed }
    }
}

const JITTER: f64 = 1e-9;
const MAX_JITTER_STEPS: usize = 10;

/// A cached Cholesky factor of one GP covariance, reusable for many draws.
#[derive(Debug, Clone)]
pub struct GpSampler {
    n: usize,
    chol: Vec<f64>,
}

fn factorize(mut k: Vec<f64>, n: usize) -> Result<Vec<f64>> {
    let mut jitter = JITTER;
    for _ in 0..MAX_JITTER_STEPS {
        let mut a = k.clone();
        for i in 0..n {
            a[i * n + i] += jitter;
        }
        if linalg::cholesky_in_place(&mut a, n).is_ok() {
            return Ok(a);
        }
        jitter *= 10.0;
    }
    for i in 0..n {
        k[i * n + i] += jitter;
    }
    linalg::cholesky_in_place(&mut k, n)
        .map(|_| k)
        .map_err(|_| Error::Numeric(format!("GP covariance not factorizable with jitter up to {jitter:e}")))
}

fn input(t: usize, n: usize) -> f64 {
    (t + 1) as f64 / n as f64
}

impl GpSampler {
    /// Stationary squared-exponential kernel.
    pub fn stationary(n: usize, length_scale_sq: f64, noise_var: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("GP series need at least 2 samples, got {n}")));
        }
        if !(length_scale_sq > 0.0) || !(noise_var >= 0.0) {
            return Err(Error::Config("GP length scale must be positive and noise non-negative".into()));
        }
        let amp = 1.0 / math::sqrt(2.0 * core::f64::consts::PI * length_scale_sq);
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let d = input(i, n) - input(j, n);
                k[i * n + j] = amp * math::exp(-d * d / (2.0 * length_scale_sq));
            }
            k[i * n + i] += noise_var;
        }
        Ok(GpSampler { n, chol: factorize(k, n)? })
    }

    /// Non-stationary kernel with per-sample squared length scales.
    pub fn nonstationary(length_scale_sq: &[f64], noise_var: f64) -> Result<Self> {
        let n = length_scale_sq.len();
        if n < 2 {
            return Err(Error::Config(format!("GP series need at least 2 samples, got {n}")));
        }
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let (li, lj) = (length_scale_sq[i], length_scale_sq[j]);
                let d = input(i, n) - input(j, n);
                let s = li + lj;
                k[i * n + j] = math::powf(li * lj, 0.25) * math::powf(s / 2.0, -0.5) * math::exp(-d * d / s);
            }
            k[i * n + i] += noise_var;
        }
        Ok(GpSampler { n, chol: factorize(k, n)? })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// One draw of length `n`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.n;
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let row = &self.chol[i * n..i * n + i + 1];
            out[i] = row.iter().zip(&z).map(|(l, z)| l * z).sum();
        }
        out
    }

    /// `dims` independent draws interleaved as a row-major `n × dims` buffer.
    pub fn sample_dims<R: Rng + ?Sized>(&self, dims: usize, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.n * dims];
        for d in 0..dims {
            for (t, v) in self.sample(rng).into_iter().enumerate() {
                out[t * dims + d] = v;
            }
        }
        out
    }
}

/// Draws a GP series as a temporal tensor.
pub fn sample_gp(config: &GpConfig) -> Result<DataTensor> {
    let sampler = GpSampler::stationary(config.len, config.length_scale_sq, config.noise_var)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    DataTensor::from_series(config.len, config.dims, sampler.sample_dims(config.dims, &mut rng))
}

/// The eleven benchmark test cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TestCase {
    Meanshift,
    MeanshiftHard,
    Meanshift5,
    Meanshift5Hard,
    AmplitudeChange,
    FrequencyChange,
    Mixed,
    MeanshiftMultvar,
    AmplitudeChangeMultvar,
    FrequencyChangeMultvar,
    MixedMultvar,
}

impl TestCase {
    pub const ALL: [TestCase; 11] = [
        TestCase::Meanshift,
        TestCase::MeanshiftHard,
        TestCase::Meanshift5,
        TestCase::Meanshift5Hard,
        TestCase::AmplitudeChange,
        TestCase::FrequencyChange,
        TestCase::Mixed,
        TestCase::MeanshiftMultvar,
        TestCase::AmplitudeChangeMultvar,
        TestCase::FrequencyChangeMultvar,
        TestCase::MixedMultvar,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TestCase::Meanshift => "meanshift",
            TestCase::MeanshiftHard => "meanshift_hard",
            TestCase::Meanshift5 => "meanshift5",
            TestCase::Meanshift5Hard => "meanshift5_hard",
            TestCase::AmplitudeChange => "amplitude_change",
            TestCase::FrequencyChange => "frequency_change",
            TestCase::Mixed => "mixed",
            TestCase::MeanshiftMultvar => "meanshift_multvar",
            TestCase::AmplitudeChangeMultvar => "amplitude_change_multvar",
            TestCase::FrequencyChangeMultvar => "frequency_change_multvar",
            TestCase::MixedMultvar => "mixed_multvar",
        }
    }

    pub fn from_name(name: &str) -> Option<TestCase> {
        TestCase::ALL.into_iter().find(|c| c.name() == name)
    }

    pub fn index(&self) -> usize {
        TestCase::ALL.iter().position(|c| c == self).expect("listed")
    }

    pub fn is_multivariate(&self) -> bool {
        matches!(
            self,
            TestCase::MeanshiftMultvar | TestCase::AmplitudeChangeMultvar | TestCase::FrequencyChangeMultvar | TestCase::MixedMultvar
        )
    }

    pub fn anomalies_per_series(&self) -> usize {
        match self {
            TestCase::Meanshift5 | TestCase::Meanshift5Hard => 5,
            _ => 1,
        }
    }

    fn kind(&self) -> Kind {
        match self {
            TestCase::Meanshift | TestCase::Meanshift5 | TestCase::MeanshiftMultvar => Kind::Meanshift { lo: 3.0, hi: 4.0 },
            TestCase::MeanshiftHard | TestCase::Meanshift5Hard => Kind::Meanshift { lo: 0.5, hi: 1.0 },
            TestCase::AmplitudeChange | TestCase::AmplitudeChangeMultvar => Kind::Amplitude,
            TestCase::FrequencyChange | TestCase::FrequencyChangeMultvar => Kind::Frequency,
            TestCase::Mixed | TestCase::MixedMultvar => Kind::Mixed,
        }
    }
}

impl fmt::Display for TestCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Meanshift { lo: f64, hi: f64 },
    Amplitude,
    Frequency,
    Mixed,
}

/// Injected anomaly ranges of one series.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GroundTruth {
    pub case: TestCase,
    pub series_index: usize,
    pub ranges: Vec<SubBlock>,
}

/// Benchmark size parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BenchmarkConfig {
    pub series_len: usize,
    pub series_per_case: usize,
    pub multivariate_dims: usize,
    pub length_scale_sq: f64,
    pub noise_var: f64,
    /// Length scale inside frequency-change anomalies.
    pub anomaly_length_scale_sq: f64,
    pub min_fraction: f64,
    pub max_fraction: f64,
    /// Samples blended at each border of a mixed anomaly.
    pub crossfade: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            series_len: 250,
            series_per_case: 100,
            multivariate_dims: 5,
            length_scale_sq: 0.01,
            noise_var: 0.001,
            anomaly_length_scale_sq: 1e-4,
            min_fraction: 0.05,
            max_fraction: 0.2,
            crossfade: 10,
        }
    }
}

impl BenchmarkConfig {
    /// Inclusive anomaly length bounds.
    pub fn length_bounds(&self) -> (usize, usize) {
        let n = self.series_len as f64;
        (math::ceil(self.min_fraction * n) as usize, math::floor(self.max_fraction * n) as usize)
    }
}

/// One generated series with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSeries {
    pub data: DataTensor,
    pub truth: GroundTruth,
}

/// All series of the benchmark, grouped by test case in [`TestCase::ALL`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub master_seed: u64,
    pub config: BenchmarkConfig,
    pub series: Vec<SyntheticSeries>,
}

impl Dataset {
    pub fn num_anomalies(&self) -> usize {
        self.series.iter().map(|s| s.truth.ranges.len()).sum()
    }

    pub fn num_cases(&self) -> usize {
        let mut cases: Vec<TestCase> = self.series.iter().map(|s| s.truth.case).collect();
        cases.dedup();
        cases.len()
    }

    pub fn case(&self, case: TestCase) -> impl Iterator<Item = &SyntheticSeries> {
        self.series.iter().filter(move |s| s.truth.case == case)
    }
}

/// The splitmix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of series `index` of `case`.
pub fn series_seed(master_seed: u64, case: TestCase, index: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(master_seed) ^ case.index() as u64) ^ index as u64)
}

const PLACEMENT_RETRIES: usize = 1000;

/// Draws `count` pairwise disjoint, non-adjacent intervals that avoid both borders.
fn place_intervals<R: Rng + ?Sized>(rng: &mut R, n: usize, count: usize, bounds: (usize, usize)) -> Result<Vec<(usize, usize)>> {
    let (lo, hi) = bounds;
    if lo == 0 || lo > hi || hi + 2 > n {
        return Err(Error::Generation(format!("anomaly lengths {lo}..={hi} do not fit a series of {n}")));
    }
    let mut placed: Vec<(usize, usize)> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut ok = false;
        for _ in 0..PLACEMENT_RETRIES {
            let len = rng.random_range(lo..=hi);
            let start = rng.random_range(1..=n - len - 1);
            let end = start + len;
            if placed.iter().all(|&(a, b)| end < a || b < start) {
                placed.push((start, end));
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(Error::Generation(format!(
                "could not place {count} disjoint anomalies after {PLACEMENT_RETRIES} attempts"
            )));
        }
    }
    placed.sort_unstable();
    Ok(placed)
}

/// Reusable samplers for one benchmark configuration.
struct Generator {
    cfg: BenchmarkConfig,
    base: GpSampler,
}

impl Generator {
    fn new(cfg: BenchmarkConfig) -> Result<Self> {
        Ok(Generator { cfg, base: GpSampler::stationary(cfg.series_len, cfg.length_scale_sq, cfg.noise_var)? })
    }

    fn series(&self, case: TestCase, index: usize, seed: u64) -> Result<SyntheticSeries> {
        let n = self.cfg.series_len;
        let dims = if case.is_multivariate() { self.cfg.multivariate_dims } else { 1 };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = self.base.sample_dims(dims, &mut rng);
        let ranges = place_intervals(&mut rng, n, case.anomalies_per_series(), self.cfg.length_bounds())?;
        let target = if case.is_multivariate() && !matches!(case, TestCase::MixedMultvar) {
            Some(rng.random_range(0..dims))
        } else {
            None
        };
        for &(a, b) in &ranges {
            let columns: Vec<usize> = match (case, target) {
                (_, Some(c)) => vec![c],
                _ => (0..dims).collect(),
            };
            inject(&mut values, dims, &columns, (a, b), case.kind(), &self.cfg, &self.base, &mut rng)?;
        }
        let data = DataTensor::from_series(n, dims, values)?;
        let ranges = ranges.into_iter().map(|(a, b)| SubBlock::temporal(a, b)).collect();
        Ok(SyntheticSeries { data, truth: GroundTruth { case, series_index: index, ranges } })
    }
}

#[allow(clippy::too_many_arguments)]
fn inject<R: Rng + ?Sized>(
    values: &mut [f64],
    dims: usize,
    columns: &[usize],
    (a, b): (usize, usize),
    kind: Kind,
    cfg: &BenchmarkConfig,
    base: &GpSampler,
    rng: &mut R,
) -> Result<()> {
    let n = values.len() / dims;
    match kind {
        Kind::Meanshift { lo, hi } => {
            for &c in columns {
                let gamma = rng.random_range(lo..=hi);
                let shift = if rng.random_bool(0.5) { gamma } else { -gamma };
                for t in a..b {
                    values[t * dims + c] += shift;
                }
            }
        }
        Kind::Amplitude => {
            let len = (b - a) as f64;
            let centre = (a + b - 1) as f64 / 2.0;
            let sd = len / 4.0;
            for &c in columns {
                for t in a..b {
                    let w = amplitude_window(t as f64, centre, sd);
                    values[t * dims + c] += w * values[t * dims + c];
                }
            }
        }
        Kind::Frequency => {
            let scales: Vec<f64> =
                (0..n).map(|t| if (a..b).contains(&t) { cfg.anomaly_length_scale_sq } else { cfg.length_scale_sq }).collect();
            let sampler = GpSampler::nonstationary(&scales, cfg.noise_var)?;
            for &c in columns {
                for (t, v) in sampler.sample(rng).into_iter().enumerate() {
                    values[t * dims + c] = v;
                }
            }
        }
        Kind::Mixed => {
            let other = base.sample_dims(columns.len(), rng);
            let fade = cfg.crossfade as f64 + 1.0;
            for t in a..b {
                let alpha = (((t - a + 1) as f64) / fade).min(((b - t) as f64) / fade).min(1.0);
                for (k, &c) in columns.iter().enumerate() {
                    let y = other[t * columns.len() + k];
                    let x = &mut values[t * dims + c];
                    *x = (1.0 - alpha) * *x + alpha * y;
                }
            }
        }
    }
    Ok(())
}

/// Multiplicative window of the amplitude-change anomaly: a Gaussian bump of peak 4
/// clipped at 2.
pub fn amplitude_window(t: f64, centre: f64, sd: f64) -> f64 {
    let z = (t - centre) / sd;
    (4.0 * math::exp(-0.5 * z * z)).min(2.0)
}

/// Generates one series of `case` exactly as [`build_benchmark`] would.
pub fn generate_series(master_seed: u64, case: TestCase, index: usize, config: &BenchmarkConfig) -> Result<SyntheticSeries> {
    Generator::new(*config)?.series(case, index, series_seed(master_seed, case, index))
}

/// The full benchmark: every test case, `series_per_case` series each.
pub fn build_benchmark(master_seed: u64, config: &BenchmarkConfig) -> Result<Dataset> {
    let gen = Generator::new(*config)?;
    let mut series = Vec::with_capacity(TestCase::ALL.len() * config.series_per_case);
    for case in TestCase::ALL {
        for i in 0..config.series_per_case {
            series.push(gen.series(case, i, series_seed(master_seed, case, i))?);
        }
    }
    Ok(Dataset { master_seed, config: *config, series })
}

/// Human-readable summary line.
pub fn describe(dataset: &Dataset) -> String {
    format!("{} cases, {} series, {} anomalies", dataset.num_cases(), dataset.series.len(), dataset.num_anomalies())
}
