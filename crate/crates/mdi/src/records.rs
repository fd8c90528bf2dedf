//! JSON records for detections and ground truth, and dataset directories.
//!
//! Ranges are written 1-based and half-open: a record `t: [3, 5]` covers the 1-based
//! time steps 3 and 4, i.e. the internal range `2..4`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use mdi_core::synth::{BenchmarkConfig, Dataset, GroundTruth, SyntheticSeries, TestCase};
use mdi_core::{Detection, SubBlock};

use crate::error::{MdiError, Result};
use crate::format::{self, Dtype};

/// Per-axis 1-based `[start, end)` ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RangeRecord {
    pub t: [usize; 2],
    pub x: [usize; 2],
    pub y: [usize; 2],
    pub z: [usize; 2],
}

impl From<&SubBlock> for RangeRecord {
    fn from(b: &SubBlock) -> Self {
        let r = |a: usize| [b.start[a] + 1, b.end[a] + 1];
        RangeRecord { t: r(0), x: r(1), y: r(2), z: r(3) }
    }
}

impl RangeRecord {
    pub fn to_block(&self) -> Result<SubBlock> {
        let axes = [self.t, self.x, self.y, self.z];
        if axes.iter().any(|r| r[0] == 0 || r[0] >= r[1]) {
            return Err(MdiError::Format(format!("invalid 1-based range {self:?}")));
        }
        Ok(SubBlock::new(axes.map(|r| r[0] - 1), axes.map(|r| r[1] - 1))?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    #[serde(flatten)]
    pub range: RangeRecord,
    pub score: f64,
    /// 1-based rank.
    pub rank: usize,
}

pub fn detection_records(dets: &[Detection]) -> Vec<DetectionRecord> {
    dets.iter()
        .enumerate()
        .map(|(i, d)| DetectionRecord { range: (&d.block).into(), score: d.score, rank: i + 1 })
        .collect()
}

pub fn detections_from_records(records: &[DetectionRecord]) -> Result<Vec<Detection>> {
    let mut sorted: Vec<&DetectionRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.rank);
    sorted.into_iter().map(|r| Ok(Detection { block: r.range.to_block()?, score: r.score })).collect()
}

/// Ground-truth sidecar of one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub case: String,
    pub series_index: usize,
    pub ranges: Vec<RangeRecord>,
}

impl From<&GroundTruth> for TruthRecord {
    fn from(g: &GroundTruth) -> Self {
        TruthRecord { case: g.case.name().into(), series_index: g.series_index, ranges: g.ranges.iter().map(Into::into).collect() }
    }
}

impl TruthRecord {
    pub fn to_truth(&self) -> Result<GroundTruth> {
        let case = TestCase::from_name(&self.case).ok_or_else(|| MdiError::Format(format!("unknown test case `{}`", self.case)))?;
        let ranges = self.ranges.iter().map(RangeRecord::to_block).collect::<Result<_>>()?;
        Ok(GroundTruth { case, series_index: self.series_index, ranges })
    }
}

/// Detections of one dataset series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesDetections {
    pub case: String,
    pub series_index: usize,
    pub detections: Vec<DetectionRecord>,
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| MdiError::Json { path: path.into(), source: e })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| MdiError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| MdiError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| MdiError::Json { path: path.into(), source: e })
}

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const DATASET_FILE: &str = "dataset.json";

/// Dataset-level metadata written next to the series files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub master_seed: u64,
    pub config: BenchmarkConfig,
    pub num_cases: usize,
    pub num_series: usize,
    pub num_anomalies: usize,
    pub digest: String,
}

pub fn series_file(dir: &Path, case: TestCase, index: usize) -> PathBuf {
    dir.join(format!("{}_{:03}.mdi", case.name(), index))
}

/// SHA-256 over every series tensor and its ground truth, in dataset order.
pub fn dataset_digest(dataset: &Dataset) -> String {
    let mut h = Sha256::new();
    for s in &dataset.series {
        h.update(format::to_bytes(&s.data, Dtype::F64));
        let truth = serde_json::to_vec(&TruthRecord::from(&s.truth)).expect("serializable");
        h.update(truth);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn dataset_info(dataset: &Dataset) -> DatasetInfo {
    DatasetInfo {
        master_seed: dataset.master_seed,
        config: dataset.config,
        num_cases: dataset.num_cases(),
        num_series: dataset.series.len(),
        num_anomalies: dataset.num_anomalies(),
        digest: dataset_digest(dataset),
    }
}

/// Writes one binary file per series plus the ground-truth and metadata files.
pub fn save_dataset(dir: &Path, dataset: &Dataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| MdiError::io(dir, e))?;
    for s in &dataset.series {
        format::save(&series_file(dir, s.truth.case, s.truth.series_index), &s.data, Dtype::F64)?;
    }
    let truth: Vec<TruthRecord> = dataset.series.iter().map(|s| (&s.truth).into()).collect();
    write_json(&dir.join(GROUND_TRUTH_FILE), &truth)?;
    write_json(&dir.join(DATASET_FILE), &dataset_info(dataset))
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let info: DatasetInfo = read_json(&dir.join(DATASET_FILE))?;
    let truth: Vec<TruthRecord> = read_json(&dir.join(GROUND_TRUTH_FILE))?;
    let mut series = Vec::with_capacity(truth.len());
    for rec in &truth {
        let truth = rec.to_truth()?;
        let data = format::load(&series_file(dir, truth.case, truth.series_index))?;
        series.push(SyntheticSeries { data, truth });
    }
    Ok(Dataset { master_seed: info.master_seed, config: info.config, series })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_based_ranges() {
        let b = SubBlock::temporal(2, 4);
        let r = RangeRecord::from(&b);
        assert_eq!(r.t, [3, 5]);
        assert_eq!(r.x, [1, 2]);
        assert_eq!(r.to_block().unwrap(), b);
    }

    #[test]
    fn detection_json_shape() {
        let recs = detection_records(&[Detection { block: SubBlock::temporal(0, 3), score: 2.5 }]);
        let v = serde_json::to_value(&recs).unwrap();
        assert_eq!(v[0]["t"], serde_json::json!([1, 4]));
        assert_eq!(v[0]["rank"], 1);
        assert_eq!(v[0]["score"], 2.5);
    }
}
