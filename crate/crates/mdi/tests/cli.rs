use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mdi::records::{RangeRecord, SeriesDetections, TruthRecord, DetectionRecord};
use serde_json::Value;

fn mdi(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mdi")).current_dir(cwd).args(args).output().expect("binary runs")
}

fn ok(cwd: &Path, args: &[&str]) -> Output {
    let out = mdi(cwd, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// A two-series-per-case dataset in `<dir>/data`.
fn synth(dir: &Path) -> PathBuf {
    ok(dir, &["synth", "--out-dir", "data", "--seed", "4", "--series-per-case", "2"]);
    dir.join("data")
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    names
}

#[test]
fn detect_finds_the_injected_meanshift() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path());
    let truth: Vec<TruthRecord> = serde_json::from_value(json(data.join("ground_truth.json"))).unwrap();
    let t = truth.iter().find(|r| r.case == "meanshift" && r.series_index == 0).unwrap().to_truth().unwrap();
    ok(tmp.path(), &["detect", "data/meanshift_000.mdi", "--out-dir", "out", "--td-dim", "6", "--td-lag", "2", "--num-detections", "3"]);
    let recs: Vec<DetectionRecord> = serde_json::from_value(json(tmp.path().join("out/detections.json"))).unwrap();
    assert!(!recs.is_empty() && recs.len() <= 3);
    assert_eq!(recs[0].rank, 1);
    assert!(recs[0].range.to_block().unwrap().iou(&t.ranges[0]) >= 0.5);
    let manifest = json(tmp.path().join("out/manifest.json"));
    assert_eq!(manifest["command"], "detect");
}

#[test]
fn detect_reads_csv_and_writes_plot_data() {
    let tmp = tempfile::tempdir().unwrap();
    let mut csv = String::from("t,v\n");
    for t in 0..120 {
        let v = ((t * 37) % 11) as f64 / 11.0 + if (50..70).contains(&t) { 4.0 } else { 0.0 };
        csv.push_str(&format!("{t},{v}\n"));
    }
    fs::write(tmp.path().join("s.csv"), csv).unwrap();
    ok(tmp.path(), &["detect", "s.csv", "--out-dir", "out", "--plot-data", "--num-detections", "2"]);
    assert_eq!(listing(&tmp.path().join("out")), ["detections.json", "manifest.json", "scores.csv", "spans.csv"]);
    let scores = fs::read_to_string(tmp.path().join("out/scores.csv")).unwrap();
    assert!(scores.starts_with("t,x,y,z,score\n"));
    assert_eq!(scores.lines().count(), 121);
    let recs: Vec<DetectionRecord> = serde_json::from_value(json(tmp.path().join("out/detections.json"))).unwrap();
    // 1-based output
    let top = recs[0].range;
    assert!(top.t[0] >= 45 && top.t[1] <= 76, "{top:?}");
}

#[test]
fn configuration_errors_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("g.csv"), "t,x,v\n0,0,1\n0,1,2\n1,0,3\n1,1,4\n2,0,1\n2,1,0\n").unwrap();
    let kde = mdi(tmp.path(), &["detect", "g.csv", "--out-dir", "o", "--model", "kde", "--spatial-dim", "2", "--min-len", "1"]);
    assert_eq!(kde.status.code(), Some(2));
    let alpha = mdi(tmp.path(), &["detect", "g.csv", "--out-dir", "o", "--divergence", "kl", "--alpha", "0.05"]);
    assert_eq!(alpha.status.code(), Some(2));
    let bad_flag = mdi(tmp.path(), &["detect", "g.csv", "--out-dir", "o", "--model", "banana"]);
    assert_eq!(bad_flag.status.code(), Some(2));
    let missing = mdi(tmp.path(), &["detect", "nope.mdi", "--out-dir", "o"]);
    assert_eq!(missing.status.code(), Some(3));
    assert!(!String::from_utf8_lossy(&missing.stderr).is_empty());
}

#[test]
fn detect_is_identical_across_runs_and_workers() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    for (dir, workers) in [("a", "1"), ("b", "4"), ("c", "1")] {
        ok(tmp.path(), &["detect", "data", "--out-dir", dir, "--workers", workers, "--td-dim", "3"]);
    }
    for f in ["detections.json", "manifest.json"] {
        let a = fs::read(tmp.path().join("a").join(f)).unwrap();
        assert_eq!(a, fs::read(tmp.path().join("b").join(f)).unwrap(), "{f}");
        assert_eq!(a, fs::read(tmp.path().join("c").join(f)).unwrap(), "{f}");
    }
    let all: Vec<SeriesDetections> = serde_json::from_value(json(tmp.path().join("a/detections.json"))).unwrap();
    assert_eq!(all.len(), 22);
}

#[test]
fn eval_of_the_ground_truth_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path());
    let truth: Vec<TruthRecord> = serde_json::from_value(json(data.join("ground_truth.json"))).unwrap();
    let oracle: Vec<SeriesDetections> = truth
        .iter()
        .map(|t| SeriesDetections {
            case: t.case.clone(),
            series_index: t.series_index,
            detections: t
                .ranges
                .iter()
                .enumerate()
                .map(|(i, r): (usize, &RangeRecord)| DetectionRecord { range: *r, score: 10.0 - i as f64, rank: i + 1 })
                .collect(),
        })
        .collect();
    fs::write(tmp.path().join("oracle.json"), serde_json::to_string(&oracle).unwrap()).unwrap();
    ok(tmp.path(), &["eval", "--dataset", "data", "--detections", "oracle.json", "--out-dir", "ev", "--name", "oracle"]);
    let report = json(tmp.path().join("ev/report.json"));
    assert_eq!(report["methods"][0]["mean_ap"], 1.0);
    assert_eq!(report["methods"][0]["mean_auc"], 1.0);
    let csv = fs::read_to_string(tmp.path().join("ev/report.csv")).unwrap();
    assert!(csv.starts_with("case,oracle_ap,oracle_auc\n"));
    assert!(csv.ends_with("mean,1.000000,1.000000\n"));
}

#[test]
fn bench_writes_reproducible_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let args = |dir: &'static str, workers: &'static str| {
        vec!["bench", "--out-dir", dir, "--series-per-case", "3", "--workers", workers, "--variants", "mdi_gaussian_ukl,hotelling_t2"]
    };
    ok(tmp.path(), &args("b1", "1"));
    ok(tmp.path(), &args("b4", "4"));
    assert_eq!(listing(&tmp.path().join("b1")), ["manifest.json", "recall_curve.csv", "report.csv", "report.json", "timings.json"]);
    for f in ["manifest.json", "recall_curve.csv", "report.csv", "report.json"] {
        assert_eq!(fs::read(tmp.path().join("b1").join(f)).unwrap(), fs::read(tmp.path().join("b4").join(f)).unwrap(), "{f}");
    }
    let report = json(tmp.path().join("b1/report.json"));
    assert_eq!(report["num_cases"], 11);
    assert_eq!(report["num_series"], 33);
    assert_eq!(report["methods"].as_array().unwrap().len(), 2);
    let curve = fs::read_to_string(tmp.path().join("b1/recall_curve.csv")).unwrap();
    let recalls: Vec<f64> = curve.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(recalls.len(), 9);
    assert!(recalls.windows(2).all(|w| w[0] >= w[1]), "{recalls:?}");
    let unknown = mdi(tmp.path(), &["bench", "--out-dir", "x", "--variants", "nope"]);
    assert_eq!(unknown.status.code(), Some(2));
}

#[test]
fn outputs_stay_inside_the_output_directory() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    let before = listing(tmp.path());
    ok(tmp.path(), &["detect", "data/mixed_001.mdi", "--out-dir", "only", "--plot-data"]);
    let mut after = listing(tmp.path());
    after.retain(|n| n != "only");
    assert_eq!(before, after);
    assert_eq!(listing(&tmp.path().join("data")).len(), 22 + 2);
}
