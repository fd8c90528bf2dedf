mod common;

use common::*;
use mdi_core::density::CovarianceMode;
use mdi_core::divergence::{chi2_score_threshold, Divergence, DivergenceSpec, Estimator};
use mdi_core::pointwise::PointwiseScores;
use mdi_core::preprocess::EmbeddingConfig;
use mdi_core::search::{
    approximate_nms, full_scan, gradient_marks, non_max_suppression, prepare, propose_intervals, ModelKind, NmsMode,
    ProposalGenerator,
};
use mdi_core::synth::{generate_series, BenchmarkConfig, TestCase};
use mdi_core::{detect, DataTensor, Detection, DetectorConfig, SizeConstraints, SubBlock};
use proptest::prelude::*;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn det(s: usize, e: usize, score: f64) -> Detection {
    Detection { block: SubBlock::temporal(s, e), score }
}

fn ukl(kind_model: ModelKind) -> DetectorConfig {
    DetectorConfig {
        model: kind_model,
        divergence: DivergenceSpec { kind: Divergence::UnbiasedKl, estimator: Estimator::ClosedForm, normalize_by_df: false },
        nms: NmsMode::Exact,
        ..DetectorConfig::default()
    }
}

/// The settings used on the synthetic benchmark.
fn bench_config() -> DetectorConfig {
    DetectorConfig { embedding: EmbeddingConfig::time_delay(6, 2), ..ukl(ModelKind::GaussianFull) }
}

/// Greedy NMS written out directly: repeatedly take the best remaining candidate and
/// drop everything overlapping it by more than `overlap`.
fn greedy_oracle(cands: &[Detection], overlap: f64, k: usize) -> Vec<Detection> {
    let mut left: Vec<Detection> = cands.to_vec();
    let mut out = Vec::new();
    while out.len() < k && !left.is_empty() {
        let best = (0..left.len())
            .min_by(|&a, &b| {
                left[b].score.partial_cmp(&left[a].score).unwrap().then_with(|| left[a].block.cmp(&left[b].block))
            })
            .unwrap();
        let chosen = left.swap_remove(best);
        left.retain(|c| !(chosen.block.overlaps(&c.block) && chosen.block.iou(&c.block) > overlap));
        out.push(chosen);
    }
    out
}

fn random_stream(rng: &mut impl Rng, n: usize, horizon: usize) -> Vec<Detection> {
    (0..n)
        .map(|_| {
            let s = rng.random_range(0..horizon - 1);
            let len = rng.random_range(1..=(horizon - s).min(30));
            det(s, s + len, rng.random::<f64>() * 10.0)
        })
        .collect()
}

fn pairwise_disjoint(d: &[Detection]) -> bool {
    d.iter().enumerate().all(|(i, a)| d[i + 1..].iter().all(|b| !a.block.overlaps(&b.block)))
}

fn series_with_shift(rng: &mut impl Rng, n: usize, d: usize, start: usize, len: usize, shift: f64) -> DataTensor {
    let mut v: Vec<f64> = (0..n * d).map(|_| normal(rng)).collect();
    for t in start..start + len {
        for k in 0..d {
            v[t * d + k] += shift;
        }
    }
    DataTensor::from_series(n, d, v).unwrap()
}

#[test]
fn proposals_on_constant_scores_are_empty() {
    let s = PointwiseScores { extents: [10, 1, 1, 1], values: vec![4.0; 10] };
    let c = SizeConstraints::temporal(1, 10).unwrap().resolve(s.extents).unwrap();
    for theta in [0.0, 0.5, 3.0] {
        assert!(propose_intervals(&s, theta, &c).is_empty());
    }
}

#[test]
fn proposals_bracket_a_plateau() {
    let s = PointwiseScores { extents: [6, 1, 1, 1], values: vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0] };
    let marks = gradient_marks(&s.values, 0.5);
    // gradients are (0, 1, 1, -1, -1, 0): rise at 1..=2, fall at 3..=4
    assert_eq!(marks, vec![false, true, true, true, true, false]);
    let c = SizeConstraints::temporal(2, 6).unwrap().resolve(s.extents).unwrap();
    let p = propose_intervals(&s, 0.5, &c);
    assert!(p.contains(&SubBlock::temporal(2, 4)));
    for b in &p {
        assert!(marks[b.start[0]] && marks[b.end[0] - 1]);
        assert!(c.admits(b));
    }
}

#[test]
fn proposals_use_the_maximum_over_locations() {
    // a spike at one location of a 2-location grid is enough to mark it
    let mut values = vec![0.0; 16];
    values[5 * 2 + 1] = 9.0;
    let s = PointwiseScores { extents: [8, 2, 1, 1], values };
    let m = gradient_marks(&s.temporal_max(), 1.0);
    assert!(m[4] && m[6]);
    assert!(!m[0] && !m[7]);
}

#[test]
fn larger_theta_proposes_a_subset() {
    let mut r = rng(3);
    let vals: Vec<f64> = (0..120).map(|_| normal(&mut r).abs()).collect();
    let s = PointwiseScores { extents: [120, 1, 1, 1], values: vals };
    let c = SizeConstraints::temporal(3, 40).unwrap().resolve(s.extents).unwrap();
    let mut prev = propose_intervals(&s, 0.0, &c);
    for theta in [0.5, 1.0, 2.0, 3.0] {
        let next = propose_intervals(&s, theta, &c);
        assert!(next.iter().all(|b| prev.contains(b)));
        prev = next;
    }
}

#[test]
fn approximate_nms_on_a_small_stream_equals_exact() {
    let mut r = rng(11);
    for _ in 0..50 {
        let stream = random_stream(&mut r, 8, 60);
        let exact = non_max_suppression(stream.clone(), 0.0, None);
        assert_eq!(approximate_nms(stream, 8, 0.0), exact);
    }
}

#[test]
fn approximate_nms_keeps_the_best_disjoint_intervals() {
    let stream: Vec<Detection> = (0..20).map(|i| det(3 * i, 3 * i + 2, ((i * 7) % 20) as f64)).collect();
    let kept = approximate_nms(stream.clone(), 5, 0.0);
    let mut expect = stream;
    expect.sort_by(Detection::rank_cmp);
    expect.truncate(5);
    assert_eq!(kept, expect);
}

#[test]
fn approximate_nms_matches_exact_top_k_on_fuzzed_streams() {
    let k = 5;
    let mut r = rng(12);
    let trials = 200;
    let mut hits = 0;
    for _ in 0..trials {
        let n = r.random_range(20..200);
        let stream = random_stream(&mut r, n, 150);
        let exact = non_max_suppression(stream.clone(), 0.0, Some(k));
        let mut approx = approximate_nms(stream, 2 * k, 0.0);
        assert!(pairwise_disjoint(&approx));
        approx.truncate(k);
        hits += usize::from(approx == exact);
    }
    assert!(hits as f64 >= 0.95 * trials as f64, "{hits}/{trials}");
}

proptest! {
    #[test]
    fn exact_nms_equals_greedy_oracle(
        raw in prop::collection::vec((0usize..40, 1usize..15, 0u8..20), 0..60),
        overlap in prop::sample::select(vec![0.0, 0.25, 0.5]),
        k in 1usize..8,
    ) {
        let cands: Vec<Detection> = raw.iter().map(|&(s, l, q)| det(s, s + l, q as f64)).collect();
        let exact = non_max_suppression(cands.clone(), overlap, Some(k));
        prop_assert_eq!(&exact, &greedy_oracle(&cands, overlap, k));
        if overlap == 0.0 {
            prop_assert!(pairwise_disjoint(&exact));
        }
        prop_assert!(exact.windows(2).all(|w| w[0].score >= w[1].score));
    }
}

#[test]
fn detections_are_disjoint_ranked_and_admitted() {
    let mut r = rng(5);
    let t = series_with_shift(&mut r, 200, 2, 80, 30, 2.0);
    let cfg = DetectorConfig { num_detections: 6, ..ukl(ModelKind::GaussianFull) };
    for proposals in [ProposalGenerator::None, ProposalGenerator::HotellingT2 { theta: 0.5 }] {
        let found = detect(&t, &DetectorConfig { proposals, ..cfg }).unwrap();
        assert!(!found.is_empty() && found.len() <= 6);
        assert!(pairwise_disjoint(&found));
        assert!(found.windows(2).all(|w| w[0].score >= w[1].score));
        assert!(found.iter().all(|d| cfg.constraints.admits(&d.block) && d.block.lies_within(t.extents())));
    }
}

#[test]
fn proposal_scan_scores_match_the_full_scan() {
    let mut r = rng(6);
    let t = series_with_shift(&mut r, 150, 1, 40, 25, 3.0);
    let cfg = DetectorConfig { embedding: EmbeddingConfig::time_delay(3, 1), ..ukl(ModelKind::GaussianFull) };
    let all = full_scan(&t, &cfg).unwrap();
    let det = prepare(&t, &cfg).unwrap();
    for d in det.run().unwrap() {
        let same = all.iter().find(|a| a.block == d.block).expect("proposal is an admitted block");
        assert_eq!(same.score, d.score);
    }
}

#[test]
fn white_noise_stays_below_the_corrected_chi2_threshold() {
    // The top score is a maximum over every candidate, so the per-interval level is
    // split across candidates (union bound).
    let d = 1;
    let cfg = DetectorConfig { num_detections: 1, ..ukl(ModelKind::GaussianIdentity) };
    let trials = 100;
    let (mut quiet, mut quiet_uncorrected) = (0, 0);
    let per_interval = chi2_score_threshold(d, CovarianceMode::Identity, 0.01).unwrap();
    let mut r = rng(7);
    for _ in 0..trials {
        let t = white_noise(&mut r, 250, d);
        let det = prepare(&t, &cfg).unwrap();
        let threshold = chi2_score_threshold(d, CovarianceMode::Identity, 0.01 / det.candidate_count() as f64).unwrap();
        let top = det.run().unwrap().first().map_or(0.0, |x| x.score);
        quiet += usize::from(top <= threshold);
        quiet_uncorrected += usize::from(top <= per_interval);
    }
    assert!(quiet as f64 >= 0.95 * trials as f64, "{quiet}/{trials}");
    // without the correction the maximum regularly crosses the per-interval level
    assert!(quiet_uncorrected < quiet);
}

#[test]
fn single_meanshift_is_found_first() {
    let mut r = rng(8);
    let truth = SubBlock::temporal(100, 150);
    let cfg = DetectorConfig { num_detections: 1, ..ukl(ModelKind::GaussianFull) };
    for _ in 0..10 {
        let t = series_with_shift(&mut r, 250, 1, 100, 50, 3.5);
        let top = detect(&t, &cfg).unwrap();
        assert_eq!(top.len(), 1);
        assert!(top[0].block.iou(&truth) >= 0.5, "{:?}", top[0]);
    }
}

#[test]
fn single_synthetic_anomaly_is_found_with_k_one() {
    let bench = BenchmarkConfig::default();
    let cfg = DetectorConfig { num_detections: 1, ..bench_config() };
    let mut found = 0;
    for i in 0..20 {
        let s = generate_series(99, TestCase::Meanshift, i, &bench).unwrap();
        let top = detect(&s.data, &cfg).unwrap();
        found += usize::from(top.first().is_some_and(|d| d.block.iou(&s.truth.ranges[0]) >= 0.5));
    }
    assert!(found >= 18, "{found}/20");
}

#[test]
fn meanshift5_recall_favours_unbiased_kl() {
    let bench = BenchmarkConfig::default();
    let recovered = |kind: Divergence| {
        let cfg = DetectorConfig {
            num_detections: 5,
            divergence: DivergenceSpec { kind, ..bench_config().divergence },
            ..bench_config()
        };
        (0..20)
            .map(|i| {
                let s = generate_series(99, TestCase::Meanshift5, i, &bench).unwrap();
                let found = detect(&s.data, &cfg).unwrap();
                s.truth.ranges.iter().filter(|g| found.iter().any(|d| d.block.iou(g) >= 0.5)).count()
            })
            .sum::<usize>()
    };
    let (u, k) = (recovered(Divergence::UnbiasedKl), recovered(Divergence::Kl));
    assert!(u >= 60, "{u}/100");
    assert!(u > k, "{u} vs {k}");
}

#[test]
fn detection_is_deterministic() {
    let s = generate_series(1, TestCase::Mixed, 0, &BenchmarkConfig::default()).unwrap();
    let a = detect(&s.data, &bench_config()).unwrap();
    let b = detect(&s.data, &bench_config()).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().zip(&b).all(|(x, y)| x.score.to_bits() == y.score.to_bits()));
}

/// One-sample Kolmogorov–Smirnov statistic against `cdf`.
fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn unbiased_kl_on_white_noise_follows_chi2() {
    let (n, m, samples) = (2000, 20, 500);
    // asymptotic critical value of the KS statistic at significance 0.01
    let critical = 1.628 / (samples as f64).sqrt();
    for d in [1, 2] {
        let cfg = DetectorConfig {
            constraints: SizeConstraints::temporal(m, m).unwrap(),
            proposals: ProposalGenerator::None,
            ..ukl(ModelKind::GaussianIdentity)
        };
        let mut r = rng(40 + d as u64);
        let scores: Vec<f64> = (0..samples)
            .map(|_| {
                let t = white_noise(&mut r, n, d);
                let det = prepare(&t, &cfg).unwrap();
                let s = r.random_range(0..n - m);
                det.score(&SubBlock::temporal(s, s + m)).unwrap().unwrap()
            })
            .collect();
        let chi2 = ChiSquared::new(d as f64).unwrap();
        let ks = ks_statistic(scores, |x| chi2.cdf(x));
        assert!(ks < critical, "d={d}: KS {ks} ≥ {critical}");
    }
}

