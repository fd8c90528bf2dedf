mod common;

use common::*;
use mdi_core::synth::{
    amplitude_window, build_benchmark, generate_series, sample_gp, series_seed, BenchmarkConfig, GpConfig, GpSampler,
    TestCase,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn kernel(i: usize, j: usize, n: usize, l2: f64, noise: f64) -> f64 {
    let d = (i as f64 - j as f64) / n as f64;
    let k = (-d * d / (2.0 * l2)).exp() / (2.0 * std::f64::consts::PI * l2).sqrt();
    if i == j {
        k + noise
    } else {
        k
    }
}

/// The GP draw a series starts from, reproduced from its seed.
fn base_draw(case: TestCase, index: usize, cfg: &BenchmarkConfig) -> Vec<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(series_seed(3, case, index));
    GpSampler::stationary(cfg.series_len, cfg.length_scale_sq, cfg.noise_var).unwrap().sample(&mut r)
}

fn column(values: &[f64], dims: usize, c: usize) -> Vec<f64> {
    values.iter().skip(c).step_by(dims).copied().collect()
}

fn mean_abs_diff(x: &[f64]) -> f64 {
    x.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (x.len() - 1) as f64
}

#[test]
fn gp_covariance_matches_the_kernel() {
    let (n, l2, noise) = (20, 0.01, 0.001);
    let sampler = GpSampler::stationary(n, l2, noise).unwrap();
    let mut r = rng(1);
    let draws: Vec<Vec<f64>> = (0..4000).map(|_| sampler.sample(&mut r)).collect();
    let m = draws.len() as f64;
    for i in (0..n).step_by(3) {
        for j in (i..n).step_by(2) {
            let emp = draws.iter().map(|x| x[i] * x[j]).sum::<f64>() / m;
            let k = kernel(i, j, n, l2, noise);
            // standard error of a product moment is about sqrt(K_ii K_jj + K_ij²) / sqrt(m)
            let se = ((kernel(i, i, n, l2, noise) * kernel(j, j, n, l2, noise) + k * k) / m).sqrt();
            assert!((emp - k).abs() < 4.5 * se, "K[{i}][{j}] = {k}, empirical {emp}");
        }
    }
}

#[test]
fn huge_length_scale_leaves_only_noise_in_increments() {
    let n = 200;
    let mut r = rng(2);
    let incr_var = |l2: f64, r: &mut ChaCha8Rng| {
        let x = GpSampler::stationary(n, l2, 0.001).unwrap().sample(r);
        let d: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let mu = d.iter().sum::<f64>() / d.len() as f64;
        d.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d.len() as f64
    };
    let smooth = incr_var(1e4, &mut r);
    assert!((smooth / 0.002 - 1.0).abs() < 0.3, "{smooth}");
    assert!(smooth < incr_var(0.01, &mut r));
}

#[test]
fn gp_draws_are_seeded() {
    let a = sample_gp(&GpConfig::new(50, 2, 9)).unwrap();
    assert_eq!(a, sample_gp(&GpConfig::new(50, 2, 9)).unwrap());
    assert_ne!(a, sample_gp(&GpConfig::new(50, 2, 10)).unwrap());
}

#[test]
fn meanshift_adds_a_constant_inside_the_interval() {
    let cfg = BenchmarkConfig::default();
    for (case, lo, hi) in [(TestCase::Meanshift, 3.0, 4.0), (TestCase::MeanshiftHard, 0.5, 1.0)] {
        for i in 0..5 {
            let s = generate_series(3, case, i, &cfg).unwrap();
            let base = base_draw(case, i, &cfg);
            let r = s.truth.ranges[0];
            let diff: Vec<f64> = s.data.values().iter().zip(&base).map(|(x, b)| x - b).collect();
            let delta = diff[r.start[0]];
            assert!((lo..=hi).contains(&delta.abs()), "{case}: shift {delta}");
            for (t, d) in diff.iter().enumerate() {
                let expect = if r.contains([t, 0, 0, 0]) { delta } else { 0.0 };
                assert!((d - expect).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn amplitude_change_scales_by_a_bounded_window() {
    let cfg = BenchmarkConfig::default();
    let s = generate_series(3, TestCase::AmplitudeChange, 0, &cfg).unwrap();
    let base = base_draw(TestCase::AmplitudeChange, 0, &cfg);
    let r = s.truth.ranges[0];
    for (t, (x, b)) in s.data.values().iter().zip(&base).enumerate() {
        if r.contains([t, 0, 0, 0]) {
            assert!(x.abs() <= 3.0 * b.abs() + 1e-12);
        } else {
            assert_eq!(x, b);
        }
    }
    let centre = 100.0;
    for t in 0..200 {
        let w = amplitude_window(t as f64, centre, 10.0);
        assert!((0.0..=2.0).contains(&w));
    }
    assert_eq!(amplitude_window(centre, centre, 10.0), 2.0);
}

#[test]
fn mixed_leaves_the_outside_untouched() {
    let cfg = BenchmarkConfig::default();
    for i in 0..5 {
        let s = generate_series(3, TestCase::Mixed, i, &cfg).unwrap();
        let base = base_draw(TestCase::Mixed, i, &cfg);
        let r = s.truth.ranges[0];
        let mut changed = false;
        for (t, (x, b)) in s.data.values().iter().zip(&base).enumerate() {
            if r.contains([t, 0, 0, 0]) {
                changed |= x != b;
            } else {
                assert_eq!(x, b);
            }
        }
        assert!(changed);
    }
}

#[test]
fn frequency_change_is_rougher_inside() {
    let cfg = BenchmarkConfig::default();
    for case in [TestCase::FrequencyChange, TestCase::FrequencyChangeMultvar] {
        let trials = 30;
        let mut rougher = 0;
        for i in 0..trials {
            let s = generate_series(5, case, i, &cfg).unwrap();
            let r = s.truth.ranges[0];
            let d = s.data.dims();
            rougher += usize::from((0..d).any(|c| {
                let x = column(s.data.values(), d, c);
                let (a, b) = (r.start[0], r.end[0]);
                let outside: Vec<f64> = x[..a].iter().chain(&x[b..]).copied().collect();
                mean_abs_diff(&x[a..b]) > mean_abs_diff(&outside)
            }));
        }
        assert!(2 * rougher > trials, "{case}: {rougher}/{trials}");
    }
}

#[test]
fn multivariate_cases_touch_a_single_attribute() {
    let cfg = BenchmarkConfig::default();
    let d = cfg.multivariate_dims;
    for i in 0..5 {
        let s = generate_series(3, TestCase::MeanshiftMultvar, i, &cfg).unwrap();
        assert_eq!(s.data.dims(), d);
        let mut r = ChaCha8Rng::seed_from_u64(series_seed(3, TestCase::MeanshiftMultvar, i));
        let base = GpSampler::stationary(cfg.series_len, cfg.length_scale_sq, cfg.noise_var).unwrap().sample_dims(d, &mut r);
        let touched: Vec<usize> = (0..d)
            .filter(|&c| column(s.data.values(), d, c) != column(&base, d, c))
            .collect();
        assert_eq!(touched.len(), 1);
    }
}

#[test]
fn benchmark_shape_and_ground_truth() {
    let cfg = BenchmarkConfig::default();
    let ds = build_benchmark(2016, &cfg).unwrap();
    assert_eq!(ds.num_cases(), 11);
    assert_eq!(ds.series.len(), 1100);
    assert_eq!(ds.num_anomalies(), 1900);
    assert_eq!(cfg.length_bounds(), (13, 50));
    for s in &ds.series {
        assert_eq!(s.data.extents()[0], 250);
        assert_eq!(s.truth.ranges.len(), s.truth.case.anomalies_per_series());
        for (i, r) in s.truth.ranges.iter().enumerate() {
            assert!((13..=50).contains(&r.len(0)));
            assert!(r.lies_within(s.data.extents()));
            for o in &s.truth.ranges[i + 1..] {
                assert!(!r.overlaps(o));
            }
        }
    }
    let again = build_benchmark(2016, &cfg).unwrap();
    assert!(ds == again);
    let other = build_benchmark(2017, &BenchmarkConfig { series_per_case: 2, ..cfg }).unwrap();
    assert_ne!(other.series[0].data, ds.series[0].data);
}

#[test]
fn series_match_their_position_in_the_dataset() {
    let cfg = BenchmarkConfig { series_per_case: 3, ..BenchmarkConfig::default() };
    let ds = build_benchmark(8, &cfg).unwrap();
    for (k, case) in TestCase::ALL.into_iter().enumerate() {
        for i in 0..3 {
            assert_eq!(ds.series[k * 3 + i], generate_series(8, case, i, &cfg).unwrap());
        }
    }
}
