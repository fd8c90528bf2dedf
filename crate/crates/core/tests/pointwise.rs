mod common;

use common::*;
use mdi_core::pointwise::{detections_to_pointwise, hotellings_t2, pointwise_to_detections, quantile_thresholds, PointwiseScores};
use mdi_core::preprocess::normalize;
use mdi_core::density::identity;
use mdi_core::linalg::mahalanobis_sq;
use mdi_core::{DataTensor, Detection, Error, SubBlock};
use proptest::prelude::*;

#[test]
fn t2_at_mean_is_zero() {
    let t = DataTensor::from_series(3, 1, vec![-1.0, 0.0, 1.0]).unwrap();
    assert!(hotellings_t2(&t).unwrap().values[1].abs() < 1e-15);
}

#[test]
fn t2_identity_covariance_hand_value() {
    assert_eq!(mahalanobis_sq(&identity(2), 2, &[3.0, 4.0], &mut [0.0; 2]), 25.0);
    // the corners of a square have mean 0 and covariance I, so each scores |x|² = 2
    let pts = [1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0, 1.0];
    let t = DataTensor::from_series(4, 2, pts.to_vec()).unwrap();
    let s = hotellings_t2(&t).unwrap();
    assert!(s.values.iter().all(|v| (v - 2.0).abs() < 1e-5));
    let scaled = [3.0, 4.0, -3.0, -4.0, 3.0, -4.0, -3.0, 4.0];
    let t = DataTensor::from_series(4, 2, scaled.to_vec()).unwrap();
    // stretching the square leaves the scores unchanged
    assert!(hotellings_t2(&t).unwrap().values.iter().all(|v| (v - 2.0).abs() < 1e-5));
}

#[test]
fn t2_needs_enough_samples() {
    let t = DataTensor::from_series(2, 2, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
    assert!(matches!(hotellings_t2(&t), Err(Error::EmptyData(_))));
}

#[test]
fn t2_affine_invariant() {
    let mut r = rng(40);
    let t = white_noise(&mut r, 200, 3);
    let a = random_invertible(&mut r, 3);
    let u = affine(&t, &a, &[1.0, -2.0, 0.5]);
    let (s, su) = (hotellings_t2(&t).unwrap(), hotellings_t2(&u).unwrap());
    // exact up to the trace ridge, which is not affine covariant
    for (x, y) in s.values.iter().zip(&su.values) {
        assert!((x - y).abs() < 1e-4 * x.max(1.0), "{x} {y}");
    }
}

#[test]
fn t2_of_standardized_series_is_squared_z() {
    let mut r = rng(41);
    let t = white_noise(&mut r, 100, 1);
    let (z, _) = normalize(&t).unwrap();
    let s = hotellings_t2(&z).unwrap();
    for (v, x) in s.values.iter().zip(z.values()) {
        // the ridge adds a 1e-6 relative bias to the unit variance
        assert!((v - x * x).abs() < 1e-10 + 1.1e-6 * x * x, "{v} {}", x * x);
    }
}

fn series(v: &[f64]) -> PointwiseScores {
    PointwiseScores { extents: [v.len(), 1, 1, 1], values: v.to_vec() }
}

#[test]
fn painting_detections() {
    let ext = [8, 1, 1, 1];
    assert!(detections_to_pointwise(&[], ext, 0.0).unwrap().values.iter().all(|&v| v == 0.0));
    let all = detections_to_pointwise(&[Detection { block: SubBlock::full(ext), score: 3.0 }], ext, 0.0).unwrap();
    assert!(all.values.iter().all(|&v| v == 3.0));
    let two = [Detection { block: SubBlock::temporal(1, 3), score: 2.0 }, Detection { block: SubBlock::temporal(5, 8), score: 1.0 }];
    let p = detections_to_pointwise(&two, ext, -1.0).unwrap();
    assert_eq!(p.values, vec![-1.0, 2.0, 2.0, -1.0, -1.0, 1.0, 1.0, 1.0]);
    let overlapping = [two[0], Detection { block: SubBlock::temporal(2, 4), score: 1.0 }];
    assert!(matches!(detections_to_pointwise(&overlapping, ext, 0.0), Err(Error::Contract(_))));
}

#[test]
fn grouping_examples() {
    assert!(pointwise_to_detections(&series(&[0.0; 6]), &[1.0]).unwrap().is_empty());
    let d = pointwise_to_detections(&series(&[0.0, 0.0, 5.0, 5.0, 0.0]), &[1.0]).unwrap();
    assert_eq!(d, vec![Detection { block: SubBlock::temporal(2, 4), score: 5.0 }]);
    // threshold 0.5 gives the whole run (mean 2), threshold 2 the core (mean 3)
    let d = pointwise_to_detections(&series(&[1.0, 3.0, 3.0, 1.0]), &[0.5, 2.0]).unwrap();
    assert_eq!(d, vec![Detection { block: SubBlock::temporal(1, 3), score: 3.0 }]);
}

#[test]
fn quantile_grid() {
    let s = series(&(0..=100).map(f64::from).collect::<Vec<_>>());
    let q = quantile_thresholds(&s, 4);
    assert_eq!(q, vec![20.0, 40.0, 60.0, 80.0]);
    assert_eq!(quantile_thresholds(&series(&[1.0; 10]), 5), vec![1.0]);
}

proptest! {
    #[test]
    fn prop_grouping_recovers_support(levels in prop::collection::vec(prop_oneof![Just(0.0), 1.0f64..5.0], 1..40)) {
        // piecewise-constant field with distinct run values
        let mut vals = Vec::new();
        for (i, v) in levels.iter().enumerate() {
            let len = 1 + i % 3;
            vals.extend(std::iter::repeat_n(if *v == 0.0 { 0.0 } else { v + i as f64 * 1e-3 }, len));
        }
        let field = series(&vals);
        let dets = pointwise_to_detections(&field, &[0.5]).unwrap();
        let painted = detections_to_pointwise(&dets, field.extents, 0.0).unwrap();
        for (p, v) in painted.values.iter().zip(&vals) {
            prop_assert_eq!(*p > 0.0, *v > 0.5);
        }
    }
}

#[test]
fn spatial_scores_group_per_location() {
    let mut s = PointwiseScores::zeros([5, 2, 1, 1]);
    for t in [1, 2] {
        let i = s.index([t, 1, 0, 0]);
        s.values[i] = 4.0;
    }
    let d = pointwise_to_detections(&s, &[1.0]).unwrap();
    assert_eq!(d, vec![Detection { block: SubBlock::new([1, 1, 0, 0], [3, 2, 1, 1]).unwrap(), score: 4.0 }]);
}
