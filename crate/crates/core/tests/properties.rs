use advar::channel::wire::decode_frame;
use advar::channel::{deserialize, serialize};
use advar::eval::{accuracy, asr, SampleRecord};
use advar::feasibility::{kmeans, silhouette_score, FeatureMatrix};
use advar::vae::{lerp, pairwise_distance, slerp, top_k_indices, DistanceMode, LatentCode};
use advar::{ActivationTensor, Shape};
use ndarray::Array2;
use proptest::prelude::*;

fn tensor() -> impl Strategy<Value = ActivationTensor<f32>> {
    (1usize..6, 1usize..6, 1usize..9).prop_flat_map(|(h, w, c)| {
        prop::collection::vec(prop::num::f32::NORMAL | prop::num::f32::ZERO | prop::num::f32::SUBNORMAL, h * w * c)
            .prop_map(move |v| ActivationTensor::new(Shape::hwc(h, w, c), v).unwrap())
    })
}

fn vec_pair(max_dim: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..=max_dim).prop_flat_map(|d| {
        (prop::collection::vec(-100.0f64..100.0, d), prop::collection::vec(-100.0f64..100.0, d))
    })
}

fn code(d: usize) -> impl Strategy<Value = LatentCode<f64>> {
    (prop::collection::vec(-3.0f64..3.0, d), prop::collection::vec(-3.0f64..2.0, d))
        .prop_map(|(mu, logvar)| LatentCode::from_mean(mu, logvar))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

proptest! {
    #[test]
    fn wire_round_trip_is_bitwise(h in tensor()) {
        let bytes = serialize(&h).unwrap();
        let back = deserialize(&bytes).unwrap();
        prop_assert_eq!(back.shape(), h.shape());
        prop_assert!(back.values().iter().zip(h.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
        let (_, used) = decode_frame(&bytes).unwrap();
        prop_assert_eq!(used, bytes.len());
    }

    #[test]
    fn truncated_frames_are_rejected(h in tensor(), cut in 0.0f64..1.0) {
        let bytes = serialize(&h).unwrap();
        let n = ((bytes.len() - 1) as f64 * cut) as usize;
        prop_assert!(deserialize(&bytes[..n]).is_err());
    }

    #[test]
    fn lerp_is_affine((a, b) in vec_pair(32), t in 0.0f64..=1.0) {
        let l = lerp(&a, &b, t).unwrap();
        for i in 0..a.len() {
            prop_assert!((l[i] - (a[i] + t * (b[i] - a[i]))).abs() <= 1e-9);
        }
        prop_assert_eq!(lerp(&a, &b, 0.0).unwrap(), a.clone());
        prop_assert_eq!(lerp(&a, &b, 1.0).unwrap(), b);
    }

    #[test]
    fn slerp_preserves_equal_norms((a, b) in vec_pair(32), t in 0.0f64..=1.0) {
        let (na, nb) = (norm(&a), norm(&b));
        prop_assume!(a.len() >= 2 && na > 1e-6 && nb > 1e-6);
        let b: Vec<f64> = b.iter().map(|x| x * na / nb).collect();
        let cos = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / (na * na);
        prop_assume!(cos > -1.0 + 1e-9);
        let s = slerp(&a, &b, t).unwrap();
        prop_assert!((norm(&s) - na).abs() <= 1e-6 * na.max(1.0));
        prop_assert_eq!(slerp(&a, &b, 0.0).unwrap(), a.clone());
        prop_assert_eq!(slerp(&a, &b, 1.0).unwrap(), b);
    }

    #[test]
    fn slerp_of_parallel_vectors_is_lerp(a in prop::collection::vec(-10.0f64..10.0, 1..16), c in 0.1f64..10.0, t in 0.0f64..=1.0) {
        prop_assume!(norm(&a) > 1e-6);
        let b: Vec<f64> = a.iter().map(|x| c * x).collect();
        prop_assert_eq!(slerp(&a, &b, t).unwrap(), lerp(&a, &b, t).unwrap());
    }

    #[test]
    fn top_k_matches_brute_force(
        origin in code(4),
        pool in prop::collection::vec(code(4), 1..100),
        k_frac in 0.0f64..1.0,
        prior_gap in any::<bool>(),
    ) {
        let mode = if prior_gap { DistanceMode::KlToPriorGap } else { DistanceMode::SymmetricGaussianKl };
        let k = 1 + ((pool.len() - 1) as f64 * k_frac) as usize;
        let got = top_k_indices(&origin, &pool, k, mode).unwrap();
        let d: Vec<f64> = pool.iter().map(|c| pairwise_distance(&origin, c, mode).unwrap()).collect();
        let mut sorted = d.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        prop_assert_eq!(got.len(), k);
        let mut seen = got.clone();
        seen.sort_unstable();
        seen.dedup();
        prop_assert_eq!(seen.len(), k);
        for (rank, &i) in got.iter().enumerate() {
            prop_assert_eq!(d[i], sorted[rank]);
        }
    }

    #[test]
    fn symmetric_kl_is_symmetric_and_nonnegative(a in code(6), b in code(6)) {
        let ab = pairwise_distance(&a, &b, DistanceMode::SymmetricGaussianKl).unwrap();
        let ba = pairwise_distance(&b, &a, DistanceMode::SymmetricGaussianKl).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-12 * ab.max(1.0));
    }

    #[test]
    fn kmeans_report_invariants(
        rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 6..40),
        k in 2usize..5,
        seed in any::<u64>(),
    ) {
        let n = rows.len();
        let x = Array2::from_shape_fn((n, 3), |(i, j)| rows[i][j]);
        let f = FeatureMatrix::new(x, None).unwrap();
        let r = kmeans(&f, k, seed).unwrap();
        prop_assert_eq!(r.assignments.len(), n);
        prop_assert!(r.assignments.iter().all(|&a| a < k));
        prop_assert!((-1.0..=1.0).contains(&r.silhouette));
        prop_assert_eq!(&r, &kmeans(&f, k, seed).unwrap());
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let s = silhouette_score(&f, &labels).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
    }

    #[test]
    fn asr_is_the_clamped_relative_accuracy_drop(correct in 1usize..100, attacked in 0usize..100) {
        let n = 100;
        let record = |ok: bool| SampleRecord { true_label: 0, predicted: if ok { 0 } else { 1 }, confidence: 0.5 };
        let clean: Vec<_> = (0..n).map(|i| record(i < correct)).collect();
        let adv: Vec<_> = (0..n).map(|i| record(i < attacked)).collect();
        let (b, a) = (accuracy(&clean).unwrap(), accuracy(&adv).unwrap());
        let r = asr(b, a).unwrap();
        let drop = (100.0 * (correct as f64 - attacked as f64) / correct as f64).max(0.0);
        prop_assert!((r - drop).abs() < 1e-9);
    }
}
