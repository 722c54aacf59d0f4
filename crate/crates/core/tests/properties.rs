use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vqid_core::exponents::inner_divergence_min;
use vqid_core::harness::{kendall_tau_b, wilson_interval, Z_95};
use vqid_core::types::{sample_from_type_class, ConditionalKernel, EmpiricalType, JointDistribution};

fn simplex(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, k).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

proptest! {
    #[test]
    fn wilson_brackets_the_estimate(trials in 1u64..5000, frac in 0.0f64..=1.0) {
        let errors = (frac * trials as f64).floor() as u64;
        let (lo, hi) = wilson_interval(errors, trials, Z_95);
        let p = errors as f64 / trials as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
    }

    #[test]
    fn kendall_is_bounded_and_symmetric(a in prop::collection::vec(-5.0f64..5.0, 2..30), seed in any::<u64>()) {
        let b: Vec<f64> = a.iter().enumerate().map(|(i, x)| x * ((seed >> (i % 64)) & 1) as f64 - i as f64 * 0.01).collect();
        if let (Some(t1), Some(t2)) = (kendall_tau_b(&a, &b, 1e-12), kendall_tau_b(&b, &a, 1e-12)) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&t1));
            prop_assert!((t1 - t2).abs() < 1e-12);
        }
        if let Some(t) = kendall_tau_b(&a, &a, 1e-12) {
            prop_assert!((t - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn type_class_samples_keep_their_type(counts in prop::collection::vec(0u32..6, 2..5), seed in any::<u64>()) {
        prop_assume!(counts.iter().sum::<u32>() > 0);
        let t = EmpiricalType::new(counts.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let word = sample_from_type_class(&t, &mut rng);
        prop_assert_eq!(EmpiricalType::of_sequence(&word, counts.len()).unwrap(), t);
    }

    #[test]
    fn inner_minimum_is_nonnegative_and_zero_at_induced_kernel(j in simplex(9), w0 in simplex(3), w1 in simplex(3), w2 in simplex(3), z in simplex(3)) {
        let q_xy = JointDistribution::from_flat(3, 3, j).unwrap();
        let w = ConditionalKernel::new(vec![w0, w1, w2]).unwrap();
        let q_zy = ConditionalKernel::new(vec![z.clone(), z.iter().rev().copied().collect(), z]).unwrap();
        let s = inner_divergence_min(&q_xy, &q_zy, &w, 1e-10).unwrap();
        prop_assert!(s.value >= -1e-12);
        let qx_y = q_xy.first_given_second();
        let induced: Vec<f64> = (0..9).map(|i| (0..3).map(|x| qx_y[(i / 3) * 3 + x] * w.get(x, i % 3)).sum()).collect();
        let induced = ConditionalKernel::from_flat(3, 3, induced).unwrap();
        prop_assert!(inner_divergence_min(&q_xy, &induced, &w, 1e-10).unwrap().value.abs() < 1e-8);
    }
}
