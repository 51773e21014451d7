use proptest::prelude::*;

use wbt_core::branching::{grow, r_process, w_process, BranchingVectorSampler, GrowOptions, Mode, WeightRule};
use wbt_core::convergence::power_bounds;
use wbt_core::coupling::{coupling_constants, wbp_bound, CoupledSampler, JointRow};
use wbt_core::dist::Dist;
use wbt_core::graphs::d1_integer;
use wbt_core::measures::{d1_discrete, d1_empirical_l1, d1_sorted_samples, DiscreteMeasure, EmpiricalMeasure};
use wbt_core::stream::StreamKey;

fn cloud(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0f64, n)
}

fn side() -> impl Strategy<Value = (f64, usize, Vec<f64>)> {
    (-2.0..2.0f64, 0usize..4).prop_flat_map(|(q, n)| (Just(q), Just(n), prop::collection::vec(-0.8..0.8f64, n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn d1_is_a_metric_on_samples((x, y, z) in (1usize..30).prop_flat_map(|n| (cloud(n), cloud(n), cloud(n)))) {
        let d = |a: &[f64], b: &[f64]| d1_sorted_samples(a, b).unwrap();
        prop_assert!(d(&x, &y) >= 0.0);
        prop_assert_eq!(d(&x, &x), 0.0);
        prop_assert!((d(&x, &y) - d(&y, &x)).abs() <= 1e-12);
        prop_assert!(d(&x, &z) <= d(&x, &y) + d(&y, &z) + 1e-12);
    }

    #[test]
    fn assignment_is_symmetric_and_bounded_by_identity_matching(
        (x, y) in (1usize..8, 1usize..4).prop_flat_map(|(n, dim)| {
            let rows = prop::collection::vec(prop::collection::vec(-3.0..3.0f64, dim), n);
            (rows.clone(), rows)
        })
    ) {
        let (ex, ey) = (EmpiricalMeasure::from_rows(&x).unwrap(), EmpiricalMeasure::from_rows(&y).unwrap());
        let d = d1_empirical_l1(&ex, &ey, 256).unwrap();
        let identity: f64 = x.iter().zip(&y).map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u - v).abs()).sum::<f64>()).sum::<f64>() / x.len() as f64;
        prop_assert!(d <= identity + 1e-12);
        prop_assert!((d - d1_empirical_l1(&ey, &ex, 256).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn integer_d1_is_the_cdf_sum(a in prop::collection::vec(0u8..12, 1..20), b in prop::collection::vec(0u8..12, 1..20)) {
        let m = |v: &[u8]| DiscreteMeasure::empirical(&v.iter().map(|&k| f64::from(k)).collect::<Vec<_>>()).unwrap();
        let (mu, nu) = (m(&a), m(&b));
        let cdf_sum: f64 = (0..12).map(|k| (mu.cdf(f64::from(k)) - nu.cdf(f64::from(k))).abs()).sum();
        prop_assert!((d1_integer(&mu, &nu).unwrap() - cdf_sum).abs() <= 1e-12);
        prop_assert!((d1_discrete(&mu, &nu) - cdf_sum).abs() <= 1e-12);
    }

    #[test]
    fn power_bounds_hold(x in 1e-6..10.0f64, j in 1usize..60) {
        let pb = power_bounds(x, j);
        prop_assert!(pb.holds(), "{:?}", pb);
    }

    #[test]
    fn r_accumulates_w_and_streams_reproduce(seed in any::<u64>(), lambda in 0.5..2.0f64) {
        let s = BranchingVectorSampler::composed(
            Mode::Wbt,
            Dist::uniform(0.5, 1.5).unwrap(),
            Dist::poisson_truncated(lambda, 6).unwrap(),
            WeightRule::Iid { dist: Dist::uniform(0.1, 0.6).unwrap() },
        )
        .unwrap();
        let key = StreamKey::new(seed);
        let t = grow(&s, None, 5, GrowOptions::default(), key).unwrap();
        let mut partial = 0.0;
        for k in 0..=5 {
            partial += w_process(&t, k).unwrap();
            prop_assert!((r_process(&t, k).unwrap() - partial).abs() <= 1e-9 * (1.0 + partial.abs()));
        }
        prop_assert_eq!(&t, &grow(&s, None, 5, GrowOptions::default(), key).unwrap());
    }

    #[test]
    fn wbp_bound_dominates_deterministic_gaps(a in side(), b in side()) {
        let cs = CoupledSampler::joint_table(Mode::Wbp, vec![JointRow { prob: 1.0, a: a.clone(), b: b.clone() }]).unwrap();
        let cc = coupling_constants(&cs, 2, StreamKey::new(0)).unwrap();
        prop_assert!(cc.exact);
        prop_assert!((cc.rho_hat - cc.rho).abs() <= cc.e.mean + 1e-12);
        // every node of a deterministic WBP tree copies the single row
        let w = |(q, _, c): &(f64, usize, Vec<f64>), j: i32| q * c.iter().sum::<f64>().powi(j);
        for j in 1..=8 {
            let gap = (w(&b, j) - w(&a, j)).abs();
            prop_assert!(gap <= wbp_bound(&cc, j as usize) * (1.0 + 1e-12) + 1e-12, "j = {}: {} > {}", j, gap, wbp_bound(&cc, j as usize));
        }
    }
}
