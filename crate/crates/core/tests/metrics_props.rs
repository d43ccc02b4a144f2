use proptest::prelude::*;
use stbayes::metrics::{pmcc, point_errors};

fn paired() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..30).prop_flat_map(|n| {
        (
            prop::collection::vec(-100.0f64..100.0, n),
            prop::collection::vec(-100.0f64..100.0, n),
        )
    })
}

proptest! {
    #[test]
    fn metrics_are_permutation_invariant((pred, obs) in paired(), rot in 0usize..30) {
        let k = rot % pred.len();
        let mut p2 = pred.clone();
        let mut o2 = obs.clone();
        p2.rotate_left(k);
        o2.rotate_left(k);
        let a = point_errors(&pred, &obs).unwrap();
        let b = point_errors(&p2, &o2).unwrap();
        prop_assert!((a.mse - b.mse).abs() <= 1e-9 * a.mse.max(1.0));
        prop_assert!((a.mae - b.mae).abs() <= 1e-9 * a.mae.max(1.0));
        prop_assert_eq!(a.mape_excluded, b.mape_excluded);
        match (a.rmsep, b.rmsep) {
            (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-9 * x.max(1.0)),
            (x, y) => prop_assert_eq!(x, y),
        }
    }

    #[test]
    fn zero_error_iff_equal((pred, obs) in paired()) {
        let e = point_errors(&pred, &obs).unwrap();
        let equal = pred == obs;
        prop_assert_eq!(e.mse == 0.0, equal);
        prop_assert_eq!(e.mae == 0.0, equal);
        prop_assert!(e.mse >= 0.0 && e.mae >= 0.0);
        prop_assert!(e.mape.is_none_or(|m| m >= 0.0));
        let z = point_errors(&obs, &obs).unwrap();
        prop_assert_eq!((z.mse, z.mae), (0.0, 0.0));
    }

    #[test]
    fn pmcc_grows_with_variance(
        (mean, obs) in paired(),
        var in prop::collection::vec(0.0f64..10.0, 30),
        idx in 0usize..30,
        bump in 0.0f64..5.0,
    ) {
        let var = &var[..mean.len()];
        let base = pmcc(&mean, var, &obs).unwrap();
        let mut v2 = var.to_vec();
        v2[idx % mean.len()] += bump;
        prop_assert!(pmcc(&mean, &v2, &obs).unwrap() >= base);
    }
}
