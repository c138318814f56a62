use flan::metrics::{kendall_tau, mid_ranks, pearson, spearman_rho, RankReport};
use proptest::prelude::*;

/// Values on a coarse grid so ties are common.
fn tied(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0i32..6).prop_map(|k| k as f64 * 0.5), len)
}

fn paired() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..40).prop_flat_map(|n| (tied(n..n + 1), prop::collection::vec(-5.0f64..5.0, n)))
}

proptest! {
    #[test]
    fn tau_is_bounded_and_symmetric((x, y) in paired()) {
        if let Ok(t) = kendall_tau(&x, &y) {
            prop_assert!((-1.0..=1.0).contains(&t));
            prop_assert!((t - kendall_tau(&y, &x).unwrap()).abs() < 1e-12);
            let neg: Vec<f64> = y.iter().map(|v| -v).collect();
            prop_assert!((t + kendall_tau(&x, &neg).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn correlations_ignore_monotone_maps((x, y) in paired()) {
        let warped: Vec<f64> = y.iter().map(|v| v.powi(3) + 2.0 * v).collect();
        if let (Ok(a), Ok(b)) = (kendall_tau(&x, &y), kendall_tau(&x, &warped)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        if let (Ok(a), Ok(b)) = (spearman_rho(&x, &y), spearman_rho(&x, &warped)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn self_correlation_is_one(x in tied(2..40)) {
        if let Ok(t) = kendall_tau(&x, &x) {
            prop_assert!((t - 1.0).abs() < 1e-12);
            prop_assert!((spearman_rho(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        } else {
            // only constant input is undefined
            prop_assert!(x.iter().all(|v| *v == x[0]));
        }
    }

    #[test]
    fn mid_ranks_sum_like_plain_ranks(x in tied(1..50)) {
        let r = mid_ranks(&x);
        let n = x.len() as f64;
        prop_assert!((r.iter().sum::<f64>() - n * (n + 1.0) / 2.0).abs() < 1e-9);
        for i in 0..x.len() {
            for j in 0..x.len() {
                prop_assert_eq!(x[i] < x[j], r[i] < r[j]);
            }
        }
    }

    #[test]
    fn spearman_is_pearson_of_mid_ranks((x, y) in paired()) {
        if let Ok(rho) = spearman_rho(&x, &y) {
            let p = pearson(&mid_ranks(&x), &mid_ranks(&y)).unwrap();
            prop_assert!((rho - p).abs() < 1e-12);
        }
    }

    #[test]
    fn report_agrees_with_functions((x, y) in paired()) {
        if let Ok(r) = RankReport::new(&x, &y) {
            prop_assert_eq!(r.kendall_tau, kendall_tau(&x, &y).unwrap());
            prop_assert_eq!(r.spearman_rho, spearman_rho(&x, &y).unwrap());
        }
    }
}

#[test]
fn too_short_inputs_are_rejected() {
    assert!(kendall_tau(&[1.0], &[2.0]).is_err());
    assert!(RankReport::new(&[1.0], &[2.0]).is_err());
    assert!(kendall_tau(&[1.0, 2.0], &[2.0]).is_err());
}
