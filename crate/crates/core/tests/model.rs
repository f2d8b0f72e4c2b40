mod common;

use ep_lab::gfc::LogGfcTable;
use ep_lab::model::*;

#[test]
fn constants_closed_forms() {
    let ln2 = 2f64.ln();
    assert!((m_const(0.0, 1.0).unwrap() - ln2).abs() < 1e-15);
    assert!((s2_const(0.0, 1.0).unwrap() - (ln2 - 0.5)).abs() < 1e-15);
    let r2 = 2f64.sqrt();
    assert!((m_const(0.5, 1.0).unwrap() - 2.0 * (r2 - 1.0)).abs() < 1e-15);
    assert!((s2_const(0.5, 1.0).unwrap() - 2.0 * (1.5 - r2)).abs() < 1e-15);
}

#[test]
fn constants_continuous_at_alpha_zero() {
    let want = 2.0 * 1.5f64.ln();
    assert!((m_const(0.0, 2.0).unwrap() - want).abs() < 1e-15);
    assert!((m_const(1e-10, 2.0).unwrap() - want).abs() < 1e-9);
    let s0 = s2_const(0.0, 2.0).unwrap();
    assert!((s2_const(1e-10, 2.0).unwrap() - s0).abs() < 1e-9);
}

#[test]
fn invalid_params_rejected() {
    assert!(ModelParams::new(1.0, 1.0, 5).is_err());
    assert!(ModelParams::new(-0.1, 1.0, 5).is_err());
    assert!(ModelParams::new(0.5, 0.0, 5).is_err());
    assert!(ModelParams::new(0.5, 1.0, 0).is_err());
    assert!(m_const(0.5, -1.0).is_err());
}

#[test]
fn two_items() {
    for &alpha in &[0.0, 0.2, 0.5, 0.9] {
        let p = ModelParams::new(alpha, 1.0, 2).unwrap();
        let theta = p.theta();
        let d = pmf_kn(&p, None).unwrap();
        assert!((d.prob(1) - (1.0 - alpha) / (theta + 1.0)).abs() < 1e-15);
        assert!((d.prob(2) - (theta + alpha) / (theta + 1.0)).abs() < 1e-15);
    }
}

#[test]
fn pmf_matches_enumeration_on_more_thetas() {
    for n in 1..=8 {
        for &alpha in &[0.0, 0.15, 0.65, 0.95] {
            for &lambda in &[0.05, 3.0, 25.0] {
                let p = ModelParams::new(alpha, lambda, n).unwrap();
                let d = pmf_kn(&p, None).unwrap();
                let brute = common::brute_force_kn(alpha, p.theta(), n);
                for k in 1..=n {
                    assert!((d.prob(k) - brute[k - 1]).abs() < 1e-13, "n={n} a={alpha} l={lambda} k={k}");
                }
            }
        }
    }
}

#[test]
fn enumeration_counts_bell_numbers() {
    for (n, &b) in common::BELL.iter().enumerate().skip(1) {
        assert_eq!(common::set_partition_block_sizes(n).len(), b);
    }
}

#[test]
fn pmf_normalized_over_wide_range() {
    for &alpha in &[0.0, 0.01, 0.5, 0.99] {
        for &lambda in &[0.01, 1.0, 2.0, 100.0] {
            for &n in &[1, 17, 500, 2000] {
                let p = ModelParams::new(alpha, lambda, n).unwrap();
                let d = pmf_kn(&p, None).unwrap();
                assert!(d.normalization_error() <= 1e-10, "a={alpha} l={lambda} n={n}");
            }
        }
    }
}

#[test]
fn table_and_folded_paths_agree() {
    let p = ModelParams::new(0.4, 1.5, 300).unwrap();
    let table = LogGfcTable::build(0.4, 300).unwrap();
    let a = pmf_kn(&p, Some(&table)).unwrap();
    let b = pmf_kn(&p, None).unwrap();
    assert!(a.total_variation(&b) < 1e-10);
    let wrong = LogGfcTable::build(0.3, 300).unwrap();
    assert!(pmf_kn(&p, Some(&wrong)).is_err());
}

#[test]
fn stirling_row_small() {
    // |s(4, k)| = 6, 11, 6, 1
    let row = log_stirling1_row(4).unwrap();
    for (got, want) in row.iter().zip([6.0f64, 11.0, 6.0, 1.0]) {
        assert!((got.exp() - want).abs() < 1e-12);
    }
}

#[test]
fn falling_moments_two_items() {
    let p = ModelParams::new(0.5, 1.0, 2).unwrap();
    let m1 = falling_factorial_moment(&p, 1).unwrap().value;
    assert!((m1 - (1.0 + 2.5 / 3.0)).abs() < 1e-14);
    let m2 = falling_factorial_moment(&p, 2).unwrap().value;
    assert!((m2 - 2.0 * 2.5 / 3.0).abs() < 1e-14);
}

#[test]
fn falling_moments_match_pmf() {
    for &alpha in &[0.0, 0.3, 0.7] {
        let p = ModelParams::new(alpha, 1.3, 400).unwrap();
        let d = pmf_kn(&p, None).unwrap();
        for j in 1..=3u32 {
            let want: f64 = d
                .atoms()
                .map(|(k, pr)| pr * (0..j).map(|i| k as f64 - i as f64).product::<f64>())
                .sum();
            let got = falling_factorial_moment(&p, j).unwrap().value;
            assert!((got - want).abs() <= 1e-9 * want, "a={alpha} j={j}: {got} vs {want}");
        }
    }
}

#[test]
fn exact_moments_small_case() {
    let p = ModelParams::new(0.0, 1.0, 2).unwrap();
    let r = moments_exact(&p).unwrap();
    assert!((r.mean_exact - 5.0 / 3.0).abs() < 1e-14);
    let q = 2.0 / 3.0;
    assert!((r.var_exact - q * (1.0 - q)).abs() < 1e-14);
    let c4 = q * (1.0 - q) * ((1.0 - q).powi(3) + q.powi(3));
    assert!((r.central4_exact.unwrap() - c4).abs() < 1e-14);
    assert!((c4 - 0.074_074_1).abs() < 1e-7);
}

#[test]
fn exact_moments_match_pmf() {
    for &alpha in &[0.0, 0.25, 0.5, 0.8] {
        for &n in &[10, 300, 2000] {
            let p = ModelParams::new(alpha, 0.7, n).unwrap();
            let d = pmf_kn(&p, None).unwrap();
            let r = moments_exact(&p).unwrap();
            assert!((r.mean_exact - d.mean()).abs() <= 1e-10 * d.mean());
            assert!((r.var_exact - d.variance()).abs() <= 1e-8 * d.variance(), "a={alpha} n={n}");
        }
    }
}

#[test]
fn mean_offset_bounded() {
    for &alpha in &[0.0, 0.5] {
        let offs: Vec<f64> = [1 << 10, 1 << 13, 1 << 16]
            .iter()
            .map(|&n| {
                let r = moments_exact(&ModelParams::new(alpha, 1.0, n).unwrap()).unwrap();
                (r.mean_exact - r.mean_asym).abs()
            })
            .collect();
        assert!(offs.iter().all(|&o| o < 2.0), "{offs:?}");
    }
}

#[test]
fn central4_ratio_stable() {
    let r = central4_asym_check(0.5, 1.0, &[250, 500, 1000, 2000]).unwrap();
    let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = r.iter().copied().fold(0.0, f64::max);
    assert!(hi / lo < 1.1, "{r:?}");
    assert!(central4_asym_check(0.5, 1.0, &[PMF_MOMENT_LIMIT + 1]).is_err());
}
