mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use ep_lab::cli::run_cli;
use ep_lab::model::{self, ModelParams};
use ep_lab::verify::{self, BeTarget, MixtureSampling, Tolerances};
use ep_lab::samplers::RngStream;

type Outcome = (bool, String);
type Criterion = (u32, &'static str, u64, fn() -> Outcome);

fn pow2(lo: u32, hi: u32) -> Vec<usize> {
    (lo..=hi).map(|e| 1usize << e).collect()
}

fn criterion_01_brute_force_oracle() -> Outcome {
    let mut worst = 0.0f64;
    for n in 1..=8 {
        for &alpha in &[0.0, 0.3, 0.5, 0.8] {
            for &lambda in &[0.5, 1.0, 2.0] {
                let p = ModelParams::new(alpha, lambda, n).unwrap();
                let dist = model::pmf_kn(&p, None).unwrap();
                let brute = common::brute_force_kn(alpha, p.theta(), n);
                let tv = 0.5 * (1..=n).map(|k| (dist.prob(k) - brute[k - 1]).abs()).sum::<f64>();
                worst = worst.max(tv);
            }
        }
    }
    (worst <= 1e-10, format!("max TV {worst:.2e}").to_string())
}

fn criterion_02_coherence() -> Outcome {
    let alphas: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    let lambdas = [0.1, 0.5, 1.0, 2.0, 10.0];
    let reports = verify::run_coherence(&alphas, &lambdas, &Tolerances::default()).unwrap();
    let mean_worst = reports.iter().filter(|r| r.label.contains("mu(z0)")).map(|r| r.statistic).fold(0.0, f64::max);
    let var_worst = reports.iter().filter(|r| !r.label.contains("- m|")).map(|r| r.statistic).fold(0.0, f64::max);
    let passed = reports.len() >= 45 && reports.iter().all(|r| r.passed) && mean_worst <= 1e-10 && var_worst <= 1e-9;
    let detail = format!("{} reports, max mean residual {mean_worst:.1e}, max variance residual {var_worst:.1e}", reports.len());
    (passed, detail.to_string())
}

fn criterion_03_moment_expansions() -> Outcome {
    let points = [(0.0, 1.0), (0.5, 1.0)];
    let reports = verify::run_moment_expansion(&points, &pow2(8, 16), &Tolerances::default()).unwrap();
    let worst = reports.iter().map(|r| r.statistic).fold(0.0, f64::max);
    let passed = !reports.is_empty() && reports.iter().all(|r| r.passed);
    (passed, format!("max growth per doubling {worst:.2e}").to_string())
}

fn criterion_04_clt_exact() -> Outcome {
    let points = [(0.0, 1.0), (0.5, 1.0), (0.3, 2.0)];
    let reports = verify::run_clt(&points, &pow2(7, 13), None, 1, &Tolerances::default()).unwrap();
    let mut detail = Vec::new();
    for r in &reports {
        let series: Vec<String> = r.series.iter().map(|s| format!("{:.4}", s.value)).collect();
        detail.push(format!("({}, {}): [{}]", r.grid_point.alpha, r.grid_point.lambda, series.join(" ")));
    }
    let passed = reports.len() == 3 && reports.iter().all(|r| r.passed);
    (passed, detail.join("; "))
}

fn criterion_05_berry_esseen_shape() -> Outcome {
    let tol = Tolerances::default();
    let ns = pow2(7, 14);
    let mut reports = Vec::new();
    for alpha in [0.0, 0.5] {
        reports.push(verify::run_be(BeTarget::Kn, alpha, 1.0, &ns, &tol).unwrap());
    }
    reports.push(verify::run_be(BeTarget::WnZ0, 0.5, 1.0, &ns, &tol).unwrap());
    let detail: Vec<String> = reports
        .iter()
        .map(|r| format!("{} slope {:.3} C^ {:.3}", r.label, r.statistic, r.extra["c_hat"]))
        .collect();
    let passed = reports.iter().all(|r| r.passed && r.statistic <= -0.125);
    (passed, detail.join("; "))
}

fn criterion_06_fourth_moment() -> Outcome {
    let ns = [250, 500, 1000, 2000];
    let mut worst = 0.0f64;
    for alpha in [0.0, 0.5] {
        let mut r = model::central4_asym_check(alpha, 1.0, &ns).unwrap();
        r.sort_by(f64::total_cmp);
        let median = 0.5 * (r[1] + r[2]);
        let spread = r.iter().map(|x| (x - median).abs() / median).fold(0.0, f64::max);
        worst = worst.max(spread);
    }
    (worst < 0.25, format!("max deviation from median {worst:.4}").to_string())
}

fn criterion_07_lln() -> Outcome {
    let points = [(0.0, 1.0), (0.5, 1.0), (0.3, 2.0)];
    let reports = verify::run_lln(&points, 10_000, 10_000, 1, &Tolerances::default()).unwrap();
    let detail: Vec<String> = reports
        .iter()
        .map(|r| format!("({}, {}) {:.2e} <= {:.2e}", r.grid_point.alpha, r.grid_point.lambda, r.statistic, r.tolerance))
        .collect();
    let passed = reports.len() == 3 && reports.iter().all(|r| r.passed);
    (passed, detail.join("; "))
}

fn criterion_08_mixture() -> Outcome {
    let tv_at = |n: usize| {
        let p = ModelParams::new(0.5, 1.0, n).unwrap();
        let exact = model::pmf_kn(&p, None).unwrap();
        let stream: RngStream = verify::stream_for(1, verify::Experiment::Mixture, 0.5, 1.0, n);
        let (mix, _) = verify::surrogate_mixture(0.5, 1.0, n, 100_000, stream, MixtureSampling::Stratified).unwrap();
        exact.total_variation(&mix)
    };
    let (tv50, tv200) = (tv_at(50), tv_at(200));
    let passed = tv50 <= 0.03 && tv200 < tv50;
    let detail = format!("TV(50) {tv50:.3e} <= 0.03: {}, TV(200) {tv200:.3e} < TV(50): {}", tv50 <= 0.03, tv200 < tv50);
    (passed, detail.to_string())
}

fn criterion_09_zn_moments() -> Outcome {
    let ns: Vec<usize> = (0..10).map(|i| 100usize << i).filter(|&n| n <= 100_000).collect();
    let reports = verify::run_zn_moments(&[(0.5, 1.0)], &ns, &Tolerances::default()).unwrap();
    let detail: Vec<String> = reports.iter().map(|r| format!("{} {:.3e}", r.label, r.statistic)).collect();
    let passed = !reports.is_empty() && reports.iter().all(|r| r.passed);
    (passed, detail.join("; "))
}

fn sample_bytes(args: &[&str], threads: usize) -> Vec<u8> {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["ep-lab", "sample"];
    full.extend_from_slice(args);
    let code = run_cli(full, Some(threads), &mut out, &mut err);
    assert_eq!(code, 0, "{}", String::from_utf8_lossy(&err));
    out
}

fn criterion_10_determinism() -> Outcome {
    let runs: [&[&str]; 4] = [
        &["--route", "crp", "--alpha", "0.5", "--lambda", "1", "--n", "300", "--draws", "3000", "--seed", "7"],
        &["--route", "stick", "--alpha", "0.3", "--lambda", "2", "--n", "200", "--draws", "3000", "--seed", "7"],
        &["--route", "invcdf", "--alpha", "0.5", "--lambda", "1", "--n", "300", "--draws", "3000", "--seed", "7"],
        &["--route", "bernoulli", "--alpha", "0", "--lambda", "1", "--n", "300", "--draws", "3000", "--seed", "7"],
    ];
    let mut identical = true;
    for args in runs {
        let reference = sample_bytes(args, 1);
        identical &= sample_bytes(args, 1) == reference;
        identical &= sample_bytes(args, 4) == reference;
        identical &= sample_bytes(args, 3) == reference;
    }
    (identical, "4 routes x threads {1, 1, 4, 3}".to_string())
}

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "brute-force oracle", 10, criterion_01_brute_force_oracle),
        (2, "coherence identities", 1, criterion_02_coherence),
        (3, "moment expansions", 30, criterion_03_moment_expansions),
        (4, "CLT exact route", 120, criterion_04_clt_exact),
        (5, "Berry-Esseen shape", 180, criterion_05_berry_esseen_shape),
        (6, "fourth-moment scaling", 30, criterion_06_fourth_moment),
        (7, "LLN", 120, criterion_07_lln),
        (8, "compound-Poisson mixture", 60, criterion_08_mixture),
        (9, "Z_n moments", 1, criterion_09_zn_moments),
        (10, "determinism", 30, criterion_10_determinism),
    ];
    let mut failed = 0;
    for (id, name, budget, f) in criteria {
        let t = Instant::now();
        let (passed, detail) = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| (false, "panicked".into()));
        let elapsed = t.elapsed();
        let ok = passed && elapsed <= Duration::from_secs(budget);
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {name}: {} ({detail}; {:.2}s of {budget}s)",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
