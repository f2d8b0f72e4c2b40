use ep_lab::verify::{run_suite, ReportFile, Suite, VerifyConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = VerifyConfig {
        coherence_alphas: vec![0.25, 0.75],
        coherence_lambdas: vec![0.5, 2.0],
        ..VerifyConfig::default()
    };
    let mut reports = Vec::new();
    for suite in [Suite::Coherence, Suite::Moments4, Suite::Zn] {
        reports.extend(run_suite(suite, &cfg)?);
    }
    for r in &reports {
        println!(
            "{:<6} {:<60} {:.3e} <= {:.3e}",
            if r.passed { "ok" } else { "FAILED" },
            r.label,
            r.statistic,
            r.tolerance
        );
    }
    let file = ReportFile::new(reports);
    println!("all passed: {}, JSON {} bytes", file.all_passed(), serde_json::to_string(&file)?.len());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
