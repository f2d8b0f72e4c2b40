use ep_lab::model::{self, ModelParams};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    for (alpha, lambda) in [(0.0, 1.0), (0.5, 1.0), (0.3, 2.0)] {
        let m = model::m_const(alpha, lambda)?;
        let s2 = model::s2_const(alpha, lambda)?;
        println!("alpha={alpha} lambda={lambda}: m={m:.6} s2={s2:.6}");
        for n in [10, 100, 1000] {
            let p = ModelParams::new(alpha, lambda, n)?;
            let law = model::pmf_kn(&p, None)?;
            let mom = model::moments_exact(&p)?;
            let mode = law.atoms().max_by(|a, b| a.1.total_cmp(&b.1)).map(|a| a.0).unwrap_or(1);
            println!(
                "  n={n:>5} mode={mode:>4} E[K]={:>10.4} (n m {:>10.4})  Var={:>9.4} (n s2 {:>9.4})",
                mom.mean_exact, mom.mean_asym, mom.var_exact, mom.var_asym
            );
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
