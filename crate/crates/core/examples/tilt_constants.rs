use ep_lab::cpr;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    println!("{:>5} {:>6} {:>10} {:>10} {:>10} {:>10} {:>9} {:>9}", "alpha", "lambda", "z0", "Sigma2", "tau0", "mu(z0)", "res_mean", "res_var");
    for alpha in [0.1, 0.5, 0.9] {
        for lambda in [0.1, 1.0, 10.0] {
            let c = cpr::cpr_constants(alpha, lambda)?;
            println!(
                "{alpha:>5} {lambda:>6} {:>10.5} {:>10.5} {:>10.5} {:>10.5} {:>9.1e} {:>9.1e}",
                c.z0, c.sigma2_big, c.tau0, c.mu_at_z0, c.mean_residual, c.var_residual
            );
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
