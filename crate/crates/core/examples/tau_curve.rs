// Writes tau, mu, sigma2, D and mu' over a log grid of z as CSV on stdout.

use ep_lab::cpr;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let alpha = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0.5);
    println!("z,tau,mu,sigma2,D,mu_prime");
    for i in -12..=12 {
        let z = 10f64.powf(i as f64 / 4.0);
        let p = cpr::cpr_point(alpha, z)?;
        println!("{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}", p.z, p.tau, p.mu, p.sigma2, p.d, p.mu_prime);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
