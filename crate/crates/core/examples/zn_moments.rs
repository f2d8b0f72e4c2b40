use ep_lab::cpr::{sigma2_big, z0, zn_moments};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let (alpha, lambda) = (0.5, 1.0);
    let (z, s) = (z0(alpha, lambda)?, sigma2_big(alpha, lambda)?);
    println!("z0={z:.8} Sigma2={s:.8}");
    for i in 0..10 {
        let n = 100usize << i;
        let m = zn_moments(alpha, lambda, n)?;
        let nf = n as f64;
        println!(
            "n={n:>6}  E/n - z0 = {:+.3e}  Var/n - Sigma2 = {:+.3e}  mu4/n^2 = {:.4}",
            m.mean / nf - z,
            m.var / nf - s,
            m.central4 / (nf * nf)
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
