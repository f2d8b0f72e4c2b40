use ep_lab::verify::{exact_clt_distance, exact_wn_distance, fit_be_rate};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let ns: Vec<usize> = (7..=12).map(|e| 1 << e).collect();
    for (alpha, lambda) in [(0.0, 1.0), (0.5, 1.0)] {
        let ds = ns.iter().map(|&n| exact_clt_distance(alpha, lambda, n)).collect::<Result<Vec<_>, _>>()?;
        let fit = fit_be_rate(&ns, &ds)?;
        println!("K_n alpha={alpha} lambda={lambda}");
        for (n, d) in ns.iter().zip(&ds) {
            println!("  n={n:>5}  d_K={d:.5}  sqrt(n) d_K={:.4}", d * (*n as f64).sqrt());
        }
        println!("  slope {:.3}, C^ {:.4}, envelope holds: {}", fit.slope, fit.c_hat, fit.envelope_holds);
    }
    let z0 = ep_lab::cpr::z0(0.5, 1.0)?;
    let ds = ns.iter().map(|&n| exact_wn_distance(0.5, n, z0)).collect::<Result<Vec<_>, _>>()?;
    println!("W_n(z0) alpha=0.5: slope {:.3}", fit_be_rate(&ns, &ds)?.slope);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
