use ep_lab::model::{pmf_kn, ModelParams};
use ep_lab::samplers::{empirical_dist, sample_k_batch, RngStream, Route, DEFAULT_TRUNC_TOL};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let draws = 20_000;
    for (alpha, lambda) in [(0.0, 1.0), (0.5, 1.0)] {
        let p = ModelParams::new(alpha, lambda, 50)?;
        let exact = pmf_kn(&p, None)?;
        for route in Route::ALL.into_iter().filter(|r| r.applies_to(&p)) {
            let t = std::time::Instant::now();
            let ks = sample_k_batch(route, &p, draws, RngStream::new(42, route as u64), DEFAULT_TRUNC_TOL)?;
            let tv = empirical_dist(&ks, p.n()).total_variation(&exact);
            println!("alpha={alpha} {route:>9}: TV to exact {tv:.4} over {draws} draws ({:?})", t.elapsed());
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
