use ep_lab::model::{pmf_kn, ModelParams};
use ep_lab::verify::{stream_for, surrogate_mixture, Experiment, MixtureSampling};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let draws = 40_000;
    for (alpha, lambda) in [(0.5, 1.0), (0.3, 1.0)] {
        for n in [50, 200] {
            let exact = pmf_kn(&ModelParams::new(alpha, lambda, n)?, None)?;
            let stream = stream_for(7, Experiment::Mixture, alpha, lambda, n);
            for sampling in [MixtureSampling::Iid, MixtureSampling::Stratified] {
                let (mix, se) = surrogate_mixture(alpha, lambda, n, draws, stream, sampling)?;
                println!(
                    "alpha={alpha} n={n:>3} {sampling:?}: TV {:.3e}, iid noise scale {:.1e}",
                    mix.total_variation(&exact),
                    se.iter().sum::<f64>() / 2.0
                );
            }
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
