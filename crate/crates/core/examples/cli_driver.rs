// Drives the command line in-process; same as running the `ep-lab` binary.

use ep_lab::cli::run_cli;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("ep-lab-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let cfg = dir.join("run.json");
    std::fs::write(&cfg, r#"{"alpha": 0.5, "lambda": 1.0, "n": 12, "seed": 3}"#)?;
    let cfg = cfg.to_str().ok_or("path")?;
    let commands: [&[&str]; 3] = [
        &["ep-lab", "pmf", "--config", cfg],
        &["ep-lab", "constants", "--config", cfg],
        &["ep-lab", "sample", "--config", cfg, "--route", "stick", "--draws", "5"],
    ];
    for args in commands {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run_cli(args.iter().copied(), None, &mut out, &mut err);
        println!("$ {} -> exit {code}", args[1..].join(" "));
        print!("{}", String::from_utf8_lossy(&out));
        print!("{}", String::from_utf8_lossy(&err));
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
