//! The `ep-lab` command line: `pmf`, `constants`, `curve`, `sample` and
//! `verify`.
//!
//! Settings come from flags, then an optional JSON config file (`--config`,
//! same keys as the long flags with `_` for `-`), then defaults. Worker
//! threads follow `EP_LAB_THREADS` when set. Exit status is 0 on success, 1
//! when a verification check fails and 2 on usage, configuration or runtime
//! errors.
//!
//! CSV output starts with `#` comment lines holding the command and the
//! fully resolved configuration as JSON; floats are written with 17
//! significant digits.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cpr;
use crate::gfc::LogGfcTable;
use crate::model::{self, ModelParams};
use crate::samplers::{self, RngStream, Route};
use crate::verify::{self, EmpiricalClt, ReportFile, Suite, VerifyConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Environment variable holding the worker-thread count.
pub const THREADS_ENV: &str = "EP_LAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "ep-lab", version, about = "Ewens-Pitman block counts with theta = lambda n")]
pub struct Cli {
    /// JSON file with default values for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact law of K_n as CSV (k, prob, log_prob) or JSON.
    Pmf(Flags),
    /// Asymptotic and tilt constants with coherence residuals, as JSON.
    Constants(Flags),
    /// (z, tau, mu, sigma2, D, mu') on a log grid of z.
    Curve(Flags),
    /// Draws of K_n along one route.
    Sample(Flags),
    /// Runs a verification suite and writes its reports.
    Verify(Flags),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RouteArg {
    Crp,
    Bernoulli,
    Stick,
    Invcdf,
}

impl From<RouteArg> for Route {
    fn from(r: RouteArg) -> Self {
        match r {
            RouteArg::Crp => Route::Crp,
            RouteArg::Bernoulli => Route::Bernoulli,
            RouteArg::Stick => Route::Stick,
            RouteArg::Invcdf => Route::Invcdf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuiteArg {
    Lln,
    Clt,
    Be,
    Coherence,
    Mixture,
    Moments4,
    Moments,
    Zn,
    All,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Lln => Suite::Lln,
            SuiteArg::Clt => Suite::Clt,
            SuiteArg::Be => Suite::Be,
            SuiteArg::Coherence => Suite::Coherence,
            SuiteArg::Mixture => Suite::Mixture,
            SuiteArg::Moments4 => Suite::Moments4,
            SuiteArg::Moments => Suite::Moments,
            SuiteArg::Zn => Suite::Zn,
            SuiteArg::All => Suite::All,
        }
    }
}

/// Every flag, optional so that config-file values can fill the gaps.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Flags {
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub n_min: Option<usize>,
    #[arg(long)]
    pub n_max: Option<usize>,
    #[arg(long)]
    pub n_factor: Option<usize>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub route: Option<RouteArg>,
    #[arg(long, value_enum)]
    pub suite: Option<SuiteArg>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub trunc_tol: Option<f64>,
    #[arg(long)]
    pub gfc_cache: Option<PathBuf>,
    /// Lower end of the z grid for `curve`.
    #[arg(long)]
    pub z_min: Option<f64>,
    /// Upper end of the z grid for `curve`.
    #[arg(long)]
    pub z_max: Option<f64>,
    /// Number of grid points for `curve`.
    #[arg(long)]
    pub points: Option<usize>,
    /// Base verification settings (config file only).
    #[arg(skip)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyConfig>,
}

macro_rules! merge_fields {
    ($a:expr, $b:expr, $($f:ident),*) => {
        Flags { $($f: $a.$f.or($b.$f)),* }
    };
}

impl Flags {
    /// Values of `self`, falling back to `base`.
    pub fn or(self, base: Flags) -> Flags {
        merge_fields!(
            self, base, alpha, lambda, n, n_min, n_max, n_factor, draws, seed, route, suite, out,
            format, trunc_tol, gfc_cache, z_min, z_max, points, verify
        )
    }
}

/// Failure of a CLI run; every variant maps to exit status 2.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

/// Parses `args` (program name first), reads [`THREADS_ENV`] and runs.
/// Errors go to `stderr`; results go to `--out` or `stdout`.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(k) if k > 0 => Some(k),
            _ => {
                let _ = writeln!(stderr, "ep-lab: {THREADS_ENV} must be a positive integer, got {v:?}");
                return EXIT_USAGE;
            }
        },
        Err(_) => None,
    };
    run_cli(args, threads, stdout, stderr)
}

/// Like [`main_with_args`] with an explicit worker count.
pub fn run_cli<I, T>(args: I, threads: Option<usize>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(stderr, "{text}");
            } else {
                let _ = write!(stdout, "{text}");
            }
            return code;
        }
    };
    let result = match threads {
        Some(k) => match rayon::ThreadPoolBuilder::new().num_threads(k).build() {
            Ok(pool) => pool.install(|| execute(&cli)),
            Err(e) => Err(runtime(e)),
        },
        None => execute(&cli),
    };
    let written = result.and_then(|(text, out, code)| {
        match out {
            Some(path) => std::fs::write(path, text)?,
            None => stdout.write_all(text.as_bytes())?,
        }
        Ok(code)
    });
    match written {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "ep-lab: {e}");
            EXIT_USAGE
        }
    }
}

fn load_config(path: &Path) -> Result<Flags, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn execute(cli: &Cli) -> Result<(String, Option<PathBuf>, i32), CliError> {
    let base = match &cli.config {
        Some(p) => load_config(p)?,
        None => Flags::default(),
    };
    let (name, flags) = match &cli.command {
        Command::Pmf(f) => ("pmf", f),
        Command::Constants(f) => ("constants", f),
        Command::Curve(f) => ("curve", f),
        Command::Sample(f) => ("sample", f),
        Command::Verify(f) => ("verify", f),
    };
    let flags = flags.clone().or(base);
    let (text, code) = match name {
        "pmf" => (cmd_pmf(&flags)?, EXIT_OK),
        "constants" => (cmd_constants(&flags)?, EXIT_OK),
        "curve" => (cmd_curve(&flags)?, EXIT_OK),
        "sample" => (cmd_sample(&flags)?, EXIT_OK),
        _ => {
            let (text, passed) = cmd_verify(&flags)?;
            (text, if passed { EXIT_OK } else { EXIT_CHECK_FAILED })
        }
    };
    Ok((text, flags.out, code))
}

fn require<T: Copy>(v: Option<T>, name: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Usage(format!("--{name} is required")))
}

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_header(command: &str, resolved: &Value) -> String {
    format!("# ep-lab {command}\n# config: {resolved}\n")
}

fn json_document(command: &str, resolved: Value, body: Value) -> Result<String, CliError> {
    let mut doc = json!({ "command": command, "config": resolved });
    if let (Value::Object(d), Value::Object(b)) = (&mut doc, body) {
        d.extend(b);
    }
    let mut s = serde_json::to_string_pretty(&doc).map_err(runtime)?;
    s.push('\n');
    Ok(s)
}

fn params(flags: &Flags) -> Result<ModelParams, CliError> {
    ModelParams::new(
        require(flags.alpha, "alpha")?,
        require(flags.lambda, "lambda")?,
        require(flags.n, "n")?,
    )
    .map_err(usage)
}

/// Table for row `n` at `alpha`, read from `path` when it holds a matching
/// one and written there otherwise.
fn cached_table(path: &Path, alpha: f64, n: usize) -> Result<LogGfcTable, CliError> {
    if path.exists() {
        let table = LogGfcTable::load(path).map_err(|e| CliError::Config(e.to_string()))?;
        if table.alpha() == alpha && table.has_row(n) {
            return Ok(table);
        }
    }
    let table = LogGfcTable::build(alpha, n).map_err(usage)?;
    table.save(path).map_err(runtime)?;
    Ok(table)
}

pub fn cmd_pmf(flags: &Flags) -> Result<String, CliError> {
    let p = params(flags)?;
    let table = match (&flags.gfc_cache, p.alpha() > 0.0) {
        (Some(path), true) => Some(cached_table(path, p.alpha(), p.n())?),
        _ => None,
    };
    let dist = model::pmf_kn(&p, table.as_ref()).map_err(usage)?;
    let resolved = json!({
        "alpha": p.alpha(),
        "lambda": p.lambda(),
        "n": p.n(),
        "theta": p.theta(),
        "gfc_cache": flags.gfc_cache,
        "normalization_error": dist.normalization_error(),
    });
    match flags.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut s = csv_header("pmf", &resolved);
            s.push_str("k,prob,log_prob\n");
            for (i, (&lp, &pr)) in dist.log_probs().iter().zip(dist.probs()).enumerate() {
                let _ = writeln!(s, "{},{},{}", dist.first() + i, fmt_f64(pr), fmt_f64(lp));
            }
            Ok(s)
        }
        Format::Json => {
            let rows: Vec<Value> = dist
                .atoms()
                .zip(dist.log_probs())
                .map(|((k, p), lp)| json!({ "k": k, "prob": p, "log_prob": lp }))
                .collect();
            json_document("pmf", resolved, json!({ "pmf": rows }))
        }
    }
}

/// Constants as a JSON object; tilt fields are `null` at `alpha = 0`.
pub fn constants_json(alpha: f64, lambda: f64) -> Result<Value, CliError> {
    let m = model::m_const(alpha, lambda).map_err(usage)?;
    let s2 = model::s2_const(alpha, lambda).map_err(usage)?;
    if alpha == 0.0 {
        return Ok(json!({
            "m": m, "s2": s2, "z0": null, "Sigma2": null, "tau0": null, "mu0": null,
            "sigma2_0": null, "mu_prime0": null, "coherence_residuals": null,
        }));
    }
    let c = cpr::cpr_constants(alpha, lambda).map_err(runtime)?;
    Ok(json!({
        "m": m,
        "s2": s2,
        "z0": c.z0,
        "Sigma2": c.sigma2_big,
        "tau0": c.tau0,
        "mu0": c.mu_at_z0,
        "sigma2_0": c.sigma2_at_z0,
        "mu_prime0": c.mu_prime_at_z0,
        "coherence_residuals": { "mean": c.mean_residual, "variance": c.var_residual },
    }))
}

pub fn cmd_constants(flags: &Flags) -> Result<String, CliError> {
    let alpha = require(flags.alpha, "alpha")?;
    let lambda = require(flags.lambda, "lambda")?;
    let body = constants_json(alpha, lambda)?;
    let resolved = json!({ "alpha": alpha, "lambda": lambda });
    match flags.format.unwrap_or(Format::Json) {
        Format::Json => json_document("constants", resolved, body),
        Format::Csv => {
            let mut s = csv_header("constants", &resolved);
            s.push_str("name,value\n");
            if let Value::Object(map) = body {
                for (k, v) in map {
                    match v {
                        Value::Number(x) => {
                            let _ = writeln!(s, "{k},{}", fmt_f64(x.as_f64().unwrap_or(f64::NAN)));
                        }
                        Value::Object(inner) => {
                            for (k2, v2) in inner {
                                let x = v2.as_f64().unwrap_or(f64::NAN);
                                let _ = writeln!(s, "{k}.{k2},{}", fmt_f64(x));
                            }
                        }
                        _ => {
                            let _ = writeln!(s, "{k},");
                        }
                    }
                }
            }
            Ok(s)
        }
    }
}

pub fn cmd_curve(flags: &Flags) -> Result<String, CliError> {
    let alpha = require(flags.alpha, "alpha")?;
    let centre = match flags.lambda {
        Some(l) => cpr::z0(alpha, l).map_err(usage)?,
        None => 1.0,
    };
    let z_min = flags.z_min.unwrap_or(centre / 100.0);
    let z_max = flags.z_max.unwrap_or(centre * 100.0);
    let points = flags.points.unwrap_or(101);
    if !(z_min > 0.0 && z_max > z_min && points >= 2) {
        return Err(CliError::Usage("need 0 < z-min < z-max and points >= 2".into()));
    }
    let resolved = json!({
        "alpha": alpha, "lambda": flags.lambda, "z_min": z_min, "z_max": z_max, "points": points,
    });
    let step = (z_max / z_min).ln() / (points - 1) as f64;
    let rows = (0..points)
        .map(|i| cpr::cpr_point(alpha, z_min * (step * i as f64).exp()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(runtime)?;
    match flags.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut s = csv_header("curve", &resolved);
            s.push_str("z,tau,mu,sigma2,D,mu_prime\n");
            for r in rows {
                let cols = [r.z, r.tau, r.mu, r.sigma2, r.d, r.mu_prime].map(fmt_f64);
                let _ = writeln!(s, "{}", cols.join(","));
            }
            Ok(s)
        }
        Format::Json => json_document("curve", resolved, json!({ "curve": rows })),
    }
}

pub fn cmd_sample(flags: &Flags) -> Result<String, CliError> {
    let p = params(flags)?;
    let route: Route = require(flags.route, "route")?.into();
    if !route.applies_to(&p) {
        return Err(CliError::Usage(format!(
            "route {route} needs alpha = 0, got alpha = {}",
            p.alpha()
        )));
    }
    let draws = require(flags.draws, "draws")?;
    let seed = flags.seed.unwrap_or(0);
    let trunc_tol = flags.trunc_tol.unwrap_or(samplers::DEFAULT_TRUNC_TOL);
    let stream = RngStream::new(seed, samplers::hash_words(&[route as u64 + 1]));
    let ks = samplers::sample_k_batch(route, &p, draws, stream, trunc_tol).map_err(usage)?;
    let resolved = json!({
        "alpha": p.alpha(),
        "lambda": p.lambda(),
        "n": p.n(),
        "route": route,
        "draws": draws,
        "seed": seed,
        "stream_id": stream.stream_id,
        "trunc_tol": trunc_tol,
    });
    match flags.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut s = csv_header("sample", &resolved);
            s.push_str("draw,k\n");
            for (i, k) in ks.iter().enumerate() {
                let _ = writeln!(s, "{i},{k}");
            }
            Ok(s)
        }
        Format::Json => json_document("sample", resolved, json!({ "k": ks })),
    }
}

/// Verification settings after applying flag overrides to the config base.
pub fn resolve_verify_config(flags: &Flags) -> Result<VerifyConfig, CliError> {
    let mut cfg = flags.verify.clone().unwrap_or_default();
    if let Some(seed) = flags.seed {
        cfg.seed = seed;
    }
    match (flags.alpha, flags.lambda) {
        (Some(a), Some(l)) => {
            let pt = vec![(a, l)];
            cfg.lln_points = pt.clone();
            cfg.clt_points = pt.clone();
            cfg.moments4_points = pt.clone();
            cfg.moments_points = pt.clone();
            if a > 0.0 {
                cfg.coherence_alphas = vec![a];
                cfg.coherence_lambdas = vec![l];
                cfg.be_kn_points = pt.clone();
                cfg.be_wn_points = pt.clone();
                cfg.mixture_point = (a, l);
                cfg.zn_points = pt;
            } else {
                cfg.coherence_alphas.clear();
                cfg.be_kn_points = pt;
                cfg.be_wn_points.clear();
                cfg.zn_points.clear();
            }
        }
        (None, None) => {}
        _ => return Err(CliError::Usage("--alpha and --lambda go together".into())),
    }
    if let Some(n) = flags.n {
        cfg.lln_n = n;
        cfg.mixture_ns = vec![n];
        if let Some(e) = cfg.clt_empirical.as_mut() {
            e.n = n;
        }
    }
    if flags.n_min.is_some() || flags.n_max.is_some() || flags.n_factor.is_some() {
        let lo = require(flags.n_min, "n-min")?;
        let hi = require(flags.n_max, "n-max")?;
        let factor = flags.n_factor.unwrap_or(2);
        let ns = verify::geometric_grid(lo, hi, factor);
        if ns.is_empty() {
            return Err(CliError::Usage("empty n grid".into()));
        }
        cfg.clt_ns = ns.clone();
        cfg.be_ns = ns.clone();
        cfg.moments_ns = ns.clone();
        if factor == 2 {
            cfg.zn_ns = ns.clone();
        }
        cfg.moments4_ns = ns.into_iter().filter(|&n| n <= model::PMF_MOMENT_LIMIT).collect();
    }
    if let Some(d) = flags.draws {
        cfg.lln_draws = d;
        cfg.mixture_draws = d;
        if let Some(e) = cfg.clt_empirical.as_mut() {
            *e = EmpiricalClt { n: e.n, draws: d };
        }
    }
    Ok(cfg)
}

/// Runs the suite; returns the rendered output and whether every check passed.
pub fn cmd_verify(flags: &Flags) -> Result<(String, bool), CliError> {
    let suite: Suite = flags.suite.unwrap_or(SuiteArg::All).into();
    let cfg = resolve_verify_config(flags)?;
    let reports = verify::run_suite(suite, &cfg).map_err(runtime)?;
    let file = ReportFile::new(reports);
    let passed = file.all_passed();
    let text = match flags.format.unwrap_or(Format::Json) {
        Format::Json => {
            let mut doc = serde_json::to_value(&file).map_err(runtime)?;
            if let Value::Object(map) = &mut doc {
                map.insert("suite".into(), json!(suite.name()));
                map.insert("config".into(), serde_json::to_value(&cfg).map_err(runtime)?);
            }
            let mut s = serde_json::to_string_pretty(&doc).map_err(runtime)?;
            s.push('\n');
            s
        }
        Format::Csv => {
            let resolved = json!({ "suite": suite.name(), "verify": cfg });
            let mut s = csv_header("verify", &resolved);
            s.push_str("experiment,label,alpha,lambda,n,n_min,n_max,statistic,tolerance,passed,seed,stream_id\n");
            for r in &file.reports {
                let exp = serde_json::to_value(r.experiment).map_err(runtime)?;
                let gp = &r.grid_point;
                let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
                let _ = writeln!(
                    s,
                    "{},\"{}\",{},{},{},{},{},{},{},{},{},{}",
                    exp.as_str().unwrap_or(""),
                    r.label.replace('"', "\"\""),
                    fmt_f64(gp.alpha),
                    fmt_f64(gp.lambda),
                    opt(gp.n),
                    opt(gp.n_range.map(|r| r[0])),
                    opt(gp.n_range.map(|r| r[1])),
                    fmt_f64(r.statistic),
                    fmt_f64(r.tolerance),
                    r.passed,
                    r.seed,
                    r.stream_id,
                );
            }
            s
        }
    };
    Ok((text, passed))
}
