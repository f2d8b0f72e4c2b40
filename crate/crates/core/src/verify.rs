//! Experiment drivers: each turns one limit statement about `K_n` into a
//! numeric check and returns a [`VerificationReport`].
//!
//! Exact routes read no randomness and record seed 0. Monte Carlo routes
//! derive their stream id from `(experiment, alpha, lambda, n)`, so any
//! report can be reproduced from its seed alone.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cpr::{self, CprError};
use crate::dist::DiscreteDist;
use crate::gfc::{GfcError, LogGfcTable};
use crate::model::{self, ModelError, ModelParams};
use crate::numerics::{log_sum_exp, normal_cdf, NeumaierSum};
use crate::samplers::{self, hash_words, RngStream, Route, SamplerError, ZnSurrogate};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("empty input")]
    Empty,
    #[error("rate fit needs at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("invalid experiment setting: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Cpr(#[from] CprError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Gfc(#[from] GfcError),
}

pub type Result<T> = std::result::Result<T, VerifyError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Experiment {
    Lln,
    Clt,
    BeRate,
    MomentExpansion,
    Coherence,
    Moment4,
    Mixture,
    ZnMoments,
}

impl Experiment {
    fn code(self) -> u64 {
        self as u64 + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub alpha: f64,
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_range: Option<[usize; 2]>,
}

impl GridPoint {
    fn at(alpha: f64, lambda: f64, n: usize) -> Self {
        GridPoint {
            alpha,
            lambda,
            n: Some(n),
            n_range: None,
        }
    }

    fn over(alpha: f64, lambda: f64, ns: &[usize]) -> Self {
        GridPoint {
            alpha,
            lambda,
            n: None,
            n_range: ns.first().zip(ns.last()).map(|(&a, &b)| [a, b]),
        }
    }

    fn constants(alpha: f64, lambda: f64) -> Self {
        GridPoint {
            alpha,
            lambda,
            n: None,
            n_range: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub n: usize,
    pub value: f64,
}

/// One experiment at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub experiment: Experiment,
    /// What `statistic` measures.
    pub label: String,
    pub grid_point: GridPoint,
    pub statistic: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Set when the check is trivially satisfied (e.g. `n = 1`).
    #[serde(default)]
    pub degenerate: bool,
    pub runtime_ms: u64,
    pub seed: u64,
    #[serde(default)]
    pub stream_id: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub series: Vec<SeriesPoint>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, f64>,
}

impl VerificationReport {
    fn new(
        experiment: Experiment,
        label: &str,
        grid_point: GridPoint,
        statistic: f64,
        tolerance: f64,
        passed: bool,
        started: Instant,
    ) -> Self {
        VerificationReport {
            experiment,
            label: label.to_string(),
            grid_point,
            statistic,
            tolerance,
            passed,
            degenerate: false,
            runtime_ms: started.elapsed().as_millis() as u64,
            seed: 0,
            stream_id: 0,
            series: Vec::new(),
            extra: BTreeMap::new(),
        }
    }

    fn with_series(mut self, ns: &[usize], values: &[f64]) -> Self {
        self.series = ns
            .iter()
            .zip(values)
            .map(|(&n, &value)| SeriesPoint { n, value })
            .collect();
        self
    }

    fn with_extra(mut self, key: &str, value: f64) -> Self {
        self.extra.insert(key.to_string(), value);
        self
    }

    fn with_stream(mut self, stream: RngStream) -> Self {
        self.seed = stream.seed;
        self.stream_id = stream.stream_id;
        self
    }
}

/// Versioned container written by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub schema_version: u32,
    pub reports: Vec<VerificationReport>,
}

impl ReportFile {
    pub fn new(reports: Vec<VerificationReport>) -> Self {
        ReportFile {
            schema_version: SCHEMA_VERSION,
            reports,
        }
    }

    pub fn all_passed(&self) -> bool {
        self.reports.iter().all(|r| r.passed)
    }
}

/// Stream for the Monte Carlo part of `experiment` at one grid point.
pub fn stream_for(seed: u64, experiment: Experiment, alpha: f64, lambda: f64, n: usize) -> RngStream {
    RngStream::new(
        seed,
        hash_words(&[experiment.code(), alpha.to_bits(), lambda.to_bits(), n as u64]),
    )
}

/// A right-continuous step CDF: value `cdf[i]` on `[xs[i], xs[i+1])`, zero
/// before `xs[0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCdf {
    xs: Vec<f64>,
    cdf: Vec<f64>,
}

impl StepCdf {
    pub fn new(xs: Vec<f64>, cdf: Vec<f64>) -> Result<Self> {
        if xs.is_empty() || xs.len() != cdf.len() {
            return Err(VerifyError::Empty);
        }
        Ok(StepCdf { xs, cdf })
    }

    /// Law of `(X - center) / scale` for `X ~ dist`.
    pub fn standardized(dist: &DiscreteDist, center: f64, scale: f64) -> Result<Self> {
        let xs = (0..dist.len())
            .map(|i| ((dist.first() + i) as f64 - center) / scale)
            .collect();
        Self::new(xs, dist.cdf_values().to_vec())
    }

    /// Empirical CDF of a sample.
    pub fn empirical(mut sample: Vec<f64>) -> Result<Self> {
        if sample.is_empty() {
            return Err(VerifyError::Empty);
        }
        sample.sort_by(f64::total_cmp);
        let total = sample.len() as f64;
        let mut xs = Vec::new();
        let mut cdf = Vec::new();
        for (i, &x) in sample.iter().enumerate() {
            if xs.last() == Some(&x) {
                *cdf.last_mut().unwrap() = (i + 1) as f64 / total;
            } else {
                xs.push(x);
                cdf.push((i + 1) as f64 / total);
            }
        }
        Ok(StepCdf { xs, cdf })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }
}

/// `sup_x |F(x) - G(x)|` for a step `F` and a continuous `G`, checked at
/// both one-sided limits of every jump.
pub fn kolmogorov_distance<G: Fn(f64) -> f64>(f: &StepCdf, g: G) -> f64 {
    let mut left = 0.0;
    let mut sup: f64 = 0.0;
    for (&x, &right) in f.xs.iter().zip(&f.cdf) {
        let gx = g(x);
        sup = sup.max((left - gx).abs()).max((right - gx).abs());
        left = right;
    }
    sup
}

/// Kolmogorov distance to the standard normal.
pub fn kolmogorov_to_normal(f: &StepCdf) -> f64 {
    kolmogorov_distance(f, normal_cdf)
}

/// DKW radius: `sup |F_N - F| <= sqrt(ln(2/delta) / (2N))` with probability
/// at least `1 - delta`.
pub fn dkw_bound(samples: usize, delta: f64) -> f64 {
    ((2.0 / delta).ln() / (2.0 * samples as f64)).sqrt()
}

/// Kolmogorov distance between the exact law of
/// `(K_n - n m) / sqrt(n s2)` and the standard normal.
pub fn exact_clt_distance(alpha: f64, lambda: f64, n: usize) -> Result<f64> {
    let params = ModelParams::new(alpha, lambda, n)?;
    let pmf = model::pmf_kn(&params, None)?;
    let nf = n as f64;
    let center = nf * model::m_const(alpha, lambda)?;
    let scale = (nf * model::s2_const(alpha, lambda)?).sqrt();
    Ok(kolmogorov_to_normal(&StepCdf::standardized(&pmf, center, scale)?))
}

/// Kolmogorov distance between `W_n(z) = (R_n(z) - n mu(z)) / sqrt(n sigma2(z))`
/// and the standard normal.
pub fn exact_wn_distance(alpha: f64, n: usize, z: f64) -> Result<f64> {
    let table = LogGfcTable::build_row(alpha, n)?;
    let nf = n as f64;
    let pmf = cpr::rn_pmf(alpha, n, nf * z, &table)?;
    let center = nf * cpr::mu(alpha, z)?;
    let scale = (nf * cpr::sigma2(alpha, z)?).sqrt();
    Ok(kolmogorov_to_normal(&StepCdf::standardized(&pmf, center, scale)?))
}

/// Berry-Esseen shape fit over a geometric `n` grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeFit {
    /// `b` in `ln d = a + b ln n`.
    pub slope: f64,
    pub intercept: f64,
    /// `max_n d_n / (ln n n^{-1/8})`.
    pub c_hat: f64,
    /// Least-squares `C` in `ln d = ln C + ln(ln n n^{-1/8})`.
    pub c_ls: f64,
    /// Whether `d_n <= c_hat ln n n^{-1/8}` at every point.
    pub envelope_holds: bool,
}

pub const BE_MIN_POINTS: usize = 5;

pub fn fit_be_rate(ns: &[usize], distances: &[f64]) -> Result<BeFit> {
    if ns.len() != distances.len() {
        return Err(VerifyError::Invalid("n list and distances differ in length".into()));
    }
    if ns.len() < BE_MIN_POINTS {
        return Err(VerifyError::InsufficientPoints {
            needed: BE_MIN_POINTS,
            got: ns.len(),
        });
    }
    if ns.iter().any(|&n| n < 2) || distances.iter().any(|&d| !(d > 0.0)) {
        return Err(VerifyError::Invalid("rate fit needs n >= 2 and positive distances".into()));
    }
    let envelope = |n: usize| (n as f64).ln() * (n as f64).powf(-0.125);
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = distances.iter().map(|d| d.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let ratios: Vec<f64> = ns.iter().zip(distances).map(|(&n, d)| d / envelope(n)).collect();
    let c_hat = ratios.iter().copied().fold(0.0, f64::max);
    let c_ls = (ratios.iter().map(|r| r.ln()).sum::<f64>() / k).exp();
    let envelope_holds = ns
        .iter()
        .zip(distances)
        .all(|(&n, &d)| d <= c_hat * envelope(n) * (1.0 + 1e-12));
    Ok(BeFit {
        slope,
        intercept: my - slope * mx,
        c_hat,
        c_ls,
        envelope_holds,
    })
}

/// Pass/fail thresholds. Tightening any of them can only turn a pass into a
/// fail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Width of the Monte Carlo band in standard errors.
    pub lln_sigmas: f64,
    /// `C` in the `C / n` bias allowance for `E[K_n] / n - m`.
    pub lln_bias: f64,
    /// Largest allowed exact CLT distance at the top of the `n` grid.
    pub clt_distance: f64,
    /// Failure probability of the DKW band.
    pub dkw_delta: f64,
    /// Largest allowed free-exponent slope.
    pub be_slope: f64,
    pub coherence_mean: f64,
    pub coherence_var: f64,
    /// Largest allowed relative growth of `|E K_n - n m|` and
    /// `|Var K_n - n s2|` per doubling of `n`.
    pub moment_growth: f64,
    /// Smallest `n` from which growth is checked.
    pub moment_growth_from: usize,
    /// Largest relative spread of `E[(K_n - E K_n)^4] / n^2` around its median.
    pub moment4_spread: f64,
    /// Total variation allowance on top of the Monte Carlo budget.
    pub mixture_tv: f64,
    /// Largest `|d_n / d_{2n} - 2|` for the `Z_n` moment drifts.
    pub zn_ratio: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            lln_sigmas: 3.0,
            lln_bias: 10.0,
            clt_distance: 0.05,
            dkw_delta: 1e-3,
            be_slope: -0.125,
            coherence_mean: 1e-10,
            coherence_var: 1e-9,
            moment_growth: 0.10,
            moment_growth_from: 1 << 10,
            moment4_spread: 0.25,
            mixture_tv: 0.02,
            zn_ratio: 0.25,
        }
    }
}

/// `|mean(K_n / n) - m| <= sigmas * sd / sqrt(draws) + bias / n`, CRP draws.
pub fn run_lln(
    points: &[(f64, f64)],
    n: usize,
    draws: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<Vec<VerificationReport>> {
    points
        .par_iter()
        .map(|&(alpha, lambda)| lln_point(alpha, lambda, n, draws, seed, tol))
        .collect()
}

fn lln_point(
    alpha: f64,
    lambda: f64,
    n: usize,
    draws: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<VerificationReport> {
    let started = Instant::now();
    let params = ModelParams::new(alpha, lambda, n)?;
    let m = model::m_const(alpha, lambda)?;
    let stream = stream_for(seed, Experiment::Lln, alpha, lambda, n);
    let label = "|mean(K_n/n) - m|";
    if n == 1 {
        let stat = (1.0 - m).abs();
        let mut r = VerificationReport::new(
            Experiment::Lln,
            label,
            GridPoint::at(alpha, lambda, n),
            stat,
            stat,
            true,
            started,
        );
        r.degenerate = true;
        return Ok(r);
    }
    if draws < 2 {
        return Err(VerifyError::Invalid("LLN needs at least two draws".into()));
    }
    let ks = samplers::sample_k_batch(Route::Crp, &params, draws, stream, samplers::DEFAULT_TRUNC_TOL)?;
    let nf = n as f64;
    let (mean, sd) = mean_sd(ks.iter().map(|&k| k as f64 / nf));
    let stat = (mean - m).abs();
    let stderr = sd / (draws as f64).sqrt();
    let tolerance = tol.lln_sigmas * stderr + tol.lln_bias / nf;
    Ok(VerificationReport::new(
        Experiment::Lln,
        label,
        GridPoint::at(alpha, lambda, n),
        stat,
        tolerance,
        stat <= tolerance,
        started,
    )
    .with_stream(stream)
    .with_extra("mean", mean)
    .with_extra("m", m)
    .with_extra("stderr", stderr))
}

fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let mut count = 0usize;
    let mut sum = NeumaierSum::default();
    for v in values.clone() {
        sum.add(v);
        count += 1;
    }
    let mean = sum.value() / count as f64;
    let ss: NeumaierSum = values.map(|v| (v - mean) * (v - mean)).collect();
    (mean, (ss.value() / (count as f64 - 1.0)).sqrt())
}

/// Empirical CLT route settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalClt {
    pub n: usize,
    pub draws: usize,
}

/// Exact route: distances strictly decrease along `ns` and end at or below
/// the tolerance. Empirical route (optional): the CRP sample distance is
/// within the DKW band of the exact distance at the same `n`.
pub fn run_clt(
    points: &[(f64, f64)],
    ns: &[usize],
    empirical: Option<EmpiricalClt>,
    seed: u64,
    tol: &Tolerances,
) -> Result<Vec<VerificationReport>> {
    if ns.is_empty() {
        return Err(VerifyError::Empty);
    }
    let mut out = Vec::new();
    for &(alpha, lambda) in points {
        let started = Instant::now();
        let distances = ns
            .par_iter()
            .map(|&n| exact_clt_distance(alpha, lambda, n))
            .collect::<Result<Vec<f64>>>()?;
        let decreasing = distances.windows(2).all(|w| w[1] < w[0]);
        let last = *distances.last().unwrap();
        out.push(
            VerificationReport::new(
                Experiment::Clt,
                "exact Kolmogorov distance at largest n (strictly decreasing in n)",
                GridPoint::over(alpha, lambda, ns),
                last,
                tol.clt_distance,
                decreasing && last <= tol.clt_distance,
                started,
            )
            .with_series(ns, &distances)
            .with_extra("decreasing", f64::from(u8::from(decreasing))),
        );
        if let Some(e) = empirical {
            out.push(clt_empirical_point(alpha, lambda, e, seed, tol)?);
        }
    }
    Ok(out)
}

fn clt_empirical_point(
    alpha: f64,
    lambda: f64,
    e: EmpiricalClt,
    seed: u64,
    tol: &Tolerances,
) -> Result<VerificationReport> {
    let started = Instant::now();
    let params = ModelParams::new(alpha, lambda, e.n)?;
    let exact = exact_clt_distance(alpha, lambda, e.n)?;
    let stream = stream_for(seed, Experiment::Clt, alpha, lambda, e.n);
    let ks = samplers::sample_k_batch(Route::Crp, &params, e.draws, stream, samplers::DEFAULT_TRUNC_TOL)?;
    let nf = e.n as f64;
    let center = nf * model::m_const(alpha, lambda)?;
    let scale = (nf * model::s2_const(alpha, lambda)?).sqrt();
    let sample = ks.iter().map(|&k| (k as f64 - center) / scale).collect();
    let dist = kolmogorov_to_normal(&StepCdf::empirical(sample)?);
    let dkw = dkw_bound(e.draws, tol.dkw_delta);
    let tolerance = exact + dkw;
    Ok(VerificationReport::new(
        Experiment::Clt,
        "empirical CRP Kolmogorov distance (bound: exact + DKW)",
        GridPoint::at(alpha, lambda, e.n),
        dist,
        tolerance,
        dist <= tolerance,
        started,
    )
    .with_stream(stream)
    .with_extra("exact", exact)
    .with_extra("dkw", dkw))
}

/// Which standardized law a rate fit is run on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeTarget {
    /// `(K_n - n m) / sqrt(n s2)`.
    Kn,
    /// `W_n(z0)`.
    WnZ0,
}

/// Exact distances along `ns`, the free-exponent slope, and the fitted
/// envelope.
pub fn run_be(
    target: BeTarget,
    alpha: f64,
    lambda: f64,
    ns: &[usize],
    tol: &Tolerances,
) -> Result<VerificationReport> {
    let started = Instant::now();
    let z0 = match target {
        BeTarget::Kn => None,
        BeTarget::WnZ0 => Some(cpr::z0(alpha, lambda)?),
    };
    let distances = ns
        .par_iter()
        .map(|&n| match z0 {
            None => exact_clt_distance(alpha, lambda, n),
            Some(z) => exact_wn_distance(alpha, n, z),
        })
        .collect::<Result<Vec<f64>>>()?;
    let fit = fit_be_rate(ns, &distances)?;
    let label = match target {
        BeTarget::Kn => "free-exponent slope of exact K_n Kolmogorov distance",
        BeTarget::WnZ0 => "free-exponent slope of exact W_n(z0) Kolmogorov distance",
    };
    Ok(VerificationReport::new(
        Experiment::BeRate,
        label,
        GridPoint::over(alpha, lambda, ns),
        fit.slope,
        tol.be_slope,
        fit.slope <= tol.be_slope && fit.envelope_holds,
        started,
    )
    .with_series(ns, &distances)
    .with_extra("intercept", fit.intercept)
    .with_extra("c_hat", fit.c_hat)
    .with_extra("c_ls", fit.c_ls))
}

/// Both coherence identities at every `(alpha, lambda)`.
pub fn run_coherence(
    alphas: &[f64],
    lambdas: &[f64],
    tol: &Tolerances,
) -> Result<Vec<VerificationReport>> {
    let mut out = Vec::new();
    for &alpha in alphas {
        for &lambda in lambdas {
            let started = Instant::now();
            let gp = GridPoint::constants(alpha, lambda);
            let (mean_res, var_res) = match cpr::cpr_constants(alpha, lambda) {
                Ok(c) => (c.mean_residual.abs(), c.var_residual.abs()),
                Err(CprError::Coherence { mean, var }) => (mean.abs(), var.abs()),
                Err(e) => return Err(e.into()),
            };
            out.push(
                VerificationReport::new(
                    Experiment::Coherence,
                    "|mu(z0) - m|",
                    gp,
                    mean_res,
                    tol.coherence_mean,
                    mean_res <= tol.coherence_mean,
                    started,
                ),
            );
            out.push(VerificationReport::new(
                Experiment::Coherence,
                "|sigma2(z0) + Sigma2 mu'(z0)^2 - s2|",
                gp,
                var_res,
                tol.coherence_var,
                var_res <= tol.coherence_var,
                started,
            ));
        }
    }
    Ok(out)
}

/// How the surrogate draws of `Z_n` are placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixtureSampling {
    /// Independent draws.
    Iid,
    /// One draw per cell of an `m1 x m2 = draws` grid over the two Gamma
    /// uniforms, jittered inside each cell.
    Stratified,
}

/// Largest divisor of `draws` not above its square root.
fn grid_rows(draws: usize) -> usize {
    let mut r = (draws as f64).sqrt() as usize;
    while r > 1 && !draws.is_multiple_of(r) {
        r -= 1;
    }
    r.max(1)
}

/// Monte Carlo mixture `E[P(R(alpha, n, Z) = k)]` over surrogate draws of
/// `Z_n`, with the per-atom standard errors of an iid estimate (an upper
/// bound for the stratified one).
pub fn surrogate_mixture(
    alpha: f64,
    lambda: f64,
    n: usize,
    draws: usize,
    stream: RngStream,
    sampling: MixtureSampling,
) -> Result<(DiscreteDist, Vec<f64>)> {
    if draws < 2 {
        return Err(VerifyError::Invalid("mixture needs at least two draws".into()));
    }
    let table = LogGfcTable::build_row(alpha, n)?;
    let row = table.row(n)?;
    let surrogate = ZnSurrogate::new(alpha, lambda, n)?;
    let (blocks, block_len) = match sampling {
        MixtureSampling::Iid => (draws.div_ceil(samplers::CHUNK), samplers::CHUNK),
        MixtureSampling::Stratified => {
            let rows = grid_rows(draws);
            (rows, draws / rows)
        }
    };
    let parts = (0..blocks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream.child(c as u64).rng();
            let len = block_len.min(draws - c * block_len);
            let mut sum = vec![0.0; n];
            let mut sq = vec![0.0; n];
            let mut lp = vec![0.0; n];
            for j in 0..len {
                let z = match sampling {
                    MixtureSampling::Iid => surrogate.sample(&mut rng),
                    MixtureSampling::Stratified => {
                        let u1 = (c as f64 + rng.random::<f64>()) / blocks as f64;
                        let u2 = (j as f64 + rng.random::<f64>()) / len as f64;
                        surrogate.from_uniforms(u1, u2)?
                    }
                };
                let ln_z = z.ln();
                for (i, (slot, c)) in lp.iter_mut().zip(row).enumerate() {
                    *slot = c + (i + 1) as f64 * ln_z;
                }
                let norm = log_sum_exp(&lp);
                for i in 0..n {
                    let p = (lp[i] - norm).exp();
                    sum[i] += p;
                    sq[i] += p * p;
                }
            }
            Ok((sum, sq))
        })
        .collect::<Result<Vec<(Vec<f64>, Vec<f64>)>>>()?;
    let mut sum = vec![NeumaierSum::default(); n];
    let mut sq = vec![NeumaierSum::default(); n];
    for (s, q) in &parts {
        for i in 0..n {
            sum[i].add(s[i]);
            sq[i].add(q[i]);
        }
    }
    let d = draws as f64;
    let mut probs = Vec::with_capacity(n);
    let mut stderr = Vec::with_capacity(n);
    for i in 0..n {
        let mean = sum[i].value() / d;
        let var = ((sq[i].value() / d - mean * mean) * d / (d - 1.0)).max(0.0);
        probs.push(mean);
        stderr.push((var / d).sqrt());
    }
    Ok((DiscreteDist::from_probs(1, &probs), stderr))
}

/// TV between the exact law of `K_n` and the surrogate mixture, against
/// `mixture_tv` plus a three-sigma Monte Carlo allowance.
pub fn run_mixture_check(
    alpha: f64,
    lambda: f64,
    n: usize,
    draws: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<VerificationReport> {
    let started = Instant::now();
    let label = "TV(pmf K_n, surrogate mixture of R(alpha, n, Z))";
    let gp = GridPoint::at(alpha, lambda, n);
    if n == 1 {
        let mut r = VerificationReport::new(Experiment::Mixture, label, gp, 0.0, tol.mixture_tv, true, started);
        r.degenerate = true;
        return Ok(r);
    }
    let params = ModelParams::new(alpha, lambda, n)?;
    let exact = model::pmf_kn(&params, None)?;
    let stream = stream_for(seed, Experiment::Mixture, alpha, lambda, n);
    let (mix, stderr) = surrogate_mixture(alpha, lambda, n, draws, stream, MixtureSampling::Stratified)?;
    let tv = exact.total_variation(&mix);
    let budget = 0.5 * 3.0 * stderr.iter().sum::<f64>();
    let tolerance = tol.mixture_tv + budget;
    Ok(
        VerificationReport::new(Experiment::Mixture, label, gp, tv, tolerance, tv <= tolerance, started)
            .with_stream(stream)
            .with_extra("mc_budget", budget),
    )
}

/// `E[(K_n - E K_n)^4] / n^2` along `ns`; statistic is the largest relative
/// deviation from the median.
pub fn run_moments4(
    points: &[(f64, f64)],
    ns: &[usize],
    tol: &Tolerances,
) -> Result<Vec<VerificationReport>> {
    points
        .iter()
        .map(|&(alpha, lambda)| {
            let started = Instant::now();
            let ratios = model::central4_asym_check(alpha, lambda, ns)?;
            let spread = relative_spread(&ratios).ok_or(VerifyError::Empty)?;
            Ok(VerificationReport::new(
                Experiment::Moment4,
                "max |r_n / median - 1|, r_n = E[(K_n - E K_n)^4] / n^2",
                GridPoint::over(alpha, lambda, ns),
                spread,
                tol.moment4_spread,
                spread < tol.moment4_spread,
                started,
            )
            .with_series(ns, &ratios))
        })
        .collect()
}

fn relative_spread(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len().is_multiple_of(2) {
        0.5 * (sorted[mid - 1] + sorted[mid])
    } else {
        sorted[mid]
    };
    values
        .iter()
        .map(|v| (v / median - 1.0).abs())
        .reduce(f64::max)
}

/// Largest `e_{i+1} / e_i - 1` over consecutive grid points with
/// `n_i >= from`.
fn max_growth(ns: &[usize], errors: &[f64], from: usize) -> f64 {
    ns.windows(2)
        .zip(errors.windows(2))
        .filter(|(n, _)| n[0] >= from)
        .map(|(_, e)| e[1] / e[0] - 1.0)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `|E K_n - n m|` and `|Var K_n - n s2|` along `ns`; statistic is the
/// largest relative growth per grid step from `moment_growth_from` on.
pub fn run_moment_expansion(
    points: &[(f64, f64)],
    ns: &[usize],
    tol: &Tolerances,
) -> Result<Vec<VerificationReport>> {
    let mut out = Vec::new();
    for &(alpha, lambda) in points {
        let started = Instant::now();
        let reports = ns
            .par_iter()
            .map(|&n| model::moments_exact(&ModelParams::new(alpha, lambda, n)?))
            .collect::<std::result::Result<Vec<_>, ModelError>>()?;
        let mean_err: Vec<f64> = reports.iter().map(|r| (r.mean_exact - r.mean_asym).abs()).collect();
        let var_err: Vec<f64> = reports.iter().map(|r| (r.var_exact - r.var_asym).abs()).collect();
        for (label, errs) in [("|E K_n - n m|", &mean_err), ("|Var K_n - n s2|", &var_err)] {
            let growth = max_growth(ns, errs, tol.moment_growth_from);
            if !growth.is_finite() {
                return Err(VerifyError::InsufficientPoints { needed: 2, got: 1 });
            }
            out.push(
                VerificationReport::new(
                    Experiment::MomentExpansion,
                    &format!("max growth per step of {label}"),
                    GridPoint::over(alpha, lambda, ns),
                    growth,
                    tol.moment_growth,
                    growth <= tol.moment_growth,
                    started,
                )
                .with_series(ns, errs)
                .with_extra("max_abs", errs.iter().copied().fold(0.0, f64::max)),
            );
        }
    }
    Ok(out)
}

/// `E[Z_n] / n - z0` and `Var(Z_n) / n - Sigma2` along a doubling grid; each
/// drift must halve when `n` doubles (`|d_n / d_{2n} - 2| <= zn_ratio`).
/// Also records `E[(Z_n - E Z_n)^4] / n^2`.
pub fn run_zn_moments(
    points: &[(f64, f64)],
    ns: &[usize],
    tol: &Tolerances,
) -> Result<Vec<VerificationReport>> {
    if ns.windows(2).any(|w| w[1] != 2 * w[0]) {
        return Err(VerifyError::Invalid("Z_n grid must double".into()));
    }
    let mut out = Vec::new();
    for &(alpha, lambda) in points {
        let started = Instant::now();
        let z0 = cpr::z0(alpha, lambda)?;
        let big = cpr::sigma2_big(alpha, lambda)?;
        let moments = ns
            .iter()
            .map(|&n| cpr::zn_moments(alpha, lambda, n))
            .collect::<std::result::Result<Vec<_>, CprError>>()?;
        let mean_drift: Vec<f64> = ns.iter().zip(&moments).map(|(&n, m)| m.mean / n as f64 - z0).collect();
        let var_drift: Vec<f64> = ns.iter().zip(&moments).map(|(&n, m)| m.var / n as f64 - big).collect();
        let c4: Vec<f64> = ns
            .iter()
            .zip(&moments)
            .map(|(&n, m)| m.central4 / (n as f64 * n as f64))
            .collect();
        for (label, drift) in [("E[Z_n]/n - z0", &mean_drift), ("Var(Z_n)/n - Sigma2", &var_drift)] {
            let worst = drift
                .windows(2)
                .map(|w| (w[0] / w[1] - 2.0).abs())
                .fold(f64::NEG_INFINITY, f64::max);
            if !worst.is_finite() {
                return Err(VerifyError::InsufficientPoints { needed: 2, got: ns.len() });
            }
            out.push(
                VerificationReport::new(
                    Experiment::ZnMoments,
                    &format!("max |d_n / d_2n - 2| for d_n = {label}"),
                    GridPoint::over(alpha, lambda, ns),
                    worst,
                    tol.zn_ratio,
                    worst <= tol.zn_ratio,
                    started,
                )
                .with_series(ns, drift)
                .with_extra("max_central4_over_n2", c4.iter().copied().fold(0.0, f64::max)),
            );
        }
    }
    Ok(out)
}

/// A named group of experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
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

impl Suite {
    pub const ALL: [Suite; 9] = [
        Suite::Lln,
        Suite::Clt,
        Suite::Be,
        Suite::Coherence,
        Suite::Mixture,
        Suite::Moments4,
        Suite::Moments,
        Suite::Zn,
        Suite::All,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Lln => "lln",
            Suite::Clt => "clt",
            Suite::Be => "be",
            Suite::Coherence => "coherence",
            Suite::Mixture => "mixture",
            Suite::Moments4 => "moments4",
            Suite::Moments => "moments",
            Suite::Zn => "zn",
            Suite::All => "all",
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = VerifyError;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| VerifyError::Invalid(format!("unknown suite {s:?}")))
    }
}

/// `start, start * factor, ...` up to and including `stop`.
pub fn geometric_grid(start: usize, stop: usize, factor: usize) -> Vec<usize> {
    let mut out = Vec::new();
    if start == 0 || factor < 2 {
        return out;
    }
    let mut n = start;
    while n <= stop {
        out.push(n);
        match n.checked_mul(factor) {
            Some(next) => n = next,
            None => break,
        }
    }
    out
}

/// Grids, draw counts and tolerances for every suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    pub seed: u64,
    pub tolerances: Tolerances,
    pub coherence_alphas: Vec<f64>,
    pub coherence_lambdas: Vec<f64>,
    pub lln_points: Vec<(f64, f64)>,
    pub lln_n: usize,
    pub lln_draws: usize,
    pub clt_points: Vec<(f64, f64)>,
    pub clt_ns: Vec<usize>,
    pub clt_empirical: Option<EmpiricalClt>,
    pub be_kn_points: Vec<(f64, f64)>,
    pub be_wn_points: Vec<(f64, f64)>,
    pub be_ns: Vec<usize>,
    pub mixture_point: (f64, f64),
    pub mixture_ns: Vec<usize>,
    pub mixture_draws: usize,
    pub moments4_points: Vec<(f64, f64)>,
    pub moments4_ns: Vec<usize>,
    pub moments_points: Vec<(f64, f64)>,
    pub moments_ns: Vec<usize>,
    pub zn_points: Vec<(f64, f64)>,
    pub zn_ns: Vec<usize>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        let clt_points = vec![(0.0, 1.0), (0.5, 1.0), (0.3, 2.0)];
        VerifyConfig {
            seed: 1,
            tolerances: Tolerances::default(),
            coherence_alphas: (1..=9).map(|i| i as f64 / 10.0).collect(),
            coherence_lambdas: vec![0.1, 0.5, 1.0, 2.0, 10.0],
            lln_points: clt_points.clone(),
            lln_n: 10_000,
            lln_draws: 10_000,
            clt_points,
            clt_ns: geometric_grid(1 << 7, 1 << 13, 2),
            clt_empirical: Some(EmpiricalClt {
                n: 512,
                draws: 100_000,
            }),
            be_kn_points: vec![(0.0, 1.0), (0.5, 1.0)],
            be_wn_points: vec![(0.5, 1.0)],
            be_ns: geometric_grid(1 << 7, 1 << 14, 2),
            mixture_point: (0.5, 1.0),
            mixture_ns: vec![50, 200],
            mixture_draws: 100_000,
            moments4_points: vec![(0.0, 1.0), (0.5, 1.0)],
            moments4_ns: vec![250, 500, 1000, 2000],
            moments_points: vec![(0.0, 1.0), (0.5, 1.0)],
            moments_ns: geometric_grid(1 << 8, 1 << 16, 2),
            zn_points: vec![(0.5, 1.0)],
            zn_ns: geometric_grid(100, 100_000, 2),
        }
    }
}

/// Runs one suite (or all of them) under `config`.
pub fn run_suite(suite: Suite, config: &VerifyConfig) -> Result<Vec<VerificationReport>> {
    let tol = &config.tolerances;
    let seed = config.seed;
    Ok(match suite {
        Suite::Lln => run_lln(&config.lln_points, config.lln_n, config.lln_draws, seed, tol)?,
        Suite::Clt => run_clt(&config.clt_points, &config.clt_ns, config.clt_empirical, seed, tol)?,
        Suite::Be => {
            let mut out = Vec::new();
            for &(a, l) in &config.be_kn_points {
                out.push(run_be(BeTarget::Kn, a, l, &config.be_ns, tol)?);
            }
            for &(a, l) in &config.be_wn_points {
                out.push(run_be(BeTarget::WnZ0, a, l, &config.be_ns, tol)?);
            }
            out
        }
        Suite::Coherence => run_coherence(&config.coherence_alphas, &config.coherence_lambdas, tol)?,
        Suite::Mixture => {
            let (a, l) = config.mixture_point;
            config
                .mixture_ns
                .iter()
                .map(|&n| run_mixture_check(a, l, n, config.mixture_draws, seed, tol))
                .collect::<Result<Vec<_>>>()?
        }
        Suite::Moments4 => run_moments4(&config.moments4_points, &config.moments4_ns, tol)?,
        Suite::Moments => run_moment_expansion(&config.moments_points, &config.moments_ns, tol)?,
        Suite::Zn => run_zn_moments(&config.zn_points, &config.zn_ns, tol)?,
        Suite::All => {
            let mut out = Vec::new();
            for s in &Suite::ALL[..Suite::ALL.len() - 1] {
                out.extend(run_suite(*s, config)?);
            }
            out
        }
    })
}
