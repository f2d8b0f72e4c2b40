//! Random generation of `K_n` by the Chinese restaurant process, the
//! Bernoulli-sum representation at `alpha = 0`, truncated stick-breaking and
//! inverse-CDF draws from the exact law, plus the Gamma-power surrogate for
//! `Z_n`.
//!
//! Every draw is driven by an [`RngStream`]: a `(seed, stream_id)` pair
//! mapped onto a ChaCha8 keystream. Monte Carlo batches are cut into
//! fixed-size chunks, chunk `c` reading child stream `c`, so results do not
//! depend on how many threads run them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma};
use rayon::prelude::*;
use statrs::function::gamma::gamma_ur;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::DiscreteDist;
use crate::model::{pmf_kn, ModelError, ModelParams};

/// Draws per deterministic chunk in [`monte_carlo`].
pub const CHUNK: usize = 1024;
/// Stick budget per draw in [`sample_stick_breaking`] is
/// `STICK_BUDGET_BASE + STICK_BUDGET_PER_ITEM * n`.
pub const STICK_BUDGET_BASE: usize = 256;
pub const STICK_BUDGET_PER_ITEM: usize = 2;
/// Default residual-mass tolerance for stick-breaking.
pub const DEFAULT_TRUNC_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("route {route} needs alpha = 0, got alpha = {alpha}")]
    InvalidAlpha { route: &'static str, alpha: f64 },
    #[error("invalid sampler parameter: {0}")]
    InvalidParam(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, SamplerError>;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Mixes a sequence of words into one 64-bit id.
pub fn hash_words(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x243f_6a88_85a3_08d3, |h, &w| splitmix64(h ^ splitmix64(w)))
}

/// A reproducible random stream: ChaCha8 keyed by `seed`, on stream
/// `stream_id`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngStream { seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Independent sub-stream `index`, same seed.
    pub fn child(&self, index: u64) -> RngStream {
        RngStream {
            seed: self.seed,
            stream_id: hash_words(&[self.stream_id, index]),
        }
    }
}

/// Outcome of one partition draw.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PartitionSample {
    pub k: usize,
    /// Block sizes in order of creation, when requested.
    pub block_sizes: Option<Vec<usize>>,
}

/// Chinese restaurant process with reusable scratch space.
///
/// With `i` items seated in `k` blocks, item `i + 1` opens a new block with
/// weight `theta + k alpha` and joins block `b` with weight `n_b - alpha`.
/// The join weight is split as `(1 - alpha) + (n_b - 1)`: a uniform block, or
/// the block of a uniform item among those that did not open their block.
/// Each seat therefore costs O(1).
#[derive(Debug, Clone)]
pub struct CrpSampler {
    alpha: f64,
    theta: f64,
    n: usize,
    sizes: Vec<usize>,
    followers: Vec<u32>,
}

impl CrpSampler {
    pub fn new(params: ModelParams) -> Self {
        Self::with_theta(params.alpha(), params.theta(), params.n())
    }

    /// CRP for `n` items at an arbitrary `theta > -alpha`.
    pub fn with_theta(alpha: f64, theta: f64, n: usize) -> Self {
        CrpSampler {
            alpha,
            theta,
            n,
            sizes: Vec::new(),
            followers: Vec::new(),
        }
    }

    fn run<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let theta = self.theta;
        let alpha = self.alpha;
        self.sizes.clear();
        self.followers.clear();
        if self.n == 0 {
            return;
        }
        self.sizes.push(1);
        for i in 1..self.n {
            let k = self.sizes.len();
            let kf = k as f64;
            let new_w = theta + kf * alpha;
            let uniform_w = kf * (1.0 - alpha);
            let u = rng.random::<f64>() * (theta + i as f64);
            if u < new_w {
                self.sizes.push(1);
                continue;
            }
            let b = if u < new_w + uniform_w || self.followers.is_empty() {
                rng.random_range(0..k)
            } else {
                self.followers[rng.random_range(0..self.followers.len())] as usize
            };
            self.sizes[b] += 1;
            self.followers.push(b as u32);
        }
    }

    pub fn sample_k<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        self.run(rng);
        self.sizes.len()
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> PartitionSample {
        self.run(rng);
        PartitionSample {
            k: self.sizes.len(),
            block_sizes: Some(self.sizes.clone()),
        }
    }
}

/// One CRP partition with its block sizes.
pub fn sample_crp<R: Rng + ?Sized>(params: &ModelParams, rng: &mut R) -> PartitionSample {
    CrpSampler::new(*params).sample(rng)
}

/// `K_n = sum_i B_i` with independent `B_i ~ Bernoulli(theta / (theta + i - 1))`.
pub fn sample_bernoulli_sum<R: Rng + ?Sized>(params: &ModelParams, rng: &mut R) -> Result<usize> {
    if params.alpha() != 0.0 {
        return Err(SamplerError::InvalidAlpha {
            route: "bernoulli",
            alpha: params.alpha(),
        });
    }
    let theta = params.theta();
    let mut k = 1;
    for i in 1..params.n() {
        if rng.random::<f64>() * (theta + i as f64) < theta {
            k += 1;
        }
    }
    Ok(k)
}

/// Stick law `V_j ~ Beta(1 - alpha, theta + j alpha)`.
pub fn stick_distribution(params: &ModelParams, j: usize) -> Result<Beta<f64>> {
    Beta::new(1.0 - params.alpha(), params.theta() + j as f64 * params.alpha())
        .map_err(|e| SamplerError::InvalidParam(e.to_string()))
}

/// Number of distinct labels among `n` draws from truncated stick-breaking
/// weights.
///
/// Labels are placed by `n` uniforms read as tail masses: stick `j` owns
/// `(R_j, R_{j-1}]` with `R_j = prod_{l <= j} (1 - V_l)`. Sticks are drawn
/// until every uniform is placed or `R_j < trunc_tol / n`; uniforms left in
/// the residual each count as a fresh label, which overstates `K_n` by at
/// most `trunc_tol` in expectation.
///
/// For `alpha > 0` the residual decays only polynomially in `j`, so after
/// the stick budget the `m` uniforms still unplaced are finished exactly:
/// the renormalised remaining sticks are again stick-breaking weights with
/// `theta + j alpha`, and the labels they receive are a CRP of `m` items at
/// that concentration.
pub fn sample_stick_breaking<R: Rng + ?Sized>(
    params: &ModelParams,
    rng: &mut R,
    trunc_tol: f64,
) -> Result<usize> {
    let mut scratch = Vec::new();
    stick_breaking_with(params, rng, trunc_tol, &mut scratch)
}

fn stick_breaking_with<R: Rng + ?Sized>(
    params: &ModelParams,
    rng: &mut R,
    trunc_tol: f64,
    tails: &mut Vec<f64>,
) -> Result<usize> {
    Ok(stick_breaking_detail(params, rng, trunc_tol, tails)?.k)
}

/// One stick-breaking draw with its bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StickDraw {
    pub k: usize,
    pub sticks: usize,
    /// Uniforms finished by the CRP hand-over.
    pub completed: usize,
    /// Uniforms left in a residual below `trunc_tol / n`.
    pub truncated: usize,
}

pub fn stick_breaking_detail<R: Rng + ?Sized>(
    params: &ModelParams,
    rng: &mut R,
    trunc_tol: f64,
    tails: &mut Vec<f64>,
) -> Result<StickDraw> {
    if !(trunc_tol > 0.0 && trunc_tol <= 1e-3) {
        return Err(SamplerError::InvalidParam(format!(
            "trunc_tol = {trunc_tol} outside (0, 1e-3]"
        )));
    }
    let n = params.n();
    let alpha = params.alpha();
    let theta = params.theta();
    tails.clear();
    tails.extend((0..n).map(|_| 1.0 - rng.random::<f64>()));
    tails.sort_unstable_by(|a, b| b.total_cmp(a));
    let floor = trunc_tol / n as f64;
    let mut residual = 1.0;
    let mut next = 0;
    let mut k = 0;
    let budget = STICK_BUDGET_BASE + STICK_BUDGET_PER_ITEM * n;
    for j in 1..=budget {
        let beta = Beta::new(1.0 - alpha, theta + j as f64 * alpha)
            .map_err(|e| SamplerError::InvalidParam(e.to_string()))?;
        let v: f64 = beta.sample(rng);
        residual *= 1.0 - v;
        let start = next;
        while next < n && tails[next] > residual {
            next += 1;
        }
        if next > start {
            k += 1;
        }
        if next == n {
            return Ok(StickDraw {
                k,
                sticks: j,
                completed: 0,
                truncated: 0,
            });
        }
        if residual < floor {
            return Ok(StickDraw {
                k: k + (n - next),
                sticks: j,
                completed: 0,
                truncated: n - next,
            });
        }
    }
    let m = n - next;
    let tail_theta = theta + budget as f64 * alpha;
    let extra = CrpSampler::with_theta(alpha, tail_theta, m).sample_k(rng);
    Ok(StickDraw {
        k: k + extra,
        sticks: budget,
        completed: m,
        truncated: 0,
    })
}

/// Inverse-CDF draw by binary search on the prefix sums.
pub fn sample_discrete<R: Rng + ?Sized>(dist: &DiscreteDist, rng: &mut R) -> usize {
    let cdf = dist.cdf_values();
    let u = rng.random::<f64>() * dist.total_mass();
    let i = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
    dist.first() + i
}

/// `Gamma(shape, rate)`, Marsaglia-Tsang with the small-shape boost.
pub fn gamma(shape: f64, rate: f64) -> Result<Gamma<f64>> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(SamplerError::InvalidParam(format!("rate = {rate}")));
    }
    Gamma::new(shape, 1.0 / rate).map_err(|e| SamplerError::InvalidParam(e.to_string()))
}

/// Gamma-power surrogate `G1^{1-alpha} G2^alpha` for `Z_n`, with
/// `G1 ~ Gamma(rho n + 1/2, rate B)`, `rho = lambda (1 - alpha) / alpha`,
/// `B = (1 - alpha) alpha^{alpha/(1-alpha)}`, and `G2 ~ Gamma((lambda + 1) n, 1)`.
#[derive(Debug, Clone, Copy)]
pub struct ZnSurrogate {
    alpha: f64,
    shape1: f64,
    rate1: f64,
    shape2: f64,
    g1: Gamma<f64>,
    g2: Gamma<f64>,
}

impl ZnSurrogate {
    pub fn new(alpha: f64, lambda: f64, n: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(SamplerError::InvalidParam(format!(
                "alpha = {alpha} must lie in (0, 1)"
            )));
        }
        let nf = n as f64;
        let rho = lambda * (1.0 - alpha) / alpha;
        let b = (1.0 - alpha) * alpha.powf(alpha / (1.0 - alpha));
        let shape1 = rho * nf + 0.5;
        let shape2 = (lambda + 1.0) * nf;
        Ok(ZnSurrogate {
            alpha,
            shape1,
            rate1: b,
            shape2,
            g1: gamma(shape1, b)?,
            g2: gamma(shape2, 1.0)?,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let g1: f64 = self.g1.sample(rng);
        let g2: f64 = self.g2.sample(rng);
        ((1.0 - self.alpha) * g1.ln() + self.alpha * g2.ln()).exp()
    }
}

/// `ln P(shape, x)`, regularized lower incomplete gamma. Uses the power
/// series in log space for `x < shape + 1`, where `gamma_lr` underflows for
/// small `x`.
fn ln_gamma_lr(shape: f64, x: f64, ln_gamma_shape: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if x >= shape + 1.0 {
        return (-gamma_ur(shape, x)).ln_1p();
    }
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > 1e-17 * sum {
        term *= x / (shape + k);
        sum += term;
        k += 1.0;
    }
    shape * x.ln() - x - ln_gamma_shape - shape.ln() + sum.ln()
}

/// Quantile of `Gamma(shape, rate 1)`: safeguarded Newton on `t = ln x`,
/// solving `ln P(shape, e^t) = ln u` for `u <= 1/2` and
/// `Q(shape, e^t) = 1 - u` otherwise, inside an expanding bracket.
pub fn gamma_quantile(shape: f64, u: f64) -> Result<f64> {
    if !(shape > 0.0 && shape.is_finite()) || !(u > 0.0 && u < 1.0) {
        return Err(SamplerError::InvalidParam(format!(
            "gamma quantile needs shape > 0 and u in (0, 1), got {shape}, {u}"
        )));
    }
    let lg = crate::numerics::log_gamma(shape).map_err(|e| SamplerError::InvalidParam(e.to_string()))?;
    let upper = u > 0.5;
    let ln_u = u.ln();
    // f is increasing in t in both branches
    let f = |t: f64| {
        let x = t.exp();
        if upper {
            (1.0 - u) - gamma_ur(shape, x)
        } else {
            ln_gamma_lr(shape, x, lg) - ln_u
        }
    };
    let slope = |t: f64, ft: f64| {
        // d/dt P(shape, e^t) = x^shape e^{-x} / Gamma(shape)
        let ln_density = shape * t - t.exp() - lg;
        if upper {
            ln_density.exp()
        } else {
            (ln_density - (ft + ln_u)).exp()
        }
    };
    let mut lo = shape.ln() - 1.0;
    while f(lo) > 0.0 {
        lo -= 2.0 * (1.0 + lo.abs());
    }
    let mut hi = shape.ln() + 1.0;
    while f(hi) < 0.0 {
        hi += 1.0 + 0.5 * hi.abs();
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..200 {
        let ft = f(t);
        if ft == 0.0 {
            break;
        }
        if ft < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let mut next = t - ft / slope(t, ft);
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        let done = (next - t).abs() <= 1e-14 * t.abs().max(1.0) || hi - lo <= 1e-15 * t.abs().max(1.0);
        t = next;
        if done {
            break;
        }
    }
    Ok(t.exp())
}

impl ZnSurrogate {
    /// The surrogate as a function of two uniforms, through the Gamma
    /// quantiles. Used for stratified mixtures.
    pub fn from_uniforms(&self, u1: f64, u2: f64) -> Result<f64> {
        let g1 = gamma_quantile(self.shape1, u1)? / self.rate1;
        let g2 = gamma_quantile(self.shape2, u2)?;
        Ok(((1.0 - self.alpha) * g1.ln() + self.alpha * g2.ln()).exp())
    }
}

pub fn sample_zn_surrogate<R: Rng + ?Sized>(
    alpha: f64,
    lambda: f64,
    n: usize,
    rng: &mut R,
) -> Result<f64> {
    Ok(ZnSurrogate::new(alpha, lambda, n)?.sample(rng))
}

/// Runs `draws` calls of `f` in chunks of [`CHUNK`], chunk `c` on
/// `stream.child(c)`, and concatenates in chunk order. `init` builds per-worker
/// scratch state, which must not influence results.
pub fn monte_carlo<S, T, I, F>(stream: RngStream, draws: usize, init: I, f: F) -> Vec<T>
where
    T: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, &mut ChaCha8Rng) -> T + Sync + Send,
{
    let chunks = draws.div_ceil(CHUNK);
    let parts: Vec<Vec<T>> = (0..chunks)
        .into_par_iter()
        .map_init(&init, |state, c| {
            let mut rng = stream.child(c as u64).rng();
            let len = CHUNK.min(draws - c * CHUNK);
            (0..len).map(|_| f(state, &mut rng)).collect()
        })
        .collect();
    parts.into_iter().flatten().collect()
}

/// Fallible version of [`monte_carlo`]; the first error in chunk order wins.
pub fn try_monte_carlo<S, T, I, F>(stream: RngStream, draws: usize, init: I, f: F) -> Result<Vec<T>>
where
    T: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, &mut ChaCha8Rng) -> Result<T> + Sync + Send,
{
    monte_carlo(stream, draws, init, f).into_iter().collect()
}

/// How `K_n` is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    Crp,
    Bernoulli,
    Stick,
    Invcdf,
}

impl Route {
    pub const ALL: [Route; 4] = [Route::Crp, Route::Bernoulli, Route::Stick, Route::Invcdf];

    pub fn name(self) -> &'static str {
        match self {
            Route::Crp => "crp",
            Route::Bernoulli => "bernoulli",
            Route::Stick => "stick",
            Route::Invcdf => "invcdf",
        }
    }

    pub fn applies_to(self, params: &ModelParams) -> bool {
        self != Route::Bernoulli || params.alpha() == 0.0
    }
}

impl std::str::FromStr for Route {
    type Err = SamplerError;

    fn from_str(s: &str) -> Result<Self> {
        Route::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| SamplerError::InvalidParam(format!("unknown route {s:?}")))
    }
}

impl std::fmt::Display for Route {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// `draws` independent copies of `K_n` along `route`.
pub fn sample_k_batch(
    route: Route,
    params: &ModelParams,
    draws: usize,
    stream: RngStream,
    trunc_tol: f64,
) -> Result<Vec<usize>> {
    match route {
        Route::Crp => Ok(monte_carlo(
            stream,
            draws,
            || CrpSampler::new(*params),
            |s, rng| s.sample_k(rng),
        )),
        Route::Bernoulli => {
            if params.alpha() != 0.0 {
                return Err(SamplerError::InvalidAlpha {
                    route: "bernoulli",
                    alpha: params.alpha(),
                });
            }
            try_monte_carlo(stream, draws, || (), |_, rng| sample_bernoulli_sum(params, rng))
        }
        Route::Stick => try_monte_carlo(stream, draws, Vec::new, |tails, rng| {
            stick_breaking_with(params, rng, trunc_tol, tails)
        }),
        Route::Invcdf => {
            let dist = pmf_kn(params, None)?;
            Ok(monte_carlo(stream, draws, || (), |_, rng| sample_discrete(&dist, rng)))
        }
    }
}

/// Empirical law of integer draws on `{1, ..., n}`.
pub fn empirical_dist(draws: &[usize], n: usize) -> DiscreteDist {
    let mut counts = vec![0u64; n];
    for &k in draws {
        counts[k - 1] += 1;
    }
    let total = draws.len() as f64;
    let probs: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();
    DiscreteDist::from_probs(1, &probs)
}
