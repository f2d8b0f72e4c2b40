//! Exact law and moments of the block count `K_n` with `theta = lambda n`,
//! plus the first- and second-order constants of its linear growth.

use serde::Serialize;
use thiserror::Error;

use crate::dist::DiscreteDist;
use crate::gfc::{advance_log_row, GfcError, LogGfcTable, N_MAX_LIMIT};
use crate::numerics::{
    digamma, log_gamma_ratio, log_rising_factorial, trigamma, CancellationSum, NumericsError,
};

/// Largest `n` for which pmf summation backs the exact moments.
pub const PMF_MOMENT_LIMIT: usize = 2000;
/// Relative-error ceiling for the closed-form moment formulas.
pub const MOMENT_PRECISION: f64 = 1e-6;
/// Below this `alpha` the constants switch to their `alpha = 0` limits in
/// the continuity checks.
pub const ALPHA_ZERO_CUTOFF: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("table built for alpha = {table} but model has alpha = {model}")]
    TableMismatch { table: f64, model: f64 },
    #[error("gfc table covers n_max = {n_max} but row {n} is needed")]
    TableTooSmall { n: usize, n_max: usize },
    #[error("n = {0} exceeds the exact-computation guard {N_MAX_LIMIT}")]
    Overflow(usize),
    #[error("falling factorial moment order {0} outside 1..=4")]
    InvalidOrder(u32),
    #[error("closed form lost precision: estimated relative error {0:e}")]
    Precision(f64),
    #[error(transparent)]
    Gfc(#[from] GfcError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Discount `alpha`, linear-regime slope `lambda` and sample size `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    alpha: f64,
    lambda: f64,
    n: usize,
}

impl ModelParams {
    pub fn new(alpha: f64, lambda: f64, n: usize) -> Result<Self> {
        check_constants_domain(alpha, lambda)?;
        if n == 0 {
            return Err(ModelError::InvalidParams("n must be at least 1".into()));
        }
        Ok(ModelParams { alpha, lambda, n })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn theta(&self) -> f64 {
        self.lambda * self.n as f64
    }

    pub fn with_n(&self, n: usize) -> Result<Self> {
        Self::new(self.alpha, self.lambda, n)
    }
}

fn check_constants_domain(alpha: f64, lambda: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(ModelError::InvalidParams(format!(
            "alpha = {alpha} must lie in [0, 1)"
        )));
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(ModelError::InvalidParams(format!(
            "lambda = {lambda} must be positive and finite"
        )));
    }
    Ok(())
}

/// Limit of `E[K_n] / n`.
pub fn m_const(alpha: f64, lambda: f64) -> Result<f64> {
    check_constants_domain(alpha, lambda)?;
    let l = (1.0 / lambda).ln_1p();
    if alpha == 0.0 {
        return Ok(lambda * l);
    }
    // (lambda / alpha) [(1 + 1/lambda)^alpha - 1], via expm1 so the alpha -> 0
    // branch is continuous to rounding
    Ok(lambda * (alpha * l).exp_m1() / alpha)
}

/// Limit of `Var(K_n) / n`.
pub fn s2_const(alpha: f64, lambda: f64) -> Result<f64> {
    check_constants_domain(alpha, lambda)?;
    let l = (1.0 / lambda).ln_1p();
    if alpha == 0.0 {
        return Ok(lambda * l - lambda / (lambda + 1.0));
    }
    // (lambda/alpha)[c^{2a}(1 - a/(1+lambda)) - c^a]
    //   = lambda [c^a (c^a - 1)/a - c^{2a}/(1+lambda)]
    let ca = (alpha * l).exp();
    Ok(lambda * (ca * (alpha * l).exp_m1() / alpha - ca * ca / (1.0 + lambda)))
}

/// `ln |s(n, k)|` for `k = 1..=n` (index `k - 1`), unsigned Stirling numbers of
/// the first kind.
pub fn log_stirling1_row(n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(ModelError::InvalidParams("n must be at least 1".into()));
    }
    if n > N_MAX_LIMIT {
        return Err(ModelError::Overflow(n));
    }
    let mut prev = Vec::with_capacity(n);
    let mut next = Vec::with_capacity(n);
    prev.push(0.0);
    for m in 1..n {
        next.clear();
        next.resize(m + 1, f64::NEG_INFINITY);
        let ln_m = (m as f64).ln();
        advance_log_row(&prev, &mut next, |_| ln_m, |_| 0.0);
        std::mem::swap(&mut prev, &mut next);
    }
    Ok(prev)
}

/// Law of `K_n` on `{1, ..., n}`.
///
/// With `alpha > 0` and a table, row `n` of the table is combined as
/// `ln C(n,k) - k ln alpha + ln [theta]_{(k,alpha)} - ln [theta]_(n)`.
/// Without a table the same triangular recursion is run with the
/// `theta`-dependent weights folded into each row (see
/// [`log_pmf_kn_folded`]), which keeps every intermediate an `O(1)`
/// log-probability. For `alpha = 0` the unsigned Stirling row is used and the
/// table is ignored.
pub fn pmf_kn(params: &ModelParams, table: Option<&LogGfcTable>) -> Result<DiscreteDist> {
    let n = params.n;
    if n > N_MAX_LIMIT {
        return Err(ModelError::Overflow(n));
    }
    let theta = params.theta();
    let log_norm = log_rising_factorial(theta, n as u64, 1.0)?;
    if params.alpha == 0.0 {
        let row = log_stirling1_row(n)?;
        let ln_theta = theta.ln();
        let lp = row
            .iter()
            .enumerate()
            .map(|(i, &s)| s + (i + 1) as f64 * ln_theta - log_norm)
            .collect();
        return Ok(DiscreteDist::from_log_probs(1, lp));
    }

    let Some(table) = table else {
        return Ok(DiscreteDist::from_log_probs(
            1,
            log_pmf_kn_folded(params.alpha, theta, n),
        ));
    };
    if table.alpha() != params.alpha {
        return Err(ModelError::TableMismatch {
            table: table.alpha(),
            model: params.alpha,
        });
    }
    let row = table.row(n).map_err(|e| match e {
        GfcError::Index { n_max, .. } | GfcError::RowNotRetained { n_max, .. } => {
            ModelError::TableTooSmall { n, n_max }
        }
        other => other.into(),
    })?;
    Ok(DiscreteDist::from_log_probs(
        1,
        log_pmf_from_gfc_row(row, params.alpha, theta, log_norm),
    ))
}

/// Log-pmf of `K_n` by the generalized-factorial recursion divided through by
/// `alpha^k [theta]_(m) / [theta]_{(k,alpha)}` at every row `m`:
///
/// ```text
/// W(m + 1, k) = [(m - k alpha) W(m, k) + (theta + (k - 1) alpha) W(m, k - 1)] / (theta + m)
/// ```
///
/// `W(m, .)` is the law of `K_m` at the fixed `theta`, so entries stay near
/// zero in log scale and rounding does not build up with `n`.
pub fn log_pmf_kn_folded(alpha: f64, theta: f64, n: usize) -> Vec<f64> {
    let mut prev = Vec::with_capacity(n);
    let mut next = Vec::with_capacity(n);
    prev.push(0.0);
    for m in 1..n {
        next.clear();
        next.resize(m + 1, f64::NEG_INFINITY);
        let mf = m as f64;
        let ln_total = (theta + mf).ln();
        advance_log_row(
            &prev,
            &mut next,
            |k| (mf - k as f64 * alpha).ln() - ln_total,
            |k| (theta + (k - 1) as f64 * alpha).ln() - ln_total,
        );
        std::mem::swap(&mut prev, &mut next);
    }
    prev
}

/// `ln C(n,k) - k ln alpha + ln [theta]_{(k, alpha)} - ln [theta]_(n)`.
fn log_pmf_from_gfc_row(row: &[f64], alpha: f64, theta: f64, log_norm: f64) -> Vec<f64> {
    let ln_alpha = alpha.ln();
    let mut log_rising = 0.0;
    let mut comp = 0.0;
    row.iter()
        .enumerate()
        .map(|(i, &c)| {
            // running compensated sum of ln(theta + j alpha), j < k
            let term = (theta + i as f64 * alpha).ln();
            let y = term - comp;
            let t = log_rising + y;
            comp = (t - log_rising) - y;
            log_rising = t;
            c - (i + 1) as f64 * ln_alpha + log_rising - log_norm
        })
        .collect()
}

/// `E[(K_n)_{down j}]` with an estimate of its relative error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FallingMoment {
    pub value: f64,
    pub rel_error: f64,
}

/// `ln Gamma(A + a) Gamma(theta) / (Gamma(theta + a) Gamma(A))` with
/// `A = theta + n`; equals `ln [theta + a]_(n) / [theta]_(n)`.
fn log_shift_ratio(theta: f64, n: f64, a: f64) -> Result<f64> {
    Ok(log_gamma_ratio(theta + n, a)? - log_gamma_ratio(theta, a)?)
}

/// Above this `n` the curvature terms fall back to Gamma ratios.
const DIRECT_CURVATURE_LIMIT: usize = 10_000_000;

/// `ln(1 + k x) - k ln(1 + x)` without the cancellation of the naive form.
fn log_curvature_term(k: f64, x: f64) -> f64 {
    if (k * x).abs() < 0.1 {
        // sum_{j >= 2} (-1)^{j+1} (k^j - k) x^j / j
        let mut acc = 0.0;
        let mut kj = k;
        let mut xj = x;
        for j in 2..60 {
            kj *= k;
            xj *= -x;
            let term = (kj - k) * xj / j as f64;
            acc += term;
            if term.abs() <= 1e-18 * acc.abs() {
                break;
            }
        }
        acc
    } else {
        (k * x).ln_1p() - k * x.ln_1p()
    }
}

/// Log-ratios `ell_i = ln [theta + i alpha]_(n) / [theta]_(n)` for `i = 1..=4`
/// together with the curvatures `kappa_i = ell_i - i ell_1`.
///
/// The curvatures are `O(1/n)` differences of `O(1)` quantities; they are
/// summed term by term (`prod_m (1 + i x_m) / (1 + x_m)^i`,
/// `x_m = alpha / (theta + m)`) so they keep full relative precision.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ShiftRatios {
    pub ell: [f64; 5],
    pub kappa: [f64; 5],
}

impl ShiftRatios {
    pub(crate) fn new(theta: f64, n: usize, alpha: f64) -> Result<Self> {
        let nf = n as f64;
        let mut ell = [0.0; 5];
        for (i, slot) in ell.iter_mut().enumerate().skip(1) {
            *slot = log_shift_ratio(theta, nf, i as f64 * alpha)?;
        }
        let mut kappa = [0.0; 5];
        if n <= DIRECT_CURVATURE_LIMIT {
            let mut sums = [crate::numerics::NeumaierSum::default(); 5];
            for m in 0..n {
                let x = alpha / (theta + m as f64);
                for (i, s) in sums.iter_mut().enumerate().skip(2) {
                    s.add(log_curvature_term(i as f64, x));
                }
            }
            for i in 2..5 {
                kappa[i] = sums[i].value();
            }
        } else {
            for i in 2..5 {
                kappa[i] = ell[i] - i as f64 * ell[1];
            }
        }
        Ok(ShiftRatios { ell, kappa })
    }
}

pub fn falling_factorial_moment(params: &ModelParams, j: u32) -> Result<FallingMoment> {
    if !(1..=4).contains(&j) {
        return Err(ModelError::InvalidOrder(j));
    }
    let theta = params.theta();
    let n = params.n as f64;
    if params.alpha == 0.0 {
        // G^{(j)}(1) = j! e_j(p_1..p_n) for the Bernoulli product pgf
        let mut e = [1.0f64, 0.0, 0.0, 0.0, 0.0];
        for i in 0..params.n {
            let p = theta / (theta + i as f64);
            for r in (1..=j as usize).rev() {
                e[r] += e[r - 1] * p;
            }
        }
        let fact: f64 = (1..=j).map(f64::from).product();
        return Ok(FallingMoment {
            value: fact * e[j as usize],
            rel_error: n * f64::EPSILON,
        });
    }
    let alpha = params.alpha;
    let t = theta / alpha;
    let mut sum = crate::numerics::NeumaierSum::default();
    let mut abs_err = 0.0;
    let mut binom = 1.0;
    for i in 0..=j {
        if i > 0 {
            let a = i as f64 * alpha;
            let upper = log_gamma_ratio(theta + n, a)?;
            let lower = log_gamma_ratio(theta, a)?;
            let ell = upper - lower;
            let sign = if (j - i).is_multiple_of(2) { 1.0 } else { -1.0 };
            // the i = 0 term cancels against sum_i (-1)^{j-i} C(j,i) = 0
            sum.add(sign * binom * ell.exp_m1());
            // rounding in each Gamma ratio is relative to its own magnitude
            let ell_err = 8.0 * f64::EPSILON * (upper.abs() + lower.abs() + 1.0);
            abs_err += binom * ell_err * ell.exp();
        }
        binom = binom * f64::from(j - i) / f64::from(i + 1);
    }
    let prefactor = log_rising_factorial(t, u64::from(j), 1.0)?.exp();
    let value = sum.value();
    let rel_error = if value == 0.0 {
        f64::INFINITY
    } else {
        abs_err / value.abs()
    };
    if rel_error > MOMENT_PRECISION {
        return Err(ModelError::Precision(rel_error));
    }
    Ok(FallingMoment {
        value: prefactor * value,
        rel_error,
    })
}

/// Exact and first-order moments of `K_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentReport {
    pub mean_exact: f64,
    pub var_exact: f64,
    pub mean_asym: f64,
    pub var_asym: f64,
    /// Exact fourth central moment, only for `n <= PMF_MOMENT_LIMIT`.
    pub central4_exact: Option<f64>,
    /// Estimated relative error of `var_exact`.
    pub var_rel_error: f64,
}

/// Closed-form mean and variance; returns the variance relative-error
/// estimate alongside.
fn closed_form_mean_var(params: &ModelParams) -> Result<(f64, f64, f64)> {
    let theta = params.theta();
    let n = params.n as f64;
    if params.alpha == 0.0 {
        let d = digamma(theta + n)? - digamma(theta)?;
        let t = trigamma(theta + n)? - trigamma(theta)?;
        let mean = theta * d;
        // G'' + G' - G'^2 collapses to theta d + theta^2 (psi1(theta+n) - psi1(theta))
        let var = mean + theta * theta * t;
        return Ok((mean, var, 64.0 * f64::EPSILON));
    }
    let alpha = params.alpha;
    let t = theta / alpha;
    let ratios = ShiftRatios::new(theta, params.n, alpha)?;
    let l1 = ratios.ell[1];
    let k2 = ratios.kappa[2];
    let r1 = l1.exp();
    let mean = t * l1.exp_m1();
    // Var = t^2 (r2 - r1^2) + t (r2 - r1)
    //     = t^2 r1^2 expm1(kappa_2) + t r1 expm1(ell_1 + kappa_2)
    let mut sum = CancellationSum::default();
    sum.add(t * t * r1 * r1 * k2.exp_m1());
    sum.add(t * r1 * (l1 + k2).exp_m1());
    let rel = sum.relative_error(8.0 * f64::EPSILON);
    Ok((mean, sum.value(), rel))
}

pub fn moments_exact(params: &ModelParams) -> Result<MomentReport> {
    let m = m_const(params.alpha, params.lambda)?;
    let s2 = s2_const(params.alpha, params.lambda)?;
    let n = params.n as f64;
    let (mut mean, mut var, mut rel) = closed_form_mean_var(params)?;
    let pmf = if params.n <= PMF_MOMENT_LIMIT {
        Some(pmf_kn(params, None)?)
    } else {
        None
    };
    if rel > MOMENT_PRECISION {
        match &pmf {
            Some(p) => {
                mean = p.mean();
                var = p.variance();
                rel = (params.n as f64) * f64::EPSILON;
            }
            None => return Err(ModelError::Precision(rel)),
        }
    }
    Ok(MomentReport {
        mean_exact: mean,
        var_exact: var,
        mean_asym: n * m,
        var_asym: n * s2,
        central4_exact: pmf.map(|p| p.central_moment(4)),
        var_rel_error: rel,
    })
}

/// `E[(K_n - E K_n)^4] / n^2` along `ns`, each by exact pmf summation.
pub fn central4_asym_check(alpha: f64, lambda: f64, ns: &[usize]) -> Result<Vec<f64>> {
    ns.iter()
        .map(|&n| {
            if n > PMF_MOMENT_LIMIT {
                return Err(ModelError::InvalidParams(format!(
                    "n = {n} above the exact fourth-moment cap {PMF_MOMENT_LIMIT}"
                )));
            }
            let params = ModelParams::new(alpha, lambda, n)?;
            let pmf = pmf_kn(&params, None)?;
            Ok(pmf.central_moment(4) / (n as f64 * n as f64))
        })
        .collect()
}
