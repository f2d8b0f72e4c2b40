//! Compound-Poisson side of the model: the root `tau(z)`, the mean and
//! variance functions of `R_n(z)`, the tilt constants `z0` and `Sigma2`, the
//! law of `R(alpha, n, z)` and the exact moments of `Z_n`.

use serde::Serialize;
use thiserror::Error;

use crate::dist::DiscreteDist;
use crate::gfc::{GfcError, LogGfcTable};
use crate::model::{m_const, s2_const, ModelError, ShiftRatios};
use crate::numerics::log_sum_exp;

/// Newton iteration cap for [`tau_solve`].
pub const TAU_MAX_ITER: usize = 200;
/// `|mu(z0) - m|` ceiling.
pub const COHERENCE_MEAN_TOL: f64 = 1e-10;
/// `|sigma2(z0) + Sigma2 mu'(z0)^2 - s2|` ceiling; beyond it
/// [`cpr_constants`] fails.
pub const COHERENCE_VAR_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CprError {
    #[error("alpha = {0} must lie in (0, 1)")]
    Alpha(f64),
    #[error("{name} = {value} must be positive and finite")]
    NonPositive { name: &'static str, value: f64 },
    #[error("tau solver did not converge for alpha = {alpha}, z = {z}")]
    NoConvergence { alpha: f64, z: f64 },
    #[error("sigma2({z}) = {value} is not positive")]
    NonPositiveVariance { z: f64, value: f64 },
    #[error("coherence identities violated: mean {mean:e}, variance {var:e}")]
    Coherence { mean: f64, var: f64 },
    #[error("gfc table covers n_max = {n_max} but row {n} is needed")]
    TableTooSmall { n: usize, n_max: usize },
    #[error("table built for alpha = {table} but alpha = {alpha} was requested")]
    TableMismatch { table: f64, alpha: f64 },
    #[error(transparent)]
    Gfc(#[from] GfcError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, CprError>;

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CprError::Alpha(alpha))
    }
}

fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(CprError::NonPositive { name, value })
    }
}

/// Root of `tau^{1/alpha} = tau / (alpha z) + 1` on `(1, inf)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedPointResult {
    pub tau: f64,
    /// `ln tau`, kept because `tau - 1` underflows for large `z`.
    pub log_tau: f64,
    /// `|tau^{1/alpha} / (tau / (alpha z) + 1) - 1|`.
    pub residual: f64,
    pub iterations: usize,
    pub z: f64,
}

/// `ln(1 + e^v)`.
fn softplus(v: f64) -> f64 {
    if v > 36.0 {
        v + (-v).exp()
    } else {
        v.exp().ln_1p()
    }
}

/// `e^v / (1 + e^v)`.
fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Solves for `u = ln tau` the increasing concave equation
/// `G(u) = u / alpha - ln(1 + e^u / (alpha z)) = 0`.
///
/// `G(0) < 0`, so Newton from `u = 0` climbs monotonically to the root; a
/// bracket `[lo, hi]` guards each step and bisection takes over if a step
/// leaves it.
pub fn tau_solve(alpha: f64, z: f64) -> Result<FixedPointResult> {
    check_alpha(alpha)?;
    check_positive("z", z)?;
    let ln_az = (alpha * z).ln();
    let g = |u: f64| u / alpha - softplus(u - ln_az);
    let dg = |u: f64| 1.0 / alpha - logistic(u - ln_az);

    // softplus(v) <= max(v, 0) + ln 2 gives G(hi) >= 0
    let ln2 = std::f64::consts::LN_2;
    let mut lo = 0.0;
    let mut hi = (alpha * ln2).max(alpha * (ln2 - ln_az) / (1.0 - alpha)) * (1.0 + 1e-12);
    let mut u = 0.0;
    for iter in 1..=TAU_MAX_ITER {
        let gu = g(u);
        if gu == 0.0 {
            return Ok(finish(z, u, iter, g(u)));
        }
        if gu < 0.0 {
            lo = u;
        } else {
            hi = u;
        }
        let mut next = u - gu / dg(u);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - u).abs() <= 4.0 * f64::EPSILON * next.abs().max(f64::MIN_POSITIVE) {
            return Ok(finish(z, next, iter, g(next)));
        }
        u = next;
    }
    Err(CprError::NoConvergence { alpha, z })
}

fn finish(z: f64, u: f64, iterations: usize, g: f64) -> FixedPointResult {
    FixedPointResult {
        tau: u.exp(),
        log_tau: u,
        residual: g.exp_m1().abs(),
        iterations,
        z,
    }
}

/// `tau(z)` with its log, or an error.
fn tau_of(alpha: f64, z: f64) -> Result<(f64, f64)> {
    let r = tau_solve(alpha, z)?;
    Ok((r.tau, r.log_tau))
}

/// `mu(z) = z (1 - 1/tau(z))`.
pub fn mu(alpha: f64, z: f64) -> Result<f64> {
    let (_, u) = tau_of(alpha, z)?;
    Ok(-z * (-u).exp_m1())
}

/// `sigma2(z) = z (1 - 1/tau - alpha / (alpha z + (1 - alpha) tau))`.
pub fn sigma2(alpha: f64, z: f64) -> Result<f64> {
    let (tau, u) = tau_of(alpha, z)?;
    let value = z * (-(-u).exp_m1() - alpha / (alpha * z + (1.0 - alpha) * tau));
    if value > 0.0 {
        Ok(value)
    } else {
        Err(CprError::NonPositiveVariance { z, value })
    }
}

/// `D(z) = z tau^{(1-alpha)/alpha} - 1 = (1 - alpha)/alpha + z / tau`.
pub fn d_fn(alpha: f64, z: f64) -> Result<f64> {
    let (tau, _) = tau_of(alpha, z)?;
    Ok((1.0 - alpha) / alpha + z / tau)
}

/// `mu'(z) = 1 - 1/tau - 1/(tau D)`.
pub fn mu_prime(alpha: f64, z: f64) -> Result<f64> {
    let (tau, u) = tau_of(alpha, z)?;
    let d = (1.0 - alpha) / alpha + z / tau;
    Ok(-(-u).exp_m1() - 1.0 / (tau * d))
}

/// One point of the `(z, tau, mu, sigma2, D)` curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CprPoint {
    pub z: f64,
    pub tau: f64,
    pub mu: f64,
    pub sigma2: f64,
    pub d: f64,
    pub mu_prime: f64,
}

pub fn cpr_point(alpha: f64, z: f64) -> Result<CprPoint> {
    Ok(CprPoint {
        z,
        tau: tau_solve(alpha, z)?.tau,
        mu: mu(alpha, z)?,
        sigma2: sigma2(alpha, z)?,
        d: d_fn(alpha, z)?,
        mu_prime: mu_prime(alpha, z)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CprConstants {
    pub alpha: f64,
    pub lambda: f64,
    pub z0: f64,
    #[serde(rename = "Sigma2")]
    pub sigma2_big: f64,
    pub tau0: f64,
    pub mu_at_z0: f64,
    pub sigma2_at_z0: f64,
    pub mu_prime_at_z0: f64,
    /// `mu(z0) - m`.
    pub mean_residual: f64,
    /// `sigma2(z0) + Sigma2 mu'(z0)^2 - s2`.
    pub var_residual: f64,
}

/// `z0 = (lambda/alpha) ((lambda+1)/lambda)^alpha`.
pub fn z0(alpha: f64, lambda: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_positive("lambda", lambda)?;
    Ok(lambda / alpha * (alpha * (1.0 / lambda).ln_1p()).exp())
}

/// `Sigma2 = (lambda/alpha) ((lambda+1)/lambda)^{2 alpha} (1 - alpha/(lambda+1))`.
pub fn sigma2_big(alpha: f64, lambda: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_positive("lambda", lambda)?;
    let c2a = (2.0 * alpha * (1.0 / lambda).ln_1p()).exp();
    Ok(lambda / alpha * c2a * (1.0 - alpha / (lambda + 1.0)))
}

/// All tilt constants, with both coherence residuals checked.
pub fn cpr_constants(alpha: f64, lambda: f64) -> Result<CprConstants> {
    let z0 = z0(alpha, lambda)?;
    let big = sigma2_big(alpha, lambda)?;
    let fp = tau_solve(alpha, z0)?;
    let mu0 = mu(alpha, z0)?;
    let s0 = sigma2(alpha, z0)?;
    let mp0 = mu_prime(alpha, z0)?;
    let mean_residual = mu0 - m_const(alpha, lambda)?;
    let var_residual = s0 + big * mp0 * mp0 - s2_const(alpha, lambda)?;
    if !(mean_residual.abs() <= COHERENCE_VAR_TOL && var_residual.abs() <= COHERENCE_VAR_TOL) {
        return Err(CprError::Coherence {
            mean: mean_residual,
            var: var_residual,
        });
    }
    Ok(CprConstants {
        alpha,
        lambda,
        z0,
        sigma2_big: big,
        tau0: fp.tau,
        mu_at_z0: mu0,
        sigma2_at_z0: s0,
        mu_prime_at_z0: mp0,
        mean_residual,
        var_residual,
    })
}

/// Law of `R(alpha, n, z)`: `P(k) propto C(n,k;alpha) z^k`. For `R_n(z)` pass
/// `n z`.
pub fn rn_pmf(alpha: f64, n: usize, z: f64, table: &LogGfcTable) -> Result<DiscreteDist> {
    check_alpha(alpha)?;
    check_positive("z", z)?;
    if table.alpha() != alpha {
        return Err(CprError::TableMismatch {
            table: table.alpha(),
            alpha,
        });
    }
    if n == 0 || n > table.n_max() {
        return Err(CprError::TableTooSmall {
            n,
            n_max: table.n_max(),
        });
    }
    let ln_z = z.ln();
    let mut lp: Vec<f64> = table
        .row(n)?
        .iter()
        .enumerate()
        .map(|(i, c)| c + (i + 1) as f64 * ln_z)
        .collect();
    let norm = log_sum_exp(&lp);
    for v in &mut lp {
        *v -= norm;
    }
    Ok(DiscreteDist::from_log_probs(1, lp))
}

/// Exact mean, variance and fourth central moment of
/// `Z_n = S_{alpha, lambda n} G_{(lambda+1) n}^alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZnMoments {
    pub mean: f64,
    pub var: f64,
    pub central4: f64,
}

/// `E[Z_n^k] = [theta/alpha]_(k) Gamma(theta) Gamma(A + k alpha) /
/// (Gamma(theta + k alpha) Gamma(A))` with `A = (lambda + 1) n`. Central
/// moments are taken from the ratios `E[Z^k] / E[Z]^k = c_k e^{kappa_k}`,
/// `c_k = prod_{i<k} (1 + i alpha / theta)`.
pub fn zn_moments(alpha: f64, lambda: f64, n: usize) -> Result<ZnMoments> {
    check_alpha(alpha)?;
    check_positive("lambda", lambda)?;
    if n == 0 {
        return Err(CprError::NonPositive {
            name: "n",
            value: 0.0,
        });
    }
    let theta = lambda * n as f64;
    let ratios = ShiftRatios::new(theta, n, alpha)?;
    let mean = theta / alpha * ratios.ell[1].exp();
    let mut ln_c = [0.0f64; 5];
    for k in 2..5 {
        ln_c[k] = ln_c[k - 1] + ((k - 1) as f64 * alpha / theta).ln_1p();
    }
    let delta = |k: usize| (ln_c[k] + ratios.kappa[k]).exp_m1();
    let (d2, d3, d4) = (delta(2), delta(3), delta(4));
    let m2 = mean * mean;
    Ok(ZnMoments {
        mean,
        var: m2 * d2,
        central4: m2 * m2 * (d4 - 4.0 * d3 + 6.0 * d2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_at_z0_is_tau0() {
        let z = 2.0 * 2f64.sqrt();
        let r = tau_solve(0.5, z).unwrap();
        assert!((r.tau - 2f64.sqrt()).abs() < 1e-14);
        assert!(r.residual <= 1e-12);
        assert!((d_fn(0.5, z).unwrap() - 3.0).abs() < 1e-13);
        assert!((mu(0.5, z).unwrap() - (z - 2.0)).abs() < 1e-14);
    }

    #[test]
    fn tau_rejects_bad_inputs() {
        assert!(tau_solve(0.0, 1.0).is_err());
        assert!(tau_solve(0.5, 0.0).is_err());
        assert!(tau_solve(0.5, f64::NAN).is_err());
    }

    #[test]
    fn constants_at_half_one() {
        let c = cpr_constants(0.5, 1.0).unwrap();
        assert!((c.z0 - 2.0 * 2f64.sqrt()).abs() < 1e-14);
        assert!((c.sigma2_big - 3.0).abs() < 1e-14);
        assert!(c.mean_residual.abs() <= 1e-12);
        assert!(c.var_residual.abs() <= 1e-10);
    }

    #[test]
    fn small_rn_ratio() {
        let t = LogGfcTable::build(0.3, 4).unwrap();
        let d = rn_pmf(0.3, 2, 1.7, &t).unwrap();
        let ratio = d.prob(2) / d.prob(1);
        assert!((ratio - 0.3 * 1.7 / 0.7).abs() < 1e-13);
        assert_eq!(rn_pmf(0.3, 1, 2.0, &t).unwrap().prob(1), 1.0);
        assert!(rn_pmf(0.3, 5, 2.0, &t).is_err());
    }
}
