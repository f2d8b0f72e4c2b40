//! Scalar special functions and log-domain helpers.
//!
//! Everything here is a pure function of its arguments. The Gamma-family
//! routines use a recurrence shift into the region where the Stirling /
//! de Moivre asymptotic series converges to full double precision, which keeps
//! them accurate for the very large arguments (`theta + n` of order `10^6` and
//! beyond) that the linear regime produces.

use std::f64::consts::{PI, SQRT_2};
use std::ops::{Add, Mul};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("{func}: argument {arg} outside the domain")]
    Domain { func: &'static str, arg: f64 },
}

pub type Result<T> = std::result::Result<T, NumericsError>;

/// `0.5 * ln(2 pi)`
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Below this the Gamma-family functions shift upwards by recurrence.
const LGAMMA_SHIFT: f64 = 15.0;
const POLYGAMMA_SHIFT: f64 = 10.0;

/// Stirling series coefficients `B_{2k} / (2k (2k - 1))`.
const STIRLING: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
    -3617.0 / 122_400.0,
];

/// `B_{2k} / (2k)`, digamma tail.
const DIGAMMA_TAIL: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32_760.0,
    1.0 / 12.0,
];

/// `B_{2k}`, trigamma tail.
const TRIGAMMA_TAIL: [f64; 7] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
];

/// Log of a nonnegative quantity; `-inf` encodes exactly zero.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LogValue(f64);

impl LogValue {
    pub const ZERO: LogValue = LogValue(f64::NEG_INFINITY);
    pub const ONE: LogValue = LogValue(0.0);

    /// Wraps a log-domain value. NaN and `+inf` are rejected.
    pub fn from_ln(ln: f64) -> Result<Self> {
        if ln.is_nan() || ln == f64::INFINITY {
            return Err(NumericsError::Domain {
                func: "LogValue::from_ln",
                arg: ln,
            });
        }
        Ok(LogValue(ln))
    }

    pub fn from_linear(x: f64) -> Result<Self> {
        if !(x >= 0.0) || !x.is_finite() {
            return Err(NumericsError::Domain {
                func: "LogValue::from_linear",
                arg: x,
            });
        }
        Ok(LogValue(x.ln()))
    }

    #[inline]
    pub fn ln(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn linear(self) -> f64 {
        self.0.exp()
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }
}

impl Add for LogValue {
    type Output = LogValue;
    fn add(self, rhs: LogValue) -> LogValue {
        LogValue(log_add_exp(self.0, rhs.0))
    }
}

impl Mul for LogValue {
    type Output = LogValue;
    fn mul(self, rhs: LogValue) -> LogValue {
        if self.is_zero() || rhs.is_zero() {
            LogValue::ZERO
        } else {
            LogValue(self.0 + rhs.0)
        }
    }
}

#[inline]
fn check_positive(func: &'static str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(NumericsError::Domain { func, arg: x })
    }
}

fn stirling_tail(x: f64) -> f64 {
    let r = 1.0 / x;
    let r2 = r * r;
    let mut acc = 0.0;
    for c in STIRLING.iter().rev() {
        acc = acc * r2 + c;
    }
    acc * r
}

/// `ln Gamma(x)` for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    check_positive("log_gamma", x)?;
    if x == 1.0 || x == 2.0 {
        return Ok(0.0);
    }
    let mut y = x;
    let mut shift = 0.0;
    if y < LGAMMA_SHIFT {
        let mut prod = 1.0;
        while y < LGAMMA_SHIFT {
            prod *= y;
            y += 1.0;
        }
        shift = prod.ln();
    }
    Ok((y - 0.5) * y.ln() - y + HALF_LN_2PI + stirling_tail(y) - shift)
}

/// `ln Gamma(x + a) - ln Gamma(x)` without forming either log-gamma.
///
/// Requires `x > 0` and `x + a > 0`. The difference of two large log-gammas
/// loses all relative precision once `x` is big; this form keeps it.
pub fn log_gamma_ratio(x: f64, a: f64) -> Result<f64> {
    check_positive("log_gamma_ratio", x)?;
    if !a.is_finite() {
        return Err(NumericsError::Domain {
            func: "log_gamma_ratio",
            arg: a,
        });
    }
    check_positive("log_gamma_ratio", x + a)?;
    if a == 0.0 {
        return Ok(0.0);
    }
    let mut y = x;
    let mut correction = 0.0;
    while y.min(y + a) < LGAMMA_SHIFT {
        correction += (a / y).ln_1p();
        y += 1.0;
    }
    let ya = y + a;
    let main = (y - 0.5) * (a / y).ln_1p() + a * ya.ln() - a;
    Ok(main + (stirling_tail(ya) - stirling_tail(y)) - correction)
}

/// Crossover between the direct log-product and the Gamma-ratio form.
pub const RISING_FACTORIAL_CROSSOVER: u64 = 32;

/// `ln [x]_{(n,a)} = ln prod_{i<n} (x + i a)`.
pub fn log_rising_factorial(x: f64, n: u64, a: f64) -> Result<f64> {
    check_positive("log_rising_factorial", x)?;
    if !(a >= 0.0) || !a.is_finite() {
        return Err(NumericsError::Domain {
            func: "log_rising_factorial",
            arg: a,
        });
    }
    if n == 0 {
        return Ok(0.0);
    }
    if a == 0.0 {
        return Ok(n as f64 * x.ln());
    }
    if n <= RISING_FACTORIAL_CROSSOVER {
        return Ok(log_rising_factorial_direct(x, n, a));
    }
    Ok(n as f64 * a.ln() + log_gamma_ratio(x / a, n as f64)?)
}

/// Direct summation of `ln (x + i a)`; no domain checks.
pub fn log_rising_factorial_direct(x: f64, n: u64, a: f64) -> f64 {
    let mut sum = NeumaierSum::default();
    for i in 0..n {
        sum.add((x + i as f64 * a).ln());
    }
    sum.value()
}

pub fn digamma(x: f64) -> Result<f64> {
    check_positive("digamma", x)?;
    let mut y = x;
    let mut acc = 0.0;
    while y < POLYGAMMA_SHIFT {
        acc -= 1.0 / y;
        y += 1.0;
    }
    let r2 = 1.0 / (y * y);
    let mut tail = 0.0;
    for c in DIGAMMA_TAIL.iter().rev() {
        tail = tail * r2 + c;
    }
    Ok(acc + y.ln() - 0.5 / y - tail * r2)
}

pub fn trigamma(x: f64) -> Result<f64> {
    check_positive("trigamma", x)?;
    let mut y = x;
    let mut acc = 0.0;
    while y < POLYGAMMA_SHIFT {
        acc += 1.0 / (y * y);
        y += 1.0;
    }
    let r = 1.0 / y;
    let r2 = r * r;
    let mut tail = 0.0;
    for c in TRIGAMMA_TAIL.iter().rev() {
        tail = tail * r2 + c;
    }
    Ok(acc + r + 0.5 * r2 + tail * r2 * r)
}

#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `ln sum exp(v_i)` by max-shift. An empty slice or an all `-inf` slice
/// gives `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_infinite() {
        return max;
    }
    let mut sum = NeumaierSum::default();
    for &v in values {
        sum.add((v - max).exp());
    }
    max + sum.value().ln()
}

/// Standard normal CDF.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// `ln(sqrt(pi))`, exposed for tests and docs.
pub fn ln_sqrt_pi() -> f64 {
    0.5 * PI.ln()
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = NeumaierSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Compensated sum that also tracks `sum |x_i|`, so callers can bound the
/// relative error lost to cancellation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CancellationSum {
    sum: NeumaierSum,
    magnitude: f64,
}

impl CancellationSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        self.sum.add(x);
        self.magnitude += x.abs();
    }

    pub fn value(&self) -> f64 {
        self.sum.value()
    }

    /// Estimated relative error: each input carries roughly `input_rel_err`
    /// relative error, magnified by `sum |x_i| / |sum x_i|`.
    pub fn relative_error(&self, input_rel_err: f64) -> f64 {
        let v = self.value().abs();
        if v == 0.0 {
            if self.magnitude == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            input_rel_err * self.magnitude / v
        }
    }
}
