//! Finite distributions on `{1, ..., n}` stored as log-probabilities.

use crate::numerics::{log_sum_exp, NeumaierSum};

/// A distribution on `{first, first + 1, ...}` held in log space, with a
/// linear-domain prefix-sum CDF for inverse-CDF sampling and Kolmogorov
/// distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDist {
    first: usize,
    log_probs: Vec<f64>,
    probs: Vec<f64>,
    cdf: Vec<f64>,
}

impl DiscreteDist {
    /// Builds from log-probabilities for atoms `first, first + 1, ...`.
    /// No renormalisation is applied; see [`DiscreteDist::log_total_mass`].
    pub fn from_log_probs(first: usize, log_probs: Vec<f64>) -> Self {
        let probs: Vec<f64> = log_probs.iter().map(|lp| lp.exp()).collect();
        let mut cdf = Vec::with_capacity(probs.len());
        let mut acc = NeumaierSum::default();
        for &p in &probs {
            acc.add(p);
            cdf.push(acc.value());
        }
        DiscreteDist {
            first,
            log_probs,
            probs,
            cdf,
        }
    }

    /// Builds from linear probabilities.
    pub fn from_probs(first: usize, probs: &[f64]) -> Self {
        Self::from_log_probs(first, probs.iter().map(|p| p.ln()).collect())
    }

    pub fn point_mass(at: usize) -> Self {
        Self::from_log_probs(at, vec![0.0])
    }

    /// Smallest atom of the support.
    pub fn first(&self) -> usize {
        self.first
    }

    /// Largest atom of the support.
    pub fn last(&self) -> usize {
        self.first + self.log_probs.len() - 1
    }

    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Prefix sums `P(X <= first + i)`.
    pub fn cdf_values(&self) -> &[f64] {
        &self.cdf
    }

    pub fn prob(&self, k: usize) -> f64 {
        self.index(k).map_or(0.0, |i| self.probs[i])
    }

    pub fn log_prob(&self, k: usize) -> f64 {
        self.index(k).map_or(f64::NEG_INFINITY, |i| self.log_probs[i])
    }

    /// `P(X <= k)`.
    pub fn cdf(&self, k: usize) -> f64 {
        if k < self.first {
            0.0
        } else {
            let i = (k - self.first).min(self.cdf.len() - 1);
            self.cdf[i]
        }
    }

    fn index(&self, k: usize) -> Option<usize> {
        k.checked_sub(self.first).filter(|&i| i < self.log_probs.len())
    }

    /// `ln sum_k P(k)`; zero for an exactly normalised law.
    pub fn log_total_mass(&self) -> f64 {
        log_sum_exp(&self.log_probs)
    }

    pub fn total_mass(&self) -> f64 {
        *self.cdf.last().unwrap_or(&0.0)
    }

    /// `|sum_k P(k) - 1|`.
    pub fn normalization_error(&self) -> f64 {
        (self.total_mass() - 1.0).abs()
    }

    pub fn atoms(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.probs.iter().enumerate().map(move |(i, &p)| (self.first + i, p))
    }

    pub fn mean(&self) -> f64 {
        self.atoms()
            .map(|(k, p)| k as f64 * p)
            .collect::<NeumaierSum>()
            .value()
    }

    /// `E[(X - c)^p]`.
    pub fn moment_about(&self, center: f64, power: i32) -> f64 {
        self.atoms()
            .map(|(k, p)| (k as f64 - center).powi(power) * p)
            .collect::<NeumaierSum>()
            .value()
    }

    pub fn variance(&self) -> f64 {
        self.moment_about(self.mean(), 2)
    }

    pub fn central_moment(&self, power: i32) -> f64 {
        self.moment_about(self.mean(), power)
    }

    /// Total-variation distance `0.5 sum |p - q|` over the union of supports.
    pub fn total_variation(&self, other: &DiscreteDist) -> f64 {
        let lo = self.first.min(other.first);
        let hi = self.last().max(other.last());
        let s: NeumaierSum = (lo..=hi)
            .map(|k| (self.prob(k) - other.prob(k)).abs())
            .collect();
        0.5 * s.value()
    }
}
