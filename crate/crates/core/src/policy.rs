use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest per-point multiplicity accepted by configuration enumeration.
/// Factorials up to 20! are exact in `u64`.
pub const MAX_CAP: u32 = 20;

/// Caps and tolerances for configuration enumeration and exponential series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    /// Largest multiplicity enumerated at any finite point.
    pub max_multiplicity: u32,
    /// Allowed omitted Poisson mass of an enumerated configuration space.
    pub tail_mass: f64,
    /// Allowed omitted tail of the normed exponential series.
    pub series_tail: f64,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        TruncationPolicy {
            max_multiplicity: 5,
            tail_mass: 1e-6,
            series_tail: 1e-12,
        }
    }
}

impl TruncationPolicy {
    pub fn new(max_multiplicity: u32, tail_mass: f64, series_tail: f64) -> Result<Self> {
        let policy = TruncationPolicy {
            max_multiplicity,
            tail_mass,
            series_tail,
        };
        policy.check()?;
        Ok(policy)
    }

    pub fn check(&self) -> Result<()> {
        if self.max_multiplicity > MAX_CAP {
            return Err(Error::Config(format!(
                "multiplicity cap {} above {}",
                self.max_multiplicity, MAX_CAP
            )));
        }
        if !(self.tail_mass > 0.0) || !self.tail_mass.is_finite() {
            return Err(Error::Config(format!(
                "tail_mass must be positive, got {}",
                self.tail_mass
            )));
        }
        self.check_series()
    }

    pub(crate) fn check_series(&self) -> Result<()> {
        if !(self.series_tail > 0.0) || !self.series_tail.is_finite() {
            return Err(Error::Config(format!(
                "series_tail must be positive, got {}",
                self.series_tail
            )));
        }
        Ok(())
    }
}

/// `P(X >= k_min)` for `X ~ Poisson(lambda)`, summed directly from the upper
/// tail so that tiny tails keep full relative precision.
pub fn poisson_upper_tail(lambda: f64, k_min: u64) -> f64 {
    if lambda <= 0.0 {
        return if k_min == 0 { 1.0 } else { 0.0 };
    }
    if k_min == 0 {
        return 1.0;
    }
    // log of the first term e^{-λ} λ^k / k!
    let log_first = -lambda + k_min as f64 * lambda.ln() - ln_factorial(k_min);
    let mut term = log_first.exp();
    let mut sum = 0.0;
    let mut k = k_min;
    loop {
        sum += term;
        k += 1;
        term *= lambda / k as f64;
        if (k as f64) > lambda && term <= sum * 1e-18 {
            break;
        }
        if k > k_min + 100_000 {
            break;
        }
    }
    sum.min(1.0)
}

pub(crate) fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Exact `n!` for `n <= 20`.
pub fn factorial(n: u32) -> u64 {
    assert!(n <= MAX_CAP, "factorial({n}) overflows u64");
    (1..=n as u64).product()
}
