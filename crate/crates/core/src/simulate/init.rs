//! Initial configurations for two-sided runs.
//!
//! Gaps are independent exponentials with rates that grow at most linearly
//! in `|n|` (or are fixed), which keeps the configuration locally finite
//! with a well-defined ranking. Every gap is drawn from its own noise lane
//! `(replica, InitialGap, n)`, so a gap's value does not depend on how many
//! other gaps were generated before it.

use serde::{Deserialize, Serialize};

use super::noise::{NoiseStream, Series};
use super::SimError;
use crate::model::{DriftField, GapVector, Window};
use crate::rates::{lambda_ab, sigma_region, RatesError};

/// Rate of the exponential law of gap `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateLaw {
    /// `c1 + c2 |n|`.
    Linear { c1: f64, c2: f64 },
    /// `λ_n = 2Φ_{n+1}(g) + a + bn`, the product-form stationary law.
    PiAb { g: DriftField, a: f64, b: f64 },
}

impl RateLaw {
    pub fn rate(&self, n: i64) -> f64 {
        match self {
            RateLaw::Linear { c1, c2 } => c1 + c2 * n.unsigned_abs() as f64,
            RateLaw::PiAb { g, a, b } => lambda_ab(g, *a, *b, n),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        match self {
            RateLaw::Linear { c1, c2 } => {
                if !(*c1 > 0.0) || !(*c2 >= 0.0) || !c1.is_finite() || !c2.is_finite() {
                    return Err(SimError::InvalidConfig(format!(
                        "linear gap rates need c1 > 0 and c2 >= 0, got ({c1}, {c2})"
                    )));
                }
            }
            RateLaw::PiAb { g, a, b } => {
                if !sigma_region(g).contains(*a, *b) {
                    return Err(SimError::InvalidConfig(
                        RatesError::ParametersOutsideSigma { a: *a, b: *b }.to_string(),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GapSource {
    /// Independent `Exp(rate(n))` gaps.
    Exponential { law: RateLaw },
    /// Deterministic gaps: `core` on its window, `outer` everywhere else.
    Fixed { core: GapVector, outer: f64 },
}

impl GapSource {
    /// Gap `n` of `replica`.
    pub fn gap(&self, noise: &NoiseStream, replica: u64, n: i64) -> f64 {
        match self {
            GapSource::Exponential { law } => {
                noise.lane(replica, Series::InitialGap, n).exp1(0) / law.rate(n)
            }
            GapSource::Fixed { core, outer } => core.get(n).unwrap_or(*outer),
        }
    }
}

/// Two-sided initial condition: rank-0 particle at `anchor`, gaps from
/// `source`, and `core` as the window simulated as a finite system from
/// time zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoSidedInit {
    pub anchor: f64,
    pub core: Window,
    pub source: GapSource,
}

impl TwoSidedInit {
    pub fn validate(&self) -> Result<(), SimError> {
        if !self.core.contains(0) {
            return Err(SimError::InvalidConfig(format!(
                "core window [{}, {}] must contain rank 0",
                self.core.m, self.core.n
            )));
        }
        match &self.source {
            GapSource::Exponential { law } => law.validate(),
            GapSource::Fixed { core, outer } => {
                if core.window() != self.core {
                    return Err(SimError::InvalidConfig(
                        "fixed gap vector must cover exactly the core window".into(),
                    ));
                }
                if !(*outer > 0.0) || !outer.is_finite() {
                    return Err(SimError::NonPositiveSpacing {
                        index: self.core.n,
                        value: *outer,
                    });
                }
                for (k, v) in (core.window().m..).zip(core.values()) {
                    if !(*v > 0.0) {
                        return Err(SimError::NonPositiveSpacing { index: k, value: *v });
                    }
                }
                Ok(())
            }
        }
    }

    /// Core positions, ranks `core.m ..= core.n`, bottom to top.
    pub fn core_positions(&self, noise: &NoiseStream, replica: u64) -> Vec<f64> {
        let w = self.core;
        let zero = (-w.m) as usize;
        let mut y = vec![0.0; w.particles()];
        y[zero] = self.anchor;
        for i in zero..w.gaps() {
            y[i + 1] = y[i] + self.source.gap(noise, replica, w.m + i as i64);
        }
        for i in (0..zero).rev() {
            y[i] = y[i + 1] - self.source.gap(noise, replica, w.m + i as i64);
        }
        y
    }
}
