//! Monte Carlo engines.
//!
//! * [`named`]: Euler scheme for named particles with per-step re-ranking.
//! * [`srbm`]: gap process as a reflected Brownian motion in the orthant,
//!   with a per-step Skorokhod solve and explicit local times.
//! * [`adaptive`]: two-sided system built from a finite core plus lazily
//!   activated Brownian tails that are absorbed into the core on contact.
//!
//! All engines take a [`NoiseStream`] so that tests can script increments
//! exactly. Replicas run in parallel and are collected in index order.

pub mod adaptive;
pub mod init;
pub mod io;
pub mod named;
pub mod noise;
pub mod srbm;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, Window};

pub use adaptive::{simulate_two_sided_adaptive, AbsorptionEvent, AdaptiveOptions, Side};
pub use init::{GapSource, RateLaw, TwoSidedInit};
pub use named::{simulate_named_finite, simulate_named_replica};
pub use noise::{NoiseLane, NoiseStream, Series};
pub use srbm::{simulate_coupled_pair, simulate_gap_srbm, solve_skorokhod, GapSystem};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("coefficient lists have length {got}, expected {want}")]
    LengthMismatch { got: usize, want: usize },
    #[error("diffusion coefficient {0} must be positive")]
    NonPositiveDiffusion(f64),
    #[error("Skorokhod solve did not converge: residual {residual} after {iterations} sweeps")]
    SkorokhodNonconvergence { residual: f64, iterations: usize },
    #[error("replica {replica}: more than {limit} absorptions")]
    ExhaustedTailBudget { replica: u64, limit: usize },
    #[error("coupled systems have windows [{}, {}] and [{}, {}]", .a.m, .a.n, .b.m, .b.n)]
    ShapeMismatch { a: Window, b: Window },
    #[error("core window must contain the coefficient cores: {0}")]
    CoreTooSmall(String),
    #[error("initial spacing {value} at gap {index} is not strictly positive")]
    NonPositiveSpacing { index: i64, value: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("binary frame format: {0}")]
    Format(String),
}

/// Time stepping and replica control shared by all engines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub replicas: usize,
    pub seed: u64,
    #[serde(default = "default_stride")]
    pub record_stride: u64,
}

fn default_stride() -> u64 {
    1
}

impl SimConfig {
    pub fn new(dt: f64, horizon: f64, replicas: usize, seed: u64) -> Self {
        SimConfig {
            dt,
            horizon,
            replicas,
            seed,
            record_stride: 1,
        }
    }

    pub fn with_stride(mut self, stride: u64) -> Self {
        self.record_stride = stride;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(SimError::InvalidConfig(format!("dt = {} must be > 0", self.dt)));
        }
        if !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            return Err(SimError::InvalidConfig(format!(
                "horizon = {} must be >= 0",
                self.horizon
            )));
        }
        if self.replicas == 0 {
            return Err(SimError::InvalidConfig("replicas must be >= 1".into()));
        }
        if self.record_stride == 0 {
            return Err(SimError::InvalidConfig("record_stride must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of Euler steps, `round(T / dt)`.
    pub fn steps(&self) -> u64 {
        (self.horizon / self.dt).round() as u64
    }

    pub(crate) fn records(&self, step: u64) -> bool {
        step % self.record_stride == 0 || step == self.steps()
    }
}

/// One recorded instant of one replica.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub step: u64,
    pub t: f64,
    /// Rank window of `y`; gaps are indexed `window.m..window.n`.
    pub window: Window,
    /// Particle names in ascending order, aligned with `x`.
    pub names: Vec<i64>,
    pub x: Vec<f64>,
    /// Names bottom to top, aligned with `y`.
    pub rank_names: Vec<i64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    /// Cumulative local times `L_{(k,k+1)}` per gap, when the engine tracks them.
    pub local_time: Option<Vec<f64>>,
}

impl Frame {
    pub fn gap(&self, k: i64) -> Option<f64> {
        if self.window.contains_gap(k) {
            Some(self.z[(k - self.window.m) as usize])
        } else {
            None
        }
    }

    pub fn ranked(&self, k: i64) -> Option<f64> {
        if self.window.contains(k) {
            Some(self.y[(k - self.window.m) as usize])
        } else {
            None
        }
    }

    /// Builds a frame from named positions; `y` and `z` are derived by
    /// sorting (ties by name) and differencing.
    pub fn from_named(step: u64, t: f64, first_rank: i64, names: &[i64], x: &[f64]) -> Frame {
        let mut by_name: Vec<usize> = (0..names.len()).collect();
        by_name.sort_by_key(|&i| names[i]);
        let mut by_rank: Vec<usize> = (0..names.len()).collect();
        by_rank.sort_by(|&a, &b| crate::model::rank_cmp(x[a], names[a], x[b], names[b]));
        let y: Vec<f64> = by_rank.iter().map(|&i| x[i]).collect();
        let z = y.windows(2).map(|w| w[1] - w[0]).collect();
        Frame {
            step,
            t,
            window: Window {
                m: first_rank,
                n: first_rank + names.len() as i64 - 1,
            },
            names: by_name.iter().map(|&i| names[i]).collect(),
            x: by_name.iter().map(|&i| x[i]).collect(),
            rank_names: by_rank.iter().map(|&i| names[i]).collect(),
            y,
            z,
            local_time: None,
        }
    }
}

/// Frames and diagnostics of one replica.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReplicaPath {
    pub replica: u64,
    pub frames: Vec<Frame>,
    /// Set when the replica stopped early; frames up to that point are kept.
    pub aborted: Option<String>,
    pub events: Vec<AbsorptionEvent>,
    /// Largest `max_k |min(z'_k, Δl_k)|` seen in any Skorokhod solve.
    pub max_complementarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    pub config: SimConfig,
    pub replicas: Vec<ReplicaPath>,
}

impl TrajectoryBatch {
    /// Pooled samples of gap `k` over frames with `t >= burn_in`.
    pub fn gap_samples(&self, k: i64, burn_in: f64) -> Vec<f64> {
        self.replicas
            .iter()
            .flat_map(|r| r.frames.iter())
            .filter(|f| f.t >= burn_in - 1e-12)
            .filter_map(|f| f.gap(k))
            .collect()
    }

    /// Value of gap `k` in each replica at the frame closest to `t`.
    pub fn gap_at_time(&self, k: i64, t: f64) -> Vec<f64> {
        self.replicas
            .iter()
            .filter_map(|r| {
                r.frames
                    .iter()
                    .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
                    .and_then(|f| f.gap(k))
            })
            .collect()
    }

    pub fn events(&self) -> impl Iterator<Item = &AbsorptionEvent> {
        self.replicas.iter().flat_map(|r| r.events.iter())
    }
}

/// `Ψ(u) = P(ξ > u)` for a standard normal `ξ`.
pub fn normal_tail(u: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(u / std::f64::consts::SQRT_2)
}

pub(crate) fn check_coefficients(g: &[f64], s: &[f64], want: usize) -> Result<(), SimError> {
    if g.len() != want {
        return Err(SimError::LengthMismatch { got: g.len(), want });
    }
    if s.len() != want {
        return Err(SimError::LengthMismatch { got: s.len(), want });
    }
    if let Some(v) = s.iter().find(|v| !(**v > 0.0)) {
        return Err(SimError::NonPositiveDiffusion(*v));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_tail_values() {
        assert_eq!(normal_tail(0.0), 0.5);
        assert!((normal_tail(1.7) + normal_tail(-1.7) - 1.0).abs() < 1e-15);
        assert!((normal_tail(1.959964) - 0.025).abs() < 1e-7);
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::new(0.0, 1.0, 1, 0).validate().is_err());
        assert!(SimConfig::new(0.1, -1.0, 1, 0).validate().is_err());
        assert!(SimConfig::new(0.1, 1.0, 0, 0).validate().is_err());
        assert!(SimConfig::new(0.1, 1.0, 1, 0).with_stride(0).validate().is_err());
        let c = SimConfig::new(0.1, 1.0, 1, 0).with_stride(3);
        assert_eq!(c.steps(), 10);
        assert!(c.records(0) && c.records(3) && c.records(10) && !c.records(4));
    }

    #[test]
    fn frame_from_named_derives_ranks() {
        let f = Frame::from_named(0, 0.0, 1, &[7, 3, 5], &[2.0, 2.0, -1.0]);
        assert_eq!(f.names, vec![3, 5, 7]);
        assert_eq!(f.x, vec![2.0, -1.0, 2.0]);
        assert_eq!(f.rank_names, vec![5, 3, 7]);
        assert_eq!(f.y, vec![-1.0, 2.0, 2.0]);
        assert_eq!(f.z, vec![3.0, 0.0]);
        assert_eq!(f.window, Window { m: 1, n: 3 });
    }
}
