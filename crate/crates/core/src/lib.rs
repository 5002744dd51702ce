//! Rank-based systems of competing Brownian particles.
//!
//! * [`model`]: coefficient fields, configurations, rankings and gaps.
//! * [`rates`]: explicit stationary gap rates and their positivity region.
//! * [`simulate`]: named, reflected-gap and adaptive two-sided engines.
//! * [`stats`]: estimators and tests that turn samples into verdicts.

pub mod model;
pub mod rates;
pub mod simulate;
pub mod stats;

pub use model::{Configuration, DiffusionField, DriftField, GapVector, Window};
pub use rates::{RateSequence, SigmaRegion};
pub use simulate::{SimConfig, TrajectoryBatch};
