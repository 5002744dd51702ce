//! Runs the engine selected by a configuration.

use rankflow::model::{Configuration, GapVector, Window};
use rankflow::rates::{finite_rates, lambda_ab_window, FiniteRates, RateSequence};
use rankflow::simulate::{
    simulate_gap_srbm, simulate_named_finite, simulate_two_sided_adaptive, Frame, NoiseStream,
    TrajectoryBatch,
};

use crate::config::{EngineSpec, ExperimentConfig, StartSpec};
use crate::error::CliError;

/// Rank coefficients `(g, σ)` at ranks `1..=particles` of a finite engine.
pub fn finite_coefficients(
    cfg: &ExperimentConfig,
    particles: usize,
) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let hi = particles as i64;
    Ok((
        cfg.drift.drift()?.values(1, hi),
        cfg.diffusion.diffusion()?.values(1, hi),
    ))
}

/// Number of particles of a finite engine, `None` for two-sided runs.
pub fn finite_particles(engine: &EngineSpec) -> Option<usize> {
    match engine {
        EngineSpec::Named { x0 } => Some(x0.len()),
        EngineSpec::Gap { z0 } => Some(z0.len() + 1),
        EngineSpec::TwoSided { .. } => None,
    }
}

pub fn run_engine(cfg: &ExperimentConfig) -> Result<TrajectoryBatch, CliError> {
    let sim = cfg.sim()?;
    let noise = NoiseStream::counter(sim.seed);
    let batch = match cfg.engine()? {
        EngineSpec::Named { x0 } => {
            let (g, s) = finite_coefficients(cfg, x0.len())?;
            let x0 = Configuration::consecutive(1, x0.clone());
            simulate_named_finite(&g, &s, &x0, &sim, &noise)?
        }
        EngineSpec::Gap { z0 } => {
            let (g, s) = finite_coefficients(cfg, z0.len() + 1)?;
            let z0 = GapVector::new(Window::new(1, z0.len() as i64 + 1)?, z0.clone())?;
            simulate_gap_srbm(&g, &s, &z0, &sim, &noise)?
        }
        EngineSpec::TwoSided { .. } => {
            let (init, opts) = cfg.two_sided_init()?;
            let g = cfg.drift.drift()?;
            let s = cfg.diffusion.diffusion()?;
            simulate_two_sided_adaptive(&g, &s, &init, &sim, &opts, &noise)?
        }
    };
    if let Some(r) = batch.replicas.iter().find(|r| r.aborted.is_some()) {
        return Err(CliError::Numerical(format!(
            "replica {} aborted: {}",
            r.replica,
            r.aborted.as_deref().unwrap_or_default()
        )));
    }
    Ok(batch)
}

/// Product-form rates the engine's gaps should follow in stationarity.
///
/// Finite systems use the explicit finite-system rates; two-sided systems
/// use the `(a, b)` family with the parameters of a `pi_ab` start, or the
/// `rates` section otherwise. Both require unit diffusions.
pub fn stationary_target(cfg: &ExperimentConfig) -> Result<RateSequence, CliError> {
    let engine = cfg.engine()?;
    let unit = |vals: &[f64]| vals.iter().all(|s| *s == 1.0);
    match finite_particles(engine) {
        Some(n) => {
            let (g, s) = finite_coefficients(cfg, n)?;
            if !unit(&s) {
                return Err(CliError::Precondition(
                    "the product-form target requires unit diffusions".into(),
                ));
            }
            match finite_rates(&g)? {
                FiniteRates::Stable(r) => Ok(r),
                FiniteRates::Unstable(v) => Err(CliError::Precondition(format!(
                    "finite system is not stable: rate of gap {} is not positive",
                    v.first_failure
                ))),
            }
        }
        None => {
            let (init, _) = cfg.two_sided_init()?;
            let s = cfg.diffusion.diffusion()?;
            let (lo, hi) = (s.n_minus().min(init.core.m), s.n_plus().max(init.core.n));
            if !unit(&s.values(lo - 1, hi + 1)) {
                return Err(CliError::Precondition(
                    "the product-form target requires unit diffusions".into(),
                ));
            }
            let (a, b) = match engine {
                EngineSpec::TwoSided {
                    start: StartSpec::PiAb { a, b },
                    ..
                } => (*a, *b),
                _ => (cfg.rates.a, cfg.rates.b),
            };
            Ok(lambda_ab_window(&cfg.drift.drift()?, a, b, init.core))
        }
    }
}

/// Gap indices a stationarity check looks at by default.
pub fn default_indices(engine: &EngineSpec) -> Vec<i64> {
    match finite_particles(engine) {
        Some(n) => (1..n as i64).collect(),
        None => vec![-1, 0, 1],
    }
}

/// Keeps frame 0 and every `stride`-th recorded frame after it.
pub fn thin_batch(batch: &TrajectoryBatch, stride: u64) -> TrajectoryBatch {
    let stride = stride.max(1) as usize;
    let mut out = batch.clone();
    for r in &mut out.replicas {
        let frames: Vec<Frame> = std::mem::take(&mut r.frames);
        r.frames = frames.into_iter().step_by(stride).collect();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn finite_target_is_the_product_form() {
        let c = parse_config(
            r#"{"schema_version": 1,
                "drift": {"kind": "list", "first": 1, "values": [2.0, 1.0, 0.0]},
                "engine": {"kind": "gap", "z0": [0.5, 0.5]},
                "sim": {"dt": 0.01, "horizon": 0.1, "replicas": 1, "seed": 0}}"#,
        )
        .unwrap();
        let t = stationary_target(&c).unwrap();
        assert_eq!(t.values, vec![2.0, 2.0]);
        assert_eq!(default_indices(c.engine().unwrap()), vec![1, 2]);
        let b = run_engine(&c).unwrap();
        assert_eq!(b.replicas[0].frames.len(), 11);
        assert_eq!(thin_batch(&b, 5).replicas[0].frames.len(), 3);
    }

    #[test]
    fn unstable_finite_system_has_no_target() {
        let c = parse_config(
            r#"{"schema_version": 1,
                "drift": {"kind": "list", "first": 1, "values": [0.0, 1.0]},
                "engine": {"kind": "named", "x0": [0.0, 1.0]},
                "sim": {"dt": 0.01, "horizon": 0.1, "replicas": 1, "seed": 0}}"#,
        )
        .unwrap();
        assert_eq!(stationary_target(&c).unwrap_err().exit_code(), 3);
    }
}
