//! Euler scheme for named particles.
//!
//! Every step ranks the current positions (ties broken by name), then moves
//! the particle holding rank `r` by `g_r dt + σ_r √dt ξ`. The Gaussian `ξ`
//! is addressed by `(replica, particle name, step)`, so the same particle
//! sees the same increments in every engine that uses this addressing.

use rayon::prelude::*;

use super::noise::{NoiseLane, NoiseStream, Series};
use super::{check_coefficients, Frame, ReplicaPath, SimConfig, SimError, TrajectoryBatch};
use crate::model::{rank_cmp, Configuration};

/// Particles of a finite competing system plus their noise lanes.
///
/// `order[r]` is the slot of the particle with rank `r`; it is kept across
/// steps so re-ranking is an insertion sort over an almost sorted list.
pub(crate) struct RankedEuler<'a> {
    pub names: Vec<i64>,
    pub x: Vec<f64>,
    pub order: Vec<usize>,
    lanes: Vec<NoiseLane<'a>>,
}

impl<'a> RankedEuler<'a> {
    pub fn new(noise: &'a NoiseStream, replica: u64, names: Vec<i64>, x: Vec<f64>) -> Self {
        let lanes = names
            .iter()
            .map(|&n| noise.lane(replica, Series::Particle, n))
            .collect();
        let order = (0..names.len()).collect();
        let mut sys = RankedEuler {
            names,
            x,
            order,
            lanes,
        };
        sys.rerank();
        sys
    }

    pub fn rerank(&mut self) {
        let (x, names) = (&self.x, &self.names);
        let order = &mut self.order;
        for i in 1..order.len() {
            let cur = order[i];
            let mut j = i;
            while j > 0 && rank_cmp(x[cur], names[cur], x[order[j - 1]], names[order[j - 1]]).is_lt()
            {
                order[j] = order[j - 1];
                j -= 1;
            }
            order[j] = cur;
        }
    }

    /// One Euler step with rank coefficients `g[r]`, `s[r]`; ranks are
    /// taken at the start of the step and refreshed at the end. Returns
    /// `false` if a position became non-finite.
    pub fn step(&mut self, g: &[f64], s: &[f64], dt: f64, sqrt_dt: f64, step: u64) -> bool {
        let mut finite = true;
        for (r, &i) in self.order.iter().enumerate() {
            let xi = self.lanes[i].normal(step);
            let v = self.x[i] + g[r] * dt + s[r] * sqrt_dt * xi;
            finite &= v.is_finite();
            self.x[i] = v;
        }
        if finite {
            self.rerank();
        }
        finite
    }

    pub fn min(&self) -> f64 {
        self.x[self.order[0]]
    }

    pub fn max(&self) -> f64 {
        self.x[*self.order.last().expect("nonempty system")]
    }

    pub fn frame(&self, step: u64, t: f64, first_rank: i64) -> Frame {
        Frame::from_named(step, t, first_rank, &self.names, &self.x)
    }
}

/// Simulates `x0.len()` particles with rank coefficients `g[r]`, `s[r]`
/// (rank window `[1, N]`).
pub fn simulate_named_finite(
    g: &[f64],
    s: &[f64],
    x0: &Configuration,
    cfg: &SimConfig,
    noise: &NoiseStream,
) -> Result<TrajectoryBatch, SimError> {
    cfg.validate()?;
    check_coefficients(g, s, x0.len())?;
    if x0.len() < 2 {
        return Err(SimError::InvalidConfig("need at least two particles".into()));
    }
    let replicas = (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|r| run_replica(g, s, x0, cfg, noise, r))
        .collect();
    Ok(TrajectoryBatch {
        config: *cfg,
        replicas,
    })
}

/// Runs the single replica `replica` of [`simulate_named_finite`]; the
/// path is identical to the batch's replica with that index. Useful when
/// only a statistic of each path is kept and a batch would not fit in
/// memory.
pub fn simulate_named_replica(
    g: &[f64],
    s: &[f64],
    x0: &Configuration,
    cfg: &SimConfig,
    noise: &NoiseStream,
    replica: u64,
) -> Result<ReplicaPath, SimError> {
    cfg.validate()?;
    check_coefficients(g, s, x0.len())?;
    if x0.len() < 2 {
        return Err(SimError::InvalidConfig("need at least two particles".into()));
    }
    Ok(run_replica(g, s, x0, cfg, noise, replica))
}

fn run_replica(
    g: &[f64],
    s: &[f64],
    x0: &Configuration,
    cfg: &SimConfig,
    noise: &NoiseStream,
    replica: u64,
) -> ReplicaPath {
    let mut sys = RankedEuler::new(noise, replica, x0.names().to_vec(), x0.positions().to_vec());
    let steps = cfg.steps();
    let sqrt_dt = cfg.dt.sqrt();
    let mut path = ReplicaPath {
        replica,
        ..Default::default()
    };
    path.frames.push(sys.frame(0, 0.0, 1));
    for step in 0..steps {
        if !sys.step(g, s, cfg.dt, sqrt_dt, step) {
            path.aborted = Some(format!(
                "non-finite position at step {} (t = {})",
                step + 1,
                (step + 1) as f64 * cfg.dt
            ));
            break;
        }
        let k = step + 1;
        if cfg.records(k) {
            path.frames.push(sys.frame(k, k as f64 * cfg.dt, 1));
        }
    }
    path
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_horizon_returns_initial_configuration() {
        let x0 = Configuration::consecutive(1, vec![3.0, -1.0, 2.0]);
        let cfg = SimConfig::new(0.1, 0.0, 2, 7);
        let b = simulate_named_finite(&[0.0; 3], &[1.0; 3], &x0, &cfg, &NoiseStream::counter(7))
            .unwrap();
        for r in &b.replicas {
            assert_eq!(r.frames.len(), 1);
            assert_eq!(r.frames[0].x, vec![3.0, -1.0, 2.0]);
            assert_eq!(r.frames[0].y, vec![-1.0, 2.0, 3.0]);
        }
    }

    #[test]
    fn drift_goes_to_bottom_rank() {
        let x0 = Configuration::consecutive(1, vec![0.0, 5.0]);
        let cfg = SimConfig::new(0.5, 0.5, 1, 0);
        let b = simulate_named_finite(&[1.0, 0.0], &[1.0, 1.0], &x0, &cfg, &NoiseStream::scripted())
            .unwrap();
        let last = b.replicas[0].frames.last().unwrap();
        assert_eq!(last.x, vec![0.5, 5.0]);
    }

    #[test]
    fn coefficients_follow_rank_not_name() {
        // Particle 1 starts on top, so it gets the top-rank drift.
        let x0 = Configuration::consecutive(1, vec![5.0, 0.0]);
        let cfg = SimConfig::new(0.5, 0.5, 1, 0);
        let b = simulate_named_finite(&[1.0, 0.0], &[1.0, 1.0], &x0, &cfg, &NoiseStream::scripted())
            .unwrap();
        assert_eq!(b.replicas[0].frames[1].x, vec![5.0, 0.5]);
    }

    #[test]
    fn overflow_aborts_replica() {
        let x0 = Configuration::consecutive(1, vec![0.0, 1.0]);
        let cfg = SimConfig::new(1.0, 3.0, 1, 0);
        let b = simulate_named_finite(
            &[f64::MAX, 0.0],
            &[1.0, 1.0],
            &x0,
            &cfg,
            &NoiseStream::scripted(),
        )
        .unwrap();
        let r = &b.replicas[0];
        assert!(r.aborted.is_some());
        assert!(r.frames.iter().all(|f| f.x.iter().all(|v| v.is_finite())));
    }

    #[test]
    fn rejects_bad_inputs() {
        let x0 = Configuration::consecutive(1, vec![0.0, 1.0]);
        let cfg = SimConfig::new(0.1, 1.0, 1, 0);
        let n = NoiseStream::counter(0);
        assert!(matches!(
            simulate_named_finite(&[0.0], &[1.0, 1.0], &x0, &cfg, &n),
            Err(SimError::LengthMismatch { .. })
        ));
        assert!(matches!(
            simulate_named_finite(&[0.0, 0.0], &[1.0, 0.0], &x0, &cfg, &n),
            Err(SimError::NonPositiveDiffusion(_))
        ));
    }

    #[test]
    fn single_replica_matches_batch() {
        let x0 = Configuration::consecutive(1, vec![0.0, 0.3, 1.0]);
        let cfg = SimConfig::new(0.01, 0.5, 3, 2).with_stride(5);
        let noise = NoiseStream::counter(2);
        let b = simulate_named_finite(&[1.0, 0.0, -1.0], &[1.0; 3], &x0, &cfg, &noise).unwrap();
        let one = simulate_named_replica(&[1.0, 0.0, -1.0], &[1.0; 3], &x0, &cfg, &noise, 2).unwrap();
        assert_eq!(one, b.replicas[2]);
    }

    #[test]
    fn insertion_rerank_matches_full_sort() {
        let noise = NoiseStream::counter(3);
        let x = vec![0.3, -2.0, 0.3, 5.0, 1.0];
        let mut sys = RankedEuler::new(&noise, 0, vec![4, 1, 2, 0, 3], x.clone());
        for step in 0..50 {
            sys.step(&[0.0; 5], &[3.0; 5], 0.1, 0.1f64.sqrt(), step);
            let mut want: Vec<usize> = (0..5).collect();
            want.sort_by(|&a, &b| rank_cmp(sys.x[a], sys.names[a], sys.x[b], sys.names[b]));
            assert_eq!(sys.order, want);
        }
    }
}
