//! Gap process as a reflected Brownian motion in the orthant.
//!
//! Ranked particle `k` of a window `[M, N]` is driven by its own Brownian
//! motion `B_k` (noise lane `(replica, Particle, k)`). Gap `z_k = Y_{k+1} -
//! Y_k` therefore has drift `g_{k+1} - g_k` and noise `σ_{k+1} dB_{k+1} -
//! σ_k dB_k`, so neighbouring gaps are negatively correlated. A collision
//! at gap `k` pushes `Y_{k+1}` up and `Y_k` down by half the local-time
//! increment each, which is the reflection matrix
//!
//! ```text
//! R[k][k] = 1,  R[k][k±1] = -1/2.
//! ```
//!
//! Each step solves the discrete Skorokhod problem `z' = z* + R Δl ≥ 0`,
//! `Δl ≥ 0`, `z'_k Δl_k = 0` by projected Gauss–Seidel sweeps.

use rayon::prelude::*;

use super::noise::{NoiseLane, NoiseStream, Series};
use super::{check_coefficients, Frame, ReplicaPath, SimConfig, SimError, TrajectoryBatch};
use crate::model::{GapVector, Window};

pub const SKOROKHOD_TOL: f64 = 1e-12;
pub const SKOROKHOD_MAX_SWEEPS: usize = 1000;

/// Result of one discrete Skorokhod solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SkorokhodStep {
    /// Reflected gaps `z'`.
    pub z: Vec<f64>,
    /// Local-time increments `Δl`.
    pub dl: Vec<f64>,
    /// `max_k |min(z'_k, Δl_k)|` before the final clean-up.
    pub complementarity: f64,
    pub sweeps: usize,
}

/// Solves `z' = z* + R Δl`, `z' ≥ 0`, `Δl ≥ 0`, `z'·Δl = 0`.
///
/// After convergence, gaps with a positive push are set to exactly zero
/// and rounding-level negatives elsewhere are clamped, so the returned
/// `z` is always a valid gap vector.
pub fn solve_skorokhod(z_star: &[f64]) -> Result<SkorokhodStep, SimError> {
    let n = z_star.len();
    if z_star.iter().all(|&v| v >= 0.0) {
        return Ok(SkorokhodStep {
            z: z_star.to_vec(),
            dl: vec![0.0; n],
            complementarity: 0.0,
            sweeps: 0,
        });
    }
    let mut dl = vec![0.0; n];
    let mut sweeps = 0;
    loop {
        sweeps += 1;
        let mut change: f64 = 0.0;
        for k in 0..n {
            let mut w = z_star[k];
            if k > 0 {
                w -= 0.5 * dl[k - 1];
            }
            if k + 1 < n {
                w -= 0.5 * dl[k + 1];
            }
            let new = (-w).max(0.0);
            change = change.max((new - dl[k]).abs());
            dl[k] = new;
        }
        if change <= SKOROKHOD_TOL {
            break;
        }
        if sweeps >= SKOROKHOD_MAX_SWEEPS {
            return Err(SimError::SkorokhodNonconvergence {
                residual: change,
                iterations: sweeps,
            });
        }
    }
    let mut z = vec![0.0; n];
    let mut complementarity: f64 = 0.0;
    for k in 0..n {
        let mut v = z_star[k] + dl[k];
        if k > 0 {
            v -= 0.5 * dl[k - 1];
        }
        if k + 1 < n {
            v -= 0.5 * dl[k + 1];
        }
        complementarity = complementarity.max(v.min(dl[k]).abs());
        z[k] = if dl[k] > 0.0 { 0.0 } else { v.max(0.0) };
    }
    if complementarity > SKOROKHOD_TOL {
        return Err(SimError::SkorokhodNonconvergence {
            residual: complementarity,
            iterations: sweeps,
        });
    }
    Ok(SkorokhodStep {
        z,
        dl,
        complementarity,
        sweeps,
    })
}

/// State of one replica of the gap engine.
pub struct GapSystem<'a> {
    window: Window,
    g: Vec<f64>,
    s: Vec<f64>,
    lanes: Vec<NoiseLane<'a>>,
    /// Bottom ranked position `Y_M`.
    pub y_bottom: f64,
    pub z: Vec<f64>,
    /// Cumulative local times per gap.
    pub local_time: Vec<f64>,
    pub max_complementarity: f64,
    z_star: Vec<f64>,
    xi: Vec<f64>,
}

impl<'a> GapSystem<'a> {
    /// `g`, `s` are rank coefficients for ranks `z0.window().m ..= n`.
    pub fn new(
        g: &[f64],
        s: &[f64],
        z0: &GapVector,
        noise: &'a NoiseStream,
        replica: u64,
    ) -> Result<Self, SimError> {
        let window = z0.window();
        check_coefficients(g, s, window.particles())?;
        let lanes = (window.m..=window.n)
            .map(|k| noise.lane(replica, Series::Particle, k))
            .collect();
        Ok(GapSystem {
            window,
            g: g.to_vec(),
            s: s.to_vec(),
            lanes,
            y_bottom: 0.0,
            z: z0.values().to_vec(),
            local_time: vec![0.0; window.gaps()],
            max_complementarity: 0.0,
            z_star: vec![0.0; window.gaps()],
            xi: vec![0.0; window.particles()],
        })
    }

    pub fn window(&self) -> Window {
        self.window
    }

    /// Advances one step; returns the local-time increments.
    pub fn step(&mut self, dt: f64, sqrt_dt: f64, step: u64) -> Result<&[f64], SimError> {
        for (xi, lane) in self.xi.iter_mut().zip(&self.lanes) {
            *xi = lane.normal(step);
        }
        for k in 0..self.z.len() {
            let drift = self.g[k + 1] - self.g[k];
            let noise = self.s[k + 1] * self.xi[k + 1] - self.s[k] * self.xi[k];
            self.z_star[k] = self.z[k] + drift * dt + sqrt_dt * noise;
        }
        let sol = solve_skorokhod(&self.z_star)?;
        self.y_bottom += self.g[0] * dt + self.s[0] * sqrt_dt * self.xi[0] - 0.5 * sol.dl[0];
        for (l, d) in self.local_time.iter_mut().zip(&sol.dl) {
            *l += d;
        }
        self.max_complementarity = self.max_complementarity.max(sol.complementarity);
        self.z = sol.z;
        self.z_star.copy_from_slice(&sol.dl);
        Ok(&self.z_star)
    }

    pub fn frame(&self, step: u64, t: f64) -> Frame {
        let mut y = Vec::with_capacity(self.window.particles());
        let mut acc = self.y_bottom;
        y.push(acc);
        for v in &self.z {
            acc += v;
            y.push(acc);
        }
        // Recorded gaps are re-derived from `y` so that the frame is
        // self-consistent to the last bit.
        let z = y.windows(2).map(|w| w[1] - w[0]).collect();
        let names: Vec<i64> = (self.window.m..=self.window.n).collect();
        Frame {
            step,
            t,
            window: self.window,
            names: names.clone(),
            x: y.clone(),
            rank_names: names,
            y,
            z,
            local_time: Some(self.local_time.clone()),
        }
    }
}

/// Gap engine over the window of `z0`; named positions are identified
/// with ranked ones (there is no identity to track).
pub fn simulate_gap_srbm(
    g: &[f64],
    s: &[f64],
    z0: &GapVector,
    cfg: &SimConfig,
    noise: &NoiseStream,
) -> Result<TrajectoryBatch, SimError> {
    cfg.validate()?;
    check_coefficients(g, s, z0.window().particles())?;
    let replicas = (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|r| run_replica(g, s, z0, cfg, noise, r))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TrajectoryBatch {
        config: *cfg,
        replicas,
    })
}

fn run_replica(
    g: &[f64],
    s: &[f64],
    z0: &GapVector,
    cfg: &SimConfig,
    noise: &NoiseStream,
    replica: u64,
) -> Result<ReplicaPath, SimError> {
    let mut sys = GapSystem::new(g, s, z0, noise, replica)?;
    let sqrt_dt = cfg.dt.sqrt();
    let mut frames = vec![sys.frame(0, 0.0)];
    for step in 0..cfg.steps() {
        sys.step(cfg.dt, sqrt_dt, step)?;
        let k = step + 1;
        if cfg.records(k) {
            frames.push(sys.frame(k, k as f64 * cfg.dt));
        }
    }
    Ok(ReplicaPath {
        replica,
        frames,
        aborted: None,
        events: Vec::new(),
        max_complementarity: sys.max_complementarity,
    })
}

/// Runs two gap systems on the same noise (same replica, rank and step
/// addressing), for pathwise comparisons.
#[allow(clippy::too_many_arguments)]
pub fn simulate_coupled_pair(
    g_a: &[f64],
    g_b: &[f64],
    s_a: &[f64],
    s_b: &[f64],
    z0_a: &GapVector,
    z0_b: &GapVector,
    cfg: &SimConfig,
    noise: &NoiseStream,
) -> Result<(TrajectoryBatch, TrajectoryBatch), SimError> {
    if z0_a.window() != z0_b.window() {
        return Err(SimError::ShapeMismatch {
            a: z0_a.window(),
            b: z0_b.window(),
        });
    }
    let a = simulate_gap_srbm(g_a, s_a, z0_a, cfg, noise)?;
    let b = simulate_gap_srbm(g_b, s_b, z0_b, cfg, noise)?;
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gv(m: i64, v: Vec<f64>) -> GapVector {
        let n = m + v.len() as i64;
        GapVector::new(Window::new(m, n).unwrap(), v).unwrap()
    }

    #[test]
    fn inactive_reflection_is_pure_drift() {
        let z0 = gv(1, vec![10.0, 10.0]);
        let cfg = SimConfig::new(0.1, 0.1, 1, 0);
        let b = simulate_gap_srbm(&[0.0, 1.0, 3.0], &[1.0; 3], &z0, &cfg, &NoiseStream::scripted())
            .unwrap();
        let f = &b.replicas[0].frames[1];
        assert!((f.z[0] - 10.1).abs() < 1e-12);
        assert!((f.z[1] - 10.2).abs() < 1e-12);
        assert_eq!(f.local_time.as_ref().unwrap(), &vec![0.0, 0.0]);
    }

    #[test]
    fn single_negative_coordinate() {
        let e = 0.3;
        let sol = solve_skorokhod(&[5.0, -e, 7.0]).unwrap();
        assert!((sol.dl[1] - e).abs() < 1e-15);
        assert_eq!(sol.dl[0], 0.0);
        assert_eq!(sol.dl[2], 0.0);
        assert_eq!(sol.z[1], 0.0);
        assert!((sol.z[0] - (5.0 - e / 2.0)).abs() < 1e-15);
        assert!((sol.z[2] - (7.0 - e / 2.0)).abs() < 1e-15);
    }

    #[test]
    fn adjacent_negatives_couple() {
        // Both gaps negative: Δl solves [1 -1/2; -1/2 1] Δl = -z*.
        let sol = solve_skorokhod(&[-1.0, -1.0]).unwrap();
        assert!((sol.dl[0] - 2.0).abs() < 1e-11);
        assert!((sol.dl[1] - 2.0).abs() < 1e-11);
        assert_eq!(sol.z, vec![0.0, 0.0]);
    }

    #[test]
    fn scripted_collision_splits_push() {
        // Two particles, gap 0.1, noise pushes them through each other.
        let noise = NoiseStream::scripted()
            .with(0, Series::Particle, 1, 0, 1.0)
            .with(0, Series::Particle, 2, 0, -1.0);
        let z0 = gv(1, vec![0.1]);
        let cfg = SimConfig::new(0.25, 0.25, 1, 0);
        let b = simulate_gap_srbm(&[0.0, 0.0], &[1.0, 1.0], &z0, &cfg, &noise).unwrap();
        let f = &b.replicas[0].frames[1];
        // z* = 0.1 + 0.5 * (-1 - 1) = -0.9 → Δl = 0.9; Y_1 = 0.5 - 0.45.
        assert_eq!(f.z, vec![0.0]);
        assert!((f.local_time.as_ref().unwrap()[0] - 0.9).abs() < 1e-15);
        assert!((f.y[0] - 0.05).abs() < 1e-15);
        assert_eq!(f.y[0], f.y[1]);
    }

    #[test]
    fn shape_mismatch_is_error() {
        let cfg = SimConfig::new(0.1, 0.1, 1, 0);
        let r = simulate_coupled_pair(
            &[0.0; 3],
            &[0.0; 3],
            &[1.0; 3],
            &[1.0; 3],
            &gv(1, vec![1.0, 1.0]),
            &gv(0, vec![1.0, 1.0]),
            &cfg,
            &NoiseStream::counter(1),
        );
        assert!(matches!(r, Err(SimError::ShapeMismatch { .. })));
    }

    #[test]
    fn ledger_is_monotone_and_complementary() {
        let z0 = gv(1, vec![0.0, 0.5, 0.0]);
        let cfg = SimConfig::new(0.01, 20.0, 3, 5);
        let b = simulate_gap_srbm(&[3.0, 1.0, 0.0, -2.0], &[1.0, 2.0, 1.0, 0.5], &z0, &cfg, &NoiseStream::counter(5))
            .unwrap();
        for r in &b.replicas {
            assert!(r.max_complementarity <= SKOROKHOD_TOL);
            for w in r.frames.windows(2) {
                let (a, c) = (w[0].local_time.as_ref().unwrap(), w[1].local_time.as_ref().unwrap());
                for k in 0..3 {
                    assert!(c[k] >= a[k]);
                    if c[k] > a[k] {
                        assert_eq!(w[1].z[k], 0.0);
                    }
                }
                assert!(w[1].z.iter().all(|v| *v >= 0.0));
            }
        }
    }
}
