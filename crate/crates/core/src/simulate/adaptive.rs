//! Two-sided systems by adaptive truncation.
//!
//! The infinite system is split into a ranked core and two tails. The core
//! holds the particles currently occupying the ranks of a fixed window
//! `[m, n]` and is simulated as a finite competing system with the rank
//! coefficients of that window. The window must contain the cores of both
//! coefficient fields, so every particle ranked outside it moves with a
//! tail coefficient: tail particles are independent Brownian motions.
//!
//! When a tail particle passes the adjacent extreme particle of the core it
//! is absorbed: it takes its rank inside the window, an [`AbsorptionEvent`]
//! is recorded, and the particle pushed out of the window at the opposite
//! end of the exchange joins the tail on its side. Every rank keeps the
//! coefficient it has in the infinite system, so the exchange is exact.
//!
//! # Activation
//!
//! Tail particles are created lazily, nearest first. At step `k` the next
//! pending particle on a side is instantiated while
//!
//! ```text
//! Ψ((d - ḡ R) / (σ̄ √T)) > activation_eps
//! ```
//!
//! where `d` is the distance from its mean position `x0 + g_tail t` to the
//! core hull, `R` the remaining horizon, `ḡ` the largest drift of the core
//! relative to the tail, toward the tail (clamped at zero) and
//! `σ̄² = σ_tail² + max σ_core²`. A particle instantiated at `t > 0` is
//! placed at `x0 + g_tail t + σ_tail √t ξ`, with `ξ` from its catch-up lane.
//!
//! # Block stepping
//!
//! Dense tails can hold very many active particles, most of them far from
//! the hull. An active particle at distance `D` is advanced in one block of
//! `K` steps, `x += g K dt + σ √(K dt) ξ`, where `K` is the largest power
//! of two with `Ψ((D - ḡ K dt) / (σ̄ √(K dt))) ≤ activation_eps`; the
//! Gaussian is drawn from the particle's lane at the block's first step.
//! Near the hull `K = 1`, which is the plain Euler step. Crossings are
//! checked at block ends.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::init::TwoSidedInit;
use super::named::RankedEuler;
use super::noise::{NoiseLane, NoiseStream, Series};
use super::{normal_tail, ReplicaPath, SimConfig, SimError, TrajectoryBatch};
use crate::model::{rank_cmp, DiffusionField, DriftField, Window};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Upper,
    Lower,
}

/// A tail particle entering the core window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionEvent {
    pub replica: u64,
    pub step: u64,
    pub t: f64,
    pub name: i64,
    /// Tail the particle came from.
    pub side: Side,
    /// Core window after the absorption.
    pub window: Window,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveOptions {
    #[serde(default = "default_eps")]
    pub activation_eps: f64,
    /// Per-replica cap on absorption events.
    #[serde(default = "default_max_absorptions")]
    pub max_absorptions: usize,
}

fn default_eps() -> f64 {
    1e-8
}

fn default_max_absorptions() -> usize {
    100_000
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        AdaptiveOptions {
            activation_eps: default_eps(),
            max_absorptions: default_max_absorptions(),
        }
    }
}

/// Simulates the two-sided system; frames cover the core window
/// `init.core`.
pub fn simulate_two_sided_adaptive(
    g: &DriftField,
    s: &DiffusionField,
    init: &TwoSidedInit,
    cfg: &SimConfig,
    opts: &AdaptiveOptions,
    noise: &NoiseStream,
) -> Result<TrajectoryBatch, SimError> {
    cfg.validate()?;
    init.validate()?;
    if !(opts.activation_eps > 0.0 && opts.activation_eps < 1.0) {
        return Err(SimError::InvalidConfig(format!(
            "activation_eps = {} must lie in (0, 1)",
            opts.activation_eps
        )));
    }
    let cores = [
        ("drift", g.n_minus(), g.n_plus()),
        ("diffusion", s.n_minus(), s.n_plus()),
    ];
    for (what, lo, hi) in cores {
        if lo < init.core.m || hi > init.core.n {
            return Err(SimError::CoreTooSmall(format!(
                "{what} core [{lo}, {hi}] not inside simulated core [{}, {}]",
                init.core.m, init.core.n
            )));
        }
    }
    let replicas = (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|r| Replica::new(g, s, init, cfg, opts, noise, r).run())
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TrajectoryBatch {
        config: *cfg,
        replicas,
    })
}

/// `u` with `Ψ(u) = p`, by bisection to the resolution of `f64`.
fn normal_tail_quantile(p: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if normal_tail(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

struct TailParticle<'a> {
    name: i64,
    x: f64,
    /// Step at which `x` is current.
    at: u64,
    lane: NoiseLane<'a>,
}

/// One tail: active particles keyed by the step of their next update,
/// plus the cursor of the next pending particle.
struct Tail<'a> {
    side: Side,
    drift: f64,
    sigma: f64,
    /// Relative drift toward the tail and combined diffusion scale.
    g_bar: f64,
    sigma_bar: f64,
    /// `Ψ⁻¹(activation_eps)`.
    u_eps: f64,
    particles: Vec<TailParticle<'a>>,
    /// `(due step, |name|, slot)`; ties resolve nearest name first.
    queue: BinaryHeap<Reverse<(u64, u64, usize)>>,
    next_name: i64,
    next_x0: f64,
}

impl<'a> Tail<'a> {
    /// Signed distance from `x` to the core hull, positive on this side.
    fn distance(&self, x: f64, core: &RankedEuler) -> f64 {
        match self.side {
            Side::Upper => x - core.max(),
            Side::Lower => core.min() - x,
        }
    }

    /// Whether a particle sits strictly inside the core in rank order.
    fn crosses(&self, name: i64, x: f64, core: &RankedEuler) -> bool {
        let extreme = match self.side {
            Side::Upper => *core.order.last().expect("nonempty core"),
            Side::Lower => core.order[0],
        };
        let c = rank_cmp(x, name, core.x[extreme], core.names[extreme]);
        match self.side {
            Side::Upper => c.is_lt(),
            Side::Lower => c.is_gt(),
        }
    }

    /// Whether a particle at distance `d` may close it within `tau`, with
    /// the diffusion scale taken over `scale_time`: `Ψ(u) > eps`, decided
    /// as `u < Ψ⁻¹(eps)` since `Ψ` is decreasing.
    fn may_reach(&self, d: f64, tau: f64, scale_time: f64) -> bool {
        let scale = self.sigma_bar * scale_time.sqrt();
        let slack = d - self.g_bar * tau;
        if scale > 0.0 {
            slack < self.u_eps * scale
        } else {
            slack <= 0.0
        }
    }

    /// Largest power-of-two block, at most `max_k` steps, over which a
    /// particle at distance `d` stays clear of the hull up to `eps`.
    fn block_len(&self, d: f64, dt: f64, max_k: u64) -> u64 {
        let mut k = 1u64;
        while k * 2 <= max_k {
            let tau = (k * 2) as f64 * dt;
            if self.may_reach(d, tau, tau) {
                break;
            }
            k *= 2;
        }
        k
    }

    fn add(&mut self, noise: &'a NoiseStream, replica: u64, name: i64, x: f64, at: u64) -> usize {
        self.particles.push(TailParticle {
            name,
            x,
            at,
            lane: noise.lane(replica, Series::Particle, name),
        });
        self.particles.len() - 1
    }
}

struct Replica<'a> {
    init: &'a TwoSidedInit,
    cfg: &'a SimConfig,
    opts: &'a AdaptiveOptions,
    noise: &'a NoiseStream,
    replica: u64,
    steps: u64,
    window: Window,
    core: RankedEuler<'a>,
    g_core: Vec<f64>,
    s_core: Vec<f64>,
    upper: Tail<'a>,
    lower: Tail<'a>,
}

impl<'a> Replica<'a> {
    fn new(
        g: &'a DriftField,
        s: &'a DiffusionField,
        init: &'a TwoSidedInit,
        cfg: &'a SimConfig,
        opts: &'a AdaptiveOptions,
        noise: &'a NoiseStream,
        replica: u64,
    ) -> Self {
        let w = init.core;
        let y = init.core_positions(noise, replica);
        let g_core = g.values(w.m, w.n);
        let s_core = s.values(w.m, w.n);
        let core_sigma = s_core.iter().copied().fold(0.0, f64::max);
        let g_max = g_core.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let g_min = g_core.iter().copied().fold(f64::INFINITY, f64::min);
        let u_eps = normal_tail_quantile(opts.activation_eps);
        let tail = |side, drift: f64, sigma: f64, next_name, next_x0| Tail {
            side,
            drift,
            sigma,
            g_bar: match side {
                Side::Upper => (g_max - drift).max(0.0),
                Side::Lower => (drift - g_min).max(0.0),
            },
            sigma_bar: (sigma * sigma + core_sigma * core_sigma).sqrt(),
            u_eps,
            particles: Vec::new(),
            queue: BinaryHeap::new(),
            next_name,
            next_x0,
        };
        let upper = tail(
            Side::Upper,
            g.tail_plus(),
            s.tail_plus(),
            w.n + 1,
            y[y.len() - 1] + init.source.gap(noise, replica, w.n),
        );
        let lower = tail(
            Side::Lower,
            g.tail_minus(),
            s.tail_minus(),
            w.m - 1,
            y[0] - init.source.gap(noise, replica, w.m - 1),
        );
        let core = RankedEuler::new(noise, replica, (w.m..=w.n).collect(), y);
        Replica {
            init,
            cfg,
            opts,
            noise,
            replica,
            steps: cfg.steps(),
            window: w,
            core,
            g_core,
            s_core,
            upper,
            lower,
        }
    }

    fn tail_mut(&mut self, side: Side) -> &mut Tail<'a> {
        match side {
            Side::Upper => &mut self.upper,
            Side::Lower => &mut self.lower,
        }
    }

    /// Instantiates pending particles on one side while their activation
    /// bound exceeds `eps`; returns the new slots.
    fn activate(&mut self, side: Side, step: u64) -> Vec<usize> {
        let t = step as f64 * self.cfg.dt;
        let horizon = self.cfg.horizon;
        let remaining = (horizon - t).max(0.0);
        let (noise, replica, source) = (
            self.noise,
            self.replica,
            &self.init.source,
        );
        let (core, tail) = match side {
            Side::Upper => (&self.core, &mut self.upper),
            Side::Lower => (&self.core, &mut self.lower),
        };
        let mut fresh = Vec::new();
        loop {
            let mean = tail.next_x0 + tail.drift * t;
            let d = tail.distance(mean, core);
            if !tail.may_reach(d, remaining, horizon) {
                break;
            }
            let name = tail.next_name;
            let x = if step == 0 {
                tail.next_x0
            } else {
                let xi = noise.lane(replica, Series::Catchup, name).normal(0);
                mean + tail.sigma * t.sqrt() * xi
            };
            fresh.push(tail.add(noise, replica, name, x, step));
            // Gap between `name` and the next particle outward.
            let (gap_index, next) = match side {
                Side::Upper => (name, name + 1),
                Side::Lower => (name - 1, name - 1),
            };
            let gap = source.gap(noise, replica, gap_index);
            tail.next_name = next;
            tail.next_x0 = match side {
                Side::Upper => tail.next_x0 + gap,
                Side::Lower => tail.next_x0 - gap,
            };
        }
        fresh
    }

    /// Advances every particle due at `step` to `step`; returns their slots.
    fn advance_due(&mut self, side: Side, step: u64) -> Vec<usize> {
        let dt = self.cfg.dt;
        let tail = self.tail_mut(side);
        let mut due = Vec::new();
        while let Some(&Reverse((at, _, slot))) = tail.queue.peek() {
            if at > step {
                break;
            }
            tail.queue.pop();
            let p = &mut tail.particles[slot];
            let k = (step - p.at) as f64;
            p.x += tail.drift * k * dt + tail.sigma * (k * dt).sqrt() * p.lane.normal(p.at);
            p.at = step;
            due.push(slot);
        }
        due
    }

    /// Reschedules the particles in `slots` that stay outside the core and
    /// returns the ones that crossed into it.
    fn triage(&mut self, side: Side, slots: Vec<usize>, step: u64) -> Vec<usize> {
        let (dt, steps) = (self.cfg.dt, self.steps);
        let (core, tail) = match side {
            Side::Upper => (&self.core, &mut self.upper),
            Side::Lower => (&self.core, &mut self.lower),
        };
        let mut crossed = Vec::new();
        for slot in slots {
            let p = &tail.particles[slot];
            if tail.crosses(p.name, p.x, core) {
                crossed.push(slot);
            } else if step < steps {
                let d = tail.distance(p.x, core);
                let k = tail.block_len(d, dt, steps - step);
                tail.queue.push(Reverse((step + k, p.name.unsigned_abs(), slot)));
            }
        }
        crossed
    }

    /// Re-ranks the core together with the crossed tail particles: the
    /// middle ranks form the new core, the rest return to the tails.
    fn exchange(
        &mut self,
        up: Vec<usize>,
        down: Vec<usize>,
        step: u64,
        path: &mut ReplicaPath,
    ) -> Result<(), SimError> {
        if up.is_empty() && down.is_empty() {
            return Ok(());
        }
        // (x, name, origin side or None for the core)
        let mut all: Vec<(f64, i64, Option<Side>)> = self
            .core
            .names
            .iter()
            .zip(&self.core.x)
            .map(|(&n, &x)| (x, n, None))
            .collect();
        for &i in &up {
            let p = &self.upper.particles[i];
            all.push((p.x, p.name, Some(Side::Upper)));
        }
        for &i in &down {
            let p = &self.lower.particles[i];
            all.push((p.x, p.name, Some(Side::Lower)));
        }
        all.sort_by(|a, b| rank_cmp(a.0, a.1, b.0, b.1));
        let lo = down.len();
        let hi = lo + self.window.particles();
        let t = step as f64 * self.cfg.dt;
        let mut entering: Vec<(i64, Side)> = all[lo..hi]
            .iter()
            .filter_map(|&(_, n, side)| side.map(|s| (n, s)))
            .collect();
        entering.sort_by_key(|&(n, _)| n.unsigned_abs());
        for (name, side) in entering {
            path.events.push(AbsorptionEvent {
                replica: self.replica,
                step,
                t,
                name,
                side,
                window: self.window,
            });
        }
        if path.events.len() > self.opts.max_absorptions {
            return Err(SimError::ExhaustedTailBudget {
                replica: self.replica,
                limit: self.opts.max_absorptions,
            });
        }
        self.core = RankedEuler::new(
            self.noise,
            self.replica,
            all[lo..hi].iter().map(|e| e.1).collect(),
            all[lo..hi].iter().map(|e| e.0).collect(),
        );
        let (noise, replica) = (self.noise, self.replica);
        let released_down: Vec<usize> = all[..lo]
            .iter()
            .map(|&(x, n, _)| self.lower.add(noise, replica, n, x, step))
            .collect();
        let released_up: Vec<usize> = all[hi..]
            .iter()
            .map(|&(x, n, _)| self.upper.add(noise, replica, n, x, step))
            .collect();
        // Released particles sit outside the new core by construction.
        let stray_down = self.triage(Side::Lower, released_down, step);
        let stray_up = self.triage(Side::Upper, released_up, step);
        debug_assert!(stray_down.is_empty() && stray_up.is_empty());
        Ok(())
    }

    fn run(mut self) -> Result<ReplicaPath, SimError> {
        let cfg = self.cfg;
        let sqrt_dt = cfg.dt.sqrt();
        let mut path = ReplicaPath {
            replica: self.replica,
            ..Default::default()
        };
        let fresh_up = self.activate(Side::Upper, 0);
        let fresh_down = self.activate(Side::Lower, 0);
        let up = self.triage(Side::Upper, fresh_up, 0);
        let down = self.triage(Side::Lower, fresh_down, 0);
        self.exchange(up, down, 0, &mut path)?;
        path.frames.push(self.core.frame(0, 0.0, self.window.m));
        for step in 0..self.steps {
            if !self.core.step(&self.g_core, &self.s_core, cfg.dt, sqrt_dt, step) {
                path.aborted = Some(format!("non-finite core position at step {}", step + 1));
                break;
            }
            let k = step + 1;
            let mut due_up = self.advance_due(Side::Upper, k);
            let mut due_down = self.advance_due(Side::Lower, k);
            due_up.extend(self.activate(Side::Upper, k));
            due_down.extend(self.activate(Side::Lower, k));
            let up = self.triage(Side::Upper, due_up, k);
            let down = self.triage(Side::Lower, due_down, k);
            self.exchange(up, down, k, &mut path)?;
            if cfg.records(k) {
                path.frames
                    .push(self.core.frame(k, k as f64 * cfg.dt, self.window.m));
            }
        }
        Ok(path)
    }
}
