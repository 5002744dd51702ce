//! Addressable Gaussian noise.
//!
//! Every increment is a pure function of `(seed, replica, series, index,
//! step)`. A lane fixes the first four coordinates; drawing at a step hashes
//! the step into the lane key and seeds a throwaway SplitMix64 generator
//! from it, so adding replicas, particles or steps never shifts any other
//! draw.

use std::collections::HashMap;

use rand::{Rng, RngCore};
use rand_distr::{Exp1, StandardNormal};

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// SplitMix64; only used as a per-draw generator.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }
}

impl RngCore for SplitMix64 {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// Which family of draws a lane belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Series {
    /// Per-step Brownian increments of a particle (by name or rank).
    Particle = 0,
    /// One-off Gaussian used to place a lazily activated tail particle.
    Catchup = 1,
    /// Initial gap draws.
    InitialGap = 2,
}

type Address = (u64, Series, i64, u64);

#[derive(Debug, Clone)]
enum Source {
    Counter { seed: u64 },
    Scripted { table: HashMap<Address, f64> },
}

/// Deterministic source of standard normal increments.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    source: Source,
}

impl NoiseStream {
    pub fn counter(seed: u64) -> Self {
        NoiseStream {
            source: Source::Counter { seed },
        }
    }

    /// Scripted stream: unlisted addresses yield 0 for normals and 1 for
    /// exponential draws.
    pub fn scripted() -> Self {
        NoiseStream {
            source: Source::Scripted {
                table: HashMap::new(),
            },
        }
    }

    /// Adds a scripted value; no-op on a counter stream.
    pub fn with(mut self, replica: u64, series: Series, index: i64, step: u64, value: f64) -> Self {
        if let Source::Scripted { table } = &mut self.source {
            table.insert((replica, series, index, step), value);
        }
        self
    }

    pub fn is_scripted(&self) -> bool {
        matches!(self.source, Source::Scripted { .. })
    }

    pub fn lane(&self, replica: u64, series: Series, index: i64) -> NoiseLane<'_> {
        let key = match self.source {
            Source::Counter { seed } => {
                let mut h = mix64(seed.wrapping_add(GOLDEN));
                h = mix64(h ^ replica.wrapping_mul(GOLDEN).wrapping_add(1));
                h = mix64(h ^ (series as u64).wrapping_add(0x5851_f42d_4c95_7f2d));
                mix64(h ^ index as u64)
            }
            Source::Scripted { .. } => 0,
        };
        NoiseLane {
            stream: self,
            replica,
            series,
            index,
            key,
        }
    }
}

/// Noise lane for a fixed `(replica, series, index)`.
#[derive(Debug, Clone, Copy)]
pub struct NoiseLane<'a> {
    stream: &'a NoiseStream,
    replica: u64,
    series: Series,
    index: i64,
    key: u64,
}

impl NoiseLane<'_> {
    #[inline]
    fn rng(&self, step: u64) -> SplitMix64 {
        SplitMix64::new(self.key ^ mix64(step.wrapping_add(0x2545_f491_4f6c_dd1d)))
    }

    #[inline]
    fn scripted(&self, step: u64) -> Option<f64> {
        match &self.stream.source {
            Source::Scripted { table } => Some(
                table
                    .get(&(self.replica, self.series, self.index, step))
                    .copied()
                    .unwrap_or(f64::NAN),
            ),
            Source::Counter { .. } => None,
        }
    }

    /// Standard normal draw at `step`.
    #[inline]
    pub fn normal(&self, step: u64) -> f64 {
        match self.scripted(step) {
            None => self.rng(step).sample(StandardNormal),
            Some(v) if v.is_nan() => 0.0,
            Some(v) => v,
        }
    }

    /// Standard exponential draw at `step`.
    pub fn exp1(&self, step: u64) -> f64 {
        match self.scripted(step) {
            None => self.rng(step).sample(Exp1),
            Some(v) if v.is_nan() => 1.0,
            Some(v) => v,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_address_same_value() {
        let a = NoiseStream::counter(42);
        let b = NoiseStream::counter(42);
        for step in [0, 1, 17, 1 << 40] {
            assert_eq!(
                a.lane(3, Series::Particle, -5).normal(step),
                b.lane(3, Series::Particle, -5).normal(step)
            );
        }
    }

    #[test]
    fn addresses_are_distinct() {
        let s = NoiseStream::counter(1);
        let base = s.lane(0, Series::Particle, 0).normal(0);
        assert_ne!(base, s.lane(1, Series::Particle, 0).normal(0));
        assert_ne!(base, s.lane(0, Series::Catchup, 0).normal(0));
        assert_ne!(base, s.lane(0, Series::Particle, 1).normal(0));
        assert_ne!(base, s.lane(0, Series::Particle, 0).normal(1));
        assert_ne!(base, NoiseStream::counter(2).lane(0, Series::Particle, 0).normal(0));
    }

    #[test]
    fn moments_are_standard() {
        let s = NoiseStream::counter(9);
        let n = 200_000u64;
        let (mut m1, mut m2, mut lag) = (0.0, 0.0, 0.0);
        let lane = s.lane(0, Series::Particle, 0);
        let mut prev = lane.normal(0);
        for step in 0..n {
            let x = lane.normal(step);
            m1 += x;
            m2 += x * x;
            if step > 0 {
                lag += x * prev;
            }
            prev = x;
        }
        let nf = n as f64;
        assert!((m1 / nf).abs() < 0.01);
        assert!((m2 / nf - 1.0).abs() < 0.01);
        assert!((lag / nf).abs() < 0.01);
        let cross: f64 = (0..n)
            .map(|i| {
                s.lane(i, Series::Particle, 0).normal(3) * s.lane(i, Series::Particle, 1).normal(3)
            })
            .sum::<f64>()
            / nf;
        assert!(cross.abs() < 0.01);
    }

    #[test]
    fn scripted_defaults() {
        let s = NoiseStream::scripted().with(0, Series::Particle, 2, 5, -1.5);
        let lane = s.lane(0, Series::Particle, 2);
        assert_eq!(lane.normal(5), -1.5);
        assert_eq!(lane.normal(4), 0.0);
        assert_eq!(lane.exp1(0), 1.0);
    }
}
