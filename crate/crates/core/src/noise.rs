//! Per-trajectory random streams.
//!
//! Every trajectory owns a ChaCha8 stream selected by `(seed, stream_index)`.
//! Each integration step consumes a fixed block of four 64-bit words, so the
//! draw used at step `k` sits at a fixed counter position and the path is a
//! pure function of `(seed, stream_index)` whatever the thread schedule.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Noise amplitude; zero reproduces the deterministic integrator.
    pub epsilon: f64,
    pub seed: u64,
    pub stream_index: u64,
}

impl NoiseConfig {
    pub fn new(epsilon: f64, seed: u64, stream_index: u64) -> Result<Self> {
        let cfg = Self {
            epsilon,
            seed,
            stream_index,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be finite and >= 0, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    pub fn stream(&self) -> NoiseStream {
        NoiseStream::new(self.seed, self.stream_index)
    }
}

/// 64-bit words consumed per step.
const WORDS_PER_STEP: u128 = 4;

#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
}

#[inline]
fn open_unit(word: u64) -> f64 {
    // 53 random bits mapped into (0, 1)
    ((word >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

#[inline]
fn box_muller(w1: u64, w2: u64) -> (f64, f64) {
    let radius = (-2.0 * open_unit(w1).ln()).sqrt();
    let angle = std::f64::consts::TAU * open_unit(w2);
    (radius * angle.cos(), radius * angle.sin())
}

impl NoiseStream {
    pub fn new(seed: u64, stream_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_index);
        Self { rng }
    }

    /// Positions the stream at the block of step `step`.
    pub fn seek(&mut self, step: u64) {
        // word_pos counts 32-bit words
        self.rng.set_word_pos(step as u128 * WORDS_PER_STEP * 2);
    }

    fn block(&mut self) -> [u64; 4] {
        [
            self.rng.next_u64(),
            self.rng.next_u64(),
            self.rng.next_u64(),
            self.rng.next_u64(),
        ]
    }

    /// Three independent standard normals for the next step.
    pub fn normals3(&mut self) -> [f64; 3] {
        let [a, b, c, d] = self.block();
        let (z1, z2) = box_muller(a, b);
        let (z3, _) = box_muller(c, d);
        [z1, z2, z3]
    }

    /// One standard normal plus two uniforms on (0, 1) for the next step.
    pub fn normal_and_uniforms(&mut self) -> (f64, [f64; 2]) {
        let [a, b, c, d] = self.block();
        let (z, _) = box_muller(a, b);
        (z, [open_unit(c), open_unit(d)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible() {
        let mut a = NoiseStream::new(7, 3);
        let mut b = NoiseStream::new(7, 3);
        for _ in 0..100 {
            assert_eq!(a.normals3(), b.normals3());
        }
    }

    #[test]
    fn streams_differ() {
        let mut a = NoiseStream::new(7, 3);
        let mut b = NoiseStream::new(7, 4);
        let mut c = NoiseStream::new(8, 3);
        let x = a.normals3();
        assert_ne!(x, b.normals3());
        assert_ne!(x, c.normals3());
    }

    #[test]
    fn seek_addresses_steps() {
        let mut seq = NoiseStream::new(11, 0);
        let draws: Vec<_> = (0..10).map(|_| seq.normals3()).collect();
        let mut jump = NoiseStream::new(11, 0);
        jump.seek(7);
        assert_eq!(jump.normals3(), draws[7]);
    }

    #[test]
    fn normals_have_unit_moments() {
        let mut s = NoiseStream::new(1, 0);
        let n = 200_000;
        let mut sum = [0.0; 3];
        let mut sq = [0.0; 3];
        for _ in 0..n {
            let z = s.normals3();
            for i in 0..3 {
                sum[i] += z[i];
                sq[i] += z[i] * z[i];
            }
        }
        for i in 0..3 {
            let mean = sum[i] / n as f64;
            let var = sq[i] / n as f64 - mean * mean;
            // 5 standard errors
            assert!(mean.abs() < 5.0 / (n as f64).sqrt(), "mean {mean}");
            assert!(
                (var - 1.0).abs() < 5.0 * (2.0 / n as f64).sqrt(),
                "var {var}"
            );
        }
    }

    #[test]
    fn rejects_negative_epsilon() {
        assert!(NoiseConfig::new(-1e-3, 0, 0).is_err());
        assert!(NoiseConfig::new(0.0, 0, 0).is_ok());
    }
}
