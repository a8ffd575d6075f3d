//! Reproducible random streams.
//!
//! Every random quantity in the engine is drawn from ChaCha20
//! (`rand_chacha::ChaCha20Rng`) seeded with `seed_from_u64`. ChaCha20 is a
//! counter-based generator whose output is specified independently of the
//! host, so a seed maps to the same stream on every platform.
//!
//! Standard normal deviates use the Box–Muller transform: each pair of
//! uniforms `(u1, u2)` with `u1` in `(0, 1]` and `u2` in `[0, 1)` yields
//! `sqrt(-2 ln u1) * cos(2 pi u2)` followed by `sqrt(-2 ln u1) * sin(2 pi u2)`.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub struct SeededStream {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl SeededStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha20Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Uniform on `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform on `[0, 2 pi)`.
    pub fn phase(&mut self) -> f64 {
        let p = self.uniform() * TAU;
        // u * TAU cannot round up to TAU for u < 1, checked anyway
        if p >= TAU {
            0.0
        } else {
            p
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (TAU * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        mean + std * self.standard_normal()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
