//! Seedable, platform-independent random streams.
//!
//! Bits come from xoshiro256** seeded through SplitMix64. Uniforms use the
//! top 53 bits of each output; normals use the Box–Muller transform. Both
//! are spelled out here so outputs do not depend on `rand` version details.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

const TWO_POW_NEG_53: f64 = 1.0 / (1u64 << 53) as f64;

#[derive(Clone, Debug)]
pub struct Rng64 {
    inner: Xoshiro256StarStar,
    spare_normal: Option<f64>,
}

impl Rng64 {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256StarStar::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    /// Independent stream number `index` for `seed`: the base stream
    /// advanced by `index` jumps of 2^128 steps.
    pub fn stream(seed: u64, index: u64) -> Self {
        let mut rng = Self::new(seed);
        for _ in 0..index {
            rng.inner.jump();
        }
        rng
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * TWO_POW_NEG_53
    }

    /// Uniform on `(0, 1]`, safe for `ln`.
    fn uniform_open0(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * TWO_POW_NEG_53
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal via Box–Muller; the second variate of each pair is cached.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform_open0();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare_normal = Some(radius * angle.sin());
        radius * angle.cos()
    }

    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    /// Uniform point on the sphere of radius `r` in `R^n`.
    pub fn on_sphere(&mut self, n: usize, r: f64) -> Vec<f64> {
        loop {
            let g = self.normal_vec(n);
            let len = crate::linalg::norm(&g);
            if len > 1e-300 {
                return g.into_iter().map(|x| r * x / len).collect();
            }
        }
    }
}
