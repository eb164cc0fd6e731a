//! Seeded synthetic series.
//!
//! Normal deviates come from ChaCha8 (a counter-based stream cipher, so the
//! stream is identical on every platform) through the Box–Muller transform:
//! each pair of uniforms `(u1, u2)` with `u1 ∈ (0, 1]` yields
//! `sqrt(−2 ln u1)·cos(2π u2)` and `sqrt(−2 ln u1)·sin(2π u2)`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::pipeline::RawSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GeneratorKind {
    RandomWalk,
    Ar1,
    Sine,
    SinePlusNoise,
}

/// Parameters of a synthetic series. Fields a kind does not use are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub length: usize,
    #[serde(default)]
    pub seed: u64,
    /// Noise scale σ.
    #[serde(default)]
    pub sigma: f64,
    /// Per-step drift of the random walk.
    #[serde(default)]
    pub drift: f64,
    /// Starting value of the random walk.
    #[serde(default)]
    pub start: f64,
    /// AR(1) coefficient.
    #[serde(default)]
    pub phi: f64,
    #[serde(default = "default_period")]
    pub period: f64,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
}

fn default_period() -> f64 {
    16.0
}

fn default_amplitude() -> f64 {
    1.0
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, length: usize, seed: u64) -> Self {
        Self {
            kind,
            length,
            seed,
            sigma: 0.0,
            drift: 0.0,
            start: 0.0,
            phi: 0.0,
            period: default_period(),
            amplitude: default_amplitude(),
        }
    }

    pub fn random_walk(length: usize, seed: u64, drift: f64, sigma: f64) -> Self {
        Self {
            drift,
            sigma,
            ..Self::new(GeneratorKind::RandomWalk, length, seed)
        }
    }

    pub fn ar1(length: usize, seed: u64, phi: f64, sigma: f64) -> Self {
        Self {
            phi,
            sigma,
            ..Self::new(GeneratorKind::Ar1, length, seed)
        }
    }

    pub fn sine(length: usize, period: f64, amplitude: f64) -> Self {
        Self {
            period,
            amplitude,
            ..Self::new(GeneratorKind::Sine, length, 0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return config("generator length must be at least 1");
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return config(format!("sigma must be finite and ≥ 0, got {}", self.sigma));
        }
        match self.kind {
            GeneratorKind::Ar1 if !(self.phi.abs() < 1.0) => {
                config(format!("AR(1) needs |phi| < 1, got {}", self.phi))
            }
            GeneratorKind::Sine | GeneratorKind::SinePlusNoise
                if !(self.period.is_finite() && self.period > 0.0) =>
            {
                config(format!("sine period must be positive, got {}", self.period))
            }
            GeneratorKind::SinePlusNoise if self.sigma == 0.0 => {
                config("SINE_PLUS_NOISE needs sigma > 0")
            }
            _ => Ok(()),
        }
    }
}

/// Standard normal stream: Box–Muller over a seeded ChaCha8 generator.
pub struct NormalStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.rng.gen::<f64>();
        let u2 = self.rng.gen::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * PI * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }
}

pub fn generate(spec: &GeneratorSpec) -> Result<RawSeries> {
    spec.validate()?;
    let mut eps = NormalStream::new(spec.seed);
    let n = spec.length;
    let mut values = Vec::with_capacity(n);
    match spec.kind {
        GeneratorKind::RandomWalk => {
            let mut x = spec.start;
            values.push(x);
            for _ in 1..n {
                x += spec.drift + spec.sigma * eps.next_normal();
                values.push(x);
            }
        }
        GeneratorKind::Ar1 => {
            let mut x = spec.sigma * eps.next_normal() / (1.0 - spec.phi * spec.phi).sqrt();
            values.push(x);
            for _ in 1..n {
                x = spec.phi * x + spec.sigma * eps.next_normal();
                values.push(x);
            }
        }
        GeneratorKind::Sine | GeneratorKind::SinePlusNoise => {
            for t in 0..n {
                let clean = spec.amplitude * (2.0 * PI * t as f64 / spec.period).sin();
                let noise = if spec.sigma > 0.0 {
                    spec.sigma * eps.next_normal()
                } else {
                    0.0
                };
                values.push(clean + noise);
            }
        }
    }
    let name = format!("{:?}-seed{}", spec.kind, spec.seed).to_lowercase();
    RawSeries::from_values(name, values)
}
