//! Random streams and the distribution samplers used by the partition schemes.
//!
//! Every [`RngStream`] is keyed by `(seed, stream_id)`. The uniform source is
//! a counter-based ChaCha generator whose 64-bit stream selector is the path
//! index, so independent paths never share generator state and a path's
//! draws do not depend on how paths are spread over workers.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::{ChaCha20Rng, ChaCha8Rng};
use std::f64::consts::{E, TAU};
use std::fmt;
use std::str::FromStr;

use crate::asymptotics;
use crate::error::SamplerError;

/// Threshold below which a Gaussian vector is too short to normalise.
const MIN_NORM: f64 = 1e-12;

/// Maximum number of grid substeps the oracle hitting-time sampler may take.
pub const GRID_BUDGET: u64 = 1_000_000;

/// Upper bound on the number of moving-sphere jumps for one hitting time.
const SPHERE_WALK_BUDGET: u32 = 100_000;

/// Largest substep accepted by the grid oracle.
pub const MAX_SUBSTEP: f64 = 1e-3;

/// Overshoot constant of a discretely monitored Brownian motion, ζ(1/2)/√(2π) in magnitude.
const OVERSHOOT_BETA: f64 = 0.5826;

/// Uniform generator backing an [`RngStream`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Generator {
    #[default]
    ChaCha8,
    ChaCha20,
}

impl FromStr for Generator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "chacha8" => Ok(Generator::ChaCha8),
            "chacha20" => Ok(Generator::ChaCha20),
            other => Err(format!(
                "unknown generator `{other}` (expected chacha8 or chacha20)"
            )),
        }
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Generator::ChaCha8 => f.write_str("chacha8"),
            Generator::ChaCha20 => f.write_str("chacha20"),
        }
    }
}

#[derive(Clone)]
enum Source {
    ChaCha8(ChaCha8Rng),
    ChaCha20(ChaCha20Rng),
}

/// A reproducible random stream identified by `(seed, stream_id)`.
#[derive(Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    source: Source,
    spare_normal: Option<f64>,
}

impl fmt::Debug for RngStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RngStream")
            .field("seed", &self.seed)
            .field("stream_id", &self.stream_id)
            .finish_non_exhaustive()
    }
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self::with_generator(Generator::ChaCha8, seed, stream_id)
    }

    pub fn with_generator(generator: Generator, seed: u64, stream_id: u64) -> Self {
        let source = match generator {
            Generator::ChaCha8 => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(stream_id);
                Source::ChaCha8(rng)
            }
            Generator::ChaCha20 => {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                rng.set_stream(stream_id);
                Source::ChaCha20(rng)
            }
        };
        RngStream {
            seed,
            stream_id,
            source,
            spare_normal: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        match &mut self.source {
            Source::ChaCha8(rng) => rng.next_u64(),
            Source::ChaCha20(rng) => rng.next_u64(),
        }
    }

    /// Uniform on `(0, 1]`, 53 bits of resolution. Never returns zero.
    #[inline]
    pub fn uniform_open_closed(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal by the Box–Muller transform; the second variate of
    /// each pair is kept for the next call.
    #[inline]
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform_open_closed();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (TAU * u2).sin_cos();
        self.spare_normal = Some(radius * s);
        radius * c
    }

    /// Mean-one exponential as `-ln U` with `U` in `(0, 1]`.
    #[inline]
    pub fn exponential(&mut self) -> f64 {
        -self.uniform_open_closed().ln()
    }
}

/// Fills `out` with independent standard normals.
#[inline]
pub fn fill_normal(rng: &mut RngStream, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = rng.normal();
    }
}

/// `d` independent standard normals.
pub fn sample_normal_vector(rng: &mut RngStream, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d];
    fill_normal(rng, &mut out);
    out
}

pub fn sample_exponential(rng: &mut RngStream) -> f64 {
    rng.exponential()
}

/// Draws a Gaussian vector into `out` with norm at least [`MIN_NORM`] and
/// returns its squared norm.
#[inline]
fn fill_nondegenerate_normal(rng: &mut RngStream, out: &mut [f64]) -> f64 {
    loop {
        fill_normal(rng, out);
        let sq: f64 = out.iter().map(|v| v * v).sum();
        if sq >= MIN_NORM * MIN_NORM {
            return sq;
        }
    }
}

/// Uniform direction on the unit sphere of `R^d`, written into `out`.
#[inline]
pub fn fill_sphere_direction(rng: &mut RngStream, out: &mut [f64]) {
    let norm = fill_nondegenerate_normal(rng, out).sqrt();
    for v in out.iter_mut() {
        *v /= norm;
    }
}

pub fn sample_sphere_direction(rng: &mut RngStream, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d];
    fill_sphere_direction(rng, &mut out);
    out
}

/// One exit of a Brownian motion from the normalised moving sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct MovingSphereDraw {
    /// Gamma(1 + d/2, 2/d) variate.
    pub z: f64,
    /// Normalised exit time `a(d) e^{-z}`.
    pub tau_scaled: f64,
    /// Exit direction, a unit vector.
    pub direction: Vec<f64>,
}

/// Non-allocating form of [`sample_moving_sphere`]: writes the direction into
/// `direction` and returns `(z, tau_scaled)`. `a` must be `a(d)` for
/// `d = direction.len()`.
#[inline]
pub fn fill_moving_sphere(rng: &mut RngStream, a: f64, direction: &mut [f64]) -> (f64, f64) {
    let d = direction.len() as f64;
    let sq = fill_nondegenerate_normal(rng, direction);
    let norm = sq.sqrt();
    for v in direction.iter_mut() {
        *v /= norm;
    }
    let z = (sq + 2.0 * rng.exponential()) / d;
    (z, a * (-z).exp())
}

pub fn sample_moving_sphere(rng: &mut RngStream, d: usize) -> MovingSphereDraw {
    let a = asymptotics::sphere_time_bound(d);
    let mut direction = vec![0.0; d];
    let (z, tau_scaled) = fill_moving_sphere(rng, a, &mut direction);
    MovingSphereDraw {
        z,
        tau_scaled,
        direction,
    }
}

/// Grid-monitored oracle for the first time a `d`-dimensional Brownian
/// motion started at the origin reaches the unit sphere.
///
/// Discrete monitoring overshoots the sphere, so the returned time carries
/// an `O(√substep)` upward bias. The optional continuity correction pulls
/// the barrier in by `0.5826·√substep`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselGrid {
    pub substep: f64,
    pub continuity_correction: bool,
}

impl BesselGrid {
    pub fn new(substep: f64) -> Result<Self, SamplerError> {
        if !(substep > 0.0 && substep <= MAX_SUBSTEP) {
            return Err(SamplerError::InvalidSubstep(substep));
        }
        Ok(BesselGrid {
            substep,
            continuity_correction: false,
        })
    }

    pub fn with_continuity_correction(mut self, on: bool) -> Self {
        self.continuity_correction = on;
        self
    }

    fn barrier_sq(&self) -> f64 {
        if self.continuity_correction {
            let r = 1.0 - OVERSHOOT_BETA * self.substep.sqrt();
            r * r
        } else {
            1.0
        }
    }

    pub fn sample(&self, rng: &mut RngStream, d: usize) -> Result<f64, SamplerError> {
        let barrier = self.barrier_sq();
        let sd = self.substep.sqrt();
        let mut w = vec![0.0; d];
        for k in 1..=GRID_BUDGET {
            let mut sq = 0.0;
            for wj in w.iter_mut() {
                *wj += sd * rng.normal();
                sq += *wj * *wj;
            }
            if sq >= barrier {
                return Ok(k as f64 * self.substep);
            }
        }
        Err(SamplerError::BudgetExceeded(GRID_BUDGET))
    }
}

/// Hitting time of 1 by a `d`-dimensional Bessel process from 0, using the
/// grid oracle with the continuity correction off.
pub fn sample_bessel_hitting_time(
    rng: &mut RngStream,
    d: usize,
    substep: f64,
) -> Result<f64, SamplerError> {
    BesselGrid::new(substep)?.sample(rng, d)
}

/// Hitting time of the unit sphere by walking on moving spheres.
///
/// From a point at distance `δ` from the unit sphere, a moving sphere with
/// time scale `e·δ²/(d·a)` never leaves the ball of radius `δ`, so its exit
/// is an exact intermediate point of the Brownian path. Jumps repeat until
/// `δ < tolerance`; the expected residual time `(1 - |x|²)/d` is then added.
pub fn sample_bessel_hitting_time_spheres(
    rng: &mut RngStream,
    d: usize,
    tolerance: f64,
) -> Result<f64, SamplerError> {
    let a = asymptotics::sphere_time_bound(d);
    let df = d as f64;
    let mut x = [0.0f64; 8];
    let mut heap;
    let (pos, dir): (&mut [f64], &mut [f64]) = if d <= 4 {
        let (p, q) = x.split_at_mut(4);
        (&mut p[..d], &mut q[..d])
    } else {
        heap = vec![0.0; 2 * d];
        heap.split_at_mut(d)
    };
    let mut time = 0.0;
    let mut radius_sq: f64 = 0.0;
    for _ in 0..SPHERE_WALK_BUDGET {
        let gap = 1.0 - radius_sq.sqrt();
        if gap < tolerance {
            return Ok(time + ((1.0 - radius_sq) / df).max(0.0));
        }
        let scale = E * gap * gap / (df * a);
        let (z, tau) = fill_moving_sphere(rng, a, dir);
        time += scale * tau;
        let jump = gap * (z * (1.0 - z).exp()).sqrt();
        radius_sq = 0.0;
        for (p, u) in pos.iter_mut().zip(dir.iter()) {
            *p += jump * u;
            radius_sq += *p * *p;
        }
    }
    Err(SamplerError::BudgetExceeded(SPHERE_WALK_BUDGET as u64))
}

/// How the sphere-hitting scheme draws its normalised exit times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BesselSampler {
    /// Fine-grid oracle, biased by `O(√substep)`.
    Grid(BesselGrid),
    /// Walk on moving spheres, stopped within `tolerance` of the sphere.
    MovingSpheres { tolerance: f64 },
}

impl Default for BesselSampler {
    fn default() -> Self {
        BesselSampler::MovingSpheres { tolerance: 1e-6 }
    }
}

impl BesselSampler {
    pub fn sample(&self, rng: &mut RngStream, d: usize) -> Result<f64, SamplerError> {
        match self {
            BesselSampler::Grid(grid) => grid.sample(rng, d),
            BesselSampler::MovingSpheres { tolerance } => {
                sample_bessel_hitting_time_spheres(rng, d, *tolerance)
            }
        }
    }
}
