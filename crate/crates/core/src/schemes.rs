//! Partition schemes: how each step's duration `Δπ` and Brownian increment
//! `ΔW` are generated, and how a path is brought exactly onto the horizon.
//!
//! Every scheme is driven by a positive process `G` evaluated at the left
//! end of the step, with `E[Δπ | F] = 1/(nG)`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::asymptotics;
use crate::error::SchemeError;
use crate::samplers::{self, BesselSampler, RngStream};

/// Relative slack used when deciding whether a step lands on the horizon.
const LANDING_SLACK: f64 = 1e-9;

/// Number of points used to check that a time change is increasing.
const TIME_CHANGE_PROBES: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchemeKind {
    Equidistant,
    AdaptiveGaussian,
    TimeChange,
    SphereHitting,
    MovingSphere,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 5] = [
        SchemeKind::Equidistant,
        SchemeKind::AdaptiveGaussian,
        SchemeKind::TimeChange,
        SchemeKind::SphereHitting,
        SchemeKind::MovingSphere,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeKind::Equidistant => "equidistant",
            SchemeKind::AdaptiveGaussian => "adaptive_gaussian",
            SchemeKind::TimeChange => "time_change",
            SchemeKind::SphereHitting => "sphere_hitting",
            SchemeKind::MovingSphere => "moving_sphere",
        }
    }

    pub fn is_gaussian(self) -> bool {
        matches!(
            self,
            SchemeKind::Equidistant | SchemeKind::AdaptiveGaussian | SchemeKind::TimeChange
        )
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim())
            .ok_or_else(|| format!("unknown scheme `{}`", s.trim()))
    }
}

type GFn = dyn Fn(f64, &[f64]) -> f64 + Send + Sync;

/// The step-density process `G(t, x)`.
#[derive(Clone)]
pub enum GProcess {
    Constant(f64),
    Custom(Arc<GFn>),
}

impl GProcess {
    pub fn custom(f: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        GProcess::Custom(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, t: f64, x: &[f64]) -> Result<f64, SchemeError> {
        let value = match self {
            GProcess::Constant(g) => *g,
            GProcess::Custom(f) => f(t, x),
        };
        if value.is_finite() && value > 0.0 {
            Ok(value)
        } else {
            Err(SchemeError::InvalidG { time: t, value })
        }
    }
}

impl Default for GProcess {
    fn default() -> Self {
        GProcess::Constant(1.0)
    }
}

impl PartialEq for GProcess {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (GProcess::Constant(a), GProcess::Constant(b)) => a == b,
            (GProcess::Custom(a), GProcess::Custom(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl fmt::Debug for GProcess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GProcess::Constant(g) => write!(f, "Constant({g})"),
            GProcess::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// An increasing map `g` with `g(0) = 0`; the partition is `π_m = g(m/n)`.
#[derive(Clone)]
pub struct TimeChange {
    map: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    label: String,
}

impl TimeChange {
    /// Wraps `map` after checking `g(0) = 0` and strict increase on 1024
    /// points of `(0, probe_end]`.
    pub fn new(
        label: impl Into<String>,
        probe_end: f64,
        map: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self, SchemeError> {
        let label = label.into();
        let at_zero = map(0.0);
        if at_zero != 0.0 {
            return Err(SchemeError::InvalidTimeChange(format!(
                "{label}: g(0) = {at_zero}, expected 0"
            )));
        }
        let mut prev = at_zero;
        for k in 1..=TIME_CHANGE_PROBES {
            let u = probe_end * k as f64 / TIME_CHANGE_PROBES as f64;
            let value = map(u);
            if !(value.is_finite() && value > prev) {
                return Err(SchemeError::InvalidTimeChange(format!(
                    "{label}: not increasing near u = {u}"
                )));
            }
            prev = value;
        }
        Ok(TimeChange {
            map: Arc::new(map),
            label,
        })
    }

    /// `g(u) = scale · u^exponent`.
    pub fn power(scale: f64, exponent: f64) -> Result<Self, SchemeError> {
        if !(scale > 0.0 && exponent > 0.0 && scale.is_finite() && exponent.is_finite()) {
            return Err(SchemeError::InvalidTimeChange(format!(
                "power map needs positive scale and exponent, got {scale}, {exponent}"
            )));
        }
        let probe_end = (1.0 / scale).powf(1.0 / exponent).max(1.0);
        Self::new(format!("{scale}*u^{exponent}"), probe_end, move |u| {
            scale * u.powf(exponent)
        })
    }

    pub fn identity() -> Self {
        Self::power(1.0, 1.0).expect("identity is a valid time change")
    }

    #[inline]
    pub fn apply(&self, u: f64) -> f64 {
        (self.map)(u)
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl fmt::Debug for TimeChange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TimeChange({})", self.label)
    }
}

/// A scheme together with its resolution and `G` process.
#[derive(Debug, Clone)]
pub struct SchemeSpec {
    pub kind: SchemeKind,
    pub n: u64,
    pub g_process: GProcess,
    time_change: Option<TimeChange>,
    pub bessel: BesselSampler,
}

impl SchemeSpec {
    pub fn new(kind: SchemeKind, n: u64) -> Result<Self, SchemeError> {
        if n == 0 {
            return Err(SchemeError::InvalidResolution(n));
        }
        let time_change = (kind == SchemeKind::TimeChange).then(TimeChange::identity);
        Ok(SchemeSpec {
            kind,
            n,
            g_process: GProcess::default(),
            time_change,
            bessel: BesselSampler::default(),
        })
    }

    pub fn with_g(mut self, g: GProcess) -> Self {
        self.g_process = g;
        self
    }

    pub fn with_bessel(mut self, bessel: BesselSampler) -> Self {
        self.bessel = bessel;
        self
    }

    pub fn with_time_change(mut self, g: TimeChange) -> Result<Self, SchemeError> {
        if self.kind != SchemeKind::TimeChange {
            return Err(SchemeError::InvalidTimeChange(format!(
                "scheme {} does not take a time change",
                self.kind
            )));
        }
        self.time_change = Some(g);
        Ok(self)
    }

    pub fn time_change(&self) -> Option<&TimeChange> {
        self.time_change.as_ref()
    }

    /// `(G multiplier, H·G)` for this scheme in dimension `d`.
    pub fn theoretical_g_h(&self, d: usize) -> (f64, f64) {
        let df = d as f64;
        let hg = match self.kind {
            SchemeKind::Equidistant | SchemeKind::AdaptiveGaussian | SchemeKind::TimeChange => 3.0,
            SchemeKind::SphereHitting => 3.0 * df / (df + 2.0),
            SchemeKind::MovingSphere => 3.0 * asymptotics::reduction_ratio(d),
        };
        (1.0, hg)
    }

    /// One unconstrained step from `state`, ignoring any horizon.
    pub fn next_step(
        &self,
        state: &SchemeState,
        x: &[f64],
        d: usize,
        rng: &mut RngStream,
    ) -> Result<SchemeStep, SchemeError> {
        let g = self.g_process.eval(state.time, x)?;
        let mut dw = vec![0.0; d];
        let dt = self.draw(state, g, asymptotics::sphere_time_bound(d), &mut dw, rng)?;
        Ok(SchemeStep {
            dt,
            dw,
            finishing: false,
        })
    }

    /// Draws `(dt, dw)` for the current kind, writing `dw` in place.
    #[inline]
    fn draw(
        &self,
        state: &SchemeState,
        g: f64,
        a: f64,
        dw: &mut [f64],
        rng: &mut RngStream,
    ) -> Result<f64, SchemeError> {
        let n = self.n as f64;
        let d = dw.len() as f64;
        let dt = match self.kind {
            SchemeKind::Equidistant => {
                // a constant G only changes the mesh of the uniform grid
                if !matches!(self.g_process, GProcess::Constant(_)) {
                    return Err(SchemeError::NonConstantG(self.kind.as_str()));
                }
                let dt = 1.0 / (n * g);
                gaussian_increment(rng, dt, dw);
                dt
            }
            SchemeKind::AdaptiveGaussian => {
                let dt = 1.0 / (n * g);
                gaussian_increment(rng, dt, dw);
                dt
            }
            SchemeKind::TimeChange => {
                let tc = self.time_change.as_ref().expect("time change present");
                let m = state.index as f64;
                let dt = tc.apply((m + 1.0) / n) - tc.apply(m / n);
                if !(dt > 0.0 && dt.is_finite()) {
                    return Err(SchemeError::InvalidTimeChange(format!(
                        "{}: step {} has length {dt}",
                        tc.label(),
                        state.index
                    )));
                }
                gaussian_increment(rng, dt, dw);
                dt
            }
            SchemeKind::SphereHitting => {
                let radius_sq = d / (n * g);
                let tau = self.bessel.sample(rng, dw.len())?;
                samplers::fill_sphere_direction(rng, dw);
                let radius = radius_sq.sqrt();
                for v in dw.iter_mut() {
                    *v *= radius;
                }
                radius_sq * tau
            }
            SchemeKind::MovingSphere => {
                let scale = 1.0 / (n * g);
                let (z, tau) = samplers::fill_moving_sphere(rng, a, dw);
                let radius = (scale * d * z * tau).sqrt();
                for v in dw.iter_mut() {
                    *v *= radius;
                }
                scale * tau
            }
        };
        Ok(dt)
    }

    /// Equidistant Gaussian steps covering `remaining` exactly, each no
    /// longer than `1/n`.
    pub fn finish_to_horizon(
        &self,
        remaining: f64,
        d: usize,
        rng: &mut RngStream,
    ) -> Vec<SchemeStep> {
        let k = finishing_step_count(remaining, self.n);
        let mut steps = Vec::with_capacity(k as usize);
        let mut covered = 0.0;
        for i in 0..k {
            let dt = if i + 1 == k {
                remaining - covered
            } else {
                remaining / k as f64
            };
            covered += dt;
            let mut dw = vec![0.0; d];
            gaussian_increment(rng, dt, &mut dw);
            steps.push(SchemeStep {
                dt,
                dw,
                finishing: true,
            });
        }
        steps
    }
}

/// Number of finishing steps for a gap of `remaining` at resolution `n`.
pub fn finishing_step_count(remaining: f64, n: u64) -> u64 {
    if remaining <= 0.0 {
        return 0;
    }
    ((remaining * n as f64 - LANDING_SLACK).ceil() as u64).max(1)
}

#[inline]
fn gaussian_increment(rng: &mut RngStream, dt: f64, dw: &mut [f64]) {
    let sd = dt.sqrt();
    for v in dw.iter_mut() {
        *v = sd * rng.normal();
    }
}

/// Position of a path along its partition.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SchemeState {
    pub time: f64,
    /// Number of scheme steps taken so far.
    pub index: u64,
}

/// One partition increment.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeStep {
    pub dt: f64,
    pub dw: Vec<f64>,
    /// Set on equidistant steps used to land on the horizon.
    pub finishing: bool,
}

/// Walks one path's partition from 0 to a fixed horizon.
///
/// Gaussian kinds truncate their last step. The moving sphere switches to
/// equidistant steps once the gap to the horizon is below its largest
/// possible step `a/(nG)`. Sphere hitting discards a proposal that would
/// overshoot and finishes equidistantly from its left end.
#[derive(Debug)]
pub struct Partition<'a> {
    spec: &'a SchemeSpec,
    horizon: f64,
    a: f64,
    state: SchemeState,
    finishing_left: u64,
    finishing_dt: f64,
}

impl<'a> Partition<'a> {
    pub fn new(spec: &'a SchemeSpec, horizon: f64, d: usize) -> Self {
        Partition {
            spec,
            horizon,
            a: asymptotics::sphere_time_bound(d),
            state: SchemeState::default(),
            finishing_left: 0,
            finishing_dt: 0.0,
        }
    }

    pub fn state(&self) -> SchemeState {
        self.state
    }

    pub fn is_done(&self) -> bool {
        self.finishing_left == 0 && self.state.time >= self.horizon
    }

    /// Produces the next step into `dw`, returning `(dt, finishing)`, or
    /// `None` once the horizon is reached. `x` is the path value at the
    /// current partition point.
    pub fn advance(
        &mut self,
        x: &[f64],
        dw: &mut [f64],
        rng: &mut RngStream,
    ) -> Result<Option<(f64, bool)>, SchemeError> {
        if self.finishing_left > 0 {
            return Ok(Some(self.finishing_step(dw, rng)));
        }
        if self.state.time >= self.horizon {
            return Ok(None);
        }
        let remaining = self.horizon - self.state.time;
        let g = self.spec.g_process.eval(self.state.time, x)?;

        if self.spec.kind == SchemeKind::MovingSphere {
            let largest = self.a / (self.spec.n as f64 * g);
            if remaining < largest {
                self.start_finishing(remaining);
                return Ok(Some(self.finishing_step(dw, rng)));
            }
        }

        let dt = self.spec.draw(&self.state, g, self.a, dw, rng)?;

        if self.spec.kind.is_gaussian() {
            if self.state.time + dt >= self.horizon - LANDING_SLACK * dt {
                let truncated = remaining < dt * (1.0 - LANDING_SLACK);
                if truncated {
                    // rescale the increment to the shortened interval
                    let shrink = (remaining / dt).sqrt();
                    for v in dw.iter_mut() {
                        *v *= shrink;
                    }
                }
                self.state.time = self.horizon;
                self.state.index += 1;
                return Ok(Some((remaining, truncated)));
            }
        } else if self.state.time + dt > self.horizon {
            // SphereHitting only: moving-sphere steps never reach this branch.
            self.start_finishing(remaining);
            return Ok(Some(self.finishing_step(dw, rng)));
        }

        self.state.time += dt;
        self.state.index += 1;
        Ok(Some((dt, false)))
    }

    fn start_finishing(&mut self, remaining: f64) {
        let k = finishing_step_count(remaining, self.spec.n);
        self.finishing_left = k;
        self.finishing_dt = remaining / k as f64;
    }

    fn finishing_step(&mut self, dw: &mut [f64], rng: &mut RngStream) -> (f64, bool) {
        self.finishing_left -= 1;
        let dt = if self.finishing_left == 0 {
            let dt = self.horizon - self.state.time;
            self.state.time = self.horizon;
            dt
        } else {
            self.state.time += self.finishing_dt;
            self.finishing_dt
        };
        self.state.index += 1;
        gaussian_increment(rng, dt, dw);
        (dt, true)
    }
}

/// Checks the deterministic bounds of a non-finishing moving-sphere step:
/// `dt ≤ a/(nG)` and `|dw|² ≤ d·a/(e·nG)`.
pub fn moving_sphere_bounds_hold(step_dt: f64, dw: &[f64], n: u64, g: f64) -> bool {
    let d = dw.len();
    let a = asymptotics::sphere_time_bound(d);
    let scale = 1.0 / (n as f64 * g);
    let sq: f64 = dw.iter().map(|v| v * v).sum();
    step_dt <= a * scale * (1.0 + 1e-12)
        && sq <= d as f64 * a * scale / std::f64::consts::E * (1.0 + 1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: SchemeKind, n: u64) -> SchemeSpec {
        SchemeSpec::new(kind, n).unwrap()
    }

    struct Sums {
        count: f64,
        dt: f64,
        sq: f64,
        w3: Vec<f64>,
        w4: Vec<f64>,
        w6: Vec<f64>,
        w8: Vec<f64>,
    }

    fn raw_steps(spec: &SchemeSpec, d: usize, samples: usize, seed: u64) -> Sums {
        let mut rng = RngStream::new(seed, 0);
        let state = SchemeState::default();
        let x = vec![0.0; d];
        let mut s = Sums {
            count: samples as f64,
            dt: 0.0,
            sq: 0.0,
            w3: vec![0.0; d],
            w4: vec![0.0; d],
            w6: vec![0.0; d],
            w8: vec![0.0; d],
        };
        let g = match spec.g_process {
            GProcess::Constant(g) => g,
            _ => 1.0,
        };
        for _ in 0..samples {
            let step = spec.next_step(&state, &x, d, &mut rng).unwrap();
            if spec.kind == SchemeKind::MovingSphere {
                assert!(moving_sphere_bounds_hold(step.dt, &step.dw, spec.n, g));
            }
            assert!(step.dt > 0.0);
            s.dt += step.dt;
            for (j, w) in step.dw.iter().enumerate() {
                s.sq += w * w;
                s.w3[j] += w.powi(3);
                s.w4[j] += w.powi(4);
                s.w6[j] += w.powi(6);
                s.w8[j] += w.powi(8);
            }
        }
        s
    }

    #[test]
    fn equidistant_step_is_one_over_n() {
        let s = spec(SchemeKind::Equidistant, 10);
        let mut rng = RngStream::new(1, 0);
        for _ in 0..100 {
            let step = s
                .next_step(&SchemeState::default(), &[0.0], 1, &mut rng)
                .unwrap();
            assert_eq!(step.dt, 0.1);
        }
    }

    #[test]
    fn equidistant_mesh_follows_constant_g() {
        let s = spec(SchemeKind::Equidistant, 10).with_g(GProcess::Constant(2.0));
        let mut rng = RngStream::new(1, 0);
        let step = s
            .next_step(&SchemeState::default(), &[0.0], 1, &mut rng)
            .unwrap();
        assert_eq!(step.dt, 0.05);
        let s = spec(SchemeKind::Equidistant, 10).with_g(GProcess::custom(|t, _| 1.0 + t));
        assert_eq!(
            s.next_step(&SchemeState::default(), &[0.0], 1, &mut rng),
            Err(SchemeError::NonConstantG("equidistant"))
        );
    }

    #[test]
    fn sphere_hitting_one_dimension_takes_two_values() {
        let s = spec(SchemeKind::SphereHitting, 4);
        let mut rng = RngStream::new(1, 0);
        for _ in 0..10_000 {
            let step = s
                .next_step(&SchemeState::default(), &[0.0], 1, &mut rng)
                .unwrap();
            assert!(step.dw[0] == 0.5 || step.dw[0] == -0.5);
        }
    }

    #[test]
    fn sphere_hitting_radius_is_fixed() {
        for d in 1..=4 {
            let s = spec(SchemeKind::SphereHitting, 7).with_g(GProcess::Constant(1.5));
            let mut rng = RngStream::new(2, d as u64);
            for _ in 0..1000 {
                let step = s
                    .next_step(&SchemeState::default(), &vec![0.0; d], d, &mut rng)
                    .unwrap();
                let sq: f64 = step.dw.iter().map(|v| v * v).sum();
                let want = d as f64 / (7.0 * 1.5);
                assert!((sq - want).abs() <= 1e-9 * want);
            }
        }
    }

    #[test]
    fn moving_sphere_mean_step() {
        let s = raw_steps(&spec(SchemeKind::MovingSphere, 1), 2, 1_000_000, 3);
        assert!((s.dt / s.count - 1.0).abs() < 0.005);
    }

    #[test]
    fn moving_sphere_fourth_moment_one_dimension() {
        let s = raw_steps(&spec(SchemeKind::MovingSphere, 1), 1, 1_000_000, 4);
        let want = 3.0 * asymptotics::reduction_ratio(1);
        assert!((want - 1.449).abs() < 5e-4);
        assert!((s.w4[0] / s.count - want).abs() < 0.01 * want);
    }

    #[test]
    fn theoretical_constants() {
        assert_eq!(
            spec(SchemeKind::Equidistant, 1).theoretical_g_h(2),
            (1.0, 3.0)
        );
        assert_eq!(spec(SchemeKind::SphereHitting, 1).theoretical_g_h(2).1, 1.5);
        let ms = spec(SchemeKind::MovingSphere, 1).theoretical_g_h(2).1;
        assert!((ms - 3.0 * 256.0 / 432.0).abs() < 1e-12);
        assert!((ms - 1.777_78).abs() < 1e-5);
    }

    #[test]
    fn finishing_examples() {
        let s = spec(SchemeKind::MovingSphere, 100);
        let mut rng = RngStream::new(1, 0);
        assert!(s.finish_to_horizon(0.0, 2, &mut rng).is_empty());
        let steps = s.finish_to_horizon(0.03, 2, &mut rng);
        assert_eq!(steps.len(), 3);
        let total: f64 = steps.iter().map(|s| s.dt).sum();
        assert!((total - 0.03).abs() < 1e-15);
        for st in &steps {
            assert!(st.finishing);
            assert!((st.dt - 0.01).abs() < 1e-15);
        }
    }

    #[test]
    fn moving_sphere_triggers_finishing_below_largest_step() {
        // a(2) = 4, so with n = 100 the largest step is 0.04 > 0.03
        let s = spec(SchemeKind::MovingSphere, 100);
        let mut p = Partition::new(&s, 0.03, 2);
        let mut rng = RngStream::new(9, 0);
        let mut dw = [0.0; 2];
        let mut steps = Vec::new();
        while let Some(step) = p.advance(&[0.0, 0.0], &mut dw, &mut rng).unwrap() {
            steps.push(step);
        }
        assert_eq!(steps.len(), 3);
        assert!(steps
            .iter()
            .all(|&(dt, fin)| fin && (dt - 0.01).abs() < 1e-15));
    }

    #[test]
    fn partition_lands_on_horizon() {
        for kind in SchemeKind::ALL {
            for d in [1, 2] {
                let s = spec(kind, 37).with_g(GProcess::Constant(1.3));
                let mut rng = RngStream::new(5, d as u64);
                for path in 0..50 {
                    let horizon = 0.7 + 0.01 * path as f64;
                    let mut p = Partition::new(&s, horizon, d);
                    let mut dw = vec![0.0; d];
                    let mut total = 0.0;
                    let mut steps = 0;
                    while let Some((dt, _)) = p.advance(&vec![0.0; d], &mut dw, &mut rng).unwrap() {
                        assert!(dt > 0.0, "{kind}");
                        total += dt;
                        steps += 1;
                    }
                    assert!(steps >= 1);
                    assert_eq!(p.state().time, horizon);
                    assert!((total - horizon).abs() < 1e-12, "{kind}: {total}");
                }
            }
        }
    }

    #[test]
    fn equidistant_partition_has_exactly_n_steps() {
        let s = spec(SchemeKind::Equidistant, 100);
        let mut p = Partition::new(&s, 1.0, 1);
        let mut rng = RngStream::new(1, 1);
        let mut dw = [0.0];
        let mut count = 0;
        while let Some((_, fin)) = p.advance(&[0.0], &mut dw, &mut rng).unwrap() {
            assert!(!fin);
            count += 1;
        }
        assert_eq!(count, 100);
    }

    #[test]
    fn time_change_follows_map() {
        let tc = TimeChange::power(1.0, 2.0).unwrap();
        let s = spec(SchemeKind::TimeChange, 10)
            .with_time_change(tc)
            .unwrap();
        let mut p = Partition::new(&s, 1.0, 1);
        let mut rng = RngStream::new(1, 1);
        let mut dw = [0.0];
        let mut dts = Vec::new();
        while let Some((dt, _)) = p.advance(&[0.0], &mut dw, &mut rng).unwrap() {
            dts.push(dt);
        }
        assert_eq!(dts.len(), 10);
        for (m, dt) in dts.iter().enumerate() {
            let want = ((m + 1) as f64 / 10.0).powi(2) - (m as f64 / 10.0).powi(2);
            assert!((dt - want).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_inputs() {
        assert!(SchemeSpec::new(SchemeKind::Equidistant, 0).is_err());
        assert!(TimeChange::new("bad", 1.0, |u| 1.0 + u).is_err());
        assert!(TimeChange::new("dec", 1.0, |u| -u).is_err());
        assert!(TimeChange::power(-1.0, 1.0).is_err());
        let tc = TimeChange::identity();
        assert!(spec(SchemeKind::Equidistant, 3)
            .with_time_change(tc)
            .is_err());

        let s = spec(SchemeKind::AdaptiveGaussian, 3).with_g(GProcess::custom(|_, _| -1.0));
        let mut rng = RngStream::new(1, 1);
        let err = s
            .next_step(&SchemeState::default(), &[0.0], 1, &mut rng)
            .unwrap_err();
        assert!(matches!(err, SchemeError::InvalidG { .. }));
        let s = spec(SchemeKind::MovingSphere, 3).with_g(GProcess::Constant(f64::NAN));
        assert!(s
            .next_step(&SchemeState::default(), &[0.0], 1, &mut rng)
            .is_err());
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in SchemeKind::ALL {
            assert_eq!(kind.as_str().parse::<SchemeKind>().unwrap(), kind);
        }
        assert!("euler".parse::<SchemeKind>().is_err());
    }

    #[test]
    fn increments_are_symmetric_and_isometric() {
        let samples = 200_000;
        for kind in SchemeKind::ALL {
            for d in [1, 3] {
                let s = raw_steps(
                    &spec(kind, 5).with_g(GProcess::Constant(2.0)),
                    d,
                    samples,
                    17,
                );
                let n = s.count;
                for j in 0..d {
                    let m3 = s.w3[j] / n;
                    let se = (s.w6[j] / n / n).sqrt();
                    assert!(m3.abs() < 3.0 * se, "{kind} d={d}: {m3} vs se {se}");
                }
                let lhs = s.sq / n;
                let rhs = d as f64 * s.dt / n;
                assert!(
                    (lhs / rhs - 1.0).abs() < 0.01,
                    "{kind} d={d}: {lhs} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn fourth_moment_ordering() {
        let samples = 1_000_000;
        let d = 2;
        // (mean of dw_1^4, its standard error)
        let stats = |kind| {
            let s = raw_steps(&spec(kind, 3), d, samples, 23);
            let m4 = s.w4[0] / s.count;
            let var = s.w8[0] / s.count - m4 * m4;
            (m4, (var / s.count).sqrt())
        };
        let (sphere, se_s) = stats(SchemeKind::SphereHitting);
        let (moving, se_m) = stats(SchemeKind::MovingSphere);
        let (gauss, se_g) = stats(SchemeKind::Equidistant);
        let per_coord = |hg: f64| hg / 9.0;
        assert!((sphere / per_coord(1.5) - 1.0).abs() < 0.02);
        assert!((moving / per_coord(3.0 * asymptotics::reduction_ratio(2)) - 1.0).abs() < 0.02);
        assert!((gauss / per_coord(3.0) - 1.0).abs() < 0.02);
        assert!(moving - sphere > 5.0 * (se_s * se_s + se_m * se_m).sqrt());
        assert!(gauss - moving > 5.0 * (se_m * se_m + se_g * se_g).sqrt());
    }
}
