//! Monte Carlo harness: moment reports of coupled terminal errors, scheme
//! comparisons, and the sphere-optimality check for quartic exit moments.
//!
//! Paths are split into fixed chunks of [`CHUNK`] consecutive stream ids.
//! Each chunk is accumulated sequentially and the chunk results are merged
//! in index order, so every report is bit-identical for any worker count.

use std::io::{self, Write};
use std::ops::Range;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::asymptotics::{self, predicted_error_ratio};
use crate::error::{ConfigError, Error, SamplerError};
use crate::integrator::{coupled_path, euler_maruyama_path};
use crate::model::{builtin_model, Params, SdeModel};
use crate::samplers::{Generator, RngStream, GRID_BUDGET, MAX_SUBSTEP};
use crate::schemes::SchemeSpec;

/// Paths per work item.
pub const CHUNK: u64 = 512;

/// Largest tolerated fraction of paths that leave the model domain.
pub const MAX_EXCLUDED_FRACTION: f64 = 1e-3;

pub const CSV_HEADER: &str =
    "scheme,n,coordinate,mean,m2,m3,m4,se_mean,se_m2,se_m3,se_m4,paths_used,paths_excluded";

/// Maps `f` over `[0, total)` in chunks of `chunk`, in parallel, returning the
/// chunk results in index order.
pub fn map_chunks<T, F>(total: u64, chunk: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<u64>) -> T + Sync,
{
    let chunks = total.div_ceil(chunk);
    (0..chunks)
        .into_par_iter()
        .map(|c| f(c * chunk..((c + 1) * chunk).min(total)))
        .collect()
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Power sums `Σ e^k`, `k = 1..=8`, of one error coordinate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MomentAccumulator {
    count: u64,
    powers: [CompensatedSum; 8],
}

impl MomentAccumulator {
    #[inline]
    pub fn push(&mut self, e: f64) {
        self.count += 1;
        let mut p = 1.0;
        for s in self.powers.iter_mut() {
            p *= e;
            s.add(p);
        }
    }

    pub fn merge(&mut self, other: &MomentAccumulator) {
        self.count += other.count;
        for (a, b) in self.powers.iter_mut().zip(&other.powers) {
            a.merge(b);
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Sample mean of `e^k`.
    pub fn raw_moment(&self, k: usize) -> f64 {
        self.powers[k - 1].value() / self.count as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.raw_moment(1);
        (self.raw_moment(2) - m * m).max(0.0)
    }

    fn std_error(&self, k: usize) -> f64 {
        let n = self.count as f64;
        let mk = self.raw_moment(k);
        ((self.raw_moment(2 * k) - mk * mk).max(0.0) / (n - 1.0)).sqrt()
    }

    pub fn report(&self, coordinate: usize, paths_excluded: u64) -> MomentReport {
        MomentReport {
            coordinate,
            mean: self.raw_moment(1),
            m2: self.raw_moment(2),
            m3: self.raw_moment(3),
            m4: self.raw_moment(4),
            se_mean: self.std_error(1),
            se_m2: self.std_error(2),
            se_m3: self.std_error(3),
            se_m4: self.std_error(4),
            paths_used: self.count,
            paths_excluded,
        }
    }
}

/// First four raw moments of one error coordinate with standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub coordinate: usize,
    pub mean: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
    pub se_mean: f64,
    pub se_m2: f64,
    pub se_m3: f64,
    pub se_m4: f64,
    pub paths_used: u64,
    pub paths_excluded: u64,
}

/// A complete Monte Carlo experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub model: String,
    pub model_params: Params,
    pub schemes: Vec<SchemeSpec>,
    pub horizon: f64,
    pub paths: u64,
    pub seed: u64,
    pub generator: Generator,
    /// Substep of the grid hitting-time oracle.
    pub substep: f64,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub const DEFAULT_PATHS: u64 = 100_000;
    pub const DEFAULT_HORIZON: f64 = 1.0;
    pub const DEFAULT_SEED: u64 = 42;
    pub const DEFAULT_SUBSTEP: f64 = 1e-4;

    pub fn new(model: impl Into<String>, schemes: Vec<SchemeSpec>) -> Self {
        ExperimentConfig {
            model: model.into(),
            model_params: Params::new(),
            schemes,
            horizon: Self::DEFAULT_HORIZON,
            paths: Self::DEFAULT_PATHS,
            seed: Self::DEFAULT_SEED,
            generator: Generator::default(),
            substep: Self::DEFAULT_SUBSTEP,
            out: None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.paths < 2 {
            return Err(ConfigError::invalid("paths", "paths must be >= 2"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(ConfigError::invalid("horizon", "horizon must be > 0"));
        }
        if !(self.substep > 0.0 && self.substep <= MAX_SUBSTEP) {
            return Err(ConfigError::invalid(
                "substep",
                "substep must lie in (0, 1e-3]",
            ));
        }
        if self.schemes.is_empty() {
            return Err(ConfigError::invalid(
                "schemes",
                "at least one scheme is required",
            ));
        }
        self.build_model()?;
        Ok(())
    }

    pub fn build_model(&self) -> Result<std::sync::Arc<dyn SdeModel>, ConfigError> {
        builtin_model(&self.model, &self.model_params).map_err(|e| {
            let key = match &e {
                crate::error::ModelError::InvalidParameter { key, .. } => {
                    format!("model.params.{key}")
                }
                _ => "model".to_owned(),
            };
            ConfigError::invalid(key, e.to_string())
        })
    }
}

/// Moment reports of one scheme.
#[derive(Debug, Clone)]
pub struct SchemeOutcome {
    pub spec: SchemeSpec,
    /// One report per state coordinate.
    pub reports: Vec<MomentReport>,
    pub mean_steps: f64,
    pub mean_finishing_steps: f64,
    pub paths_excluded: u64,
    pub wall_time: Duration,
}

impl SchemeOutcome {
    pub fn label(&self) -> &'static str {
        self.spec.kind.as_str()
    }
}

#[derive(Default)]
struct ChunkTally {
    moments: Vec<MomentAccumulator>,
    steps: u64,
    finishing: u64,
    excluded: u64,
}

fn run_scheme(
    model: &dyn SdeModel,
    spec: &SchemeSpec,
    config: &ExperimentConfig,
) -> Result<SchemeOutcome, Error> {
    let started = Instant::now();
    let p = model.state_dim();
    let chunks = map_chunks(config.paths, CHUNK, |range| -> Result<ChunkTally, Error> {
        let mut tally = ChunkTally {
            moments: vec![MomentAccumulator::default(); p],
            ..Default::default()
        };
        for path in range {
            let mut rng = RngStream::with_generator(config.generator, config.seed, path);
            let c = coupled_path(model, spec, config.horizon, &mut rng)?;
            if c.path.exited_domain {
                tally.excluded += 1;
                continue;
            }
            tally.steps += c.path.step_count;
            tally.finishing += c.path.finishing_steps;
            for (acc, e) in tally.moments.iter_mut().zip(&c.error) {
                acc.push(*e);
            }
        }
        Ok(tally)
    });

    let mut total = ChunkTally {
        moments: vec![MomentAccumulator::default(); p],
        ..Default::default()
    };
    for chunk in chunks {
        let chunk = chunk?;
        for (a, b) in total.moments.iter_mut().zip(&chunk.moments) {
            a.merge(b);
        }
        total.steps += chunk.steps;
        total.finishing += chunk.finishing;
        total.excluded += chunk.excluded;
    }

    if total.excluded as f64 > MAX_EXCLUDED_FRACTION * config.paths as f64 {
        return Err(Error::TooManyExclusions {
            excluded: total.excluded,
            total: config.paths,
        });
    }
    let used = (config.paths - total.excluded) as f64;
    Ok(SchemeOutcome {
        spec: spec.clone(),
        reports: total
            .moments
            .iter()
            .enumerate()
            .map(|(i, acc)| acc.report(i + 1, total.excluded))
            .collect(),
        mean_steps: total.steps as f64 / used,
        mean_finishing_steps: total.finishing as f64 / used,
        paths_excluded: total.excluded,
        wall_time: started.elapsed(),
    })
}

/// Runs every configured scheme on `config.paths` coupled paths, path `i`
/// using stream id `i`.
pub fn run_monte_carlo(config: &ExperimentConfig) -> Result<Vec<SchemeOutcome>, Error> {
    config.validate()?;
    let model = config.build_model()?;
    config
        .schemes
        .iter()
        .map(|spec| run_scheme(model.as_ref(), spec, config))
        .collect()
}

/// [`run_monte_carlo`] on a dedicated pool of `workers` threads.
pub fn run_monte_carlo_with_workers(
    config: &ExperimentConfig,
    workers: usize,
) -> Result<Vec<SchemeOutcome>, Error> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| run_monte_carlo(config))
}

/// Writes one CSV row per (scheme, coordinate) under [`CSV_HEADER`].
pub fn write_csv<W: Write>(outcomes: &[SchemeOutcome], mut out: W) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for o in outcomes {
        for r in &o.reports {
            writeln!(
                out,
                "{},{},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{},{}",
                o.label(),
                o.spec.n,
                r.coordinate,
                r.mean,
                r.m2,
                r.m3,
                r.m4,
                r.se_mean,
                r.se_m2,
                r.se_m3,
                r.se_m4,
                r.paths_used,
                r.paths_excluded
            )?;
        }
    }
    Ok(())
}

pub fn csv_string(outcomes: &[SchemeOutcome]) -> String {
    let mut buf = Vec::new();
    write_csv(outcomes, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("CSV is ASCII")
}

/// Two schemes run on the same model and paths.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub a: SchemeOutcome,
    pub b: SchemeOutcome,
    /// Per coordinate `m2(a) / m2(b)`.
    pub empirical_ratio: Vec<f64>,
    /// Ratio predicted from the schemes' `H` constants and resolutions.
    pub predicted_ratio: f64,
}

pub fn compare_at_matched_cost(
    config: &ExperimentConfig,
    scheme_a: &SchemeSpec,
    scheme_b: &SchemeSpec,
) -> Result<Comparison, Error> {
    let mut cfg = config.clone();
    cfg.schemes = vec![scheme_a.clone(), scheme_b.clone()];
    let d = cfg.build_model()?.noise_dim();
    let predicted_ratio = predicted_error_ratio(scheme_a, scheme_b, d)?;
    let mut outcomes = run_monte_carlo(&cfg)?.into_iter();
    let a = outcomes.next().expect("two outcomes");
    let b = outcomes.next().expect("two outcomes");
    let empirical_ratio = a
        .reports
        .iter()
        .zip(&b.reports)
        .map(|(ra, rb)| ra.m2 / rb.m2)
        .collect();
    Ok(Comparison {
        a,
        b,
        empirical_ratio,
        predicted_ratio,
    })
}

/// Sample statistics of path diagnostics (no exact solution needed).
#[derive(Debug, Clone)]
pub struct PathDiagnostics {
    /// Moments of each `z_diag` coordinate.
    pub z: Vec<MomentAccumulator>,
    pub mean_steps: f64,
    pub mean_finishing_steps: f64,
    pub max_finishing_steps: u64,
    pub paths_excluded: u64,
}

pub fn path_diagnostics(
    model: &dyn SdeModel,
    spec: &SchemeSpec,
    t: f64,
    paths: u64,
    seed: u64,
) -> Result<PathDiagnostics, Error> {
    let d = model.noise_dim();
    let chunks = map_chunks(paths, CHUNK, |range| -> Result<_, Error> {
        let mut z = vec![MomentAccumulator::default(); d];
        let (mut steps, mut fin, mut max_fin, mut excluded) = (0u64, 0u64, 0u64, 0u64);
        for path in range {
            let mut rng = RngStream::new(seed, path);
            let r = euler_maruyama_path(model, spec, t, &mut rng)?;
            if r.exited_domain {
                excluded += 1;
                continue;
            }
            steps += r.step_count;
            fin += r.finishing_steps;
            max_fin = max_fin.max(r.finishing_steps);
            for (acc, v) in z.iter_mut().zip(&r.z_diag) {
                acc.push(*v);
            }
        }
        Ok((z, steps, fin, max_fin, excluded))
    });
    let mut out = PathDiagnostics {
        z: vec![MomentAccumulator::default(); d],
        mean_steps: 0.0,
        mean_finishing_steps: 0.0,
        max_finishing_steps: 0,
        paths_excluded: 0,
    };
    let (mut steps, mut fin) = (0u64, 0u64);
    for chunk in chunks {
        let (z, s, f, m, e) = chunk?;
        for (a, b) in out.z.iter_mut().zip(&z) {
            a.merge(b);
        }
        steps += s;
        fin += f;
        out.max_finishing_steps = out.max_finishing_steps.max(m);
        out.paths_excluded += e;
    }
    let used = (paths - out.paths_excluded) as f64;
    out.mean_steps = steps as f64 / used;
    out.mean_finishing_steps = fin as f64 / used;
    Ok(out)
}

/// Moments of `draws` samples of the scalar limit error `U(t)`.
pub fn limit_error_moments(
    model: &dyn SdeModel,
    h_multiplier: f64,
    t: f64,
    draws: u64,
    substeps: usize,
    seed: u64,
) -> Result<MomentAccumulator, Error> {
    let chunks = map_chunks(draws, CHUNK, |range| -> Result<_, Error> {
        let mut acc = MomentAccumulator::default();
        for i in range {
            let mut rng = RngStream::new(seed, i);
            acc.push(asymptotics::simulate_limit_error_1d(
                model,
                h_multiplier,
                t,
                &mut rng,
                substeps,
            )?);
        }
        Ok(acc)
    });
    let mut total = MomentAccumulator::default();
    for chunk in chunks {
        total.merge(&chunk?);
    }
    Ok(total)
}

/// Monte Carlo estimate of `E[Σ_j W_j(τ)^4]` at the first exit of `W` from
/// the sphere `|W|² = d·a`, together with the lower bound `3d²a²/(d+2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalityCheck {
    pub estimate: f64,
    pub std_error: f64,
    pub bound: f64,
    /// Mean of the interpolated exit times; should be close to `a`.
    pub mean_exit_time: f64,
}

impl OptimalityCheck {
    pub fn relative_gap(&self) -> f64 {
        self.estimate / self.bound - 1.0
    }
}

/// Quartic functional and time of one grid-simulated sphere exit.
///
/// The path is monitored every `substep`; the exit point is placed where
/// the chord between the last interior grid point and the first exterior
/// one crosses the sphere.
fn sphere_exit_quartic(
    rng: &mut RngStream,
    d: usize,
    radius_sq: f64,
    substep: f64,
) -> Result<(f64, f64), SamplerError> {
    let sd = substep.sqrt();
    let mut w = vec![0.0; d];
    let mut step = vec![0.0; d];
    let mut inside_sq = 0.0;
    for k in 0..GRID_BUDGET {
        let mut sq = 0.0;
        for (wj, sj) in w.iter().zip(step.iter_mut()) {
            *sj = sd * rng.normal();
            sq += (wj + *sj) * (wj + *sj);
        }
        if sq >= radius_sq {
            // |w + λ s|² = radius_sq for λ in (0, 1]
            let ss: f64 = step.iter().map(|s| s * s).sum();
            let ws: f64 = w.iter().zip(&step).map(|(a, b)| a * b).sum();
            let c = inside_sq - radius_sq;
            let lambda = ((-ws + (ws * ws - ss * c).max(0.0).sqrt()) / ss).clamp(0.0, 1.0);
            let quartic = w
                .iter()
                .zip(&step)
                .map(|(a, b)| (a + lambda * b).powi(4))
                .sum();
            return Ok((quartic, (k as f64 + lambda) * substep));
        }
        for (wj, sj) in w.iter_mut().zip(&step) {
            *wj += sj;
        }
        inside_sq = sq;
    }
    Err(SamplerError::BudgetExceeded(GRID_BUDGET))
}

/// Checks that sphere exits attain `min E[Q(τ)] = 3d²a²/(d+2)` over stopping
/// times with `E[τ] = a`.
pub fn verify_sphere_optimality(
    d: usize,
    a: f64,
    samples: u64,
    substep: f64,
    seed: u64,
) -> Result<OptimalityCheck, Error> {
    if !(substep > 0.0 && substep <= MAX_SUBSTEP) {
        return Err(SamplerError::InvalidSubstep(substep).into());
    }
    let radius_sq = d as f64 * a;
    let chunks = map_chunks(samples, CHUNK, |range| -> Result<_, SamplerError> {
        let mut q = MomentAccumulator::default();
        let mut tau = CompensatedSum::default();
        for i in range {
            let mut rng = RngStream::new(seed, i);
            let (qi, ti) = sphere_exit_quartic(&mut rng, d, radius_sq, substep)?;
            q.push(qi);
            tau.add(ti);
        }
        Ok((q, tau))
    });
    let mut q = MomentAccumulator::default();
    let mut tau = CompensatedSum::default();
    for chunk in chunks {
        let (cq, ct) = chunk?;
        q.merge(&cq);
        tau.merge(&ct);
    }
    let df = d as f64;
    Ok(OptimalityCheck {
        estimate: q.raw_moment(1),
        std_error: (q.variance() / (samples as f64 - 1.0)).sqrt(),
        bound: 3.0 * df * df * a * a / (df + 2.0),
        mean_exit_time: tau.value() / samples as f64,
    })
}
