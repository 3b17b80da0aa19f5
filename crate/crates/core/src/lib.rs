//! Euler–Maruyama simulation on random partitions.
//!
//! The crate provides Gaussian, sphere-hitting and moving-sphere step
//! schemes, exact samplers for their increments, a Monte Carlo harness for
//! strong-error moments, and the asymptotic constants that predict those
//! moments.

pub mod asymptotics;
pub mod config;
pub mod error;
pub mod experiments;
pub mod integrator;
pub mod model;
pub mod samplers;
pub mod schemes;

pub use asymptotics::{constants, reduction_ratio, AsymptoticConstants};
pub use config::{parse_config, parse_config_with_overrides};
pub use error::{
    AsymptoticsError, ConfigError, Error, ModelError, Result, SamplerError, SchemeError,
};
pub use experiments::{
    run_monte_carlo, run_monte_carlo_with_workers, write_csv, ExperimentConfig, MomentReport,
    SchemeOutcome,
};
pub use integrator::{coupled_error, euler_maruyama_path, PathResult};
pub use model::{builtin_model, Params, SdeModel};
pub use samplers::{Generator, RngStream};
pub use schemes::{GProcess, SchemeKind, SchemeSpec, TimeChange};
