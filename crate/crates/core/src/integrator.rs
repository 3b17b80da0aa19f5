//! Euler–Maruyama recursion over a scheme's partition.

use crate::error::{Error, ModelError};
use crate::model::SdeModel;
use crate::samplers::RngStream;
use crate::schemes::{Partition, SchemeSpec};

/// Terminal state and diagnostics of one simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    /// `X^n(t)`, or the last state reached if the path left the domain.
    pub x_terminal: Vec<f64>,
    /// Sum of the Brownian increments fed to the scheme, i.e. `W(t)`.
    pub w_terminal: Vec<f64>,
    pub step_count: u64,
    pub finishing_steps: u64,
    /// `√n Σ ((ΔW_j)² - Δπ)/2`, the diagonal of the iterated-integral process.
    pub z_diag: Vec<f64>,
    /// Sum of step lengths.
    pub elapsed: f64,
    pub exited_domain: bool,
}

fn check_start(model: &dyn SdeModel, t: f64) -> Result<Vec<f64>, Error> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidHorizon(t));
    }
    let x0 = model.initial_state();
    if !model.domain_contains(&x0) {
        return Err(ModelError::DomainViolation(x0).into());
    }
    Ok(x0)
}

/// Simulates `X^n` on `[0, t]` with `X_{m+1} = X_m + f(X_m)·(Δπ, ΔW)`.
///
/// A path whose state leaves the model domain is stopped there and flagged
/// through `exited_domain`.
pub fn euler_maruyama_path(
    model: &dyn SdeModel,
    spec: &SchemeSpec,
    t: f64,
    rng: &mut RngStream,
) -> Result<PathResult, Error> {
    let mut x = check_start(model, t)?;
    let p = model.state_dim();
    let d = model.noise_dim();
    let cols = d + 1;
    let sqrt_n = (spec.n as f64).sqrt();

    let mut coef = vec![0.0; p * cols];
    let mut dw = vec![0.0; d];
    let mut w = vec![0.0; d];
    let mut z = vec![0.0; d];
    let mut steps = 0u64;
    let mut finishing = 0u64;
    let mut elapsed = 0.0;
    let mut exited = false;

    let mut partition = Partition::new(spec, t, d);
    while let Some((dt, is_finishing)) = partition.advance(&x, &mut dw, rng)? {
        model.coefficients_into(&x, &mut coef);
        for (i, xi) in x.iter_mut().enumerate() {
            let row = &coef[i * cols..(i + 1) * cols];
            let mut incr = row[0] * dt;
            for (fj, dwj) in row[1..].iter().zip(&dw) {
                incr += fj * dwj;
            }
            *xi += incr;
        }
        for j in 0..d {
            w[j] += dw[j];
            z[j] += 0.5 * sqrt_n * (dw[j] * dw[j] - dt);
        }
        elapsed += dt;
        steps += 1;
        if is_finishing {
            finishing += 1;
        }
        if !model.domain_contains(&x) {
            exited = true;
            break;
        }
    }

    Ok(PathResult {
        x_terminal: x,
        w_terminal: w,
        step_count: steps,
        finishing_steps: finishing,
        z_diag: z,
        elapsed,
        exited_domain: exited,
    })
}

/// A path together with its error against the closed-form solution.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPath {
    /// `X^n(t) - X(t)` with `X(t)` driven by the same Brownian increments.
    pub error: Vec<f64>,
    pub path: PathResult,
}

pub fn coupled_path(
    model: &dyn SdeModel,
    spec: &SchemeSpec,
    t: f64,
    rng: &mut RngStream,
) -> Result<CoupledPath, Error> {
    if !model.has_exact_solution() {
        return Err(ModelError::MissingExactSolution(model.name().to_owned()).into());
    }
    let path = euler_maruyama_path(model, spec, t, rng)?;
    let exact = model
        .exact_solution(t, &path.w_terminal)
        .ok_or_else(|| ModelError::MissingExactSolution(model.name().to_owned()))?;
    let error = path
        .x_terminal
        .iter()
        .zip(&exact)
        .map(|(a, b)| a - b)
        .collect();
    Ok(CoupledPath { error, path })
}

/// Unscaled terminal error `X^n(t) - X(t)`.
pub fn coupled_error(
    model: &dyn SdeModel,
    spec: &SchemeSpec,
    t: f64,
    rng: &mut RngStream,
) -> Result<Vec<f64>, Error> {
    coupled_path(model, spec, t, rng).map(|c| c.error)
}

/// Mean of `N^n_t / n` over `replications` paths drawn from `rng`.
pub fn step_count_ratio(
    model: &dyn SdeModel,
    spec: &SchemeSpec,
    t: f64,
    rng: &mut RngStream,
    replications: usize,
) -> Result<f64, Error> {
    assert!(replications >= 1, "need at least one replication");
    let mut total = 0.0;
    for _ in 0..replications {
        total += euler_maruyama_path(model, spec, t, rng)?.step_count as f64;
    }
    Ok(total / (replications as f64 * spec.n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, Gbm1d, Params};
    use crate::schemes::{GProcess, SchemeKind};
    use proptest::prelude::*;

    fn bm(d: usize) -> std::sync::Arc<dyn SdeModel> {
        let mut p = Params::new();
        p.insert("d".into(), d as f64);
        builtin_model("bm_identity", &p).unwrap()
    }

    #[test]
    fn single_gbm_step() {
        let model = Gbm1d::default();
        let spec = SchemeSpec::new(SchemeKind::Equidistant, 1).unwrap();
        let mut rng = RngStream::new(4, 2);
        let path = euler_maruyama_path(&model, &spec, 1.0, &mut rng).unwrap();
        assert_eq!(path.step_count, 1);
        assert_eq!(path.x_terminal[0], 1.0 + path.w_terminal[0]);
    }

    #[test]
    fn equidistant_counts_steps_exactly() {
        let model = Gbm1d::default();
        let spec = SchemeSpec::new(SchemeKind::Equidistant, 100).unwrap();
        let mut rng = RngStream::new(1, 0);
        let ratio = step_count_ratio(&model, &spec, 1.0, &mut rng, 20).unwrap();
        assert_eq!(ratio, 1.0);
    }

    #[test]
    fn adaptive_gaussian_doubles_steps_with_g_two() {
        let model = Gbm1d::default();
        let spec = SchemeSpec::new(SchemeKind::AdaptiveGaussian, 100)
            .unwrap()
            .with_g(GProcess::Constant(2.0));
        let mut rng = RngStream::new(1, 0);
        let ratio = step_count_ratio(&model, &spec, 1.0, &mut rng, 10).unwrap();
        assert!((ratio - 2.0).abs() < 0.02);
    }

    #[test]
    fn moving_sphere_step_count() {
        let model = Gbm1d::default();
        let spec = SchemeSpec::new(SchemeKind::MovingSphere, 100).unwrap();
        let mut rng = RngStream::new(1, 0);
        let ratio = step_count_ratio(&model, &spec, 1.0, &mut rng, 10_000).unwrap();
        assert!(ratio > 0.98 && ratio < 1.0 + 0.02 + 0.05, "{ratio}");
    }

    #[test]
    fn missing_exact_solution() {
        #[derive(Debug)]
        struct NoClosedForm;
        impl SdeModel for NoClosedForm {
            fn name(&self) -> &str {
                "ou"
            }
            fn state_dim(&self) -> usize {
                1
            }
            fn noise_dim(&self) -> usize {
                1
            }
            fn initial_state(&self) -> Vec<f64> {
                vec![0.0]
            }
            fn domain_contains(&self, _x: &[f64]) -> bool {
                true
            }
            fn coefficients_into(&self, x: &[f64], out: &mut [f64]) {
                out[0] = -x[0];
                out[1] = 1.0;
            }
        }
        let spec = SchemeSpec::new(SchemeKind::Equidistant, 10).unwrap();
        let mut rng = RngStream::new(1, 0);
        let err = coupled_error(&NoClosedForm, &spec, 1.0, &mut rng).unwrap_err();
        assert!(matches!(
            err,
            Error::Model(ModelError::MissingExactSolution(_))
        ));
    }

    #[test]
    fn bad_horizon() {
        let spec = SchemeSpec::new(SchemeKind::Equidistant, 10).unwrap();
        let mut rng = RngStream::new(1, 0);
        assert!(euler_maruyama_path(&Gbm1d::default(), &spec, 0.0, &mut rng).is_err());
        assert!(euler_maruyama_path(&Gbm1d::default(), &spec, f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn domain_exit_is_flagged() {
        #[derive(Debug)]
        struct Boxed;
        impl SdeModel for Boxed {
            fn name(&self) -> &str {
                "boxed"
            }
            fn state_dim(&self) -> usize {
                1
            }
            fn noise_dim(&self) -> usize {
                1
            }
            fn initial_state(&self) -> Vec<f64> {
                vec![0.0]
            }
            fn domain_contains(&self, x: &[f64]) -> bool {
                x[0].abs() < 0.05
            }
            fn coefficients_into(&self, _x: &[f64], out: &mut [f64]) {
                out[0] = 0.0;
                out[1] = 1.0;
            }
        }
        let spec = SchemeSpec::new(SchemeKind::Equidistant, 100).unwrap();
        let mut rng = RngStream::new(1, 0);
        let path = euler_maruyama_path(&Boxed, &spec, 1.0, &mut rng).unwrap();
        assert!(path.exited_domain);
        assert!(path.step_count < 100);
        assert!(path.elapsed < 1.0);
    }

    #[test]
    fn equidistant_z_variance_is_half() {
        let model = Gbm1d::default();
        let spec = SchemeSpec::new(SchemeKind::Equidistant, 1000).unwrap();
        let paths = 20_000;
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for i in 0..paths {
            let mut rng = RngStream::new(77, i);
            let z = euler_maruyama_path(&model, &spec, 1.0, &mut rng)
                .unwrap()
                .z_diag[0];
            s1 += z;
            s2 += z * z;
        }
        let n = paths as f64;
        let var = s2 / n - (s1 / n).powi(2);
        assert!((var - 0.5).abs() < 0.05 * 0.5, "{var}");
    }

    fn any_kind() -> impl Strategy<Value = SchemeKind> {
        prop::sample::select(SchemeKind::ALL.to_vec())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn identity_model_is_integrated_exactly(
            kind in any_kind(),
            n in 1u64..200,
            d in 1usize..4,
            seed in any::<u64>(),
            t in 0.1f64..2.0,
        ) {
            let model = bm(d);
            let spec = SchemeSpec::new(kind, n).unwrap();
            let mut rng = RngStream::new(seed, 0);
            let c = coupled_path(model.as_ref(), &spec, t, &mut rng).unwrap();
            prop_assert_eq!(&c.path.x_terminal, &c.path.w_terminal);
            prop_assert!(c.error.iter().all(|e| *e == 0.0));
            prop_assert!((c.path.elapsed - t).abs() < 1e-10);
            prop_assert!(c.path.step_count >= 1);
            prop_assert!(c.path.finishing_steps <= c.path.step_count);
        }

        #[test]
        fn paths_are_reproducible(kind in any_kind(), seed in any::<u64>(), stream in any::<u64>()) {
            let model = builtin_model("arctan2d", &Params::new()).unwrap();
            let spec = SchemeSpec::new(kind, 20).unwrap();
            let a = euler_maruyama_path(model.as_ref(), &spec, 1.0, &mut RngStream::new(seed, stream)).unwrap();
            let b = euler_maruyama_path(model.as_ref(), &spec, 1.0, &mut RngStream::new(seed, stream)).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
