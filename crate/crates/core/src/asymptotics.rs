//! Closed-form asymptotic constants and a simulator for the one-dimensional
//! limit of the rescaled error `√n (X^n - X)`.
//!
//! The limit law depends on the partition only through the fourth-moment
//! process `H`, which for the schemes here is a constant multiple of `1/G`:
//! `3` for Gaussian increments, `3d/(d+2)` for sphere hitting and `3 r(d)`
//! for the moving sphere.

use num_bigint::BigUint;

use crate::error::{AsymptoticsError, Error};
use crate::model::SdeModel;
use crate::samplers::RngStream;
use crate::schemes::SchemeSpec;

/// Dimension-dependent constants of the moving-sphere construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticConstants {
    pub d: usize,
    /// `(1 + 2/d)^{1 + d/2}`, the largest normalised moving-sphere step.
    pub a: f64,
    /// Error reduction ratio of the moving-sphere scheme.
    pub r: f64,
    /// Efficiency bound `d/(d+2)`, attained by sphere hitting.
    pub lower_bound: f64,
    /// `d/(d+1)`: the break-even ratio once the extra exponential draw is paid for.
    pub gaussian_ratio: f64,
}

/// `a(d) = (1 + 2/d)^{1 + d/2}`, evaluated in log space.
pub fn sphere_time_bound(d: usize) -> f64 {
    let d = d as f64;
    ((1.0 + d / 2.0) * (2.0 / d).ln_1p()).exp()
}

/// `ln r(d)` with `r(d) = (d+2)^{d+2} / (d^{d/2} (d+4)^{(d+4)/2})`.
pub fn ln_reduction_ratio(d: usize) -> f64 {
    let d = d as f64;
    (d + 2.0) * (d + 2.0).ln() - 0.5 * d * d.ln() - 0.5 * (d + 4.0) * (d + 4.0).ln()
}

pub fn reduction_ratio(d: usize) -> f64 {
    ln_reduction_ratio(d).exp()
}

pub fn constants(d: usize) -> AsymptoticConstants {
    assert!(d >= 1, "dimension must be positive");
    let df = d as f64;
    AsymptoticConstants {
        d,
        a: sphere_time_bound(d),
        r: reduction_ratio(d),
        lower_bound: df / (df + 2.0),
        gaussian_ratio: df / (df + 1.0),
    }
}

/// Squared moving-sphere radius profile `ψ(v) = d v ln(a/v)` on `(0, a]`.
pub fn psi(v: f64, d: usize) -> Result<f64, AsymptoticsError> {
    let a = sphere_time_bound(d);
    if !(v > 0.0 && v <= a) {
        return Err(AsymptoticsError::OutOfRange { value: v, bound: a });
    }
    Ok(d as f64 * v * (a / v).ln())
}

/// Checks `d/(d+2) < r(d) < d/(d+1)` in integer arithmetic.
///
/// Squaring removes the half-integer powers:
/// lower: `(d+2)^{2d+6} > d^{d+2} (d+4)^{d+4}`,
/// upper: `(d+2)^{2d+4} (d+1)^2 < d^{d+2} (d+4)^{d+4}`.
pub fn bracketing_holds_exact(d: usize) -> bool {
    let d = d as u32;
    let big = |base: u32, exp: u32| BigUint::from(base).pow(exp);
    let rhs = big(d, d + 2) * big(d + 4, d + 4);
    let lower = big(d + 2, 2 * d + 6) > rhs;
    let upper = big(d + 2, 2 * d + 4) * big(d + 1, 2) < rhs;
    lower && upper
}

/// The same inequalities compared in log space.
pub fn bracketing_holds_log(d: usize) -> bool {
    let df = d as f64;
    let ln_r = ln_reduction_ratio(d);
    (df / (df + 2.0)).ln() < ln_r && ln_r < (df / (df + 1.0)).ln()
}

/// One row of the reduction-ratio figure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FigureRow {
    pub d: usize,
    pub r: f64,
    pub lower_bound: f64,
}

pub fn figure_rows(max_d: usize) -> Vec<FigureRow> {
    (1..=max_d)
        .map(|d| {
            let c = constants(d);
            FigureRow {
                d,
                r: c.r,
                lower_bound: c.lower_bound,
            }
        })
        .collect()
}

/// Predicted ratio of mean squared terminal errors of two schemes,
/// `(HG)_a n_b / ((HG)_b n_a)`.
pub fn predicted_error_ratio(
    spec_a: &SchemeSpec,
    spec_b: &SchemeSpec,
    d: usize,
) -> Result<f64, AsymptoticsError> {
    if spec_a.g_process != spec_b.g_process {
        return Err(AsymptoticsError::MismatchedG);
    }
    let (_, hg_a) = spec_a.theoretical_g_h(d);
    let (_, hg_b) = spec_b.theoretical_g_h(d);
    Ok(hg_a * spec_b.n as f64 / (hg_b * spec_a.n as f64))
}

/// Draws one sample of the limit error `U(t)` for a scalar SDE (`p = 1`).
///
/// `h_multiplier` is the constant value of `H` (with `G = 1`). The driving
/// path `X` is taken from the closed-form solution when the model has one and
/// from an Euler recursion on the `substeps` grid otherwise. The iterated
/// integrals `Z^{l,j}` are independent Brownian motions with variance rate
/// `H/6`.
pub fn simulate_limit_error_1d(
    model: &dyn SdeModel,
    h_multiplier: f64,
    t: f64,
    rng: &mut RngStream,
    substeps: usize,
) -> Result<f64, Error> {
    let p = model.state_dim();
    if p != 1 {
        return Err(AsymptoticsError::NotOneDimensional(p).into());
    }
    let d = model.noise_dim();
    let cols = d + 1;
    let h = t / substeps as f64;
    let sqrt_h = h.sqrt();
    let z_scale = (h_multiplier * h / 6.0).sqrt();

    let has_exact = model.has_exact_solution();
    let mut w = vec![0.0; d];
    let mut dw = vec![0.0; d];
    let mut x = model.initial_state();
    let mut f = vec![0.0; cols];
    let mut df = vec![0.0; cols];
    let mut ln_y = 0.0f64;
    let mut integral = 0.0;

    for k in 0..substeps {
        model.coefficients_into(&x, &mut f);
        model.derivative_1d(x[0], &mut df);
        let y_inv = (-ln_y).exp();

        let mut forcing = 0.0;
        for dfj in &df[1..] {
            for fl in &f[1..] {
                forcing += dfj * fl * rng.normal();
            }
        }
        integral += y_inv * z_scale * forcing;

        for v in dw.iter_mut() {
            *v = sqrt_h * rng.normal();
        }
        ln_y += df[0] * h;
        for j in 1..cols {
            ln_y += df[j] * dw[j - 1] - 0.5 * df[j] * df[j] * h;
        }
        for (wj, dwj) in w.iter_mut().zip(&dw) {
            *wj += dwj;
        }
        if has_exact {
            let s = (k + 1) as f64 * h;
            x = model
                .exact_solution(s, &w)
                .expect("model reported a closed form");
        } else {
            let mut next = x[0] + f[0] * h;
            for j in 1..cols {
                next += f[j] * dw[j - 1];
            }
            x[0] = next;
        }
    }
    Ok(-ln_y.exp() * integral)
}
