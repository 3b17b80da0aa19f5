//! SDE models `dX^i = Σ_j f^i_j(X) dW^j` with `W^0(s) = s`.
//!
//! Coefficients are stored row-major as a `p × (d+1)` matrix whose column 0
//! multiplies `dt` and columns `1..=d` multiply the Brownian increments.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::sync::Arc;

use crate::error::ModelError;

/// Named real parameters of a builtin model.
pub type Params = BTreeMap<String, f64>;

/// Distance from `π/2 + kπ` below which the arctan model rejects a state.
pub const ARCTAN_POLE_MARGIN: f64 = 1e-9;

pub trait SdeModel: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    /// `p`, the state dimension.
    fn state_dim(&self) -> usize;

    /// `d`, the Brownian dimension.
    fn noise_dim(&self) -> usize;

    fn initial_state(&self) -> Vec<f64>;

    fn domain_contains(&self, x: &[f64]) -> bool;

    /// Writes `f(x)` into `out` (row-major, `p × (d+1)`) without a domain check.
    fn coefficients_into(&self, x: &[f64], out: &mut [f64]);

    /// Strong solution as a function of `(t, W(t))`, when one exists.
    fn exact_solution(&self, _t: f64, _w: &[f64]) -> Option<Vec<f64>> {
        None
    }

    fn has_exact_solution(&self) -> bool {
        false
    }

    /// Derivatives `f_j'(x)` for a scalar model, written into `out` (length
    /// `d+1`). Defaults to a central difference with relative step `1e-6`.
    fn derivative_1d(&self, x: f64, out: &mut [f64]) {
        let cols = out.len();
        let h = 1e-6 * x.abs().max(1.0);
        let mut plus = vec![0.0; cols];
        let mut minus = vec![0.0; cols];
        self.coefficients_into(&[x + h], &mut plus);
        self.coefficients_into(&[x - h], &mut minus);
        for j in 0..cols {
            out[j] = (plus[j] - minus[j]) / (2.0 * h);
        }
    }
}

/// A `p × (d+1)` coefficient matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Coefficients {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn drift(&self, i: usize) -> f64 {
        self.get(i, 0)
    }

    /// Coefficient of `dW^j`, `j` counted from 1.
    pub fn diffusion(&self, i: usize, j: usize) -> f64 {
        assert!(j >= 1, "diffusion columns start at 1");
        self.get(i, j)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

pub fn eval_coefficients(model: &dyn SdeModel, x: &[f64]) -> Result<Coefficients, ModelError> {
    if x.len() != model.state_dim() || !model.domain_contains(x) {
        return Err(ModelError::DomainViolation(x.to_vec()));
    }
    let rows = model.state_dim();
    let cols = model.noise_dim() + 1;
    let mut data = vec![0.0; rows * cols];
    model.coefficients_into(x, &mut data);
    Ok(Coefficients { rows, cols, data })
}

/// The two-dimensional test SDE whose solution is
/// `X¹ = arctan W¹ + arctan W²`, `X² = arctan W¹ - arctan W²`.
///
/// With `u = (x¹+x²)/2`, `v = (x¹-x²)/2` the coefficients are
/// `1/(1+tan²u) = cos²u` and `tan u/(1+tan²u)² = sin u cos³u`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Arctan2d;

fn near_pole(theta: f64) -> bool {
    let r = (theta - FRAC_PI_2).rem_euclid(PI);
    r.min(PI - r) <= ARCTAN_POLE_MARGIN
}

impl SdeModel for Arctan2d {
    fn name(&self) -> &str {
        "arctan2d"
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn noise_dim(&self) -> usize {
        2
    }

    fn initial_state(&self) -> Vec<f64> {
        vec![0.0, 0.0]
    }

    fn domain_contains(&self, x: &[f64]) -> bool {
        x.iter().all(|v| v.is_finite())
            && !near_pole(0.5 * (x[0] + x[1]))
            && !near_pole(0.5 * (x[0] - x[1]))
    }

    #[inline]
    fn coefficients_into(&self, x: &[f64], out: &mut [f64]) {
        let (su, cu) = (0.5 * (x[0] + x[1])).sin_cos();
        let (sv, cv) = (0.5 * (x[0] - x[1])).sin_cos();
        let (cu2, cv2) = (cu * cu, cv * cv);
        let pull_u = su * cu * cu2;
        let pull_v = sv * cv * cv2;
        out[0] = -(pull_u + pull_v);
        out[1] = cu2;
        out[2] = cv2;
        out[3] = -(pull_u - pull_v);
        out[4] = cu2;
        out[5] = -cv2;
    }

    fn exact_solution(&self, _t: f64, w: &[f64]) -> Option<Vec<f64>> {
        let (a, b) = (w[0].atan(), w[1].atan());
        Some(vec![a + b, a - b])
    }

    fn has_exact_solution(&self) -> bool {
        true
    }
}

/// Geometric Brownian motion `dX = μX dt + σX dW`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gbm1d {
    pub sigma: f64,
    pub mu: f64,
    pub x0: f64,
}

impl Default for Gbm1d {
    fn default() -> Self {
        Gbm1d {
            sigma: 1.0,
            mu: 0.0,
            x0: 1.0,
        }
    }
}

impl SdeModel for Gbm1d {
    fn name(&self) -> &str {
        "gbm1d"
    }

    fn state_dim(&self) -> usize {
        1
    }

    fn noise_dim(&self) -> usize {
        1
    }

    fn initial_state(&self) -> Vec<f64> {
        vec![self.x0]
    }

    fn domain_contains(&self, x: &[f64]) -> bool {
        x[0].is_finite()
    }

    #[inline]
    fn coefficients_into(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.mu * x[0];
        out[1] = self.sigma * x[0];
    }

    fn exact_solution(&self, t: f64, w: &[f64]) -> Option<Vec<f64>> {
        let s = self.sigma;
        Some(vec![
            self.x0 * (s * w[0] - 0.5 * s * s * t + self.mu * t).exp(),
        ])
    }

    fn has_exact_solution(&self) -> bool {
        true
    }

    fn derivative_1d(&self, _x: f64, out: &mut [f64]) {
        out[0] = self.mu;
        out[1] = self.sigma;
    }
}

/// `dX = dW` in `R^d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BmIdentity {
    pub d: usize,
}

impl SdeModel for BmIdentity {
    fn name(&self) -> &str {
        "bm_identity"
    }

    fn state_dim(&self) -> usize {
        self.d
    }

    fn noise_dim(&self) -> usize {
        self.d
    }

    fn initial_state(&self) -> Vec<f64> {
        vec![0.0; self.d]
    }

    fn domain_contains(&self, x: &[f64]) -> bool {
        x.iter().all(|v| v.is_finite())
    }

    fn coefficients_into(&self, _x: &[f64], out: &mut [f64]) {
        let cols = self.d + 1;
        out.fill(0.0);
        for i in 0..self.d {
            out[i * cols + i + 1] = 1.0;
        }
    }

    fn exact_solution(&self, _t: f64, w: &[f64]) -> Option<Vec<f64>> {
        Some(w.to_vec())
    }

    fn has_exact_solution(&self) -> bool {
        true
    }

    fn derivative_1d(&self, _x: f64, out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// Parameter schema entry of a builtin model.
#[derive(Debug, Clone, Copy)]
pub struct ParamInfo {
    pub name: &'static str,
    pub default: f64,
    pub description: &'static str,
}

#[derive(Debug, Clone, Copy)]
pub struct ModelInfo {
    pub name: &'static str,
    pub description: &'static str,
    pub params: &'static [ParamInfo],
}

pub const BUILTIN_MODELS: &[ModelInfo] = &[
    ModelInfo {
        name: "arctan2d",
        description: "2-d SDE solved by X1 = atan W1 + atan W2, X2 = atan W1 - atan W2",
        params: &[],
    },
    ModelInfo {
        name: "gbm1d",
        description: "geometric Brownian motion dX = mu X dt + sigma X dW",
        params: &[
            ParamInfo {
                name: "sigma",
                default: 1.0,
                description: "volatility",
            },
            ParamInfo {
                name: "mu",
                default: 0.0,
                description: "drift rate",
            },
            ParamInfo {
                name: "x0",
                default: 1.0,
                description: "initial state",
            },
        ],
    },
    ModelInfo {
        name: "bm_identity",
        description: "dX = dW in R^d",
        params: &[ParamInfo {
            name: "d",
            default: 1.0,
            description: "dimension (positive integer)",
        }],
    },
];

fn param(info: &ModelInfo, params: &Params, key: &str) -> Result<f64, ModelError> {
    let default = info
        .params
        .iter()
        .find(|p| p.name == key)
        .map(|p| p.default)
        .expect("parameter listed in schema");
    let value = params.get(key).copied().unwrap_or(default);
    if !value.is_finite() {
        return Err(ModelError::InvalidParameter {
            key: key.to_owned(),
            reason: format!("{value} is not finite"),
        });
    }
    Ok(value)
}

/// Builds one of the builtin models. Unknown parameter names are rejected.
pub fn builtin_model(name: &str, params: &Params) -> Result<Arc<dyn SdeModel>, ModelError> {
    let info = BUILTIN_MODELS
        .iter()
        .find(|m| m.name == name)
        .ok_or_else(|| ModelError::UnknownModel(name.to_owned()))?;
    if let Some(key) = params
        .keys()
        .find(|k| !info.params.iter().any(|p| p.name == *k))
    {
        return Err(ModelError::InvalidParameter {
            key: key.clone(),
            reason: format!("not a parameter of {name}"),
        });
    }
    Ok(match name {
        "arctan2d" => Arc::new(Arctan2d),
        "gbm1d" => Arc::new(Gbm1d {
            sigma: param(info, params, "sigma")?,
            mu: param(info, params, "mu")?,
            x0: param(info, params, "x0")?,
        }),
        "bm_identity" => {
            let d = param(info, params, "d")?;
            if d < 1.0 || d.fract() != 0.0 || d > 1024.0 {
                return Err(ModelError::InvalidParameter {
                    key: "d".into(),
                    reason: format!("{d} is not a positive integer"),
                });
            }
            Arc::new(BmIdentity { d: d as usize })
        }
        _ => unreachable!("schema and constructor list agree"),
    })
}
