//! Shared fixtures for the scheme benchmarks.

use empart::{builtin_model, Params, SchemeKind, SchemeSpec, SdeModel};
use std::sync::Arc;

/// The two-dimensional arctan model used for the table runs.
pub fn arctan_model() -> Arc<dyn SdeModel> {
    builtin_model("arctan2d", &Params::new()).expect("builtin model")
}

/// Every scheme kind at resolution `n`.
pub fn all_schemes(n: u64) -> Vec<SchemeSpec> {
    SchemeKind::ALL
        .iter()
        .map(|&k| SchemeSpec::new(k, n).expect("positive resolution"))
        .collect()
}
