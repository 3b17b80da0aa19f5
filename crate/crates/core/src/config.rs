//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # arctan2d, two schemes at matched cost
//! model = arctan2d
//! schemes = equidistant,moving_sphere
//! n.equidistant = 625
//! n.moving_sphere = 435
//! ```
//!
//! Recognised keys: `model`, `model.params.<name>`, `schemes` (comma list),
//! `n.<scheme>`, `g.<scheme>` (constant G, default 1; the map `u/G` for
//! `time_change`), `paths`, `horizon`,
//! `seed`, `substep`, `generator`, `out`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::error::ConfigError;
use crate::experiments::ExperimentConfig;
use crate::samplers::Generator;
use crate::schemes::{GProcess, SchemeKind, SchemeSpec, TimeChange};

/// Parses `key = value` lines into `(line, key, value)`.
fn entries(text: &str) -> Result<BTreeMap<String, (usize, String)>, ConfigError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Parse {
            line,
            message: format!("expected `key = value`, found `{content}`"),
        })?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() {
            return Err(ConfigError::Parse {
                line,
                message: "empty key".into(),
            });
        }
        if map
            .insert(key.to_owned(), (line, value.to_owned()))
            .is_some()
        {
            return Err(ConfigError::Parse {
                line,
                message: format!("duplicate key `{key}`"),
            });
        }
    }
    Ok(map)
}

fn number(key: &str, value: &str) -> Result<f64, ConfigError> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| ConfigError::invalid(key, format!("`{value}` is not a number")))
}

fn integer(key: &str, value: &str) -> Result<i128, ConfigError> {
    value
        .parse::<i128>()
        .map_err(|_| ConfigError::invalid(key, format!("`{value}` is not an integer")))
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    parse_config_with_overrides(text, &[])
}

/// Like [`parse_config`], with `key=value` overrides applied after the
/// document (an override may introduce a key the document lacks).
pub fn parse_config_with_overrides(
    text: &str,
    overrides: &[(String, String)],
) -> Result<ExperimentConfig, ConfigError> {
    let mut map = entries(text)?;
    for (k, v) in overrides {
        map.insert(k.trim().to_owned(), (0, v.trim().to_owned()));
    }
    build(map)
}

fn build(map: BTreeMap<String, (usize, String)>) -> Result<ExperimentConfig, ConfigError> {
    let model = map
        .get("model")
        .map(|(_, v)| v.clone())
        .filter(|v| !v.is_empty())
        .ok_or_else(|| ConfigError::invalid("model", "model missing"))?;
    let mut cfg = ExperimentConfig::new(model, Vec::new());

    let mut kinds = Vec::new();
    if let Some((_, list)) = map.get("schemes") {
        for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let kind: SchemeKind = name
                .parse()
                .map_err(|_| ConfigError::invalid("schemes", format!("unknown scheme `{name}`")))?;
            if kinds.contains(&kind) {
                return Err(ConfigError::invalid(
                    "schemes",
                    format!("scheme `{name}` listed twice"),
                ));
            }
            kinds.push(kind);
        }
    }
    if kinds.is_empty() {
        return Err(ConfigError::invalid(
            "schemes",
            "at least one scheme is required",
        ));
    }

    for (key, (_, value)) in &map {
        match key.as_str() {
            "model" | "schemes" => {}
            "paths" => {
                let v = integer(key, value)?;
                if v < 2 {
                    return Err(ConfigError::invalid(key, "paths must be >= 2"));
                }
                cfg.paths = u64::try_from(v)
                    .map_err(|_| ConfigError::invalid(key, "paths is too large"))?;
            }
            "horizon" => {
                let v = number(key, value)?;
                if v <= 0.0 {
                    return Err(ConfigError::invalid(key, "horizon must be > 0"));
                }
                cfg.horizon = v;
            }
            "seed" => {
                cfg.seed = value
                    .parse()
                    .map_err(|_| ConfigError::invalid(key, format!("`{value}` is not a u64")))?;
            }
            "substep" => cfg.substep = number(key, value)?,
            "generator" => {
                cfg.generator = value
                    .parse::<Generator>()
                    .map_err(|e| ConfigError::invalid(key, e.to_string()))?;
            }
            "out" => cfg.out = Some(PathBuf::from(value)),
            k if k.starts_with("model.params.") => {
                let name = &k["model.params.".len()..];
                cfg.model_params
                    .insert(name.to_owned(), number(key, value)?);
            }
            k if k.starts_with("n.") || k.starts_with("g.") => {
                let name = &k[2..];
                let kind: SchemeKind = name
                    .parse()
                    .map_err(|_| ConfigError::invalid(key, format!("unknown scheme `{name}`")))?;
                if !kinds.contains(&kind) {
                    return Err(ConfigError::invalid(
                        key,
                        format!("scheme `{name}` is not listed in `schemes`"),
                    ));
                }
            }
            _ => return Err(ConfigError::invalid(key, "unknown key")),
        }
    }

    for kind in kinds {
        let n_key = format!("n.{kind}");
        let (_, n_text) = map
            .get(&n_key)
            .ok_or_else(|| ConfigError::invalid(&n_key, "resolution missing"))?;
        let n = integer(&n_key, n_text)?;
        if n < 1 || n > u64::MAX as i128 {
            return Err(ConfigError::invalid(&n_key, "n must be a positive integer"));
        }
        let mut spec = SchemeSpec::new(kind, n as u64)
            .map_err(|e| ConfigError::invalid(&n_key, e.to_string()))?;
        let g_key = format!("g.{kind}");
        if let Some((_, g_text)) = map.get(&g_key) {
            let g = number(&g_key, g_text)?;
            if g <= 0.0 {
                return Err(ConfigError::invalid(&g_key, "G must be > 0"));
            }
            spec = if kind == SchemeKind::TimeChange {
                let map = TimeChange::power(1.0 / g, 1.0)
                    .map_err(|e| ConfigError::invalid(&g_key, e.to_string()))?;
                spec.with_time_change(map)
                    .map_err(|e| ConfigError::invalid(&g_key, e.to_string()))?
            } else {
                spec.with_g(GProcess::Constant(g))
            };
        }
        cfg.schemes.push(spec);
    }

    cfg.validate()?;
    Ok(cfg)
}
