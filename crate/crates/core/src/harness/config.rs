//! Flat configuration documents.
//!
//! A document is a TOML table with the keys below; every key is optional and
//! unknown keys are rejected. Values are resolved in order: experiment
//! defaults for the chosen profile, then the config file, then command-line
//! flags (`--set key=value` last).
//!
//! | key | meaning |
//! |-----|---------|
//! | `experiment` | `lookback`, `quadratic` or `amerasian` |
//! | `method` | `forward`, `backward` or `reflected` |
//! | `d` | state dimension |
//! | `m` | signature depth |
//! | `features` | `signature` or `log-signature` |
//! | `embedding` | embedding width `d'`; `0` disables the layer |
//! | `fine_steps`, `coarse_steps` | `Ñ` and `N` |
//! | `horizon` | `T` |
//! | `x0`, `sigma`, `rate` | initial state, volatility, interest rate |
//! | `strike` | strike of the Asian call |
//! | `hidden` | hidden layer widths, e.g. `[64, 64]` |
//! | `batch`, `iterations`, `lr` | batch size, iteration budget, learning rate |
//! | `y0_lr`, `y0_init` | learning rate and initial value of the trainable `Y_0` |
//! | `epsilon` | loss margin for early stopping |
//! | `tail` | trailing iterations averaged into a run's estimate |
//! | `probe_burst`, `probe_limit` | iterations per probe and number of probes when bracketing `Y_0` |
//! | `runs`, `seed` | number of runs and master seed |
//! | `workers` | maximum number of concurrent runs |
//! | `reference_paths` | Monte Carlo paths of the European reference |
//! | `out` | output directory |

use std::path::Path;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::solver::FeatureKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// Reduced grids and budgets that run on a single laptop core.
    #[default]
    Desk,
    /// Full-scale grids, budgets and run counts.
    Paper,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub features: Option<FeatureKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embedding: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fine_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coarse_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strike: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y0_lr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y0_init: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe_burst: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe_limit: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_paths: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

macro_rules! overlay_fields {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl ConfigDocument {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| {
            HarnessError::validation(unknown_keys(&e.to_string()), e.message().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::validation(Vec::new(), e.to_string()))
    }

    /// Values set in `other` replace those in `self`.
    pub fn overlay(&mut self, other: &ConfigDocument) {
        overlay_fields!(self, other; experiment, method, d, m, features, embedding, fine_steps, coarse_steps,
            horizon, x0, sigma, rate, strike, hidden, batch, iterations, lr, y0_lr, y0_init, epsilon, tail,
            probe_burst, probe_limit, runs, seed, workers, reference_paths, out);
    }

    /// Applies one `key=value` assignment; the value uses TOML syntax, with
    /// bare words read as strings.
    pub fn set(&mut self, assignment: &str) -> Result<(), HarnessError> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| {
            HarnessError::validation(vec![assignment.to_string()], "expected key=value".into())
        })?;
        let (key, value) = (key.trim(), value.trim());
        let parsed = Self::parse(&format!("{key} = {value}")).or_else(|first| {
            let quoted = format!("{key} = {}", toml::Value::String(value.to_string()));
            Self::parse(&quoted).map_err(|_| first)
        })?;
        self.overlay(&parsed);
        Ok(())
    }
}

/// Key named in a TOML "unknown field" message, if any.
fn unknown_keys(message: &str) -> Vec<String> {
    message
        .split("unknown field `")
        .nth(1)
        .and_then(|rest| rest.split('`').next())
        .map(|k| vec![k.to_string()])
        .unwrap_or_default()
}
