use serde::{Deserialize, Serialize};

use super::driver::DriverKind;
use super::features::FeatureKind;
use super::method::methods;
use super::payoff::PayoffKind;
use super::SolverError;
use crate::sde::{GridSpec, ModelSpec};

fn default_probe_burst() -> usize {
    25
}

fn default_probe_limit() -> usize {
    8
}

/// Everything needed to train one problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub experiment: String,
    pub method: String,
    pub model: ModelSpec,
    pub grid: GridSpec,
    pub driver: DriverKind,
    pub payoff: PayoffKind,
    pub depth: usize,
    pub features: FeatureKind,
    /// Output width `d'` of the embedding layer; `None` disables it.
    pub embedding: Option<usize>,
    pub hidden: Vec<usize>,
    pub batch: usize,
    pub iterations: usize,
    pub lr: f64,
    /// Learning rate of the trainable `Y_0`; defaults to `lr`.
    pub y0_lr: Option<f64>,
    /// Initial `Y_0` of the forward method; bracketed by probing when absent.
    pub y0_init: Option<f64>,
    /// Loss margin: training stops once the loss is at most this value.
    pub epsilon: f64,
    /// Number of trailing iterations averaged into the final estimate.
    pub tail: usize,
    #[serde(default = "default_probe_burst")]
    pub probe_burst: usize,
    #[serde(default = "default_probe_limit")]
    pub probe_limit: usize,
    pub runs: usize,
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn y0_lr(&self) -> f64 {
        self.y0_lr.unwrap_or(self.lr)
    }

    /// Width of the stream fed to the signature (before time augmentation).
    pub fn stream_dim(&self) -> usize {
        self.embedding.unwrap_or(self.model.dim())
    }

    /// Offending keys with a reason each; empty when usable.
    pub fn problems(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if let Err(e) = self.grid.validate() {
            out.push(("grid", e.to_string()));
        }
        if let Err(e) = self.model.validate() {
            out.push(("model", e.to_string()));
        }
        match methods().get(&self.method) {
            Err(e) => out.push(("method", e.to_string())),
            Ok(m) => {
                if m.needs_exercise() && !self.payoff.supports_exercise() {
                    out.push((
                        "method",
                        format!(
                            "method '{}' needs a payoff with exercise values",
                            self.method
                        ),
                    ));
                }
            }
        }
        if let DriverKind::Discount { rate } = self.driver {
            if !(rate >= 0.0 && rate.is_finite()) {
                out.push((
                    "driver",
                    format!("rate must be a finite non-negative number, got {rate}"),
                ));
            }
        }
        if let PayoffKind::AsianBasketCall { strike, weights } = &self.payoff {
            if !(*strike >= 0.0 && strike.is_finite()) {
                out.push((
                    "payoff",
                    format!("strike must be non-negative, got {strike}"),
                ));
            }
            if let Some(w) = weights {
                if w.len() != self.model.dim() || w.iter().any(|v| !v.is_finite()) {
                    out.push((
                        "payoff",
                        format!("{} weights for dimension {}", w.len(), self.model.dim()),
                    ));
                }
            }
        }
        if self.depth == 0 {
            out.push(("depth", "signature depth must be at least 1".into()));
        }
        if self.embedding == Some(0) {
            out.push(("embedding", "embedding width must be at least 1".into()));
        }
        if self.hidden.contains(&0) {
            out.push(("hidden", "hidden widths must be positive".into()));
        }
        if self.batch == 0 {
            out.push(("batch", "batch size must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            out.push((
                "lr",
                format!("learning rate must be positive, got {}", self.lr),
            ));
        }
        if let Some(v) = self.y0_lr {
            if !(v > 0.0 && v.is_finite()) {
                out.push(("y0_lr", format!("learning rate must be positive, got {v}")));
            }
        }
        if let Some(v) = self.y0_init {
            if !v.is_finite() {
                out.push(("y0_init", "initial value must be finite".into()));
            }
        }
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            out.push((
                "epsilon",
                format!("loss margin must be non-negative, got {}", self.epsilon),
            ));
        }
        if self.runs == 0 {
            out.push(("runs", "at least one run is required".into()));
        }
        if self.depth > 0 && self.stream_dim() > 0 {
            if let Err(e) = crate::sigcore::check_envelope(self.stream_dim() + 1, self.depth) {
                out.push(("depth", e.to_string()));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let problems = self.problems();
        if problems.is_empty() {
            return Ok(());
        }
        let text: Vec<String> = problems.iter().map(|(k, m)| format!("{k}: {m}")).collect();
        Err(SolverError::Config(text.join("; ")))
    }
}
