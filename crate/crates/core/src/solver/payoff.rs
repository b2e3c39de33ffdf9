use std::fmt::Debug;
use std::sync::Arc;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::sde::{path_running_integral, path_running_min, GridSpec};

/// Terminal condition `g` of the backward equation, evaluated on a fine path.
pub trait Payoff: Send + Sync + Debug {
    fn name(&self) -> &str;

    /// `g` on one fine-grid path (`(Ñ+1) x d`).
    fn terminal(&self, path: ArrayView2<'_, f64>, grid: &GridSpec) -> f64;

    /// Exercise values at the coarse dates `0..=N` for early-exercise
    /// problems; `None` when the claim has no early-exercise rule.
    fn exercise_values(&self, _path: ArrayView2<'_, f64>, _grid: &GridSpec) -> Option<Vec<f64>> {
        None
    }
}

/// Floating-strike lookback: `X_T - min_t X_t`, summed over channels.
#[derive(Debug, Clone, Copy, Default)]
pub struct Lookback;

impl Payoff for Lookback {
    fn name(&self) -> &str {
        "lookback"
    }

    fn terminal(&self, path: ArrayView2<'_, f64>, _grid: &GridSpec) -> f64 {
        let mins = path_running_min(path);
        let last = path.nrows() - 1;
        (0..path.ncols())
            .map(|c| path[[last, c]] - mins[[last, c]])
            .sum()
    }
}

/// `(∫_0^T Σ_i X^i_s ds)^2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct QuadraticIntegral;

impl Payoff for QuadraticIntegral {
    fn name(&self) -> &str {
        "quadratic-integral"
    }

    fn terminal(&self, path: ArrayView2<'_, f64>, grid: &GridSpec) -> f64 {
        let weights = vec![1.0; path.ncols()];
        let integral = path_running_integral(path, &weights, grid.fine_dt());
        integral.last().copied().unwrap_or(0.0).powi(2)
    }
}

/// Basket call on the running average, `(Σ_i w_i/T ∫_0^T X^i dt - K)^+`.
///
/// Exercising at coarse date `t_n > 0` pays `((1/t_n) ∫_0^{t_n} Σ w_i X^i - K)^+`;
/// at `t_0 = 0` it pays `(Σ w_i x^i_0 - K)^+`.
#[derive(Debug, Clone)]
pub struct AsianBasketCall {
    pub strike: f64,
    pub weights: Vec<f64>,
}

impl AsianBasketCall {
    fn averages(&self, path: ArrayView2<'_, f64>, grid: &GridSpec) -> Vec<f64> {
        let integral = path_running_integral(path, &self.weights, grid.fine_dt());
        let stride = grid.stride();
        (0..=grid.coarse_steps)
            .map(|n| {
                if n == 0 {
                    path.row(0)
                        .iter()
                        .zip(&self.weights)
                        .map(|(x, w)| x * w)
                        .sum()
                } else {
                    integral[n * stride] / grid.coarse_time(n)
                }
            })
            .collect()
    }
}

impl Payoff for AsianBasketCall {
    fn name(&self) -> &str {
        "asian-basket-call"
    }

    fn terminal(&self, path: ArrayView2<'_, f64>, grid: &GridSpec) -> f64 {
        let integral = path_running_integral(path, &self.weights, grid.fine_dt());
        (integral.last().copied().unwrap_or(0.0) / grid.horizon - self.strike).max(0.0)
    }

    fn exercise_values(&self, path: ArrayView2<'_, f64>, grid: &GridSpec) -> Option<Vec<f64>> {
        let mut values: Vec<f64> = self
            .averages(path, grid)
            .into_iter()
            .map(|a| (a - self.strike).max(0.0))
            .collect();
        // the last date uses the terminal payoff exactly
        *values.last_mut().expect("N >= 1") = self.terminal(path, grid);
        Some(values)
    }
}

/// Serializable payoff selector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PayoffKind {
    Lookback,
    QuadraticIntegral,
    AsianBasketCall {
        strike: f64,
        /// Defaults to equal weights `1/d`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
}

impl PayoffKind {
    pub fn build(&self, dim: usize) -> Arc<dyn Payoff> {
        match self {
            PayoffKind::Lookback => Arc::new(Lookback),
            PayoffKind::QuadraticIntegral => Arc::new(QuadraticIntegral),
            PayoffKind::AsianBasketCall { strike, weights } => Arc::new(AsianBasketCall {
                strike: *strike,
                weights: weights
                    .clone()
                    .unwrap_or_else(|| vec![1.0 / dim as f64; dim]),
            }),
        }
    }

    pub fn supports_exercise(&self) -> bool {
        matches!(self, PayoffKind::AsianBasketCall { .. })
    }
}
