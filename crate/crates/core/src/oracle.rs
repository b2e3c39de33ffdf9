//! Reference values computed independently of the learned solvers.

use ndarray::ArrayView2;
use rayon::prelude::*;
use statrs::function::erf::erfc;

use crate::sde::{path_running_integral, simulate_range, Dynamics, GridSpec, ModelSpec};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("domain error: {0}")]
    Domain(String),
}

/// Standard normal distribution function.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// State of a floating-strike lookback call at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LookbackParams {
    pub spot: f64,
    /// Running minimum `m_t` of the underlying so far.
    pub running_min: f64,
    pub rate: f64,
    pub vol: f64,
    /// Remaining time `T - t`.
    pub tau: f64,
}

/// Closed-form price of the floating-strike lookback `X_T - min X` under
/// geometric Brownian motion with continuous monitoring.
pub fn lookback_price(p: LookbackParams) -> Result<f64, OracleError> {
    let LookbackParams {
        spot: x,
        running_min: m,
        rate: r,
        vol: s,
        tau,
    } = p;
    if !(m > 0.0 && m <= x && s > 0.0 && r > 0.0 && tau >= 0.0)
        || ![x, m, r, s, tau].iter().all(|v| v.is_finite())
    {
        return Err(OracleError::Domain(format!(
            "need 0 < m <= x, vol > 0, rate > 0, tau >= 0; got {p:?}"
        )));
    }
    if tau == 0.0 {
        return Ok(x - m);
    }
    let sq = tau.sqrt();
    let p1 = ((x / m).ln() + (r + 0.5 * s * s) * tau) / (s * sq);
    let p2 = p1 - s * sq;
    let p3 = p1 - 2.0 * r * sq / s;
    let disc = (-r * tau).exp();
    Ok(x * norm_cdf(p1)
        - m * disc * norm_cdf(p2)
        - x * (s * s / (2.0 * r))
            * (norm_cdf(-p1) - disc * (m / x).powf(2.0 * r / (s * s)) * norm_cdf(-p3)))
}

/// Exact value at time `t` of `(∫_0^T Σ_i X^i ds)^2` for `X` a standard
/// Brownian motion, given the observed prefix (fine nodes up to `t`).
pub fn quadratic_pde_solution(
    t: f64,
    prefix: ArrayView2<'_, f64>,
    fine_dt: f64,
    horizon: f64,
) -> f64 {
    let d = prefix.ncols();
    let integral = path_running_integral(prefix, &vec![1.0; d], fine_dt)
        .last()
        .copied()
        .unwrap_or(0.0);
    let last: f64 = prefix.row(prefix.nrows() - 1).sum();
    let rem = horizon - t;
    integral.powi(2)
        + last.powi(2) * rem.powi(2)
        + 2.0 * rem * last * integral
        + d as f64 / 3.0 * rem.powi(3)
}

const MC_CHUNK: usize = 1000;

/// Monte Carlo price of the European basket Asian call
/// `e^{-rT} E[(Σ w_i/T ∫_0^T X^i dt - K)^+]`, using the fine-grid quadrature.
/// Returns the estimate and its standard error.
pub fn asian_european_mc(
    model: &ModelSpec,
    grid: &GridSpec,
    strike: f64,
    weights: &[f64],
    paths: usize,
    seed: u64,
) -> Result<(f64, f64), OracleError> {
    let Dynamics::Geometric { rate, .. } = model.dynamics else {
        return Err(OracleError::Domain(
            "the Asian reference needs a geometric model".into(),
        ));
    };
    if paths < 1000 {
        return Err(OracleError::Domain(format!(
            "at least 1000 paths are required, got {paths}"
        )));
    }
    if weights.len() != model.dim() {
        return Err(OracleError::Domain(format!(
            "{} weights for dimension {}",
            weights.len(),
            model.dim()
        )));
    }
    let disc = (-rate * grid.horizon).exp();
    let chunks: Vec<(f64, f64)> = (0..paths.div_ceil(MC_CHUNK))
        .into_par_iter()
        .map(|c| {
            let first = c * MC_CHUNK;
            let n = MC_CHUNK.min(paths - first);
            let batch = simulate_range(model, grid, first as u64, n, seed);
            (0..n).fold((0.0, 0.0), |(s, s2), j| {
                let avg = path_running_integral(batch.path(j), weights, grid.fine_dt())
                    .last()
                    .copied()
                    .unwrap_or(0.0)
                    / grid.horizon;
                let v = disc * (avg - strike).max(0.0);
                (s + v, s2 + v * v)
            })
        })
        .collect();
    let (sum, sum2) = chunks
        .iter()
        .fold((0.0, 0.0), |(a, b), (s, s2)| (a + s, b + s2));
    let p = paths as f64;
    let mean = sum / p;
    let var = (sum2 / p - mean * mean).max(0.0) * p / (p - 1.0);
    Ok((mean, (var / p).sqrt()))
}

/// `e^{-rT} (Σ w_i x^i_0 (e^{rT} - 1)/(rT) - K)^+`, a lower bound for the
/// Asian basket call under the geometric model.
pub fn jensen_lower_bound(
    model: &ModelSpec,
    horizon: f64,
    strike: f64,
    weights: &[f64],
) -> Result<f64, OracleError> {
    let Dynamics::Geometric { rate, .. } = model.dynamics else {
        return Err(OracleError::Domain(
            "the Jensen bound needs a geometric model".into(),
        ));
    };
    if weights.len() != model.dim() {
        return Err(OracleError::Domain(format!(
            "{} weights for dimension {}",
            weights.len(),
            model.dim()
        )));
    }
    let basket: f64 = model.x0.iter().zip(weights).map(|(x, w)| x * w).sum();
    let rt = rate * horizon;
    let growth = if rt.abs() < 1e-12 {
        1.0 + 0.5 * rt
    } else {
        rt.exp_m1() / rt
    };
    Ok((-rt).exp() * (basket * growth - strike).max(0.0))
}

/// Bermudan value of a deterministic problem by backward induction over the
/// coarse dates: `V_N = g_N`, `V_{n-1} = max(g_{n-1}, (1 - r Δt) V_n)`.
pub fn bermudan_deterministic_dp(exercise: &[f64], rate: f64, dt: f64) -> Result<f64, OracleError> {
    let (last, rest) = exercise
        .split_last()
        .ok_or_else(|| OracleError::Domain("at least one exercise date is required".into()))?;
    Ok(rest
        .iter()
        .rev()
        .fold(*last, |v, g| g.max(v * (1.0 - rate * dt))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn params(x: f64, m: f64) -> LookbackParams {
        LookbackParams {
            spot: x,
            running_min: m,
            rate: 0.01,
            vol: 1.0,
            tau: 1.0,
        }
    }

    #[test]
    fn norm_cdf_values() {
        assert_eq!(norm_cdf(0.0), 0.5);
        assert!((norm_cdf(1.959964) - 0.975).abs() < 1e-6);
        for x in [0.1, 0.7, 1.3, 2.9, 5.0] {
            assert!((norm_cdf(-x) - (1.0 - norm_cdf(x))).abs() < 1e-12);
        }
    }

    #[test]
    fn lookback_reference_and_limits() {
        let at_money = lookback_price(params(10.0, 10.0)).unwrap();
        assert!((at_money - 5.828).abs() < 5e-4);
        // independent double-precision evaluation of the same formula
        assert!((at_money - 5.828_174_623).abs() < 1e-8);
        let terminal = LookbackParams {
            tau: 0.0,
            ..params(12.0, 9.0)
        };
        assert_eq!(lookback_price(terminal).unwrap(), 3.0);
        let near = LookbackParams {
            tau: 1e-10,
            ..params(12.0, 9.0)
        };
        assert!((lookback_price(near).unwrap() - 3.0).abs() < 1e-3);
        let base = lookback_price(params(11.0, 9.5)).unwrap();
        let scaled = lookback_price(params(11.0 * 2.7, 9.5 * 2.7)).unwrap();
        assert!((scaled - 2.7 * base).abs() < 1e-10 * scaled);
        assert!(lookback_price(params(9.0, 10.0)).is_err());
    }

    #[test]
    fn quadratic_reference() {
        let zero = Array2::zeros((1, 20));
        assert!((quadratic_pde_solution(0.0, zero.view(), 0.01, 1.0) - 20.0 / 3.0).abs() < 1e-12);
        let zero = Array2::zeros((1, 100));
        assert!((quadratic_pde_solution(0.0, zero.view(), 0.01, 1.0) - 100.0 / 3.0).abs() < 1e-12);
        let path = Array2::from_shape_fn((11, 3), |(k, c)| ((k + 2 * c) as f64 * 0.9).sin());
        let g = path_running_integral(path.view(), &[1.0; 3], 0.1)
            .last()
            .copied()
            .unwrap()
            .powi(2);
        assert!((quadratic_pde_solution(1.0, path.view(), 0.1, 1.0) - g).abs() < 1e-12);
    }

    #[test]
    fn jensen_values() {
        let model = ModelSpec::geometric(0.05, 0.15, 100.0, 1);
        assert!((jensen_lower_bound(&model, 1.0, 100.0, &[1.0]).unwrap() - 2.418).abs() < 1e-3);
        assert_eq!(jensen_lower_bound(&model, 1.0, 103.0, &[1.0]).unwrap(), 0.0);
        let flat = ModelSpec::geometric(0.0, 0.15, 100.0, 1);
        assert!((jensen_lower_bound(&flat, 1.0, 95.0, &[1.0]).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn zero_vol_mc_is_deterministic_integral() {
        let model = ModelSpec::geometric(0.05, 0.0, 100.0, 1);
        let grid = GridSpec::new(1.0, 200, 20).unwrap();
        let (est, se) = asian_european_mc(&model, &grid, 100.0, &[1.0], 1000, 3).unwrap();
        // left-Riemann sum of the Euler path x0 (1 + r h)^i
        let h = grid.fine_dt();
        let avg: f64 = (0..200).map(|i| 100.0 * (1.0 + 0.05 * h).powi(i) * h).sum();
        assert!((est - (-0.05f64).exp() * (avg - 100.0)).abs() < 1e-10);
        assert!(se < 1e-10);
        assert!((est - 2.418).abs() < 0.02);
    }

    #[test]
    fn dp_limits() {
        assert_eq!(
            bermudan_deterministic_dp(&[0.0, 1.0, 2.0, 3.0], 0.0, 0.1).unwrap(),
            3.0
        );
        assert_eq!(
            bermudan_deterministic_dp(&[1.5, 1.0, 2.0, 3.0], 9.0, 0.1).unwrap(),
            1.5
        );
        assert!(bermudan_deterministic_dp(&[], 0.0, 0.1).is_err());
    }
}
