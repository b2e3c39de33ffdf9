//! Euler–Maruyama simulation of state paths on a fine grid, coarse snapshots
//! and the fine-grid path functionals used by payoffs.
//!
//! Every path draws its Brownian increments from its own ChaCha stream keyed
//! by `(seed, path index)`, so a path never depends on the batch it is
//! generated in or on the order paths are evaluated.

use ndarray::{s, Array2, Array3, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SdeError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("invalid model: {0}")]
    Model(String),
}

/// Fine grid of `fine_steps` Euler steps over `[0, horizon]`, split into
/// `coarse_steps` segments of `fine_steps / coarse_steps` steps each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub horizon: f64,
    pub fine_steps: usize,
    pub coarse_steps: usize,
}

impl GridSpec {
    pub fn new(horizon: f64, fine_steps: usize, coarse_steps: usize) -> Result<Self, SdeError> {
        let grid = Self {
            horizon,
            fine_steps,
            coarse_steps,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<(), SdeError> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(SdeError::Grid(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if self.fine_steps == 0 || self.coarse_steps == 0 {
            return Err(SdeError::Grid("step counts must be positive".into()));
        }
        if !self.fine_steps.is_multiple_of(self.coarse_steps) {
            return Err(SdeError::Grid(format!(
                "coarse steps {} do not divide fine steps {}",
                self.coarse_steps, self.fine_steps
            )));
        }
        Ok(())
    }

    /// Fine step `h = T / Ñ`.
    pub fn fine_dt(&self) -> f64 {
        self.horizon / self.fine_steps as f64
    }

    /// Fine steps per coarse segment `M = Ñ / N`.
    pub fn stride(&self) -> usize {
        self.fine_steps / self.coarse_steps
    }

    /// Coarse step `Δt = T / N`.
    pub fn coarse_dt(&self) -> f64 {
        self.horizon / self.coarse_steps as f64
    }

    pub fn fine_times(&self) -> Vec<f64> {
        let h = self.fine_dt();
        (0..=self.fine_steps).map(|i| i as f64 * h).collect()
    }

    pub fn coarse_time(&self, n: usize) -> f64 {
        n as f64 * self.coarse_dt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Dynamics {
    /// `dX^i = r X^i dt + σ_i X^i dW^i`.
    Geometric { rate: f64, vols: Vec<f64> },
    /// `dX = dW`.
    ArithmeticUnit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub dynamics: Dynamics,
    pub x0: Vec<f64>,
}

impl ModelSpec {
    pub fn geometric(rate: f64, vol: f64, x0: f64, dim: usize) -> Self {
        Self {
            dynamics: Dynamics::Geometric {
                rate,
                vols: vec![vol; dim],
            },
            x0: vec![x0; dim],
        }
    }

    pub fn arithmetic(x0: f64, dim: usize) -> Self {
        Self {
            dynamics: Dynamics::ArithmeticUnit,
            x0: vec![x0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn validate(&self) -> Result<(), SdeError> {
        if self.x0.is_empty() {
            return Err(SdeError::Model("dimension must be at least 1".into()));
        }
        if let Dynamics::Geometric { vols, rate } = &self.dynamics {
            if vols.len() != self.x0.len() {
                return Err(SdeError::Model(format!(
                    "{} volatilities for {} assets",
                    vols.len(),
                    self.x0.len()
                )));
            }
            if vols.iter().any(|v| v.is_nan() || *v < 0.0) || !rate.is_finite() {
                return Err(SdeError::Model(
                    "volatilities must be non-negative and the rate finite".into(),
                ));
            }
        }
        Ok(())
    }

    /// One Euler step from `x` with Brownian increment `dw` over `h`.
    pub fn euler_step(&self, x: &[f64], dw: &[f64], h: f64, out: &mut [f64]) {
        match &self.dynamics {
            Dynamics::Geometric { rate, vols } => {
                for i in 0..x.len() {
                    out[i] = x[i] + rate * x[i] * h + vols[i] * x[i] * dw[i];
                }
            }
            Dynamics::ArithmeticUnit => {
                for i in 0..x.len() {
                    out[i] = x[i] + dw[i];
                }
            }
        }
    }
}

/// Fine-grid paths and their Brownian increments.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    /// `B x (Ñ+1) x d`
    pub states: Array3<f64>,
    /// `B x Ñ x d`
    pub brownian: Array3<f64>,
    pub seed: u64,
    /// Stream id of each path.
    pub path_ids: Vec<u64>,
}

impl PathBatch {
    pub fn len(&self) -> usize {
        self.states.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.states.shape()[2]
    }

    pub fn fine_steps(&self) -> usize {
        self.brownian.shape()[1]
    }

    /// Fine-grid states of path `j`, `(Ñ+1) x d`.
    pub fn path(&self, j: usize) -> ArrayView2<'_, f64> {
        self.states.slice(s![j, .., ..])
    }
}

fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// Simulates paths `first .. first + batch` of the stream family `seed`.
pub fn simulate_range(
    model: &ModelSpec,
    grid: &GridSpec,
    first: u64,
    batch: usize,
    seed: u64,
) -> PathBatch {
    let (nf, d) = (grid.fine_steps, model.dim());
    let h = grid.fine_dt();
    let sqrt_h = h.sqrt();
    let per_path: Vec<(Vec<f64>, Vec<f64>)> = (0..batch as u64)
        .into_par_iter()
        .map(|j| {
            let mut rng = path_rng(seed, first + j);
            let mut states = Vec::with_capacity((nf + 1) * d);
            let mut incs = Vec::with_capacity(nf * d);
            states.extend_from_slice(&model.x0);
            let mut next = vec![0.0; d];
            for i in 0..nf {
                for _ in 0..d {
                    let z: f64 = rng.sample(StandardNormal);
                    incs.push(z * sqrt_h);
                }
                model.euler_step(
                    &states[i * d..(i + 1) * d],
                    &incs[i * d..(i + 1) * d],
                    h,
                    &mut next,
                );
                states.extend_from_slice(&next);
            }
            (states, incs)
        })
        .collect();
    let mut states = Array3::zeros((batch, nf + 1, d));
    let mut brownian = Array3::zeros((batch, nf, d));
    for (j, (st, inc)) in per_path.into_iter().enumerate() {
        states
            .slice_mut(s![j, .., ..])
            .assign(&ArrayView2::from_shape((nf + 1, d), &st).expect("shape"));
        brownian
            .slice_mut(s![j, .., ..])
            .assign(&ArrayView2::from_shape((nf, d), &inc).expect("shape"));
    }
    PathBatch {
        states,
        brownian,
        seed,
        path_ids: (first..first + batch as u64).collect(),
    }
}

/// Simulates a batch of `batch` paths with stream ids `0..batch`.
pub fn simulate_batch(model: &ModelSpec, grid: &GridSpec, batch: usize, seed: u64) -> PathBatch {
    simulate_range(model, grid, 0, batch, seed)
}

/// Replays the Euler recursion from the stored increments.
pub fn replay_states(
    model: &ModelSpec,
    grid: &GridSpec,
    brownian: ArrayView2<'_, f64>,
) -> Array2<f64> {
    let d = model.dim();
    let h = grid.fine_dt();
    let mut out = Array2::zeros((brownian.nrows() + 1, d));
    out.row_mut(0).assign(&ndarray::ArrayView1::from(&model.x0));
    let mut x = model.x0.clone();
    let mut next = vec![0.0; d];
    for i in 0..brownian.nrows() {
        let dw = brownian.row(i).to_vec();
        model.euler_step(&x, &dw, h, &mut next);
        x.copy_from_slice(&next);
        out.row_mut(i + 1).assign(&ndarray::ArrayView1::from(&x));
    }
    out
}

/// Coarse snapshots `B x (N+1) x d` and coarse increments `B x N x d`.
pub fn coarsen(batch: &PathBatch, grid: &GridSpec) -> Result<(Array3<f64>, Array3<f64>), SdeError> {
    if batch.fine_steps() != grid.fine_steps {
        return Err(SdeError::Grid(format!(
            "batch has {} fine steps, grid expects {}",
            batch.fine_steps(),
            grid.fine_steps
        )));
    }
    let (b, d, n, m) = (batch.len(), batch.dim(), grid.coarse_steps, grid.stride());
    let states = batch.states.slice(s![.., ..;m, ..]).to_owned();
    let mut incs = Array3::zeros((b, n, d));
    for j in 0..b {
        for k in 0..n {
            for c in 0..d {
                incs[[j, k, c]] = (k * m..(k + 1) * m)
                    .map(|i| batch.brownian[[j, i, c]])
                    .sum();
            }
        }
    }
    Ok((states, incs))
}

/// Left-endpoint running integral of `sum_i w_i X^i` along one fine path.
pub fn path_running_integral(path: ArrayView2<'_, f64>, weights: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(path.nrows());
    let mut acc = 0.0;
    out.push(acc);
    for k in 0..path.nrows().saturating_sub(1) {
        let v: f64 = path.row(k).iter().zip(weights).map(|(x, w)| x * w).sum();
        acc += v * h;
        out.push(acc);
    }
    out
}

/// `B x (Ñ+1)` running integrals (entry 0 is 0).
pub fn running_integral(batch: &PathBatch, weights: &[f64], grid: &GridSpec) -> Array2<f64> {
    let h = grid.fine_dt();
    let mut out = Array2::zeros((batch.len(), batch.fine_steps() + 1));
    for j in 0..batch.len() {
        let r = path_running_integral(batch.path(j), weights, h);
        out.row_mut(j).assign(&ndarray::ArrayView1::from(&r));
    }
    out
}

/// Prefix minimum per channel along one path.
pub fn path_running_min(path: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = path.to_owned();
    for k in 1..out.nrows() {
        for c in 0..out.ncols() {
            out[[k, c]] = out[[k, c]].min(out[[k - 1, c]]);
        }
    }
    out
}

/// `B x (Ñ+1) x d` prefix minima.
pub fn running_min(batch: &PathBatch) -> Array3<f64> {
    let mut out = batch.states.clone();
    for j in 0..batch.len() {
        let m = path_running_min(batch.path(j));
        out.slice_mut(s![j, .., ..]).assign(&m);
    }
    out
}
