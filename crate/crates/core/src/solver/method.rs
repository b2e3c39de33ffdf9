//! Training procedures as interchangeable strategies.
//!
//! A [`Method`] owns the discrete backward-equation recursion and its loss.
//! The shared training loop simulates paths, evaluates the per-date
//! approximators and hands their outputs `Z_n` to the method, which returns
//! the loss, the current estimate of `Y_0`, and cotangents for `Z_n` (and for
//! the trainable `Y_0` where the method has one).

use std::sync::{Arc, OnceLock};

use ndarray::{Array2, Array3};

use super::driver::DriverKind;
use super::SolverError;
use crate::sde::GridSpec;

/// Inputs to one batch recursion.
#[derive(Debug, Clone, Copy)]
pub struct RecursionInputs<'a> {
    pub grid: &'a GridSpec,
    pub driver: DriverKind,
    /// `B x (N+1) x d`
    pub coarse_states: &'a Array3<f64>,
    /// `B x N x d`
    pub coarse_increments: &'a Array3<f64>,
    /// `g` per path.
    pub terminal: &'a [f64],
    /// Exercise values `B x (N+1)` for reflected schemes.
    pub exercise: Option<&'a Array2<f64>>,
}

impl RecursionInputs<'_> {
    pub fn batch(&self) -> usize {
        self.terminal.len()
    }
}

#[derive(Debug, Clone)]
pub struct RecursionOutput {
    pub loss: f64,
    pub estimate: f64,
    /// `Y^j_n`, `B x (N+1)`.
    pub y: Array2<f64>,
    /// Cotangent of the loss for each `Z_n` (`B x d`).
    pub z_grad: Vec<Array2<f64>>,
    /// Cotangent of the loss for the trainable `Y_0`, if any.
    pub y0_grad: Option<f64>,
}

pub trait Method: Send + Sync {
    fn name(&self) -> &'static str;

    /// Whether `Y_0` is a trainable scalar of this method.
    fn trains_initial_value(&self) -> bool;

    /// Whether the payoff must supply exercise values.
    fn needs_exercise(&self) -> bool {
        false
    }

    fn default_batch(&self) -> usize;

    fn recursion(
        &self,
        inputs: &RecursionInputs<'_>,
        z: &[Array2<f64>],
        y0: Option<f64>,
    ) -> Result<RecursionOutput, SolverError>;
}

fn check_z(inputs: &RecursionInputs<'_>, z: &[Array2<f64>]) -> Result<(), SolverError> {
    let n = inputs.grid.coarse_steps;
    let (b, d) = (inputs.batch(), inputs.coarse_increments.shape()[2]);
    if z.len() != n || z.iter().any(|m| m.nrows() != b || m.ncols() != d) {
        return Err(SolverError::Config(format!(
            "expected {n} Z matrices of shape {b}x{d}"
        )));
    }
    Ok(())
}

fn dot_row(z: &Array2<f64>, j: usize, inc: &Array3<f64>, n: usize) -> f64 {
    z.row(j)
        .iter()
        .enumerate()
        .map(|(c, zc)| zc * inc[[j, n, c]])
        .sum()
}

/// Sample variance about the first value; exact zero for identical samples.
/// Returns (variance, mean, gradient of the variance per sample).
pub fn shifted_variance(values: &[f64]) -> (f64, f64, Vec<f64>) {
    let b = values.len() as f64;
    let shift = values[0];
    let dev: Vec<f64> = values.iter().map(|v| v - shift).collect();
    let mean_dev = dev.iter().sum::<f64>() / b;
    let var = dev.iter().map(|d| (d - mean_dev).powi(2)).sum::<f64>() / b;
    let grad = dev.iter().map(|d| 2.0 * (d - mean_dev) / b).collect();
    (var, shift + mean_dev, grad)
}

/// Forward terminal matching: `Y_0` is trained and the batch is propagated
/// forward; the loss is the mean squared terminal mismatch.
#[derive(Debug, Default, Clone, Copy)]
pub struct ForwardMethod;

impl Method for ForwardMethod {
    fn name(&self) -> &'static str {
        "forward"
    }

    fn trains_initial_value(&self) -> bool {
        true
    }

    fn default_batch(&self) -> usize {
        100
    }

    fn recursion(
        &self,
        inputs: &RecursionInputs<'_>,
        z: &[Array2<f64>],
        y0: Option<f64>,
    ) -> Result<RecursionOutput, SolverError> {
        check_z(inputs, z)?;
        let y0 =
            y0.ok_or_else(|| SolverError::Config("forward method needs an initial value".into()))?;
        let (b, n_steps, d) = (
            inputs.batch(),
            inputs.grid.coarse_steps,
            inputs.coarse_increments.shape()[2],
        );
        let dt = inputs.grid.coarse_dt();
        let mut y = Array2::zeros((b, n_steps + 1));
        y.column_mut(0).fill(y0);
        let mut x = vec![0.0; d];
        let mut fy = Array2::zeros((b, n_steps));
        let mut fz = vec![Array2::zeros((b, d)); n_steps];
        let mut dz = vec![0.0; d];
        for j in 0..b {
            for n in 0..n_steps {
                let t = inputs.grid.coarse_time(n);
                x.iter_mut()
                    .enumerate()
                    .for_each(|(c, v)| *v = inputs.coarse_states[[j, n, c]]);
                let zr = z[n].row(j);
                let zs = zr.as_slice().expect("row-major");
                let yn = y[[j, n]];
                let f = inputs.driver.value(t, &x, yn, zs);
                fy[[j, n]] = inputs.driver.dy(t, &x, yn, zs);
                inputs.driver.dz(t, &x, yn, zs, &mut dz);
                fz[n]
                    .row_mut(j)
                    .iter_mut()
                    .zip(&dz)
                    .for_each(|(o, v)| *o = *v);
                y[[j, n + 1]] = yn - f * dt + dot_row(&z[n], j, inputs.coarse_increments, n);
            }
        }
        let residual: Vec<f64> = (0..b)
            .map(|j| y[[j, n_steps]] - inputs.terminal[j])
            .collect();
        let loss = residual.iter().map(|r| r * r).sum::<f64>() / b as f64;
        if !loss.is_finite() {
            return Err(SolverError::NonFinite(format!("forward loss {loss}")));
        }
        let mut z_grad = vec![Array2::zeros((b, d)); n_steps];
        let mut y0_grad = 0.0;
        for j in 0..b {
            let mut ybar = 2.0 * residual[j] / b as f64;
            for n in (0..n_steps).rev() {
                for c in 0..d {
                    z_grad[n][[j, c]] =
                        ybar * (inputs.coarse_increments[[j, n, c]] - fz[n][[j, c]] * dt);
                }
                ybar *= 1.0 - fy[[j, n]] * dt;
            }
            y0_grad += ybar;
        }
        Ok(RecursionOutput {
            loss,
            estimate: y0,
            y,
            z_grad,
            y0_grad: Some(y0_grad),
        })
    }
}

/// Backward variance minimisation, optionally reflected on exercise values.
fn backward_recursion(
    inputs: &RecursionInputs<'_>,
    z: &[Array2<f64>],
    reflect: bool,
) -> Result<RecursionOutput, SolverError> {
    check_z(inputs, z)?;
    let (b, n_steps, d) = (
        inputs.batch(),
        inputs.grid.coarse_steps,
        inputs.coarse_increments.shape()[2],
    );
    let dt = inputs.grid.coarse_dt();
    let exercise = if reflect {
        let ex = inputs
            .exercise
            .ok_or_else(|| SolverError::Config("reflected method needs exercise values".into()))?;
        if ex.nrows() != b || ex.ncols() != n_steps + 1 {
            return Err(SolverError::Config(
                "exercise values must be B x (N+1)".into(),
            ));
        }
        Some(ex)
    } else {
        None
    };
    let mut y = Array2::zeros((b, n_steps + 1));
    // whether the reflection was active at date n (gradient blocked)
    let mut clamped = Array2::from_elem((b, n_steps + 1), false);
    let mut fy = Array2::zeros((b, n_steps));
    let mut fz = vec![Array2::zeros((b, d)); n_steps];
    let mut x = vec![0.0; d];
    let mut dz = vec![0.0; d];
    for j in 0..b {
        y[[j, n_steps]] = inputs.terminal[j];
        for n in (1..=n_steps).rev() {
            let k = n - 1;
            let t = inputs.grid.coarse_time(k);
            x.iter_mut()
                .enumerate()
                .for_each(|(c, v)| *v = inputs.coarse_states[[j, k, c]]);
            let zr = z[k].row(j);
            let zs = zr.as_slice().expect("row-major");
            let yn = y[[j, n]];
            let f = inputs.driver.value(t, &x, yn, zs);
            fy[[j, k]] = inputs.driver.dy(t, &x, yn, zs);
            inputs.driver.dz(t, &x, yn, zs, &mut dz);
            fz[k]
                .row_mut(j)
                .iter_mut()
                .zip(&dz)
                .for_each(|(o, v)| *o = *v);
            let mut prev = yn + f * dt - dot_row(&z[k], j, inputs.coarse_increments, k);
            if let Some(ex) = exercise {
                let g = ex[[j, k]];
                if prev < g {
                    prev = g;
                    clamped[[j, k]] = true;
                }
            }
            y[[j, k]] = prev;
        }
    }
    let y0: Vec<f64> = y.column(0).to_vec();
    let (loss, estimate, grad0) = shifted_variance(&y0);
    if !loss.is_finite() {
        return Err(SolverError::NonFinite(format!("variance loss {loss}")));
    }
    let mut z_grad = vec![Array2::zeros((b, d)); n_steps];
    for j in 0..b {
        let mut ybar = grad0[j];
        for k in 0..n_steps {
            if clamped[[j, k]] {
                ybar = 0.0;
            }
            if ybar == 0.0 {
                break;
            }
            for c in 0..d {
                z_grad[k][[j, c]] =
                    ybar * (fz[k][[j, c]] * dt - inputs.coarse_increments[[j, k, c]]);
            }
            ybar *= 1.0 + fy[[j, k]] * dt;
        }
    }
    Ok(RecursionOutput {
        loss,
        estimate,
        y,
        z_grad,
        y0_grad: None,
    })
}

/// Backward variance minimisation: `Y_N = g`, stepped back to `Y_0`; the
/// loss is the batch variance of `Y_0` and the estimate its mean.
#[derive(Debug, Default, Clone, Copy)]
pub struct BackwardMethod;

impl Method for BackwardMethod {
    fn name(&self) -> &'static str {
        "backward"
    }

    fn trains_initial_value(&self) -> bool {
        false
    }

    fn default_batch(&self) -> usize {
        1000
    }

    fn recursion(
        &self,
        inputs: &RecursionInputs<'_>,
        z: &[Array2<f64>],
        _y0: Option<f64>,
    ) -> Result<RecursionOutput, SolverError> {
        backward_recursion(inputs, z, false)
    }
}

/// Backward scheme reflected on the exercise values at every coarse date
/// (Bermudan exercise).
#[derive(Debug, Default, Clone, Copy)]
pub struct ReflectedMethod;

impl Method for ReflectedMethod {
    fn name(&self) -> &'static str {
        "reflected"
    }

    fn trains_initial_value(&self) -> bool {
        false
    }

    fn needs_exercise(&self) -> bool {
        true
    }

    fn default_batch(&self) -> usize {
        1000
    }

    fn recursion(
        &self,
        inputs: &RecursionInputs<'_>,
        z: &[Array2<f64>],
        _y0: Option<f64>,
    ) -> Result<RecursionOutput, SolverError> {
        backward_recursion(inputs, z, true)
    }
}

/// Name-keyed collection of training methods.
#[derive(Clone, Default)]
pub struct MethodRegistry {
    entries: Vec<Arc<dyn Method>>,
}

impl MethodRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn with_builtin() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(ForwardMethod));
        r.register(Arc::new(BackwardMethod));
        r.register(Arc::new(ReflectedMethod));
        r
    }

    /// Adds a method, replacing any existing entry of the same name.
    pub fn register(&mut self, method: Arc<dyn Method>) {
        self.entries.retain(|m| m.name() != method.name());
        self.entries.push(method);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Method>, SolverError> {
        self.entries
            .iter()
            .find(|m| m.name() == name)
            .cloned()
            .ok_or_else(|| {
                SolverError::Config(format!(
                    "unknown method '{name}' (known: {})",
                    self.names().join(", ")
                ))
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|m| m.name()).collect()
    }
}

/// Registry of the built-in methods.
pub fn methods() -> &'static MethodRegistry {
    static REGISTRY: OnceLock<MethodRegistry> = OnceLock::new();
    REGISTRY.get_or_init(MethodRegistry::with_builtin)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs<'a>(
        grid: &'a GridSpec,
        driver: DriverKind,
        states: &'a Array3<f64>,
        incs: &'a Array3<f64>,
        terminal: &'a [f64],
    ) -> RecursionInputs<'a> {
        RecursionInputs {
            grid,
            driver,
            coarse_states: states,
            coarse_increments: incs,
            terminal,
            exercise: None,
        }
    }

    #[test]
    fn registry_lookup() {
        assert_eq!(methods().names(), vec!["forward", "backward", "reflected"]);
        assert!(methods().get("forward").unwrap().trains_initial_value());
        assert!(methods().get("sideways").is_err());
    }

    #[test]
    fn forward_constant_payoff_zero_nets() {
        let grid = GridSpec::new(1.0, 4, 2).unwrap();
        let states = Array3::zeros((3, 3, 1));
        let incs = Array3::from_shape_fn((3, 2, 1), |(j, n, _)| (j as f64 - n as f64) * 0.1);
        let terminal = [2.0; 3];
        let z = vec![Array2::zeros((3, 1)); 2];
        let out = ForwardMethod
            .recursion(
                &inputs(&grid, DriverKind::Zero, &states, &incs, &terminal),
                &z,
                Some(0.5),
            )
            .unwrap();
        assert!((out.loss - 2.25).abs() < 1e-15);
        assert!((out.y0_grad.unwrap() - 2.0 * (0.5 - 2.0)).abs() < 1e-15);
    }

    #[test]
    fn forward_one_step_discount() {
        let grid = GridSpec::new(1.0, 2, 1).unwrap();
        let r = 0.05;
        let states = Array3::zeros((2, 2, 1));
        let incs = Array3::from_elem((2, 1, 1), 0.3);
        let terminal = [4.0; 2];
        let z = vec![Array2::zeros((2, 1))];
        let y0 = 3.0;
        let out = ForwardMethod
            .recursion(
                &inputs(
                    &grid,
                    DriverKind::Discount { rate: r },
                    &states,
                    &incs,
                    &terminal,
                ),
                &z,
                Some(y0),
            )
            .unwrap();
        assert!((out.loss - (y0 * (1.0 + r) - 4.0).powi(2)).abs() < 1e-14);
        let opt = 4.0 / (1.0 + r);
        let at_opt = ForwardMethod
            .recursion(
                &inputs(
                    &grid,
                    DriverKind::Discount { rate: r },
                    &states,
                    &incs,
                    &terminal,
                ),
                &z,
                Some(opt),
            )
            .unwrap();
        assert!(at_opt.loss < 1e-28);
    }

    #[test]
    fn backward_telescoping_with_unit_z() {
        // X = W, g = X_T, Z = 1: Y_0 = X_0 for every path.
        let grid = GridSpec::new(1.0, 3, 3).unwrap();
        let b = 4;
        let incs = Array3::from_shape_fn((b, 3, 1), |(j, n, _)| {
            ((j * 3 + n) as f64 * 0.77).sin() * 0.4
        });
        let mut states = Array3::zeros((b, 4, 1));
        let x0 = 1.25;
        for j in 0..b {
            states[[j, 0, 0]] = x0;
            for n in 0..3 {
                states[[j, n + 1, 0]] = states[[j, n, 0]] + incs[[j, n, 0]];
            }
        }
        let terminal: Vec<f64> = (0..b).map(|j| states[[j, 3, 0]]).collect();
        let z = vec![Array2::ones((b, 1)); 3];
        let out = BackwardMethod
            .recursion(
                &inputs(&grid, DriverKind::Zero, &states, &incs, &terminal),
                &z,
                None,
            )
            .unwrap();
        assert!(out.loss < 1e-28);
        assert!((out.estimate - x0).abs() < 1e-14);
    }

    #[test]
    fn shifted_variance_exact_zero() {
        let (v, m, g) = shifted_variance(&[0.1 + 0.2; 7]);
        assert_eq!(v, 0.0);
        assert_eq!(m, 0.1 + 0.2);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn reflected_requires_exercise() {
        let grid = GridSpec::new(1.0, 2, 2).unwrap();
        let states = Array3::zeros((1, 3, 1));
        let incs = Array3::zeros((1, 2, 1));
        let z = vec![Array2::zeros((1, 1)); 2];
        let res = ReflectedMethod.recursion(
            &inputs(&grid, DriverKind::Zero, &states, &incs, &[1.0]),
            &z,
            None,
        );
        assert!(matches!(res, Err(SolverError::Config(_))));
    }
}
