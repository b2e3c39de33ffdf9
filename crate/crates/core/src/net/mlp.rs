use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{NetError, Parameters};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation.
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// `[in, hidden..., out]`
    pub widths: Vec<usize>,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(input: usize, hidden: &[usize], output: usize, activation: Activation) -> Self {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(output);
        Self { widths, activation }
    }

    pub fn input(&self) -> usize {
        self.widths[0]
    }

    pub fn output(&self) -> usize {
        *self.widths.last().expect("at least two widths")
    }
}

/// Affine layer `y = x W + b` with `W` of shape `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub spec: MlpSpec,
    pub layers: Vec<Layer>,
}

/// Activations kept by a forward pass for the matching reverse pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Input to each layer (`B x width`).
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Array2<f64>>,
}

impl MlpParams {
    /// He-style uniform fan-in initialisation, zero biases. With
    /// `zero_output` the final layer starts at zero so the network outputs 0.
    pub fn init<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R, zero_output: bool) -> Self {
        let n = spec.widths.len() - 1;
        let layers = (0..n)
            .map(|l| {
                let (fan_in, fan_out) = (spec.widths[l], spec.widths[l + 1]);
                let bound = (6.0 / fan_in.max(1) as f64).sqrt();
                let weight = if zero_output && l == n - 1 {
                    Array2::zeros((fan_in, fan_out))
                } else {
                    Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-bound..bound))
                };
                Layer {
                    weight,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Self { spec, layers }
    }

    /// Parameters of the same shape, all zero.
    pub fn zeros_like(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Batched forward pass over the rows of `x`.
    pub fn forward_batch(
        &self,
        x: ArrayView2<'_, f64>,
    ) -> Result<(Array2<f64>, MlpCache), NetError> {
        if x.ncols() != self.spec.input() {
            return Err(NetError::Shape(format!(
                "input width {} != {}",
                x.ncols(),
                self.spec.input()
            )));
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(last);
        let mut h = x.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weight);
            z += &layer.bias;
            inputs.push(h);
            if l == last {
                h = z;
            } else {
                let act = self.spec.activation;
                h = z.mapv(|v| act.apply(v));
                pre.push(z);
            }
        }
        Ok((h, MlpCache { inputs, pre }))
    }

    /// Reverse pass for `<cotangent, output>`: parameter gradients and input gradient.
    pub fn backward_batch(
        &self,
        cache: &MlpCache,
        cotangent: ArrayView2<'_, f64>,
    ) -> Result<(MlpParams, Array2<f64>), NetError> {
        let batch = cache.inputs.first().map(|a| a.nrows()).unwrap_or(0);
        if cache.inputs.len() != self.layers.len()
            || cotangent.nrows() != batch
            || cotangent.ncols() != self.spec.output()
        {
            return Err(NetError::Shape(format!(
                "cotangent {}x{} does not match cached batch {} x {}",
                cotangent.nrows(),
                cotangent.ncols(),
                batch,
                self.spec.output()
            )));
        }
        let mut grads = self.zeros_like();
        let mut delta = cotangent.to_owned();
        for l in (0..self.layers.len()).rev() {
            let input = &cache.inputs[l];
            grads.layers[l].weight = input.t().dot(&delta).as_standard_layout().into_owned();
            grads.layers[l].bias = delta.sum_axis(Axis(0));
            let mut back = delta.dot(&self.layers[l].weight.t());
            if l > 0 {
                let act = self.spec.activation;
                back.zip_mut_with(&cache.pre[l - 1], |g, &p| *g *= act.derivative(p));
            }
            delta = back;
        }
        Ok((grads, delta))
    }

    /// Single-vector forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, MlpCache), NetError> {
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row vector");
        let (y, cache) = self.forward_batch(x)?;
        Ok((y.into_raw_vec_and_offset().0, cache))
    }

    pub fn backward(
        &self,
        cache: &MlpCache,
        cotangent: &[f64],
    ) -> Result<(MlpParams, Vec<f64>), NetError> {
        let c = ArrayView2::from_shape((1, cotangent.len()), cotangent).expect("row vector");
        let (g, dx) = self.backward_batch(cache, c)?;
        Ok((g, dx.into_raw_vec_and_offset().0))
    }
}

impl Parameters for MlpParams {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weight.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("contiguous"),
                ]
            })
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("contiguous"),
                ]
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_output_final_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = MlpParams::init(
            MlpSpec::new(3, &[4, 4], 2, Activation::Relu),
            &mut rng,
            false,
        );
        for l in &mut p.layers {
            l.weight.fill(0.0);
        }
        p.layers[2].bias = Array1::from(vec![0.7, -1.2]);
        let (y, _) = p.forward(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(y, vec![0.7, -1.2]);
    }

    #[test]
    fn unit_identity_network_passes_input() {
        let spec = MlpSpec::new(1, &[1, 1], 1, Activation::Identity);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = MlpParams::init(spec, &mut rng, false);
        for l in &mut p.layers {
            l.weight.fill(1.0);
        }
        assert_eq!(p.forward(&[-2.5]).unwrap().0, vec![-2.5]);
    }

    #[test]
    fn zero_cotangent_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = MlpParams::init(MlpSpec::new(3, &[5], 2, Activation::Relu), &mut rng, false);
        let (_, cache) = p.forward(&[0.3, -0.1, 0.8]).unwrap();
        let (g, dx) = p.backward(&cache, &[0.0, 0.0]).unwrap();
        assert!(g.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_layer_gradient_is_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = MlpParams::init(
            MlpSpec::new(3, &[], 2, Activation::Identity),
            &mut rng,
            false,
        );
        let x = [0.5, -1.0, 2.0];
        let c = [3.0, -0.25];
        let (_, cache) = p.forward(&x).unwrap();
        let (g, _) = p.backward(&cache, &c).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                assert_eq!(g.layers[0].weight[[i, j]], x[i] * c[j]);
            }
        }
        assert_eq!(g.layers[0].bias.to_vec(), c.to_vec());
    }

    #[test]
    fn shape_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = MlpParams::init(MlpSpec::new(3, &[4], 2, Activation::Relu), &mut rng, false);
        assert!(p.forward(&[1.0]).is_err());
        let (_, cache) = p.forward(&[1.0, 2.0, 3.0]).unwrap();
        assert!(p.backward(&cache, &[1.0]).is_err());
    }

    #[test]
    fn init_is_deterministic_and_zero_output() {
        let spec = MlpSpec::new(6, &[8, 8], 3, Activation::Relu);
        let a = MlpParams::init(spec.clone(), &mut ChaCha8Rng::seed_from_u64(9), true);
        let b = MlpParams::init(spec, &mut ChaCha8Rng::seed_from_u64(9), true);
        assert_eq!(a, b);
        let (y, _) = a.forward(&[1.0; 6]).unwrap();
        assert_eq!(y, vec![0.0; 3]);
    }
}
