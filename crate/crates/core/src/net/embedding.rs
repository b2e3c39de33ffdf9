use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::{NetError, Parameters};

/// Pointwise affine map `x -> x W + b` applied to every node of a stream,
/// shared across time and paths.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingParams {
    /// `d x d'`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Input stream retained for the reverse pass.
#[derive(Debug, Clone)]
pub struct EmbedCache {
    input: Array2<f64>,
}

impl EmbeddingParams {
    /// Uniform fan-in initialisation with unit output variance for unit inputs.
    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = (3.0 / input.max(1) as f64).sqrt();
        Self {
            weight: Array2::from_shape_fn((input, output), |_| rng.random_range(-bound..bound)),
            bias: Array1::zeros(output),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            weight: Array2::eye(dim),
            bias: Array1::zeros(dim),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weight: Array2::zeros(self.weight.raw_dim()),
            bias: Array1::zeros(self.bias.len()),
        }
    }

    pub fn embed_stream(
        &self,
        stream: ArrayView2<'_, f64>,
    ) -> Result<(Array2<f64>, EmbedCache), NetError> {
        if stream.ncols() != self.input_dim() {
            return Err(NetError::Shape(format!(
                "stream width {} != embedding input {}",
                stream.ncols(),
                self.input_dim()
            )));
        }
        let mut out = stream.dot(&self.weight);
        out += &self.bias;
        Ok((
            out,
            EmbedCache {
                input: stream.to_owned(),
            },
        ))
    }

    /// Gradients of `<cotangent, embed_stream(stream)>`: parameters and stream.
    pub fn backward(
        &self,
        cache: &EmbedCache,
        cotangent: ArrayView2<'_, f64>,
    ) -> Result<(EmbeddingParams, Array2<f64>), NetError> {
        if cotangent.nrows() != cache.input.nrows() || cotangent.ncols() != self.output_dim() {
            return Err(NetError::Shape(
                "embedding cotangent does not match the cached stream".into(),
            ));
        }
        let grads = EmbeddingParams {
            weight: cache
                .input
                .t()
                .dot(&cotangent)
                .as_standard_layout()
                .into_owned(),
            bias: cotangent.sum_axis(Axis(0)),
        };
        Ok((grads, cotangent.dot(&self.weight.t())))
    }
}

impl Parameters for EmbeddingParams {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![
            self.weight.as_slice().expect("standard layout"),
            self.bias.as_slice().expect("contiguous"),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.weight.as_slice_mut().expect("standard layout"),
            self.bias.as_slice_mut().expect("contiguous"),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_weight_gives_constant_bias_stream() {
        let p = EmbeddingParams {
            weight: Array2::zeros((3, 2)),
            bias: array![1.0, -2.0],
        };
        let s = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        let (out, _) = p.embed_stream(s.view()).unwrap();
        assert_eq!(out, array![[1.0, -2.0], [1.0, -2.0]]);
    }

    #[test]
    fn identity_embedding_is_noop() {
        let s = array![[1.0, 2.0], [4.0, -5.0], [0.5, 0.25]];
        let (out, _) = EmbeddingParams::identity(2).embed_stream(s.view()).unwrap();
        assert_eq!(out, s);
        assert!(EmbeddingParams::identity(3).embed_stream(s.view()).is_err());
    }
}
