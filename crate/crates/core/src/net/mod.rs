//! Small differentiable building blocks: fully connected approximators, the
//! Adam optimizer and the pointwise embedding layer.

mod adam;
mod embedding;
mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use embedding::{EmbedCache, EmbeddingParams};
pub use mlp::{Activation, Layer, MlpCache, MlpParams, MlpSpec};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetError {
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// A set of trainable tensors viewed as flat slices, in a fixed order.
pub trait Parameters {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;
}

impl Parameters for Vec<f64> {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![self.as_slice()]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.as_mut_slice()]
    }
}

impl Parameters for f64 {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![std::slice::from_ref(self)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![std::slice::from_mut(self)]
    }
}
