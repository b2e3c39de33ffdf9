//! Truncated tensor algebra over paths: signatures, log-signatures, Chen
//! concatenation, streamed prefix signatures and their reverse-mode gradients.

mod lyndon;
mod path;
mod tensor;

pub(crate) use lyndon::check_envelope;
pub use lyndon::{lyndon_words, witt_dimension, LogSignatureVector, LyndonBasis};
pub use path::{
    checkpoint_signature_stream, log_signature, log_signature_with, path_signature,
    segment_signature, signature_pullback, stream_pullback, time_augment, AugmentedPath,
};
pub use tensor::{
    log_pullback, product_pullback, segment_exp_pullback, sig_dim, truncated_exp, truncated_log,
    truncated_product, ExpScratch, TruncatedTensorSeries,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SigError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("grid error: {0}")]
    Grid(String),
}
