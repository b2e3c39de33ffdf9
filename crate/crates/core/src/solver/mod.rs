//! Training procedures for path-dependent backward equations: per-date
//! approximators on (log-)signature features, trained by forward terminal
//! matching, backward variance minimisation, or its reflected variant.

mod aggregate;
mod driver;
mod features;
mod method;
mod payoff;
mod spec;
mod train;

pub use aggregate::{aggregate_runs, Aggregate, RunRow};
pub use driver::DriverKind;
pub use features::{FeatureKind, FeatureMap};
pub use method::{
    methods, shifted_variance, BackwardMethod, ForwardMethod, Method, MethodRegistry,
    RecursionInputs, RecursionOutput, ReflectedMethod,
};
pub use payoff::{AsianBasketCall, Lookback, Payoff, PayoffKind, QuadraticIntegral};
pub use spec::ExperimentSpec;
pub use train::{
    classify_trend, derive_seed, final_estimate, train, BatchFeatures, IterationOutcome, RunReport,
    Solver, TrainState, Trend,
};

use crate::net::NetError;
use crate::sde::SdeError;
use crate::sigcore::SigError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolverError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Signature(#[from] SigError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Sde(#[from] SdeError),
}
