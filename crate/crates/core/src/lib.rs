//! Two-layer ReLU CNN trained by gradient descent on noisy XOR-patch data:
//! data generation, training, coefficient decomposition, theory monitors,
//! evaluation and phase-diagram experiments.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision used by the CLI and experiment drivers.

pub mod concentration;
pub mod config;
pub mod data;
pub mod decomposition;
pub mod error;
pub mod eval;
pub mod experiments;
pub mod linalg;
pub mod model;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod theory;
pub mod train;

pub use data::{build_basis, sample_dataset, DataConfig, DataPoint, Dataset, Label, SignalTag, XorBasis};
pub use error::{Error, Result};
pub use model::{
    evaluate, forward, full_gradient, init_weights, logistic_loss, loss_derivative, predict, training_loss, BatchEval,
    CnnWeights, Design, ForwardTrace, WeightGrad,
};
pub use scalar::Scalar;

/// Double-precision basis.
pub type Basis = XorBasis<f64>;
/// Double-precision dataset.
pub type Data = Dataset<f64>;
/// Double-precision network weights.
pub type Weights = CnnWeights<f64>;
