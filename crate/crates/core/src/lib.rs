//! Online AUC maximization with adaptive per-coordinate step sizes.
//!
//! The learners consume one labelled instance at a time and optimize a
//! pairwise square loss against running per-class means and covariances, so
//! no past instances are stored. [`learners::Algorithm::Adaoam`] uses a
//! diagonal AdaGrad preconditioner with a projection onto the `1/√λ` ball;
//! [`learners::Algorithm::Sadaoam`] adds an L1 term with lazily applied
//! soft thresholding for high-dimensional sparse data.
//!
//! Everything numeric is generic over [`Real`]; the aliases at the crate
//! root fix the scalar to `f64`, which is what the harness and CLI use.

pub mod adagrad;
pub mod data;
pub mod error;
pub mod eval;
pub mod harness;
pub mod learners;
pub mod objective;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use learners::{Algorithm, ModelSnapshot};
pub use scalar::Real;

pub type SparseVector = data::SparseVector<f64>;
pub type Instance = data::Instance<f64>;
pub type Dataset = data::Dataset<f64>;
pub type HyperParams = objective::HyperParams<f64>;
pub type ModelState = learners::ModelState<f64>;
pub type DenseClassStats = stats::DenseClassStats<f64>;
pub type SparseClassStats = stats::SparseClassStats<f64>;
pub type AdaGradState = adagrad::AdaGradState<f64>;
