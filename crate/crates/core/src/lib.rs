//! Hybrid tensor-network / variational-quantum-circuit binary classifier.
//!
//! An MPS contracted with a cos/sin-embedded image produces a small feature
//! vector that drives a simulated 4-qubit circuit; both are trained together
//! with exact gradients. A PCA front end and a standalone MPS classifier are
//! provided as baselines.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod features;
pub mod gradcheck;
pub mod mps;
pub mod optim;
pub mod tensor;
pub mod training;
pub mod vqc;

pub use error::{Error, Result};
pub use features::{embed_image, fit_pca, local_feature_map, pca_project, ImageVector, PcaModel, ProductState};
pub use mps::{ContractionTrace, MpsGradient, MpsModel};
pub use tensor::{ComplexTensor, DenseTensor, Tensor};
pub use training::{evaluate, loss_and_grad, train, EpochMetrics, HybridModel, Mode, TrainConfig};
pub use vqc::{vqc_backward, vqc_forward, FeatureInput, StateVector, VqcParams};
