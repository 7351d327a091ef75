//! Robust estimation of discrete distributions from batches of RAPPOR
//! privatized samples, a fraction of which may be adversarial.
//!
//! The pipeline is:
//! - [`channel`] privatizes symbols;
//! - [`adversary`] assembles contaminated batch collections;
//! - [`estimator`] filters suspicious batches using the Gram-set relaxation in [`sdp`];
//! - [`lowerbound`] builds the matching lower-bound certificates.

pub mod adversary;
pub mod channel;
pub mod estimator;
pub mod lowerbound;
pub mod prob;
pub mod sdp;

pub use adversary::{AttackSpec, Batch, BatchCollection, Label};
pub use channel::{PrivSample, RapporChannel};
pub use estimator::{naive_estimate, robust_estimate, EstimateResult, EstimatorConfig};
pub use prob::{ProbVector, RngSeed, SubsetMask};
