//! The filtering estimator: batch statistics, corruption scores, randomized
//! batch deletion and the final ℓ1-normalized estimate.

mod diagnostics;
mod robust;
mod score;
mod stats;

pub use diagnostics::{
    check_nice_properties, covariance_lipschitz_check, LipschitzReport, NiceConfig, NiceReport,
};
pub use robust::{
    naive_estimate, robust_estimate, EstimateResult, EstimatorConfig, IterationRecord, StopReason,
};
pub use score::{batch_deletion, score_collection, ScoreMode, ScoreReport};
pub use stats::{
    batch_mean, collection_mean, cov_bundle, empirical_cov, model_cov, special_subset, CovBundle,
    MeanTable,
};

use crate::adversary::AdversaryError;
use crate::channel::ChannelError;
use crate::prob::ProbError;
use crate::sdp::SdpError;

#[derive(Debug, thiserror::Error)]
pub enum EstimatorError {
    #[error("batch is empty")]
    EmptyBatch,
    #[error("selection is empty")]
    EmptySelection,
    #[error("at least two batches are required, got {0}")]
    TooFewBatches(usize),
    #[error("all candidate scores are zero")]
    AllZeroScores,
    #[error("fewer than two batches survive filtering")]
    Exhausted,
    #[error("iteration cap of {0} exceeded")]
    IterationCap(usize),
    #[error("contamination level {0} is outside [0, 1/4)")]
    EpsOutOfRange(f64),
    #[error("scoring requires a positive contamination level")]
    ZeroEps,
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("expected dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("alphabet size {d} exceeds the enumeration limit {limit}")]
    DimensionTooLarge { d: usize, limit: usize },
    #[error("shift of subset mass {0} exceeds 12")]
    ShiftTooLarge(f64),
    #[error("collection has no truth labels or contains adversarial batches")]
    NotClean,
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Prob(#[from] ProbError),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
}

/// `ln(e / eps)`.
pub fn log_e_over(eps: f64) -> f64 {
    1.0 - eps.ln()
}
