//! Constructive lower-bound objects: the channel information matrix, hard
//! pairs of distributions, their common mixture and the Assouad cube.

mod assouad;
mod hard_pair;
mod mixture;
mod omega;

pub use assouad::{assouad_chi2_check, assouad_family, hamming, AssouadChi2Report, AssouadFamily, NeighborChi2};
pub use hard_pair::{
    hard_pair, low_eigenspace_delta, DeltaScaling, HardPair, HardPairChecks, LowEigenDelta, HARD_PAIR_C,
    L1_RATIO_THRESHOLD,
};
pub use mixture::{common_mixture, CommonMixture, MAX_PRODUCT_BITS};
pub use omega::{omega_matrix, omega_monte_carlo, OmegaMatrix};

use crate::channel::ChannelError;
use crate::prob::ProbError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LowerBoundError {
    #[error("alphabet size {d} exceeds the enumeration limit {limit}")]
    DimensionTooLarge { d: usize, limit: usize },
    #[error("product space of {bits} bits exceeds the limit of {limit}")]
    ProductSpaceTooLarge { bits: usize, limit: usize },
    #[error("the low-eigenvalue subspace meets the sum-zero hyperplane only at 0")]
    EmptySubspace,
    #[error("contamination level {0} is outside (0, 1/2)")]
    EpsOutOfRange(f64),
    #[error("perturbation has l1 norm {0} > 1")]
    InfeasibleScale(f64),
    #[error("sign vector has length {got}, expected {expected}")]
    BadSigns { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Prob(#[from] ProbError),
}
