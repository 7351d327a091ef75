//! Experiment harness: seeded sweeps over `(n, k, d, alpha, eps, attack)`,
//! CSV persistence, rate fits and the certificate reports behind the
//! `ldp-robust` command line tool.

pub mod checks;
pub mod config;
pub mod rate;
pub mod sweep;
pub mod trial;

pub use config::{AttackConfig, Cell, EstimatorOverrides, PFamily, SweepConfig, DESK_TAU_THRESHOLD};
pub use rate::{eps_prime_solve, rate_fit, Axis, RateFit};
pub use sweep::{format_real, read_csv, run_sweep, write_csv, CSV_HEADER};
pub use trial::{Experiment, TrialResult};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("csv error: {0}")]
    Csv(String),
    #[error("not enough data for a fit: {0}")]
    InsufficientData(String),
    #[error("no root of the sample-size equation in (0, 0.01] for n = {n}, d = {d}")]
    NoRoot { n: f64, d: usize },
    #[error(transparent)]
    Channel(#[from] ldp_robust::channel::ChannelError),
    #[error(transparent)]
    Adversary(#[from] ldp_robust::adversary::AdversaryError),
    #[error(transparent)]
    Estimator(#[from] ldp_robust::estimator::EstimatorError),
    #[error(transparent)]
    LowerBound(#[from] ldp_robust::lowerbound::LowerBoundError),
    #[error(transparent)]
    Sdp(#[from] ldp_robust::sdp::SdpError),
    #[error(transparent)]
    Prob(#[from] ldp_robust::prob::ProbError),
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Csv(e.to_string())
    }
}
