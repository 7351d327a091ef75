//! Sweep configuration, read from JSON.

use std::path::{Path, PathBuf};

use ldp_robust::estimator::EstimatorConfig;
use ldp_robust::lowerbound::DeltaScaling;
use ldp_robust::sdp::GramConfig;
use serde::{Deserialize, Serialize};

use crate::HarnessError;

/// Stopping threshold on `sqrt(tau)` for desk-scale runs. At `d = 5`,
/// `k = 50`, `n = 2000` clean collections score about 0.3 and collections
/// with 5% all-ones batches about 4.4, while the default 200 is never reached
/// at these sizes.
pub const DESK_TAU_THRESHOLD: f64 = 1.0;

/// How the true distribution of a trial is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PFamily {
    Uniform,
    /// Dirichlet(1, ..., 1).
    #[default]
    Dirichlet,
    /// `heavy` on symbol 0, the rest spread evenly.
    PointHeavy {
        #[serde(default = "default_heavy")]
        heavy: f64,
    },
}

fn default_heavy() -> f64 {
    0.5
}

/// Attack applied to the adversarial batches of every cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackConfig {
    AllOnes,
    AllZeros,
    /// Honest privatization of a fixed `q`.
    SwapDistribution { q: Vec<f64> },
    TargetedSubset {
        subset: Vec<usize>,
        direction: i8,
        magnitude: f64,
    },
    /// Swap to `q = p + delta v`, with `v = +1` on the lower half of the
    /// alphabet, `-1` on the mirrored upper half, and
    /// `delta = min(scale / (alpha sqrt(k)), min_j p_j)`.
    Shift { scale: f64 },
    /// Truth and attack taken from a certified hard pair built for the cell.
    HardPairSwap {
        #[serde(default = "default_gaussian_samples")]
        gaussian_samples: usize,
        #[serde(default)]
        scaling: DeltaScaling,
    },
}

fn default_gaussian_samples() -> usize {
    10_000
}

impl AttackConfig {
    pub fn name(&self) -> &'static str {
        match self {
            AttackConfig::AllOnes => "all_ones",
            AttackConfig::AllZeros => "all_zeros",
            AttackConfig::SwapDistribution { .. } => "swap_distribution",
            AttackConfig::TargetedSubset { .. } => "targeted_subset",
            AttackConfig::Shift { .. } => "shift",
            AttackConfig::HardPairSwap { .. } => "hard_pair_swap",
        }
    }
}

/// Fields of [`EstimatorConfig`] a sweep may override. `eps` always comes
/// from the cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct EstimatorOverrides {
    pub tau_threshold: Option<f64>,
    pub special_gap_threshold: Option<f64>,
    pub sdp: Option<GramConfig>,
    pub max_iterations: Option<usize>,
}

impl EstimatorOverrides {
    pub fn apply(&self, eps: f64) -> EstimatorConfig {
        let mut cfg = EstimatorConfig::with_eps(eps);
        if let Some(t) = self.tau_threshold {
            cfg.tau_threshold = t;
        }
        if let Some(g) = self.special_gap_threshold {
            cfg.special_gap_threshold = g;
        }
        if let Some(s) = self.sdp {
            cfg.sdp = s;
        }
        cfg.max_iterations = self.max_iterations;
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub n: Vec<usize>,
    pub k: Vec<usize>,
    pub d: Vec<usize>,
    pub alpha: Vec<f64>,
    pub eps: Vec<f64>,
    pub attack: AttackConfig,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub p_family: PFamily,
    #[serde(default)]
    pub estimator: EstimatorOverrides,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

/// One point of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub n: usize,
    pub k: usize,
    pub d: usize,
    pub alpha: f64,
    pub eps: f64,
}

impl SweepConfig {
    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        let cfg: SweepConfig = serde_json::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let grids = [
            ("n", self.n.len()),
            ("k", self.k.len()),
            ("d", self.d.len()),
            ("alpha", self.alpha.len()),
            ("eps", self.eps.len()),
        ];
        if let Some((name, _)) = grids.iter().find(|(_, len)| *len == 0) {
            return Err(HarnessError::Config(format!("grid `{name}` is empty")));
        }
        if self.trials == 0 {
            return Err(HarnessError::Config("trials must be at least 1".into()));
        }
        Ok(())
    }

    /// Grid points in the order n, k, d, alpha, eps (eps varying fastest).
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &n in &self.n {
            for &k in &self.k {
                for &d in &self.d {
                    for &alpha in &self.alpha {
                        for &eps in &self.eps {
                            out.push(Cell { n, k, d, alpha, eps });
                        }
                    }
                }
            }
        }
        out
    }
}
