//! One trial: draw `p`, privatize clean batches, contaminate, estimate.

use std::time::Instant;

use ldp_robust::adversary::{adversarial_count, contaminate, make_clean_collection, AttackSpec, Label};
use ldp_robust::estimator::{naive_estimate, robust_estimate, EstimateResult};
use ldp_robust::lowerbound::hard_pair;
use ldp_robust::prob::{l1_dist, ProbVector, RngSeed, SubsetMask};
use ldp_robust::RapporChannel;
use rand::Rng;
use rand_distr::Exp1;
use serde::Serialize;

use crate::config::{AttackConfig, Cell, EstimatorOverrides, PFamily, SweepConfig};
use crate::HarnessError;

const P_STREAM: u64 = 0x705f_6661_6d69_6c79;
const PAIR_STREAM: u64 = 0x6861_7264_5f70_6169;
const CLEAN_STREAM: u64 = 1;
const ATTACK_STREAM: u64 = 2;
const ESTIMATOR_STREAM: u64 = 3;

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub n: usize,
    pub k: usize,
    pub d: usize,
    pub alpha: f64,
    pub eps: f64,
    pub attack: String,
    pub trial: usize,
    pub seed: u64,
    pub l1_robust: f64,
    pub l1_robust_norm: f64,
    pub l1_naive: f64,
    pub deleted_good: usize,
    pub deleted_bad: usize,
    pub iterations: usize,
    /// `NaN` when the estimator never scored.
    pub final_tau: f64,
    /// Zero unless timing was requested.
    pub wall_ms: u64,
}

/// Everything a trial needs besides the cell and trial index.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub attack: AttackConfig,
    pub p_family: PFamily,
    pub estimator: EstimatorOverrides,
    pub seed: u64,
    pub timing: bool,
}

impl Experiment {
    pub fn from_config(cfg: &SweepConfig, timing: bool) -> Self {
        Self {
            attack: cfg.attack.clone(),
            p_family: cfg.p_family.clone(),
            estimator: cfg.estimator,
            seed: cfg.seed,
            timing,
        }
    }

    /// Seed of trial `trial` in cell `cell_index`.
    pub fn trial_seed(&self, cell_index: usize, trial: usize) -> u64 {
        RngSeed::new(self.seed).stream(cell_index as u64).derive(trial as u64).seed
    }

    /// The true distribution of trial `trial`. It depends on the master seed,
    /// the trial index and `d` only, so trials are paired across cells.
    pub fn truth(&self, d: usize, trial: usize) -> Result<ProbVector, HarnessError> {
        let mut rng = RngSeed::new(self.seed).derive(P_STREAM).stream(trial as u64).rng();
        let p = match &self.p_family {
            PFamily::Uniform => ProbVector::uniform(d)?,
            PFamily::Dirichlet => {
                let w: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(Exp1)).collect();
                let s: f64 = w.iter().sum();
                ProbVector::new(w.into_iter().map(|x| x / s).collect())?
            }
            PFamily::PointHeavy { heavy } => {
                if !(0.0..=1.0).contains(heavy) {
                    return Err(HarnessError::Config(format!("heavy mass {heavy} outside [0, 1]")));
                }
                let rest = (1.0 - heavy) / (d - 1) as f64;
                ProbVector::new((0..d).map(|j| if j == 0 { *heavy } else { rest }).collect())?
            }
        };
        Ok(p)
    }

    /// Truth and attack for one trial.
    fn setup(&self, cell: &Cell, cell_index: usize, trial: usize, ch: &RapporChannel) -> Result<(ProbVector, AttackSpec), HarnessError> {
        let d = cell.d;
        let dim_check = |len: usize| {
            if len == d {
                Ok(())
            } else {
                Err(HarnessError::Config(format!("attack vector has length {len}, cell has d = {d}")))
            }
        };
        Ok(match &self.attack {
            AttackConfig::AllOnes => (self.truth(d, trial)?, AttackSpec::AllOnes),
            AttackConfig::AllZeros => (self.truth(d, trial)?, AttackSpec::AllZeros),
            AttackConfig::SwapDistribution { q } => {
                dim_check(q.len())?;
                (self.truth(d, trial)?, AttackSpec::SwapDistribution(ProbVector::new(q.clone())?))
            }
            AttackConfig::TargetedSubset {
                subset,
                direction,
                magnitude,
            } => {
                if let Some(&j) = subset.iter().find(|&&j| j >= d) {
                    return Err(HarnessError::Config(format!("subset member {j} outside 0..{d}")));
                }
                let attack = AttackSpec::TargetedSubset {
                    subset: SubsetMask::from_indices(d, subset),
                    direction: *direction,
                    magnitude: *magnitude,
                };
                (self.truth(d, trial)?, attack)
            }
            AttackConfig::Shift { scale } => {
                let p = self.truth(d, trial)?;
                let pmin = p.weights().iter().copied().fold(f64::INFINITY, f64::min);
                let delta = (scale / (cell.alpha * (cell.k as f64).sqrt())).min(pmin);
                let q: Vec<f64> = p
                    .weights()
                    .iter()
                    .enumerate()
                    .map(|(j, w)| {
                        if 2 * j + 1 < d {
                            w + delta
                        } else if 2 * j + 1 > d {
                            w - delta
                        } else {
                            *w
                        }
                    })
                    .collect();
                (p, AttackSpec::SwapDistribution(ProbVector::new(q)?))
            }
            AttackConfig::HardPairSwap {
                gaussian_samples,
                scaling,
            } => {
                let seed = RngSeed::new(self.seed).derive(PAIR_STREAM).stream(cell_index as u64);
                let pair = hard_pair(ch, cell.eps, cell.k, *gaussian_samples, *scaling, seed)?;
                (pair.p.clone(), AttackSpec::HardPairSwap(Box::new(pair)))
            }
        })
    }

    pub fn run_trial(&self, cell: &Cell, cell_index: usize, trial: usize) -> Result<TrialResult, HarnessError> {
        self.run_trial_full(cell, cell_index, trial).map(|(r, _)| r)
    }

    /// The CSV row together with the robust estimate and its trace.
    pub fn run_trial_full(
        &self,
        cell: &Cell,
        cell_index: usize,
        trial: usize,
    ) -> Result<(TrialResult, EstimateResult), HarnessError> {
        let start = Instant::now();
        let ch = RapporChannel::new(cell.d, cell.alpha)?;
        let (p, attack) = self.setup(cell, cell_index, trial, &ch)?;
        let seed = self.trial_seed(cell_index, trial);
        let base = RngSeed::new(seed);
        let n_adv = adversarial_count(cell.n, cell.eps);
        let clean = make_clean_collection(&ch, &p, cell.n - n_adv, cell.k, base.derive(CLEAN_STREAM))?;
        let mixed = contaminate(&clean, &attack, cell.eps, cell.n, &ch, base.derive(ATTACK_STREAM))?;
        let labels = mixed.truth().expect("contaminate attaches labels").to_vec();
        let blind = mixed.without_truth();

        let cfg = self.estimator.apply(cell.eps);
        let robust = robust_estimate(&blind, &cfg, &ch, base.derive(ESTIMATOR_STREAM))?;
        let naive = naive_estimate(&blind, &ch)?;

        let (mut deleted_good, mut deleted_bad) = (0, 0);
        for r in &robust.trace {
            for &b in &r.deleted {
                match labels[b] {
                    Label::Good => deleted_good += 1,
                    Label::Adversarial => deleted_bad += 1,
                }
            }
        }
        let wall_ms = if self.timing { start.elapsed().as_millis() as u64 } else { 0 };
        let result = TrialResult {
            n: cell.n,
            k: cell.k,
            d: cell.d,
            alpha: cell.alpha,
            eps: cell.eps,
            attack: self.attack.name().to_string(),
            trial,
            seed,
            l1_robust: l1_dist(&robust.phat, p.weights())?,
            l1_robust_norm: l1_dist(&robust.phat_normalized, p.weights())?,
            l1_naive: l1_dist(&naive.phat, p.weights())?,
            deleted_good,
            deleted_bad,
            iterations: robust.trace.len(),
            final_tau: robust.final_tau(),
            wall_ms,
        };
        Ok((result, robust))
    }
}
