use rand::Rng;
use serde::Serialize;

use super::robust::EstimatorConfig;
use super::stats::{cov_bundle, special_subset, MeanTable};
use super::{log_e_over, EstimatorError};
use crate::prob::{RngSeed, SubsetMask};
use crate::sdp::{gram_maximize, GramSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    Special,
    Sdp,
}

/// Contamination rate and per-batch corruption scores of a selection.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub mode: ScoreMode,
    /// `+inf` exactly in special mode.
    pub tau: f64,
    /// One score per selected batch, in selection order.
    pub scores: Vec<f64>,
    pub s_star: Option<SubsetMask>,
    pub gram: Option<GramSolution>,
}

impl ScoreReport {
    pub fn sqrt_tau(&self) -> f64 {
        self.tau.max(0.0).sqrt()
    }
}

/// Scores the batches in `selection`.
///
/// When some set has `|qhat(S) - lambda |S|| >= special_gap_threshold` the
/// rate is infinite and scores are `|qhat_b(S*) - lambda |S*||`. Otherwise
/// `M*` maximizes `<M, Chat - C(qhat)>` over the Gram set, the rate is
/// `<M*, D> k / (eps d ln(e/eps))` and scores are `|c_b^T M* c_b|`.
pub fn score_collection(
    table: &MeanTable,
    selection: &[usize],
    cfg: &EstimatorConfig,
    lambda: f64,
    seed: RngSeed,
) -> Result<ScoreReport, EstimatorError> {
    if selection.len() < 2 {
        return Err(EstimatorError::TooFewBatches(selection.len()));
    }
    let bundle = cov_bundle(table, selection, lambda)?;
    let (s_star, gap) = special_subset(&bundle.qhat_col, lambda);
    if gap >= cfg.special_gap_threshold {
        let members = s_star.indices();
        let shift = lambda * members.len() as f64;
        let k = table.k() as f64;
        let scores = selection
            .iter()
            .map(|&b| {
                let counts = table.counts(b);
                let mass: f64 = members.iter().map(|&j| counts[j] as f64 / k).sum();
                (mass - shift).abs()
            })
            .collect();
        return Ok(ScoreReport {
            mode: ScoreMode::Special,
            tau: f64::INFINITY,
            scores,
            s_star: Some(s_star),
            gram: None,
        });
    }
    if cfg.eps <= 0.0 {
        return Err(EstimatorError::ZeroEps);
    }
    let gram = gram_maximize(&bundle.d_matrix, &cfg.sdp, seed)?;
    let d = table.d() as f64;
    let tau = gram.value * table.k() as f64 / (cfg.eps * d * log_e_over(cfg.eps));
    let m = gram.gram_matrix();
    let scores = bundle
        .centered
        .iter()
        .map(|c| {
            let mut total = 0.0;
            for (i, ci) in c.iter().enumerate() {
                for (j, cj) in c.iter().enumerate() {
                    total += m[(i, j)] * ci * cj;
                }
            }
            total.abs()
        })
        .collect();
    Ok(ScoreReport {
        mode: ScoreMode::Sdp,
        tau,
        scores,
        s_star: None,
        gram: Some(gram),
    })
}

/// Sequential sampling without replacement, each pick proportional to its
/// score, while the remaining score mass exceeds half the initial total.
/// Returns positions into `scores` in deletion order.
pub fn batch_deletion<R: Rng + ?Sized>(scores: &[f64], rng: &mut R) -> Result<Vec<usize>, EstimatorError> {
    if scores.is_empty() {
        return Err(EstimatorError::EmptySelection);
    }
    if scores.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(EstimatorError::BadConfig("scores must be finite and nonnegative".into()));
    }
    let total: f64 = scores.iter().sum();
    if total <= 0.0 {
        return Err(EstimatorError::AllZeroScores);
    }
    let mut alive = vec![true; scores.len()];
    let mut deleted = Vec::new();
    loop {
        let remaining: f64 = scores.iter().zip(&alive).filter(|(_, &a)| a).map(|(s, _)| s).sum();
        if remaining <= total / 2.0 {
            break;
        }
        let target = rng.random::<f64>() * remaining;
        let mut cum = 0.0;
        let mut pick = None;
        for (i, (&s, &a)) in scores.iter().zip(&alive).enumerate() {
            if !a || s == 0.0 {
                continue;
            }
            cum += s;
            pick = Some(i);
            if target < cum {
                break;
            }
        }
        let i = pick.expect("remaining mass is positive");
        alive[i] = false;
        deleted.push(i);
    }
    Ok(deleted)
}
