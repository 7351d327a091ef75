use std::fmt::Write as _;

use serde::{Deserialize, Serialize, Serializer};

use super::score::{batch_deletion, score_collection, ScoreMode};
use super::stats::{collection_mean, MeanTable};
use super::EstimatorError;
use crate::adversary::{adversarial_count, BatchCollection, MAX_EPS};
use crate::channel::RapporChannel;
use crate::prob::{splitmix64, RngSeed};
use crate::sdp::GramConfig;

const GRAM_STREAM: u64 = 0x7364_705f_6772_616d;
const DELETION_STREAM: u64 = 0x6465_6c65_7469_6f6e;

/// Settings of the filtering loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    /// Assumed contamination level in `[0, 1/4)`.
    pub eps: f64,
    /// The loop stops once `sqrt(tau)` falls below this value.
    pub tau_threshold: f64,
    /// Gap `|qhat(S*) - lambda |S*||` that switches scoring to special mode.
    pub special_gap_threshold: f64,
    pub sdp: GramConfig,
    /// Defaults to the number of batches.
    pub max_iterations: Option<usize>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            eps: 0.0,
            tau_threshold: 200.0,
            special_gap_threshold: 11.0,
            sdp: GramConfig::default(),
            max_iterations: None,
        }
    }
}

impl EstimatorConfig {
    pub fn with_eps(eps: f64) -> Self {
        Self {
            eps,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), EstimatorError> {
        if !(0.0..MAX_EPS).contains(&self.eps) {
            return Err(EstimatorError::EpsOutOfRange(self.eps));
        }
        if !(self.tau_threshold > 0.0) || !(self.special_gap_threshold > 0.0) {
            return Err(EstimatorError::BadConfig("thresholds must be positive".into()));
        }
        Ok(())
    }
}

fn ser_real<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else if *v < 0.0 {
        s.serialize_str("-inf")
    } else {
        s.serialize_str("nan")
    }
}

/// One pass of the filtering loop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub mode: ScoreMode,
    #[serde(serialize_with = "ser_real")]
    pub tau: f64,
    #[serde(serialize_with = "ser_real")]
    pub sqrt_tau: f64,
    pub selection_size: usize,
    /// Original indices removed in this pass, in deletion order.
    pub deleted: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// No filtering was attempted.
    Unfiltered,
    /// The contamination rate fell below the threshold.
    Converged,
    /// `floor(eps n) = 0`, so there are no candidates to delete.
    NoCandidates,
    /// Every candidate scored zero.
    Stalled,
}

/// Final estimate and the filtering trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateResult {
    pub qhat: Vec<f64>,
    /// `(qhat - lambda 1) / (1 - 2 lambda)`; may leave the simplex.
    pub phat: Vec<f64>,
    /// `phat / |phat|_1`, or `phat` itself when `|phat|_1 <= 1e-9`.
    pub phat_normalized: Vec<f64>,
    /// Original indices of the surviving batches, ascending.
    pub surviving: Vec<usize>,
    pub trace: Vec<IterationRecord>,
    pub stop: StopReason,
}

impl EstimateResult {
    /// `sqrt(tau)` at the last scoring, or `NaN` when nothing was scored.
    pub fn final_sqrt_tau(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.sqrt_tau)
    }

    pub fn final_tau(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.tau)
    }

    /// `key=value` lines, one per field, with the trace flattened.
    pub fn to_record(&self) -> String {
        let vec = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        let mut out = String::new();
        let _ = writeln!(out, "qhat={}", vec(&self.qhat));
        let _ = writeln!(out, "phat={}", vec(&self.phat));
        let _ = writeln!(out, "phat_normalized={}", vec(&self.phat_normalized));
        let _ = writeln!(out, "surviving_count={}", self.surviving.len());
        let _ = writeln!(out, "stop={:?}", self.stop);
        let _ = writeln!(out, "iterations={}", self.trace.len());
        for r in &self.trace {
            let i = r.iteration;
            let _ = writeln!(out, "trace.{i}.mode={:?}", r.mode);
            let _ = writeln!(out, "trace.{i}.tau={:?}", r.tau);
            let _ = writeln!(out, "trace.{i}.selection_size={}", r.selection_size);
            let deleted: Vec<String> = r.deleted.iter().map(usize::to_string).collect();
            let _ = writeln!(out, "trace.{i}.deleted={}", deleted.join(","));
        }
        out
    }
}

fn finish(
    table: &MeanTable,
    selection: &[usize],
    ch: &RapporChannel,
    trace: Vec<IterationRecord>,
    stop: StopReason,
) -> Result<EstimateResult, EstimatorError> {
    let qhat = collection_mean(table, selection)?;
    let phat = ch.invert_mean(&qhat)?;
    let l1: f64 = phat.iter().map(|v| v.abs()).sum();
    let phat_normalized = if l1 > 1e-9 {
        phat.iter().map(|v| v / l1).collect()
    } else {
        phat.clone()
    };
    let mut surviving = selection.to_vec();
    surviving.sort_unstable();
    Ok(EstimateResult {
        qhat,
        phat,
        phat_normalized,
        surviving,
        trace,
        stop,
    })
}

fn check_shape(collection: &BatchCollection, ch: &RapporChannel) -> Result<(), EstimatorError> {
    if collection.d() != ch.d() {
        return Err(EstimatorError::DimensionMismatch {
            expected: ch.d(),
            got: collection.d(),
        });
    }
    Ok(())
}

/// Mean of every batch, inverted through the channel.
pub fn naive_estimate(collection: &BatchCollection, ch: &RapporChannel) -> Result<EstimateResult, EstimatorError> {
    check_shape(collection, ch)?;
    let table = MeanTable::new(collection);
    let all: Vec<usize> = (0..collection.n()).collect();
    finish(&table, &all, ch, Vec::new(), StopReason::Unfiltered)
}

/// Iterative filtering: score the surviving batches, stop when
/// `sqrt(tau) < tau_threshold`, otherwise take the `floor(eps n)` highest
/// scores and delete among them at random in proportion to score.
///
/// Batches are processed in an order fixed by their contents, and every
/// random choice is keyed on the master seed and batch contents, so the
/// result does not depend on the order of the input collection.
pub fn robust_estimate(
    collection: &BatchCollection,
    cfg: &EstimatorConfig,
    ch: &RapporChannel,
    seed: RngSeed,
) -> Result<EstimateResult, EstimatorError> {
    cfg.validate()?;
    check_shape(collection, ch)?;
    let n = collection.n();
    if n < 2 {
        return Err(EstimatorError::TooFewBatches(n));
    }
    let table = MeanTable::new(collection);
    if cfg.eps == 0.0 {
        let all: Vec<usize> = (0..n).collect();
        return finish(&table, &all, ch, Vec::new(), StopReason::Unfiltered);
    }

    let hashes: Vec<[u8; 32]> = collection.batches().iter().map(|b| b.content_hash()).collect();
    let mut selection: Vec<usize> = (0..n).collect();
    selection.sort_by(|&a, &b| hashes[a].cmp(&hashes[b]).then(a.cmp(&b)));
    let key = |b: usize| u64::from_le_bytes(hashes[b][..8].try_into().expect("hash has 32 bytes"));

    let top = adversarial_count(n, cfg.eps);
    let cap = cfg.max_iterations.unwrap_or(n);
    let mut trace = Vec::new();
    for iteration in 0.. {
        if iteration >= cap {
            return Err(EstimatorError::IterationCap(cap));
        }
        if selection.len() < 2 {
            return Err(EstimatorError::Exhausted);
        }
        let label = selection.iter().fold(iteration as u64, |acc, &b| splitmix64(acc ^ key(b)));
        let report = score_collection(&table, &selection, cfg, ch.lambda(), seed.derive(GRAM_STREAM ^ label))?;
        let mut record = IterationRecord {
            iteration,
            mode: report.mode,
            tau: report.tau,
            sqrt_tau: report.sqrt_tau(),
            selection_size: selection.len(),
            deleted: Vec::new(),
        };
        if record.sqrt_tau < cfg.tau_threshold {
            trace.push(record);
            return finish(&table, &selection, ch, trace, StopReason::Converged);
        }
        if top == 0 {
            trace.push(record);
            return finish(&table, &selection, ch, trace, StopReason::NoCandidates);
        }
        // Positions into `selection`, highest score first, ties by position.
        let mut ranked: Vec<usize> = (0..selection.len()).collect();
        ranked.sort_by(|&a, &b| report.scores[b].total_cmp(&report.scores[a]).then(a.cmp(&b)));
        ranked.truncate(top.min(selection.len()));
        let candidate_scores: Vec<f64> = ranked.iter().map(|&i| report.scores[i]).collect();
        if candidate_scores.iter().all(|&s| s == 0.0) {
            trace.push(record);
            return finish(&table, &selection, ch, trace, StopReason::Stalled);
        }
        let mut rng = seed.derive(DELETION_STREAM ^ label).rng();
        let picks = batch_deletion(&candidate_scores, &mut rng)?;
        let removed: Vec<usize> = picks.iter().map(|&p| selection[ranked[p]]).collect();
        selection.retain(|b| !removed.contains(b));
        record.deleted = removed;
        trace.push(record);
    }
    unreachable!("the loop returns")
}
