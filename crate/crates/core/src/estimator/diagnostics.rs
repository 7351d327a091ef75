use nalgebra::DMatrix;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::stats::{cov_bundle, MeanTable};
use super::{log_e_over, model_cov, EstimatorError};
use crate::adversary::{BatchCollection, Label};
use crate::channel::RapporChannel;
use crate::prob::{ProbVector, RngSeed};
use crate::sdp::{subset_bilinear_max, subset_bilinear_range, SymMatrix};

/// Largest alphabet for the subset enumerations below.
pub const MAX_DIAGNOSTIC_D: usize = 12;

/// Sampling effort for [`check_nice_properties`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NiceConfig {
    /// Random large sub-collections for the second-moment condition.
    pub large_samples: usize,
    /// Random small sub-collections for the small-collection condition.
    pub small_samples: usize,
    pub seed: RngSeed,
}

impl Default for NiceConfig {
    fn default() -> Self {
        Self {
            large_samples: 20,
            small_samples: 20,
            seed: RngSeed::new(0),
        }
    }
}

/// Worst observed value of one condition against its bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub worst: f64,
    pub bound: f64,
}

impl ConditionCheck {
    pub fn passes(&self) -> bool {
        self.worst <= self.bound
    }

    pub fn margin(&self) -> f64 {
        self.bound - self.worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NiceReport {
    /// `|qhat_{B'}(S) - q(S)| <= 6 eps sqrt(d ln(e/eps) / k)`, exact worst case
    /// over all `S` and all sub-collections keeping `(1 - 2 eps)` of the batches.
    pub first_moment: ConditionCheck,
    /// `|Chat_{S,S'}(B') - C_{S,S'}(qhat_{B'})| <= 250 d eps ln(e/eps) / k`
    /// over the full collection and sampled large sub-collections.
    pub second_moment: ConditionCheck,
    /// `sum_{b in B''} (qhat_b(S) - q(S)) (qhat_b(S') - q(S'))
    /// <= 33 eps d |B_G| ln(e/eps) / k` over sampled and greedy small
    /// sub-collections.
    pub small_collections: ConditionCheck,
}

impl NiceReport {
    pub fn condition1(&self) -> bool {
        self.first_moment.passes() && self.second_moment.passes()
    }

    pub fn condition2(&self) -> bool {
        self.small_collections.passes()
    }

    pub fn all(&self) -> bool {
        self.condition1() && self.condition2()
    }
}

fn subset_sums(v: &[f64]) -> Vec<f64> {
    let d = v.len();
    let mut out = vec![0.0; 1 << d];
    for w in 1..1usize << d {
        let j = w.trailing_zeros() as usize;
        out[w] = out[w & (w - 1)] + v[j];
    }
    out
}

/// Evaluates the concentration conditions that clean batches satisfy with
/// high probability.
pub fn check_nice_properties(
    clean: &BatchCollection,
    p_true: &ProbVector,
    eps: f64,
    ch: &RapporChannel,
    cfg: &NiceConfig,
) -> Result<NiceReport, EstimatorError> {
    let d = clean.d();
    if d > MAX_DIAGNOSTIC_D {
        return Err(EstimatorError::DimensionTooLarge {
            d,
            limit: MAX_DIAGNOSTIC_D,
        });
    }
    match clean.truth() {
        Some(t) if t.iter().all(|&l| l == Label::Good) => {}
        _ => return Err(EstimatorError::NotClean),
    }
    if !(eps > 0.0 && eps < 0.5) {
        return Err(EstimatorError::EpsOutOfRange(eps));
    }
    let n = clean.n();
    if n < 2 {
        return Err(EstimatorError::TooFewBatches(n));
    }
    let q = ch.mean_response(p_true)?;
    let table = MeanTable::new(clean);
    let k = table.k() as f64;
    let log = log_e_over(eps);
    let df = d as f64;

    let q_sums = subset_sums(&q);
    let batch_sums: Vec<Vec<f64>> = (0..n).map(|b| subset_sums(&table.mean(b))).collect();

    // Condition 1, first moment: for each S the worst kept sub-collection
    // drops the `drop` smallest or largest batch values.
    let keep = ((1.0 - 2.0 * eps) * n as f64).ceil() as usize;
    let drop = n - keep.min(n);
    let mut worst1: f64 = 0.0;
    let mut values = vec![0.0; n];
    for s in 0..1usize << d {
        for (v, sums) in values.iter_mut().zip(&batch_sums) {
            *v = sums[s];
        }
        values.sort_by(f64::total_cmp);
        let kept_len = (n - drop) as f64;
        let high: f64 = values[drop..].iter().sum::<f64>() / kept_len;
        let low: f64 = values[..n - drop].iter().sum::<f64>() / kept_len;
        worst1 = worst1.max((high - q_sums[s]).abs()).max((low - q_sums[s]).abs());
    }

    // Condition 1, second moment.
    let mut rng = cfg.seed.rng();
    let all: Vec<usize> = (0..n).collect();
    let mut worst2: f64 = 0.0;
    let large_size = keep.clamp(2, n);
    let mut large: Vec<Vec<usize>> = vec![all.clone()];
    for _ in 0..cfg.large_samples {
        let mut s = sample(&mut rng, n, large_size).into_vec();
        s.sort_unstable();
        large.push(s);
    }
    for sel in &large {
        let bundle = cov_bundle(&table, sel, ch.lambda())?;
        worst2 = worst2.max(subset_bilinear_max(&bundle.d_matrix)?.0);
    }

    // Condition 2: small sub-collections.
    let small = ((eps * n as f64) + 1e-9).floor() as usize;
    let mut worst3: f64 = 0.0;
    if small > 0 {
        let y: Vec<Vec<f64>> = (0..n)
            .map(|b| table.mean(b).iter().zip(&q).map(|(m, qj)| m - qj).collect())
            .collect();
        for _ in 0..cfg.small_samples {
            let sel = sample(&mut rng, n, small).into_vec();
            let mut g = DMatrix::zeros(d, d);
            for &b in &sel {
                let v = nalgebra::DVector::from_column_slice(&y[b]);
                g += &v * v.transpose();
            }
            worst3 = worst3.max(subset_bilinear_range(&SymMatrix::new(g)?)?.0);
        }
        // Greedy diagonal choice: for S = S' keep the largest squares.
        let mut sq = vec![0.0; n];
        for s in 0..1usize << d {
            for (v, sums) in sq.iter_mut().zip(&batch_sums) {
                *v = (sums[s] - q_sums[s]).powi(2);
            }
            sq.sort_by(|a, b| b.total_cmp(a));
            worst3 = worst3.max(sq[..small].iter().sum());
        }
    }

    Ok(NiceReport {
        first_moment: ConditionCheck {
            worst: worst1,
            bound: 6.0 * eps * (df * log / k).sqrt(),
        },
        second_moment: ConditionCheck {
            worst: worst2,
            bound: 250.0 * df * eps * log / k,
        },
        small_collections: ConditionCheck {
            worst: worst3,
            bound: 33.0 * eps * df * n as f64 * log / k,
        },
    })
}

/// Enumeration of `|C_{S,S'}(q) - C_{S,S'}(q')|` against
/// `(15 / k) max(|e(S)|, |e(S')|)` with `e = q' - q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LipschitzReport {
    pub pairs: usize,
    pub max_gap: f64,
    /// Largest `gap / bound` over pairs with a positive bound.
    pub max_ratio: f64,
    /// Pairs where the gap exceeds the bound.
    pub violations: usize,
    /// Pairs where the gap exceeds
    /// `(15 / k) max(|e(S)|, |e(S')|, |e(S ∩ S')|)`.
    pub violations_with_intersection: usize,
}

pub fn covariance_lipschitz_check(
    q: &[f64],
    q_shift: &[f64],
    k: usize,
    lambda: f64,
) -> Result<LipschitzReport, EstimatorError> {
    let d = q.len();
    if q_shift.len() != d {
        return Err(EstimatorError::DimensionMismatch {
            expected: d,
            got: q_shift.len(),
        });
    }
    if d > MAX_DIAGNOSTIC_D {
        return Err(EstimatorError::DimensionTooLarge {
            d,
            limit: MAX_DIAGNOSTIC_D,
        });
    }
    let e: Vec<f64> = q_shift.iter().zip(q).map(|(a, b)| a - b).collect();
    let e_sums = subset_sums(&e);
    let largest = e_sums.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if largest > 12.0 {
        return Err(EstimatorError::ShiftTooLarge(largest));
    }
    let gap = model_cov(q, k, lambda).matrix() - model_cov(q_shift, k, lambda).matrix();
    let kf = k as f64;
    let tol = 1e-15;
    let mut rep = LipschitzReport {
        pairs: 0,
        max_gap: 0.0,
        max_ratio: 0.0,
        violations: 0,
        violations_with_intersection: 0,
    };
    let mut w = vec![0.0; d];
    for s in 0..1usize << d {
        for (i, wi) in w.iter_mut().enumerate() {
            *wi = (0..d).filter(|&l| s >> l & 1 == 1).map(|l| gap[(i, l)]).sum();
        }
        let w_sums = subset_sums(&w);
        for sp in 0..1usize << d {
            let g = w_sums[sp].abs();
            let base = e_sums[s].abs().max(e_sums[sp].abs());
            let bound = 15.0 / kf * base;
            let bound_i = 15.0 / kf * base.max(e_sums[s & sp].abs());
            rep.pairs += 1;
            rep.max_gap = rep.max_gap.max(g);
            if bound > 0.0 {
                rep.max_ratio = rep.max_ratio.max(g / bound);
            }
            if g > bound + tol {
                rep.violations += 1;
            }
            if g > bound_i + tol {
                rep.violations_with_intersection += 1;
            }
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{make_clean_collection, Batch, CollectionMeta};
    use crate::channel::PrivSample;
    use rand::Rng;

    #[test]
    fn subset_sums_enumerate() {
        let s = subset_sums(&[1.0, 2.0, 4.0]);
        assert_eq!(s, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn large_k_passes() {
        let ch = RapporChannel::new(4, 1.0).unwrap();
        let p = ProbVector::new(vec![0.4, 0.3, 0.2, 0.1]).unwrap();
        let c = make_clean_collection(&ch, &p, 100, 10_000, RngSeed::new(1)).unwrap();
        let rep = check_nice_properties(&c, &p, 0.1, &ch, &NiceConfig::default()).unwrap();
        assert!(rep.all(), "{rep:?}");
    }

    #[test]
    fn shifted_batches_fail_condition_one() {
        // Batches labeled good but drawn from a far distribution.
        let ch = RapporChannel::new(5, 1.0).unwrap();
        let p = ProbVector::uniform(5).unwrap();
        let far = ProbVector::point_mass(5, 0).unwrap();
        let c = make_clean_collection(&ch, &far, 50, 2000, RngSeed::new(2)).unwrap();
        let rep = check_nice_properties(&c, &p, 0.1, &ch, &NiceConfig::default()).unwrap();
        assert!(!rep.first_moment.passes());
        assert!(!rep.condition1());
    }

    #[test]
    fn rejects_contaminated_or_large_inputs() {
        let ch = RapporChannel::new(13, 1.0).unwrap();
        let p = ProbVector::uniform(13).unwrap();
        let c = make_clean_collection(&ch, &p, 3, 3, RngSeed::new(0)).unwrap();
        assert!(matches!(
            check_nice_properties(&c, &p, 0.1, &ch, &NiceConfig::default()),
            Err(EstimatorError::DimensionTooLarge { .. })
        ));
        let ch = RapporChannel::new(3, 1.0).unwrap();
        let b = Batch::from_samples(&[PrivSample::ones(3)]).unwrap();
        let unlabeled = BatchCollection::new(vec![b.clone(), b], None, CollectionMeta { eps: 0.0, seed: 0 }).unwrap();
        assert!(matches!(
            check_nice_properties(&unlabeled, &ProbVector::uniform(3).unwrap(), 0.1, &ch, &NiceConfig::default()),
            Err(EstimatorError::NotClean)
        ));
    }

    #[test]
    fn lipschitz_identity_shift() {
        let q = [0.4, 0.45, 0.5, 0.42];
        let rep = covariance_lipschitz_check(&q, &q, 10, 0.38).unwrap();
        assert_eq!(rep.max_gap, 0.0);
        assert_eq!(rep.violations, 0);
        assert_eq!(rep.pairs, 256);
    }

    #[test]
    fn lipschitz_coordinate_bump() {
        let ch = RapporChannel::new(4, 1.0).unwrap();
        let q = ch.mean_response(&ProbVector::new(vec![0.4, 0.3, 0.2, 0.1]).unwrap()).unwrap();
        let mut shifted = q.clone();
        shifted[0] += 0.01;
        for k in [1, 10, 50] {
            let rep = covariance_lipschitz_check(&q, &shifted, k, ch.lambda()).unwrap();
            assert!(rep.max_gap <= 0.15 / k as f64 + 1e-15);
            assert_eq!(rep.violations, 0);
        }
    }

    #[test]
    fn lipschitz_shift_guard() {
        let q = vec![0.4; 12];
        let far = vec![1.5; 12];
        assert!(matches!(
            covariance_lipschitz_check(&q, &far, 10, 0.38),
            Err(EstimatorError::ShiftTooLarge(_))
        ));
    }

    #[test]
    fn lipschitz_random_mean_response_shifts() {
        // Shifts between valid mean responses, with the intersection term
        // included in the bound.
        let ch = RapporChannel::new(6, 1.0).unwrap();
        let mut rng = RngSeed::new(31).rng();
        for _ in 0..100 {
            let raw: Vec<f64> = (0..6).map(|_| rng.random::<f64>() + 0.05).collect();
            let total: f64 = raw.iter().sum();
            let p = ProbVector::new(raw.iter().map(|v| v / total).collect()).unwrap();
            let q = ch.mean_response(&p).unwrap();
            let shifted: Vec<f64> = q.iter().map(|v| v + rng.random_range(-0.02..0.02)).collect();
            let rep = covariance_lipschitz_check(&q, &shifted, 20, ch.lambda()).unwrap();
            assert_eq!(rep.violations_with_intersection, 0);
        }
    }
}
