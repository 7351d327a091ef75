use nalgebra::DMatrix;

use super::EstimatorError;
use crate::adversary::BatchCollection;
use crate::channel::PrivSample;
use crate::prob::SubsetMask;
use crate::sdp::SymMatrix;

/// Per-coordinate average of the samples in a batch.
pub fn batch_mean(batch: &[PrivSample]) -> Result<Vec<f64>, EstimatorError> {
    let first = batch.first().ok_or(EstimatorError::EmptyBatch)?;
    let d = first.d();
    let mut counts = vec![0u64; d];
    for s in batch {
        if s.d() != d {
            return Err(EstimatorError::DimensionMismatch { expected: d, got: s.d() });
        }
        for (j, c) in counts.iter_mut().enumerate() {
            *c += s.get(j) as u64;
        }
    }
    Ok(counts.iter().map(|&c| c as f64 / batch.len() as f64).collect())
}

/// Integer coordinate counts of every batch in a collection, so that means
/// over any selection are exact and independent of summation order.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanTable {
    d: usize,
    k: usize,
    counts: Vec<u64>,
}

impl MeanTable {
    pub fn new(collection: &BatchCollection) -> Self {
        let mut counts = Vec::with_capacity(collection.n() * collection.d());
        for b in collection.batches() {
            counts.extend(b.coordinate_counts());
        }
        Self {
            d: collection.d(),
            k: collection.k(),
            counts,
        }
    }

    pub fn n(&self) -> usize {
        self.counts.len() / self.d
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn counts(&self, b: usize) -> &[u64] {
        &self.counts[b * self.d..(b + 1) * self.d]
    }

    /// `qhat_b`.
    pub fn mean(&self, b: usize) -> Vec<f64> {
        let k = self.k as f64;
        self.counts(b).iter().map(|&c| c as f64 / k).collect()
    }
}

/// `qhat_{B'}`: the average of the selected batch means, computed as total
/// counts over `|B'| k`.
pub fn collection_mean(table: &MeanTable, selection: &[usize]) -> Result<Vec<f64>, EstimatorError> {
    if selection.is_empty() {
        return Err(EstimatorError::EmptySelection);
    }
    let mut totals = vec![0u64; table.d];
    for &b in selection {
        for (t, &c) in totals.iter_mut().zip(table.counts(b)) {
            *t += c;
        }
    }
    let denom = (selection.len() * table.k) as f64;
    Ok(totals.iter().map(|&t| t as f64 / denom).collect())
}

/// Centered batch means `c_b = qhat_b - qhat_{B'}` and their averaged outer
/// product `Chat(B') = (1/|B'|) sum_b c_b c_b^T`.
pub fn empirical_cov(
    table: &MeanTable,
    selection: &[usize],
) -> Result<(Vec<f64>, Vec<Vec<f64>>, SymMatrix), EstimatorError> {
    if selection.len() < 2 {
        return Err(EstimatorError::TooFewBatches(selection.len()));
    }
    let d = table.d;
    let qhat = collection_mean(table, selection)?;
    let centered: Vec<Vec<f64>> = selection
        .iter()
        .map(|&b| table.mean(b).iter().zip(&qhat).map(|(m, q)| m - q).collect())
        .collect();
    let mut acc = vec![0.0; d * d];
    for c in &centered {
        for i in 0..d {
            for j in i..d {
                acc[i * d + j] += c[i] * c[j];
            }
        }
    }
    let n = selection.len() as f64;
    let chat = DMatrix::from_fn(d, d, |i, j| {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        acc[a * d + b] / n
    });
    Ok((qhat, centered, SymMatrix::new(chat)?))
}

/// `C(q)` with `k C(q) = -(lambda 1 - q)(lambda 1 - q)^T + lambda (1 - lambda) I
/// - (1 - 2 lambda) Diag(lambda 1 - q)`: the covariance of one batch mean.
pub fn model_cov(qhat: &[f64], k: usize, lambda: f64) -> SymMatrix {
    let d = qhat.len();
    let delta: Vec<f64> = qhat.iter().map(|q| lambda - q).collect();
    let k = k as f64;
    let m = DMatrix::from_fn(d, d, |i, j| {
        let mut v = -delta[i] * delta[j];
        if i == j {
            v += lambda * (1.0 - lambda) - (1.0 - 2.0 * lambda) * delta[i];
        }
        v / k
    });
    SymMatrix::new(m).expect("constructed symmetric")
}

/// Collection statistics used for scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct CovBundle {
    pub qhat_col: Vec<f64>,
    /// `c_b` for every selected batch; `Chat_b = c_b c_b^T`.
    pub centered: Vec<Vec<f64>>,
    pub chat: SymMatrix,
    pub cmodel: SymMatrix,
    /// `Chat - C(qhat_col)`.
    pub d_matrix: SymMatrix,
}

impl CovBundle {
    pub fn chat_b(&self, i: usize) -> SymMatrix {
        SymMatrix::outer(&self.centered[i])
    }
}

pub fn cov_bundle(table: &MeanTable, selection: &[usize], lambda: f64) -> Result<CovBundle, EstimatorError> {
    let (qhat_col, centered, chat) = empirical_cov(table, selection)?;
    let cmodel = model_cov(&qhat_col, table.k, lambda);
    let d_matrix = SymMatrix::new(chat.matrix() - cmodel.matrix())?;
    Ok(CovBundle {
        qhat_col,
        centered,
        chat,
        cmodel,
        d_matrix,
    })
}

/// The set maximizing `|qhat(S) - lambda |S||`: `A = {j : qhat_j >= lambda}`
/// or its complement, ties going to `A`.
pub fn special_subset(qhat: &[f64], lambda: f64) -> (SubsetMask, f64) {
    let a = SubsetMask::from_bits(qhat.iter().map(|&q| q >= lambda).collect());
    let gap = |s: &SubsetMask| -> f64 {
        qhat.iter()
            .zip(s.bits())
            .filter(|(_, &b)| b)
            .map(|(q, _)| q - lambda)
            .sum::<f64>()
            .abs()
    };
    let ac = a.complement();
    let (ga, gc) = (gap(&a), gap(&ac));
    if ga >= gc {
        (a, ga)
    } else {
        (ac, gc)
    }
}
