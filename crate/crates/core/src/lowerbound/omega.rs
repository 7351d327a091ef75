use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use super::LowerBoundError;
use crate::channel::{RapporChannel, MAX_ENUMERATED_D};
use crate::prob::RngSeed;

/// `Omega(j, j') = E_{z ~ Q(.|0)} [q_j(z) q_j'(z)]` with
/// `q_j(z) = Q(z|j) / Q(z|0) - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaMatrix {
    pub entries: DMatrix<f64>,
    pub channel_alpha: f64,
}

impl Serialize for OmegaMatrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr {
            channel_alpha: f64,
            entries: Vec<Vec<f64>>,
        }
        let d = self.d();
        Repr {
            channel_alpha: self.channel_alpha,
            entries: (0..d)
                .map(|i| (0..d).map(|j| self.entries[(i, j)]).collect())
                .collect(),
        }
        .serialize(serializer)
    }
}

impl OmegaMatrix {
    pub fn d(&self) -> usize {
        self.entries.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    /// Eigenvalues in ascending order with matching eigenvector columns.
    pub fn eigen_ascending(&self) -> (Vec<f64>, DMatrix<f64>) {
        let eig = nalgebra::SymmetricEigen::new(self.entries.clone());
        let mut order: Vec<usize> = (0..self.d()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(self.d(), self.d(), |r, c| eig.eigenvectors[(r, order[c])]);
        (values, vectors)
    }

    /// `x^T Omega x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let v = nalgebra::DVector::from_column_slice(x);
        v.dot(&(&self.entries * &v))
    }
}

/// Likelihood ratios `Q(z|j) / Q(z|0) - 1` for one output.
fn ratios(ch: &RapporChannel, z: u64, out: &mut [f64]) {
    let r = ch.ldp_ratio_check();
    let z0 = (z & 1) as i32;
    for (j, o) in out.iter_mut().enumerate() {
        let zj = (z >> j & 1) as i32;
        *o = r.powi(zj - z0) - 1.0;
    }
}

/// Exact information matrix by enumerating all `2^d` outputs.
pub fn omega_matrix(ch: &RapporChannel) -> Result<OmegaMatrix, LowerBoundError> {
    let d = ch.d();
    if d > MAX_ENUMERATED_D {
        return Err(LowerBoundError::DimensionTooLarge {
            d,
            limit: MAX_ENUMERATED_D,
        });
    }
    let mut acc = vec![0.0; d * d];
    let mut q = vec![0.0; d];
    for z in 0..1u64 << d {
        let w = ch.likelihood(z, 0);
        ratios(ch, z, &mut q);
        for i in 0..d {
            let wi = w * q[i];
            for j in 0..d {
                acc[i * d + j] += wi * q[j];
            }
        }
    }
    // Column 0 is identically zero because q_0 = 0; symmetrize exactly.
    let entries = DMatrix::from_fn(d, d, |i, j| {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        acc[a * d + b]
    });
    Ok(OmegaMatrix {
        entries,
        channel_alpha: ch.alpha(),
    })
}

/// Monte Carlo estimate of the information matrix from `draws` outputs of
/// `Q(.|0)`. Returns the mean and entrywise standard errors.
pub fn omega_monte_carlo(
    ch: &RapporChannel,
    draws: usize,
    seed: RngSeed,
) -> Result<(DMatrix<f64>, DMatrix<f64>), LowerBoundError> {
    let d = ch.d();
    if d > 64 {
        return Err(LowerBoundError::DimensionTooLarge { d, limit: 64 });
    }
    if draws < 2 {
        return Err(LowerBoundError::BadParameter("at least two draws are required".into()));
    }
    let mut rng = seed.rng();
    let mut sum = DMatrix::<f64>::zeros(d, d);
    let mut sum_sq = DMatrix::<f64>::zeros(d, d);
    let mut q = vec![0.0; d];
    let lambda = ch.lambda();
    for _ in 0..draws {
        let mut z = 0u64;
        for j in 0..d {
            let flip = rng.random::<f64>() < lambda;
            if (j == 0) != flip {
                z |= 1 << j;
            }
        }
        ratios(ch, z, &mut q);
        for i in 0..d {
            for j in 0..d {
                let v = q[i] * q[j];
                sum[(i, j)] += v;
                sum_sq[(i, j)] += v * v;
            }
        }
    }
    let n = draws as f64;
    let mean = &sum / n;
    let se = DMatrix::from_fn(d, d, |i, j| {
        let var = (sum_sq[(i, j)] / n - mean[(i, j)].powi(2)).max(0.0) * n / (n - 1.0);
        (var / n).sqrt()
    });
    Ok((mean, se))
}
