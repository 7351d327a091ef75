use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{omega_matrix, LowerBoundError, OmegaMatrix};
use crate::channel::RapporChannel;
use crate::prob::{chi_square, make_prob_vector, tv_product_bound, ProbVector, RngSeed};

/// Quadratic-form budget constant: pairs satisfy `Delta^T Omega Delta <= C eps^2 / k`.
pub const HARD_PAIR_C: f64 = 0.135_335_283_236_612_7; // exp(-2)
/// Frozen acceptance constant for `|Delta|_1 >= 0.2 eps sqrt(d) / (alpha sqrt(k))`
/// and for the best-of-N ratio `|Delta|_1 / |Delta|_2 >= 0.2 sqrt(d)`.
pub const L1_RATIO_THRESHOLD: f64 = 0.2;

const RANK_TOL: f64 = 1e-10;
const GAUSSIAN_STREAM: u64 = 0x6761_7573_7369_616e;

/// How the low-eigenspace direction is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DeltaScaling {
    /// `|Delta|_2^2 = C eps^2 / (2 e^2 alpha^2 k) ∧ 1/d`, valid for any
    /// direction whose quadratic form is at most `2 e^2 alpha^2`.
    Prescribed,
    /// `|Delta|_2^2 = C eps^2 / (k v^T Omega v) ∧ 1/d` for the chosen unit
    /// direction `v`, which spends the whole quadratic-form budget.
    #[default]
    Tight,
}

/// A sum-zero perturbation from the low-eigenvalue subspace of `Omega`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowEigenDelta {
    pub delta: Vec<f64>,
    /// Number of eigenvalues at most `3 e^2 alpha^2`.
    pub j0: usize,
    pub subspace_dim: usize,
    /// `|Delta|_1 / |Delta|_2` of the retained direction.
    pub l1_l2_ratio: f64,
}

/// Orthonormal basis of `span(v_1..v_j0) ∩ {x : x^T 1 = 0}`.
fn low_subspace_basis(omega: &OmegaMatrix) -> (usize, DMatrix<f64>) {
    let d = omega.d();
    let alpha = omega.channel_alpha;
    let cap = 3.0 * std::f64::consts::E.powi(2) * alpha * alpha;
    let (values, vectors) = omega.eigen_ascending();
    let j0 = values.iter().filter(|&&v| v <= cap).count();
    let e = vectors.columns(0, j0).into_owned();
    // Coordinates (in the eigenbasis) orthogonal to E^T 1 span the intersection.
    let w = e.transpose() * DVector::from_element(d, 1.0);
    let wn = w.norm();
    let null = if wn <= RANK_TOL {
        DMatrix::identity(j0, j0)
    } else {
        let wh = &w / wn;
        let proj = DMatrix::identity(j0, j0) - &wh * wh.transpose();
        let eig = nalgebra::SymmetricEigen::new(proj);
        let keep: Vec<usize> = (0..j0).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
        DMatrix::from_fn(j0, keep.len(), |r, c| eig.eigenvectors[(r, keep[c])])
    };
    (j0, e * null)
}

/// Best-of-`gaussian_samples` direction in the low-eigenvalue sum-zero
/// subspace, maximizing `|x|_1 / |x|_2`, scaled per `scaling`.
pub fn low_eigenspace_delta(
    omega: &OmegaMatrix,
    eps: f64,
    k: usize,
    gaussian_samples: usize,
    scaling: DeltaScaling,
    seed: RngSeed,
) -> Result<LowEigenDelta, LowerBoundError> {
    let d = omega.d();
    if d < 3 {
        return Err(LowerBoundError::BadParameter(format!("alphabet size {d} < 3")));
    }
    if k == 0 || gaussian_samples == 0 {
        return Err(LowerBoundError::BadParameter(
            "batch size and sample count must be positive".into(),
        ));
    }
    let (j0, basis) = low_subspace_basis(omega);
    let m = basis.ncols();
    if m == 0 {
        return Err(LowerBoundError::EmptySubspace);
    }
    let base = seed.derive(GAUSSIAN_STREAM);
    let candidates: Vec<(f64, Vec<f64>)> = (0..gaussian_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = base.stream(i as u64).rng();
            let g = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = &basis * g;
            let ratio = x.lp_norm(1) / x.norm();
            (ratio, x.as_slice().to_vec())
        })
        .collect();
    let mut best = 0;
    for (i, c) in candidates.iter().enumerate() {
        if c.0 > candidates[best].0 {
            best = i;
        }
    }
    let (ratio, x) = candidates.into_iter().nth(best).expect("sample count is positive");
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let unit: Vec<f64> = x.iter().map(|v| v / norm).collect();

    let alpha = omega.channel_alpha;
    let e2 = std::f64::consts::E.powi(2);
    let budget = HARD_PAIR_C * eps * eps / k as f64;
    let sq = match scaling {
        DeltaScaling::Prescribed => budget / (2.0 * e2 * alpha * alpha),
        DeltaScaling::Tight => {
            let quad = omega.quad_form(&unit);
            if quad > 0.0 {
                budget / quad
            } else {
                f64::INFINITY
            }
        }
    }
    .min(1.0 / d as f64);
    let scale = sq.sqrt();
    Ok(LowEigenDelta {
        delta: unit.iter().map(|v| v * scale).collect(),
        j0,
        subspace_dim: m,
        l1_l2_ratio: ratio,
    })
}

/// Two distributions whose `k`-fold privatized laws are within `eps` in total
/// variation while `|p - q|_1` is large.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HardPair {
    pub p: ProbVector,
    pub q: ProbVector,
    pub delta: Vec<f64>,
    pub chi2_one_sample: f64,
    pub quad_form: f64,
    pub tv_bound_k: f64,
    pub eps: f64,
    pub k: usize,
    pub alpha: f64,
}

/// Pass/fail of each hard-pair property.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HardPairChecks {
    pub sum_zero: bool,
    pub quad_budget: bool,
    pub chi2_chain: bool,
    pub tv_within_eps: bool,
    pub l1_lower: bool,
    pub l1: f64,
    pub l1_threshold: f64,
}

impl HardPairChecks {
    pub fn all(&self) -> bool {
        self.sum_zero && self.quad_budget && self.chi2_chain && self.tv_within_eps && self.l1_lower
    }
}

impl HardPair {
    /// Computes the certificate quantities for an arbitrary pair.
    pub fn from_distributions(
        ch: &RapporChannel,
        p: ProbVector,
        q: ProbVector,
        eps: f64,
        k: usize,
        omega: &OmegaMatrix,
    ) -> Result<Self, LowerBoundError> {
        let delta: Vec<f64> = p.weights().iter().zip(q.weights()).map(|(a, b)| a - b).collect();
        let chi2 = chi_square(&ch.output_dist(&p)?, &ch.output_dist(&q)?)?;
        Ok(Self {
            quad_form: omega.quad_form(&delta),
            tv_bound_k: tv_product_bound(chi2, k as u64),
            chi2_one_sample: chi2,
            delta,
            p,
            q,
            eps,
            k,
            alpha: ch.alpha(),
        })
    }

    pub fn l1(&self) -> f64 {
        self.delta.iter().map(|v| v.abs()).sum()
    }

    pub fn checks(&self) -> HardPairChecks {
        let d = self.p.d() as f64;
        let budget = HARD_PAIR_C * self.eps * self.eps / self.k as f64;
        let threshold = L1_RATIO_THRESHOLD * self.eps * d.sqrt() / (self.alpha * (self.k as f64).sqrt());
        let l1 = self.l1();
        HardPairChecks {
            sum_zero: self.delta.iter().sum::<f64>().abs() <= 1e-12,
            quad_budget: self.quad_form <= budget * (1.0 + 1e-12),
            chi2_chain: self.chi2_one_sample <= self.alpha.exp() * self.quad_form + 1e-9,
            tv_within_eps: self.tv_bound_k <= self.eps,
            l1_lower: l1 >= threshold,
            l1,
            l1_threshold: threshold,
        }
    }
}

/// Builds `p = |Delta| / |Delta|_1` and `q = p - Delta` from a low-eigenspace
/// perturbation and certifies the pair.
pub fn hard_pair(
    ch: &RapporChannel,
    eps: f64,
    k: usize,
    gaussian_samples: usize,
    scaling: DeltaScaling,
    seed: RngSeed,
) -> Result<HardPair, LowerBoundError> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(LowerBoundError::EpsOutOfRange(eps));
    }
    let omega = omega_matrix(ch)?;
    let low = low_eigenspace_delta(&omega, eps, k, gaussian_samples, scaling, seed)?;
    let l1: f64 = low.delta.iter().map(|v| v.abs()).sum();
    if l1 > 1.0 + 1e-12 {
        return Err(LowerBoundError::InfeasibleScale(l1));
    }
    let p = make_prob_vector(low.delta.iter().map(|v| v.abs() / l1).collect())?;
    let q = make_prob_vector(p.weights().iter().zip(&low.delta).map(|(a, b)| a - b).collect())?;
    HardPair::from_distributions(ch, p, q, eps, k, &omega)
}
