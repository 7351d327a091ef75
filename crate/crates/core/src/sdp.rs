//! Bilinear maximization over the Gram set
//! `G = { M : M_ij = <u_i, v_j>, |u_i| = |v_j| = 1 }` and the exhaustive subset
//! oracle `max_{S, S'} |1_S^T A 1_S'|` that brackets it.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::prob::{RngSeed, SubsetMask};

/// Largest dimension accepted by the subset oracle.
pub const MAX_ENUMERATION_D: usize = 22;
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Ratio between the Gram optimum and the subset optimum never exceeds this.
pub const SANDWICH_FACTOR: f64 = 8.0;

const RESTART_STREAM: u64 = 0x6772_616d_5f72_7374;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SdpError {
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("matrix is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("dimension {d} exceeds the enumeration limit {limit}")]
    DimensionTooLarge { d: usize, limit: usize },
    #[error("rank must be at least 3, got {0}")]
    RankTooSmall(usize),
    #[error("at least one restart is required")]
    NoRestarts,
    #[error("factor dimensions do not match the matrix")]
    ShapeMismatch,
}

/// A real symmetric `d x d` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    m: DMatrix<f64>,
}

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self, SdpError> {
        if m.nrows() != m.ncols() {
            return Err(SdpError::NotSquare(m.nrows(), m.ncols()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(SdpError::NonFinite);
        }
        let asym = (&m - m.transpose()).amax();
        if asym > SYMMETRY_TOL {
            return Err(SdpError::NotSymmetric(asym));
        }
        Ok(Self { m })
    }

    /// Symmetrizes `m` as `(m + m^T) / 2`.
    pub fn symmetrize(m: DMatrix<f64>) -> Result<Self, SdpError> {
        if m.nrows() != m.ncols() {
            return Err(SdpError::NotSquare(m.nrows(), m.ncols()));
        }
        let s = (&m + m.transpose()) * 0.5;
        Self::new(s)
    }

    pub fn zeros(d: usize) -> Self {
        Self { m: DMatrix::zeros(d, d) }
    }

    pub fn identity(d: usize) -> Self {
        Self {
            m: DMatrix::identity(d, d),
        }
    }

    /// `a a^T`.
    pub fn outer(a: &[f64]) -> Self {
        let d = a.len();
        Self {
            m: DMatrix::from_fn(d, d, |i, j| a[i] * a[j]),
        }
    }

    pub fn d(&self) -> usize {
        self.m.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn frobenius(&self) -> f64 {
        self.m.norm()
    }

    /// Frobenius inner product `<self, other>`.
    pub fn inner(&self, other: &DMatrix<f64>) -> f64 {
        self.m.dot(other)
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let d = self.d();
        let mut total = 0.0;
        for i in 0..d {
            if x[i] == 0.0 {
                continue;
            }
            let row: f64 = (0..d).map(|j| self.m[(i, j)] * y[j]).sum();
            total += x[i] * row;
        }
        total
    }
}

/// Unit-vector factors `u_i, v_j` of rank `r` and the objective `<M, A>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramSolution {
    pub u_factors: Vec<Vec<f64>>,
    pub v_factors: Vec<Vec<f64>>,
    pub value: f64,
}

impl GramSolution {
    pub fn d(&self) -> usize {
        self.u_factors.len()
    }

    pub fn rank(&self) -> usize {
        self.u_factors.first().map_or(0, Vec::len)
    }

    /// `M_ij = <u_i, v_j>`.
    pub fn gram_matrix(&self) -> DMatrix<f64> {
        let d = self.d();
        DMatrix::from_fn(d, d, |i, j| dot(&self.u_factors[i], &self.v_factors[j]))
    }

    /// `<M, A>` recomputed from the factors.
    pub fn objective(&self, a: &SymMatrix) -> Result<f64, SdpError> {
        if a.d() != self.d() || self.v_factors.len() != self.d() {
            return Err(SdpError::ShapeMismatch);
        }
        Ok(a.inner(&self.gram_matrix()))
    }

    /// Largest deviation of a factor norm from 1.
    pub fn max_norm_defect(&self) -> f64 {
        self.u_factors
            .iter()
            .chain(&self.v_factors)
            .map(|f| (dot(f, f).sqrt() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Solver settings for [`gram_maximize`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GramConfig {
    /// Factor rank; `None` means `min(d, 8)`, raised to 3 if needed.
    pub rank: Option<usize>,
    pub restarts: usize,
    pub sweep_tol: f64,
    pub max_sweeps: usize,
}

impl Default for GramConfig {
    fn default() -> Self {
        Self {
            rank: None,
            restarts: 16,
            sweep_tol: 1e-8,
            max_sweeps: 10_000,
        }
    }
}

impl GramConfig {
    pub fn rank_for(&self, d: usize) -> usize {
        self.rank.unwrap_or_else(|| d.clamp(3, 8))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out_i = sum_j A_ij x_j` for row-major factor blocks of width `r`.
fn apply(a: &SymMatrix, x: &[f64], r: usize, out: &mut [f64]) {
    let d = a.d();
    out.fill(0.0);
    for i in 0..d {
        let row = &mut out[i * r..(i + 1) * r];
        for j in 0..d {
            let aij = a.m[(i, j)];
            if aij != 0.0 {
                for (o, xv) in row.iter_mut().zip(&x[j * r..(j + 1) * r]) {
                    *o += aij * xv;
                }
            }
        }
    }
}

/// Sets each row of `target` to the normalized row of `grad`, leaving rows
/// with zero gradient unchanged. Returns `sum_i <target_i, grad_i>`.
fn normalize_rows(grad: &[f64], r: usize, target: &mut [f64]) -> f64 {
    let mut total = 0.0;
    for (g, t) in grad.chunks_exact(r).zip(target.chunks_exact_mut(r)) {
        let norm = dot(g, g).sqrt();
        if norm > 0.0 {
            for (tv, gv) in t.iter_mut().zip(g) {
                *tv = gv / norm;
            }
            total += norm;
        } else {
            total += dot(g, t);
        }
    }
    total
}

fn random_unit_rows<R: Rng + ?Sized>(d: usize, r: usize, rng: &mut R) -> Vec<f64> {
    let mut x = vec![0.0; d * r];
    for row in x.chunks_exact_mut(r) {
        loop {
            for v in row.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let norm = dot(row, row).sqrt();
            if norm > 1e-8 {
                row.iter_mut().for_each(|v| *v /= norm);
                break;
            }
        }
    }
    x
}

fn to_rows(x: &[f64], r: usize) -> Vec<Vec<f64>> {
    x.chunks_exact(r).map(<[f64]>::to_vec).collect()
}

/// One alternating-maximization run from a random start. Returns the
/// solution and the objective after every half-sweep.
pub fn alternating_run<R: Rng + ?Sized>(
    a: &SymMatrix,
    rank: usize,
    sweep_tol: f64,
    max_sweeps: usize,
    rng: &mut R,
) -> Result<(GramSolution, Vec<f64>), SdpError> {
    if rank < 3 {
        return Err(SdpError::RankTooSmall(rank));
    }
    let d = a.d();
    let r = rank;
    let mut u = random_unit_rows(d, r, rng);
    let mut v = random_unit_rows(d, r, rng);
    let mut grad = vec![0.0; d * r];
    let mut trace = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for _ in 0..max_sweeps.max(1) {
        apply(a, &v, r, &mut grad);
        trace.push(normalize_rows(&grad, r, &mut u));
        apply(a, &u, r, &mut grad);
        let obj = normalize_rows(&grad, r, &mut v);
        trace.push(obj);
        if obj - prev <= sweep_tol * obj.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        prev = obj;
    }
    let mut sol = GramSolution {
        u_factors: to_rows(&u, r),
        v_factors: to_rows(&v, r),
        value: 0.0,
    };
    sol.value = sol.objective(a)?;
    Ok((sol, trace))
}

/// Approximately maximizes `<M, A>` over the Gram set by alternating
/// maximization from `cfg.restarts` random starts. The returned value is
/// attained by the returned factors, hence a lower bound on the optimum.
pub fn gram_maximize(a: &SymMatrix, cfg: &GramConfig, seed: RngSeed) -> Result<GramSolution, SdpError> {
    let rank = cfg.rank_for(a.d());
    if rank < 3 {
        return Err(SdpError::RankTooSmall(rank));
    }
    if cfg.restarts == 0 {
        return Err(SdpError::NoRestarts);
    }
    let base = seed.derive(RESTART_STREAM);
    let runs: Vec<GramSolution> = (0..cfg.restarts)
        .into_par_iter()
        .map(|i| {
            let mut rng = base.stream(i as u64).rng();
            alternating_run(a, rank, cfg.sweep_tol, cfg.max_sweeps, &mut rng).map(|(s, _)| s)
        })
        .collect::<Result<_, _>>()?;
    let mut best = 0;
    for (i, s) in runs.iter().enumerate() {
        if s.value > runs[best].value {
            best = i;
        }
    }
    Ok(runs.into_iter().nth(best).expect("restarts is positive"))
}

/// Exact `max_{S, S'} |1_S^T A 1_S'|` with attaining sets. For each `S` the
/// best `S'` is the positive or the negative support of `A 1_S`.
pub fn subset_bilinear_max(a: &SymMatrix) -> Result<(f64, SubsetMask, SubsetMask), SdpError> {
    let d = a.d();
    if d > MAX_ENUMERATION_D {
        return Err(SdpError::DimensionTooLarge {
            d,
            limit: MAX_ENUMERATION_D,
        });
    }
    let mut best = (f64::NEG_INFINITY, 0u64, 0u64);
    for_each_subset_image(a, |word, w| {
        let (mut pos, mut neg) = (0.0, 0.0);
        for &x in w {
            if x > 0.0 {
                pos += x;
            } else {
                neg -= x;
            }
        }
        let (value, sp) = if pos >= neg {
            (pos, support(w, |x| x > 0.0))
        } else {
            (neg, support(w, |x| x < 0.0))
        };
        if value > best.0 || (value == best.0 && word < best.1) {
            best = (value, word, sp);
        }
    });
    let s = SubsetMask::from_word(d, best.1);
    let sp = SubsetMask::from_word(d, best.2);
    let value = a.bilinear(&s.indicator(), &sp.indicator()).abs();
    Ok((value, s, sp))
}

/// Exact `max_{S, S'} 1_S^T A 1_S'` and `min_{S, S'} 1_S^T A 1_S'`.
pub fn subset_bilinear_range(a: &SymMatrix) -> Result<(f64, f64), SdpError> {
    let d = a.d();
    if d > MAX_ENUMERATION_D {
        return Err(SdpError::DimensionTooLarge {
            d,
            limit: MAX_ENUMERATION_D,
        });
    }
    let (mut hi, mut lo) = (0.0f64, 0.0f64);
    for_each_subset_image(a, |_, w| {
        let pos: f64 = w.iter().filter(|&&x| x > 0.0).sum();
        let neg: f64 = w.iter().filter(|&&x| x < 0.0).sum();
        hi = hi.max(pos);
        lo = lo.min(neg);
    });
    Ok((hi, lo))
}

fn support(w: &[f64], keep: impl Fn(f64) -> bool) -> u64 {
    w.iter()
        .enumerate()
        .filter(|(_, &x)| keep(x))
        .fold(0u64, |acc, (j, _)| acc | 1 << j)
}

/// Calls `f(word, A 1_S)` for every subset `S` in Gray-code order. The image
/// is recomputed from scratch periodically to bound rounding drift.
fn for_each_subset_image(a: &SymMatrix, mut f: impl FnMut(u64, &[f64])) {
    let d = a.d();
    let mut w = vec![0.0; d];
    let mut word = 0u64;
    f(0, &w);
    for step in 1u64..(1u64 << d) {
        let j = step.trailing_zeros() as usize;
        word ^= 1 << j;
        if step % 4096 == 0 {
            for (i, wi) in w.iter_mut().enumerate() {
                *wi = (0..d).filter(|&l| word >> l & 1 == 1).map(|l| a.m[(i, l)]).sum();
            }
        } else {
            let sign = if word >> j & 1 == 1 { 1.0 } else { -1.0 };
            for (i, wi) in w.iter_mut().enumerate() {
                *wi += sign * a.m[(i, j)];
            }
        }
        f(word, &w);
    }
}

/// Outcome of comparing a Gram solution against the subset oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SandwichReport {
    pub subset_value: f64,
    pub gram_value: f64,
    pub tol: f64,
    /// `gram + tol - subset`; nonnegative when the lower inequality holds.
    pub lower_margin: f64,
    /// `8 subset + tol - gram`; nonnegative when the upper inequality holds.
    pub upper_margin: f64,
}

impl SandwichReport {
    pub fn holds(&self) -> bool {
        self.lower_margin >= 0.0 && self.upper_margin >= 0.0
    }
}

/// Checks `subset <= gram + tol` and `gram <= 8 subset + tol` with
/// `tol = 1e-6 |A|_F`.
pub fn sandwich_check(a: &SymMatrix, sol: &GramSolution) -> Result<SandwichReport, SdpError> {
    let (subset_value, _, _) = subset_bilinear_max(a)?;
    let gram_value = sol.value;
    let tol = 1e-6 * a.frobenius();
    Ok(SandwichReport {
        subset_value,
        gram_value,
        tol,
        lower_margin: gram_value + tol - subset_value,
        upper_margin: SANDWICH_FACTOR * subset_value + tol - gram_value,
    })
}

/// Factors realizing `M = 1_S 1_S'^T` inside the Gram set, built from three
/// orthonormal vectors: `u_i = e0` on `S` and `e1` off it, `v_j = e0` on `S'`
/// and `e2` off it.
pub fn indicator_embedding(s: &SubsetMask, sp: &SubsetMask, rank: usize) -> Result<GramSolution, SdpError> {
    if rank < 3 {
        return Err(SdpError::RankTooSmall(rank));
    }
    if s.d() != sp.d() {
        return Err(SdpError::ShapeMismatch);
    }
    let basis = |k: usize| {
        let mut e = vec![0.0; rank];
        e[k] = 1.0;
        e
    };
    let u = (0..s.d())
        .map(|i| basis(if s.contains(i) { 0 } else { 1 }))
        .collect();
    let v = (0..sp.d())
        .map(|j| basis(if sp.contains(j) { 0 } else { 2 }))
        .collect();
    Ok(GramSolution {
        u_factors: u,
        v_factors: v,
        value: f64::NAN,
    })
}
