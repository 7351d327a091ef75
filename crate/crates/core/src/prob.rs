//! Probability vectors, finite distributions, divergences and seeded
//! random streams.
//!
//! Symbols are 0-based throughout the crate: a distribution over an alphabet
//! of size `d` puts mass on `0..d`.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Tolerance accepted on the total mass when building a vector or distribution.
pub const CONSTRUCTION_TOL: f64 = 1e-9;
/// Tolerance on the total mass of an already validated vector.
pub const INVARIANT_TOL: f64 = 1e-12;
/// Entries down to this value are treated as rounding noise and clamped to 0.
pub const NEGATIVE_SLACK: f64 = 1e-12;

/// Smallest alphabet the estimators and lower-bound constructions accept.
pub const MIN_ALPHABET: usize = 3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProbError {
    #[error("alphabet size {0} is below the minimum of 3")]
    TooSmallAlphabet(usize),
    #[error("entry {index} has negative mass {value}")]
    NegativeMass { index: usize, value: f64 },
    #[error("masses sum to {0}, not 1")]
    NotNormalized(f64),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("distributions are defined over different outcome sets")]
    OutcomeMismatch,
    #[error("outcome {0} appears more than once")]
    DuplicateOutcome(u64),
}

/// A probability vector over `0..d` with `d >= 3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbVector {
    weights: Vec<f64>,
}

impl ProbVector {
    /// Validates `weights`, clamps rounding-level negatives to zero and
    /// renormalizes.
    pub fn new(weights: Vec<f64>) -> Result<Self, ProbError> {
        make_prob_vector(weights)
    }

    pub fn uniform(d: usize) -> Result<Self, ProbError> {
        make_prob_vector(vec![1.0 / d as f64; d])
    }

    pub fn point_mass(d: usize, symbol: usize) -> Result<Self, ProbError> {
        let mut w = vec![0.0; d];
        if symbol >= d {
            return Err(ProbError::LengthMismatch(symbol + 1, d));
        }
        w[symbol] = 1.0;
        make_prob_vector(w)
    }

    pub fn d(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.weights
    }

    /// Categorical sampler over `0..d`.
    pub fn sampler(&self) -> WeightedIndex<f64> {
        WeightedIndex::new(&self.weights).expect("validated probability vector")
    }

    /// Views the vector as a finite distribution with outcomes `0..d`.
    pub fn to_finite_dist(&self) -> FiniteDist {
        FiniteDist {
            outcomes: (0..self.d() as u64).collect(),
            masses: self.weights.clone(),
        }
    }
}

impl TryFrom<Vec<f64>> for ProbVector {
    type Error = ProbError;
    fn try_from(value: Vec<f64>) -> Result<Self, Self::Error> {
        make_prob_vector(value)
    }
}

impl From<ProbVector> for Vec<f64> {
    fn from(p: ProbVector) -> Self {
        p.weights
    }
}

impl AsRef<[f64]> for ProbVector {
    fn as_ref(&self) -> &[f64] {
        &self.weights
    }
}

pub fn make_prob_vector(mut weights: Vec<f64>) -> Result<ProbVector, ProbError> {
    if weights.len() < MIN_ALPHABET {
        return Err(ProbError::TooSmallAlphabet(weights.len()));
    }
    let sum = clamp_and_sum(&mut weights)?;
    if !sum.is_finite() || (sum - 1.0).abs() > CONSTRUCTION_TOL {
        return Err(ProbError::NotNormalized(sum));
    }
    for w in &mut weights {
        *w /= sum;
    }
    Ok(ProbVector { weights })
}

fn clamp_and_sum(masses: &mut [f64]) -> Result<f64, ProbError> {
    let mut sum = 0.0;
    for (index, w) in masses.iter_mut().enumerate() {
        if w.is_nan() || *w < -NEGATIVE_SLACK {
            return Err(ProbError::NegativeMass { index, value: *w });
        }
        if *w < 0.0 {
            *w = 0.0;
        }
        sum += *w;
    }
    Ok(sum)
}

/// A distribution over a finite set of opaque outcome identifiers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteDist {
    outcomes: Vec<u64>,
    masses: Vec<f64>,
}

impl FiniteDist {
    /// Builds a distribution. Negative masses down to `-1e-12` are clamped to
    /// zero; masses are not renormalized.
    pub fn new(outcomes: Vec<u64>, mut masses: Vec<f64>) -> Result<Self, ProbError> {
        if outcomes.len() != masses.len() {
            return Err(ProbError::LengthMismatch(outcomes.len(), masses.len()));
        }
        let mut sorted = outcomes.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(ProbError::DuplicateOutcome(w[0]));
        }
        let sum = clamp_and_sum(&mut masses)?;
        if !sum.is_finite() || (sum - 1.0).abs() > CONSTRUCTION_TOL {
            return Err(ProbError::NotNormalized(sum));
        }
        Ok(Self { outcomes, masses })
    }

    /// Outcomes `0..masses.len()`.
    pub fn indexed(masses: Vec<f64>) -> Result<Self, ProbError> {
        Self::new((0..masses.len() as u64).collect(), masses)
    }

    pub fn outcomes(&self) -> &[u64] {
        &self.outcomes
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    fn check_same_support(&self, other: &FiniteDist) -> Result<(), ProbError> {
        if self.outcomes != other.outcomes {
            return Err(ProbError::OutcomeMismatch);
        }
        Ok(())
    }
}

/// Indicator of a subset `S` of `0..d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SubsetMask {
    bits: Vec<bool>,
}

impl SubsetMask {
    pub fn empty(d: usize) -> Self {
        Self { bits: vec![false; d] }
    }

    pub fn full(d: usize) -> Self {
        Self { bits: vec![true; d] }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    /// Panics if an index is `>= d`.
    pub fn from_indices(d: usize, members: &[usize]) -> Self {
        let mut bits = vec![false; d];
        for &j in members {
            bits[j] = true;
        }
        Self { bits }
    }

    /// Low `d` bits of `word`, bit `j` for coordinate `j`. Requires `d <= 64`.
    pub fn from_word(d: usize, word: u64) -> Self {
        debug_assert!(d <= 64);
        Self {
            bits: (0..d).map(|j| word >> j & 1 == 1).collect(),
        }
    }

    pub fn d(&self) -> usize {
        self.bits.len()
    }

    /// Number of members `|S|`.
    pub fn size(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    pub fn contains(&self, j: usize) -> bool {
        self.bits[j]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn indices(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(j, &b)| b.then_some(j))
            .collect()
    }

    pub fn complement(&self) -> Self {
        Self {
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    /// The 0/1 vector `1_S`.
    pub fn indicator(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

impl Serialize for SubsetMask {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.indices().serialize(serializer)
    }
}

/// A master seed plus a stream index. Equal values always produce identical
/// random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed {
    pub seed: u64,
    pub stream_index: u64,
}

/// The generator behind every [`RngSeed`].
pub type SimRng = ChaCha8Rng;

impl RngSeed {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            stream_index: 0,
        }
    }

    /// Same seed, different stream.
    pub fn stream(self, stream_index: u64) -> Self {
        Self {
            seed: self.seed,
            stream_index,
        }
    }

    /// A child seed for an independent purpose, identified by `label`.
    pub fn derive(self, label: u64) -> Self {
        let mixed = splitmix64(
            self.seed ^ splitmix64(self.stream_index ^ 0xA076_1D64_78BD_642F) ^ splitmix64(label),
        );
        Self::new(mixed)
    }

    pub fn rng(self) -> SimRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_index);
        rng
    }
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `sum_j |p_j - q_j|`.
pub fn l1_dist(p: &[f64], q: &[f64]) -> Result<f64, ProbError> {
    if p.len() != q.len() {
        return Err(ProbError::LengthMismatch(p.len(), q.len()));
    }
    Ok(p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum())
}

/// Total variation distance, half the l1 distance of the mass vectors.
pub fn tv(p: &FiniteDist, q: &FiniteDist) -> Result<f64, ProbError> {
    p.check_same_support(q)?;
    Ok(0.5 * l1_dist(&p.masses, &q.masses)?)
}

/// Chi-square divergence `chi2(p || q)`. Returns `f64::INFINITY` when `p` puts
/// mass on an outcome that `q` does not charge.
pub fn chi_square(p: &FiniteDist, q: &FiniteDist) -> Result<f64, ProbError> {
    p.check_same_support(q)?;
    let mut total = 0.0;
    for (&a, &b) in p.masses.iter().zip(&q.masses) {
        if b > 0.0 {
            total += (a - b) * (a - b) / b;
        } else if a > 0.0 {
            return Ok(f64::INFINITY);
        }
    }
    Ok(total)
}

/// `sum_{j in S} v_j`.
pub fn subset_mass(v: &[f64], s: &SubsetMask) -> Result<f64, ProbError> {
    if v.len() != s.d() {
        return Err(ProbError::LengthMismatch(v.len(), s.d()));
    }
    Ok(v.iter().zip(s.bits()).filter(|(_, &b)| b).map(|(x, _)| x).sum())
}

/// `max_S |a(S) - b(S)|` with an attaining set, for arbitrary real vectors.
///
/// The maximum is attained either on `{j : a_j > b_j}` or on its complement,
/// so this runs in `O(d)`. Ties, up to rounding, go to the first set.
pub fn max_subset_deviation(a: &[f64], b: &[f64]) -> Result<(f64, SubsetMask), ProbError> {
    if a.len() != b.len() {
        return Err(ProbError::LengthMismatch(a.len(), b.len()));
    }
    let bits: Vec<bool> = a.iter().zip(b).map(|(x, y)| x > y).collect();
    let (mut above, mut below) = (0.0, 0.0);
    for ((x, y), &up) in a.iter().zip(b).zip(&bits) {
        if up {
            above += x - y;
        } else {
            below += y - x;
        }
    }
    let set = SubsetMask::from_bits(bits);
    if above + 1e-12 >= below {
        Ok((above, set))
    } else {
        Ok((below, set.complement()))
    }
}

/// `max_S |p(S) - v(S)|` for a probability vector `p` and any real `v`, with
/// an attaining set. The value `g` satisfies `g <= ||p - v||_1 <= 2 g`.
pub fn sup_subset_gap(p: &ProbVector, v: &[f64]) -> Result<(f64, SubsetMask), ProbError> {
    max_subset_deviation(p.weights(), v)
}

/// `count` iid draws from `p`.
pub fn sample_categorical<R: Rng + ?Sized>(p: &ProbVector, count: usize, rng: &mut R) -> Vec<usize> {
    if count == 0 {
        return Vec::new();
    }
    let sampler = p.sampler();
    (0..count).map(|_| sampler.sample(rng)).collect()
}

/// Upper bound `sqrt((1 + chi2)^k - 1)` on the total variation between
/// k-fold products, clamped at 1.
pub fn tv_product_bound(chi2_single: f64, k: u64) -> f64 {
    if chi2_single.is_infinite() {
        return 1.0;
    }
    let excess = (k as f64 * chi2_single.ln_1p()).exp_m1();
    excess.max(0.0).sqrt().min(1.0)
}
