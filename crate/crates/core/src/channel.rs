//! The RAPPOR privatization channel.
//!
//! A symbol `x` in `0..d` is one-hot encoded and every coordinate is flipped
//! independently with probability `lambda = 1 / (exp(alpha / 2) + 1)`. The
//! channel is `alpha`-locally differentially private.

use rand::Rng;
use serde::Serialize;

use crate::prob::{FiniteDist, ProbError, ProbVector, SubsetMask, MIN_ALPHABET};

/// Largest alphabet the packed sample representation supports.
pub const MAX_ALPHABET: usize = 4096;
/// Largest privacy budget accepted. Budgets above 1 are exploratory.
pub const MAX_ALPHA: f64 = 2.0;
/// Largest alphabet for which output distributions are enumerated exactly.
pub const MAX_ENUMERATED_D: usize = 16;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChannelError {
    #[error("privacy budget must be positive, got {0}")]
    NonPositiveAlpha(f64),
    #[error("privacy budget {0} exceeds the supported maximum of 2")]
    AlphaOutOfRange(f64),
    #[error("flip probability {0} is outside [0, 1/2]")]
    BadFlipProbability(f64),
    #[error("alphabet size {0} is outside 3..=4096")]
    BadAlphabet(usize),
    #[error("alphabet size {d} exceeds the enumeration limit {limit}")]
    DimensionTooLarge { d: usize, limit: usize },
    #[error("symbol {symbol} is outside 0..{d}")]
    SymbolOutOfRange { symbol: usize, d: usize },
    #[error("expected a vector of length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("subset is empty")]
    EmptySubset,
    #[error(transparent)]
    Prob(#[from] ProbError),
}

/// Flip probability `1 / (exp(alpha / 2) + 1)`.
pub fn lambda_of_alpha(alpha: f64) -> Result<f64, ChannelError> {
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(ChannelError::NonPositiveAlpha(alpha));
    }
    Ok(1.0 / ((0.5 * alpha).exp() + 1.0))
}

/// Number of `u64` words holding one packed sample of dimension `d`.
pub fn words_per_sample(d: usize) -> usize {
    d.div_ceil(64)
}

/// One privatized observation `Z` in `{0,1}^d`, packed 64 coordinates per word.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PrivSample {
    d: usize,
    words: Vec<u64>,
}

impl PrivSample {
    pub fn from_words(d: usize, words: Vec<u64>) -> Self {
        debug_assert_eq!(words.len(), words_per_sample(d));
        Self { d, words }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let d = bits.len();
        let mut words = vec![0u64; words_per_sample(d)];
        for (j, &b) in bits.iter().enumerate() {
            if b {
                words[j / 64] |= 1 << (j % 64);
            }
        }
        Self { d, words }
    }

    pub fn zeros(d: usize) -> Self {
        Self::from_bits(&vec![false; d])
    }

    pub fn ones(d: usize) -> Self {
        Self::from_bits(&vec![true; d])
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn get(&self, j: usize) -> bool {
        self.words[j / 64] >> (j % 64) & 1 == 1
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn bits(&self) -> Vec<bool> {
        (0..self.d).map(|j| self.get(j)).collect()
    }

    /// Number of coordinates equal to 1.
    pub fn weight(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }
}

/// The RAPPOR channel over an alphabet of size `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RapporChannel {
    d: usize,
    alpha: f64,
    lambda: f64,
}

impl RapporChannel {
    pub fn new(d: usize, alpha: f64) -> Result<Self, ChannelError> {
        check_alphabet(d)?;
        let lambda = lambda_of_alpha(alpha)?;
        if alpha > MAX_ALPHA {
            return Err(ChannelError::AlphaOutOfRange(alpha));
        }
        Ok(Self { d, alpha, lambda })
    }

    /// A channel with an explicit flip probability in `[0, 1/2]`.
    ///
    /// This bypasses the budget restriction and is meant for tests that need
    /// the noiseless (`lambda = 0`) or fully randomized (`lambda = 1/2`) limit.
    pub fn with_flip_probability(d: usize, lambda: f64) -> Result<Self, ChannelError> {
        check_alphabet(d)?;
        if !(0.0..=0.5).contains(&lambda) {
            return Err(ChannelError::BadFlipProbability(lambda));
        }
        let alpha = 2.0 * ((1.0 - lambda) / lambda).ln();
        Ok(Self { d, alpha, lambda })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// True when the budget lies outside the `(0, 1]` range covered by the
    /// theoretical guarantees.
    pub fn is_exploratory(&self) -> bool {
        self.alpha > 1.0
    }

    fn flip_threshold(&self) -> u64 {
        // Compared against a uniform u64; saturates at lambda = 1.
        (self.lambda * 18_446_744_073_709_551_616.0) as u64
    }

    fn check_symbol(&self, x: usize) -> Result<(), ChannelError> {
        if x >= self.d {
            return Err(ChannelError::SymbolOutOfRange { symbol: x, d: self.d });
        }
        Ok(())
    }

    fn check_len(&self, len: usize) -> Result<(), ChannelError> {
        if len != self.d {
            return Err(ChannelError::DimensionMismatch {
                expected: self.d,
                got: len,
            });
        }
        Ok(())
    }

    /// Writes the privatization of `x` into `out` (`words_per_sample(d)` words).
    pub(crate) fn privatize_into<R: Rng + ?Sized>(&self, x: usize, rng: &mut R, out: &mut [u64]) {
        let thr = self.flip_threshold();
        for (w, word) in out.iter_mut().enumerate() {
            let width = (self.d - 64 * w).min(64);
            let mut bits = 0u64;
            for b in 0..width {
                if rng.next_u64() < thr {
                    bits |= 1 << b;
                }
            }
            *word = bits;
        }
        out[x / 64] ^= 1 << (x % 64);
    }

    pub fn privatize<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> Result<PrivSample, ChannelError> {
        self.check_symbol(x)?;
        let mut words = vec![0u64; words_per_sample(self.d)];
        self.privatize_into(x, rng, &mut words);
        Ok(PrivSample { d: self.d, words })
    }

    pub fn privatize_batch<R: Rng + ?Sized>(
        &self,
        xs: &[usize],
        rng: &mut R,
    ) -> Result<Vec<PrivSample>, ChannelError> {
        xs.iter().map(|&x| self.privatize(x, rng)).collect()
    }

    /// `q = (1 - 2 lambda) p + lambda 1`, the mean of a privatized sample.
    pub fn mean_response(&self, p: &ProbVector) -> Result<Vec<f64>, ChannelError> {
        self.check_len(p.d())?;
        let scale = 1.0 - 2.0 * self.lambda;
        Ok(p.weights().iter().map(|&pj| scale * pj + self.lambda).collect())
    }

    /// `(qhat - lambda 1) / (1 - 2 lambda)`, the inverse of [`Self::mean_response`].
    /// The result need not be a probability vector.
    pub fn invert_mean(&self, qhat: &[f64]) -> Result<Vec<f64>, ChannelError> {
        self.check_len(qhat.len())?;
        let scale = 1.0 - 2.0 * self.lambda;
        Ok(qhat.iter().map(|&q| (q - self.lambda) / scale).collect())
    }

    /// Draws `sum_{j in S} Z(j)` through its closed-form law: `|S| - 1`
    /// Bernoulli(lambda) variables plus one Bernoulli(lambda + (1 - 2 lambda) p(S)).
    pub fn subset_sum_law_sample<R: Rng + ?Sized>(
        &self,
        p: &ProbVector,
        s: &SubsetMask,
        rng: &mut R,
    ) -> Result<usize, ChannelError> {
        self.check_len(p.d())?;
        self.check_len(s.d())?;
        let size = s.size();
        if size == 0 {
            return Err(ChannelError::EmptySubset);
        }
        let ps = crate::prob::subset_mass(p.weights(), s)?;
        let head = (1..size).filter(|_| rng.random::<f64>() < self.lambda).count();
        let tail = rng.random::<f64>() < self.lambda + (1.0 - 2.0 * self.lambda) * ps;
        Ok(head + tail as usize)
    }

    /// Worst-case likelihood ratio `Q(z|x) / Q(z|x')` over inputs and outputs.
    pub fn ldp_ratio_check(&self) -> f64 {
        // Changing the input moves the Hamming distance to z by at most 2,
        // so the worst ratio is ((1 - lambda) / lambda)^2.
        ((1.0 - self.lambda) / self.lambda).powi(2)
    }

    /// `Q(z | x)` for an output given as a bit mask (`d <= 64`).
    pub fn likelihood(&self, z: u64, x: usize) -> f64 {
        let flips = (z ^ (1u64 << x)).count_ones() as i32;
        self.lambda.powi(flips) * (1.0 - self.lambda).powi(self.d as i32 - flips)
    }

    /// The exact law of one privatized sample under `p`; outcome `z` is the
    /// bit mask of the output. Requires `d <= 16`.
    pub fn output_dist(&self, p: &ProbVector) -> Result<FiniteDist, ChannelError> {
        self.check_len(p.d())?;
        if self.d > MAX_ENUMERATED_D {
            return Err(ChannelError::DimensionTooLarge {
                d: self.d,
                limit: MAX_ENUMERATED_D,
            });
        }
        let masses = (0..1u64 << self.d)
            .map(|z| {
                p.weights()
                    .iter()
                    .enumerate()
                    .map(|(x, &px)| px * self.likelihood(z, x))
                    .sum()
            })
            .collect();
        Ok(FiniteDist::indexed(masses)?)
    }
}

fn check_alphabet(d: usize) -> Result<(), ChannelError> {
    if !(MIN_ALPHABET..=MAX_ALPHABET).contains(&d) {
        return Err(ChannelError::BadAlphabet(d));
    }
    Ok(())
}
