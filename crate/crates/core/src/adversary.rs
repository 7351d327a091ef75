//! Contaminated batch collections: clean privatized batches, adversarial
//! replacements and the on-disk collection format.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{words_per_sample, ChannelError, PrivSample, RapporChannel};
use crate::lowerbound::HardPair;
use crate::prob::{ProbVector, RngSeed, SubsetMask};

/// Largest accepted contamination level (exclusive).
pub const MAX_EPS: f64 = 0.25;

const MAGIC: &[u8; 4] = b"LDPB";
const FORMAT_VERSION: u16 = 1;
const EPS_DENOMINATOR: u64 = 1_000_000_000;

const ADVERSARY_STREAM: u64 = 0x6164_7665_7273_6172;
const SHUFFLE_STREAM: u64 = 0x7368_7566_666c_6521;

#[derive(Debug, thiserror::Error)]
pub enum AdversaryError {
    #[error("expected dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("expected {expected} clean batches, got {got}")]
    CountMismatch { expected: usize, got: usize },
    #[error("contamination level {0} is outside [0, 1/4)")]
    EpsOutOfRange(f64),
    #[error("invalid attack parameters: {0}")]
    InvalidAttackParams(String),
    #[error("batch count and batch size must be positive")]
    EmptyCollection,
    #[error("not a collection file")]
    BadMagic,
    #[error("unsupported collection format version {0}")]
    UnsupportedVersion(u16),
    #[error("collection file is malformed: {0}")]
    Malformed(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ground-truth provenance of a batch, kept for evaluation only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Good,
    Adversarial,
}

/// `k` privatized samples of dimension `d`, stored packed and contiguous.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Batch {
    d: usize,
    k: usize,
    words: Vec<u64>,
}

impl Batch {
    pub fn from_samples(samples: &[PrivSample]) -> Result<Self, AdversaryError> {
        let first = samples.first().ok_or(AdversaryError::EmptyCollection)?;
        let d = first.d();
        let mut words = Vec::with_capacity(samples.len() * words_per_sample(d));
        for s in samples {
            if s.d() != d {
                return Err(AdversaryError::DimensionMismatch {
                    expected: d,
                    got: s.d(),
                });
            }
            words.extend_from_slice(s.words());
        }
        Ok(Self {
            d,
            k: samples.len(),
            words,
        })
    }

    pub(crate) fn from_words(d: usize, k: usize, words: Vec<u64>) -> Self {
        debug_assert_eq!(words.len(), k * words_per_sample(d));
        Self { d, k, words }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn sample(&self, i: usize) -> PrivSample {
        let w = words_per_sample(self.d);
        PrivSample::from_words(self.d, self.words[i * w..(i + 1) * w].to_vec())
    }

    pub fn samples(&self) -> Vec<PrivSample> {
        (0..self.k).map(|i| self.sample(i)).collect()
    }

    pub fn bit(&self, i: usize, j: usize) -> bool {
        let w = words_per_sample(self.d);
        self.words[i * w + j / 64] >> (j % 64) & 1 == 1
    }

    /// Number of samples with a 1 in each coordinate.
    pub fn coordinate_counts(&self) -> Vec<u64> {
        let w = words_per_sample(self.d);
        let mut counts = vec![0u64; self.d];
        for sample in self.words.chunks_exact(w) {
            for (wi, &word) in sample.iter().enumerate() {
                let mut bits = word;
                while bits != 0 {
                    counts[wi * 64 + bits.trailing_zeros() as usize] += 1;
                    bits &= bits - 1;
                }
            }
        }
        counts
    }

    /// SHA-256 of the batch shape and contents.
    pub fn content_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update((self.d as u64).to_le_bytes());
        h.update((self.k as u64).to_le_bytes());
        for w in &self.words {
            h.update(w.to_le_bytes());
        }
        h.finalize().into()
    }
}

/// Construction metadata carried with a collection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollectionMeta {
    pub eps: f64,
    pub seed: u64,
}

/// `n` batches of `k` samples each, with optional truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchCollection {
    d: usize,
    k: usize,
    batches: Vec<Batch>,
    truth: Option<Vec<Label>>,
    meta: CollectionMeta,
}

impl BatchCollection {
    /// Builds a collection from batches of equal shape.
    pub fn new(
        batches: Vec<Batch>,
        truth: Option<Vec<Label>>,
        meta: CollectionMeta,
    ) -> Result<Self, AdversaryError> {
        let first = batches.first().ok_or(AdversaryError::EmptyCollection)?;
        let (d, k) = (first.d, first.k);
        for b in &batches {
            if b.d != d {
                return Err(AdversaryError::DimensionMismatch { expected: d, got: b.d });
            }
            if b.k != k {
                return Err(AdversaryError::Malformed(format!(
                    "batch sizes differ ({} vs {})",
                    k, b.k
                )));
            }
        }
        if let Some(t) = &truth {
            if t.len() != batches.len() {
                return Err(AdversaryError::CountMismatch {
                    expected: batches.len(),
                    got: t.len(),
                });
            }
        }
        Ok(Self {
            d,
            k,
            batches,
            truth,
            meta,
        })
    }

    pub fn n(&self) -> usize {
        self.batches.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn batches(&self) -> &[Batch] {
        &self.batches
    }

    pub fn truth(&self) -> Option<&[Label]> {
        self.truth.as_deref()
    }

    pub fn meta(&self) -> CollectionMeta {
        self.meta
    }

    /// The same batches with truth labels removed.
    pub fn without_truth(&self) -> Self {
        Self {
            truth: None,
            ..self.clone()
        }
    }

    pub fn adversarial_count(&self) -> usize {
        self.truth
            .as_ref()
            .map_or(0, |t| t.iter().filter(|&&l| l == Label::Adversarial).count())
    }

    /// Reorders batches (and labels) so that position `i` holds old batch `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            d: self.d,
            k: self.k,
            batches: order.iter().map(|&i| self.batches[i].clone()).collect(),
            truth: self
                .truth
                .as_ref()
                .map(|t| order.iter().map(|&i| t[i]).collect()),
            meta: self.meta,
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), AdversaryError> {
        w.write_all(MAGIC)?;
        w.write_u16::<LittleEndian>(FORMAT_VERSION)?;
        let (num, den) = eps_fraction(self.meta.eps);
        for v in [self.n() as u64, self.k as u64, self.d as u64, num, den, self.meta.seed] {
            w.write_u64::<LittleEndian>(v)?;
        }
        let row = self.d.div_ceil(8);
        let mut buf = vec![0u8; row];
        for b in &self.batches {
            for i in 0..self.k {
                buf.fill(0);
                for j in 0..self.d {
                    if b.bit(i, j) {
                        buf[j / 8] |= 1 << (j % 8);
                    }
                }
                w.write_all(&buf)?;
            }
        }
        if let Some(t) = &self.truth {
            let bytes: Vec<u8> = t.iter().map(|&l| (l == Label::Adversarial) as u8).collect();
            w.write_all(&bytes)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to memory cannot fail");
        out
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, AdversaryError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(AdversaryError::BadMagic);
        }
        let version = r.read_u16::<LittleEndian>()?;
        if version != FORMAT_VERSION {
            return Err(AdversaryError::UnsupportedVersion(version));
        }
        let mut header = [0u64; 6];
        for v in header.iter_mut() {
            *v = r.read_u64::<LittleEndian>()?;
        }
        let [n, k, d, num, den, seed] = header.map(|v| v as usize);
        if n == 0 || k == 0 || d == 0 || den == 0 {
            return Err(AdversaryError::Malformed("zero in header".into()));
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        let row = d.div_ceil(8);
        let body = n
            .checked_mul(k)
            .and_then(|v| v.checked_mul(row))
            .ok_or_else(|| AdversaryError::Malformed("header sizes overflow".into()))?;
        let truth = if rest.len() == body {
            None
        } else if rest.len() == body + n {
            let labels = rest[body..]
                .iter()
                .map(|&b| match b {
                    0 => Ok(Label::Good),
                    1 => Ok(Label::Adversarial),
                    other => Err(AdversaryError::Malformed(format!("label byte {other}"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            Some(labels)
        } else {
            return Err(AdversaryError::Malformed(format!(
                "expected {} or {} payload bytes, found {}",
                body,
                body + n,
                rest.len()
            )));
        };
        let wps = words_per_sample(d);
        let batches = rest[..body]
            .chunks_exact(k * row)
            .map(|chunk| {
                let mut words = vec![0u64; k * wps];
                for (i, sample) in chunk.chunks_exact(row).enumerate() {
                    for (byte_index, &byte) in sample.iter().enumerate() {
                        for bit in 0..8 {
                            let j = byte_index * 8 + bit;
                            if byte >> bit & 1 == 1 {
                                if j >= d {
                                    return Err(AdversaryError::Malformed("padding bit set".into()));
                                }
                                words[i * wps + j / 64] |= 1 << (j % 64);
                            }
                        }
                    }
                }
                Ok(Batch::from_words(d, k, words))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let meta = CollectionMeta {
            eps: num as f64 / den as f64,
            seed: seed as u64,
        };
        Self::new(batches, truth, meta)
    }
}

/// `eps` rounded to nine decimals as a reduced fraction.
fn eps_fraction(eps: f64) -> (u64, u64) {
    let num = (eps * EPS_DENOMINATOR as f64).round() as u64;
    let g = num_integer::gcd(num, EPS_DENOMINATOR);
    (num / g, EPS_DENOMINATOR / g)
}

/// Number of adversarial batches among `n` at contamination level `eps`.
pub fn adversarial_count(n: usize, eps: f64) -> usize {
    // The small offset keeps products like 20 * 0.05 from rounding down.
    (n as f64 * eps + 1e-9).floor() as usize
}

/// Strategy used to fill adversarial batches.
#[derive(Debug, Clone, PartialEq)]
pub enum AttackSpec {
    AllOnes,
    AllZeros,
    SwapDistribution(ProbVector),
    TargetedSubset {
        subset: SubsetMask,
        direction: i8,
        magnitude: f64,
    },
    HardPairSwap(Box<HardPair>),
}

impl AttackSpec {
    /// Short identifier used in reports.
    pub fn name(&self) -> &'static str {
        match self {
            AttackSpec::AllOnes => "all_ones",
            AttackSpec::AllZeros => "all_zeros",
            AttackSpec::SwapDistribution(_) => "swap_distribution",
            AttackSpec::TargetedSubset { .. } => "targeted_subset",
            AttackSpec::HardPairSwap(_) => "hard_pair_swap",
        }
    }

    fn validate(&self, d: usize) -> Result<(), AdversaryError> {
        let bad = |m: String| Err(AdversaryError::InvalidAttackParams(m));
        match self {
            AttackSpec::AllOnes | AttackSpec::AllZeros => Ok(()),
            AttackSpec::SwapDistribution(q) if q.d() != d => {
                bad(format!("swap distribution has dimension {}, channel {}", q.d(), d))
            }
            AttackSpec::SwapDistribution(_) => Ok(()),
            AttackSpec::TargetedSubset {
                subset,
                direction,
                magnitude,
            } => {
                if subset.d() != d {
                    bad(format!("subset has dimension {}, channel {}", subset.d(), d))
                } else if *direction != 1 && *direction != -1 {
                    bad(format!("direction must be +1 or -1, got {direction}"))
                } else if !(0.0..=1.0).contains(magnitude) {
                    bad(format!("magnitude must lie in [0, 1], got {magnitude}"))
                } else {
                    Ok(())
                }
            }
            AttackSpec::HardPairSwap(pair) if pair.q.d() != d => {
                bad(format!("hard pair has dimension {}, channel {}", pair.q.d(), d))
            }
            AttackSpec::HardPairSwap(_) => Ok(()),
        }
    }
}

fn clean_batch_words<R: Rng + ?Sized>(
    ch: &RapporChannel,
    p: &ProbVector,
    k: usize,
    rng: &mut R,
) -> Vec<u64> {
    let wps = words_per_sample(ch.d());
    let sampler = p.sampler();
    let mut words = vec![0u64; k * wps];
    for chunk in words.chunks_exact_mut(wps) {
        let x = rand::distr::Distribution::sample(&sampler, rng);
        ch.privatize_into(x, rng, chunk);
    }
    words
}

fn attack_batch_words<R: Rng + ?Sized>(
    attack: &AttackSpec,
    ch: &RapporChannel,
    k: usize,
    rng: &mut R,
) -> Vec<u64> {
    let d = ch.d();
    let wps = words_per_sample(d);
    match attack {
        AttackSpec::AllZeros => vec![0u64; k * wps],
        AttackSpec::AllOnes => PrivSample::ones(d).words().repeat(k),
        AttackSpec::SwapDistribution(q) => clean_batch_words(ch, q, k, rng),
        AttackSpec::HardPairSwap(pair) => clean_batch_words(ch, &pair.q, k, rng),
        AttackSpec::TargetedSubset {
            subset,
            direction,
            magnitude,
        } => {
            let uniform = ProbVector::uniform(d).expect("channel alphabet is valid");
            let mut words = clean_batch_words(ch, &uniform, k, rng);
            let members = subset.indices();
            for chunk in words.chunks_exact_mut(wps) {
                for &j in &members {
                    if rng.random::<f64>() < *magnitude {
                        let mask = 1u64 << (j % 64);
                        if *direction > 0 {
                            chunk[j / 64] |= mask;
                        } else {
                            chunk[j / 64] &= !mask;
                        }
                    }
                }
            }
            words
        }
    }
}

/// One adversarial batch of `k` samples.
pub fn attack_batch<R: Rng + ?Sized>(
    attack: &AttackSpec,
    ch: &RapporChannel,
    k: usize,
    rng: &mut R,
) -> Result<Vec<PrivSample>, AdversaryError> {
    attack.validate(ch.d())?;
    let words = attack_batch_words(attack, ch, k, rng);
    Ok(Batch::from_words(ch.d(), k, words).samples())
}

/// `n_prime` clean batches of `k` privatized draws from `p`. Batch `i` draws
/// from stream `i` of `seed`.
pub fn make_clean_collection(
    ch: &RapporChannel,
    p: &ProbVector,
    n_prime: usize,
    k: usize,
    seed: RngSeed,
) -> Result<BatchCollection, AdversaryError> {
    if p.d() != ch.d() {
        return Err(AdversaryError::DimensionMismatch {
            expected: ch.d(),
            got: p.d(),
        });
    }
    if n_prime == 0 || k == 0 {
        return Err(AdversaryError::EmptyCollection);
    }
    let batches: Vec<Batch> = (0..n_prime)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed.stream(i as u64).rng();
            Batch::from_words(ch.d(), k, clean_batch_words(ch, p, k, &mut rng))
        })
        .collect();
    BatchCollection::new(
        batches,
        Some(vec![Label::Good; n_prime]),
        CollectionMeta {
            eps: 0.0,
            seed: seed.seed,
        },
    )
}

/// Appends `floor(n * eps)` adversarial batches to `clean` and shuffles
/// uniformly. Labels follow their batches.
pub fn contaminate(
    clean: &BatchCollection,
    attack: &AttackSpec,
    eps: f64,
    n: usize,
    ch: &RapporChannel,
    seed: RngSeed,
) -> Result<BatchCollection, AdversaryError> {
    if !(0.0..MAX_EPS).contains(&eps) {
        return Err(AdversaryError::EpsOutOfRange(eps));
    }
    if clean.d() != ch.d() {
        return Err(AdversaryError::DimensionMismatch {
            expected: ch.d(),
            got: clean.d(),
        });
    }
    attack.validate(ch.d())?;
    let n_adv = adversarial_count(n, eps);
    let expected = n.saturating_sub(n_adv);
    if clean.n() != expected {
        return Err(AdversaryError::CountMismatch {
            expected,
            got: clean.n(),
        });
    }
    let k = clean.k();
    let adv_seed = seed.derive(ADVERSARY_STREAM);
    let adversarial: Vec<Batch> = (0..n_adv)
        .into_par_iter()
        .map(|j| {
            let mut rng = adv_seed.stream(j as u64).rng();
            Batch::from_words(ch.d(), k, attack_batch_words(attack, ch, k, &mut rng))
        })
        .collect();

    let mut batches = clean.batches().to_vec();
    let mut labels = clean
        .truth()
        .map_or_else(|| vec![Label::Good; clean.n()], |t| t.to_vec());
    batches.extend(adversarial);
    labels.extend(std::iter::repeat_n(Label::Adversarial, n_adv));

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed.derive(SHUFFLE_STREAM).rng());
    let merged = BatchCollection::new(
        batches,
        Some(labels),
        CollectionMeta {
            eps,
            seed: seed.seed,
        },
    )?;
    Ok(merged.permuted(&order))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn channel(d: usize) -> RapporChannel {
        RapporChannel::new(d, 1.0).unwrap()
    }

    #[test]
    fn single_sample_collection() {
        let ch = channel(4);
        let p = ProbVector::new(vec![0.4, 0.3, 0.2, 0.1]).unwrap();
        let c = make_clean_collection(&ch, &p, 1, 1, RngSeed::new(3)).unwrap();
        assert_eq!((c.n(), c.k(), c.d()), (1, 1, 4));
        assert_eq!(c.truth().unwrap(), &[Label::Good]);
    }

    #[test]
    fn noiseless_point_mass() {
        let ch = RapporChannel::with_flip_probability(4, 0.0).unwrap();
        let p = ProbVector::point_mass(4, 0).unwrap();
        let c = make_clean_collection(&ch, &p, 5, 7, RngSeed::new(1)).unwrap();
        for b in c.batches() {
            for s in b.samples() {
                assert_eq!(s.bits(), vec![true, false, false, false]);
            }
        }
    }

    #[test]
    fn grand_mean_near_mean_response() {
        let ch = channel(5);
        let p = ProbVector::new(vec![0.3, 0.25, 0.2, 0.15, 0.1]).unwrap();
        let c = make_clean_collection(&ch, &p, 400, 50, RngSeed::new(17)).unwrap();
        let mut totals = vec![0u64; 5];
        for b in c.batches() {
            for (t, v) in totals.iter_mut().zip(b.coordinate_counts()) {
                *t += v;
            }
        }
        let q = ch.mean_response(&p).unwrap();
        for (t, qj) in totals.iter().zip(&q) {
            // sd <= 0.5 / sqrt(2e4) = 0.0035
            assert!((*t as f64 / 20_000.0 - qj).abs() < 0.02);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let ch = channel(5);
        let p = ProbVector::uniform(4).unwrap();
        assert!(matches!(
            make_clean_collection(&ch, &p, 3, 3, RngSeed::new(0)),
            Err(AdversaryError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn zero_eps_is_a_shuffle() {
        let ch = channel(5);
        let p = ProbVector::uniform(5).unwrap();
        let clean = make_clean_collection(&ch, &p, 10, 4, RngSeed::new(2)).unwrap();
        let mixed = contaminate(&clean, &AttackSpec::AllOnes, 0.0, 10, &ch, RngSeed::new(9)).unwrap();
        assert_eq!(mixed.adversarial_count(), 0);
        let mut a: Vec<_> = clean.batches().iter().map(Batch::content_hash).collect();
        let mut b: Vec<_> = mixed.batches().iter().map(Batch::content_hash).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }

    #[test]
    fn all_ones_contamination() {
        let ch = channel(5);
        let p = ProbVector::uniform(5).unwrap();
        let clean = make_clean_collection(&ch, &p, 18, 6, RngSeed::new(2)).unwrap();
        let mixed = contaminate(&clean, &AttackSpec::AllOnes, 0.1, 20, &ch, RngSeed::new(4)).unwrap();
        assert_eq!(mixed.n(), 20);
        assert_eq!(mixed.adversarial_count(), 2);
        for (b, l) in mixed.batches().iter().zip(mixed.truth().unwrap()) {
            if *l == Label::Adversarial {
                assert!(b.samples().iter().all(|s| s.bits() == vec![true; 5]));
            }
        }
        assert!(matches!(
            contaminate(&clean, &AttackSpec::AllOnes, 0.1, 21, &ch, RngSeed::new(4)),
            Err(AdversaryError::CountMismatch { expected: 19, got: 18 })
        ));
        assert!(matches!(
            contaminate(&clean, &AttackSpec::AllOnes, 0.25, 20, &ch, RngSeed::new(4)),
            Err(AdversaryError::EpsOutOfRange(_))
        ));
    }

    #[test]
    fn attack_batches() {
        let ch = channel(4);
        let mut rng = RngSeed::new(5).rng();
        let zeros = attack_batch(&AttackSpec::AllZeros, &ch, 3, &mut rng).unwrap();
        assert_eq!(zeros.len(), 3);
        assert!(zeros.iter().all(|s| s.weight() == 0));

        let s = SubsetMask::from_indices(4, &[1, 3]);
        let forced = AttackSpec::TargetedSubset {
            subset: s.clone(),
            direction: 1,
            magnitude: 1.0,
        };
        for z in attack_batch(&forced, &ch, 50, &mut rng).unwrap() {
            assert!(z.get(1) && z.get(3));
        }
        let cleared = AttackSpec::TargetedSubset {
            subset: s.clone(),
            direction: -1,
            magnitude: 1.0,
        };
        for z in attack_batch(&cleared, &ch, 50, &mut rng).unwrap() {
            assert!(!z.get(1) && !z.get(3));
        }
        let bad = AttackSpec::TargetedSubset {
            subset: s,
            direction: 1,
            magnitude: 1.5,
        };
        assert!(matches!(
            attack_batch(&bad, &ch, 2, &mut rng),
            Err(AdversaryError::InvalidAttackParams(_))
        ));
        let wrong_dim = AttackSpec::SwapDistribution(ProbVector::uniform(3).unwrap());
        assert!(attack_batch(&wrong_dim, &ch, 2, &mut rng).is_err());
    }

    #[test]
    fn swap_uniform_matches_clean_generation() {
        // Two-sample chi-square on the output histogram over 2^4 patterns.
        let ch = channel(4);
        let u = ProbVector::uniform(4).unwrap();
        let n = 40_000;
        let swap = attack_batch(&AttackSpec::SwapDistribution(u.clone()), &ch, n, &mut RngSeed::new(1).rng()).unwrap();
        let clean = make_clean_collection(&ch, &u, 1, n, RngSeed::new(2)).unwrap();
        let mut h1 = [0f64; 16];
        let mut h2 = [0f64; 16];
        for s in swap {
            h1[s.words()[0] as usize] += 1.0;
        }
        for s in clean.batches()[0].samples() {
            h2[s.words()[0] as usize] += 1.0;
        }
        let stat: f64 = h1
            .iter()
            .zip(&h2)
            .filter(|(a, b)| *a + *b > 0.0)
            .map(|(a, b)| (a - b).powi(2) / (a + b))
            .sum();
        // 15 degrees of freedom, 0.999 quantile.
        assert!(stat < 37.7, "chi-square statistic {stat}");
    }

    #[test]
    fn shuffle_is_uniform() {
        let ch = channel(3);
        let p = ProbVector::uniform(3).unwrap();
        let clean = make_clean_collection(&ch, &p, 5, 8, RngSeed::new(0)).unwrap();
        let ids: Vec<_> = clean.batches().iter().map(Batch::content_hash).collect();
        let trials = 10_000;
        let mut freq: HashMap<Vec<usize>, usize> = HashMap::new();
        for t in 0..trials {
            let mixed = contaminate(&clean, &AttackSpec::AllOnes, 0.0, 5, &ch, RngSeed::new(t)).unwrap();
            let perm: Vec<usize> = mixed
                .batches()
                .iter()
                .map(|b| ids.iter().position(|h| *h == b.content_hash()).unwrap())
                .collect();
            *freq.entry(perm).or_default() += 1;
        }
        assert_eq!(freq.len(), 120);
        let mean = trials as f64 / 120.0;
        let sd = (trials as f64 * (1.0 / 120.0) * (119.0 / 120.0)).sqrt();
        for &c in freq.values() {
            assert!((c as f64 - mean).abs() <= 4.0 * sd);
        }
    }

    #[test]
    fn binary_round_trip() {
        for d in [3, 8, 9, 70] {
            let ch = channel(d);
            let p = ProbVector::uniform(d).unwrap();
            let clean = make_clean_collection(&ch, &p, 19, 5, RngSeed::new(d as u64)).unwrap();
            let mixed = contaminate(&clean, &AttackSpec::AllOnes, 0.05, 20, &ch, RngSeed::new(1)).unwrap();
            for c in [mixed.clone(), mixed.without_truth()] {
                let bytes = c.to_bytes();
                let back = BatchCollection::read_from(bytes.as_slice()).unwrap();
                assert_eq!(back, c);
                assert_eq!(back.to_bytes(), bytes);
            }
        }
    }

    #[test]
    fn malformed_files_rejected() {
        let ch = channel(4);
        let p = ProbVector::uniform(4).unwrap();
        let c = make_clean_collection(&ch, &p, 3, 2, RngSeed::new(0)).unwrap();
        let bytes = c.to_bytes();
        assert!(matches!(
            BatchCollection::read_from(&b"XXXX"[..]),
            Err(AdversaryError::BadMagic)
        ));
        let mut truncated = bytes.clone();
        truncated.truncate(bytes.len() - 4);
        assert!(BatchCollection::read_from(truncated.as_slice()).is_err());
        let mut bad_label = bytes.clone();
        *bad_label.last_mut().unwrap() = 7;
        assert!(BatchCollection::read_from(bad_label.as_slice()).is_err());
    }

    #[test]
    fn adversarial_count_rounds_down() {
        assert_eq!(adversarial_count(20, 0.1), 2);
        assert_eq!(adversarial_count(20, 0.05), 1);
        assert_eq!(adversarial_count(19, 0.1), 1);
        assert_eq!(adversarial_count(2000, 0.05), 100);
        assert_eq!(adversarial_count(10, 0.0), 0);
    }
}
