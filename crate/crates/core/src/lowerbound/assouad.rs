use serde::Serialize;

use super::LowerBoundError;
use crate::channel::{RapporChannel, MAX_ENUMERATED_D};
use crate::prob::{chi_square, make_prob_vector, tv_product_bound, ProbVector, MIN_ALPHABET};

/// Hypercube of distributions `p_s(j) = 1/d + s_j gamma` for `j < d/2`,
/// mirrored with the opposite sign, middle coordinate `1/d` when `d` is odd.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AssouadFamily {
    pub d: usize,
    pub n: usize,
    pub alpha: f64,
    pub c_gamma: f64,
    /// `min(c_gamma / (alpha sqrt(n)), c_gamma / d)`.
    pub gamma: f64,
}

pub fn assouad_family(d: usize, n: usize, alpha: f64, c_gamma: f64) -> Result<AssouadFamily, LowerBoundError> {
    if d < MIN_ALPHABET {
        return Err(LowerBoundError::BadParameter(format!("alphabet size {d} < 3")));
    }
    if !(c_gamma > 0.0 && c_gamma < 1.0) {
        return Err(LowerBoundError::BadParameter(format!("c_gamma {c_gamma} outside (0, 1)")));
    }
    if n == 0 || !(alpha > 0.0) {
        return Err(LowerBoundError::BadParameter("n and alpha must be positive".into()));
    }
    let gamma = (c_gamma / (alpha * (n as f64).sqrt())).min(c_gamma / d as f64);
    Ok(AssouadFamily {
        d,
        n,
        alpha,
        c_gamma,
        gamma,
    })
}

impl AssouadFamily {
    /// Length of the sign vectors indexing the family.
    pub fn half(&self) -> usize {
        self.d / 2
    }

    /// `log2` of the family size.
    pub fn log2_cardinality(&self) -> usize {
        self.half()
    }

    pub fn member(&self, signs: &[i8]) -> Result<ProbVector, LowerBoundError> {
        let h = self.half();
        if signs.len() != h {
            return Err(LowerBoundError::BadSigns {
                expected: h,
                got: signs.len(),
            });
        }
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(LowerBoundError::BadParameter("signs must be +1 or -1".into()));
        }
        let base = 1.0 / self.d as f64;
        let mut w = vec![base; self.d];
        for (j, &s) in signs.iter().enumerate() {
            w[j] = base + f64::from(s) * self.gamma;
            w[self.d - 1 - j] = base - f64::from(s) * self.gamma;
        }
        Ok(make_prob_vector(w)?)
    }
}

/// Hamming distance between two sign vectors.
pub fn hamming(a: &[i8], b: &[i8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NeighborChi2 {
    /// Flipped sign coordinate.
    pub coordinate: usize,
    pub forward: f64,
    pub backward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssouadChi2Report {
    pub pairs: Vec<NeighborChi2>,
    pub max_chi2: f64,
    /// `max_chi2 / (alpha^2 gamma^2)`.
    pub envelope_constant: f64,
    /// Largest `|forward - backward| / max(forward, backward)`.
    pub max_asymmetry: f64,
    /// `tv_product_bound(max_chi2, n)`.
    pub tv_bound_n: f64,
}

/// Exact chi-square divergences between the all-plus member and each of its
/// Hamming neighbors, in both directions.
pub fn assouad_chi2_check(family: &AssouadFamily, ch: &RapporChannel) -> Result<AssouadChi2Report, LowerBoundError> {
    if family.d > MAX_ENUMERATED_D {
        return Err(LowerBoundError::DimensionTooLarge {
            d: family.d,
            limit: MAX_ENUMERATED_D,
        });
    }
    if ch.d() != family.d {
        return Err(LowerBoundError::BadParameter(format!(
            "channel dimension {} differs from family dimension {}",
            ch.d(),
            family.d
        )));
    }
    let h = family.half();
    let base_signs = vec![1i8; h];
    let base = ch.output_dist(&family.member(&base_signs)?)?;
    let mut pairs = Vec::with_capacity(h);
    for i in 0..h {
        let mut signs = base_signs.clone();
        signs[i] = -1;
        let other = ch.output_dist(&family.member(&signs)?)?;
        pairs.push(NeighborChi2 {
            coordinate: i,
            forward: chi_square(&base, &other)?,
            backward: chi_square(&other, &base)?,
        });
    }
    let max_chi2 = pairs
        .iter()
        .map(|p| p.forward.max(p.backward))
        .fold(0.0, f64::max);
    let max_asymmetry = pairs
        .iter()
        .map(|p| {
            let top = p.forward.max(p.backward);
            if top > 0.0 {
                (p.forward - p.backward).abs() / top
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    let scale = family.alpha * family.alpha * family.gamma * family.gamma;
    Ok(AssouadChi2Report {
        envelope_constant: max_chi2 / scale,
        tv_bound_n: tv_product_bound(max_chi2, family.n as u64),
        pairs,
        max_chi2,
        max_asymmetry,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::{l1_dist, RngSeed};
    use rand::Rng;

    #[test]
    fn members_are_distributions() {
        let fam = assouad_family(7, 400, 1.0, 0.1).unwrap();
        assert_eq!(fam.log2_cardinality(), 3);
        let p = fam.member(&[1, -1, 1]).unwrap();
        assert_eq!(p.weights()[3], 1.0 / 7.0);
        assert!((p.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(matches!(fam.member(&[1, 1]), Err(LowerBoundError::BadSigns { expected: 3, got: 2 })));
    }

    #[test]
    fn gamma_rule() {
        let fam = assouad_family(6, 400, 1.0, 0.1).unwrap();
        assert!((fam.gamma - 0.1 / 20.0).abs() < 1e-18);
        let small_n = assouad_family(6, 4, 1.0, 0.1).unwrap();
        assert!((small_n.gamma - 0.1 / 6.0).abs() < 1e-18);
        assert!(assouad_family(6, 4, 1.0, 1.0).is_err());
    }

    #[test]
    fn l1_hamming_identity() {
        let mut rng = RngSeed::new(8).rng();
        for _ in 0..100 {
            let d = rng.random_range(3..=16);
            let fam = assouad_family(d, rng.random_range(1..10_000), 1.0, 0.3).unwrap();
            let h = fam.half();
            let draw = |rng: &mut crate::prob::SimRng| -> Vec<i8> {
                (0..h).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect()
            };
            let a = draw(&mut rng);
            let b = draw(&mut rng);
            let l1 = l1_dist(fam.member(&a).unwrap().weights(), fam.member(&b).unwrap().weights()).unwrap();
            let expected = 4.0 * fam.gamma * hamming(&a, &b) as f64;
            assert!((l1 - expected).abs() <= 1e-15, "{l1} vs {expected}");
        }
    }

    #[test]
    fn chi2_envelope_and_symmetry() {
        let fam = assouad_family(6, 400, 1.0, 0.1).unwrap();
        let ch = RapporChannel::new(6, 1.0).unwrap();
        let rep = assouad_chi2_check(&fam, &ch).unwrap();
        assert_eq!(rep.pairs.len(), 3);
        assert!(rep.envelope_constant <= 50.0, "{}", rep.envelope_constant);
        assert!(rep.max_asymmetry <= 0.1);
    }

    #[test]
    fn vanishing_gamma() {
        let ch = RapporChannel::new(6, 1.0).unwrap();
        let fam = assouad_family(6, 1_000_000_000_000, 1.0, 0.01).unwrap();
        let rep = assouad_chi2_check(&fam, &ch).unwrap();
        assert!(rep.max_chi2 < 1e-15);
    }
}
