use serde::Serialize;

use super::{HardPair, LowerBoundError};
use crate::channel::RapporChannel;
use crate::prob::FiniteDist;

/// Largest product space `(2^d)^k`, in bits, that is enumerated.
pub const MAX_PRODUCT_BITS: usize = 20;

/// The measure `A` and the two noise measures realizing
/// `(1 - eps) P + eps N_p = A = (1 - eps) Q + eps N_q` on `k`-fold outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommonMixture {
    pub a: FiniteDist,
    pub n_p: FiniteDist,
    pub n_q: FiniteDist,
    pub tv: f64,
    /// Largest outcome-wise residual of either mixture identity.
    pub residual: f64,
    /// Smallest mass of `N_p` or `N_q` before clamping.
    pub min_mass: f64,
    /// Largest deviation of a total mass from 1.
    pub sum_defect: f64,
}

/// Law of `k` iid outputs; outcome `z_1 | z_2 << d | ...`.
fn product_law(single: &[f64], k: usize) -> Vec<f64> {
    let mut law = vec![1.0];
    for _ in 0..k {
        let mut next = Vec::with_capacity(law.len() * single.len());
        for &s in single {
            next.extend(law.iter().map(|l| l * s));
        }
        law = next;
    }
    law
}

pub fn common_mixture(pair: &HardPair, ch: &RapporChannel, k: usize) -> Result<CommonMixture, LowerBoundError> {
    let d = ch.d();
    let bits = d * k;
    if bits > MAX_PRODUCT_BITS {
        return Err(LowerBoundError::ProductSpaceTooLarge {
            bits,
            limit: MAX_PRODUCT_BITS,
        });
    }
    let eps = pair.eps;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(LowerBoundError::EpsOutOfRange(eps));
    }
    let pk = product_law(ch.output_dist(&pair.p)?.masses(), k);
    let qk = product_law(ch.output_dist(&pair.q)?.masses(), k);
    let tv = 0.5 * pk.iter().zip(&qk).map(|(a, b)| (a - b).abs()).sum::<f64>();
    let a: Vec<f64> = pk.iter().zip(&qk).map(|(x, y)| x.max(*y) / (1.0 + tv)).collect();
    let noise = |base: &[f64]| -> Vec<f64> {
        a.iter().zip(base).map(|(av, b)| (av - (1.0 - eps) * b) / eps).collect()
    };
    let n_p = noise(&pk);
    let n_q = noise(&qk);
    let mut residual: f64 = 0.0;
    for i in 0..a.len() {
        residual = residual
            .max(((1.0 - eps) * pk[i] + eps * n_p[i] - a[i]).abs())
            .max(((1.0 - eps) * qk[i] + eps * n_q[i] - a[i]).abs());
    }
    let min_mass = n_p.iter().chain(&n_q).copied().fold(f64::INFINITY, f64::min);
    let sum_defect = [&a, &n_p, &n_q]
        .iter()
        .map(|v| (v.iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(CommonMixture {
        a: FiniteDist::indexed(a)?,
        n_p: FiniteDist::indexed(n_p)?,
        n_q: FiniteDist::indexed(n_q)?,
        tv,
        residual,
        min_mass,
        sum_defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lowerbound::{hard_pair, omega_matrix, DeltaScaling};
    use crate::prob::{ProbVector, RngSeed};

    #[test]
    fn product_law_is_a_distribution() {
        let law = product_law(&[0.2, 0.3, 0.5, 0.0], 3);
        assert_eq!(law.len(), 64);
        assert!((law.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        // Outcome (z1, z2, z3) = (1, 2, 0) sits at 1 + 2 * 4 + 0 * 16.
        assert!((law[1 + 2 * 4] - 0.3 * 0.5 * 0.2).abs() < 1e-16);
    }

    #[test]
    fn degenerate_pair() {
        let ch = RapporChannel::new(3, 1.0).unwrap();
        let om = omega_matrix(&ch).unwrap();
        let p = ProbVector::new(vec![0.5, 0.3, 0.2]).unwrap();
        let pair = HardPair::from_distributions(&ch, p.clone(), p, 0.1, 2, &om).unwrap();
        let mix = common_mixture(&pair, &ch, 2).unwrap();
        assert_eq!(mix.tv, 0.0);
        for ((a, np), nq) in mix.a.masses().iter().zip(mix.n_p.masses()).zip(mix.n_q.masses()) {
            assert!((a - np).abs() < 1e-15 && (a - nq).abs() < 1e-15);
        }
    }

    #[test]
    fn genuine_pair_feasibility() {
        let ch = RapporChannel::new(3, 1.0).unwrap();
        let pair = hard_pair(&ch, 0.1, 2, 2000, DeltaScaling::Tight, RngSeed::new(5)).unwrap();
        let mix = common_mixture(&pair, &ch, 2).unwrap();
        assert_eq!(mix.a.len(), 64);
        assert!(mix.tv <= pair.eps);
        assert!(mix.residual <= 1e-12);
        assert!(mix.min_mass >= -1e-12);
        assert!(mix.sum_defect <= 1e-10);
    }

    #[test]
    fn size_guard() {
        let ch = RapporChannel::new(6, 1.0).unwrap();
        let om = omega_matrix(&ch).unwrap();
        let u = ProbVector::uniform(6).unwrap();
        let pair = HardPair::from_distributions(&ch, u.clone(), u, 0.1, 4, &om).unwrap();
        assert!(matches!(
            common_mixture(&pair, &ch, 4),
            Err(LowerBoundError::ProductSpaceTooLarge { bits: 24, .. })
        ));
    }
}
