//! Certificate and self-check reports emitted by the command line tool.

use ldp_robust::lowerbound::{
    assouad_chi2_check, assouad_family, common_mixture, hamming, hard_pair, AssouadChi2Report, AssouadFamily,
    DeltaScaling, HardPair, HardPairChecks,
};
use ldp_robust::prob::{l1_dist, RngSeed};
use ldp_robust::sdp::{gram_maximize, sandwich_check, GramConfig, SymMatrix};
use ldp_robust::RapporChannel;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::HarnessError;

const MATRIX_STREAM: u64 = 0x6d61_7472_6978;
const SOLVER_STREAM: u64 = 0x736f_6c76_6572;
const SIGNS_STREAM: u64 = 0x7369_676e_73;

/// `(A + A^T) / 2` for `A` with iid standard normal entries.
pub fn random_symmetric(d: usize, seed: RngSeed) -> SymMatrix {
    let mut rng = seed.rng();
    let m = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    SymMatrix::symmetrize(m).expect("finite entries")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SdpCheckReport {
    pub d: usize,
    pub instances: usize,
    pub violations: usize,
    /// Smallest `lower_margin / |A|_F` over the instances.
    pub min_lower_margin: f64,
    /// Smallest `upper_margin / |A|_F` over the instances.
    pub min_upper_margin: f64,
    /// Largest `gram / subset` ratio.
    pub max_ratio: f64,
    pub max_norm_defect: f64,
}

impl SdpCheckReport {
    pub fn passes(&self) -> bool {
        self.violations == 0
    }
}

/// Sandwich suite on `instances` random symmetric matrices of size `d`.
pub fn sdp_check(d: usize, instances: usize, cfg: &GramConfig, seed: u64) -> Result<SdpCheckReport, HarnessError> {
    let base = RngSeed::new(seed);
    let per: Vec<_> = (0..instances)
        .into_par_iter()
        .map(|i| {
            let a = random_symmetric(d, base.derive(MATRIX_STREAM).stream(i as u64));
            let sol = gram_maximize(&a, cfg, base.derive(SOLVER_STREAM).stream(i as u64))?;
            let rep = sandwich_check(&a, &sol)?;
            Ok((rep, a.frobenius(), sol.max_norm_defect()))
        })
        .collect::<Result<_, HarnessError>>()?;
    let mut out = SdpCheckReport {
        d,
        instances,
        violations: 0,
        min_lower_margin: f64::INFINITY,
        min_upper_margin: f64::INFINITY,
        max_ratio: 0.0,
        max_norm_defect: 0.0,
    };
    for (rep, frob, defect) in per {
        if !rep.holds() {
            out.violations += 1;
        }
        out.min_lower_margin = out.min_lower_margin.min(rep.lower_margin / frob);
        out.min_upper_margin = out.min_upper_margin.min(rep.upper_margin / frob);
        if rep.subset_value > 0.0 {
            out.max_ratio = out.max_ratio.max(rep.gram_value / rep.subset_value);
        }
        out.max_norm_defect = out.max_norm_defect.max(defect);
    }
    Ok(out)
}

/// Parameters of a hard-pair construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairParams {
    pub d: usize,
    pub alpha: f64,
    pub k: usize,
    pub eps: f64,
    pub gaussian_samples: usize,
    pub scaling: DeltaScaling,
    pub seed: u64,
}

impl PairParams {
    pub fn build(&self) -> Result<(RapporChannel, HardPair), HarnessError> {
        let ch = RapporChannel::new(self.d, self.alpha)?;
        let pair = hard_pair(
            &ch,
            self.eps,
            self.k,
            self.gaussian_samples,
            self.scaling,
            RngSeed::new(self.seed),
        )?;
        Ok((ch, pair))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBoundReport {
    pub params: PairParams,
    pub pair: HardPair,
    pub checks: HardPairChecks,
}

impl LowerBoundReport {
    pub fn passes(&self) -> bool {
        self.checks.all()
    }
}

pub fn lowerbound_report(params: PairParams) -> Result<LowerBoundReport, HarnessError> {
    let (_, pair) = params.build()?;
    let checks = pair.checks();
    Ok(LowerBoundReport { params, pair, checks })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixtureReport {
    pub params: PairParams,
    pub pair_l1: f64,
    pub outcomes: usize,
    pub tv: f64,
    pub residual: f64,
    pub min_mass: f64,
    pub sum_defect: f64,
}

impl MixtureReport {
    pub fn passes(&self) -> bool {
        self.residual <= 1e-12 && self.min_mass >= -1e-12 && self.sum_defect <= 1e-12
    }
}

pub fn mixture_report(params: PairParams) -> Result<MixtureReport, HarnessError> {
    let (ch, pair) = params.build()?;
    let mix = common_mixture(&pair, &ch, params.k)?;
    Ok(MixtureReport {
        params,
        pair_l1: pair.l1(),
        outcomes: mix.a.len(),
        tv: mix.tv,
        residual: mix.residual,
        min_mass: mix.min_mass,
        sum_defect: mix.sum_defect,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssouadReport {
    pub family: AssouadFamily,
    pub chi2: AssouadChi2Report,
    /// Random sign pairs compared.
    pub pairs: usize,
    /// Largest `| |p_a - p_b|_1 - 4 gamma H(a, b) |`.
    pub max_identity_error: f64,
}

impl AssouadReport {
    pub fn passes(&self) -> bool {
        self.max_identity_error <= 1e-15
    }
}

pub fn assouad_report(
    d: usize,
    n: usize,
    alpha: f64,
    c_gamma: f64,
    pairs: usize,
    seed: u64,
) -> Result<AssouadReport, HarnessError> {
    let family = assouad_family(d, n, alpha, c_gamma)?;
    let ch = RapporChannel::new(d, alpha)?;
    let chi2 = assouad_chi2_check(&family, &ch)?;
    let mut rng = RngSeed::new(seed).derive(SIGNS_STREAM).rng();
    let mut signs = || -> Vec<i8> {
        (0..family.half())
            .map(|_| if rng.random::<bool>() { 1 } else { -1 })
            .collect()
    };
    let mut max_identity_error: f64 = 0.0;
    for _ in 0..pairs {
        let (a, b) = (signs(), signs());
        let l1 = l1_dist(family.member(&a)?.weights(), family.member(&b)?.weights())?;
        let err = (l1 - 4.0 * family.gamma * hamming(&a, &b) as f64).abs();
        max_identity_error = max_identity_error.max(err);
    }
    Ok(AssouadReport {
        family,
        chi2,
        pairs,
        max_identity_error,
    })
}
