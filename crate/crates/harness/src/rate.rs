//! Log-log rate fits and the operating contamination level for a sample size.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::Serialize;

use crate::trial::TrialResult;
use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    N,
    K,
    Eps,
}

impl FromStr for Axis {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "n" => Ok(Axis::N),
            "k" => Ok(Axis::K),
            "eps" => Ok(Axis::Eps),
            other => Err(HarnessError::Config(format!("unknown axis `{other}` (expected n, k or eps)"))),
        }
    }
}

impl Axis {
    fn value(self, r: &TrialResult) -> f64 {
        match self {
            Axis::N => r.n as f64,
            Axis::K => r.k as f64,
            Axis::Eps => r.eps,
        }
    }

    /// The cell parameters other than this axis, bit-exact.
    fn others(self, r: &TrialResult) -> (Vec<u64>, String) {
        let mut v = vec![r.d as u64, r.alpha.to_bits()];
        if self != Axis::N {
            v.push(r.n as u64);
        }
        if self != Axis::K {
            v.push(r.k as u64);
        }
        if self != Axis::Eps {
            v.push(r.eps.to_bits());
        }
        (v, r.attack.clone())
    }
}

/// Least-squares fit of `ln(median l1_robust_norm)` against `ln(axis)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub axis: Axis,
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

pub fn rate_fit(rows: &[TrialResult], axis: Axis) -> Result<RateFit, HarnessError> {
    let first = rows
        .first()
        .ok_or_else(|| HarnessError::InsufficientData("no rows".into()))?;
    let fixed = axis.others(first);
    if rows.iter().any(|r| axis.others(r) != fixed) {
        return Err(HarnessError::InsufficientData(
            "parameters other than the fitted axis vary".into(),
        ));
    }
    let mut groups: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for r in rows {
        let x = axis.value(r);
        if !(x > 0.0) {
            return Err(HarnessError::InsufficientData(format!("axis value {x} has no logarithm")));
        }
        groups.entry(x.to_bits()).or_default().push(r.l1_robust_norm);
    }
    if groups.len() < 3 {
        return Err(HarnessError::InsufficientData(format!(
            "{} distinct axis values, need at least 3",
            groups.len()
        )));
    }
    let mut points: Vec<(f64, f64)> = groups
        .into_iter()
        .map(|(bits, errs)| (f64::from_bits(bits), median(errs)))
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    if points.iter().any(|p| !(p.1 > 0.0)) {
        return Err(HarnessError::InsufficientData("a median error is not positive".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let m = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / m;
    let ybar = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let slope_se = (ssr / (m - 2.0) / sxx).sqrt();
    Ok(RateFit {
        axis,
        points,
        slope,
        slope_se,
        intercept,
    })
}

/// `4 d / (e^2 ln(1/e))`, decreasing on `(0, 0.01]`.
fn required_n(eps: f64, d: usize) -> f64 {
    4.0 * d as f64 / (eps * eps * (1.0 / eps).ln())
}

/// The `eps'` in `(0, 0.01]` with `n = 4 d / (eps'^2 ln(1/eps'))`, by
/// bisection to relative tolerance `1e-10`.
pub fn eps_prime_solve(n: f64, d: usize) -> Result<f64, HarnessError> {
    const HI: f64 = 0.01;
    const LO: f64 = 1e-6;
    if !(n.is_finite() && n >= required_n(HI, d)) {
        return Err(HarnessError::NoRoot { n, d });
    }
    if n >= required_n(LO, d) {
        return Err(HarnessError::NoRoot { n, d });
    }
    let (mut lo, mut hi) = (LO, HI);
    while hi - lo > 1e-10 * hi {
        let mid = 0.5 * (lo + hi);
        if required_n(mid, d) > n {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
