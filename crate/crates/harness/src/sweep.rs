//! Grid sweeps and their CSV form.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::config::SweepConfig;
use crate::trial::{Experiment, TrialResult};
use crate::HarnessError;

pub const CSV_HEADER: [&str; 16] = [
    "n",
    "k",
    "d",
    "alpha",
    "eps",
    "attack",
    "trial",
    "seed",
    "l1_robust",
    "l1_robust_norm",
    "l1_naive",
    "deleted_good",
    "deleted_bad",
    "iterations",
    "final_tau",
    "wall_ms",
];

/// Positional decimal with 17 significant digits; `NaN`, `inf` and `-inf`
/// for non-finite values.
pub fn format_real(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.16e}", x.abs());
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    let sign = if x < 0.0 { "-" } else { "" };
    let body = if exp < 0 {
        format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
    } else if (exp as usize) < digits.len() - 1 {
        let (int, frac) = digits.split_at(exp as usize + 1);
        format!("{int}.{frac}")
    } else {
        format!("{}{}", digits, "0".repeat(exp as usize + 1 - digits.len()))
    };
    format!("{sign}{body}")
}

/// All trials of all cells, in (cell, trial) order whatever the scheduling.
pub fn run_sweep(cfg: &SweepConfig, timing: bool) -> Result<Vec<TrialResult>, HarnessError> {
    cfg.validate()?;
    let exp = Experiment::from_config(cfg, timing);
    let cells = cfg.cells();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.trials).map(move |t| (c, t)))
        .collect();
    jobs.par_iter()
        .map(|&(c, t)| exp.run_trial(&cells[c], c, t))
        .collect()
}

pub fn write_csv<W: Write>(rows: &[TrialResult], w: W) -> Result<(), HarnessError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for r in rows {
        out.write_record([
            r.n.to_string(),
            r.k.to_string(),
            r.d.to_string(),
            format_real(r.alpha),
            format_real(r.eps),
            r.attack.clone(),
            r.trial.to_string(),
            r.seed.to_string(),
            format_real(r.l1_robust),
            format_real(r.l1_robust_norm),
            format_real(r.l1_naive),
            r.deleted_good.to_string(),
            r.deleted_bad.to_string(),
            r.iterations.to_string(),
            format_real(r.final_tau),
            r.wall_ms.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> Result<T, HarnessError> {
    let raw = rec.get(i).ok_or_else(|| HarnessError::Csv(format!("missing column {}", CSV_HEADER[i])))?;
    raw.parse()
        .map_err(|_| HarnessError::Csv(format!("bad value `{raw}` in column {}", CSV_HEADER[i])))
}

/// Reads rows written by [`write_csv`]; the header must match exactly.
pub fn read_csv<R: Read>(r: R) -> Result<Vec<TrialResult>, HarnessError> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(HarnessError::Csv(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(TrialResult {
            n: field(&rec, 0)?,
            k: field(&rec, 1)?,
            d: field(&rec, 2)?,
            alpha: field(&rec, 3)?,
            eps: field(&rec, 4)?,
            attack: field(&rec, 5)?,
            trial: field(&rec, 6)?,
            seed: field(&rec, 7)?,
            l1_robust: field(&rec, 8)?,
            l1_robust_norm: field(&rec, 9)?,
            l1_naive: field(&rec, 10)?,
            deleted_good: field(&rec, 11)?,
            deleted_bad: field(&rec, 12)?,
            iterations: field(&rec, 13)?,
            final_tau: field(&rec, 14)?,
            wall_ms: field(&rec, 15)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::AttackConfig;

    #[test]
    fn real_formatting() {
        assert_eq!(format_real(0.05), "0.050000000000000003");
        assert_eq!(format_real(1.0), "1.0000000000000000");
        assert_eq!(format_real(-2.5), "-2.5000000000000000");
        assert_eq!(format_real(1234.5), "1234.5000000000000");
        assert_eq!(format_real(1e20), "100000000000000000000");
        assert_eq!(format_real(1.5e-7), "0.00000014999999999999999");
        assert_eq!(format_real(0.0), "0");
        assert_eq!(format_real(f64::INFINITY), "inf");
        assert_eq!(format_real(f64::NAN), "NaN");
        for x in [0.1, 1.0 / 3.0, 123.456e-9, 9.999999999999999e22, f64::MIN_POSITIVE, 7.0] {
            assert_eq!(format_real(x).parse::<f64>().unwrap(), x);
        }
    }

    fn small_config() -> SweepConfig {
        SweepConfig {
            n: vec![60, 80],
            k: vec![10],
            d: vec![4, 5],
            alpha: vec![1.0],
            eps: vec![0.05],
            attack: AttackConfig::AllOnes,
            trials: 3,
            seed: 5,
            p_family: Default::default(),
            estimator: Default::default(),
            output: None,
        }
    }

    #[test]
    fn row_count_and_round_trip() {
        let rows = run_sweep(&small_config(), false).unwrap();
        assert_eq!(rows.len(), 12);
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "n,k,d,alpha,eps,attack,trial,seed,l1_robust,l1_robust_norm,l1_naive,deleted_good,deleted_bad,iterations,final_tau,wall_ms\n"
        ));
        assert_eq!(text.lines().count(), 13);
        assert_eq!(read_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn sweep_is_schedule_independent() {
        let cfg = small_config();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| run_sweep(&cfg, false)).unwrap();
        let b = four.install(|| run_sweep(&cfg, false)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_grid_fails_first() {
        let mut cfg = small_config();
        cfg.n.clear();
        assert!(matches!(run_sweep(&cfg, false), Err(HarnessError::Config(_))));
    }

    #[test]
    fn bad_header_rejected() {
        assert!(read_csv("a,b\n1,2\n".as_bytes()).is_err());
    }
}
