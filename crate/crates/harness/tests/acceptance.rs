//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p ldp-robust-harness --test acceptance -- --nocapture`
//! to see the report.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ldp_robust::adversary::{adversarial_count, contaminate, make_clean_collection, AttackSpec, Label};
use ldp_robust::estimator::{log_e_over, robust_estimate, score_collection, EstimatorConfig, MeanTable};
use ldp_robust::lowerbound::DeltaScaling;
use ldp_robust::prob::{sample_categorical, ProbVector, RngSeed, SubsetMask};
use ldp_robust::sdp::GramConfig;
use ldp_robust::RapporChannel;
use ldp_robust_harness::checks::{assouad_report, lowerbound_report, mixture_report, sdp_check, PairParams};
use ldp_robust_harness::{
    rate_fit, run_sweep, AttackConfig, Axis, EstimatorOverrides, Experiment, PFamily, SweepConfig, TrialResult,
    DESK_TAU_THRESHOLD,
};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
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

fn random_p(d: usize, rng: &mut impl Rng) -> ProbVector {
    let w: Vec<f64> = (0..d).map(|_| rng.random::<f64>() + 0.01).collect();
    let s: f64 = w.iter().sum();
    ProbVector::new(w.into_iter().map(|x| x / s).collect()).unwrap()
}

fn desk_overrides() -> EstimatorOverrides {
    EstimatorOverrides {
        tau_threshold: Some(DESK_TAU_THRESHOLD),
        ..Default::default()
    }
}

fn sweep_config(n: Vec<usize>, k: Vec<usize>, eps: Vec<f64>, attack: AttackConfig, family: PFamily, seed: u64) -> SweepConfig {
    SweepConfig {
        n,
        k,
        d: vec![5],
        alpha: vec![1.0],
        eps,
        attack,
        trials: 20,
        seed,
        p_family: family,
        estimator: desk_overrides(),
        output: None,
    }
}

/// Upper 0.999 quantiles of chi-square with 1..=4 degrees of freedom.
const CHI2_999: [f64; 4] = [10.828, 13.816, 16.266, 18.467];

fn criterion_1() -> Outcome {
    let mut rng = RngSeed::new(101).rng();
    let mut worst_rt: f64 = 0.0;
    for i in 0..100 {
        let d = 3 + i % 30;
        let p = random_p(d, &mut rng);
        let ch = RapporChannel::new(d, 1.0).unwrap();
        let back = ch.invert_mean(&ch.mean_response(&p).unwrap()).unwrap();
        for (a, b) in back.iter().zip(p.weights()) {
            worst_rt = worst_rt.max((a - b).abs());
        }
    }
    let mut worst_ratio: f64 = 0.0;
    for alpha in [0.1, 0.5, 1.0, 2.0] {
        let ch = RapporChannel::new(6, alpha).unwrap();
        worst_ratio = worst_ratio.max((ch.ldp_ratio_check() - f64::exp(alpha)).abs());
    }
    // Two-sample chi-square between direct privatization and the closed-form
    // law of the subset sum.
    let draws = 20_000;
    let (mut tests, mut rejections, mut worst_stat_ratio) = (0, 0, 0.0f64);
    for d in 3..=6usize {
        let ch = RapporChannel::new(d, 1.0).unwrap();
        for size in 1..=d.min(4) {
            let p = random_p(d, &mut rng);
            let s = SubsetMask::from_indices(d, &(0..size).map(|j| (j * 2 + d - size) % d).collect::<Vec<_>>());
            let members = s.indices();
            let mut direct = vec![0u64; size + 1];
            let mut law = vec![0u64; size + 1];
            for x in sample_categorical(&p, draws, &mut rng) {
                let z = ch.privatize(x, &mut rng).unwrap();
                direct[members.iter().filter(|&&j| z.get(j)).count()] += 1;
                law[ch.subset_sum_law_sample(&p, &s, &mut rng).unwrap()] += 1;
            }
            let mut stat = 0.0;
            let mut bins = 0;
            for (a, b) in direct.iter().zip(&law) {
                if a + b > 0 {
                    bins += 1;
                    stat += (*a as f64 - *b as f64).powi(2) / (a + b) as f64;
                }
            }
            tests += 1;
            if bins >= 2 {
                let crit = CHI2_999[bins - 2];
                worst_stat_ratio = worst_stat_ratio.max(stat / crit);
                if stat > crit {
                    rejections += 1;
                }
            }
        }
    }
    Outcome {
        pass: worst_rt <= 1e-14 && worst_ratio <= 1e-10 && rejections == 0,
        detail: format!(
            "round trip max err {worst_rt:.1e}; ratio err {worst_ratio:.1e}; sum law {rejections}/{tests} rejections, max stat/crit {worst_stat_ratio:.2}"
        ),
    }
}

fn criterion_2() -> Outcome {
    let d = 5;
    let batches = 1_000_000usize;
    let ch = RapporChannel::new(d, 1.0).unwrap();
    let p = ProbVector::new(vec![0.35, 0.25, 0.2, 0.12, 0.08]).unwrap();
    let q = ch.mean_response(&p).unwrap();
    let lambda = ch.lambda();
    let mut worst_z: f64 = 0.0;
    let mut parts = Vec::new();
    for (ki, k) in [1usize, 10, 50].into_iter().enumerate() {
        let mut rng = RngSeed::new(202).stream(ki as u64).rng();
        let mut sum_m = vec![0.0; d];
        let mut sum_mm = vec![0.0; d * d];
        let mut sum_xx = vec![0.0; d * d];
        let mut counts = vec![0u32; d];
        let sampler = p.sampler();
        for _ in 0..batches {
            counts.fill(0);
            for _ in 0..k {
                let x = rand::distr::Distribution::sample(&sampler, &mut rng);
                let z = ch.privatize(x, &mut rng).unwrap();
                for (j, c) in counts.iter_mut().enumerate() {
                    *c += z.get(j) as u32;
                }
            }
            let m: Vec<f64> = counts.iter().map(|&c| c as f64 / k as f64).collect();
            for i in 0..d {
                sum_m[i] += m[i];
                for j in 0..d {
                    sum_mm[i * d + j] += m[i] * m[j];
                    let x = (m[i] - q[i]) * (m[j] - q[j]);
                    sum_xx[i * d + j] += x * x;
                }
            }
        }
        let nb = batches as f64;
        let mean: Vec<f64> = sum_m.iter().map(|s| s / nb).collect();
        let model = ldp_robust::estimator::model_cov(&mean, k, lambda);
        let model_true = ldp_robust::estimator::model_cov(&q, k, lambda);
        let mut kz: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let chat = sum_mm[i * d + j] / nb - mean[i] * mean[j];
                let c = model_true.get(i, j);
                let var = sum_xx[i * d + j] / nb - c * c;
                let se = (var.max(0.0) / nb).sqrt();
                let z = (chat - c).abs() / se;
                kz = kz.max(z);
                // The plug-in model at the sample mean stays within the same envelope.
                kz = kz.max((chat - model.get(i, j)).abs() / se);
            }
        }
        worst_z = worst_z.max(kz);
        parts.push(format!("k={k}: max |dev|/se {kz:.2}"));
    }
    Outcome {
        pass: worst_z <= 5.0,
        detail: parts.join("; "),
    }
}

fn criterion_3() -> Outcome {
    let mut parts = Vec::new();
    let mut violations = 0;
    for (i, d) in [4usize, 8, 12].into_iter().enumerate() {
        let rep = sdp_check(d, 500, &GramConfig::default(), 303 + i as u64).unwrap();
        violations += rep.violations;
        parts.push(format!(
            "d={d}: {} violations, max gram/subset {:.3}",
            rep.violations, rep.max_ratio
        ));
    }
    Outcome {
        pass: violations == 0,
        detail: parts.join("; "),
    }
}

fn medians_by<F: Fn(&TrialResult) -> f64>(rows: &[TrialResult], key: F, pick: impl Fn(&TrialResult) -> bool) -> f64 {
    median(rows.iter().filter(|r| pick(r)).map(key).collect())
}

fn criterion_4() -> Outcome {
    let cfg = sweep_config(vec![100, 400], vec![50], vec![0.0], AttackConfig::AllOnes, PFamily::Dirichlet, 404);
    let rows = run_sweep(&cfg, false).unwrap();
    let m100 = medians_by(&rows, |r| r.l1_robust_norm, |r| r.n == 100);
    let m400 = medians_by(&rows, |r| r.l1_robust_norm, |r| r.n == 400);
    let ratio = m400 / m100;
    Outcome {
        pass: (0.35..=0.7).contains(&ratio),
        detail: format!("median l1 n=100 {m100:.4}, n=400 {m400:.4}, ratio {ratio:.3} (window [0.35, 0.7])"),
    }
}

fn criterion_5() -> Outcome {
    let cfg = sweep_config(vec![2000], vec![50], vec![0.0, 0.05], AttackConfig::AllOnes, PFamily::Dirichlet, 505);
    let rows = run_sweep(&cfg, false).unwrap();
    let attacked: Vec<&TrialResult> = rows.iter().filter(|r| r.eps > 0.0).collect();
    let wins = attacked.iter().filter(|r| r.l1_robust_norm <= 0.5 * r.l1_naive).count();
    let base = medians_by(&rows, |r| r.l1_robust_norm, |r| r.eps == 0.0);
    let robust = median(attacked.iter().map(|r| r.l1_robust_norm).collect());
    let under_three = attacked.iter().filter(|r| r.l1_robust_norm <= 3.0 * base).count();

    let default_cfg = SweepConfig {
        estimator: EstimatorOverrides::default(),
        eps: vec![0.05],
        ..cfg.clone()
    };
    let default_rows = run_sweep(&default_cfg, false).unwrap();
    let default_wins = default_rows
        .iter()
        .filter(|r| r.l1_robust_norm <= 0.5 * r.l1_naive)
        .count();
    Outcome {
        pass: wins >= 18 && robust <= 3.0 * base,
        detail: format!(
            "sqrt(tau) threshold {DESK_TAU_THRESHOLD}: robust <= naive/2 in {wins}/20, median robust {robust:.4} vs 3 x baseline {:.4} ({under_three}/20 seeds individually); threshold 200: {default_wins}/20",
            3.0 * base
        ),
    }
}

fn criterion_6() -> Outcome {
    let n_cfg = sweep_config(
        vec![200, 800, 3200, 12800],
        vec![50],
        vec![0.0],
        AttackConfig::AllOnes,
        PFamily::Dirichlet,
        606,
    );
    let k_cfg = sweep_config(
        vec![20_000],
        vec![25, 50, 100, 200],
        vec![0.1],
        AttackConfig::Shift { scale: 1.0 },
        PFamily::Uniform,
        607,
    );
    let e_cfg = sweep_config(
        vec![50_000],
        vec![50],
        vec![0.025, 0.05, 0.1, 0.2],
        AttackConfig::Shift { scale: 1.4 },
        PFamily::Uniform,
        608,
    );
    let fit = |cfg: &SweepConfig, axis| rate_fit(&run_sweep(cfg, false).unwrap(), axis).unwrap();
    let (fn_, fk, fe) = (fit(&n_cfg, Axis::N), fit(&k_cfg, Axis::K), fit(&e_cfg, Axis::Eps));
    let ok_n = (fn_.slope + 0.5).abs() <= 0.12;
    let ok_k = (fk.slope + 0.5).abs() <= 0.15;
    let ok_e = (fe.slope - 1.0).abs() <= 0.25;
    Outcome {
        pass: ok_n && ok_k && ok_e,
        detail: format!(
            "n slope {:.3} +/- {:.3}; k slope {:.3} +/- {:.3}; eps slope {:.3} +/- {:.3}",
            fn_.slope, fn_.slope_se, fk.slope, fk.slope_se, fe.slope, fe.slope_se
        ),
    }
}

/// Smallest n with `n >= 4 d / (eps^2 ln(e / eps))`.
fn theorem_n(d: usize, eps: f64) -> usize {
    (4.0 * d as f64 / (eps * eps * log_e_over(eps))).ceil() as usize
}

fn criterion_7() -> Outcome {
    let (d, eps) = (5, 0.05);
    let n = theorem_n(d, eps);
    let exp = Experiment {
        attack: AttackConfig::AllOnes,
        p_family: PFamily::Dirichlet,
        estimator: desk_overrides(),
        seed: 707,
        timing: false,
    };
    let cell = ldp_robust_harness::Cell {
        n,
        k: 50,
        d,
        alpha: 1.0,
        eps,
    };
    let mut fractions = Vec::new();
    let mut without = 0;
    for t in 0..50 {
        let r = exp.run_trial(&cell, 0, t).unwrap();
        let total = r.deleted_good + r.deleted_bad;
        if total == 0 {
            without += 1;
            fractions.push(0.0);
        } else {
            fractions.push(r.deleted_bad as f64 / total as f64);
        }
    }
    let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
    Outcome {
        pass: mean >= 0.6,
        detail: format!(
            "n={n}: mean adversarial share of deletions {mean:.3} over 50 seeds ({without} seeds without deletions)"
        ),
    }
}

fn criterion_8() -> Outcome {
    let (d, k, eps) = (5, 50, 0.05);
    let n = theorem_n(d, eps);
    let ch = RapporChannel::new(d, 1.0).unwrap();
    let cfg = EstimatorConfig::with_eps(eps);
    let mut below = 0;
    let mut below_desk = 0;
    let mut worst: f64 = 0.0;
    for s in 0..50u64 {
        let mut rng = RngSeed::new(808).stream(s).rng();
        let p = random_p(d, &mut rng);
        let clean = make_clean_collection(&ch, &p, n, k, RngSeed::new(809).stream(s)).unwrap();
        let table = MeanTable::new(&clean);
        let sel: Vec<usize> = (0..n).collect();
        let rep = score_collection(&table, &sel, &cfg, ch.lambda(), RngSeed::new(s)).unwrap();
        let st = rep.sqrt_tau();
        worst = worst.max(st);
        if st < cfg.tau_threshold {
            below += 1;
        }
        if st < DESK_TAU_THRESHOLD {
            below_desk += 1;
        }
    }
    let freq = below as f64 / 50.0;
    Outcome {
        pass: freq >= 0.9,
        detail: format!(
            "n={n}: sqrt(tau) < 200 in {below}/50 (max {worst:.3}); below {DESK_TAU_THRESHOLD} in {below_desk}/50"
        ),
    }
}

fn criterion_9() -> Outcome {
    let params = PairParams {
        d: 8,
        alpha: 1.0,
        k: 100,
        eps: 0.1,
        gaussian_samples: 10_000,
        scaling: DeltaScaling::Tight,
        seed: 909,
    };
    let lb = lowerbound_report(params).unwrap();
    let prescribed = lowerbound_report(PairParams {
        scaling: DeltaScaling::Prescribed,
        ..params
    })
    .unwrap();
    let mix = mixture_report(PairParams {
        d: 3,
        k: 2,
        ..params
    })
    .unwrap();
    let asd = assouad_report(8, 1000, 1.0, 0.1, 100, 910).unwrap();
    let c = lb.checks;
    Outcome {
        pass: lb.passes() && mix.passes() && asd.passes(),
        detail: format!(
            "quad {} chi2 {} tv {} l1 {:.4} >= {:.4}: {}; prescribed scaling l1 {:.4}; mixture residual {:.1e} min mass {:.1e}; assouad identity err {:.1e}",
            c.quad_budget,
            c.chi2_chain,
            c.tv_within_eps,
            c.l1,
            c.l1_threshold,
            c.l1_lower,
            prescribed.checks.l1,
            mix.residual,
            mix.min_mass,
            asd.max_identity_error
        ),
    }
}

fn run_cli(bin: &str, args: &[&str], threads: &str, out: &Path) -> std::process::ExitStatus {
    Command::new(bin)
        .args(args)
        .args(["--threads", threads, "--out", out.to_str().unwrap()])
        .status()
        .unwrap()
}

fn criterion_10() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_ldp-robust");
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("sweep.json");
    std::fs::write(
        &cfg_path,
        r#"{"n":[300,600,1200],"k":[20],"d":[5],"alpha":[1.0],"eps":[0.05],
            "attack":{"kind":"all_ones"},"trials":4,"seed":3,"estimator":{"tau_threshold":1.0}}"#,
    )
    .unwrap();
    let cfg = cfg_path.to_str().unwrap().to_string();
    let csv_path = dir.path().join("rate_input.csv");
    assert!(Command::new(bin)
        .args(["sweep", "--config", &cfg, "--out", csv_path.to_str().unwrap()])
        .status()
        .unwrap()
        .success());
    let csv = csv_path.to_str().unwrap().to_string();
    let commands: Vec<(&str, Vec<&str>)> = vec![
        ("simulate", vec!["simulate", "--seed", "5", "--eps", "0.05", "--n", "400"]),
        ("sweep", vec!["sweep", "--seed", "5", "--config", &cfg]),
        ("sdp-check", vec!["sdp-check", "--seed", "7", "--d", "8", "--instances", "50"]),
        ("lowerbound", vec!["lowerbound", "--seed", "9", "--samples", "2000"]),
        ("mixture-check", vec!["mixture-check", "--seed", "9", "--samples", "2000"]),
        ("assouad", vec!["assouad", "--seed", "9"]),
        ("rate-fit", vec!["rate-fit", "--csv", &csv, "--axis", "n"]),
        ("eps-prime", vec!["eps-prime", "--n", "1e7", "--d", "10"]),
    ];
    let mut mismatched = Vec::new();
    for (name, args) in &commands {
        let a = dir.path().join(format!("{name}-1.out"));
        let b = dir.path().join(format!("{name}-8.out"));
        let (sa, sb) = (run_cli(bin, args, "1", &a), run_cli(bin, args, "8", &b));
        let same = sa.success() && sb.success() && std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap();
        if !same {
            mismatched.push(*name);
        }
    }
    Outcome {
        pass: mismatched.is_empty(),
        detail: format!(
            "{} commands at 1 and 8 threads; mismatched: {:?}",
            commands.len(),
            mismatched
        ),
    }
}

#[test]
fn acceptance() {
    let criteria: [(u32, &str, fn() -> Outcome, Option<u64>); 10] = [
        (1, "channel correctness", criterion_1, Some(60)),
        (2, "covariance model", criterion_2, Some(180)),
        (3, "grothendieck sandwich", criterion_3, Some(300)),
        (4, "clean-data consistency", criterion_4, Some(300)),
        (5, "robust vs naive under attack", criterion_5, Some(900)),
        (6, "rate scaling", criterion_6, Some(2700)),
        (7, "deletion bias", criterion_7, Some(600)),
        (8, "termination threshold", criterion_8, Some(600)),
        (9, "lower-bound certificates", criterion_9, Some(120)),
        (10, "determinism", criterion_10, None),
    ];
    let mut failed = Vec::new();
    for (id, name, run, budget) in criteria {
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let in_time = budget.is_none_or(|b| elapsed <= Duration::from_secs(b));
        let pass = out.pass && in_time;
        let budget_note = budget.map_or(String::new(), |b| format!(" / {b} s"));
        println!(
            "criterion {id} {name}: {} | {} | {:.1} s{budget_note}",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64()
        );
        if !pass {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

#[test]
fn eps_zero_contamination_changes_nothing() {
    // Sanity link between the harness and the library for the criteria above.
    let ch = RapporChannel::new(5, 1.0).unwrap();
    let p = ProbVector::uniform(5).unwrap();
    let clean = make_clean_collection(&ch, &p, 50, 10, RngSeed::new(1)).unwrap();
    let mixed = contaminate(&clean, &AttackSpec::AllOnes, 0.0, 50, &ch, RngSeed::new(2)).unwrap();
    assert_eq!(adversarial_count(50, 0.0), 0);
    assert!(mixed.truth().unwrap().iter().all(|l| *l == Label::Good));
    let r = robust_estimate(&mixed, &EstimatorConfig::with_eps(0.0), &ch, RngSeed::new(0)).unwrap();
    assert!(r.trace.is_empty());
}
