use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ldp_robust::lowerbound::DeltaScaling;
use ldp_robust::sdp::GramConfig;
use ldp_robust_harness::checks::{assouad_report, lowerbound_report, mixture_report, sdp_check, PairParams};
use ldp_robust_harness::{
    eps_prime_solve, rate_fit, read_csv, run_sweep, write_csv, AttackConfig, Axis, Cell, EstimatorOverrides,
    Experiment, HarnessError, PFamily, SweepConfig,
};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "ldp-robust", version, about = "Robust distribution estimation from privatized, contaminated batches")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Master seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads, 0 for one per core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Record wall time per trial (makes output machine dependent).
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum AttackArg {
    AllOnes,
    AllZeros,
    Shift,
    HardPair,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Uniform,
    Dirichlet,
    PointHeavy,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScalingArg {
    Tight,
    Prescribed,
}

impl From<ScalingArg> for DeltaScaling {
    fn from(s: ScalingArg) -> Self {
        match s {
            ScalingArg::Tight => DeltaScaling::Tight,
            ScalingArg::Prescribed => DeltaScaling::Prescribed,
        }
    }
}

#[derive(Args)]
struct PairArgs {
    #[arg(long, default_value_t = 8)]
    d: usize,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 100)]
    k: usize,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    /// Gaussian directions tried for the perturbation.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, value_enum, default_value_t = ScalingArg::Tight)]
    scaling: ScalingArg,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trial and print its result as JSON.
    Simulate {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 50)]
        k: usize,
        #[arg(long, default_value_t = 5)]
        d: usize,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
        #[arg(long, value_enum, default_value_t = AttackArg::AllOnes)]
        attack: AttackArg,
        /// Scale of the shift attack.
        #[arg(long, default_value_t = 1.0)]
        shift_scale: f64,
        #[arg(long, value_enum, default_value_t = FamilyArg::Dirichlet)]
        family: FamilyArg,
        #[arg(long, default_value_t = 0)]
        trial: usize,
        #[arg(long)]
        tau_threshold: Option<f64>,
    },
    /// Run a sweep configuration and write one CSV row per trial.
    Sweep,
    /// Compare the Gram solver against the subset oracle on random matrices.
    SdpCheck {
        #[arg(long, default_value_t = 8)]
        d: usize,
        #[arg(long, default_value_t = 200)]
        instances: usize,
    },
    /// Build and certify a hard pair.
    Lowerbound {
        #[command(flatten)]
        pair: PairArgs,
    },
    /// Build the common mixture of a hard pair on k-fold outputs.
    MixtureCheck {
        #[arg(long, default_value_t = 3)]
        d: usize,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, value_enum, default_value_t = ScalingArg::Tight)]
        scaling: ScalingArg,
    },
    /// Build an Assouad family and its chi-square report.
    Assouad {
        #[arg(long, default_value_t = 8)]
        d: usize,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0.1)]
        c_gamma: f64,
        /// Random sign pairs for the l1-Hamming identity.
        #[arg(long, default_value_t = 100)]
        pairs: usize,
    },
    /// Fit the log-log slope of median error along one axis of a sweep CSV.
    RateFit {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        axis: String,
    },
    /// Solve n = 4d / (e^2 ln(1/e)) for e in (0, 0.01].
    EpsPrime {
        #[arg(long)]
        n: f64,
        #[arg(long)]
        d: usize,
    },
}

enum Failure {
    Usage(String),
    Violation(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, bytes).map_err(|e| Failure::Usage(format!("{}: {e}", p.display()))),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(bytes)
                .map_err(|e| Failure::Usage(e.to_string()))
        }
    }
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Usage(e.to_string()))?;
    text.push('\n');
    emit(out, text.as_bytes())
}

fn verdict(ok: bool, what: &str) -> Result<(), Failure> {
    if ok {
        Ok(())
    } else {
        Err(Failure::Violation(format!("{what} failed")))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let g = &cli.global;
    let out = g.out.as_deref();
    match cli.command {
        Command::Simulate {
            n,
            k,
            d,
            alpha,
            eps,
            attack,
            shift_scale,
            family,
            trial,
            tau_threshold,
        } => {
            let (cell, exp) = match &g.config {
                Some(path) => {
                    let cfg = SweepConfig::from_path(path)?;
                    (cfg.cells()[0], Experiment::from_config(&cfg, g.timing))
                }
                None => {
                    let attack = match attack {
                        AttackArg::AllOnes => AttackConfig::AllOnes,
                        AttackArg::AllZeros => AttackConfig::AllZeros,
                        AttackArg::Shift => AttackConfig::Shift { scale: shift_scale },
                        AttackArg::HardPair => AttackConfig::HardPairSwap {
                            gaussian_samples: 10_000,
                            scaling: DeltaScaling::Tight,
                        },
                    };
                    let p_family = match family {
                        FamilyArg::Uniform => PFamily::Uniform,
                        FamilyArg::Dirichlet => PFamily::Dirichlet,
                        FamilyArg::PointHeavy => PFamily::PointHeavy { heavy: 0.5 },
                    };
                    let exp = Experiment {
                        attack,
                        p_family,
                        estimator: EstimatorOverrides {
                            tau_threshold,
                            ..Default::default()
                        },
                        seed: g.seed,
                        timing: g.timing,
                    };
                    (Cell { n, k, d, alpha, eps }, exp)
                }
            };
            let result = exp.run_trial(&cell, 0, trial)?;
            emit_json(out, &result)
        }
        Command::Sweep => {
            let path = g
                .config
                .as_ref()
                .ok_or_else(|| Failure::Usage("sweep needs --config".into()))?;
            let cfg = SweepConfig::from_path(path)?;
            let rows = run_sweep(&cfg, g.timing)?;
            let mut buf = Vec::new();
            write_csv(&rows, &mut buf)?;
            emit(out.or(cfg.output.as_deref()), &buf)
        }
        Command::SdpCheck { d, instances } => {
            let rep = sdp_check(d, instances, &GramConfig::default(), g.seed)?;
            emit_json(out, &rep)?;
            verdict(rep.passes(), "sandwich check")
        }
        Command::Lowerbound { pair } => {
            let rep = lowerbound_report(PairParams {
                d: pair.d,
                alpha: pair.alpha,
                k: pair.k,
                eps: pair.eps,
                gaussian_samples: pair.samples,
                scaling: pair.scaling.into(),
                seed: g.seed,
            })?;
            emit_json(out, &rep)?;
            verdict(rep.passes(), "hard pair certificate")
        }
        Command::MixtureCheck {
            d,
            alpha,
            k,
            eps,
            samples,
            scaling,
        } => {
            let rep = mixture_report(PairParams {
                d,
                alpha,
                k,
                eps,
                gaussian_samples: samples,
                scaling: scaling.into(),
                seed: g.seed,
            })?;
            emit_json(out, &rep)?;
            verdict(rep.passes(), "common mixture")
        }
        Command::Assouad {
            d,
            n,
            alpha,
            c_gamma,
            pairs,
        } => {
            let rep = assouad_report(d, n, alpha, c_gamma, pairs, g.seed)?;
            emit_json(out, &rep)?;
            verdict(rep.passes(), "l1-Hamming identity")
        }
        Command::RateFit { csv, axis } => {
            let axis: Axis = axis.parse()?;
            let file = std::fs::File::open(&csv).map_err(|e| Failure::Usage(format!("{}: {e}", csv.display())))?;
            let rows = read_csv(file)?;
            emit_json(out, &rate_fit(&rows, axis)?)
        }
        Command::EpsPrime { n, d } => {
            #[derive(Serialize)]
            struct EpsPrime {
                n: f64,
                d: usize,
                eps_prime: f64,
            }
            let eps_prime = eps_prime_solve(n, d)?;
            emit_json(out, &EpsPrime { n, d, eps_prime })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.global.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.global.threads)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Violation(msg)) => {
            eprintln!("invariant violation: {msg}");
            ExitCode::from(2)
        }
    }
}
