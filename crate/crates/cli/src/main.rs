//! `qrm`: run the forecasting pipeline stage by stage or end to end.
//!
//! Every stage reads from and writes to the run directory given by `--out`.
//! Exit codes: 0 success, 1 fatal error, 2 configuration error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use qrm_core::instability::{
    instability_table, sample_on_half_period, sine_coefficients, write_instability_csv, FourierProfile,
};
use qrm_core::pipeline::{
    feature_stage, load_market, solve_stage, synthetic_universe, train_stage, write_json, PipelineConfig, PipelineError, RunDir,
};
use qrm_core::qrm::{
    convergence_experiment, manufactured_recovery, ConvergenceRow, ManufacturedCase, ManufacturedReport,
    EPSILON_FRAC, NOISE_LEVELS, RECOVERY_TOLERANCE,
};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "qrm", version, about = "Next-day option price forecasts by quasi-reversibility")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Overrides applied on top of the configuration file.
#[derive(Debug, Args)]
struct Common {
    /// Flat JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true)]
    nx: Option<usize>,
    #[arg(long, global = true)]
    nt: Option<usize>,
    /// Run directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for the solve stage; 0 uses every core.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the synthetic option universe.
    SimulateMarket,
    /// Validate a quote file and store it in the run directory.
    Ingest {
        /// Quote file; defaults to `input` from the configuration.
        input: Option<PathBuf>,
    },
    /// Solve every three-day window of every option.
    Solve,
    /// Build labelled feature records from the solutions.
    Features,
    /// Train the classifier and the regressor.
    Train,
    /// Evaluate all methods on the test split and write the report.
    Backtest,
    /// Run every stage and write the report.
    Report,
    /// Tabulate the growth of a sine series run backwards in time.
    DemoInstability {
        #[arg(long, value_enum, default_value = "parabola")]
        profile: Profile,
        /// Mode of the `sine` profile.
        #[arg(long, default_value_t = 1)]
        mode: usize,
        /// Largest truncation order.
        #[arg(long, default_value_t = 5)]
        max_order: usize,
        #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
        times: Vec<f64>,
    },
    /// Run the manufactured-solution and regularization-convergence experiments.
    Verify {
        /// Skip the slower convergence experiment.
        #[arg(long)]
        quick: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Profile {
    /// `x (pi - x)`.
    Parabola,
    /// `sin(mode x)`.
    Sine,
}

enum Failure {
    Config(String),
    Fatal(anyhow::Error),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Fatal(e.into())
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Fatal(e)
    }
}

fn load_config(common: &Common) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("configuration error: {}: {e}", path.display())))?;
            PipelineConfig::from_json(&text)?
        }
        None => PipelineConfig::default(),
    };
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    if let Some(v) = common.beta {
        cfg.beta = v;
    }
    if let Some(v) = common.nx {
        cfg.nx = v;
    }
    if let Some(v) = common.nt {
        cfg.nt = v;
    }
    if let Some(v) = &common.out {
        cfg.out_dir = v.clone();
    }
    if let Some(v) = common.jobs {
        cfg.jobs = v;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = load_config(&cli.common)?;
    if let Command::Ingest { input: Some(path) } = &cli.command {
        cfg.input = Some(path.clone());
    }
    cfg.validate()?;
    let dir = RunDir::new(&cfg.out_dir);
    match cli.command {
        Command::SimulateMarket => simulate(&dir, &cfg)?,
        Command::Ingest { .. } => ingest(&dir, &cfg)?,
        Command::Solve => solve(&dir, &cfg)?,
        Command::Features => features(&dir)?,
        Command::Train => fit(&dir, &cfg)?,
        Command::Backtest => print_methods(&dir.backtest(&cfg)?.metrics),
        Command::Report => {
            if cfg.input.is_some() {
                ingest(&dir, &cfg)?;
            } else {
                simulate(&dir, &cfg)?;
            }
            solve(&dir, &cfg)?;
            features(&dir)?;
            fit(&dir, &cfg)?;
            print_methods(&dir.backtest(&cfg)?.metrics);
            println!("report written to {}", dir.report().display());
        }
        Command::DemoInstability {
            profile,
            mode,
            max_order,
            times,
        } => demo_instability(&cfg.out_dir, profile, mode, max_order, &times)?,
        Command::Verify { quick } => verify(&cfg, quick)?,
    }
    Ok(())
}

fn simulate(dir: &RunDir, cfg: &PipelineConfig) -> Result<(), Failure> {
    let market = synthetic_universe(cfg)?;
    dir.save_market(&market)?;
    println!("simulated {} quotes", market.snapshots.len());
    Ok(())
}

fn ingest(dir: &RunDir, cfg: &PipelineConfig) -> Result<(), Failure> {
    if cfg.input.is_none() {
        return Err(Failure::Config(
            "configuration error: ingest needs a quote file or `input` in the configuration".into(),
        ));
    }
    let market = load_market(cfg)?;
    if market.snapshots.is_empty() {
        return Err(PipelineError::EmptyDataset.into());
    }
    dir.save_market(&market)?;
    println!("ingested {} quotes, skipped {} invalid", market.snapshots.len(), market.invalid_quotes);
    Ok(())
}

fn solve(dir: &RunDir, cfg: &PipelineConfig) -> Result<(), Failure> {
    let solved = solve_stage(&dir.load_market()?, cfg)?;
    dir.save_solutions(&solved)?;
    let s = solved.skipped;
    println!(
        "solved {} of {} windows (missing day {}, invalid boundary {}, non-finite {})",
        solved.solutions.len(),
        solved.windows,
        s.missing_day,
        s.invalid_boundary,
        s.non_finite
    );
    Ok(())
}

fn features(dir: &RunDir) -> Result<(), Failure> {
    let (features, unlabelled) = feature_stage(&dir.load_market()?, &dir.load_solutions()?.solutions);
    if features.is_empty() {
        return Err(PipelineError::EmptyDataset.into());
    }
    dir.save_features(&features, unlabelled)?;
    println!("{} labelled records, {} without a next day", features.len(), unlabelled);
    Ok(())
}

fn fit(dir: &RunDir, cfg: &PipelineConfig) -> Result<(), Failure> {
    let models = train_stage(&dir.load_features()?.0, cfg)?;
    dir.save_models(&models)?;
    println!(
        "final losses: classifier {:.6}, regressor {:.6}",
        models.final_losses.0, models.final_losses.1
    );
    Ok(())
}

fn print_methods(metrics: &qrm_core::pipeline::MetricsReport) {
    let pct = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{:.2}", 100.0 * v));
    println!("{:<12} {:>9} {:>9} {:>9} {:>9} {:>6}", "method", "accuracy", "precision", "recall", "error", "n");
    for m in &metrics.methods {
        println!(
            "{:<12} {:>9} {:>9} {:>9} {:>9} {:>6}",
            m.method,
            pct(m.accuracy),
            pct(m.precision),
            pct(m.recall),
            pct(m.mean_relative_error),
            m.n
        );
    }
    println!("threshold c = {:.2}", metrics.threshold.c);
}

fn demo_instability(out: &Path, profile: Profile, mode: usize, max_order: usize, times: &[f64]) -> Result<(), Failure> {
    if max_order == 0 || mode == 0 {
        return Err(Failure::Config("configuration error: mode and max-order must be positive".into()));
    }
    let full = match profile {
        Profile::Parabola => {
            let samples = sample_on_half_period(|x| x * (std::f64::consts::PI - x), 64 * max_order);
            sine_coefficients(&samples, max_order).context("sine coefficients")?
        }
        Profile::Sine => FourierProfile::single_mode(mode),
    };
    // lower truncations of a single mode are identically zero
    let orders: Vec<usize> = match profile {
        Profile::Parabola => (1..=full.order()).collect(),
        Profile::Sine => vec![mode],
    };
    let rows = instability_table(&full, &orders, times);
    std::fs::create_dir_all(out).with_context(|| out.display().to_string())?;
    let path = out.join("instability.csv");
    let file = std::fs::File::create(&path).with_context(|| path.display().to_string())?;
    write_instability_csv(file, &rows).context("writing instability.csv")?;
    write_instability_csv(std::io::stdout().lock(), &rows).context("writing to stdout")?;
    Ok(())
}

#[derive(Serialize)]
struct VerifyReport {
    recovery: ManufacturedReport,
    recovery_tolerance: f64,
    recovery_passed: bool,
    convergence: Option<Vec<ConvergenceRow>>,
    convergence_monotone: Option<bool>,
}

fn verify(cfg: &PipelineConfig, quick: bool) -> Result<(), Failure> {
    let recovery = manufactured_recovery::<f64>(&ManufacturedCase::default()).context("manufactured recovery")?;
    let recovery_passed = recovery.rel_l2_error <= RECOVERY_TOLERANCE;
    println!(
        "manufactured recovery: relative L2 error {:.3e} (tolerance {RECOVERY_TOLERANCE}) {}",
        recovery.rel_l2_error,
        if recovery_passed { "pass" } else { "FAIL" }
    );
    let (convergence, convergence_monotone) = if quick {
        (None, None)
    } else {
        let rows = convergence_experiment::<f64>(&ManufacturedCase::convergence(), &NOISE_LEVELS, cfg.seed, EPSILON_FRAC)
            .context("convergence experiment")?;
        for r in &rows {
            println!("nu {:.0e} beta {:.0e}: error {:.6e} ({} iterations)", r.nu, r.beta, r.error, r.cg_iterations);
        }
        let monotone = rows.windows(2).all(|w| w[1].error <= w[0].error);
        println!("error non-increasing as nu shrinks: {}", if monotone { "pass" } else { "FAIL" });
        (Some(rows), Some(monotone))
    };
    let report = VerifyReport {
        recovery,
        recovery_tolerance: RECOVERY_TOLERANCE,
        recovery_passed,
        convergence_monotone,
        convergence,
    };
    std::fs::create_dir_all(&cfg.out_dir).with_context(|| cfg.out_dir.display().to_string())?;
    write_json(&cfg.out_dir.join("verify.json"), &report)?;
    if recovery_passed && report.convergence_monotone != Some(false) {
        Ok(())
    } else {
        Err(anyhow::anyhow!("verification failed").into())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(2)
        }
        Err(Failure::Fatal(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
