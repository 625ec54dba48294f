//! End-to-end run: market data, per-day solves, features, training and the
//! backtest of all three methods.
//!
//! Each stage consumes and produces plain values that the CLI persists as
//! CSV or JSON, so a run can be resumed from any intermediate file.

mod config;
mod report;
mod stages;

pub use config::*;
pub use report::*;
pub use stages::*;

use std::collections::BTreeMap;
use std::path::PathBuf;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::{
    read_market_csv, simulate_market, MarketError, MarketSnapshot, SyntheticMarketConfig, TradingCalendar,
};
use crate::ml::{
    build_features, counts_at, normalize, select_threshold, split_by_date, train, Dataset, FeatureRecord, Head,
    MlError, MlpParams, SplitSizes, ThresholdSelection, N_FEATURES,
};
use crate::preprocess::{assemble_problem, PreprocessError};
use crate::qrm::{solve_problem, QrmError, StopReason};
use crate::trading::{metrics, ConfusionCounts, Outcome, StrategyMetrics, TradeRecord, TradingError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no option survived validation and solving")]
    EmptyDataset,
    #[error("the {0} split is empty; adjust the split boundaries")]
    EmptySplit(&'static str),
    #[error("option {option_id} day {date}: {source}")]
    Solve {
        option_id: String,
        date: i64,
        source: QrmError,
    },
    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Ml(#[from] MlError),
    #[error(transparent)]
    Trading(#[from] TradingError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl PipelineError {
    /// Whether the failure stems from the configuration rather than the data.
    pub fn is_config(&self) -> bool {
        matches!(self, PipelineError::Config(_) | PipelineError::Market(MarketError::Config(_)))
    }
}

/// First trading day of synthetic calendars.
pub const SYNTHETIC_START: (i32, u32, u32) = (2018, 7, 2);

#[derive(Debug, Clone, Default)]
pub struct MarketData {
    /// Sorted by option id, then date.
    pub snapshots: Vec<MarketSnapshot>,
    pub calendar: TradingCalendar,
    pub expiries: BTreeMap<String, String>,
    pub invalid_quotes: usize,
}

/// Synthetic option series with strikes, volatilities and maturities drawn
/// from the run seed.
pub fn synthetic_universe(cfg: &PipelineConfig) -> Result<MarketData, PipelineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(cfg.seed, "universe"));
    let mut snapshots = Vec::new();
    let mut maturities = Vec::new();
    for k in 0..cfg.n_options {
        let moneyness = rng.gen_range(cfg.moneyness_min..=cfg.moneyness_max);
        let ivol = rng.gen_range(cfg.ivol_min..=cfg.ivol_max);
        let maturity_days = rng.gen_range(cfg.maturity_min_days..=cfg.maturity_max_days);
        let option_id = format!("SYN{k:04}");
        let start_day = (k % cfg.stagger_days) as i64;
        let series = SyntheticMarketConfig {
            seed: stage_seed(cfg.seed, &option_id),
            option_id: option_id.clone(),
            n_days: cfg.n_days,
            start_day,
            s0: cfg.s0,
            drift: cfg.drift,
            vol: ivol,
            ivol,
            stock_spread: cfg.stock_spread,
            option_spread: cfg.option_spread,
            strike: (cfg.s0 * moneyness * 2.0).round() / 2.0,
            maturity_days,
        };
        snapshots.extend(simulate_market(&series)?);
        maturities.push((option_id, start_day + maturity_days as i64));
    }
    let start = NaiveDate::from_ymd_opt(SYNTHETIC_START.0, SYNTHETIC_START.1, SYNTHETIC_START.2)
        .expect("valid constant date");
    let last = maturities.iter().map(|m| m.1).max().unwrap_or(0);
    let calendar = TradingCalendar::weekdays_from(start, last as usize + 1);
    let expiries = maturities
        .into_iter()
        .filter_map(|(id, day)| Some((id, calendar.date_of(day)?.format("%Y-%m-%d").to_string())))
        .collect();
    snapshots.sort_by(|a, b| a.option_id.cmp(&b.option_id).then(a.date.cmp(&b.date)));
    Ok(MarketData {
        snapshots,
        calendar,
        expiries,
        invalid_quotes: 0,
    })
}

/// Quote file from `cfg.input` or the synthetic universe.
pub fn load_market(cfg: &PipelineConfig) -> Result<MarketData, PipelineError> {
    match &cfg.input {
        None => synthetic_universe(cfg),
        Some(path) => {
            let file = std::fs::File::open(path).map_err(|source| PipelineError::Io {
                path: path.clone(),
                source,
            })?;
            let report = read_market_csv(file)?;
            Ok(MarketData {
                snapshots: report.snapshots,
                calendar: report.calendar,
                expiries: report.expiries,
                invalid_quotes: report.skipped,
            })
        }
    }
}

/// One row of `solutions.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRow {
    pub option_id: String,
    pub date: i64,
    pub beta: f64,
    pub cg_iterations: usize,
    pub stop: StopReason,
    pub residual_norm: f64,
    pub j_value: f64,
    pub j_lift: f64,
    pub est_tau: f64,
    pub est_2tau: f64,
}

/// Options or days dropped by recoverable errors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipCounts {
    /// Windows whose three days are not consecutive trading days.
    pub missing_day: usize,
    /// Extrapolated quotes crossed or volatility turned non-positive.
    pub invalid_boundary: usize,
    pub non_finite: usize,
}

#[derive(Debug, Clone, Default)]
pub struct SolveStage {
    pub windows: usize,
    pub solutions: Vec<SolutionRow>,
    pub skipped: SkipCounts,
}

enum WindowResult {
    Solved(SolutionRow),
    Skipped(&'static str),
}

fn series_by_option(snapshots: &[MarketSnapshot]) -> BTreeMap<&str, Vec<&MarketSnapshot>> {
    let mut by: BTreeMap<&str, Vec<&MarketSnapshot>> = BTreeMap::new();
    for s in snapshots {
        by.entry(s.option_id.as_str()).or_default().push(s);
    }
    for v in by.values_mut() {
        v.sort_by_key(|s| s.date);
    }
    by
}

fn solve_window(days: [&MarketSnapshot; 3], cfg: &PipelineConfig) -> Result<WindowResult, PipelineError> {
    let [d2, d1, d0] = days;
    let problem = match assemble_problem::<f64>(d2, d1, d0, cfg.nt) {
        Ok(p) => p,
        Err(PreprocessError::InconsistentSeries(_)) => return Ok(WindowResult::Skipped("missing_day")),
        Err(e) => {
            log::debug!("{} day {}: {e}", d0.option_id, d0.date);
            return Ok(WindowResult::Skipped("invalid_boundary"));
        }
    };
    match solve_problem(&problem, cfg.nx, cfg.nt, &cfg.solver()) {
        Ok(sol) => Ok(WindowResult::Solved(SolutionRow {
            option_id: d0.option_id.clone(),
            date: d0.date,
            beta: sol.beta,
            cg_iterations: sol.cg_iterations,
            stop: sol.stop,
            residual_norm: sol.residual_norm,
            j_value: sol.j_value,
            j_lift: sol.j_lift,
            est_tau: sol.est_tau,
            est_2tau: sol.est_2tau,
        })),
        Err(QrmError::NonFinite(what)) => {
            log::debug!("{} day {}: non-finite {what}", d0.option_id, d0.date);
            Ok(WindowResult::Skipped("non_finite"))
        }
        Err(source) => Err(PipelineError::Solve {
            option_id: d0.option_id.clone(),
            date: d0.date,
            source,
        }),
    }
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| PipelineError::Config(format!("cannot start {jobs} workers: {e}")))
}

/// Solves every three-day window that has a following quote day.
///
/// Windows run in parallel on `cfg.jobs` workers; results keep the
/// option id / date order of the input regardless of the worker count.
pub fn solve_stage(market: &MarketData, cfg: &PipelineConfig) -> Result<SolveStage, PipelineError> {
    let by = series_by_option(&market.snapshots);
    let mut windows = Vec::new();
    for series in by.values() {
        for i in 2..series.len().saturating_sub(1) {
            windows.push([series[i - 2], series[i - 1], series[i]]);
        }
    }
    let results: Vec<Result<WindowResult, PipelineError>> =
        thread_pool(cfg.jobs)?.install(|| windows.par_iter().map(|w| solve_window(*w, cfg)).collect());

    let mut stage = SolveStage {
        windows: windows.len(),
        ..Default::default()
    };
    for r in results {
        match r? {
            WindowResult::Solved(row) => stage.solutions.push(row),
            WindowResult::Skipped("missing_day") => stage.skipped.missing_day += 1,
            WindowResult::Skipped("non_finite") => stage.skipped.non_finite += 1,
            WindowResult::Skipped(_) => stage.skipped.invalid_boundary += 1,
        }
    }
    let s = stage.skipped;
    log::info!(
        "solved {} of {} windows (missing day {}, invalid boundary {}, non-finite {})",
        stage.solutions.len(),
        stage.windows,
        s.missing_day,
        s.invalid_boundary,
        s.non_finite
    );
    Ok(stage)
}

/// Joins solutions with the quotes around their day into labelled records.
/// Solutions whose next quote day is missing are dropped and counted.
pub fn feature_stage(market: &MarketData, solutions: &[SolutionRow]) -> (Vec<FeatureRecord>, usize) {
    let by = series_by_option(&market.snapshots);
    let mut out = Vec::with_capacity(solutions.len());
    let mut missing = 0;
    for sol in solutions {
        let rec = by.get(sol.option_id.as_str()).and_then(|series| {
            let i = series.iter().position(|s| s.date == sol.date)?;
            if i < 2 || i + 1 >= series.len() {
                return None;
            }
            build_features([series[i - 2], series[i - 1], series[i]], sol.est_tau, sol.est_2tau, series[i + 1]).ok()
        });
        match rec {
            Some(r) => out.push(r),
            None => missing += 1,
        }
    }
    (out, missing)
}

/// Split boundaries from the config, or the 70% and 85% quantiles of the
/// distinct record dates.
pub fn split_boundaries(features: &[FeatureRecord], cfg: &PipelineConfig) -> (i64, i64) {
    let mut dates: Vec<i64> = features.iter().map(|f| f.date).collect();
    dates.sort_unstable();
    dates.dedup();
    let quantile = |q: f64| -> i64 {
        if dates.is_empty() {
            return 0;
        }
        let k = ((dates.len() as f64 * q).floor() as usize).min(dates.len() - 1);
        dates[k]
    };
    let b1 = cfg.train_until.unwrap_or_else(|| quantile(0.70));
    let b2 = cfg.validate_until.unwrap_or_else(|| quantile(0.85)).max(b1);
    (b1, b2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    Label,
    /// Tomorrow's price normalized with the record's own statistics.
    NormalizedPrice,
}

/// Network inputs and targets for a set of records.
pub fn dataset(records: &[FeatureRecord], target: Target) -> Result<Dataset<f64>, MlError> {
    let mut rows = Vec::with_capacity(records.len());
    let mut ys = Vec::with_capacity(records.len());
    for r in records {
        let (x, stats) = normalize(r);
        rows.push(x.to_vec());
        ys.push(match target {
            Target::Label => f64::from(r.label),
            Target::NormalizedPrice => stats.scale(r.real_tau),
        });
    }
    let mut data = Dataset::from_rows(&rows, &ys)?;
    if records.is_empty() {
        data.x = ndarray::Array2::zeros((0, N_FEATURES));
    }
    Ok(data)
}

#[derive(Debug, Clone)]
pub struct TrainedModels {
    pub classifier: MlpParams<f64>,
    pub regressor: MlpParams<f64>,
    pub boundaries: (i64, i64),
    pub sizes: SplitSizes,
    pub final_losses: (f64, f64),
}

fn require_nonempty<R>(splits: &crate::ml::Splits<R>) -> Result<(), PipelineError> {
    for (name, n) in [("train", splits.train.len()), ("validation", splits.validation.len()), ("test", splits.test.len())] {
        if n == 0 {
            return Err(PipelineError::EmptySplit(name));
        }
    }
    Ok(())
}

/// Trains the classifier and the regressor on the training split. The two
/// models are independent and train concurrently.
pub fn train_stage(features: &[FeatureRecord], cfg: &PipelineConfig) -> Result<TrainedModels, PipelineError> {
    if features.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    let boundaries = split_boundaries(features, cfg);
    let splits = split_by_date(features.iter().cloned(), |r| r.date, boundaries)?;
    require_nonempty(&splits)?;
    let class_data = dataset(&splits.train, Target::Label)?;
    let reg_data = dataset(&splits.train, Target::NormalizedPrice)?;
    let class_cfg = cfg.train(stage_seed(cfg.seed, "classifier"));
    let reg_cfg = cfg.train(stage_seed(cfg.seed, "regressor"));

    let (c, r) = thread_pool(cfg.jobs.min(2))?.install(|| {
        rayon::join(
            || train(class_cfg.init(N_FEATURES, Head::Classification), &class_data, &class_cfg),
            || train(reg_cfg.init(N_FEATURES, Head::Regression), &reg_data, &reg_cfg),
        )
    });
    let (c, r) = (c?, r?);
    let last = |h: &[f64]| h.last().copied().unwrap_or(f64::NAN);
    Ok(TrainedModels {
        final_losses: (last(&c.loss_history), last(&r.loss_history)),
        classifier: c.params,
        regressor: r.params,
        boundaries,
        sizes: splits.sizes(),
    })
}

/// Accuracy, precision, recall and error of one method on the test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: String,
    pub metrics: StrategyMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub boundaries: (i64, i64),
    pub sizes: SplitSizes,
    pub threshold: ThresholdSelection,
    /// QRM's own decisions on the validation split, the reference point of
    /// the curves.
    pub qrm_validation: ConfusionCounts,
    pub methods: Vec<MethodResult>,
    /// `(method, moneyness rows)` on the test split.
    pub moneyness: Vec<(String, Vec<crate::trading::MoneynessRow>)>,
}

fn qrm_trade(r: &FeatureRecord, est_tau: f64) -> TradeRecord {
    TradeRecord {
        option_id: r.option_id.clone(),
        date: r.date,
        real_0: r.real_0(),
        real_tau: r.real_tau,
        est_tau,
    }
}

/// Picks the classifier threshold on validation data and backtests QRM,
/// the classifier and the regressor on the test split.
pub fn evaluate_stage(
    features: &[FeatureRecord],
    classifier: &MlpParams<f64>,
    regressor: &MlpParams<f64>,
    cfg: &PipelineConfig,
) -> Result<Evaluation, PipelineError> {
    if features.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    let boundaries = split_boundaries(features, cfg);
    let splits = split_by_date(features.iter().cloned(), |r| r.date, boundaries)?;
    require_nonempty(&splits)?;

    let val = dataset(&splits.validation, Target::Label)?;
    let val_scores = classifier.predict(val.x.view())?.to_vec();
    let val_labels: Vec<u8> = splits.validation.iter().map(|r| r.label).collect();
    let threshold = select_threshold(&val_scores, &val_labels)?;
    let qrm_validation = ConfusionCounts::from_records(
        &splits.validation.iter().map(|r| qrm_trade(r, r.est_tau())).collect::<Vec<_>>(),
    );

    let test = &splits.test;
    let test_x = dataset(test, Target::Label)?.x;
    let labels: Vec<u8> = test.iter().map(|r| r.label).collect();

    let qrm_trades: Vec<TradeRecord> = test.iter().map(|r| qrm_trade(r, r.est_tau())).collect();
    let qrm_outcomes: Vec<Outcome> = qrm_trades.iter().map(crate::trading::classify).collect();

    let scores = classifier.predict(test_x.view())?.to_vec();
    let class_counts = counts_at(&scores, &labels, threshold.c);
    let class_outcomes: Vec<Outcome> =
        scores.iter().zip(&labels).map(|(&s, &y)| Outcome::from_call(s > threshold.c, y == 1)).collect();

    let reg_out = regressor.predict(test_x.view())?;
    let reg_trades: Vec<TradeRecord> = test
        .iter()
        .zip(reg_out.iter())
        .map(|(r, &z)| qrm_trade(r, normalize(r).1.unscale(z)))
        .collect();
    let reg_outcomes: Vec<Outcome> = reg_trades.iter().map(crate::trading::classify).collect();

    let methods = vec![
        MethodResult {
            method: "qrm".into(),
            metrics: metrics(ConfusionCounts::from_outcomes(qrm_outcomes.iter().copied()), &qrm_trades)?,
        },
        MethodResult {
            method: "classifier".into(),
            metrics: StrategyMetrics::from_counts(class_counts),
        },
        MethodResult {
            method: "regressor".into(),
            metrics: metrics(ConfusionCounts::from_outcomes(reg_outcomes.iter().copied()), &reg_trades)?,
        },
    ];
    let bins = |outcomes: &[Outcome]| {
        crate::trading::moneyness_bins(
            test.iter().zip(outcomes).map(|(r, &o)| (r.stock(), r.strike, o)),
            crate::trading::MONEYNESS_STEP,
        )
    };
    let moneyness = vec![
        ("qrm".to_string(), bins(&qrm_outcomes)),
        ("classifier".to_string(), bins(&class_outcomes)),
        ("regressor".to_string(), bins(&reg_outcomes)),
    ];
    Ok(Evaluation {
        boundaries,
        sizes: splits.sizes(),
        threshold,
        qrm_validation,
        methods,
        moneyness,
    })
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct ReportBundle {
    pub metrics: MetricsReport,
    pub evaluation: Evaluation,
    pub solutions: Vec<SolutionRow>,
    pub features: Vec<FeatureRecord>,
    pub classifier: MlpParams<f64>,
    pub regressor: MlpParams<f64>,
}

/// Runs every stage in memory.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<ReportBundle, PipelineError> {
    cfg.validate()?;
    let market = load_market(cfg)?;
    if market.snapshots.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    let solved = solve_stage(&market, cfg)?;
    let (features, unlabelled) = feature_stage(&market, &solved.solutions);
    if features.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    let models = train_stage(&features, cfg)?;
    let evaluation = evaluate_stage(&features, &models.classifier, &models.regressor, cfg)?;
    let metrics = MetricsReport::new(cfg, &market, &solved, &features, unlabelled, &models, &evaluation);
    Ok(ReportBundle {
        metrics,
        evaluation,
        solutions: solved.solutions,
        features,
        classifier: models.classifier,
        regressor: models.regressor,
    })
}
