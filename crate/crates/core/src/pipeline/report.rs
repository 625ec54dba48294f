use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    Evaluation, MarketData, PipelineConfig, PipelineError, ReportBundle, SkipCounts, SolutionRow, SolveStage,
    TrainedModels,
};
use crate::ml::{write_features_csv, FeatureRecord, MlpParams, SplitSizes};
use crate::trading::ConfusionCounts;

/// Files written by [`write_bundle`], in order.
pub const REPORT_FILES: [&str; 6] = [
    "metrics.json",
    "threshold_curve.csv",
    "pr_curve.csv",
    "moneyness_bins.csv",
    "solutions.csv",
    "features.csv",
];

/// Published results on the authors' market data, kept for comparison.
/// They depend on proprietary quotes and are not expected to be reproduced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PublishedResult {
    pub method: &'static str,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    /// Mean relative forecast error, where reported.
    pub error: Option<f64>,
}

pub const PUBLISHED_RESULTS: [PublishedResult; 3] = [
    PublishedResult {
        method: "qrm",
        accuracy: 0.4977,
        precision: 0.5577,
        recall: 0.5243,
        error: Some(0.12),
    },
    PublishedResult {
        method: "classifier",
        accuracy: 0.5636,
        precision: 0.5956,
        recall: 0.7022,
        error: None,
    },
    PublishedResult {
        method: "regressor",
        accuracy: 0.5542,
        precision: 0.6032,
        recall: 0.6129,
        error: None,
    },
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PublishedSplit {
    pub split: &'static str,
    pub first_day: &'static str,
    pub last_day: &'static str,
    pub options: usize,
}

pub const PUBLISHED_SPLITS: [PublishedSplit; 3] = [
    PublishedSplit {
        split: "train",
        first_day: "2016-09-14",
        last_day: "2018-05-31",
        options: 132_912,
    },
    PublishedSplit {
        split: "validation",
        first_day: "2018-06-01",
        last_day: "2018-06-29",
        options: 13_401,
    },
    PublishedSplit {
        split: "test",
        first_day: "2018-07-02",
        last_day: "2018-08-17",
        options: 23_549,
    },
];

/// Threshold chosen for the published classifier.
pub const PUBLISHED_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunCounts {
    pub options: usize,
    pub snapshots: usize,
    pub invalid_quotes: usize,
    pub windows: usize,
    pub solved: usize,
    pub skipped: SkipCounts,
    /// Solutions without a following quote day.
    pub unlabelled: usize,
    pub records: usize,
    /// Records whose option quotes do not vary.
    pub degenerate_records: usize,
    pub max_iteration_solves: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSummary {
    pub c: f64,
    pub validation_accuracy: Option<f64>,
    pub single_class: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: String,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub mean_relative_error: Option<f64>,
    pub n: usize,
    pub counts: ConfusionCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PublishedReference {
    pub results: Vec<PublishedResult>,
    pub splits: Vec<PublishedSplit>,
    pub threshold: f64,
}

/// Contents of `metrics.json`. Holds no timings or paths, so repeated runs
/// with one seed produce identical files.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub seed: u64,
    pub nx: usize,
    pub nt: usize,
    pub beta: f64,
    pub counts: RunCounts,
    pub split_boundaries: (i64, i64),
    pub split_sizes: SplitSizes,
    pub final_losses: (f64, f64),
    pub threshold: ThresholdSummary,
    pub methods: Vec<MethodRow>,
    pub published: PublishedReference,
}

impl MetricsReport {
    pub fn new(
        cfg: &PipelineConfig,
        market: &MarketData,
        solved: &SolveStage,
        features: &[FeatureRecord],
        unlabelled: usize,
        models: &TrainedModels,
        eval: &Evaluation,
    ) -> Self {
        let options = market
            .snapshots
            .iter()
            .map(|s| s.option_id.as_str())
            .collect::<std::collections::BTreeSet<_>>()
            .len();
        Self {
            seed: cfg.seed,
            nx: cfg.nx,
            nt: cfg.nt,
            beta: cfg.beta,
            counts: RunCounts {
                options,
                snapshots: market.snapshots.len(),
                invalid_quotes: market.invalid_quotes,
                windows: solved.windows,
                solved: solved.solutions.len(),
                skipped: solved.skipped,
                unlabelled,
                records: features.len(),
                degenerate_records: features.iter().filter(|r| crate::ml::normalize(r).1.degenerate).count(),
                max_iteration_solves: solved
                    .solutions
                    .iter()
                    .filter(|s| s.stop == crate::qrm::StopReason::MaxIterations)
                    .count(),
            },
            split_boundaries: eval.boundaries,
            split_sizes: eval.sizes,
            final_losses: models.final_losses,
            threshold: ThresholdSummary {
                c: eval.threshold.c,
                validation_accuracy: eval.threshold.accuracy,
                single_class: eval.threshold.single_class,
            },
            methods: eval
                .methods
                .iter()
                .map(|m| MethodRow {
                    method: m.method.clone(),
                    accuracy: m.metrics.accuracy,
                    precision: m.metrics.precision,
                    recall: m.metrics.recall,
                    mean_relative_error: m.metrics.mean_relative_error,
                    n: m.metrics.n,
                    counts: m.metrics.counts,
                })
                .collect(),
            published: PublishedReference {
                results: PUBLISHED_RESULTS.to_vec(),
                splits: PUBLISHED_SPLITS.to_vec(),
                threshold: PUBLISHED_THRESHOLD,
            },
        }
    }
}

/// Row of `threshold_curve.csv`; the `qrm` row has no threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub method: String,
    pub c: Option<f64>,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub predicted_positive: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrRow {
    pub method: String,
    pub c: Option<f64>,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoneynessCsvRow {
    pub method: String,
    pub bin: i64,
    pub lower: f64,
    pub upper: f64,
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: Option<f64>,
}

/// Classifier rows for `c = 0.00 ..= 1.00` followed by QRM's single point,
/// all on the validation split.
pub fn curve_rows(eval: &Evaluation) -> Vec<CurveRow> {
    let row = |method: &str, c: Option<f64>, k: &ConfusionCounts| CurveRow {
        method: method.into(),
        c,
        accuracy: k.accuracy(),
        precision: k.precision(),
        recall: k.recall(),
        predicted_positive: k.predicted_positive(),
    };
    let mut rows: Vec<CurveRow> = eval
        .threshold
        .curve
        .iter()
        .map(|p| row("classifier", Some(p.c), &p.counts))
        .collect();
    rows.push(row("qrm", None, &eval.qrm_validation));
    rows
}

pub fn pr_rows(eval: &Evaluation) -> Vec<PrRow> {
    curve_rows(eval)
        .into_iter()
        .map(|r| PrRow {
            method: r.method,
            c: r.c,
            recall: r.recall,
            precision: r.precision,
        })
        .collect()
}

pub fn moneyness_rows(eval: &Evaluation) -> Vec<MoneynessCsvRow> {
    eval.moneyness
        .iter()
        .flat_map(|(method, rows)| {
            rows.iter().map(move |r| MoneynessCsvRow {
                method: method.clone(),
                bin: r.bin,
                lower: r.lower,
                upper: r.upper,
                tp: r.counts.tp,
                tn: r.counts.tn,
                fp: r.counts.fp,
                fn_: r.counts.fn_,
                precision: r.precision,
            })
        })
        .collect()
}

pub fn write_csv_rows<W: Write, R: Serialize>(writer: W, rows: &[R]) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_solutions_csv<R: std::io::Read>(reader: R) -> Result<Vec<SolutionRow>, PipelineError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

pub(crate) fn create(path: &Path) -> Result<fs::File, PipelineError> {
    fs::File::create(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn create_dir(dir: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(|source| PipelineError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

pub fn write_model(path: &Path, params: &MlpParams<f64>) -> Result<(), PipelineError> {
    write_json(path, &params.to_document())
}

pub fn read_model(path: &Path) -> Result<MlpParams<f64>, PipelineError> {
    let text = fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(MlpParams::from_document(&serde_json::from_str(&text)?)?)
}

/// Writes the six report files into `dir`.
pub fn write_bundle(bundle: &ReportBundle, dir: &Path) -> Result<(), PipelineError> {
    create_dir(dir)?;
    write_json(&dir.join(REPORT_FILES[0]), &bundle.metrics)?;
    write_csv_rows(create(&dir.join(REPORT_FILES[1]))?, &curve_rows(&bundle.evaluation))?;
    write_csv_rows(create(&dir.join(REPORT_FILES[2]))?, &pr_rows(&bundle.evaluation))?;
    write_csv_rows(create(&dir.join(REPORT_FILES[3]))?, &moneyness_rows(&bundle.evaluation))?;
    write_csv_rows(create(&dir.join(REPORT_FILES[4]))?, &bundle.solutions)?;
    write_features_csv(create(&dir.join(REPORT_FILES[5]))?, &bundle.features)?;
    Ok(())
}
