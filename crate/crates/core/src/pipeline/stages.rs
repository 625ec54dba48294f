//! On-disk layout of a run. Every stage reads its inputs from and writes its
//! outputs to a run directory, so any stage can be repeated on its own.
//!
//! ```text
//! <root>/stages/  market.csv ingest.json solutions.csv solve.json
//!                 features.csv features.json train.json
//! <root>/models/  classifier.json regressor.json
//! <root>/report/  the six report files
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::report::{create, create_dir, read_model, read_solutions_csv, write_bundle, write_csv_rows, write_json, write_model};
use super::{
    evaluate_stage, MarketData, MetricsReport, PipelineConfig, PipelineError, ReportBundle, SkipCounts, SolveStage,
    TrainedModels,
};
use crate::market_data::{read_market_csv, write_market_csv};
use crate::ml::{read_features_csv, write_features_csv, FeatureRecord, SplitSizes};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub invalid_quotes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub windows: usize,
    pub skipped: SkipCounts,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub unlabelled: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub boundaries: (i64, i64),
    pub sizes: SplitSizes,
    pub final_losses: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunDir {
    root: PathBuf,
}

fn open(path: &Path) -> Result<fs::File, PipelineError> {
    fs::File::open(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    Ok(serde_json::from_reader(std::io::BufReader::new(open(path)?))?)
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn stages(&self) -> PathBuf {
        self.root.join("stages")
    }

    pub fn models(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }

    fn stage_file(&self, name: &str) -> Result<PathBuf, PipelineError> {
        create_dir(&self.stages())?;
        Ok(self.stages().join(name))
    }

    pub fn save_market(&self, market: &MarketData) -> Result<(), PipelineError> {
        let f = create(&self.stage_file("market.csv")?)?;
        write_market_csv(std::io::BufWriter::new(f), &market.snapshots, &market.calendar, &market.expiries)?;
        write_json(
            &self.stage_file("ingest.json")?,
            &IngestSummary {
                invalid_quotes: market.invalid_quotes,
            },
        )
    }

    pub fn load_market(&self) -> Result<MarketData, PipelineError> {
        let report = read_market_csv(open(&self.stages().join("market.csv"))?)?;
        let summary: IngestSummary = read_json(&self.stages().join("ingest.json"))?;
        Ok(MarketData {
            snapshots: report.snapshots,
            calendar: report.calendar,
            expiries: report.expiries,
            invalid_quotes: summary.invalid_quotes + report.skipped,
        })
    }

    pub fn save_solutions(&self, solved: &SolveStage) -> Result<(), PipelineError> {
        write_csv_rows(create(&self.stage_file("solutions.csv")?)?, &solved.solutions)?;
        write_json(
            &self.stage_file("solve.json")?,
            &SolveSummary {
                windows: solved.windows,
                skipped: solved.skipped,
            },
        )
    }

    pub fn load_solutions(&self) -> Result<SolveStage, PipelineError> {
        let solutions = read_solutions_csv(open(&self.stages().join("solutions.csv"))?)?;
        let summary: SolveSummary = read_json(&self.stages().join("solve.json"))?;
        Ok(SolveStage {
            windows: summary.windows,
            solutions,
            skipped: summary.skipped,
        })
    }

    pub fn save_features(&self, features: &[FeatureRecord], unlabelled: usize) -> Result<(), PipelineError> {
        write_features_csv(create(&self.stage_file("features.csv")?)?, features)?;
        write_json(&self.stage_file("features.json")?, &FeatureSummary { unlabelled })
    }

    pub fn load_features(&self) -> Result<(Vec<FeatureRecord>, usize), PipelineError> {
        let features = read_features_csv(open(&self.stages().join("features.csv"))?)?;
        let summary: FeatureSummary = read_json(&self.stages().join("features.json"))?;
        Ok((features, summary.unlabelled))
    }

    pub fn save_models(&self, models: &TrainedModels) -> Result<(), PipelineError> {
        create_dir(&self.models())?;
        write_model(&self.models().join("classifier.json"), &models.classifier)?;
        write_model(&self.models().join("regressor.json"), &models.regressor)?;
        write_json(
            &self.stage_file("train.json")?,
            &TrainSummary {
                boundaries: models.boundaries,
                sizes: models.sizes,
                final_losses: models.final_losses,
            },
        )
    }

    pub fn load_models(&self) -> Result<TrainedModels, PipelineError> {
        let summary: TrainSummary = read_json(&self.stages().join("train.json"))?;
        Ok(TrainedModels {
            classifier: read_model(&self.models().join("classifier.json"))?,
            regressor: read_model(&self.models().join("regressor.json"))?,
            boundaries: summary.boundaries,
            sizes: summary.sizes,
            final_losses: summary.final_losses,
        })
    }

    /// Evaluates the persisted models and writes the report.
    pub fn backtest(&self, cfg: &PipelineConfig) -> Result<ReportBundle, PipelineError> {
        let market = self.load_market()?;
        let solved = self.load_solutions()?;
        let (features, unlabelled) = self.load_features()?;
        let models = self.load_models()?;
        let evaluation = evaluate_stage(&features, &models.classifier, &models.regressor, cfg)?;
        let metrics = MetricsReport::new(cfg, &market, &solved, &features, unlabelled, &models, &evaluation);
        let bundle = ReportBundle {
            metrics,
            evaluation,
            solutions: solved.solutions,
            features,
            classifier: models.classifier,
            regressor: models.regressor,
        };
        write_bundle(&bundle, &self.report())?;
        Ok(bundle)
    }
}
