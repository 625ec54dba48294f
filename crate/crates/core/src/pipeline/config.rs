use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::ml::TrainConfig;
use crate::qrm::{Grid, SolverConfig};

/// Flat JSON configuration of a full run. Every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Quote file; when absent a synthetic universe is simulated.
    pub input: Option<PathBuf>,

    pub n_options: usize,
    /// Quoted days per synthetic option.
    pub n_days: usize,
    /// Option `k` starts on day `k mod stagger_days`.
    pub stagger_days: usize,
    pub s0: f64,
    pub drift: f64,
    pub ivol_min: f64,
    pub ivol_max: f64,
    /// Strikes are drawn as `s0` times a moneyness in this range.
    pub moneyness_min: f64,
    pub moneyness_max: f64,
    pub maturity_min_days: usize,
    pub maturity_max_days: usize,
    pub stock_spread: f64,
    pub option_spread: f64,

    pub nx: usize,
    pub nt: usize,
    pub beta: f64,
    pub cg_tol: f64,
    pub cg_max_iter: usize,

    pub learning_rate: f64,
    pub epochs: usize,
    pub lambda: f64,
    pub hidden_width: usize,

    /// Records dated before this day train; defaults to the 70% date quantile.
    pub train_until: Option<i64>,
    /// Records dated before this day (and not training) validate; defaults to
    /// the 85% date quantile.
    pub validate_until: Option<i64>,

    pub out_dir: PathBuf,
    /// Worker threads for the solve stage; 0 uses every core.
    pub jobs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            input: None,
            n_options: 100,
            n_days: 12,
            stagger_days: 20,
            s0: 100.0,
            drift: 0.05,
            ivol_min: 0.2,
            ivol_max: 0.4,
            moneyness_min: 0.85,
            moneyness_max: 1.15,
            maturity_min_days: 40,
            maturity_max_days: 250,
            stock_spread: 0.001,
            option_spread: 0.05,
            nx: 32,
            nt: 16,
            beta: 0.01,
            cg_tol: 1e-8,
            cg_max_iter: 5000,
            learning_rate: 0.01,
            epochs: 5000,
            lambda: 1e-3,
            hidden_width: 32,
            train_until: None,
            validate_until: None,
            out_dir: PathBuf::from("reports"),
            jobs: 0,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            beta: self.beta,
            tol: self.cg_tol,
            max_iter: self.cg_max_iter,
        }
    }

    /// Training settings for one model; `seed` comes from the stage fan-out.
    pub fn train(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            lambda: self.lambda,
            seed,
            hidden_width: self.hidden_width,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |m: String| Err(PipelineError::Config(m));
        if let Some(p) = &self.input {
            if !p.exists() {
                return fail(format!("input {} does not exist", p.display()));
            }
        } else {
            if self.n_options == 0 {
                return fail("n_options must be positive".into());
            }
            if self.n_days < 4 {
                return fail(format!("n_days must be at least 4, got {}", self.n_days));
            }
            if self.stagger_days == 0 {
                return fail("stagger_days must be positive".into());
            }
            if !(self.ivol_min > 0.0 && self.ivol_min <= self.ivol_max) {
                return fail(format!("need 0 < ivol_min <= ivol_max, got {} and {}", self.ivol_min, self.ivol_max));
            }
            if !(self.moneyness_min > 0.0 && self.moneyness_min <= self.moneyness_max) {
                return fail(format!(
                    "need 0 < moneyness_min <= moneyness_max, got {} and {}",
                    self.moneyness_min, self.moneyness_max
                ));
            }
            if self.maturity_min_days <= self.n_days || self.maturity_min_days > self.maturity_max_days {
                return fail(format!(
                    "need n_days < maturity_min_days <= maturity_max_days, got {} < {} <= {}",
                    self.n_days, self.maturity_min_days, self.maturity_max_days
                ));
            }
        }
        Grid::<f64>::new(self.nx, self.nt, 1.0).map_err(|e| PipelineError::Config(e.to_string()))?;
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return fail(format!("beta must lie in (0, 1), got {}", self.beta));
        }
        if !(self.cg_tol > 0.0) || self.cg_max_iter == 0 {
            return fail("cg_tol and cg_max_iter must be positive".into());
        }
        self.train(0).validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if let (Some(a), Some(b)) = (self.train_until, self.validate_until) {
            if a > b {
                return fail(format!("train_until {a} is after validate_until {b}"));
            }
        }
        Ok(())
    }
}

/// Per-stage seed derived from the run seed and a fixed label.
pub fn stage_seed(seed: u64, label: &str) -> u64 {
    // FNV-1a over the label, then the splitmix64 finalizer
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = h ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
