//! End-to-end run: impute, split, train, prescribe, evaluate.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::censoring::{self, DEFAULT_K_GRID};
use crate::cohort::{
    impute_missing_features, split, Cohort, SplitFractions, SynthConfig, SyntheticOracle, DEFAULT_FEATURE_K,
};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, EvaluationReport};
use crate::learners::{LearnerConfig, Method};
use crate::prescriber::{prescribe_cohort, Prescription};
use crate::tae_regression::{train_bank, BankConfig, ModelBank, DEFAULT_MIN_ARM_SIZE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CensoringConfig {
    /// Fixed neighbour count; when absent `k` is chosen from `k_grid` by CV.
    pub k: Option<usize>,
    pub k_grid: Vec<usize>,
    pub folds: usize,
}

impl Default for CensoringConfig {
    fn default() -> Self {
        CensoringConfig {
            k: Some(censoring::DEFAULT_K),
            k_grid: DEFAULT_K_GRID.to_vec(),
            folds: 5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub data: Option<PathBuf>,
    pub oracle: Option<PathBuf>,
    pub bank: Option<PathBuf>,
    pub prescriptions: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub split: SplitFractions,
    pub feature_k: usize,
    pub censoring: CensoringConfig,
    pub methods: Vec<Method>,
    pub learners: LearnerConfig,
    pub min_arm_size: usize,
    pub synth: SynthConfig,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            split: SplitFractions::default(),
            feature_k: DEFAULT_FEATURE_K,
            censoring: CensoringConfig::default(),
            methods: Method::ALL.to_vec(),
            learners: LearnerConfig::default(),
            min_arm_size: DEFAULT_MIN_ARM_SIZE,
            synth: SynthConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

/// Independent seed per pipeline stage.
pub fn stage_seed(seed: u64, stage: u64) -> u64 {
    seed ^ stage.wrapping_mul(0xD1B5_4A32_D192_ED03)
}

pub const STAGE_SPLIT: u64 = 1;
pub const STAGE_K_SELECT: u64 = 2;
pub const STAGE_BANK: u64 = 3;
pub const STAGE_VALIDATE: u64 = 4;

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        self.learners.validate()?;
        self.synth.validate()?;
        if self.feature_k == 0 {
            return Err(Error::InvalidConfig("feature_k must be >= 1".into()));
        }
        match self.censoring.k {
            Some(0) => return Err(Error::InvalidConfig("censoring.k must be >= 1".into())),
            None if self.censoring.k_grid.is_empty() || self.censoring.k_grid.contains(&0) => {
                return Err(Error::InvalidConfig(
                    "censoring.k_grid must be non-empty with k >= 1".into(),
                ))
            }
            None if self.censoring.folds < 2 => {
                return Err(Error::InvalidConfig("censoring.folds must be >= 2".into()))
            }
            _ => {}
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("methods must not be empty".into()));
        }
        let mut seen = self.methods.clone();
        seen.sort_by_key(|m| *m as u8);
        seen.dedup();
        if seen.len() != self.methods.len() {
            return Err(Error::InvalidConfig("methods must not repeat".into()));
        }
        if self.min_arm_size < 2 {
            return Err(Error::InvalidConfig("min_arm_size must be >= 2".into()));
        }
        Ok(())
    }

    pub fn bank_config(&self) -> BankConfig {
        BankConfig {
            methods: self.methods.clone(),
            learners: self.learners.clone(),
            min_arm_size: self.min_arm_size,
            seed: stage_seed(self.seed, STAGE_BANK),
        }
    }
}

/// Splits unless every record already carries a tag.
pub fn ensure_split(cohort: &Cohort, config: &RunConfig) -> Result<Cohort> {
    if !cohort.is_empty() && cohort.records.iter().all(|r| r.split.is_some()) {
        return Ok(cohort.clone());
    }
    split(cohort, config.split, stage_seed(config.seed, STAGE_SPLIT))
}

/// Split, fill missing features, then impute censored outcomes.
/// Returns the prepared cohort and the neighbour count used.
pub fn prepare_cohort(cohort: &Cohort, config: &RunConfig) -> Result<(Cohort, usize)> {
    let c = ensure_split(cohort, config)?;
    let c = impute_missing_features(&c, config.feature_k)?;
    let k = match config.censoring.k {
        Some(k) => k,
        None => censoring::cv_select_k(
            &c,
            &config.censoring.k_grid,
            config.censoring.folds,
            stage_seed(config.seed, STAGE_K_SELECT),
            &censoring::logistic_auc_objective,
        )?,
    };
    Ok((censoring::impute_all(&c, k)?, k))
}

pub struct PipelineOutput {
    pub cohort: Cohort,
    pub k: usize,
    pub bank: ModelBank,
    pub prescriptions: Vec<Prescription>,
    pub report: EvaluationReport,
}

pub fn run_pipeline(cohort: &Cohort, oracle: Option<&SyntheticOracle>, config: &RunConfig) -> Result<PipelineOutput> {
    config.validate()?;
    let (cohort, k) = prepare_cohort(cohort, config)?;
    let bank = train_bank(&cohort, &config.bank_config())?;
    let prescriptions = prescribe_cohort(&cohort, &bank)?;
    let report = evaluate(&cohort, &prescriptions, oracle)?;
    Ok(PipelineOutput {
        cohort,
        k,
        bank,
        prescriptions,
        report,
    })
}
