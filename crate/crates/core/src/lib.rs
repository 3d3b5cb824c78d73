//! Censored-outcome imputation, per-arm TAE regression, multi-model treatment
//! voting and counterfactual evaluation for coronary artery disease cohorts.

pub mod censoring;
pub mod cohort;
pub mod error;
pub mod evaluation;
pub mod fixtures;
pub mod learners;
pub mod metrics;
pub mod pipeline;
pub mod prescriber;
pub mod risk;
pub mod store;
pub mod tae_regression;

pub use cohort::{
    Cohort, Features, Gender, MedFlag, MedFlags, Outcome, PatientRecord, SplitFractions, SplitTag, SynthConfig,
    SyntheticOracle, TreatmentArm,
};
pub use error::{Error, Result};
pub use evaluation::EvaluationReport;
pub use learners::{LearnerConfig, Method, Model, Task};
pub use pipeline::{run_pipeline, RunConfig};
pub use prescriber::{prescribe, vote, Prescription, Vote};
pub use store::{load_bank, save_bank, BankManifest};
pub use tae_regression::{train_bank, BankConfig, EstimateMatrix, ModelBank};
