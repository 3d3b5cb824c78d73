//! Ten-year adverse-event classifiers across learner families.
//!
//! Risk models see every encoded feature including the medication and
//! procedure flags; only the prescriptive regressions drop those.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, FeatureEncoder, FeatureSet, Outcome, PatientRecord, HORIZON_DAYS};
use crate::error::{Error, Result};
use crate::learners::{feature_importance, fit_method, LearnerConfig, Method, Model, Task};
use crate::metrics;

/// 1 iff an adverse event happens within the horizon (inclusive).
pub fn label_event(outcome: &Outcome) -> Result<bool> {
    let tae = outcome.tae_days.ok_or_else(|| Error::MissingOutcome(String::new()))?;
    Ok(outcome.event_occurred && tae <= HORIZON_DAYS)
}

pub(crate) fn record_label(r: &PatientRecord) -> Result<bool> {
    label_event(&r.outcome).map_err(|_| Error::MissingOutcome(r.id.clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RiskConfig {
    pub methods: Vec<Method>,
    pub learners: LearnerConfig,
    pub seed: u64,
}

impl Default for RiskConfig {
    fn default() -> Self {
        RiskConfig {
            methods: Method::ALL.to_vec(),
            learners: LearnerConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRow {
    pub method: Method,
    pub name: String,
    pub in_sample_auc: f64,
    pub out_of_sample_auc: f64,
    pub in_sample_accuracy: f64,
    pub out_of_sample_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureWeight {
    pub feature: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub rows: Vec<RiskRow>,
    /// Accuracy of always predicting the training majority class.
    pub baseline_in_sample: f64,
    pub baseline_out_of_sample: f64,
    pub n_train: usize,
    pub n_test: usize,
    /// Impurity importance of the interpretable tree, when trained.
    pub importance: Vec<FeatureWeight>,
}

impl RiskReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,in_sample_auc,out_of_sample_auc,in_sample_accuracy,out_of_sample_accuracy\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.method, r.in_sample_auc, r.out_of_sample_auc, r.in_sample_accuracy, r.out_of_sample_accuracy
            );
        }
        let _ = writeln!(
            s,
            "baseline,,,{},{}",
            self.baseline_in_sample, self.baseline_out_of_sample
        );
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<22} {:>10} {:>10} {:>10} {:>10}",
            "Method", "AUC in", "AUC out", "Acc in", "Acc out"
        );
        let pct = |v: f64| format!("{:.2}%", v * 100.0);
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<22} {:>10} {:>10} {:>10} {:>10}",
                r.name,
                pct(r.in_sample_auc),
                pct(r.out_of_sample_auc),
                pct(r.in_sample_accuracy),
                pct(r.out_of_sample_accuracy)
            );
        }
        let _ = writeln!(
            s,
            "{:<22} {:>10} {:>10} {:>10} {:>10}",
            "Baseline",
            "",
            "",
            pct(self.baseline_in_sample),
            pct(self.baseline_out_of_sample)
        );
        if !self.importance.is_empty() {
            let _ = writeln!(s, "\nFeature importance (interpretable tree)");
            for w in self.importance.iter().filter(|w| w.weight > 0.0) {
                let _ = writeln!(s, "  {:<34} {:.4}", w.feature, w.weight);
            }
        }
        s
    }
}

pub struct RiskModels {
    pub encoder: FeatureEncoder,
    pub models: Vec<(Method, Model)>,
    pub report: RiskReport,
}

/// Tunes each family on the training split and scores it on the test split.
pub fn train_risk_models(cohort: &Cohort, config: &RiskConfig) -> Result<RiskModels> {
    let train = cohort.training_indices();
    let test = cohort.test_indices();
    if test.is_empty() {
        return Err(Error::InvalidConfig(
            "risk models need a test split; run split first".into(),
        ));
    }
    let encoder = cohort.encoder(FeatureSet::Full)?;
    let labels = |idx: &[usize]| -> Result<Vec<f64>> {
        idx.iter()
            .map(|&i| record_label(&cohort.records[i]).map(|b| b as u8 as f64))
            .collect()
    };
    let (x_tr, y_tr) = (encoder.matrix(cohort, &train)?, labels(&train)?);
    let (x_te, y_te) = (encoder.matrix(cohort, &test)?, labels(&test)?);
    if y_tr.iter().all(|&v| v == y_tr[0]) {
        return Err(Error::SingleClass);
    }
    let b_tr: Vec<bool> = y_tr.iter().map(|&v| v == 1.0).collect();
    let b_te: Vec<bool> = y_te.iter().map(|&v| v == 1.0).collect();

    let fitted: Vec<(Method, Model)> = config
        .methods
        .par_iter()
        .map(|&m| {
            fit_method(m, Task::Classification, &x_tr, &y_tr, &config.learners, config.seed).map(|f| (m, f.model))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (m, model) in &fitted {
        let p_tr = model.predict(&x_tr);
        let p_te = model.predict(&x_te);
        rows.push(RiskRow {
            method: *m,
            name: m.display_name(Task::Classification).to_string(),
            in_sample_auc: metrics::auc(&p_tr, &b_tr)?,
            out_of_sample_auc: metrics::auc(&p_te, &b_te)?,
            in_sample_accuracy: metrics::accuracy(&p_tr, &b_tr),
            out_of_sample_accuracy: metrics::accuracy(&p_te, &b_te),
        });
    }

    let positives = b_tr.iter().filter(|&&b| b).count();
    let majority = positives * 2 > b_tr.len();
    let rate = |b: &[bool]| b.iter().filter(|&&v| v == majority).count() as f64 / b.len() as f64;
    let names = encoder.layout.names();
    let importance = fitted
        .iter()
        .find(|(m, _)| *m == Method::InterpretableTree)
        .map(|(_, model)| feature_importance(model))
        .transpose()?
        .unwrap_or_default()
        .into_iter()
        .map(|(j, w)| FeatureWeight {
            feature: names[j].clone(),
            weight: w,
        })
        .collect();

    let report = RiskReport {
        rows,
        baseline_in_sample: rate(&b_tr),
        baseline_out_of_sample: rate(&b_te),
        n_train: train.len(),
        n_test: test.len(),
        importance,
    };
    Ok(RiskModels {
        encoder,
        models: fitted,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_examples() {
        let mut o = Outcome::event(HORIZON_DAYS);
        assert!(label_event(&o).unwrap());
        assert!(!label_event(&Outcome::event_free()).unwrap());
        o = Outcome::censored_at(1500.0);
        assert!(label_event(&o).is_err());
        o.tae_days = Some(2000.0);
        o.imputed = true;
        o.event_occurred = true;
        assert!(label_event(&o).unwrap());
    }
}
