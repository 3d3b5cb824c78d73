//! One TAE regressor per (learner family, treatment arm).
//!
//! Each entry is trained only on training-split patients who received that
//! arm, using patient covariates without any treatment flag. Targets are
//! days; estimates leave the bank in years.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, FeatureEncoder, FeatureSet, Features, TreatmentArm, DAYS_PER_YEAR, HORIZON_DAYS};
use crate::error::{Error, Result};
use crate::learners::{fit_method, LearnerConfig, LearnerSpec, Method, Model, Task};
use crate::metrics;

pub const DEFAULT_MIN_ARM_SIZE: usize = 50;
/// Lower bound on a method's voting weight, so weak methods still break exact ties.
pub const MIN_WEIGHT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BankConfig {
    pub methods: Vec<Method>,
    pub learners: LearnerConfig,
    pub min_arm_size: usize,
    pub seed: u64,
}

impl Default for BankConfig {
    fn default() -> Self {
        BankConfig {
            methods: Method::ALL.to_vec(),
            learners: LearnerConfig::default(),
            min_arm_size: DEFAULT_MIN_ARM_SIZE,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankEntry {
    pub method: Method,
    pub arm: TreatmentArm,
    pub model: Model,
    /// Out-of-sample R² on the arm's test patients.
    pub r2: f64,
    pub n_train: usize,
    pub n_test: usize,
    /// Hyper-parameters picked by cross-validation.
    pub spec: Option<LearnerSpec>,
}

/// Trained regressors, method-major: entry `(m, p)` sits at `m * 5 + p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBank {
    pub methods: Vec<Method>,
    pub arms: Vec<TreatmentArm>,
    pub encoder: FeatureEncoder,
    pub entries: Vec<BankEntry>,
}

/// Predicted TAE in years, `values[m][p]` for method `methods[m]` and arm `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateMatrix {
    pub methods: Vec<Method>,
    pub arms: Vec<TreatmentArm>,
    pub values: Vec<[f64; 5]>,
}

impl EstimateMatrix {
    pub fn new(methods: Vec<Method>, values: Vec<[f64; 5]>) -> Result<Self> {
        if methods.len() != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} methods vs {} matrix rows",
                methods.len(),
                values.len()
            )));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("estimate matrix entries must be finite".into()));
        }
        Ok(EstimateMatrix {
            methods,
            arms: TreatmentArm::ALL.to_vec(),
            values,
        })
    }

    pub fn n_methods(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, method: usize, arm: TreatmentArm) -> f64 {
        self.values[method][arm.index()]
    }
}

pub fn days_to_years(days: f64) -> f64 {
    days / DAYS_PER_YEAR
}

fn clamp_days(days: f64) -> f64 {
    days.clamp(1.0, HORIZON_DAYS)
}

impl ModelBank {
    pub fn entry(&self, method: Method, arm: TreatmentArm) -> Option<&BankEntry> {
        let m = self.methods.iter().position(|&x| x == method)?;
        self.entries.get(m * TreatmentArm::ALL.len() + arm.index())
    }

    /// Checks the method-major layout and that every entry is present.
    pub fn validate(&self) -> Result<()> {
        if self.arms != TreatmentArm::ALL {
            return Err(Error::InvalidConfig(
                "bank arms must list all five arms in order".into(),
            ));
        }
        if self.entries.len() != self.methods.len() * self.arms.len() {
            return Err(Error::MissingModel(format!(
                "{} entries for {} methods",
                self.entries.len(),
                self.methods.len()
            )));
        }
        for (mi, &m) in self.methods.iter().enumerate() {
            for &a in TreatmentArm::ALL {
                let e = &self.entries[mi * 5 + a.index()];
                if e.method != m || e.arm != a {
                    return Err(Error::MissingModel(format!("{m} / {a}")));
                }
            }
        }
        Ok(())
    }

    pub fn encode(&self, features: &Features) -> Vec<f64> {
        self.encoder.encode_filled(features)
    }

    /// Per-method, per-arm TAE estimates in years. Missing optional fields
    /// are filled with training means/modes. The patient's own treatment
    /// never enters the computation.
    pub fn estimate_matrix(&self, features: &Features) -> EstimateMatrix {
        self.estimate_from_row(&self.encode(features))
    }

    pub fn estimate_from_row(&self, row: &[f64]) -> EstimateMatrix {
        let values = self
            .entries
            .chunks(TreatmentArm::ALL.len())
            .map(|arms| std::array::from_fn(|p| days_to_years(clamp_days(arms[p].model.predict_row(row)))))
            .collect();
        EstimateMatrix {
            methods: self.methods.clone(),
            arms: TreatmentArm::ALL.to_vec(),
            values,
        }
    }

    /// Out-of-sample R² by method (rows) and arm (columns).
    pub fn r2_table(&self) -> Vec<[f64; 5]> {
        self.entries
            .chunks(TreatmentArm::ALL.len())
            .map(|arms| std::array::from_fn(|p| arms[p].r2))
            .collect()
    }

    /// Voting weight per method: mean out-of-sample R² across arms, floored
    /// at [`MIN_WEIGHT`].
    pub fn method_weights(&self) -> Vec<f64> {
        self.r2_table()
            .iter()
            .map(|r| (r.iter().sum::<f64>() / r.len() as f64).max(MIN_WEIGHT))
            .collect()
    }
}

fn entry_seed(seed: u64, method: Method, arm: TreatmentArm) -> u64 {
    seed.wrapping_mul(31)
        .wrapping_add((method as u64) * 8 + arm.index() as u64)
}

/// Trains the full method × arm bank.
pub fn train_bank(cohort: &Cohort, config: &BankConfig) -> Result<ModelBank> {
    if config.methods.is_empty() {
        return Err(Error::InvalidConfig("no methods selected".into()));
    }
    config.learners.validate()?;
    let encoder = cohort.encoder(FeatureSet::Covariates)?;
    let train = cohort.training_indices();
    let test = cohort.test_indices();
    let target = |i: usize| -> Result<f64> {
        let r = &cohort.records[i];
        r.outcome.tae_days.ok_or_else(|| Error::MissingOutcome(r.id.clone()))
    };

    struct ArmData {
        x_train: ndarray::Array2<f64>,
        y_train: Vec<f64>,
        x_test: ndarray::Array2<f64>,
        y_test: Vec<f64>,
    }
    let mut arm_data = Vec::with_capacity(5);
    for &arm in TreatmentArm::ALL {
        let tr: Vec<usize> = train
            .iter()
            .copied()
            .filter(|&i| cohort.records[i].treatment == arm)
            .collect();
        let te: Vec<usize> = test
            .iter()
            .copied()
            .filter(|&i| cohort.records[i].treatment == arm)
            .collect();
        if tr.len() < config.min_arm_size {
            return Err(Error::ArmTooSmall {
                arm,
                count: tr.len(),
                min: config.min_arm_size,
            });
        }
        if te.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "arm {arm} has {} test records; R² needs at least 2 (assign a test split)",
                te.len()
            )));
        }
        arm_data.push(ArmData {
            x_train: encoder.matrix(cohort, &tr)?,
            y_train: tr.iter().map(|&i| target(i)).collect::<Result<_>>()?,
            x_test: encoder.matrix(cohort, &te)?,
            y_test: te.iter().map(|&i| target(i)).collect::<Result<_>>()?,
        });
    }

    let jobs: Vec<(Method, TreatmentArm)> = config
        .methods
        .iter()
        .flat_map(|&m| TreatmentArm::ALL.iter().map(move |&a| (m, a)))
        .collect();
    let entries: Vec<BankEntry> = jobs
        .par_iter()
        .map(|&(method, arm)| {
            let d = &arm_data[arm.index()];
            let fitted = fit_method(
                method,
                Task::Regression,
                &d.x_train,
                &d.y_train,
                &config.learners,
                entry_seed(config.seed, method, arm),
            )?;
            let pred: Vec<f64> = fitted.model.predict(&d.x_test).into_iter().map(clamp_days).collect();
            let r2 = metrics::r2(&pred, &d.y_test)?;
            log::debug!("{method} / {arm}: R² = {r2:.4}");
            Ok(BankEntry {
                method,
                arm,
                model: fitted.model,
                r2,
                n_train: d.y_train.len(),
                n_test: d.y_test.len(),
                spec: Some(fitted.spec),
            })
        })
        .collect::<Result<_>>()?;

    Ok(ModelBank {
        methods: config.methods.clone(),
        arms: TreatmentArm::ALL.to_vec(),
        encoder,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{generate_synthetic_cohort, split, SplitFractions, SynthConfig};
    use crate::learners::LinearModel;

    #[test]
    fn small_arm_is_named() {
        let (c, _) = generate_synthetic_cohort(&SynthConfig {
            n: 200,
            censoring_rate: 0.0,
            ..SynthConfig::default()
        })
        .unwrap();
        let c = split(&c, SplitFractions::default(), 1).unwrap();
        let err = train_bank(&c, &BankConfig::default()).unwrap_err();
        assert!(matches!(err, Error::ArmTooSmall { .. }), "{err}");
    }

    #[test]
    fn weights_are_mean_r2_with_floor() {
        let (c, _) = generate_synthetic_cohort(&SynthConfig {
            n: 20,
            ..SynthConfig::default()
        })
        .unwrap();
        let encoder = c.encoder(FeatureSet::Covariates).unwrap();
        let stub = |m, a: TreatmentArm, r2| BankEntry {
            method: m,
            arm: a,
            model: Model::Linear(LinearModel {
                weights: vec![0.0; encoder.width()],
                intercept: 1000.0,
                lambda: 0.0,
            }),
            r2,
            n_train: 0,
            n_test: 0,
            spec: None,
        };
        let mut entries = Vec::new();
        for (m, r2) in [(Method::Cart, 0.5), (Method::Linear, -0.2)] {
            for &a in TreatmentArm::ALL {
                entries.push(stub(m, a, r2));
            }
        }
        let bank = ModelBank {
            methods: vec![Method::Cart, Method::Linear],
            arms: TreatmentArm::ALL.to_vec(),
            encoder,
            entries,
        };
        bank.validate().unwrap();
        assert_eq!(bank.method_weights(), vec![0.5, MIN_WEIGHT]);
        let m = bank.estimate_matrix(&c.records[0].features);
        assert!((m.values[0][0] - 1000.0 / 365.0).abs() < 1e-15);
    }
}
