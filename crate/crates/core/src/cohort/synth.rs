//! Synthetic cohorts with a known counterfactual outcome for every arm.
//!
//! Covariates follow the scales of a typical coronary cohort (age ≈ 63 ± 13
//! years, LDL ≈ 113 ± 29 mg/dL, systolic pressure ≈ 138 ± 21 mmHg, ...). The
//! true time to adverse event under arm `p` is
//!
//! ```text
//! years = base(x) + effect_p(x) + noise_p,   noise_p ~ N(0, noise_level²)
//! ```
//!
//! with `base` and `effect_p` linear in standardized covariates, converted to
//! whole days and clipped to `[1, 3650]`. Treatment effects are heterogeneous
//! so the best arm varies between patients. The logging policy decides which
//! arm is observed; censoring then hides a fraction of outcomes.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use super::{
    Cohort, Ethnicity, Features, Gender, Language, MaritalStatus, MedFlag, MedFlags, Outcome, PatientRecord,
    TreatmentArm, DAYS_PER_YEAR, HORIZON_DAYS,
};
use crate::error::{Error, Result};

/// How the observed arm is assigned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LoggingPolicy {
    /// Every arm equally likely, independent of covariates.
    Uniform,
    /// Softmax over covariate-dependent preference scores that do not track
    /// the true treatment effects; `strength` scales the scores.
    Biased { strength: f64 },
}

impl LoggingPolicy {
    pub fn describe(&self) -> String {
        match self {
            LoggingPolicy::Uniform => "uniform: each arm with probability 1/5".to_string(),
            LoggingPolicy::Biased { strength } => format!(
                "biased: softmax({strength} * score), scores favor CABG for older men, \
                 PCI and Drugs3 for older patients, Drugs1 for low LDL, Drugs2 for diabetics"
            ),
        }
    }

    fn probabilities(&self, x: &Standardized) -> [f64; 5] {
        match *self {
            LoggingPolicy::Uniform => [0.2; 5],
            LoggingPolicy::Biased { strength } => {
                let scores = [
                    -0.5 + 0.8 * x.male + 0.5 * x.age,
                    0.2 + 0.6 * x.age - 0.5 * x.smoking,
                    0.6 - 0.5 * x.ldl,
                    0.3 * x.diabetic,
                    -0.2 + 0.5 * x.age,
                ];
                let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = scores.iter().map(|s| (strength * (s - max)).exp()).collect();
                let total: f64 = w.iter().sum();
                std::array::from_fn(|i| w[i] / total)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n: usize,
    pub seed: u64,
    /// Standard deviation of per-arm outcome noise, in years.
    pub noise_level: f64,
    /// Fraction of records whose outcome is right-censored.
    pub censoring_rate: f64,
    /// Probability that each optional field is blanked.
    pub missing_rate: f64,
    pub logging_policy: LoggingPolicy,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n: 2000,
            seed: 0,
            noise_level: 0.75,
            censoring_rate: 0.3,
            missing_rate: 0.05,
            logging_policy: LoggingPolicy::Biased { strength: 1.0 },
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n == 0 {
            return bad("n must be >= 1");
        }
        if !(self.noise_level.is_finite() && self.noise_level >= 0.0) {
            return bad("noise_level must be >= 0");
        }
        if !(0.0..1.0).contains(&self.censoring_rate) {
            return bad("censoring_rate must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return bad("missing_rate must lie in [0, 1)");
        }
        if let LoggingPolicy::Biased { strength } = self.logging_policy {
            if !strength.is_finite() {
                return bad("logging policy strength must be finite");
            }
        }
        Ok(())
    }
}

/// True outcome of every arm for every synthetic patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOracle {
    pub logging_policy: String,
    pub patients: Vec<OracleEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleEntry {
    pub id: String,
    /// Days, in [`TreatmentArm::ALL`] order.
    pub tae_days: [f64; 5],
}

impl SyntheticOracle {
    pub fn get(&self, id: &str) -> Option<&[f64; 5]> {
        self.patients.iter().find(|p| p.id == id).map(|p| &p.tae_days)
    }

    pub fn index(&self) -> std::collections::HashMap<&str, &[f64; 5]> {
        self.patients.iter().map(|p| (p.id.as_str(), &p.tae_days)).collect()
    }
}

/// Covariates on a common scale, used by both the outcome model and the
/// logging policy.
struct Standardized {
    age: f64,
    sbp: f64,
    ldl: f64,
    hdl: f64,
    bmi: f64,
    male: f64,
    diabetic: f64,
    smoking: f64,
    fh_hypertension: f64,
}

impl Standardized {
    fn of(f: &Features) -> Self {
        let flag = |b: bool| b as u8 as f64;
        Standardized {
            age: (f.age - 63.0) / 13.0,
            sbp: (f.systolic_bp_median.unwrap() - 138.0) / 21.0,
            ldl: (f.ldl.unwrap() - 113.0) / 29.0,
            hdl: (f.hdl.unwrap() - 43.0) / 11.0,
            bmi: (f.bmi.unwrap() - 30.0) / 6.0,
            male: flag(f.gender == Gender::Male),
            diabetic: flag(f.diabetic),
            smoking: flag(f.smoking),
            fh_hypertension: flag(f.family_history_hypertension),
        }
    }

    fn base_years(&self) -> f64 {
        5.5 - 1.2 * self.age - 0.7 * self.diabetic - 0.5 * self.smoking - 0.3 * self.sbp - 0.2 * self.ldl
            + 0.2 * self.hdl
            - 0.1 * self.bmi
            - 0.2 * self.fh_hypertension
    }

    fn effect_years(&self, arm: TreatmentArm) -> f64 {
        match arm {
            TreatmentArm::Cabg => -0.4 + 1.0 * self.diabetic + 0.5 * self.age,
            TreatmentArm::Pci => 0.3 + 0.5 * self.smoking - 0.5 * self.age,
            TreatmentArm::Drugs1 => 0.2 + 0.5 * self.ldl + 0.2 * self.sbp,
            TreatmentArm::Drugs2 => 0.1 + 0.6 * self.sbp - 0.3 * self.ldl,
            TreatmentArm::Drugs3 => 0.6 * (1.0 - self.male) - 0.2 * self.age,
        }
    }
}

fn years_to_days(years: f64) -> f64 {
    (years * DAYS_PER_YEAR).round().clamp(1.0, HORIZON_DAYS)
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, items: &[(T, f64)]) -> T {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(item, p) in items {
        acc += p;
        if u < acc {
            return item;
        }
    }
    items.last().unwrap().0
}

fn clipped_normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let v = Normal::new(mean, sd).unwrap().sample(rng);
    // One decimal, like charted measurements.
    ((v.clamp(lo, hi)) * 10.0).round() / 10.0
}

const MED_PREVALENCE: [(MedFlag, f64); 11] = [
    (MedFlag::AceInhibitors, 0.46),
    (MedFlag::AdrenergicReceptors, 0.064),
    (MedFlag::AngiotensinAgonists, 0.136),
    (MedFlag::Antiarrhythmics, 0.137),
    (MedFlag::CardiacGlycosides, 0.025),
    (MedFlag::Diuretics, 0.479),
    (MedFlag::LipidLowering, 0.053),
    (MedFlag::MuscleRelaxants, 0.048),
    (MedFlag::Nitrates, 0.77),
    (MedFlag::OtherAntihypertensive, 0.114),
    (MedFlag::PhosphodiesteraseInhibitors, 0.036),
];

fn arm_flags(rng: &mut ChaCha8Rng, arm: TreatmentArm) -> MedFlags {
    let mut flags = MedFlags::default();
    for (m, p) in MED_PREVALENCE {
        flags.set(m, rng.random_bool(p));
    }
    let blockers = rng.random_bool(0.68);
    let statins = rng.random_bool(0.59);
    let pci = rng.random_bool(0.2);
    let (cabg, pci, blockers, statins) = match arm {
        TreatmentArm::Cabg => (true, pci, blockers, statins),
        TreatmentArm::Pci => (false, true, blockers, statins),
        TreatmentArm::Drugs1 => (false, false, true, true),
        TreatmentArm::Drugs2 => (false, false, true, false),
        TreatmentArm::Drugs3 => (false, false, false, statins),
    };
    flags
        .with(MedFlag::Cabg, cabg)
        .with(MedFlag::Pci, pci)
        .with(MedFlag::Blockers, blockers)
        .with(MedFlag::Statins, statins)
}

/// Generates a cohort and its counterfactual oracle. Deterministic in `config`.
pub fn generate_synthetic_cohort(config: &SynthConfig) -> Result<(Cohort, SyntheticOracle)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, config.noise_level.max(f64::MIN_POSITIVE)).unwrap();
    let time_in_system = Exp::new(1.0f64 / 1632.0).unwrap();

    let mut records = Vec::with_capacity(config.n);
    let mut oracle = Vec::with_capacity(config.n);
    for i in 0..config.n {
        let id = format!("P{i:06}");
        let gender = if rng.random_bool(0.29) {
            Gender::Male
        } else {
            Gender::Female
        };
        let features = Features {
            age: clipped_normal(&mut rng, 63.0, 13.0, 30.0, 95.0),
            gender,
            ethnicity: Some(pick(
                &mut rng,
                &[
                    (Ethnicity::Black, 0.30),
                    (Ethnicity::White, 0.30),
                    (Ethnicity::Hispanic, 0.15),
                    (Ethnicity::Asian, 0.05),
                    (Ethnicity::Other, 0.20),
                ],
            )),
            language: Some(pick(
                &mut rng,
                &[
                    (Language::English, 0.75),
                    (Language::Spanish, 0.12),
                    (Language::Other, 0.13),
                ],
            )),
            marital_status: Some(pick(
                &mut rng,
                &[
                    (MaritalStatus::Married, 0.40),
                    (MaritalStatus::Single, 0.35),
                    (MaritalStatus::Divorced, 0.12),
                    (MaritalStatus::Widowed, 0.13),
                ],
            )),
            family_history_diabetes: rng.random_bool(0.134),
            family_history_hypertension: rng.random_bool(0.134),
            bmi: Some(clipped_normal(&mut rng, 29.8, 6.0, 15.0, 60.0)),
            ldl: Some(clipped_normal(&mut rng, 113.4, 28.8, 30.0, 250.0)),
            hdl: Some(clipped_normal(&mut rng, 43.0, 10.9, 15.0, 100.0)),
            diastolic_bp: Some(clipped_normal(&mut rng, 78.2, 11.2, 40.0, 130.0)),
            systolic_bp_median: Some(clipped_normal(&mut rng, 137.9, 21.0, 80.0, 220.0)),
            diabetic: rng.random_bool(0.46),
            smoking: rng.random_bool(0.215),
            time_in_system: time_in_system.sample(&mut rng).round().min(9000.0),
            med_flags: MedFlags::default(),
        };
        let x = Standardized::of(&features);
        let base = x.base_years();
        let tae_days: [f64; 5] = std::array::from_fn(|a| {
            let arm = TreatmentArm::ALL[a];
            let eps = if config.noise_level > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            years_to_days(base + x.effect_years(arm) + eps)
        });

        let probs = config.logging_policy.probabilities(&x);
        let arm = pick(
            &mut rng,
            &TreatmentArm::ALL.iter().copied().zip(probs).collect::<Vec<_>>(),
        );
        let mut features = features;
        features.med_flags = arm_flags(&mut rng, arm);

        for field in super::OptionalField::ALL {
            if rng.random_bool(config.missing_rate) {
                features.clear(*field);
            }
        }

        let observed = tae_days[arm.index()];
        let censor = rng.random_bool(config.censoring_rate);
        let censor_u: f64 = rng.random();
        let outcome = if censor && observed >= 2.0 {
            // Whole day in [1, observed - 1].
            let c = 1.0 + (censor_u * (observed - 1.0)).floor();
            Outcome::censored_at(c)
        } else if observed >= HORIZON_DAYS {
            Outcome::event_free()
        } else {
            Outcome::event(observed)
        };

        records.push(PatientRecord {
            id: id.clone(),
            features,
            treatment: arm,
            outcome,
            split: None,
        });
        oracle.push(OracleEntry { id, tae_days });
    }
    Ok((
        Cohort::new(records),
        SyntheticOracle {
            logging_policy: config.logging_policy.describe(),
            patients: oracle,
        },
    ))
}

pub fn write_oracle(oracle: &SyntheticOracle, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let body = serde_json::to_string_pretty(oracle)?;
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn read_oracle(path: impl AsRef<Path>) -> Result<SyntheticOracle> {
    let path = path.as_ref();
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&body)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::write_cohort;

    fn config(n: usize) -> SynthConfig {
        SynthConfig {
            n,
            seed: 42,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn identical_bytes_across_runs() {
        let dir = tempfile::tempdir().unwrap();
        let (a, _) = generate_synthetic_cohort(&config(1000)).unwrap();
        let (b, _) = generate_synthetic_cohort(&config(1000)).unwrap();
        write_cohort(&a, dir.path().join("a.csv")).unwrap();
        write_cohort(&b, dir.path().join("b.csv")).unwrap();
        let ra = std::fs::read(dir.path().join("a.csv")).unwrap();
        let rb = std::fs::read(dir.path().join("b.csv")).unwrap();
        assert_eq!(ra, rb);
    }

    #[test]
    fn zero_censoring_rate_censors_nothing() {
        let cfg = SynthConfig {
            censoring_rate: 0.0,
            ..config(500)
        };
        let (c, _) = generate_synthetic_cohort(&cfg).unwrap();
        assert!(c.records.iter().all(|r| !r.outcome.censored));
    }

    #[test]
    fn zero_noise_observed_equals_oracle() {
        let cfg = SynthConfig {
            noise_level: 0.0,
            censoring_rate: 0.0,
            ..config(500)
        };
        let (c, o) = generate_synthetic_cohort(&cfg).unwrap();
        for (r, e) in c.records.iter().zip(&o.patients) {
            assert_eq!(r.outcome.tae_days, Some(e.tae_days[r.treatment.index()]));
        }
    }

    #[test]
    fn censored_fraction_within_three_sigma() {
        let cfg = SynthConfig {
            censoring_rate: 0.4,
            ..config(4000)
        };
        let (c, _) = generate_synthetic_cohort(&cfg).unwrap();
        let censored = c.records.iter().filter(|r| r.outcome.censored).count() as f64;
        let n = 4000.0_f64;
        let sigma = (n * 0.4 * 0.6).sqrt();
        assert!((censored - 0.4 * n).abs() < 3.0 * sigma, "censored = {censored}");
    }

    #[test]
    fn records_are_valid_and_arms_match_flags() {
        let (c, o) = generate_synthetic_cohort(&config(800)).unwrap();
        for r in &c.records {
            r.validate().unwrap();
            assert_eq!(crate::cohort::derive_treatment_arm(&r.features.med_flags), r.treatment);
        }
        for e in &o.patients {
            assert!(e.tae_days.iter().all(|t| (1.0..=HORIZON_DAYS).contains(t)));
        }
        let mean_age = c.records.iter().map(|r| r.features.age).sum::<f64>() / 800.0;
        assert!((mean_age - 63.0).abs() < 1.5);
    }

    #[test]
    fn biased_policy_depends_on_covariates() {
        let cfg = SynthConfig {
            logging_policy: LoggingPolicy::Biased { strength: 2.0 },
            ..config(4000)
        };
        let (c, _) = generate_synthetic_cohort(&cfg).unwrap();
        let share = |old: bool| {
            let group: Vec<_> = c.records.iter().filter(|r| (r.features.age > 70.0) == old).collect();
            group.iter().filter(|r| r.treatment == TreatmentArm::Drugs1).count() as f64 / group.len() as f64
        };
        assert!((share(true) - share(false)).abs() > 0.03);
    }

    #[test]
    fn invalid_config_is_rejected() {
        assert!(generate_synthetic_cohort(&SynthConfig { n: 0, ..config(1) }).is_err());
        assert!(generate_synthetic_cohort(&SynthConfig {
            censoring_rate: 1.0,
            ..config(1)
        })
        .is_err());
    }
}
