//! Patient data model, ingestion, feature encoding and synthetic cohorts.
//!
//! A [`PatientRecord`] captures one patient at diagnosis time: covariates
//! ([`Features`]), the treatment arm actually received, and the observed
//! (possibly right-censored) time to adverse event. Times are in days and
//! capped at the ten-year horizon [`HORIZON_DAYS`].

mod csv_io;
mod features;
mod impute;
mod split;
mod synth;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csv_io::{canonical_columns, load_cohort, write_cohort, CsvSchema, LoadReport, RowError};
pub use features::{
    normalize_features, BinaryField, Column, ContinuousField, FeatureEncoder, FeatureLayout, FeatureSet, FillValues,
    NormStats,
};
pub use impute::{impute_missing_features, DEFAULT_FEATURE_K};
pub use split::{split, SplitFractions};
pub use synth::{
    generate_synthetic_cohort, read_oracle, write_oracle, LoggingPolicy, OracleEntry, SynthConfig, SyntheticOracle,
};

/// Ten years, the outcome horizon.
pub const HORIZON_DAYS: f64 = 3650.0;
pub const DAYS_PER_YEAR: f64 = 365.0;

macro_rules! labelled_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $label:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $label)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn label(self) -> &'static str {
                match self {
                    $($name::$variant => $label),+
                }
            }

            /// Position in the documented category order.
            pub fn index(self) -> usize {
                Self::ALL.iter().position(|v| *v == self).unwrap()
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.label())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                let s = s.trim();
                Self::ALL
                    .iter()
                    .copied()
                    .find(|v| v.label().eq_ignore_ascii_case(s))
                    .ok_or_else(|| Error::field(stringify!($name), format!("unknown value `{s}`")))
            }
        }
    };
}

labelled_enum!(
    /// The five treatment options, in tie-break order.
    TreatmentArm {
        Cabg => "CABG",
        Pci => "PCI",
        Drugs1 => "Drugs1",
        Drugs2 => "Drugs2",
        Drugs3 => "Drugs3",
    }
);

labelled_enum!(Gender { Female => "female", Male => "male" });

labelled_enum!(Ethnicity {
    Asian => "asian",
    Black => "black",
    Hispanic => "hispanic",
    Other => "other",
    White => "white",
});

labelled_enum!(Language {
    English => "english",
    Other => "other",
    Spanish => "spanish",
});

labelled_enum!(MaritalStatus {
    Divorced => "divorced",
    Married => "married",
    Single => "single",
    Widowed => "widowed",
});

labelled_enum!(
    /// Medication and procedure indicators recorded at diagnosis.
    MedFlag {
        AceInhibitors => "ace_inhibitors",
        AdrenergicReceptors => "adrenergic_receptors",
        AngiotensinAgonists => "angiotensin_agonists",
        Antiarrhythmics => "antiarrhythmics",
        Blockers => "blockers",
        Cabg => "cabg",
        CardiacGlycosides => "cardiac_glycosides",
        Diuretics => "diuretics",
        LipidLowering => "lipid_lowering",
        MuscleRelaxants => "muscle_relaxants",
        Nitrates => "nitrates",
        OtherAntihypertensive => "other_antihypertensive",
        Pci => "pci",
        PhosphodiesteraseInhibitors => "phosphodiesterase_inhibitors",
        Statins => "statins",
    }
);

labelled_enum!(
    /// Fields that may be absent in raw data.
    OptionalField {
        Ethnicity => "ethnicity",
        Language => "language",
        MaritalStatus => "marital_status",
        Bmi => "bmi",
        Ldl => "ldl",
        Hdl => "hdl",
        DiastolicBp => "diastolic_bp",
        SystolicBp => "systolic_bp_median",
    }
);

labelled_enum!(SplitTag {
    Train => "train",
    Validation => "validation",
    Test => "test",
});

impl SplitTag {
    /// Train and validation records both feed model fitting.
    pub fn is_training(self) -> bool {
        matches!(self, SplitTag::Train | SplitTag::Validation)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MedFlags([bool; 15]);

impl MedFlags {
    pub fn get(&self, flag: MedFlag) -> bool {
        self.0[flag.index()]
    }

    pub fn set(&mut self, flag: MedFlag, value: bool) {
        self.0[flag.index()] = value;
    }

    pub fn with(mut self, flag: MedFlag, value: bool) -> Self {
        self.set(flag, value);
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = (MedFlag, bool)> + '_ {
        MedFlag::ALL.iter().map(move |&f| (f, self.get(f)))
    }
}

/// Patient covariates at diagnosis time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Features {
    /// Years.
    pub age: f64,
    pub gender: Gender,
    pub ethnicity: Option<Ethnicity>,
    pub language: Option<Language>,
    pub marital_status: Option<MaritalStatus>,
    pub family_history_diabetes: bool,
    pub family_history_hypertension: bool,
    /// kg/m².
    pub bmi: Option<f64>,
    /// mg/dL.
    pub ldl: Option<f64>,
    /// mg/dL.
    pub hdl: Option<f64>,
    /// mmHg.
    pub diastolic_bp: Option<f64>,
    /// mmHg, median over the three months before diagnosis.
    pub systolic_bp_median: Option<f64>,
    pub diabetic: bool,
    pub smoking: bool,
    /// Days observed in the records before diagnosis.
    pub time_in_system: f64,
    pub med_flags: MedFlags,
}

impl Features {
    pub fn numeric(&self, field: OptionalField) -> Option<f64> {
        match field {
            OptionalField::Bmi => self.bmi,
            OptionalField::Ldl => self.ldl,
            OptionalField::Hdl => self.hdl,
            OptionalField::DiastolicBp => self.diastolic_bp,
            OptionalField::SystolicBp => self.systolic_bp_median,
            _ => None,
        }
    }

    pub(crate) fn numeric_mut(&mut self, field: OptionalField) -> Option<&mut Option<f64>> {
        match field {
            OptionalField::Bmi => Some(&mut self.bmi),
            OptionalField::Ldl => Some(&mut self.ldl),
            OptionalField::Hdl => Some(&mut self.hdl),
            OptionalField::DiastolicBp => Some(&mut self.diastolic_bp),
            OptionalField::SystolicBp => Some(&mut self.systolic_bp_median),
            _ => None,
        }
    }

    /// Category index of a categorical optional field, if present.
    pub fn category(&self, field: OptionalField) -> Option<usize> {
        match field {
            OptionalField::Ethnicity => self.ethnicity.map(|v| v.index()),
            OptionalField::Language => self.language.map(|v| v.index()),
            OptionalField::MaritalStatus => self.marital_status.map(|v| v.index()),
            _ => None,
        }
    }

    pub(crate) fn set_category(&mut self, field: OptionalField, index: usize) {
        match field {
            OptionalField::Ethnicity => self.ethnicity = Some(Ethnicity::ALL[index]),
            OptionalField::Language => self.language = Some(Language::ALL[index]),
            OptionalField::MaritalStatus => self.marital_status = Some(MaritalStatus::ALL[index]),
            _ => {}
        }
    }

    pub(crate) fn clear(&mut self, field: OptionalField) {
        match field {
            OptionalField::Ethnicity => self.ethnicity = None,
            OptionalField::Language => self.language = None,
            OptionalField::MaritalStatus => self.marital_status = None,
            numeric => {
                if let Some(slot) = self.numeric_mut(numeric) {
                    *slot = None;
                }
            }
        }
    }

    pub fn is_present(&self, field: OptionalField) -> bool {
        if field.is_categorical() {
            self.category(field).is_some()
        } else {
            self.numeric(field).is_some()
        }
    }

    /// Every invalid field as `(field, message)`, in schema order.
    pub fn field_errors(&self) -> Vec<(&'static str, &'static str)> {
        let mut out = Vec::new();
        if !(self.age.is_finite() && self.age > 0.0) {
            out.push(("age", "must be finite and > 0"));
        }
        if !(self.time_in_system.is_finite() && self.time_in_system >= 0.0) {
            out.push(("time_in_system", "must be finite and >= 0"));
        }
        for field in OptionalField::ALL.iter().filter(|f| !f.is_categorical()) {
            if let Some(v) = self.numeric(*field) {
                if !(v.is_finite() && v > 0.0) {
                    out.push((field.label(), "must be finite and > 0"));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.field_errors().first() {
            Some((field, message)) => Err(Error::field(*field, *message)),
            None => Ok(()),
        }
    }
}

impl OptionalField {
    pub fn is_categorical(self) -> bool {
        matches!(
            self,
            OptionalField::Ethnicity | OptionalField::Language | OptionalField::MaritalStatus
        )
    }

    pub fn n_categories(self) -> usize {
        match self {
            OptionalField::Ethnicity => Ethnicity::ALL.len(),
            OptionalField::Language => Language::ALL.len(),
            OptionalField::MaritalStatus => MaritalStatus::ALL.len(),
            _ => 0,
        }
    }

    pub fn category_label(self, index: usize) -> &'static str {
        match self {
            OptionalField::Ethnicity => Ethnicity::ALL[index].label(),
            OptionalField::Language => Language::ALL[index].label(),
            OptionalField::MaritalStatus => MaritalStatus::ALL[index].label(),
            _ => "",
        }
    }
}

/// Time-to-adverse-event outcome, possibly right-censored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub event_occurred: bool,
    pub tae_days: Option<f64>,
    pub censored: bool,
    pub censor_time_days: Option<f64>,
    pub imputed: bool,
}

impl Outcome {
    pub fn event(tae_days: f64) -> Self {
        Outcome {
            event_occurred: true,
            tae_days: Some(tae_days),
            censored: false,
            censor_time_days: None,
            imputed: false,
        }
    }

    /// Followed for the full horizon without an event.
    pub fn event_free() -> Self {
        Outcome {
            event_occurred: false,
            tae_days: Some(HORIZON_DAYS),
            censored: false,
            censor_time_days: None,
            imputed: false,
        }
    }

    pub fn censored_at(censor_time_days: f64) -> Self {
        Outcome {
            event_occurred: false,
            tae_days: None,
            censored: true,
            censor_time_days: Some(censor_time_days),
            imputed: false,
        }
    }

    /// Uncensored outcomes make up the imputation donor pool.
    pub fn is_known(&self) -> bool {
        !self.censored && self.tae_days.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.tae_days {
            if !(t.is_finite() && (1.0..=HORIZON_DAYS).contains(&t)) {
                return Err(Error::field("tae_days", format!("{t} outside [1, 3650]")));
            }
        }
        if let Some(c) = self.censor_time_days {
            if !(0.0..=HORIZON_DAYS).contains(&c) {
                return Err(Error::field("censor_time_days", format!("{c} outside [0, 3650]")));
            }
        }
        if self.censored != self.censor_time_days.is_some() {
            return Err(Error::field("censor_time_days", "present iff the record is censored"));
        }
        if self.censored && !self.imputed && self.tae_days.is_some() {
            return Err(Error::field(
                "tae_days",
                "censored record without imputation has a value",
            ));
        }
        if self.imputed {
            match (self.tae_days, self.censor_time_days) {
                (Some(t), Some(c)) if t >= c => {}
                _ => {
                    return Err(Error::field(
                        "tae_days",
                        "imputed value must be present and >= censor time",
                    ))
                }
            }
        }
        if !self.censored && self.tae_days.is_none() {
            return Err(Error::field("tae_days", "uncensored record without a value"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub id: String,
    pub features: Features,
    pub treatment: TreatmentArm,
    pub outcome: Outcome,
    pub split: Option<SplitTag>,
}

impl PatientRecord {
    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.outcome.validate()
    }
}

/// Maps medication and procedure flags to the primary treatment arm.
///
/// Revascularization dominates: CABG over PCI over any drug regimen.
pub fn derive_treatment_arm(flags: &MedFlags) -> TreatmentArm {
    if flags.get(MedFlag::Cabg) {
        TreatmentArm::Cabg
    } else if flags.get(MedFlag::Pci) {
        TreatmentArm::Pci
    } else if flags.get(MedFlag::Blockers) {
        if flags.get(MedFlag::Statins) {
            TreatmentArm::Drugs1
        } else {
            TreatmentArm::Drugs2
        }
    } else {
        TreatmentArm::Drugs3
    }
}

/// Age bucket used for neighbor matching and subgroup reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgeGroup {
    #[serde(rename = "<50")]
    Under50,
    #[serde(rename = "50-59")]
    Fifties,
    #[serde(rename = "60-69")]
    Sixties,
    #[serde(rename = "70-79")]
    Seventies,
    #[serde(rename = "80+")]
    Over80,
}

impl AgeGroup {
    pub fn of(age: f64) -> Self {
        if age < 50.0 {
            AgeGroup::Under50
        } else if age < 60.0 {
            AgeGroup::Fifties
        } else if age < 70.0 {
            AgeGroup::Sixties
        } else if age < 80.0 {
            AgeGroup::Seventies
        } else {
            AgeGroup::Over80
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AgeGroup::Under50 => "<50",
            AgeGroup::Fifties => "50-59",
            AgeGroup::Sixties => "60-69",
            AgeGroup::Seventies => "70-79",
            AgeGroup::Over80 => "80+",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub records: Vec<PatientRecord>,
    /// Optional fields excluded for insufficient coverage.
    pub dropped: BTreeSet<OptionalField>,
    pub norm_stats: Option<NormStats>,
}

impl Cohort {
    pub fn new(records: Vec<PatientRecord>) -> Self {
        Cohort {
            records,
            dropped: BTreeSet::new(),
            norm_stats: None,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Optional fields still in use.
    pub fn active_optional(&self) -> Vec<OptionalField> {
        OptionalField::ALL
            .iter()
            .copied()
            .filter(|f| !self.dropped.contains(f))
            .collect()
    }

    /// Indices of records used to fit models and statistics. When no split
    /// has been assigned every record counts.
    pub fn training_indices(&self) -> Vec<usize> {
        if self.records.iter().all(|r| r.split.is_none()) {
            return (0..self.records.len()).collect();
        }
        self.indices_where(|r| r.split.is_some_and(SplitTag::is_training))
    }

    pub fn test_indices(&self) -> Vec<usize> {
        self.indices_where(|r| r.split == Some(SplitTag::Test))
    }

    pub fn indices_where(&self, pred: impl Fn(&PatientRecord) -> bool) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| pred(r))
            .map(|(i, _)| i)
            .collect()
    }

    /// Feature encoder over the given feature set, fitted on training records.
    pub fn encoder(&self, set: FeatureSet) -> Result<FeatureEncoder> {
        FeatureEncoder::fit(self, set)
    }
}

#[cfg(test)]
pub(crate) mod test_support;

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(set: &[MedFlag]) -> MedFlags {
        set.iter().fold(MedFlags::default(), |f, &m| f.with(m, true))
    }

    #[test]
    fn cabg_dominates_pci_and_drugs() {
        let f = flags(&[MedFlag::Cabg, MedFlag::Pci, MedFlag::Blockers]);
        assert_eq!(derive_treatment_arm(&f), TreatmentArm::Cabg);
    }

    #[test]
    fn blockers_and_statins_is_drugs1() {
        let f = flags(&[MedFlag::Blockers, MedFlag::Statins]);
        assert_eq!(derive_treatment_arm(&f), TreatmentArm::Drugs1);
    }

    #[test]
    fn statins_without_blockers_is_drugs3() {
        let f = flags(&[MedFlag::Statins]);
        assert_eq!(derive_treatment_arm(&f), TreatmentArm::Drugs3);
    }

    #[test]
    fn arm_mapping_is_total() {
        // Every combination of the five flags that matter lands in exactly one arm.
        let relevant = [
            MedFlag::Cabg,
            MedFlag::Pci,
            MedFlag::Blockers,
            MedFlag::Statins,
            MedFlag::Nitrates,
        ];
        let mut seen = std::collections::BTreeSet::new();
        for mask in 0u32..32 {
            let set: Vec<_> = relevant
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, f)| *f)
                .collect();
            let f = flags(&set);
            let arm = derive_treatment_arm(&f);
            assert_eq!(arm, derive_treatment_arm(&f));
            seen.insert(arm);
        }
        assert_eq!(seen.len(), 5);
    }

    #[test]
    fn outcome_rejects_negative_tae() {
        let mut o = Outcome::event(100.0);
        o.tae_days = Some(-5.0);
        assert!(o.validate().is_err());
    }

    #[test]
    fn imputed_outcome_must_exceed_censor_time() {
        let mut o = Outcome::censored_at(1500.0);
        o.imputed = true;
        o.tae_days = Some(1400.0);
        assert!(o.validate().is_err());
        o.tae_days = Some(1600.0);
        assert!(o.validate().is_ok());
    }

    #[test]
    fn age_groups_are_decades() {
        assert_eq!(AgeGroup::of(49.9), AgeGroup::Under50);
        assert_eq!(AgeGroup::of(50.0), AgeGroup::Fifties);
        assert_eq!(AgeGroup::of(79.99), AgeGroup::Seventies);
        assert_eq!(AgeGroup::of(86.0), AgeGroup::Over80);
    }

    #[test]
    fn labels_parse_case_insensitively() {
        assert_eq!("cabg".parse::<TreatmentArm>().unwrap(), TreatmentArm::Cabg);
        assert_eq!("DRUGS2".parse::<TreatmentArm>().unwrap(), TreatmentArm::Drugs2);
        assert!("aspirin".parse::<TreatmentArm>().is_err());
    }
}
