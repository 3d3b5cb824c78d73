//! Patient payload accepted by `POST /prescribe`.

use std::collections::BTreeMap;

use cadrx_core::cohort::{Ethnicity, Features, Gender, Language, MaritalStatus, MedFlag, MedFlags};
use serde::{Deserialize, Serialize};

pub const DEFAULT_PATIENT_ID: &str = "patient";

/// Characteristics at diagnosis. Units: years, kg/m², mg/dL, mmHg, days.
/// Optional measurements may be omitted or null; the bank fills them with
/// training means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatientRequest {
    #[serde(default)]
    pub patient_id: Option<String>,
    /// Years, > 0.
    pub age: f64,
    pub gender: Gender,
    #[serde(default)]
    pub ethnicity: Option<Ethnicity>,
    #[serde(default)]
    pub language: Option<Language>,
    #[serde(default)]
    pub marital_status: Option<MaritalStatus>,
    #[serde(default)]
    pub family_history_diabetes: bool,
    #[serde(default)]
    pub family_history_hypertension: bool,
    /// kg/m².
    #[serde(default)]
    pub bmi: Option<f64>,
    /// mg/dL.
    #[serde(default)]
    pub ldl: Option<f64>,
    /// mg/dL.
    #[serde(default)]
    pub hdl: Option<f64>,
    /// mmHg.
    #[serde(default)]
    pub diastolic_bp: Option<f64>,
    /// mmHg, median over the three months before diagnosis.
    #[serde(default)]
    pub systolic_bp_median: Option<f64>,
    #[serde(default)]
    pub diabetic: bool,
    #[serde(default)]
    pub smoking: bool,
    /// Days of history before diagnosis, >= 0.
    #[serde(default)]
    pub time_in_system: f64,
    /// Current medications and procedures. They never change the estimates.
    #[serde(default)]
    pub med_flags: BTreeMap<MedFlag, bool>,
}

impl PatientRequest {
    pub fn id(&self) -> &str {
        self.patient_id.as_deref().unwrap_or(DEFAULT_PATIENT_ID)
    }

    pub fn features(&self) -> Features {
        let mut flags = MedFlags::default();
        for (&f, &v) in &self.med_flags {
            flags.set(f, v);
        }
        Features {
            age: self.age,
            gender: self.gender,
            ethnicity: self.ethnicity,
            language: self.language,
            marital_status: self.marital_status,
            family_history_diabetes: self.family_history_diabetes,
            family_history_hypertension: self.family_history_hypertension,
            bmi: self.bmi,
            ldl: self.ldl,
            hdl: self.hdl,
            diastolic_bp: self.diastolic_bp,
            systolic_bp_median: self.systolic_bp_median,
            diabetic: self.diabetic,
            smoking: self.smoking,
            time_in_system: self.time_in_system,
            med_flags: flags,
        }
    }

    pub fn from_features(patient_id: Option<String>, f: &Features) -> Self {
        PatientRequest {
            patient_id,
            age: f.age,
            gender: f.gender,
            ethnicity: f.ethnicity,
            language: f.language,
            marital_status: f.marital_status,
            family_history_diabetes: f.family_history_diabetes,
            family_history_hypertension: f.family_history_hypertension,
            bmi: f.bmi,
            ldl: f.ldl,
            hdl: f.hdl,
            diastolic_bp: f.diastolic_bp,
            systolic_bp_median: f.systolic_bp_median,
            diabetic: f.diabetic,
            smoking: f.smoking,
            time_in_system: f.time_in_system,
            med_flags: f.med_flags.iter().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

/// Parses a request body, reporting the offending field on failure.
pub fn parse(body: &[u8]) -> Result<PatientRequest, Vec<FieldError>> {
    let mut de = serde_json::Deserializer::from_slice(body);
    let req: PatientRequest = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let message = e.inner().to_string();
        let field = if path == "." {
            named_field(&message).unwrap_or_default()
        } else {
            path
        };
        vec![FieldError { field, message }]
    })?;
    let errors: Vec<FieldError> = req
        .features()
        .field_errors()
        .into_iter()
        .map(|(field, message)| FieldError {
            field: field.into(),
            message: message.into(),
        })
        .collect();
    if errors.is_empty() {
        Ok(req)
    } else {
        Err(errors)
    }
}

/// Field named in serde's "missing field `x`" / "unknown field `x`" messages.
fn named_field(message: &str) -> Option<String> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(message[start..start + len].to_string())
}
