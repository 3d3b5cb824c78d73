use super::*;

/// A fully observed, uncensored record.
pub(crate) fn record(id: &str) -> PatientRecord {
    PatientRecord {
        id: id.to_string(),
        features: Features {
            age: 65.0,
            gender: Gender::Male,
            ethnicity: Some(Ethnicity::White),
            language: Some(Language::English),
            marital_status: Some(MaritalStatus::Married),
            family_history_diabetes: false,
            family_history_hypertension: false,
            bmi: Some(28.0),
            ldl: Some(110.0),
            hdl: Some(45.0),
            diastolic_bp: Some(80.0),
            systolic_bp_median: Some(135.0),
            diabetic: false,
            smoking: false,
            time_in_system: 500.0,
            med_flags: MedFlags::default(),
        },
        treatment: TreatmentArm::Drugs3,
        outcome: Outcome::event(1000.0),
        split: None,
    }
}
