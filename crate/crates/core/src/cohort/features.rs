//! Feature encoding and standardization.
//!
//! Encoded column order is fixed: continuous measurements, binary flags,
//! one-hot categorical blocks (categories in their sorted label order), then
//! the fifteen medication/procedure flags when the full set is requested.
//! With nothing dropped the full layout is 39 columns wide and the covariate
//! layout (no treatment-related flags) is 24.

use std::collections::BTreeSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Cohort, Features, Gender, MedFlag, OptionalField};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuousField {
    Age,
    Bmi,
    Ldl,
    Hdl,
    DiastolicBp,
    SystolicBp,
    TimeInSystem,
}

impl ContinuousField {
    pub const ALL: [ContinuousField; 7] = [
        ContinuousField::Age,
        ContinuousField::Bmi,
        ContinuousField::Ldl,
        ContinuousField::Hdl,
        ContinuousField::DiastolicBp,
        ContinuousField::SystolicBp,
        ContinuousField::TimeInSystem,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ContinuousField::Age => "age",
            ContinuousField::Bmi => "bmi",
            ContinuousField::Ldl => "ldl",
            ContinuousField::Hdl => "hdl",
            ContinuousField::DiastolicBp => "diastolic_bp",
            ContinuousField::SystolicBp => "systolic_bp_median",
            ContinuousField::TimeInSystem => "time_in_system",
        }
    }

    pub fn optional(self) -> Option<OptionalField> {
        match self {
            ContinuousField::Bmi => Some(OptionalField::Bmi),
            ContinuousField::Ldl => Some(OptionalField::Ldl),
            ContinuousField::Hdl => Some(OptionalField::Hdl),
            ContinuousField::DiastolicBp => Some(OptionalField::DiastolicBp),
            ContinuousField::SystolicBp => Some(OptionalField::SystolicBp),
            ContinuousField::Age | ContinuousField::TimeInSystem => None,
        }
    }

    pub fn value(self, f: &Features) -> Option<f64> {
        match self {
            ContinuousField::Age => Some(f.age),
            ContinuousField::TimeInSystem => Some(f.time_in_system),
            other => f.numeric(other.optional().unwrap()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryField {
    Male,
    FamilyHistoryDiabetes,
    FamilyHistoryHypertension,
    Diabetic,
    Smoking,
}

impl BinaryField {
    pub const ALL: [BinaryField; 5] = [
        BinaryField::Male,
        BinaryField::FamilyHistoryDiabetes,
        BinaryField::FamilyHistoryHypertension,
        BinaryField::Diabetic,
        BinaryField::Smoking,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BinaryField::Male => "male",
            BinaryField::FamilyHistoryDiabetes => "family_history_diabetes",
            BinaryField::FamilyHistoryHypertension => "family_history_hypertension",
            BinaryField::Diabetic => "diabetic",
            BinaryField::Smoking => "smoking",
        }
    }

    pub fn value(self, f: &Features) -> bool {
        match self {
            BinaryField::Male => f.gender == Gender::Male,
            BinaryField::FamilyHistoryDiabetes => f.family_history_diabetes,
            BinaryField::FamilyHistoryHypertension => f.family_history_hypertension,
            BinaryField::Diabetic => f.diabetic,
            BinaryField::Smoking => f.smoking,
        }
    }
}

/// Which columns to encode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    /// Everything, including medication and procedure flags.
    Full,
    /// Patient characteristics only; no flag that refers to a treatment option.
    Covariates,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "field", rename_all = "snake_case")]
pub enum Column {
    Continuous(ContinuousField),
    Binary(BinaryField),
    Category(OptionalField, usize),
    Med(MedFlag),
}

impl Column {
    pub fn name(&self) -> String {
        match self {
            Column::Continuous(c) => c.name().to_string(),
            Column::Binary(b) => b.name().to_string(),
            Column::Category(field, i) => format!("{}={}", field.label(), field.category_label(*i)),
            Column::Med(m) => format!("med:{}", m.label()),
        }
    }

    /// Raw (unstandardized) value, `None` when the source field is missing.
    pub fn raw(&self, f: &Features) -> Option<f64> {
        match self {
            Column::Continuous(c) => c.value(f),
            Column::Binary(b) => Some(b.value(f) as u8 as f64),
            Column::Category(field, i) => f.category(*field).map(|c| (c == *i) as u8 as f64),
            Column::Med(m) => Some(f.med_flags.get(*m) as u8 as f64),
        }
    }

    pub fn source_field(&self) -> Option<OptionalField> {
        match self {
            Column::Continuous(c) => c.optional(),
            Column::Category(field, _) => Some(*field),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub set: FeatureSet,
    pub columns: Vec<Column>,
}

impl FeatureLayout {
    pub fn new(set: FeatureSet, dropped: &BTreeSet<OptionalField>) -> Self {
        let keep = |c: &Column| c.source_field().is_none_or(|f| !dropped.contains(&f));
        let mut columns: Vec<Column> = ContinuousField::ALL.iter().map(|&c| Column::Continuous(c)).collect();
        columns.extend(BinaryField::ALL.iter().map(|&b| Column::Binary(b)));
        for field in [
            OptionalField::Ethnicity,
            OptionalField::Language,
            OptionalField::MaritalStatus,
        ] {
            columns.extend((0..field.n_categories()).map(|i| Column::Category(field, i)));
        }
        if set == FeatureSet::Full {
            columns.extend(MedFlag::ALL.iter().map(|&m| Column::Med(m)));
        }
        columns.retain(keep);
        FeatureLayout { set, columns }
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(Column::name).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub field: ContinuousField,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

/// Per-field mean and standard deviation of continuous measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub columns: Vec<ColumnStats>,
}

impl NormStats {
    /// Fits statistics over the cohort's training records, skipping missing values.
    pub fn fit(cohort: &Cohort) -> Self {
        let idx = cohort.training_indices();
        let columns = ContinuousField::ALL
            .iter()
            .map(|&field| {
                let values: Vec<f64> = idx
                    .iter()
                    .filter_map(|&i| field.value(&cohort.records[i].features))
                    .collect();
                let (mean, std) = mean_std(&values);
                ColumnStats { field, mean, std }
            })
            .collect();
        NormStats { columns }
    }

    pub fn get(&self, field: ContinuousField) -> ColumnStats {
        self.columns
            .iter()
            .copied()
            .find(|c| c.field == field)
            .unwrap_or(ColumnStats {
                field,
                mean: 0.0,
                std: 0.0,
            })
    }

    /// Zero-variance columns map to 0.
    pub fn standardize(&self, field: ContinuousField, value: f64) -> f64 {
        let s = self.get(field);
        if s.std > 0.0 {
            (value - s.mean) / s.std
        } else {
            0.0
        }
    }
}

pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Training-set means and modes for filling fields that are missing at
/// inference time, when no donor cohort is at hand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillValues {
    pub numeric: Vec<(OptionalField, f64)>,
    pub categorical: Vec<(OptionalField, usize)>,
}

impl FillValues {
    pub fn fit(cohort: &Cohort) -> Self {
        let idx = cohort.training_indices();
        let mut numeric = Vec::new();
        let mut categorical = Vec::new();
        for field in cohort.active_optional() {
            if field.is_categorical() {
                let mut counts = vec![0usize; field.n_categories()];
                for &i in &idx {
                    if let Some(c) = cohort.records[i].features.category(field) {
                        counts[c] += 1;
                    }
                }
                categorical.push((field, argmax_first(&counts)));
            } else {
                let values: Vec<f64> = idx
                    .iter()
                    .filter_map(|&i| cohort.records[i].features.numeric(field))
                    .collect();
                numeric.push((field, mean_std(&values).0));
            }
        }
        FillValues { numeric, categorical }
    }

    pub fn fill(&self, features: &Features) -> Features {
        let mut f = features.clone();
        for &(field, v) in &self.numeric {
            if let Some(slot) = f.numeric_mut(field) {
                slot.get_or_insert(v);
            }
        }
        for &(field, c) in &self.categorical {
            if f.category(field).is_none() {
                f.set_category(field, c);
            }
        }
        f
    }
}

pub(crate) fn argmax_first(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Layout plus the statistics needed to turn [`Features`] into a model input row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    pub layout: FeatureLayout,
    pub norm: NormStats,
    pub fill: FillValues,
}

impl FeatureEncoder {
    pub fn fit(cohort: &Cohort, set: FeatureSet) -> Result<Self> {
        let norm = match &cohort.norm_stats {
            Some(n) => n.clone(),
            None => NormStats::fit(cohort),
        };
        Ok(FeatureEncoder {
            layout: FeatureLayout::new(set, &cohort.dropped),
            norm,
            fill: FillValues::fit(cohort),
        })
    }

    pub fn width(&self) -> usize {
        self.layout.width()
    }

    /// Standardized row; fails on any missing field the layout uses.
    pub fn encode(&self, features: &Features) -> Result<Vec<f64>> {
        self.layout
            .columns
            .iter()
            .map(|col| {
                let raw = col.raw(features).ok_or_else(|| Error::MissingFeature {
                    id: String::new(),
                    field: col.source_field().map(|f| f.label()).unwrap_or("?").to_string(),
                })?;
                Ok(match col {
                    Column::Continuous(c) => self.norm.standardize(*c, raw),
                    _ => raw,
                })
            })
            .collect()
    }

    /// Like [`encode`](Self::encode) but fills missing fields with training means/modes.
    pub fn encode_filled(&self, features: &Features) -> Vec<f64> {
        self.encode(&self.fill.fill(features))
            .expect("filled features cover every active field")
    }

    pub fn matrix(&self, cohort: &Cohort, indices: &[usize]) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((indices.len(), self.width()));
        for (row, &i) in indices.iter().enumerate() {
            let rec = &cohort.records[i];
            let encoded = self.encode(&rec.features).map_err(|e| match e {
                Error::MissingFeature { field, .. } => Error::MissingFeature {
                    id: rec.id.clone(),
                    field,
                },
                other => other,
            })?;
            out.row_mut(row).assign(&ndarray::ArrayView1::from(&encoded));
        }
        Ok(out)
    }
}

/// Standardizes every record with training-split statistics.
///
/// Continuous columns become z-scores (population σ), flags pass through, and
/// constant columns map to zero. Requires fully imputed features.
pub fn normalize_features(cohort: &Cohort) -> Result<(Array2<f64>, NormStats)> {
    let norm = NormStats::fit(cohort);
    let encoder = FeatureEncoder {
        layout: FeatureLayout::new(FeatureSet::Full, &cohort.dropped),
        norm: norm.clone(),
        fill: FillValues {
            numeric: Vec::new(),
            categorical: Vec::new(),
        },
    };
    let all: Vec<usize> = (0..cohort.len()).collect();
    Ok((encoder.matrix(cohort, &all)?, norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::test_support::record;

    #[test]
    fn layout_widths_are_documented() {
        let none = BTreeSet::new();
        assert_eq!(FeatureLayout::new(FeatureSet::Full, &none).width(), 39);
        assert_eq!(FeatureLayout::new(FeatureSet::Covariates, &none).width(), 24);
        let dropped: BTreeSet<_> = [OptionalField::Ethnicity, OptionalField::Bmi].into();
        assert_eq!(FeatureLayout::new(FeatureSet::Full, &dropped).width(), 39 - 5 - 1);
    }

    #[test]
    fn standardizes_with_population_sigma() {
        let records = (1..=3)
            .map(|i| {
                let mut r = record(&format!("p{i}"));
                r.features.age = i as f64;
                r
            })
            .collect();
        let cohort = Cohort::new(records);
        let (x, stats) = normalize_features(&cohort).unwrap();
        let s = stats.get(ContinuousField::Age);
        assert_eq!(s.mean, 2.0);
        let expected = [-1.224744871391589, 0.0, 1.224744871391589];
        for (row, e) in expected.iter().enumerate() {
            assert!((x[[row, 0]] - e).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_column_maps_to_zero_and_flags_pass_through() {
        let records: Vec<_> = (0..4)
            .map(|i| {
                let mut r = record(&format!("p{i}"));
                r.features.smoking = i % 2 == 0;
                r
            })
            .collect();
        let cohort = Cohort::new(records);
        let (x, _) = normalize_features(&cohort).unwrap();
        let layout = FeatureLayout::new(FeatureSet::Full, &cohort.dropped);
        let bmi = layout
            .columns
            .iter()
            .position(|c| *c == Column::Continuous(ContinuousField::Bmi))
            .unwrap();
        let smoke = layout
            .columns
            .iter()
            .position(|c| *c == Column::Binary(BinaryField::Smoking))
            .unwrap();
        for i in 0..4 {
            assert_eq!(x[[i, bmi]], 0.0);
            assert_eq!(x[[i, smoke]], if i % 2 == 0 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn missing_value_is_an_error() {
        let mut r = record("a");
        r.features.ldl = None;
        let cohort = Cohort::new(vec![r]);
        assert!(matches!(normalize_features(&cohort), Err(Error::MissingFeature { .. })));
    }
}
