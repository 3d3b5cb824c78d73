//! CSV ingestion and export.
//!
//! Header row required, UTF-8, `.` decimal separator, empty cell = missing.
//! Booleans are `1`/`0` (also `true`/`false`). Times are whole or fractional
//! days. Canonical column order:
//!
//! ```text
//! id, age, gender, ethnicity, language, marital_status,
//! family_history_diabetes, family_history_hypertension,
//! bmi, ldl, hdl, diastolic_bp, systolic_bp_median, diabetic, smoking,
//! time_in_system, <15 medication flags>, treatment,
//! event_occurred, tae_days, censored, censor_time_days, imputed, split
//! ```
//!
//! `split` and `imputed` may be omitted. An empty `treatment` cell is derived
//! from the medication flags.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::path::Path;

use csv::StringRecord;

use super::{
    derive_treatment_arm, Cohort, Ethnicity, Features, Gender, Language, MaritalStatus, MedFlag, MedFlags,
    OptionalField, Outcome, PatientRecord, SplitTag, TreatmentArm,
};
use crate::error::{Error, Result};

const LEADING: [&str; 16] = [
    "id",
    "age",
    "gender",
    "ethnicity",
    "language",
    "marital_status",
    "family_history_diabetes",
    "family_history_hypertension",
    "bmi",
    "ldl",
    "hdl",
    "diastolic_bp",
    "systolic_bp_median",
    "diabetic",
    "smoking",
    "time_in_system",
];
const TRAILING: [&str; 7] = [
    "treatment",
    "event_occurred",
    "tae_days",
    "censored",
    "censor_time_days",
    "imputed",
    "split",
];
const OPTIONAL_COLUMNS: [&str; 2] = ["imputed", "split"];

/// Canonical column names in file order.
pub fn canonical_columns() -> Vec<&'static str> {
    LEADING
        .iter()
        .copied()
        .chain(MedFlag::ALL.iter().map(|m| m.label()))
        .chain(TRAILING.iter().copied())
        .collect()
}

/// Maps canonical column names to the header names used in a file.
#[derive(Debug, Clone, Default)]
pub struct CsvSchema {
    aliases: BTreeMap<String, String>,
}

impl CsvSchema {
    pub fn with_alias(mut self, canonical: &str, header: &str) -> Self {
        self.aliases.insert(canonical.to_string(), header.to_string());
        self
    }

    fn header_for<'a>(&'a self, canonical: &'a str) -> &'a str {
        self.aliases.get(canonical).map(String::as_str).unwrap_or(canonical)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    /// 1-based line number in the file.
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct LoadReport {
    pub cohort: Cohort,
    pub row_errors: Vec<RowError>,
    pub warnings: Vec<String>,
}

struct Row<'a> {
    rec: &'a StringRecord,
    index: &'a BTreeMap<&'static str, usize>,
}

impl Row<'_> {
    fn cell(&self, name: &str) -> Option<&str> {
        self.index
            .get(name)
            .and_then(|&i| self.rec.get(i))
            .map(str::trim)
            .filter(|s| !s.is_empty())
    }

    fn required(&self, name: &str) -> Result<&str> {
        self.cell(name)
            .ok_or_else(|| Error::field(name, "required value is empty"))
    }

    fn float(&self, name: &str) -> Result<Option<f64>> {
        self.cell(name)
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::field(name, format!("malformed number `{s}`")))
            })
            .transpose()
    }

    fn req_float(&self, name: &str) -> Result<f64> {
        self.float(name)?
            .ok_or_else(|| Error::field(name, "required value is empty"))
    }

    fn flag(&self, name: &str) -> Result<bool> {
        match self.cell(name) {
            None => Ok(false),
            Some("1") => Ok(true),
            Some("0") => Ok(false),
            Some(s) if s.eq_ignore_ascii_case("true") => Ok(true),
            Some(s) if s.eq_ignore_ascii_case("false") => Ok(false),
            Some(s) => Err(Error::field(name, format!("malformed flag `{s}`"))),
        }
    }

    fn parse<T: std::str::FromStr<Err = Error>>(&self, name: &str) -> Result<Option<T>> {
        self.cell(name)
            .map(|s| {
                s.parse::<T>()
                    .map_err(|_| Error::field(name, format!("unknown value `{s}`")))
            })
            .transpose()
    }

    fn record(&self) -> Result<PatientRecord> {
        let mut med_flags = MedFlags::default();
        for &m in MedFlag::ALL {
            med_flags.set(m, self.flag(m.label())?);
        }
        let gender = self
            .parse::<Gender>("gender")?
            .ok_or_else(|| Error::field("gender", "required value is empty"))?;
        let features = Features {
            age: self.req_float("age")?,
            gender,
            ethnicity: self.parse::<Ethnicity>("ethnicity")?,
            language: self.parse::<Language>("language")?,
            marital_status: self.parse::<MaritalStatus>("marital_status")?,
            family_history_diabetes: self.flag("family_history_diabetes")?,
            family_history_hypertension: self.flag("family_history_hypertension")?,
            bmi: self.float("bmi")?,
            ldl: self.float("ldl")?,
            hdl: self.float("hdl")?,
            diastolic_bp: self.float("diastolic_bp")?,
            systolic_bp_median: self.float("systolic_bp_median")?,
            diabetic: self.flag("diabetic")?,
            smoking: self.flag("smoking")?,
            time_in_system: self.req_float("time_in_system")?,
            med_flags,
        };
        let treatment = match self.parse::<TreatmentArm>("treatment")? {
            Some(arm) => arm,
            None => derive_treatment_arm(&med_flags),
        };
        let outcome = Outcome {
            event_occurred: self.flag("event_occurred")?,
            tae_days: self.float("tae_days")?,
            censored: self.flag("censored")?,
            censor_time_days: self.float("censor_time_days")?,
            imputed: self.flag("imputed")?,
        };
        let record = PatientRecord {
            id: self.required("id")?.to_string(),
            features,
            treatment,
            outcome,
            split: self.parse::<SplitTag>("split")?,
        };
        record.validate()?;
        Ok(record)
    }
}

/// Reads a cohort CSV.
///
/// Malformed rows are reported with their line number and skipped. Optional
/// columns known for fewer than half of the parsed records are dropped with a
/// warning.
pub fn load_cohort(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<LoadReport> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader.headers()?.clone();

    let mut index = BTreeMap::new();
    for canonical in canonical_columns() {
        let wanted = schema.header_for(canonical);
        match headers.iter().position(|h| h.trim() == wanted) {
            Some(i) => {
                index.insert(canonical, i);
            }
            None if OPTIONAL_COLUMNS.contains(&canonical) => {}
            None => return Err(Error::MissingColumn(wanted.to_string())),
        }
    }

    let mut records = Vec::new();
    let mut row_errors = Vec::new();
    let mut seen_ids = BTreeSet::new();
    for result in reader.records() {
        let rec = result?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let row = Row {
            rec: &rec,
            index: &index,
        };
        match row.record() {
            Ok(r) if !seen_ids.insert(r.id.clone()) => row_errors.push(RowError {
                line,
                message: format!("duplicate id `{}`", r.id),
            }),
            Ok(r) => records.push(r),
            Err(e) => row_errors.push(RowError {
                line,
                message: e.to_string(),
            }),
        }
    }

    let mut cohort = Cohort::new(records);
    let mut warnings = Vec::new();
    if !cohort.is_empty() {
        for &field in OptionalField::ALL {
            let missing = cohort.records.iter().filter(|r| !r.features.is_present(field)).count();
            let frac = missing as f64 / cohort.len() as f64;
            if frac > 0.5 {
                let msg = format!(
                    "column `{}` is missing in {:.1}% of records; excluded",
                    field.label(),
                    100.0 * frac
                );
                log::warn!("{msg}");
                warnings.push(msg);
                cohort.dropped.insert(field);
                for r in &mut cohort.records {
                    r.features.clear(field);
                }
            }
        }
    }
    for e in &row_errors {
        log::warn!("line {}: {}", e.line, e.message);
    }
    Ok(LoadReport {
        cohort,
        row_errors,
        warnings,
    })
}

fn opt_num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// Writes a cohort in the canonical layout. Floats use the shortest
/// representation that reads back to the same value.
pub fn write_cohort(cohort: &Cohort, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(canonical_columns())?;
    for r in &cohort.records {
        let f = &r.features;
        let o = &r.outcome;
        let mut row: Vec<String> = vec![
            r.id.clone(),
            f.age.to_string(),
            f.gender.label().to_string(),
            f.ethnicity.map(|v| v.label().to_string()).unwrap_or_default(),
            f.language.map(|v| v.label().to_string()).unwrap_or_default(),
            f.marital_status.map(|v| v.label().to_string()).unwrap_or_default(),
            flag(f.family_history_diabetes).into(),
            flag(f.family_history_hypertension).into(),
            opt_num(f.bmi),
            opt_num(f.ldl),
            opt_num(f.hdl),
            opt_num(f.diastolic_bp),
            opt_num(f.systolic_bp_median),
            flag(f.diabetic).into(),
            flag(f.smoking).into(),
            f.time_in_system.to_string(),
        ];
        row.extend(f.med_flags.iter().map(|(_, v)| flag(v).to_string()));
        row.extend([
            r.treatment.label().to_string(),
            flag(o.event_occurred).into(),
            opt_num(o.tae_days),
            flag(o.censored).into(),
            opt_num(o.censor_time_days),
            flag(o.imputed).into(),
            r.split.map(|s| s.label().to_string()).unwrap_or_default(),
        ]);
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::test_support::record;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    fn csv_with_rows(rows: &[String]) -> String {
        let mut s = canonical_columns().join(",");
        s.push('\n');
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    fn row(id: &str, bmi: &str, tae: &str) -> String {
        let mut cells = vec![
            id.to_string(),
            "64".into(),
            "male".into(),
            "white".into(),
            "english".into(),
            "married".into(),
            "0".into(),
            "1".into(),
            bmi.into(),
            "110".into(),
            "45".into(),
            "80".into(),
            "135".into(),
            "1".into(),
            "0".into(),
            "900".into(),
        ];
        cells.extend(std::iter::repeat_n("0".to_string(), 15));
        cells.extend([
            "Drugs3".into(),
            "1".into(),
            tae.into(),
            "0".into(),
            "".into(),
            "0".into(),
            "".into(),
        ]);
        cells.join(",")
    }

    #[test]
    fn parses_well_formed_rows() {
        let dir = tempfile::tempdir().unwrap();
        let body = csv_with_rows(&[row("a", "30", "100"), row("b", "31", "200"), row("c", "", "300")]);
        let p = write(&dir, "c.csv", &body);
        let rep = load_cohort(&p, &CsvSchema::default()).unwrap();
        assert_eq!(rep.cohort.len(), 3);
        assert!(rep.row_errors.is_empty());
        assert_eq!(rep.cohort.records[2].features.bmi, None);
        assert_eq!(rep.cohort.records[0].outcome.tae_days, Some(100.0));
    }

    #[test]
    fn negative_tae_is_a_row_error() {
        let dir = tempfile::tempdir().unwrap();
        let body = csv_with_rows(&[row("a", "30", "100"), row("b", "30", "-5")]);
        let p = write(&dir, "c.csv", &body);
        let rep = load_cohort(&p, &CsvSchema::default()).unwrap();
        assert_eq!(rep.cohort.len(), 1);
        assert_eq!(rep.row_errors.len(), 1);
        assert_eq!(rep.row_errors[0].line, 3);
        assert!(rep.row_errors[0].message.contains("tae_days"));
    }

    #[test]
    fn malformed_number_and_unknown_arm_are_row_errors() {
        let dir = tempfile::tempdir().unwrap();
        let bad_arm = row("c", "30", "100").replace("Drugs3", "Aspirin");
        let body = csv_with_rows(&[row("a", "3o", "100"), bad_arm]);
        let p = write(&dir, "c.csv", &body);
        let rep = load_cohort(&p, &CsvSchema::default()).unwrap();
        assert_eq!(rep.cohort.len(), 0);
        assert_eq!(rep.row_errors.len(), 2);
        assert!(rep.row_errors[0].message.contains("malformed number"));
        assert!(rep.row_errors[1].message.contains("treatment"));
    }

    #[test]
    fn mostly_missing_column_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        // 7 of 9 rows (78%) lack bmi.
        let rows: Vec<_> = (0..9)
            .map(|i| row(&format!("p{i}"), if i < 2 { "30" } else { "" }, "100"))
            .collect();
        let p = write(&dir, "c.csv", &csv_with_rows(&rows));
        let rep = load_cohort(&p, &CsvSchema::default()).unwrap();
        assert!(rep.cohort.dropped.contains(&OptionalField::Bmi));
        assert_eq!(rep.warnings.len(), 1);
        assert!(rep.cohort.records.iter().all(|r| r.features.bmi.is_none()));
    }

    #[test]
    fn missing_header_column_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "c.csv", "id,age\na,50\n");
        assert!(matches!(
            load_cohort(&p, &CsvSchema::default()),
            Err(Error::MissingColumn(_))
        ));
    }

    #[test]
    fn schema_aliases_rename_columns() {
        let dir = tempfile::tempdir().unwrap();
        let body = csv_with_rows(&[row("a", "30", "100")]).replacen("age", "age_years", 1);
        let p = write(&dir, "c.csv", &body);
        let schema = CsvSchema::default().with_alias("age", "age_years");
        let rep = load_cohort(&p, &schema).unwrap();
        assert_eq!(rep.cohort.records[0].features.age, 64.0);
    }

    #[test]
    fn write_then_load_reproduces_records() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = record("a");
        a.features.bmi = Some(0.1 + 0.2);
        a.split = Some(SplitTag::Test);
        let mut b = record("b");
        b.outcome = Outcome::censored_at(1234.5);
        b.features.ethnicity = None;
        let cohort = Cohort::new(vec![a, b]);
        let p = dir.path().join("out.csv");
        write_cohort(&cohort, &p).unwrap();
        let back = load_cohort(&p, &CsvSchema::default()).unwrap();
        assert_eq!(back.cohort.records, cohort.records);
    }
}
