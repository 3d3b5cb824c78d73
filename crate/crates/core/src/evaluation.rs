//! Counterfactual evaluation of recommendations.
//!
//! Notation per patient `i`: observed arm `z_i` and outcome `t_i` (years),
//! recommendation `τ_i` with combined estimate `y_i(τ_i)`, and per-method
//! estimates `g^j_i(p)`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cohort::{AgeGroup, Cohort, PatientRecord, SyntheticOracle, TreatmentArm, DAYS_PER_YEAR};
use crate::error::{Error, Result};
use crate::learners::{Method, Task};
use crate::prescriber::{argmax_arm, Prescription};

/// Source of the TAE estimate under the recommended arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// The combined vote, `y_i(τ_i)`.
    Combined,
    /// Matrix row `j`, `g^j_i`.
    Method(usize),
}

/// What actually happened to a patient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observed {
    pub arm: TreatmentArm,
    pub tae_years: f64,
}

fn non_empty(p: &[Prescription]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::Empty("no prescriptions to evaluate".into()));
    }
    Ok(())
}

fn same_len(p: &[Prescription], n: usize) -> Result<()> {
    if p.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} prescriptions vs {n} observations",
            p.len()
        )));
    }
    Ok(())
}

fn method_value(p: &Prescription, j: usize, arm: TreatmentArm) -> Result<f64> {
    p.per_model_estimates
        .get(j)
        .map(|e| e.estimates[&arm])
        .ok_or_else(|| Error::MissingModel(format!("matrix row {j}")))
}

/// Estimate under the recommended arm.
fn estimate_at_tau(p: &Prescription, e: Estimator) -> Result<f64> {
    match e {
        Estimator::Combined => Ok(p.expected_tae_years),
        Estimator::Method(j) => method_value(p, j, p.recommendation),
    }
}

/// Mean of `estimate(τ_i) − t_i` over all patients.
pub fn prescription_effectiveness(
    prescriptions: &[Prescription],
    observed: &[Observed],
    estimator: Estimator,
) -> Result<f64> {
    non_empty(prescriptions)?;
    same_len(prescriptions, observed.len())?;
    let mut total = 0.0;
    for (p, o) in prescriptions.iter().zip(observed) {
        total += estimate_at_tau(p, estimator)? - o.tae_years;
    }
    Ok(total / prescriptions.len() as f64)
}

/// Mean of `estimate(τ_i) − g^k_i(z_i)`: effectiveness against the
/// ground truth produced by method `k`.
pub fn prescription_robustness(
    prescriptions: &[Prescription],
    observed_arms: &[TreatmentArm],
    estimator: Estimator,
    ground_truth: usize,
) -> Result<f64> {
    non_empty(prescriptions)?;
    same_len(prescriptions, observed_arms.len())?;
    let mut total = 0.0;
    for (p, &z) in prescriptions.iter().zip(observed_arms) {
        total += estimate_at_tau(p, estimator)? - method_value(p, ground_truth, z)?;
    }
    Ok(total / prescriptions.len() as f64)
}

/// Per-arm mean observed TAE (years) over the cohort's training records.
pub fn arm_means(cohort: &Cohort) -> Result<[f64; 5]> {
    let mut sum = [0.0; 5];
    let mut n = [0usize; 5];
    for i in cohort.training_indices() {
        let r = &cohort.records[i];
        let t = r.outcome.tae_days.ok_or_else(|| Error::MissingOutcome(r.id.clone()))?;
        sum[r.treatment.index()] += t / DAYS_PER_YEAR;
        n[r.treatment.index()] += 1;
    }
    let mut out = [0.0; 5];
    for p in 0..5 {
        if n[p] == 0 {
            return Err(Error::Empty(format!(
                "no training records for arm {}",
                TreatmentArm::ALL[p]
            )));
        }
        out[p] = sum[p] / n[p] as f64;
    }
    Ok(out)
}

/// Coefficient of determination on the agreement set, against the per-arm
/// mean baseline. For the combined recommender the set is `{τ_i = z_i}`;
/// for method `j` it is `{θ^j_i = z_i}`.
pub fn adjusted_r2(
    prescriptions: &[Prescription],
    observed: &[Observed],
    estimator: Estimator,
    arm_means: &[f64; 5],
) -> Result<f64> {
    same_len(prescriptions, observed.len())?;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut size = 0;
    for (p, o) in prescriptions.iter().zip(observed) {
        let (agrees, estimate) = match estimator {
            Estimator::Combined => (p.recommendation == o.arm, p.expected_tae_years),
            Estimator::Method(j) => {
                let vote = p
                    .per_model_votes
                    .get(j)
                    .ok_or_else(|| Error::MissingModel(format!("matrix row {j}")))?
                    .vote;
                (vote == o.arm, method_value(p, j, o.arm)?)
            }
        };
        if agrees {
            size += 1;
            num += (estimate - o.tae_years).powi(2);
            den += (arm_means[o.arm.index()] - o.tae_years).powi(2);
        }
    }
    if size == 0 {
        return Err(Error::EmptyAgreementSet);
    }
    if den == 0.0 {
        return Err(Error::ZeroDenominator(
            "agreement-set outcomes equal their arm means".into(),
        ));
    }
    Ok(1.0 - num / den)
}

/// Agreement counts by DMLA level `K = 1..=M` (rows) and recommended arm (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmlaTable {
    pub n_methods: usize,
    pub counts: Vec<[usize; 5]>,
    /// Column percentages: each arm's column sums to 100 (or is all zero when
    /// the arm was never recommended).
    pub percent_by_arm: Vec<[f64; 5]>,
    pub overall_percent: Vec<f64>,
}

pub fn dmla_distribution(prescriptions: &[Prescription], n_methods: usize) -> Result<DmlaTable> {
    let mut counts = vec![[0usize; 5]; n_methods];
    for p in prescriptions {
        if p.dmla == 0 || p.dmla > n_methods {
            return Err(Error::DimensionMismatch(format!(
                "DMLA {} outside 1..={n_methods}",
                p.dmla
            )));
        }
        counts[p.dmla - 1][p.recommendation.index()] += 1;
    }
    let col: Vec<usize> = (0..5).map(|a| counts.iter().map(|r| r[a]).sum()).collect();
    let n = prescriptions.len();
    let percent_by_arm = counts
        .iter()
        .map(|r| {
            std::array::from_fn(|a| {
                if col[a] == 0 {
                    0.0
                } else {
                    100.0 * r[a] as f64 / col[a] as f64
                }
            })
        })
        .collect();
    let overall_percent = counts
        .iter()
        .map(|r| {
            if n == 0 {
                0.0
            } else {
                100.0 * r.iter().sum::<usize>() as f64 / n as f64
            }
        })
        .collect();
    Ok(DmlaTable {
        n_methods,
        counts,
        percent_by_arm,
        overall_percent,
    })
}

/// Observed arm (rows) versus recommended arm (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationTable {
    pub counts: [[usize; 5]; 5],
    pub percent: [[f64; 5]; 5],
    /// Fraction of patients whose recommendation equals their observed arm.
    pub agreement_rate: f64,
}

pub fn allocation_matrix(observed: &[TreatmentArm], recommended: &[TreatmentArm]) -> Result<AllocationTable> {
    if observed.len() != recommended.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} observed arms vs {} recommendations",
            observed.len(),
            recommended.len()
        )));
    }
    if observed.is_empty() {
        return Err(Error::Empty("no patients to allocate".into()));
    }
    let mut counts = [[0usize; 5]; 5];
    for (z, t) in observed.iter().zip(recommended) {
        counts[z.index()][t.index()] += 1;
    }
    let n = observed.len() as f64;
    let percent = std::array::from_fn(|a| std::array::from_fn(|b| 100.0 * counts[a][b] as f64 / n));
    let trace: usize = (0..5).map(|a| counts[a][a]).sum();
    Ok(AllocationTable {
        counts,
        percent,
        agreement_rate: trace as f64 / n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubgroupAttribute {
    Gender,
    Ethnicity,
    /// Decade buckets shared with neighbour matching.
    AgeGroup,
    /// Coarse bands <65, 65-80, 80+.
    AgeBand,
    Smoking,
}

impl SubgroupAttribute {
    pub const ALL: [SubgroupAttribute; 5] = [
        SubgroupAttribute::Gender,
        SubgroupAttribute::Ethnicity,
        SubgroupAttribute::AgeGroup,
        SubgroupAttribute::AgeBand,
        SubgroupAttribute::Smoking,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SubgroupAttribute::Gender => "gender",
            SubgroupAttribute::Ethnicity => "ethnicity",
            SubgroupAttribute::AgeGroup => "age_group",
            SubgroupAttribute::AgeBand => "age_band",
            SubgroupAttribute::Smoking => "smoking",
        }
    }

    pub fn group_of(self, r: &PatientRecord) -> String {
        let f = &r.features;
        match self {
            SubgroupAttribute::Gender => f.gender.label().to_string(),
            SubgroupAttribute::Ethnicity => f.ethnicity.map_or("unknown", |e| e.label()).to_string(),
            SubgroupAttribute::AgeGroup => AgeGroup::of(f.age).label().to_string(),
            SubgroupAttribute::AgeBand => if f.age < 65.0 {
                "<65"
            } else if f.age < 80.0 {
                "65-80"
            } else {
                "80+"
            }
            .to_string(),
            SubgroupAttribute::Smoking => if f.smoking { "smoker" } else { "non-smoker" }.to_string(),
        }
    }
}

impl fmt::Display for SubgroupAttribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SubgroupAttribute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        let norm = if norm == "age" { "age_group".to_string() } else { norm };
        SubgroupAttribute::ALL
            .into_iter()
            .find(|a| a.label() == norm)
            .ok_or_else(|| Error::UnknownAttribute(s.to_string()))
    }
}

pub const LOW_CONFIDENCE_GROUP_SIZE: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupRow {
    pub group: String,
    pub n: usize,
    pub current_mean_years: f64,
    pub recommended_mean_years: f64,
    /// Relative change of the recommended over the current mean, percent.
    pub change_percent: f64,
    pub low_confidence: bool,
    /// Patients per observed arm.
    pub current_allocation: [usize; 5],
    /// Patients per recommended arm.
    pub recommended_allocation: [usize; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupReport {
    pub attribute: SubgroupAttribute,
    pub rows: Vec<SubgroupRow>,
}

/// Group means of `t_i` and `y_i(τ_i)`. `records[i]` must belong to
/// `prescriptions[i]`.
pub fn subgroup_report(
    prescriptions: &[Prescription],
    records: &[&PatientRecord],
    observed: &[Observed],
    attribute: SubgroupAttribute,
) -> Result<SubgroupReport> {
    same_len(prescriptions, records.len())?;
    same_len(prescriptions, observed.len())?;
    struct Acc {
        n: usize,
        current: f64,
        recommended: f64,
        cur_alloc: [usize; 5],
        rec_alloc: [usize; 5],
    }
    let mut groups: BTreeMap<String, Acc> = BTreeMap::new();
    for ((p, r), o) in prescriptions.iter().zip(records).zip(observed) {
        let g = groups.entry(attribute.group_of(r)).or_insert(Acc {
            n: 0,
            current: 0.0,
            recommended: 0.0,
            cur_alloc: [0; 5],
            rec_alloc: [0; 5],
        });
        g.n += 1;
        g.current += o.tae_years;
        g.recommended += p.expected_tae_years;
        g.cur_alloc[o.arm.index()] += 1;
        g.rec_alloc[p.recommendation.index()] += 1;
    }
    let rows = groups
        .into_iter()
        .map(|(group, a)| {
            let current = a.current / a.n as f64;
            let recommended = a.recommended / a.n as f64;
            SubgroupRow {
                group,
                n: a.n,
                current_mean_years: current,
                recommended_mean_years: recommended,
                change_percent: if current == 0.0 {
                    0.0
                } else {
                    100.0 * (recommended - current) / current
                },
                low_confidence: a.n < LOW_CONFIDENCE_GROUP_SIZE,
                current_allocation: a.cur_alloc,
                recommended_allocation: a.rec_alloc,
            }
        })
        .collect();
    Ok(SubgroupReport { attribute, rows })
}

/// Oracle outcome of a policy, years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub policy: String,
    pub achieved_years: f64,
    pub optimal_years: f64,
    pub regret_years: f64,
}

/// Scores assignments `(patient id, arm)` against the true per-arm outcomes.
pub fn oracle_regret(
    policy: &str,
    assignments: &[(String, TreatmentArm)],
    oracle: &SyntheticOracle,
) -> Result<RegretReport> {
    if assignments.is_empty() {
        return Err(Error::Empty("no assignments to score".into()));
    }
    let index = oracle.index();
    let mut achieved = 0.0;
    let mut optimal = 0.0;
    for (id, arm) in assignments {
        let t = index
            .get(id.as_str())
            .ok_or_else(|| Error::MissingOutcome(format!("{id} (not in oracle)")))?;
        achieved += t[arm.index()];
        optimal += t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    }
    let n = assignments.len() as f64 * DAYS_PER_YEAR;
    let (achieved, optimal) = (achieved / n, optimal / n);
    Ok(RegretReport {
        policy: policy.to_string(),
        achieved_years: achieved,
        optimal_years: optimal,
        regret_years: (optimal - achieved).max(0.0),
    })
}

/// Expected oracle outcome of assigning every arm with probability 1/5.
pub fn uniform_policy_regret(ids: &[String], oracle: &SyntheticOracle) -> Result<RegretReport> {
    if ids.is_empty() {
        return Err(Error::Empty("no patients to score".into()));
    }
    let index = oracle.index();
    let mut achieved = 0.0;
    let mut optimal = 0.0;
    for id in ids {
        let t = index
            .get(id.as_str())
            .ok_or_else(|| Error::MissingOutcome(format!("{id} (not in oracle)")))?;
        achieved += t.iter().sum::<f64>() / 5.0;
        optimal += t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    }
    let n = ids.len() as f64 * DAYS_PER_YEAR;
    Ok(RegretReport {
        policy: "uniform_random".into(),
        achieved_years: achieved / n,
        optimal_years: optimal / n,
        regret_years: ((optimal - achieved) / n).max(0.0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorValue {
    pub estimator: String,
    /// `None` when undefined (empty agreement set or zero denominator).
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub methods: Vec<Method>,
    pub n_patients: usize,
    /// Combined recommender first, then one entry per method.
    pub pe: Vec<EstimatorValue>,
    /// Rows: combined recommender then each method; columns: ground-truth methods.
    pub pr_grid: Vec<Vec<f64>>,
    pub adj_r2: Vec<EstimatorValue>,
    /// Training-split mean TAE per observed arm, years.
    pub arm_means_years: [f64; 5],
    pub dmla: DmlaTable,
    pub allocation: AllocationTable,
    pub subgroups: Vec<SubgroupReport>,
    /// Present for synthetic cohorts with a known oracle.
    pub regret: Option<Vec<RegretReport>>,
}

pub const COMBINED: &str = "ml4cad";

fn estimator_names(methods: &[Method]) -> Vec<String> {
    std::iter::once(COMBINED.to_string())
        .chain(methods.iter().map(|m| m.label().to_string()))
        .collect()
}

fn estimators(m: usize) -> Vec<Estimator> {
    std::iter::once(Estimator::Combined)
        .chain((0..m).map(Estimator::Method))
        .collect()
}

/// Joins prescriptions with the cohort records they were made for.
pub fn observed_for<'c>(
    cohort: &'c Cohort,
    prescriptions: &[Prescription],
) -> Result<(Vec<&'c PatientRecord>, Vec<Observed>)> {
    let by_id: HashMap<&str, &PatientRecord> = cohort.records.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut records = Vec::with_capacity(prescriptions.len());
    let mut observed = Vec::with_capacity(prescriptions.len());
    for p in prescriptions {
        let r = *by_id
            .get(p.patient_id.as_str())
            .ok_or_else(|| Error::MissingOutcome(format!("{} (not in cohort)", p.patient_id)))?;
        let t = r.outcome.tae_days.ok_or_else(|| Error::MissingOutcome(r.id.clone()))?;
        records.push(r);
        observed.push(Observed {
            arm: r.treatment,
            tae_years: t / DAYS_PER_YEAR,
        });
    }
    Ok((records, observed))
}

/// Full report over the prescribed patients of `cohort`.
pub fn evaluate(
    cohort: &Cohort,
    prescriptions: &[Prescription],
    oracle: Option<&SyntheticOracle>,
) -> Result<EvaluationReport> {
    non_empty(prescriptions)?;
    let methods: Vec<Method> = prescriptions[0].per_model_estimates.iter().map(|e| e.method).collect();
    let m = methods.len();
    let (records, observed) = observed_for(cohort, prescriptions)?;
    let arms: Vec<TreatmentArm> = observed.iter().map(|o| o.arm).collect();
    let means = arm_means(cohort)?;
    let names = estimator_names(&methods);

    let mut pe = Vec::with_capacity(m + 1);
    let mut pr_grid = Vec::with_capacity(m + 1);
    let mut adj = Vec::with_capacity(m + 1);
    for (e, name) in estimators(m).into_iter().zip(&names) {
        pe.push(EstimatorValue {
            estimator: name.clone(),
            value: Some(prescription_effectiveness(prescriptions, &observed, e)?),
        });
        pr_grid.push(
            (0..m)
                .map(|k| prescription_robustness(prescriptions, &arms, e, k))
                .collect::<Result<Vec<f64>>>()?,
        );
        let value = match adjusted_r2(prescriptions, &observed, e, &means) {
            Ok(v) => Some(v),
            Err(Error::EmptyAgreementSet | Error::ZeroDenominator(_)) => None,
            Err(err) => return Err(err),
        };
        adj.push(EstimatorValue {
            estimator: name.clone(),
            value,
        });
    }

    let recommended: Vec<TreatmentArm> = prescriptions.iter().map(|p| p.recommendation).collect();
    let subgroups = SubgroupAttribute::ALL
        .into_iter()
        .map(|a| subgroup_report(prescriptions, &records, &observed, a))
        .collect::<Result<Vec<_>>>()?;

    let regret = oracle
        .map(|o| -> Result<Vec<RegretReport>> {
            let ids: Vec<String> = prescriptions.iter().map(|p| p.patient_id.clone()).collect();
            let with =
                |arms: Vec<TreatmentArm>| -> Vec<(String, TreatmentArm)> { ids.iter().cloned().zip(arms).collect() };
            let mut out = vec![
                oracle_regret(COMBINED, &with(recommended.clone()), o)?,
                oracle_regret("observed", &with(arms.clone()), o)?,
                uniform_policy_regret(&ids, o)?,
            ];
            for (j, method) in methods.iter().enumerate() {
                let votes = prescriptions.iter().map(|p| p.per_model_votes[j].vote).collect();
                out.push(oracle_regret(method.label(), &with(votes), o)?);
            }
            Ok(out)
        })
        .transpose()?;

    Ok(EvaluationReport {
        methods,
        n_patients: prescriptions.len(),
        pe,
        pr_grid,
        adj_r2: adj,
        arm_means_years: means,
        dmla: dmla_distribution(prescriptions, m)?,
        allocation: allocation_matrix(&arms, &recommended)?,
        subgroups,
        regret,
    })
}

/// Arm each method would pick for every patient, from the stored matrices.
pub fn method_votes(prescriptions: &[Prescription], method: usize) -> Vec<TreatmentArm> {
    prescriptions
        .iter()
        .map(|p| argmax_arm(&p.matrix().values[method]))
        .collect()
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.digits$}"))
}

impl EvaluationReport {
    fn row_names(&self) -> Vec<String> {
        std::iter::once("ML4CAD".to_string())
            .chain(
                self.methods
                    .iter()
                    .map(|m| m.display_name(Task::Regression).to_string()),
            )
            .collect()
    }

    /// Aligned text tables: PE/PR, adjusted R², DMLA, allocation, subgroups, regret.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let names = self.row_names();
        let arm_header: String = TreatmentArm::ALL.iter().map(|a| format!("{:>9}", a.label())).collect();

        let _ = writeln!(
            s,
            "Prescription effectiveness and robustness (years), n = {}",
            self.n_patients
        );
        let _ = write!(s, "{:<22}{:>10}", "Estimation model", "Baseline");
        for m in &self.methods {
            let _ = write!(s, "{:>20}", m.display_name(Task::Regression));
        }
        let _ = writeln!(s);
        for (i, name) in names.iter().enumerate() {
            let _ = write!(s, "{:<22}{:>10}", name, fmt_opt(self.pe[i].value, 3));
            for v in &self.pr_grid[i] {
                let _ = write!(s, "{:>20.3}", v);
            }
            let _ = writeln!(s);
        }

        let _ = writeln!(s, "\nAdjusted R² on the agreement set");
        for (name, v) in names.iter().zip(&self.adj_r2) {
            let _ = writeln!(s, "{:<22}{:>10}", name, fmt_opt(v.value, 4));
        }

        let _ = writeln!(s, "\nDegree of ML agreement (% of patients per recommended arm)");
        let _ = writeln!(s, "{:<6}{}{:>9}", "K", arm_header, "Overall");
        for k in (0..self.dmla.n_methods).rev() {
            let _ = write!(s, "{:<6}", k + 1);
            for v in &self.dmla.percent_by_arm[k] {
                let _ = write!(s, "{:>8.2}%", v);
            }
            let _ = writeln!(s, "{:>8.2}%", self.dmla.overall_percent[k]);
        }

        let _ = writeln!(s, "\nAllocation (% of patients; rows observed, columns recommended)");
        let _ = writeln!(s, "{:<9}{}", "", arm_header);
        for a in TreatmentArm::ALL {
            let _ = write!(s, "{:<9}", a.label());
            for v in &self.allocation.percent[a.index()] {
                let _ = write!(s, "{:>8.2}%", v);
            }
            let _ = writeln!(s);
        }
        let _ = writeln!(
            s,
            "Agreement with observed treatment: {:.2}%",
            100.0 * self.allocation.agreement_rate
        );

        for g in &self.subgroups {
            let _ = writeln!(s, "\nSubgroup: {}", g.attribute);
            let _ = writeln!(
                s,
                "{:<14}{:>7}{:>12}{:>12}{:>10}",
                "group", "n", "current", "ML4CAD", "change"
            );
            for r in &g.rows {
                let _ = writeln!(
                    s,
                    "{:<14}{:>7}{:>12.3}{:>12.3}{:>9.2}%{}",
                    r.group,
                    r.n,
                    r.current_mean_years,
                    r.recommended_mean_years,
                    r.change_percent,
                    if r.low_confidence { " (low confidence)" } else { "" }
                );
            }
        }

        if let Some(regret) = &self.regret {
            let _ = writeln!(s, "\nOracle outcome by policy (years)");
            let _ = writeln!(s, "{:<22}{:>10}{:>10}{:>10}", "policy", "achieved", "optimal", "regret");
            for r in regret {
                let _ = writeln!(
                    s,
                    "{:<22}{:>10.4}{:>10.4}{:>10.4}",
                    r.policy, r.achieved_years, r.optimal_years, r.regret_years
                );
            }
        }
        s
    }

    /// The PE/PR table as CSV.
    pub fn pr_csv(&self) -> String {
        let mut s = String::from("estimator,baseline");
        for m in &self.methods {
            let _ = write!(s, ",{}", m.label());
        }
        s.push('\n');
        for (i, e) in self.pe.iter().enumerate() {
            let _ = write!(s, "{},{}", e.estimator, fmt_opt(e.value, 17));
            for v in &self.pr_grid[i] {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn allocation_csv(&self) -> String {
        let mut s = String::from("observed");
        for a in TreatmentArm::ALL {
            let _ = write!(s, ",{}", a.label());
        }
        s.push('\n');
        for a in TreatmentArm::ALL {
            s.push_str(a.label());
            for v in &self.allocation.percent[a.index()] {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn dmla_csv(&self) -> String {
        let mut s = String::from("k");
        for a in TreatmentArm::ALL {
            let _ = write!(s, ",{}", a.label());
        }
        s.push_str(",overall\n");
        for k in 0..self.dmla.n_methods {
            let _ = write!(s, "{}", k + 1);
            for v in &self.dmla.percent_by_arm[k] {
                let _ = write!(s, ",{v}");
            }
            let _ = writeln!(s, ",{}", self.dmla.overall_percent[k]);
        }
        s
    }
}
