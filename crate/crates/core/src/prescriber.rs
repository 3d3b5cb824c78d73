//! Treatment recommendation by plurality vote over per-method argmax arms.
//!
//! Each method votes for the arm it predicts to give the longest TAE. The
//! arm with the most votes wins; arms tied at the top are separated by the
//! summed voting weights (out-of-sample R²) of their voters, and a tie that
//! survives that goes to the earlier arm in CABG, PCI, Drugs1, Drugs2,
//! Drugs3 order. The expected TAE is the mean estimate of the agreeing
//! methods for the chosen arm.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, Features, TreatmentArm};
use crate::error::{Error, Result};
use crate::learners::Method;
use crate::tae_regression::{EstimateMatrix, ModelBank};

/// Arm with the largest value; the earliest arm wins ties.
pub fn argmax_arm(row: &[f64; 5]) -> TreatmentArm {
    let mut best = 0;
    for p in 1..row.len() {
        if row[p] > row[best] {
            best = p;
        }
    }
    TreatmentArm::ALL[best]
}

/// Regress-and-compare recommendation of a single method (matrix row).
pub fn regress_and_compare(matrix: &EstimateMatrix, method: usize) -> TreatmentArm {
    argmax_arm(&matrix.values[method])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vote {
    pub recommendation: TreatmentArm,
    pub expected_tae_years: f64,
    /// Matrix rows whose own argmax equals the recommendation.
    pub agreeing: Vec<usize>,
    /// Each method's argmax arm.
    pub votes: Vec<TreatmentArm>,
}

impl Vote {
    pub fn dmla(&self) -> usize {
        self.agreeing.len()
    }
}

pub fn vote(matrix: &EstimateMatrix, weights: &[f64]) -> Result<Vote> {
    let m = matrix.n_methods();
    if m == 0 {
        return Err(Error::Empty("estimate matrix has no methods".into()));
    }
    if weights.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {m} methods",
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::InvalidConfig(
            "voting weights must be positive and finite".into(),
        ));
    }
    let votes: Vec<TreatmentArm> = (0..m).map(|j| regress_and_compare(matrix, j)).collect();
    let mut count = [0usize; 5];
    let mut weight = [0.0f64; 5];
    for (j, a) in votes.iter().enumerate() {
        count[a.index()] += 1;
        weight[a.index()] += weights[j];
    }
    let top = *count.iter().max().unwrap();
    let mut best: Option<usize> = None;
    for p in 0..5 {
        if count[p] == top && best.is_none_or(|b| weight[p] > weight[b]) {
            best = Some(p);
        }
    }
    let recommendation = TreatmentArm::ALL[best.unwrap()];
    let agreeing: Vec<usize> = (0..m).filter(|&j| votes[j] == recommendation).collect();
    let expected = agreeing.iter().map(|&j| matrix.get(j, recommendation)).sum::<f64>() / agreeing.len() as f64;
    Ok(Vote {
        recommendation,
        expected_tae_years: expected,
        agreeing,
        votes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodEstimates {
    pub method: Method,
    /// Years, keyed by arm in canonical order.
    pub estimates: BTreeMap<TreatmentArm, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodVote {
    pub method: Method,
    pub vote: TreatmentArm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prescription {
    pub patient_id: String,
    pub recommendation: TreatmentArm,
    pub expected_tae_years: f64,
    pub dmla: usize,
    pub agreeing_methods: Vec<Method>,
    pub per_model_estimates: Vec<MethodEstimates>,
    pub per_model_votes: Vec<MethodVote>,
}

impl Prescription {
    pub fn from_vote(patient_id: impl Into<String>, matrix: &EstimateMatrix, vote: &Vote) -> Self {
        Prescription {
            patient_id: patient_id.into(),
            recommendation: vote.recommendation,
            expected_tae_years: vote.expected_tae_years,
            dmla: vote.dmla(),
            agreeing_methods: vote.agreeing.iter().map(|&j| matrix.methods[j]).collect(),
            per_model_estimates: matrix
                .methods
                .iter()
                .zip(&matrix.values)
                .map(|(&method, row)| MethodEstimates {
                    method,
                    estimates: TreatmentArm::ALL.iter().map(|&a| (a, row[a.index()])).collect(),
                })
                .collect(),
            per_model_votes: matrix
                .methods
                .iter()
                .zip(&vote.votes)
                .map(|(&method, &vote)| MethodVote { method, vote })
                .collect(),
        }
    }

    /// Rebuilds the estimate matrix carried by this prescription.
    pub fn matrix(&self) -> EstimateMatrix {
        EstimateMatrix {
            methods: self.per_model_estimates.iter().map(|e| e.method).collect(),
            arms: TreatmentArm::ALL.to_vec(),
            values: self
                .per_model_estimates
                .iter()
                .map(|e| std::array::from_fn(|p| e.estimates[&TreatmentArm::ALL[p]]))
                .collect(),
        }
    }

    pub fn votes(&self) -> Vec<TreatmentArm> {
        self.per_model_votes.iter().map(|v| v.vote).collect()
    }
}

/// Recommendation for one patient.
pub fn prescribe(patient_id: &str, features: &Features, bank: &ModelBank) -> Result<Prescription> {
    let matrix = bank.estimate_matrix(features);
    let v = vote(&matrix, &bank.method_weights())?;
    Ok(Prescription::from_vote(patient_id, &matrix, &v))
}

/// One prescription per test-split patient (every patient when no split is
/// assigned), in cohort order.
pub fn prescribe_cohort(cohort: &Cohort, bank: &ModelBank) -> Result<Vec<Prescription>> {
    let mut idx = cohort.test_indices();
    if idx.is_empty() && cohort.records.iter().all(|r| r.split.is_none()) {
        idx = (0..cohort.len()).collect();
    }
    let weights = bank.method_weights();
    idx.par_iter()
        .map(|&i| {
            let r = &cohort.records[i];
            let matrix = bank.estimate_matrix(&r.features);
            let v = vote(&matrix, &weights)?;
            Ok(Prescription::from_vote(r.id.clone(), &matrix, &v))
        })
        .collect()
}
