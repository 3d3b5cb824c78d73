//! Time-to-event imputation for right-censored records.
//!
//! A censored patient borrows the mean outcome of its `k` nearest uncensored
//! neighbours among those that could plausibly be the same patient: same
//! gender, same age decade, and an outcome no earlier than the censor time.
//! Distances are Euclidean over standardized patient covariates (treatment
//! flags excluded).

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{AgeGroup, Cohort, FeatureEncoder, FeatureSet, PatientRecord, HORIZON_DAYS};
use crate::error::{Error, Result};
use crate::learners::linear::fit_ridge_logistic;
use crate::metrics;

pub const DEFAULT_K: usize = 50;
pub const DEFAULT_K_GRID: [usize; 5] = [10, 25, 50, 75, 100];
/// Artificial censor draws per record before giving up on it.
pub const MAX_REDRAWS: usize = 100;

/// Conditions a pool member must meet to stand in for a censored query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborConstraint {
    pub gender_match: bool,
    pub age_group_match: bool,
    /// The query's censor time.
    pub min_outcome_days: f64,
}

impl NeighborConstraint {
    pub fn strict(query: &PatientRecord) -> Self {
        NeighborConstraint {
            gender_match: true,
            age_group_match: true,
            min_outcome_days: query.outcome.censor_time_days.unwrap_or(0.0),
        }
    }

    /// Constraints in fallback order: all, then without age, then without gender.
    pub fn fallbacks(query: &PatientRecord) -> [Self; 3] {
        let s = Self::strict(query);
        [
            s,
            NeighborConstraint {
                age_group_match: false,
                ..s
            },
            NeighborConstraint {
                age_group_match: false,
                gender_match: false,
                ..s
            },
        ]
    }

    pub fn admits(&self, query: &PatientRecord, candidate: &PatientRecord) -> bool {
        let Some(tae) = candidate.outcome.tae_days else {
            return false;
        };
        candidate.outcome.is_known()
            && tae >= self.min_outcome_days
            && (!self.gender_match || candidate.features.gender == query.features.gender)
            && (!self.age_group_match || AgeGroup::of(candidate.features.age) == AgeGroup::of(query.features.age))
    }
}

/// Pool members (uncensored records) satisfying all three strict conditions.
pub fn eligible_neighbors(query: &PatientRecord, pool: &Cohort) -> Vec<String> {
    let c = NeighborConstraint::strict(query);
    pool.records
        .iter()
        .filter(|r| c.admits(query, r))
        .map(|r| r.id.clone())
        .collect()
}

/// Precomputed pool coordinates for repeated neighbour queries.
pub struct KnnPool<'a> {
    cohort: &'a Cohort,
    encoder: FeatureEncoder,
    donors: Vec<usize>,
    coords: Array2<f64>,
}

/// How far the constraints had to be relaxed to find neighbours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relaxation {
    None,
    AgeGroup,
    AgeGroupAndGender,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Imputation {
    pub tae_days: f64,
    pub relaxation: Relaxation,
    /// `(pool record index, distance)`, nearest first.
    pub neighbors: Vec<(usize, f64)>,
}

impl<'a> KnnPool<'a> {
    /// Uses every uncensored record of `cohort` as a donor.
    pub fn new(cohort: &'a Cohort) -> Result<Self> {
        let encoder = cohort.encoder(FeatureSet::Covariates)?;
        let donors = cohort.indices_where(|r| r.outcome.is_known());
        let mut coords = Array2::zeros((donors.len(), encoder.width()));
        for (row, &i) in donors.iter().enumerate() {
            let v = encoder.encode_filled(&cohort.records[i].features);
            coords.row_mut(row).assign(&ndarray::Array1::from(v));
        }
        Ok(KnnPool {
            cohort,
            encoder,
            donors,
            coords,
        })
    }

    pub fn cohort(&self) -> &Cohort {
        self.cohort
    }

    /// The `k` nearest admissible donors, ties broken by pool order.
    /// `exclude` removes one pool record (leave-one-out validation).
    pub fn nearest(
        &self,
        query: &PatientRecord,
        constraint: &NeighborConstraint,
        k: usize,
        exclude: Option<usize>,
    ) -> Vec<(usize, f64)> {
        let q = self.encoder.encode_filled(&query.features);
        let mut found: Vec<(usize, f64)> = self
            .donors
            .iter()
            .enumerate()
            .filter(|&(_, &i)| Some(i) != exclude && constraint.admits(query, &self.cohort.records[i]))
            .map(|(row, &i)| {
                let d2: f64 = self
                    .coords
                    .row(row)
                    .iter()
                    .zip(&q)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (i, d2.sqrt())
            })
            .collect();
        let by_dist = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
        if found.len() > k && k > 0 {
            found.select_nth_unstable_by(k - 1, by_dist);
            found.truncate(k);
        }
        found.sort_by(by_dist);
        found
    }

    /// Mean outcome of the `k` nearest strictly eligible donors.
    pub fn impute_strict(&self, query: &PatientRecord, k: usize) -> Result<f64> {
        let n = self.nearest(query, &NeighborConstraint::strict(query), k, None);
        if n.is_empty() {
            return Err(Error::ImputationInfeasible(query.id.clone()));
        }
        Ok(self.mean_tae(&n))
    }

    /// Imputes with constraint relaxation when the strict set is empty.
    pub fn impute(&self, query: &PatientRecord, k: usize, exclude: Option<usize>) -> Result<Imputation> {
        if k == 0 {
            return Err(Error::InvalidConfig("k must be >= 1".into()));
        }
        let levels = [Relaxation::None, Relaxation::AgeGroup, Relaxation::AgeGroupAndGender];
        for (constraint, relaxation) in NeighborConstraint::fallbacks(query).iter().zip(levels) {
            let neighbors = self.nearest(query, constraint, k, exclude);
            if !neighbors.is_empty() {
                return Ok(Imputation {
                    tae_days: self.mean_tae(&neighbors),
                    relaxation,
                    neighbors,
                });
            }
        }
        Err(Error::ImputationInfeasible(query.id.clone()))
    }

    fn mean_tae(&self, neighbors: &[(usize, f64)]) -> f64 {
        let sum: f64 = neighbors
            .iter()
            .map(|&(i, _)| self.cohort.records[i].outcome.tae_days.unwrap())
            .sum();
        sum / neighbors.len() as f64
    }
}

/// Mean TAE of the `min(k, |eligible|)` nearest strictly eligible pool members.
pub fn impute_censored_tae(query: &PatientRecord, pool: &Cohort, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be >= 1".into()));
    }
    KnnPool::new(pool)?.impute_strict(query, k)
}

/// Fills every censored, not yet imputed record. Uncensored records are untouched.
pub fn impute_all(cohort: &Cohort, k: usize) -> Result<Cohort> {
    let pool = KnnPool::new(cohort)?;
    let targets = cohort.indices_where(|r| r.outcome.censored && !r.outcome.imputed);
    let results: Vec<(usize, Imputation)> = targets
        .par_iter()
        .map(|&i| pool.impute(&cohort.records[i], k, None).map(|imp| (i, imp)))
        .collect::<Result<_>>()?;
    let relaxed = results
        .iter()
        .filter(|(_, imp)| imp.relaxation != Relaxation::None)
        .count();
    if relaxed > 0 {
        log::info!("{relaxed} censored records needed relaxed neighbour constraints");
    }
    let mut out = cohort.clone();
    for (i, imp) in results {
        let o = &mut out.records[i].outcome;
        o.tae_days = Some(imp.tae_days);
        o.imputed = true;
        o.event_occurred = imp.tae_days < HORIZON_DAYS;
    }
    Ok(out)
}

/// Empirical survival over a neighbour set: `S(t)` is the fraction of
/// neighbours whose TAE exceeds `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    /// Sorted distinct neighbour event times, days.
    pub times: Vec<f64>,
    /// `S` just after each time in `times`.
    pub survival: Vec<f64>,
}

impl SurvivalCurve {
    pub fn from_times(tae: &[f64]) -> Self {
        let mut sorted = tae.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mut times = Vec::new();
        let mut survival = Vec::new();
        let mut i = 0;
        while i < sorted.len() {
            let t = sorted[i];
            while i < sorted.len() && sorted[i] == t {
                i += 1;
            }
            times.push(t);
            survival.push((sorted.len() - i) as f64 / n);
        }
        SurvivalCurve { times, survival }
    }

    /// Right-continuous step function; 1 before the first event time.
    pub fn at(&self, t: f64) -> f64 {
        match self.times.partition_point(|&x| x <= t) {
            0 => 1.0,
            j => self.survival[j - 1],
        }
    }
}

pub fn survival_curve(query: &PatientRecord, pool: &Cohort, k: usize) -> Result<SurvivalCurve> {
    let knn = KnnPool::new(pool)?;
    let n = knn.nearest(query, &NeighborConstraint::strict(query), k, None);
    if n.is_empty() {
        return Err(Error::ImputationInfeasible(query.id.clone()));
    }
    let tae: Vec<f64> = n
        .iter()
        .map(|&(i, _)| pool.records[i].outcome.tae_days.unwrap())
        .collect();
    Ok(SurvivalCurve::from_times(&tae))
}

/// Score of an imputed cohort on one fold: `(cohort, fit rows, held-out rows)`.
pub type KObjective<'o> = dyn Fn(&Cohort, &[usize], &[usize]) -> Result<f64> + Sync + 'o;

/// Held-out AUC of an L2 logistic ten-year risk model.
pub fn logistic_auc_objective(cohort: &Cohort, fit: &[usize], held_out: &[usize]) -> Result<f64> {
    let encoder = cohort.encoder(FeatureSet::Full)?;
    let labels = |idx: &[usize]| -> Result<Vec<f64>> {
        idx.iter()
            .map(|&i| crate::risk::record_label(&cohort.records[i]).map(|b| b as u8 as f64))
            .collect()
    };
    let x = encoder.matrix(cohort, fit)?;
    let model = fit_ridge_logistic(&x, &labels(fit)?, 1.0)?;
    let xh = encoder.matrix(cohort, held_out)?;
    let scores = model.predict(&xh);
    let yh: Vec<bool> = labels(held_out)?.iter().map(|&v| v == 1.0).collect();
    metrics::auc(&scores, &yh)
}

/// Picks `k` maximising the mean fold score of `objective` on the imputed
/// training records. Ties go to the smaller `k`.
pub fn cv_select_k(
    cohort: &Cohort,
    grid: &[usize],
    folds: usize,
    seed: u64,
    objective: &KObjective<'_>,
) -> Result<usize> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("k grid is empty".into()));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() == 1 {
        return Ok(sorted[0]);
    }
    let train = cohort.training_indices();
    let fold_sets = crate::learners::cv::kfold(train.len(), folds, seed)?;
    let mut best = (sorted[0], f64::NEG_INFINITY);
    for &k in &sorted {
        let imputed = impute_all(cohort, k)?;
        let mut total = 0.0;
        for held in &fold_sets {
            let held_rows: Vec<usize> = held.iter().map(|&j| train[j]).collect();
            let fit_rows: Vec<usize> = train
                .iter()
                .enumerate()
                .filter(|(j, _)| held.binary_search(j).is_err())
                .map(|(_, &i)| i)
                .collect();
            total += objective(&imputed, &fit_rows, &held_rows)?;
        }
        let score = total / fold_sets.len() as f64;
        log::debug!("k = {k}: mean fold score {score:.5}");
        if score > best.1 {
            best = (k, score);
        }
    }
    Ok(best.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationPair {
    pub id: String,
    pub censor_time_days: f64,
    pub true_tae_days: f64,
    pub imputed_tae_days: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub k: usize,
    pub r2: f64,
    pub pairs: Vec<ImputationPair>,
    /// Records whose artificial censor draw never fell below their TAE.
    pub skipped: usize,
}

impl ValidationReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,censor_time_days,true_tae_days,imputed_tae_days\n");
        for p in &self.pairs {
            s.push_str(&format!(
                "{},{},{},{}\n",
                p.id, p.censor_time_days, p.true_tae_days, p.imputed_tae_days
            ));
        }
        s
    }
}

/// Artificial-censoring check of the k-NN imputer with leave-one-out pools.
pub fn validate_imputation(cohort: &Cohort, k: usize, seed: u64) -> Result<ValidationReport> {
    let pool = KnnPool::new(cohort)?;
    let positions: std::collections::HashMap<&str, usize> = cohort
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.id.as_str(), i))
        .collect();
    let mut report = validate_imputation_with(cohort, seed, &|q: &PatientRecord| {
        pool.impute(q, k, positions.get(q.id.as_str()).copied())
            .map(|imp| imp.tae_days)
    })?;
    report.k = k;
    Ok(report)
}

/// Same protocol with a caller-supplied imputer. The imputer receives the
/// artificially censored copy of each record.
pub fn validate_imputation_with(
    cohort: &Cohort,
    seed: u64,
    imputer: &(dyn Fn(&PatientRecord) -> Result<f64> + Sync),
) -> Result<ValidationReport> {
    let known = cohort.indices_where(|r| r.outcome.is_known());
    if known.len() < 10 {
        return Err(Error::Empty(format!(
            "artificial-censoring validation needs at least 10 uncensored records, found {}",
            known.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut queries = Vec::with_capacity(known.len());
    let mut skipped = 0;
    for &i in &known {
        let rec = &cohort.records[i];
        let tae = rec.outcome.tae_days.unwrap();
        let draw = (0..MAX_REDRAWS)
            .map(|_| rng.random_range(1..=HORIZON_DAYS as u32) as f64)
            .find(|&c| c < tae);
        match draw {
            Some(c) => {
                let mut q = rec.clone();
                q.outcome = crate::cohort::Outcome::censored_at(c);
                queries.push((q, tae));
            }
            None => skipped += 1,
        }
    }
    let imputed: Vec<f64> = queries.par_iter().map(|(q, _)| imputer(q)).collect::<Result<_>>()?;
    let truth: Vec<f64> = queries.iter().map(|(_, t)| *t).collect();
    let r2 = metrics::r2(&imputed, &truth)?;
    let pairs = queries
        .into_iter()
        .zip(imputed)
        .map(|((q, t), p)| ImputationPair {
            censor_time_days: q.outcome.censor_time_days.unwrap(),
            id: q.id,
            true_tae_days: t,
            imputed_tae_days: p,
        })
        .collect();
    Ok(ValidationReport {
        k: 0,
        r2,
        pairs,
        skipped,
    })
}
