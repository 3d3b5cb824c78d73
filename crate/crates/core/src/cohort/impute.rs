//! k-NN imputation of missing patient characteristics.

use rayon::prelude::*;

use super::features::{argmax_first, Column, FeatureLayout, FeatureSet, NormStats};
use super::{Cohort, Features, OptionalField};
use crate::error::{Error, Result};

pub const DEFAULT_FEATURE_K: usize = 10;

/// Fills every missing optional field from the `k` nearest fully observed
/// records.
///
/// Distances use only the coordinates the incomplete record has, with
/// continuous columns scaled by their training standard deviation. Numeric
/// gaps take the neighbors' mean, categorical gaps their mode (ties go to the
/// first category in sorted order). Complete records are returned unchanged.
pub fn impute_missing_features(cohort: &Cohort, k: usize) -> Result<Cohort> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be >= 1".into()));
    }
    let active = cohort.active_optional();
    for &field in &active {
        if !cohort.records.iter().any(|r| r.features.is_present(field)) && !cohort.is_empty() {
            return Err(Error::FeatureUnobserved(field.label().to_string()));
        }
    }
    let complete = |f: &Features| active.iter().all(|&a| f.is_present(a));
    let queries: Vec<usize> = cohort.indices_where(|r| !complete(&r.features));
    if queries.is_empty() {
        return Ok(cohort.clone());
    }
    let donors: Vec<usize> = cohort.indices_where(|r| complete(&r.features));
    if donors.is_empty() {
        return Err(Error::NoCompleteRecords);
    }

    let layout = FeatureLayout::new(FeatureSet::Full, &cohort.dropped);
    let norm = NormStats::fit(cohort);
    let coords = |f: &Features| -> Vec<Option<f64>> {
        layout
            .columns
            .iter()
            .map(|col| {
                col.raw(f).map(|v| match col {
                    Column::Continuous(c) => {
                        let s = norm.get(*c).std;
                        if s > 0.0 {
                            v / s
                        } else {
                            0.0
                        }
                    }
                    _ => v,
                })
            })
            .collect()
    };
    let donor_coords: Vec<Vec<f64>> = donors
        .iter()
        .map(|&i| {
            coords(&cohort.records[i].features)
                .into_iter()
                .map(Option::unwrap)
                .collect()
        })
        .collect();

    let filled: Vec<(usize, Features)> = queries
        .par_iter()
        .map(|&qi| {
            let f = &cohort.records[qi].features;
            let q = coords(f);
            let mut dist: Vec<(f64, usize)> = donor_coords
                .iter()
                .enumerate()
                .map(|(d, row)| {
                    let s: f64 = q
                        .iter()
                        .zip(row)
                        .filter_map(|(a, b)| a.map(|a| (a - b) * (a - b)))
                        .sum();
                    (s, d)
                })
                .collect();
            dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let nearest: Vec<&Features> = dist
                .iter()
                .take(k)
                .map(|&(_, d)| &cohort.records[donors[d]].features)
                .collect();
            (qi, fill_from(f, &nearest, &active))
        })
        .collect();

    let mut out = cohort.clone();
    for (i, f) in filled {
        out.records[i].features = f;
    }
    Ok(out)
}

fn fill_from(f: &Features, neighbors: &[&Features], active: &[OptionalField]) -> Features {
    let mut out = f.clone();
    for &field in active {
        if f.is_present(field) {
            continue;
        }
        if field.is_categorical() {
            let mut counts = vec![0usize; field.n_categories()];
            for n in neighbors {
                counts[n.category(field).unwrap()] += 1;
            }
            out.set_category(field, argmax_first(&counts));
        } else {
            let mean = neighbors.iter().map(|n| n.numeric(field).unwrap()).sum::<f64>() / neighbors.len() as f64;
            *out.numeric_mut(field).unwrap() = Some(mean);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::test_support::record;
    use crate::cohort::{Ethnicity, PatientRecord};

    fn with_bmi(id: &str, age: f64, bmi: Option<f64>) -> PatientRecord {
        let mut r = record(id);
        r.features.age = age;
        r.features.bmi = bmi;
        r
    }

    #[test]
    fn complete_record_is_unchanged() {
        let c = Cohort::new(vec![with_bmi("a", 60.0, Some(25.0)), with_bmi("b", 70.0, None)]);
        let out = impute_missing_features(&c, 1).unwrap();
        assert_eq!(out.records[0], c.records[0]);
    }

    #[test]
    fn single_neighbor_value_is_copied() {
        let c = Cohort::new(vec![with_bmi("a", 60.0, Some(30.0)), with_bmi("b", 61.0, None)]);
        let out = impute_missing_features(&c, 1).unwrap();
        assert_eq!(out.records[1].features.bmi, Some(30.0));
    }

    #[test]
    fn two_neighbors_are_averaged() {
        let c = Cohort::new(vec![
            with_bmi("a", 60.0, Some(28.0)),
            with_bmi("b", 62.0, Some(32.0)),
            with_bmi("far", 95.0, Some(50.0)),
            with_bmi("q", 61.0, None),
        ]);
        let out = impute_missing_features(&c, 2).unwrap();
        assert_eq!(out.records[3].features.bmi, Some(30.0));
    }

    #[test]
    fn categorical_gap_takes_neighbor_mode() {
        let mut rs: Vec<_> = (0..3)
            .map(|i| with_bmi(&format!("d{i}"), 60.0 + i as f64, Some(30.0)))
            .collect();
        rs[0].features.ethnicity = Some(Ethnicity::Hispanic);
        rs[1].features.ethnicity = Some(Ethnicity::Hispanic);
        rs[2].features.ethnicity = Some(Ethnicity::Black);
        let mut q = with_bmi("q", 61.0, Some(30.0));
        q.features.ethnicity = None;
        rs.push(q);
        let out = impute_missing_features(&Cohort::new(rs), 3).unwrap();
        assert_eq!(out.records[3].features.ethnicity, Some(Ethnicity::Hispanic));
    }

    #[test]
    fn field_missing_everywhere_is_an_error() {
        let c = Cohort::new(vec![with_bmi("a", 60.0, None), with_bmi("b", 70.0, None)]);
        assert!(matches!(
            impute_missing_features(&c, 3),
            Err(Error::FeatureUnobserved(f)) if f == "bmi"
        ));
    }
}
