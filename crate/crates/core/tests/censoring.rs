use std::time::Instant;

use cadrx_core::censoring::{impute_all, validate_imputation, validate_imputation_with, DEFAULT_K};
use cadrx_core::cohort::{generate_synthetic_cohort, SynthConfig};

fn cohort(noise: f64, censoring: f64) -> cadrx_core::cohort::Cohort {
    let cfg = SynthConfig {
        n: 5000,
        seed: 17,
        noise_level: noise,
        censoring_rate: censoring,
        missing_rate: 0.0,
        ..SynthConfig::default()
    };
    generate_synthetic_cohort(&cfg).unwrap().0
}

#[test]
fn imputation_is_sound_and_fast() {
    let c = cohort(0.75, 0.35);
    let start = Instant::now();
    let out = impute_all(&c, DEFAULT_K).unwrap();
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "{elapsed:?}");
    for r in out.records.iter().filter(|r| r.outcome.censored) {
        assert!(r.outcome.imputed);
        assert!(r.outcome.tae_days.unwrap() >= r.outcome.censor_time_days.unwrap());
    }
}

#[test]
fn artificial_censoring_recovers_zero_noise_outcomes() {
    let c = cohort(0.0, 0.0);
    let report = validate_imputation(&c, DEFAULT_K, 3).unwrap();
    eprintln!(
        "r2 = {} over {} pairs, skipped {}",
        report.r2,
        report.pairs.len(),
        report.skipped
    );
    assert!(report.r2 >= 0.5);
    let oracle = validate_imputation_with(&c, 3, &|q| {
        Ok(c.records
            .iter()
            .find(|r| r.id == q.id)
            .unwrap()
            .outcome
            .tae_days
            .unwrap())
    })
    .unwrap();
    assert!((oracle.r2 - 1.0).abs() <= 1e-12);
}
