//! Shared inputs for the benchmarks.

use cadrx_core::censoring::DEFAULT_K;
use cadrx_core::cohort::{generate_synthetic_cohort, Cohort, SynthConfig};
use cadrx_core::pipeline::{prepare_cohort, RunConfig};
use cadrx_core::{train_bank, ModelBank};

pub fn raw_cohort(n: usize, seed: u64) -> Cohort {
    let config = SynthConfig {
        n,
        seed,
        ..SynthConfig::default()
    };
    generate_synthetic_cohort(&config).expect("valid synth config").0
}

pub fn run_config(seed: u64) -> RunConfig {
    let mut c = RunConfig {
        seed,
        ..RunConfig::default()
    };
    c.censoring.k = Some(DEFAULT_K);
    c
}

/// Split, feature-imputed and outcome-imputed cohort.
pub fn prepared_cohort(n: usize, seed: u64) -> Cohort {
    prepare_cohort(&raw_cohort(n, seed), &run_config(seed))
        .expect("prepared cohort")
        .0
}

pub fn trained_bank(n: usize, seed: u64) -> (Cohort, ModelBank) {
    let cohort = prepared_cohort(n, seed);
    let bank = train_bank(&cohort, &run_config(seed).bank_config()).expect("trained bank");
    (cohort, bank)
}
