use std::fs;

use cadrx_core::cohort::{
    generate_synthetic_cohort, split, Cohort, MedFlag, SplitFractions, SynthConfig, TreatmentArm,
};
use cadrx_core::learners::Method;
use cadrx_core::store::{config_digest, load_bank, load_manifest, save_bank, MANIFEST_FILE};
use cadrx_core::tae_regression::{train_bank, BankConfig, ModelBank};
use cadrx_core::Error;

fn cohort(n: usize, noise: f64, censoring: f64, seed: u64) -> Cohort {
    let (c, _) = generate_synthetic_cohort(&SynthConfig {
        n,
        seed,
        noise_level: noise,
        censoring_rate: censoring,
        missing_rate: 0.0,
        ..SynthConfig::default()
    })
    .unwrap();
    split(&c, SplitFractions::default(), seed).unwrap()
}

fn small_bank() -> (Cohort, ModelBank, BankConfig) {
    let c = cohort(1500, 0.5, 0.0, 4);
    let config = BankConfig {
        min_arm_size: 30,
        seed: 9,
        ..BankConfig::default()
    };
    let bank = train_bank(&c, &config).unwrap();
    (c, bank, config)
}

#[test]
fn zero_noise_bank_fits_the_oracle() {
    let c = cohort(5000, 0.0, 0.0, 1);
    let bank = train_bank(&c, &BankConfig::default()).unwrap();
    assert_eq!(bank.entries.len(), 25);
    let mut arm_train = [0; 5];
    for e in &bank.entries {
        if e.method == Method::ALL[0] {
            arm_train[e.arm.index()] = e.n_train;
        }
        eprintln!("{:<20} {:<7} R² {:.4}", e.method.label(), e.arm.label(), e.r2);
        if matches!(e.method, Method::Linear | Method::BoostedTrees) {
            assert!(e.r2 > 0.9, "{} / {}: {}", e.method, e.arm, e.r2);
        } else {
            // Piecewise-constant fits of a smooth signal; see the decisions ledger.
            assert!(e.r2 > 0.6, "{} / {}: {}", e.method, e.arm, e.r2);
        }
    }
    // Arm sub-cohorts partition the training split.
    assert_eq!(arm_train.iter().sum::<usize>(), c.training_indices().len());
}

#[test]
fn estimates_ignore_the_treatment_received() {
    let (c, bank, _) = small_bank();
    for r in c.records.iter().take(50) {
        let mut f = r.features.clone();
        for flag in MedFlag::ALL {
            let v = f.med_flags.get(*flag);
            f.med_flags.set(*flag, !v);
        }
        assert_eq!(bank.estimate_matrix(&f), bank.estimate_matrix(&r.features));
        let m = bank.estimate_matrix(&r.features);
        assert!(m.values.iter().flatten().all(|v| v.is_finite() && *v >= 0.0));
    }
}

#[test]
fn training_is_deterministic() {
    let (c, bank, config) = small_bank();
    assert_eq!(train_bank(&c, &config).unwrap(), bank);
}

#[test]
fn save_load_round_trip_is_bit_exact() {
    let (c, bank, config) = small_bank();
    let dir = tempfile::tempdir().unwrap();
    let manifest = save_bank(&bank, &config, dir.path()).unwrap();
    let (loaded, reread) = load_bank(dir.path()).unwrap();
    assert_eq!(loaded, bank);
    assert_eq!(reread, manifest);
    assert_eq!(reread.config_digest, config_digest(&config).unwrap());
    for e in &bank.entries {
        assert_eq!(manifest.r2(e.method, e.arm).unwrap().to_bits(), e.r2.to_bits());
    }
    for r in &c.records {
        let a = bank.estimate_matrix(&r.features);
        let b = loaded.estimate_matrix(&r.features);
        for (x, y) in a.values.iter().flatten().zip(b.values.iter().flatten()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}

#[test]
fn corrupt_entry_is_named() {
    let (_, bank, config) = small_bank();
    let dir = tempfile::tempdir().unwrap();
    let manifest = save_bank(&bank, &config, dir.path()).unwrap();
    let victim = manifest
        .entries
        .iter()
        .find(|e| e.method == Method::RandomForest && e.arm == TreatmentArm::Drugs2)
        .unwrap();
    let path = dir.path().join(&victim.file);
    let body = fs::read_to_string(&path).unwrap();
    fs::write(&path, &body[..body.len() / 2]).unwrap();
    match load_bank(dir.path()) {
        Err(Error::CorruptEntry { entry, .. }) => assert_eq!(entry, victim.file),
        other => panic!("expected CorruptEntry, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn version_mismatch_is_explicit() {
    let (_, bank, config) = small_bank();
    let dir = tempfile::tempdir().unwrap();
    save_bank(&bank, &config, dir.path()).unwrap();
    let path = dir.path().join(MANIFEST_FILE);
    let body = fs::read_to_string(&path)
        .unwrap()
        .replacen("\"version\": \"1\"", "\"version\": \"99\"", 1);
    fs::write(&path, body).unwrap();
    assert!(matches!(
        load_manifest(dir.path()),
        Err(Error::IncompatibleVersion { .. })
    ));
    assert!(matches!(load_bank(dir.path()), Err(Error::IncompatibleVersion { .. })));
}
