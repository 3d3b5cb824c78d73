//! Reference inputs shared by tests, benches and demos.

use crate::cohort::{FeatureEncoder, TreatmentArm, DAYS_PER_YEAR};
use crate::learners::{LinearModel, Method, Model};
use crate::tae_regression::{BankEntry, EstimateMatrix, ModelBank};

/// Worked-example estimates in years, rows in [`Method::ALL`] order,
/// columns in arm order. Four of five rows peak at CABG.
#[allow(clippy::approx_constant)] // 6.28 is a data value
pub const EXAMPLE_ESTIMATES: [[f64; 5]; 5] = [
    [4.65, 4.59, 3.89, 3.76, 3.54],
    [7.13, 3.38, 6.10, 4.16, 3.96],
    [5.77, 4.93, 5.44, 4.26, 4.49],
    [5.75, 3.53, 5.75, 4.17, 4.44],
    [4.08, 6.28, 5.39, 5.31, 3.37],
];

pub fn example_matrix() -> EstimateMatrix {
    EstimateMatrix::new(Method::ALL.to_vec(), EXAMPLE_ESTIMATES.to_vec()).expect("finite fixture")
}

/// Bank whose entries ignore the patient and return `values[m][p]` years.
/// Every entry reports the same `r2`.
pub fn constant_bank(encoder: FeatureEncoder, values: &[[f64; 5]], r2: f64) -> ModelBank {
    let methods = Method::ALL[..values.len()].to_vec();
    let mut entries = Vec::with_capacity(values.len() * 5);
    for (row, &method) in values.iter().zip(&methods) {
        for &arm in TreatmentArm::ALL {
            entries.push(BankEntry {
                method,
                arm,
                model: Model::Linear(LinearModel {
                    weights: vec![0.0; encoder.width()],
                    intercept: row[arm.index()] * DAYS_PER_YEAR,
                    lambda: 0.0,
                }),
                r2,
                n_train: 0,
                n_test: 0,
                spec: None,
            });
        }
    }
    ModelBank {
        methods,
        arms: TreatmentArm::ALL.to_vec(),
        encoder,
        entries,
    }
}
