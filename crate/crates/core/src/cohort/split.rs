use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Cohort, SplitTag};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    /// 75% for fitting (cross-validation happens inside it), 25% held out.
    fn default() -> Self {
        SplitFractions {
            train: 0.75,
            validation: 0.0,
            test: 0.25,
        }
    }
}

impl SplitFractions {
    /// `[train, test]` or `[train, validation, test]`; must sum to 1.
    pub fn from_slice(fractions: &[f64]) -> Result<Self> {
        let f = match *fractions {
            [train, test] => SplitFractions {
                train,
                validation: 0.0,
                test,
            },
            [train, validation, test] => SplitFractions {
                train,
                validation,
                test,
            },
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "expected 2 or 3 split fractions, got {}",
                    fractions.len()
                )))
            }
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidConfig("split fractions must be >= 0".into()));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("split fractions sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// Assigns split tags by a seeded shuffle. Each tag's count is within one of
/// its fraction times the cohort size.
pub fn split(cohort: &Cohort, fractions: SplitFractions, seed: u64) -> Result<Cohort> {
    fractions.validate()?;
    let n = cohort.len();
    if n == 0 {
        return Err(Error::Empty("cannot split an empty cohort".into()));
    }
    let n_test = (fractions.test * n as f64).round() as usize;
    let n_val = ((fractions.validation * n as f64).round() as usize).min(n - n_test);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut out = cohort.clone();
    for (pos, &i) in order.iter().enumerate() {
        out.records[i].split = Some(if pos < n_test {
            SplitTag::Test
        } else if pos < n_test + n_val {
            SplitTag::Validation
        } else {
            SplitTag::Train
        });
    }
    out.norm_stats = None;
    Ok(out)
}
