//! k-fold cross-validation over a hyper-parameter grid.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Shuffles `0..n` and deals it into `folds` near-equal parts, each sorted.
pub fn kfold(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::InvalidConfig("cross-validation needs at least 2 folds".into()));
    }
    if n < folds {
        return Err(Error::InvalidConfig(format!("{n} rows cannot fill {folds} folds")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Vec::with_capacity(n / folds + 1); folds];
    for (i, r) in idx.into_iter().enumerate() {
        out[i % folds].push(r);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

pub fn select_rows(x: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    x.select(Axis(0), rows)
}

#[derive(Debug, Clone)]
pub struct CvResult<P> {
    pub best: P,
    pub best_index: usize,
    /// Mean fold score per grid point; `NaN` when no fold could be scored.
    pub scores: Vec<f64>,
}

/// Returns the grid point with the highest mean fold score, first on ties.
///
/// `score(params, x_fit, y_fit, x_held, y_held)` is higher-is-better. Folds
/// whose score is undefined (a single-class or constant held-out target) are
/// left out of that grid point's mean.
pub fn cross_validate<P, F>(
    grid: &[P],
    x: &Array2<f64>,
    y: &[f64],
    folds: usize,
    seed: u64,
    score: F,
) -> Result<CvResult<P>>
where
    P: Clone + Sync,
    F: Fn(&P, &Array2<f64>, &[f64], &Array2<f64>, &[f64]) -> Result<f64> + Sync,
{
    if grid.is_empty() {
        return Err(Error::InvalidConfig("parameter grid is empty".into()));
    }
    let parts = kfold(x.nrows(), folds, seed)?;
    if grid.len() == 1 {
        return Ok(CvResult {
            best: grid[0].clone(),
            best_index: 0,
            scores: vec![f64::NAN],
        });
    }
    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|g| (0..parts.len()).map(move |f| (g, f)))
        .collect();
    let results: Vec<Option<f64>> = jobs
        .par_iter()
        .map(|&(g, f)| {
            let held = &parts[f];
            let fit: Vec<usize> = (0..x.nrows()).filter(|r| held.binary_search(r).is_err()).collect();
            let yf: Vec<f64> = fit.iter().map(|&r| y[r]).collect();
            let yh: Vec<f64> = held.iter().map(|&r| y[r]).collect();
            match score(&grid[g], &select_rows(x, &fit), &yf, &select_rows(x, held), &yh) {
                Ok(s) => Ok(Some(s)),
                Err(Error::SingleClass | Error::ZeroDenominator(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let scores: Vec<f64> = (0..grid.len())
        .map(|g| {
            let s: Vec<f64> = results[g * parts.len()..(g + 1) * parts.len()]
                .iter()
                .flatten()
                .copied()
                .collect();
            if s.is_empty() {
                f64::NAN
            } else {
                s.iter().sum::<f64>() / s.len() as f64
            }
        })
        .collect();
    let mut best_index = 0;
    for (g, &s) in scores.iter().enumerate() {
        if s > scores[best_index] || (scores[best_index].is_nan() && !s.is_nan()) {
            best_index = g;
        }
    }
    Ok(CvResult {
        best: grid[best_index].clone(),
        best_index,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_partition_rows() {
        let f = kfold(23, 5, 9).unwrap();
        let mut all: Vec<usize> = f.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert!(f.iter().all(|p| p.len() == 4 || p.len() == 5));
        assert!(kfold(3, 5, 0).is_err());
        assert!(kfold(10, 1, 0).is_err());
    }

    #[test]
    fn singleton_grid_and_ties() {
        let x = Array2::from_shape_fn((20, 1), |(i, _)| i as f64);
        let y: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let r = cross_validate(&[7], &x, &y, 4, 0, |_, _, _, _, _| Ok(0.0)).unwrap();
        assert_eq!(r.best, 7);
        let r = cross_validate(&[1, 2, 3], &x, &y, 4, 0, |&p, _, _, _, _| {
            Ok(if p == 1 { 0.1 } else { 0.5 })
        })
        .unwrap();
        assert_eq!(r.best, 2);
    }
}
