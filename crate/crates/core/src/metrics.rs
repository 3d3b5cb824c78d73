//! Scoring functions shared by the learners, risk models and evaluation.

use crate::error::{Error, Result};

/// Area under the ROC curve via the Mann–Whitney statistic.
///
/// Scores are ranked with average ranks for ties, so each tied
/// positive/negative pair contributes one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 share their average.
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum_pos += avg * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Coefficient of determination. Errors when the targets are constant.
pub fn r2(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions vs {} targets",
            predicted.len(),
            actual.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::Empty("no targets to score".into()));
    }
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_tot: f64 = actual.iter().map(|y| (y - mean).powi(2)).sum();
    let ss_res: f64 = predicted.iter().zip(actual).map(|(p, y)| (p - y).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::ZeroDenominator("targets have zero variance".into()));
    }
    Ok(1.0 - ss_res / ss_tot)
}

pub fn mse(predicted: &[f64], actual: &[f64]) -> f64 {
    predicted.iter().zip(actual).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / actual.len().max(1) as f64
}

/// Fraction of probabilities on the correct side of 0.5.
pub fn accuracy(probabilities: &[f64], labels: &[bool]) -> f64 {
    let hits = probabilities
        .iter()
        .zip(labels)
        .filter(|(p, &l)| (**p >= 0.5) == l)
        .count();
    hits as f64 / labels.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Pairwise definition, O(n²).
    fn auc_pairs(s: &[f64], y: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..s.len() {
            for j in 0..s.len() {
                if y[i] && !y[j] {
                    den += 1.0;
                    if s[i] > s[j] {
                        num += 1.0;
                    } else if s[i] == s[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.1], &[true, false]).unwrap(), 1.0);
        assert_eq!(auc(&[0.1, 0.9], &[true, false]).unwrap(), 0.0);
        assert_eq!(auc(&[0.3; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
        assert!(matches!(auc(&[0.2, 0.4], &[true, true]), Err(Error::SingleClass)));
    }

    #[test]
    fn auc_matches_pairwise_count_with_ties() {
        let s = [0.1, 0.4, 0.4, 0.35, 0.8, 0.8, 0.2, 0.4];
        let y = [false, true, false, true, true, false, false, true];
        assert!((auc(&s, &y).unwrap() - auc_pairs(&s, &y)).abs() < 1e-15);
    }

    #[test]
    fn r2_perfect_and_mean() {
        let y = [1.0, 2.0, 4.0];
        assert_eq!(r2(&y, &y).unwrap(), 1.0);
        let m = 7.0 / 3.0;
        assert!(r2(&[m, m, m], &y).unwrap().abs() < 1e-15);
        assert!(r2(&[1.0, 1.0], &[3.0, 3.0]).is_err());
    }

    #[test]
    fn accuracy_threshold() {
        assert_eq!(accuracy(&[0.5, 0.49, 0.9, 0.1], &[true, false, false, false]), 0.75);
    }
}
