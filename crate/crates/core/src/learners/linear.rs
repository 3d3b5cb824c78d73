//! L2-penalized linear and logistic regression. The intercept is never penalized.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::linalg::cholesky_solve;
use crate::error::{Error, Result};

pub const LOGISTIC_TOL: f64 = 1e-8;
pub const LOGISTIC_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
}

impl LinearModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn predict(&self, x: &Array2<f64>) -> Vec<f64> {
        x.rows().into_iter().map(|r| self.predict_row(&r.to_vec())).collect()
    }
}

fn check(x: &Array2<f64>, y: &[f64], lambda: f64) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::Empty("no training rows".into()));
    }
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} rows vs {} targets",
            x.nrows(),
            y.len()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    Ok(())
}

/// Minimizes `½‖y − Xw − b‖² + ½λ‖w‖²`.
///
/// Centering removes the intercept from the system, which is then solved
/// through the normal equations.
pub fn fit_ridge(x: &Array2<f64>, y: &[f64], lambda: f64) -> Result<LinearModel> {
    check(x, y, lambda)?;
    let p = x.ncols();
    let n = x.nrows() as f64;
    let x_mean = x.mean_axis(Axis(0)).unwrap();
    let y_mean = y.iter().sum::<f64>() / n;
    let xc = x - &x_mean;
    let yc = Array1::from_iter(y.iter().map(|v| v - y_mean));
    let mut gram = xc.t().dot(&xc);
    for j in 0..p {
        gram[[j, j]] += lambda;
    }
    let rhs = xc.t().dot(&yc);
    let weights = if p == 0 {
        Vec::new()
    } else {
        cholesky_solve(gram.as_standard_layout().as_slice().unwrap(), rhs.as_slice().unwrap())?
    };
    let intercept = y_mean - weights.iter().zip(x_mean.iter()).map(|(w, m)| w * m).sum::<f64>();
    Ok(LinearModel {
        weights,
        intercept,
        lambda,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl LogisticModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    /// Probability of the positive class, kept strictly inside (0, 1).
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        sigmoid(self.decision(x)).clamp(1e-15, 1.0 - 1e-15)
    }

    pub fn predict(&self, x: &Array2<f64>) -> Vec<f64> {
        x.rows().into_iter().map(|r| self.predict_row(&r.to_vec())).collect()
    }
}

/// Penalized negative log-likelihood `Σ log(1+e^z) − y z + ½λ‖w‖²`.
fn logistic_loss(x: &Array2<f64>, y: &[f64], w: &Array1<f64>, b: f64, lambda: f64) -> f64 {
    let z = x.dot(w) + b;
    let nll: f64 = z.iter().zip(y).map(|(&z, &t)| softplus(z) - t * z).sum();
    nll + 0.5 * lambda * w.dot(w)
}

fn gradient_norm(x: &Array2<f64>, y: &[f64], w: &Array1<f64>, b: f64, lambda: f64) -> f64 {
    let r = (x.dot(w) + b).mapv(sigmoid) - Array1::from(y.to_vec());
    let gw = x.t().dot(&r) + w * lambda;
    (gw.dot(&gw) + r.sum().powi(2)).sqrt()
}

/// Newton's method with backtracking until the per-sample gradient norm
/// (gradient of the loss divided by `n`) drops below [`LOGISTIC_TOL`].
/// Labels are 0/1.
pub fn fit_ridge_logistic(x: &Array2<f64>, y: &[f64], lambda: f64) -> Result<LogisticModel> {
    check(x, y, lambda)?;
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidConfig("logistic labels must be 0 or 1".into()));
    }
    if y.iter().all(|&v| v == y[0]) {
        return Err(Error::SingleClass);
    }
    let p = x.ncols();
    let n = y.len() as f64;
    let mut w = Array1::<f64>::zeros(p);
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let mut b = (mean / (1.0 - mean)).ln();
    let mut loss = logistic_loss(x, y, &w, b, lambda);
    let mut grad_norm = f64::INFINITY;
    for _ in 0..LOGISTIC_MAX_ITER {
        let z = x.dot(&w) + b;
        let prob = z.mapv(sigmoid);
        let r = &prob - &Array1::from(y.to_vec());
        let mut grad = Vec::with_capacity(p + 1);
        grad.extend((x.t().dot(&r) + &(&w * lambda)).iter());
        grad.push(r.sum());
        grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt() / n;
        if grad_norm < LOGISTIC_TOL {
            return Ok(LogisticModel {
                weights: w.to_vec(),
                intercept: b,
                lambda,
            });
        }
        let wt = prob.mapv(|q| q * (1.0 - q));
        let xw = x * &wt.view().insert_axis(Axis(1));
        let xtwx = x.t().dot(&xw);
        let xtw1 = xw.sum_axis(Axis(0));
        let m = p + 1;
        let mut h = vec![0.0; m * m];
        for i in 0..p {
            for j in 0..p {
                h[i * m + j] = xtwx[[i, j]];
            }
            h[i * m + i] += lambda;
            h[i * m + p] = xtw1[i];
            h[p * m + i] = xtw1[i];
        }
        h[p * m + p] = wt.sum();
        let step = match cholesky_solve(&h, &grad) {
            Ok(s) => s,
            Err(Error::Singular) if lambda == 0.0 => return Err(Error::Singular),
            Err(Error::Singular) => return Err(Error::NotConverged(grad_norm)),
            Err(e) => return Err(e),
        };
        let slope: f64 = grad.iter().zip(&step).map(|(g, s)| g * s).sum();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let w_new = &w - &(Array1::from(step[..p].to_vec()) * t);
            let b_new = b - t * step[p];
            let l_new = logistic_loss(x, y, &w_new, b_new, lambda);
            if l_new <= loss - 1e-4 * t * slope || (l_new <= loss && t < 1e-6) {
                w = w_new;
                b = b_new;
                loss = l_new;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // The loss change is below f64 resolution; fall back to the full
            // Newton step when it still shrinks the gradient.
            let w_new = &w - &Array1::from(step[..p].to_vec());
            let b_new = b - step[p];
            if gradient_norm(x, y, &w_new, b_new, lambda) / n >= grad_norm {
                break;
            }
            loss = logistic_loss(x, y, &w_new, b_new, lambda);
            w = w_new;
            b = b_new;
        }
    }
    Err(Error::NotConverged(grad_norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn exact_least_squares_on_square_system() {
        // Three points, two features plus intercept: interpolates exactly.
        let x = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let y = [3.0, 5.0, 7.0];
        let m = fit_ridge(&x, &y, 0.0).unwrap();
        for (row, t) in x.rows().into_iter().zip(y) {
            assert!((m.predict_row(&row.to_vec()) - t).abs() < 1e-10);
        }
        assert!((m.weights[0] - 2.0).abs() < 1e-10);
        assert!((m.weights[1] - 4.0).abs() < 1e-10);
        assert!((m.intercept - 1.0).abs() < 1e-10);
    }

    #[test]
    fn huge_lambda_shrinks_to_mean() {
        let x = array![[1.0, 2.0], [2.0, 0.5], [3.0, 1.5], [4.0, 3.0]];
        let y = [1.0, 2.0, 4.0, 9.0];
        let m = fit_ridge(&x, &y, 1e12).unwrap();
        assert!(m.weights.iter().all(|w| w.abs() < 1e-9));
        assert!((m.intercept - 4.0).abs() < 1e-8);
    }

    #[test]
    fn singular_without_penalty() {
        let x = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]];
        let err = fit_ridge(&x, &[1.0, 2.0, 3.0], 0.0).unwrap_err();
        assert!(matches!(err, Error::Singular));
        assert!(err.to_string().contains("lambda > 0"));
        assert!(fit_ridge(&x, &[1.0, 2.0, 3.0], 0.1).is_ok());
    }

    #[test]
    fn logistic_converges_and_outputs_probabilities() {
        let x = array![[0.0], [1.0], [2.0], [3.0], [4.0], [5.0]];
        let y = [0.0, 0.0, 1.0, 0.0, 1.0, 1.0];
        let m = fit_ridge_logistic(&x, &y, 0.5).unwrap();
        assert!(m.weights[0] > 0.0);
        for r in x.rows() {
            let p = m.predict_row(&r.to_vec());
            assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn penalty_keeps_separable_weights_finite() {
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        let m = fit_ridge_logistic(&x, &[0.0, 0.0, 1.0, 1.0], 1.0).unwrap();
        assert!(m.weights[0] > 0.0 && m.weights[0] < 10.0);
    }
}
