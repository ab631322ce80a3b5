//! Multinomial logistic regression with class 0 as the reference outcome:
//! `log(p_k / p_0) = beta_k . [1, x]` for `k = 1..m`.

use serde::{Deserialize, Serialize};

use super::{descend, FlatParams, Initializer, Matrix, TrainConfig, TrainOutcome};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    /// `(classes - 1) x (features + 1)`; column 0 holds the intercepts.
    pub beta: Matrix,
}

impl LogRegParams {
    pub fn zeros(classes: usize, features: usize) -> Self {
        assert!(classes >= 2, "need at least two outcomes");
        LogRegParams {
            beta: Matrix::zeros(classes - 1, features + 1),
        }
    }

    pub fn classes(&self) -> usize {
        self.beta.rows() + 1
    }

    pub fn features(&self) -> usize {
        self.beta.cols() - 1
    }

    /// `beta_k . [1, x]` for the non-reference classes.
    fn linear_terms(&self, x: &[f64]) -> Vec<f64> {
        (0..self.beta.rows())
            .map(|k| {
                let row = self.beta.row(k);
                row[0] + row[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
            })
            .collect()
    }
}

impl FlatParams for LogRegParams {
    fn to_flat(&self) -> Vec<f64> {
        self.beta.as_slice().to_vec()
    }

    fn set_flat(&mut self, values: &[f64]) {
        self.beta.as_mut_slice().copy_from_slice(values);
    }
}

/// Outcome probabilities `p_0..p_{m-1}`:
/// `p_0 = 1 / (1 + sum_k exp(z_k))`, `p_k = exp(z_k) p_0`, evaluated with the
/// largest exponent factored out.
pub fn logreg_proba(params: &LogRegParams, x: &[f64]) -> Vec<f64> {
    let mut z = Vec::with_capacity(params.classes());
    z.push(0.0);
    z.extend(params.linear_terms(x));
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Mean negative log-likelihood and its gradient.
pub fn logreg_loss_and_gradient(
    params: &LogRegParams,
    xs: &[&[f64]],
    ys: &[usize],
) -> (f64, LogRegParams) {
    let n = xs.len() as f64;
    let mut grad = LogRegParams {
        beta: Matrix::zeros(params.beta.rows(), params.beta.cols()),
    };
    let mut nll = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let p = logreg_proba(params, x);
        nll -= p[y].max(f64::MIN_POSITIVE).ln();
        for k in 1..p.len() {
            let indicator = if y == k { 1.0 } else { 0.0 };
            let coef = (p[k] - indicator) / n;
            let row = &mut grad.beta.as_mut_slice()[(k - 1) * (x.len() + 1)..k * (x.len() + 1)];
            row[0] += coef;
            for (g, v) in row[1..].iter_mut().zip(x.iter()) {
                *g += coef * v;
            }
        }
    }
    (nll / n, grad)
}

/// Maximum-likelihood fit by full-batch gradient descent on the mean negative
/// log-likelihood. `ys` are class indices `0..classes`; every class must occur.
pub fn logreg_fit(
    xs: &[&[f64]],
    ys: &[usize],
    classes: usize,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<LogRegParams>> {
    if xs.len() != ys.len() {
        return Err(Error::Shape(format!(
            "{} inputs but {} labels",
            xs.len(),
            ys.len()
        )));
    }
    if classes < 2 {
        return Err(Error::Fit("need at least two outcomes".into()));
    }
    for class in 0..classes {
        if !ys.contains(&class) {
            return Err(Error::Fit(format!("no sample of class {class}")));
        }
    }
    if let Some(&bad) = ys.iter().find(|&&y| y >= classes) {
        return Err(Error::Input(format!("class index {bad} out of range")));
    }
    let dim = xs[0].len();
    if xs.iter().any(|x| x.len() != dim) {
        return Err(Error::Shape("inputs of unequal width".into()));
    }
    let mut init = Initializer::new(cfg.seed, cfg.init_scale);
    let mut params = LogRegParams::zeros(classes, dim);
    let values = init.fill(params.beta.as_slice().len());
    params.set_flat(&values);
    descend(params, cfg, |p| logreg_loss_and_gradient(p, xs, ys))
}
