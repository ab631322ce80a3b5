//! From-scratch classifiers: multinomial logistic regression, a one-hidden-layer
//! perceptron and a minimal recurrent network, all fitted by full-batch
//! gradient descent.

mod activation;
mod logreg;
mod matrix;
mod mlp;
mod model;
mod rnn;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use activation::Activation;
pub use logreg::{
    logreg_fit, logreg_loss_and_gradient, logreg_proba, LogRegParams,
};
pub use matrix::Matrix;
pub use mlp::{mlp_fit, mlp_forward, mlp_forward_all, mlp_loss_and_gradient, MlpParams};
pub use model::{
    fit_model, predict_label, read_predictor, write_predictor, Model, ModelKind, ModelSpec,
    Predictor,
};
pub use rnn::{rnn_fit, rnn_forward, rnn_loss_and_gradient, RnnParams};

use crate::error::{Error, Result};

/// Regression loss of the network outputs against 0/1 labels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    /// `sqrt(mean((y - o)^2))`
    #[default]
    Rmse,
    /// `mean((y - o)^2)`
    Mse,
}

impl Loss {
    /// Loss value and `dL/do_i` for each output.
    pub(crate) fn eval(self, outputs: &[f64], labels: &[f64]) -> (f64, Vec<f64>) {
        let n = outputs.len() as f64;
        let residuals: Vec<f64> = outputs.iter().zip(labels).map(|(o, y)| o - y).collect();
        let mse = residuals.iter().map(|r| r * r).sum::<f64>() / n;
        match self {
            Loss::Mse => (mse, residuals.iter().map(|r| 2.0 * r / n).collect()),
            Loss::Rmse => {
                let rmse = mse.sqrt();
                let grad = if rmse > 0.0 {
                    residuals.iter().map(|r| r / (n * rmse)).collect()
                } else {
                    vec![0.0; residuals.len()]
                };
                (rmse, grad)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Initial weights are uniform in `[-init_scale, init_scale]`.
    pub init_scale: f64,
    pub loss: Loss,
    /// Stop once the loss changes by less than this between epochs.
    pub tolerance: f64,
    pub momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.5,
            epochs: 1000,
            seed: 1,
            init_scale: 0.5,
            loss: Loss::Rmse,
            tolerance: 1e-10,
            momentum: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::Config("init scale must be non-negative".into()));
        }
        Ok(())
    }
}

/// Parameters stored as one flat vector for optimization and gradient checks.
pub trait FlatParams: Clone {
    fn to_flat(&self) -> Vec<f64>;
    fn set_flat(&mut self, values: &[f64]);
}

/// Fitted parameters with the per-epoch training loss.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome<P> {
    pub params: P,
    /// Loss before each update, then the final loss.
    pub loss_history: Vec<f64>,
}

/// Seeded initializer: ChaCha8 seeded with `seed_from_u64(seed)`; each draw
/// takes the top 53 bits of `next_u64` as `u` in `[0, 1)` and returns
/// `scale * (2u - 1)`.
pub struct Initializer {
    rng: ChaCha8Rng,
    scale: f64,
}

impl Initializer {
    pub fn new(seed: u64, scale: f64) -> Self {
        Initializer {
            rng: ChaCha8Rng::seed_from_u64(seed),
            scale,
        }
    }

    pub fn next(&mut self) -> f64 {
        let u = (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        self.scale * (2.0 * u - 1.0)
    }

    pub fn fill(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.next()).collect()
    }
}

/// Full-batch gradient descent with optional momentum. `objective` returns the
/// loss and gradient at the given parameters.
pub(crate) fn descend<P, F>(
    mut params: P,
    cfg: &TrainConfig,
    mut objective: F,
) -> Result<TrainOutcome<P>>
where
    P: FlatParams,
    F: FnMut(&P) -> (f64, P),
{
    cfg.validate()?;
    let mut history = Vec::with_capacity(cfg.epochs + 1);
    let mut velocity: Vec<f64> = vec![0.0; params.to_flat().len()];
    let mut flat = params.to_flat();
    for epoch in 0..cfg.epochs {
        let (loss, grad) = objective(&params);
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        if let Some(&prev) = history.last() {
            let prev: f64 = prev;
            if (prev - loss).abs() < cfg.tolerance {
                history.push(loss);
                return Ok(TrainOutcome {
                    params,
                    loss_history: history,
                });
            }
        }
        history.push(loss);
        let g = grad.to_flat();
        for ((p, v), g) in flat.iter_mut().zip(velocity.iter_mut()).zip(&g) {
            *v = cfg.momentum * *v - cfg.learning_rate * g;
            *p += *v;
        }
        if let Some(bad) = flat.iter().find(|p| !p.is_finite()) {
            return Err(Error::Diverged { epoch, loss: *bad });
        }
        params.set_flat(&flat);
    }
    if cfg.epochs > 0 {
        let (loss, _) = objective(&params);
        if !loss.is_finite() {
            return Err(Error::Diverged {
                epoch: cfg.epochs,
                loss,
            });
        }
        history.push(loss);
    }
    Ok(TrainOutcome {
        params,
        loss_history: history,
    })
}

/// Labels as 0.0/1.0 targets, checking they are binary.
pub(crate) fn binary_targets(labels: &[u8]) -> Result<Vec<f64>> {
    labels
        .iter()
        .map(|&y| match y {
            0 => Ok(0.0),
            1 => Ok(1.0),
            other => Err(Error::Input(format!("label {other} is not 0 or 1"))),
        })
        .collect()
}
