//! One-hidden-layer perceptron: `o = s2(W23 s1(W12 x + b12) + b23)`.

use serde::{Deserialize, Serialize};

use super::{
    binary_targets, descend, Activation, FlatParams, Initializer, Matrix, TrainConfig,
    TrainOutcome,
};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    /// hidden x input
    pub w12: Matrix,
    pub b12: Vec<f64>,
    /// output x hidden
    pub w23: Matrix,
    pub b23: Vec<f64>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl MlpParams {
    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        MlpParams {
            w12: Matrix::zeros(hidden, input),
            b12: vec![0.0; hidden],
            w23: Matrix::zeros(output, hidden),
            b23: vec![0.0; output],
            hidden_activation: Activation::Tanh,
            output_activation: Activation::Logistic,
        }
    }

    /// Uniform initialization from the seeded [`Initializer`], filling
    /// `W12, b12, W23, b23` in that order, row-major.
    pub fn init(input: usize, hidden: usize, seed: u64, scale: f64) -> Self {
        let mut p = MlpParams::zeros(input, hidden, 1);
        let n = p.to_flat().len();
        p.set_flat(&Initializer::new(seed, scale).fill(n));
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w12.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w12.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w23.rows()
    }

    fn hidden(&self, x: &[f64]) -> Vec<f64> {
        let mut h = self.b12.clone();
        self.w12.mul_vec_add(x, &mut h);
        h.iter_mut()
            .for_each(|v| *v = self.hidden_activation.apply(*v));
        h
    }
}

impl FlatParams for MlpParams {
    fn to_flat(&self) -> Vec<f64> {
        let mut v = self.w12.as_slice().to_vec();
        v.extend_from_slice(&self.b12);
        v.extend_from_slice(self.w23.as_slice());
        v.extend_from_slice(&self.b23);
        v
    }

    fn set_flat(&mut self, values: &[f64]) {
        let mut rest = values;
        for dst in [
            self.w12.as_mut_slice(),
            self.b12.as_mut_slice(),
            self.w23.as_mut_slice(),
            self.b23.as_mut_slice(),
        ] {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        }
    }
}

pub fn mlp_forward_all(params: &MlpParams, x: &[f64]) -> Vec<f64> {
    let h = params.hidden(x);
    let mut o = params.b23.clone();
    params.w23.mul_vec_add(&h, &mut o);
    o.iter_mut()
        .for_each(|v| *v = params.output_activation.apply(*v));
    o
}

/// First output of the network.
pub fn mlp_forward(params: &MlpParams, x: &[f64]) -> f64 {
    mlp_forward_all(params, x)[0]
}

/// Training loss of the first output and its gradient by backpropagation.
pub fn mlp_loss_and_gradient(
    params: &MlpParams,
    xs: &[&[f64]],
    ys: &[f64],
    loss: super::Loss,
) -> (f64, MlpParams) {
    let hidden: Vec<Vec<f64>> = xs.iter().map(|x| params.hidden(x)).collect();
    let outputs: Vec<f64> = hidden
        .iter()
        .map(|h| {
            let z = params.b23[0] + params.w23.row(0).iter().zip(h).map(|(a, b)| a * b).sum::<f64>();
            params.output_activation.apply(z)
        })
        .collect();
    let (value, d_out) = loss.eval(&outputs, ys);

    let mut grad = MlpParams {
        w12: Matrix::zeros(params.w12.rows(), params.w12.cols()),
        b12: vec![0.0; params.b12.len()],
        w23: Matrix::zeros(params.w23.rows(), params.w23.cols()),
        b23: vec![0.0; params.b23.len()],
        ..params.clone()
    };
    let w23_row = params.w23.row(0);
    let mut delta_h = vec![0.0; params.hidden_dim()];
    for ((x, h), (o, d)) in xs.iter().zip(&hidden).zip(outputs.iter().zip(&d_out)) {
        let delta_o = d * params.output_activation.derivative_from_output(*o);
        grad.b23[0] += delta_o;
        for (g, hj) in grad.w23.as_mut_slice()[..h.len()].iter_mut().zip(h) {
            *g += delta_o * hj;
        }
        for ((dh, w), hj) in delta_h.iter_mut().zip(w23_row).zip(h) {
            *dh = delta_o * w * params.hidden_activation.derivative_from_output(*hj);
        }
        for (gb, dh) in grad.b12.iter_mut().zip(&delta_h) {
            *gb += dh;
        }
        grad.w12.add_outer(&delta_h, x);
    }
    (value, grad)
}

/// Fits a single-output network to 0/1 labels.
pub fn mlp_fit(
    xs: &[&[f64]],
    labels: &[u8],
    hidden: usize,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<MlpParams>> {
    if xs.is_empty() {
        return Err(Error::Fit("no training samples".into()));
    }
    if xs.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} inputs but {} labels",
            xs.len(),
            labels.len()
        )));
    }
    let dim = xs[0].len();
    if xs.iter().any(|x| x.len() != dim) {
        return Err(Error::Shape("inputs of unequal width".into()));
    }
    let ys = binary_targets(labels)?;
    let params = MlpParams::init(dim, hidden, cfg.seed, cfg.init_scale);
    descend(params, cfg, |p| mlp_loss_and_gradient(p, xs, &ys, cfg.loss))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_outputs_half() {
        assert_eq!(mlp_forward(&MlpParams::zeros(7, 4, 1), &[3.0; 7]), 0.5);
    }

    #[test]
    fn identity_network_sums_first_inputs() {
        let p = MlpParams {
            w12: Matrix::identity_block(4, 7),
            b12: vec![0.0; 4],
            w23: Matrix::from_vec(1, 4, vec![1.0; 4]),
            b23: vec![0.0],
            hidden_activation: Activation::Identity,
            output_activation: Activation::Identity,
        };
        assert_eq!(mlp_forward(&p, &[1.0; 7]), 4.0);
    }

    #[test]
    fn xor_is_learned() {
        let xs = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
        let labels = [0u8, 1, 1, 0];
        let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        let cfg = TrainConfig {
            learning_rate: 1.0,
            epochs: 5000,
            seed: 3,
            tolerance: 0.0,
            ..TrainConfig::default()
        };
        let fit = mlp_fit(&refs, &labels, 4, &cfg).unwrap();
        for (x, y) in refs.iter().zip(labels) {
            assert_eq!(u8::from(mlp_forward(&fit.params, x) > 0.5), y, "{x:?}");
        }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let xs = [[0.5, -0.5]];
        let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        let cfg = TrainConfig {
            epochs: 0,
            seed: 11,
            ..TrainConfig::default()
        };
        let fit = mlp_fit(&refs, &[1], 4, &cfg).unwrap();
        assert_eq!(fit.params, MlpParams::init(2, 4, 11, cfg.init_scale));
        assert!(fit.loss_history.is_empty());
    }

    #[test]
    fn empty_input_is_error() {
        assert!(mlp_fit(&[], &[], 4, &TrainConfig::default()).is_err());
    }
}
