//! Minimal recurrent network: `h_t = s(W x_t + U h_{t-1})` from `h_0 = 0`,
//! with the prediction read from the last step only, `o = s_out(V h_T)`.

use serde::{Deserialize, Serialize};

use super::{
    binary_targets, descend, Activation, FlatParams, Initializer, Matrix, TrainConfig,
    TrainOutcome,
};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RnnParams {
    /// hidden x input
    pub w: Matrix,
    /// hidden x hidden
    pub u: Matrix,
    /// output x hidden
    pub v: Matrix,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    pub seq_len: usize,
}

impl RnnParams {
    pub fn zeros(input: usize, hidden: usize, seq_len: usize) -> Self {
        RnnParams {
            w: Matrix::zeros(hidden, input),
            u: Matrix::zeros(hidden, hidden),
            v: Matrix::zeros(1, hidden),
            hidden_activation: Activation::Tanh,
            output_activation: Activation::Logistic,
            seq_len,
        }
    }

    /// Uniform initialization filling `W, U, V` in that order, row-major.
    pub fn init(input: usize, hidden: usize, seq_len: usize, seed: u64, scale: f64) -> Self {
        let mut p = RnnParams::zeros(input, hidden, seq_len);
        let n = p.to_flat().len();
        p.set_flat(&Initializer::new(seed, scale).fill(n));
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w.rows()
    }

    fn check(&self, seq: &[Vec<f64>]) -> Result<()> {
        if seq.len() != self.seq_len {
            return Err(Error::Shape(format!(
                "sequence of {} steps, expected {}",
                seq.len(),
                self.seq_len
            )));
        }
        if let Some(step) = seq.iter().find(|s| s.len() != self.input_dim()) {
            return Err(Error::Shape(format!(
                "step width {}, expected {}",
                step.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Hidden states `h_1..h_T`.
    fn states(&self, seq: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut states: Vec<Vec<f64>> = Vec::with_capacity(seq.len());
        let mut h = vec![0.0; self.hidden_dim()];
        for x in seq {
            let mut a = self.w.mul_vec(x);
            self.u.mul_vec_add(&h, &mut a);
            a.iter_mut()
                .for_each(|v| *v = self.hidden_activation.apply(*v));
            h = a;
            states.push(h.clone());
        }
        states
    }

    fn output(&self, last: &[f64]) -> f64 {
        let z: f64 = self.v.row(0).iter().zip(last).map(|(a, b)| a * b).sum();
        self.output_activation.apply(z)
    }
}

impl FlatParams for RnnParams {
    fn to_flat(&self) -> Vec<f64> {
        let mut out = self.w.as_slice().to_vec();
        out.extend_from_slice(self.u.as_slice());
        out.extend_from_slice(self.v.as_slice());
        out
    }

    fn set_flat(&mut self, values: &[f64]) {
        let mut rest = values;
        for dst in [
            self.w.as_mut_slice(),
            self.u.as_mut_slice(),
            self.v.as_mut_slice(),
        ] {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        }
    }
}

pub fn rnn_forward(params: &RnnParams, seq: &[Vec<f64>]) -> Result<f64> {
    params.check(seq)?;
    let states = params.states(seq);
    let zero = vec![0.0; params.hidden_dim()];
    Ok(params.output(states.last().unwrap_or(&zero)))
}

/// Training loss and its gradient by backpropagation through time.
pub fn rnn_loss_and_gradient(
    params: &RnnParams,
    seqs: &[&[Vec<f64>]],
    ys: &[f64],
    loss: super::Loss,
) -> (f64, RnnParams) {
    let hidden = params.hidden_dim();
    let zero = vec![0.0; hidden];
    let all_states: Vec<Vec<Vec<f64>>> = seqs.iter().map(|s| params.states(s)).collect();
    let outputs: Vec<f64> = all_states
        .iter()
        .map(|st| params.output(st.last().unwrap_or(&zero)))
        .collect();
    let (value, d_out) = loss.eval(&outputs, ys);

    let mut grad = RnnParams {
        w: Matrix::zeros(params.w.rows(), params.w.cols()),
        u: Matrix::zeros(hidden, hidden),
        v: Matrix::zeros(params.v.rows(), hidden),
        ..params.clone()
    };
    for ((seq, states), (o, d)) in seqs.iter().zip(&all_states).zip(outputs.iter().zip(&d_out)) {
        let Some(last) = states.last() else {
            continue;
        };
        let delta_o = d * params.output_activation.derivative_from_output(*o);
        grad.v.add_outer(&[delta_o], last);
        let mut dh: Vec<f64> = params.v.row(0).iter().map(|v| v * delta_o).collect();
        for t in (0..states.len()).rev() {
            let da: Vec<f64> = dh
                .iter()
                .zip(&states[t])
                .map(|(g, h)| g * params.hidden_activation.derivative_from_output(*h))
                .collect();
            grad.w.add_outer(&da, &seq[t]);
            let prev = if t == 0 { &zero } else { &states[t - 1] };
            grad.u.add_outer(&da, prev);
            dh = params.u.tr_mul_vec(&da);
        }
    }
    (value, grad)
}

/// Fits the network on equal-length sequences with 0/1 labels.
pub fn rnn_fit(
    seqs: &[&[Vec<f64>]],
    labels: &[u8],
    hidden: usize,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<RnnParams>> {
    if seqs.is_empty() {
        return Err(Error::Fit("no training samples".into()));
    }
    if seqs.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} sequences but {} labels",
            seqs.len(),
            labels.len()
        )));
    }
    let seq_len = seqs[0].len();
    let dim = seqs[0].first().map_or(0, Vec::len);
    let params = RnnParams::init(dim, hidden, seq_len, cfg.seed, cfg.init_scale);
    for s in seqs {
        params.check(s)?;
    }
    let ys = binary_targets(labels)?;
    descend(params, cfg, |p| rnn_loss_and_gradient(p, seqs, &ys, cfg.loss))
}
