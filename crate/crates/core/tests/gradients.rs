//! Analytic gradients against central finite differences.

use lanechange::learners::{
    logreg_loss_and_gradient, mlp_loss_and_gradient, rnn_loss_and_gradient, FlatParams,
    Initializer, LogRegParams, Loss, MlpParams, RnnParams,
};

const STEP: f64 = 1e-5;
const TOLERANCE: f64 = 1e-4;

fn max_relative_error<P, F>(params: &P, analytic: &P, loss: F) -> f64
where
    P: FlatParams,
    F: Fn(&P) -> f64,
{
    let base = params.to_flat();
    let grad = analytic.to_flat();
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let mut shifted = base.clone();
        shifted[i] = base[i] + STEP;
        probe.set_flat(&shifted);
        let up = loss(&probe);
        shifted[i] = base[i] - STEP;
        probe.set_flat(&shifted);
        let down = loss(&probe);
        let numeric = (up - down) / (2.0 * STEP);
        let scale = grad[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((grad[i] - numeric).abs() / scale);
    }
    worst
}

fn draw_rows(init: &mut Initializer, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| init.fill(dim)).collect()
}

fn draw_labels(init: &mut Initializer, n: usize) -> Vec<f64> {
    (0..n).map(|_| f64::from(u8::from(init.next() > 0.0))).collect()
}

#[test]
fn logistic_regression_matches_finite_differences() {
    for seed in 0..20 {
        let mut init = Initializer::new(1000 + seed, 2.0);
        let classes = 2 + (seed as usize % 3);
        let dim = 4;
        let mut params = LogRegParams::zeros(classes, dim);
        let n = params.to_flat().len();
        params.set_flat(&init.fill(n));
        let xs = draw_rows(&mut init, 12, dim);
        let ys: Vec<usize> = (0..12).map(|i| (i + seed as usize) % classes).collect();
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let (_, grad) = logreg_loss_and_gradient(&params, &refs, &ys);
        let err = max_relative_error(&params, &grad, |p| logreg_loss_and_gradient(p, &refs, &ys).0);
        assert!(err < TOLERANCE, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn mlp_matches_finite_differences() {
    for seed in 0..20 {
        for loss in [Loss::Rmse, Loss::Mse] {
            let mut init = Initializer::new(2000 + seed, 1.5);
            let params = MlpParams::init(5, 4, seed, 1.0);
            let xs = draw_rows(&mut init, 10, 5);
            let ys = draw_labels(&mut init, 10);
            let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
            let (_, grad) = mlp_loss_and_gradient(&params, &refs, &ys, loss);
            let err =
                max_relative_error(&params, &grad, |p| mlp_loss_and_gradient(p, &refs, &ys, loss).0);
            assert!(err < TOLERANCE, "seed {seed} {loss:?}: relative error {err:e}");
        }
    }
}

#[test]
fn rnn_matches_finite_differences() {
    for seed in 0..20 {
        let steps = 1 + (seed as usize % 5);
        let mut init = Initializer::new(3000 + seed, 1.5);
        let params = RnnParams::init(3, 4, steps, seed, 0.8);
        let seqs: Vec<Vec<Vec<f64>>> = (0..8).map(|_| draw_rows(&mut init, steps, 3)).collect();
        let ys = draw_labels(&mut init, 8);
        let refs: Vec<&[Vec<f64>]> = seqs.iter().map(Vec::as_slice).collect();
        let (_, grad) = rnn_loss_and_gradient(&params, &refs, &ys, Loss::Rmse);
        let err = max_relative_error(&params, &grad, |p| {
            rnn_loss_and_gradient(p, &refs, &ys, Loss::Rmse).0
        });
        assert!(err < TOLERANCE, "seed {seed} (T = {steps}): relative error {err:e}");
    }
}
