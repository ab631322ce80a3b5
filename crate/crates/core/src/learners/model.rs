//! Model selection, fitted predictors and their text serialization.
//!
//! A predictor file is line oriented:
//!
//! ```text
//! lanechange-model 1
//! kind mlp
//! seed 7
//! direction left
//! encoding raw
//! seq_len 1
//! hidden_activation tanh
//! output_activation logistic
//! param scaler_mean 1 7
//! 12.5 30.1 ...
//! param w12 4 7
//! ...
//! ```
//!
//! Each `param <name> <rows> <cols>` header is followed by `rows` lines of
//! `cols` values. Values are written in Rust's shortest round-trip notation so
//! reading a file back reproduces every parameter bit for bit.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    logreg_fit, logreg_proba, mlp_fit, mlp_forward, rnn_fit, rnn_forward, Activation,
    LogRegParams, Matrix, MlpParams, RnnParams, TrainConfig,
};
use crate::data::Direction;
use crate::error::{Error, Result};
use crate::labeling::{standardize, LabeledSample, LabelingOptions, LaneEncoding, Scaler};

const MAGIC: &str = "lanechange-model";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    LogReg,
    Mlp,
    Rnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::LogReg, ModelKind::Mlp, ModelKind::Rnn];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::LogReg => "logreg",
            ModelKind::Mlp => "mlp",
            ModelKind::Rnn => "rnn",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "logreg" | "logistic" => Ok(ModelKind::LogReg),
            "mlp" => Ok(ModelKind::Mlp),
            "rnn" => Ok(ModelKind::Rnn),
            other => Err(Error::Input(format!("unknown model kind {other:?}"))),
        }
    }
}

/// Model family plus the hyperparameters needed to fit it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Hidden units (ignored by logistic regression).
    pub hidden: usize,
    /// Frames per input sequence; 1 for the non-recurrent models.
    pub seq_len: usize,
    pub train: TrainConfig,
}

impl ModelSpec {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::LogReg => ModelSpec {
                kind,
                hidden: 0,
                seq_len: 1,
                train: TrainConfig {
                    learning_rate: 0.5,
                    epochs: 500,
                    ..TrainConfig::default()
                },
            },
            ModelKind::Mlp => ModelSpec {
                kind,
                hidden: 4,
                seq_len: 1,
                train: TrainConfig {
                    learning_rate: 0.5,
                    epochs: 1500,
                    ..TrainConfig::default()
                },
            },
            ModelKind::Rnn => ModelSpec {
                kind,
                hidden: 8,
                seq_len: 10,
                train: TrainConfig {
                    learning_rate: 0.5,
                    epochs: 300,
                    ..TrainConfig::default()
                },
            },
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.train.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.seq_len == 0 {
            return Err(Error::Config("sequence length must be at least 1".into()));
        }
        if self.kind != ModelKind::Rnn && self.seq_len != 1 {
            return Err(Error::Config(format!(
                "{} takes single-frame inputs (seq_len 1)",
                self.kind
            )));
        }
        if self.kind != ModelKind::LogReg && self.hidden == 0 {
            return Err(Error::Config("hidden layer needs at least one unit".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Model {
    LogReg(LogRegParams),
    Mlp(MlpParams),
    Rnn(RnnParams),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::LogReg(_) => ModelKind::LogReg,
            Model::Mlp(_) => ModelKind::Mlp,
            Model::Rnn(_) => ModelKind::Rnn,
        }
    }

    /// Probability-like score of the lane-change class for a sequence of
    /// (already scaled) input rows; non-recurrent models use the last row.
    pub fn score(&self, input: &[Vec<f64>]) -> Result<f64> {
        let last = || {
            input
                .last()
                .map(Vec::as_slice)
                .ok_or_else(|| Error::Shape("empty input".into()))
        };
        match self {
            Model::LogReg(p) => {
                let x = last()?;
                check_width(x.len(), p.features())?;
                Ok(logreg_proba(p, x)[1])
            }
            Model::Mlp(p) => {
                let x = last()?;
                check_width(x.len(), p.input_dim())?;
                Ok(mlp_forward(p, x))
            }
            Model::Rnn(p) => rnn_forward(p, input),
        }
    }
}

fn check_width(got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::Shape(format!(
            "input width {got}, expected {expected}"
        )));
    }
    Ok(())
}

/// `1` iff the model score is strictly above `threshold`.
pub fn predict_label(model: &Model, input: &[Vec<f64>], threshold: f64) -> Result<u8> {
    Ok(u8::from(model.score(input)? > threshold))
}

/// Fits `spec` on samples whose inputs are already scaled.
pub fn fit_model(spec: &ModelSpec, samples: &[LabeledSample]) -> Result<Model> {
    spec.validate()?;
    if samples.is_empty() {
        return Err(Error::Fit("no training samples".into()));
    }
    let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    match spec.kind {
        ModelKind::LogReg => {
            let xs: Vec<&[f64]> = samples.iter().map(LabeledSample::last_input).collect();
            let ys: Vec<usize> = labels.iter().map(|&y| usize::from(y)).collect();
            Ok(Model::LogReg(logreg_fit(&xs, &ys, 2, &spec.train)?.params))
        }
        ModelKind::Mlp => {
            let xs: Vec<&[f64]> = samples.iter().map(LabeledSample::last_input).collect();
            Ok(Model::Mlp(mlp_fit(&xs, &labels, spec.hidden, &spec.train)?.params))
        }
        ModelKind::Rnn => {
            if let Some(s) = samples.iter().find(|s| s.input.len() != spec.seq_len) {
                return Err(Error::Shape(format!(
                    "sample of {} steps, model expects {}",
                    s.input.len(),
                    spec.seq_len
                )));
            }
            let seqs: Vec<&[Vec<f64>]> = samples.iter().map(|s| s.input.as_slice()).collect();
            Ok(Model::Rnn(rnn_fit(&seqs, &labels, spec.hidden, &spec.train)?.params))
        }
    }
}

/// A fitted model together with the feature scaling and layout it expects.
#[derive(Clone, Debug, PartialEq)]
pub struct Predictor {
    pub model: Model,
    pub scaler: Scaler,
    pub options: LabelingOptions,
    pub seed: u64,
}

impl Predictor {
    /// Standardizes `samples` (raw features) and fits `spec` on them.
    pub fn train(spec: &ModelSpec, samples: &[LabeledSample], options: LabelingOptions) -> Result<Self> {
        if options.seq_len != spec.seq_len {
            return Err(Error::Config(format!(
                "labeling produced {}-step inputs but the model wants {}",
                options.seq_len, spec.seq_len
            )));
        }
        let (scaled, _, scaler) = standardize(samples, &[])?;
        let model = fit_model(spec, &scaled)?;
        Ok(Predictor {
            model,
            scaler,
            options,
            seed: spec.train.seed,
        })
    }

    /// Score for raw (unscaled) encoded input rows.
    pub fn score(&self, raw_input: &[Vec<f64>]) -> Result<f64> {
        let scaled: Vec<Vec<f64>> = raw_input.iter().map(|r| self.scaler.transform(r)).collect();
        self.model.score(&scaled)
    }

    pub fn predict(&self, raw_input: &[Vec<f64>], threshold: f64) -> Result<u8> {
        Ok(u8::from(self.score(raw_input)? > threshold))
    }
}

fn fmt_values(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:?}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn write_param<W: Write>(out: &mut W, name: &str, m: &Matrix) -> Result<()> {
    writeln!(out, "param {name} {} {}", m.rows(), m.cols())?;
    for i in 0..m.rows() {
        writeln!(out, "{}", fmt_values(m.row(i)))?;
    }
    Ok(())
}

fn row_matrix(values: &[f64]) -> Matrix {
    Matrix::from_vec(1, values.len(), values.to_vec())
}

pub fn write_predictor<W: Write>(p: &Predictor, mut out: W) -> Result<()> {
    writeln!(out, "{MAGIC} {FORMAT_VERSION}")?;
    writeln!(out, "kind {}", p.model.kind())?;
    writeln!(out, "seed {}", p.seed)?;
    writeln!(out, "direction {}", p.options.direction)?;
    writeln!(out, "encoding {}", p.options.encoding.as_str())?;
    writeln!(out, "seq_len {}", p.options.seq_len)?;
    match &p.model {
        Model::LogReg(_) => {}
        Model::Mlp(m) => {
            writeln!(out, "hidden_activation {}", m.hidden_activation)?;
            writeln!(out, "output_activation {}", m.output_activation)?;
        }
        Model::Rnn(r) => {
            writeln!(out, "hidden_activation {}", r.hidden_activation)?;
            writeln!(out, "output_activation {}", r.output_activation)?;
        }
    }
    write_param(&mut out, "scaler_mean", &row_matrix(&p.scaler.mean))?;
    write_param(&mut out, "scaler_std", &row_matrix(&p.scaler.std))?;
    match &p.model {
        Model::LogReg(l) => write_param(&mut out, "beta", &l.beta)?,
        Model::Mlp(m) => {
            write_param(&mut out, "w12", &m.w12)?;
            write_param(&mut out, "b12", &row_matrix(&m.b12))?;
            write_param(&mut out, "w23", &m.w23)?;
            write_param(&mut out, "b23", &row_matrix(&m.b23))?;
        }
        Model::Rnn(r) => {
            write_param(&mut out, "w", &r.w)?;
            write_param(&mut out, "u", &r.u)?;
            write_param(&mut out, "v", &r.v)?;
        }
    }
    out.flush()?;
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    number: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_line(&mut self) -> Result<Option<String>> {
        loop {
            match self.inner.next() {
                None => return Ok(None),
                Some(line) => {
                    self.number += 1;
                    let line = line?;
                    let trimmed = line.trim();
                    if trimmed.is_empty() || trimmed.starts_with('#') {
                        continue;
                    }
                    return Ok(Some(trimmed.to_string()));
                }
            }
        }
    }

    fn fail<T>(&self, reason: impl Into<String>) -> Result<T> {
        Err(Error::ModelFormat {
            line: self.number,
            reason: reason.into(),
        })
    }

    fn expect_line(&mut self) -> Result<String> {
        match self.next_line()? {
            Some(l) => Ok(l),
            None => self.fail("unexpected end of file"),
        }
    }

    fn key_value(&mut self, key: &str) -> Result<String> {
        let line = self.expect_line()?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok(v.trim().to_string()),
            _ => self.fail(format!("expected `{key}`, found {line:?}")),
        }
    }

    fn parsed<T: FromStr>(&mut self, key: &str) -> Result<T> {
        let raw = self.key_value(key)?;
        match raw.parse() {
            Ok(v) => Ok(v),
            Err(_) => self.fail(format!("bad value {raw:?} for `{key}`")),
        }
    }

    fn param(&mut self, name: &str) -> Result<Matrix> {
        let header = self.expect_line()?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        let (rows, cols) = match parts.as_slice() {
            ["param", n, r, c] if *n == name => match (r.parse(), c.parse()) {
                (Ok(r), Ok(c)) => (r, c),
                _ => return self.fail(format!("bad shape in {header:?}")),
            },
            _ => return self.fail(format!("expected `param {name}`, found {header:?}")),
        };
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let line = self.expect_line()?;
            let before = data.len();
            for tok in line.split_whitespace() {
                match tok.parse::<f64>() {
                    Ok(v) => data.push(v),
                    Err(_) => return self.fail(format!("bad number {tok:?}")),
                }
            }
            if data.len() - before != cols {
                return self.fail(format!("expected {cols} values in row of `{name}`"));
            }
        }
        Ok(Matrix::from_vec(rows, cols, data))
    }
}

pub fn read_predictor<R: BufRead>(input: R) -> Result<Predictor> {
    let mut lines = Lines {
        inner: input.lines(),
        number: 0,
    };
    let magic = lines.expect_line()?;
    if magic != format!("{MAGIC} {FORMAT_VERSION}") {
        return lines.fail(format!("not a model file (header {magic:?})"));
    }
    let kind: ModelKind = lines.parsed("kind")?;
    let seed: u64 = lines.parsed("seed")?;
    let direction: Direction = lines.parsed("direction")?;
    let encoding: LaneEncoding = lines.parsed("encoding")?;
    let seq_len: usize = lines.parsed("seq_len")?;
    let activations = if kind == ModelKind::LogReg {
        None
    } else {
        let hidden: Activation = lines.parsed("hidden_activation")?;
        let output: Activation = lines.parsed("output_activation")?;
        Some((hidden, output))
    };
    let mean = lines.param("scaler_mean")?.as_slice().to_vec();
    let std = lines.param("scaler_std")?.as_slice().to_vec();
    let model = match (kind, activations) {
        (ModelKind::LogReg, _) => Model::LogReg(LogRegParams {
            beta: lines.param("beta")?,
        }),
        (ModelKind::Mlp, Some((hidden_activation, output_activation))) => {
            let w12 = lines.param("w12")?;
            let b12 = lines.param("b12")?.as_slice().to_vec();
            let w23 = lines.param("w23")?;
            let b23 = lines.param("b23")?.as_slice().to_vec();
            if b12.len() != w12.rows() || w23.cols() != w12.rows() || b23.len() != w23.rows() {
                return lines.fail("inconsistent layer shapes");
            }
            Model::Mlp(MlpParams {
                w12,
                b12,
                w23,
                b23,
                hidden_activation,
                output_activation,
            })
        }
        (ModelKind::Rnn, Some((hidden_activation, output_activation))) => {
            let w = lines.param("w")?;
            let u = lines.param("u")?;
            let v = lines.param("v")?;
            if u.rows() != w.rows() || u.cols() != w.rows() || v.cols() != w.rows() {
                return lines.fail("inconsistent recurrent shapes");
            }
            Model::Rnn(RnnParams {
                w,
                u,
                v,
                hidden_activation,
                output_activation,
                seq_len,
            })
        }
        _ => unreachable!("activations are read for network kinds"),
    };
    Ok(Predictor {
        model,
        scaler: Scaler { mean, std },
        options: LabelingOptions {
            direction,
            encoding,
            seq_len,
        },
        seed,
    })
}
