//! Run configuration: one TOML file per run, with command-line overrides.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use lanechange::data::Column;
use lanechange::learners::Loss;
use lanechange::{
    CvConfig, Direction, LabelingOptions, LabelingScheme, LaneEncoding, ModelKind, ModelSpec,
    RuntimeParams, Schema,
};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub task: TaskConfig,
    pub model: ModelConfig,
    pub eval: EvalConfig,
    pub runtime: RuntimeConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Trajectory CSV.
    pub input: Option<PathBuf>,
    /// Synthesizer config; the dataset is generated in memory.
    pub synth: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Field delimiter of `input`.
    pub delimiter: char,
    /// Header remapping, keyed by the default column name (`id`, `frame`,
    /// `lane`, `pos`, `v`, `a`, `d_h`, `class`, `n_f`, `n_l`).
    pub columns: BTreeMap<String, String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            input: None,
            synth: None,
            output_dir: PathBuf::from("out"),
            delimiter: ',',
            columns: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    pub direction: Direction,
    /// `LS1`..`LS4` or `tau<N>-gap<M>`.
    pub scheme: String,
    /// Overrides the window length of `scheme`, seconds.
    pub tau: Option<u32>,
    /// Overrides the gap of `scheme`, seconds.
    pub tau_g: Option<u32>,
    pub encoding: LaneEncoding,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            direction: Direction::Left,
            scheme: "LS4".into(),
            tau: None,
            tau_g: None,
            encoding: LaneEncoding::Raw,
        }
    }
}

/// Model for `train` and `runtime`. Unset fields keep the family defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub seed: u64,
    pub hidden: Option<usize>,
    pub seq_len: Option<usize>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub init_scale: Option<f64>,
    pub loss: Option<Loss>,
    pub tolerance: Option<f64>,
    pub momentum: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::Mlp,
            seed: 1,
            hidden: None,
            seq_len: None,
            learning_rate: None,
            epochs: None,
            init_scale: None,
            loss: None,
            tolerance: None,
            momentum: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub k: usize,
    /// Seeds the fold assignment and the train/test split.
    pub seed: u64,
    pub threshold: f64,
    pub workers: usize,
    pub test_fraction: f64,
    /// Schemes swept by `crossval`.
    pub schemes: Vec<String>,
    /// Models swept by `crossval`; `[model]` overrides apply to its own kind.
    pub models: Vec<ModelKind>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k: 5,
            seed: 1,
            threshold: 0.5,
            workers: 1,
            test_fraction: 0.2,
            schemes: ["LS1", "LS2", "LS3", "LS4"].map(String::from).to_vec(),
            models: ModelKind::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeConfig {
    pub threshold: f64,
    pub tau_a: usize,
    pub tau_c: usize,
    pub thres: f64,
    pub tau_p: usize,
    /// Ground-truth window for per-stamp rates; defaults to the scheme's τ.
    pub tau: Option<u32>,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        let p = RuntimeParams::default();
        RuntimeConfig {
            threshold: p.threshold,
            tau_a: p.tau_a,
            tau_c: p.tau_c,
            thres: p.thres,
            tau_p: p.tau_p,
            tau: None,
        }
    }
}

/// Where the dataset comes from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DataSource {
    Csv(PathBuf),
    Synth(PathBuf),
}

impl RunConfig {
    /// Reads `path`; relative paths inside are taken from its directory.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.data.input.as_mut().map(rebase);
        cfg.data.synth.as_mut().map(rebase);
        rebase(&mut cfg.data.output_dir);
        Ok(cfg)
    }

    pub fn source(&self) -> Result<DataSource> {
        match (&self.data.input, &self.data.synth) {
            (Some(p), None) => Ok(DataSource::Csv(p.clone())),
            (None, Some(p)) => Ok(DataSource::Synth(p.clone())),
            (Some(_), Some(_)) => bail!("set only one of data.input and data.synth"),
            (None, None) => bail!("no data source: set data.input or data.synth"),
        }
    }

    pub fn schema(&self) -> Result<Schema> {
        ensure!(
            self.data.delimiter.is_ascii(),
            "data.delimiter must be a single ASCII character"
        );
        let mut schema = Schema::default().with_delimiter(self.data.delimiter as u8);
        for (key, name) in &self.data.columns {
            let column = Column::from_default_name(key)
                .with_context(|| format!("data.columns: unknown column {key:?}"))?;
            schema = schema.with_column(column, name.clone());
        }
        Ok(schema)
    }

    pub fn scheme(&self) -> Result<LabelingScheme> {
        let preset: LabelingScheme = self.task.scheme.parse()?;
        Ok(LabelingScheme::new(
            self.task.tau.unwrap_or(preset.tau),
            self.task.tau_g.unwrap_or(preset.tau_g),
        )?)
    }

    pub fn sweep_schemes(&self) -> Result<Vec<LabelingScheme>> {
        self.eval
            .schemes
            .iter()
            .map(|s| Ok(s.parse::<LabelingScheme>()?))
            .collect()
    }

    /// Spec for `kind`: family defaults, the model seed, and the `[model]`
    /// overrides when `kind` is the configured model.
    pub fn model_spec(&self, kind: ModelKind) -> ModelSpec {
        let mut spec = ModelSpec::default_for(kind).with_seed(self.model.seed);
        if kind != self.model.kind {
            return spec;
        }
        let m = &self.model;
        if let Some(v) = m.hidden {
            spec.hidden = v;
        }
        if let Some(v) = m.seq_len {
            spec.seq_len = v;
        }
        if let Some(v) = m.learning_rate {
            spec.train.learning_rate = v;
        }
        if let Some(v) = m.epochs {
            spec.train.epochs = v;
        }
        if let Some(v) = m.init_scale {
            spec.train.init_scale = v;
        }
        if let Some(v) = m.loss {
            spec.train.loss = v;
        }
        if let Some(v) = m.tolerance {
            spec.train.tolerance = v;
        }
        if let Some(v) = m.momentum {
            spec.train.momentum = v;
        }
        spec
    }

    pub fn labeling_options(&self, seq_len: usize) -> LabelingOptions {
        LabelingOptions {
            direction: self.task.direction,
            encoding: self.task.encoding,
            seq_len,
        }
    }

    pub fn cv_config(&self) -> CvConfig {
        CvConfig {
            k: self.eval.k,
            seed: self.eval.seed,
            threshold: self.eval.threshold,
            workers: self.eval.workers,
        }
    }

    pub fn runtime_params(&self) -> Result<RuntimeParams> {
        let r = &self.runtime;
        Ok(RuntimeParams {
            threshold: r.threshold,
            tau_a: r.tau_a,
            tau_c: r.tau_c,
            thres: r.thres,
            tau_p: r.tau_p,
            tau: match r.tau {
                Some(t) => t,
                None => self.scheme()?.tau,
            },
        })
    }

    /// Checks paths and parameter ranges before any work starts.
    pub fn validate(&self) -> Result<()> {
        match self.source()? {
            DataSource::Csv(p) | DataSource::Synth(p) => {
                ensure!(p.is_file(), "data file {} not found", p.display())
            }
        }
        self.schema()?;
        self.scheme()?;
        self.sweep_schemes()?;
        self.model_spec(self.model.kind).validate()?;
        let e = &self.eval;
        ensure!(e.k >= 2, "eval.k must be at least 2, got {}", e.k);
        ensure!(e.workers >= 1, "eval.workers must be at least 1");
        ensure!(
            (0.0..=1.0).contains(&e.threshold),
            "eval.threshold must lie in [0, 1], got {}",
            e.threshold
        );
        ensure!(
            e.test_fraction > 0.0 && e.test_fraction < 1.0,
            "eval.test_fraction must lie in (0, 1), got {}",
            e.test_fraction
        );
        ensure!(!e.models.is_empty(), "eval.models is empty");
        let r = &self.runtime;
        ensure!(
            (0.0..=1.0).contains(&r.threshold),
            "runtime.threshold must lie in [0, 1], got {}",
            r.threshold
        );
        ensure!(
            (0.0..1.0).contains(&r.thres),
            "runtime.thres must lie in [0, 1), got {}",
            r.thres
        );
        ensure!(r.tau != Some(0), "runtime.tau must be positive");
        Ok(())
    }
}
