//! Long-term lane-change prediction from vehicle trajectories.
//!
//! The pipeline runs ingestion ([`data`]), neighbor scenarios and event
//! detection ([`scenario`]), time-window labeling ([`labeling`]), three
//! from-scratch classifiers ([`learners`]), cross-validated evaluation
//! ([`evaluation`]) and once-per-second replay with smoothing ([`runtime`]).
//! [`synth`] generates trajectory datasets with scripted lane changes.

pub mod data;
pub mod error;
pub mod evaluation;
pub mod labeling;
pub mod learners;
pub mod runtime;
pub mod scenario;
pub mod synth;

pub use data::{load_dataset, preprocess, write_dataset, Dataset, Direction, Schema, TrajectoryRecord};
pub use error::{Error, Result};
pub use evaluation::{kfold_cv, labeling_sweep, metrics, ConfusionCounts, CvConfig, CvReport, MetricSet};
pub use labeling::{label_events, FeatureVector, LabeledSample, LabelingOptions, LabelingScheme, LaneEncoding};
pub use learners::{Model, ModelKind, ModelSpec, Predictor, TrainConfig};
pub use runtime::{PredictionSeries, Provenance, RuntimeParams, RuntimeReport};
pub use scenario::{detect_lane_changes, LaneChangeEvent, Scenario};
pub use synth::{generate, SynthConfig};
