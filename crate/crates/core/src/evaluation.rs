//! Confusion counts, rate metrics, vehicle-level splits, k-fold cross
//! validation and the labeling-scheme sweep.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::labeling::{label_events, standardize, LabeledSample, LabelingOptions, LabelingScheme};
use crate::learners::{fit_model, predict_label, ModelKind, ModelSpec};
use crate::scenario::LaneChangeEvent;

/// Test share of a 4:1 train/test split.
pub const FOUR_TO_ONE_TEST_FRACTION: f64 = 0.2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn new(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        ConfusionCounts { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = ConfusionCounts;

    fn add(self, o: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts::new(self.tp + o.tp, self.fp + o.fp, self.tn + o.tn, self.fn_ + o.fn_)
    }
}

pub fn confusion(preds: &[u8], labels: &[u8]) -> Result<ConfusionCounts> {
    if preds.len() != labels.len() {
        return Err(Error::Input(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &l) in preds.iter().zip(labels) {
        c.record(p == 1, l == 1);
    }
    Ok(c)
}

/// Rate metrics; `None` marks a zero denominator and serializes as `NA`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricSet {
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
    pub accuracy: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(c: &ConfusionCounts) -> MetricSet {
    let tpr = ratio(c.tp, c.tp + c.fn_);
    let precision = ratio(c.tp, c.tp + c.fp);
    let f1 = match (precision, tpr) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    MetricSet {
        tpr,
        fpr: ratio(c.fp, c.fp + c.tn),
        precision,
        f1,
        accuracy: ratio(c.tp + c.tn, c.total()),
    }
}

impl MetricSet {
    pub fn values(&self) -> [Option<f64>; 5] {
        [self.tpr, self.fpr, self.precision, self.f1, self.accuracy]
    }

    /// Per-metric mean over the sets where the metric is defined.
    pub fn mean_of(sets: &[MetricSet]) -> MetricSet {
        let mean = |pick: fn(&MetricSet) -> Option<f64>| {
            let defined: Vec<f64> = sets.iter().filter_map(pick).collect();
            (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
        };
        MetricSet {
            tpr: mean(|m| m.tpr),
            fpr: mean(|m| m.fpr),
            precision: mean(|m| m.precision),
            f1: mean(|m| m.f1),
            accuracy: mean(|m| m.accuracy),
        }
    }
}

pub fn format_metric(value: Option<f64>) -> String {
    match value {
        Some(v) => v.to_string(),
        None => "NA".to_string(),
    }
}

fn shuffled<T: Clone>(items: &[T], seed: u64) -> Vec<T> {
    let mut out = items.to_vec();
    out.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    out
}

/// Splits vehicles into (train, test) by a seeded shuffle. The test side gets
/// `round(n * test_fraction)` vehicles. Both sides come back sorted.
pub fn split_train_test(
    vehicle_ids: &[u32],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<u32>, Vec<u32>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let unique: Vec<u32> = vehicle_ids.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let order = shuffled(&unique, seed);
    let n_test = (unique.len() as f64 * test_fraction).round() as usize;
    let mut test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CvConfig {
    pub k: usize,
    pub seed: u64,
    /// Decision threshold on the model score.
    pub threshold: f64,
    /// Folds evaluated in parallel; 1 runs them sequentially.
    pub workers: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            k: 5,
            seed: 1,
            threshold: 0.5,
            workers: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldResult {
    pub confusion: ConfusionCounts,
    pub metrics: MetricSet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvReport {
    pub model: ModelKind,
    pub scheme: Option<LabelingScheme>,
    pub folds: Vec<FoldResult>,
    pub mean: MetricSet,
    /// Fold index of each vehicle.
    pub assignment: BTreeMap<u32, usize>,
}

fn assign_folds(vehicles: &[u32], k: usize, seed: u64) -> BTreeMap<u32, usize> {
    shuffled(vehicles, seed)
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, i % k))
        .collect()
}

fn folds_have_both_classes(samples: &[LabeledSample], assignment: &BTreeMap<u32, usize>, k: usize) -> bool {
    (0..k).all(|fold| {
        let mut seen = [false; 2];
        for s in samples.iter().filter(|s| assignment[&s.vehicle_id] != fold) {
            seen[usize::from(s.label.min(1))] = true;
        }
        seen[0] && seen[1]
    })
}

/// k-fold cross validation with folds drawn over vehicles. Scaling is fitted
/// on each round's training part only.
pub fn kfold_cv(samples: &[LabeledSample], spec: &ModelSpec, cfg: &CvConfig) -> Result<CvReport> {
    spec.validate()?;
    if cfg.k < 2 {
        return Err(Error::Config(format!("k must be at least 2, got {}", cfg.k)));
    }
    let vehicles: Vec<u32> = samples
        .iter()
        .map(|s| s.vehicle_id)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if vehicles.len() < cfg.k {
        return Err(Error::Config(format!(
            "{} vehicles cannot fill {} folds",
            vehicles.len(),
            cfg.k
        )));
    }
    let mut assignment = assign_folds(&vehicles, cfg.k, cfg.seed);
    if !folds_have_both_classes(samples, &assignment, cfg.k) {
        assignment = assign_folds(&vehicles, cfg.k, cfg.seed.wrapping_add(0x9E37_79B9_7F4A_7C15));
        if !folds_have_both_classes(samples, &assignment, cfg.k) {
            return Err(Error::Config(
                "a training fold lacks one of the classes even after reshuffling".into(),
            ));
        }
    }

    let run_fold = |fold: usize| -> Result<FoldResult> {
        let (val, train): (Vec<LabeledSample>, Vec<LabeledSample>) = samples
            .iter()
            .cloned()
            .partition(|s| assignment[&s.vehicle_id] == fold);
        let (train, val, _) = standardize(&train, &val)?;
        let model = fit_model(spec, &train)?;
        let mut preds = Vec::with_capacity(val.len());
        for s in &val {
            preds.push(predict_label(&model, &s.input, cfg.threshold)?);
        }
        let labels: Vec<u8> = val.iter().map(|s| s.label).collect();
        let confusion = confusion(&preds, &labels)?;
        Ok(FoldResult {
            confusion,
            metrics: metrics(&confusion),
        })
    };

    let folds: Vec<FoldResult> = if cfg.workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        pool.install(|| (0..cfg.k).into_par_iter().map(run_fold).collect::<Result<_>>())?
    } else {
        (0..cfg.k).map(run_fold).collect::<Result<_>>()?
    };

    let per_fold: Vec<MetricSet> = folds.iter().map(|f| f.metrics).collect();
    Ok(CvReport {
        model: spec.kind,
        scheme: None,
        mean: MetricSet::mean_of(&per_fold),
        folds,
        assignment,
    })
}

/// Cross-validates every (scheme, model) pair. Samples are labeled once per
/// scheme and sequence length.
pub fn labeling_sweep(
    ds: &Dataset,
    events: &[LaneChangeEvent],
    schemes: &[LabelingScheme],
    specs: &[ModelSpec],
    base: &LabelingOptions,
    cfg: &CvConfig,
) -> Result<Vec<CvReport>> {
    let mut cache: BTreeMap<(LabelingScheme, usize), Vec<LabeledSample>> = BTreeMap::new();
    let mut rows = Vec::with_capacity(schemes.len() * specs.len());
    for &scheme in schemes {
        for spec in specs {
            let samples = match cache.entry((scheme, spec.seq_len)) {
                Entry::Occupied(e) => e.into_mut(),
                Entry::Vacant(e) => {
                    let options = LabelingOptions {
                        seq_len: spec.seq_len,
                        ..*base
                    };
                    e.insert(label_events(ds, events, scheme, &options)?.samples)
                }
            };
            let mut report = kfold_cv(samples, spec, cfg)?;
            report.scheme = Some(scheme);
            rows.push(report);
        }
    }
    Ok(rows)
}

fn scheme_label(report: &CvReport) -> String {
    report
        .scheme
        .map(|s| s.to_string())
        .unwrap_or_else(|| "-".into())
}

/// Wide report: one row per fold plus a `mean` row for each (scheme, model).
pub fn write_cv_reports<W: Write>(reports: &[CvReport], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["scheme", "model", "fold", "tpr", "fpr", "precision", "f1", "accuracy"])?;
    for r in reports {
        let rows = r
            .folds
            .iter()
            .enumerate()
            .map(|(i, f)| ((i + 1).to_string(), f.metrics))
            .chain(std::iter::once(("mean".to_string(), r.mean)));
        for (fold, m) in rows {
            let mut row = vec![scheme_label(r), r.model.to_string(), fold];
            row.extend(m.values().into_iter().map(format_metric));
            out.write_record(&row)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Long format (`scheme,model,fold,metric,value`) for bar charts.
pub fn write_cv_long<W: Write>(reports: &[CvReport], writer: W) -> Result<()> {
    const NAMES: [&str; 5] = ["tpr", "fpr", "precision", "f1", "accuracy"];
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["scheme", "model", "fold", "metric", "value"])?;
    for r in reports {
        let rows = r
            .folds
            .iter()
            .enumerate()
            .map(|(i, f)| ((i + 1).to_string(), f.metrics))
            .chain(std::iter::once(("mean".to_string(), r.mean)));
        for (fold, m) in rows {
            for (name, value) in NAMES.iter().zip(m.values()) {
                out.write_record([
                    scheme_label(r),
                    r.model.to_string(),
                    fold.clone(),
                    name.to_string(),
                    format_metric(value),
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}
