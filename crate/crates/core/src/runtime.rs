//! Once-per-second replay of a fitted predictor over held-out vehicles, the
//! aggressive and conservative smoothers, and strict event scoring.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::data::{Dataset, FRAME_RATE};
use crate::error::{Error, Result};
use crate::evaluation::{format_metric, ConfusionCounts};
use crate::labeling::{sample_input, LabelingOptions};
use crate::learners::Predictor;
use crate::scenario::LaneChangeEvent;

/// Ticks between consecutive predictions.
pub const STRIDE: u32 = FRAME_RATE;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Provenance {
    Plain,
    Aggressive,
    Conservative,
}

impl Provenance {
    pub const ALL: [Provenance; 3] = [
        Provenance::Plain,
        Provenance::Aggressive,
        Provenance::Conservative,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Plain => "plain",
            Provenance::Aggressive => "aggressive",
            Provenance::Conservative => "conservative",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Provenance::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Input(format!("unknown approach {s:?}")))
    }
}

/// Binary predictions at frames `start, start + 10, ...`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PredictionSeries {
    pub vehicle_id: u32,
    pub start: u32,
    pub values: Vec<u8>,
    pub provenance: Provenance,
}

impl PredictionSeries {
    pub fn new(vehicle_id: u32, start: u32, values: Vec<u8>) -> Self {
        PredictionSeries {
            vehicle_id,
            start,
            values,
            provenance: Provenance::Plain,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn stamp(&self, index: usize) -> u32 {
        self.start + STRIDE * index as u32
    }

    pub fn stamps(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.len()).map(|i| self.stamp(i))
    }

    /// Index of the latest stamp at or before `frame`, if the series covers it.
    pub fn anchor(&self, frame: u32) -> Option<usize> {
        if frame < self.start {
            return None;
        }
        let idx = ((frame - self.start) / STRIDE) as usize;
        (idx < self.len()).then_some(idx)
    }

    fn with_values(&self, values: Vec<u8>, provenance: Provenance) -> Self {
        PredictionSeries {
            vehicle_id: self.vehicle_id,
            start: self.start,
            values,
            provenance,
        }
    }
}

/// Anything that can turn an encoded input window into a 0/1 decision.
pub trait FramePredictor {
    fn options(&self) -> &LabelingOptions;
    fn predict(&self, raw_input: &[Vec<f64>], threshold: f64) -> Result<u8>;
}

impl FramePredictor for Predictor {
    fn options(&self) -> &LabelingOptions {
        &self.options
    }

    fn predict(&self, raw_input: &[Vec<f64>], threshold: f64) -> Result<u8> {
        Predictor::predict(self, raw_input, threshold)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuntimePrediction {
    pub series: PredictionSeries,
    /// Stamps forced to 0 because no features could be extracted.
    pub dropped: usize,
}

/// Predicts every 10th frame from the vehicle's first frame to its last.
pub fn run_time_predict<P: FramePredictor + ?Sized>(
    model: &P,
    ds: &Dataset,
    vehicle_id: u32,
    threshold: f64,
) -> Result<RuntimePrediction> {
    let records = ds.vehicle_records(vehicle_id);
    let (Some(first), Some(last)) = (records.first(), records.last()) else {
        return Err(Error::UnknownVehicle(vehicle_id));
    };
    let mut values = Vec::new();
    let mut dropped = 0;
    let mut frame = first.frame;
    while frame <= last.frame {
        let value = if ds.record_at(vehicle_id, frame).is_some() {
            match sample_input(ds, vehicle_id, frame, model.options())? {
                Some((input, _)) => model.predict(&input, threshold)?,
                None => {
                    dropped += 1;
                    0
                }
            }
        } else {
            dropped += 1;
            0
        };
        values.push(value);
        frame += STRIDE;
    }
    Ok(RuntimePrediction {
        series: PredictionSeries::new(vehicle_id, first.frame, values),
        dropped,
    })
}

/// Output `t` is 1 iff any input in `t - tau_a ..= t` is 1, i.e. each positive
/// is carried forward `tau_a` more steps.
pub fn aggressive(values: &[u8], tau_a: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len());
    let mut last_positive: Option<usize> = None;
    for (t, &v) in values.iter().enumerate() {
        if v == 1 {
            last_positive = Some(t);
        }
        out.push(u8::from(last_positive.is_some_and(|p| t - p <= tau_a)));
    }
    out
}

/// Output `t` (for `t >= tau_c`) is 1 iff the mean of inputs
/// `t - tau_c ..= t` is strictly above `thres`; the first `tau_c` outputs are 0.
pub fn conservative(values: &[u8], tau_c: usize, thres: f64) -> Vec<u8> {
    let mut out = vec![0u8; values.len()];
    let width = tau_c + 1;
    let mut sum: usize = values.iter().take(tau_c).map(|&v| usize::from(v)).sum();
    for t in tau_c..values.len() {
        sum += usize::from(values[t]);
        if t >= width {
            sum -= usize::from(values[t - width]);
        }
        let avg = sum as f64 / width as f64;
        out[t] = u8::from(avg > thres);
    }
    out
}

pub fn aggressive_smooth(series: &PredictionSeries, tau_a: usize) -> PredictionSeries {
    series.with_values(aggressive(&series.values, tau_a), Provenance::Aggressive)
}

pub fn conservative_smooth(
    series: &PredictionSeries,
    tau_c: usize,
    thres: f64,
) -> Result<PredictionSeries> {
    if !(0.0..1.0).contains(&thres) {
        return Err(Error::Config(format!(
            "conservative threshold must lie in [0, 1), got {thres}"
        )));
    }
    Ok(series.with_values(conservative(&series.values, tau_c, thres), Provenance::Conservative))
}

/// True iff every stamp from `tau_p` seconds before the change through the
/// change is positive. Events outside the series, or too close to its start
/// to have `tau_p` earlier stamps, are never correct.
pub fn strict_correct(series: &PredictionSeries, event: &LaneChangeEvent, tau_p: usize) -> bool {
    let Some(anchor) = series.anchor(event.t_lc) else {
        return false;
    };
    anchor >= tau_p && series.values[anchor - tau_p..=anchor].iter().all(|&v| v == 1)
}

/// `(t_lc - t_p) / 10` seconds, where `t_p` starts the unbroken run of
/// positives ending at the change.
pub fn advanced_time(series: &PredictionSeries, event: &LaneChangeEvent) -> Option<f64> {
    let anchor = series.anchor(event.t_lc)?;
    if series.values[anchor] != 1 {
        return None;
    }
    let mut first = anchor;
    while first > 0 && series.values[first - 1] == 1 {
        first -= 1;
    }
    Some(f64::from(event.t_lc - series.stamp(first)) / f64::from(FRAME_RATE))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventOutcome {
    pub event: LaneChangeEvent,
    pub correct: bool,
    /// Present for correctly predicted events.
    pub advanced_time: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RuntimeReport {
    pub approach: Provenance,
    pub events: Vec<EventOutcome>,
    /// Per-stamp counts against the `tau`-second pre-change ground truth.
    pub stamps: ConfusionCounts,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub prediction_accuracy: Option<f64>,
    pub mean_advanced_time: Option<f64>,
    pub dropped_stamps: usize,
}

/// Scores `series` against `events`. A stamp is ground-truth positive iff it
/// lies in `[t_lc - 10 tau + 1, t_lc]` of an event of the same vehicle.
pub fn runtime_report(
    series: &[PredictionSeries],
    events: &[LaneChangeEvent],
    tau_p: usize,
    tau: u32,
    approach: Provenance,
) -> Result<RuntimeReport> {
    let by_vehicle: BTreeMap<u32, &PredictionSeries> =
        series.iter().map(|s| (s.vehicle_id, s)).collect();
    let mut vehicle_events: BTreeMap<u32, Vec<&LaneChangeEvent>> = BTreeMap::new();
    let mut outcomes = Vec::with_capacity(events.len());
    for e in events {
        let s = by_vehicle.get(&e.vehicle_id).ok_or_else(|| {
            Error::Input(format!("event of vehicle {} has no prediction series", e.vehicle_id))
        })?;
        vehicle_events.entry(e.vehicle_id).or_default().push(e);
        let correct = strict_correct(s, e, tau_p);
        outcomes.push(EventOutcome {
            event: *e,
            correct,
            advanced_time: if correct { advanced_time(s, e) } else { None },
        });
    }

    let window = i64::from(FRAME_RATE * tau);
    let mut stamps = ConfusionCounts::default();
    for s in series {
        let evs = vehicle_events.get(&s.vehicle_id).map(Vec::as_slice).unwrap_or(&[]);
        for (i, &v) in s.values.iter().enumerate() {
            let frame = i64::from(s.stamp(i));
            let actual = evs.iter().any(|e| {
                let t = i64::from(e.t_lc);
                frame > t - window && frame <= t
            });
            stamps.record(v == 1, actual);
        }
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    let correct = outcomes.iter().filter(|o| o.correct).count();
    let times: Vec<f64> = outcomes.iter().filter_map(|o| o.advanced_time).collect();
    Ok(RuntimeReport {
        approach,
        tpr: ratio(stamps.tp, stamps.tp + stamps.fn_),
        fpr: ratio(stamps.fp, stamps.fp + stamps.tn),
        prediction_accuracy: ratio(correct, outcomes.len()),
        mean_advanced_time: (!times.is_empty())
            .then(|| times.iter().sum::<f64>() / times.len() as f64),
        events: outcomes,
        stamps,
        dropped_stamps: 0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RuntimeParams {
    /// Decision threshold on the model score.
    pub threshold: f64,
    pub tau_a: usize,
    pub tau_c: usize,
    /// Conservative-average threshold.
    pub thres: f64,
    pub tau_p: usize,
    /// Ground-truth window for per-stamp rates, seconds.
    pub tau: u32,
}

impl Default for RuntimeParams {
    fn default() -> Self {
        RuntimeParams {
            threshold: 0.5,
            tau_a: 3,
            tau_c: 3,
            thres: 0.5,
            tau_p: 3,
            tau: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RuntimeEvaluation {
    /// Series per approach, in [`Provenance::ALL`] order.
    pub series: [Vec<PredictionSeries>; 3],
    pub reports: [RuntimeReport; 3],
}

/// Replays `model` over `vehicles` and scores plain, aggressive and
/// conservative predictions. Only events of those vehicles are scored.
pub fn evaluate_runtime<P: FramePredictor + ?Sized>(
    model: &P,
    ds: &Dataset,
    vehicles: &[u32],
    events: &[LaneChangeEvent],
    params: &RuntimeParams,
) -> Result<RuntimeEvaluation> {
    let mut plain = Vec::new();
    let mut dropped = 0;
    for &v in vehicles {
        if !ds.contains_vehicle(v) {
            continue;
        }
        let p = run_time_predict(model, ds, v, params.threshold)?;
        dropped += p.dropped;
        plain.push(p.series);
    }
    let aggressive: Vec<_> = plain.iter().map(|s| aggressive_smooth(s, params.tau_a)).collect();
    let conservative = plain
        .iter()
        .map(|s| conservative_smooth(s, params.tau_c, params.thres))
        .collect::<Result<Vec<_>>>()?;
    let scored: Vec<LaneChangeEvent> = events
        .iter()
        .filter(|e| plain.iter().any(|s| s.vehicle_id == e.vehicle_id))
        .copied()
        .collect();
    let report = |series: &[PredictionSeries], approach| -> Result<RuntimeReport> {
        let mut r = runtime_report(series, &scored, params.tau_p, params.tau, approach)?;
        r.dropped_stamps = dropped;
        Ok(r)
    };
    let reports = [
        report(&plain, Provenance::Plain)?,
        report(&aggressive, Provenance::Aggressive)?,
        report(&conservative, Provenance::Conservative)?,
    ];
    Ok(RuntimeEvaluation {
        series: [plain, aggressive, conservative],
        reports,
    })
}

pub fn write_series<W: Write>(series: &[PredictionSeries], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["vehicle_id", "frame", "value", "provenance"])?;
    for s in series {
        for (i, v) in s.values.iter().enumerate() {
            out.write_record([
                s.vehicle_id.to_string(),
                s.stamp(i).to_string(),
                v.to_string(),
                s.provenance.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// One row per approach: `approach,tpr,fpr,prediction_accuracy,avg_advanced_time_s`.
pub fn write_runtime_reports<W: Write>(reports: &[RuntimeReport], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["approach", "tpr", "fpr", "prediction_accuracy", "avg_advanced_time_s"])?;
    for r in reports {
        out.write_record([
            r.approach.to_string(),
            format_metric(r.tpr),
            format_metric(r.fpr),
            format_metric(r.prediction_accuracy),
            format_metric(r.mean_advanced_time),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_event_outcomes<W: Write>(reports: &[RuntimeReport], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["approach", "vehicle_id", "t_lc", "correct", "advanced_time_s"])?;
    for r in reports {
        for o in &r.events {
            out.write_record([
                r.approach.to_string(),
                o.event.vehicle_id.to_string(),
                o.event.t_lc.to_string(),
                u8::from(o.correct).to_string(),
                format_metric(o.advanced_time),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}
