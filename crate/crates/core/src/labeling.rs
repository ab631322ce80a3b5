//! Feature extraction and gap-augmented time-window labeling.
//!
//! For a lane change at `t_lc`, the `tau` seconds ending at `t_lc` (inclusive)
//! are labeled positive. The negative window has the same length and ends
//! `tau + tau_g` seconds earlier, so `tau_g` seconds of unlabeled frames
//! separate the two:
//!
//! ```text
//!   negative            gap              positive
//! [t-10(2τ+τg)+1, t-10(τ+τg)]  ...  [t-10τ+1, t]
//! ```

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Direction, FRAME_RATE, MAX_LANE};
use crate::error::{Error, Result};
use crate::scenario::{find_neighbors_toward, LaneChangeEvent, Scenario};

/// Gaps and speed differences to the three neighbors plus the ego lane.
///
/// Distances are `pos_j - pos_0` (ahead is positive); speed differences are
/// `v_0 - v_j` (ego faster is positive).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub d01: f64,
    pub d02: f64,
    pub d03: f64,
    pub v01: f64,
    pub v02: f64,
    pub v03: f64,
    pub l0: f64,
}

pub const FEATURE_NAMES: [&str; 7] = ["d01", "d02", "d03", "v01", "v02", "v03", "l0"];

/// How the ego lane enters the model input.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LaneEncoding {
    /// Lane id as a single numeric feature.
    #[default]
    Raw,
    /// One indicator per lane id 1..=7.
    OneHot,
}

impl LaneEncoding {
    pub fn input_dim(self) -> usize {
        match self {
            LaneEncoding::Raw => 7,
            LaneEncoding::OneHot => 6 + MAX_LANE as usize,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LaneEncoding::Raw => "raw",
            LaneEncoding::OneHot => "one-hot",
        }
    }
}

impl FromStr for LaneEncoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(LaneEncoding::Raw),
            "one-hot" | "onehot" => Ok(LaneEncoding::OneHot),
            other => Err(Error::Input(format!("unknown lane encoding {other:?}"))),
        }
    }
}

impl FeatureVector {
    pub fn as_array(&self) -> [f64; 7] {
        [
            self.d01, self.d02, self.d03, self.v01, self.v02, self.v03, self.l0,
        ]
    }

    pub fn from_array(v: [f64; 7]) -> Self {
        FeatureVector {
            d01: v[0],
            d02: v[1],
            d03: v[2],
            v01: v[3],
            v02: v[4],
            v03: v[5],
            l0: v[6],
        }
    }

    pub fn encode(&self, encoding: LaneEncoding) -> Vec<f64> {
        let values = self.as_array();
        match encoding {
            LaneEncoding::Raw => values.to_vec(),
            LaneEncoding::OneHot => {
                let mut out = values[..6].to_vec();
                let lane = self.l0.round() as i64;
                out.extend((1..=i64::from(MAX_LANE)).map(|l| if l == lane { 1.0 } else { 0.0 }));
                out
            }
        }
    }
}

/// Features for a left lane change at `(ego_id, frame)`; `None` unless all
/// three neighbors exist.
pub fn extract_features(ds: &Dataset, ego_id: u32, frame: u32) -> Result<Option<FeatureVector>> {
    extract_features_toward(ds, ego_id, frame, Direction::Left)
}

pub fn extract_features_toward(
    ds: &Dataset,
    ego_id: u32,
    frame: u32,
    direction: Direction,
) -> Result<Option<FeatureVector>> {
    let ctx = find_neighbors_toward(ds, ego_id, frame, direction)?;
    if ctx.scenario != Scenario::A {
        return Ok(None);
    }
    let (Some(v1), Some(v2), Some(v3)) = (&ctx.leader, &ctx.target_leader, &ctx.target_follower)
    else {
        unreachable!("scenario a has all neighbors");
    };
    let ego = &ctx.ego;
    Ok(Some(FeatureVector {
        d01: v1.position - ego.position,
        d02: v2.position - ego.position,
        d03: v3.position - ego.position,
        v01: ego.velocity - v1.velocity,
        v02: ego.velocity - v2.velocity,
        v03: ego.velocity - v3.velocity,
        l0: f64::from(ego.lane),
    }))
}

/// Window length and gap, in whole seconds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabelingScheme {
    pub tau: u32,
    pub tau_g: u32,
}

impl LabelingScheme {
    pub const LS1: LabelingScheme = LabelingScheme { tau: 5, tau_g: 0 };
    pub const LS2: LabelingScheme = LabelingScheme { tau: 5, tau_g: 5 };
    pub const LS3: LabelingScheme = LabelingScheme { tau: 5, tau_g: 10 };
    pub const LS4: LabelingScheme = LabelingScheme { tau: 5, tau_g: 15 };
    pub const PRESETS: [LabelingScheme; 4] = [Self::LS1, Self::LS2, Self::LS3, Self::LS4];

    pub fn new(tau: u32, tau_g: u32) -> Result<Self> {
        if tau == 0 {
            return Err(Error::Config("window length tau must be positive".into()));
        }
        Ok(LabelingScheme { tau, tau_g })
    }

    /// Preset name (`LS1`..`LS4`) when the scheme is one.
    pub fn preset_name(&self) -> Option<&'static str> {
        ["LS1", "LS2", "LS3", "LS4"]
            .into_iter()
            .zip(Self::PRESETS)
            .find(|(_, s)| s == self)
            .map(|(n, _)| n)
    }
}

impl fmt::Display for LabelingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.preset_name() {
            Some(name) => f.write_str(name),
            None => write!(f, "tau{}-gap{}", self.tau, self.tau_g),
        }
    }
}

impl FromStr for LabelingScheme {
    type Err = Error;

    /// Accepts `LS1`..`LS4` or `tau<N>-gap<M>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(n) = s.strip_prefix("LS").or_else(|| s.strip_prefix("ls")) {
            return match n.parse::<usize>() {
                Ok(i @ 1..=4) => Ok(Self::PRESETS[i - 1]),
                _ => Err(Error::Input(format!("unknown labeling preset {s:?}"))),
            };
        }
        let parsed = s
            .strip_prefix("tau")
            .and_then(|rest| rest.split_once("-gap"))
            .and_then(|(t, g)| Some((t.parse().ok()?, g.parse().ok()?)));
        match parsed {
            Some((tau, tau_g)) => LabelingScheme::new(tau, tau_g),
            None => Err(Error::Input(format!("cannot parse labeling scheme {s:?}"))),
        }
    }
}

/// Inclusive frame range; may start before frame 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameRange {
    pub start: i64,
    pub end: i64,
}

impl FrameRange {
    pub fn len(&self) -> usize {
        (self.end - self.start + 1).max(0) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.start
    }

    pub fn contains(&self, frame: i64) -> bool {
        self.start <= frame && frame <= self.end
    }

    pub fn frames(&self) -> impl Iterator<Item = i64> {
        self.start..=self.end
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowPair {
    pub positive: FrameRange,
    pub negative: FrameRange,
}

impl WindowPair {
    /// Whether both windows lie at or after `first_frame`.
    pub fn starts_at_or_after(&self, first_frame: u32) -> bool {
        self.negative.start >= i64::from(first_frame)
    }
}

pub fn window_frames(event: &LaneChangeEvent, scheme: LabelingScheme, frame_rate: u32) -> WindowPair {
    let t = i64::from(event.t_lc);
    let rate = i64::from(frame_rate);
    let tau = i64::from(scheme.tau);
    let gap = i64::from(scheme.tau_g);
    WindowPair {
        positive: FrameRange {
            start: t - rate * tau + 1,
            end: t,
        },
        negative: FrameRange {
            start: t - rate * (2 * tau + gap) + 1,
            end: t - rate * (tau + gap),
        },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelingOptions {
    pub direction: Direction,
    pub encoding: LaneEncoding,
    /// Frames per sample; values above 1 build sequences for the recurrent
    /// model, ending at the sample frame.
    pub seq_len: usize,
}

impl Default for LabelingOptions {
    fn default() -> Self {
        LabelingOptions {
            direction: Direction::Left,
            encoding: LaneEncoding::Raw,
            seq_len: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    /// `seq_len` encoded feature rows, oldest first.
    pub input: Vec<Vec<f64>>,
    /// Raw features at the sample frame.
    pub features: FeatureVector,
    pub label: u8,
    pub vehicle_id: u32,
    pub frame: u32,
    /// Index of the producing event in the event list given to
    /// [`label_events`].
    pub event_id: Option<usize>,
    pub event: Option<LaneChangeEvent>,
}

impl LabeledSample {
    /// Encoded features at the sample frame.
    pub fn last_input(&self) -> &[f64] {
        self.input.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SkipReason {
    /// The ego is missing from the (preprocessed) dataset at `t_lc`.
    NotPresent,
    /// The negative window starts before the ego's track does.
    Truncated,
    /// Another change of the same vehicle falls inside the labeled span.
    OverlapsOtherChange,
    /// More than half the frames of a window had no features.
    SparseWindow,
}

impl SkipReason {
    pub fn as_str(self) -> &'static str {
        match self {
            SkipReason::NotPresent => "not_present",
            SkipReason::Truncated => "truncated",
            SkipReason::OverlapsOtherChange => "overlaps_other_change",
            SkipReason::SparseWindow => "sparse_window",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabelingOutcome {
    pub samples: Vec<LabeledSample>,
    /// Indices of events that produced samples.
    pub kept: Vec<usize>,
    pub skipped: Vec<(usize, SkipReason)>,
}

impl LabelingOutcome {
    pub fn skipped_count(&self, reason: SkipReason) -> usize {
        self.skipped.iter().filter(|(_, r)| *r == reason).count()
    }

    pub fn positives(&self) -> usize {
        self.samples.iter().filter(|s| s.label == 1).count()
    }

    pub fn negatives(&self) -> usize {
        self.samples.len() - self.positives()
    }
}

/// Labels the windows of every task event in `events`.
///
/// Events of other directions or touching removed lanes are not labeled but
/// still count as "other changes" for the overlap rule.
pub fn label_events(
    ds: &Dataset,
    events: &[LaneChangeEvent],
    scheme: LabelingScheme,
    options: &LabelingOptions,
) -> Result<LabelingOutcome> {
    if options.seq_len == 0 {
        return Err(Error::Config("sequence length must be at least 1".into()));
    }
    let mut outcome = LabelingOutcome::default();
    for (idx, event) in events.iter().enumerate() {
        if !event.belongs_to_task(options.direction) {
            continue;
        }
        match label_one(ds, events, idx, scheme, options)? {
            Ok(mut samples) => {
                outcome.kept.push(idx);
                outcome.samples.append(&mut samples);
            }
            Err(reason) => outcome.skipped.push((idx, reason)),
        }
    }
    Ok(outcome)
}

fn label_one(
    ds: &Dataset,
    events: &[LaneChangeEvent],
    idx: usize,
    scheme: LabelingScheme,
    options: &LabelingOptions,
) -> Result<Result<Vec<LabeledSample>, SkipReason>> {
    let event = &events[idx];
    let Some(track) = ds.track_at(event.vehicle_id, event.t_lc) else {
        return Ok(Err(SkipReason::NotPresent));
    };
    let first_frame = ds.track_records(track)[0].frame;
    let windows = window_frames(event, scheme, FRAME_RATE);
    if !windows.starts_at_or_after(first_frame) {
        return Ok(Err(SkipReason::Truncated));
    }
    let span = FrameRange {
        start: windows.negative.start,
        end: i64::from(event.t_lc) - 1,
    };
    let overlaps = events.iter().enumerate().any(|(j, other)| {
        j != idx && other.vehicle_id == event.vehicle_id && span.contains(i64::from(other.t_lc))
    });
    if overlaps {
        return Ok(Err(SkipReason::OverlapsOtherChange));
    }

    let mut samples = Vec::with_capacity(windows.positive.len() * 2);
    for (range, label) in [(windows.positive, 1u8), (windows.negative, 0u8)] {
        let mut dropped = 0;
        for frame in range.frames() {
            let frame = frame as u32;
            match sample_input(ds, event.vehicle_id, frame, options)? {
                Some((input, features)) => samples.push(LabeledSample {
                    input,
                    features,
                    label,
                    vehicle_id: event.vehicle_id,
                    frame,
                    event_id: Some(idx),
                    event: Some(*event),
                }),
                None => dropped += 1,
            }
        }
        if dropped * 2 > range.len() {
            return Ok(Err(SkipReason::SparseWindow));
        }
    }
    Ok(Ok(samples))
}

/// Encoded input of `seq_len` frames ending at `frame`, or `None` if any of
/// them lacks features.
pub fn sample_input(
    ds: &Dataset,
    vehicle_id: u32,
    frame: u32,
    options: &LabelingOptions,
) -> Result<Option<(Vec<Vec<f64>>, FeatureVector)>> {
    let steps = options.seq_len as u32;
    if frame + 1 < steps {
        return Ok(None);
    }
    let mut input = Vec::with_capacity(options.seq_len);
    let mut last = None;
    for f in frame + 1 - steps..=frame {
        if ds.record_at(vehicle_id, f).is_none() {
            if f == frame {
                return Err(Error::NotPresent { vehicle_id, frame });
            }
            return Ok(None);
        }
        match extract_features_toward(ds, vehicle_id, f, options.direction)? {
            Some(fv) => {
                input.push(fv.encode(options.encoding));
                last = Some(fv);
            }
            None => return Ok(None),
        }
    }
    Ok(last.map(|fv| (input, fv)))
}

/// Per-feature affine map to zero mean and unit variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    /// Population standard deviation; zero marks a constant feature.
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit<'a, I>(rows: I) -> Result<Scaler>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        let Some(first) = rows.first() else {
            return Err(Error::Input("cannot fit a scaler on zero rows".into()));
        };
        let dim = first.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Shape("rows of unequal width".into()));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in &rows {
            for (m, x) in mean.iter_mut().zip(r.iter()) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in &rows {
            for ((v, x), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
        Ok(Scaler { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| if *s > 0.0 { (x - m) / s } else { 0.0 })
            .collect()
    }

    /// Undoes [`Scaler::transform`]; constant features come back as their mean.
    pub fn inverse(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(z, (m, s))| if *s > 0.0 { z * s + m } else { *m })
            .collect()
    }

    pub fn transform_sample(&self, sample: &LabeledSample) -> LabeledSample {
        LabeledSample {
            input: sample.input.iter().map(|r| self.transform(r)).collect(),
            ..sample.clone()
        }
    }
}

/// Fits a [`Scaler`] on every input row of `train` and applies it to both
/// sets.
pub fn standardize(
    train: &[LabeledSample],
    apply_to: &[LabeledSample],
) -> Result<(Vec<LabeledSample>, Vec<LabeledSample>, Scaler)> {
    let scaler = Scaler::fit(train.iter().flat_map(|s| s.input.iter().map(Vec::as_slice)))?;
    let scaled_train = train.iter().map(|s| scaler.transform_sample(s)).collect();
    let scaled_other = apply_to.iter().map(|s| scaler.transform_sample(s)).collect();
    Ok((scaled_train, scaled_other, scaler))
}

const SAMPLE_HEADER: [&str; 11] = [
    "vehicle_id", "frame", "event_id", "d01", "d02", "d03", "v01", "v02", "v03", "l0", "label",
];

/// Writes one row per sample with the raw features at the sample frame.
pub fn write_samples<W: Write>(samples: &[LabeledSample], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(SAMPLE_HEADER)?;
    for s in samples {
        let mut row = vec![
            s.vehicle_id.to_string(),
            s.frame.to_string(),
            s.event_id.map(|e| e.to_string()).unwrap_or_default(),
        ];
        row.extend(s.features.as_array().iter().map(|v| v.to_string()));
        row.push(s.label.to_string());
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a sample export back as single-frame samples.
pub fn read_samples<R: Read>(reader: R, encoding: LaneEncoding) -> Result<Vec<LabeledSample>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut cols = [0usize; 11];
    for (slot, name) in cols.iter_mut().zip(SAMPLE_HEADER) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
    }
    let mut samples = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 1;
        let get = |k: usize| row.get(cols[k]).unwrap_or("");
        let bad = |k: usize| Error::Parse {
            row: line,
            column: SAMPLE_HEADER[k].to_string(),
            value: get(k).to_string(),
        };
        let mut values = [0.0; 7];
        for (j, v) in values.iter_mut().enumerate() {
            *v = get(3 + j).parse().map_err(|_| bad(3 + j))?;
        }
        let features = FeatureVector::from_array(values);
        let label: u8 = get(10).parse().map_err(|_| bad(10))?;
        if label > 1 {
            return Err(bad(10));
        }
        let event_id = match get(2) {
            "" => None,
            raw => Some(raw.parse().map_err(|_| bad(2))?),
        };
        samples.push(LabeledSample {
            input: vec![features.encode(encoding)],
            features,
            label,
            vehicle_id: get(0).parse().map_err(|_| bad(0))?,
            frame: get(1).parse().map_err(|_| bad(1))?,
            event_id,
            event: None,
        });
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TrajectoryRecord;

    fn rec(vehicle_id: u32, frame: u32, lane: u8, position: f64, velocity: f64) -> TrajectoryRecord {
        TrajectoryRecord {
            vehicle_id,
            frame,
            lane,
            position,
            velocity,
            acceleration: 0.0,
            headway: 0.0,
            vehicle_class: 2,
            follower_id: None,
            leader_id: None,
        }
    }

    fn event(t_lc: u32) -> LaneChangeEvent {
        LaneChangeEvent {
            vehicle_id: 1,
            t_lc,
            from_lane: 4,
            to_lane: 3,
            direction: Direction::Left,
        }
    }

    #[test]
    fn feature_signs() {
        let ds = Dataset::from_records(vec![
            rec(1, 0, 4, 100.0, 10.0),
            rec(2, 0, 4, 120.0, 9.0),
            rec(3, 0, 3, 130.0, 11.0),
            rec(4, 0, 3, 90.0, 10.0),
        ])
        .unwrap();
        let fv = extract_features(&ds, 1, 0).unwrap().unwrap();
        assert_eq!((fv.d01, fv.d02, fv.d03), (20.0, 30.0, -10.0));
        assert_eq!((fv.v01, fv.v02, fv.v03), (1.0, -1.0, 0.0));
        assert_eq!(fv.l0, 4.0);
    }

    #[test]
    fn equal_speeds_give_zero_differences() {
        let ds = Dataset::from_records(vec![
            rec(1, 0, 4, 100.0, 12.5),
            rec(2, 0, 4, 130.0, 12.5),
            rec(3, 0, 3, 115.0, 12.5),
            rec(4, 0, 3, 70.0, 12.5),
        ])
        .unwrap();
        let fv = extract_features(&ds, 1, 0).unwrap().unwrap();
        assert_eq!((fv.v01, fv.v02, fv.v03), (0.0, 0.0, 0.0));
    }

    #[test]
    fn non_a_scenario_is_dropped() {
        let ds = Dataset::from_records(vec![rec(1, 0, 4, 100.0, 10.0), rec(3, 0, 3, 130.0, 11.0)])
            .unwrap();
        assert_eq!(extract_features(&ds, 1, 0).unwrap(), None);
        assert!(extract_features(&ds, 1, 1).is_err());
    }

    #[test]
    fn window_arithmetic() {
        let w = window_frames(&event(3000), LabelingScheme::LS4, 10);
        assert_eq!((w.positive.start, w.positive.end), (2951, 3000));
        assert_eq!((w.negative.start, w.negative.end), (2751, 2800));

        let w = window_frames(&event(3000), LabelingScheme::LS1, 10);
        assert_eq!((w.positive.start, w.positive.end), (2951, 3000));
        assert_eq!((w.negative.start, w.negative.end), (2901, 2950));

        let w = window_frames(&event(3000), LabelingScheme::LS4, 10);
        assert!(!w.starts_at_or_after(2900));
        assert!(w.starts_at_or_after(2751));
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in LabelingScheme::PRESETS {
            assert_eq!(s.to_string().parse::<LabelingScheme>().unwrap(), s);
        }
        let custom = LabelingScheme::new(3, 7).unwrap();
        assert_eq!(custom.to_string(), "tau3-gap7");
        assert_eq!("tau3-gap7".parse::<LabelingScheme>().unwrap(), custom);
        assert!(LabelingScheme::new(0, 1).is_err());
        assert!("LS9".parse::<LabelingScheme>().is_err());
    }

    #[test]
    fn one_hot_encoding() {
        let fv = FeatureVector::from_array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 3.0]);
        let enc = fv.encode(LaneEncoding::OneHot);
        assert_eq!(enc.len(), LaneEncoding::OneHot.input_dim());
        assert_eq!(&enc[6..], &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    fn sample(values: [f64; 7]) -> LabeledSample {
        let features = FeatureVector::from_array(values);
        LabeledSample {
            input: vec![features.encode(LaneEncoding::Raw)],
            features,
            label: 0,
            vehicle_id: 1,
            frame: 0,
            event_id: None,
            event: None,
        }
    }

    #[test]
    fn standardize_moments_and_constant_column() {
        let train: Vec<_> = (0..50)
            .map(|i| {
                let x = i as f64;
                sample([x, x * x, -3.0 * x, (x * 0.7).sin(), 2.0, x.sqrt(), 4.0])
            })
            .collect();
        let (scaled, _, scaler) = standardize(&train, &train).unwrap();
        for j in 0..7 {
            let col: Vec<f64> = scaled.iter().map(|s| s.input[0][j]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
            if scaler.std[j] == 0.0 {
                assert!(col.iter().all(|&v| v == 0.0));
            } else {
                assert!(mean.abs() < 1e-10, "feature {j} mean {mean}");
                assert!((var - 1.0).abs() < 1e-10, "feature {j} var {var}");
            }
        }
        assert_eq!(scaler.std[4], 0.0);
        assert_eq!(scaler.std[6], 0.0);
    }

    #[test]
    fn standardize_empty_train_fails() {
        assert!(standardize(&[], &[sample([0.0; 7])]).is_err());
    }

    #[test]
    fn samples_export_round_trip() {
        let mut s = sample([1.5, 2.25, -3.0, 0.1, 0.2, -0.3, 4.0]);
        s.label = 1;
        s.event_id = Some(3);
        let mut buf = Vec::new();
        write_samples(&[s.clone(), sample([0.0; 7])], &mut buf).unwrap();
        let back = read_samples(buf.as_slice(), LaneEncoding::Raw).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].features, s.features);
        assert_eq!(back[0].label, 1);
        assert_eq!(back[0].event_id, Some(3));
        assert_eq!(back[1].event_id, None);
    }
}
