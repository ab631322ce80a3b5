//! Trajectory records, the indexed [`Dataset`], delimited-text ingestion and
//! the lane filters applied before labeling.
//!
//! Records are 10 Hz vehicle-frame rows in the reconstructed NGSIM layout:
//!
//! ```text
//! id,frame,lane,pos,v,a,d_h,class,n_f,n_l
//! 4,244,5,71.26,7.40,0.005,4.08,2,27,21
//! ```
//!
//! Distances are meters and speeds m/s. A follower or leader id of `0` means
//! "no such vehicle".

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ticks per second of the source data.
pub const FRAME_RATE: u32 = 10;

pub const MIN_LANE: u8 = 1;
pub const MAX_LANE: u8 = 7;

/// Lane-change direction. Lane 1 is the leftmost lane, so a left change
/// decreases the lane id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Left,
    Right,
}

impl Direction {
    /// Lane reached by a one-lane move in this direction, if it exists.
    pub fn target_lane(self, lane: u8) -> Option<u8> {
        let target = match self {
            Direction::Left => lane.checked_sub(1)?,
            Direction::Right => lane.checked_add(1)?,
        };
        (MIN_LANE..=MAX_LANE).contains(&target).then_some(target)
    }

    /// Lanes dropped by [`preprocess`] for this task: the on-ramp, plus the
    /// outermost main lane on the side of the change.
    pub fn removed_lanes(self) -> [u8; 2] {
        match self {
            Direction::Left => [7, 1],
            Direction::Right => [7, 6],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" => Ok(Direction::Left),
            "right" => Ok(Direction::Right),
            other => Err(Error::Input(format!("unknown direction {other:?}"))),
        }
    }
}

/// One vehicle at one frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub vehicle_id: u32,
    pub frame: u32,
    pub lane: u8,
    pub position: f64,
    pub velocity: f64,
    pub acceleration: f64,
    pub headway: f64,
    pub vehicle_class: u8,
    pub follower_id: Option<u32>,
    pub leader_id: Option<u32>,
}

impl TrajectoryRecord {
    fn validate(&self) -> Result<()> {
        let fail = |reason: String| Error::Integrity {
            vehicle_id: self.vehicle_id,
            frame: self.frame,
            reason,
        };
        if self.vehicle_id == 0 {
            return Err(fail("vehicle id must be positive".into()));
        }
        if !(MIN_LANE..=MAX_LANE).contains(&self.lane) {
            return Err(fail(format!("lane {} outside 1..=7", self.lane)));
        }
        for (name, value) in [
            ("position", self.position),
            ("velocity", self.velocity),
            ("acceleration", self.acceleration),
            ("headway", self.headway),
        ] {
            if !value.is_finite() {
                return Err(fail(format!("{name} is not finite")));
            }
        }
        if self.velocity < 0.0 {
            return Err(fail(format!("negative velocity {}", self.velocity)));
        }
        if self.headway < 0.0 {
            return Err(fail(format!("negative headway {}", self.headway)));
        }
        Ok(())
    }
}

/// A frame-contiguous run of one vehicle. Raw data has one track per vehicle;
/// lane filtering can split a vehicle into several numbered segments.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Track {
    pub vehicle_id: u32,
    pub segment: u32,
    range: Range<usize>,
}

impl Track {
    pub fn len(&self) -> usize {
        self.range.len()
    }

    pub fn is_empty(&self) -> bool {
        self.range.is_empty()
    }
}

/// Immutable, indexed collection of trajectory records.
///
/// Records are kept sorted by `(vehicle_id, frame)`. Each vehicle is made of
/// one or more [`Track`]s with strictly contiguous frames.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    records: Vec<TrajectoryRecord>,
    tracks: Vec<Track>,
    vehicle_tracks: BTreeMap<u32, Range<usize>>,
    // record indices per frame, ordered by (lane, position, vehicle_id)
    by_frame: BTreeMap<u32, Vec<usize>>,
    by_vehicle_frame: HashMap<(u32, u32), usize>,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records && self.tracks == other.tracks
    }
}

impl Dataset {
    /// Builds a dataset whose vehicles must each cover one contiguous frame run.
    pub fn from_records(records: Vec<TrajectoryRecord>) -> Result<Self> {
        Self::build(records, false)
    }

    /// Builds a dataset where frame gaps split a vehicle into segments instead
    /// of failing.
    pub fn from_segmented_records(records: Vec<TrajectoryRecord>) -> Result<Self> {
        Self::build(records, true)
    }

    fn build(mut records: Vec<TrajectoryRecord>, allow_gaps: bool) -> Result<Self> {
        for r in &records {
            r.validate()?;
        }
        records.sort_by_key(|r| (r.vehicle_id, r.frame));

        let mut tracks: Vec<Track> = Vec::new();
        let mut start = 0;
        let mut segment = 0;
        for i in 0..records.len() {
            let last_of_run = match records.get(i + 1) {
                None => true,
                Some(next) => {
                    let cur = &records[i];
                    if next.vehicle_id != cur.vehicle_id {
                        true
                    } else if next.frame == cur.frame {
                        return Err(Error::Integrity {
                            vehicle_id: next.vehicle_id,
                            frame: next.frame,
                            reason: "duplicate frame".into(),
                        });
                    } else if next.frame != cur.frame + 1 {
                        if !allow_gaps {
                            return Err(Error::Integrity {
                                vehicle_id: next.vehicle_id,
                                frame: next.frame,
                                reason: format!("frame gap after frame {}", cur.frame),
                            });
                        }
                        true
                    } else {
                        false
                    }
                }
            };
            if last_of_run {
                let vehicle_id = records[i].vehicle_id;
                if tracks.last().is_some_and(|t| t.vehicle_id == vehicle_id) {
                    segment += 1;
                } else {
                    segment = 0;
                }
                tracks.push(Track {
                    vehicle_id,
                    segment,
                    range: start..i + 1,
                });
                start = i + 1;
            }
        }

        let mut vehicle_tracks = BTreeMap::new();
        let mut t = 0;
        while t < tracks.len() {
            let id = tracks[t].vehicle_id;
            let mut end = t;
            while end < tracks.len() && tracks[end].vehicle_id == id {
                end += 1;
            }
            vehicle_tracks.insert(id, t..end);
            t = end;
        }

        let mut by_frame: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        let mut by_vehicle_frame = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            by_frame.entry(r.frame).or_default().push(i);
            by_vehicle_frame.insert((r.vehicle_id, r.frame), i);
        }
        for indices in by_frame.values_mut() {
            indices.sort_by(|&a, &b| {
                let (ra, rb) = (&records[a], &records[b]);
                ra.lane
                    .cmp(&rb.lane)
                    .then(ra.position.total_cmp(&rb.position))
                    .then(ra.vehicle_id.cmp(&rb.vehicle_id))
            });
        }

        Ok(Dataset {
            records,
            tracks,
            vehicle_tracks,
            by_frame,
            by_vehicle_frame,
        })
    }

    pub fn records(&self) -> &[TrajectoryRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn track_records(&self, track: &Track) -> &[TrajectoryRecord] {
        &self.records[track.range.clone()]
    }

    /// Sorted ids of all vehicles.
    pub fn vehicle_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.vehicle_tracks.keys().copied()
    }

    pub fn vehicle_count(&self) -> usize {
        self.vehicle_tracks.len()
    }

    pub fn contains_vehicle(&self, vehicle_id: u32) -> bool {
        self.vehicle_tracks.contains_key(&vehicle_id)
    }

    /// Tracks of one vehicle in frame order; empty for unknown vehicles.
    pub fn vehicle_tracks(&self, vehicle_id: u32) -> &[Track] {
        match self.vehicle_tracks.get(&vehicle_id) {
            Some(range) => &self.tracks[range.clone()],
            None => &[],
        }
    }

    /// All records of one vehicle in frame order (across segments).
    pub fn vehicle_records(&self, vehicle_id: u32) -> &[TrajectoryRecord] {
        let tracks = self.vehicle_tracks(vehicle_id);
        match (tracks.first(), tracks.last()) {
            (Some(first), Some(last)) => &self.records[first.range.start..last.range.end],
            _ => &[],
        }
    }

    /// The track of `vehicle_id` that covers `frame`.
    pub fn track_at(&self, vehicle_id: u32, frame: u32) -> Option<&Track> {
        let idx = *self.by_vehicle_frame.get(&(vehicle_id, frame))?;
        self.vehicle_tracks(vehicle_id)
            .iter()
            .find(|t| t.range.contains(&idx))
    }

    pub fn record_at(&self, vehicle_id: u32, frame: u32) -> Option<&TrajectoryRecord> {
        self.by_vehicle_frame
            .get(&(vehicle_id, frame))
            .map(|&i| &self.records[i])
    }

    /// Records at `frame`, ordered by lane, then position.
    pub fn frame_records(&self, frame: u32) -> impl Iterator<Item = &TrajectoryRecord> + '_ {
        self.by_frame
            .get(&frame)
            .into_iter()
            .flatten()
            .map(|&i| &self.records[i])
    }

    /// Sorted distinct frames.
    pub fn frames(&self) -> impl Iterator<Item = u32> + '_ {
        self.by_frame.keys().copied()
    }
}

/// All records at exactly `frame`, sorted by lane then position.
pub fn snapshot(ds: &Dataset, frame: u32) -> Vec<TrajectoryRecord> {
    ds.frame_records(frame).cloned().collect()
}

/// Drops the on-ramp and the lane with no room to change in `direction`.
///
/// Vehicles whose run is interrupted by a removed lane come back as several
/// segments.
pub fn preprocess(ds: &Dataset, direction: Direction) -> Dataset {
    let removed = direction.removed_lanes();
    let kept = ds
        .records
        .iter()
        .filter(|r| !removed.contains(&r.lane))
        .cloned()
        .collect();
    Dataset::from_segmented_records(kept).expect("subset of a valid dataset is valid")
}

/// Fields of a [`TrajectoryRecord`] as source columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Column {
    VehicleId,
    Frame,
    Lane,
    Position,
    Velocity,
    Acceleration,
    Headway,
    VehicleClass,
    Follower,
    Leader,
}

impl Column {
    pub const ALL: [Column; 10] = [
        Column::VehicleId,
        Column::Frame,
        Column::Lane,
        Column::Position,
        Column::Velocity,
        Column::Acceleration,
        Column::Headway,
        Column::VehicleClass,
        Column::Follower,
        Column::Leader,
    ];

    pub fn default_name(self) -> &'static str {
        match self {
            Column::VehicleId => "id",
            Column::Frame => "frame",
            Column::Lane => "lane",
            Column::Position => "pos",
            Column::Velocity => "v",
            Column::Acceleration => "a",
            Column::Headway => "d_h",
            Column::VehicleClass => "class",
            Column::Follower => "n_f",
            Column::Leader => "n_l",
        }
    }

    /// Parses a default column name, as used for remapping keys in configs.
    pub fn from_default_name(name: &str) -> Option<Column> {
        Column::ALL.into_iter().find(|c| c.default_name() == name)
    }
}

/// Header names and delimiter of a delimited trajectory file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schema {
    pub delimiter: u8,
    names: BTreeMap<Column, String>,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            delimiter: b',',
            names: Column::ALL
                .into_iter()
                .map(|c| (c, c.default_name().to_string()))
                .collect(),
        }
    }
}

impl Schema {
    pub fn with_delimiter(mut self, delimiter: u8) -> Self {
        self.delimiter = delimiter;
        self
    }

    pub fn with_column(mut self, column: Column, name: impl Into<String>) -> Self {
        self.names.insert(column, name.into());
        self
    }

    pub fn name(&self, column: Column) -> &str {
        &self.names[&column]
    }
}

/// Parses a delimited trajectory file. The header row is mandatory.
pub fn load_dataset<R: Read>(source: R, schema: &Schema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(source);

    let headers = reader.headers()?.clone();
    let mut positions = [0usize; 10];
    for (slot, column) in positions.iter_mut().zip(Column::ALL) {
        let name = schema.name(column);
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
    }

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let line = i + 1;
        let cell = |column: Column| -> (&str, Column) {
            (row.get(positions[column as usize]).unwrap_or(""), column)
        };
        let parse = |column: Column| -> Result<f64> { parse_cell(cell(column), line, schema) };
        let parse_int = |column: Column| -> Result<u64> { parse_cell(cell(column), line, schema) };
        let neighbor = |column: Column| -> Result<Option<u32>> {
            let (raw, _) = cell(column);
            if raw.is_empty() {
                return Ok(None);
            }
            let id: u32 = parse_cell(cell(column), line, schema)?;
            Ok((id != 0).then_some(id))
        };
        let narrow = |column: Column, value: u64| -> Result<u32> {
            u32::try_from(value).map_err(|_| Error::Parse {
                row: line,
                column: schema.name(column).to_string(),
                value: value.to_string(),
            })
        };
        let lane: u8 = parse_cell(cell(Column::Lane), line, schema)?;
        let vehicle_class: u8 = parse_cell(cell(Column::VehicleClass), line, schema)?;
        records.push(TrajectoryRecord {
            vehicle_id: narrow(Column::VehicleId, parse_int(Column::VehicleId)?)?,
            frame: narrow(Column::Frame, parse_int(Column::Frame)?)?,
            lane,
            position: parse(Column::Position)?,
            velocity: parse(Column::Velocity)?,
            acceleration: parse(Column::Acceleration)?,
            headway: parse(Column::Headway)?,
            vehicle_class,
            follower_id: neighbor(Column::Follower)?,
            leader_id: neighbor(Column::Leader)?,
        });
    }
    Dataset::from_records(records)
}

fn parse_cell<T: FromStr>((raw, column): (&str, Column), row: usize, schema: &Schema) -> Result<T> {
    raw.parse().map_err(|_| Error::Parse {
        row,
        column: schema.name(column).to_string(),
        value: raw.to_string(),
    })
}

/// Writes records in `(vehicle_id, frame)` order. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_dataset<W: Write>(ds: &Dataset, writer: W, schema: &Schema) -> Result<()> {
    write_records(ds.records(), writer, schema)
}

pub fn write_records<W: Write>(
    records: &[TrajectoryRecord],
    writer: W,
    schema: &Schema,
) -> Result<()> {
    let mut out = csv::WriterBuilder::new()
        .delimiter(schema.delimiter)
        .from_writer(writer);
    out.write_record(Column::ALL.iter().map(|&c| schema.name(c)))?;
    for r in records {
        out.write_record([
            r.vehicle_id.to_string(),
            r.frame.to_string(),
            r.lane.to_string(),
            r.position.to_string(),
            r.velocity.to_string(),
            r.acceleration.to_string(),
            r.headway.to_string(),
            r.vehicle_class.to_string(),
            r.follower_id.unwrap_or(0).to_string(),
            r.leader_id.unwrap_or(0).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "id,frame,lane,pos,v,a,d_h,class,n_f,n_l\n";

    fn rec(vehicle_id: u32, frame: u32, lane: u8, position: f64) -> TrajectoryRecord {
        TrajectoryRecord {
            vehicle_id,
            frame,
            lane,
            position,
            velocity: 10.0,
            acceleration: 0.0,
            headway: 0.0,
            vehicle_class: 2,
            follower_id: None,
            leader_id: None,
        }
    }

    #[test]
    fn parses_table_one_row() {
        let text = format!("{HEADER}4,244,5,71.26,7.40,0.005,4.08,2,27,21\n");
        let ds = load_dataset(text.as_bytes(), &Schema::default()).unwrap();
        assert_eq!(ds.len(), 1);
        let r = &ds.records()[0];
        assert_eq!(r.vehicle_id, 4);
        assert_eq!(r.frame, 244);
        assert_eq!(r.lane, 5);
        assert_eq!(r.position, 71.26);
        assert_eq!(r.velocity, 7.40);
        assert_eq!(r.acceleration, 0.005);
        assert_eq!(r.headway, 4.08);
        assert_eq!(r.vehicle_class, 2);
        assert_eq!(r.follower_id, Some(27));
        assert_eq!(r.leader_id, Some(21));
    }

    #[test]
    fn empty_body_gives_empty_dataset() {
        let ds = load_dataset(HEADER.as_bytes(), &Schema::default()).unwrap();
        assert!(ds.is_empty());
        assert_eq!(ds.vehicle_count(), 0);
    }

    #[test]
    fn zero_neighbor_means_absent() {
        let text = format!("{HEADER}4,244,5,71.26,7.40,0.005,4.08,2,0,0\n");
        let ds = load_dataset(text.as_bytes(), &Schema::default()).unwrap();
        assert_eq!(ds.records()[0].follower_id, None);
        assert_eq!(ds.records()[0].leader_id, None);
    }

    #[test]
    fn frame_gap_is_integrity_error() {
        let mut text = HEADER.to_string();
        for f in [1, 2, 3] {
            text.push_str(&format!("3,{f},4,{f}.0,10,0,5,2,0,0\n"));
        }
        for f in [10, 11, 13] {
            text.push_str(&format!("9,{f},4,{f}.0,10,0,5,2,0,0\n"));
        }
        let err = load_dataset(text.as_bytes(), &Schema::default()).unwrap_err();
        match err {
            Error::Integrity {
                vehicle_id, frame, ..
            } => assert_eq!((vehicle_id, frame), (9, 13)),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn missing_column_is_named() {
        let text = "id,frame,lane,pos,v,a,d_h,class,n_f\n";
        let err = load_dataset(text.as_bytes(), &Schema::default()).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(ref c) if c == "n_l"), "{err}");
    }

    #[test]
    fn bad_number_reports_row() {
        let text = format!("{HEADER}4,244,5,71.26,7.40,0.005,4.08,2,27,21\n4,245,5,abc,7.40,0,4,2,0,0\n");
        let err = load_dataset(text.as_bytes(), &Schema::default()).unwrap_err();
        match err {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "pos");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn remapped_schema_and_delimiter() {
        let schema = Schema::default()
            .with_delimiter(b';')
            .with_column(Column::VehicleId, "Vehicle_ID")
            .with_column(Column::Lane, "Lane_ID");
        let text = "Vehicle_ID;frame;Lane_ID;pos;v;a;d_h;class;n_f;n_l\n7;1;3;1.5;2;0;0;2;0;0\n";
        let ds = load_dataset(text.as_bytes(), &schema).unwrap();
        assert_eq!(ds.records()[0].vehicle_id, 7);
        assert_eq!(ds.records()[0].lane, 3);
    }

    #[test]
    fn invalid_lane_rejected() {
        let text = format!("{HEADER}4,244,8,71.26,7.40,0.005,4.08,2,27,21\n");
        assert!(matches!(
            load_dataset(text.as_bytes(), &Schema::default()),
            Err(Error::Integrity { .. })
        ));
    }

    #[test]
    fn preprocess_left_keeps_inner_lanes() {
        let ds = Dataset::from_records(vec![rec(1, 0, 1, 0.0), rec(2, 0, 3, 0.0), rec(3, 0, 7, 0.0)])
            .unwrap();
        let out = preprocess(&ds, Direction::Left);
        assert_eq!(out.len(), 1);
        assert_eq!(out.records()[0].lane, 3);
    }

    #[test]
    fn preprocess_all_on_ramp_is_empty() {
        let ds = Dataset::from_records((0..5).map(|f| rec(1, f, 7, f as f64)).collect()).unwrap();
        assert!(preprocess(&ds, Direction::Left).is_empty());
        assert!(preprocess(&ds, Direction::Right).is_empty());
    }

    #[test]
    fn preprocess_untouched_vehicle_is_identical() {
        let ds = Dataset::from_records((0..100).map(|f| rec(5, f, 2, f as f64)).collect()).unwrap();
        let out = preprocess(&ds, Direction::Left);
        assert_eq!(out, ds);
    }

    #[test]
    fn preprocess_splits_runs_into_segments() {
        let lanes = [2, 2, 1, 1, 2, 2, 2];
        let ds = Dataset::from_records(
            lanes
                .iter()
                .enumerate()
                .map(|(f, &l)| rec(8, f as u32, l, f as f64))
                .collect(),
        )
        .unwrap();
        let out = preprocess(&ds, Direction::Left);
        let tracks = out.vehicle_tracks(8);
        assert_eq!(tracks.len(), 2);
        assert_eq!((tracks[0].segment, tracks[0].len()), (0, 2));
        assert_eq!((tracks[1].segment, tracks[1].len()), (1, 3));
        assert_eq!(out.track_at(8, 5).unwrap().segment, 1);
        assert_eq!(out.vehicle_records(8).len(), 5);
    }

    #[test]
    fn snapshot_sorted_by_lane_then_position() {
        let ds = Dataset::from_records(vec![
            rec(1, 4, 3, 50.0),
            rec(2, 4, 2, 80.0),
            rec(3, 4, 3, 10.0),
            rec(4, 5, 3, 10.0),
        ])
        .unwrap();
        let ids: Vec<u32> = snapshot(&ds, 4).iter().map(|r| r.vehicle_id).collect();
        assert_eq!(ids, vec![2, 3, 1]);
        assert!(snapshot(&ds, 99).is_empty());
    }

    #[test]
    fn direction_targets() {
        assert_eq!(Direction::Left.target_lane(1), None);
        assert_eq!(Direction::Left.target_lane(5), Some(4));
        assert_eq!(Direction::Right.target_lane(7), None);
        assert_eq!("LEFT".parse::<Direction>().unwrap(), Direction::Left);
    }
}
