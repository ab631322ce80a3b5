//! Surrounding-vehicle lookup, the eight driving scenarios and lane-change
//! detection.
//!
//! Around the ego vehicle (vehicle 0) three slots are considered: the nearest
//! same-lane leader (vehicle 1) and the nearest leader and follower on the
//! target lane (vehicles 2 and 3). Their presence pattern picks one of eight
//! scenarios, `a` (all present) through `h` (none present).

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use crate::data::{Dataset, Direction, TrajectoryRecord};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
}

impl Scenario {
    pub const ALL: [Scenario; 8] = [
        Scenario::A,
        Scenario::B,
        Scenario::C,
        Scenario::D,
        Scenario::E,
        Scenario::F,
        Scenario::G,
        Scenario::H,
    ];

    pub fn code(self) -> char {
        match self {
            Scenario::A => 'a',
            Scenario::B => 'b',
            Scenario::C => 'c',
            Scenario::D => 'd',
            Scenario::E => 'e',
            Scenario::F => 'f',
            Scenario::G => 'g',
            Scenario::H => 'h',
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

/// Maps presence of (same-lane leader, target-lane leader, target-lane
/// follower) to a scenario.
pub fn classify_scenario(leader: bool, target_leader: bool, target_follower: bool) -> Scenario {
    match (leader, target_leader, target_follower) {
        (true, true, true) => Scenario::A,
        (true, true, false) => Scenario::B,
        (true, false, true) => Scenario::C,
        (false, true, true) => Scenario::D,
        (true, false, false) => Scenario::E,
        (false, true, false) => Scenario::F,
        (false, false, true) => Scenario::G,
        (false, false, false) => Scenario::H,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeighborContext {
    pub ego: TrajectoryRecord,
    /// Nearest vehicle ahead on the ego lane.
    pub leader: Option<TrajectoryRecord>,
    /// Nearest vehicle on the target lane at or ahead of the ego position.
    pub target_leader: Option<TrajectoryRecord>,
    /// Nearest vehicle on the target lane behind the ego position.
    pub target_follower: Option<TrajectoryRecord>,
    pub scenario: Scenario,
}

impl NeighborContext {
    pub fn ego_id(&self) -> u32 {
        self.ego.vehicle_id
    }

    pub fn frame(&self) -> u32 {
        self.ego.frame
    }
}

/// Neighbors for a left lane change.
pub fn find_neighbors(ds: &Dataset, ego_id: u32, frame: u32) -> Result<NeighborContext> {
    find_neighbors_toward(ds, ego_id, frame, Direction::Left)
}

pub fn find_neighbors_toward(
    ds: &Dataset,
    ego_id: u32,
    frame: u32,
    direction: Direction,
) -> Result<NeighborContext> {
    let ego = ds.record_at(ego_id, frame).ok_or(Error::NotPresent {
        vehicle_id: ego_id,
        frame,
    })?;
    let target = direction.target_lane(ego.lane);

    let mut leader: Option<&TrajectoryRecord> = None;
    let mut target_leader: Option<&TrajectoryRecord> = None;
    let mut target_follower: Option<&TrajectoryRecord> = None;
    // frame_records is ordered by (lane, position, id), so the first hit
    // ahead is the nearest and later hits behind are nearer.
    for other in ds.frame_records(frame) {
        if other.vehicle_id == ego.vehicle_id {
            continue;
        }
        if other.lane == ego.lane {
            if other.position > ego.position && leader.is_none() {
                leader = Some(other);
            }
        } else if Some(other.lane) == target {
            if other.position >= ego.position {
                if target_leader.is_none() {
                    target_leader = Some(other);
                }
            } else if target_follower.is_none_or(|f| other.position > f.position) {
                target_follower = Some(other);
            }
        }
    }

    Ok(NeighborContext {
        ego: ego.clone(),
        scenario: classify_scenario(
            leader.is_some(),
            target_leader.is_some(),
            target_follower.is_some(),
        ),
        leader: leader.cloned(),
        target_leader: target_leader.cloned(),
        target_follower: target_follower.cloned(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LaneChangeEvent {
    pub vehicle_id: u32,
    /// First frame on the new lane.
    pub t_lc: u32,
    pub from_lane: u8,
    pub to_lane: u8,
    pub direction: Direction,
}

impl LaneChangeEvent {
    /// Whether both lanes survive [`crate::data::preprocess`] for `direction`
    /// and the change goes that way.
    pub fn belongs_to_task(&self, direction: Direction) -> bool {
        let removed = direction.removed_lanes();
        self.direction == direction
            && !removed.contains(&self.from_lane)
            && !removed.contains(&self.to_lane)
    }
}

/// One event per ±1 lane transition between consecutive frames, sorted by
/// `(vehicle_id, t_lc)`.
pub fn detect_lane_changes(ds: &Dataset) -> Result<Vec<LaneChangeEvent>> {
    let mut events = Vec::new();
    for track in ds.tracks() {
        for pair in ds.track_records(track).windows(2) {
            let (prev, cur) = (&pair[0], &pair[1]);
            if prev.lane == cur.lane {
                continue;
            }
            let direction = match i16::from(cur.lane) - i16::from(prev.lane) {
                -1 => Direction::Left,
                1 => Direction::Right,
                jump => {
                    return Err(Error::Integrity {
                        vehicle_id: cur.vehicle_id,
                        frame: cur.frame,
                        reason: format!(
                            "lane jump of {} from lane {} to {}",
                            jump.abs(),
                            prev.lane,
                            cur.lane
                        ),
                    })
                }
            };
            events.push(LaneChangeEvent {
                vehicle_id: cur.vehicle_id,
                t_lc: cur.frame,
                from_lane: prev.lane,
                to_lane: cur.lane,
                direction,
            });
        }
    }
    // tracks are already in (vehicle, frame) order
    Ok(events)
}

/// Events of the given task direction whose lanes both survive preprocessing.
pub fn task_events(events: &[LaneChangeEvent], direction: Direction) -> Vec<LaneChangeEvent> {
    events
        .iter()
        .filter(|e| e.belongs_to_task(direction))
        .copied()
        .collect()
}

pub fn write_events<W: Write>(events: &[LaneChangeEvent], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["vehicle_id", "t_lc", "from_lane", "to_lane", "direction"])?;
    for e in events {
        out.write_record([
            e.vehicle_id.to_string(),
            e.t_lc.to_string(),
            e.from_lane.to_string(),
            e.to_lane.to_string(),
            e.direction.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Scenario frequencies over two populations: every record, and the ego's
/// last frame on the old lane for each event.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ScenarioCensus {
    pub per_frame: BTreeMap<Scenario, usize>,
    pub per_event: BTreeMap<Scenario, usize>,
}

impl ScenarioCensus {
    pub fn share(counts: &BTreeMap<Scenario, usize>, scenario: Scenario) -> Option<f64> {
        let total: usize = counts.values().sum();
        (total > 0).then(|| counts.get(&scenario).copied().unwrap_or(0) as f64 / total as f64)
    }

    pub fn write<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["population", "scenario", "count", "share"])?;
        for (population, counts) in [("frame", &self.per_frame), ("event", &self.per_event)] {
            for s in Scenario::ALL {
                let share = Self::share(counts, s)
                    .map(|v| v.to_string())
                    .unwrap_or_else(|| "NA".into());
                out.write_record([
                    population.to_string(),
                    s.to_string(),
                    counts.get(&s).copied().unwrap_or(0).to_string(),
                    share,
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

pub fn scenario_census(
    ds: &Dataset,
    events: &[LaneChangeEvent],
    direction: Direction,
) -> ScenarioCensus {
    let mut census = ScenarioCensus::default();
    for r in ds.records() {
        if let Ok(ctx) = find_neighbors_toward(ds, r.vehicle_id, r.frame, direction) {
            *census.per_frame.entry(ctx.scenario).or_default() += 1;
        }
    }
    for e in events.iter().filter(|e| e.direction == direction) {
        let Some(frame) = e.t_lc.checked_sub(1) else {
            continue;
        };
        if let Ok(ctx) = find_neighbors_toward(ds, e.vehicle_id, frame, direction) {
            *census.per_event.entry(ctx.scenario).or_default() += 1;
        }
    }
    census
}

#[cfg(test)]
mod tests {
    use super::*;

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
    fn classify_all_patterns() {
        let cases = [
            ((true, true, true), 'a'),
            ((true, true, false), 'b'),
            ((true, false, true), 'c'),
            ((false, true, true), 'd'),
            ((true, false, false), 'e'),
            ((false, true, false), 'f'),
            ((false, false, true), 'g'),
            ((false, false, false), 'h'),
        ];
        for ((a, b, c), code) in cases {
            assert_eq!(classify_scenario(a, b, c).code(), code);
        }
    }

    #[test]
    fn full_neighborhood_is_scenario_a() {
        let ds = Dataset::from_records(vec![
            rec(1, 0, 5, 100.0),
            rec(2, 0, 5, 120.0),
            rec(3, 0, 4, 130.0),
            rec(4, 0, 4, 90.0),
            // farther vehicles must not win
            rec(5, 0, 5, 150.0),
            rec(6, 0, 4, 60.0),
            rec(7, 0, 4, 170.0),
            rec(8, 0, 5, 50.0),
        ])
        .unwrap();
        let ctx = find_neighbors(&ds, 1, 0).unwrap();
        assert_eq!(ctx.leader.unwrap().vehicle_id, 2);
        assert_eq!(ctx.target_leader.unwrap().vehicle_id, 3);
        assert_eq!(ctx.target_follower.unwrap().vehicle_id, 4);
        assert_eq!(ctx.scenario, Scenario::A);
    }

    #[test]
    fn alone_is_scenario_h() {
        let ds = Dataset::from_records(vec![rec(1, 0, 5, 100.0)]).unwrap();
        let ctx = find_neighbors(&ds, 1, 0).unwrap();
        assert_eq!(ctx.scenario, Scenario::H);
        assert!(ctx.leader.is_none() && ctx.target_leader.is_none() && ctx.target_follower.is_none());
    }

    #[test]
    fn only_target_leader_is_scenario_f() {
        let ds = Dataset::from_records(vec![rec(1, 0, 5, 100.0), rec(2, 0, 4, 101.0)]).unwrap();
        assert_eq!(find_neighbors(&ds, 1, 0).unwrap().scenario, Scenario::F);
    }

    #[test]
    fn tie_on_target_lane_is_leader() {
        let ds = Dataset::from_records(vec![rec(1, 0, 5, 100.0), rec(2, 0, 4, 100.0)]).unwrap();
        let ctx = find_neighbors(&ds, 1, 0).unwrap();
        assert_eq!(ctx.target_leader.unwrap().vehicle_id, 2);
        assert!(ctx.target_follower.is_none());
    }

    #[test]
    fn absent_ego_is_lookup_error() {
        let ds = Dataset::from_records(vec![rec(1, 0, 5, 100.0)]).unwrap();
        assert!(matches!(
            find_neighbors(&ds, 1, 3),
            Err(Error::NotPresent { vehicle_id: 1, frame: 3 })
        ));
    }

    #[test]
    fn right_neighbors_use_higher_lane() {
        let ds = Dataset::from_records(vec![
            rec(1, 0, 3, 100.0),
            rec(2, 0, 4, 110.0),
            rec(3, 0, 2, 110.0),
        ])
        .unwrap();
        let ctx = find_neighbors_toward(&ds, 1, 0, Direction::Right).unwrap();
        assert_eq!(ctx.target_leader.unwrap().vehicle_id, 2);
    }

    #[test]
    fn detects_single_left_change() {
        let lanes = [5, 5, 5, 4, 4];
        let ds = Dataset::from_records(
            lanes
                .iter()
                .enumerate()
                .map(|(i, &l)| rec(1, 96 + i as u32, l, i as f64))
                .collect(),
        )
        .unwrap();
        let events = detect_lane_changes(&ds).unwrap();
        assert_eq!(
            events,
            vec![LaneChangeEvent {
                vehicle_id: 1,
                t_lc: 99,
                from_lane: 5,
                to_lane: 4,
                direction: Direction::Left,
            }]
        );
    }

    #[test]
    fn constant_lane_has_no_events() {
        let ds = Dataset::from_records((0..20).map(|f| rec(1, f, 3, f as f64)).collect()).unwrap();
        assert!(detect_lane_changes(&ds).unwrap().is_empty());
    }

    #[test]
    fn two_lane_jump_is_rejected() {
        let ds = Dataset::from_records(vec![rec(1, 0, 5, 0.0), rec(1, 1, 3, 1.0)]).unwrap();
        assert!(matches!(
            detect_lane_changes(&ds),
            Err(Error::Integrity { vehicle_id: 1, frame: 1, .. })
        ));
    }

    #[test]
    fn task_filter_drops_removed_lanes() {
        let mk = |from, to, direction| LaneChangeEvent {
            vehicle_id: 1,
            t_lc: 10,
            from_lane: from,
            to_lane: to,
            direction,
        };
        let events = [
            mk(3, 2, Direction::Left),
            mk(2, 1, Direction::Left),
            mk(7, 6, Direction::Left),
            mk(3, 4, Direction::Right),
        ];
        assert_eq!(task_events(&events, Direction::Left), vec![events[0]]);
        assert_eq!(task_events(&events, Direction::Right), vec![events[3]]);
    }
}
