//! Seeded multi-lane car-following simulator with scripted lane changes.
//!
//! Vehicles start in evenly spaced platoons, one per lane. Each tick every
//! vehicle picks the smaller of a free-flow and a car-following acceleration,
//! clipped to `±MAX_ACCEL`. Desired speeds wander by an Ornstein-Uhlenbeck
//! process. Before each scripted change the ego drives the signature magnitude
//! slower than its leader, which opens its gaps ahead and shifts its relative
//! speeds. The lane id flips at the scripted frame.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Direction, TrajectoryRecord, FRAME_RATE, MAX_LANE};
use crate::error::{Error, Result};

const DT: f64 = 1.0 / FRAME_RATE as f64;
pub const MAX_ACCEL: f64 = 3.0;
pub const VEHICLE_LENGTH: f64 = 5.0;
const MIN_GAP: f64 = 2.0;
const TIME_HEADWAY: f64 = 1.2;
const K_GAP: f64 = 0.15;
const K_SPEED: f64 = 0.6;
const K_FREE: f64 = 0.5;
/// Followers want to go slightly faster than the platoon so they stay bunched.
const FOLLOWER_EAGERNESS: f64 = 3.0;
const NOISE_TIME_CONSTANT: f64 = 10.0;
const VEHICLE_CLASS: u8 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptedChange {
    pub vehicle: u32,
    /// First frame on the new lane.
    pub frame: u32,
    pub direction: Direction,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Signature {
    /// Speed deficit relative to the leader, m/s.
    pub magnitude: f64,
    /// Seconds before the change during which the drop applies.
    pub lead_s: f64,
}

impl Default for Signature {
    fn default() -> Self {
        Signature {
            magnitude: 3.0,
            lead_s: 5.0,
        }
    }
}

/// Scripts `count` changes on distinct mid-platoon vehicles at random frames.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutoScript {
    pub count: usize,
    pub direction: Direction,
    /// Changes are kept at least this many seconds from the start of the run.
    #[serde(default = "default_margin")]
    pub margin_s: f64,
}

fn default_margin() -> f64 {
    30.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub lanes: u8,
    pub vehicles_per_lane: u32,
    pub duration_s: f64,
    /// m/s
    pub nominal_speed: f64,
    /// Initial front-to-front distance within a lane, m.
    pub spacing: f64,
    /// Stationary standard deviation of the desired-speed noise, m/s.
    pub speed_noise: f64,
    pub signature: Signature,
    /// Simulated seconds discarded before frame 0, so that recording starts
    /// from settled traffic rather than the uniform initial platoons.
    pub warmup_s: f64,
    /// Minimum seconds between two scripted changes of one vehicle.
    pub min_separation_s: f64,
    pub changes: Vec<ScriptedChange>,
    pub auto: Option<AutoScript>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 1,
            lanes: 5,
            vehicles_per_lane: 20,
            duration_s: 300.0,
            nominal_speed: 15.0,
            spacing: VEHICLE_LENGTH + MIN_GAP + TIME_HEADWAY * 15.0,
            speed_noise: 0.8,
            signature: Signature::default(),
            warmup_s: 120.0,
            min_separation_s: 10.0,
            changes: Vec::new(),
            auto: None,
        }
    }
}

impl SynthConfig {
    pub fn frame_count(&self) -> u32 {
        (self.duration_s * f64::from(FRAME_RATE)).round() as u32
    }

    pub fn vehicle_count(&self) -> u32 {
        u32::from(self.lanes) * self.vehicles_per_lane
    }

    /// Vehicle ids are lane-major: lane `l`, platoon slot `k` (0 = front)
    /// gets `(l - 1) * vehicles_per_lane + k + 1`.
    pub fn vehicle_id(&self, lane: u8, slot: u32) -> u32 {
        u32::from(lane - 1) * self.vehicles_per_lane + slot + 1
    }

    pub fn initial_lane(&self, vehicle: u32) -> u8 {
        ((vehicle - 1) / self.vehicles_per_lane) as u8 + 1
    }

    fn validate_scalars(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(1..=MAX_LANE).contains(&self.lanes) {
            return bad(format!("lane count must be in 1..={MAX_LANE}, got {}", self.lanes));
        }
        if self.vehicles_per_lane == 0 {
            return bad("vehicles_per_lane must be positive".into());
        }
        for (name, v) in [
            ("duration_s", self.duration_s),
            ("nominal_speed", self.nominal_speed),
            ("spacing", self.spacing),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("speed_noise", self.speed_noise),
            ("signature.magnitude", self.signature.magnitude),
            ("signature.lead_s", self.signature.lead_s),
            ("min_separation_s", self.min_separation_s),
            ("warmup_s", self.warmup_s),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        Ok(())
    }

    /// Explicit script plus any auto-scripted changes, sorted by frame then
    /// vehicle, after checking every invariant.
    pub fn resolved_script(&self) -> Result<Vec<ScriptedChange>> {
        self.validate_scalars()?;
        let mut script = self.changes.clone();
        if let Some(auto) = self.auto {
            script.extend(self.auto_script(&auto)?);
        }
        script.sort_by_key(|c| (c.frame, c.vehicle));

        let frames = self.frame_count();
        let separation = (self.min_separation_s * f64::from(FRAME_RATE)).round() as u32;
        let mut state: BTreeMap<u32, (u8, Option<u32>)> = BTreeMap::new();
        for c in &script {
            if c.vehicle == 0 || c.vehicle > self.vehicle_count() {
                return Err(Error::Config(format!("scripted vehicle {} does not exist", c.vehicle)));
            }
            if c.frame == 0 || c.frame >= frames {
                return Err(Error::Config(format!(
                    "scripted change of vehicle {} at frame {} outside 1..{frames}",
                    c.vehicle, c.frame
                )));
            }
            let (lane, last) = state
                .entry(c.vehicle)
                .or_insert((self.initial_lane(c.vehicle), None));
            if let Some(prev) = *last {
                if c.frame - prev < separation {
                    return Err(Error::Config(format!(
                        "vehicle {} scripted to change at frames {prev} and {} (closer than {}s)",
                        c.vehicle, c.frame, self.min_separation_s
                    )));
                }
            }
            let target = c
                .direction
                .target_lane(*lane)
                .filter(|&t| t <= self.lanes)
                .ok_or_else(|| {
                    Error::Config(format!(
                        "vehicle {} cannot change {} from lane {}",
                        c.vehicle, c.direction, lane
                    ))
                })?;
            *lane = target;
            *last = Some(c.frame);
        }
        Ok(script)
    }

    fn auto_script(&self, auto: &AutoScript) -> Result<Vec<ScriptedChange>> {
        let removed = auto.direction.removed_lanes();
        let mut candidates = Vec::new();
        for lane in 1..=self.lanes {
            let Some(target) = auto.direction.target_lane(lane) else {
                continue;
            };
            if target > self.lanes || removed.contains(&lane) || removed.contains(&target) {
                continue;
            }
            // Skip platoon ends so both target-lane neighbors tend to exist.
            for slot in 2..self.vehicles_per_lane.saturating_sub(2) {
                candidates.push(self.vehicle_id(lane, slot));
            }
        }
        if auto.count > candidates.len() {
            return Err(Error::Config(format!(
                "cannot auto-script {} {} changes: only {} eligible vehicles",
                auto.count,
                auto.direction,
                candidates.len()
            )));
        }
        let lo = (auto.margin_s * f64::from(FRAME_RATE)).round() as u32;
        let hi = self.frame_count().saturating_sub(5 * FRAME_RATE);
        if lo == 0 || lo >= hi {
            return Err(Error::Config(format!(
                "duration {}s leaves no room for changes after a {}s margin",
                self.duration_s, auto.margin_s
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1);
        candidates.shuffle(&mut rng);
        Ok(candidates
            .into_iter()
            .take(auto.count)
            .map(|vehicle| ScriptedChange {
                vehicle,
                frame: rng.random_range(lo..hi),
                direction: auto.direction,
            })
            .collect())
    }
}

struct Vehicle {
    id: u32,
    lane: u8,
    position: f64,
    velocity: f64,
    acceleration: f64,
    noise: f64,
    front: bool,
}

/// Runs the simulation. Identical configurations give identical datasets.
pub fn generate(cfg: &SynthConfig) -> Result<Dataset> {
    let script = cfg.resolved_script()?;
    let frames = cfg.frame_count();
    let warmup = (cfg.warmup_s * f64::from(FRAME_RATE)).round() as u32;
    let lead = (cfg.signature.lead_s * f64::from(FRAME_RATE)).round() as u32;

    // Keyed by simulation step; recorded frame 0 is step `warmup`.
    let mut flips: BTreeMap<u32, Vec<&ScriptedChange>> = BTreeMap::new();
    let mut slowdowns: BTreeMap<u32, Vec<(u32, u32)>> = BTreeMap::new();
    for c in &script {
        let step = warmup + c.frame;
        flips.entry(step).or_default().push(c);
        slowdowns
            .entry(c.vehicle)
            .or_default()
            .push((step.saturating_sub(lead), step));
    }

    let mut vehicles = Vec::with_capacity(cfg.vehicle_count() as usize);
    for lane in 1..=cfg.lanes {
        let offset = cfg.spacing * f64::from(lane - 1) / f64::from(cfg.lanes);
        for slot in 0..cfg.vehicles_per_lane {
            vehicles.push(Vehicle {
                id: cfg.vehicle_id(lane, slot),
                lane,
                position: offset + cfg.spacing * f64::from(cfg.vehicles_per_lane - 1 - slot),
                velocity: cfg.nominal_speed,
                acceleration: 0.0,
                noise: 0.0,
                front: slot == 0,
            });
        }
    }
    let index: BTreeMap<u32, usize> = vehicles.iter().enumerate().map(|(i, v)| (v.id, i)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let decay = (-DT / NOISE_TIME_CONSTANT).exp();
    let kick = cfg.speed_noise * (1.0 - decay * decay).sqrt();

    let mut records = Vec::with_capacity(vehicles.len() * frames as usize);
    let mut order: Vec<usize> = (0..vehicles.len()).collect();
    let mut leader_of: Vec<Option<usize>> = vec![None; vehicles.len()];
    for step in 0..warmup + frames {
        for c in flips.get(&step).into_iter().flatten() {
            let v = &mut vehicles[index[&c.vehicle]];
            // validated in resolved_script
            v.lane = c.direction.target_lane(v.lane).expect("validated target lane");
        }

        order.sort_by(|&a, &b| {
            let (va, vb) = (&vehicles[a], &vehicles[b]);
            va.lane
                .cmp(&vb.lane)
                .then(va.position.total_cmp(&vb.position))
                .then(va.id.cmp(&vb.id))
        });
        leader_of.iter_mut().for_each(|l| *l = None);
        for (k, &i) in order.iter().enumerate() {
            let v = &vehicles[i];
            let leader = order.get(k + 1).filter(|&&j| vehicles[j].lane == v.lane).copied();
            let follower = k
                .checked_sub(1)
                .map(|p| order[p])
                .filter(|&j| vehicles[j].lane == v.lane);
            leader_of[i] = leader;
            let Some(frame) = step.checked_sub(warmup) else {
                continue;
            };
            records.push(TrajectoryRecord {
                vehicle_id: v.id,
                frame,
                lane: v.lane,
                position: v.position,
                velocity: v.velocity,
                acceleration: v.acceleration,
                headway: leader.map_or(0.0, |j| (vehicles[j].position - v.position).max(0.0)),
                vehicle_class: VEHICLE_CLASS,
                follower_id: follower.map(|j| vehicles[j].id),
                leader_id: leader.map(|j| vehicles[j].id),
            });
        }

        let accels: Vec<f64> = (0..vehicles.len())
            .map(|i| {
                let v = &vehicles[i];
                let mut desired = cfg.nominal_speed + v.noise;
                if !v.front {
                    desired += FOLLOWER_EAGERNESS;
                }
                let mut a = K_FREE * (desired.max(0.0) - v.velocity);
                let leader = leader_of[i].map(|j| &vehicles[j]);
                if let Some(l) = leader {
                    let gap = l.position - v.position - VEHICLE_LENGTH;
                    let wanted = MIN_GAP + TIME_HEADWAY * v.velocity;
                    a = a.min(K_GAP * (gap - wanted) + K_SPEED * (l.velocity - v.velocity));
                }
                let slowed = slowdowns
                    .get(&v.id)
                    .is_some_and(|w| w.iter().any(|&(s, e)| (s..e).contains(&step)));
                if slowed {
                    // Fall back from the current leader, or from the desired
                    // speed when driving freely.
                    let reference = leader.map_or(desired, |l| l.velocity);
                    let target = (reference - cfg.signature.magnitude).max(0.0);
                    a = a.min(K_FREE * (target - v.velocity));
                }
                a.clamp(-MAX_ACCEL, MAX_ACCEL)
            })
            .collect();
        for (v, a) in vehicles.iter_mut().zip(accels) {
            let velocity = (v.velocity + a * DT).max(0.0);
            v.acceleration = (velocity - v.velocity) / DT;
            v.velocity = velocity;
            v.position += velocity * DT;
            let z: f64 = rng.sample(StandardNormal);
            v.noise = decay * v.noise + kick * z;
        }
    }
    Dataset::from_records(records)
}
