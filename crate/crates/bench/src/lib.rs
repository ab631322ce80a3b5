//! Fixtures shared by the benchmarks.

use lanechange::learners::Initializer;
use lanechange::scenario::detect_lane_changes;
use lanechange::synth::{generate, AutoScript};
use lanechange::{preprocess, Dataset, Direction, LaneChangeEvent, SynthConfig};

/// Preprocessed synthetic scene with `changes` scripted left changes.
pub fn scene(vehicles_per_lane: u32, changes: usize) -> (Dataset, Vec<LaneChangeEvent>) {
    let cfg = SynthConfig {
        vehicles_per_lane,
        auto: Some(AutoScript {
            count: changes,
            direction: Direction::Left,
            margin_s: 30.0,
        }),
        ..SynthConfig::default()
    };
    let raw = generate(&cfg).expect("valid synth config");
    let events = detect_lane_changes(&raw).expect("consistent tracks");
    (preprocess(&raw, Direction::Left), events)
}

/// Pseudo-random 0/1 series.
pub fn binary_series(len: usize, seed: u64) -> Vec<u8> {
    let mut init = Initializer::new(seed, 1.0);
    (0..len).map(|_| u8::from(init.next() > 0.3)).collect()
}

/// Rows of uniform draws in `[-1, 1]`.
pub fn rows(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut init = Initializer::new(seed, 1.0);
    (0..n).map(|_| init.fill(dim)).collect()
}
