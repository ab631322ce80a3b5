use std::collections::BTreeSet;

use lanechange::data::{load_dataset, preprocess, snapshot, write_dataset, Dataset, Direction, Schema, TrajectoryRecord};
use lanechange::evaluation::{confusion, kfold_cv, metrics, CvConfig};
use lanechange::labeling::{label_events, window_frames, FeatureVector, LabeledSample, LabelingOptions, LabelingScheme};
use lanechange::learners::{
    logreg_proba, mlp_fit, predict_label, LogRegParams, Matrix, Model, ModelKind, ModelSpec, TrainConfig,
};
use lanechange::runtime::{
    advanced_time, aggressive, conservative, runtime_report, strict_correct, PredictionSeries, Provenance,
};
use lanechange::scenario::{classify_scenario, detect_lane_changes, find_neighbors_toward, LaneChangeEvent};
use proptest::prelude::*;

/// Vehicles with contiguous frames and a lane that moves at most one lane per
/// frame.
fn arb_dataset() -> impl Strategy<Value = Dataset> {
    let vehicle = (0u32..20, 1usize..40, 1u8..=7, -50.0f64..50.0, prop::collection::vec((-1i8..=1, 0.0f64..3.0, 0u8..6), 40));
    prop::collection::vec(vehicle, 1..7).prop_map(|vehicles| {
        let mut records = Vec::new();
        for (i, (start, len, lane0, pos0, steps)) in vehicles.into_iter().enumerate() {
            let mut lane = lane0;
            let mut pos = pos0;
            for (k, (dl, dx, stay)) in steps.into_iter().take(len).enumerate() {
                if k > 0 && stay == 0 {
                    lane = (lane as i8 + dl).clamp(1, 7) as u8;
                }
                pos += dx;
                records.push(TrajectoryRecord {
                    vehicle_id: i as u32 + 1,
                    frame: start + k as u32,
                    lane,
                    position: pos,
                    velocity: dx * 10.0,
                    acceleration: 0.0,
                    headway: 0.0,
                    vehicle_class: 2,
                    follower_id: None,
                    leader_id: None,
                });
            }
        }
        Dataset::from_records(records).unwrap()
    })
}

fn series() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..=1, 0..=100)
}

/// Forward propagation as written: each positive is copied onto the next `tau_a`
/// slots that exist.
fn aggressive_naive(lc: &[u8], tau_a: usize) -> Vec<u8> {
    let t_max = lc.len();
    let mut out = vec![0; t_max];
    for t in 0..t_max {
        if lc[t] == 1 {
            for tau in 0..=tau_a {
                if t + tau < t_max {
                    out[t + tau] = 1;
                }
            }
        }
    }
    out
}

/// Trailing-average rule with 0-based slots.
fn conservative_naive(lc: &[u8], tau_c: usize, thres: f64) -> Vec<u8> {
    let mut out = vec![0; lc.len()];
    for t in tau_c..lc.len() {
        let mut s = 0.0;
        for tau in 0..=tau_c {
            s += f64::from(lc[t - tau]);
        }
        let avg = s / (tau_c + 1) as f64;
        if avg > thres {
            out[t] = 1;
        }
    }
    out
}

fn event(vehicle_id: u32, t_lc: u32) -> LaneChangeEvent {
    LaneChangeEvent {
        vehicle_id,
        t_lc,
        from_lane: 4,
        to_lane: 3,
        direction: Direction::Left,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn serialization_round_trips(ds in arb_dataset()) {
        let mut text = Vec::new();
        write_dataset(&ds, &mut text, &Schema::default()).unwrap();
        let back = load_dataset(text.as_slice(), &Schema::default()).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn preprocess_is_idempotent(ds in arb_dataset(), right in any::<bool>()) {
        let dir = if right { Direction::Right } else { Direction::Left };
        let once = preprocess(&ds, dir);
        prop_assert_eq!(preprocess(&once, dir), once.clone());
        prop_assert!(once.records().iter().all(|r| !dir.removed_lanes().contains(&r.lane)));
    }

    #[test]
    fn snapshot_matches_scan(ds in arb_dataset(), frame in 0u32..60) {
        let mut got = snapshot(&ds, frame);
        let mut want: Vec<_> = ds.records().iter().filter(|r| r.frame == frame).cloned().collect();
        let key = |r: &TrajectoryRecord| (r.vehicle_id, r.frame);
        got.sort_by_key(key);
        want.sort_by_key(key);
        prop_assert_eq!(got, want);
    }

    #[test]
    fn neighbors_match_exhaustive_scan(ds in arb_dataset(), right in any::<bool>()) {
        let dir = if right { Direction::Right } else { Direction::Left };
        for ego in ds.records() {
            let ctx = find_neighbors_toward(&ds, ego.vehicle_id, ego.frame, dir).unwrap();
            let others: Vec<_> = snapshot(&ds, ego.frame)
                .into_iter()
                .filter(|r| r.vehicle_id != ego.vehicle_id)
                .collect();
            let target = dir.target_lane(ego.lane);
            let leader = others
                .iter()
                .filter(|r| r.lane == ego.lane && r.position > ego.position)
                .min_by(|a, b| a.position.total_cmp(&b.position).then(a.vehicle_id.cmp(&b.vehicle_id)));
            let target_leader = others
                .iter()
                .filter(|r| Some(r.lane) == target && r.position >= ego.position)
                .min_by(|a, b| a.position.total_cmp(&b.position).then(a.vehicle_id.cmp(&b.vehicle_id)));
            let target_follower = others
                .iter()
                .filter(|r| Some(r.lane) == target && r.position < ego.position)
                .max_by(|a, b| a.position.total_cmp(&b.position).then(b.vehicle_id.cmp(&a.vehicle_id)));
            let id = |r: Option<&TrajectoryRecord>| r.map(|r| r.vehicle_id);
            prop_assert_eq!(id(ctx.leader.as_ref()), id(leader));
            prop_assert_eq!(id(ctx.target_leader.as_ref()), id(target_leader));
            prop_assert_eq!(id(ctx.target_follower.as_ref()), id(target_follower));
            prop_assert_eq!(
                ctx.scenario,
                classify_scenario(leader.is_some(), target_leader.is_some(), target_follower.is_some())
            );
        }
    }

    #[test]
    fn detection_ignores_record_order(ds in arb_dataset(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = ds.records().to_vec();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let reordered = Dataset::from_records(shuffled).unwrap();
        let events = detect_lane_changes(&ds).unwrap();
        prop_assert_eq!(detect_lane_changes(&reordered).unwrap(), events.clone());
        for e in &events {
            prop_assert_eq!(ds.record_at(e.vehicle_id, e.t_lc - 1).unwrap().lane, e.from_lane);
            prop_assert_eq!(ds.record_at(e.vehicle_id, e.t_lc).unwrap().lane, e.to_lane);
        }
    }

    #[test]
    fn windows_are_balanced_disjoint_and_gapped(t_lc in 0u32..100_000, tau in 1u32..12, tau_g in 0u32..20) {
        let scheme = LabelingScheme::new(tau, tau_g).unwrap();
        let w = window_frames(&event(1, t_lc), scheme, 10);
        prop_assert_eq!(w.positive.len(), w.negative.len());
        prop_assert_eq!(w.positive.len(), 10 * tau as usize);
        prop_assert_eq!(w.positive.start - w.negative.end - 1, 10 * i64::from(tau_g));
        prop_assert_eq!(w.positive.end, i64::from(t_lc));
    }

    #[test]
    fn labeling_never_looks_past_the_change(ds in arb_dataset(), tau in 1u32..3, tau_g in 0u32..2) {
        let events = detect_lane_changes(&ds).unwrap();
        let scheme = LabelingScheme::new(tau, tau_g).unwrap();
        let options = LabelingOptions::default();
        let out = label_events(&ds, &events, scheme, &options).unwrap();
        for s in &out.samples {
            prop_assert!(s.frame <= s.event.unwrap().t_lc);
        }
        prop_assert_eq!(label_events(&ds, &events, scheme, &options).unwrap(), out);
    }

    #[test]
    fn probabilities_are_normalized(
        beta in prop::collection::vec(-30.0f64..30.0, 12),
        x in prop::collection::vec(-5.0f64..5.0, 3),
    ) {
        let p = LogRegParams { beta: Matrix::from_vec(3, 4, beta) };
        let probs = logreg_proba(&p, &x);
        prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(probs.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn threshold_monotonicity(
        w in prop::collection::vec(-3.0f64..3.0, 4),
        x in prop::collection::vec(-3.0f64..3.0, 3),
        a in 0.0f64..1.0,
        b in 0.0f64..1.0,
    ) {
        let model = Model::LogReg(LogRegParams { beta: Matrix::from_vec(1, 4, w) });
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let input = [x];
        prop_assert!(predict_label(&model, &input, lo).unwrap() >= predict_label(&model, &input, hi).unwrap());
    }

    #[test]
    fn accuracy_and_f1_identities(pairs in prop::collection::vec((0u8..=1, 0u8..=1), 1..200)) {
        let (p, l): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
        let m = metrics(&confusion(&p, &l).unwrap());
        let matches = p.iter().zip(&l).filter(|(a, b)| a == b).count();
        prop_assert_eq!(m.accuracy, Some(matches as f64 / p.len() as f64));
        if let (Some(f1), Some(pr), Some(tpr)) = (m.f1, m.precision, m.tpr) {
            if pr > 0.0 && tpr > 0.0 {
                prop_assert!((f1 - 2.0 / (1.0 / pr + 1.0 / tpr)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn smoothers_match_transliterations(lc in series(), tau in 0usize..=10, thres in prop::sample::select(vec![0.3, 0.5, 0.7])) {
        prop_assert_eq!(aggressive(&lc, tau), aggressive_naive(&lc, tau));
        prop_assert_eq!(conservative(&lc, tau, thres), conservative_naive(&lc, tau, thres));
    }

    #[test]
    fn aggressive_keeps_every_positive(lc in series(), tau in 0usize..=10) {
        let out = aggressive(&lc, tau);
        prop_assert!(lc.iter().zip(&out).all(|(a, b)| *b >= *a));
    }

    #[test]
    fn conservative_positive_needs_enough_support(lc in series(), tau in 0usize..=10, thres in 0.0f64..0.99) {
        let out = conservative(&lc, tau, thres);
        let need = (thres * (tau + 1) as f64).floor() as usize + 1;
        for (t, &v) in out.iter().enumerate() {
            if v == 1 {
                let support = lc[t - tau..=t].iter().filter(|&&x| x == 1).count();
                prop_assert!(support >= need);
            }
        }
        prop_assert!(conservative(&vec![0; lc.len()], tau, thres).iter().all(|&v| v == 0));
    }

    #[test]
    fn advanced_time_implies_strict_correct(lc in prop::collection::vec(0u8..=1, 1..60), offset in 0u32..10, idx in 0usize..60) {
        let s = PredictionSeries::new(1, 100, lc.clone());
        let t_lc = 100 + 10 * (idx % lc.len()) as u32 + offset;
        let e = event(1, t_lc);
        match advanced_time(&s, &e) {
            Some(a) => {
                for tau_p in 0..=(a.floor() as usize) {
                    prop_assert!(strict_correct(&s, &e, tau_p), "a {} tau_p {}", a, tau_p);
                }
                prop_assert!(!strict_correct(&s, &e, a.floor() as usize + 1));
            }
            None => prop_assert!(!strict_correct(&s, &e, 0)),
        }
    }

    #[test]
    fn aggressive_never_lowers_stamp_counts(lc in series(), tau in 0usize..=10, t in 0u32..1200) {
        let s = PredictionSeries::new(1, 0, lc);
        let a = PredictionSeries { values: aggressive(&s.values, tau), ..s.clone() };
        let events = [event(1, t)];
        let plain = runtime_report(&[s], &events, 3, 5, Provenance::Plain).unwrap();
        let aggr = runtime_report(&[a], &events, 3, 5, Provenance::Aggressive).unwrap();
        prop_assert!(aggr.stamps.tp >= plain.stamps.tp);
        prop_assert!(aggr.stamps.fp >= plain.stamps.fp);
    }
}

#[test]
fn scenario_patterns_are_a_bijection() {
    let mut seen = BTreeSet::new();
    for mask in 0..8u8 {
        seen.insert(classify_scenario(mask & 4 != 0, mask & 2 != 0, mask & 1 != 0));
    }
    assert_eq!(seen.len(), 8);
}

#[test]
fn fitting_is_reproducible() {
    let xs: Vec<Vec<f64>> = (0..40).map(|i| vec![f64::from(i) / 10.0 - 2.0, (f64::from(i) * 0.7).sin()]).collect();
    let labels: Vec<u8> = (0..40).map(|i| u8::from(i % 3 == 0)).collect();
    let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let cfg = TrainConfig { epochs: 200, seed: 5, ..TrainConfig::default() };
    let a = mlp_fit(&refs, &labels, 3, &cfg).unwrap();
    let b = mlp_fit(&refs, &labels, 3, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn folds_partition_vehicles() {
    let samples: Vec<LabeledSample> = (0..60u32)
        .map(|i| {
            let x = f64::from(i % 2) * 2.0 - 1.0;
            LabeledSample {
                input: vec![vec![x, 0.5 * x]],
                features: FeatureVector::from_array([0.0; 7]),
                label: (i % 2) as u8,
                vehicle_id: i / 3 + 1,
                frame: i,
                event_id: None,
                event: None,
            }
        })
        .collect();
    let spec = ModelSpec::default_for(ModelKind::LogReg);
    let report = kfold_cv(&samples, &spec, &CvConfig::default()).unwrap();
    let vehicles: BTreeSet<u32> = samples.iter().map(|s| s.vehicle_id).collect();
    assert_eq!(report.assignment.len(), vehicles.len());
    let mut sizes = [0; 5];
    for fold in report.assignment.values() {
        sizes[*fold] += 1;
    }
    assert_eq!(sizes, [4; 5]);
    assert_eq!(report.mean.accuracy, Some(1.0));
}
