mod common;

use std::path::Path;
use std::time::Instant;

use geoloc::geometry::Pose2;
use geoloc::io;
use geoloc::simulator::generate;
use geoloc::{DetectionSet, FrameObservation, GpsFix, Vec2};

#[test]
fn random_scenarios_survive_serialization() {
    let failures = common::check_round_trips(100, 41);
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn reserialization_is_string_identical() {
    let mut rng = common::rng(42);
    for _ in 0..20 {
        let sc = generate(&common::random_scenario_config(&mut rng)).unwrap();
        let map = io::map_to_string(sc.map.polylines());
        assert_eq!(io::map_to_string(&io::parse_map_str(&map, "map").unwrap()), map);
        let seq = io::sequence_to_string(&sc.frames);
        let parsed = io::parse_sequence_str(&seq, Path::new("seq")).unwrap();
        assert_eq!(io::sequence_to_string(&parsed.frames), seq);
        let gt = io::ground_truth_to_string(&sc.truth);
        assert_eq!(io::ground_truth_to_string(&io::parse_ground_truth_str(&gt, "gt").unwrap()), gt);
    }
}

#[test]
fn same_seed_is_bitwise_deterministic() {
    for seed in [1, 2, 3] {
        common::check_determinism(seed).unwrap();
    }
}

#[test]
fn ten_thousand_frames_parse_within_a_second() {
    let frames: Vec<FrameObservation> = (0..10_000u64)
        .map(|i| FrameObservation {
            frame_index: i,
            odometry: if i == 0 { Pose2::identity() } else { Pose2::new(0.001, 0.5, 0.0) },
            detections: DetectionSet::new(i, (0..30).map(|k| Vec2::new(k as f64 * 0.3, -4.0 + 0.01 * k as f64)).collect()),
            gps: Some(GpsFix { position: Vec2::new(i as f64 * 0.5, 0.1), sigma_xy: 0.09 }),
        })
        .collect();
    let text = io::sequence_to_string(&frames);
    let started = Instant::now();
    let parsed = io::parse_sequence_str(&text, Path::new("big")).unwrap();
    let elapsed = started.elapsed();
    assert_eq!(parsed.frames.len(), 10_000);
    // Debug builds are several times slower than release.
    let limit = if cfg!(debug_assertions) { 10.0 } else { 1.0 };
    assert!(elapsed.as_secs_f64() < limit, "{elapsed:?}");
}
