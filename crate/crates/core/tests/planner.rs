use fisheye_multinet::geometry::CameraRig;
use fisheye_multinet::labels::Scenario;
use fisheye_multinet::map::OccupancyMap;
use fisheye_multinet::park::CameraPerception;
use fisheye_multinet::plane::V2;
use fisheye_multinet::planner::{
    classify_rake, detect_slots, fits_vehicle, select_slot, target_pose, Dimension, EntryDirection,
    ParkingSlot, PlannerConfig, SlotCue, VehicleSpec,
};
use fisheye_multinet::synth::{render_scene, sample_scene, SceneDescription, SceneParams};
use proptest::prelude::*;

fn slot(scenario: Scenario, center: [f64; 2], length: f64, width: f64) -> ParkingSlot {
    let rake_deg: f64 = match scenario {
        Scenario::Parallel => 0.0,
        Scenario::Fishbone => 45.0,
        _ => 90.0,
    };
    ParkingSlot {
        center,
        heading: rake_deg.to_radians(),
        rake_deg,
        length,
        width,
        scenario,
        confidence: 0.9,
        entry_direction: EntryDirection::Backward,
        cue: SlotCue::Markings,
    }
}

fn fused_map(scene: &SceneDescription, rig: &CameraRig) -> OccupancyMap {
    let views: Vec<_> = render_scene(scene, 0, rig, (10, 3)).iter().map(CameraPerception::oracle).collect();
    let cams: Vec<_> = views.iter().map(|v| rig.camera(&v.camera).unwrap()).collect();
    let seg: Vec<_> = cams.iter().zip(&views).map(|(c, v)| (*c, &v.mask)).collect();
    let det: Vec<_> = cams.iter().zip(&views).map(|(c, v)| (*c, v.boxes.as_slice())).collect();
    let mut map = OccupancyMap::new();
    map.fuse_views(&seg, &det);
    map
}

fn single_gap_scene(seed: u64, scenario: Scenario) -> SceneDescription {
    let mut params = SceneParams::new(1280, 384).only(scenario);
    params.free_slots = Some(1);
    params.soiling_probability = 0.0;
    sample_scene(seed, &params)
}

#[test]
fn empty_map_has_no_slots() {
    let map = OccupancyMap::new();
    assert!(detect_slots(&map, &PlannerConfig::default()).is_empty());
}

#[test]
fn perpendicular_row_with_one_gap_yields_one_slot() {
    let rig = CameraRig::default_rig(1280, 384);
    for seed in [1, 2, 3] {
        let scene = single_gap_scene(seed, Scenario::Perpendicular);
        assert_eq!(scene.true_slots.len(), 1);
        let truth = V2::from(scene.true_slots[0].rect.center);
        let slots = detect_slots(&fused_map(&scene, &rig), &PlannerConfig::default());
        let fitting: Vec<_> = slots
            .iter()
            .filter(|s| fits_vehicle(s, &VehicleSpec::default()).fits)
            .collect();
        assert_eq!(fitting.len(), 1, "seed {seed}: {slots:?}");
        let err = (V2::from(fitting[0].center) - truth).norm();
        assert!(err <= 0.3, "seed {seed}: center off by {err:.3} m");
        assert_eq!(fitting[0].scenario, Scenario::Perpendicular);
    }
}

#[test]
fn fishbone_rake_is_recovered() {
    let rig = CameraRig::default_rig(1280, 384);
    for seed in [4, 5] {
        let scene = single_gap_scene(seed, Scenario::Fishbone);
        let truth = &scene.true_slots[0];
        let slots = detect_slots(&fused_map(&scene, &rig), &PlannerConfig::default());
        let best = slots
            .iter()
            .min_by(|a, b| {
                let d = |s: &ParkingSlot| (V2::from(s.center) - V2::from(truth.rect.center)).norm();
                d(a).total_cmp(&d(b))
            })
            .unwrap_or_else(|| panic!("seed {seed}: no slot"));
        assert!(
            (best.rake_deg - truth.rake_deg).abs() <= 10.0,
            "seed {seed}: rake {:.1} vs {:.1}",
            best.rake_deg,
            truth.rake_deg
        );
        assert_eq!(best.scenario, Scenario::Fishbone);
    }
}

#[test]
fn rake_classification_examples() {
    for (rake, want) in [
        (3.0, Scenario::Parallel),
        (88.0, Scenario::Perpendicular),
        (47.0, Scenario::Fishbone),
        (25.0, Scenario::Ambiguous),
    ] {
        assert_eq!(classify_rake(rake), want, "{rake}");
    }
}

#[test]
fn fit_examples() {
    let v = VehicleSpec::default();
    assert!(fits_vehicle(&slot(Scenario::Perpendicular, [0.0, 5.0], 5.0, 3.2), &v).fits);
    let narrow = fits_vehicle(&slot(Scenario::Perpendicular, [0.0, 5.0], 5.0, 1.8), &v);
    assert!(!narrow.fits);
    assert_eq!(narrow.limiting, Some(Dimension::Width));
    assert!(fits_vehicle(&slot(Scenario::Parallel, [0.0, 5.0], 5.7, 2.1), &v).fits);
    let short = fits_vehicle(&slot(Scenario::Parallel, [0.0, 5.0], 5.0, 2.1), &v);
    assert_eq!(short.limiting, Some(Dimension::Length));
}

#[test]
fn selection_prefers_the_nearer_slot() {
    let v = VehicleSpec::default();
    let near = slot(Scenario::Perpendicular, [0.0, 3.0], 5.0, 3.3);
    let far = slot(Scenario::Perpendicular, [0.0, 6.0], 5.0, 3.3);
    assert_eq!(select_slot(&[far, near], [0.0, 0.0], &v), Some(near));
    assert_eq!(select_slot(&[], [0.0, 0.0], &v), None);
    let tiny = slot(Scenario::Perpendicular, [0.0, 2.0], 3.0, 1.5);
    assert_eq!(select_slot(&[tiny], [0.0, 0.0], &v), None);
}

#[test]
fn target_pose_fits_inside_a_fishbone_slot() {
    let v = VehicleSpec::default();
    let s = slot(Scenario::Fishbone, [2.0, 5.0], 5.2, 3.3);
    let pose = target_pose(&s, &v).unwrap();
    assert!(s.rect().contains_rect(&pose.footprint(&v), 1e-9));
    assert!(target_pose(&slot(Scenario::Fishbone, [2.0, 5.0], 4.0, 3.3), &v).is_err());
}

fn arb_slot() -> impl Strategy<Value = ParkingSlot> {
    (
        prop_oneof![
            Just(Scenario::Parallel),
            Just(Scenario::Perpendicular),
            Just(Scenario::Fishbone)
        ],
        -8.0..8.0f64,
        -8.0..8.0f64,
        3.0..8.0f64,
        1.5..4.0f64,
        0.1..1.0f64,
    )
        .prop_map(|(sc, x, y, l, w, conf)| ParkingSlot {
            confidence: conf,
            ..slot(sc, [x, y], l, w)
        })
}

proptest! {
    #[test]
    fn fit_is_monotonic_in_slot_size(s in arb_slot(), dl in 0.0..2.0f64, dw in 0.0..2.0f64) {
        let v = VehicleSpec::default();
        let bigger = ParkingSlot { length: s.length + dl, width: s.width + dw, ..s };
        if fits_vehicle(&s, &v).fits {
            prop_assert!(fits_vehicle(&bigger, &v).fits);
        }
    }

    #[test]
    fn selection_ignores_input_order(mut slots in prop::collection::vec(arb_slot(), 0..8), rot in 0usize..8) {
        let v = VehicleSpec::default();
        let a = select_slot(&slots, [0.0, 0.0], &v);
        slots.reverse();
        let n = slots.len().max(1);
        slots.rotate_left(rot % n);
        prop_assert_eq!(a, select_slot(&slots, [0.0, 0.0], &v));
    }

    #[test]
    fn fitted_target_is_contained(s in arb_slot()) {
        let v = VehicleSpec::default();
        if let Ok(pose) = target_pose(&s, &v) {
            prop_assert!(s.rect().contains_rect(&pose.footprint(&v), 1e-9));
        }
    }
}
