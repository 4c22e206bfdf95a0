use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::CameraRig;
use crate::labels::Scenario;
use crate::plane::{convex_distance, convex_overlap, disc_distance, OrientedRect, V2};

pub const LINE_WIDTH: f64 = 0.12;
pub const CURB_HEIGHT: f64 = 0.12;
pub const CURB_WIDTH: f64 = 0.3;
/// Length, width, height.
pub const VEHICLE_SIZE: [f64; 3] = [4.5, 1.8, 1.5];
pub const CYCLIST_SIZE: [f64; 3] = [1.8, 0.6, 1.6];
pub const PEDESTRIAN_RADIUS: f64 = 0.3;
pub const PEDESTRIAN_HEIGHT: f64 = 1.7;
/// Minimum clearance between any two solid objects.
pub const MIN_SEPARATION: f64 = 0.05;

/// Footprint of the ego vehicle, centered at the origin and heading +x.
pub fn ego_footprint() -> OrientedRect {
    OrientedRect {
        center: [0.0, 0.0],
        heading: 0.0,
        length: VEHICLE_SIZE[0],
        width: VEHICLE_SIZE[1],
    }
}

/// Straight drivable corridor: points whose lateral offset from the line
/// through the origin at `heading` lies in `[lateral_min, lateral_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Road {
    pub heading: f64,
    pub lateral_min: f64,
    pub lateral_max: f64,
}

impl Road {
    pub fn width(&self) -> f64 {
        self.lateral_max - self.lateral_min
    }

    pub fn contains(&self, p: &V2) -> bool {
        let lateral = -self.heading.sin() * p.x + self.heading.cos() * p.y;
        lateral >= self.lateral_min && lateral <= self.lateral_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineMarking {
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub width: f64,
}

impl LineMarking {
    pub fn footprint(&self) -> OrientedRect {
        segment_rect(self.start, self.end, self.width)
    }

    pub fn direction(&self) -> f64 {
        (self.end[1] - self.start[1]).atan2(self.end[0] - self.start[0])
    }
}

fn segment_rect(a: [f64; 2], b: [f64; 2], width: f64) -> OrientedRect {
    let (a, b) = (V2::from(a), V2::from(b));
    let d = b - a;
    let c = (a + b) / 2.0;
    OrientedRect {
        center: [c.x, c.y],
        heading: d.y.atan2(d.x),
        length: d.norm(),
        width,
    }
}

/// Raised curb along a polyline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curb {
    pub points: Vec<[f64; 2]>,
    pub width: f64,
    pub height: f64,
}

impl Curb {
    pub fn segments(&self) -> Vec<OrientedRect> {
        self.points
            .windows(2)
            .map(|w| segment_rect(w[0], w[1], self.width))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cuboid {
    pub footprint: OrientedRect,
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub center: [f64; 2],
    pub radius: f64,
    pub height: f64,
}

/// A free slot; `rect.heading` points from the entrance into the slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotTruth {
    pub rect: OrientedRect,
    pub rake_deg: f64,
    pub scenario: Scenario,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SoilKind {
    Opaque,
    Transparent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoilRegion {
    #[serde(rename = "type")]
    pub kind: SoilKind,
    /// Pixel coordinates.
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SoilingSpec {
    pub regions: Vec<SoilRegion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDescription {
    pub seed: u64,
    pub scenario: Scenario,
    pub road: Road,
    pub lane_markings: Vec<LineMarking>,
    pub curbs: Vec<Curb>,
    pub parked_vehicles: Vec<Cuboid>,
    pub pedestrians: Vec<Cylinder>,
    pub cyclists: Vec<Cuboid>,
    pub true_slots: Vec<SlotTruth>,
    /// Lens soiling per camera name, in pixels of the rendered resolution.
    pub soiling: BTreeMap<String, SoilingSpec>,
}

impl SceneDescription {
    /// Flat road of the given width centered on the ego, nothing else.
    pub fn empty(seed: u64, road_width: f64) -> Self {
        Self {
            seed,
            scenario: Scenario::Perpendicular,
            road: Road {
                heading: 0.0,
                lateral_min: -road_width / 2.0,
                lateral_max: road_width / 2.0,
            },
            lane_markings: Vec::new(),
            curbs: Vec::new(),
            parked_vehicles: Vec::new(),
            pedestrians: Vec::new(),
            cyclists: Vec::new(),
            true_slots: Vec::new(),
            soiling: BTreeMap::new(),
        }
    }

    /// Footprints of every solid object, curbs included.
    pub fn solid_footprints(&self) -> Vec<Footprint> {
        let mut out: Vec<Footprint> = self
            .parked_vehicles
            .iter()
            .chain(&self.cyclists)
            .map(|c| Footprint::Rect(c.footprint))
            .collect();
        out.extend(
            self.pedestrians
                .iter()
                .map(|p| Footprint::Disc(V2::from(p.center), p.radius)),
        );
        for curb in &self.curbs {
            out.extend(curb.segments().into_iter().map(Footprint::Rect));
        }
        out
    }

    /// Pairs of solid objects closer than [`MIN_SEPARATION`] (curbs are not
    /// checked against each other).
    pub fn interpenetrations(&self) -> usize {
        let movable = self.parked_vehicles.len() + self.cyclists.len() + self.pedestrians.len();
        let fps = self.solid_footprints();
        let mut count = 0;
        for i in 0..movable.min(fps.len()) {
            for j in i + 1..fps.len() {
                if fps[i].distance(&fps[j]) < MIN_SEPARATION {
                    count += 1;
                }
            }
        }
        count
    }

    /// Number of (free slot, object) pairs that overlap.
    pub fn occupied_true_slots(&self) -> usize {
        let fps = self.solid_footprints();
        self.true_slots
            .iter()
            .map(|s| {
                let slot = Footprint::Rect(s.rect);
                fps.iter().filter(|f| f.distance(&slot) == 0.0).count()
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Footprint {
    Rect(OrientedRect),
    Disc(V2, f64),
}

impl Footprint {
    pub fn distance(&self, other: &Footprint) -> f64 {
        match (self, other) {
            (Footprint::Rect(a), Footprint::Rect(b)) => convex_distance(&a.corners(), &b.corners()),
            (Footprint::Rect(r), Footprint::Disc(c, rad)) | (Footprint::Disc(c, rad), Footprint::Rect(r)) => {
                disc_distance(c, *rad, &r.corners())
            }
            (Footprint::Disc(a, ra), Footprint::Disc(b, rb)) => ((a - b).norm() - ra - rb).max(0.0),
        }
    }
}

/// Scene sampling parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    /// Relative probabilities of parallel, perpendicular, fishbone, ambiguous.
    pub scenario_mix: [f64; 4],
    /// Forces the number of free slots (0 allowed); sampled from 1–3 otherwise.
    pub free_slots: Option<usize>,
    pub soiling_probability: f64,
    /// Cameras (in rig order) that receive a large opaque disc.
    pub soiled_cameras: usize,
    pub image_width: usize,
    pub image_height: usize,
}

impl SceneParams {
    pub fn new(image_width: usize, image_height: usize) -> Self {
        Self {
            scenario_mix: [1.0; 4],
            free_slots: None,
            soiling_probability: 0.3,
            soiled_cameras: 0,
            image_width,
            image_height,
        }
    }

    pub fn only(mut self, scenario: Scenario) -> Self {
        self.scenario_mix = Scenario::ALL.map(|s| if s == scenario { 1.0 } else { 0.0 });
        self
    }
}

struct RowLayout {
    rake_deg: f64,
    slot_length: f64,
    slot_width: f64,
    /// Spacing of slot centers along the road.
    pitch: f64,
    /// Lateral depth of the row.
    depth: f64,
    heading: f64,
    half_span: f64,
}

fn row_layout(rng: &mut ChaCha8Rng, scenario: Scenario, side: f64) -> RowLayout {
    let lean = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let (rake_deg, length, width): (f64, f64, f64) = match scenario {
        Scenario::Parallel => (0.0, rng.random_range(6.0..6.5), rng.random_range(2.3..2.5)),
        Scenario::Perpendicular => (90.0, rng.random_range(5.0..5.5), rng.random_range(3.4..3.6)),
        Scenario::Fishbone => (
            rng.random_range(45.0..55.0),
            rng.random_range(5.0..5.5),
            rng.random_range(3.4..3.6),
        ),
        Scenario::Ambiguous => (
            rng.random_range(64.0..71.0),
            rng.random_range(5.0..5.5),
            rng.random_range(3.4..3.6),
        ),
    };
    let r = rake_deg.to_radians();
    if scenario == Scenario::Parallel {
        RowLayout {
            rake_deg,
            slot_length: length,
            slot_width: width,
            pitch: length,
            depth: width,
            heading: 0.0,
            half_span: 14.0,
        }
    } else {
        RowLayout {
            rake_deg,
            slot_length: length,
            slot_width: width,
            pitch: width / r.sin(),
            depth: length * r.sin() + width * r.cos(),
            heading: (side * r.sin()).atan2(lean * r.cos()),
            half_span: 11.0,
        }
    }
}

fn pick_scenario(rng: &mut ChaCha8Rng, mix: &[f64; 4]) -> Scenario {
    match WeightedIndex::new(mix) {
        Ok(w) => Scenario::ALL[w.sample(rng)],
        Err(_) => Scenario::ALL[rng.random_range(0..4)],
    }
}

/// Dividers shared by neighbouring slots, running from the row entrance at
/// `near` to its back at `far` (signed lateral offsets).
fn row_dividers(slots: &[OrientedRect], layout: &RowLayout, near: f64, far: f64) -> Vec<LineMarking> {
    let Some(first) = slots.first() else {
        return Vec::new();
    };
    let dir = if layout.rake_deg == 0.0 {
        V2::new(0.0, 1.0)
    } else {
        first.axis() / first.axis().y
    };
    let mut xs: Vec<f64> = slots.iter().map(|s| s.center[0] - layout.pitch / 2.0).collect();
    xs.push(slots[slots.len() - 1].center[0] + layout.pitch / 2.0);
    let mid = (near + far) / 2.0;
    xs.into_iter()
        .map(|x| {
            let p = V2::new(x, mid) + dir * (near - mid);
            let q = V2::new(x, mid) + dir * (far - mid);
            LineMarking {
                start: [p.x, p.y],
                end: [q.x, q.y],
                width: LINE_WIDTH,
            }
        })
        .collect()
}

/// Deterministic procedural parking scene around an ego vehicle at the
/// origin heading +x.
pub fn sample_scene(seed: u64, params: &SceneParams) -> SceneDescription {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scenario = pick_scenario(&mut rng, &params.scenario_mix);
    let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let layout = row_layout(&mut rng, scenario, side);
    let row_start: f64 = rng.random_range(2.4..3.0);
    let opposite: f64 = rng.random_range(3.0..4.0);
    let row_end = row_start + layout.depth;

    // No default-rig camera sees the ground straight out to the side beyond
    // about 5.5 m, so free slots stay clear of that strip.
    let blind = OrientedRect {
        center: [0.0, side * 7.75],
        heading: 0.0,
        length: 2.0,
        width: 4.5,
    };
    let k_max = ((layout.half_span + layout.pitch) / layout.pitch).ceil() as i64;
    let row_at = |offset: f64| -> Vec<OrientedRect> {
        (-k_max..=k_max)
            .map(|k| offset + k as f64 * layout.pitch)
            .filter(|x| x.abs() <= layout.half_span)
            .map(|x| OrientedRect {
                center: [x, side * (row_start + layout.depth / 2.0)],
                heading: layout.heading,
                length: layout.slot_length,
                width: layout.slot_width,
            })
            .collect()
    };
    let eligible = |slots: &[OrientedRect]| -> Vec<usize> {
        (0..slots.len())
            .filter(|&i| slots[i].center[0].abs() <= 4.5 && !convex_overlap(&slots[i].corners(), &blind.corners()))
            .collect()
    };
    let mut slots = row_at(rng.random_range(-0.5..0.5) * layout.pitch);
    for _ in 0..32 {
        if !eligible(&slots).is_empty() {
            break;
        }
        slots = row_at(rng.random_range(-0.5..0.5) * layout.pitch);
    }
    let mut near = eligible(&slots);
    let wanted = params.free_slots.unwrap_or_else(|| rng.random_range(1..=3));
    let n_free = wanted.min(near.len()).min(slots.len().saturating_sub(2));
    let mut free = Vec::with_capacity(n_free);
    for _ in 0..n_free {
        free.push(near.remove(rng.random_range(0..near.len())));
    }
    free.sort_unstable();

    let jitter_deg: f64 = if scenario == Scenario::Ambiguous { 5.0 } else { 2.0 };
    let mut parked_vehicles = Vec::new();
    let mut occupied: Vec<usize> = (0..slots.len()).filter(|i| !free.contains(i)).collect();
    occupied.sort_by(|&a, &b| slots[a].center[0].abs().total_cmp(&slots[b].center[0].abs()));
    for &i in occupied.iter().take(8) {
        let slot = &slots[i];
        let flip = if rng.random_bool(0.5) { std::f64::consts::PI } else { 0.0 };
        let heading = slot.heading + flip + rng.random_range(-jitter_deg..jitter_deg).to_radians();
        let shift = slot.axis() * rng.random_range(-0.2..0.2) + slot.normal() * rng.random_range(-0.15..0.15);
        let c = slot.center() + shift;
        parked_vehicles.push(Cuboid {
            footprint: OrientedRect {
                center: [c.x, c.y],
                heading,
                length: VEHICLE_SIZE[0],
                width: VEHICLE_SIZE[1],
            },
            height: VEHICLE_SIZE[2],
        });
    }

    let lane_markings = row_dividers(&slots, &layout, side * row_start, side * row_end);
    let curb_span = 30.0;
    let rear = side * (row_end + 0.3 + CURB_WIDTH / 2.0);
    let front = -side * (opposite + CURB_WIDTH / 2.0);
    let curbs = [rear, front]
        .map(|y| Curb {
            points: vec![[-curb_span, y], [curb_span, y]],
            width: CURB_WIDTH,
            height: CURB_HEIGHT,
        })
        .to_vec();
    let (lo, hi) = if side > 0.0 {
        (-opposite, row_end + 0.3)
    } else {
        (-(row_end + 0.3), opposite)
    };
    let road = Road {
        heading: 0.0,
        lateral_min: lo,
        lateral_max: hi,
    };

    let true_slots: Vec<SlotTruth> = free
        .iter()
        .map(|&i| SlotTruth {
            rect: slots[i],
            rake_deg: layout.rake_deg,
            scenario,
        })
        .collect();

    let mut scene = SceneDescription {
        seed,
        scenario,
        road,
        lane_markings,
        curbs,
        parked_vehicles,
        pedestrians: Vec::new(),
        cyclists: Vec::new(),
        true_slots,
        soiling: BTreeMap::new(),
    };
    place_vulnerable_road_users(&mut rng, &mut scene, side, row_start, opposite);
    scene.soiling = sample_soiling(&mut rng, params);
    scene
}

/// Rejection-samples pedestrians and cyclists on the drivable area, away from
/// the ego vehicle, free slots and each other.
fn place_vulnerable_road_users(
    rng: &mut ChaCha8Rng,
    scene: &mut SceneDescription,
    side: f64,
    row_start: f64,
    opposite: f64,
) {
    let n_ped = rng.random_range(0..=3);
    let n_cyc = rng.random_range(0..=2);
    let ego = Footprint::Rect(ego_footprint().expanded(1.5));
    let keep_out: Vec<Footprint> = scene
        .true_slots
        .iter()
        .map(|s| Footprint::Rect(s.rect.expanded(0.3)))
        .collect();
    let (lat_lo, lat_hi) = if side > 0.0 {
        (-opposite + 0.4, row_start - 0.3)
    } else {
        (-row_start + 0.3, opposite - 0.4)
    };
    let fits = |scene: &SceneDescription, fp: &Footprint| {
        fp.distance(&ego) > 0.0
            && keep_out.iter().all(|k| fp.distance(k) > 0.0)
            && scene
                .solid_footprints()
                .iter()
                .all(|o| fp.distance(o) >= MIN_SEPARATION)
    };
    for _ in 0..n_ped {
        for _ in 0..50 {
            let c = V2::new(rng.random_range(-9.0..9.0), rng.random_range(lat_lo..lat_hi));
            if fits(scene, &Footprint::Disc(c, PEDESTRIAN_RADIUS)) {
                scene.pedestrians.push(Cylinder {
                    center: [c.x, c.y],
                    radius: PEDESTRIAN_RADIUS,
                    height: PEDESTRIAN_HEIGHT,
                });
                break;
            }
        }
    }
    for _ in 0..n_cyc {
        for _ in 0..50 {
            let c = V2::new(rng.random_range(-9.0..9.0), rng.random_range(lat_lo..lat_hi));
            let heading = if rng.random_bool(0.5) { 0.0 } else { std::f64::consts::PI }
                + rng.random_range(-0.3..0.3);
            let rect = OrientedRect {
                center: [c.x, c.y],
                heading,
                length: CYCLIST_SIZE[0],
                width: CYCLIST_SIZE[1],
            };
            if fits(scene, &Footprint::Rect(rect)) {
                scene.cyclists.push(Cuboid {
                    footprint: rect,
                    height: CYCLIST_SIZE[2],
                });
                break;
            }
        }
    }
}

fn sample_soiling(rng: &mut ChaCha8Rng, params: &SceneParams) -> BTreeMap<String, SoilingSpec> {
    let (w, h) = (params.image_width as f64, params.image_height as f64);
    let mut out = BTreeMap::new();
    for (i, name) in CameraRig::NAMES.iter().enumerate() {
        let mut spec = SoilingSpec::default();
        if i < params.soiled_cameras {
            spec.regions.push(SoilRegion {
                kind: SoilKind::Opaque,
                center: [w / 2.0, h / 2.0],
                radius: 0.3 * w,
            });
        } else if rng.random_bool(params.soiling_probability.clamp(0.0, 1.0)) {
            for _ in 0..rng.random_range(1..=3) {
                spec.regions.push(SoilRegion {
                    kind: if rng.random_bool(0.5) {
                        SoilKind::Opaque
                    } else {
                        SoilKind::Transparent
                    },
                    center: [rng.random_range(0.0..w), rng.random_range(0.0..h)],
                    radius: rng.random_range(0.08..0.25) * w,
                });
            }
        }
        if !spec.regions.is_empty() {
            out.insert(name.to_string(), spec);
        }
    }
    out
}
