//! Ego-centered log-odds evidence grid fused from all cameras.
//!
//! Cell (row, col) has its center at ego-frame
//! `x = (col − 100)·0.1`, `y = (row − 100)·0.1` meters.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Camera;
use crate::labels::{DetClass, DetectedBox, SegClass, SegMask};
use crate::plane::V2;

pub const MAP_HALF_EXTENT: f64 = 10.0;
pub const MAP_RESOLUTION: f64 = 0.1;
pub const MAP_CELLS: usize = 201;
pub const LOG_ODDS_LIMIT: f64 = 6.0;
pub const DECAY: f64 = 0.95;
/// Pixel step of the segmentation sampling lattice.
pub const LATTICE_STEP: usize = 2;
/// Upper bound on the ground footprint side a single lattice sample may stamp.
pub const MAX_SAMPLE_FOOTPRINT: f64 = 1.0;
/// Occupied-channel decrement per visible road sample; seen ground overrides
/// object discs spilling past a box's foot-point.
pub const ROAD_CLEARS: f64 = 2.0;
/// Footprint cap for lane and curb samples, which would otherwise smear thin
/// structures radially at range.
pub const THIN_SAMPLE_FOOTPRINT: f64 = 0.3;

const CENTER: i64 = (MAP_CELLS / 2) as i64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Freespace,
    Vehicle,
    Pedestrian,
    Cyclist,
    Curb,
    LaneMarking,
}

impl Channel {
    pub const COUNT: usize = 6;
    pub const ALL: [Channel; 6] = [
        Channel::Freespace,
        Channel::Vehicle,
        Channel::Pedestrian,
        Channel::Cyclist,
        Channel::Curb,
        Channel::LaneMarking,
    ];
    /// Channels whose positive evidence blocks a cell.
    pub const OCCUPIED: [Channel; 4] = [
        Channel::Vehicle,
        Channel::Pedestrian,
        Channel::Cyclist,
        Channel::Curb,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Freespace => "freespace",
            Channel::Vehicle => "vehicle",
            Channel::Pedestrian => "pedestrian",
            Channel::Cyclist => "cyclist",
            Channel::Curb => "curb",
            Channel::LaneMarking => "lane_marking",
        }
    }

    pub fn of_class(class: DetClass) -> Self {
        match class {
            DetClass::Vehicle => Channel::Vehicle,
            DetClass::Pedestrian => Channel::Pedestrian,
            DetClass::Cyclist => Channel::Cyclist,
        }
    }
}

/// Ego pose in the world frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EgoPose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedObject {
    pub class: DetClass,
    /// Estimated object center, ego frame.
    pub position: [f64; 2],
    pub camera: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedBox {
    pub camera: String,
    pub class: DetClass,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionFusion {
    pub objects: Vec<FusedObject>,
    pub skipped: Vec<SkippedBox>,
}

/// Per-cell log-odds increments of one fusion call, applied with a single clamp.
struct Delta {
    data: Vec<f64>,
}

impl Delta {
    fn new() -> Self {
        Self {
            data: vec![0.0; Channel::COUNT * MAP_CELLS * MAP_CELLS],
        }
    }

    fn add(&mut self, ch: Channel, row: usize, col: usize, v: f64) {
        self.data[(ch.index() * MAP_CELLS + row) * MAP_CELLS + col] += v;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMap {
    pub pose: EgoPose,
    data: Vec<f64>,
}

impl Default for OccupancyMap {
    fn default() -> Self {
        Self::new()
    }
}

impl OccupancyMap {
    pub fn new() -> Self {
        Self {
            pose: EgoPose::default(),
            data: vec![0.0; Channel::COUNT * MAP_CELLS * MAP_CELLS],
        }
    }

    fn offset(ch: Channel, row: usize, col: usize) -> usize {
        (ch.index() * MAP_CELLS + row) * MAP_CELLS + col
    }

    pub fn get(&self, ch: Channel, row: usize, col: usize) -> f64 {
        self.data[Self::offset(ch, row, col)]
    }

    pub fn set(&mut self, ch: Channel, row: usize, col: usize, v: f64) {
        self.data[Self::offset(ch, row, col)] = v.clamp(-LOG_ODDS_LIMIT, LOG_ODDS_LIMIT);
    }

    pub fn channel(&self, ch: Channel) -> &[f64] {
        let n = MAP_CELLS * MAP_CELLS;
        &self.data[ch.index() * n..(ch.index() + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    /// Ego-frame center of a cell.
    pub fn cell_center(row: usize, col: usize) -> V2 {
        V2::new(
            (col as i64 - CENTER) as f64 * MAP_RESOLUTION,
            (row as i64 - CENTER) as f64 * MAP_RESOLUTION,
        )
    }

    /// Signed lattice index of the cell containing `p`, possibly outside the map.
    pub fn lattice(p: &V2) -> (i64, i64) {
        (
            (p.y / MAP_RESOLUTION).round() as i64 + CENTER,
            (p.x / MAP_RESOLUTION).round() as i64 + CENTER,
        )
    }

    pub fn cell_of(p: &V2) -> Option<(usize, usize)> {
        let (r, c) = Self::lattice(p);
        Self::in_bounds(r, c).then_some((r as usize, c as usize))
    }

    fn in_bounds(r: i64, c: i64) -> bool {
        (0..MAP_CELLS as i64).contains(&r) && (0..MAP_CELLS as i64).contains(&c)
    }

    fn apply(&mut self, delta: &Delta) {
        for (v, d) in self.data.iter_mut().zip(&delta.data) {
            if *d != 0.0 {
                *v = (*v + d).clamp(-LOG_ODDS_LIMIT, LOG_ODDS_LIMIT);
            }
        }
    }

    /// Highest occupied-channel evidence of a cell.
    pub fn occupied_evidence(&self, row: usize, col: usize) -> f64 {
        Channel::OCCUPIED
            .iter()
            .map(|&ch| self.get(ch, row, col))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_free(&self, row: usize, col: usize) -> bool {
        self.occupied_evidence(row, col) < 0.0 && self.get(Channel::Freespace, row, col) > 0.0
    }

    /// Channel with the largest evidence in a cell.
    pub fn argmax(&self, row: usize, col: usize) -> Channel {
        Channel::ALL
            .into_iter()
            .max_by(|a, b| self.get(*a, row, col).total_cmp(&self.get(*b, row, col)))
            .expect("channels")
    }

    /// Projects every lattice pixel below the horizon onto the ground and adds
    /// class evidence over the pixel's ground footprint.
    pub fn fuse_segmentation(&mut self, views: &[(&Camera, &SegMask)]) {
        self.fuse_views(views, &[]);
    }

    /// Stamps a class-evidence disc behind each box's foot-point.
    pub fn fuse_detections(&mut self, views: &[(&Camera, &[DetectedBox])]) -> DetectionFusion {
        self.fuse_views(&[], views)
    }

    /// Segmentation and detection fusion summed before a single clamp, so
    /// seen road and object discs offset each other regardless of order.
    pub fn fuse_views(&mut self, masks: &[(&Camera, &SegMask)], boxes: &[(&Camera, &[DetectedBox])]) -> DetectionFusion {
        let mut delta = Delta::new();
        for (camera, mask) in masks {
            fuse_mask(&mut delta, camera, mask);
        }
        let mut out = DetectionFusion::default();
        for (camera, boxes) in boxes {
            for b in boxes.iter() {
                fuse_box(&mut delta, &mut out, camera, b);
            }
        }
        self.apply(&delta);
        out
    }

    /// Moves the ego by (dx, dy) in its current frame and turns it by
    /// `dheading`; evidence is resampled (nearest cell) and decayed.
    pub fn motion_update(&mut self, dx: f64, dy: f64, dheading: f64) {
        let (s, c) = dheading.sin_cos();
        let mut next = vec![0.0; self.data.len()];
        for row in 0..MAP_CELLS {
            for col in 0..MAP_CELLS {
                let p = Self::cell_center(row, col);
                let old = V2::new(c * p.x - s * p.y + dx, s * p.x + c * p.y + dy);
                let (r, k) = Self::lattice(&old);
                if !Self::in_bounds(r, k) {
                    continue;
                }
                for ch in Channel::ALL {
                    next[Self::offset(ch, row, col)] = self.get(ch, r as usize, k as usize) * DECAY;
                }
            }
        }
        self.data = next;
        let (hs, hc) = self.pose.heading.sin_cos();
        self.pose.x += hc * dx - hs * dy;
        self.pose.y += hs * dx + hc * dy;
        self.pose.heading += dheading;
    }

    /// Fraction of the cells inside `polygon` (ego frame) that are free;
    /// cells beyond the map edge count as not free.
    pub fn query_freespace(&self, polygon: &[V2]) -> Result<f64> {
        if polygon.len() < 3 || polygon_area(polygon).abs() < 1e-9 {
            return Err(Error::Invalid("freespace query needs a non-degenerate polygon".into()));
        }
        let (mut lo, mut hi) = (V2::repeat(f64::INFINITY), V2::repeat(f64::NEG_INFINITY));
        for p in polygon {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let (r0, c0) = Self::lattice(&lo);
        let (r1, c1) = Self::lattice(&hi);
        let (mut covered, mut free) = (0usize, 0usize);
        for r in r0..=r1 {
            for c in c0..=c1 {
                let center = V2::new((c - CENTER) as f64 * MAP_RESOLUTION, (r - CENTER) as f64 * MAP_RESOLUTION);
                if !point_in_polygon(polygon, &center) {
                    continue;
                }
                covered += 1;
                if Self::in_bounds(r, c) && self.is_free(r as usize, c as usize) {
                    free += 1;
                }
            }
        }
        if covered == 0 {
            return Err(Error::Invalid("freespace query polygon covers no cell".into()));
        }
        Ok(free as f64 / covered as f64)
    }

    /// Binary PGM of one channel, log-odds [−6, 6] mapped to [0, 255].
    pub fn channel_pgm(&self, ch: Channel) -> Vec<u8> {
        let mut out = format!("P5\n{MAP_CELLS} {MAP_CELLS}\n255\n").into_bytes();
        // image row 0 is the +y edge so the picture reads as a top view
        for row in (0..MAP_CELLS).rev() {
            for col in 0..MAP_CELLS {
                let v = self.get(ch, row, col);
                out.push(((v + LOG_ODDS_LIMIT) / (2.0 * LOG_ODDS_LIMIT) * 255.0).round() as u8);
            }
        }
        out
    }

    /// Writes `map_<channel>.pgm` for every channel into `dir`.
    pub fn write_snapshot(&self, dir: &Path) -> Result<()> {
        for ch in Channel::ALL {
            let path = dir.join(format!("map_{}.pgm", ch.name()));
            fs::write(&path, self.channel_pgm(ch)).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

fn seg_increments(class: SegClass) -> &'static [(Channel, f64)] {
    const ROAD: [(Channel, f64); 5] = [
        (Channel::Freespace, 0.5),
        (Channel::Vehicle, -ROAD_CLEARS),
        (Channel::Pedestrian, -ROAD_CLEARS),
        (Channel::Cyclist, -ROAD_CLEARS),
        (Channel::Curb, -ROAD_CLEARS),
    ];
    const LANE: [(Channel, f64); 6] = [
        (Channel::LaneMarking, 1.0),
        (Channel::Freespace, 0.5),
        (Channel::Vehicle, -ROAD_CLEARS),
        (Channel::Pedestrian, -ROAD_CLEARS),
        (Channel::Cyclist, -ROAD_CLEARS),
        (Channel::Curb, -ROAD_CLEARS),
    ];
    const CURB: [(Channel, f64); 1] = [(Channel::Curb, 1.0)];
    match class {
        SegClass::Road => &ROAD,
        SegClass::Lane => &LANE,
        SegClass::Curb => &CURB,
        SegClass::Void => &[],
    }
}

fn fuse_box(delta: &mut Delta, out: &mut DetectionFusion, camera: &Camera, b: &DetectedBox) {
    let mut skip = |reason: String| {
        out.skipped.push(SkippedBox {
            camera: camera.name.clone(),
            class: b.class,
            reason,
        })
    };
    let logit = (b.confidence / (1.0 - b.confidence)).ln();
    if logit.is_nan() {
        skip(format!("invalid confidence {}", b.confidence));
        return;
    }
    let (u, v) = b.foot_point();
    let foot = match camera.footpoint_to_ground(u, v) {
        Ok(g) => V2::from(g),
        Err(e) => {
            skip(e.to_string());
            return;
        }
    };
    let radius = b.class.footprint_radius();
    let cam = camera.center();
    let away = foot - V2::new(cam.x, cam.y);
    let center = if away.norm() > 1e-9 {
        foot + away.normalize() * radius
    } else {
        foot
    };
    if center.x.abs() > MAP_HALF_EXTENT || center.y.abs() > MAP_HALF_EXTENT {
        skip("outside map extent".to_string());
        return;
    }
    stamp_disc(delta, Channel::of_class(b.class), &center, radius, logit.clamp(-LOG_ODDS_LIMIT, LOG_ODDS_LIMIT));
    out.objects.push(FusedObject {
        class: b.class,
        position: [center.x, center.y],
        camera: camera.name.clone(),
        confidence: b.confidence,
    });
}

fn fuse_mask(delta: &mut Delta, camera: &Camera, mask: &SegMask) {
    let ground = |u: f64, v: f64| camera.footpoint_to_ground(u, v).ok().map(V2::from);
    let step = LATTICE_STEP as f64;
    for row in (camera.horizon_row()..mask.height).step_by(LATTICE_STEP) {
        for col in (0..mask.width).step_by(LATTICE_STEP) {
            let class = SegClass::from_index(mask.get(col, row)).unwrap_or(SegClass::Void);
            let incs = seg_increments(class);
            if incs.is_empty() {
                continue;
            }
            let (u, v) = (col as f64 + 0.5, row as f64 + 0.5);
            let Some(g) = ground(u, v) else { continue };
            if g.x.abs() > MAP_HALF_EXTENT || g.y.abs() > MAP_HALF_EXTENT {
                continue;
            }
            let cap = if class == SegClass::Road { MAX_SAMPLE_FOOTPRINT } else { THIN_SAMPLE_FOOTPRINT };
            let edge = |n: Option<V2>| {
                n.map(|n| {
                    let e = n - g;
                    let len = e.norm();
                    if len > cap {
                        e * (cap / len)
                    } else {
                        e
                    }
                })
                .unwrap_or_else(V2::zeros)
            };
            let e1 = edge(ground(u + step, v));
            let e2 = edge(ground(u, v + step));
            for (r, c) in footprint_cells(&g, &e1, &e2) {
                for &(ch, inc) in incs {
                    delta.add(ch, r, c, inc);
                }
            }
        }
    }
}

/// Cells whose centers lie in the parallelogram g + a·e1 + b·e2 with
/// a, b ∈ [−½, ½); the containing cell when the parallelogram is smaller than a cell.
fn footprint_cells(g: &V2, e1: &V2, e2: &V2) -> Vec<(usize, usize)> {
    let det = e1.perp(e2);
    if e1.norm().max(e2.norm()) <= MAP_RESOLUTION || det.abs() < 1e-12 {
        return OccupancyMap::cell_of(g).into_iter().collect();
    }
    let half = (e1.abs() + e2.abs()) / 2.0;
    let (r0, c0) = OccupancyMap::lattice(&(g - half));
    let (r1, c1) = OccupancyMap::lattice(&(g + half));
    let mut out = Vec::new();
    for r in r0..=r1 {
        for c in c0..=c1 {
            if !OccupancyMap::in_bounds(r, c) {
                continue;
            }
            let d = OccupancyMap::cell_center(r as usize, c as usize) - g;
            let a = d.perp(e2) / det;
            let b = e1.perp(&d) / det;
            if (-0.5..0.5).contains(&a) && (-0.5..0.5).contains(&b) {
                out.push((r as usize, c as usize));
            }
        }
    }
    if out.is_empty() {
        out.extend(OccupancyMap::cell_of(g));
    }
    out
}

fn stamp_disc(delta: &mut Delta, ch: Channel, center: &V2, radius: f64, inc: f64) {
    let (r0, c0) = OccupancyMap::lattice(&(center - V2::repeat(radius)));
    let (r1, c1) = OccupancyMap::lattice(&(center + V2::repeat(radius)));
    for r in r0..=r1 {
        for c in c0..=c1 {
            if !OccupancyMap::in_bounds(r, c) {
                continue;
            }
            let p = OccupancyMap::cell_center(r as usize, c as usize);
            if (p - center).norm() <= radius {
                delta.add(ch, r as usize, c as usize, inc);
            }
        }
    }
}

fn polygon_area(poly: &[V2]) -> f64 {
    (0..poly.len())
        .map(|i| poly[i].perp(&poly[(i + 1) % poly.len()]))
        .sum::<f64>()
        / 2.0
}

/// Even-odd crossing test.
pub fn point_in_polygon(poly: &[V2], p: &V2) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + n - 1) % n]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}
