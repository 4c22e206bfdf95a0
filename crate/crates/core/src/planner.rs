//! Parking-slot detection, classification, fit checking and target poses
//! over an [`OccupancyMap`].

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::Scenario;
use crate::map::{Channel, OccupancyMap, MAP_CELLS, MAP_RESOLUTION};
use crate::plane::{line_angle, OrientedRect, V2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryDirection {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotCue {
    Markings,
    VehicleGap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParkingSlot {
    pub center: [f64; 2],
    /// Slot axis (radians), pointing from the entrance into the slot; along
    /// the road for parallel slots.
    pub heading: f64,
    pub rake_deg: f64,
    pub length: f64,
    pub width: f64,
    pub scenario: Scenario,
    pub confidence: f64,
    pub entry_direction: EntryDirection,
    pub cue: SlotCue,
}

impl ParkingSlot {
    pub fn rect(&self) -> OrientedRect {
        OrientedRect {
            center: self.center,
            heading: self.heading,
            length: self.length,
            width: self.width,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpec {
    pub length: f64,
    pub width: f64,
    /// Per side.
    pub door_clearance: f64,
    /// Per end, parallel slots.
    pub longitudinal_margin: f64,
    /// Slack on the dimension not covered by the other margins.
    pub minor_margin: f64,
}

impl Default for VehicleSpec {
    fn default() -> Self {
        Self {
            length: 4.5,
            width: 1.8,
            door_clearance: 0.7,
            longitudinal_margin: 0.6,
            minor_margin: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub road_heading: f64,
    pub lane_threshold: f64,
    pub vehicle_threshold: f64,
    pub curb_threshold: f64,
    pub min_line_length: f64,
    /// RMS distance of line cells from their fitted axis.
    pub max_line_spread: f64,
    /// Lane cells separated by at most this gap belong to one marking.
    pub line_link_gap: f64,
    pub pair_max_angle_deg: f64,
    pub pair_min_separation: f64,
    pub pair_max_separation: f64,
    pub pair_min_overlap: f64,
    /// A pair bounds a slot along its markings when the longer marking is at
    /// least this fraction of the separation; across them otherwise.
    pub axis_ratio: f64,
    /// Gap kept between a slot's rear end and the curb bounding it.
    pub curb_setback: f64,
    /// Deepest slot searched for a rear curb.
    pub max_slot_depth: f64,
    pub min_freespace: f64,
    pub gap_confidence_factor: f64,
    pub forward_entry: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            road_heading: 0.0,
            lane_threshold: 0.5,
            vehicle_threshold: 1.0,
            curb_threshold: 0.5,
            min_line_length: 1.5,
            max_line_spread: 0.12,
            line_link_gap: 0.3,
            pair_max_angle_deg: 8.0,
            pair_min_separation: 2.0,
            pair_max_separation: 7.0,
            pair_min_overlap: 1.0,
            axis_ratio: 0.6,
            curb_setback: 0.3,
            max_slot_depth: 8.0,
            min_freespace: 0.8,
            gap_confidence_factor: 0.7,
            forward_entry: false,
        }
    }
}

/// Straight marking fitted to a cluster of lane cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSegment {
    pub centroid: [f64; 2],
    /// Direction angle (radians), in (−π/2, π/2].
    pub angle: f64,
    /// Extent of the cells along the direction, relative to the centroid.
    pub extent: (f64, f64),
    pub spread: f64,
    pub cells: usize,
}

impl LineSegment {
    pub fn direction(&self) -> V2 {
        V2::new(self.angle.cos(), self.angle.sin())
    }

    pub fn length(&self) -> f64 {
        self.extent.1 - self.extent.0
    }
}

/// Total-least-squares line through `points`.
pub fn fit_line(points: &[V2]) -> LineSegment {
    let n = points.len() as f64;
    let c = points.iter().sum::<V2>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let d = p - c;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    let mut angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    if angle <= -std::f64::consts::FRAC_PI_2 {
        angle += std::f64::consts::PI;
    }
    let d = V2::new(angle.cos(), angle.sin());
    let nrm = V2::new(-d.y, d.x);
    let (mut lo, mut hi, mut sq) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for p in points {
        let t = (p - c).dot(&d);
        lo = lo.min(t);
        hi = hi.max(t);
        sq += (p - c).dot(&nrm).powi(2);
    }
    LineSegment {
        centroid: [c.x, c.y],
        angle,
        extent: (lo, hi),
        spread: (sq / n).sqrt(),
        cells: points.len(),
    }
}

/// 8-connected components of cells where `pred` holds.
/// Groups cells satisfying `pred`; cells within `reach` cells of each other
/// (Chebyshev distance) share a group, so `reach` 1 is 8-connectivity.
pub fn components(reach: usize, pred: impl Fn(usize, usize) -> bool) -> Vec<Vec<(usize, usize)>> {
    let reach = reach.max(1) as i64;
    let mut seen = vec![false; MAP_CELLS * MAP_CELLS];
    let mut out = Vec::new();
    for r in 0..MAP_CELLS {
        for c in 0..MAP_CELLS {
            if seen[r * MAP_CELLS + c] || !pred(r, c) {
                continue;
            }
            seen[r * MAP_CELLS + c] = true;
            let mut comp = Vec::new();
            let mut queue = VecDeque::from([(r, c)]);
            while let Some((cr, cc)) = queue.pop_front() {
                comp.push((cr, cc));
                for dr in -reach..=reach {
                    for dc in -reach..=reach {
                        let (nr, nc) = (cr as i64 + dr, cc as i64 + dc);
                        if nr < 0 || nc < 0 || nr >= MAP_CELLS as i64 || nc >= MAP_CELLS as i64 {
                            continue;
                        }
                        let (nr, nc) = (nr as usize, nc as usize);
                        if !seen[nr * MAP_CELLS + nc] && pred(nr, nc) {
                            seen[nr * MAP_CELLS + nc] = true;
                            queue.push_back((nr, nc));
                        }
                    }
                }
            }
            out.push(comp);
        }
    }
    out
}

/// Splits points into groups separated by gaps of at least `gap` along `axis`.
fn split_by_gaps(points: &[V2], axis: &V2, gap: f64) -> Vec<Vec<V2>> {
    let mut sorted: Vec<(f64, V2)> = points.iter().map(|p| (p.dot(axis), *p)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut groups: Vec<Vec<V2>> = vec![Vec::new()];
    for (i, (t, p)) in sorted.iter().enumerate() {
        if i > 0 && t - sorted[i - 1].0 >= gap {
            groups.push(Vec::new());
        }
        groups.last_mut().expect("nonempty").push(*p);
    }
    groups
}

/// Extracts straight marking segments from the lane channel.
pub fn extract_lines(map: &OccupancyMap, cfg: &PlannerConfig) -> Vec<LineSegment> {
    let reach = (cfg.line_link_gap / MAP_RESOLUTION).round() as usize + 1;
    let comps = components(reach, |r, c| map.get(Channel::LaneMarking, r, c) > cfg.lane_threshold);
    let mut lines = Vec::new();
    for comp in comps {
        let pts: Vec<V2> = comp.iter().map(|&(r, c)| OccupancyMap::cell_center(r, c)).collect();
        collect_lines(&pts, cfg, &mut lines, 0);
    }
    merge_collinear(lines)
}

fn collect_lines(pts: &[V2], cfg: &PlannerConfig, out: &mut Vec<LineSegment>, depth: usize) {
    if pts.len() < 3 {
        return;
    }
    let mut line = fit_line(pts);
    // cell centers sit half a cell inside the marking's ends
    line.extent = (line.extent.0 - MAP_RESOLUTION / 2.0, line.extent.1 + MAP_RESOLUTION / 2.0);
    if line.spread <= cfg.max_line_spread {
        if line.length() >= cfg.min_line_length {
            out.push(line);
        }
        return;
    }
    if depth >= 2 {
        return;
    }
    // merged neighbouring markings: separate across the fitted axis
    let d = line.direction();
    let parts = split_by_gaps(pts, &V2::new(-d.y, d.x), 0.15);
    if parts.len() > 1 {
        for part in parts {
            collect_lines(&part, cfg, out, depth + 1);
        }
    }
}

fn merge_collinear(mut lines: Vec<LineSegment>) -> Vec<LineSegment> {
    loop {
        let mut merged = false;
        'outer: for i in 0..lines.len() {
            for j in i + 1..lines.len() {
                let (a, b) = (&lines[i], &lines[j]);
                if line_angle(a.angle, b.angle).to_degrees() > 5.0 {
                    continue;
                }
                let d = a.direction();
                let nrm = V2::new(-d.y, d.x);
                let off = V2::from(b.centroid) - V2::from(a.centroid);
                if off.dot(&nrm).abs() > 0.2 {
                    continue;
                }
                let t = off.dot(&d);
                let half_b = b.length() / 2.0;
                let gap = (t - half_b - a.extent.1).max(a.extent.0 - (t + half_b));
                if gap > 1.0 {
                    continue;
                }
                let pts = segment_points(a).into_iter().chain(segment_points(b)).collect::<Vec<_>>();
                let mut joined = fit_line(&pts);
                joined.cells = a.cells + b.cells;
                joined.spread = a.spread.max(b.spread);
                lines[i] = joined;
                lines.remove(j);
                merged = true;
                break 'outer;
            }
        }
        if !merged {
            return lines;
        }
    }
}

fn segment_points(l: &LineSegment) -> [V2; 2] {
    let c = V2::from(l.centroid);
    let d = l.direction();
    [c + d * l.extent.0, c + d * l.extent.1]
}

/// Rake of a slot axis against the road, degrees in [0, 90].
pub fn rake_deg(heading: f64, road_heading: f64) -> f64 {
    line_angle(heading, road_heading).to_degrees()
}

pub fn classify_rake(rake_deg: f64) -> Scenario {
    if rake_deg < 15.0 {
        Scenario::Parallel
    } else if rake_deg > 75.0 {
        Scenario::Perpendicular
    } else if (30.0..=60.0).contains(&rake_deg) {
        Scenario::Fishbone
    } else {
        Scenario::Ambiguous
    }
}

pub fn classify_slot(slot: &ParkingSlot, road_heading: f64) -> Scenario {
    classify_rake(rake_deg(slot.heading, road_heading))
}

/// Orients a slot axis: along the road for parallel-ish axes, otherwise away
/// from the ego (origin) side of the road.
fn orient_axis(axis: V2, center: &V2, road_heading: f64) -> V2 {
    let road = V2::new(road_heading.cos(), road_heading.sin());
    let normal = V2::new(-road.y, road.x);
    let along = if rake_deg(axis.y.atan2(axis.x), road_heading) < 45.0 {
        axis.dot(&road)
    } else {
        axis.dot(&normal) * center.dot(&normal)
    };
    if along < 0.0 {
        -axis
    } else {
        axis
    }
}

fn make_slot(center: V2, axis: V2, length: f64, width: f64, confidence: f64, cue: SlotCue, cfg: &PlannerConfig) -> ParkingSlot {
    let axis = orient_axis(axis, &center, cfg.road_heading);
    let heading = axis.y.atan2(axis.x);
    let rake = rake_deg(heading, cfg.road_heading);
    ParkingSlot {
        center: [center.x, center.y],
        heading,
        rake_deg: rake,
        length,
        width,
        scenario: classify_rake(rake),
        confidence,
        entry_direction: if cfg.forward_entry && classify_rake(rake) != Scenario::Parallel {
            EntryDirection::Forward
        } else {
            EntryDirection::Backward
        },
        cue,
    }
}

/// Slot rectangles bounded by pairs of near-parallel markings.
fn marked_candidates(lines: &[LineSegment], cfg: &PlannerConfig) -> Vec<(V2, V2, f64, f64, bool)> {
    let mut out = Vec::new();
    for i in 0..lines.len() {
        for j in i + 1..lines.len() {
            let (a, b) = (&lines[i], &lines[j]);
            if line_angle(a.angle, b.angle).to_degrees() >= cfg.pair_max_angle_deg {
                continue;
            }
            let mut db = b.direction();
            if db.dot(&a.direction()) < 0.0 {
                db = -db;
            }
            let d = (a.direction() + db).normalize();
            let nrm = V2::new(-d.y, d.x);
            let (ca, cb) = (V2::from(a.centroid), V2::from(b.centroid));
            let sep = (cb - ca).dot(&nrm);
            if !(cfg.pair_min_separation..=cfg.pair_max_separation).contains(&sep.abs()) {
                continue;
            }
            let span = |l: &LineSegment| {
                let [p, q] = segment_points(l);
                let (s, t) = ((p - ca).dot(&d), (q - ca).dot(&d));
                (s.min(t), s.max(t))
            };
            let (sa, sb) = (span(a), span(b));
            let (lo, hi) = (sa.0.max(sb.0), sa.1.min(sb.1));
            let overlap = hi - lo;
            if overlap < cfg.pair_min_overlap {
                continue;
            }
            let between = lines.iter().enumerate().any(|(k, l)| {
                if k == i || k == j {
                    return false;
                }
                let off = (V2::from(l.centroid) - ca).dot(&nrm) / sep;
                let s = span(l);
                off > 0.05 && off < 0.95 && s.1 > lo && s.0 < hi
            });
            if between {
                continue;
            }
            let sep = sep.abs();
            let mid = ca + nrm * ((cb - ca).dot(&nrm) / 2.0);
            if a.length().max(b.length()) >= cfg.axis_ratio * sep {
                // dividers run between a common entrance line and a common
                // back line along the road; the extreme observed ends locate both
                let road = V2::new(cfg.road_heading.cos(), cfg.road_heading.sin());
                let rn = V2::new(-road.y, road.x);
                let base = mid + d * ((lo + hi) / 2.0);
                let side = base.dot(&rn).signum();
                let o = if d.dot(&rn) * side >= 0.0 { d } else { -d };
                let o_lat = o.dot(&rn) * side;
                let ends = [segment_points(a), segment_points(b)];
                let (near, far) = if o_lat > 0.2 {
                    let lat: Vec<f64> = ends.iter().flatten().map(|p| p.dot(&rn) * side).collect();
                    let entrance = lat.iter().copied().fold(f64::INFINITY, f64::min);
                    let back = lat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let base_lat = base.dot(&rn) * side;
                    let skew = sep / 2.0 * nrm.dot(&rn).abs();
                    ((entrance - base_lat + skew) / o_lat, (back - base_lat - skew) / o_lat)
                } else if o.dot(&d) > 0.0 {
                    (lo, hi)
                } else {
                    (-hi, -lo)
                };
                if far > near {
                    out.push((base + o * ((near + far) / 2.0), o, far - near, sep, true));
                }
            } else {
                let (u0, u1) = (sa.0.min(sb.0), sa.1.max(sb.1));
                out.push((mid + d * ((u0 + u1) / 2.0), nrm, sep, u1 - u0, false));
            }
        }
    }
    out
}

/// Moves the far end of a slot to the nearest curb evidence behind its
/// entrance, keeping `curb_setback`; unchanged when no curb is seen.
fn rear_at_curb(map: &OccupancyMap, center: V2, axis: V2, length: f64, width: f64, cfg: &PlannerConfig) -> (V2, f64) {
    let nrm = V2::new(-axis.y, axis.x);
    let near = -length / 2.0;
    let mut curb = f64::INFINITY;
    for r in 0..MAP_CELLS {
        for c in 0..MAP_CELLS {
            if map.get(Channel::Curb, r, c) <= cfg.curb_threshold {
                continue;
            }
            let d = OccupancyMap::cell_center(r, c) - center;
            let (t, s) = (d.dot(&axis), d.dot(&nrm));
            if t > near + cfg.pair_min_separation && t < near + cfg.max_slot_depth && s.abs() < width / 2.0 {
                curb = curb.min(t);
            }
        }
    }
    if !curb.is_finite() {
        return (center, length);
    }
    let far = curb - cfg.curb_setback;
    (center + axis * ((far + near) / 2.0), far - near)
}

/// Unmarked slots between consecutive vehicle evidence clusters on one side
/// of the road.
fn gap_candidates(map: &OccupancyMap, cfg: &PlannerConfig) -> Vec<(V2, V2, f64, f64)> {
    let road = V2::new(cfg.road_heading.cos(), cfg.road_heading.sin());
    let normal = V2::new(-road.y, road.x);
    let clusters = components(1, |r, c| map.get(Channel::Vehicle, r, c) > cfg.vehicle_threshold);
    let mut spans: Vec<(f64, f64, f64, f64)> = clusters
        .iter()
        .filter(|c| c.len() >= 20)
        .map(|cells| {
            let pts: Vec<V2> = cells.iter().map(|&(r, c)| OccupancyMap::cell_center(r, c)).collect();
            let along = pts.iter().map(|p| p.dot(&road));
            let lat = pts.iter().map(|p| p.dot(&normal));
            let (a0, a1) = along.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), t| (l.min(t), h.max(t)));
            let (l0, l1) = lat.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), t| (l.min(t), h.max(t)));
            (a0, a1, l0, l1)
        })
        .collect();
    spans.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::new();
    for side in [1.0, -1.0] {
        let row: Vec<_> = spans.iter().filter(|s| (s.2 + s.3) / 2.0 * side > 1.5).collect();
        for w in row.windows(2) {
            let (a, b) = (w[0], w[1]);
            let gap = b.0 - a.1;
            if gap < cfg.pair_min_separation {
                continue;
            }
            let entrance = if side > 0.0 { a.2.min(b.2) } else { a.3.max(b.3) };
            let mid_along = (a.1 + b.0) / 2.0;
            let (axis, length, width) = if gap < 5.0 {
                (normal * side, 5.0, gap)
            } else {
                (road, gap, 2.2)
            };
            let depth = if gap < 5.0 { length } else { width };
            let center = road * mid_along + normal * (entrance + side * depth / 2.0);
            let (center, length) = if gap < 5.0 {
                rear_at_curb(map, center, axis, length, width, cfg)
            } else {
                (center, length)
            };
            out.push((center, axis, length, width));
        }
    }
    out
}

fn rect_polygon(center: V2, axis: V2, length: f64, width: f64) -> Vec<V2> {
    OrientedRect {
        center: [center.x, center.y],
        heading: axis.y.atan2(axis.x),
        length,
        width,
    }
    .corners()
    .to_vec()
}

/// Every marked and vehicle-gap candidate before filtering; confidence is the
/// free fraction scaled by the cue factor. Unqueryable rectangles are dropped.
pub fn slot_candidates(map: &OccupancyMap, cfg: &PlannerConfig) -> Vec<ParkingSlot> {
    let lines = extract_lines(map, cfg);
    let mut out = Vec::new();
    let mut push = |center: V2, axis: V2, length: f64, width: f64, factor: f64, cue: SlotCue| {
        if length <= 0.0 || width <= 0.0 {
            return;
        }
        if let Ok(free) = map.query_freespace(&rect_polygon(center, axis, length, width)) {
            out.push(make_slot(center, axis, length, width, free * factor, cue, cfg));
        }
    };
    for (center, axis, length, width, along_lines) in marked_candidates(&lines, cfg) {
        let (center, length) = if along_lines {
            rear_at_curb(map, center, axis, length, width, cfg)
        } else {
            (center, length)
        };
        push(center, axis, length, width, 1.0, SlotCue::Markings);
    }
    for (center, axis, length, width) in gap_candidates(map, cfg) {
        push(center, axis, length, width, cfg.gap_confidence_factor, SlotCue::VehicleGap);
    }
    out
}

/// Candidates whose rectangles are at least `min_freespace` free, deduplicated
/// by center with marked candidates taking precedence.
pub fn detect_slots(map: &OccupancyMap, cfg: &PlannerConfig) -> Vec<ParkingSlot> {
    let mut slots: Vec<ParkingSlot> = Vec::new();
    for c in slot_candidates(map, cfg) {
        let factor = match c.cue {
            SlotCue::Markings => 1.0,
            SlotCue::VehicleGap => cfg.gap_confidence_factor,
        };
        if c.confidence < cfg.min_freespace * factor - 1e-12 {
            continue;
        }
        let center = V2::from(c.center);
        if slots.iter().any(|s| (V2::from(s.center) - center).norm() < 1.0) {
            continue;
        }
        slots.push(c);
    }
    slots
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Width,
    Length,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitCheck {
    pub fits: bool,
    /// First dimension that falls short.
    pub limiting: Option<Dimension>,
}

pub fn fits_vehicle(slot: &ParkingSlot, vehicle: &VehicleSpec) -> FitCheck {
    let (need_len, need_wid, width_first) = if slot.scenario == Scenario::Parallel {
        (
            vehicle.length + 2.0 * vehicle.longitudinal_margin,
            vehicle.width + vehicle.minor_margin,
            false,
        )
    } else {
        (
            vehicle.length + vehicle.minor_margin,
            vehicle.width + 2.0 * vehicle.door_clearance,
            true,
        )
    };
    // tolerance absorbs decimal rounding of the margin sums
    let eps = 1e-9;
    let width_ok = slot.width + eps >= need_wid;
    let length_ok = slot.length + eps >= need_len;
    let limiting = match (width_ok, length_ok, width_first) {
        (true, true, _) => None,
        (false, true, _) => Some(Dimension::Width),
        (true, false, _) => Some(Dimension::Length),
        (false, false, true) => Some(Dimension::Width),
        (false, false, false) => Some(Dimension::Length),
    };
    FitCheck {
        fits: limiting.is_none(),
        limiting,
    }
}

/// Best fitting slot by confidence − 0.02·distance to `ego`; ties go to the
/// smallest center x, then y.
pub fn select_slot(slots: &[ParkingSlot], ego: [f64; 2], vehicle: &VehicleSpec) -> Option<ParkingSlot> {
    let score = |s: &ParkingSlot| s.confidence - 0.02 * (V2::from(s.center) - V2::from(ego)).norm();
    slots
        .iter()
        .filter(|s| fits_vehicle(s, vehicle).fits)
        .min_by(|a, b| {
            score(b)
                .total_cmp(&score(a))
                .then(a.center[0].total_cmp(&b.center[0]))
                .then(a.center[1].total_cmp(&b.center[1]))
        })
        .copied()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetPose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub entry_direction: EntryDirection,
}

impl TargetPose {
    pub fn footprint(&self, vehicle: &VehicleSpec) -> OrientedRect {
        OrientedRect {
            center: [self.x, self.y],
            heading: self.heading,
            length: vehicle.length,
            width: vehicle.width,
        }
    }
}

/// Final parked pose at the slot center. Parallel slots end aligned with the
/// slot axis; a backward entry into an angled slot leaves the vehicle facing
/// the road, a forward entry facing into the slot.
pub fn target_pose(slot: &ParkingSlot, vehicle: &VehicleSpec) -> Result<TargetPose> {
    let fit = fits_vehicle(slot, vehicle);
    if !fit.fits {
        return Err(Error::Invalid(format!(
            "slot does not fit the vehicle (limiting {:?})",
            fit.limiting.expect("limiting dimension")
        )));
    }
    let (heading, entry) = match (slot.scenario, slot.entry_direction) {
        (Scenario::Parallel, _) => (slot.heading, EntryDirection::Backward),
        (_, EntryDirection::Forward) => (slot.heading, EntryDirection::Forward),
        (_, EntryDirection::Backward) => (
            crate::plane::wrap_angle(slot.heading + std::f64::consts::PI),
            EntryDirection::Backward,
        ),
    };
    Ok(TargetPose {
        x: slot.center[0],
        y: slot.center[1],
        heading,
        entry_direction: entry,
    })
}
