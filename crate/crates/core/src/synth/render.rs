use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use super::scene::{Cuboid, Cylinder, SceneDescription, SoilKind, SoilingSpec};
use crate::dataset::{sample_stem, RgbImage, Sample};
use crate::geometry::{Camera, CameraRig};
use crate::labels::{DetClass, GtBox, Rect, SegClass, SegMask, SoilClass, SoilingTileReport};
use crate::plane::{OrientedRect, V2};

pub const NOISE_SIGMA: f64 = 0.02;
/// Boxes with fewer visible pixels than this are dropped.
pub const MIN_BOX_PIXELS: usize = 6;
/// Fraction of a tile that must be covered to label it soiled.
pub const TILE_COVERAGE: f64 = 0.25;

type Rgb = [f64; 3];

const ROAD: Rgb = [0.38, 0.38, 0.40];
const LANE: Rgb = [0.92, 0.92, 0.86];
const CURB: Rgb = [0.70, 0.66, 0.58];
const OFF_ROAD: Rgb = [0.30, 0.42, 0.24];
const SKY: Rgb = [0.62, 0.76, 0.92];
const OUTSIDE: Rgb = [0.0, 0.0, 0.0];
const VEHICLE_PALETTE: [Rgb; 5] = [
    [0.72, 0.12, 0.10],
    [0.12, 0.22, 0.58],
    [0.16, 0.16, 0.18],
    [0.55, 0.55, 0.60],
    [0.14, 0.45, 0.22],
];
const PEDESTRIAN: Rgb = [0.95, 0.72, 0.20];
const CYCLIST: Rgb = [0.20, 0.70, 0.85];
const SOIL_GRAY: f64 = 0.5;

#[derive(Debug, Clone, Copy)]
enum Shape {
    Box(OrientedRect, f64),
    Cylinder(V2, f64, f64),
}

#[derive(Debug, Clone, Copy)]
struct Solid {
    shape: Shape,
    /// Detection class and box index, `None` for curbs.
    object: Option<(DetClass, usize)>,
    color: Rgb,
}

struct Hit {
    t: f64,
    /// Whether the top face was hit.
    top: bool,
}

fn ray_box(rect: &OrientedRect, height: f64, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<Hit> {
    let (axis, normal) = (rect.axis(), rect.normal());
    let rel = V2::new(o.x, o.y) - rect.center();
    let lo = [rel.dot(&axis), rel.dot(&normal), o.z];
    let ld = [
        d.x * axis.x + d.y * axis.y,
        d.x * normal.x + d.y * normal.y,
        d.z,
    ];
    let bounds = [
        (-rect.length / 2.0, rect.length / 2.0),
        (-rect.width / 2.0, rect.width / 2.0),
        (0.0, height),
    ];
    let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
    let mut entry_axis = usize::MAX;
    for k in 0..3 {
        let (b0, b1) = bounds[k];
        if ld[k].abs() < 1e-15 {
            if lo[k] < b0 || lo[k] > b1 {
                return None;
            }
            continue;
        }
        let (mut ta, mut tb) = ((b0 - lo[k]) / ld[k], (b1 - lo[k]) / ld[k]);
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        if ta > t0 {
            t0 = ta;
            entry_axis = k;
        }
        t1 = t1.min(tb);
        if t0 > t1 {
            return None;
        }
    }
    (t0 > 1e-9).then_some(Hit {
        t: t0,
        top: entry_axis == 2,
    })
}

fn ray_cylinder(c: &V2, r: f64, h: f64, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<Hit> {
    let (px, py) = (o.x - c.x, o.y - c.y);
    let a = d.x * d.x + d.y * d.y;
    let mut best: Option<Hit> = None;
    if a > 1e-15 {
        let b = px * d.x + py * d.y;
        let cc = px * px + py * py - r * r;
        let disc = b * b - a * cc;
        if disc >= 0.0 {
            let t = (-b - disc.sqrt()) / a;
            let z = o.z + t * d.z;
            if t > 1e-9 && (0.0..=h).contains(&z) {
                best = Some(Hit { t, top: false });
            }
        }
    }
    if d.z.abs() > 1e-15 {
        let t = (h - o.z) / d.z;
        let (x, y) = (px + t * d.x, py + t * d.y);
        if t > 1e-9 && x * x + y * y <= r * r && best.as_ref().is_none_or(|b| t < b.t) {
            best = Some(Hit { t, top: true });
        }
    }
    best
}

fn solids(scene: &SceneDescription) -> Vec<Solid> {
    let mut out = Vec::new();
    for (i, v) in scene.parked_vehicles.iter().enumerate() {
        out.push(cuboid_solid(v, Some((DetClass::Vehicle, i)), VEHICLE_PALETTE[i % VEHICLE_PALETTE.len()]));
    }
    for (i, c) in scene.cyclists.iter().enumerate() {
        out.push(cuboid_solid(c, Some((DetClass::Cyclist, i)), CYCLIST));
    }
    for (i, p) in scene.pedestrians.iter().enumerate() {
        out.push(cylinder_solid(p, i));
    }
    for curb in &scene.curbs {
        for seg in curb.segments() {
            out.push(Solid {
                shape: Shape::Box(seg, curb.height),
                object: None,
                color: CURB,
            });
        }
    }
    out
}

fn cuboid_solid(c: &Cuboid, object: Option<(DetClass, usize)>, color: Rgb) -> Solid {
    Solid {
        shape: Shape::Box(c.footprint, c.height),
        object,
        color,
    }
}

fn cylinder_solid(p: &Cylinder, i: usize) -> Solid {
    Solid {
        shape: Shape::Cylinder(V2::from(p.center), p.radius, p.height),
        object: Some((DetClass::Pedestrian, i)),
        color: PEDESTRIAN,
    }
}

/// Class and color of the ground at `p`.
fn ground_class(scene: &SceneDescription, p: &V2) -> (SegClass, Rgb) {
    if scene.lane_markings.iter().any(|m| m.footprint().contains(p)) {
        (SegClass::Lane, LANE)
    } else if scene
        .curbs
        .iter()
        .flat_map(|c| c.segments())
        .any(|s| s.contains(p))
    {
        (SegClass::Curb, CURB)
    } else if scene.road.contains(p) {
        (SegClass::Road, ROAD)
    } else {
        (SegClass::Void, OFF_ROAD)
    }
}

/// Noise-free label and color of a single ray.
struct RayResult {
    class: SegClass,
    color: Rgb,
    object: Option<(DetClass, usize)>,
}

fn trace(scene: &SceneDescription, solids: &[Solid], origin: &Vector3<f64>, dir: &Vector3<f64>) -> RayResult {
    let mut nearest: Option<(f64, bool, &Solid)> = None;
    for s in solids {
        let hit = match s.shape {
            Shape::Box(rect, h) => ray_box(&rect, h, origin, dir),
            Shape::Cylinder(c, r, h) => ray_cylinder(&c, r, h, origin, dir),
        };
        if let Some(hit) = hit {
            if nearest.is_none_or(|(t, _, _)| hit.t < t) {
                nearest = Some((hit.t, hit.top, s));
            }
        }
    }
    let ground_t = (dir.z < -1e-12 && origin.z > 0.0).then(|| -origin.z / dir.z);
    match (nearest, ground_t) {
        (Some((t, top, s)), g) if g.is_none_or(|g| t < g) => {
            let shade = if top { 1.0 } else { 0.82 };
            RayResult {
                class: if s.object.is_none() {
                    SegClass::Curb
                } else {
                    SegClass::Void
                },
                color: s.color.map(|c| c * shade),
                object: s.object,
            }
        }
        (_, Some(t)) => {
            let p = origin + dir * t;
            let (class, color) = ground_class(scene, &V2::new(p.x, p.y));
            RayResult {
                class,
                color,
                object: None,
            }
        }
        _ => RayResult {
            class: SegClass::Void,
            color: SKY,
            object: None,
        },
    }
}

fn camera_stream(name: &str) -> u64 {
    CameraRig::NAMES
        .iter()
        .position(|n| *n == name)
        .unwrap_or(CameraRig::NAMES.len()) as u64
}

/// Pixel bounds (col0, row0, col1, row1) and pixel count of one object.
type Extent = (usize, usize, usize, usize, usize);

/// Raycasts one camera view with exact labels; soiling is overlaid after the
/// labels are taken.
pub fn render_fisheye(
    scene: &SceneDescription,
    scene_id: usize,
    camera: &Camera,
    soiling: Option<&SoilingSpec>,
    tiles: (usize, usize),
) -> Sample {
    let (w, h) = (camera.width(), camera.height());
    let solids = solids(scene);
    let n_objects = [
        scene.parked_vehicles.len(),
        scene.pedestrians.len(),
        scene.cyclists.len(),
    ];
    let mut extents: Vec<Vec<Option<Extent>>> =
        n_objects.iter().map(|&n| vec![None; n]).collect();
    let mut mask = SegMask::filled(w, h, SegClass::Void);
    let mut pixels = vec![0.0f64; 3 * w * h];
    let normal = Normal::new(0.0, NOISE_SIGMA).expect("valid sigma");
    let origin = camera.center();

    for row in 0..h {
        let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
        rng.set_stream((camera_stream(&camera.name) << 32) | row as u64);
        for col in 0..w {
            let ray = camera.unproject(col as f64 + 0.5, row as f64 + 0.5);
            let (class, color) = match ray {
                Err(_) => (SegClass::Void, OUTSIDE),
                Ok(dir) => {
                    let r = trace(scene, &solids, &origin, &dir);
                    if let Some((cls, i)) = r.object {
                        let e = &mut extents[cls.index()][i];
                        *e = Some(match *e {
                            None => (col, row, col, row, 1),
                            Some((c0, r0, c1, r1, n)) => (c0.min(col), r0.min(row), c1.max(col), r1.max(row), n + 1),
                        });
                    }
                    (r.class, r.color)
                }
            };
            mask.set(col, row, class);
            let p = 3 * (row * w + col);
            for c in 0..3 {
                pixels[p + c] = color[c] + rng.sample(normal);
            }
        }
    }

    let mut boxes = Vec::new();
    for class in DetClass::ALL {
        for (c0, r0, c1, r1, n) in extents[class.index()].iter().flatten().copied() {
            if n >= MIN_BOX_PIXELS && c1 > c0 && r1 > r0 {
                boxes.push(GtBox {
                    class,
                    rect: Rect {
                        x_min: c0 as f64,
                        y_min: r0 as f64,
                        x_max: (c1 + 1) as f64,
                        y_max: (r1 + 1) as f64,
                    },
                });
            }
        }
    }

    let report = match soiling {
        Some(spec) => apply_soiling(&mut pixels, w, h, spec, tiles),
        None => SoilingTileReport::clean(tiles.0, tiles.1),
    };
    let values: Vec<f32> = pixels.iter().map(|&v| v as f32).collect();
    Sample {
        stem: sample_stem(scene_id, &camera.name),
        scene_id,
        camera: camera.name.clone(),
        horizon_row: camera.horizon_row(),
        image: RgbImage::from_unit(w, h, &values),
        mask,
        boxes,
        soiling: report,
    }
}

/// Per-pixel coverage of each soiling kind (pixel centers inside a disc).
pub fn soiling_coverage(spec: &SoilingSpec, w: usize, h: usize) -> (Vec<bool>, Vec<bool>) {
    let mut opaque = vec![false; w * h];
    let mut transparent = vec![false; w * h];
    for region in &spec.regions {
        let target = match region.kind {
            SoilKind::Opaque => &mut opaque,
            SoilKind::Transparent => &mut transparent,
        };
        for row in 0..h {
            for col in 0..w {
                let dx = col as f64 + 0.5 - region.center[0];
                let dy = row as f64 + 0.5 - region.center[1];
                if dx * dx + dy * dy <= region.radius * region.radius {
                    target[row * w + col] = true;
                }
            }
        }
    }
    (opaque, transparent)
}

/// Tile labels and indicator bits for `spec` over a `tiles` = (cols, rows) grid.
pub fn soiling_labels(spec: &SoilingSpec, w: usize, h: usize, tiles: (usize, usize)) -> SoilingTileReport {
    let (opaque, transparent) = soiling_coverage(spec, w, h);
    tile_labels(&opaque, &transparent, w, h, tiles)
}

fn tile_labels(opaque: &[bool], transparent: &[bool], w: usize, h: usize, (cols, rows): (usize, usize)) -> SoilingTileReport {
    let mut report = SoilingTileReport::clean(cols, rows);
    for tr in 0..rows {
        for tc in 0..cols {
            let (r0, r1) = (tr * h / rows, (tr + 1) * h / rows);
            let (c0, c1) = (tc * w / cols, (tc + 1) * w / cols);
            let total = ((r1 - r0) * (c1 - c0)) as f64;
            let count = |cov: &[bool]| {
                (r0..r1)
                    .flat_map(|r| (c0..c1).map(move |c| r * w + c))
                    .filter(|&i| cov[i])
                    .count() as f64
            };
            let label = if count(opaque) >= TILE_COVERAGE * total {
                SoilClass::Opaque
            } else if count(transparent) >= TILE_COVERAGE * total {
                SoilClass::Transparent
            } else {
                SoilClass::Clean
            };
            report.tiles[tr * cols + tc] = label;
        }
    }
    report.opaque = report.tiles.contains(&SoilClass::Opaque);
    report.transparent = report.tiles.contains(&SoilClass::Transparent);
    report
}

fn apply_soiling(pixels: &mut [f64], w: usize, h: usize, spec: &SoilingSpec, tiles: (usize, usize)) -> SoilingTileReport {
    let (opaque, transparent) = soiling_coverage(spec, w, h);
    let source = pixels.to_vec();
    for row in 0..h {
        for col in 0..w {
            let i = row * w + col;
            if opaque[i] {
                pixels[3 * i..3 * i + 3].fill(SOIL_GRAY);
            } else if transparent[i] {
                let mut acc = [0.0; 3];
                let mut n = 0.0;
                for r in row.saturating_sub(2)..(row + 3).min(h) {
                    for c in col.saturating_sub(2)..(col + 3).min(w) {
                        for k in 0..3 {
                            acc[k] += source[3 * (r * w + c) + k];
                        }
                        n += 1.0;
                    }
                }
                for k in 0..3 {
                    pixels[3 * i + k] = acc[k] / n;
                }
            }
        }
    }
    tile_labels(&opaque, &transparent, w, h, tiles)
}
