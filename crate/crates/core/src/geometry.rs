//! Equidistant fisheye cameras on a ground vehicle.
//!
//! World frame: z up, ground plane z = 0, origin at the rear-axle center,
//! ego heading +x. Camera frame: z along the optical axis, x right, y down.
//! Pixel coordinates address pixel edges, so the center of pixel (col, row)
//! is (col + 0.5, row + 0.5).

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_MAX_THETA_DEG: f64 = 95.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("point coincides with the camera center")]
    AtCameraCenter,
    #[error("outside field of view")]
    OutsideFov,
    #[error("above horizon")]
    AboveHorizon,
    #[error("invalid camera {name}: {detail}")]
    InvalidCamera { name: String, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisheyeIntrinsics {
    /// Pixels per radian of incidence angle.
    pub focal_px: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Half field of view in radians.
    pub max_theta: f64,
}

impl FisheyeIntrinsics {
    /// Principal point at the image center; `max_theta` lands on the left and
    /// right image edges.
    pub fn centered(width: usize, height: usize, max_theta: f64) -> Self {
        Self {
            focal_px: (width as f64 / 2.0) / max_theta,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
            max_theta,
        }
    }
}

/// Extrinsics: `rotation` maps world vectors into the camera frame and
/// `center` is the camera position in the world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub rotation: Matrix3<f64>,
    pub center: Vector3<f64>,
}

impl CameraPose {
    /// Builds a pose from mounting angles in radians.
    ///
    /// The body axes are x along the optical axis, y left, z up; the body is
    /// rotated by yaw about z, then pitch about the new y (positive tilts the
    /// axis down), then roll about the new x.
    pub fn from_mounting(yaw: f64, pitch: f64, roll: f64, center: Vector3<f64>) -> Self {
        let world_from_body = Rotation3::from_euler_angles(roll, pitch, yaw);
        #[rustfmt::skip]
        let cam_from_body = Matrix3::new(
            0.0, -1.0, 0.0,
            0.0, 0.0, -1.0,
            1.0, 0.0, 0.0,
        );
        Self {
            rotation: cam_from_body * world_from_body.matrix().transpose(),
            center,
        }
    }

    pub fn optical_axis(&self) -> Vector3<f64> {
        self.rotation.transpose() * Vector3::z()
    }

    pub fn to_camera(&self, world: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * (world - self.center)
    }

    pub fn direction_to_world(&self, cam_dir: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * cam_dir
    }
}

/// Mounting description as stored in rig calibration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub name: String,
    pub focal_px: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(rename = "W")]
    pub width: usize,
    #[serde(rename = "H")]
    pub height: usize,
    pub max_theta_deg: f64,
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    pub roll_deg: f64,
    pub translation: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    /// Angle from the optical axis in radians.
    pub theta: f64,
    pub in_fov: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraSpec", into = "CameraSpec")]
pub struct Camera {
    pub name: String,
    pub intrinsics: FisheyeIntrinsics,
    pub pose: CameraPose,
    mounting_deg: [f64; 3],
}

impl TryFrom<CameraSpec> for Camera {
    type Error = GeometryError;

    fn try_from(spec: CameraSpec) -> Result<Self, GeometryError> {
        let invalid = |detail: &str| GeometryError::InvalidCamera {
            name: spec.name.clone(),
            detail: detail.to_string(),
        };
        let max_theta = spec.max_theta_deg.to_radians();
        if !(spec.focal_px > 0.0 && spec.focal_px.is_finite()) {
            return Err(invalid("focal_px must be positive"));
        }
        if !(max_theta > 0.0 && max_theta < std::f64::consts::PI) {
            return Err(invalid("max_theta_deg must lie in (0, 180)"));
        }
        if spec.width == 0 || spec.height == 0 {
            return Err(invalid("image size must be nonzero"));
        }
        let all_finite = [spec.cx, spec.cy, spec.yaw_deg, spec.pitch_deg, spec.roll_deg]
            .iter()
            .chain(&spec.translation)
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(invalid("non-finite calibration value"));
        }
        let pose = CameraPose::from_mounting(
            spec.yaw_deg.to_radians(),
            spec.pitch_deg.to_radians(),
            spec.roll_deg.to_radians(),
            Vector3::from(spec.translation),
        );
        Ok(Camera {
            name: spec.name,
            intrinsics: FisheyeIntrinsics {
                focal_px: spec.focal_px,
                cx: spec.cx,
                cy: spec.cy,
                width: spec.width,
                height: spec.height,
                max_theta,
            },
            pose,
            mounting_deg: [spec.yaw_deg, spec.pitch_deg, spec.roll_deg],
        })
    }
}

impl From<Camera> for CameraSpec {
    fn from(cam: Camera) -> Self {
        let k = cam.intrinsics;
        CameraSpec {
            name: cam.name,
            focal_px: k.focal_px,
            cx: k.cx,
            cy: k.cy,
            width: k.width,
            height: k.height,
            max_theta_deg: k.max_theta.to_degrees(),
            yaw_deg: cam.mounting_deg[0],
            pitch_deg: cam.mounting_deg[1],
            roll_deg: cam.mounting_deg[2],
            translation: cam.pose.center.into(),
        }
    }
}

impl Camera {
    /// Centered equidistant camera mounted at `translation` with angles in degrees.
    pub fn mounted(
        name: &str,
        width: usize,
        height: usize,
        yaw_deg: f64,
        pitch_deg: f64,
        translation: [f64; 3],
    ) -> Self {
        let k = FisheyeIntrinsics::centered(width, height, DEFAULT_MAX_THETA_DEG.to_radians());
        Camera::try_from(CameraSpec {
            name: name.to_string(),
            focal_px: k.focal_px,
            cx: k.cx,
            cy: k.cy,
            width,
            height,
            max_theta_deg: DEFAULT_MAX_THETA_DEG,
            yaw_deg,
            pitch_deg,
            roll_deg: 0.0,
            translation,
        })
        .expect("valid default camera")
    }

    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height
    }

    pub fn center(&self) -> Vector3<f64> {
        self.pose.center
    }

    /// Projects a camera-frame direction (any length) to a pixel.
    pub fn project_camera_dir(&self, p: &Vector3<f64>) -> Result<Projection, GeometryError> {
        let norm = p.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(GeometryError::AtCameraCenter);
        }
        let k = &self.intrinsics;
        let rho = p.x.hypot(p.y);
        let theta = rho.atan2(p.z);
        let r = k.focal_px * theta;
        let (u, v) = if rho > 0.0 {
            (k.cx + r * p.x / rho, k.cy + r * p.y / rho)
        } else {
            (k.cx, k.cy)
        };
        Ok(Projection {
            u,
            v,
            theta,
            in_fov: theta <= k.max_theta,
        })
    }

    pub fn project(&self, world: &Vector3<f64>) -> Result<Projection, GeometryError> {
        self.project_camera_dir(&self.pose.to_camera(world))
    }

    /// Unit ray in the camera frame through pixel coordinates `(u, v)`.
    pub fn unproject_camera(&self, u: f64, v: f64) -> Result<Vector3<f64>, GeometryError> {
        let k = &self.intrinsics;
        let (dx, dy) = (u - k.cx, v - k.cy);
        let r = dx.hypot(dy);
        let theta = r / k.focal_px;
        if theta > k.max_theta {
            return Err(GeometryError::OutsideFov);
        }
        if r == 0.0 {
            return Ok(Vector3::z());
        }
        let s = theta.sin() / r;
        Ok(Vector3::new(dx * s, dy * s, theta.cos()))
    }

    /// Unit ray in the world frame, anchored at [`Camera::center`].
    pub fn unproject(&self, u: f64, v: f64) -> Result<Vector3<f64>, GeometryError> {
        Ok(self.pose.direction_to_world(&self.unproject_camera(u, v)?))
    }

    /// Intersects the pixel's ray with the ground plane.
    pub fn footpoint_to_ground(&self, u: f64, v: f64) -> Result<[f64; 2], GeometryError> {
        let ray = self.unproject(u, v)?;
        ground_hit(&self.pose.center, &ray)
            .map(|p| [p.x, p.y])
            .ok_or(GeometryError::AboveHorizon)
    }

    /// Row of the image where the horizontal direction under the optical axis
    /// appears; 0 when that direction is outside the field of view.
    pub fn horizon_row(&self) -> usize {
        let axis = self.pose.optical_axis();
        let flat = Vector3::new(axis.x, axis.y, 0.0);
        if flat.norm() < 1e-12 {
            return 0;
        }
        let p = self.pose.rotation * flat;
        match self.project_camera_dir(&p) {
            Ok(proj) if proj.in_fov => {
                let row = proj.v.floor();
                row.clamp(0.0, (self.height() - 1) as f64) as usize
            }
            _ => 0,
        }
    }

    /// Whether a world direction falls inside the field of view.
    pub fn sees_direction(&self, dir: &Vector3<f64>) -> bool {
        self.project_camera_dir(&(self.pose.rotation * dir))
            .map(|p| p.in_fov)
            .unwrap_or(false)
    }

    /// Same mounting re-expressed for a different image size.
    pub fn rescaled(&self, width: usize, height: usize) -> Camera {
        let mut spec = CameraSpec::from(self.clone());
        let sx = width as f64 / self.width() as f64;
        let sy = height as f64 / self.height() as f64;
        spec.focal_px *= sx;
        spec.cx *= sx;
        spec.cy *= sy;
        spec.width = width;
        spec.height = height;
        Camera::try_from(spec).expect("rescaling keeps a valid camera")
    }
}

/// Point where `origin + t·dir` meets z = 0 for some t > 0.
pub fn ground_hit(origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<Vector3<f64>> {
    if dir.z >= -1e-12 || origin.z <= 0.0 {
        return None;
    }
    let t = -origin.z / dir.z;
    Some(origin + dir * t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub cameras: Vec<Camera>,
}

impl CameraRig {
    pub const NAMES: [&'static str; 4] = ["front", "rear", "left", "right"];

    /// Front and rear at x = ±2.0 m, height 0.7 m, pitched 25° down; left and
    /// right at y = ±0.9 m, height 0.9 m, pitched 40° down, yawed ±90°.
    pub fn default_rig(width: usize, height: usize) -> Self {
        CameraRig {
            cameras: vec![
                Camera::mounted("front", width, height, 0.0, 25.0, [2.0, 0.0, 0.7]),
                Camera::mounted("rear", width, height, 180.0, 25.0, [-2.0, 0.0, 0.7]),
                Camera::mounted("left", width, height, 90.0, 40.0, [0.0, 0.9, 0.9]),
                Camera::mounted("right", width, height, -90.0, 40.0, [0.0, -0.9, 0.9]),
            ],
        }
    }

    pub fn camera(&self, name: &str) -> Option<&Camera> {
        self.cameras.iter().find(|c| c.name == name)
    }

    pub fn rescaled(&self, width: usize, height: usize) -> Self {
        CameraRig {
            cameras: self.cameras.iter().map(|c| c.rescaled(width, height)).collect(),
        }
    }

    /// Horizontal azimuths (degrees, sampled every `step_deg`) that no camera sees.
    pub fn uncovered_azimuths(&self, step_deg: f64) -> Vec<f64> {
        let mut missing = Vec::new();
        let mut az = 0.0;
        while az < 360.0 {
            let rad = f64::to_radians(az);
            let dir = Vector3::new(rad.cos(), rad.sin(), 0.0);
            if !self.cameras.iter().any(|c| c.sees_direction(&dir)) {
                missing.push(az);
            }
            az += step_deg;
        }
        missing
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn level_camera(pitch_deg: f64, height_m: f64) -> Camera {
        Camera::mounted("test", 1280, 384, 0.0, pitch_deg, [0.0, 0.0, height_m])
    }

    #[test]
    fn rotation_is_orthonormal() {
        for cam in CameraRig::default_rig(320, 96).cameras {
            let r = cam.pose.rotation;
            assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-12);
            assert!((r.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn optical_axis_follows_mounting() {
        let cam = Camera::mounted("left", 320, 96, 90.0, 40.0, [0.0, 0.9, 0.9]);
        let axis = cam.pose.optical_axis();
        let p = 40f64.to_radians();
        assert!((axis - Vector3::new(0.0, p.cos(), -p.sin())).norm() < 1e-12);
    }

    #[test]
    fn point_on_axis_projects_to_principal_point() {
        let cam = level_camera(10.0, 1.0);
        let p = cam.center() + cam.pose.optical_axis() * 3.0;
        let proj = cam.project(&p).unwrap();
        assert!((proj.u - 640.0).abs() < 1e-9 && (proj.v - 192.0).abs() < 1e-9);
        assert!(matches!(
            cam.project(&cam.center()),
            Err(GeometryError::AtCameraCenter)
        ));
    }

    #[test]
    fn max_theta_lands_on_image_edge() {
        let cam = level_camera(0.0, 1.0);
        assert!((cam.intrinsics.focal_px - 385.99).abs() < 0.01);
        let t = cam.intrinsics.max_theta;
        // rotate the optical axis (+x world) by max_theta toward -y (camera right)
        let p = cam.center() + Vector3::new(t.cos(), -t.sin(), 0.0);
        let proj = cam.project(&p).unwrap();
        assert!((proj.u - 1280.0).abs() < 1e-9);
        assert!(proj.in_fov);
    }

    #[test]
    fn unproject_rejects_outside_fov() {
        let cam = level_camera(0.0, 1.0);
        assert_eq!(cam.unproject(0.0, 0.0), Err(GeometryError::OutsideFov));
        let axis = cam.unproject(640.0, 192.0).unwrap();
        assert!((axis - cam.pose.optical_axis()).norm() < 1e-12);
    }

    #[test]
    fn footpoint_examples() {
        let down = Camera::mounted("down", 1280, 384, 0.0, 90.0, [0.0, 0.0, 1.0]);
        let g = down.footpoint_to_ground(640.0, 192.0).unwrap();
        assert!(g[0].abs() < 1e-12 && g[1].abs() < 1e-12);

        let level = level_camera(0.0, 1.0);
        assert_eq!(
            level.footpoint_to_ground(640.0, 192.0),
            Err(GeometryError::AboveHorizon)
        );

        let pitched = level_camera(30.0, 1.0);
        let g = pitched.footpoint_to_ground(640.0, 192.0).unwrap();
        let oracle = 1.0 / 30f64.to_radians().tan();
        assert!((g[0] - oracle).abs() < 1e-6 && g[1].abs() < 1e-9);
    }

    #[test]
    fn horizon_examples() {
        assert_eq!(level_camera(0.0, 1.0).horizon_row(), 192);
        let mild = level_camera(5.0, 1.0);
        let expect = (192.0 - mild.intrinsics.focal_px * 5f64.to_radians()).floor() as usize;
        assert_eq!(mild.horizon_row(), expect);
        assert!(mild.horizon_row() < 192);
        // 192 - 385.99 * 0.523599 = -10.1, clamped
        assert_eq!(level_camera(30.0, 1.0).horizon_row(), 0);
        let straight_down = Camera::mounted("down", 320, 96, 0.0, 90.0, [0.0, 0.0, 1.0]);
        assert_eq!(straight_down.horizon_row(), 0);
    }

    #[test]
    fn default_rig_covers_all_azimuths() {
        let rig = CameraRig::default_rig(1280, 384);
        assert!(rig.uncovered_azimuths(1.0).is_empty());
    }

    #[test]
    fn rig_json_round_trip() {
        let rig = CameraRig::default_rig(320, 96);
        let text = serde_json::to_string(&rig).unwrap();
        assert!(text.contains("\"max_theta_deg\":95.0"));
        let back: CameraRig = serde_json::from_str(&text).unwrap();
        for (a, b) in rig.cameras.iter().zip(&back.cameras) {
            assert_eq!(a.name, b.name);
            assert!((a.pose.rotation - b.pose.rotation).norm() < 1e-12);
            assert!((a.intrinsics.max_theta - b.intrinsics.max_theta).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_spec_is_rejected() {
        let mut spec = CameraSpec::from(level_camera(0.0, 1.0));
        spec.focal_px = -1.0;
        assert!(Camera::try_from(spec).is_err());
    }
}
