//! End-to-end parking: per-camera perception → virtual map → slot choice.

use serde::{Deserialize, Serialize};

use crate::dataset::Sample;
use crate::error::Result;
use crate::eval::{DecodeSettings, Predictions};
use crate::geometry::CameraRig;
use crate::labels::{DetectedBox, SegMask, SoilingTileReport};
use crate::map::{FusedObject, OccupancyMap, SkippedBox};
use crate::model::Network;
use crate::planner::{detect_slots, select_slot, target_pose, ParkingSlot, PlannerConfig, TargetPose, VehicleSpec};

/// Cameras with raised soiling indicators at which perception is distrusted.
pub const DEGRADED_CAMERA_COUNT: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParkStatus {
    SlotFound,
    NoSlot,
    PerceptionDegraded,
}

/// Decoded perception of one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraPerception {
    pub camera: String,
    pub mask: SegMask,
    pub boxes: Vec<DetectedBox>,
    pub soiling: SoilingTileReport,
}

impl CameraPerception {
    pub fn oracle(sample: &Sample) -> Self {
        Self::from_predictions(&sample.camera, Predictions::oracle(sample))
    }

    pub fn from_network(net: &Network<f32>, sample: &Sample, settings: &DecodeSettings) -> Result<Self> {
        Ok(Self::from_predictions(
            &sample.camera,
            Predictions::from_network(net, sample, settings)?,
        ))
    }

    fn from_predictions(camera: &str, p: Predictions) -> Self {
        Self {
            camera: camera.to_string(),
            mask: p.mask.expect("segmentation output"),
            boxes: p.boxes.expect("detection output"),
            soiling: p.soiling.expect("soiling output"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParkReport {
    pub status: ParkStatus,
    pub soiled_cameras: Vec<String>,
    pub slots: Vec<ParkingSlot>,
    pub chosen: Option<ParkingSlot>,
    pub target_pose: Option<TargetPose>,
    pub fused_objects: Vec<FusedObject>,
    pub skipped_boxes: Vec<SkippedBox>,
}

/// Fuses all views into a fresh map and plans a slot; aborts without planning
/// when too many cameras report soiling.
pub fn plan_parking(
    views: &[CameraPerception],
    rig: &CameraRig,
    planner: &PlannerConfig,
    vehicle: &VehicleSpec,
) -> Result<(ParkReport, OccupancyMap)> {
    let soiled_cameras: Vec<String> = views
        .iter()
        .filter(|v| v.soiling.any_raised())
        .map(|v| v.camera.clone())
        .collect();
    let mut map = OccupancyMap::new();
    let mut report = ParkReport {
        status: ParkStatus::NoSlot,
        soiled_cameras,
        slots: Vec::new(),
        chosen: None,
        target_pose: None,
        fused_objects: Vec::new(),
        skipped_boxes: Vec::new(),
    };
    if report.soiled_cameras.len() >= DEGRADED_CAMERA_COUNT {
        report.status = ParkStatus::PerceptionDegraded;
        return Ok((report, map));
    }
    let cams: Vec<_> = views
        .iter()
        .map(|v| {
            rig.camera(&v.camera)
                .ok_or_else(|| crate::Error::Config(format!("camera {:?} not in rig", v.camera)))
        })
        .collect::<Result<_>>()?;
    let seg: Vec<_> = cams.iter().zip(views).map(|(c, v)| (*c, &v.mask)).collect();
    let det: Vec<_> = cams.iter().zip(views).map(|(c, v)| (*c, v.boxes.as_slice())).collect();
    let fusion = map.fuse_views(&seg, &det);
    report.fused_objects = fusion.objects;
    report.skipped_boxes = fusion.skipped;
    report.slots = detect_slots(&map, planner);
    report.chosen = select_slot(&report.slots, [0.0, 0.0], vehicle);
    if let Some(slot) = &report.chosen {
        report.target_pose = Some(target_pose(slot, vehicle)?);
        report.status = ParkStatus::SlotFound;
    }
    Ok((report, map))
}
