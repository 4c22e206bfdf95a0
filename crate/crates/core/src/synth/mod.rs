//! Procedural parking scenes and their raycast fisheye renderings.

mod generate;
mod render;
mod scene;

pub use generate::{generate_dataset, render_scene, scene_file, scene_seed, GenerateParams};
pub use render::{render_fisheye, soiling_coverage, soiling_labels, MIN_BOX_PIXELS, NOISE_SIGMA, TILE_COVERAGE};
pub use scene::{
    ego_footprint, sample_scene, Curb, Cuboid, Cylinder, Footprint, LineMarking, Road, SceneDescription,
    SceneParams, SlotTruth, SoilKind, SoilRegion, SoilingSpec, CURB_HEIGHT, CURB_WIDTH, CYCLIST_SIZE, LINE_WIDTH,
    MIN_SEPARATION, PEDESTRIAN_HEIGHT, PEDESTRIAN_RADIUS, VEHICLE_SIZE,
};
