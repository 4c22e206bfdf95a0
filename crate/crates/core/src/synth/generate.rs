use std::fs;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::render::render_fisheye;
use super::scene::{sample_scene, SceneDescription, SceneParams};
use crate::dataset::{sample_stem, write_json, write_sample, Manifest, Sample, MANIFEST_FILE};
use crate::error::{Error, Result};
use crate::geometry::CameraRig;
use crate::model::NetworkConfig;
use crate::train::split_dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateParams {
    pub width: usize,
    pub height: usize,
    /// Soiling tile grid (cols, rows).
    pub tiles: (usize, usize),
    pub scene: SceneParams,
}

impl GenerateParams {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            tiles: NetworkConfig::desk().soiling_tiles,
            scene: SceneParams::new(width, height),
        }
    }

    pub fn desk() -> Self {
        let c = NetworkConfig::desk();
        Self::new(c.input_width, c.input_height)
    }
}

/// Seed of scene `index` in a dataset generated from `seed`.
pub fn scene_seed(seed: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng.next_u64()
}

pub fn scene_file(scene_id: usize) -> String {
    format!("scene_{scene_id:05}.json")
}

/// Renders all rig cameras of one scene.
pub fn render_scene(
    scene: &SceneDescription,
    scene_id: usize,
    rig: &CameraRig,
    tiles: (usize, usize),
) -> Vec<Sample> {
    rig.cameras
        .iter()
        .map(|cam| render_fisheye(scene, scene_id, cam, scene.soiling.get(&cam.name), tiles))
        .collect()
}

/// Generates `n` scenes × 4 views into `out_dir` (created if missing; its
/// parent must exist) and writes the manifest.
pub fn generate_dataset(n: usize, seed: u64, out_dir: &Path, params: &GenerateParams) -> Result<Manifest> {
    if n < 10 {
        return Err(Error::Dataset(format!("need at least 10 scenes, got {n}")));
    }
    if !out_dir.is_dir() {
        fs::create_dir(out_dir).map_err(|e| Error::io(out_dir, e))?;
    }
    let rig = CameraRig::default_rig(params.width, params.height);
    for id in 0..n {
        let scene = sample_scene(scene_seed(seed, id), &params.scene);
        for sample in render_scene(&scene, id, &rig, params.tiles) {
            write_sample(out_dir, &sample)?;
        }
        write_json(&out_dir.join(scene_file(id)), &scene)?;
    }
    let ids: Vec<usize> = (0..n).collect();
    let splits = split_dataset(&ids, seed)?;
    let stems = |mut scenes: Vec<usize>| -> Vec<String> {
        scenes.sort_unstable();
        scenes
            .iter()
            .flat_map(|&id| CameraRig::NAMES.iter().map(move |cam| sample_stem(id, cam)))
            .collect()
    };
    let manifest = Manifest {
        seed,
        scenes: n,
        width: params.width,
        height: params.height,
        rig,
        train: stems(splits.train),
        val: stems(splits.val),
        test: stems(splits.test),
    };
    manifest.save(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}
