//! On-disk samples and the dataset manifest.
//!
//! Each sample `<stem>` is stored as `<stem>.ppm` (binary RGB),
//! `<stem>.seg.pgm` (class indices), `<stem>.boxes.json` and
//! `<stem>.soil.json`. `dataset.json` lists the stems of every split.

use std::fs;
use std::path::{Path, PathBuf};

use fmn_autodiff::Tensor;
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CameraRig;
use crate::labels::{GtBox, SegClass, SegMask, SoilingTileReport};

pub const MANIFEST_FILE: &str = "dataset.json";

/// 8-bit interleaved RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    /// Quantizes `[0, 1]` channel values, interleaved RGB.
    pub fn from_unit(width: usize, height: usize, values: &[f32]) -> Self {
        let data = values
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        Self {
            width,
            height,
            data,
        }
    }

    /// Planar `[3, H, W]` tensor scaled to `[0, 1]`.
    pub fn to_tensor(&self) -> Tensor<f32> {
        let n = self.width * self.height;
        let mut values = vec![0.0f32; 3 * n];
        for (p, px) in self.data.chunks_exact(3).enumerate() {
            for c in 0..3 {
                values[c * n + p] = px[c] as f32 / 255.0;
            }
        }
        Tensor::new(vec![3, self.height, self.width], values).expect("image dimensions")
    }
}

/// One camera view with all of its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub stem: String,
    pub scene_id: usize,
    pub camera: String,
    pub horizon_row: usize,
    pub image: RgbImage,
    pub mask: SegMask,
    pub boxes: Vec<GtBox>,
    pub soiling: SoilingTileReport,
}

pub fn sample_stem(scene_id: usize, camera: &str) -> String {
    format!("s{scene_id:05}_{camera}")
}

/// Splits a stem produced by [`sample_stem`] into scene id and camera name.
pub fn parse_stem(stem: &str) -> Option<(usize, &str)> {
    let (scene, camera) = stem.strip_prefix('s')?.split_once('_')?;
    Some((scene.parse().ok()?, camera))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub scenes: usize,
    pub width: usize,
    pub height: usize,
    pub rig: CameraRig,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Manifest {
    pub fn stems(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&text).map_err(|e| Error::json(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(value).expect("serializable value");
    text.push(b'\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_pnm(
    path: &Path,
    subtype: PnmSubtype,
    (width, height): (usize, usize),
    data: &[u8],
    color: ExtendedColorType,
) -> Result<()> {
    let mut buf = Vec::new();
    PnmEncoder::new(&mut buf)
        .with_subtype(subtype)
        .write_image(data, width as u32, height as u32, color)
        .map_err(|e| Error::format(path, e.to_string()))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Binary `P6` file.
pub fn write_ppm(path: &Path, img: &RgbImage) -> Result<()> {
    write_pnm(
        path,
        PnmSubtype::Pixmap(SampleEncoding::Binary),
        (img.width, img.height),
        &img.data,
        ExtendedColorType::Rgb8,
    )
}

/// Binary `P5` file of class indices.
pub fn write_pgm(path: &Path, mask: &SegMask) -> Result<()> {
    write_pnm(
        path,
        PnmSubtype::Graymap(SampleEncoding::Binary),
        (mask.width, mask.height),
        &mask.data,
        ExtendedColorType::L8,
    )
}

fn decode_pnm(path: &Path) -> Result<image::DynamicImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    image::load_from_memory_with_format(&bytes, ImageFormat::Pnm)
        .map_err(|e| Error::format(path, e.to_string()))
}

pub fn read_ppm(path: &Path) -> Result<RgbImage> {
    let img = decode_pnm(path)?.into_rgb8();
    Ok(RgbImage {
        width: img.width() as usize,
        height: img.height() as usize,
        data: img.into_raw(),
    })
}

pub fn read_pgm(path: &Path) -> Result<SegMask> {
    let img = decode_pnm(path)?.into_luma8();
    let mask = SegMask {
        width: img.width() as usize,
        height: img.height() as usize,
        data: img.into_raw(),
    };
    if mask.data.iter().any(|&c| SegClass::from_index(c).is_none()) {
        return Err(Error::format(path, "class index outside 0..=3"));
    }
    Ok(mask)
}

fn sample_path(dir: &Path, stem: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{stem}{suffix}"))
}

pub fn write_sample(dir: &Path, sample: &Sample) -> Result<()> {
    write_ppm(&sample_path(dir, &sample.stem, ".ppm"), &sample.image)?;
    write_pgm(&sample_path(dir, &sample.stem, ".seg.pgm"), &sample.mask)?;
    write_json(&sample_path(dir, &sample.stem, ".boxes.json"), &sample.boxes)?;
    write_json(&sample_path(dir, &sample.stem, ".soil.json"), &sample.soiling)
}

pub fn read_sample(dir: &Path, stem: &str, rig: &CameraRig) -> Result<Sample> {
    let (scene_id, camera) = parse_stem(stem)
        .ok_or_else(|| Error::Dataset(format!("malformed sample stem {stem:?}")))?;
    let cam = rig
        .camera(camera)
        .ok_or_else(|| Error::Dataset(format!("sample {stem} names unknown camera {camera:?}")))?;
    let image = read_ppm(&sample_path(dir, stem, ".ppm"))?;
    let mask = read_pgm(&sample_path(dir, stem, ".seg.pgm"))?;
    if (mask.width, mask.height) != (image.width, image.height) {
        return Err(Error::Dataset(format!("{stem}: mask and image sizes differ")));
    }
    Ok(Sample {
        stem: stem.to_string(),
        scene_id,
        camera: camera.to_string(),
        horizon_row: cam.horizon_row(),
        image,
        mask,
        boxes: read_json(&sample_path(dir, stem, ".boxes.json"))?,
        soiling: read_json(&sample_path(dir, stem, ".soil.json"))?,
    })
}

/// Dataset directory with its manifest.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl Dataset {
    /// Opens a manifest file or a directory holding `dataset.json`.
    pub fn open(path: &Path) -> Result<Self> {
        let file = if path.is_dir() {
            path.join(MANIFEST_FILE)
        } else {
            path.to_path_buf()
        };
        if !file.exists() {
            return Err(Error::Dataset(format!("manifest {} not found", file.display())));
        }
        let manifest = Manifest::load(&file)?;
        let dir = file.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { dir, manifest })
    }

    pub fn load_split(&self, split: Split) -> Result<Vec<Sample>> {
        self.manifest
            .stems(split)
            .iter()
            .map(|stem| read_sample(&self.dir, stem, &self.manifest.rig))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::{DetClass, Rect, SoilClass};

    #[test]
    fn stems_round_trip() {
        let stem = sample_stem(42, "left");
        assert_eq!(stem, "s00042_left");
        assert_eq!(parse_stem(&stem), Some((42, "left")));
        assert_eq!(parse_stem("junk"), None);
    }

    #[test]
    fn sample_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rig = CameraRig::default_rig(4, 2);
        let mut soiling = SoilingTileReport::clean(2, 1);
        soiling.tiles[1] = SoilClass::Opaque;
        soiling.opaque = true;
        let sample = Sample {
            stem: sample_stem(3, "rear"),
            scene_id: 3,
            camera: "rear".into(),
            horizon_row: rig.camera("rear").unwrap().horizon_row(),
            image: RgbImage {
                width: 4,
                height: 2,
                data: (0..24).map(|i| i as u8 * 10).collect(),
            },
            mask: SegMask {
                width: 4,
                height: 2,
                data: vec![0, 1, 2, 3, 3, 2, 1, 0],
            },
            boxes: vec![GtBox {
                class: DetClass::Pedestrian,
                rect: Rect {
                    x_min: 0.0,
                    y_min: 0.0,
                    x_max: 2.0,
                    y_max: 1.0,
                },
            }],
            soiling,
        };
        write_sample(dir.path(), &sample).unwrap();
        let head = fs::read(dir.path().join("s00003_rear.ppm")).unwrap();
        assert_eq!(&head[..2], b"P6");
        let head = fs::read(dir.path().join("s00003_rear.seg.pgm")).unwrap();
        assert_eq!(&head[..2], b"P5");
        let back = read_sample(dir.path(), &sample.stem, &rig).unwrap();
        assert_eq!(back, sample);
    }

    #[test]
    fn tensor_is_planar() {
        let img = RgbImage {
            width: 2,
            height: 1,
            data: vec![255, 0, 0, 0, 255, 0],
        };
        assert_eq!(img.to_tensor().values(), &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    }
}
