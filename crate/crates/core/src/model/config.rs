use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{DetClass, SegClass, SoilClass};

/// Total downsampling factor of the encoder.
pub const ENCODER_STRIDE: usize = 32;

/// Which decoders a network carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskSet {
    pub seg: bool,
    pub det: bool,
    pub soil: bool,
}

impl TaskSet {
    pub const ALL: TaskSet = TaskSet {
        seg: true,
        det: true,
        soil: true,
    };
    pub const SEG: TaskSet = TaskSet {
        seg: true,
        det: false,
        soil: false,
    };
    pub const DET: TaskSet = TaskSet {
        seg: false,
        det: true,
        soil: false,
    };
    pub const SOIL: TaskSet = TaskSet {
        seg: false,
        det: false,
        soil: true,
    };

    pub fn count(&self) -> usize {
        [self.seg, self.det, self.soil].iter().filter(|&&b| b).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_height: usize,
    pub input_width: usize,
    pub stem_channels: usize,
    pub stage_channels: [usize; 4],
    /// Width of the segmentation decoder at strides 32 to 8.
    pub seg_decoder_channels: usize,
    pub det_hidden_channels: usize,
    pub soil_hidden_channels: usize,
    pub seg_classes: usize,
    pub det_classes: usize,
    /// Soiling tiles as (cols, rows).
    pub soiling_tiles: (usize, usize),
    pub skip_connections: usize,
    pub horizon_row: usize,
    pub tasks: TaskSet,
}

impl NetworkConfig {
    /// 96×320 input with the reduced channel plan.
    pub fn desk() -> Self {
        Self {
            input_height: 96,
            input_width: 320,
            stem_channels: 8,
            stage_channels: [8, 16, 32, 64],
            seg_decoder_channels: 16,
            det_hidden_channels: 64,
            soil_hidden_channels: 32,
            seg_classes: SegClass::COUNT,
            det_classes: DetClass::COUNT,
            soiling_tiles: (10, 3),
            skip_connections: 2,
            horizon_row: 0,
            tasks: TaskSet::ALL,
        }
    }

    /// 384×1280 input, same channel plan as [`NetworkConfig::desk`].
    pub fn full_scale() -> Self {
        Self {
            input_height: 384,
            input_width: 1280,
            ..Self::desk()
        }
    }

    pub fn with_tasks(mut self, tasks: TaskSet) -> Self {
        self.tasks = tasks;
        self
    }

    pub fn grid_height(&self) -> usize {
        self.input_height / ENCODER_STRIDE
    }

    pub fn grid_width(&self) -> usize {
        self.input_width / ENCODER_STRIDE
    }

    /// Tile size in pixels as (width, height).
    pub fn tile_size(&self) -> (usize, usize) {
        (
            self.input_width / self.soiling_tiles.0,
            self.input_height / self.soiling_tiles.1,
        )
    }

    pub fn det_channels(&self) -> usize {
        self.det_classes + 1 + 4
    }

    /// Anchor (width, height) for a detection class at this input width.
    pub fn anchor(&self, class: DetClass) -> (f64, f64) {
        let scale = self.input_width as f64 / 1280.0;
        let (w, h) = class.full_scale_anchor();
        (w * scale, h * scale)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        let (h, w) = (self.input_height, self.input_width);
        if h == 0 || w == 0 || h % ENCODER_STRIDE != 0 || w % ENCODER_STRIDE != 0 {
            return fail(format!(
                "input {h}x{w} must be nonzero multiples of {ENCODER_STRIDE}"
            ));
        }
        if self.stem_channels == 0
            || self.stage_channels.contains(&0)
            || self.seg_decoder_channels == 0
            || self.det_hidden_channels == 0
            || self.soil_hidden_channels == 0
        {
            return fail("channel counts must be positive".into());
        }
        if self.seg_classes != SegClass::COUNT {
            return fail(format!("seg_classes must be {}", SegClass::COUNT));
        }
        if self.det_classes != DetClass::COUNT {
            return fail(format!("det_classes must be {}", DetClass::COUNT));
        }
        let (cols, rows) = self.soiling_tiles;
        if cols == 0 || rows == 0 || w % cols != 0 || h % rows != 0 {
            return fail(format!(
                "soiling grid {cols}x{rows} does not divide {w}x{h} exactly"
            ));
        }
        let (tw, th) = self.tile_size();
        if tw % ENCODER_STRIDE != 0 || th % ENCODER_STRIDE != 0 {
            return fail(format!(
                "soiling tiles of {tw}x{th} px must align with the stride-{ENCODER_STRIDE} feature grid"
            ));
        }
        if self.skip_connections > 2 {
            return fail(format!(
                "skip_connections must be 0, 1 or 2, got {}",
                self.skip_connections
            ));
        }
        if self.horizon_row >= h {
            return fail(format!("horizon_row {} must be below {h}", self.horizon_row));
        }
        if self.tasks.count() == 0 {
            return fail("at least one task must be enabled".into());
        }
        Ok(())
    }
}

/// Number of soiling-decoder output channels: tile classes plus the two
/// image-level indicator scores.
pub(crate) const SOIL_OUT_CHANNELS: usize = SoilClass::COUNT + 2;
