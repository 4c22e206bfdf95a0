use serde::{Deserialize, Serialize};

/// Segmentation classes, indexed as stored in `.seg.pgm` masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegClass {
    Void = 0,
    Road = 1,
    Lane = 2,
    Curb = 3,
}

impl SegClass {
    pub const COUNT: usize = 4;
    pub const ALL: [SegClass; 4] = [SegClass::Void, SegClass::Road, SegClass::Lane, SegClass::Curb];
    /// Classes scored by the Jaccard metrics.
    pub const SCORED: [SegClass; 3] = [SegClass::Road, SegClass::Lane, SegClass::Curb];

    pub fn from_index(i: u8) -> Option<Self> {
        Self::ALL.get(i as usize).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetClass {
    Vehicle = 0,
    Pedestrian = 1,
    Cyclist = 2,
}

impl DetClass {
    pub const COUNT: usize = 3;
    pub const ALL: [DetClass; 3] = [DetClass::Vehicle, DetClass::Pedestrian, DetClass::Cyclist];

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Anchor box (width, height) in pixels for a 1280-pixel-wide image.
    pub fn full_scale_anchor(self) -> (f64, f64) {
        match self {
            DetClass::Vehicle => (160.0, 96.0),
            DetClass::Pedestrian => (32.0, 64.0),
            DetClass::Cyclist => (48.0, 64.0),
        }
    }

    /// Footprint radius in meters used when stamping the occupancy map.
    pub fn footprint_radius(self) -> f64 {
        match self {
            DetClass::Vehicle => 0.9,
            DetClass::Pedestrian => 0.3,
            DetClass::Cyclist => 0.4,
        }
    }
}

/// Parking scenario of a slot, by rake angle against the road.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Parallel,
    Perpendicular,
    Fishbone,
    Ambiguous,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::Parallel,
        Scenario::Perpendicular,
        Scenario::Fishbone,
        Scenario::Ambiguous,
    ];

    pub fn parse(name: &str) -> Option<Self> {
        serde_json::from_value(serde_json::Value::String(name.to_lowercase())).ok()
    }
}

/// Per-tile soiling label; the index order matches the soiling decoder channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SoilClass {
    #[default]
    Clean = 0,
    Transparent = 1,
    Opaque = 2,
}

impl SoilClass {
    pub const COUNT: usize = 3;
    pub const ALL: [SoilClass; 3] = [SoilClass::Clean, SoilClass::Transparent, SoilClass::Opaque];

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_soiled(self) -> bool {
        self != SoilClass::Clean
    }
}

/// Per-pixel class indices, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegMask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl SegMask {
    pub fn filled(width: usize, height: usize, class: SegClass) -> Self {
        Self {
            width,
            height,
            data: vec![class as u8; width * height],
        }
    }

    pub fn get(&self, col: usize, row: usize) -> u8 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, class: SegClass) {
        self.data[row * self.width + col] = class as u8;
    }
}

/// Axis-aligned pixel rectangle with edge coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
        )
    }

    /// Bottom-center point, where the object is assumed to touch the ground.
    pub fn foot_point(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) / 2.0, self.y_max)
    }

    pub fn iou(&self, other: &Rect) -> f64 {
        let iw = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let ih = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if iw <= 0.0 || ih <= 0.0 {
            return 0.0;
        }
        let inter = iw * ih;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

/// Ground-truth box as stored in `.boxes.json`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtBox {
    pub class: DetClass,
    #[serde(flatten)]
    pub rect: Rect,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectedBox {
    pub class: DetClass,
    pub confidence: f64,
    #[serde(flatten)]
    pub rect: Rect,
}

impl DetectedBox {
    pub fn foot_point(&self) -> (f64, f64) {
        self.rect.foot_point()
    }
}

/// Tile labels (row-major) and the image-level indicator bits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SoilingTileReport {
    pub cols: usize,
    pub rows: usize,
    pub tiles: Vec<SoilClass>,
    pub opaque: bool,
    pub transparent: bool,
}

impl SoilingTileReport {
    pub fn clean(cols: usize, rows: usize) -> Self {
        Self {
            cols,
            rows,
            tiles: vec![SoilClass::Clean; cols * rows],
            opaque: false,
            transparent: false,
        }
    }

    pub fn any_raised(&self) -> bool {
        self.opaque || self.transparent
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_examples() {
        let a = Rect {
            x_min: 0.0,
            y_min: 0.0,
            x_max: 2.0,
            y_max: 2.0,
        };
        let b = Rect {
            x_min: 1.0,
            y_min: 0.0,
            x_max: 3.0,
            y_max: 2.0,
        };
        assert_eq!(a.iou(&a), 1.0);
        assert!((a.iou(&b) - 1.0 / 3.0).abs() < 1e-12);
        let far = Rect {
            x_min: 5.0,
            y_min: 5.0,
            x_max: 6.0,
            y_max: 6.0,
        };
        assert_eq!(a.iou(&far), 0.0);
        assert_eq!(a.foot_point(), (1.0, 2.0));
    }

    #[test]
    fn box_json_is_flat() {
        let b = GtBox {
            class: DetClass::Cyclist,
            rect: Rect {
                x_min: 1.0,
                y_min: 2.0,
                x_max: 3.0,
                y_max: 4.0,
            },
        };
        let text = serde_json::to_string(&b).unwrap();
        assert_eq!(
            text,
            r#"{"class":"cyclist","x_min":1.0,"y_min":2.0,"x_max":3.0,"y_max":4.0}"#
        );
    }
}
