use fmn_autodiff::{Scalar, Tensor};

use super::config::{NetworkConfig, ENCODER_STRIDE};
use crate::labels::{DetClass, DetectedBox, Rect, SegClass, SegMask, SoilClass, SoilingTileReport};

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softsign(x: f64) -> f64 {
    x / (1.0 + x.abs())
}

/// Probability that an image-level soiling indicator is raised.
pub fn indicator_probability(score: f64) -> f64 {
    (softsign(score) + 1.0) / 2.0
}

/// First index of the maximum; the lowest index wins ties.
fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Per-pixel argmax below `horizon_row`; rows above it are void.
pub fn decode_segmentation<T: Scalar>(seg_logits: &Tensor<T>, horizon_row: usize) -> SegMask {
    let shape = seg_logits.shape();
    let (k, h, w) = (shape[0], shape[1], shape[2]);
    let v = seg_logits.values();
    let mut mask = SegMask::filled(w, h, SegClass::Void);
    for row in horizon_row.min(h)..h {
        for col in 0..w {
            let at = row * w + col;
            let c = argmax((0..k).map(|c| v[c * h * w + at].as_f64()));
            mask.data[at] = c as u8;
        }
    }
    mask
}

/// Greedy per-class non-maximum suppression.
///
/// Boxes are visited in descending confidence (stable for ties); a box is
/// dropped when its IoU with an already kept box of the same class reaches
/// `iou_threshold`. The result keeps that visiting order.
pub fn non_max_suppression(boxes: &[DetectedBox], iou_threshold: f64) -> Vec<DetectedBox> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| boxes[b].confidence.total_cmp(&boxes[a].confidence));
    let mut kept: Vec<DetectedBox> = Vec::new();
    for i in order {
        let candidate = boxes[i];
        let suppressed = kept
            .iter()
            .any(|k| k.class == candidate.class && k.rect.iou(&candidate.rect) >= iou_threshold);
        if !suppressed {
            kept.push(candidate);
        }
    }
    kept
}

/// Decodes the detection grid into boxes.
///
/// Channels `0..K_d` are class logits, `K_d` is background, then tx, ty, tw,
/// th. A cell fires when its argmax is an object class with probability at
/// least `confidence_threshold`.
pub fn decode_detections<T: Scalar>(
    det_grid: &Tensor<T>,
    config: &NetworkConfig,
    confidence_threshold: f64,
    nms_iou: f64,
) -> Vec<DetectedBox> {
    let shape = det_grid.shape();
    let (gh, gw) = (shape[1], shape[2]);
    let cells = gh * gw;
    let v = det_grid.values();
    let k = config.det_classes + 1;
    let (img_w, img_h) = (config.input_width as f64, config.input_height as f64);
    let stride = ENCODER_STRIDE as f64;
    let mut raw = Vec::new();
    for row in 0..gh {
        for col in 0..gw {
            let at = row * gw + col;
            let logits: Vec<f64> = (0..k).map(|c| v[c * cells + at].as_f64()).collect();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            let best = argmax(exps.iter().copied());
            let Some(class) = DetClass::from_index(best) else {
                continue;
            };
            let confidence = exps[best] / total;
            if confidence < confidence_threshold {
                continue;
            }
            let off = |i: usize| v[(k + i) * cells + at].as_f64();
            let (aw, ah) = config.anchor(class);
            let cx = (col as f64 + sigmoid(off(0))) * stride;
            let cy = (row as f64 + sigmoid(off(1))) * stride;
            let bw = aw * off(2).exp();
            let bh = ah * off(3).exp();
            let rect = Rect {
                x_min: (cx - bw / 2.0).clamp(0.0, img_w),
                y_min: (cy - bh / 2.0).clamp(0.0, img_h),
                x_max: (cx + bw / 2.0).clamp(0.0, img_w),
                y_max: (cy + bh / 2.0).clamp(0.0, img_h),
            };
            if rect.x_min < rect.x_max && rect.y_min < rect.y_max {
                raw.push(DetectedBox {
                    class,
                    confidence,
                    rect,
                });
            }
        }
    }
    non_max_suppression(&raw, nms_iou)
}

/// Tile argmax and indicator bits from the soiling outputs.
pub fn decode_soiling<T: Scalar>(soiling_grid: &Tensor<T>, indicators: &Tensor<T>) -> SoilingTileReport {
    let shape = soiling_grid.shape();
    let (rows, cols) = (shape[1], shape[2]);
    let n = rows * cols;
    let v = soiling_grid.values();
    let tiles = (0..n)
        .map(|t| {
            let c = argmax((0..SoilClass::COUNT).map(|c| v[c * n + t].as_f64()));
            SoilClass::from_index(c).expect("three soiling classes")
        })
        .collect();
    let s = indicators.values();
    SoilingTileReport {
        cols,
        rows,
        tiles,
        opaque: indicator_probability(s[0].as_f64()) >= 0.5,
        transparent: indicator_probability(s[1].as_f64()) >= 0.5,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(config: &NetworkConfig, fill: impl Fn(usize, usize) -> f32) -> Tensor<f32> {
        let (c, h, w) = (config.det_channels(), config.grid_height(), config.grid_width());
        let values = (0..c * h * w).map(|i| fill(i / (h * w), i % (h * w))).collect();
        Tensor::new(vec![c, h, w], values).unwrap()
    }

    #[test]
    fn background_grid_decodes_to_nothing() {
        let config = NetworkConfig::desk();
        let g = grid(&config, |c, _| if c == 3 { 5.0 } else { 0.0 });
        assert!(decode_detections(&g, &config, 0.5, 0.5).is_empty());
    }

    #[test]
    fn single_cell_decodes_to_anchor_box() {
        let config = NetworkConfig::desk();
        // vehicle logit ln(0.9 / (0.1 / 3)) against three zero logits gives p = 0.9
        let logit = (0.9f64 / (0.1 / 3.0)).ln() as f32;
        let g = grid(&config, |c, cell| if c == 0 && cell == 12 { logit } else { 0.0 });
        let boxes = decode_detections(&g, &config, 0.5, 0.5);
        assert_eq!(boxes.len(), 1);
        let b = boxes[0];
        assert_eq!(b.class, DetClass::Vehicle);
        assert!((b.confidence - 0.9).abs() < 1e-6);
        // cell 12 = row 1, col 2; center (2.5, 1.5) * 32; anchor 40x24
        assert!((b.rect.x_min - 60.0).abs() < 1e-9 && (b.rect.x_max - 100.0).abs() < 1e-9);
        assert!((b.rect.y_min - 36.0).abs() < 1e-9 && (b.rect.y_max - 60.0).abs() < 1e-9);
    }

    #[test]
    fn nms_keeps_higher_confidence() {
        let config = NetworkConfig::desk();
        // two adjacent cells whose offsets place identical boxes at the shared edge
        let g = grid(&config, |c, cell| match (c, cell) {
            (0, 12) => 4.0,
            (0, 13) => 3.0,
            (4, 12) => 30.0,
            (4, 13) => -30.0,
            _ => 0.0,
        });
        let boxes = decode_detections(&g, &config, 0.5, 0.5);
        assert_eq!(boxes.len(), 1);
        assert!((boxes[0].rect.center().0 - 96.0).abs() < 1e-6);
        let p_hi = 4f64.exp() / (4f64.exp() + 3.0);
        assert!((boxes[0].confidence - p_hi).abs() < 1e-6);
    }

    #[test]
    fn soiling_examples() {
        let clean = Tensor::new(
            vec![3, 1, 2],
            vec![5.0f32, 5.0, 0.0, 0.0, 0.0, 0.0],
        )
        .unwrap();
        let low = Tensor::new(vec![2], vec![-5.0f32, -5.0]).unwrap();
        let r = decode_soiling(&clean, &low);
        assert_eq!(r.tiles, vec![SoilClass::Clean; 2]);
        assert!(!r.opaque && !r.transparent);
        let boundary = Tensor::new(vec![2], vec![0.0f32, -0.1]).unwrap();
        let r = decode_soiling(&clean, &boundary);
        assert!(r.opaque && !r.transparent);
    }

    #[test]
    fn segmentation_examples() {
        let (h, w) = (4, 5);
        let mut v = vec![0.0f32; 4 * h * w];
        for p in 0..h * w {
            v[h * w + p] = 1.0;
        }
        let logits = Tensor::new(vec![4, h, w], v).unwrap();
        assert!(decode_segmentation(&logits, 0).data.iter().all(|&c| c == 1));
        assert!(decode_segmentation(&logits, h).data.iter().all(|&c| c == 0));
        let tie = Tensor::new(vec![4, 1, 1], vec![2.0f32, 2.0, 1.0, 2.0]).unwrap();
        assert_eq!(decode_segmentation(&tie, 0).data, vec![0]);
    }
}
