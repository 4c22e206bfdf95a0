use fmn_autodiff::{Scalar, Tape, Var};

use crate::error::Result;
use crate::labels::{GtBox, SegMask, SoilingTileReport};
use crate::model::{NetworkConfig, ENCODER_STRIDE};

/// Softmax cross-entropy over segmentation classes for rows at or below
/// `horizon_row`.
pub fn seg_loss<T: Scalar>(
    tape: &mut Tape<T>,
    seg_logits: Var,
    gt: &SegMask,
    horizon_row: usize,
) -> Result<Var> {
    let probs = tape.softmax(seg_logits, 0)?;
    let targets: Vec<usize> = gt.data.iter().map(|&c| c as usize).collect();
    let mask: Vec<bool> = (0..gt.data.len())
        .map(|i| i / gt.width >= horizon_row)
        .collect();
    Ok(tape.categorical_cross_entropy(probs, 0, &targets, Some(&mask))?)
}

/// Per-cell training targets of the detection grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DetTargets {
    /// Class index per cell, background = `det_classes`.
    pub classes: Vec<usize>,
    /// (fx, fy, ln(w/aw), ln(h/ah)) per cell, meaningful where assigned.
    pub offsets: Vec<[f64; 4]>,
    pub assigned: Vec<bool>,
}

/// Assigns every box to the cell holding its center; later boxes overwrite
/// earlier ones in a contested cell.
pub fn det_targets(boxes: &[GtBox], config: &NetworkConfig) -> DetTargets {
    let (gh, gw) = (config.grid_height(), config.grid_width());
    let stride = ENCODER_STRIDE as f64;
    let mut t = DetTargets {
        classes: vec![config.det_classes; gh * gw],
        offsets: vec![[0.0; 4]; gh * gw],
        assigned: vec![false; gh * gw],
    };
    for b in boxes {
        let (cx, cy) = b.rect.center();
        let col = ((cx / stride).floor().max(0.0) as usize).min(gw - 1);
        let row = ((cy / stride).floor().max(0.0) as usize).min(gh - 1);
        let cell = row * gw + col;
        let (aw, ah) = config.anchor(b.class);
        t.classes[cell] = b.class.index();
        t.offsets[cell] = [
            (cx / stride - col as f64).clamp(0.0, 1.0),
            (cy / stride - row as f64).clamp(0.0, 1.0),
            (b.rect.width().max(1e-6) / aw).ln(),
            (b.rect.height().max(1e-6) / ah).ln(),
        ];
        t.assigned[cell] = true;
    }
    t
}

#[derive(Debug, Clone, Copy)]
pub struct DetLoss {
    pub total: Var,
    pub class_ce: Var,
    pub box_l1: Var,
}

/// Cross-entropy over all cells plus `lambda_box` times the smooth-L1 mean
/// over the four offsets of assigned cells.
pub fn det_loss<T: Scalar>(
    tape: &mut Tape<T>,
    det_grid: Var,
    boxes: &[GtBox],
    config: &NetworkConfig,
    lambda_box: f64,
) -> Result<DetLoss> {
    let k = config.det_classes + 1;
    let targets = det_targets(boxes, config);
    let logits = tape.slice_leading(det_grid, 0, k)?;
    let probs = tape.softmax(logits, 0)?;
    let class_ce = tape.categorical_cross_entropy(probs, 0, &targets.classes, None)?;

    let cells = targets.classes.len();
    let xy_raw = tape.slice_leading(det_grid, k, 2)?;
    let xy = tape.sigmoid(xy_raw);
    let wh = tape.slice_leading(det_grid, k + 2, 2)?;
    let plane = |j: usize| -> Vec<T> { targets.offsets.iter().map(|o| T::lit(o[j])).collect() };
    let xy_targets = [plane(0), plane(1)].concat();
    let wh_targets = [plane(2), plane(3)].concat();
    let mask = [targets.assigned.clone(), targets.assigned.clone()].concat();
    debug_assert_eq!(mask.len(), 2 * cells);
    let l_xy = tape.smooth_l1(xy, &xy_targets, &mask)?;
    let l_wh = tape.smooth_l1(wh, &wh_targets, &mask)?;
    let box_l1 = tape.weighted_sum(&[(l_xy, T::lit(0.5)), (l_wh, T::lit(0.5))])?;
    let total = tape.weighted_sum(&[(class_ce, T::one()), (box_l1, T::lit(lambda_box))])?;
    Ok(DetLoss {
        total,
        class_ce,
        box_l1,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct SoilLoss {
    pub total: Var,
    pub tile_ce: Var,
    pub indicator_bce: Var,
}

/// Tile cross-entropy plus binary cross-entropy of the two indicator
/// probabilities `(softsign(score) + 1) / 2`.
pub fn soiling_loss<T: Scalar>(
    tape: &mut Tape<T>,
    soiling_grid: Var,
    soiling_indicators: Var,
    gt: &SoilingTileReport,
) -> Result<SoilLoss> {
    let probs = tape.softmax(soiling_grid, 0)?;
    let targets: Vec<usize> = gt.tiles.iter().map(|t| t.index()).collect();
    let tile_ce = tape.categorical_cross_entropy(probs, 0, &targets, None)?;
    let squashed = tape.softsign(soiling_indicators);
    let p = tape.affine(squashed, T::lit(0.5), T::lit(0.5));
    let bits = [gt.opaque, gt.transparent].map(|b| if b { T::one() } else { T::zero() });
    let indicator_bce = tape.binary_cross_entropy(p, &bits)?;
    let total = tape.weighted_sum(&[(tile_ce, T::one()), (indicator_bce, T::one())])?;
    Ok(SoilLoss {
        total,
        tile_ce,
        indicator_bce,
    })
}
