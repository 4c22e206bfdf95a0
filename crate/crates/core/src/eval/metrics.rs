use crate::labels::{Rect, SegClass, SegMask, SoilClass};

/// |pred ∩ gt| / |pred ∪ gt| for one class; 1.0 when the class is absent from both.
pub fn jaccard_per_class(pred: &SegMask, gt: &SegMask, class: SegClass) -> f64 {
    let mut acc = SegAccumulator::default();
    acc.add(pred, gt);
    acc.jaccard(class)
}

pub fn mean_iou(jis: &[f64]) -> f64 {
    arithmetic_mean(jis)
}

pub fn mean_ap(aps: &[f64]) -> f64 {
    arithmetic_mean(aps)
}

fn arithmetic_mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Pixel intersection and union counts pooled over a dataset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SegAccumulator {
    intersection: [u64; SegClass::COUNT],
    union: [u64; SegClass::COUNT],
}

impl SegAccumulator {
    pub fn add(&mut self, pred: &SegMask, gt: &SegMask) {
        assert_eq!(
            (pred.width, pred.height),
            (gt.width, gt.height),
            "mask shapes differ"
        );
        for (&p, &g) in pred.data.iter().zip(&gt.data) {
            if p == g {
                self.intersection[p as usize] += 1;
                self.union[p as usize] += 1;
            } else {
                self.union[p as usize] += 1;
                self.union[g as usize] += 1;
            }
        }
    }

    pub fn jaccard(&self, class: SegClass) -> f64 {
        let c = class.index();
        if self.union[c] == 0 {
            1.0
        } else {
            self.intersection[c] as f64 / self.union[c] as f64
        }
    }
}

/// One scored prediction of the class under evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredRect {
    pub confidence: f64,
    pub rect: Rect,
}

/// Predictions and ground truth of one image for a single class.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImageDetections {
    pub predictions: Vec<ScoredRect>,
    pub ground_truth: Vec<Rect>,
}

/// Average precision of one image's predictions; `None` without ground truth.
pub fn average_precision(
    predictions: &[ScoredRect],
    ground_truth: &[Rect],
    iou_threshold: f64,
) -> Option<f64> {
    average_precision_over(
        &[ImageDetections {
            predictions: predictions.to_vec(),
            ground_truth: ground_truth.to_vec(),
        }],
        iou_threshold,
    )
}

/// Dataset-level average precision with all-points interpolation.
///
/// Predictions from all images are ranked by descending confidence, ties
/// kept in input order. Each one claims the unmatched ground-truth box of its
/// image with the highest IoU at or above the threshold.
pub fn average_precision_over(images: &[ImageDetections], iou_threshold: f64) -> Option<f64> {
    let positives: usize = images.iter().map(|i| i.ground_truth.len()).sum();
    if positives == 0 {
        return None;
    }
    let mut ranked: Vec<(usize, ScoredRect)> = images
        .iter()
        .enumerate()
        .flat_map(|(i, img)| img.predictions.iter().map(move |p| (i, *p)))
        .collect();
    ranked.sort_by(|a, b| b.1.confidence.total_cmp(&a.1.confidence));

    let mut claimed: Vec<Vec<bool>> = images
        .iter()
        .map(|i| vec![false; i.ground_truth.len()])
        .collect();
    let mut hits = Vec::with_capacity(ranked.len());
    for (img, pred) in &ranked {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in images[*img].ground_truth.iter().enumerate() {
            if claimed[*img][g] {
                continue;
            }
            let iou = pred.rect.iou(gt);
            if iou >= iou_threshold && best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        if let Some((g, _)) = best {
            claimed[*img][g] = true;
        }
        hits.push(best.is_some());
    }

    let mut precision = Vec::with_capacity(hits.len());
    let mut tp = 0usize;
    for (k, &hit) in hits.iter().enumerate() {
        tp += hit as usize;
        precision.push(tp as f64 / (k + 1) as f64);
    }
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let area: f64 = hits
        .iter()
        .zip(&precision)
        .filter(|(&hit, _)| hit)
        .map(|(_, &p)| p)
        .sum();
    Some(area / positives as f64)
}

/// Tile-level confusion counts with soiled = any non-clean label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SoilingCounts {
    pub tp: u64,
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

impl SoilingCounts {
    pub fn add(&mut self, pred: &[SoilClass], gt: &[SoilClass]) {
        assert_eq!(pred.len(), gt.len(), "tile grids differ");
        for (p, g) in pred.iter().zip(gt) {
            match (p.is_soiled(), g.is_soiled()) {
                (true, true) => self.tp += 1,
                (false, true) => self.fn_ += 1,
                (true, false) => self.fp += 1,
                (false, false) => self.tn += 1,
            }
        }
    }

    /// (TPR, FPR); `None` where the denominator is zero.
    pub fn rates(&self) -> (Option<f64>, Option<f64>) {
        let ratio = |a: u64, b: u64| (a + b > 0).then(|| a as f64 / (a + b) as f64);
        (ratio(self.tp, self.fn_), ratio(self.fp, self.tn))
    }
}

pub fn soiling_rates(pred: &[SoilClass], gt: &[SoilClass]) -> (Option<f64>, Option<f64>) {
    let mut counts = SoilingCounts::default();
    counts.add(pred, gt);
    counts.rates()
}
