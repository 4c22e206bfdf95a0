use serde::{Deserialize, Serialize};

use super::metrics::{
    average_precision_over, mean_ap, mean_iou, ImageDetections, ScoredRect, SegAccumulator,
    SoilingCounts,
};
use crate::dataset::Sample;
use crate::error::Result;
use crate::labels::{DetClass, DetectedBox, SegClass, SegMask, SoilingTileReport};
use crate::model::{decode_detections, decode_segmentation, decode_soiling, Network, TaskSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeSettings {
    pub confidence_threshold: f64,
    pub nms_iou: f64,
    /// IoU needed for a detection to count as a match.
    pub match_iou: f64,
}

impl Default for DecodeSettings {
    fn default() -> Self {
        Self {
            confidence_threshold: 0.05,
            nms_iou: 0.5,
            match_iou: 0.5,
        }
    }
}

/// Decoded outputs of one image; `None` for tasks the source does not provide.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Predictions {
    pub mask: Option<SegMask>,
    pub boxes: Option<Vec<DetectedBox>>,
    pub soiling: Option<SoilingTileReport>,
}

impl Predictions {
    /// Ground truth posing as a perfect prediction.
    pub fn oracle(sample: &Sample) -> Self {
        let mut mask = sample.mask.clone();
        let above = sample.horizon_row.min(mask.height) * mask.width;
        mask.data[..above].fill(SegClass::Void as u8);
        Self {
            mask: Some(mask),
            boxes: Some(
                sample
                    .boxes
                    .iter()
                    .map(|b| DetectedBox {
                        class: b.class,
                        confidence: 1.0,
                        rect: b.rect,
                    })
                    .collect(),
            ),
            soiling: Some(sample.soiling.clone()),
        }
    }

    pub fn from_network(
        net: &Network<f32>,
        sample: &Sample,
        settings: &DecodeSettings,
    ) -> Result<Self> {
        let out = net.forward(&sample.image.to_tensor())?;
        Ok(Self {
            mask: out
                .seg_logits
                .as_ref()
                .map(|l| decode_segmentation(l, sample.horizon_row)),
            boxes: out.det_grid.as_ref().map(|g| {
                decode_detections(
                    g,
                    net.config(),
                    settings.confidence_threshold,
                    settings.nms_iou,
                )
            }),
            soiling: match (&out.soiling_grid, &out.soiling_indicators) {
                (Some(g), Some(s)) => Some(decode_soiling(g, s)),
                _ => None,
            },
        })
    }
}

/// One column of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub tasks: TaskSet,
    /// Jaccard index of road, lane, curb.
    pub ji: [Option<f64>; 3],
    pub mean_iou: Option<f64>,
    /// Average precision of vehicle, pedestrian, cyclist.
    pub ap: [Option<f64>; 3],
    pub mean_ap: Option<f64>,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
}

/// Accumulates metrics over a dataset.
#[derive(Debug, Clone)]
pub struct Evaluator {
    tasks: TaskSet,
    match_iou: f64,
    seg: SegAccumulator,
    det: [Vec<ImageDetections>; 3],
    soil: SoilingCounts,
}

impl Evaluator {
    pub fn new(tasks: TaskSet, match_iou: f64) -> Self {
        Self {
            tasks,
            match_iou,
            seg: SegAccumulator::default(),
            det: Default::default(),
            soil: SoilingCounts::default(),
        }
    }

    pub fn add(&mut self, pred: &Predictions, sample: &Sample) {
        if self.tasks.seg {
            if let Some(mask) = &pred.mask {
                let mut gt = sample.mask.clone();
                let above = sample.horizon_row.min(gt.height) * gt.width;
                gt.data[..above].fill(SegClass::Void as u8);
                self.seg.add(mask, &gt);
            }
        }
        if self.tasks.det {
            let boxes = pred.boxes.as_deref().unwrap_or(&[]);
            for class in DetClass::ALL {
                self.det[class.index()].push(ImageDetections {
                    predictions: boxes
                        .iter()
                        .filter(|b| b.class == class)
                        .map(|b| ScoredRect {
                            confidence: b.confidence,
                            rect: b.rect,
                        })
                        .collect(),
                    ground_truth: sample
                        .boxes
                        .iter()
                        .filter(|b| b.class == class)
                        .map(|b| b.rect)
                        .collect(),
                });
            }
        }
        if self.tasks.soil {
            if let Some(report) = &pred.soiling {
                self.soil.add(&report.tiles, &sample.soiling.tiles);
            }
        }
    }

    pub fn report(&self, label: &str) -> EvalReport {
        let mut r = EvalReport {
            label: label.to_string(),
            tasks: self.tasks,
            ji: [None; 3],
            mean_iou: None,
            ap: [None; 3],
            mean_ap: None,
            tpr: None,
            fpr: None,
        };
        if self.tasks.seg {
            let jis = SegClass::SCORED.map(|c| self.seg.jaccard(c));
            r.ji = jis.map(Some);
            r.mean_iou = Some(mean_iou(&jis));
        }
        if self.tasks.det {
            r.ap = DetClass::ALL.map(|c| average_precision_over(&self.det[c.index()], self.match_iou));
            let present: Vec<f64> = r.ap.iter().flatten().copied().collect();
            r.mean_ap = (!present.is_empty()).then(|| mean_ap(&present));
        }
        if self.tasks.soil {
            (r.tpr, r.fpr) = self.soil.rates();
        }
        r
    }
}

/// Runs `net` over `samples` and scores the decoded outputs.
pub fn evaluate_network(
    net: &Network<f32>,
    samples: &[Sample],
    settings: &DecodeSettings,
    label: &str,
) -> Result<EvalReport> {
    let mut ev = Evaluator::new(net.config().tasks, settings.match_iou);
    for s in samples {
        ev.add(&Predictions::from_network(net, s, settings)?, s);
    }
    Ok(ev.report(label))
}
