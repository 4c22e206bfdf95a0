//! Segmentation, detection and soiling metrics and comparison reports.

mod evaluate;
mod metrics;
mod report;

pub use evaluate::{evaluate_network, DecodeSettings, EvalReport, Evaluator, Predictions};
pub use metrics::{
    average_precision, average_precision_over, jaccard_per_class, mean_ap, mean_iou,
    soiling_rates, ImageDetections, ScoredRect, SegAccumulator, SoilingCounts,
};
pub use report::{report_csv, report_text, run_comparison, write_report, ROW_LABELS};
