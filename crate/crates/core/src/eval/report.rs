use std::fmt::Write as _;
use std::ops::ControlFlow;
use std::path::Path;

use super::evaluate::{evaluate_network, EvalReport};
use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::train::{train, TrainConfig};

pub const ROW_LABELS: [&str; 10] = [
    "JI road",
    "JI lane",
    "JI curb",
    "mean IOU",
    "AP Vehicle",
    "AP person",
    "AP cyclist",
    "mean AP",
    "TPR",
    "FPR",
];

/// Row values of one report; `None` marks a task the network does not have.
fn column(r: &EvalReport) -> [Option<Option<f64>>; 10] {
    let seg = |v: Option<f64>| r.tasks.seg.then_some(v);
    let det = |v: Option<f64>| r.tasks.det.then_some(v);
    let soil = |v: Option<f64>| r.tasks.soil.then_some(v);
    [
        seg(r.ji[0]),
        seg(r.ji[1]),
        seg(r.ji[2]),
        seg(r.mean_iou),
        det(r.ap[0]),
        det(r.ap[1]),
        det(r.ap[2]),
        det(r.mean_ap),
        soil(r.tpr),
        soil(r.fpr),
    ]
}

fn cell(v: Option<Option<f64>>, blank: &str) -> String {
    match v {
        None => blank.to_string(),
        Some(None) => "n/a".to_string(),
        Some(Some(x)) => format!("{x:.4}"),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One metric per row, one report per column; inactive tasks are empty.
pub fn report_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("metric");
    for r in reports {
        out.push(',');
        out.push_str(&csv_field(&r.label));
    }
    out.push('\n');
    let cols: Vec<_> = reports.iter().map(column).collect();
    for (i, label) in ROW_LABELS.iter().enumerate() {
        out.push_str(label);
        for c in &cols {
            out.push(',');
            out.push_str(&cell(c[i], ""));
        }
        out.push('\n');
    }
    out
}

/// The same table aligned for reading; inactive tasks show `-`.
pub fn report_text(reports: &[EvalReport]) -> String {
    let first = ROW_LABELS.iter().map(|l| l.len()).max().unwrap_or(0);
    let widths: Vec<usize> = reports.iter().map(|r| r.label.len().max(6)).collect();
    let cols: Vec<_> = reports.iter().map(column).collect();
    let mut out = format!("{:first$}", "");
    for (r, w) in reports.iter().zip(&widths) {
        let _ = write!(out, "  {:>w$}", r.label);
    }
    out.push('\n');
    for (i, label) in ROW_LABELS.iter().enumerate() {
        let _ = write!(out, "{label:first$}");
        for (c, w) in cols.iter().zip(&widths) {
            let _ = write!(out, "  {:>w$}", cell(c[i], "-"));
        }
        out.push('\n');
    }
    out
}

/// Writes `report.csv` and `report.txt` into `dir`.
pub fn write_report(dir: &Path, reports: &[EvalReport]) -> Result<()> {
    for (name, body) in [("report.csv", report_csv(reports)), ("report.txt", report_text(reports))] {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Trains every configuration on the dataset at `manifest` and scores each on
/// its test split.
pub fn run_comparison(manifest: &Path, configs: &[TrainConfig]) -> Result<Vec<EvalReport>> {
    let dataset = Dataset::open(manifest)?;
    if dataset.manifest.test.is_empty() {
        return Err(Error::Dataset(format!("{}: test split is empty", manifest.display())));
    }
    let test = dataset.load_split(Split::Test)?;
    configs
        .iter()
        .map(|c| {
            let mut c = c.clone();
            c.manifest = manifest.to_path_buf();
            let outcome = train(&c, |_, _| ControlFlow::Continue(()))?;
            evaluate_network(&outcome.network, &test, &c.decode, c.mode.label())
        })
        .collect()
}
