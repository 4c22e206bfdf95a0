use fisheye_multinet::dataset::{Dataset, Split};
use fisheye_multinet::eval::{
    jaccard_per_class, report_csv, report_text, run_comparison, EvalReport, Evaluator, Predictions,
};
use fisheye_multinet::labels::{SegClass, SegMask};
use fisheye_multinet::model::TaskSet;
use fisheye_multinet::synth::{generate_dataset, GenerateParams};
use fisheye_multinet::train::{TrainConfig, TrainMode};
use proptest::prelude::*;

fn report(label: &str, tasks: TaskSet) -> EvalReport {
    EvalReport {
        label: label.to_string(),
        tasks,
        ji: [Some(0.9), Some(0.25), None],
        mean_iou: Some(0.5),
        ap: [Some(0.75), None, None],
        mean_ap: Some(0.75),
        tpr: Some(1.0),
        fpr: Some(0.0),
    }
}

#[test]
fn inactive_tasks_are_blank_and_missing_values_are_marked() {
    let reports = [report("STL Seg", TaskSet::SEG), report("MTL", TaskSet::ALL)];
    let csv = report_csv(&reports);
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines[0], "metric,STL Seg,MTL");
    assert_eq!(lines[1], "JI road,0.9000,0.9000");
    assert_eq!(lines[3], "JI curb,n/a,n/a");
    assert_eq!(lines[5], "AP Vehicle,,0.7500");
    assert_eq!(lines[6], "AP person,,n/a");
    assert_eq!(lines[9], "TPR,,1.0000");
    assert_eq!(lines.len(), 11);

    let text = report_text(&reports);
    let row = text.lines().find(|l| l.starts_with("AP Vehicle")).unwrap();
    assert_eq!(row.split_whitespace().collect::<Vec<_>>(), ["AP", "Vehicle", "-", "0.7500"]);
}

#[test]
fn oracle_predictions_score_perfectly() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("d");
    generate_dataset(10, 11, &dir, &GenerateParams::desk()).unwrap();
    let samples = Dataset::open(&dir).unwrap().load_split(Split::Train).unwrap();
    let mut ev = Evaluator::new(TaskSet::ALL, 0.5);
    for s in &samples {
        ev.add(&Predictions::oracle(s), s);
    }
    let r = ev.report("oracle");
    assert_eq!(r.ji[0], Some(1.0));
    assert_eq!(r.mean_iou, Some(1.0));
    assert_eq!(r.ap[0], Some(1.0));
    assert_eq!(r.fpr.unwrap_or(0.0), 0.0);
    assert_eq!(r.tpr.unwrap_or(1.0), 1.0);
}

#[test]
fn comparison_is_reproducible_and_labelled() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("d");
    generate_dataset(10, 12, &dir, &GenerateParams::desk()).unwrap();
    let configs: Vec<_> = [TrainMode::StlSeg, TrainMode::Mtl]
        .into_iter()
        .map(|m| {
            let mut c = TrainConfig::new(m, 1, "ignored");
            c.validate = false;
            c
        })
        .collect();
    let manifest = dir.join("dataset.json");
    let a = run_comparison(&manifest, &configs).unwrap();
    let b = run_comparison(&manifest, &configs).unwrap();
    assert_eq!(a, b);
    assert_eq!(a[0].label, "STL Seg");
    assert!(a[0].mean_ap.is_none() && a[0].tpr.is_none());
    assert!(a[1].mean_iou.is_some());
    assert!(report_csv(&a).lines().nth(5).unwrap().starts_with("AP Vehicle,,"));
}

fn arb_masks() -> impl Strategy<Value = (SegMask, SegMask, Vec<usize>)> {
    (1usize..8, 1usize..8).prop_flat_map(|(w, h)| {
        let n = w * h;
        (
            prop::collection::vec(0u8..4, n),
            prop::collection::vec(0u8..4, n),
            Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
        )
            .prop_map(move |(p, g, perm)| {
                let mask = |data| SegMask { width: w, height: h, data };
                (mask(p), mask(g), perm)
            })
    })
}

proptest! {
    #[test]
    fn jaccard_is_symmetric_and_permutation_invariant((p, g, perm) in arb_masks()) {
        let permute = |m: &SegMask| SegMask { data: perm.iter().map(|&i| m.data[i]).collect(), ..m.clone() };
        for class in [SegClass::Road, SegClass::Lane, SegClass::Curb] {
            let j = jaccard_per_class(&p, &g, class);
            prop_assert_eq!(j.to_bits(), jaccard_per_class(&g, &p, class).to_bits());
            prop_assert_eq!(j.to_bits(), jaccard_per_class(&permute(&p), &permute(&g), class).to_bits());
            prop_assert!(j.is_nan() || (0.0..=1.0).contains(&j));
        }
    }
}
