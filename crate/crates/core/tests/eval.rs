use std::path::PathBuf;

use newsverify::eval::{
    align, class_counts, compute_classification_metrics, load_dataset, load_predictions, rationale_metrics, split,
    Average, DatasetFormat,
};
use newsverify::{Error, Label};

fn eval_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/eval")
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

#[test]
fn politifact_fixture_counts_and_split() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/dataset/politifact.csv");
    let data = load_dataset(&path, DatasetFormat::Delimited).unwrap();
    assert_eq!(data.len(), 275);
    assert_eq!(class_counts(&data), (172, 103));
    let (train, val, test) = split(&data, [7, 2, 1], 7).unwrap();
    assert_eq!((train.len(), val.len(), test.len()), (192, 55, 28));
    let (again, _, _) = split(&data, [7, 2, 1], 7).unwrap();
    assert_eq!(train, again);
}

#[test]
fn bad_label_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    std::fs::write(&path, "id,title,text,label\na,H,B,FAKE\nb,H,B,MAYBE\n").unwrap();
    match load_dataset(&path, DatasetFormat::Delimited) {
        Err(Error::Schema { line, message }) => {
            assert_eq!(line, 3);
            assert!(message.contains("MAYBE"), "{message}");
        }
        other => panic!("expected schema error, got {other:?}"),
    }
}

#[test]
fn duplicate_ids_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    std::fs::write(
        &path,
        "{\"id\":\"a\",\"headline\":\"H\",\"label\":\"REAL\"}\n{\"id\":\"a\",\"headline\":\"I\",\"label\":\"FAKE\"}\n",
    )
    .unwrap();
    assert!(load_dataset(&path, DatasetFormat::RecordPerLine).is_err());
}

#[test]
fn ternary_prediction_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.jsonl");
    std::fs::write(&path, "{\"id\":\"a\",\"pred\":\"REAL\"}\n{\"id\":\"b\",\"pred\":\"UNCERTAIN\"}\n").unwrap();
    assert!(matches!(load_predictions(&path), Err(Error::Schema { line: 2, .. })));
}

#[test]
fn toy_metrics_by_hand() {
    let data = load_dataset(&eval_dir().join("toy.jsonl"), DatasetFormat::RecordPerLine).unwrap();
    let with = load_predictions(&eval_dir().join("predictions_with.jsonl")).unwrap();
    let (p, y) = align(&with, &data).unwrap();
    // TP 3, FP 1, FN 2, TN 4 with FAKE positive.
    let m = compute_classification_metrics(&p, &y, Label::Fake, Average::Binary).unwrap();
    assert!(close(m.acc, 0.7) && close(m.precision, 0.75) && close(m.recall, 0.6) && close(m.f1, 2.0 / 3.0));

    // REAL as positive: TP 4, FP 2, FN 1.
    let real = compute_classification_metrics(&p, &y, Label::Real, Average::Binary).unwrap();
    assert!(close(real.precision, 4.0 / 6.0) && close(real.recall, 0.8) && close(real.f1, 8.0 / 11.0));
    let macro_ = compute_classification_metrics(&p, &y, Label::Fake, Average::Macro).unwrap();
    assert!(close(macro_.f1, (2.0 / 3.0 + 8.0 / 11.0) / 2.0));
    assert!(close(macro_.acc, 0.7));
}

#[test]
fn paired_rationale_metrics() {
    let data = load_dataset(&eval_dir().join("toy.jsonl"), DatasetFormat::RecordPerLine).unwrap();
    let with = load_predictions(&eval_dir().join("predictions_with.jsonl")).unwrap();
    let mut without = load_predictions(&eval_dir().join("predictions_without.jsonl")).unwrap();
    without.reverse();
    let r = rationale_metrics(&with, &without, &data, Label::Fake, Average::Binary).unwrap();
    // Without rationales: TP 1, FP 2, FN 4, TN 3.
    assert!(close(r.utility.acc, 30.0));
    assert!(close(r.utility.precision, 100.0 * (0.75 - 1.0 / 3.0)));
    assert!(close(r.utility.recall, 40.0));
    assert!(close(r.utility.f1, 100.0 * (2.0 / 3.0 - 0.25)));
    assert!(close(r.las, 0.3));
    let mean = |ps: &[newsverify::eval::Prediction]| {
        ps.iter().map(|p| p.logprob_true_label.unwrap()).sum::<f64>() / ps.len() as f64
    };
    assert!(close(r.rev.unwrap(), mean(&with) - mean(&without)));

    let mut short = without.clone();
    short.pop();
    assert!(matches!(
        rationale_metrics(&with, &short, &data, Label::Fake, Average::Binary),
        Err(Error::Reject(_))
    ));
}

#[test]
fn rev_absent_without_log_likelihoods() {
    let data = load_dataset(&eval_dir().join("toy.jsonl"), DatasetFormat::RecordPerLine).unwrap();
    let with = load_predictions(&eval_dir().join("predictions_with.jsonl")).unwrap();
    let mut without = with.clone();
    without[0].logprob_true_label = None;
    let r = rationale_metrics(&with, &without, &data, Label::Fake, Average::Binary).unwrap();
    assert_eq!(r.rev, None);
    assert!(close(r.las, 0.0));
}
