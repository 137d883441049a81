use std::path::{Path, PathBuf};

use rfbtd_cli::evaluation::eval_dirs;
use rfbtd_core::evalproto::MatchCounts;
use tempfile::tempdir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn hand_counted_ten_image_fixture() {
    let r = eval_dirs(&fixture("eval10/dets"), &fixture("eval10/gts"), 0.5).unwrap();
    assert_eq!(r.counts, MatchCounts { matched: 7, detections: 11, ground_truths: 10 });
    assert!((r.precision - 7.0 / 11.0).abs() < 1e-12);
    assert!((r.recall - 0.7).abs() < 1e-12);
    assert!((r.fscore - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(r.per_image["img_7"], MatchCounts { matched: 0, detections: 0, ground_truths: 1 });
    assert_eq!(r.per_image["img_5"], MatchCounts::default());
}

#[test]
fn ground_truth_copied_as_detections_scores_one() {
    let d = tempdir().unwrap();
    let gts = fixture("eval10/gts");
    for entry in std::fs::read_dir(&gts).unwrap() {
        let p = entry.unwrap().path();
        let name = p.file_name().unwrap().to_string_lossy().replacen("gt_", "res_", 1);
        // Drop transcriptions and don't-care lines.
        let body: String = std::fs::read_to_string(&p)
            .unwrap()
            .lines()
            .filter(|l| !l.ends_with("###"))
            .map(|l| l.split(',').take(8).collect::<Vec<_>>().join(",") + "\n")
            .collect();
        std::fs::write(d.path().join(name), body).unwrap();
    }
    let r = eval_dirs(d.path(), &gts, 0.5).unwrap();
    assert_eq!((r.precision, r.recall, r.fscore), (1.0, 1.0, 1.0));
}

#[test]
fn empty_submission_directory_has_zero_recall() {
    let d = tempdir().unwrap();
    let r = eval_dirs(d.path(), &fixture("eval10/gts"), 0.5).unwrap();
    assert_eq!(r.recall, 0.0);
    assert_eq!(r.fscore, 0.0);
    assert_eq!(r.counts.ground_truths, 10);
}

#[test]
fn submission_without_ground_truth_is_an_error() {
    let d = tempdir().unwrap();
    std::fs::write(d.path().join("res_img_99.txt"), "").unwrap();
    let err = eval_dirs(d.path(), &fixture("eval10/gts"), 0.5).unwrap_err().to_string();
    assert!(err.contains("res_img_99.txt"), "{err}");
}

#[test]
fn malformed_submission_is_reported() {
    let d = tempdir().unwrap();
    std::fs::write(d.path().join("res_img_1.txt"), "1,2,3\n").unwrap();
    assert!(eval_dirs(d.path(), &fixture("eval10/gts"), 0.5).is_err());
}
