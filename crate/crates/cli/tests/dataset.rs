use std::collections::BTreeSet;

use rfbtd_cli::dataset::{sample, Dataset};
use tempfile::tempdir;

#[test]
fn sampling_is_a_pure_function_of_its_inputs() {
    for step in [0u64, 1, 17, 1000] {
        for slot in 0..4 {
            assert_eq!(sample(7, 13, 4, step, slot), sample(7, 13, 4, step, slot));
        }
    }
    let a: Vec<_> = (0..20).map(|s| sample(1, 13, 4, s, 0)).collect();
    let b: Vec<_> = (0..20).map(|s| sample(2, 13, 4, s, 0)).collect();
    assert_ne!(a, b);
}

#[test]
fn each_epoch_visits_every_item_once() {
    let (len, batch) = (10usize, 5usize);
    for epoch in 0..3u64 {
        let mut seen = BTreeSet::new();
        for g in 0..len as u64 {
            let global = epoch * len as u64 + g;
            let (step, slot) = (global / batch as u64, (global % batch as u64) as usize);
            seen.insert(sample(3, len, batch, step, slot).0);
        }
        assert_eq!(seen.len(), len, "epoch {epoch}");
    }
}

#[test]
fn crop_seeds_differ_between_slots() {
    let seeds: BTreeSet<u64> = (0..8).map(|slot| sample(0, 4, 8, 0, slot).1).collect();
    assert_eq!(seeds.len(), 8);
}

fn write_png(path: &std::path::Path) {
    image::RgbImage::from_pixel(40, 30, image::Rgb([200, 200, 200])).save(path).unwrap();
}

#[test]
fn directory_dataset_loads() {
    let d = tempdir().unwrap();
    let (imgs, gts) = (d.path().join("img"), d.path().join("gt"));
    std::fs::create_dir_all(&imgs).unwrap();
    std::fs::create_dir_all(&gts).unwrap();
    write_png(&imgs.join("img_1.png"));
    write_png(&imgs.join("img_2.png"));
    std::fs::write(gts.join("gt_img_1.txt"), "\u{feff}1,1,20,1,20,9,1,9,hello\n").unwrap();
    std::fs::write(gts.join("gt_img_2.txt"), "").unwrap();
    let ds = Dataset::from_dirs(&imgs, &gts).unwrap();
    assert_eq!(ds.len(), 2);
    let (img, anns) = ds.get(0).unwrap();
    assert_eq!(img.dimensions(), (40, 30));
    assert_eq!(anns.len(), 1);
    assert_eq!(ds.key(0), "img_1");
}

#[test]
fn missing_ground_truth_aborts_with_its_name() {
    let d = tempdir().unwrap();
    write_png(&d.path().join("img_3.png"));
    let err = Dataset::from_dirs(d.path(), d.path()).unwrap_err().to_string();
    assert!(err.contains("gt_img_3.txt"), "{err}");
}

#[test]
fn corrupt_inputs_abort_before_training() {
    let d = tempdir().unwrap();
    std::fs::write(d.path().join("img_1.png"), b"not a png").unwrap();
    std::fs::write(d.path().join("gt_img_1.txt"), "").unwrap();
    assert!(Dataset::from_dirs(d.path(), d.path()).is_err());

    let d = tempdir().unwrap();
    write_png(&d.path().join("img_1.png"));
    std::fs::write(d.path().join("gt_img_1.txt"), "1,2,3,oops\n").unwrap();
    assert!(Dataset::from_dirs(d.path(), d.path()).is_err());

    let d = tempdir().unwrap();
    assert!(Dataset::from_dirs(d.path(), d.path()).is_err());
}

#[test]
fn synthetic_items_are_stable() {
    let ds = Dataset::synthetic(3, 96, 5);
    let (a, ga) = ds.get(1).unwrap();
    let (b, gb) = ds.get(1).unwrap();
    assert_eq!(a, b);
    assert_eq!(ga, gb);
    assert!(!ga.is_empty());
    assert_ne!(ds.get(0).unwrap().0, a);
}
