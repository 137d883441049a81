use std::path::Path;

use candle_core::{Device, Tensor};
use rfbtd_cli::config::TrainConfig;
use rfbtd_cli::inference::detect_image;
use rfbtd_cli::native::{select_kernel, NativeKernel};
use rfbtd_cli::rf_analyze::{analyze, Variant};
use rfbtd_cli::training::{read_log, train, TrainOptions, LAST_CHECKPOINT, LOG_FILE, MANIFEST_FILE};
use rfbtd_core::kernel::ReferenceKernel;
use rfbtd_core::postprocess::NmsConfig;
use rfbtd_model::{Checkpoint, Detector, ModelConfig};
use tempfile::tempdir;

fn small_config(out: &Path, steps: u64) -> TrainConfig {
    let mut cfg = TrainConfig::overfit_smoke();
    cfg.data.synthetic_scenes = 3;
    cfg.data.crop_size = 64;
    cfg.data.batch_size = 2;
    cfg.run.max_steps = steps;
    cfg.run.output_dir = out.to_path_buf();
    cfg
}

fn tensors(path: &Path) -> Vec<(String, Vec<f32>)> {
    let ck = Checkpoint::read(path).unwrap();
    let model = Detector::new(ck.config.clone(), 0, &Device::Cpu).unwrap();
    ck.load_into(&model).unwrap();
    model
        .params()
        .iter()
        .map(|(n, v, _)| (n.to_string(), v.as_tensor().flatten_all().unwrap().to_vec1::<f32>().unwrap()))
        .collect()
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let d = tempdir().unwrap();
    let (full, part) = (d.path().join("full"), d.path().join("part"));
    let opts = TrainOptions::default();

    let a = train(&small_config(&full, 4), &opts).unwrap();
    assert_eq!((a.start_step, a.final_step), (0, 4));

    train(&small_config(&part, 2), &opts).unwrap();
    let resume = TrainOptions { resume: Some(part.join(LAST_CHECKPOINT)), ..TrainOptions::default() };
    let b = train(&small_config(&part, 4), &resume).unwrap();
    assert_eq!((b.start_step, b.final_step), (2, 4));

    let log_a = read_log(&full.join(LOG_FILE)).unwrap();
    let log_b = read_log(&part.join(LOG_FILE)).unwrap();
    assert_eq!(log_a.len(), 4);
    assert_eq!(log_a, log_b, "loss curves diverge after resuming");
    assert_eq!(tensors(&full.join(LAST_CHECKPOINT)), tensors(&part.join(LAST_CHECKPOINT)));

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(part.join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 0);
    assert_eq!(manifest["final_step"], 4);
}

#[test]
fn resuming_with_another_architecture_is_refused() {
    let d = tempdir().unwrap();
    train(&small_config(d.path(), 1), &TrainOptions::default()).unwrap();
    let mut other = small_config(&d.path().join("b"), 2);
    other.model.decoder_widths[2] = 8;
    let resume = TrainOptions { resume: Some(d.path().join(LAST_CHECKPOINT)), ..TrainOptions::default() };
    assert!(train(&other, &resume).is_err());
}

#[test]
fn missing_dataset_aborts_before_any_step() {
    let d = tempdir().unwrap();
    let mut cfg = small_config(&d.path().join("out"), 3);
    cfg.data.synthetic_scenes = 0;
    cfg.data.train_images = Some(d.path().join("nope"));
    cfg.data.train_gts = Some(d.path().join("nope"));
    assert!(train(&cfg, &TrainOptions::default()).is_err());
    assert!(!d.path().join("out").join(LOG_FILE).exists());
}

#[test]
fn model_that_scores_nothing_yields_no_detections() {
    let model = Detector::new(ModelConfig::tiny(), 1, &Device::Cpu).unwrap();
    model.params().zero_prefix("head.score.").unwrap();
    model.params().assign("head.score.bias", &Tensor::new(&[-20f32], &Device::Cpu).unwrap()).unwrap();
    let blank = image::RgbImage::from_pixel(96, 70, image::Rgb([255, 255, 255]));
    let dets = detect_image(&model, &blank, 0, &NmsConfig::default(), &ReferenceKernel).unwrap();
    assert!(dets.is_empty());
}

#[test]
fn native_kernel_falls_back_to_reference() {
    let (k, note) = select_kernel(false, None);
    assert_eq!(k.layout_version(), 1);
    assert_eq!(note, "reference kernel");

    let (k, note) = select_kernel(true, Some(Path::new("/nonexistent/librfbtd_nms.so")));
    assert_eq!(k.layout_version(), 1);
    assert!(note.contains("unavailable"), "{note}");
}

#[test]
fn library_without_kernel_symbols_is_rejected() {
    // Any shared object lacking the entry points will do.
    let candidates = ["/lib/x86_64-linux-gnu/libm.so.6", "/usr/lib/x86_64-linux-gnu/libm.so.6", "/lib64/libm.so.6"];
    let Some(path) = candidates.iter().map(Path::new).find(|p| p.exists()) else {
        return;
    };
    assert!(NativeKernel::load(path).is_err());
}

#[test]
fn rf_report_and_maps() {
    let d = tempdir().unwrap();
    let reports = analyze(&Variant::ALL, Some(d.path()), 32).unwrap();
    let by = |v: Variant| reports.iter().find(|r| r.variant == v).unwrap();
    assert_eq!(by(Variant::Rfb).profile.radii, vec![3, 9, 15]);
    assert_eq!(by(Variant::RfbS).profile.radii, vec![3, 9, 13]);
    assert_eq!(by(Variant::Plain).profile.size, 5);
    assert!(by(Variant::RfbS).support > by(Variant::Plain).support);
    for v in Variant::ALL {
        assert!(d.path().join(format!("rf_{}.png", v.name())).is_file());
    }
}

#[test]
fn overlay_strokes_box_edges_only() {
    use rfbtd_cli::inference::draw_overlay;
    use rfbtd_core::geometry::Quad;
    use rfbtd_core::postprocess::Detection;

    let img = image::RgbImage::from_pixel(40, 30, image::Rgb([0, 0, 0]));
    let q = Quad::from_coords([5., 5., 25., 5., 25., 15., 5., 15.]);
    let out = draw_overlay(&img, &[Detection::new(q, 0.9)]);
    assert_eq!(out.get_pixel(15, 5).0, [255, 40, 40]);
    assert_eq!(out.get_pixel(5, 10).0, [255, 40, 40]);
    assert_eq!(out.get_pixel(15, 10).0, [0, 0, 0]);
    assert_eq!(out.get_pixel(35, 25).0, [0, 0, 0]);
    // Boxes leaving the frame are clipped rather than panicking.
    let big = Quad::from_coords([-10., -10., 80., -10., 80., 60., -10., 60.]);
    draw_overlay(&img, &[Detection::new(big, 0.9)]);
}

#[test]
fn inference_writes_one_submission_per_readable_image() {
    use rfbtd_cli::inference::infer_paths;

    let d = tempdir().unwrap();
    let inputs = d.path().join("in");
    std::fs::create_dir_all(&inputs).unwrap();
    image::RgbImage::from_pixel(64, 48, image::Rgb([255, 255, 255])).save(inputs.join("img_1.png")).unwrap();
    image::RgbImage::from_pixel(50, 70, image::Rgb([128, 128, 128])).save(inputs.join("img_2.jpg")).unwrap();
    std::fs::write(inputs.join("img_3.png"), b"broken").unwrap();

    let model = Detector::new(ModelConfig::tiny(), 1, &Device::Cpu).unwrap();
    model.params().zero_prefix("head.score.").unwrap();
    model.params().assign("head.score.bias", &Tensor::new(&[-20f32], &Device::Cpu).unwrap()).unwrap();
    let files = rfbtd_cli::inference::collect_inputs(&[inputs]).unwrap();
    let out = d.path().join("out");
    let overlays = d.path().join("overlays");
    let s = infer_paths(&model, &files, 96, &NmsConfig::default(), &ReferenceKernel, &out, Some(&overlays)).unwrap();
    assert_eq!(s.processed, 2);
    assert_eq!(s.detections, 0);
    assert_eq!(s.failed.len(), 1);
    assert_eq!(std::fs::read_to_string(out.join("res_img_1.txt")).unwrap(), "");
    assert!(out.join("res_img_2.txt").is_file());
    assert_eq!(image::open(overlays.join("img_2.png")).unwrap().to_rgb8().dimensions(), (50, 70));
}
