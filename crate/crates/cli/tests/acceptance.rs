//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. Run with `cargo test -p rfbtd-cli --test acceptance`.
//!
//! Runs without the native suppression kernel.

use std::f64::consts::{FRAC_PI_4, PI};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use candle_core::{Device, Tensor};
use ndarray::{s, Array2, Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfbtd_cli::config::{lr_schedule, TrainConfig};
use rfbtd_cli::dataset::Dataset;
use rfbtd_cli::evaluation::eval_dirs;
use rfbtd_cli::training::{evaluate_model, train, TrainOptions};
use rfbtd_core::evalproto::MatchCounts;
use rfbtd_core::geometry::{
    decode_pixel_geometry, encode_pixel_geometry, min_area_rect, polygon_intersection_area, quad_iou, rotated_iou,
    Point, Quad, RBox,
};
use rfbtd_core::labelgen::{build_targets, Annotation, TargetConfig, TrainTarget};
use rfbtd_core::losses::{
    angle_loss_with_grad, dice_loss, dice_loss_with_grad, iou_loss, iou_loss_with_grad, total_loss,
    total_loss_with_grad, LossWeights,
};
use rfbtd_core::postprocess::{detect, standard_nms, Detection, NmsConfig};
use rfbtd_core::rf::{compute_block_profile, compute_rf_profile, plans, LayerSpec};
use rfbtd_core::ModelOutput;
use rfbtd_model::{Detector, Mode, ModelConfig};
use rfbtd_testkit::{brute_force_nms, central_difference, min_rect_by_pairs, raster_iou, relative_error, Pt};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed <= limit, || format!("took {elapsed:.1?}, limit {limit:?}"))
}

// ---------------------------------------------------------------- gradients

fn grad_case(seed: u64) -> (ModelOutput, TrainTarget) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (rows, cols) = (rng.random_range(3..7), rng.random_range(3..7));
    let mut pred = ModelOutput::zeros(rows, cols, 4);
    let mut t = TrainTarget {
        score: Array2::zeros((rows, cols)),
        geometry: Array3::zeros((rows, cols, 5)),
        mask: Array2::ones((rows, cols)),
        stride: 4,
    };
    for r in 0..rows {
        for c in 0..cols {
            pred.score[[r, c, 0]] = rng.random_range(0.05..0.95);
            t.score[[r, c]] = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
            t.mask[[r, c]] = if rng.random_bool(0.85) { 1.0 } else { 0.0 };
            for k in 0..4 {
                let g = rng.random_range(1.0..40.0);
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                t.geometry[[r, c, k]] = g;
                // Keep clear of the kink where prediction equals target.
                pred.geometry[[r, c, k]] = (g + sign * rng.random_range(0.05..15.0)).max(0.2);
            }
            t.geometry[[r, c, 4]] = rng.random_range(-0.78..0.78);
            pred.geometry[[r, c, 4]] = rng.random_range(-0.78..0.78);
        }
    }
    t.score[[0, 0]] = 1.0;
    (pred, t)
}

fn gradients() -> Outcome {
    const H: f64 = 1e-5;
    let start = Instant::now();
    let weights = LossWeights::default();
    let mut worst = [0.0f64; 4];
    for seed in 0..100 {
        let (pred, t) = grad_case(seed);

        let score = pred.score.index_axis(Axis(2), 0).to_owned();
        let (_, g) = dice_loss_with_grad(score.view(), t.score.view(), t.mask.view()).map_err(|e| e.to_string())?;
        let x: Vec<f64> = score.iter().copied().collect();
        let num = central_difference(
            |v| {
                let p = Array2::from_shape_vec(score.dim(), v.to_vec()).unwrap();
                dice_loss(p.view(), t.score.view(), t.mask.view()).unwrap()
            },
            &x,
            H,
        );
        worst[0] = worst[0].max(relative_error(&g.iter().copied().collect::<Vec<_>>(), &num, 1e-8));

        let geo = pred.geometry.slice(s![.., .., 0..4]).to_owned();
        let gt = t.geometry.slice(s![.., .., 0..4]).to_owned();
        let (_, g) = iou_loss_with_grad(geo.view(), gt.view(), t.score.view()).map_err(|e| e.to_string())?;
        let num = central_difference(
            |v| {
                let p = Array3::from_shape_vec(geo.dim(), v.to_vec()).unwrap();
                iou_loss(p.view(), gt.view(), t.score.view()).unwrap()
            },
            &geo.iter().copied().collect::<Vec<_>>(),
            H,
        );
        worst[1] = worst[1].max(relative_error(&g.iter().copied().collect::<Vec<_>>(), &num, 1e-8));

        let th = pred.geometry.index_axis(Axis(2), 4).to_owned();
        let gth = t.geometry.index_axis(Axis(2), 4).to_owned();
        let (_, g) = angle_loss_with_grad(th.view(), gth.view(), t.score.view()).map_err(|e| e.to_string())?;
        let num = central_difference(
            |v| {
                let p = Array2::from_shape_vec(th.dim(), v.to_vec()).unwrap();
                angle_loss_with_grad(p.view(), gth.view(), t.score.view()).unwrap().0
            },
            &th.iter().copied().collect::<Vec<_>>(),
            H,
        );
        worst[2] = worst[2].max(relative_error(&g.iter().copied().collect::<Vec<_>>(), &num, 1e-8));

        let (_, g) = total_loss_with_grad(&pred, &t, &weights).map_err(|e| e.to_string())?;
        let n = pred.score.len();
        let mut x: Vec<f64> = pred.score.iter().copied().collect();
        x.extend(pred.geometry.iter().copied());
        let num = central_difference(
            |v| {
                let mut p = pred.clone();
                p.score = Array3::from_shape_vec(pred.score.dim(), v[..n].to_vec()).unwrap();
                p.geometry = Array3::from_shape_vec(pred.geometry.dim(), v[n..].to_vec()).unwrap();
                total_loss(&p, &t, &weights).unwrap().total
            },
            &x,
            H,
        );
        let mut analytic: Vec<f64> = g.score.iter().copied().collect();
        analytic.extend(g.geometry.iter().copied());
        worst[3] = worst[3].max(relative_error(&analytic, &num, 1e-8));
    }
    let summary = format!("max rel. error dice {:.1e}, iou {:.1e}, angle {:.1e}, total {:.1e}", worst[0], worst[1], worst[2], worst[3]);
    ensure(worst.iter().all(|&e| e <= 1e-4), || summary.clone())?;
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!("{summary}, {:.1?}", start.elapsed()))
}

// ----------------------------------------------------------------- geometry

fn pts(q: &Quad) -> Vec<Pt> {
    q.points().iter().map(|p| (p.x, p.y)).collect()
}

fn random_box(rng: &mut ChaCha8Rng) -> RBox {
    RBox::new(
        rng.random_range(0.0..100.0),
        rng.random_range(0.0..100.0),
        rng.random_range(3.0..60.0),
        rng.random_range(3.0..60.0),
        rng.random_range(-PI..PI),
    )
}

fn geometry_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let mut worst_iou: f64 = 0.0;
    for i in 0..1000 {
        let a = random_box(&mut rng);
        let b = if i % 4 == 0 {
            random_box(&mut rng)
        } else {
            RBox::new(
                a.cx + rng.random_range(-10.0..10.0),
                a.cy + rng.random_range(-10.0..10.0),
                a.w * rng.random_range(0.5..1.5),
                a.h * rng.random_range(0.5..1.5),
                a.theta + rng.random_range(-0.8..0.8),
            )
        };
        let oracle = raster_iou(&pts(&a.to_quad()), &pts(&b.to_quad()), 1000);
        worst_iou = worst_iou.max((rotated_iou(&a, &b) - oracle).abs());
    }
    ensure(worst_iou <= 1e-2, || format!("rotated IoU off by {worst_iou}"))?;

    let mut worst_area: f64 = 0.0;
    let mut checked = 0;
    while checked < 500 {
        let Ok(q) = Quad::new(std::array::from_fn(|_| Point::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0))))
        else {
            continue;
        };
        let r = min_area_rect(&q).map_err(|e| e.to_string())?;
        let (area, _) = min_rect_by_pairs(&pts(&q));
        worst_area = worst_area.max((r.area() - area).abs() / area);
        let inflated = RBox { w: r.w + 1e-6, h: r.h + 1e-6, ..r };
        ensure(q.points().iter().all(|p| inflated.contains(*p)), || format!("{q:?} not enclosed by {r:?}"))?;
        checked += 1;
    }
    ensure(worst_area <= 1e-9, || format!("min-area rectangle area off by {worst_area:e} (relative)"))?;
    within(start.elapsed(), Duration::from_secs(300))?;
    Ok(format!(
        "IoU max deviation {worst_iou:.2e} (1000 pairs), rect area rel. deviation {worst_area:.1e} (500 quads), {:.1?}",
        start.elapsed()
    ))
}

fn encode_decode() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1002);
    let mut worst: f64 = 1.0;
    for _ in 0..1000 {
        let b = RBox::new(
            rng.random_range(0.0..500.0),
            rng.random_range(0.0..500.0),
            rng.random_range(2.0..200.0),
            rng.random_range(2.0..200.0),
            rng.random_range(-3.0..3.0),
        );
        let [tl, tr, _, bl] = *b.to_quad().points();
        let p = tl + (tr - tl) * rng.random_range(0.01..0.99) + (bl - tl) * rng.random_range(0.01..0.99);
        let g = encode_pixel_geometry(&b, p).map_err(|e| format!("{b:?}: {e}"))?;
        let back = decode_pixel_geometry(p, &g).map_err(|e| format!("{b:?}: {e}"))?;
        worst = worst.min(rotated_iou(&b, &back));
    }
    ensure(worst >= 0.999, || format!("worst IoU {worst}"))?;
    Ok(format!("worst IoU {worst:.6} over 1000 pairs"))
}

fn separated_boxes(rng: &mut ChaCha8Rng, size: f64, count: usize) -> Vec<RBox> {
    let mut boxes: Vec<RBox> = Vec::new();
    while boxes.len() < count {
        let h = rng.random_range(12.0..40.0);
        let b = RBox::new(
            rng.random_range(0.0..size),
            rng.random_range(0.0..size),
            h * rng.random_range(1.0..5.0),
            h,
            rng.random_range(-FRAC_PI_4..FRAC_PI_4),
        );
        let (x0, y0, x1, y1) = b.to_quad().bounds();
        let halo = RBox { w: b.w + 16.0, h: b.h + 16.0, ..b }.to_quad();
        if x0 > 0.0 && y0 > 0.0 && x1 < size && y1 < size
            && boxes.iter().all(|o| polygon_intersection_area(&halo, &o.to_quad()) == 0.0)
        {
            boxes.push(b);
        }
    }
    boxes
}

fn label_decode() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1003);
    let mut worst: f64 = 1.0;
    let mut total = 0;
    for _ in 0..20 {
        let boxes = separated_boxes(&mut rng, 512.0, 5);
        let anns: Vec<_> = boxes.iter().map(|b| Annotation::new(b.to_quad(), "w")).collect();
        let t = build_targets(&anns, 512, 512, 4, &TargetConfig::default()).map_err(|e| e.to_string())?;
        let (rows, cols) = t.dim();
        let mut out = ModelOutput::zeros(rows, cols, 4);
        out.score.index_axis_mut(Axis(2), 0).assign(&t.score);
        out.geometry.assign(&t.geometry);
        let dets = detect(&out, &NmsConfig::default(), (1.0, 1.0));
        ensure(dets.len() == boxes.len(), || format!("{} detections for {} boxes", dets.len(), boxes.len()))?;
        for b in &boxes {
            let best = dets
                .iter()
                .filter_map(|d| min_area_rect(&d.quad).ok())
                .map(|r| rotated_iou(b, &r))
                .fold(0.0, f64::max);
            worst = worst.min(best);
            total += 1;
        }
    }
    ensure(worst >= 0.99, || format!("worst recovered IoU {worst}"))?;
    Ok(format!("worst IoU {worst:.4} over {total} boxes (locality-aware NMS)"))
}

// ------------------------------------------------------------------ network

fn shape_law() -> Outcome {
    let dev = Device::Cpu;
    let model = Detector::new(ModelConfig::default(), 0, &dev).map_err(|e| e.to_string())?;
    let mut seen = Vec::new();
    for (h, w, rows, cols) in [(512, 512, 128, 128), (1280, 704, 320, 176)] {
        let x = Tensor::zeros((1, 3, h, w), candle_core::DType::F32, &dev).map_err(|e| e.to_string())?;
        let heads = model.forward(&x, Mode::Eval).map_err(|e| e.to_string())?;
        let out = heads.to_outputs_full().map_err(|e| e.to_string())?.remove(0);
        ensure(out.score.dim() == (rows, cols, 1) && out.geometry.dim() == (rows, cols, 5), || {
            format!("{h}x{w} gave {:?} + {:?}", out.score.dim(), out.geometry.dim())
        })?;
        seen.push(format!("{h}x{w} -> ({rows},{cols},1)+({rows},{cols},5)"));
    }
    Ok(format!("ResNet-50 detector: {}", seen.join(", ")))
}

fn by_hand(layers: &[(usize, usize, usize)]) -> (usize, usize) {
    let (mut size, mut jump) = (1, 1);
    for &(k, s, d) in layers {
        size += (k + (k - 1) * (d - 1) - 1) * jump;
        jump *= s;
    }
    (size, jump)
}

fn rf_profiler() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1004);
    for _ in 0..1000 {
        let layers: Vec<_> = (0..rng.random_range(1..8))
            .map(|_| (rng.random_range(1..8), rng.random_range(1..4), rng.random_range(1..6)))
            .collect();
        let specs: Vec<_> = layers.iter().map(|&(k, s, d)| LayerSpec::square(k, s, d)).collect();
        let p = compute_rf_profile(&specs).map_err(|e| e.to_string())?;
        ensure((p.size, p.jump) == by_hand(&layers), || format!("{layers:?}: {:?}", (p.size, p.jump)))?;
    }
    let d5 = compute_rf_profile(&[LayerSpec::square(3, 1, 1), LayerSpec::square(3, 1, 5)]).map_err(|e| e.to_string())?;
    ensure(d5.size == 13, || format!("dilation-5 branch RF {}", d5.size))?;
    let rfb_s = compute_block_profile(&plans::rfb_s()).map_err(|e| e.to_string())?;
    let plain = compute_rf_profile(&plans::plain_refinement()).map_err(|e| e.to_string())?;
    ensure(rfb_s.jump == plain.jump && rfb_s.max_radius() > plain.max_radius(), || {
        format!("RFB-s {:?} vs plain {:?}", rfb_s.radii, plain.radii)
    })?;
    Ok(format!(
        "1000 stacks exact; RFB-s radii {:?} (max {}) > plain {} at jump {}",
        rfb_s.radii,
        rfb_s.max_radius(),
        plain.max_radius(),
        plain.jump
    ))
}

// ---------------------------------------------------------------------- nms

fn nms_instance(rng: &mut ChaCha8Rng) -> Vec<Detection> {
    let n = rng.random_range(0..=64);
    let centers: Vec<(f64, f64)> =
        (0..rng.random_range(1..6)).map(|_| (rng.random_range(0.0..200.0), rng.random_range(0.0..200.0))).collect();
    (0..n)
        .map(|_| {
            let (cx, cy) = centers[rng.random_range(0..centers.len())];
            let r = RBox::new(
                cx + rng.random_range(-15.0..15.0),
                cy + rng.random_range(-15.0..15.0),
                rng.random_range(10.0..50.0),
                rng.random_range(5.0..20.0),
                rng.random_range(-0.6..0.6),
            );
            Detection::new(r.to_quad(), rng.random_range(1..=10) as f64 / 10.0)
        })
        .collect()
}

fn nms() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1005);
    for i in 0..200 {
        let dets = nms_instance(&mut rng);
        let thr = [0.1, 0.2, 0.5][i % 3];
        let scores: Vec<f64> = dets.iter().map(|d| d.score).collect();
        let expected: Vec<Detection> =
            brute_force_nms(&scores, |a, b| quad_iou(&dets[a].quad, &dets[b].quad), thr).into_iter().map(|k| dets[k]).collect();
        let kept = standard_nms(&dets, thr);
        ensure(kept == expected, || format!("instance {i}: {} kept vs oracle {}", kept.len(), expected.len()))?;
        ensure(standard_nms(&kept, thr) == kept, || format!("instance {i}: not idempotent"))?;
        for (a, da) in kept.iter().enumerate() {
            for db in &kept[a + 1..] {
                ensure(quad_iou(&da.quad, &db.quad) <= thr, || format!("instance {i}: survivors overlap"))?;
            }
        }
    }
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!("200 instances match the oracle, idempotent and separated, {:.1?}", start.elapsed()))
}

// ------------------------------------------------------------------ overfit

fn overfit() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = TrainConfig::overfit_smoke();
    cfg.run.output_dir = dir.path().to_path_buf();
    ensure(cfg.loss == LossWeights { lambda_g: 1.0, lambda_theta: 10.0 } && cfg.run.max_steps <= 500, || {
        "overfit config drifted".into()
    })?;
    let opts = TrainOptions { progress_every: 100, ..TrainOptions::default() };
    let manifest = train(&cfg, &opts).map_err(|e| format!("{e:#}"))?;
    let first = manifest.records.first().ok_or("no steps ran")?.total;
    let last = manifest.records.last().ok_or("no steps ran")?.total;

    let ck = rfbtd_model::Checkpoint::read(&dir.path().join(rfbtd_cli::training::LAST_CHECKPOINT)).map_err(|e| e.to_string())?;
    let model = Detector::new(ck.config.clone(), 0, &Device::Cpu).map_err(|e| e.to_string())?;
    ck.load_into(&model).map_err(|e| e.to_string())?;
    let data = Dataset::synthetic(cfg.data.synthetic_scenes, cfg.data.crop_size, cfg.seed);
    let r = evaluate_model(&model, &data, 0, &cfg.detection).map_err(|e| e.to_string())?;

    let summary = format!(
        "{} steps on {} images: loss {first:.3} -> {last:.3} ({:.1}%), F {:.3} (P {:.2}, R {:.2}), {:.0?}",
        manifest.final_step,
        data.len(),
        100.0 * last / first,
        r.fscore,
        r.precision,
        r.recall,
        start.elapsed()
    );
    ensure(last < 0.1 * first, || summary.clone())?;
    ensure(r.fscore >= 0.8, || summary.clone())?;
    within(start.elapsed(), Duration::from_secs(30 * 60))?;
    Ok(summary)
}

// --------------------------------------------------------------- evaluation

fn evaluation_harness() -> Outcome {
    let fx = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/eval10");
    let r = eval_dirs(&fx.join("dets"), &fx.join("gts"), 0.5).map_err(|e| format!("{e:#}"))?;
    ensure(r.counts == MatchCounts { matched: 7, detections: 11, ground_truths: 10 }, || format!("{:?}", r.counts))?;
    ensure((r.precision - 7.0 / 11.0).abs() < 1e-12 && (r.recall - 0.7).abs() < 1e-12 && (r.fscore - 2.0 / 3.0).abs() < 1e-12, || {
        format!("P {} R {} F {}", r.precision, r.recall, r.fscore)
    })?;

    let o = TrainConfig::default().optimizer;
    let rel = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b;
    let checks = [(0, 1e-3), (27_299, 1e-3), (27_300, 1e-4), (54_600, 1e-5), (200_000, 1e-5)];
    for (step, want) in checks {
        let got = lr_schedule(step, &o);
        ensure(rel(got, want), || format!("lr at step {step}: {got} instead of {want}"))?;
    }
    Ok(format!(
        "P {:.4} R {:.4} F {:.4} (7/11/10 exact); lr 1e-3 -> 1e-4 at 27300 -> floor 1e-5",
        r.precision, r.recall, r.fscore
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("gradient correctness", gradients),
        ("geometry oracle equivalence", geometry_oracles),
        ("encode/decode roundtrip", encode_decode),
        ("label/decode consistency", label_decode),
        ("shape law", shape_law),
        ("rf profiler", rf_profiler),
        ("nms correctness", nms),
        ("overfit smoke", overfit),
        ("evaluation harness", evaluation_harness),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
