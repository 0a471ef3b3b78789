use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use madnet::data::{add_awgn, load_image, save_image, ImageBuffer};
use madnet::kv::KvMap;
use madnet::metrics::{psnr, ssim};
use madnet::model::{Model, ModelConfig};
use madnet::trainer::{AdamState, Checkpoint};
use madnet::Element;
use madnet_cli::{
    cmd_analyze_scales, cmd_denoise, cmd_eval, cmd_freq_swap, cmd_train, denoise_image, AnalyzeArgs, DenoiseArgs,
    EvalArgs, FreqSwapArgs, GlobalArgs, TrainArgs, RESOLVED_CONFIG,
};

fn madnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_madnet"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Smooth gray image with a little texture, values inside (0, 1).
fn scene(w: usize, h: usize, phase: f64) -> ImageBuffer {
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (fx, fy) = (x as f64 / 7.0, y as f64 / 5.0);
            data.push(0.5 + 0.3 * (fx + phase).sin() * (fy - phase).cos() + 0.1 * ((x * y) % 3) as f64 / 3.0);
        }
    }
    ImageBuffer::new(w, h, 1, data).unwrap()
}

fn image_dir(root: &Path, n: usize, size: usize) -> PathBuf {
    let dir = root.join("imgs");
    std::fs::create_dir_all(&dir).unwrap();
    for i in 0..n {
        save_image(&scene(size, size, i as f64), &dir.join(format!("img{i}.png"))).unwrap();
    }
    dir
}

/// Two-scale, four-channel model keeps training runs to seconds.
fn small_config(root: &Path) -> PathBuf {
    let path = root.join("small.txt");
    std::fs::write(
        &path,
        "model.base_channels = 4\nmodel.stages = 2\nmodel.heads_per_stage = 1,1\npatch = 16\nbatch = 2\n",
    )
    .unwrap();
    path
}

fn identity_checkpoint<T: Element>(root: &Path, cfg: &ModelConfig) -> PathBuf {
    let model = Model::<T>::build(cfg, 3).unwrap();
    let path = root.join(format!("identity_{}.madn", T::DTYPE));
    Checkpoint::from_model(&model, &AdamState::new(&model.params), 0, 0)
        .save(&path)
        .unwrap();
    path
}

fn small_model_config() -> ModelConfig {
    ModelConfig {
        base_channels: 4,
        stages: 4,
        heads_per_stage: vec![1; 4],
        ..ModelConfig::desk(1)
    }
}

#[test]
fn train_writes_checkpoints_log_and_record() {
    let dir = tempfile::tempdir().unwrap();
    let data = image_dir(dir.path(), 2, 32);
    let cfg = small_config(dir.path());
    let out = dir.path().join("run1");
    let o = madnet(&[
        "train", "--preset", "synthetic-desk", "--data", s(&data), "--out", s(&out), "--iters", "5",
        "--checkpoint-every", "2", "--seed", "7", "--config", s(&cfg),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["checkpoint_0000002.madn", "checkpoint_0000004.madn", "final.madn", RESOLVED_CONFIG] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let log = std::fs::read_to_string(out.join("train_log.csv")).unwrap();
    let lines: Vec<_> = log.lines().collect();
    assert_eq!(lines[0], "iter,lr,loss_total,loss_charbonnier,loss_freq");
    assert_eq!(lines.len(), 6);
    let rec = KvMap::load(&out.join(RESOLVED_CONFIG)).unwrap();
    assert_eq!(rec.get("seed"), Some("7"));
    assert_eq!(rec.get("model.base_channels"), Some("4"));
    assert_eq!(rec.get("preset"), Some("synthetic-desk"));
    let final_ckpt = Checkpoint::<f32>::load(&out.join("final.madn")).unwrap();
    assert_eq!(final_ckpt.iteration, 5);
    assert_eq!(final_ckpt.cfg.stages, 2);
}

#[test]
fn resolved_record_replays_the_run_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let data = image_dir(dir.path(), 2, 32);
    let cfg = small_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = madnet(&[
        "train", "--data", s(&data), "--out", s(&a), "--iters", "3", "--seed", "11", "--config", s(&cfg), "--lr",
        "3e-4",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let record = a.join(RESOLVED_CONFIG);
    let o = madnet(&["train", "--config", s(&record), "--out", s(&b)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        std::fs::read(a.join("train_log.csv")).unwrap(),
        std::fs::read(b.join("train_log.csv")).unwrap()
    );
    let (pa, pb) = (
        Checkpoint::<f32>::load(&a.join("final.madn")).unwrap(),
        Checkpoint::<f32>::load(&b.join("final.madn")).unwrap(),
    );
    for ((_, x), (_, y)) in pa.params.iter().zip(pb.params.iter()) {
        assert_eq!(x.data(), y.data());
    }
}

#[test]
fn resume_continues_the_uninterrupted_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let data = image_dir(dir.path(), 2, 32);
    let cfg = small_config(dir.path());
    let g = GlobalArgs {
        seed: Some(5),
        config: Some(cfg),
        ..GlobalArgs::default()
    };
    let full = cmd_train(
        &g,
        &TrainArgs {
            data: Some(data.clone()),
            out: Some(dir.path().join("full")),
            iters: Some(4),
            checkpoint_every: Some(2),
            ..TrainArgs::default()
        },
    )
    .unwrap();
    let resumed = cmd_train(
        &GlobalArgs::default(),
        &TrainArgs {
            out: Some(dir.path().join("resumed")),
            resume: Some(full.out.join("checkpoint_0000002.madn")),
            ..TrainArgs::default()
        },
    )
    .unwrap();
    assert_eq!(resumed.iteration, 4);
    let (pa, pb) = (
        Checkpoint::<f32>::load(&full.final_checkpoint).unwrap(),
        Checkpoint::<f32>::load(&resumed.final_checkpoint).unwrap(),
    );
    for ((name, x), (_, y)) in pa.params.iter().zip(pb.params.iter()) {
        assert_eq!(x.data(), y.data(), "{name}");
    }
    assert_eq!(pa.adam.t, pb.adam.t);
}

#[test]
fn ablation_flag_builds_the_variant() {
    let dir = tempfile::tempdir().unwrap();
    let data = image_dir(dir.path(), 1, 32);
    let cfg = small_config(dir.path());
    let out = dir.path().join("abl");
    let o = madnet(&[
        "train", "--data", s(&data), "--out", s(&out), "--iters", "1", "--ablation", "no_afeb", "--config", s(&cfg),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let c = Checkpoint::<f32>::load(&out.join("final.madn")).unwrap();
    assert!(!c.cfg.toggles.use_afeb);
    assert!(c.cfg.toggles.use_aseb);
    assert!(c.params.names().iter().all(|n| !n.contains("afeb")));
    let rec = KvMap::load(&out.join(RESOLVED_CONFIG)).unwrap();
    assert_eq!(rec.get("ablation"), Some("no_afeb"));
}

#[test]
fn usage_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = madnet(&["train", "--out", s(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--data"));
    assert_eq!(madnet(&["train", "--bogus"]).status.code(), Some(2));
    assert_eq!(madnet(&["frobnicate"]).status.code(), Some(2));
    let o = madnet(&["train", "--data", "/nonexistent/dir", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let o = madnet(&["train", "--data", s(dir.path()), "--out", s(dir.path()), "--ablation", "no_such_row"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runtime_faults_exit_with_code_1() {
    let dir = tempfile::tempdir().unwrap();
    let tiny = dir.path().join("tiny.png");
    save_image(&scene(40, 40, 0.0), &tiny).unwrap();
    let o = madnet(&["analyze-scales", "--image", s(&tiny), "--out", s(&dir.path().join("an"))]);
    assert_eq!(o.status.code(), Some(1));
    let bad = dir.path().join("bad.madn");
    std::fs::write(&bad, b"NOPE0000").unwrap();
    let o = madnet(&[
        "denoise", "--checkpoint", s(&bad), "--input", s(&tiny), "--output", s(&dir.path().join("o.png")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad magic"));
}

#[test]
fn identity_model_denoise_is_exact_for_any_extent() {
    let cfg = small_model_config();
    let m64 = Model::<f64>::build(&cfg, 1).unwrap();
    for (w, h) in [(100, 75), (33, 17), (8, 8), (13, 40), (1, 9)] {
        let img = scene(w, h, 0.3);
        let out = denoise_image(&m64, &img).unwrap();
        assert_eq!(out, img, "{w}x{h}");
    }
}

#[test]
fn denoise_roundtrips_files_and_reports_reference_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_model_config();
    let clean = scene(100, 75, 0.0).quantized();
    let noisy = add_awgn(&clean, 25.0, 2).quantized();
    let (clean_path, noisy_path) = (dir.path().join("clean.png"), dir.path().join("noisy.png"));
    save_image(&clean, &clean_path).unwrap();
    save_image(&noisy, &noisy_path).unwrap();
    for ckpt in [identity_checkpoint::<f32>(dir.path(), &cfg), identity_checkpoint::<f64>(dir.path(), &cfg)] {
        let output = dir.path().join("out.png");
        let r = cmd_denoise(
            &GlobalArgs::default(),
            &DenoiseArgs {
                checkpoint: ckpt,
                input: noisy_path.clone(),
                output: output.clone(),
                reference: Some(clean_path.clone()),
            },
        )
        .unwrap();
        let written = load_image(&output).unwrap();
        assert_eq!(written, noisy);
        let (a, b) = (written.to_tensor::<f64>(), clean.to_tensor::<f64>());
        let want = (psnr(&a, &b, 1.0).unwrap(), ssim(&a, &b).unwrap());
        assert_eq!(r.metrics, Some(want));
        let rec = KvMap::load(&r.record).unwrap();
        assert_eq!(rec.get("command"), Some("denoise"));
    }
}

#[test]
fn dtype_flag_must_match_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = identity_checkpoint::<f32>(dir.path(), &small_model_config());
    let input = dir.path().join("in.png");
    save_image(&scene(16, 16, 0.0), &input).unwrap();
    let o = madnet(&[
        "denoise", "--dtype", "f64", "--checkpoint", s(&ckpt), "--input", s(&input), "--output",
        s(&dir.path().join("o.png")),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn eval_table_layout_sentinel_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let data = image_dir(dir.path(), 2, 48);
    let ckpt = identity_checkpoint::<f64>(dir.path(), &small_model_config());
    let args = |out: &str| EvalArgs {
        checkpoint: ckpt.clone(),
        data: data.clone(),
        sigmas: Some(vec![0.0, 15.0, 25.0]),
        out: dir.path().join(out),
    };
    let g = GlobalArgs {
        seed: Some(4),
        ..GlobalArgs::default()
    };
    let t = cmd_eval(&g, &args("e1")).unwrap();
    assert_eq!(t.images, 2);
    assert_eq!(t.rows[0].psnr, f64::INFINITY);
    assert_eq!(t.rows[0].ssim, 1.0);
    assert!(t.rows[1].psnr > t.rows[2].psnr);
    let table = t.table();
    let lines: Vec<_> = table.lines().collect();
    assert!(lines[0].contains("sigma = 15") && lines[0].contains("sigma = 25"));
    assert_eq!(lines[1].matches("PSNR").count(), 3);
    assert_eq!(lines[1].matches("SSIM").count(), 3);
    let again = cmd_eval(&g, &args("e2")).unwrap();
    assert_eq!(t, again);
    assert_eq!(
        std::fs::read(dir.path().join("e1/eval.csv")).unwrap(),
        std::fs::read(dir.path().join("e2/eval.csv")).unwrap()
    );
    let defaults = cmd_eval(
        &g,
        &EvalArgs {
            sigmas: None,
            ..args("e3")
        },
    )
    .unwrap();
    let sig: Vec<f64> = defaults.rows.iter().map(|r| r.sigma).collect();
    assert_eq!(sig, [15.0, 25.0, 30.0, 50.0]);
}

#[test]
fn eval_on_empty_dataset_fails() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = identity_checkpoint::<f32>(dir.path(), &small_model_config());
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let o = madnet(&[
        "eval", "--checkpoint", s(&ckpt), "--data", s(&empty), "--out", s(&dir.path().join("e")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no images"));
}

#[test]
fn analyze_scales_command_emits_table_layout() {
    let dir = tempfile::tempdir().unwrap();
    let image = dir.path().join("scene.png");
    save_image(&scene(96, 96, 0.5), &image).unwrap();
    let out = dir.path().join("an");
    let o = madnet(&["analyze-scales", "--image", s(&image), "--sigma", "25", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    let header: Vec<_> = stdout.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(header, ["Scale", "MSE", "PSNR", "SSIM"]);
    assert_eq!(stdout.lines().count(), 5);
    let csv = std::fs::read_to_string(out.join("scales.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let r = cmd_analyze_scales(
        &GlobalArgs::default(),
        &AnalyzeArgs {
            image,
            sigma: Some(1e-9),
            levels: None,
            out: dir.path().join("an2"),
        },
    )
    .unwrap();
    assert!(r.rows.iter().all(|row| row.psnr > 150.0));
}

#[test]
fn freq_swap_command_writes_four_images_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let clean = dir.path().join("clean.png");
    save_image(&scene(64, 48, 0.2), &clean).unwrap();
    let out = dir.path().join("fs");
    let sw = cmd_freq_swap(
        &GlobalArgs::default(),
        &FreqSwapArgs {
            clean: clean.clone(),
            degraded: None,
            sigma: None,
            ratio: None,
            out: out.clone(),
        },
    )
    .unwrap();
    for f in madnet_cli::SWAP_FILES.iter().chain(&["report.txt", RESOLVED_CONFIG]) {
        assert!(out.join(f).is_file(), "{f}");
    }
    let rec = KvMap::load(&out.join(RESOLVED_CONFIG)).unwrap();
    assert_eq!(rec.get("ratio"), Some("0.125"));
    assert_eq!(rec.get("sigma"), Some("25"));
    assert!(sw.report().contains("PSNR"));

    let same = cmd_freq_swap(
        &GlobalArgs::default(),
        &FreqSwapArgs {
            clean: clean.clone(),
            degraded: Some(clean.clone()),
            sigma: None,
            ratio: Some(0.3),
            out: dir.path().join("same"),
        },
    )
    .unwrap();
    let c = load_image(&clean).unwrap();
    for img in [&same.clean_low, &same.degraded_low] {
        let err = img.data.iter().zip(&c.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-10);
    }

    let other = dir.path().join("other.png");
    save_image(&scene(64, 40, 0.2), &other).unwrap();
    let o = madnet(&[
        "freq-swap", "--clean", s(&clean), "--degraded", s(&other), "--out", s(&dir.path().join("bad")),
    ]);
    assert_eq!(o.status.code(), Some(1));
}
