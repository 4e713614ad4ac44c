use std::path::Path;
use std::process::{Command, Output};

use srcondense::data::{load_image, save_gray_png, save_rgb_png, ImagePlane, PlaneRole};
use srcondense::train::Adam;
use srcondense::{toy, Checkpoint, Model};

fn srcondense(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srcondense")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = srcondense(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn textured(h: usize, w: usize, phase: f64) -> ImagePlane<f64> {
    ImagePlane::from_fn(h, w, PlaneRole::Gray, |y, x| {
        128.0 + 60.0 * ((x as f64 * 0.4 + phase).sin() * (y as f64 * 0.3).cos()) + (x * y % 17) as f64
    })
}

/// A fully condensed model with every weight and bias zero.
fn zero_checkpoint(path: &Path, condense: bool) {
    let mut model = Model::<f64>::build(&toy::model_config(2), 0).unwrap();
    model.zero_parameters();
    if condense {
        for _ in 1..model.config().condense_factor {
            model.condense().unwrap();
        }
    }
    Checkpoint { model, adam: Adam::new(0.9, 0.999, 1e-8), epoch: 3, step: 12 }.save(path).unwrap();
}

#[test]
fn invalid_scale_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let out = srcondense(&["train", "--toy", "--scale", "5", "--out", p(&run)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
    assert!(!run.exists());
    let out = srcondense(&["train", "--toy", "--set", "no_such_key=1", "--out", p(&run)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!run.exists());
}

#[test]
fn dry_run_shows_condense_plan() {
    let text = ok(&["train", "--dry-run", "--epochs", "180"]);
    assert!(text.lines().any(|l| l == "condense_epochs = 30, 60, 90"), "{text}");
    let toy = ok(&["train", "--dry-run", "--toy"]);
    assert!(toy.lines().any(|l| l == "condense_epochs = 5, 10, 15"), "{toy}");
}

#[test]
fn zero_model_evaluates_as_bicubic() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    std::fs::create_dir(&data).unwrap();
    for i in 0..3 {
        save_gray_png(&textured(60 + 2 * i, 64, i as f64), data.join(format!("img{i}.png"))).unwrap();
    }
    let ckpt = dir.path().join("zero.ckpt");
    zero_checkpoint(&ckpt, true);
    let out = dir.path().join("eval");
    ok(&["eval", "--checkpoint", p(&ckpt), "--data", p(&data), "--out", p(&out), "--jobs", "2"]);
    let csv = std::fs::read_to_string(out.join("eval.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "image,psnr,ssim,bicubic_psnr,bicubic_ssim");
    assert_eq!(rows.len(), 4);
    for row in &rows[1..] {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!((f[1], f[2]), (f[3], f[4]), "{row}");
    }
    let summary = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("images=3\n"));
    let field = |k: &str| summary.lines().find_map(|l| l.strip_prefix(k)).unwrap().to_owned();
    assert_eq!(field("psnr="), field("bicubic_psnr="));
}

#[test]
fn sr_keeps_colour_layout() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("zero.ckpt");
    zero_checkpoint(&ckpt, true);
    let (r, g, b) = (textured(48, 40, 0.0), textured(48, 40, 1.0), textured(48, 40, 2.0));
    let rgb = dir.path().join("rgb.png");
    save_rgb_png([&r, &g, &b], &rgb).unwrap();
    let gray = dir.path().join("gray.png");
    save_gray_png(&textured(40, 48, 0.5), &gray).unwrap();
    for (input, h, w, colour) in [(&rgb, 96, 80, true), (&gray, 80, 96, false)] {
        let output = dir.path().join(format!("sr_{}", input.file_name().unwrap().to_str().unwrap()));
        ok(&["sr", "--checkpoint", p(&ckpt), "--input", p(input), "--output", p(&output)]);
        let img = load_image::<f64>(&output).unwrap();
        assert_eq!((img.height(), img.width()), (h, w));
        assert_eq!(img.to_ycbcr().1.is_some(), colour);
    }
}

#[test]
fn inspect_reports_retention() {
    let fresh = ok(&["inspect", "--toy"]);
    assert!(fresh.contains("mean_retention=1.000000"), "{fresh}");
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("c.ckpt");
    zero_checkpoint(&ckpt, true);
    let text = ok(&["inspect", "--checkpoint", p(&ckpt)]);
    assert!(text.starts_with("epoch=3 step=12\n"), "{text}");
    assert!(text.contains("mean_retention=0.250000"), "{text}");
    assert!(text.contains("25.0%"));
}

#[test]
fn flops_report_default_model() {
    let text = ok(&["flops"]);
    let get = |k: &str| text.lines().find_map(|l| l.strip_prefix(k)).unwrap().parse::<u64>().unwrap();
    let total = get("total_macs=");
    assert_eq!(total, get("condensed_macs="));
    assert_eq!(2 * total, get("total_flops_2x="));
    let ratio = total as f64 / 668.88e6;
    assert!((0.75..=1.25).contains(&ratio), "{total}");
    let dense = ok(&["flops", "--state", "dense"]);
    assert!(dense.lines().any(|l| l == format!("total_macs={}", get("dense_macs="))), "{dense}");
}

#[test]
fn bad_inputs_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = srcondense(&["eval", "--checkpoint", p(&dir.path().join("missing.ckpt")), "--toy", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.ckpt"));
    let ckpt = dir.path().join("dense.ckpt");
    zero_checkpoint(&ckpt, false);
    let out = srcondense(&["eval", "--checkpoint", p(&ckpt), "--toy", "--out", p(&dir.path().join("e"))]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(srcondense(&["train", "--toy"]).status.code(), Some(2));
}
