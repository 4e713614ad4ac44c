use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use srcondense::data::{bicubic_resize, list_images, load_image, save_gray_png, save_rgb_png, ycbcr_to_rgb, ImagePlane, PatchDataset};
use srcondense::eval::{score_image, super_resolve, ImageScore, ScoreSummary};
use srcondense::flops::{count_flops, count_model_flops, LgcState};
use srcondense::train::{checkpoint_dtype, TrainSchedule};
use srcondense::{toy, Checkpoint, Model, Scalar, Trainer};

use crate::config::{Precision, RunConfig};
use crate::{CliError, EvalArgs, FlopsArgs, InspectArgs, SrArgs, TrainArgs};

/// Runs `$f::<T>(args)` with `T` chosen by a stored checkpoint's dtype.
macro_rules! by_checkpoint {
    ($path:expr, $f:ident($($arg:expr),*)) => {
        match checkpoint_dtype($path).map_err(|e| with_path(e, $path))? {
            4 => $f::<f32>($($arg),*),
            8 => $f::<f64>($($arg),*),
            t => Err(CliError::Usage(format!("unsupported scalar width {t} in {}", $path.display()))),
        }
    };
}

/// Names the file in I/O errors, which otherwise only carry the OS message.
fn with_path(e: srcondense::Error, path: &Path) -> CliError {
    match e {
        srcondense::Error::Io(io) => CliError::Usage(format!("{}: {io}", path.display())),
        other => CliError::Core(other),
    }
}

fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>, CliError> {
    Checkpoint::<T>::load(path).map_err(|e| with_path(e, path))
}

fn load_frozen<T: Scalar>(path: &Path) -> Result<Model<T>, CliError> {
    Ok(load_checkpoint::<T>(path)?.model.freeze_for_inference()?)
}

/// Y planes of every image in `dir`, in file-name order.
fn load_y_dir<T: Scalar>(dir: &Path) -> Result<Vec<(String, ImagePlane<T>)>, CliError> {
    let files = list_images(dir)?;
    if files.is_empty() {
        return Err(CliError::Usage(format!("no images in {}", dir.display())));
    }
    files
        .iter()
        .map(|p| {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((name, load_image::<T>(p).map_err(|e| with_path(e, p))?.to_ycbcr().0))
        })
        .collect()
}

pub fn train(rc: &RunConfig, args: &TrainArgs) -> Result<(), CliError> {
    let schedule = TrainSchedule::new(rc.train.epochs, rc.train.lr, rc.model.condense_factor);
    if args.dry_run {
        print!("{}", rc.to_text());
        println!("condense_epochs = {}", join(&schedule.condense_epochs()));
        return Ok(());
    }
    let out = args.out.as_deref().ok_or_else(|| CliError::Usage("train needs --out".into()))?;
    if rc.train_dirs.is_empty() && !args.cfg.toy {
        return Err(CliError::Usage("no training data: pass --train-dir or --toy".into()));
    }
    let precision = match &args.resume {
        Some(p) => match checkpoint_dtype(p).map_err(|e| with_path(e, p))? {
            8 => Precision::F64,
            _ => Precision::F32,
        },
        None => rc.precision,
    };
    match precision {
        Precision::F32 => train_typed::<f32>(rc, args, out),
        Precision::F64 => train_typed::<f64>(rc, args, out),
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(", ")
}

fn train_typed<T: Scalar>(rc: &RunConfig, args: &TrainArgs, out: &Path) -> Result<(), CliError> {
    let data: PatchDataset<T> =
        if rc.train_dirs.is_empty() { toy::train_dataset(rc.model.scale)? } else { PatchDataset::from_dirs(&rc.train_dirs, rc.model.scale)? };
    let val: Vec<(String, ImagePlane<T>)> = match &rc.val_dir {
        Some(d) => load_y_dir(d)?,
        None if args.cfg.toy => toy::test_planes()?,
        None => Vec::new(),
    };
    let mut trainer = match &args.resume {
        Some(p) => {
            let ck = load_checkpoint::<T>(p)?;
            if ck.model.config() != &rc.model {
                return Err(CliError::Usage(format!("{} was trained with a different model configuration", p.display())));
            }
            Trainer::resume(ck, rc.train.clone())?
        }
        None => Trainer::new(Model::build(&rc.model, rc.train.seed)?, rc.train.clone())?,
    };

    fs::create_dir_all(out)?;
    fs::write(out.join("run.cfg"), rc.to_text())?;
    let log_path = out.join("metrics.log");
    // On resume, keep the history up to the checkpoint and drop anything after it.
    let mut log_text = String::new();
    if trainer.epoch > 0 {
        if let Ok(old) = fs::read_to_string(&log_path) {
            for line in old.lines() {
                let epoch = line.strip_prefix("epoch=").and_then(|r| r.split_whitespace().next()).and_then(|e| e.parse::<usize>().ok());
                if epoch.is_some_and(|e| e <= trainer.epoch) {
                    log_text.push_str(line);
                    log_text.push('\n');
                }
            }
        }
    }
    fs::write(&log_path, &log_text)?;
    let mut log = fs::OpenOptions::new().append(true).open(&log_path)?;

    eprintln!(
        "training {} patches for epochs {}..={}, condensing after epochs [{}]",
        data.len(),
        trainer.epoch + 1,
        rc.train.epochs,
        join(&trainer.schedule().condense_epochs())
    );
    let start = std::time::Instant::now();
    trainer.run(&data, |tr, stats| {
        let mut line = stats.to_line();
        if !val.is_empty() {
            let scores = val.iter().map(|(n, p)| score_image(&tr.model, n, p, None)).collect::<srcondense::Result<Vec<_>>>()?;
            let s = ScoreSummary::of(&scores);
            let _ = write!(line, " val_psnr={:.4} val_bicubic_psnr={:.4}", s.psnr, s.bicubic_psnr);
        }
        writeln!(log, "{line}")?;
        tr.checkpoint().save(out.join(format!("epoch_{:04}.ckpt", stats.epoch)))?;
        println!("{line}");
        Ok(())
    })?;
    eprintln!("finished in {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    by_checkpoint!(&args.checkpoint, eval_typed(args))
}

fn eval_typed<T: Scalar>(args: &EvalArgs) -> Result<(), CliError> {
    let model = load_frozen::<T>(&args.checkpoint)?;
    let hr = match &args.data {
        Some(d) => load_y_dir::<T>(d)?,
        None => toy::test_planes()?,
    };
    let lr: Vec<Option<ImagePlane<T>>> = match &args.lr_dir {
        Some(d) => hr
            .iter()
            .map(|(name, _)| {
                let p: PathBuf = d.join(name);
                Ok(Some(load_image::<T>(&p).map_err(|e| with_path(e, &p))?.to_ycbcr().0))
            })
            .collect::<Result<_, CliError>>()?,
        None => vec![None; hr.len()],
    };
    let scores = score_parallel(&model, &hr, &lr, args.jobs.max(1))?;
    let summary = ScoreSummary::of(&scores);

    fs::create_dir_all(&args.out)?;
    let mut csv = String::from("image,psnr,ssim,bicubic_psnr,bicubic_ssim\n");
    for s in &scores {
        let _ = writeln!(csv, "{},{:.6},{:.6},{:.6},{:.6}", s.name, s.psnr, s.ssim, s.bicubic_psnr, s.bicubic_ssim);
    }
    fs::write(args.out.join("eval.csv"), csv)?;
    let text = format!(
        "images={}\nscale={}\npsnr={:.6}\nssim={:.6}\nbicubic_psnr={:.6}\nbicubic_ssim={:.6}\n",
        summary.count,
        model.scale(),
        summary.psnr,
        summary.ssim,
        summary.bicubic_psnr,
        summary.bicubic_ssim
    );
    fs::write(args.out.join("summary.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn score_parallel<T: Scalar>(
    model: &Model<T>,
    hr: &[(String, ImagePlane<T>)],
    lr: &[Option<ImagePlane<T>>],
    jobs: usize,
) -> Result<Vec<ImageScore>, CliError> {
    let score = |i: usize| score_image(model, &hr[i].0, &hr[i].1, lr[i].as_ref());
    let mut results: Vec<Option<srcondense::Result<ImageScore>>> = (0..hr.len()).map(|_| None).collect();
    if jobs == 1 {
        for (i, r) in results.iter_mut().enumerate() {
            *r = Some(score(i));
        }
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..jobs)
                .map(|j| {
                    let score = &score;
                    s.spawn(move || (j..hr.len()).step_by(jobs).map(|i| (i, score(i))).collect::<Vec<_>>())
                })
                .collect();
            for h in handles {
                for (i, r) in h.join().expect("scoring thread panicked") {
                    results[i] = Some(r);
                }
            }
        });
    }
    results.into_iter().map(|r| r.expect("every image scored").map_err(CliError::from)).collect()
}

pub fn sr(args: &SrArgs) -> Result<(), CliError> {
    by_checkpoint!(&args.checkpoint, sr_typed(args))
}

fn sr_typed<T: Scalar>(args: &SrArgs) -> Result<(), CliError> {
    let model = load_frozen::<T>(&args.checkpoint)?;
    let img = load_image::<T>(&args.input).map_err(|e| with_path(e, &args.input))?;
    let (y, chroma) = img.to_ycbcr();
    let sy = super_resolve(&model, &y)?;
    let (h, w) = (sy.height(), sy.width());
    if let Some(dir) = args.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    match chroma {
        None => save_gray_png(&sy, &args.output)?,
        Some((cb, cr)) => {
            let (r, g, b) = ycbcr_to_rgb(&sy, &bicubic_resize(&cb, h, w), &bicubic_resize(&cr, h, w));
            save_rgb_png([&r, &g, &b], &args.output)?;
        }
    }
    eprintln!("wrote {}x{} image to {}", w, h, args.output.display());
    Ok(())
}

fn parse_state(s: &str) -> Result<LgcState, CliError> {
    match s {
        "final" => Ok(LgcState::FullyCondensed),
        "dense" => Ok(LgcState::Stage(0)),
        n => n.parse().map(LgcState::Stage).map_err(|_| CliError::Usage(format!("--state: expected final, dense or a number, got `{n}`"))),
    }
}

pub fn flops(rc: &RunConfig, args: &FlopsArgs) -> Result<(), CliError> {
    let report = match &args.checkpoint {
        Some(p) => by_checkpoint!(p, checkpoint_flops(p, args.height, args.width))?,
        None => count_flops(&rc.model, args.height, args.width, parse_state(&args.state)?),
    };
    print!("{}", report.to_text());
    println!();
    print!("{}", report.to_kv());
    Ok(())
}

fn checkpoint_flops<T: Scalar>(path: &Path, h: usize, w: usize) -> Result<srcondense::flops::FlopsReport, CliError> {
    Ok(count_model_flops(&load_checkpoint::<T>(path)?.model, h, w))
}

pub fn inspect(rc: &RunConfig, args: &InspectArgs) -> Result<(), CliError> {
    match &args.checkpoint {
        Some(p) => by_checkpoint!(p, inspect_checkpoint(p)),
        None => {
            print!("{}", retention_report(&Model::<f32>::build(&rc.model, rc.train.seed)?));
            Ok(())
        }
    }
}

fn inspect_checkpoint<T: Scalar>(path: &Path) -> Result<(), CliError> {
    let ck = load_checkpoint::<T>(path)?;
    println!("epoch={} step={}", ck.epoch, ck.step);
    print!("{}", retention_report(&ck.model));
    Ok(())
}

fn retention_report<T: Scalar>(model: &Model<T>) -> String {
    let mut s = format!("{:<28} {:>7} {:>12} {:>10}\n", "layer", "stage", "kept/group", "retention");
    let layers = model.lgc_layers();
    for l in &layers {
        let per_group = l.in_channels();
        let _ = writeln!(
            s,
            "{:<28} {:>7} {:>12} {:>9.1}%",
            l.name(),
            format!("{}/{}", l.stage(), l.final_stage()),
            format!("{}/{}", l.retained_per_group(), per_group),
            100.0 * l.retained_fraction()
        );
    }
    let mean = layers.iter().map(|l| l.retained_fraction()).sum::<f64>() / layers.len().max(1) as f64;
    let _ = writeln!(s, "mean_retention={mean:.6}");
    let _ = writeln!(s, "params_total={}", model.count_params());
    let _ = writeln!(s, "params_active={}", model.count_active_params());
    s
}
