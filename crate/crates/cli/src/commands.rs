use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use insulnet::data::{
    generate_synthetic_dataset, load_manifest, load_samples, read_image, split_of, write_image, write_mask,
    LoadedSample, Split, SplitCounts, SyntheticSceneSpec,
};
use insulnet::layers::InitSpec;
use insulnet::models::{load_unet, load_vgg, read_checkpoint, write_checkpoint, UNetLite, VggLite};
use insulnet::pipeline::{sweep_threshold, threshold_grid, Pipeline};
use insulnet::training::{
    evaluate, prepare_classification, run_regime_grid, summary_csv, train_classifier, train_segmentation,
    EvalMode, EvalModels, GridConfig, MaskSource, TrainOutput,
};

use crate::config::{Command, RunConfig};
use crate::{CliError, ModeArg, ModelArgs, SplitArg, TrainArgs};

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn resolve(args: &TrainArgs) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load_or_default(args.config.as_deref())?;
    if let Some(m) = &args.manifest {
        cfg.data.manifest = Some(m.clone());
    }
    if let Some(d) = &args.run_dir {
        cfg.run_dir = Some(d.clone());
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn missing_file(problems: &mut Vec<String>, key: &str, path: Option<&Path>) {
    if let Some(p) = path.filter(|p| !p.is_file()) {
        problems.push(format!("{key}: no such file `{}`", p.display()));
    }
}

/// Validates `cfg` for `command` plus any extra problems; on success either
/// prints the configuration (dry run) or prepares the run directory.
fn start(cfg: &RunConfig, command: Command, mut extra: Vec<String>, dry_run: bool) -> Result<Option<u64>, CliError> {
    let mut problems = cfg.problems(command);
    missing_file(&mut problems, "data.manifest", cfg.data.manifest.as_deref());
    problems.append(&mut extra);
    if !problems.is_empty() {
        return Err(CliError::Validation(problems));
    }
    if dry_run {
        print!("{}", cfg.to_toml());
        return Ok(None);
    }
    let dir = cfg.run_dir.as_deref().expect("validated");
    write(&dir.join("config.toml"), cfg.to_toml())?;
    Ok(Some(unix_now()))
}

fn finish(cfg: &RunConfig, command: &str, started: u64) -> Result<(), CliError> {
    let meta = serde_json::json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "started_unix": started,
        "finished_unix": unix_now(),
    });
    let dir = cfg.run_dir.as_deref().expect("validated");
    write(&dir.join("metadata.json"), format!("{meta:#}\n"))
}

fn write_output(dir: &Path, out: &TrainOutput) -> Result<(), CliError> {
    write(&dir.join("train_log.csv"), out.log.to_csv())?;
    write_checkpoint(&out.best, &dir.join("best.ckpt"))?;
    write_checkpoint(&out.last, &dir.join("last.ckpt"))?;
    Ok(())
}

fn load_split(manifest: &Path, split: Split) -> Result<Vec<LoadedSample>, CliError> {
    Ok(load_samples(&split_of(&load_manifest(manifest)?, split))?)
}

fn load_train_val(cfg: &RunConfig) -> Result<(Vec<LoadedSample>, Vec<LoadedSample>), CliError> {
    let samples = load_manifest(cfg.data.manifest.as_deref().expect("validated"))?;
    Ok((load_samples(&split_of(&samples, Split::Train))?, load_samples(&split_of(&samples, Split::Val))?))
}

pub fn gen_data(out: &Path, per_class: usize, val_per_class: usize, seed: u64, size: usize) -> Result<(), CliError> {
    let template = SyntheticSceneSpec { width: size, height: size, ..Default::default() };
    let mut problems = Vec::new();
    if per_class + val_per_class == 0 {
        problems.push("per-class: at least one image is required".to_string());
    }
    if let Err(e) = template.validate() {
        problems.push(format!("size: {e}"));
    }
    if !problems.is_empty() {
        return Err(CliError::Validation(problems));
    }
    let counts = SplitCounts { train_per_class: per_class, val_per_class };
    let samples = generate_synthetic_dataset(counts, &template, seed, out)?;
    println!("wrote {} samples to {}", samples.len(), out.join("manifest.csv").display());
    Ok(())
}

pub fn train_seg(args: &TrainArgs) -> Result<(), CliError> {
    let cfg = resolve(args)?;
    let Some(started) = start(&cfg, Command::TrainSeg, Vec::new(), args.dry_run)? else {
        return Ok(());
    };
    let (train, val) = load_train_val(&cfg)?;
    let seg = cfg.seg_train().map_err(|e| CliError::Validation(vec![e]))?;
    let mut unet = UNetLite::new(cfg.unet, &InitSpec::he(cfg.segmentation.init_seed))?;
    let (out, warm) = train_segmentation(&mut unet, &train, &val, &seg)?;
    let dir = cfg.run_dir.as_deref().expect("validated");
    write_output(dir, &out)?;
    let summary = serde_json::json!({
        "steps": out.log.last_step(),
        "best_step": out.log.best().map(|b| b.step),
        "best_val_iou": out.log.best().map(|b| b.val_metric),
        "warm_start": warm.map(|w| serde_json::json!({
            "first_final_val_loss": w.first_final_val_loss,
            "second_initial_val_loss": w.second_initial_val_loss,
            "holds": w.holds(),
        })),
    });
    write(&dir.join("summary.json"), format!("{summary:#}\n"))?;
    if let Some(b) = out.log.best() {
        println!("best val IoU {:.4} at step {}", b.val_metric, b.step);
    }
    finish(&cfg, "train-seg", started)
}

/// Parses `pre,reset,alt` (any subset, or `none`).
fn parse_regime(s: &str) -> Result<(bool, bool, bool), String> {
    let mut flags = (false, false, false);
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty() && *p != "none") {
        match part {
            "pre" => flags.0 = true,
            "reset" => flags.1 = true,
            "alt" => flags.2 = true,
            other => return Err(format!("unknown regime flag `{other}` (expected pre, reset, alt)")),
        }
    }
    Ok(flags)
}

pub fn train_cls(
    args: &TrainArgs,
    regime: Option<&str>,
    segmenter: Option<PathBuf>,
    pretrained: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut cfg = resolve(args)?;
    let mut extra = Vec::new();
    if let Some(r) = regime {
        match parse_regime(r) {
            Ok((p, s, a)) => cfg.classification.regime = cfg.classification.regime.with_flags(p, s, a),
            Err(e) => extra.push(format!("--regime: {e}")),
        }
    }
    if segmenter.is_some() {
        cfg.classification.segmenter = segmenter;
    }
    if pretrained.is_some() {
        cfg.classification.pretrained = pretrained;
    }
    missing_file(&mut extra, "classification.segmenter", cfg.classification.segmenter.as_deref());
    missing_file(&mut extra, "classification.pretrained", cfg.classification.pretrained.as_deref());
    let Some(started) = start(&cfg, Command::TrainCls, extra, args.dry_run)? else {
        return Ok(());
    };

    let (train, val) = load_train_val(&cfg)?;
    let unet = cfg.classification.segmenter.as_deref().map(load_unet).transpose()?;
    let source = match &unet {
        Some(unet) => MaskSource::Segmenter { unet, threshold: cfg.pipeline.threshold },
        None => MaskSource::GroundTruth,
    };
    let train = prepare_classification(&train, &source)?;
    let val = prepare_classification(&val, &source)?;
    let init = match (cfg.classification.regime.pretrained, &cfg.classification.pretrained) {
        (true, Some(p)) => Some(read_checkpoint(p)?),
        _ => None,
    };
    let cls = cfg.cls_train().map_err(|e| CliError::Validation(vec![e]))?;
    let mut vgg = VggLite::new(cfg.vgg.clone(), &InitSpec::he(cfg.classification.init_seed))?;
    let out = train_classifier(&mut vgg, &train, &val, &cls, init.as_ref())?;
    let dir = cfg.run_dir.as_deref().expect("validated");
    write_output(dir, &out)?;
    if let Some(b) = out.log.best() {
        println!("best val accuracy {:.4} at step {}", b.val_metric, b.step);
    }
    finish(&cfg, "train-cls", started)
}

pub fn ablate(args: &TrainArgs, segmenter: Option<PathBuf>) -> Result<(), CliError> {
    let mut cfg = resolve(args)?;
    if segmenter.is_some() {
        cfg.classification.segmenter = segmenter;
    }
    let mut extra = Vec::new();
    match cfg.classification.segmenter.as_deref() {
        None => extra.push("classification.segmenter: required".to_string()),
        p => missing_file(&mut extra, "classification.segmenter", p),
    }
    let Some(started) = start(&cfg, Command::Ablate, extra, args.dry_run)? else {
        return Ok(());
    };

    let (train, val) = load_train_val(&cfg)?;
    let unet = load_unet(cfg.classification.segmenter.as_deref().expect("validated"))?;
    let grid = GridConfig {
        vgg: cfg.vgg.clone(),
        init_seed: cfg.classification.init_seed,
        cls: cfg.cls_train().map_err(|e| CliError::Validation(vec![e]))?,
        threshold: cfg.pipeline.threshold,
    };
    let out = run_regime_grid(&unet, &train, &val, &grid)?;
    let dir = cfg.run_dir.as_deref().expect("validated");
    write_output(&dir.join("ground_truth"), &out.ground_truth)?;
    for (i, run) in out.runs.iter().enumerate() {
        write_output(&dir.join(format!("regime_{}", i + 1)), run)?;
    }
    let table = summary_csv(&out.rows);
    write(&dir.join("summary.csv"), &table)?;
    print!("{table}");
    finish(&cfg, "ablate", started)
}

/// Fills unset model flags from the config's `[pipeline]` section.
fn resolve_models(args: &ModelArgs) -> Result<(Option<PathBuf>, Option<PathBuf>, f64), CliError> {
    let cfg = RunConfig::load_or_default(args.config.as_deref())?;
    let seg = args.segmenter.clone().or(cfg.pipeline.segmenter);
    let cls = args.classifier.clone().or(cfg.pipeline.classifier);
    let threshold = args.threshold.unwrap_or(cfg.pipeline.threshold);
    let mut problems = Vec::new();
    if !(0.0..=1.0).contains(&threshold) {
        problems.push(format!("pipeline.threshold: {threshold} outside [0,1]"));
    }
    missing_file(&mut problems, "pipeline.segmenter", seg.as_deref());
    missing_file(&mut problems, "pipeline.classifier", cls.as_deref());
    match problems.is_empty() {
        true => Ok((seg, cls, threshold)),
        false => Err(CliError::Validation(problems)),
    }
}

fn split(s: SplitArg) -> Split {
    match s {
        SplitArg::Train => Split::Train,
        SplitArg::Val => Split::Val,
    }
}

pub fn eval(mode: ModeArg, models: &ModelArgs, manifest: &Path, s: SplitArg, out: Option<&Path>) -> Result<(), CliError> {
    let (seg, cls, threshold) = resolve_models(models)?;
    let mode = match mode {
        ModeArg::Segmentation => EvalMode::Segmentation,
        ModeArg::Classification => EvalMode::Classification,
        ModeArg::EndToEnd => EvalMode::EndToEnd,
    };
    let mut problems = Vec::new();
    if mode != EvalMode::Classification && seg.is_none() {
        problems.push("pipeline.segmenter: required".to_string());
    }
    if mode != EvalMode::Segmentation && cls.is_none() {
        problems.push("pipeline.classifier: required".to_string());
    }
    missing_file(&mut problems, "manifest", Some(manifest));
    if !problems.is_empty() {
        return Err(CliError::Validation(problems));
    }
    let unet = match mode {
        EvalMode::Classification => None,
        _ => seg.as_deref().map(load_unet).transpose()?,
    };
    let vgg = match mode {
        EvalMode::Segmentation => None,
        _ => cls.as_deref().map(load_vgg).transpose()?,
    };
    let samples = load_split(manifest, split(s))?;
    let report = evaluate(EvalModels { unet: unet.as_ref(), vgg: vgg.as_ref(), threshold }, &samples, mode)?;
    print!("{}", report.to_text());
    if let Some(dir) = out {
        match mode {
            EvalMode::Segmentation => write(&dir.join("iou.csv"), report.iou_csv())?,
            _ => write(&dir.join("metrics.csv"), report.to_csv())?,
        }
    }
    Ok(())
}

fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| format!("--grid: `{s}` is not lo:hi:step"))?;
    match nums.as_slice() {
        &[lo, hi, step] => threshold_grid(lo, hi, step).map_err(|e| format!("--grid: {e}")),
        _ => Err(format!("--grid: `{s}` is not lo:hi:step")),
    }
}

pub fn sweep(segmenter: &Path, manifest: &Path, s: SplitArg, grid: &str, out: Option<&Path>) -> Result<(), CliError> {
    let mut problems = Vec::new();
    let grid = parse_grid(grid).map_err(|e| problems.push(e)).ok();
    missing_file(&mut problems, "segmenter", Some(segmenter));
    missing_file(&mut problems, "manifest", Some(manifest));
    if !problems.is_empty() {
        return Err(CliError::Validation(problems));
    }
    let unet = load_unet(segmenter)?;
    let samples = load_split(manifest, split(s))?;
    let images: Vec<_> = samples.iter().map(|s| &s.image).collect();
    let truths = samples
        .iter()
        .enumerate()
        .map(|(i, s)| s.mask.as_ref().ok_or_else(|| CliError::Runtime(format!("sample {i} has no mask"))))
        .collect::<Result<Vec<_>, _>>()?;
    let result = sweep_threshold(&unet, &images, &truths, &grid.expect("validated"))?;
    let csv = result.to_csv();
    print!("{csv}");
    let (p, v) = result.best;
    println!("best p={p} mean_iou={v:.4}{}", if result.has_interior_maximum() { "" } else { " (at the grid edge)" });
    if let Some(path) = out {
        write(path, csv)?;
    }
    Ok(())
}

pub fn predict(models: &ModelArgs, out: Option<&Path>, images: &[PathBuf]) -> Result<(), CliError> {
    let (seg, cls, threshold) = resolve_models(models)?;
    let mut problems = Vec::new();
    if seg.is_none() {
        problems.push("pipeline.segmenter: required".to_string());
    }
    if cls.is_none() {
        problems.push("pipeline.classifier: required".to_string());
    }
    for img in images {
        missing_file(&mut problems, "image", Some(img));
    }
    if !problems.is_empty() {
        return Err(CliError::Validation(problems));
    }
    let pipe = Pipeline::new(load_unet(&seg.expect("checked"))?, load_vgg(&cls.expect("checked"))?, threshold)?;
    for path in images {
        let prediction = pipe.predict(&read_image(path)?)?;
        let json = prediction.to_json();
        println!("{}: {json}", path.display());
        if let Some(dir) = out {
            let stem = path.file_stem().map_or_else(|| "image".into(), |s| s.to_string_lossy().into_owned());
            write(&dir.join(format!("{stem}.json")), format!("{json}\n"))?;
            write_mask(&dir.join(format!("{stem}_mask.png")), &prediction.mask)?;
            write_image(&dir.join(format!("{stem}_composed.png")), &prediction.composed)?;
        }
    }
    Ok(())
}
