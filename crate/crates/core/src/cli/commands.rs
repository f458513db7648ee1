use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::SegmentConfig;
use super::{exit_code, Command, EvaluateArgs, ImageFormat, OverlayArgs, SegmentArgs, SimulateArgs, EXIT_MISMATCH, EXIT_OK};
use crate::error::{Error, Result};
use crate::eval::{export_trace, overlay, rfe, save_rgb};
use crate::grid::{load_image, load_mask, save_image_pgm16, save_mask, save_raw_f32, BinaryMask, Image};
use crate::multiscale::msnlac_run_monitored;
use crate::speckle::{make_shapes, simulate};

/// A file consumed or produced by a run, identified by content hash.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

/// Contents of `run.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn run_manifest(path: impl AsRef<Path>) -> Result<RunManifest> {
    let path = path.as_ref();
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&text).map_err(|e| Error::InvalidData(format!("{}: {e}", path.display())))
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn digest(role: &str, path: &Path) -> Result<FileDigest> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(FileDigest {
        role: role.to_string(),
        path: path.to_path_buf(),
        sha256: sha256_hex(&bytes),
    })
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let path = dir.join("run.json");
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub(super) fn dispatch(command: Command) -> i32 {
    let outcome = match command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Segment(a) => cmd_segment(&a),
        Command::Evaluate(a) => return cmd_evaluate(&a),
        Command::Overlay(a) => cmd_overlay(&a),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let (w, h) = match (a.width, a.height) {
        (Some(w), Some(h)) => (w, h),
        _ => (a.size, a.size),
    };
    if !(a.alpha > 0.0) || !a.alpha.is_finite() {
        return Err(Error::param("alpha", "must be positive"));
    }
    let phantom = make_shapes::<f64>(w, h, a.fg, a.bg, a.span)?;
    let speckled = simulate(&phantom.clean, a.alpha, a.seed)?;

    create_dir(&a.out)?;
    let mut outputs = Vec::new();
    let ext = match a.format {
        ImageFormat::Pgm16 => "pgm",
        ImageFormat::Raw => "f32",
    };
    for (role, img) in [("clean", &phantom.clean), ("speckled", &speckled)] {
        let path = a.out.join(format!("{role}.{ext}"));
        match a.format {
            ImageFormat::Pgm16 => save_image_pgm16(img, &path)?,
            ImageFormat::Raw => save_raw_f32(img.field(), &path)?,
        }
        outputs.push(digest(role, &path)?);
    }
    let gt_path = a.out.join("gt.pgm");
    save_mask(&phantom.gt_mask, &gt_path)?;
    outputs.push(digest("gt", &gt_path)?);

    let config = serde_json::json!({
        "width": w,
        "height": h,
        "alpha": a.alpha,
        "seed": a.seed,
        "bg": a.bg,
        "fg": a.fg,
        "span": a.span,
        "format": ext,
    });
    write_manifest(
        &a.out,
        &RunManifest {
            command: "simulate".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config,
            inputs: Vec::new(),
            outputs,
        },
    )?;
    for o in &outputs_summary(&a.out, ext) {
        println!("{}", o.display());
    }
    Ok(())
}

fn outputs_summary(dir: &Path, ext: &str) -> Vec<PathBuf> {
    vec![
        dir.join(format!("clean.{ext}")),
        dir.join(format!("speckled.{ext}")),
        dir.join("gt.pgm"),
    ]
}

/// Merges defaults, the optional config file and flags.
fn resolve_segment(a: &SegmentArgs) -> Result<(SegmentConfig, Option<RunManifest>)> {
    if let Some(replay) = &a.replay {
        let manifest = run_manifest(replay)?;
        if manifest.command != "segment" {
            return Err(Error::InvalidData(format!(
                "{} records a `{}` run, not `segment`",
                replay.display(),
                manifest.command
            )));
        }
        let mut cfg: SegmentConfig = serde_json::from_value(manifest.config.clone())
            .map_err(|e| Error::InvalidData(format!("{}: {e}", replay.display())))?;
        if a.input.is_some() || a.gt.is_some() || !only_replay_overrides(a) {
            return Err(Error::param(
                "replay",
                "only --out and --threads may accompany --replay",
            ));
        }
        if let Some(out) = &a.out {
            cfg.out = out.clone();
        }
        if let Some(t) = a.threads {
            cfg.threads = Some(t);
        }
        return Ok((cfg, Some(manifest)));
    }

    let mut cfg = SegmentConfig::default();
    if let Some(path) = &a.config {
        cfg.apply_file(path)?;
    }
    let mut set = |key: &str, v: Option<String>| -> Result<()> {
        match v {
            Some(v) => cfg.set(key, &v),
            None => Ok(()),
        }
    };
    let s = |v: &Option<PathBuf>| v.as_ref().map(|p| p.to_string_lossy().into_owned());
    set("input", s(&a.input))?;
    set("gt", s(&a.gt))?;
    set("out", s(&a.out))?;
    set("scales", a.scales.map(|v| v.to_string()))?;
    set("seed", a.seed.map(|v| v.to_string()))?;
    set("model", a.model.clone())?;
    set("bins", a.bins.map(|v| v.to_string()))?;
    set("looks", a.looks.map(|v| v.to_string()))?;
    set("distance", a.distance.clone())?;
    set("js-mode", a.js_mode.clone())?;
    set("patch-half", a.patch_half.map(|v| v.to_string()))?;
    set("nl-radius", a.nl_radius.map(|v| v.to_string()))?;
    set("nl-sigma", a.nl_sigma.clone())?;
    set("kernel-norm", a.kernel_norm.clone())?;
    set("lambda", a.lambda.map(|v| format!("{v:e}")))?;
    set("xi", a.xi.clone())?;
    set("omega", a.omega.map(|v| format!("{v:e}")))?;
    set("max-iters", a.max_iters.map(|v| v.to_string()))?;
    set("epsilon", a.epsilon.map(|v| format!("{v:e}")))?;
    set("sigma0", a.sigma0.map(|v| format!("{v:e}")))?;
    set("polarity", a.polarity.clone())?;
    set("threads", a.threads.map(|v| v.to_string()))?;
    set("snapshot-every", a.snapshot_every.map(|v| v.to_string()))?;
    Ok((cfg, None))
}

fn only_replay_overrides(a: &SegmentArgs) -> bool {
    a.scales.is_none()
        && a.seed.is_none()
        && a.model.is_none()
        && a.bins.is_none()
        && a.looks.is_none()
        && a.distance.is_none()
        && a.js_mode.is_none()
        && a.patch_half.is_none()
        && a.nl_radius.is_none()
        && a.nl_sigma.is_none()
        && a.kernel_norm.is_none()
        && a.lambda.is_none()
        && a.xi.is_none()
        && a.omega.is_none()
        && a.max_iters.is_none()
        && a.epsilon.is_none()
        && a.sigma0.is_none()
        && a.polarity.is_none()
        && a.snapshot_every.is_none()
}

fn check_recorded(manifest: &RunManifest, role: &str, current: &FileDigest) -> Result<()> {
    match manifest.inputs.iter().find(|d| d.role == role) {
        Some(rec) if rec.sha256 != current.sha256 => Err(Error::InvalidData(format!(
            "{} changed since the recorded run (sha256 {} != {})",
            current.path.display(),
            current.sha256,
            rec.sha256
        ))),
        _ => Ok(()),
    }
}

fn cmd_segment(a: &SegmentArgs) -> Result<()> {
    let (cfg, replayed) = resolve_segment(a)?;
    cfg.validate()?;
    let img: Image<f64> = load_image(&cfg.input)?;
    let mut inputs = vec![digest("input", &cfg.input)?];
    let gt = match &cfg.gt {
        Some(p) => {
            let g = load_mask(p)?;
            img.field().same_dims(&g)?;
            inputs.push(digest("gt", p)?);
            Some(g)
        }
        None => None,
    };
    if let Some(m) = &replayed {
        for d in &inputs {
            check_recorded(m, &d.role, d)?;
        }
    }
    let ms = cfg.to_ms_config();
    ms.validate_for(img.width(), img.height())?;

    create_dir(&cfg.out)?;
    let snap_dir = cfg.out.join("snapshots");
    if cfg.snapshot_every.is_some() {
        create_dir(&snap_dir)?;
    }
    let mut snap_err = None;
    let mut on_iter = |level: usize, iter: usize, phi: &crate::grid::Field<f64>| {
        if let Some(k) = cfg.snapshot_every {
            if iter % k == 0 && snap_err.is_none() {
                let path = snap_dir.join(format!("phi_L{level}_{iter:05}.f32"));
                if let Err(e) = save_raw_f32(phi, &path) {
                    snap_err = Some(e);
                }
            }
        }
    };
    let result = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::param("threads", e.to_string()))?
            .install(|| msnlac_run_monitored(&img, &ms, gt.as_ref(), &mut on_iter)),
        None => msnlac_run_monitored(&img, &ms, gt.as_ref(), &mut on_iter),
    }?;
    if let Some(e) = snap_err {
        return Err(e);
    }

    let mask_path = cfg.out.join("mask.pgm");
    save_mask(&result.mask, &mask_path)?;
    let overlay_path = cfg.out.join("overlay.png");
    save_rgb(&overlay(&img, &result.mask, [255, 0, 0])?, &overlay_path)?;
    let trace_paths = export_trace(&result.traces(), cfg.out.join("trace.csv"))?;

    let mut outputs = vec![digest("mask", &mask_path)?, digest("overlay", &overlay_path)?];
    for p in &trace_paths {
        outputs.push(digest("trace", p)?);
    }
    write_manifest(
        &cfg.out,
        &RunManifest {
            command: "segment".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: serde_json::to_value(&cfg).expect("config serializes"),
            inputs,
            outputs,
        },
    )?;

    for run in &result.levels {
        let last = run.trace.last();
        println!(
            "level {} ({}x{}): {} iterations, xi {:.3e}, energy {:.6e}{}",
            run.level,
            run.width,
            run.height,
            run.trace.len().saturating_sub(1),
            run.xi,
            last.map_or(f64::NAN, |r| r.energy),
            if run.converged { ", converged" } else { "" }
        );
    }
    if let Some(g) = &gt {
        println!("rfe {:.4}", rfe(&result.mask, g)?);
    }
    Ok(())
}

fn load_pair(mask: &Path, gt: &Path) -> Result<(BinaryMask, BinaryMask)> {
    Ok((load_mask(mask)?, load_mask(gt)?))
}

fn cmd_evaluate(a: &EvaluateArgs) -> i32 {
    let (mask, gt) = match load_pair(&a.mask, &a.gt) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    if mask.dims() != gt.dims() {
        eprintln!(
            "error: mask is {}x{} but ground truth is {}x{}",
            mask.width(),
            mask.height(),
            gt.width(),
            gt.height()
        );
        return EXIT_MISMATCH;
    }
    match rfe(&mask, &gt) {
        Ok(v) => {
            println!("{v:.4}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn cmd_overlay(a: &OverlayArgs) -> Result<()> {
    let img: Image<f64> = load_image(&a.image)?;
    let mask = load_mask(&a.mask)?;
    save_rgb(&overlay(&img, &mask, a.color)?, &a.out)
}
