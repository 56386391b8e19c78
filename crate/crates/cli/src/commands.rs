use std::fs;
use std::path::{Path, PathBuf};

use keyloom_core::eval::{evaluate, write_report, EvalReport, Interpolator, OFFSETS_CSV};
use keyloom_core::mocap::{make_keyframes, save_clip, write_bvh, KeyframePolicy};
use keyloom_core::model::predict;
use keyloom_core::training::{read_loss_log, train_into_dir, Checkpoint, Trainer, LOSS_LOG};
use keyloom_core::verify::{run_verify, VerifyOptions, VerifyReport};
use keyloom_core::{Error, ModelParams};
use serde::Serialize;

use crate::args::{ConvertArgs, EvaluateArgs, InterpolateArgs, TrainArgs, VerifyArgs};
use crate::config::{ModelSettings, RunConfig, RESOLVED_CONFIG};
use crate::data::{clip_name, clip_paths, load_any_clip, load_dataset};
use crate::error::{at, CliError, CliResult};

#[derive(Clone, Debug, Serialize)]
pub struct Converted {
    pub source: PathBuf,
    pub output: PathBuf,
    pub joints: usize,
    pub frames: usize,
    pub fps: u32,
}

#[derive(Debug, Default)]
pub struct ConvertSummary {
    pub converted: Vec<Converted>,
    pub failed: Vec<(PathBuf, CliError)>,
}

/// Parse, resample and canonicalize every BVH input into `out/<stem>.klm`.
/// A bad file is reported and skipped.
pub fn cmd_convert(args: &ConvertArgs) -> CliResult<ConvertSummary> {
    let paths = clip_paths(&args.inputs, &["bvh"])?;
    if paths.is_empty() {
        return Err(CliError::user("convert: no .bvh files found"));
    }
    fs::create_dir_all(&args.out)?;
    let mut summary = ConvertSummary::default();
    for src in paths {
        let result = (|| -> CliResult<Converted> {
            let mut clip = load_any_clip(&src)?;
            if let Some(fps) = args.fps {
                clip = clip.resample(fps).map_err(at(&src))?;
            }
            let output = args.out.join(format!("{}.klm", clip_name(&src)));
            save_clip(&clip, &output).map_err(at(&output))?;
            Ok(Converted {
                source: src.clone(),
                output,
                joints: clip.joints(),
                frames: clip.len(),
                fps: clip.fps,
            })
        })();
        match result {
            Ok(c) => summary.converted.push(c),
            Err(e) => summary.failed.push((src, e)),
        }
    }
    Ok(summary)
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainSummary {
    pub output_dir: PathBuf,
    pub start_epoch: u64,
    pub epochs: u64,
    pub last_checkpoint: PathBuf,
    pub first_loss: Option<f64>,
    pub final_loss: Option<f64>,
}

/// The run configuration after flag overrides.
pub fn resolve_run_config(args: &TrainArgs) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = Some(s);
    }
    if let Some(e) = args.epochs {
        cfg.train.total_epochs = e;
    }
    if let Some(b) = args.batch_size {
        cfg.train.batch_size = b;
    }
    if let Some(lr) = args.lr {
        cfg.train.base_lr = lr;
    }
    if let Some(c) = args.checkpoint_every {
        cfg.train.checkpoint_every = c;
    }
    if !args.dataset.is_empty() {
        cfg.dataset = args.dataset.clone();
    }
    if let Some(o) = &args.output {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Train into the configured output directory: loss log, checkpoints and
/// the resolved configuration.
pub fn cmd_train(args: &TrainArgs) -> CliResult<TrainSummary> {
    let mut cfg = resolve_run_config(args)?;
    let dataset = load_dataset(&cfg.dataset)?;
    let mut trainer = match &args.resume {
        Some(path) => {
            let ckpt = Checkpoint::load(path).map_err(at(path))?;
            let t = Trainer::resume(ckpt, dataset, Some(cfg.train.total_epochs))?;
            cfg.model = ModelSettings::from_config(&t.params.config, Some(t.params.config.joints));
            cfg.train = t.config.clone();
            cfg.seed = Some(t.config.seed);
            t
        }
        None => {
            let model = cfg.model.resolve(dataset.joints())?;
            cfg.model.joints = Some(model.joints);
            Trainer::new(model, cfg.train.clone(), dataset)?
        }
    };
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir)?;
    fs::write(
        dir.join(RESOLVED_CONFIG),
        serde_json::to_vec_pretty(&cfg).map_err(|e| CliError::Internal(e.to_string()))?,
    )?;
    let start_epoch = trainer.epoch;
    let last = match train_into_dir(&mut trainer, &dir) {
        Ok(p) => p,
        Err(Error::NonFiniteLoss { epoch, dump }) => {
            let path = dir.join(format!("nonfinite-epoch-{epoch:06}.json"));
            fs::write(&path, dump)?;
            return Err(CliError::Internal(format!(
                "non-finite loss at epoch {epoch}; batch written to {}",
                path.display()
            )));
        }
        Err(e) => return Err(e.into()),
    };
    let log = read_loss_log(&dir.join(LOSS_LOG))?;
    Ok(TrainSummary {
        output_dir: dir,
        start_epoch,
        epochs: trainer.epoch,
        last_checkpoint: last,
        first_loss: log.first().map(|r| r.total),
        final_loss: log.last().map(|r| r.total),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct InterpolateSummary {
    pub prediction: PathBuf,
    pub bvh: Option<PathBuf>,
    pub latents: Option<PathBuf>,
    pub frames: usize,
    pub keyframes: Vec<usize>,
}

pub fn keyframe_policy(args: &InterpolateArgs) -> KeyframePolicy {
    if let Some(i) = args.every {
        KeyframePolicy::Uniform { interval: i }
    } else if let Some(c) = args.completion {
        KeyframePolicy::Completion { context: c }
    } else {
        KeyframePolicy::Explicit(args.frames.clone().unwrap_or_default())
    }
}

fn load_params(path: &Path) -> CliResult<ModelParams> {
    Ok(Checkpoint::load(path).map_err(at(path))?.params)
}

/// Predict the clip from its keyframes and write `out/<stem>.pred.klm`
/// (plus BVH and latent CSV when asked).
pub fn cmd_interpolate(args: &InterpolateArgs) -> CliResult<InterpolateSummary> {
    let params = load_params(&args.checkpoint)?;
    let clip = load_any_clip(&args.clip)?;
    let keys = make_keyframes(&clip, &keyframe_policy(args)).map_err(at(&args.clip))?;
    let pred = predict(&keys, &params, clip.fps)?;
    fs::create_dir_all(&args.out)?;
    let stem = clip_name(&args.clip);
    let prediction = args.out.join(format!("{stem}.pred.klm"));
    save_clip(&pred.clip, &prediction)?;
    let bvh = if args.bvh {
        let p = args.out.join(format!("{stem}.pred.bvh"));
        fs::write(&p, write_bvh(&pred.clip))?;
        Some(p)
    } else {
        None
    };
    let latents = if args.export_latents {
        let p = args.out.join(format!("{stem}.latents.csv"));
        let mut w = csv::Writer::from_path(&p).map_err(|e| CliError::user(e.to_string()))?;
        let tokens = &pred.manifold.tokens;
        let mut header = vec!["frame".to_string(), "keyframe".to_string()];
        header.extend((0..tokens.cols()).map(|c| format!("z{c}")));
        w.write_record(&header).map_err(|e| CliError::user(e.to_string()))?;
        for (r, t) in pred.manifold.times.iter().enumerate() {
            let mut row = vec![t.to_string(), u8::from(keys.indices.contains(t)).to_string()];
            row.extend(tokens.row(r).iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(|e| CliError::user(e.to_string()))?;
        }
        w.flush()?;
        Some(p)
    } else {
        None
    };
    Ok(InterpolateSummary {
        prediction,
        bvh,
        latents,
        frames: pred.clip.len(),
        keyframes: keys.indices,
    })
}

#[derive(Clone, Debug)]
pub struct EvaluateSummary {
    pub report: EvalReport,
    pub files: Vec<PathBuf>,
}

/// Evaluate on every clip of the dataset and write the report files.
pub fn cmd_evaluate(args: &EvaluateArgs) -> CliResult<EvaluateSummary> {
    let params = match (&args.checkpoint, args.baseline_only) {
        (Some(p), false) => Some(load_params(p)?),
        (None, true) => None,
        _ => return Err(CliError::user("give either --checkpoint or --baseline-only")),
    };
    let dataset = load_dataset(&args.dataset)?;
    let model = params.as_ref().map(|p| p as &dyn Interpolator);
    let (report, curves) = evaluate(model, &dataset, &args.intervals, args.window)?;
    let files = write_report(&report, &curves, &args.out)?;
    debug_assert!(files.iter().any(|f| f.ends_with(OFFSETS_CSV)));
    Ok(EvaluateSummary { report, files })
}

/// Aggregate metrics as a fixed-width table.
pub fn format_aggregate(report: &EvalReport) -> String {
    let mut s = format!(
        "{:>8} {:>6} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}\n",
        "interval", "clips", "model_l2p", "model_l2q", "model_npss", "lerp_l2p", "lerp_l2q", "lerp_npss"
    );
    for a in &report.aggregate {
        let m = |f: fn(&keyloom_core::eval::Metrics) -> f64| {
            a.model.as_ref().map_or("-".to_string(), |x| format!("{:.5}", f(x)))
        };
        s += &format!(
            "{:>8} {:>6} {:>10} {:>10} {:>10} {:>10.5} {:>10.5} {:>10.5}\n",
            a.interval,
            a.clips,
            m(|x| x.l2p),
            m(|x| x.l2q),
            m(|x| x.npss),
            a.baseline.l2p,
            a.baseline.l2q,
            a.baseline.npss
        );
    }
    s
}

pub const VERIFY_REPORT: &str = "verify.json";

pub fn cmd_verify(args: &VerifyArgs) -> CliResult<VerifyReport> {
    let report = run_verify(VerifyOptions {
        perturb_gradient: args.perturb_gradient,
    });
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        fs::write(
            dir.join(VERIFY_REPORT),
            serde_json::to_vec_pretty(&report).map_err(|e| CliError::Internal(e.to_string()))?,
        )?;
    }
    Ok(report)
}
