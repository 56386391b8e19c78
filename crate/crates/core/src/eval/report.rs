use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mocap::{make_keyframes, KeyframePolicy, KeyframeSet, MotionClip};
use crate::model::{interpolate, ModelParams};
use crate::training::Dataset;

use super::lerp::lerp_baseline;
use super::metrics::{all_metrics, offset_curve, Metrics};

/// Frames per evaluation window.
pub const EVAL_WINDOW: usize = 121;
pub const DEFAULT_INTERVALS: [usize; 3] = [5, 15, 30];

pub const REPORT_JSON: &str = "report.json";
pub const METRICS_CSV: &str = "metrics.csv";
pub const OFFSETS_CSV: &str = "offsets.csv";

/// Anything that fills in a sequence from its keyframes.
pub trait Interpolator: Sync {
    fn name(&self) -> &str;
    fn interpolate(&self, keyframes: &KeyframeSet, fps: u32) -> Result<MotionClip>;
}

impl Interpolator for ModelParams {
    fn name(&self) -> &str {
        "model"
    }

    fn interpolate(&self, keyframes: &KeyframeSet, fps: u32) -> Result<MotionClip> {
        interpolate(keyframes, self, fps)
    }
}

pub struct LerpBaseline;

impl Interpolator for LerpBaseline {
    fn name(&self) -> &str {
        "lerp"
    }

    fn interpolate(&self, keyframes: &KeyframeSet, fps: u32) -> Result<MotionClip> {
        lerp_baseline(keyframes, fps)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipMetrics {
    pub clip: String,
    pub interval: usize,
    pub frames: usize,
    pub model: Option<Metrics>,
    pub baseline: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalSummary {
    pub interval: usize,
    pub clips: usize,
    pub model: Option<Metrics>,
    pub baseline: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub window: usize,
    pub intervals: Vec<usize>,
    pub per_clip: Vec<ClipMetrics>,
    pub aggregate: Vec<IntervalSummary>,
}

/// Per-frame ℓ1 pose offsets of one method on one clip and interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffsetCurve {
    pub clip: String,
    pub interval: usize,
    pub method: String,
    pub offsets: Vec<f64>,
}

fn mean_metrics(items: &[Metrics]) -> Metrics {
    let n = items.len() as f64;
    Metrics {
        l2p: items.iter().map(|m| m.l2p).sum::<f64>() / n,
        l2q: items.iter().map(|m| m.l2q).sum::<f64>() / n,
        npss: items.iter().map(|m| m.npss).sum::<f64>() / n,
    }
}

/// Evaluate `model` (when given) and the LERP baseline on the first
/// `min(window, N)` frames of every clip, with uniform keyframes at each
/// interval. Results are ordered by clip, then interval.
pub fn evaluate(
    model: Option<&dyn Interpolator>,
    dataset: &Dataset,
    intervals: &[usize],
    window: usize,
) -> Result<(EvalReport, Vec<OffsetCurve>)> {
    if dataset.is_empty() {
        return Err(Error::Config("evaluation dataset is empty".into()));
    }
    if intervals.is_empty() {
        return Err(Error::Config("no keyframe intervals given".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..dataset.len())
        .flat_map(|c| intervals.iter().map(move |&i| (c, i)))
        .collect();
    let results: Vec<(ClipMetrics, Vec<OffsetCurve>)> = jobs
        .par_iter()
        .map(|&(c, interval)| {
            let clip = &dataset.clips[c];
            let name = &dataset.names[c];
            let truth = clip.window(0, window.min(clip.len()))?;
            let keys = make_keyframes(&truth, &KeyframePolicy::Uniform { interval })?;
            let lerp = lerp_baseline(&keys, truth.fps)?;
            let mut curves = Vec::new();
            let model_metrics = match model {
                Some(m) => {
                    let pred = m.interpolate(&keys, truth.fps)?;
                    curves.push(OffsetCurve {
                        clip: name.clone(),
                        interval,
                        method: m.name().to_string(),
                        offsets: offset_curve(&pred, &truth)?,
                    });
                    Some(all_metrics(&pred, &truth)?)
                }
                None => None,
            };
            curves.push(OffsetCurve {
                clip: name.clone(),
                interval,
                method: LerpBaseline.name().to_string(),
                offsets: offset_curve(&lerp, &truth)?,
            });
            let row = ClipMetrics {
                clip: name.clone(),
                interval,
                frames: truth.len(),
                model: model_metrics,
                baseline: all_metrics(&lerp, &truth)?,
            };
            Ok((row, curves))
        })
        .collect::<Result<_>>()?;

    let (per_clip, curves): (Vec<ClipMetrics>, Vec<Vec<OffsetCurve>>) = results.into_iter().unzip();
    let aggregate = intervals
        .iter()
        .map(|&interval| {
            let rows: Vec<&ClipMetrics> = per_clip.iter().filter(|r| r.interval == interval).collect();
            let baseline: Vec<Metrics> = rows.iter().map(|r| r.baseline).collect();
            let model: Option<Vec<Metrics>> = rows.iter().map(|r| r.model).collect();
            IntervalSummary {
                interval,
                clips: rows.len(),
                model: model.map(|m| mean_metrics(&m)),
                baseline: mean_metrics(&baseline),
            }
        })
        .collect();
    let report = EvalReport {
        window,
        intervals: intervals.to_vec(),
        per_clip,
        aggregate,
    };
    Ok((report, curves.into_iter().flatten().collect()))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Metric table, one row per clip × interval.
pub fn write_metrics_csv(report: &EvalReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "clip", "interval", "frames", "model_l2p", "model_l2q", "model_npss", "lerp_l2p", "lerp_l2q", "lerp_npss",
    ])
    ?;
    for r in &report.per_clip {
        w.write_record([
            r.clip.clone(),
            r.interval.to_string(),
            r.frames.to_string(),
            fmt_opt(r.model.map(|m| m.l2p)),
            fmt_opt(r.model.map(|m| m.l2q)),
            fmt_opt(r.model.map(|m| m.npss)),
            r.baseline.l2p.to_string(),
            r.baseline.l2q.to_string(),
            r.baseline.npss.to_string(),
        ])
        ?;
    }
    w.flush()?;
    Ok(())
}

/// Offset curves in long form: clip, interval, method, frame, offset.
pub fn write_offsets_csv(curves: &[OffsetCurve], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["clip", "interval", "method", "frame", "offset"])?;
    for c in curves {
        for (t, v) in c.offsets.iter().enumerate() {
            w.write_record([c.clip.clone(), c.interval.to_string(), c.method.clone(), t.to_string(), v.to_string()])
                ?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Write the JSON report and both CSV tables into `dir`.
pub fn write_report(report: &EvalReport, curves: &[OffsetCurve], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let paths = vec![dir.join(REPORT_JSON), dir.join(METRICS_CSV), dir.join(OFFSETS_CSV)];
    fs::write(&paths[0], serde_json::to_vec_pretty(report)?)?;
    write_metrics_csv(report, &paths[1])?;
    write_offsets_csv(curves, &paths[2])?;
    Ok(paths)
}
