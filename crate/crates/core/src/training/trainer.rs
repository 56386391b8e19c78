use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::model::{forward, seq_rc_apply, Bound, ModelConfig, ModelParams};

use super::adam::Adam;
use super::checkpoint::Checkpoint;
use super::config::TrainConfig;
use super::loss::{breakdown, loss_on_tape, total_on_tape, LossBreakdown, LossVars, TrainingTargets};
use super::sampler::{sample_batch, Dataset, Sample};
use super::schedule::{alpha_g, lr_schedule, ALPHA_L};

pub type Gradients = BTreeMap<String, Tensor>;

/// Build the loss terms of one sample on `tape` with already-bound parameters.
pub fn sample_loss_on_tape(
    tape: &mut Tape,
    bound: &Bound,
    cfg: &ModelConfig,
    pos_scale: f64,
    sample: &Sample,
) -> Result<LossVars> {
    let (features, state) = seq_rc_apply(&sample.keyframes, pos_scale)?;
    let targets = TrainingTargets::new(&sample.window, &state)?;
    let features = tape.constant(features);
    let out = forward(tape, bound, cfg, features, &sample.keyframes.indices, sample.window.len())?;
    loss_on_tape(tape, &sample.window.skeleton, pos_scale, out.roots, out.quats_raw, &targets)
}

/// Losses of one sample and, if requested, the gradient of its total.
pub fn sample_loss(
    params: &ModelParams,
    sample: &Sample,
    alpha_g: f64,
    with_grads: bool,
) -> Result<(LossBreakdown, Option<Gradients>)> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, with_grads);
    let terms = sample_loss_on_tape(&mut tape, &bound, &params.config, params.pos_scale, sample)?;
    let losses = breakdown(&tape, &terms, ALPHA_L, alpha_g);
    if !with_grads {
        return Ok((losses, None));
    }
    let total = total_on_tape(&mut tape, &terms, ALPHA_L, alpha_g)?;
    let grads = tape.backward(total)?;
    let named = bound.iter().map(|(name, v)| (name.to_string(), grads.wrt(v))).collect();
    Ok((losses, Some(named)))
}

/// Batch-mean losses and gradients.
///
/// Samples run in parallel, but their gradients are summed in batch order,
/// so the result does not depend on the number of threads.
pub fn batch_loss(
    params: &ModelParams,
    batch: &[Sample],
    alpha_g: f64,
    with_grads: bool,
) -> Result<(LossBreakdown, Option<Gradients>)> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let parts: Vec<(LossBreakdown, Option<Gradients>)> = batch
        .par_iter()
        .map(|s| sample_loss(params, s, alpha_g, with_grads))
        .collect::<Result<_>>()?;
    let losses = LossBreakdown::mean(&parts.iter().map(|p| p.0).collect::<Vec<_>>())?;
    if !with_grads {
        return Ok((losses, None));
    }
    let k = 1.0 / batch.len() as f64;
    let mut iter = parts.into_iter().filter_map(|p| p.1);
    let mut sum = iter.next().expect("gradients were requested");
    for g in iter {
        for (name, t) in g {
            if let Some(acc) = sum.get_mut(&name) {
                acc.add_assign(&t);
            }
        }
    }
    for t in sum.values_mut() {
        t.data_mut().iter_mut().for_each(|v| *v *= k);
    }
    Ok((losses, Some(sum)))
}

/// Position scale that balances the root and quaternion losses of the
/// untrained model: `L_quat / L_root` measured at scale 1.
pub fn calibrate_pos_scale(params: &ModelParams, batch: &[Sample]) -> Result<f64> {
    let mut unit = params.clone();
    unit.pos_scale = 1.0;
    let (l, _) = batch_loss(&unit, batch, 0.0, false)?;
    if !(l.l_root.is_finite() && l.l_root > 0.0 && l.l_quat.is_finite()) {
        return Err(Error::Calibration(format!(
            "cannot balance losses: L_root = {}, L_quat = {}",
            l.l_root, l.l_quat
        )));
    }
    let scale = l.l_quat / l.l_root;
    if scale.is_nan() || scale <= 0.0 {
        return Err(Error::Calibration(format!("degenerate scale {scale}")));
    }
    Ok(scale)
}

/// One row of the loss log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: u64,
    pub lr: f64,
    pub alpha_g: f64,
    pub l_root: f64,
    pub l_quat: f64,
    pub l_fkp: f64,
    pub l_fkq: f64,
    pub total: f64,
}

impl StepRecord {
    fn new(epoch: u64, lr: f64, l: &LossBreakdown) -> Self {
        Self {
            epoch,
            lr,
            alpha_g: l.alpha_g,
            l_root: l.l_root,
            l_quat: l.l_quat,
            l_fkp: l.l_fkp,
            l_fkq: l.l_fkq,
            total: l.total,
        }
    }
}

#[derive(Serialize)]
struct FailureDump<'a> {
    epoch: u64,
    lr: f64,
    losses: LossBreakdown,
    samples: Vec<super::sampler::SampleInfo>,
    note: &'a str,
}

/// Training state: parameters, optimizer and the epoch counter.
pub struct Trainer {
    pub params: ModelParams,
    pub adam: Adam,
    /// Completed epochs.
    pub epoch: u64,
    pub config: TrainConfig,
    dataset: Dataset,
}

/// Stream used for the calibration batch, distinct from every epoch's stream.
const CALIBRATION_STREAM: u64 = u64::MAX;

impl Trainer {
    pub fn new(model: ModelConfig, config: TrainConfig, dataset: Dataset) -> Result<Self> {
        config.validate()?;
        model.validate()?;
        if dataset.joints() != model.joints {
            return Err(Error::Config(format!(
                "joints: model has {}, dataset skeleton has {}",
                model.joints,
                dataset.joints()
            )));
        }
        let mut params = ModelParams::init(model, config.seed)?;
        if config.calibrate_pos_scale {
            let batch = sample_batch(&dataset, &config, &mut stream_rng(config.seed, CALIBRATION_STREAM))?;
            params.pos_scale = calibrate_pos_scale(&params, &batch)?;
        }
        let adam = Adam::new(&params);
        Ok(Self {
            params,
            adam,
            epoch: 0,
            config,
            dataset,
        })
    }

    /// Continue from a checkpoint. `total_epochs` may be raised to extend a run.
    pub fn resume(checkpoint: Checkpoint, dataset: Dataset, total_epochs: Option<u64>) -> Result<Self> {
        let mut config = checkpoint.train_config;
        if let Some(t) = total_epochs {
            config.total_epochs = t;
        }
        config.validate()?;
        if dataset.joints() != checkpoint.params.config.joints {
            return Err(Error::Config("joints: checkpoint and dataset skeletons differ".into()));
        }
        Ok(Self {
            params: checkpoint.params,
            adam: checkpoint.adam,
            epoch: checkpoint.epoch,
            config,
            dataset,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn is_done(&self) -> bool {
        self.epoch >= self.config.total_epochs
    }

    /// The batch drawn at `epoch`; a pure function of the seed and epoch.
    pub fn batch_for(&self, epoch: u64) -> Result<Vec<Sample>> {
        sample_batch(&self.dataset, &self.config, &mut stream_rng(self.config.seed, epoch))
    }

    /// Sample, differentiate and update once.
    pub fn step(&mut self) -> Result<StepRecord> {
        let e = self.epoch + 1;
        let batch = self.batch_for(e)?;
        let lr = lr_schedule(e, self.config.base_lr, self.config.warmup_epochs)?;
        let ag = alpha_g(e, self.config.warmup_epochs, self.config.alpha_g_ramp_epochs);
        let (losses, grads) = batch_loss(&self.params, &batch, ag, true)?;
        let grads = grads.expect("gradients were requested");
        let grads_finite = grads.values().all(Tensor::is_finite);
        if !losses.is_finite() || !grads_finite {
            let dump = FailureDump {
                epoch: e,
                lr,
                losses,
                samples: batch.iter().map(|s| s.info(&self.dataset)).collect(),
                note: if losses.is_finite() { "non-finite gradient" } else { "non-finite loss" },
            };
            return Err(Error::NonFiniteLoss {
                epoch: e,
                dump: serde_json::to_string_pretty(&dump)?,
            });
        }
        self.adam.update(&mut self.params, &grads, lr)?;
        self.epoch = e;
        Ok(StepRecord::new(e, lr, &losses))
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            params: self.params.clone(),
            adam: self.adam.clone(),
            epoch: self.epoch,
            train_config: self.config.clone(),
        }
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// File names used by [`train_into_dir`].
pub const LOSS_LOG: &str = "loss.csv";
pub const LAST_CHECKPOINT: &str = "last.klc";

pub fn checkpoint_name(epoch: u64) -> String {
    format!("epoch-{epoch:06}.klc")
}

/// Run to completion, appending to `dir/loss.csv` and writing checkpoints
/// every `checkpoint_every` epochs plus `last.klc` at the end.
pub fn train_into_dir(trainer: &mut Trainer, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let log_path = dir.join(LOSS_LOG);
    let fresh = trainer.epoch == 0 || !log_path.exists();
    if fresh {
        // A resumed run keeps the rows logged before its checkpoint; later
        // rows are dropped so the log matches the restored state.
        std::fs::write(&log_path, "")?;
    } else {
        truncate_log(&log_path, trainer.epoch)?;
    }
    let file = OpenOptions::new().append(true).open(&log_path)?;
    let mut log = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    while !trainer.is_done() {
        let record = trainer.step()?;
        log.serialize(record)?;
        let every = trainer.config.checkpoint_every;
        if every > 0 && trainer.epoch % every == 0 {
            log.flush()?;
            trainer.checkpoint().save(&dir.join(checkpoint_name(trainer.epoch)))?;
        }
    }
    log.flush()?;
    let last = dir.join(LAST_CHECKPOINT);
    trainer.checkpoint().save(&last)?;
    Ok(last)
}

fn truncate_log(path: &Path, keep_through: u64) -> Result<()> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    out.write_record(&headers)?;
    for row in reader.deserialize::<StepRecord>() {
        let row = row?;
        if row.epoch <= keep_through {
            out.serialize(row)?;
        }
    }
    let bytes = out.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Read a loss log written by [`train_into_dir`].
pub fn read_loss_log(path: &Path) -> Result<Vec<StepRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    reader.deserialize().map(|r| r.map_err(Error::from)).collect()
}
