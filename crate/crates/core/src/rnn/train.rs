use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{clip_grad_norm, Adam, AdamConfig};
use super::backward::backward;
use super::forward::{forward_batch, Mode};
use super::loss::l1_loss;
use super::params::{NetArch, NetworkParams};
use super::DeltaThresholds;
use crate::control::TickRecord;
use crate::dataset::{Dataset, SequenceBatch, Split};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageSchedule {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSchedule {
    pub pretrain: StageSchedule,
    pub retrain: StageSchedule,
    pub adam: AdamConfig,
    /// Global gradient-norm ceiling applied in both stages.
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            pretrain: StageSchedule {
                epochs: 50,
                lr: 5e-4,
                batch: 32,
            },
            retrain: StageSchedule {
                epochs: 10,
                lr: 1e-3,
                batch: 64,
            },
            adam: AdamConfig::default(),
            clip_norm: 1.0,
            seed: 0,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        for (name, s) in [("pretrain", &self.pretrain), ("retrain", &self.retrain)] {
            if s.epochs == 0 || s.batch == 0 || !(s.lr > 0.0 && s.lr.is_finite()) {
                return Err(Error::Config(format!("{name}: epochs, lr and batch must be positive")));
            }
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Pretrain,
    Retrain,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Pretrain => "pretrain",
            Stage::Retrain => "retrain",
        }
    }
}

/// One row of the loss curve. `epoch` counts across both stages from 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub stage: Stage,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Lowest-validation GRU from the first stage.
    pub pretrained: NetworkParams,
    /// Lowest-validation DeltaGRU from the second stage.
    pub params: NetworkParams,
    pub curve: Vec<EpochRecord>,
    pub best_pretrain: EpochRecord,
    pub best_retrain: EpochRecord,
}

impl TrainOutcome {
    pub fn save_curve(&self, path: &Path) -> Result<()> {
        write_curve(path, &self.curve)
    }
}

pub fn write_curve(path: &Path, curve: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in curve {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_curve(path: &Path) -> Result<Vec<EpochRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn train(
    dataset: &Dataset,
    arch: NetArch,
    schedule: &TrainSchedule,
    thresholds: DeltaThresholds,
) -> Result<TrainOutcome> {
    train_with(dataset, arch, schedule, thresholds, &mut |_| {})
}

/// Pretrains a dense GRU, then retrains the best one under delta dynamics.
/// `progress` sees every epoch record as it is produced.
pub fn train_with(
    dataset: &Dataset,
    arch: NetArch,
    schedule: &TrainSchedule,
    thresholds: DeltaThresholds,
    progress: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    arch.validate()?;
    schedule.validate()?;
    dataset.validate()?;
    if !(thresholds.theta_x >= 0.0 && thresholds.theta_h >= 0.0) {
        return Err(Error::Config("delta thresholds must be >= 0".into()));
    }
    let train_w = dataset.windows(Split::Train)?;
    let val_w = dataset.windows(Split::Val)?;
    if train_w.is_empty() || val_w.is_empty() {
        return Err(Error::Config("dataset needs train and validation windows".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut curve = Vec::new();
    let init = NetworkParams::init(arch, schedule.seed);

    let (pretrained, best_pretrain) = run_stage(
        Stage::Pretrain,
        init,
        Mode::Dense,
        &schedule.pretrain,
        schedule,
        &train_w,
        &val_w,
        &mut rng,
        &mut curve,
        progress,
    )?;
    let (params, best_retrain) = run_stage(
        Stage::Retrain,
        pretrained.clone(),
        Mode::Delta(thresholds),
        &schedule.retrain,
        schedule,
        &train_w,
        &val_w,
        &mut rng,
        &mut curve,
        progress,
    )?;
    Ok(TrainOutcome {
        pretrained,
        params,
        curve,
        best_pretrain,
        best_retrain,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_stage(
    stage: Stage,
    mut params: NetworkParams,
    mode: Mode,
    ss: &StageSchedule,
    schedule: &TrainSchedule,
    train_w: &[&[TickRecord]],
    val_w: &[&[TickRecord]],
    rng: &mut ChaCha8Rng,
    curve: &mut Vec<EpochRecord>,
    progress: &mut dyn FnMut(&EpochRecord),
) -> Result<(NetworkParams, EpochRecord)> {
    let mut opt = Adam::new(schedule.adam, params.data.len());
    let mut order: Vec<usize> = (0..train_w.len()).collect();
    let mut best: Option<(NetworkParams, EpochRecord)> = None;
    let mut batch_refs: Vec<&[TickRecord]> = Vec::with_capacity(ss.batch);

    for _ in 0..ss.epochs {
        let epoch = curve.len() + 1;
        let diverged = || Error::TrainingDiverged {
            stage: stage.as_str(),
            epoch,
        };
        order.shuffle(rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(ss.batch) {
            batch_refs.clear();
            batch_refs.extend(chunk.iter().map(|&i| train_w[i]));
            let sb = SequenceBatch::from_windows(&batch_refs)?;
            let trace = forward_batch(&params, mode, &sb.inputs, sb.batch)?;
            let (loss, grad_y) = l1_loss(&sb.labels, &trace.y)?;
            if !loss.is_finite() {
                return Err(diverged());
            }
            loss_sum += loss * chunk.len() as f64;
            let mut g = backward(&params, &trace, &grad_y)?.params.data;
            let norm = clip_grad_norm(&mut g, schedule.clip_norm);
            if !norm.is_finite() {
                return Err(diverged());
            }
            opt.update(&mut params.data, &g, ss.lr);
        }
        if !params.is_finite() {
            return Err(diverged());
        }
        let val_loss = evaluate(&params, mode, val_w, ss.batch)?;
        if !val_loss.is_finite() {
            return Err(diverged());
        }
        let rec = EpochRecord {
            epoch,
            train_loss: loss_sum / train_w.len() as f64,
            val_loss,
            stage,
        };
        curve.push(rec);
        progress(&rec);
        if best.as_ref().is_none_or(|(_, b)| rec.val_loss < b.val_loss) {
            best = Some((params.clone(), rec));
        }
    }
    Ok(best.expect("stage has at least one epoch"))
}

/// Mean L1 loss over `windows`, each run from a fresh state.
pub fn evaluate(params: &NetworkParams, mode: Mode, windows: &[&[TickRecord]], batch: usize) -> Result<f64> {
    if windows.is_empty() || batch == 0 {
        return Err(Error::Shape("nothing to evaluate".into()));
    }
    let mut sum = 0.0;
    for chunk in windows.chunks(batch) {
        let sb = SequenceBatch::from_windows(chunk)?;
        let trace = forward_batch(params, mode, &sb.inputs, sb.batch)?;
        let (loss, _) = l1_loss(&sb.labels, &trace.y)?;
        sum += loss * chunk.len() as f64;
    }
    Ok(sum / windows.len() as f64)
}
