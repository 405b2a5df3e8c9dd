use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::hinge_on_tape;
use super::PipelineError;
use crate::archspace::{Architecture, EncodingTable, SpaceKind};
use crate::autodiff::{adam_step, AdamState, Tape};
use crate::devicesets::LatencyTable;
use crate::predictor::{Calibration, PredictorState};
use crate::seed;

/// Architectures by arch_id.
pub type ArchIndex = BTreeMap<String, Architecture>;

pub fn index_archs(archs: &[Architecture]) -> ArchIndex {
    archs.iter().map(|a| (a.arch_id().to_string(), a.clone())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub transfer_epochs: usize,
    pub transfer_lr: f64,
    pub hinge_margin: f64,
    pub trials: usize,
    /// Cap on measured architectures used per source device.
    pub source_samples: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::for_space(SpaceKind::MicroCell)
    }
}

impl TrainConfig {
    pub fn for_space(kind: SpaceKind) -> Self {
        let (transfer_epochs, transfer_lr) = match kind {
            SpaceKind::MicroCell => (40, 0.003),
            SpaceKind::MacroChain => (30, 0.001),
        };
        Self {
            lr: 0.001,
            weight_decay: 1e-5,
            epochs: 150,
            batch_size: 16,
            transfer_epochs,
            transfer_lr,
            hinge_margin: 0.1,
            trials: 3,
            source_samples: 900,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let pos = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(format!("{name} must be positive"))
            }
        };
        pos("lr", self.lr)?;
        pos("transfer_lr", self.transfer_lr)?;
        pos("hinge_margin", self.hinge_margin)?;
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err("weight_decay must be non-negative".into());
        }
        if self.batch_size < 2 {
            return Err("batch_size must be at least 2".into());
        }
        if self.trials == 0 || self.source_samples < 2 {
            return Err("trials and source_samples must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Mean minibatch loss per epoch.
    pub epoch_loss: Vec<f64>,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferLog {
    pub target: String,
    /// Source whose hardware embedding seeded the target row.
    pub init_source: String,
    pub samples: usize,
    pub train: TrainLog,
    pub calibration: Calibration,
}

struct Sample<'a> {
    arch: &'a Architecture,
    latency: f64,
    supp: Option<&'a [f64]>,
}

fn samples_for<'a>(
    state: &PredictorState,
    table: &LatencyTable,
    device: &str,
    archs: &'a ArchIndex,
    encodings: Option<&'a EncodingTable>,
) -> Result<Vec<Sample<'a>>, PipelineError> {
    let need_supp = state.config.supplementary_dim > 0;
    if need_supp && encodings.is_none() {
        return Err(PipelineError::MissingEncoding("<no encoding table>".into()));
    }
    table
        .device_rows(device)
        .into_iter()
        .map(|(id, latency)| {
            let arch = archs.get(id).ok_or_else(|| PipelineError::UnknownArch(id.to_string()))?;
            let supp = if need_supp {
                Some(
                    encodings
                        .and_then(|e| e.get(id))
                        .ok_or_else(|| PipelineError::MissingEncoding(id.to_string()))?,
                )
            } else {
                None
            };
            Ok(Sample { arch, latency, supp })
        })
        .collect()
}

/// One optimizer step on a single-device minibatch; returns the loss.
fn step(
    state: &mut PredictorState,
    device: &str,
    batch: &[&Sample<'_>],
    lr: f64,
    config: &TrainConfig,
) -> Result<f64, PipelineError> {
    let archs: Vec<&Architecture> = batch.iter().map(|s| s.arch).collect();
    let targets: Vec<f64> = batch.iter().map(|s| s.latency).collect();
    let supp: Option<Vec<&[f64]>> = batch.iter().map(|s| s.supp).collect();
    let b = state.batch(&archs, device, supp.as_deref())?;
    let (loss, grads) = {
        let mut tape = Tape::new(&state.params);
        let f = state.forward(&mut tape, &b)?;
        let l = hinge_on_tape(&mut tape, f.scores, &targets, config.hinge_margin)?;
        (tape.value(l).item(), tape.backward(l)?)
    };
    adam_step(&mut state.params, &grads, &mut state.adam, lr, config.weight_decay)?;
    Ok(loss)
}

type Work<'s, 'a> = Vec<(String, Vec<&'s Sample<'a>>)>;

fn epoch_batches<'s, 'a>(
    per_device: &'s [(String, Vec<Sample<'a>>)],
    batch_size: usize,
    rng: &mut impl rand::Rng,
) -> Work<'s, 'a> {
    let mut out = Vec::new();
    for (dev, samples) in per_device {
        let mut order: Vec<&Sample<'a>> = samples.iter().collect();
        order.shuffle(rng);
        for chunk in order.chunks(batch_size) {
            if chunk.len() >= 2 {
                out.push((dev.clone(), chunk.to_vec()));
            }
        }
    }
    out.shuffle(rng);
    out
}

fn run_epochs(
    state: &mut PredictorState,
    per_device: &[(String, Vec<Sample<'_>>)],
    epochs: usize,
    lr: f64,
    config: &TrainConfig,
    label: &str,
) -> Result<TrainLog, PipelineError> {
    let mut log = TrainLog { epoch_loss: Vec::with_capacity(epochs), steps: 0 };
    for e in 0..epochs {
        let mut rng = seed::sub_rng(config.seed, &format!("{label}/epoch{e}"));
        let work = epoch_batches(per_device, config.batch_size, &mut rng);
        let mut total = 0.0;
        for (dev, batch) in &work {
            total += step(state, dev, batch, lr, config)?;
            log.steps += 1;
        }
        log.epoch_loss.push(total / work.len().max(1) as f64);
    }
    Ok(log)
}

/// Pretrains on the given source devices. Each device contributes at most
/// `source_samples` measurements, chosen by a seeded permutation.
pub fn pretrain(
    state: &mut PredictorState,
    source_table: &LatencyTable,
    source_devices: &[String],
    archs: &ArchIndex,
    encodings: Option<&EncodingTable>,
    config: &TrainConfig,
) -> Result<TrainLog, PipelineError> {
    config.validate().map_err(PipelineError::InvalidConfig)?;
    let mut per_device = Vec::new();
    for d in source_devices {
        state.device_index(d)?;
        let mut samples = samples_for(state, source_table, d, archs, encodings)?;
        if samples.len() < config.batch_size {
            return Err(PipelineError::InsufficientData {
                device: d.clone(),
                have: samples.len(),
                need: config.batch_size,
            });
        }
        if samples.len() > config.source_samples {
            let mut rng = seed::sub_rng(config.seed, &format!("source-subset/{d}"));
            samples.shuffle(&mut rng);
            samples.truncate(config.source_samples);
            samples.sort_by(|a, b| a.arch.arch_id().cmp(b.arch.arch_id()));
        }
        per_device.push((d.clone(), samples));
    }
    run_epochs(state, &per_device, config.epochs, config.lr, config, "pretrain")
}

/// Few-shot adaptation to `target`: registers its hw row if needed, seeds it
/// from the best-correlated source, resets the optimizer and fine-tunes every
/// parameter on the target samples. Ends by fitting the score-to-ms
/// calibration on those samples.
#[allow(clippy::too_many_arguments)]
pub fn transfer(
    state: &mut PredictorState,
    target: &str,
    target_samples: &LatencyTable,
    source_table: &LatencyTable,
    source_devices: &[String],
    archs: &ArchIndex,
    encodings: Option<&EncodingTable>,
    config: &TrainConfig,
) -> Result<TransferLog, PipelineError> {
    config.validate().map_err(PipelineError::InvalidConfig)?;
    let own = target_samples.restrict_devices(&[target.to_string()]);
    let samples = samples_for(state, &own, target, archs, encodings)?;
    if samples.len() < 2 {
        return Err(PipelineError::InsufficientData { device: target.into(), have: samples.len(), need: 2 });
    }
    if state.device_index(target).is_err() {
        state.register_device(target)?;
    }
    let mut merged = source_table.restrict_devices(source_devices);
    merged.merge(&own)?;
    let init_source = state.init_target_hw_embedding(target, &merged, source_devices)?;
    state.adam = AdamState::new(&state.params);
    let n = samples.len();
    let per_device = vec![(target.to_string(), samples)];
    let label = format!("transfer/{target}");
    let train = run_epochs(state, &per_device, config.transfer_epochs, config.transfer_lr, config, &label)?;

    let samples = &per_device[0].1;
    let arch_refs: Vec<&Architecture> = samples.iter().map(|s| s.arch).collect();
    let supp: Option<Vec<&[f64]>> = samples.iter().map(|s| s.supp).collect();
    let scores = state.predict_many(&arch_refs, target, supp.as_deref())?;
    let ms: Vec<f64> = samples.iter().map(|s| s.latency).collect();
    let calibration = Calibration::fit(&scores, &ms);
    state.calibration.insert(target.to_string(), calibration);
    Ok(TransferLog { target: target.to_string(), init_source, samples: n, train, calibration })
}
