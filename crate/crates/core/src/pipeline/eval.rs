use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::train::ArchIndex;
use super::PipelineError;
use crate::archspace::{Architecture, EncodingTable};
use crate::devicesets::{spearman, LatencyTable};
use crate::predictor::PredictorState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub device_id: String,
    pub trial: usize,
    pub spearman: f64,
    /// Target measurements used for transfer.
    pub samples_used: usize,
    pub heldout: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub entries: Vec<EvalEntry>,
    pub mean: f64,
    /// Population standard deviation over all entries.
    pub std: f64,
}

impl EvalReport {
    pub fn from_entries(entries: Vec<EvalEntry>) -> Self {
        let n = entries.len().max(1) as f64;
        let mean = entries.iter().map(|e| e.spearman).sum::<f64>() / n;
        let var = entries.iter().map(|e| (e.spearman - mean).powi(2)).sum::<f64>() / n;
        Self { entries, mean, std: var.sqrt() }
    }

    /// Mean over the entries of one device.
    pub fn device_mean(&self, device_id: &str) -> Option<f64> {
        let v: Vec<f64> = self.entries.iter().filter(|e| e.device_id == device_id).map(|e| e.spearman).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// `device_id,trial,spearman` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), PipelineError> {
        let mut wtr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| PipelineError::Io(e.to_string());
        wtr.write_record(["device_id", "trial", "spearman"]).map_err(io)?;
        for e in &self.entries {
            wtr.write_record([e.device_id.clone(), e.trial.to_string(), format!("{:?}", e.spearman)]).map_err(io)?;
        }
        wtr.flush().map_err(|e| PipelineError::Io(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable report") + "\n"
    }
}

/// Predictions for held-out archs of one device, in sorted arch_id order.
#[derive(Debug, Clone, PartialEq)]
pub struct Scatter {
    pub device_id: String,
    pub arch_ids: Vec<String>,
    pub pred: Vec<f64>,
    pub truth: Vec<f64>,
}

impl Scatter {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), PipelineError> {
        let mut wtr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| PipelineError::Io(e.to_string());
        wtr.write_record(["pred", "truth"]).map_err(io)?;
        for (p, t) in self.pred.iter().zip(&self.truth) {
            wtr.write_record([format!("{p:?}"), format!("{t:?}")]).map_err(io)?;
        }
        wtr.flush().map_err(|e| PipelineError::Io(e.to_string()))
    }
}

const CHUNK: usize = 32;

/// Scores every listed arch; parallel over fixed-size chunks, so the result
/// does not depend on the thread count.
pub fn predict_archs(
    state: &PredictorState,
    device: &str,
    archs: &[&Architecture],
    encodings: Option<&EncodingTable>,
) -> Result<Vec<f64>, PipelineError> {
    let supp: Option<Vec<&[f64]>> = if state.config.supplementary_dim > 0 {
        let enc = encodings.ok_or_else(|| PipelineError::MissingEncoding("<no encoding table>".into()))?;
        Some(
            archs
                .iter()
                .map(|a| enc.get(a.arch_id()).ok_or_else(|| PipelineError::MissingEncoding(a.arch_id().into())))
                .collect::<Result<_, _>>()?,
        )
    } else {
        None
    };
    let chunks: Vec<Result<Vec<f64>, PipelineError>> = archs
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let s = supp.as_ref().map(|s| &s[c * CHUNK..c * CHUNK + chunk.len()]);
            Ok(state.predict_many(chunk, device, s)?)
        })
        .collect();
    let mut out = Vec::with_capacity(archs.len());
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

/// Predicts all held-out archs of `device` and pairs them with the truth.
pub fn scatter(
    state: &PredictorState,
    device: &str,
    heldout: &LatencyTable,
    archs: &ArchIndex,
    encodings: Option<&EncodingTable>,
) -> Result<Scatter, PipelineError> {
    state.device_index(device)?;
    let rows = heldout.device_rows(device);
    if rows.is_empty() {
        return Err(PipelineError::InsufficientData { device: device.into(), have: 0, need: 2 });
    }
    let list: Vec<&Architecture> = rows
        .iter()
        .map(|(id, _)| archs.get(*id).ok_or_else(|| PipelineError::UnknownArch(id.to_string())))
        .collect::<Result<_, _>>()?;
    let pred = predict_archs(state, device, &list, encodings)?;
    Ok(Scatter {
        device_id: device.to_string(),
        arch_ids: rows.iter().map(|(id, _)| id.to_string()).collect(),
        pred,
        truth: rows.iter().map(|&(_, l)| l).collect(),
    })
}

/// Spearman correlation of predictions with held-out truth.
pub fn evaluate(
    state: &PredictorState,
    device: &str,
    heldout: &LatencyTable,
    archs: &ArchIndex,
    encodings: Option<&EncodingTable>,
) -> Result<f64, PipelineError> {
    let s = scatter(state, device, heldout, archs, encodings)?;
    Ok(spearman(&s.pred, &s.truth)?)
}

/// Spearman correlation of an arbitrary scoring function with held-out truth.
pub fn evaluate_with(
    device: &str,
    heldout: &LatencyTable,
    archs: &ArchIndex,
    predict: &(dyn Fn(&Architecture) -> f64 + Sync),
) -> Result<f64, PipelineError> {
    let rows = heldout.device_rows(device);
    if rows.is_empty() {
        return Err(PipelineError::InsufficientData { device: device.into(), have: 0, need: 2 });
    }
    let mut pred = Vec::with_capacity(rows.len());
    for (id, _) in &rows {
        pred.push(predict(archs.get(*id).ok_or_else(|| PipelineError::UnknownArch(id.to_string()))?));
    }
    let truth: Vec<f64> = rows.iter().map(|&(_, l)| l).collect();
    Ok(spearman(&pred, &truth)?)
}
