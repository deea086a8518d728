//! GIN experts: model, training, prediction and checkpoints.

mod checkpoint;
mod layers;
mod loss;
mod model;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use layers::{aggregate, mean_readout, Linear};
pub use loss::{ce_loss, ce_with_grad, softmax, zlpr_loss, zlpr_with_grad, PROB_FLOOR};
pub use model::{gradient_check, Batch, Forward, GinConfig, GinModel};
pub use train::{macro_f1, train, write_trace, Adam, TraceRow, TrainConfig, TrainOutcome};

use crate::encode::GraphInput;
use crate::taxonomy::TaskKind;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GnnError {
    #[error("model configuration error: {0}")]
    Config(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}; parameter norms {norms:?}")]
    NonFinite { epoch: usize, batch: usize, norms: Vec<(String, f64)> },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Labels from one head output row: the argmax for binary tasks, every
/// score above `threshold` for multi-label tasks.
pub fn decode(task: TaskKind, out: &[f64], threshold: f64) -> Vec<usize> {
    if task.is_multi_label() {
        (0..out.len()).filter(|&i| out[i] > threshold).collect()
    } else {
        let mut best = 0;
        for i in 1..out.len() {
            if out[i] > out[best] {
                best = i;
            }
        }
        vec![best]
    }
}

/// One expert's output for one article.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionOutput {
    pub article_id: String,
    pub task: TaskKind,
    /// Binary tasks: softmax over the two classes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<Vec<f64>>,
    /// Multi-label tasks: raw head scores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
    pub labels: Vec<usize>,
    /// Probabilities (binary) or absolute scores (multi-label).
    pub confidence: Vec<f64>,
}

impl PredictionOutput {
    pub fn from_output(article_id: String, task: TaskKind, out: &[f64], threshold: f64) -> Self {
        let labels = decode(task, out, threshold);
        if task.is_multi_label() {
            Self {
                article_id,
                task,
                probabilities: None,
                scores: Some(out.to_vec()),
                labels,
                confidence: out.iter().map(|s| s.abs()).collect(),
            }
        } else {
            let p = softmax(out);
            Self { article_id, task, probabilities: Some(p.clone()), scores: None, labels, confidence: p }
        }
    }
}

/// Dropout-free predictions for `graphs`, in input order.
pub fn predict(model: &GinModel, graphs: &[&GraphInput], threshold: f64) -> Result<Vec<PredictionOutput>, GnnError> {
    let out = model.infer(graphs)?;
    Ok(graphs
        .iter()
        .zip(out.rows())
        .map(|(g, row)| PredictionOutput::from_output(g.id.clone(), model.config.task, &row.to_vec(), threshold))
        .collect())
}
