//! Mini-batch Adam training with best-validation checkpoint selection.

use super::layers::Linear;
use super::model::{Batch, GinModel};
use super::{decode, GnnError};
use crate::encode::GraphInput;
use crate::eval::f1_scores;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Multi-label decision threshold on raw scores.
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-4, weight_decay: 1e-5, epochs: 100, batch_size: 16, seed: 0, threshold: 0.0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), GnnError> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(GnnError::Config(format!("learning rate {}", self.learning_rate)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(GnnError::Config(format!("weight decay {}", self.weight_decay)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(GnnError::Config("epochs and batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Adam with L2 weight decay folded into the gradient.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    weight_decay: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Linear>,
    v: Vec<Linear>,
}

impl Adam {
    pub fn new(model: &GinModel, lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: model.zero_grads(),
            v: model.zero_grads(),
        }
    }

    pub fn step(&mut self, model: &mut GinModel, grads: &[Linear]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, lr, eps, wd) = (self.beta1, self.beta2, self.lr, self.eps, self.weight_decay);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            let g = g + wd * *p;
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for (((p, g), m), v) in model.linears_mut().into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            ndarray::Zip::from(&mut p.w).and(&g.w).and(&mut m.w).and(&mut v.w).for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut p.b).and(&g.b).and(&mut m.b).and(&mut v.b).for_each(|p, &g, m, v| update(p, g, m, v));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_macro_f1: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation macro F1.
    pub model: GinModel,
    pub best_epoch: usize,
    pub trace: Vec<TraceRow>,
}

/// Writes the trace as `epoch,train_loss,val_macro_f1` CSV.
pub fn write_trace<W: Write>(trace: &[TraceRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "epoch,train_loss,val_macro_f1")?;
    for r in trace {
        writeln!(w, "{},{},{}", r.epoch, r.train_loss, r.val_macro_f1)?;
    }
    Ok(())
}

/// Macro F1 of the model's decoded predictions on `graphs`.
pub fn macro_f1(model: &GinModel, graphs: &[&GraphInput], threshold: f64) -> Result<f64, GnnError> {
    let out = model.infer(graphs)?;
    let task = model.config.task;
    let pred: Vec<Vec<usize>> = out.rows().into_iter().map(|r| decode(task, &r.to_vec(), threshold)).collect();
    let gold: Vec<Vec<usize>> = graphs.iter().map(|g| g.labels.clone()).collect();
    let report = f1_scores(&gold, &pred, model.config.labels()).map_err(|e| GnnError::Precondition(e.to_string()))?;
    Ok(report.macro_f1)
}

/// Trains `model` on `train`, keeping the parameters with the best macro F1
/// on `val` (earliest epoch on ties).
pub fn train(
    mut model: GinModel,
    train: &[GraphInput],
    val: &[GraphInput],
    config: &TrainConfig,
) -> Result<TrainOutcome, GnnError> {
    config.validate()?;
    if train.is_empty() {
        return Err(GnnError::Precondition("empty training set".into()));
    }
    if val.is_empty() {
        return Err(GnnError::Precondition("empty validation set".into()));
    }
    let mut shuffle = crate::seed::rng(crate::seed::derive_str(config.seed, "gin-shuffle"));
    let mut drop = crate::seed::rng(crate::seed::derive_str(config.seed, "gin-dropout"));
    let mut adam = Adam::new(&model, config.learning_rate, config.weight_decay);
    let val_refs: Vec<&GraphInput> = val.iter().collect();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut trace = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, GinModel)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle);
        let mut loss_sum = 0.0;
        for (bi, idx) in order.chunks(config.batch_size).enumerate() {
            let graphs: Vec<&GraphInput> = idx.iter().map(|&i| &train[i]).collect();
            let batch = Batch::new(&graphs)?;
            let fwd = model.forward(&batch, Some(&mut drop))?;
            let gold: Vec<&[usize]> = graphs.iter().map(|g| g.labels.as_slice()).collect();
            let (loss, dout) = model.loss(&fwd.out, &gold)?;
            if !loss.is_finite() {
                return Err(GnnError::NonFinite { epoch, batch: bi, norms: model.parameter_norms() });
            }
            loss_sum += loss * graphs.len() as f64;
            let grads = model.backward(&batch, &fwd, &dout);
            adam.step(&mut model, &grads);
        }
        let val_f1 = macro_f1(&model, &val_refs, config.threshold)?;
        let row = TraceRow { epoch, train_loss: loss_sum / train.len() as f64, val_macro_f1: val_f1 };
        log::debug!("epoch {epoch}: loss {:.6} val macro F1 {:.4}", row.train_loss, val_f1);
        trace.push(row);
        if best.as_ref().is_none_or(|(f, _, _)| val_f1 > *f) {
            best = Some((val_f1, epoch, model.clone()));
        }
    }
    let (_, best_epoch, model) = best.expect("at least one epoch");
    Ok(TrainOutcome { model, best_epoch, trace })
}
