//! Epoch loop with seeded shuffling, validation, early stopping on
//! validation loss and best-IoU model retention.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{AdamHyper, AdamState};
use super::checkpoint::{restore, snapshot};
use super::loss::bce_loss;
use crate::error::{Error, Result};
use crate::metrics::{binarize, ClassMode, ConfusionAccumulator, MetricsReport};
use crate::model::SegmentationModel;
use crate::nn::Mode;
use crate::tensor::Tensor;
use crate::volume::{SliceDataset, Split};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamHyper,
    pub early_stop_patience: usize,
    pub early_stop_min_delta: f64,
    pub seed: u64,
    pub threshold: f32,
    pub class_mode: ClassMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            epochs: 10,
            batch_size: 8,
            adam: AdamHyper::default(),
            early_stop_patience: 10,
            early_stop_min_delta: 1e-4,
            seed: 0,
            threshold: 0.5,
            class_mode: ClassMode::TwoClass,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.learning_rate > 0.0) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        let AdamHyper { beta1, beta2, eps } = self.adam;
        if !(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0 && eps > 0.0) {
            return bad(format!("invalid Adam settings {:?}", self.adam));
        }
        if self.early_stop_patience == 0 || self.batch_size == 0 || self.epochs == 0 {
            return bad("epochs, batch size and patience must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
    pub precision: f64,
    pub recall: f64,
    pub iou: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_iou: f64,
    pub val_loss: f64,
    pub val_iou: f64,
    pub val_split: Split,
}

/// Receives training progress as it happens.
pub trait TrainSink {
    fn on_step(&mut self, _log: &StepLog) -> Result<()> {
        Ok(())
    }
    fn on_epoch(&mut self, _summary: &EpochSummary) -> Result<()> {
        Ok(())
    }
}

/// Keeps everything in memory.
#[derive(Clone, Debug, Default)]
pub struct MemorySink {
    pub steps: Vec<StepLog>,
    pub epochs: Vec<EpochSummary>,
}

impl TrainSink for MemorySink {
    fn on_step(&mut self, log: &StepLog) -> Result<()> {
        self.steps.push(*log);
        Ok(())
    }
    fn on_epoch(&mut self, summary: &EpochSummary) -> Result<()> {
        self.epochs.push(summary.clone());
        Ok(())
    }
}

pub const STEP_CSV_HEADER: &str = "epoch,step,loss,precision,recall,iou";
pub const EPOCH_CSV_HEADER: &str = "epoch,train_loss,train_iou,val_loss,val_iou,val_split";

pub fn step_csv_row(l: &StepLog) -> String {
    format!(
        "{},{},{:.6},{:.6},{:.6},{:.6}",
        l.epoch, l.step, l.loss, l.precision, l.recall, l.iou
    )
}

pub fn epoch_csv_row(e: &EpochSummary) -> String {
    format!(
        "{},{:.6},{:.6},{:.6},{:.6},{}",
        e.epoch,
        e.train_loss,
        e.train_iou,
        e.val_loss,
        e.val_iou,
        e.val_split.as_str()
    )
}

/// Writes the per-step CSV log and, optionally, the per-epoch summary CSV.
pub struct CsvSink<W: Write> {
    steps: W,
    epochs: Option<W>,
    started: bool,
}

impl<W: Write> CsvSink<W> {
    pub fn new(steps: W, epochs: Option<W>) -> Self {
        CsvSink {
            steps,
            epochs,
            started: false,
        }
    }

    fn start(&mut self) -> std::io::Result<()> {
        if !self.started {
            self.started = true;
            writeln!(self.steps, "{STEP_CSV_HEADER}")?;
            if let Some(e) = self.epochs.as_mut() {
                writeln!(e, "{EPOCH_CSV_HEADER}")?;
            }
        }
        Ok(())
    }

    pub fn into_inner(self) -> (W, Option<W>) {
        (self.steps, self.epochs)
    }
}

fn sink_io(e: std::io::Error) -> Error {
    Error::io("<training log>", e)
}

impl<W: Write> TrainSink for CsvSink<W> {
    fn on_step(&mut self, log: &StepLog) -> Result<()> {
        self.start().map_err(sink_io)?;
        writeln!(self.steps, "{}", step_csv_row(log)).map_err(sink_io)
    }
    fn on_epoch(&mut self, summary: &EpochSummary) -> Result<()> {
        self.start().map_err(sink_io)?;
        self.steps.flush().map_err(sink_io)?;
        if let Some(e) = self.epochs.as_mut() {
            writeln!(e, "{}", epoch_csv_row(summary)).map_err(sink_io)?;
            e.flush().map_err(sink_io)?;
        }
        Ok(())
    }
}

/// Parses a step log written by [`CsvSink`].
pub fn read_step_log<R: BufRead>(r: R) -> Result<Vec<StepLog>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::MalformedLog {
            line: line_no,
            reason: e.to_string(),
        })?;
        let bad = |reason: String| Error::MalformedLog { line: line_no, reason };
        if n == 0 {
            if line.trim() != STEP_CSV_HEADER {
                return Err(bad(format!("expected header {STEP_CSV_HEADER:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 6 {
            return Err(bad(format!("expected 6 fields, found {}", f.len())));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("bad integer {s:?}")));
        let real = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("bad number {s:?}")))
        };
        out.push(StepLog {
            epoch: int(f[0])?,
            step: int(f[1])?,
            loss: real(f[2])?,
            precision: real(f[3])?,
            recall: real(f[4])?,
            iou: real(f[5])?,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub best_epoch: usize,
    pub best_val_iou: f64,
    pub history: Vec<EpochSummary>,
}

/// Eval-mode loss (pixel mean) and metrics over `idx`, in batches.
pub fn evaluate<M: SegmentationModel<f32> + ?Sized>(
    model: &mut M,
    data: &SliceDataset,
    idx: &[usize],
    batch_size: usize,
    threshold: f32,
    mode: ClassMode,
) -> Result<(f64, MetricsReport)> {
    if idx.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut acc = ConfusionAccumulator::new();
    let (mut loss_sum, mut px) = (0.0, 0usize);
    for chunk in idx.chunks(batch_size.max(1)) {
        let (x, y) = data.batch(chunk)?;
        let p = model.forward(&x, Mode::Eval)?;
        let (loss, _) = bce_loss(&p, &y)?;
        loss_sum += loss * y.len() as f64;
        px += y.len();
        acc.accumulate(&binarize(p.data(), threshold), y.data())?;
    }
    Ok((loss_sum / px as f64, acc.compute(mode)?))
}

/// Eval-mode probability maps for the selected items, `[n, 1, H, W]` each.
pub fn predict<M: SegmentationModel<f32> + ?Sized>(
    model: &mut M,
    data: &SliceDataset,
    idx: &[usize],
    batch_size: usize,
) -> Result<Vec<Tensor>> {
    let mut out = Vec::with_capacity(idx.len());
    for chunk in idx.chunks(batch_size.max(1)) {
        let (x, _) = data.batch(chunk)?;
        let p = model.forward(&x, Mode::Eval)?;
        for n in 0..chunk.len() {
            out.push(p.batch_item(n)?);
        }
    }
    Ok(out)
}

/// Trains `model` in place and leaves it holding the parameters of the
/// epoch with the best validation IoU.
///
/// Validation uses the Test split, or the Train split when Test is empty.
pub fn train<M: SegmentationModel<f32> + ?Sized>(
    model: &mut M,
    data: &SliceDataset,
    cfg: &TrainConfig,
    sinks: &mut [&mut dyn TrainSink],
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut train_idx = data.indices(Split::Train);
    if train_idx.is_empty() {
        return Err(Error::EmptyTrainSplit);
    }
    let (val_idx, val_split) = match data.indices(Split::Test) {
        v if v.is_empty() => (train_idx.clone(), Split::Train),
        v => (v, Split::Test),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(cfg.adam);
    let mut step = 0usize;
    let mut best_loss = f64::INFINITY;
    let mut wait = 0usize;
    let mut best: Option<(usize, f64, Vec<super::checkpoint::Record>)> = None;
    let mut history = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut epoch_acc = ConfusionAccumulator::new();
        let (mut loss_sum, mut px) = (0.0, 0usize);
        for chunk in train_idx.chunks(cfg.batch_size) {
            step += 1;
            let (x, y) = data.batch(chunk)?;
            let diverged = |e: Error| if e.is_numerical() { Error::DivergedLoss { epoch, step } } else { e };
            model.zero_grad();
            let p = model.forward(&x, Mode::Train).map_err(diverged)?;
            let (loss, grad) = bce_loss(&p, &y).map_err(diverged)?;
            model.backward(&grad).map_err(diverged)?;
            let mut params = model.params_mut();
            if params.iter().any(|p| p.grad.ensure_finite(&p.name).is_err()) {
                return Err(Error::DivergedLoss { epoch, step });
            }
            adam.step(&mut params, cfg.learning_rate)?;

            let mut acc = ConfusionAccumulator::new();
            acc.accumulate(&binarize(p.data(), cfg.threshold), y.data())?;
            epoch_acc.merge(&acc);
            let (precision, recall) = acc.precision_recall()?;
            let log = StepLog {
                epoch,
                step,
                loss,
                precision,
                recall,
                iou: acc.compute(cfg.class_mode)?.mean_iou,
            };
            for s in sinks.iter_mut() {
                s.on_step(&log)?;
            }
            loss_sum += loss * y.len() as f64;
            px += y.len();
        }

        let (val_loss, val_report) =
            evaluate(model, data, &val_idx, cfg.batch_size, cfg.threshold, cfg.class_mode).map_err(|e| {
                if e.is_numerical() {
                    Error::DivergedLoss { epoch, step }
                } else {
                    e
                }
            })?;
        if !val_loss.is_finite() {
            return Err(Error::DivergedLoss { epoch, step });
        }
        let summary = EpochSummary {
            epoch,
            train_loss: loss_sum / px as f64,
            train_iou: epoch_acc.compute(cfg.class_mode)?.mean_iou,
            val_loss,
            val_iou: val_report.mean_iou,
            val_split,
        };
        for s in sinks.iter_mut() {
            s.on_epoch(&summary)?;
        }
        history.push(summary);

        if best.as_ref().is_none_or(|(_, iou, _)| val_report.mean_iou > *iou) {
            best = Some((epoch, val_report.mean_iou, snapshot(&*model)));
        }
        if val_loss < best_loss - cfg.early_stop_min_delta {
            best_loss = val_loss;
            wait = 0;
        } else {
            wait += 1;
            if wait >= cfg.early_stop_patience {
                stopped_early = epoch < cfg.epochs;
                break;
            }
        }
    }

    let (best_epoch, best_val_iou, records) = best.expect("at least one epoch runs");
    restore(model, &records)?;
    Ok(TrainOutcome {
        epochs_run: history.len(),
        stopped_early,
        best_epoch,
        best_val_iou,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_row_has_six_decimals() {
        let l = StepLog {
            epoch: 1,
            step: 3,
            loss: 0.5,
            precision: 1.0,
            recall: 0.25,
            iou: 1.0 / 3.0,
        };
        assert_eq!(step_csv_row(&l), "1,3,0.500000,1.000000,0.250000,0.333333");
    }

    #[test]
    fn step_log_parses_back() {
        let text = format!("{STEP_CSV_HEADER}\n1,1,0.693147,0.000000,0.000000,0.400000\n");
        let logs = read_step_log(text.as_bytes()).unwrap();
        assert_eq!(logs.len(), 1);
        assert_eq!(logs[0].iou, 0.4);
        let bad = format!("{STEP_CSV_HEADER}\n1,x,0,0,0,0\n");
        assert!(matches!(read_step_log(bad.as_bytes()), Err(Error::MalformedLog { line: 2, .. })));
        assert!(matches!(read_step_log("nope\n".as_bytes()), Err(Error::MalformedLog { line: 1, .. })));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let c = TrainConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
