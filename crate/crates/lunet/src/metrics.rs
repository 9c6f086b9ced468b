//! Pixel confusion counts and the segmentation scores derived from them:
//! pixel accuracy, mean accuracy, mean IoU, frequency-weighted IoU, plus
//! foreground precision and recall.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassMode {
    /// Means taken over background and foreground.
    #[serde(rename = "two")]
    TwoClass,
    /// Means taken over the foreground class only (`n_cl = 1`).
    #[serde(rename = "fg")]
    ForegroundOnly,
}

impl std::str::FromStr for ClassMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two" => Ok(ClassMode::TwoClass),
            "fg" => Ok(ClassMode::ForegroundOnly),
            other => Err(Error::InvalidConfig(format!("unknown class mode {other:?}"))),
        }
    }
}

/// `n[i][j]`: pixels of true class `i` predicted as class `j`
/// (0 = background, 1 = foreground).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionAccumulator {
    pub n: [[u64; 2]; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub pixel_acc: f64,
    pub mean_acc: f64,
    pub mean_iou: f64,
    pub fwiou: f64,
    pub precision: f64,
    pub recall: f64,
}

fn binary_class(v: f32, what: &str, i: usize) -> Result<usize> {
    if v == 0.0 {
        Ok(0)
    } else if v == 1.0 {
        Ok(1)
    } else {
        Err(Error::NonBinaryInput(format!("{what} pixel {i} is {v}")))
    }
}

impl ConfusionAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one prediction/truth pair of binary masks.
    pub fn accumulate(&mut self, pred: &[f32], truth: &[f32]) -> Result<()> {
        if pred.len() != truth.len() {
            return Err(Error::ShapeMismatch(format!(
                "prediction has {} pixels, truth has {}",
                pred.len(),
                truth.len()
            )));
        }
        let mut local = [[0u64; 2]; 2];
        for (i, (&p, &t)) in pred.iter().zip(truth).enumerate() {
            let pj = binary_class(p, "prediction", i)?;
            let ti = binary_class(t, "truth", i)?;
            local[ti][pj] += 1;
        }
        for (row, lrow) in self.n.iter_mut().zip(&local) {
            for (a, b) in row.iter_mut().zip(lrow) {
                *a += b;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionAccumulator) {
        for i in 0..2 {
            for j in 0..2 {
                self.n[i][j] += other.n[i][j];
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.n.iter().flatten().sum()
    }

    /// Pixels whose true class is `i`.
    pub fn class_total(&self, i: usize) -> u64 {
        self.n[i][0] + self.n[i][1]
    }

    /// Pixels predicted as class `j`.
    pub fn predicted_total(&self, j: usize) -> u64 {
        self.n[0][j] + self.n[1][j]
    }

    /// IoU of class `i`; `None` when the class is absent from the truth.
    pub fn class_iou(&self, i: usize) -> Option<f64> {
        let t = self.class_total(i);
        if t == 0 {
            return None;
        }
        let nii = self.n[i][i];
        Some(nii as f64 / (t + self.predicted_total(i) - nii) as f64)
    }

    /// Accuracy (recall) of class `i`; `None` when the class is absent.
    pub fn class_accuracy(&self, i: usize) -> Option<f64> {
        let t = self.class_total(i);
        (t > 0).then(|| self.n[i][i] as f64 / t as f64)
    }

    pub fn compute(&self, mode: ClassMode) -> Result<MetricsReport> {
        let total = self.total();
        if total == 0 {
            return Err(Error::EmptyAccumulator);
        }
        let pixel_acc = (self.n[0][0] + self.n[1][1]) as f64 / total as f64;
        let classes: &[usize] = match mode {
            ClassMode::TwoClass => &[0, 1],
            ClassMode::ForegroundOnly => &[1],
        };
        let present: Vec<usize> = classes.iter().copied().filter(|&i| self.class_total(i) > 0).collect();
        let (mean_acc, mean_iou) = if present.is_empty() {
            // Foreground-only scoring of an image with no foreground: perfect
            // if nothing was predicted as foreground, zero otherwise.
            let v = if self.predicted_total(1) == 0 { 1.0 } else { 0.0 };
            (v, v)
        } else {
            let ncl = present.len() as f64;
            let acc: f64 = present.iter().filter_map(|&i| self.class_accuracy(i)).sum();
            let iou: f64 = present.iter().filter_map(|&i| self.class_iou(i)).sum();
            (acc / ncl, iou / ncl)
        };
        let fwiou = (0..2)
            .filter_map(|i| self.class_iou(i).map(|iou| self.class_total(i) as f64 * iou))
            .sum::<f64>()
            / total as f64;
        let (precision, recall) = self.precision_recall()?;
        Ok(MetricsReport {
            pixel_acc,
            mean_acc,
            mean_iou,
            fwiou,
            precision,
            recall,
        })
    }

    /// Foreground precision and recall. An empty denominator scores 1.0 when
    /// the other error count is also zero, else 0.0.
    pub fn precision_recall(&self) -> Result<(f64, f64)> {
        if self.total() == 0 {
            return Err(Error::EmptyAccumulator);
        }
        let [[_, fp], [fn_, tp]] = self.n;
        let precision = if tp + fp == 0 {
            if fn_ == 0 { 1.0 } else { 0.0 }
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if tp + fn_ == 0 {
            if fp == 0 { 1.0 } else { 0.0 }
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        Ok((precision, recall))
    }
}

/// Binarizes probabilities at `threshold` (strictly greater is foreground).
pub fn binarize(probs: &[f32], threshold: f32) -> Vec<f32> {
    probs.iter().map(|&p| if p > threshold { 1.0 } else { 0.0 }).collect()
}

/// One table row: `dataset,method,pixel_acc,mean_acc,mean_iou,fwiou` with
/// percentages at one decimal.
pub fn report_csv_row(dataset: &str, method: &str, r: &MetricsReport) -> String {
    format!(
        "{dataset},{method},{:.1},{:.1},{:.1},{:.1}",
        r.pixel_acc * 100.0,
        r.mean_acc * 100.0,
        r.mean_iou * 100.0,
        r.fwiou * 100.0
    )
}

pub const REPORT_CSV_HEADER: &str = "dataset,method,pixel_acc,mean_acc,mean_iou,fwiou";
