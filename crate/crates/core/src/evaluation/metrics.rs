use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f32 = 0.4;

/// Cell counts after binarisation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
}

impl Counts {
    pub fn tally(pred: &[f32], target: &[u8], threshold: f32) -> Result<Self> {
        check_shapes(pred, target)?;
        let mut c = Counts::default();
        for (&p, &t) in pred.iter().zip(target) {
            match (p >= threshold, t != 0) {
                (true, true) => c.true_positives += 1,
                (true, false) => c.false_positives += 1,
                (false, true) => c.false_negatives += 1,
                (false, false) => {}
            }
        }
        Ok(c)
    }

    /// Percent. With no predicted positives: 100 if the target is empty too,
    /// otherwise 0.
    pub fn precision(&self) -> f64 {
        let predicted = self.true_positives + self.false_positives;
        if predicted == 0 {
            return if self.false_negatives == 0 { 100.0 } else { 0.0 };
        }
        100.0 * self.true_positives as f64 / predicted as f64
    }

    /// Percent. With no target positives: 100 if nothing was predicted,
    /// otherwise 0.
    pub fn recall(&self) -> f64 {
        let actual = self.true_positives + self.false_negatives;
        if actual == 0 {
            return if self.false_positives == 0 { 100.0 } else { 0.0 };
        }
        100.0 * self.true_positives as f64 / actual as f64
    }

    pub fn f_measure(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    /// `TP / (TP + FP + FN)` in percent; 100 when all three are zero.
    pub fn accuracy(&self) -> f64 {
        let denom = self.true_positives + self.false_positives + self.false_negatives;
        if denom == 0 {
            100.0
        } else {
            100.0 * self.true_positives as f64 / denom as f64
        }
    }
}

fn check_shapes(pred: &[f32], target: &[u8]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::Shape { expected: vec![target.len()], actual: vec![pred.len()] });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

pub fn frame_metrics(pred: &[f32], target: &[u8], threshold: f32) -> Result<FrameMetrics> {
    let c = Counts::tally(pred, target, threshold)?;
    Ok(FrameMetrics { precision: c.precision(), recall: c.recall(), f_measure: c.f_measure() })
}

pub fn accuracy_score(pred: &[f32], target: &[u8], threshold: f32) -> Result<f64> {
    Ok(Counts::tally(pred, target, threshold)?.accuracy())
}

/// Area under the step-interpolated precision-recall curve in percent,
/// sweeping the threshold down through every distinct score. Tied scores
/// enter the curve together. `None` when the target has no positives.
pub fn average_precision(pred: &[f32], target: &[u8]) -> Result<Option<f64>> {
    check_shapes(pred, target)?;
    let positives = target.iter().filter(|&&t| t != 0).count();
    if positives == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..pred.len()).collect();
    order.sort_unstable_by(|&a, &b| pred[b].total_cmp(&pred[a]));
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let score = pred[order[i]];
        while i < order.len() && pred[order[i]] == score {
            tp += (target[order[i]] != 0) as usize;
            seen += 1;
            i += 1;
        }
        let recall = tp as f64 / positives as f64;
        ap += (recall - prev_recall) * (tp as f64 / seen as f64);
        prev_recall = recall;
    }
    Ok(Some(100.0 * ap))
}
