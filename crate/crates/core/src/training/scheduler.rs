use serde::{Deserialize, Serialize};

/// What the scheduler decided after one validation loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochDecision {
    pub improved: bool,
    pub lr_reduced: bool,
    pub stop: bool,
    /// Learning rate for the next epoch.
    pub next_lr: f64,
}

/// Plateau learning-rate reduction combined with early stopping.
///
/// An epoch improves when its validation loss is below the best so far by
/// more than `tolerance`. After `plateau_patience` consecutive epochs
/// without improvement the rate is multiplied by `factor` and the plateau
/// count restarts; after `stop_patience` epochs without improvement training
/// stops.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    lr: f64,
    factor: f64,
    plateau_patience: usize,
    stop_patience: usize,
    tolerance: f64,
    best: Option<(usize, f64)>,
    since_best: usize,
    since_reduce: usize,
    epochs_seen: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, plateau_patience: usize, stop_patience: usize, tolerance: f64) -> Self {
        Self {
            lr,
            factor,
            plateau_patience,
            stop_patience,
            tolerance,
            best: None,
            since_best: 0,
            since_reduce: 0,
            epochs_seen: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Epoch index (0-based) and loss of the best epoch so far.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }

    pub fn observe(&mut self, validation_loss: f64) -> EpochDecision {
        let epoch = self.epochs_seen;
        self.epochs_seen += 1;
        let improved = match self.best {
            None => true,
            Some((_, best)) => validation_loss < best - self.tolerance,
        };
        let mut lr_reduced = false;
        if improved {
            self.best = Some((epoch, validation_loss));
            self.since_best = 0;
            self.since_reduce = 0;
        } else {
            self.since_best += 1;
            self.since_reduce += 1;
            if self.since_reduce >= self.plateau_patience {
                self.lr *= self.factor;
                self.since_reduce = 0;
                lr_reduced = true;
            }
        }
        EpochDecision { improved, lr_reduced, stop: self.since_best >= self.stop_patience, next_lr: self.lr }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halves_once_after_five_flat_epochs() {
        let mut s = PlateauScheduler::new(1e-3, 0.5, 5, 12, 0.0);
        let losses = [1.0, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9];
        let decisions: Vec<_> = losses.iter().map(|&l| s.observe(l)).collect();
        let reduced: Vec<usize> = decisions.iter().enumerate().filter(|(_, d)| d.lr_reduced).map(|(i, _)| i + 1).collect();
        assert_eq!(reduced, vec![7]);
        assert_eq!(s.lr(), 5e-4);
        assert_eq!(s.best(), Some((1, 0.9)));
        assert!(decisions.iter().all(|d| !d.stop));
    }

    #[test]
    fn stops_after_twelve_flat_epochs() {
        let mut s = PlateauScheduler::new(1.0, 0.5, 5, 12, 0.0);
        assert!(!s.observe(1.0).stop);
        for i in 1..=12 {
            let d = s.observe(1.0);
            assert_eq!(d.stop, i == 12, "epoch {i}");
        }
        // Reductions after 5 and 10 flat epochs.
        assert_eq!(s.lr(), 0.25);
    }

    #[test]
    fn tolerance_makes_small_gains_flat() {
        let mut s = PlateauScheduler::new(1.0, 0.5, 1, 12, 0.01);
        s.observe(1.0);
        assert!(!s.observe(0.995).improved);
        assert!(s.observe(0.98).improved);
    }
}
