use serde::{Deserialize, Serialize};

use super::metrics::Direction;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateauConfig {
    pub factor: f64,
    pub patience: usize,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        PlateauConfig {
            factor: 0.9,
            patience: 500,
        }
    }
}

/// Multiplies the learning rate by `factor` once the monitored metric has
/// gone `patience` epochs without a strict improvement, then starts counting
/// again.
#[derive(Clone, Debug)]
pub struct Plateau {
    cfg: PlateauConfig,
    direction: Direction,
    best: f64,
    stale: usize,
}

impl Plateau {
    pub fn new(cfg: PlateauConfig, direction: Direction) -> Self {
        Plateau {
            cfg,
            direction,
            best: direction.worst(),
            stale: 0,
        }
    }

    pub fn step(&mut self, metric: f64, lr: f64) -> f64 {
        if self.direction.improves(metric, self.best) {
            self.best = metric;
            self.stale = 0;
            return lr;
        }
        self.stale += 1;
        if self.stale >= self.cfg.patience {
            self.stale = 0;
            return lr * self.cfg.factor;
        }
        lr
    }
}

/// Signals a stop after `patience` consecutive epochs without a strict
/// improvement.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    direction: Direction,
    best: f64,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, direction: Direction) -> Self {
        EarlyStopping {
            patience,
            direction,
            best: direction.worst(),
            stale: 0,
        }
    }

    /// Records a metric; returns `true` when training should stop.
    pub fn update(&mut self, metric: f64) -> bool {
        if self.direction.improves(metric, self.best) {
            self.best = metric;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        self.stale >= self.patience
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_decays_after_patience() {
        let mut p = Plateau::new(PlateauConfig { factor: 0.5, patience: 2 }, Direction::Maximize);
        assert_eq!(p.step(0.5, 1.0), 1.0);
        assert_eq!(p.step(0.5, 1.0), 1.0);
        assert_eq!(p.step(0.4, 1.0), 0.5);
        assert_eq!(p.step(0.6, 0.5), 0.5);
    }

    #[test]
    fn early_stop_counts_stale_epochs() {
        let mut e = EarlyStopping::new(2, Direction::Minimize);
        assert!(!e.update(3.0));
        assert!(!e.update(3.0));
        assert!(e.update(4.0));
    }
}
