//! Early stopping and plateau learning-rate reduction on a validation-loss stream.
//!
//! Both use strict improvement (`loss < best`); epochs are 1-based.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    epoch: usize,
    wait: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            epoch: 0,
            wait: 0,
        }
    }

    /// Records the next epoch's loss. Returns `true` in the second slot when it is a new best.
    pub fn update(&mut self, loss: f64) -> (StopDecision, bool) {
        self.epoch += 1;
        let improved = loss < self.best;
        if improved {
            self.best = loss;
            self.best_epoch = self.epoch;
            self.wait = 0;
        } else {
            self.wait += 1;
        }
        let decision = if self.wait >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        };
        (decision, improved)
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

pub fn early_stopping(history: &[f64], patience: usize) -> (StopDecision, usize) {
    let mut es = EarlyStopping::new(patience);
    let mut decision = StopDecision::Continue;
    for &loss in history {
        decision = es.update(loss).0;
        if decision == StopDecision::Stop {
            break;
        }
    }
    (decision, es.best_epoch())
}

#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    patience: usize,
    factor: f64,
    best: f64,
    wait: usize,
}

impl PlateauScheduler {
    pub fn new(patience: usize, factor: f64) -> Self {
        Self {
            patience,
            factor,
            best: f64::INFINITY,
            wait: 0,
        }
    }

    /// Feeds one epoch's loss and returns the learning rate to use next.
    pub fn update(&mut self, loss: f64, lr: f64) -> f64 {
        if loss < self.best {
            self.best = loss;
            self.wait = 0;
            return lr;
        }
        self.wait += 1;
        if self.wait >= self.patience {
            self.wait = 0;
            lr * self.factor
        } else {
            lr
        }
    }
}

pub fn reduce_lr_on_plateau(history: &[f64], patience: usize, factor: f64, lr: f64) -> f64 {
    let mut sched = PlateauScheduler::new(patience, factor);
    history.iter().fold(lr, |lr, &loss| sched.update(loss, lr))
}
