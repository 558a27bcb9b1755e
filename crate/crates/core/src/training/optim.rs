use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// One SGD-with-momentum update of a single tensor:
/// `g' = g + wd·p`, `v ← m·v + g'`, `p ← p − lr·v`.
pub fn sgd_step(
    params: &mut [f64],
    grads: &[f64],
    velocity: &mut [f64],
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    ensure!(
        params.len() == grads.len() && params.len() == velocity.len(),
        Shape,
        "sgd_step: params {}, grads {}, velocity {}",
        params.len(),
        grads.len(),
        velocity.len()
    );
    for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        let g = g + weight_decay * *p;
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
    Ok(())
}

/// Divide the learning rate when validation loss stops improving.
///
/// Improvement means strictly below the best loss so far. After `patience`
/// consecutive epochs without improvement the rate is divided by `divisor`
/// and the counter restarts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub patience: usize,
    pub divisor: f64,
    pub best: Option<f64>,
    pub stale_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, patience: usize, divisor: f64) -> Self {
        Self {
            lr,
            patience,
            divisor,
            best: None,
            stale_epochs: 0,
        }
    }

    /// Record one epoch's validation loss and return the rate for the next.
    pub fn step(&mut self, val_loss: f64) -> f64 {
        match self.best {
            Some(best) if val_loss >= best || val_loss.is_nan() => {
                self.stale_epochs += 1;
                if self.stale_epochs >= self.patience {
                    self.lr /= self.divisor;
                    self.stale_epochs = 0;
                }
            }
            _ => {
                self.best = Some(val_loss);
                self.stale_epochs = 0;
            }
        }
        self.lr
    }
}

/// Replay a whole validation-loss history; returns the rate after its last
/// epoch.
pub fn plateau_schedule(history: &[f64], lr0: f64, patience: usize, divisor: f64) -> Result<f64> {
    ensure!(!history.is_empty(), InvalidArgument, "validation history is empty");
    let mut s = PlateauScheduler::new(lr0, patience, divisor);
    let mut lr = lr0;
    for &l in history {
        lr = s.step(l);
    }
    Ok(lr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_momentum_recurrence() {
        let (mut p, mut v) = ([1.0], [0.0]);
        sgd_step(&mut p, &[1.0], &mut v, 0.1, 0.9, 0.0).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-15);
        sgd_step(&mut p, &[1.0], &mut v, 0.1, 0.9, 0.0).unwrap();
        assert!((v[0] - 1.9).abs() < 1e-15 && (p[0] - 0.71).abs() < 1e-15);
    }

    #[test]
    fn weight_decay_only_step() {
        let (mut p, mut v) = ([1.0], [0.0]);
        sgd_step(&mut p, &[0.0], &mut v, 0.1, 0.9, 0.0005).unwrap();
        assert!((p[0] - 0.99995).abs() < 1e-15);
        let (mut p, mut v) = ([3.0, -2.0], [0.0, 0.0]);
        sgd_step(&mut p, &[0.0, 0.0], &mut v, 0.1, 0.9, 0.0).unwrap();
        assert_eq!(p, [3.0, -2.0]);
        assert!(sgd_step(&mut p, &[0.0], &mut v, 0.1, 0.9, 0.0).is_err());
    }

    #[test]
    fn plateau_examples() {
        let dec: Vec<f64> = (0..20).map(|i| 1.0 / (i + 1) as f64).collect();
        assert_eq!(plateau_schedule(&dec, 0.1, 5, 10.0).unwrap(), 0.1);
        let mut s = PlateauScheduler::new(0.1, 5, 10.0);
        s.step(1.0);
        let lrs: Vec<f64> = [1.0, 1.2, 1.0, 1.1, 1.0].iter().map(|&l| s.step(l)).collect();
        assert_eq!(&lrs[..4], &[0.1; 4]);
        assert!((lrs[4] - 0.01).abs() < 1e-15);
        let flat = [1.0; 11];
        assert!((plateau_schedule(&flat, 0.1, 5, 10.0).unwrap() - 0.001).abs() < 1e-15);
        assert!(plateau_schedule(&[], 0.1, 5, 10.0).is_err());
    }
}
