//! Gradient training loop shared by the differentiable forecasters.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{usage, Error, Result};
use crate::pipeline::EarlyStopping;

/// A scalar forecaster with a flat trainable parameter vector.
pub trait Differentiable {
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    fn predict(&self, window: &[f64]) -> Result<f64>;
    /// Prediction and its gradient with respect to [`Self::params`].
    fn predict_with_grad(&self, window: &[f64]) -> Result<(f64, Vec<f64>)>;
}

/// Adam with the usual bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(lr: f64, num_params: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub early_stopping: EarlyStopping,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainSummary {
    /// Validation MSE after each epoch.
    pub trace: Vec<f64>,
    pub best_epoch: Option<usize>,
}

/// Size of the early-stopping slice taken from the end of `len` windows.
pub fn validation_len(len: usize) -> usize {
    if len < 2 {
        0
    } else {
        (len / 10).max(1)
    }
}

fn mse_of<M: Differentiable>(model: &M, windows: &[Vec<f64>], targets: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (w, y) in windows.iter().zip(targets) {
        total += (model.predict(w)? - y).powi(2);
    }
    Ok(total / windows.len() as f64)
}

/// Minimizes MSE with Adam on mini-batches. The last tenth of the windows is
/// held out for early stopping and the best-epoch parameters are restored.
pub fn train_supervised<M: Differentiable>(
    model: &mut M,
    windows: &[Vec<f64>],
    targets: &[f64],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainSummary> {
    if windows.is_empty() || windows.len() != targets.len() {
        return usage(format!(
            "training needs matching non-empty windows and targets, got {} and {}",
            windows.len(),
            targets.len()
        ));
    }
    cfg.early_stopping.validate()?;
    let n_val = validation_len(windows.len());
    let n_fit = windows.len() - n_val;
    let (fit_x, fit_y) = (&windows[..n_fit], &targets[..n_fit]);
    let (val_x, val_y) = if n_val == 0 {
        (fit_x, fit_y)
    } else {
        (&windows[n_fit..], &targets[n_fit..])
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adam = Adam::new(cfg.lr, model.params().len());
    let mut order: Vec<usize> = (0..n_fit).collect();
    let mut summary = TrainSummary::default();
    let mut best_params = model.params().to_vec();
    let batch = cfg.batch_size.max(1);
    let mut grad = vec![0.0; model.params().len()];

    for epoch in 0..cfg.early_stopping.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 2.0 / chunk.len() as f64;
            for &i in chunk {
                let (pred, dp) = model.predict_with_grad(&fit_x[i])?;
                let r = scale * (pred - fit_y[i]);
                for (g, d) in grad.iter_mut().zip(&dp) {
                    *g += r * d;
                }
            }
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged(format!(
                    "non-finite gradient in epoch {epoch}"
                )));
            }
            adam.step(model.params_mut(), &grad);
        }
        let loss = mse_of(model, val_x, val_y)?;
        if !loss.is_finite() {
            return Err(Error::Diverged(format!(
                "validation loss is {loss} in epoch {epoch}"
            )));
        }
        summary.trace.push(loss);
        let decision = cfg.early_stopping.check(&summary.trace);
        if decision.best_epoch == Some(epoch) {
            best_params.copy_from_slice(model.params());
        }
        summary.best_epoch = decision.best_epoch;
        if decision.stop_at.is_some() {
            break;
        }
    }
    model.params_mut().copy_from_slice(&best_params);
    Ok(summary)
}

/// Worst relative disagreement between an analytic gradient and central
/// finite differences with step `eps`; the denominator is floored at `floor`.
pub fn gradient_check<M: Differentiable>(
    model: &mut M,
    window: &[f64],
    eps: f64,
    floor: f64,
) -> Result<f64> {
    let (_, analytic) = model.predict_with_grad(window)?;
    let mut worst: f64 = 0.0;
    for j in 0..analytic.len() {
        let orig = model.params()[j];
        model.params_mut()[j] = orig + eps;
        let up = model.predict(window)?;
        model.params_mut()[j] = orig - eps;
        let down = model.predict(window)?;
        model.params_mut()[j] = orig;
        let fd = (up - down) / (2.0 * eps);
        let denom = analytic[j].abs().max(fd.abs()).max(floor);
        worst = worst.max((analytic[j] - fd).abs() / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Linear {
        w: [f64; 1],
    }

    impl Differentiable for Linear {
        fn params(&self) -> &[f64] {
            &self.w
        }
        fn params_mut(&mut self) -> &mut [f64] {
            &mut self.w
        }
        fn predict(&self, window: &[f64]) -> Result<f64> {
            Ok(self.w[0] * window[0])
        }
        fn predict_with_grad(&self, window: &[f64]) -> Result<(f64, Vec<f64>)> {
            Ok((self.w[0] * window[0], vec![window[0]]))
        }
    }

    fn line_data() -> (Vec<Vec<f64>>, Vec<f64>) {
        let xs: Vec<f64> = (0..100).map(|i| i as f64 / 50.0 - 1.0).collect();
        (
            xs.iter().map(|&x| vec![x]).collect(),
            xs.iter().map(|x| 2.0 * x).collect(),
        )
    }

    #[test]
    fn linear_stub_matches_least_squares() {
        let (x, y) = line_data();
        // Closed form: w = Σxy / Σx².
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a[0] * b).sum();
        let sxx: f64 = x.iter().map(|a| a[0] * a[0]).sum();
        let oracle = sxy / sxx;
        let mut m = Linear { w: [0.0] };
        let cfg = TrainConfig {
            lr: 0.05,
            batch_size: 10,
            early_stopping: EarlyStopping {
                patience: 20,
                min_delta: 0.0,
                max_epochs: 400,
            },
        };
        let s = train_supervised(&mut m, &x, &y, &cfg, 1).unwrap();
        assert!((m.w[0] - oracle).abs() < 1e-3, "w = {}", m.w[0]);
        assert!((oracle - 2.0).abs() < 1e-12);
        assert!(!s.trace.is_empty());
    }

    #[test]
    fn zero_epochs_keeps_initial_parameters() {
        let (x, y) = line_data();
        let mut m = Linear { w: [0.3] };
        let cfg = TrainConfig {
            lr: 0.1,
            batch_size: 8,
            early_stopping: EarlyStopping {
                max_epochs: 0,
                ..Default::default()
            },
        };
        let s = train_supervised(&mut m, &x, &y, &cfg, 1).unwrap();
        assert_eq!(m.w[0], 0.3);
        assert!(s.trace.is_empty());
    }

    #[test]
    fn restores_best_epoch() {
        let (x, y) = line_data();
        let mut m = Linear { w: [0.0] };
        // A huge step size makes the loss oscillate; the restored weights must
        // reproduce the minimum recorded validation loss.
        let cfg = TrainConfig {
            lr: 3.0,
            batch_size: 90,
            early_stopping: EarlyStopping {
                patience: 5,
                min_delta: 0.0,
                max_epochs: 30,
            },
        };
        let s = train_supervised(&mut m, &x, &y, &cfg, 4).unwrap();
        let best = s.trace.iter().copied().fold(f64::INFINITY, f64::min);
        let now = mse_of(&m, &x[90..], &y[90..]).unwrap();
        assert!((now - best).abs() < 1e-12);
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let mut m = Linear { w: [0.0] };
        let cfg = TrainConfig {
            lr: 0.1,
            batch_size: 1,
            early_stopping: EarlyStopping::default(),
        };
        assert!(train_supervised(&mut m, &[vec![1.0]], &[], &cfg, 0).is_err());
    }
}
