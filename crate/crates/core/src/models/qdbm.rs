//! Boltzmann-machine-style regressor whose hidden layer is found by annealing.
//!
//! For a window `v` the hidden QUBO has diagonal `Σ_i v_i·W_vh[i][j]` and
//! couplings `W_hh[j][k]`. Each hidden value is the mean of its bit over the
//! annealer reads and the forecast is `w_out·h + b_out`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::train::validation_len;
use super::TrainSummary;
use crate::anneal::{simulated_annealing, AnnealSchedule, Qubo};
use crate::error::{usage, Error, Result};
use crate::pipeline::EarlyStopping;

#[derive(Debug, Clone, PartialEq)]
pub struct QdbmWeights {
    pub n_visible: usize,
    pub n_hidden: usize,
    /// Row-major `n_visible × n_hidden`.
    pub w_vh: Vec<f64>,
    /// Row-major `n_hidden × n_hidden`, symmetric with zero diagonal.
    pub w_hh: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: f64,
}

impl QdbmWeights {
    pub fn zeros(n_visible: usize, n_hidden: usize) -> Self {
        Self {
            n_visible,
            n_hidden,
            w_vh: vec![0.0; n_visible * n_hidden],
            w_hh: vec![0.0; n_hidden * n_hidden],
            w_out: vec![0.0; n_hidden],
            b_out: 0.0,
        }
    }

    /// Entries uniform in `[−0.5, 0.5)`, output bias 0.5.
    pub fn random(n_visible: usize, n_hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = Self::zeros(n_visible, n_hidden);
        w.w_vh
            .iter_mut()
            .for_each(|x| *x = rng.gen_range(-0.5..0.5));
        for j in 0..n_hidden {
            for k in j + 1..n_hidden {
                let v = rng.gen_range(-0.5..0.5);
                w.w_hh[j * n_hidden + k] = v;
                w.w_hh[k * n_hidden + j] = v;
            }
        }
        w.w_out
            .iter_mut()
            .for_each(|x| *x = rng.gen_range(-0.5..0.5));
        w.b_out = 0.5;
        w
    }

    pub fn vh(&self, i: usize, j: usize) -> f64 {
        self.w_vh[i * self.n_hidden + j]
    }

    pub fn hh(&self, j: usize, k: usize) -> f64 {
        self.w_hh[j * self.n_hidden + k]
    }

    pub fn is_finite(&self) -> bool {
        self.w_vh
            .iter()
            .chain(&self.w_hh)
            .chain(&self.w_out)
            .all(|x| x.is_finite())
            && self.b_out.is_finite()
    }

    fn check_window(&self, window: &[f64]) -> Result<()> {
        if window.len() != self.n_visible {
            return usage(format!(
                "QDBM expects {} visible inputs, got {}",
                self.n_visible,
                window.len()
            ));
        }
        Ok(())
    }

    /// The hidden-layer QUBO for `window`.
    pub fn build_qubo(&self, window: &[f64]) -> Result<Qubo> {
        self.check_window(window)?;
        let nh = self.n_hidden;
        let mut q = Qubo::zeros(nh);
        for j in 0..nh {
            q.set_linear(
                j,
                window
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v * self.vh(i, j))
                    .sum(),
            );
            for k in j + 1..nh {
                q.set_coupling(j, k, self.hh(j, k));
            }
        }
        Ok(q)
    }
}

/// Anneals the hidden layer and returns `(prediction, h)`.
pub fn qdbm_forward(
    weights: &QdbmWeights,
    window: &[f64],
    schedule: &AnnealSchedule,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    if !weights.is_finite() {
        return Err(Error::Diverged("QDBM weights are not finite".into()));
    }
    let qubo = weights.build_qubo(window)?;
    let samples = simulated_annealing(&qubo, schedule, seed)?;
    let reads = samples.len() as f64;
    let mut h = vec![0.0; weights.n_hidden];
    for s in &samples {
        for (hj, &b) in h.iter_mut().zip(&s.bits) {
            *hj += b as f64;
        }
    }
    h.iter_mut().for_each(|x| *x /= reads);
    let pred = weights.b_out
        + weights
            .w_out
            .iter()
            .zip(&h)
            .map(|(a, b)| a * b)
            .sum::<f64>();
    Ok((pred, h))
}

/// One delta-rule step with `δ = target − prediction`.
///
/// The output layer moves by `lr·δ·h` and `lr·δ`. The hidden-layer credit
/// `lr·δ·w_out[j]·window_i·h_j` (and the symmetric coupling analogue) is
/// applied with a negative sign: the annealer minimizes energy, so a larger
/// diagonal entry switches the unit off rather than on.
pub fn qdbm_update(
    weights: &QdbmWeights,
    window: &[f64],
    h: &[f64],
    target: f64,
    prediction: f64,
    lr: f64,
) -> Result<QdbmWeights> {
    weights.check_window(window)?;
    let nh = weights.n_hidden;
    if h.len() != nh {
        return usage(format!("QDBM expects {nh} hidden values, got {}", h.len()));
    }
    let delta = target - prediction;
    let step = lr * delta;
    let mut next = weights.clone();
    for i in 0..weights.n_visible {
        for j in 0..nh {
            next.w_vh[i * nh + j] -= step * weights.w_out[j] * window[i] * h[j];
        }
    }
    for j in 0..nh {
        for k in j + 1..nh {
            let d = step * 0.5 * (weights.w_out[j] + weights.w_out[k]) * h[j] * h[k];
            next.w_hh[j * nh + k] -= d;
            next.w_hh[k * nh + j] -= d;
        }
        next.w_out[j] += step * h[j];
    }
    next.b_out += step;
    if !next.is_finite() {
        return Err(Error::Diverged(format!(
            "QDBM update produced non-finite weights (δ = {delta})"
        )));
    }
    Ok(next)
}

/// Seed for annealing a given window: the model seed mixed with the bit
/// pattern of the inputs, so identical windows anneal identically.
fn window_seed(seed: u64, window: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in window {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    seed ^ h
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QdbmConfig {
    pub n_hidden: usize,
    pub lr: f64,
    pub schedule: AnnealSchedule,
    pub early_stopping: EarlyStopping,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QdbmModel {
    weights: QdbmWeights,
    schedule: AnnealSchedule,
    seed: u64,
}

impl QdbmModel {
    pub fn new(weights: QdbmWeights, schedule: AnnealSchedule, seed: u64) -> Self {
        Self {
            weights,
            schedule,
            seed,
        }
    }

    pub fn weights(&self) -> &QdbmWeights {
        &self.weights
    }

    pub fn predict(&self, window: &[f64]) -> Result<f64> {
        Ok(qdbm_forward(
            &self.weights,
            window,
            &self.schedule,
            window_seed(self.seed, window),
        )?
        .0)
    }

    /// Online training: one delta-rule update per window, in order, per
    /// epoch. The last tenth of the windows scores each epoch for early
    /// stopping and the best-epoch weights are kept.
    pub fn fit(
        windows: &[Vec<f64>],
        targets: &[f64],
        cfg: &QdbmConfig,
        seed: u64,
    ) -> Result<(Self, TrainSummary)> {
        if windows.is_empty() || windows.len() != targets.len() {
            return usage(format!(
                "training needs matching non-empty windows and targets, got {} and {}",
                windows.len(),
                targets.len()
            ));
        }
        cfg.schedule.validate()?;
        cfg.early_stopping.validate()?;
        let n_visible = windows[0].len();
        let mut model = Self::new(
            QdbmWeights::random(n_visible, cfg.n_hidden, seed),
            cfg.schedule,
            seed,
        );
        let n_val = validation_len(windows.len());
        let n_fit = windows.len() - n_val;
        let val = if n_val == 0 {
            0..n_fit
        } else {
            n_fit..windows.len()
        };

        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut summary = TrainSummary::default();
        let mut best = model.weights.clone();
        for epoch in 0..cfg.early_stopping.max_epochs {
            for t in 0..n_fit {
                let (pred, h) =
                    qdbm_forward(&model.weights, &windows[t], &cfg.schedule, rng.gen())?;
                model.weights =
                    qdbm_update(&model.weights, &windows[t], &h, targets[t], pred, cfg.lr)?;
            }
            let mut loss = 0.0;
            for t in val.clone() {
                loss += (model.predict(&windows[t])? - targets[t]).powi(2);
            }
            loss /= val.len() as f64;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "validation loss is {loss} in epoch {epoch}"
                )));
            }
            summary.trace.push(loss);
            let decision = cfg.early_stopping.check(&summary.trace);
            if decision.best_epoch == Some(epoch) {
                best.clone_from(&model.weights);
            }
            summary.best_epoch = decision.best_epoch;
            if decision.stop_at.is_some() {
                break;
            }
        }
        model.weights = best;
        Ok((model, summary))
    }
}
