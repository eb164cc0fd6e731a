//! Classical LSTM forecaster trained by backpropagation through time.
//!
//! Gate pre-activations are `W_g·[h_{t−1}; x_t] + b_g` for the gates in the
//! order input, forget, output, candidate. The window is fed one value per
//! step and the final hidden state goes through a linear head.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::train::Differentiable;
use crate::error::{config, usage, Result};

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

const GATES: usize = 4;
const INPUT: usize = 0;
const FORGET: usize = 1;
const OUTPUT: usize = 2;
const CANDIDATE: usize = 3;

/// One cell's weights: `weights` is `4h × (h + input)` row-major (gate-major
/// blocks of `h` rows), `biases` is `4h`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellParams {
    pub hidden: usize,
    pub input: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl LstmCellParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        Self {
            hidden,
            input,
            weights: vec![0.0; GATES * hidden * (hidden + input)],
            biases: vec![0.0; GATES * hidden],
        }
    }

    fn check(&self) -> Result<()> {
        let h = self.hidden;
        if self.weights.len() != GATES * h * (h + self.input) || self.biases.len() != GATES * h {
            return usage("LSTM cell weight shapes do not match hidden/input sizes");
        }
        Ok(())
    }

    /// One step: returns `(h_t, c_t)`.
    pub fn step(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check()?;
        if x.len() != self.input || h_prev.len() != self.hidden || c_prev.len() != self.hidden {
            return usage(format!(
                "LSTM step expects input {} and state {}, got {}, {}, {}",
                self.input,
                self.hidden,
                x.len(),
                h_prev.len(),
                c_prev.len()
            ));
        }
        let cache = cell_forward(&self.weights, &self.biases, self.hidden, x, h_prev, c_prev);
        Ok((cache.h, cache.c))
    }
}

pub fn lstm_cell_step(
    params: &LstmCellParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    params.step(x, h_prev, c_prev)
}

/// Everything the backward pass needs from one step.
struct StepCache {
    z: Vec<f64>,
    /// Activated gates, `GATES × h`.
    gates: Vec<f64>,
    c_prev: Vec<f64>,
    c: Vec<f64>,
    h: Vec<f64>,
}

fn cell_forward(
    w: &[f64],
    b: &[f64],
    h: usize,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> StepCache {
    let width = h + x.len();
    let z: Vec<f64> = h_prev.iter().chain(x).copied().collect();
    let mut gates = vec![0.0; GATES * h];
    for (r, g) in gates.iter_mut().enumerate() {
        let row = &w[r * width..(r + 1) * width];
        let a = b[r] + row.iter().zip(&z).map(|(wi, zi)| wi * zi).sum::<f64>();
        *g = if r / h == CANDIDATE {
            a.tanh()
        } else {
            sigmoid(a)
        };
    }
    let mut c = vec![0.0; h];
    let mut hn = vec![0.0; h];
    for k in 0..h {
        let (i, f, o, g) = (
            gates[INPUT * h + k],
            gates[FORGET * h + k],
            gates[OUTPUT * h + k],
            gates[CANDIDATE * h + k],
        );
        c[k] = f * c_prev[k] + i * g;
        hn[k] = o * c[k].tanh();
    }
    StepCache {
        z,
        gates,
        c_prev: c_prev.to_vec(),
        c,
        h: hn,
    }
}

/// Single-layer LSTM over a scalar window with a linear output head.
/// Parameters: cell weights, cell biases, head weights, head bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmNet {
    hidden: usize,
    params: Vec<f64>,
}

impl LstmNet {
    pub fn new(hidden: usize, seed: u64) -> Result<Self> {
        if hidden == 0 {
            return config("LSTM hidden size must be at least 1");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut net = Self {
            hidden,
            params: (0..Self::param_count(hidden))
                .map(|_| rng.gen_range(-bound..bound))
                .collect(),
        };
        // Forget bias starts at 1 so early gradients see the carried state.
        let (_, b, _, _) = net.layout();
        for k in 0..hidden {
            net.params[b.start + FORGET * hidden + k] = 1.0;
        }
        Ok(net)
    }

    pub fn param_count(hidden: usize) -> usize {
        GATES * hidden * (hidden + 1) + GATES * hidden + hidden + 1
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    fn layout(
        &self,
    ) -> (
        std::ops::Range<usize>,
        std::ops::Range<usize>,
        std::ops::Range<usize>,
        usize,
    ) {
        let h = self.hidden;
        let w_end = GATES * h * (h + 1);
        let b_end = w_end + GATES * h;
        (0..w_end, w_end..b_end, b_end..b_end + h, b_end + h)
    }

    pub fn cell(&self) -> LstmCellParams {
        let (w, b, _, _) = self.layout();
        LstmCellParams {
            hidden: self.hidden,
            input: 1,
            weights: self.params[w].to_vec(),
            biases: self.params[b].to_vec(),
        }
    }

    fn run(&self, window: &[f64]) -> (f64, Vec<StepCache>) {
        let (w, b, head, bias) = self.layout();
        let h = self.hidden;
        let mut caches: Vec<StepCache> = Vec::with_capacity(window.len());
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        for &x in window {
            let cache = cell_forward(
                &self.params[w.clone()],
                &self.params[b.clone()],
                h,
                &[x],
                &h_prev,
                &c_prev,
            );
            h_prev.clone_from(&cache.h);
            c_prev.clone_from(&cache.c);
            caches.push(cache);
        }
        let y = self.params[bias]
            + self.params[head]
                .iter()
                .zip(&h_prev)
                .map(|(a, b)| a * b)
                .sum::<f64>();
        (y, caches)
    }
}

impl Differentiable for LstmNet {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn predict(&self, window: &[f64]) -> Result<f64> {
        Ok(self.run(window).0)
    }

    fn predict_with_grad(&self, window: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (y, caches) = self.run(window);
        let (w, b, head, bias) = self.layout();
        let h = self.hidden;
        let width = h + 1;
        let mut grad = vec![0.0; self.params.len()];
        grad[bias] = 1.0;
        let last_h = caches
            .last()
            .map(|c| c.h.clone())
            .unwrap_or_else(|| vec![0.0; h]);
        grad[head.clone()].copy_from_slice(&last_h);

        let mut dh: Vec<f64> = self.params[head].to_vec();
        let mut dc = vec![0.0; h];
        let mut da = vec![0.0; GATES * h];
        for cache in caches.iter().rev() {
            for k in 0..h {
                let (i, f, o, g) = (
                    cache.gates[INPUT * h + k],
                    cache.gates[FORGET * h + k],
                    cache.gates[OUTPUT * h + k],
                    cache.gates[CANDIDATE * h + k],
                );
                let tc = cache.c[k].tanh();
                let d_o = dh[k] * tc;
                let dck = dc[k] + dh[k] * o * (1.0 - tc * tc);
                da[INPUT * h + k] = dck * g * i * (1.0 - i);
                da[FORGET * h + k] = dck * cache.c_prev[k] * f * (1.0 - f);
                da[OUTPUT * h + k] = d_o * o * (1.0 - o);
                da[CANDIDATE * h + k] = dck * i * (1.0 - g * g);
                dc[k] = dck * f;
            }
            let mut dz = vec![0.0; width];
            for (r, &dar) in da.iter().enumerate() {
                grad[b.start + r] += dar;
                let row = w.start + r * width;
                for j in 0..width {
                    grad[row + j] += dar * cache.z[j];
                    dz[j] += dar * self.params[row + j];
                }
            }
            dh.copy_from_slice(&dz[..h]);
        }
        Ok((y, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::train::gradient_check;

    #[test]
    fn zero_cell_halves_carried_state() {
        let p = LstmCellParams::zeros(1, 1);
        let (h, c) = lstm_cell_step(&p, &[0.3], &[0.0], &[1.0]).unwrap();
        assert!((c[0] - 0.5).abs() < 1e-15);
        assert!((h[0] - 0.5 * 0.5f64.tanh()).abs() < 1e-15);
    }

    #[test]
    fn zero_inputs_zero_biases_give_zero_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = LstmCellParams::zeros(3, 1);
        p.weights
            .iter_mut()
            .for_each(|w| *w = rng.gen_range(-2.0..2.0));
        let (h, c) = p.step(&[0.0], &[0.0; 3], &[0.0; 3]).unwrap();
        assert_eq!(h, vec![0.0; 3]);
        assert_eq!(c, vec![0.0; 3]);
    }

    #[test]
    fn shape_mismatch_is_usage_error() {
        let p = LstmCellParams::zeros(2, 1);
        assert!(p.step(&[0.0], &[0.0], &[0.0, 0.0]).is_err());
        let bad = LstmCellParams {
            biases: vec![0.0; 3],
            ..LstmCellParams::zeros(2, 1)
        };
        assert!(bad.step(&[0.0], &[0.0; 2], &[0.0; 2]).is_err());
    }

    #[test]
    fn net_cell_matches_step_function() {
        let net = LstmNet::new(3, 5).unwrap();
        let cell = net.cell();
        let (h1, c1) = cell.step(&[0.2], &[0.0; 3], &[0.0; 3]).unwrap();
        let (h2, _) = cell.step(&[0.7], &h1, &c1).unwrap();
        let (_, _, head, bias) = net.layout();
        let want = net.params[bias]
            + net.params[head]
                .iter()
                .zip(&h2)
                .map(|(a, b)| a * b)
                .sum::<f64>();
        assert!((net.predict(&[0.2, 0.7]).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn bptt_matches_finite_differences() {
        for seed in 0..10 {
            let mut net = LstmNet::new(1 + (seed as usize % 4), seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let window: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..1.0)).collect();
            let err = gradient_check(&mut net, &window, 1e-5, 1e-3).unwrap();
            assert!(err < 1e-5, "seed {seed}: {err}");
        }
    }
}
