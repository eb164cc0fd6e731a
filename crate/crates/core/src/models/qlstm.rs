//! LSTM whose four gate maps are variational circuits.
//!
//! Each gate circuit encodes `[x_t; h_{t−1}]` as `RX(π·v_k)` on qubit
//! `k mod qubits`, applies `layers` × (RX(θ) on every qubit, CNOT chain) and
//! reads `⟨Z⟩` on the last `hidden` qubits. Down a CNOT chain a readout only
//! sees qubits at or before it, so the input goes on qubit 0.
//!
//! A trainable per-unit scale multiplies each readout before the gate
//! nonlinearity. A linear head maps the final hidden state to the forecast.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::lstm::sigmoid;
use super::train::Differentiable;
use crate::error::{config, usage, Result};
use crate::qsim::{
    run_circuit_multi, shift_jacobian, Circuit, Gate, GateKind, Observable, ShiftJacobian,
};

const GATES: usize = 4;
const FORGET: usize = 0;
const INPUT: usize = 1;
const CANDIDATE: usize = 2;
const OUTPUT: usize = 3;

/// The shared circuit shape of the four gate maps.
#[derive(Debug, Clone, PartialEq)]
pub struct QlstmCell {
    hidden: usize,
    circuit: Circuit,
    readouts: Vec<Observable>,
}

impl QlstmCell {
    pub fn new(hidden: usize, qubits: usize, layers: usize) -> Result<Self> {
        if hidden == 0 {
            return config("QLSTM hidden size must be at least 1");
        }
        if hidden > qubits {
            return config(format!(
                "QLSTM hidden size {hidden} exceeds the {qubits} qubits of each gate circuit"
            ));
        }
        let mut c = Circuit::new(qubits)?;
        for k in 0..hidden + 1 {
            c.data(GateKind::Rx, &[k % qubits], k, PI)?;
        }
        for layer in 0..layers {
            for q in 0..qubits {
                c.param(GateKind::Rx, &[q], layer * qubits + q)?;
            }
            for q in 0..qubits - 1 {
                c.fixed(Gate::cnot(q, q + 1))?;
            }
        }
        let readouts = (qubits - hidden..qubits).map(Observable::z).collect();
        Ok(Self {
            hidden,
            circuit: c,
            readouts,
        })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    /// Trainable angles per gate circuit.
    pub fn angles_per_gate(&self) -> usize {
        self.circuit.num_params()
    }

    fn encode(x: f64, h_prev: &[f64]) -> Vec<f64> {
        let mut v = Vec::with_capacity(h_prev.len() + 1);
        v.push(x);
        v.extend_from_slice(h_prev);
        v
    }

    /// One step. `angles` holds the forget, input, candidate and output
    /// circuit parameters back to back; `scales` holds `4·hidden` readout
    /// multipliers in the same gate order.
    pub fn step(
        &self,
        angles: &[f64],
        scales: &[f64],
        x: f64,
        h_prev: &[f64],
        c_prev: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check(angles, scales, h_prev, c_prev)?;
        let h = self.hidden;
        let p = self.angles_per_gate();
        let v = Self::encode(x, h_prev);
        let mut act = vec![0.0; GATES * h];
        for g in 0..GATES {
            let z = run_circuit_multi(
                &self.circuit,
                &angles[g * p..(g + 1) * p],
                &v,
                &self.readouts,
            )?;
            for k in 0..h {
                act[g * h + k] = activate(g, scales[g * h + k] * z[k]);
            }
        }
        let mut c = vec![0.0; h];
        let mut hn = vec![0.0; h];
        for k in 0..h {
            c[k] = act[FORGET * h + k] * c_prev[k] + act[INPUT * h + k] * act[CANDIDATE * h + k];
            hn[k] = act[OUTPUT * h + k] * c[k].tanh();
        }
        Ok((hn, c))
    }

    fn check(&self, angles: &[f64], scales: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<()> {
        let h = self.hidden;
        if angles.len() != GATES * self.angles_per_gate() || scales.len() != GATES * h {
            return usage(format!(
                "QLSTM cell expects {} angles and {} scales, got {} and {}",
                GATES * self.angles_per_gate(),
                GATES * h,
                angles.len(),
                scales.len()
            ));
        }
        if h_prev.len() != h || c_prev.len() != h {
            return usage(format!(
                "QLSTM state must have length {h}, got {} and {}",
                h_prev.len(),
                c_prev.len()
            ));
        }
        Ok(())
    }
}

fn activate(gate: usize, a: f64) -> f64 {
    if gate == CANDIDATE {
        a.tanh()
    } else {
        sigmoid(a)
    }
}

pub fn qlstm_cell_step(
    cell: &QlstmCell,
    angles: &[f64],
    scales: &[f64],
    x: f64,
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    cell.step(angles, scales, x, h_prev, c_prev)
}

struct StepCache {
    /// Circuit readouts per gate, `GATES × h`.
    z: Vec<f64>,
    act: Vec<f64>,
    jac: Vec<ShiftJacobian>,
    c_prev: Vec<f64>,
    c: Vec<f64>,
}

/// Recurrent forecaster over a scalar window. Parameters, in order: gate
/// circuit angles, readout scales, head weights, head bias.
#[derive(Debug, Clone, PartialEq)]
pub struct QlstmNet {
    cell: QlstmCell,
    params: Vec<f64>,
}

impl QlstmNet {
    /// Angles uniform in `[−π, π)`, scales 1, head uniform in `±1/√hidden`,
    /// bias 0.5.
    pub fn new(hidden: usize, qubits: usize, layers: usize, seed: u64) -> Result<Self> {
        let cell = QlstmCell::new(hidden, qubits, layers)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_angles = GATES * cell.angles_per_gate();
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut params: Vec<f64> = (0..n_angles).map(|_| rng.gen_range(-PI..PI)).collect();
        params.extend(std::iter::repeat(1.0).take(GATES * hidden));
        params.extend((0..hidden).map(|_| rng.gen_range(-bound..bound)));
        params.push(0.5);
        Ok(Self { cell, params })
    }

    pub fn cell(&self) -> &QlstmCell {
        &self.cell
    }

    fn split(&self) -> (&[f64], &[f64], &[f64], f64) {
        let a = GATES * self.cell.angles_per_gate();
        let s = a + GATES * self.cell.hidden;
        let hd = s + self.cell.hidden;
        (
            &self.params[..a],
            &self.params[a..s],
            &self.params[s..hd],
            self.params[hd],
        )
    }

    fn run(&self, window: &[f64], with_jac: bool) -> Result<(f64, Vec<f64>, Vec<StepCache>)> {
        let (angles, scales, head, bias) = self.split();
        let h = self.cell.hidden;
        let p = self.cell.angles_per_gate();
        let circuit = &self.cell.circuit;
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        let mut caches = Vec::new();
        for &x in window {
            let v = QlstmCell::encode(x, &h_prev);
            let mut z = vec![0.0; GATES * h];
            let mut jac = Vec::new();
            for g in 0..GATES {
                let theta = &angles[g * p..(g + 1) * p];
                let values = if with_jac {
                    let j = shift_jacobian(circuit, theta, &v, &self.cell.readouts)?;
                    let vals = j.values.clone();
                    jac.push(j);
                    vals
                } else {
                    run_circuit_multi(circuit, theta, &v, &self.cell.readouts)?
                };
                z[g * h..(g + 1) * h].copy_from_slice(&values);
            }
            let act: Vec<f64> = (0..GATES * h)
                .map(|r| activate(r / h, scales[r] * z[r]))
                .collect();
            let mut c = vec![0.0; h];
            for k in 0..h {
                c[k] =
                    act[FORGET * h + k] * c_prev[k] + act[INPUT * h + k] * act[CANDIDATE * h + k];
                h_prev[k] = act[OUTPUT * h + k] * c[k].tanh();
            }
            if with_jac {
                caches.push(StepCache {
                    z,
                    act,
                    jac,
                    c_prev: c_prev.clone(),
                    c: c.clone(),
                });
            }
            c_prev = c;
        }
        let y = bias + head.iter().zip(&h_prev).map(|(a, b)| a * b).sum::<f64>();
        Ok((y, h_prev, caches))
    }
}

impl Differentiable for QlstmNet {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn predict(&self, window: &[f64]) -> Result<f64> {
        Ok(self.run(window, false)?.0)
    }

    fn predict_with_grad(&self, window: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (y, last_h, caches) = self.run(window, true)?;
        let (_, scales, head, _) = self.split();
        let h = self.cell.hidden;
        let p = self.cell.angles_per_gate();
        let a_len = GATES * p;
        let s_start = a_len;
        let head_start = s_start + GATES * h;
        let mut grad = vec![0.0; self.params.len()];
        grad[head_start..head_start + h].copy_from_slice(&last_h);
        grad[head_start + h] = 1.0;

        let mut dh = head.to_vec();
        let mut dc = vec![0.0; h];
        let mut dz = vec![0.0; GATES * h];
        for cache in caches.iter().rev() {
            for k in 0..h {
                let f = cache.act[FORGET * h + k];
                let i = cache.act[INPUT * h + k];
                let g = cache.act[CANDIDATE * h + k];
                let o = cache.act[OUTPUT * h + k];
                let tc = cache.c[k].tanh();
                let dck = dc[k] + dh[k] * o * (1.0 - tc * tc);
                let da = [
                    dck * cache.c_prev[k] * f * (1.0 - f),
                    dck * g * i * (1.0 - i),
                    dck * i * (1.0 - g * g),
                    dh[k] * tc * o * (1.0 - o),
                ];
                for (gate, d) in da.into_iter().enumerate() {
                    let r = gate * h + k;
                    grad[s_start + r] += d * cache.z[r];
                    dz[r] = d * scales[r];
                }
                dc[k] = dck * f;
            }
            // Through the circuits: angles directly, h_{t−1} via data inputs 1..=h.
            let mut dv = vec![0.0; h + 1];
            for (gate, jac) in cache.jac.iter().enumerate() {
                for k in 0..h {
                    let d = dz[gate * h + k];
                    if d == 0.0 {
                        continue;
                    }
                    for (j, dp) in jac.params[k].iter().enumerate() {
                        grad[gate * p + j] += d * dp;
                    }
                    for (m, dd) in jac.data[k].iter().enumerate() {
                        dv[m] += d * dd;
                    }
                }
            }
            dh.copy_from_slice(&dv[1..]);
        }
        Ok((y, grad))
    }
}
