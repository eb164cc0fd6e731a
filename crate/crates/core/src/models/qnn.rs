//! Variational circuit regressors.
//!
//! Both variants angle-encode the window (`π·x_i` on qubit `i`) and map the
//! readout `⟨Z⟩ ∈ [−1, 1]` onto the normalized range as `(1 + ⟨Z⟩)/2`.
//!
//! The CNOT-chain variant reads out the last qubit of the chain. Under
//! `CNOT(i, i+1)` a `Z` on qubit 0 only ever back-propagates into `X` strings
//! on the other qubits, whose expectation on an RX-encoded product state is
//! zero, so a qubit-0 readout could only see `x_0`. The final qubit collects
//! the parity of the whole register instead.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::train::Differentiable;
use crate::error::{config, Result};
use crate::qsim::{run_circuit, shift_jacobian, Circuit, Gate, GateKind, Observable};

/// Angle applied per unit of normalized input.
pub const ENCODING_SCALE: f64 = PI;

/// Encoding `RX(π·x_i)` on qubit `i`, then `layers` × (RX(θ) on every qubit,
/// then `CNOT(i, i+1)` for `i = 0..n−2`).
pub fn qnn_build_circuit(n_qubits: usize, n_layers: usize) -> Result<Circuit> {
    let mut c = Circuit::new(n_qubits)?;
    for q in 0..n_qubits {
        c.data(GateKind::Rx, &[q], q, ENCODING_SCALE)?;
    }
    for layer in 0..n_layers {
        for q in 0..n_qubits {
            c.param(GateKind::Rx, &[q], layer * n_qubits + q)?;
        }
        for q in 0..n_qubits.saturating_sub(1) {
            c.fixed(Gate::cnot(q, q + 1))?;
        }
    }
    Ok(c)
}

/// Qubit pairs of the entangling ring; two qubits form a single pair.
pub fn ring_pairs(n: usize) -> Vec<(usize, usize)> {
    match n {
        0 | 1 => Vec::new(),
        2 => vec![(0, 1)],
        _ => (0..n).map(|i| (i, (i + 1) % n)).collect(),
    }
}

/// Encoding `RX, RY, RZ(π·x_i)` on qubit `i`, then `layers` × (IsingXX,
/// IsingYY, IsingZZ on each ring pair, every gate with its own parameter).
pub fn qnn_ising_build_circuit(n_qubits: usize, n_layers: usize) -> Result<Circuit> {
    if n_qubits < 2 {
        return config("the Ising-gate network needs at least two qubits");
    }
    let mut c = Circuit::new(n_qubits)?;
    for q in 0..n_qubits {
        for kind in [GateKind::Rx, GateKind::Ry, GateKind::Rz] {
            c.data(kind, &[q], q, ENCODING_SCALE)?;
        }
    }
    let mut idx = 0;
    for _ in 0..n_layers {
        for (a, b) in ring_pairs(n_qubits) {
            for kind in [GateKind::IsingXX, GateKind::IsingYY, GateKind::IsingZZ] {
                c.param(kind, &[a, b], idx)?;
                idx += 1;
            }
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QnnVariant {
    CnotChain,
    Ising,
}

/// A circuit whose rescaled `⟨Z⟩` readout is the forecast.
#[derive(Debug, Clone, PartialEq)]
pub struct QnnModel {
    variant: QnnVariant,
    circuit: Circuit,
    readout: Observable,
    params: Vec<f64>,
}

impl QnnModel {
    pub fn new(variant: QnnVariant, n_qubits: usize, n_layers: usize, seed: u64) -> Result<Self> {
        let (circuit, readout) = match variant {
            QnnVariant::CnotChain => (
                qnn_build_circuit(n_qubits, n_layers)?,
                Observable::z(n_qubits - 1),
            ),
            QnnVariant::Ising => (
                qnn_ising_build_circuit(n_qubits, n_layers)?,
                Observable::z(0),
            ),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = (0..circuit.num_params())
            .map(|_| rng.gen_range(-PI..PI))
            .collect();
        Ok(Self {
            variant,
            circuit,
            readout,
            params,
        })
    }

    pub fn variant(&self) -> QnnVariant {
        self.variant
    }

    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    pub fn set_params(&mut self, params: &[f64]) {
        self.params.copy_from_slice(params);
    }
}

impl Differentiable for QnnModel {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn predict(&self, window: &[f64]) -> Result<f64> {
        let z = run_circuit(&self.circuit, &self.params, window, &self.readout)?;
        Ok(0.5 * (1.0 + z))
    }

    fn predict_with_grad(&self, window: &[f64]) -> Result<(f64, Vec<f64>)> {
        let jac = shift_jacobian(
            &self.circuit,
            &self.params,
            window,
            std::slice::from_ref(&self.readout),
        )?;
        let grad = jac.params[0].iter().map(|g| 0.5 * g).collect();
        Ok((0.5 * (1.0 + jac.values[0]), grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::train::gradient_check;
    use crate::qsim::Role;

    fn counts(c: &Circuit) -> (usize, usize, usize) {
        let data = c.count_role(|r| matches!(r, Role::Data { .. }));
        let params = c.count_role(|r| matches!(r, Role::Param(_)));
        let cnots = c
            .slots()
            .iter()
            .filter(|(g, _)| g.kind == GateKind::Cnot)
            .count();
        (data, params, cnots)
    }

    #[test]
    fn chain_structure_counts() {
        assert_eq!(counts(&qnn_build_circuit(2, 1).unwrap()), (2, 2, 1));
        let c = qnn_build_circuit(4, 3).unwrap();
        assert_eq!(counts(&c).1, 12);
        assert_eq!(c.num_params(), 12);
        for n in [2, 4, 8] {
            for layers in [1, 2, 4] {
                let c = qnn_build_circuit(n, layers).unwrap();
                assert_eq!(c.num_params(), n * layers);
                assert_eq!(counts(&c), (n, n * layers, (n - 1) * layers));
            }
        }
    }

    #[test]
    fn ising_structure_counts() {
        assert_eq!(counts(&qnn_ising_build_circuit(2, 1).unwrap()), (6, 3, 0));
        assert_eq!(qnn_ising_build_circuit(3, 2).unwrap().num_params(), 18);
        for n in [3, 4, 8] {
            for layers in [1, 2, 4] {
                assert_eq!(
                    qnn_ising_build_circuit(n, layers).unwrap().num_params(),
                    3 * n * layers
                );
            }
        }
        assert!(qnn_ising_build_circuit(1, 1).is_err());
    }

    #[test]
    fn identity_circuit_predicts_one() {
        for variant in [QnnVariant::CnotChain, QnnVariant::Ising] {
            let mut m = QnnModel::new(variant, 3, 2, 0).unwrap();
            let zeros = vec![0.0; m.params.len()];
            m.set_params(&zeros);
            assert!((m.predict(&[0.0; 3]).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn chain_readout_sees_every_input() {
        // One layer maps the readout onto the parity of the whole register.
        // Deeper stacks narrow it again (four layers on four qubits see only
        // the newest value), which the grid search weighs.
        let m = QnnModel::new(QnnVariant::CnotChain, 4, 1, 3).unwrap();
        let base = [0.2, 0.4, 0.6, 0.8];
        let y0 = m.predict(&base).unwrap();
        for i in 0..4 {
            let mut w = base;
            w[i] += 0.1;
            assert!(
                (m.predict(&w).unwrap() - y0).abs() > 1e-6,
                "input {i} has no effect"
            );
        }
    }

    #[test]
    fn chain_readout_always_sees_newest_value() {
        for layers in [1, 2, 3, 4] {
            let m = QnnModel::new(QnnVariant::CnotChain, 4, layers, 8).unwrap();
            let y0 = m.predict(&[0.2, 0.4, 0.6, 0.8]).unwrap();
            let y1 = m.predict(&[0.2, 0.4, 0.6, 0.9]).unwrap();
            assert!((y1 - y0).abs() > 1e-6, "layers {layers}");
        }
    }

    #[test]
    fn shift_gradients_match_finite_differences() {
        for seed in 0..6 {
            for variant in [QnnVariant::CnotChain, QnnVariant::Ising] {
                let mut m =
                    QnnModel::new(variant, 2 + seed as usize % 3, 1 + seed as usize % 2, seed)
                        .unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed + 40);
                let w: Vec<f64> = (0..m.circuit.num_qubits())
                    .map(|_| rng.gen_range(0.0..1.0))
                    .collect();
                let err = gradient_check(&mut m, &w, 1e-5, 1e-3).unwrap();
                assert!(err < 1e-5, "{variant:?} seed {seed}: {err}");
            }
        }
    }
}
