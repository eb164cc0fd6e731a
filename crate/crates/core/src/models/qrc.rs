//! Quantum reservoir with a ridge-regression readout.
//!
//! The reservoir is a fixed random circuit drawn once from the model seed.
//! Only the linear readout over its Z and ZZ expectations is fitted.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::qnn::{ring_pairs, ENCODING_SCALE};
use crate::error::{usage, Error, Result};
use crate::qsim::{run_circuit_multi, Circuit, Gate, GateKind, Observable};

/// Ridge strength used when the unregularized normal equations are singular.
pub const RIDGE_FALLBACK: f64 = 1e-8;

/// Encoding `RX(π·x_i)` on qubit `i mod qubits`, then `depth` layers of a
/// random fixed rotation per qubit followed by ring CNOTs.
pub fn qrc_build_reservoir(
    window_len: usize,
    qubits: usize,
    depth: usize,
    seed: u64,
) -> Result<Circuit> {
    let mut c = Circuit::new(qubits)?;
    for i in 0..window_len {
        c.data(GateKind::Rx, &[i % qubits], i, ENCODING_SCALE)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kinds = [GateKind::Rx, GateKind::Ry, GateKind::Rz];
    for _ in 0..depth {
        for q in 0..qubits {
            let kind = kinds[rng.gen_range(0..3)];
            c.fixed(Gate::single(kind, q, rng.gen_range(0.0..2.0 * PI)))?;
        }
        for (a, b) in ring_pairs(qubits) {
            c.fixed(Gate::cnot(a, b))?;
        }
    }
    Ok(c)
}

/// Readout observables: `Z_q` per qubit, then `Z_j Z_k` for `j < k` when
/// `correlators` is set.
pub fn qrc_observables(qubits: usize, correlators: bool) -> Vec<Observable> {
    let mut obs: Vec<Observable> = (0..qubits).map(Observable::z).collect();
    if correlators {
        for j in 0..qubits {
            for k in j + 1..qubits {
                obs.push(Observable::zz(j, k));
            }
        }
    }
    obs
}

/// Expectations of `observables` followed by a constant 1.
pub fn qrc_features_with(
    reservoir: &Circuit,
    observables: &[Observable],
    window: &[f64],
) -> Result<Vec<f64>> {
    let mut f = run_circuit_multi(reservoir, &[], window, observables)?;
    f.push(1.0);
    Ok(f)
}

/// Full feature vector: every `⟨Z⟩`, every `⟨ZZ⟩` and a bias.
pub fn qrc_features(reservoir: &Circuit, window: &[f64]) -> Result<Vec<f64>> {
    qrc_features_with(
        reservoir,
        &qrc_observables(reservoir.num_qubits(), true),
        window,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Readout {
    pub weights: Vec<f64>,
    /// The ridge strength actually used.
    pub lambda: f64,
    pub fell_back: bool,
}

/// Solves `(FᵀF + λI) w = Fᵀy` by Cholesky. At `λ = 0` a singular (or
/// numerically rank-deficient) system is retried with [`RIDGE_FALLBACK`].
pub fn qrc_fit_readout(features: &[Vec<f64>], targets: &[f64], lambda: f64) -> Result<Readout> {
    if features.is_empty() || features.len() != targets.len() {
        return usage(format!(
            "readout fit needs matching non-empty rows, got {} feature rows and {} targets",
            features.len(),
            targets.len()
        ));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return usage(format!(
            "ridge strength must be finite and non-negative, got {lambda}"
        ));
    }
    let cols = features[0].len();
    if features.iter().any(|r| r.len() != cols) {
        return usage("feature rows have different lengths");
    }
    if lambda == 0.0 && features.len() < cols {
        return usage(format!(
            "unregularized readout needs at least {cols} rows, got {}",
            features.len()
        ));
    }
    let f = DMatrix::from_fn(features.len(), cols, |r, c| features[r][c]);
    let y = DVector::from_column_slice(targets);
    let gram = f.transpose() * &f;
    let rhs = f.transpose() * y;

    let solve = |lam: f64| -> Option<DVector<f64>> {
        let a = &gram + DMatrix::identity(cols, cols) * lam;
        let chol = a.clone().cholesky()?;
        // Cholesky succeeds on matrices that are singular up to rounding; treat
        // a pivot far below the diagonal scale as singular.
        let scale = (0..cols).map(|i| a[(i, i)]).fold(0.0, f64::max);
        let l = chol.l();
        if (0..cols).any(|i| l[(i, i)] * l[(i, i)] <= 1e-13 * scale) {
            return None;
        }
        Some(chol.solve(&rhs))
    };
    let (w, used, fell_back) = match solve(lambda) {
        Some(w) => (w, lambda, false),
        None if lambda == 0.0 => match solve(RIDGE_FALLBACK) {
            Some(w) => (w, RIDGE_FALLBACK, true),
            None => {
                return Err(Error::Runtime(
                    "readout system is singular even with fallback ridge".into(),
                ))
            }
        },
        None => {
            return Err(Error::Runtime(format!(
                "readout system is singular at ridge {lambda}"
            )))
        }
    };
    Ok(Readout {
        weights: w.iter().copied().collect(),
        lambda: used,
        fell_back,
    })
}

/// A fitted reservoir forecaster.
#[derive(Debug, Clone, PartialEq)]
pub struct QrcModel {
    reservoir: Circuit,
    observables: Vec<Observable>,
    readout: Readout,
}

impl QrcModel {
    pub fn fit(
        windows: &[Vec<f64>],
        targets: &[f64],
        qubits: usize,
        depth: usize,
        lambda: f64,
        correlators: bool,
        seed: u64,
    ) -> Result<Self> {
        let n = windows.first().map_or(0, |w| w.len());
        let reservoir = qrc_build_reservoir(n, qubits, depth, seed)?;
        let observables = qrc_observables(qubits, correlators);
        let features = windows
            .iter()
            .map(|w| qrc_features_with(&reservoir, &observables, w))
            .collect::<Result<Vec<_>>>()?;
        let readout = qrc_fit_readout(&features, targets, lambda)?;
        Ok(Self {
            reservoir,
            observables,
            readout,
        })
    }

    pub fn readout(&self) -> &Readout {
        &self.readout
    }

    pub fn predict(&self, window: &[f64]) -> Result<f64> {
        let f = qrc_features_with(&self.reservoir, &self.observables, window)?;
        Ok(f.iter()
            .zip(&self.readout.weights)
            .map(|(a, b)| a * b)
            .sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn untouched_register_features() {
        let c = qrc_build_reservoir(3, 3, 0, 1).unwrap();
        assert_eq!(qrc_features(&c, &[0.0; 3]).unwrap(), vec![1.0; 3 + 3 + 1]);
    }

    #[test]
    fn feature_length() {
        let c = qrc_build_reservoir(8, 4, 2, 1).unwrap();
        assert_eq!(qrc_features(&c, &[0.5; 8]).unwrap().len(), 11);
        let obs = qrc_observables(4, false);
        assert_eq!(qrc_features_with(&c, &obs, &[0.5; 8]).unwrap().len(), 5);
    }

    #[test]
    fn distinct_windows_give_distinct_features() {
        let c = qrc_build_reservoir(4, 4, 3, 11).unwrap();
        let a = qrc_features(&c, &[0.1, 0.2, 0.3, 0.4]).unwrap();
        let b = qrc_features(&c, &[0.1, 0.2, 0.3, 0.5]).unwrap();
        assert!(a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-6));
    }

    #[test]
    fn same_seed_same_reservoir() {
        assert_eq!(
            qrc_build_reservoir(4, 3, 2, 5).unwrap(),
            qrc_build_reservoir(4, 3, 2, 5).unwrap()
        );
        assert_ne!(
            qrc_build_reservoir(4, 3, 2, 5).unwrap(),
            qrc_build_reservoir(4, 3, 2, 6).unwrap()
        );
    }

    #[test]
    fn readout_identity_and_constant() {
        let eye: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..3).map(|j| (i == j) as u8 as f64).collect())
            .collect();
        let r = qrc_fit_readout(&eye, &[0.3, -1.0, 2.5], 0.0).unwrap();
        for (w, y) in r.weights.iter().zip([0.3, -1.0, 2.5]) {
            assert!((w - y).abs() < 1e-12);
        }
        let ones = vec![vec![1.0]; 7];
        let r = qrc_fit_readout(&ones, &[0.8; 7], 0.0).unwrap();
        assert!((r.weights[0] - 0.8).abs() < 1e-12);
        assert!(!r.fell_back);
    }

    #[test]
    fn readout_recovers_exact_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let w_star: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<f64> = f
            .iter()
            .map(|r| r.iter().zip(&w_star).map(|(a, b)| a * b).sum())
            .collect();
        let r = qrc_fit_readout(&f, &y, 0.0).unwrap();
        for (a, b) in r.weights.iter().zip(&w_star) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn singular_system_falls_back() {
        let f = vec![vec![1.0, 1.0]; 5];
        let r = qrc_fit_readout(&f, &[1.0; 5], 0.0).unwrap();
        assert!(r.fell_back);
        assert_eq!(r.lambda, RIDGE_FALLBACK);
        assert!((r.weights[0] + r.weights[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(qrc_fit_readout(&[vec![1.0, 2.0]], &[1.0], 0.0).is_err());
        assert!(qrc_fit_readout(&[vec![1.0]], &[1.0, 2.0], 0.1).is_err());
        assert!(qrc_fit_readout(&[vec![1.0]], &[1.0], -1.0).is_err());
    }

    #[test]
    fn fitted_model_reproduces_training_fit() {
        let windows: Vec<Vec<f64>> = (0..40)
            .map(|k| vec![(k as f64 * 0.37).sin().abs(), (k as f64 * 0.11).cos().abs()])
            .collect();
        let targets: Vec<f64> = windows.iter().map(|w| 0.5 * w[0] + 0.2).collect();
        let m = QrcModel::fit(&windows, &targets, 3, 2, 1e-3, true, 4).unwrap();
        let mse: f64 = windows
            .iter()
            .zip(&targets)
            .map(|(w, y)| (m.predict(w).unwrap() - y).powi(2))
            .sum::<f64>()
            / 40.0;
        let var: f64 = {
            let mean = targets.iter().sum::<f64>() / 40.0;
            targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / 40.0
        };
        assert!(mse < var, "{mse} vs {var}");
    }
}
