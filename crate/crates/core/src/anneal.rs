//! Simulated annealing for QUBO problems plus an exhaustive reference solver.
//!
//! Energies follow `E(x) = xᵀQx = Σ_i Q_ii x_i + 2 Σ_{i<j} Q_ij x_i x_j` over
//! binary `x`. Each read performs `sweeps` Metropolis passes of single-bit
//! flips with a geometric temperature ramp.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, usage, Result};

/// Largest problem [`brute_force_minimum`] will enumerate.
pub const BRUTE_FORCE_MAX: usize = 20;

/// Symmetric QUBO coefficient matrix; the diagonal holds the linear terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Qubo {
    size: usize,
    coefficients: Vec<f64>,
}

impl Qubo {
    pub fn zeros(size: usize) -> Self {
        Self {
            size,
            coefficients: vec![0.0; size * size],
        }
    }

    /// Builds a QUBO from rows, rejecting asymmetric or non-finite input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let size = rows.len();
        let mut q = Self::zeros(size);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != size {
                return usage(format!(
                    "QUBO row {i} has {} entries, expected {size}",
                    row.len()
                ));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return usage(format!("QUBO entry ({i},{j}) is not finite"));
                }
                q.coefficients[i * size + j] = v;
            }
        }
        for i in 0..size {
            for j in 0..i {
                if q.get(i, j) != q.get(j, i) {
                    return usage(format!("QUBO is not symmetric at ({i},{j})"));
                }
            }
        }
        Ok(q)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.coefficients[i * self.size + j]
    }

    pub fn set_linear(&mut self, i: usize, value: f64) {
        self.coefficients[i * self.size + i] = value;
    }

    /// Sets `Q_ij` and `Q_ji` together.
    pub fn set_coupling(&mut self, i: usize, j: usize, value: f64) {
        self.coefficients[i * self.size + j] = value;
        self.coefficients[j * self.size + i] = value;
    }

    pub fn is_finite(&self) -> bool {
        self.coefficients.iter().all(|v| v.is_finite())
    }

    fn energy_unchecked(&self, bits: &[u8]) -> f64 {
        let mut e = 0.0;
        for i in 0..self.size {
            if bits[i] == 0 {
                continue;
            }
            e += self.get(i, i);
            for j in (i + 1)..self.size {
                if bits[j] != 0 {
                    e += 2.0 * self.get(i, j);
                }
            }
        }
        e
    }

    /// Energy change from flipping bit `i`.
    fn flip_delta(&self, bits: &[u8], i: usize) -> f64 {
        let row = &self.coefficients[i * self.size..(i + 1) * self.size];
        let mut field = row[i];
        for (j, (&q, &b)) in row.iter().zip(bits).enumerate() {
            if j != i && b != 0 {
                field += 2.0 * q;
            }
        }
        if bits[i] == 0 {
            field
        } else {
            -field
        }
    }
}

pub fn qubo_energy(qubo: &Qubo, bits: &[u8]) -> Result<f64> {
    if bits.len() != qubo.size {
        return usage(format!(
            "assignment has {} bits, QUBO has {} variables",
            bits.len(),
            qubo.size
        ));
    }
    Ok(qubo.energy_unchecked(bits))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub initial_temperature: f64,
    pub final_temperature: f64,
    pub sweeps: usize,
    pub num_reads: usize,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self {
            initial_temperature: 2.0,
            final_temperature: 0.05,
            sweeps: 200,
            num_reads: 25,
        }
    }
}

impl AnnealSchedule {
    pub fn validate(&self) -> Result<()> {
        let t0 = self.initial_temperature;
        let tf = self.final_temperature;
        if !(t0.is_finite() && tf.is_finite() && t0 > 0.0 && tf > 0.0) {
            return config(format!(
                "annealing temperatures must be positive, got {t0} → {tf}"
            ));
        }
        if tf > t0 {
            return config(format!(
                "final temperature {tf} exceeds initial temperature {t0}"
            ));
        }
        if self.sweeps == 0 || self.num_reads == 0 {
            return config("annealing needs at least one sweep and one read");
        }
        Ok(())
    }

    /// Temperature of sweep `k`: `T0·(Tf/T0)^(k/sweeps)`.
    pub fn temperature(&self, k: usize) -> f64 {
        let ratio = self.final_temperature / self.initial_temperature;
        self.initial_temperature * ratio.powf(k as f64 / self.sweeps as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub bits: Vec<u8>,
    pub energy: f64,
}

/// Runs `num_reads` independent anneals. Read `r` draws from a stream seeded
/// with `seed + r`, so the output does not depend on scheduling.
pub fn simulated_annealing(
    qubo: &Qubo,
    schedule: &AnnealSchedule,
    seed: u64,
) -> Result<Vec<Sample>> {
    schedule.validate()?;
    if qubo.size == 0 {
        return usage("QUBO must have at least one variable");
    }
    if !qubo.is_finite() {
        return usage("QUBO has non-finite coefficients");
    }
    let reads: Vec<Sample> = if schedule.num_reads >= 8 && qubo.size >= 16 {
        (0..schedule.num_reads)
            .into_par_iter()
            .map(|r| anneal_read(qubo, schedule, seed.wrapping_add(r as u64)))
            .collect()
    } else {
        (0..schedule.num_reads)
            .map(|r| anneal_read(qubo, schedule, seed.wrapping_add(r as u64)))
            .collect()
    };
    Ok(reads)
}

fn anneal_read(qubo: &Qubo, schedule: &AnnealSchedule, seed: u64) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = qubo.size;
    let mut bits: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1)).collect();
    for k in 0..schedule.sweeps {
        // The last sweep runs at exactly the final temperature.
        let t = schedule.temperature(k + 1);
        for i in 0..n {
            let delta = qubo.flip_delta(&bits, i);
            if delta <= 0.0 || rng.gen::<f64>() < (-delta / t).exp() {
                bits[i] ^= 1;
            }
        }
    }
    let energy = qubo.energy_unchecked(&bits);
    Sample { bits, energy }
}

/// Lowest-energy sample among `samples`, first one on ties.
pub fn best_sample(samples: &[Sample]) -> Option<&Sample> {
    samples
        .iter()
        .reduce(|best, s| if s.energy < best.energy { s } else { best })
}

/// Exhaustive global minimum. Ties go to the lexicographically smallest bit
/// vector, reading bit 0 as the most significant position.
pub fn brute_force_minimum(qubo: &Qubo) -> Result<Sample> {
    let n = qubo.size;
    if n > BRUTE_FORCE_MAX {
        return config(format!(
            "exhaustive search limited to {BRUTE_FORCE_MAX} variables, QUBO has {n}"
        ));
    }
    let mut best = Sample {
        bits: vec![0; n],
        energy: qubo.energy_unchecked(&vec![0; n]),
    };
    let mut bits = vec![0u8; n];
    for code in 1u32..(1u32 << n) {
        for (i, b) in bits.iter_mut().enumerate() {
            *b = ((code >> (n - 1 - i)) & 1) as u8;
        }
        let e = qubo.energy_unchecked(&bits);
        // Enumeration runs in lexicographic order, so strict < keeps the smallest.
        if e < best.energy {
            best = Sample {
                bits: bits.clone(),
                energy: e,
            };
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_qubo(rng: &mut ChaCha8Rng, n: usize) -> Qubo {
        let mut q = Qubo::zeros(n);
        for i in 0..n {
            q.set_linear(i, rng.gen_range(-1.0..1.0));
            for j in (i + 1)..n {
                q.set_coupling(i, j, rng.gen_range(-1.0..1.0));
            }
        }
        q
    }

    #[test]
    fn energy_examples() {
        let q = Qubo::from_rows(&[vec![-1.0]]).unwrap();
        assert_eq!(qubo_energy(&q, &[1]).unwrap(), -1.0);
        assert_eq!(qubo_energy(&q, &[0]).unwrap(), 0.0);
        let q2 = Qubo::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        // Hand enumeration: 00 → 0, 01 → 0, 10 → 0, 11 → Q01 + Q10 = 2.
        let all: Vec<f64> = [[0, 0], [0, 1], [1, 0], [1, 1]]
            .iter()
            .map(|b| qubo_energy(&q2, b).unwrap())
            .collect();
        assert_eq!(all, vec![0.0, 0.0, 0.0, 2.0]);
        assert!(qubo_energy(&q2, &[1]).is_err());
    }

    #[test]
    fn rejects_asymmetric_and_nonfinite() {
        assert!(Qubo::from_rows(&[vec![0.0, 1.0], vec![0.5, 0.0]]).is_err());
        assert!(Qubo::from_rows(&[vec![f64::NAN]]).is_err());
        assert!(Qubo::from_rows(&[vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn schedule_validation() {
        let mut s = AnnealSchedule::default();
        assert!(s.validate().is_ok());
        s.final_temperature = 3.0;
        assert!(s.validate().is_err());
        let s = AnnealSchedule {
            sweeps: 0,
            ..Default::default()
        };
        assert!(s.validate().is_err());
        let s = AnnealSchedule {
            initial_temperature: -1.0,
            ..Default::default()
        };
        assert!(s.validate().is_err());
        let q = Qubo::from_rows(&[vec![-1.0]]).unwrap();
        assert!(simulated_annealing(&q, &s, 0).is_err());
    }

    #[test]
    fn geometric_ramp_endpoints() {
        let s = AnnealSchedule::default();
        assert!((s.temperature(0) - 2.0).abs() < 1e-12);
        assert!((s.temperature(s.sweeps) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn single_variable_converges() {
        let q = Qubo::from_rows(&[vec![-1.0]]).unwrap();
        let samples = simulated_annealing(&q, &AnnealSchedule::default(), 9).unwrap();
        assert_eq!(samples.len(), 25);
        for s in &samples {
            assert_eq!(s.bits, vec![1]);
            assert_eq!(s.energy, -1.0);
        }
    }

    #[test]
    fn identity_qubo_modal_sample_is_zero() {
        let q = Qubo::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let oracle = brute_force_minimum(&q).unwrap();
        assert_eq!(oracle.bits, vec![0, 0]);
        let samples = simulated_annealing(&q, &AnnealSchedule::default(), 4).unwrap();
        let zeros = samples.iter().filter(|s| s.bits == oracle.bits).count();
        assert!(zeros * 2 > samples.len());
    }

    #[test]
    fn seeded_runs_repeat() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = random_qubo(&mut rng, 6);
        let s = AnnealSchedule::default();
        assert_eq!(
            simulated_annealing(&q, &s, 77).unwrap(),
            simulated_annealing(&q, &s, 77).unwrap()
        );
    }

    #[test]
    fn brute_force_examples() {
        let q = Qubo::from_rows(&[vec![-1.0]]).unwrap();
        assert_eq!(
            brute_force_minimum(&q).unwrap(),
            Sample {
                bits: vec![1],
                energy: -1.0
            }
        );
        let z = Qubo::zeros(3);
        assert_eq!(
            brute_force_minimum(&z).unwrap(),
            Sample {
                bits: vec![0, 0, 0],
                energy: 0.0
            }
        );
        assert!(brute_force_minimum(&Qubo::zeros(21)).is_err());
    }

    #[test]
    fn brute_force_beats_every_assignment() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let q = random_qubo(&mut rng, 8);
        let best = brute_force_minimum(&q).unwrap();
        for code in 0u32..256 {
            let bits: Vec<u8> = (0..8).map(|i| ((code >> (7 - i)) & 1) as u8).collect();
            assert!(best.energy <= qubo_energy(&q, &bits).unwrap());
        }
    }

    #[test]
    fn flip_delta_matches_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = random_qubo(&mut rng, 7);
        let bits: Vec<u8> = (0..7).map(|_| rng.gen_range(0..=1)).collect();
        for i in 0..7 {
            let mut flipped = bits.clone();
            flipped[i] ^= 1;
            let want = q.energy_unchecked(&flipped) - q.energy_unchecked(&bits);
            assert!((q.flip_delta(&bits, i) - want).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn sample_energy_is_exact(seed in any::<u64>(), n in 1usize..9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q = random_qubo(&mut rng, n);
            let sched = AnnealSchedule { sweeps: 5, num_reads: 3, ..Default::default() };
            for s in simulated_annealing(&q, &sched, seed).unwrap() {
                prop_assert_eq!(s.energy, qubo_energy(&q, &s.bits).unwrap());
            }
        }
    }
}
