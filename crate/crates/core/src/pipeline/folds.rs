//! Temporal k-folds and sliding windows.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{config, usage, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FoldPurpose {
    Validation,
    Test,
}

/// One train/evaluation split in absolute series indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesFold {
    pub index: usize,
    pub purpose: FoldPurpose,
    pub train: Range<usize>,
    pub eval: Range<usize>,
}

impl SeriesFold {
    /// Every training index precedes every evaluation index.
    pub fn is_leak_free(&self) -> bool {
        self.train.end <= self.eval.start && self.train.start < self.train.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FoldConfig {
    pub n_validation: usize,
    pub n_test: usize,
    pub fold_len: usize,
    pub train_len: usize,
    pub shift: usize,
}

impl Default for FoldConfig {
    fn default() -> Self {
        Self {
            n_validation: 3,
            n_test: 3,
            fold_len: 500,
            train_len: 450,
            shift: 50,
        }
    }
}

impl FoldConfig {
    pub fn total_folds(&self) -> usize {
        self.n_validation + self.n_test
    }

    /// Shortest series that fits every fold.
    pub fn min_length(&self) -> usize {
        (self.total_folds().max(1) - 1) * self.shift + self.fold_len
    }
}

/// Builds the sliding folds: fold `i` starts at `i·shift`, trains on the
/// first `train_len` points and evaluates on the rest of its `fold_len`.
/// The first `n_validation` folds are for model selection, the rest for test.
pub fn make_folds(series_length: usize, cfg: &FoldConfig) -> Result<Vec<SeriesFold>> {
    if cfg.total_folds() == 0 {
        return config("at least one fold is required");
    }
    if cfg.train_len == 0 || cfg.train_len >= cfg.fold_len {
        return config(format!(
            "train_len {} must be in 1..fold_len ({})",
            cfg.train_len, cfg.fold_len
        ));
    }
    if cfg.shift == 0 && cfg.total_folds() > 1 {
        return config("fold shift must be positive");
    }
    let need = cfg.min_length();
    if series_length < need {
        return config(format!(
            "series has {series_length} points; these fold settings need at least {need}"
        ));
    }
    let folds: Vec<SeriesFold> = (0..cfg.total_folds())
        .map(|i| {
            let start = i * cfg.shift;
            SeriesFold {
                index: i,
                purpose: if i < cfg.n_validation {
                    FoldPurpose::Validation
                } else {
                    FoldPurpose::Test
                },
                train: start..start + cfg.train_len,
                eval: start + cfg.train_len..start + cfg.fold_len,
            }
        })
        .collect();
    for f in &folds {
        assert!(
            f.is_leak_free(),
            "fold {} leaks evaluation data into training",
            f.index
        );
    }
    Ok(folds)
}

/// Input windows and next-value targets: window `k` is `values[k..k+n]`,
/// target `k` is `values[k+n]`.
pub fn windowize(values: &[f64], n: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if n == 0 {
        return usage("window length must be at least 1");
    }
    if values.len() <= n {
        return usage(format!(
            "series of length {} is too short for windows of {n}",
            values.len()
        ));
    }
    let windows = values
        .windows(n)
        .take(values.len() - n)
        .map(<[f64]>::to_vec)
        .collect();
    Ok((windows, values[n..].to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_protocol_on_750_points() {
        let folds = make_folds(750, &FoldConfig::default()).unwrap();
        assert_eq!(folds.len(), 6);
        assert_eq!(folds[0].train, 0..450);
        assert_eq!(folds[0].eval, 450..500);
        assert_eq!(folds[5].train, 250..700);
        assert_eq!(folds[5].eval, 700..750);
        let purposes: Vec<_> = folds.iter().map(|f| f.purpose).collect();
        assert_eq!(purposes[..3], [FoldPurpose::Validation; 3]);
        assert_eq!(purposes[3..], [FoldPurpose::Test; 3]);
        for w in folds.windows(2) {
            assert_eq!(w[1].train.start - w[0].train.start, 50);
        }
        for f in &folds {
            assert!(f.is_leak_free());
            assert_eq!(f.eval.len(), 50);
            assert_eq!(f.eval.start, f.train.end);
        }
    }

    #[test]
    fn one_short_is_rejected() {
        let err = make_folds(749, &FoldConfig::default())
            .unwrap_err()
            .to_string();
        assert!(err.contains("750"), "{err}");
    }

    #[test]
    fn single_validation_fold() {
        let cfg = FoldConfig {
            n_validation: 1,
            n_test: 0,
            ..Default::default()
        };
        let folds = make_folds(500, &cfg).unwrap();
        assert_eq!(folds.len(), 1);
        assert_eq!(
            (folds[0].train.clone(), folds[0].eval.clone()),
            (0..450, 450..500)
        );
    }

    #[test]
    fn window_examples() {
        let (w, t) = windowize(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        assert_eq!(w, vec![vec![1.0, 2.0], vec![2.0, 3.0]]);
        assert_eq!(t, vec![3.0, 4.0]);
        let long: Vec<f64> = (0..450).map(f64::from).collect();
        assert_eq!(windowize(&long, 8).unwrap().0.len(), 442);
        assert!(windowize(&long, 0).is_err());
        assert!(windowize(&[1.0, 2.0], 2).is_err());
    }
}
