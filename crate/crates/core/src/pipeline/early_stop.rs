//! Patience-based early stopping on a validation-loss trace.

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EarlyStopping {
    pub patience: usize,
    pub min_delta: f64,
    pub max_epochs: usize,
}

impl Default for EarlyStopping {
    fn default() -> Self {
        Self {
            patience: 10,
            min_delta: 1e-4,
            max_epochs: 200,
        }
    }
}

/// Outcome of scanning a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    /// Epoch at which training should stop, if the rule fired inside the trace.
    pub stop_at: Option<usize>,
    /// Epoch holding the best loss; earliest on ties. `None` for an empty trace.
    pub best_epoch: Option<usize>,
}

impl EarlyStopping {
    pub fn validate(&self) -> Result<()> {
        if self.patience == 0 {
            return config("early-stopping patience must be at least 1");
        }
        if !(self.min_delta >= 0.0) {
            return config(format!("min_delta must be ≥ 0, got {}", self.min_delta));
        }
        Ok(())
    }

    /// A loss counts as an improvement when it is below the best so far by at
    /// least `min_delta`. Training stops once `patience` consecutive epochs
    /// fail to improve. Non-finite losses never improve.
    pub fn check(&self, trace: &[f64]) -> StopDecision {
        let mut best: Option<(usize, f64)> = None;
        let mut stale = 0;
        for (epoch, &loss) in trace.iter().enumerate() {
            let improved = match best {
                None => loss.is_finite(),
                Some((_, b)) => loss < b && b - loss >= self.min_delta,
            };
            if improved {
                best = Some((epoch, loss));
                stale = 0;
            } else {
                stale += 1;
                if stale >= self.patience {
                    return StopDecision {
                        stop_at: Some(epoch),
                        best_epoch: best.map(|b| b.0).or(Some(0)),
                    };
                }
            }
        }
        StopDecision {
            stop_at: None,
            best_epoch: best.map(|b| b.0).or((!trace.is_empty()).then_some(0)),
        }
    }
}

/// Free-function form of [`EarlyStopping::check`].
pub fn early_stop_check(trace: &[f64], patience: usize, min_delta: f64) -> StopDecision {
    EarlyStopping {
        patience,
        min_delta,
        max_epochs: usize::MAX,
    }
    .check(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_stops() {
        let d = early_stop_check(&[1.0, 0.9, 0.9, 0.9], 2, 0.01);
        assert_eq!(
            d,
            StopDecision {
                stop_at: Some(3),
                best_epoch: Some(1)
            }
        );
    }

    #[test]
    fn decreasing_never_stops() {
        let trace: Vec<f64> = (0..50).map(|i| 1.0 / (i as f64 + 1.0)).collect();
        let d = early_stop_check(&trace, 3, 0.0);
        assert_eq!(d.stop_at, None);
        assert_eq!(d.best_epoch, Some(49));
    }

    #[test]
    fn ties_keep_earliest() {
        let d = early_stop_check(&[0.5, 0.5], 1, 0.0);
        assert_eq!(
            d,
            StopDecision {
                stop_at: Some(1),
                best_epoch: Some(0)
            }
        );
    }

    #[test]
    fn small_gains_do_not_reset_patience() {
        let d = early_stop_check(&[1.0, 0.99995, 0.99992, 0.5], 2, 1e-4);
        assert_eq!(
            d,
            StopDecision {
                stop_at: Some(2),
                best_epoch: Some(0)
            }
        );
    }

    #[test]
    fn empty_trace() {
        let d = early_stop_check(&[], 2, 0.0);
        assert_eq!(
            d,
            StopDecision {
                stop_at: None,
                best_epoch: None
            }
        );
    }

    #[test]
    fn validation() {
        assert!(EarlyStopping {
            patience: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(EarlyStopping {
            min_delta: -1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(EarlyStopping::default().validate().is_ok());
    }
}
