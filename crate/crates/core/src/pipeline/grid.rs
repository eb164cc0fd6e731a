//! Hyperparameter grids and their Cartesian expansion.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::models::{Family, HyperParams, ModelSpec};

/// Candidate values per hyperparameter name for one family.
pub type FamilyGrid = BTreeMap<String, Vec<f64>>;

pub const DEFAULT_GRID_CAP: usize = 128;

fn grid(entries: &[(&str, &[f64])]) -> FamilyGrid {
    entries
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_vec()))
        .collect()
}

/// Built-in search space of `family`. LAST_VALUE has nothing to tune and
/// ARIMA selects its own order, so both expand to a single empty point.
pub fn default_grid(family: Family) -> FamilyGrid {
    const N: &[f64] = &[2.0, 4.0, 8.0];
    const LR: &[f64] = &[1e-3, 1e-2];
    match family {
        Family::LastValue | Family::Arima => FamilyGrid::new(),
        Family::Lstm => grid(&[("n", N), ("hidden", &[4.0, 8.0, 16.0]), ("lr", LR)]),
        Family::Qnn | Family::QnnIsing => {
            grid(&[("n", N), ("layers", &[1.0, 2.0, 4.0]), ("lr", LR)])
        }
        Family::Qdbm => grid(&[
            ("n", N),
            ("hidden", &[4.0, 8.0]),
            ("lr", &[1e-3, 1e-2, 1e-1]),
            ("reads", &[10.0, 25.0, 50.0]),
        ]),
        Family::Qrc => grid(&[
            ("n", N),
            ("qubits", &[4.0, 6.0]),
            ("depth", &[2.0, 4.0]),
            ("lambda", &[0.0, 1e-3, 1e-1]),
        ]),
        Family::Qlstm => grid(&[
            ("n", N),
            ("hidden", &[2.0, 4.0]),
            ("layers", &[1.0, 2.0]),
            ("lr", LR),
        ]),
    }
}

/// Number of points in the Cartesian product.
pub fn grid_size(grid: &FamilyGrid) -> usize {
    grid.values().map(Vec::len).product()
}

/// Every combination, varying the last name (in sorted order) fastest.
pub fn grid_points(grid: &FamilyGrid) -> Vec<HyperParams> {
    let mut points = vec![HyperParams::new()];
    for (name, values) in grid {
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.insert(name.clone(), *v);
                    q
                })
            })
            .collect();
    }
    points
}

/// Per-family grids with a size cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub families: BTreeMap<Family, FamilyGrid>,
    pub cap: usize,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            families: Family::ALL
                .into_iter()
                .map(|f| (f, default_grid(f)))
                .collect(),
            cap: DEFAULT_GRID_CAP,
        }
    }
}

impl HyperGrid {
    pub fn get(&self, family: Family) -> FamilyGrid {
        self.families
            .get(&family)
            .cloned()
            .unwrap_or_else(|| default_grid(family))
    }

    /// Rejects empty value lists, oversize products and points the family
    /// schema does not accept.
    pub fn validate(&self) -> Result<()> {
        for family in Family::ALL {
            let g = &self.get(family);
            if let Some((name, _)) = g.iter().find(|(_, v)| v.is_empty()) {
                return config(format!("grid for {family} lists no values for '{name}'"));
            }
            let size = grid_size(g);
            if size > self.cap {
                return config(format!(
                    "grid for {family} has {size} points, above the cap of {}",
                    self.cap
                ));
            }
            for point in grid_points(g) {
                ModelSpec::new(family, point, 0)?;
            }
        }
        Ok(())
    }
}
