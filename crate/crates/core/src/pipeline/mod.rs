//! Data preparation, temporal folds, metrics, early stopping and the
//! grid-search protocol.

pub mod data;
pub mod early_stop;
pub mod folds;
pub mod grid;
pub mod metrics;
pub mod runner;

pub use data::{
    denormalize, load_csv, minmax_normalize, normalize_with, NormalizedSeries, RawSeries,
};
pub use early_stop::{early_stop_check, EarlyStopping, StopDecision};
pub use folds::{make_folds, windowize, FoldConfig, FoldPurpose, SeriesFold};
pub use grid::{default_grid, grid_points, grid_size, FamilyGrid, HyperGrid, DEFAULT_GRID_CAP};
pub use metrics::{mae, mean_std, mse};
pub use runner::{
    aggregate, evaluate_best, grid_search, run_experiment, run_many, run_seed, run_single,
    select_best, stable_hash, AggregateResult, FamilyResult, FoldAggregate, GridOutcome,
    MetricUnits, Normalization, PreparedSeries, Protocol, RunRecord,
};
