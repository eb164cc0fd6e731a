//! Runs, grid search and test-fold evaluation.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{denormalize, minmax_normalize, normalize_with};
use super::early_stop::EarlyStopping;
use super::folds::{make_folds, FoldConfig, FoldPurpose, SeriesFold};
use super::grid::{grid_points, HyperGrid};
use super::metrics::{mae, mean_std, mse};
use crate::error::{Error, Result};
use crate::models::{config_string, fit, Family, HyperParams, ModelSpec};

/// Raw forecasts beyond this magnitude (in normalized units) count as divergent.
pub const DIVERGENCE_LIMIT: f64 = 10.0;
/// Forecasts are clamped into this range before denormalization.
pub const CLAMP_RANGE: (f64, f64) = (-0.5, 1.5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Min and max over the whole series.
    #[default]
    FullSeries,
    /// Min and max over each fold's training range.
    TrainOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricUnits {
    #[default]
    Original,
    Normalized,
}

/// Everything about an experiment except the models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Protocol {
    pub folds: FoldConfig,
    pub early_stopping: EarlyStopping,
    pub repeats: usize,
    pub seed_base: u64,
    pub normalization: Normalization,
    pub metric_units: MetricUnits,
    /// Worker threads; `None` uses every core.
    pub parallelism: Option<usize>,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            folds: FoldConfig::default(),
            early_stopping: EarlyStopping::default(),
            repeats: 10,
            seed_base: 0,
            normalization: Normalization::default(),
            metric_units: MetricUnits::default(),
            parallelism: None,
        }
    }
}

impl Protocol {
    pub fn validate(&self) -> Result<()> {
        self.early_stopping.validate()?;
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if self.parallelism == Some(0) {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        Ok(())
    }
}

/// One fit-and-evaluate on one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub family: Family,
    pub config: String,
    pub hyperparameters: HyperParams,
    pub phase: FoldPurpose,
    pub fold: usize,
    pub repeat: usize,
    pub seed: u64,
    /// Absent when the run diverged or failed.
    pub mae: Option<f64>,
    pub mse: Option<f64>,
    pub diverged: bool,
    /// Set when the run failed for a reason other than divergence.
    pub error: Option<String>,
    pub epochs_trained: usize,
    pub trace: Vec<f64>,
    /// Forecasts outside the clamp range, unclamped.
    pub out_of_range: Vec<f64>,
    pub flags: Vec<String>,
    pub wall_time_ms: u64,
}

impl RunRecord {
    pub fn is_scored(&self) -> bool {
        self.mae.is_some() && !self.diverged && self.error.is_none()
    }
}

/// 64-bit FNV-1a.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Seed of a run, independent of execution order.
pub fn run_seed(seed_base: u64, family: Family, config: &str, fold: usize, repeat: usize) -> u64 {
    seed_base ^ stable_hash(format!("{family}|{config}|{fold}|{repeat}").as_bytes())
}

/// A series prepared for the protocol: raw values plus the scaling used.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSeries {
    pub raw: Vec<f64>,
    pub folds: Vec<SeriesFold>,
    normalization: Normalization,
    full: Option<(Vec<f64>, f64, f64)>,
}

impl PreparedSeries {
    pub fn new(raw: Vec<f64>, protocol: &Protocol) -> Result<Self> {
        let folds = make_folds(raw.len(), &protocol.folds)?;
        let full = match protocol.normalization {
            Normalization::FullSeries => {
                let n = minmax_normalize(&raw)?;
                Some((n.values, n.min, n.max))
            }
            Normalization::TrainOnly => {
                for f in &folds {
                    minmax_normalize(&raw[f.train.clone()])?;
                }
                None
            }
        };
        Ok(Self {
            raw,
            folds,
            normalization: protocol.normalization,
            full,
        })
    }

    pub fn folds_for(&self, purpose: FoldPurpose) -> Vec<SeriesFold> {
        self.folds
            .iter()
            .filter(|f| f.purpose == purpose)
            .cloned()
            .collect()
    }

    /// Normalized values of the series prefix up to the fold end, with the
    /// scaling constants that apply to `fold`.
    fn scaled(&self, fold: &SeriesFold) -> Result<(Vec<f64>, f64, f64)> {
        match (&self.full, self.normalization) {
            (Some((values, min, max)), _) => Ok((values[..fold.eval.end].to_vec(), *min, *max)),
            _ => {
                let train = &self.raw[fold.train.clone()];
                let n = minmax_normalize(train)?;
                let scaled = normalize_with(&self.raw[..fold.eval.end], n.min, n.max)?;
                Ok((scaled.values, n.min, n.max))
            }
        }
    }
}

/// Fits on the fold's training range, then forecasts each evaluation point
/// one step ahead from the true preceding values.
pub fn run_single(
    family: Family,
    hp: &HyperParams,
    series: &PreparedSeries,
    fold: &SeriesFold,
    repeat: usize,
    protocol: &Protocol,
) -> RunRecord {
    let config = config_string(hp);
    let seed = run_seed(protocol.seed_base, family, &config, fold.index, repeat);
    let started = Instant::now();
    let mut record = RunRecord {
        family,
        config,
        hyperparameters: hp.clone(),
        phase: fold.purpose,
        fold: fold.index,
        repeat,
        seed,
        mae: None,
        mse: None,
        diverged: false,
        error: None,
        epochs_trained: 0,
        trace: Vec::new(),
        out_of_range: Vec::new(),
        flags: Vec::new(),
        wall_time_ms: 0,
    };
    if let Err(e) = score(&mut record, series, fold, protocol) {
        match e {
            Error::Diverged(msg) => {
                record.diverged = true;
                record.flags.push(format!("diverged: {msg}"));
            }
            other => record.error = Some(other.to_string()),
        }
        record.mae = None;
        record.mse = None;
    }
    record.wall_time_ms = started.elapsed().as_millis() as u64;
    record
}

fn score(
    record: &mut RunRecord,
    series: &PreparedSeries,
    fold: &SeriesFold,
    protocol: &Protocol,
) -> Result<()> {
    let spec = ModelSpec::new(record.family, record.hyperparameters.clone(), record.seed)?;
    let (values, min, max) = series.scaled(fold)?;
    let model = fit(&spec, &values[fold.train.clone()], &protocol.early_stopping)?;
    record.epochs_trained = model.trace.len();
    record.trace = model.trace.clone();
    record.flags.extend(model.flags.iter().cloned());

    let mut truth = Vec::with_capacity(fold.eval.len());
    let mut forecast = Vec::with_capacity(fold.eval.len());
    for t in fold.eval.clone() {
        let raw = model.predict_next(&values[fold.train.start..t])?;
        if !raw.is_finite() || raw.abs() > DIVERGENCE_LIMIT {
            return Err(Error::Diverged(format!("forecast {raw} at index {t}")));
        }
        if raw < CLAMP_RANGE.0 || raw > CLAMP_RANGE.1 {
            record.out_of_range.push(raw);
        }
        let y = raw.clamp(CLAMP_RANGE.0, CLAMP_RANGE.1);
        match protocol.metric_units {
            MetricUnits::Original => {
                forecast.push(denormalize(y, min, max));
                truth.push(series.raw[t]);
            }
            MetricUnits::Normalized => {
                forecast.push(y);
                truth.push(values[t]);
            }
        }
    }
    record.mae = Some(mae(&truth, &forecast)?);
    record.mse = Some(mse(&truth, &forecast)?);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAggregate {
    pub fold: usize,
    pub mean_mae: f64,
    pub std_mae: f64,
    pub count: usize,
}

/// Statistics over the scored runs of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub mean_mae: f64,
    /// Population standard deviation of per-run MAE.
    pub std_mae: f64,
    /// Run-to-run spread with the fold held fixed: the square root of the
    /// mean within-fold MAE variance.
    pub repeat_std_mae: f64,
    pub mean_mse: f64,
    /// Scored runs.
    pub count: usize,
    pub diverged_count: usize,
    pub failed_count: usize,
    pub per_fold: Vec<FoldAggregate>,
}

pub fn aggregate(records: &[RunRecord]) -> AggregateResult {
    let scored: Vec<&RunRecord> = records.iter().filter(|r| r.is_scored()).collect();
    let maes: Vec<f64> = scored.iter().filter_map(|r| r.mae).collect();
    let mses: Vec<f64> = scored.iter().filter_map(|r| r.mse).collect();
    let (mean_mae, std_mae) = mean_std(&maes);
    let (mean_mse, _) = mean_std(&mses);
    let mut by_fold: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in &scored {
        by_fold.entry(r.fold).or_default().extend(r.mae);
    }
    let per_fold: Vec<FoldAggregate> = by_fold
        .into_iter()
        .map(|(fold, m)| {
            let (mean_mae, std_mae) = mean_std(&m);
            FoldAggregate {
                fold,
                mean_mae,
                std_mae,
                count: m.len(),
            }
        })
        .collect();
    let repeat_std_mae = if per_fold.is_empty() {
        f64::NAN
    } else {
        (per_fold.iter().map(|f| f.std_mae * f.std_mae).sum::<f64>() / per_fold.len() as f64).sqrt()
    };
    AggregateResult {
        mean_mae,
        std_mae,
        repeat_std_mae,
        mean_mse,
        count: scored.len(),
        diverged_count: records.iter().filter(|r| r.diverged).count(),
        failed_count: records.iter().filter(|r| r.error.is_some()).count(),
        per_fold,
    }
}

/// Index of the best candidate: lowest mean MAE, then lowest MAE std, then
/// the lexicographically smallest config. Candidates without scored runs
/// are skipped.
pub fn select_best(candidates: &[(String, AggregateResult)]) -> Option<usize> {
    candidates
        .iter()
        .enumerate()
        .filter(|(_, (_, a))| a.count > 0)
        .min_by(|(_, (ca, a)), (_, (cb, b))| {
            a.mean_mae
                .total_cmp(&b.mean_mae)
                .then(a.std_mae.total_cmp(&b.std_mae))
                .then(ca.cmp(cb))
        })
        .map(|(i, _)| i)
}

fn with_pool<T: Send>(parallelism: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match parallelism {
        None => Ok(job()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Runtime(format!("cannot start worker pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

/// Runs every `(config, fold, repeat)` combination, sorted in that order.
pub fn run_many(
    family: Family,
    configs: &[HyperParams],
    series: &PreparedSeries,
    folds: &[SeriesFold],
    protocol: &Protocol,
) -> Result<Vec<RunRecord>> {
    let jobs: Vec<(usize, &SeriesFold, usize)> = (0..configs.len())
        .flat_map(|c| {
            folds
                .iter()
                .flat_map(move |f| (0..protocol.repeats).map(move |r| (c, f, r)))
        })
        .collect();
    with_pool(protocol.parallelism, || {
        jobs.par_iter()
            .map(|&(c, f, r)| run_single(family, &configs[c], series, f, r, protocol))
            .collect()
    })
}

/// Result of the validation-fold search for one family.
#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    pub best: HyperParams,
    pub candidates: Vec<(String, AggregateResult)>,
    pub records: Vec<RunRecord>,
    /// Configs whose runs all diverged or failed.
    pub excluded: Vec<String>,
}

pub fn grid_search(
    family: Family,
    configs: &[HyperParams],
    series: &PreparedSeries,
    protocol: &Protocol,
) -> Result<GridOutcome> {
    let folds = series.folds_for(FoldPurpose::Validation);
    if folds.is_empty() {
        return Err(Error::Config(
            "grid search needs at least one validation fold".into(),
        ));
    }
    if configs.is_empty() {
        return Err(Error::Config(format!("grid for {family} is empty")));
    }
    let records = run_many(family, configs, series, &folds, protocol)?;
    let per_config = folds.len() * protocol.repeats;
    let candidates: Vec<(String, AggregateResult)> = records
        .chunks(per_config)
        .map(|chunk| (chunk[0].config.clone(), aggregate(chunk)))
        .collect();
    let excluded = candidates
        .iter()
        .filter(|(_, a)| a.count == 0)
        .map(|(c, _)| c.clone())
        .collect();
    let best = select_best(&candidates).ok_or_else(|| {
        Error::Runtime(format!(
            "every {family} configuration diverged or failed on the validation folds"
        ))
    })?;
    Ok(GridOutcome {
        best: configs[best].clone(),
        candidates,
        records,
        excluded,
    })
}

/// Test-fold runs of one configuration.
pub fn evaluate_best(
    family: Family,
    best: &HyperParams,
    series: &PreparedSeries,
    protocol: &Protocol,
) -> Result<(AggregateResult, Vec<RunRecord>)> {
    let folds = series.folds_for(FoldPurpose::Test);
    if folds.is_empty() {
        return Err(Error::Config(
            "evaluation needs at least one test fold".into(),
        ));
    }
    let records = run_many(family, std::slice::from_ref(best), series, &folds, protocol)?;
    let agg = aggregate(&records);
    if agg.count == 0 {
        return Err(Error::Runtime(format!(
            "every {family} test run with {} diverged or failed",
            config_string(best)
        )));
    }
    Ok((agg, records))
}

/// Search and test results for one family.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyResult {
    pub family: Family,
    pub search: GridOutcome,
    pub test: AggregateResult,
    pub test_records: Vec<RunRecord>,
}

/// Grid search then test evaluation for each family, in the given order.
/// A family that cannot complete yields its error in place of a result.
pub fn run_experiment(
    families: &[Family],
    grids: &HyperGrid,
    series: &PreparedSeries,
    protocol: &Protocol,
) -> Result<Vec<(Family, Result<FamilyResult>)>> {
    protocol.validate()?;
    grids.validate()?;
    let mut out = Vec::with_capacity(families.len());
    for &family in families {
        let configs = grid_points(&grids.get(family));
        let result = grid_search(family, &configs, series, protocol).and_then(|search| {
            let (test, test_records) = evaluate_best(family, &search.best, series, protocol)?;
            Ok(FamilyResult {
                family,
                search,
                test,
                test_records,
            })
        });
        out.push((family, result));
    }
    Ok(out)
}
