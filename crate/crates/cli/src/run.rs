//! `run`: grid search and test evaluation for every configured family.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use qforecast_core::models::{config_string, Family};
use qforecast_core::pipeline::data::write_rows;
use qforecast_core::pipeline::{run_experiment, AggregateResult, PreparedSeries, RunRecord};
use qforecast_core::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{Experiment, Overrides};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

pub const SUMMARY_HEADER: [&str; 9] = [
    "family",
    "config",
    "mean_mae",
    "std_mae",
    "repeat_std_mae",
    "mean_mse",
    "count",
    "diverged_count",
    "excluded_configs",
];

/// What a finished run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub output: PathBuf,
    pub summary: Vec<(Family, String, AggregateResult)>,
    /// Families that could not complete, with the reason.
    pub failures: Vec<(Family, String)>,
    /// Validation-phase configs whose runs all diverged or failed.
    pub excluded: Vec<(Family, String)>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    config_sha256: String,
    data_sha256: String,
    series_length: usize,
    seed_base: u64,
    seed_rule: &'static str,
    families: Vec<&'static str>,
    repeats: usize,
    folds: &'a qforecast_core::pipeline::FoldConfig,
    early_stopping: &'a qforecast_core::pipeline::EarlyStopping,
    normalization: qforecast_core::pipeline::Normalization,
    metric_units: qforecast_core::pipeline::MetricUnits,
    best_configs: Vec<(&'static str, String)>,
    failures: Vec<(&'static str, String)>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Fixed-precision rendering so the summary is byte-stable.
pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.10e}")
    } else {
        "NaN".into()
    }
}

pub fn summary_rows(
    summary: &[(Family, String, AggregateResult)],
    excluded: &[(Family, String)],
) -> Vec<Vec<String>> {
    summary
        .iter()
        .map(|(f, config, a)| {
            let n_excluded = excluded.iter().filter(|(g, _)| g == f).count();
            vec![
                f.name().to_string(),
                config.clone(),
                fmt_num(a.mean_mae),
                fmt_num(a.std_mae),
                fmt_num(a.repeat_std_mae),
                fmt_num(a.mean_mse),
                a.count.to_string(),
                a.diverged_count.to_string(),
                n_excluded.to_string(),
            ]
        })
        .collect()
}

fn write_records(path: &Path, records: &[&RunRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        let line = serde_json::to_string(r)
            .map_err(|e| Error::Runtime(format!("cannot serialize record: {e}")))?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_run(config_path: &Path, overrides: &Overrides) -> Result<RunOutcome> {
    let exp = Experiment::load(config_path, overrides)?;
    let raw = exp.series()?;
    let series = PreparedSeries::new(raw.values.clone(), &exp.protocol)?;
    fs::create_dir_all(&exp.output)?;

    let results = run_experiment(&exp.families, &exp.grids, &series, &exp.protocol)?;

    let mut records: Vec<&RunRecord> = Vec::new();
    let mut summary = Vec::new();
    let mut failures = Vec::new();
    let mut excluded = Vec::new();
    for (family, result) in &results {
        match result {
            Ok(r) => {
                records.extend(&r.search.records);
                records.extend(&r.test_records);
                excluded.extend(r.search.excluded.iter().map(|c| (*family, c.clone())));
                summary.push((*family, config_string(&r.search.best), r.test.clone()));
            }
            Err(e) => failures.push((*family, e.to_string())),
        }
    }

    write_records(&exp.output.join(RECORDS_FILE), &records)?;
    write_rows(
        File::create(exp.output.join(SUMMARY_FILE))?,
        &SUMMARY_HEADER,
        &summary_rows(&summary, &excluded),
    )?;

    // Hash of the configuration after command-line overrides.
    let effective = toml::to_string(&exp.config).map_err(|e| Error::Runtime(e.to_string()))?;
    let values_text: String = raw.values.iter().map(|v| format!("{v:e}\n")).collect();
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config_sha256: sha256_hex(effective.as_bytes()),
        data_sha256: sha256_hex(values_text.as_bytes()),
        series_length: raw.len(),
        seed_base: exp.protocol.seed_base,
        seed_rule: "seed_base XOR fnv1a64(\"FAMILY|CONFIG|FOLD|REPEAT\")",
        families: exp.families.iter().map(|f| f.name()).collect(),
        repeats: exp.protocol.repeats,
        folds: &exp.protocol.folds,
        early_stopping: &exp.protocol.early_stopping,
        normalization: exp.protocol.normalization,
        metric_units: exp.protocol.metric_units,
        best_configs: summary
            .iter()
            .map(|(f, c, _)| (f.name(), c.clone()))
            .collect(),
        failures: failures
            .iter()
            .map(|(f, e)| (f.name(), e.clone()))
            .collect(),
    };
    let json =
        serde_json::to_string_pretty(&manifest).map_err(|e| Error::Runtime(e.to_string()))?;
    fs::write(exp.output.join(MANIFEST_FILE), json + "\n")?;

    Ok(RunOutcome {
        output: exp.output,
        summary,
        failures,
        excluded,
    })
}
