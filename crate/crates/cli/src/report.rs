//! `report` and `hpo-plot`: tables and charts recomputed from the record file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use qforecast_core::models::Family;
use qforecast_core::pipeline::{aggregate, mean_std, AggregateResult, FoldPurpose, RunRecord};
use qforecast_core::{Error, Result};

use crate::run::{MANIFEST_FILE, RECORDS_FILE};
use crate::svg::{bar_chart, panel_grid, Datum, Panel};

pub const REPORT_SVG: &str = "best_models.svg";

pub fn load_records(dir: &Path) -> Result<Vec<RunRecord>> {
    let path = dir.join(RECORDS_FILE);
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let r: RunRecord = serde_json::from_str(line)
            .map_err(|e| Error::Data(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(r);
    }
    if out.is_empty() {
        return Err(Error::Data(format!("{} holds no records", path.display())));
    }
    Ok(out)
}

/// One line of the ranked table.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedRow {
    pub family: Family,
    pub config: String,
    pub test: AggregateResult,
    /// Diverged runs left out of the means, over both phases.
    pub diverged_runs: usize,
    /// Validation-phase configs with no scored run.
    pub excluded_configs: usize,
}

fn by_family(records: &[RunRecord], phase: FoldPurpose) -> BTreeMap<Family, Vec<RunRecord>> {
    let mut out: BTreeMap<Family, Vec<RunRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.phase == phase) {
        out.entry(r.family).or_default().push(r.clone());
    }
    out
}

/// Families ranked by mean test MAE, ties by family name.
pub fn ranked(records: &[RunRecord]) -> Vec<RankedRow> {
    let validation = by_family(records, FoldPurpose::Validation);
    let mut rows: Vec<RankedRow> = by_family(records, FoldPurpose::Test)
        .into_iter()
        .map(|(family, test)| {
            let search = validation.get(&family).map(Vec::as_slice).unwrap_or(&[]);
            let mut per_config: BTreeMap<&str, Vec<&RunRecord>> = BTreeMap::new();
            for r in search {
                per_config.entry(r.config.as_str()).or_default().push(r);
            }
            RankedRow {
                family,
                config: test[0].config.clone(),
                test: aggregate(&test),
                diverged_runs: search.iter().chain(&test).filter(|r| r.diverged).count(),
                excluded_configs: per_config
                    .values()
                    .filter(|rs| !rs.iter().any(|r| r.is_scored()))
                    .count(),
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        let key = |r: &RankedRow| {
            if r.test.count > 0 {
                r.test.mean_mae
            } else {
                f64::INFINITY
            }
        };
        key(a)
            .total_cmp(&key(b))
            .then(a.family.name().cmp(b.family.name()))
    });
    rows
}

pub fn render_table(rows: &[RankedRow]) -> String {
    let mut out = format!(
        "{:<4} {:<11} {:>12} {:>12} {:>6}  {}\n",
        "rank", "family", "mean_mae", "std_mae", "runs", "config"
    );
    for (i, r) in rows.iter().enumerate() {
        let mark = if r.diverged_runs > 0 || r.excluded_configs > 0 {
            "*"
        } else {
            ""
        };
        out += &format!(
            "{:<4} {:<11} {:>12.6} {:>12.6} {:>6}  {}\n",
            i + 1,
            format!("{}{mark}", r.family.name()),
            r.test.mean_mae,
            r.test.std_mae,
            r.test.count,
            r.config
        );
    }
    let noted: Vec<&RankedRow> = rows
        .iter()
        .filter(|r| r.diverged_runs > 0 || r.excluded_configs > 0)
        .collect();
    if !noted.is_empty() {
        out += "\n* excluded from means:\n";
        for r in noted {
            out += &format!(
                "  {}: {} diverged run(s) excluded, {} configuration(s) with no scored run\n",
                r.family.name(),
                r.diverged_runs,
                r.excluded_configs
            );
        }
    }
    out
}

/// Prints the ranked table and writes the bar chart; returns the table.
pub fn cmd_report(dir: &Path) -> Result<String> {
    let records = load_records(dir)?;
    let rows = ranked(&records);
    if rows.is_empty() {
        return Err(Error::Data(format!(
            "{} holds no test-fold records",
            dir.display()
        )));
    }
    let bars: Vec<Datum> = rows
        .iter()
        .map(|r| Datum {
            label: r.family.name().to_string(),
            value: r.test.mean_mae,
            err: r.test.std_mae,
        })
        .collect();
    fs::write(
        dir.join(REPORT_SVG),
        bar_chart("Best configuration per family", "test MAE", &bars),
    )?;
    Ok(render_table(&rows))
}

fn label(v: f64) -> String {
    format!("{v}")
}

/// Mean and std of validation MAE per value of each hyperparameter, pooled
/// over every other hyperparameter.
pub fn hpo_panels(records: &[RunRecord]) -> Vec<Panel> {
    let mut by_param: BTreeMap<&str, BTreeMap<u64, (f64, Vec<f64>)>> = BTreeMap::new();
    for r in records {
        for (name, v) in &r.hyperparameters {
            let slot = by_param
                .entry(name.as_str())
                .or_default()
                .entry(ordered_bits(*v))
                .or_insert((*v, Vec::new()));
            if r.is_scored() {
                slot.1.extend(r.mae);
            }
        }
    }
    by_param
        .into_iter()
        .map(|(name, values)| Panel {
            title: name.to_string(),
            points: values
                .into_values()
                .map(|(v, maes)| {
                    let (m, s) = mean_std(&maes);
                    Datum {
                        label: label(v),
                        value: m,
                        err: s,
                    }
                })
                .collect(),
        })
        .collect()
}

/// Key that sorts finite floats numerically.
fn ordered_bits(v: f64) -> u64 {
    let b = v.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

fn requested_families(dir: &Path) -> Option<Vec<Family>> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE)).ok()?;
    let v: serde_json::Value = serde_json::from_str(&text).ok()?;
    v.get("families")?
        .as_array()?
        .iter()
        .map(|f| f.as_str().and_then(|s| s.parse().ok()))
        .collect()
}

/// What `hpo-plot` wrote and skipped.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HpoOutcome {
    pub written: Vec<PathBuf>,
    pub notices: Vec<String>,
}

pub fn cmd_hpo_plot(dir: &Path) -> Result<HpoOutcome> {
    let records = load_records(dir)?;
    let search = by_family(&records, FoldPurpose::Validation);
    if search.is_empty() {
        return Err(Error::Data(format!(
            "{} holds no grid-search records",
            dir.display()
        )));
    }
    let mut families = requested_families(dir).unwrap_or_default();
    for f in search.keys() {
        if !families.contains(f) {
            families.push(*f);
        }
    }
    let mut out = HpoOutcome::default();
    for family in families {
        let Some(recs) = search.get(&family) else {
            out.notices
                .push(format!("{family}: no grid-search records, panel skipped"));
            continue;
        };
        let panels = hpo_panels(recs);
        if panels.is_empty() {
            out.notices.push(format!(
                "{family}: no hyperparameters were searched, panel skipped"
            ));
            continue;
        }
        let path = dir.join(format!("hpo_{}.svg", family.name()));
        fs::write(
            &path,
            panel_grid(
                &format!("{family}: validation MAE by hyperparameter"),
                "MAE",
                &panels,
                3,
            ),
        )?;
        out.written.push(path);
    }
    Ok(out)
}
