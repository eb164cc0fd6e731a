//! Experiment configuration files (TOML).
//!
//! A minimal file names a data source and the families to run:
//!
//! ```toml
//! data = "series.csv"
//! families = ["LAST_VALUE", "ARIMA"]
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use qforecast_core::datagen::{generate, GeneratorSpec};
use qforecast_core::models::Family;
use qforecast_core::pipeline::{
    load_csv, EarlyStopping, FamilyGrid, FoldConfig, HyperGrid, MetricUnits, Normalization,
    Protocol, RawSeries, DEFAULT_GRID_CAP,
};
use qforecast_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// Environment variable naming the directory that holds result folders
/// when neither the config nor the command line gives one.
pub const OUTPUT_ROOT_ENV: &str = "QFORECAST_OUTPUT_ROOT";
const DEFAULT_OUTPUT_ROOT: &str = "results";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// CSV file, relative to the config file.
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default = "default_value_column")]
    pub value_column: String,
    #[serde(default)]
    pub timestamp_column: Option<String>,
    /// Synthetic series used instead of `data`.
    #[serde(default)]
    pub generate: Option<GeneratorSpec>,
    pub families: Vec<String>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub parallelism: Option<usize>,
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default)]
    pub metric_units: MetricUnits,
    #[serde(default)]
    pub folds: FoldConfig,
    #[serde(default)]
    pub early_stopping: EarlyStopping,
    /// Per-family grid overrides keyed by family name.
    #[serde(default)]
    pub grids: BTreeMap<String, FamilyGrid>,
    #[serde(default = "default_cap")]
    pub max_grid: usize,
}

fn default_value_column() -> String {
    "value".into()
}

fn default_repeats() -> usize {
    10
}

fn default_cap() -> usize {
    DEFAULT_GRID_CAP
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub parallelism: Option<usize>,
    pub repeats: Option<usize>,
    pub output: Option<PathBuf>,
}

/// A validated configuration, ready to run.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub families: Vec<Family>,
    pub grids: HyperGrid,
    pub protocol: Protocol,
    pub output: PathBuf,
    /// Directory that relative paths in the file resolve against.
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(p) = o.parallelism {
            self.parallelism = Some(p);
        }
        if let Some(r) = o.repeats {
            self.repeats = r;
        }
        if let Some(out) = &o.output {
            self.output = Some(out.clone());
        }
    }

    /// Checks every field and resolves names, grids and paths.
    pub fn validate(self, config_path: &Path) -> Result<Experiment> {
        match (&self.data, &self.generate) {
            (None, None) => {
                return Err(Error::Config(
                    "one of 'data' or 'generate' is required".into(),
                ))
            }
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "'data' and 'generate' are mutually exclusive".into(),
                ))
            }
            (None, Some(g)) => g.validate()?,
            _ => {}
        }
        if self.families.is_empty() {
            return Err(Error::Config("'families' lists no model families".into()));
        }
        let mut families = Vec::new();
        for name in &self.families {
            let f: Family = name.parse()?;
            if families.contains(&f) {
                return Err(Error::Config(format!("family '{name}' is listed twice")));
            }
            families.push(f);
        }
        let mut grids = HyperGrid {
            cap: self.max_grid,
            ..HyperGrid::default()
        };
        for (name, grid) in &self.grids {
            let f: Family = name
                .parse()
                .map_err(|e: Error| Error::Config(format!("in [grids]: {}", inner(&e))))?;
            grids.families.insert(f, grid.clone());
        }
        grids.validate()?;
        let protocol = Protocol {
            folds: self.folds,
            early_stopping: self.early_stopping,
            repeats: self.repeats,
            seed_base: self.seed,
            normalization: self.normalization,
            metric_units: self.metric_units,
            parallelism: self.parallelism,
        };
        protocol.validate()?;
        let base_dir = config_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let output = match &self.output {
            Some(p) => p.clone(),
            None => {
                let root = std::env::var_os(OUTPUT_ROOT_ENV)
                    .map(PathBuf::from)
                    .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT));
                let stem = config_path
                    .file_stem()
                    .map(|s| s.to_os_string())
                    .unwrap_or_else(|| "run".into());
                root.join(stem)
            }
        };
        Ok(Experiment {
            config: self,
            families,
            grids,
            protocol,
            output,
            base_dir,
        })
    }
}

fn inner(e: &Error) -> String {
    match e {
        Error::Config(m) => m.clone(),
        other => other.to_string(),
    }
}

impl Experiment {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = ExperimentConfig::parse(&text)?;
        cfg.apply(overrides);
        cfg.validate(path)
    }

    pub fn series(&self) -> Result<RawSeries> {
        if let Some(spec) = &self.config.generate {
            return generate(spec);
        }
        let path = self
            .base_dir
            .join(self.config.data.as_ref().expect("validated"));
        if !path.exists() {
            return Err(Error::Data(format!(
                "data file {} does not exist",
                path.display()
            )));
        }
        load_csv(
            &path,
            &self.config.value_column,
            self.config.timestamp_column.as_deref(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn validate(text: &str) -> Result<Experiment> {
        ExperimentConfig::parse(text)?.validate(Path::new("cfg/exp.toml"))
    }

    #[test]
    fn two_line_config_fills_defaults() {
        let e = validate("data = \"s.csv\"\nfamilies = [\"LAST_VALUE\"]\n").unwrap();
        assert_eq!(e.families, vec![Family::LastValue]);
        assert_eq!(e.protocol, Protocol::default());
        assert_eq!(e.base_dir, PathBuf::from("cfg"));
        assert_eq!(e.config.value_column, "value");
    }

    #[test]
    fn unknown_family_is_named() {
        let err = validate("data = \"s.csv\"\nfamilies = [\"QGAN\"]\n").unwrap_err();
        assert!(err.to_string().contains("QGAN"), "{err}");
        let err = validate("data = \"s.csv\"\nfamilies = [\"QNN\"]\n[grids.NOPE]\nn = [2]\n")
            .unwrap_err();
        assert!(err.to_string().contains("NOPE"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = validate("data = \"s.csv\"\nfamilies = [\"QNN\"]\nrepeat = 3\n").unwrap_err();
        assert!(err.to_string().contains("repeat"), "{err}");
        let err =
            validate("data = \"s.csv\"\nfamilies = [\"QNN\"]\n[folds]\nfoldlen = 3\n").unwrap_err();
        assert!(err.to_string().contains("foldlen"), "{err}");
    }

    #[test]
    fn source_and_protocol_checks() {
        assert!(validate("families = [\"QNN\"]\n").is_err());
        let both =
            "data = \"s.csv\"\nfamilies = [\"QNN\"]\n[generate]\nkind = \"SINE\"\nlength = 750\n";
        assert!(validate(both).is_err());
        assert!(validate("data = \"s.csv\"\nfamilies = []\n").is_err());
        assert!(validate("data = \"s.csv\"\nfamilies = [\"QNN\", \"qnn\"]\n").is_err());
        assert!(validate("data = \"s.csv\"\nfamilies = [\"QNN\"]\nrepeats = 0\n").is_err());
        let bad_grid = "data = \"s.csv\"\nfamilies = [\"QNN\"]\n[grids.QNN]\nwidth = [1]\n";
        assert!(validate(bad_grid).is_err());
    }

    #[test]
    fn overrides_win() {
        let mut cfg =
            ExperimentConfig::parse("data = \"s.csv\"\nfamilies = [\"ARIMA\"]\nseed = 4\n")
                .unwrap();
        cfg.apply(&Overrides {
            seed: Some(9),
            repeats: Some(2),
            parallelism: Some(1),
            output: Some("out".into()),
        });
        let e = cfg.validate(Path::new("x.toml")).unwrap();
        assert_eq!(e.protocol.seed_base, 9);
        assert_eq!(e.protocol.repeats, 2);
        assert_eq!(e.protocol.parallelism, Some(1));
        assert_eq!(e.output, PathBuf::from("out"));
    }

    #[test]
    fn generator_source() {
        let text = "families = [\"LAST_VALUE\"]\n[generate]\nkind = \"RANDOM_WALK\"\nlength = 750\nsigma = 1.0\nseed = 3\n";
        let e = validate(text).unwrap();
        assert_eq!(e.series().unwrap().len(), 750);
    }
}
