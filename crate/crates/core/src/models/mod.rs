//! The eight forecasters behind one fit/predict interface.

pub mod arima;
pub mod lstm;
pub mod qdbm;
pub mod qlstm;
pub mod qnn;
pub mod qrc;
pub mod train;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use arima::{arima_fit, arima_predict, kpss_statistic, select_differencing, ArimaModel, ArimaOrder, OrderChoice};
pub use lstm::{lstm_cell_step, LstmCellParams, LstmNet};
pub use qdbm::{qdbm_forward, qdbm_update, QdbmConfig, QdbmModel, QdbmWeights};
pub use qlstm::{qlstm_cell_step, QlstmCell, QlstmNet};
pub use qnn::{qnn_build_circuit, qnn_ising_build_circuit, QnnModel, QnnVariant};
pub use qrc::{qrc_build_reservoir, qrc_features, qrc_fit_readout, QrcModel};
pub use train::{
    gradient_check, train_supervised, Adam, Differentiable, TrainConfig, TrainSummary,
};

use crate::anneal::AnnealSchedule;
use crate::error::{config, usage, Error, Result};
use crate::pipeline::{windowize, EarlyStopping};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Family {
    LastValue,
    Arima,
    Lstm,
    Qnn,
    QnnIsing,
    Qdbm,
    Qrc,
    Qlstm,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::LastValue,
        Family::Arima,
        Family::Lstm,
        Family::Qnn,
        Family::QnnIsing,
        Family::Qdbm,
        Family::Qrc,
        Family::Qlstm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::LastValue => "LAST_VALUE",
            Family::Arima => "ARIMA",
            Family::Lstm => "LSTM",
            Family::Qnn => "QNN",
            Family::QnnIsing => "QNN_ISING",
            Family::Qdbm => "QDBM",
            Family::Qrc => "QRC",
            Family::Qlstm => "QLSTM",
        }
    }

    pub fn is_quantum(self) -> bool {
        matches!(
            self,
            Family::Qnn | Family::QnnIsing | Family::Qdbm | Family::Qrc | Family::Qlstm
        )
    }

    /// Hyperparameters the family accepts.
    pub fn schema(self) -> &'static [HyperParam] {
        match self {
            Family::LastValue => LAST_VALUE_SCHEMA,
            Family::Arima => ARIMA_SCHEMA,
            Family::Lstm => LSTM_SCHEMA,
            Family::Qnn => QNN_SCHEMA,
            Family::QnnIsing => QNN_ISING_SCHEMA,
            Family::Qdbm => QDBM_SCHEMA,
            Family::Qrc => QRC_SCHEMA,
            Family::Qlstm => QLSTM_SCHEMA,
        }
    }
}

use HyperParam as H;
const WINDOW: H = H::int("n", 1.0, 64.0, Some(4.0));
const LR: H = H::real("lr", 1e-6, 100.0, Some(1e-2));
const BATCH: H = H::int("batch", 1.0, 4096.0, Some(32.0));
const LAST_VALUE_SCHEMA: &[H] = &[H::int("n", 1.0, 64.0, Some(1.0))];
const ARIMA_SCHEMA: &[H] = &[
    H::int("p", 0.0, 3.0, None),
    H::int("d", 0.0, 2.0, None),
    H::int("q", 0.0, 3.0, None),
];
const LSTM_SCHEMA: &[H] = &[WINDOW, H::int("hidden", 1.0, 256.0, Some(8.0)), LR, BATCH];
const QNN_SCHEMA: &[H] = &[
    H::int("n", 1.0, 12.0, Some(4.0)),
    H::int("layers", 1.0, 16.0, Some(2.0)),
    LR,
    BATCH,
];
const QNN_ISING_SCHEMA: &[H] = &[
    H::int("n", 2.0, 12.0, Some(4.0)),
    H::int("layers", 1.0, 16.0, Some(2.0)),
    LR,
    BATCH,
];
const QDBM_SCHEMA: &[H] = &[
    WINDOW,
    H::int("hidden", 1.0, 20.0, Some(4.0)),
    LR,
    H::int("reads", 1.0, 1000.0, Some(10.0)),
    H::int("sweeps", 1.0, 10000.0, Some(50.0)),
];
const QRC_SCHEMA: &[H] = &[
    WINDOW,
    H::int("qubits", 1.0, 12.0, Some(4.0)),
    H::int("depth", 0.0, 32.0, Some(2.0)),
    H::real("lambda", 0.0, 1e6, Some(1e-3)),
    H::int("correlators", 0.0, 1.0, Some(1.0)),
];
// `qubits` defaults to hidden + 1.
const QLSTM_SCHEMA: &[H] = &[
    WINDOW,
    H::int("hidden", 1.0, 11.0, Some(2.0)),
    H::int("layers", 1.0, 8.0, Some(1.0)),
    LR,
    BATCH,
    H::int("qubits", 1.0, 12.0, None),
];

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown model family '{s}' (expected one of {})",
                    Family::ALL.map(Family::name).join(", ")
                ))
            })
    }
}

/// One named hyperparameter with its admissible closed range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParam {
    pub name: &'static str,
    pub min: f64,
    pub max: f64,
    pub integer: bool,
    pub default: Option<f64>,
}

impl HyperParam {
    const fn int(name: &'static str, min: f64, max: f64, default: Option<f64>) -> Self {
        Self {
            name,
            min,
            max,
            integer: true,
            default,
        }
    }

    const fn real(name: &'static str, min: f64, max: f64, default: Option<f64>) -> Self {
        Self {
            name,
            min,
            max,
            integer: false,
            default,
        }
    }

    fn check(&self, v: f64) -> Result<()> {
        if !v.is_finite() || v < self.min || v > self.max {
            return config(format!(
                "hyperparameter '{}' = {v} is outside [{}, {}]",
                self.name, self.min, self.max
            ));
        }
        if self.integer && v.fract() != 0.0 {
            return config(format!(
                "hyperparameter '{}' must be an integer, got {v}",
                self.name
            ));
        }
        Ok(())
    }
}

pub type HyperParams = BTreeMap<String, f64>;

/// A family plus hyperparameter values and a seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub hyperparameters: HyperParams,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(family: Family, hyperparameters: HyperParams, seed: u64) -> Result<Self> {
        let spec = Self {
            family,
            hyperparameters,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let schema = self.family.schema();
        for (name, &v) in &self.hyperparameters {
            match schema.iter().find(|h| h.name == name) {
                Some(h) => h.check(v)?,
                None => {
                    return config(format!(
                        "{} has no hyperparameter '{name}' (accepted: {})",
                        self.family,
                        schema.iter().map(|h| h.name).collect::<Vec<_>>().join(", ")
                    ))
                }
            }
        }
        match self.family {
            Family::Arima => {
                let given = ["p", "d", "q"]
                    .iter()
                    .filter(|k| self.hyperparameters.contains_key(**k))
                    .count();
                if given != 0 && given != 3 {
                    return config("ARIMA needs all of p, d, q or none of them (automatic order)");
                }
            }
            Family::Qlstm => {
                let hidden = self.get("hidden")? as usize;
                let qubits = self.qlstm_qubits()?;
                if hidden > qubits {
                    return config(format!(
                        "QLSTM hidden size {hidden} exceeds qubits {qubits}"
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// The value of `name`, falling back to the schema default.
    pub fn get(&self, name: &str) -> Result<f64> {
        if let Some(v) = self.hyperparameters.get(name) {
            return Ok(*v);
        }
        self.family
            .schema()
            .iter()
            .find(|h| h.name == name)
            .and_then(|h| h.default)
            .ok_or_else(|| Error::Config(format!("{} needs hyperparameter '{name}'", self.family)))
    }

    fn get_usize(&self, name: &str) -> Result<usize> {
        Ok(self.get(name)? as usize)
    }

    fn qlstm_qubits(&self) -> Result<usize> {
        match self.hyperparameters.get("qubits") {
            Some(q) => Ok(*q as usize),
            None => Ok(self.get_usize("hidden")? + 1),
        }
    }

    /// Number of trailing values a forecast consumes. ARIMA reads the whole
    /// supplied history and reports 1.
    pub fn window_len(&self) -> usize {
        match self.family {
            Family::Arima => 1,
            _ => self.get("n").map(|v| v as usize).unwrap_or(1),
        }
    }

    /// `name=value` pairs in name order, e.g. `hidden=8,lr=0.01,n=4`.
    pub fn config_string(&self) -> String {
        config_string(&self.hyperparameters)
    }
}

pub fn config_string(hp: &HyperParams) -> String {
    if hp.is_empty() {
        return "default".to_string();
    }
    hp.iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn last_value_predict(window: &[f64]) -> Result<f64> {
    match window.last() {
        Some(v) => Ok(*v),
        None => usage("last-value forecast needs a non-empty window"),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Fitted {
    LastValue,
    Arima(ArimaModel),
    Lstm(LstmNet),
    Qnn(QnnModel),
    Qdbm(QdbmModel),
    Qrc(QrcModel),
    Qlstm(QlstmNet),
}

/// A fitted forecaster. Immutable after [`fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub window_len: usize,
    /// Per-epoch validation losses; empty for the closed-form families.
    pub trace: Vec<f64>,
    pub best_epoch: Option<usize>,
    /// Non-fatal conditions met while fitting.
    pub flags: Vec<String>,
    fitted: Fitted,
}

impl TrainedModel {
    pub fn family(&self) -> Family {
        self.spec.family
    }

    /// Forecast from exactly `window_len` inputs.
    pub fn predict_window(&self, window: &[f64]) -> Result<f64> {
        if window.len() != self.window_len {
            return usage(format!(
                "{} expects a window of {} values, got {}",
                self.spec.family,
                self.window_len,
                window.len()
            ));
        }
        self.predict_next(window)
    }

    /// Forecast of the value following `history`. Windowed models read the
    /// last `window_len` values; ARIMA reads the full history.
    pub fn predict_next(&self, history: &[f64]) -> Result<f64> {
        if history.len() < self.window_len {
            return usage(format!(
                "{} needs at least {} past values, got {}",
                self.spec.family,
                self.window_len,
                history.len()
            ));
        }
        let window = &history[history.len() - self.window_len..];
        match &self.fitted {
            Fitted::LastValue => last_value_predict(window),
            Fitted::Arima(m) => arima_predict(m, history),
            Fitted::Lstm(m) => m.predict(window),
            Fitted::Qnn(m) => m.predict(window),
            Fitted::Qdbm(m) => m.predict(window),
            Fitted::Qrc(m) => m.predict(window),
            Fitted::Qlstm(m) => m.predict(window),
        }
    }
}

/// Fits `spec` on `train`. Gradient-trained families and QDBM hold out the
/// last tenth of their windows for early stopping.
pub fn fit(
    spec: &ModelSpec,
    train: &[f64],
    early_stopping: &EarlyStopping,
) -> Result<TrainedModel> {
    spec.validate()?;
    if let Some(i) = train.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!(
            "training value at index {i} is not finite"
        )));
    }
    let n = spec.window_len();
    let mut flags = Vec::new();
    let mut summary = TrainSummary::default();
    let train_seed = spec.seed ^ 0x9e37_79b9_7f4a_7c15;
    let gradient = |lr: f64, batch: usize| TrainConfig {
        lr,
        batch_size: batch,
        early_stopping: *early_stopping,
    };

    let fitted = match spec.family {
        Family::LastValue => {
            if train.is_empty() {
                return usage("cannot fit on an empty series");
            }
            Fitted::LastValue
        }
        Family::Arima => {
            let choice = if spec.hyperparameters.contains_key("p") {
                OrderChoice::Fixed(ArimaOrder::new(
                    spec.get_usize("p")?,
                    spec.get_usize("d")?,
                    spec.get_usize("q")?,
                ))
            } else {
                OrderChoice::Auto
            };
            let m = arima_fit(train, choice)?;
            if !m.converged {
                flags.push(format!("arima_nonconverged{}", m.order));
            }
            Fitted::Arima(m)
        }
        Family::Lstm => {
            let (x, y) = windowize(train, n)?;
            let mut m = LstmNet::new(spec.get_usize("hidden")?, spec.seed)?;
            summary = train_supervised(
                &mut m,
                &x,
                &y,
                &gradient(spec.get("lr")?, spec.get_usize("batch")?),
                train_seed,
            )?;
            Fitted::Lstm(m)
        }
        Family::Qnn | Family::QnnIsing => {
            let (x, y) = windowize(train, n)?;
            let variant = if spec.family == Family::Qnn {
                QnnVariant::CnotChain
            } else {
                QnnVariant::Ising
            };
            let mut m = QnnModel::new(variant, n, spec.get_usize("layers")?, spec.seed)?;
            summary = train_supervised(
                &mut m,
                &x,
                &y,
                &gradient(spec.get("lr")?, spec.get_usize("batch")?),
                train_seed,
            )?;
            Fitted::Qnn(m)
        }
        Family::Qdbm => {
            let (x, y) = windowize(train, n)?;
            let cfg = QdbmConfig {
                n_hidden: spec.get_usize("hidden")?,
                lr: spec.get("lr")?,
                schedule: AnnealSchedule {
                    sweeps: spec.get_usize("sweeps")?,
                    num_reads: spec.get_usize("reads")?,
                    ..AnnealSchedule::default()
                },
                early_stopping: *early_stopping,
            };
            let (m, s) = QdbmModel::fit(&x, &y, &cfg, spec.seed)?;
            summary = s;
            Fitted::Qdbm(m)
        }
        Family::Qrc => {
            let (x, y) = windowize(train, n)?;
            let m = QrcModel::fit(
                &x,
                &y,
                spec.get_usize("qubits")?,
                spec.get_usize("depth")?,
                spec.get("lambda")?,
                spec.get("correlators")? != 0.0,
                spec.seed,
            )?;
            if m.readout().fell_back {
                flags.push("ridge_fallback".to_string());
            }
            let mse = x
                .iter()
                .zip(&y)
                .map(|(w, t)| m.predict(w).map(|p| (p - t).powi(2)))
                .sum::<Result<f64>>()?
                / x.len() as f64;
            summary.trace.push(mse);
            Fitted::Qrc(m)
        }
        Family::Qlstm => {
            let (x, y) = windowize(train, n)?;
            let mut m = QlstmNet::new(
                spec.get_usize("hidden")?,
                spec.qlstm_qubits()?,
                spec.get_usize("layers")?,
                spec.seed,
            )?;
            summary = train_supervised(
                &mut m,
                &x,
                &y,
                &gradient(spec.get("lr")?, spec.get_usize("batch")?),
                train_seed,
            )?;
            Fitted::Qlstm(m)
        }
    };
    Ok(TrainedModel {
        spec: spec.clone(),
        window_len: n,
        trace: summary.trace,
        best_epoch: summary.best_epoch,
        flags,
        fitted,
    })
}
