//! ARIMA(p, d, q) with conditional-sum-of-squares estimation.
//!
//! The series is differenced `d` times. An ARMA(p, q) is fitted to the
//! differenced values, demeaned only when `d = 0`: Hannan–Rissanen supplies
//! starting coefficients (a long autoregression estimates the innovations,
//! then a regression on lagged values and lagged innovations), and gradient
//! descent with backtracking minimizes the conditional sum of squares
//!
//! ```text
//! e_t = y_t − Σ φ_i y_{t−i} − Σ θ_j e_{t−j},   t ≥ p,  e_t = 0 for t < p
//! ```
//!
//! Automatic order selection first picks `d ≤ 2` by repeated KPSS level tests
//! at the 5% level (difference while the test rejects stationarity), then
//! scans `p, q ∈ 0..=3` and keeps the lowest `AIC = m·ln(RSS/m) + 2(p+q+1)`
//! with `m` the differenced length.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{data, usage, Result};

pub const AUTO_MAX_P: usize = 3;
pub const AUTO_MAX_D: usize = 2;
pub const AUTO_MAX_Q: usize = 3;
const CSS_MAX_ITERS: usize = 500;
/// 5% critical value of the KPSS level-stationarity statistic.
pub const KPSS_CRITICAL_5PCT: f64 = 0.463;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl ArimaOrder {
    pub fn new(p: usize, d: usize, q: usize) -> Self {
        Self { p, d, q }
    }

    fn total(&self) -> usize {
        self.p + self.d + self.q
    }
}

impl std::fmt::Display for ArimaOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{})", self.p, self.d, self.q)
    }
}

/// Fixed order or automatic selection by AIC.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderChoice {
    Fixed(ArimaOrder),
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArimaModel {
    pub order: ArimaOrder,
    /// Mean of the differenced series; zero whenever `d > 0`.
    pub mean: f64,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    /// In-sample innovations on the differenced training series.
    pub residuals: Vec<f64>,
    pub aic: f64,
    pub converged: bool,
}

impl ArimaModel {
    /// A model with given coefficients, e.g. for forecasting with known dynamics.
    pub fn with_coefficients(
        order: ArimaOrder,
        mean: f64,
        ar: Vec<f64>,
        ma: Vec<f64>,
    ) -> Result<Self> {
        if ar.len() != order.p || ma.len() != order.q {
            return usage(format!(
                "ARIMA{order} needs {} AR and {} MA coefficients, got {} and {}",
                order.p,
                order.q,
                ar.len(),
                ma.len()
            ));
        }
        Ok(Self {
            order,
            mean,
            ar,
            ma,
            residuals: Vec::new(),
            aic: f64::NAN,
            converged: true,
        })
    }
}

pub fn difference(x: &[f64], d: usize) -> Vec<f64> {
    let mut out = x.to_vec();
    for _ in 0..d {
        out = out.windows(2).map(|w| w[1] - w[0]).collect();
    }
    out
}

/// Innovations of the ARMA recursion over demeaned `y`.
fn innovations(y: &[f64], ar: &[f64], ma: &[f64]) -> Vec<f64> {
    let p = ar.len();
    let mut e = vec![0.0; y.len()];
    for t in p..y.len() {
        let mut v = y[t];
        for (i, phi) in ar.iter().enumerate() {
            v -= phi * y[t - 1 - i];
        }
        for (j, theta) in ma.iter().enumerate() {
            if t > j {
                v -= theta * e[t - 1 - j];
            }
        }
        e[t] = v;
    }
    e
}

fn css(y: &[f64], ar: &[f64], ma: &[f64]) -> f64 {
    innovations(y, ar, ma)[ar.len()..]
        .iter()
        .map(|e| e * e)
        .sum()
}

/// CSS value and gradient with respect to `[φ; θ]`.
fn css_gradient(y: &[f64], ar: &[f64], ma: &[f64]) -> (f64, Vec<f64>) {
    let (p, q) = (ar.len(), ma.len());
    let k = p + q;
    let e = innovations(y, ar, ma);
    // de[t][k]: derivative of e_t with respect to coefficient k.
    let mut de = vec![vec![0.0; k]; y.len()];
    let mut grad = vec![0.0; k];
    let mut value = 0.0;
    for t in p..y.len() {
        let mut row = vec![0.0; k];
        for i in 0..p {
            row[i] = -y[t - 1 - i];
        }
        for j in 0..q {
            if t > j {
                row[p + j] = -e[t - 1 - j];
            }
        }
        for (j, theta) in ma.iter().enumerate() {
            if t > j {
                for c in 0..k {
                    row[c] -= theta * de[t - 1 - j][c];
                }
            }
        }
        for c in 0..k {
            grad[c] += 2.0 * e[t] * row[c];
        }
        value += e[t] * e[t];
        de[t] = row;
    }
    (value, grad)
}

fn least_squares(rows: &[Vec<f64>], targets: &[f64]) -> Option<Vec<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        return Some(Vec::new());
    }
    let x = DMatrix::from_fn(rows.len(), rows[0].len(), |r, c| rows[r][c]);
    let b = DVector::from_column_slice(targets);
    let sol = x.svd(true, true).solve(&b, 1e-12).ok()?;
    Some(sol.iter().copied().collect())
}

/// Hannan–Rissanen starting values for ARMA(p, q) on demeaned `y`.
fn hannan_rissanen(y: &[f64], p: usize, q: usize) -> (Vec<f64>, Vec<f64>) {
    let lagged = |series: &[f64], t: usize, lags: usize| {
        (1..=lags).map(|l| series[t - l]).collect::<Vec<f64>>()
    };
    if q == 0 {
        let rows: Vec<Vec<f64>> = (p..y.len()).map(|t| lagged(y, t, p)).collect();
        let ar = least_squares(&rows, &y[p..]).unwrap_or_else(|| vec![0.0; p]);
        return (ar, Vec::new());
    }
    let long = (p + q)
        .max((y.len() / 10).min(20))
        .max(1)
        .min(y.len().saturating_sub(2));
    let rows: Vec<Vec<f64>> = (long..y.len()).map(|t| lagged(y, t, long)).collect();
    let long_ar = least_squares(&rows, &y[long..]).unwrap_or_else(|| vec![0.0; long]);
    let mut resid = vec![0.0; y.len()];
    for t in long..y.len() {
        resid[t] = y[t]
            - long_ar
                .iter()
                .enumerate()
                .map(|(i, a)| a * y[t - 1 - i])
                .sum::<f64>();
    }
    let start = long + q;
    if start >= y.len() {
        return (vec![0.0; p], vec![0.0; q]);
    }
    let rows: Vec<Vec<f64>> = (start..y.len())
        .map(|t| {
            let mut r = lagged(y, t, p);
            r.extend(lagged(&resid, t, q));
            r
        })
        .collect();
    match least_squares(&rows, &y[start..]) {
        Some(beta) => (beta[..p].to_vec(), beta[p..].to_vec()),
        None => (vec![0.0; p], vec![0.0; q]),
    }
}

/// Gradient descent with Armijo backtracking on the CSS. Returns the
/// coefficients and whether the stopping tolerance was reached.
fn refine_css(y: &[f64], ar: Vec<f64>, ma: Vec<f64>) -> (Vec<f64>, Vec<f64>, bool) {
    let p = ar.len();
    let mut beta: Vec<f64> = ar.into_iter().chain(ma).collect();
    let split = |b: &[f64]| (b[..p].to_vec(), b[p..].to_vec());
    let (mut value, mut grad) = {
        let (a, m) = split(&beta);
        css_gradient(y, &a, &m)
    };
    if !value.is_finite() {
        beta.iter_mut().for_each(|b| *b = 0.0);
        let (a, m) = split(&beta);
        (value, grad) = css_gradient(y, &a, &m);
    }
    let mut step = 1.0 / (1.0 + y.iter().map(|v| v * v).sum::<f64>());
    for _ in 0..CSS_MAX_ITERS {
        let gnorm2: f64 = grad.iter().map(|g| g * g).sum();
        if gnorm2.sqrt() <= 1e-8 * (1.0 + value) {
            let (a, m) = split(&beta);
            return (a, m, true);
        }
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = beta.iter().zip(&grad).map(|(b, g)| b - step * g).collect();
            let (a, m) = split(&trial);
            let v = css(y, &a, &m);
            if v.is_finite() && v <= value - 1e-4 * step * gnorm2 {
                let improvement = value - v;
                beta = trial;
                (value, grad) = css_gradient(y, &a, &m);
                step *= 2.0;
                accepted = true;
                if improvement <= 1e-14 * (1.0 + value) {
                    let (a, m) = split(&beta);
                    return (a, m, true);
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No descent step exists at machine precision: a stationary point.
            let (a, m) = split(&beta);
            return (a, m, true);
        }
    }
    let (a, m) = split(&beta);
    (a, m, false)
}

fn fit_order(train: &[f64], order: ArimaOrder) -> Result<ArimaModel> {
    let z = difference(train, order.d);
    let mean = if order.d == 0 {
        z.iter().sum::<f64>() / z.len() as f64
    } else {
        0.0
    };
    let y: Vec<f64> = z.iter().map(|v| v - mean).collect();
    let (ar0, ma0) = hannan_rissanen(&y, order.p, order.q);
    let (ar, ma, converged) = if order.q == 0 {
        (ar0, ma0, true)
    } else {
        refine_css(&y, ar0, ma0)
    };
    let residuals = innovations(&y, &ar, &ma);
    let rss: f64 = residuals[order.p..].iter().map(|e| e * e).sum();
    let m = z.len() as f64;
    let aic = m * (rss / m).max(f64::MIN_POSITIVE).ln() + 2.0 * (order.p + order.q + 1) as f64;
    Ok(ArimaModel {
        order,
        mean,
        ar,
        ma,
        residuals,
        aic,
        converged,
    })
}

/// KPSS statistic for level stationarity with a Bartlett long-run variance
/// over `⌊3√n/13⌋` lags. `None` for constant or too-short input.
pub fn kpss_statistic(x: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 3 {
        return None;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let e: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let mut partial = 0.0;
    let eta: f64 = e
        .iter()
        .map(|v| {
            partial += v;
            partial * partial
        })
        .sum::<f64>()
        / (n * n) as f64;
    let lags = (3.0 * (n as f64).sqrt() / 13.0) as usize;
    let mut long_run = e.iter().map(|v| v * v).sum::<f64>();
    for k in 1..=lags.min(n - 1) {
        let w = 1.0 - k as f64 / (lags + 1) as f64;
        long_run += 2.0 * w * (k..n).map(|t| e[t] * e[t - k]).sum::<f64>();
    }
    long_run /= n as f64;
    (long_run > 0.0).then(|| eta / long_run)
}

/// Differencing order: difference while KPSS rejects level stationarity at
/// 5%, up to `max_d` times.
pub fn select_differencing(x: &[f64], max_d: usize) -> usize {
    let mut d = 0;
    let mut y = x.to_vec();
    while d < max_d && kpss_statistic(&y).is_some_and(|s| s > KPSS_CRITICAL_5PCT) {
        y = difference(&y, 1);
        d += 1;
    }
    d
}

pub fn arima_fit(train: &[f64], choice: OrderChoice) -> Result<ArimaModel> {
    if let Some(i) = train.iter().position(|v| !v.is_finite()) {
        return data(format!("ARIMA input has a non-finite value at index {i}"));
    }
    match choice {
        OrderChoice::Fixed(order) => {
            if train.len() <= order.total() + 10 {
                return data(format!(
                    "ARIMA{order} needs more than {} points, got {}",
                    order.total() + 10,
                    train.len()
                ));
            }
            fit_order(train, order)
        }
        OrderChoice::Auto => {
            let d = select_differencing(train, AUTO_MAX_D);
            let mut best: Option<ArimaModel> = None;
            for p in 0..=AUTO_MAX_P {
                for q in 0..=AUTO_MAX_Q {
                    let order = ArimaOrder::new(p, d, q);
                    if train.len() <= order.total() + 10 {
                        continue;
                    }
                    let m = fit_order(train, order)?;
                    if best.as_ref().map_or(true, |b| m.aic < b.aic) {
                        best = Some(m);
                    }
                }
            }
            best.ok_or_else(|| {
                crate::error::Error::Data(format!(
                    "series of length {} is too short for any ARIMA order",
                    train.len()
                ))
            })
        }
    }
}

/// One-step forecast after the last value of `history`. Innovations for the
/// MA terms are rebuilt by running the recursion over the supplied history.
pub fn arima_predict(model: &ArimaModel, history: &[f64]) -> Result<f64> {
    let o = model.order;
    let need = o.total().max(1);
    if history.len() < need {
        return usage(format!(
            "ARIMA{o} forecast needs at least {need} past values, got {}",
            history.len()
        ));
    }
    let z = difference(history, o.d);
    let y: Vec<f64> = z.iter().map(|v| v - model.mean).collect();
    let e = innovations(&y, &model.ar, &model.ma);
    let t = y.len();
    let mut next = model.mean;
    for (i, phi) in model.ar.iter().enumerate() {
        next += phi * y[t - 1 - i];
    }
    for (j, theta) in model.ma.iter().enumerate() {
        if t > j {
            next += theta * e[t - 1 - j];
        }
    }
    // Undo the differencing one level at a time.
    for k in (0..o.d).rev() {
        next += *difference(history, k)
            .last()
            .expect("history longer than d");
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate, GeneratorSpec};

    #[test]
    fn constant_series_forecasts_constant() {
        let x = vec![3.5; 40];
        let m = arima_fit(&x, OrderChoice::Fixed(ArimaOrder::new(0, 1, 0))).unwrap();
        assert_eq!(arima_predict(&m, &x).unwrap(), 3.5);
    }

    #[test]
    fn random_walk_forecasts_last_value() {
        let s = generate(&GeneratorSpec::random_walk(200, 3, 0.0, 1.0)).unwrap();
        let m = arima_fit(&s.values, OrderChoice::Fixed(ArimaOrder::new(0, 1, 0))).unwrap();
        let last = *s.values.last().unwrap();
        assert_eq!(arima_predict(&m, &s.values).unwrap(), last);
        let mut h = s.values[..50].to_vec();
        h.push(0.42);
        assert_eq!(arima_predict(&m, &h).unwrap(), 0.42);
    }

    #[test]
    fn ar1_known_coefficient() {
        let m = ArimaModel::with_coefficients(ArimaOrder::new(1, 0, 0), 0.0, vec![0.5], vec![])
            .unwrap();
        assert!((arima_predict(&m, &[0.1, 0.8]).unwrap() - 0.4).abs() < 1e-15);
        assert!(
            ArimaModel::with_coefficients(ArimaOrder::new(1, 0, 0), 0.0, vec![], vec![]).is_err()
        );
    }

    #[test]
    fn recovers_ar1_coefficient() {
        let s = generate(&GeneratorSpec::ar1(500, 17, 0.7, 0.1)).unwrap();
        let train = &s.values[..450];
        let m = arima_fit(train, OrderChoice::Fixed(ArimaOrder::new(1, 0, 0))).unwrap();
        // Oracle: least squares of x_{t+1} on x_t after demeaning.
        let mean = train.iter().sum::<f64>() / train.len() as f64;
        let c: Vec<f64> = train.iter().map(|v| v - mean).collect();
        let num: f64 = c.windows(2).map(|w| w[0] * w[1]).sum();
        let den: f64 = c[..c.len() - 1].iter().map(|v| v * v).sum();
        assert!((m.ar[0] - num / den).abs() < 1e-9);
        assert!((m.ar[0] - 0.7).abs() < 0.1, "phi = {}", m.ar[0]);

        // Held-out one-step MAE beats the last-value rule.
        let (mut err_arima, mut err_last) = (0.0, 0.0);
        for t in 450..500 {
            let y = s.values[t];
            err_arima += (arima_predict(&m, &s.values[..t]).unwrap() - y).abs();
            err_last += (s.values[t - 1] - y).abs();
        }
        assert!(err_arima < err_last, "{err_arima} vs {err_last}");
    }

    #[test]
    fn css_gradient_matches_finite_differences() {
        let s = generate(&GeneratorSpec::ar1(120, 5, 0.4, 1.0)).unwrap();
        let (ar, ma) = (vec![0.3, -0.1], vec![0.2, 0.15]);
        let (_, g) = css_gradient(&s.values, &ar, &ma);
        let eps = 1e-6;
        for k in 0..4 {
            let mut b: Vec<f64> = ar.iter().chain(&ma).copied().collect();
            b[k] += eps;
            let up = css(&s.values, &b[..2], &b[2..]);
            b[k] -= 2.0 * eps;
            let down = css(&s.values, &b[..2], &b[2..]);
            let fd = (up - down) / (2.0 * eps);
            assert!(
                (g[k] - fd).abs() < 1e-4 * (1.0 + fd.abs()),
                "{k}: {} vs {fd}",
                g[k]
            );
        }
    }

    #[test]
    fn arma_refinement_lowers_css() {
        let mut eps = crate::datagen::NormalStream::new(9);
        let mut y = vec![0.0; 400];
        let mut prev_e = 0.0;
        for t in 1..400 {
            let e = eps.next_normal();
            y[t] = 0.5 * y[t - 1] + e + 0.4 * prev_e;
            prev_e = e;
        }
        let m = arima_fit(&y, OrderChoice::Fixed(ArimaOrder::new(1, 0, 1))).unwrap();
        assert!((m.ar[0] - 0.5).abs() < 0.15, "{:?}", m.ar);
        assert!((m.ma[0] - 0.4).abs() < 0.15, "{:?}", m.ma);
        let yc: Vec<f64> = y.iter().map(|v| v - m.mean).collect();
        let (ar0, ma0) = hannan_rissanen(&yc, 1, 1);
        assert!(css(&yc, &m.ar, &m.ma) <= css(&yc, &ar0, &ma0) + 1e-9);
    }

    #[test]
    fn auto_picks_minimum_aic() {
        let s = generate(&GeneratorSpec::random_walk(200, 21, 0.0, 1.0)).unwrap();
        let m = arima_fit(&s.values, OrderChoice::Auto).unwrap();
        assert_eq!(m.order.d, 1);
        let mut best = f64::INFINITY;
        for p in 0..=3 {
            for q in 0..=3 {
                let f = arima_fit(&s.values, OrderChoice::Fixed(ArimaOrder::new(p, 1, q))).unwrap();
                best = best.min(f.aic);
            }
        }
        assert_eq!(m.aic, best);
        let last = *s.values.last().unwrap();
        assert!((arima_predict(&m, &s.values).unwrap() - last).abs() < 1.0);
    }

    #[test]
    fn kpss_matches_reference_values() {
        // Reference statistics from statsmodels' kpss(regression="c", nlags=1).
        let t: Vec<f64> = (0..60).map(|i| i as f64).collect();
        let a: Vec<f64> = t.iter().map(|t| (0.7 * t).sin() + 0.05 * t).collect();
        assert!((kpss_statistic(&a).unwrap() - 1.9348904629126544).abs() < 1e-12);
        let mut acc = 0.0;
        let b: Vec<f64> = t
            .iter()
            .map(|t| {
                acc += (1.3 * t).cos().powi(3);
                acc + 0.02 * t
            })
            .collect();
        assert!((kpss_statistic(&b).unwrap() - 1.4820747217533017).abs() < 1e-12);
        assert_eq!(kpss_statistic(&[2.0; 10]), None);
    }

    #[test]
    fn differencing_order_follows_integration() {
        let noise = generate(&GeneratorSpec::ar1(400, 8, 0.0, 1.0)).unwrap().values;
        assert_eq!(select_differencing(&noise, 2), 0);
        let walk = generate(&GeneratorSpec::random_walk(400, 8, 0.0, 1.0)).unwrap().values;
        assert_eq!(select_differencing(&walk, 2), 1);
        let mut acc = 0.0;
        let twice: Vec<f64> = walk
            .iter()
            .map(|v| {
                acc += v;
                acc
            })
            .collect();
        assert_eq!(select_differencing(&twice, 2), 2);
        assert_eq!(select_differencing(&twice, 1), 1);
    }

    #[test]
    fn input_errors() {
        assert!(arima_fit(&[1.0, f64::NAN, 2.0], OrderChoice::Auto).is_err());
        assert!(arima_fit(&[1.0; 11], OrderChoice::Fixed(ArimaOrder::new(1, 0, 0))).is_err());
        let m =
            ArimaModel::with_coefficients(ArimaOrder::new(2, 1, 0), 0.0, vec![0.1, 0.1], vec![])
                .unwrap();
        assert!(arima_predict(&m, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn second_difference_integrates_twice() {
        // A quadratic has constant second difference 2.
        let x: Vec<f64> = (0..30).map(|t| (t * t) as f64).collect();
        let m = arima_fit(&x, OrderChoice::Fixed(ArimaOrder::new(0, 2, 0))).unwrap();
        assert_eq!(arima_predict(&m, &x).unwrap(), 900.0 - 2.0);
    }
}
