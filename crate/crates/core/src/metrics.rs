//! Forecast accuracy metrics.
//!
//! Scaled metrics (MASE, SQL) divide each series' absolute / quantile loss
//! by its in-sample seasonal error `a = mean |y_t - y_{t-m}|` computed on the
//! window's own history. Scale-dependent metrics (WAPE, WQL) divide summed
//! losses by summed absolute actuals.
//!
//! All metric functions take one row per `(series, target dimension)` pair.
//! Rows may differ in length. `NaN` actuals are skipped and the divisor
//! counts only scored cells.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::WindowSlice;
use crate::task::Task;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("history of length {length} is too short for seasonal period {seasonality}")]
    HistoryTooShort { length: usize, seasonality: usize },
    #[error("seasonal error is zero for row {row}")]
    ZeroScale { row: usize },
    #[error("row {row}: expected {expected} quantile arrays, got {got}")]
    MissingQuantile {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("row {row}: forecast contains non-finite values")]
    NonFiniteForecast { row: usize },
    #[error("no point forecast and no 0.5 quantile to fall back on")]
    MissingPoint,
    #[error("sum of absolute actuals is zero")]
    ZeroDenominator,
    #[error("no cell could be scored")]
    NoScoredCells,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Mase,
    Sql,
    Wql,
    Wape,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [
        MetricKind::Mase,
        MetricKind::Sql,
        MetricKind::Wql,
        MetricKind::Wape,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MetricKind::Mase => "mase",
            MetricKind::Sql => "sql",
            MetricKind::Wql => "wql",
            MetricKind::Wape => "wape",
        }
    }

    /// Whether the metric scores point forecasts (as opposed to quantiles).
    pub fn is_point(&self) -> bool {
        matches!(self, MetricKind::Mase | MetricKind::Wape)
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mase" => Ok(MetricKind::Mase),
            "sql" => Ok(MetricKind::Sql),
            "wql" => Ok(MetricKind::Wql),
            "wape" => Ok(MetricKind::Wape),
            other => Err(format!("unknown metric `{other}`")),
        }
    }
}

/// All four metrics for one window (or their mean over windows).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowScores {
    pub mase: f64,
    pub sql: f64,
    pub wql: f64,
    pub wape: f64,
}

impl WindowScores {
    pub fn get(&self, kind: MetricKind) -> f64 {
        match kind {
            MetricKind::Mase => self.mase,
            MetricKind::Sql => self.sql,
            MetricKind::Wql => self.wql,
            MetricKind::Wape => self.wape,
        }
    }

    /// Arithmetic mean of each metric. Panics on an empty slice.
    pub fn mean(scores: &[WindowScores]) -> WindowScores {
        assert!(!scores.is_empty(), "mean of zero windows");
        let n = scores.len() as f64;
        let avg = |f: fn(&WindowScores) -> f64| scores.iter().map(f).sum::<f64>() / n;
        WindowScores {
            mase: avg(|s| s.mase),
            sql: avg(|s| s.sql),
            wql: avg(|s| s.wql),
            wape: avg(|s| s.wape),
        }
    }
}

/// In-sample seasonal error of a history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeasonalScale {
    pub value: f64,
    /// Number of `(y_t, y_{t-m})` pairs with both values present.
    pub pairs: usize,
}

impl SeasonalScale {
    /// Zero-scale signal: MASE and SQL are undefined for this row.
    pub fn is_zero(&self) -> bool {
        self.value == 0.0
    }
}

/// Per-row scales of one window and the period they were computed with.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleVector {
    pub scales: Vec<f64>,
    pub seasonality: usize,
}

/// `mean |y_t - y_{t-m}|` over pairs where both values are present.
pub fn seasonal_error(history: &[f64], m: usize) -> Result<SeasonalScale, MetricError> {
    let too_short = MetricError::HistoryTooShort {
        length: history.len(),
        seasonality: m,
    };
    if m == 0 || history.len() <= m {
        return Err(too_short);
    }
    let (sum, pairs) = history[m..]
        .iter()
        .zip(history)
        .filter(|(y, lag)| !y.is_nan() && !lag.is_nan())
        .fold((0.0, 0usize), |(s, c), (y, lag)| {
            (s + (y - lag).abs(), c + 1)
        });
    if pairs == 0 {
        return Err(too_short);
    }
    Ok(SeasonalScale {
        value: sum / pairs as f64,
        pairs,
    })
}

/// Two-branch quantile (pinball) loss scaled by 2, so that the median loss
/// equals the absolute error.
#[inline]
pub fn quantile_loss(y: f64, forecast: f64, q: f64) -> f64 {
    if y < forecast {
        2.0 * (1.0 - q) * (forecast - y)
    } else {
        2.0 * q * (y - forecast)
    }
}

/// What to do with rows whose seasonal error is zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroScalePolicy {
    #[default]
    Error,
    /// Drop the row and renormalise over the remaining cells.
    Skip,
}

fn check_rows(actuals: usize, other: usize, scales: Option<usize>) -> Result<(), MetricError> {
    if actuals != other || scales.is_some_and(|s| s != actuals) {
        return Err(MetricError::ShapeMismatch(format!(
            "{actuals} actual rows, {other} forecast rows, {} scales",
            scales.map_or("n/a".to_string(), |s| s.to_string())
        )));
    }
    Ok(())
}

fn check_len(row: usize, actual: &[f64], forecast: &[f64]) -> Result<(), MetricError> {
    if actual.len() != forecast.len() {
        return Err(MetricError::ShapeMismatch(format!(
            "row {row}: {} actuals vs {} forecasts",
            actual.len(),
            forecast.len()
        )));
    }
    if forecast.iter().any(|v| !v.is_finite()) {
        return Err(MetricError::NonFiniteForecast { row });
    }
    Ok(())
}

fn usable_scale(row: usize, scale: f64, policy: ZeroScalePolicy) -> Result<bool, MetricError> {
    if scale > 0.0 && scale.is_finite() {
        Ok(true)
    } else if policy == ZeroScalePolicy::Skip {
        Ok(false)
    } else {
        Err(MetricError::ZeroScale { row })
    }
}

/// Mean absolute scaled error.
pub fn mase<A, P>(actuals: &[A], points: &[P], scales: &[f64]) -> Result<f64, MetricError>
where
    A: AsRef<[f64]>,
    P: AsRef<[f64]>,
{
    mase_with(actuals, points, scales, ZeroScalePolicy::Error)
}

pub fn mase_with<A, P>(
    actuals: &[A],
    points: &[P],
    scales: &[f64],
    policy: ZeroScalePolicy,
) -> Result<f64, MetricError>
where
    A: AsRef<[f64]>,
    P: AsRef<[f64]>,
{
    check_rows(actuals.len(), points.len(), Some(scales.len()))?;
    let mut total = 0.0;
    let mut cells = 0usize;
    for (row, ((y, yhat), &scale)) in actuals.iter().zip(points).zip(scales).enumerate() {
        let (y, yhat) = (y.as_ref(), yhat.as_ref());
        check_len(row, y, yhat)?;
        if !usable_scale(row, scale, policy)? {
            continue;
        }
        let mut abs_err = 0.0;
        for (a, f) in y.iter().zip(yhat).filter(|(a, _)| !a.is_nan()) {
            abs_err += (a - f).abs();
            cells += 1;
        }
        total += abs_err / scale;
    }
    if cells == 0 {
        return Err(MetricError::NoScoredCells);
    }
    Ok(total / cells as f64)
}

/// Scaled quantile loss: quantile losses summed over the grid (not
/// averaged), scaled per row, averaged over scored cells.
pub fn sql<A, F>(
    actuals: &[A],
    quantiles: &[F],
    scales: &[f64],
    levels: &[f64],
) -> Result<f64, MetricError>
where
    A: AsRef<[f64]>,
    F: AsRef<[Vec<f64>]>,
{
    sql_with(actuals, quantiles, scales, levels, ZeroScalePolicy::Error)
}

pub fn sql_with<A, F>(
    actuals: &[A],
    quantiles: &[F],
    scales: &[f64],
    levels: &[f64],
    policy: ZeroScalePolicy,
) -> Result<f64, MetricError>
where
    A: AsRef<[f64]>,
    F: AsRef<[Vec<f64>]>,
{
    check_rows(actuals.len(), quantiles.len(), Some(scales.len()))?;
    let mut total = 0.0;
    let mut cells = 0usize;
    for (row, ((y, qs), &scale)) in actuals.iter().zip(quantiles).zip(scales).enumerate() {
        let (y, qs) = (y.as_ref(), qs.as_ref());
        check_quantiles(row, y, qs, levels)?;
        if !usable_scale(row, scale, policy)? {
            continue;
        }
        let mut loss = 0.0;
        for (t, &a) in y.iter().enumerate().filter(|(_, a)| !a.is_nan()) {
            loss += levels
                .iter()
                .zip(qs)
                .map(|(&q, f)| quantile_loss(a, f[t], q))
                .sum::<f64>();
            cells += 1;
        }
        total += loss / scale;
    }
    if cells == 0 {
        return Err(MetricError::NoScoredCells);
    }
    Ok(total / cells as f64)
}

fn check_quantiles(
    row: usize,
    y: &[f64],
    qs: &[Vec<f64>],
    levels: &[f64],
) -> Result<(), MetricError> {
    if qs.len() != levels.len() {
        return Err(MetricError::MissingQuantile {
            row,
            expected: levels.len(),
            got: qs.len(),
        });
    }
    qs.iter().try_for_each(|f| check_len(row, y, f))
}

/// Weighted absolute percentage error: `sum |y - yhat| / sum |y|`.
pub fn wape<A, P>(actuals: &[A], points: &[P]) -> Result<f64, MetricError>
where
    A: AsRef<[f64]>,
    P: AsRef<[f64]>,
{
    check_rows(actuals.len(), points.len(), None)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (row, (y, yhat)) in actuals.iter().zip(points).enumerate() {
        let (y, yhat) = (y.as_ref(), yhat.as_ref());
        check_len(row, y, yhat)?;
        for (a, f) in y.iter().zip(yhat).filter(|(a, _)| !a.is_nan()) {
            num += (a - f).abs();
            den += a.abs();
        }
    }
    if den == 0.0 {
        return Err(MetricError::ZeroDenominator);
    }
    Ok(num / den)
}

/// Weighted quantile loss: quantile loss averaged over the grid, summed
/// over cells, divided by `sum |y|`.
pub fn wql<A, F>(actuals: &[A], quantiles: &[F], levels: &[f64]) -> Result<f64, MetricError>
where
    A: AsRef<[f64]>,
    F: AsRef<[Vec<f64>]>,
{
    check_rows(actuals.len(), quantiles.len(), None)?;
    let k = levels.len() as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for (row, (y, qs)) in actuals.iter().zip(quantiles).enumerate() {
        let (y, qs) = (y.as_ref(), qs.as_ref());
        check_quantiles(row, y, qs, levels)?;
        for (t, &a) in y.iter().enumerate().filter(|(_, a)| !a.is_nan()) {
            let loss: f64 = levels
                .iter()
                .zip(qs)
                .map(|(&q, f)| quantile_loss(a, f[t], q))
                .sum();
            num += loss / k;
            den += a.abs();
        }
    }
    if den == 0.0 {
        return Err(MetricError::ZeroDenominator);
    }
    Ok(num / den)
}

/// Point and quantile forecasts for one target dimension of one series.
#[derive(Debug, Clone, PartialEq)]
pub struct DimForecast {
    pub point: Option<Vec<f64>>,
    /// One array per quantile level, in the order of the owning set's levels.
    pub quantiles: Vec<Vec<f64>>,
}

impl DimForecast {
    /// Sorts the quantile values at every step so they are non-decreasing
    /// in the level.
    pub fn repair_crossing(&mut self) {
        let horizon = self.quantiles.first().map_or(0, Vec::len);
        let mut column = Vec::with_capacity(self.quantiles.len());
        for t in 0..horizon {
            column.clear();
            column.extend(self.quantiles.iter().map(|q| q[t]));
            column.sort_by(f64::total_cmp);
            for (q, v) in self.quantiles.iter_mut().zip(&column) {
                q[t] = *v;
            }
        }
    }

    /// The explicit point forecast, or the median quantile when absent.
    pub fn point_or_median(&self, levels: &[f64]) -> Result<&[f64], MetricError> {
        if let Some(p) = &self.point {
            return Ok(p);
        }
        levels
            .iter()
            .position(|q| (q - 0.5).abs() < 1e-12)
            .and_then(|i| self.quantiles.get(i))
            .map(Vec::as_slice)
            .ok_or(MetricError::MissingPoint)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesForecast {
    pub item_id: String,
    pub dims: Vec<DimForecast>,
}

/// One model's forecasts for every series of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSet {
    pub model_name: String,
    pub quantile_levels: Vec<f64>,
    pub series: Vec<SeriesForecast>,
}

impl ForecastSet {
    pub fn repair_crossing(&mut self) {
        for s in &mut self.series {
            for d in &mut s.dims {
                d.repair_crossing();
            }
        }
    }
}

/// A metric failure located in the benchmark.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("task `{task}` window {window}{}: {source}", .item.as_ref().map(|(id, d)| format!(" item `{id}` dim {d}")).unwrap_or_default())]
pub struct ScoringError {
    pub task: String,
    pub window: usize,
    pub item: Option<(String, usize)>,
    #[source]
    pub source: MetricError,
}

/// Scores a forecast against the held-out actuals of a window. Scales come
/// from each series' history up to the cutoff; quantile crossings are
/// repaired before scoring.
pub fn score_window(
    slice: &WindowSlice<'_>,
    forecast: &ForecastSet,
    task: &Task,
    policy: ZeroScalePolicy,
) -> Result<WindowScores, ScoringError> {
    let window = slice.window.index;
    let fail = |item: Option<(String, usize)>, source: MetricError| ScoringError {
        task: task.task_name.clone(),
        window,
        item,
        source,
    };
    let levels = &task.quantile_levels;
    let same_levels = forecast.quantile_levels.len() == levels.len()
        && forecast
            .quantile_levels
            .iter()
            .zip(levels)
            .all(|(a, b)| (a - b).abs() < 1e-9);
    if !same_levels {
        return Err(fail(
            None,
            MetricError::MissingQuantile {
                row: 0,
                expected: levels.len(),
                got: forecast.quantile_levels.len(),
            },
        ));
    }
    if forecast.series.len() != slice.num_series() {
        return Err(fail(
            None,
            MetricError::ShapeMismatch(format!(
                "{} forecast series for {} dataset series",
                forecast.series.len(),
                slice.num_series()
            )),
        ));
    }

    let dims = slice.num_targets();
    let mut repaired = forecast.clone();
    repaired.repair_crossing();

    let mut actuals = Vec::with_capacity(slice.num_series() * dims);
    let mut points = Vec::with_capacity(actuals.capacity());
    let mut quantiles = Vec::with_capacity(actuals.capacity());
    let mut scales = ScaleVector {
        scales: Vec::with_capacity(actuals.capacity()),
        seasonality: task.seasonality,
    };
    let mut located = Vec::with_capacity(actuals.capacity());
    for (n, (input, sf)) in slice.inputs().zip(&repaired.series).enumerate() {
        if sf.item_id != input.item_id || sf.dims.len() != dims {
            return Err(fail(
                Some((input.item_id.to_string(), 0)),
                MetricError::ShapeMismatch(format!(
                    "forecast for `{}` with {} dims does not match `{}` with {dims}",
                    sf.item_id,
                    sf.dims.len(),
                    input.item_id
                )),
            ));
        }
        for (d, df) in sf.dims.iter().enumerate() {
            let here = || Some((input.item_id.to_string(), d));
            let scale = seasonal_error(input.past_target(d), task.seasonality)
                .map_err(|e| fail(here(), e))?;
            if scale.is_zero() && policy == ZeroScalePolicy::Error {
                return Err(fail(here(), MetricError::ZeroScale { row: located.len() }));
            }
            actuals.push(slice.future_actuals(n, d));
            points.push(df.point_or_median(levels).map_err(|e| fail(here(), e))?);
            quantiles.push(df.quantiles.as_slice());
            scales.scales.push(scale.value);
            located.push((input.item_id.to_string(), d));
        }
    }

    let locate = |e: MetricError| {
        let row = match &e {
            MetricError::ZeroScale { row }
            | MetricError::NonFiniteForecast { row }
            | MetricError::MissingQuantile { row, .. } => Some(*row),
            _ => None,
        };
        fail(row.and_then(|r| located.get(r).cloned()), e)
    };
    Ok(WindowScores {
        mase: mase_with(&actuals, &points, &scales.scales, policy).map_err(locate)?,
        sql: sql_with(&actuals, &quantiles, &scales.scales, levels, policy).map_err(locate)?,
        wql: wql(&actuals, &quantiles, levels).map_err(locate)?,
        wape: wape(&actuals, &points).map_err(locate)?,
    })
}
