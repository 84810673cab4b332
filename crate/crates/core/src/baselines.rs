//! Seasonal Naive, Naive and Drift reference forecasters.
//!
//! Quantiles come from Gaussian prediction bands around the point forecast:
//! `point + z_q * sigma * sqrt(k)` with the usual horizon factor `k` of each
//! method. `sigma` is the root mean square of the in-sample residuals
//! (divisor: residual count). Missing history values are skipped.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::WindowSlice;
use crate::metrics::{DimForecast, ForecastSet, SeriesForecast};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("history of {length} observations is too short (needs {required})")]
    HistoryTooShort { length: usize, required: usize },
    #[error("history contains no observed values")]
    AllMissing,
    #[error("item `{item_id}` dim {dim}: {source}")]
    Series {
        item_id: String,
        dim: usize,
        #[source]
        source: Box<BaselineError>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    SeasonalNaive,
    Naive,
    Drift,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [
        BaselineKind::SeasonalNaive,
        BaselineKind::Naive,
        BaselineKind::Drift,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            BaselineKind::SeasonalNaive => "seasonal_naive",
            BaselineKind::Naive => "naive",
            BaselineKind::Drift => "drift",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "seasonal_naive" | "snaive" => Ok(BaselineKind::SeasonalNaive),
            "naive" => Ok(BaselineKind::Naive),
            "drift" => Ok(BaselineKind::Drift),
            other => Err(format!("unknown baseline `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaselineSpec {
    pub kind: BaselineKind,
    /// Seasonal period, used by Seasonal Naive only.
    pub seasonality: usize,
}

impl BaselineSpec {
    pub fn forecast(
        &self,
        history: &[f64],
        horizon: usize,
        levels: &[f64],
    ) -> Result<DimForecast, BaselineError> {
        match self.kind {
            BaselineKind::SeasonalNaive => {
                seasonal_naive(history, self.seasonality.max(1), horizon, levels)
            }
            BaselineKind::Naive => naive(history, horizon, levels),
            BaselineKind::Drift => drift(history, horizon, levels),
        }
    }

    /// Forecasts every target dimension of every series in a window.
    pub fn forecast_window(
        &self,
        slice: &WindowSlice<'_>,
        levels: &[f64],
    ) -> Result<ForecastSet, BaselineError> {
        let mut series = Vec::with_capacity(slice.num_series());
        for input in slice.inputs() {
            let dims = (0..input.num_targets())
                .map(|d| {
                    self.forecast(input.past_target(d), slice.horizon, levels)
                        .map_err(|source| BaselineError::Series {
                            item_id: input.item_id.to_string(),
                            dim: d,
                            source: Box::new(source),
                        })
                })
                .collect::<Result<Vec<_>, _>>()?;
            series.push(SeriesForecast {
                item_id: input.item_id.to_string(),
                dims,
            });
        }
        Ok(ForecastSet {
            model_name: self.kind.to_string(),
            quantile_levels: levels.to_vec(),
            series,
        })
    }
}

/// Inverse standard normal CDF by the Abramowitz & Stegun 26.2.23 rational
/// approximation; absolute error below 4.5e-4. Exactly 0 at p = 0.5 and
/// antisymmetric about it.
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "probability {p} outside (0, 1)");
    if p == 0.5 {
        return 0.0;
    }
    const C: [f64; 3] = [2.515517, 0.802853, 0.010328];
    const D: [f64; 3] = [1.432788, 0.189269, 0.001308];
    let tail = p.min(1.0 - p);
    let t = (-2.0 * tail.ln()).sqrt();
    let z =
        t - (C[0] + C[1] * t + C[2] * t * t) / (1.0 + D[0] * t + D[1] * t * t + D[2] * t * t * t);
    if p < 0.5 {
        -z
    } else {
        z
    }
}

fn rms(residuals: &[f64]) -> f64 {
    if residuals.is_empty() {
        return 0.0;
    }
    (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt()
}

fn lag_residuals(history: &[f64], lag: usize) -> Vec<f64> {
    if history.len() <= lag {
        return Vec::new();
    }
    history[lag..]
        .iter()
        .zip(history)
        .filter(|(y, prev)| !y.is_nan() && !prev.is_nan())
        .map(|(y, prev)| y - prev)
        .collect()
}

fn with_band(
    points: Vec<f64>,
    sigma: f64,
    levels: &[f64],
    factor: impl Fn(usize) -> f64,
) -> DimForecast {
    let quantiles = levels
        .iter()
        .map(|&q| {
            let z = normal_quantile(q);
            points
                .iter()
                .enumerate()
                .map(|(i, p)| p + z * sigma * factor(i + 1))
                .collect()
        })
        .collect();
    DimForecast {
        point: Some(points),
        quantiles,
    }
}

fn last_observed(history: &[f64]) -> Option<(usize, f64)> {
    history
        .iter()
        .enumerate()
        .rev()
        .find(|(_, v)| !v.is_nan())
        .map(|(i, v)| (i, *v))
}

/// Repeats the last observed season. Band factor `sqrt(floor((h-1)/m) + 1)`.
pub fn seasonal_naive(
    history: &[f64],
    m: usize,
    horizon: usize,
    levels: &[f64],
) -> Result<DimForecast, BaselineError> {
    let len = history.len();
    if len < m || len == 0 {
        return Err(BaselineError::HistoryTooShort {
            length: len,
            required: m.max(1),
        });
    }
    let fallback = last_observed(history).ok_or(BaselineError::AllMissing)?.1;
    let points = (1..=horizon)
        .map(|h| {
            // 0-based index of y_{T + h - m * ceil(h / m)}
            let mut idx = len - 1 + h - m * h.div_ceil(m);
            loop {
                if !history[idx].is_nan() {
                    break history[idx];
                }
                if idx < m {
                    break fallback;
                }
                idx -= m;
            }
        })
        .collect();
    let seasonal = lag_residuals(history, m);
    let sigma = if seasonal.len() >= 3 {
        rms(&seasonal)
    } else {
        rms(&lag_residuals(history, 1))
    };
    Ok(with_band(points, sigma, levels, |h| {
        (((h - 1) / m) as f64 + 1.0).sqrt()
    }))
}

/// Last observed value. Band factor `sqrt(h)`.
pub fn naive(
    history: &[f64],
    horizon: usize,
    levels: &[f64],
) -> Result<DimForecast, BaselineError> {
    if history.len() < 2 {
        return Err(BaselineError::HistoryTooShort {
            length: history.len(),
            required: 2,
        });
    }
    let (_, last) = last_observed(history).ok_or(BaselineError::AllMissing)?;
    let sigma = rms(&lag_residuals(history, 1));
    Ok(with_band(vec![last; horizon], sigma, levels, |h| {
        (h as f64).sqrt()
    }))
}

/// Straight line through the first and last observations.
/// Band factor `sqrt(h * (1 + h / (T - 1)))`; residuals are one-step
/// differences minus the slope.
pub fn drift(
    history: &[f64],
    horizon: usize,
    levels: &[f64],
) -> Result<DimForecast, BaselineError> {
    let len = history.len();
    if len < 2 {
        return Err(BaselineError::HistoryTooShort {
            length: len,
            required: 2,
        });
    }
    let (last_idx, last) = last_observed(history).ok_or(BaselineError::AllMissing)?;
    let (first_idx, first) = history
        .iter()
        .enumerate()
        .find(|(_, v)| !v.is_nan())
        .map(|(i, v)| (i, *v))
        .ok_or(BaselineError::AllMissing)?;
    let slope = if last_idx > first_idx {
        (last - first) / (last_idx - first_idx) as f64
    } else {
        0.0
    };
    let gap = len - 1 - last_idx;
    let points = (1..=horizon)
        .map(|h| last + (h + gap) as f64 * slope)
        .collect();
    let residuals: Vec<f64> = lag_residuals(history, 1)
        .into_iter()
        .map(|d| d - slope)
        .collect();
    let sigma = rms(&residuals);
    let span = (len - 1) as f64;
    Ok(with_band(points, sigma, levels, |h| {
        let h = h as f64;
        (h * (1.0 + h / span)).sqrt()
    }))
}
