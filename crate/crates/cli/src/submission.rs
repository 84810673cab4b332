//! External forecast submissions: one JSON object per line, one line per
//! (task, window, item, target dimension).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tsbench_core::dataset::WindowSlice;
use tsbench_core::metrics::{DimForecast, ForecastSet, SeriesForecast};
use tsbench_core::Task;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmissionRecord {
    pub task_name: String,
    /// 1-based, matching the window indices reported by `validate`.
    #[serde(default)]
    pub window_index: Option<usize>,
    #[serde(default)]
    pub item_id: Option<String>,
    #[serde(default)]
    pub dim_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<Vec<f64>>,
    /// Quantile level, written as a decimal string, to forecast path.
    #[serde(default)]
    pub quantiles: BTreeMap<String, Vec<f64>>,
    pub model_name: String,
    #[serde(default)]
    pub trained_on_this_dataset: bool,
    /// Declares that the model failed on the whole task.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_reason: Option<String>,
    /// Self-reported wall-clock seconds for the task.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_s: Option<f64>,
}

/// Location of one forecast in a benchmark.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RecordKey {
    pub task_name: String,
    pub window_index: usize,
    pub item_id: String,
    pub dim_index: usize,
}

impl std::fmt::Display for RecordKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "({}, window {}, item {}, dim {})",
            self.task_name, self.window_index, self.item_id, self.dim_index
        )
    }
}

/// Reads every record of a JSON-lines submission; blank lines are skipped.
pub fn read_submission(path: &Path) -> Result<Vec<SubmissionRecord>, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut records = Vec::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// The records of one model on one task.
#[derive(Debug, Default)]
pub struct TaskRecords<'a> {
    pub records: Vec<&'a SubmissionRecord>,
}

impl<'a> TaskRecords<'a> {
    pub fn declared_failure(&self) -> Option<String> {
        self.records.iter().find(|r| r.failed).map(|r| {
            r.failure_reason
                .clone()
                .unwrap_or_else(|| "declared failure".into())
        })
    }

    pub fn leakage_flag(&self) -> Result<bool, CliError> {
        let flags: BTreeSet<bool> = self
            .records
            .iter()
            .map(|r| r.trained_on_this_dataset)
            .collect();
        match flags.len() {
            0 => Ok(false),
            1 => Ok(flags.contains(&true)),
            _ => Err(CliError::ConflictingLeakage(
                self.records[0].task_name.clone(),
            )),
        }
    }

    /// Largest self-reported runtime, if any record carries one.
    pub fn runtime(&self) -> Option<f64> {
        self.records
            .iter()
            .filter_map(|r| r.runtime_s)
            .filter(|r| r.is_finite())
            .reduce(f64::max)
    }

    /// Indexes forecast records by key, rejecting duplicates and records
    /// without a location.
    pub fn index(&self) -> Result<HashMap<RecordKey, &'a SubmissionRecord>, CliError> {
        let mut map = HashMap::with_capacity(self.records.len());
        for r in &self.records {
            if r.failed {
                continue;
            }
            let (Some(window_index), Some(item_id)) = (r.window_index, r.item_id.clone()) else {
                return Err(CliError::ShapeMismatch(format!(
                    "record for task `{}` lacks window_index or item_id",
                    r.task_name
                )));
            };
            let key = RecordKey {
                task_name: r.task_name.clone(),
                window_index,
                item_id,
                dim_index: r.dim_index,
            };
            if map.insert(key.clone(), *r).is_some() {
                return Err(CliError::ShapeMismatch(format!("duplicate record {key}")));
            }
        }
        Ok(map)
    }
}

/// Parses quantile keys and lines them up with the task's levels.
fn dim_forecast(
    record: &SubmissionRecord,
    key: &RecordKey,
    task: &Task,
) -> Result<DimForecast, CliError> {
    let h = task.horizon;
    let mut by_level = Vec::with_capacity(record.quantiles.len());
    for (raw, values) in &record.quantiles {
        let q: f64 = raw
            .trim()
            .parse()
            .ok()
            .filter(|q: &f64| *q > 0.0 && *q < 1.0)
            .ok_or_else(|| {
                CliError::ShapeMismatch(format!(
                    "{key}: quantile key `{raw}` is not a level in (0, 1)"
                ))
            })?;
        by_level.push((q, values));
    }
    let mut quantiles = Vec::with_capacity(task.quantile_levels.len());
    for level in &task.quantile_levels {
        let values = by_level
            .iter()
            .find(|(q, _)| (q - level).abs() < 1e-9)
            .map(|(_, v)| *v)
            .ok_or_else(|| CliError::ShapeMismatch(format!("{key}: missing quantile {level}")))?;
        quantiles.push(values.clone());
    }
    if by_level.len() != quantiles.len() {
        return Err(CliError::ShapeMismatch(format!(
            "{key}: {} quantile levels submitted, task expects {:?}",
            by_level.len(),
            task.quantile_levels
        )));
    }
    let point = record.point.clone();
    let lengths = point.iter().chain(&quantiles).map(Vec::len);
    if let Some(bad) = lengths.into_iter().find(|&n| n != h) {
        return Err(CliError::ShapeMismatch(format!(
            "{key}: array of length {bad}, horizon is {h}"
        )));
    }
    Ok(DimForecast { point, quantiles })
}

/// Assembles the forecast set for one window, appending the keys of any
/// missing records to `missing` instead of failing on the first one.
pub fn window_forecast(
    index: &HashMap<RecordKey, &SubmissionRecord>,
    slice: &WindowSlice<'_>,
    task: &Task,
    model_name: &str,
    missing: &mut Vec<RecordKey>,
) -> Result<Option<ForecastSet>, CliError> {
    let mut series = Vec::with_capacity(slice.num_series());
    let mut complete = true;
    for input in slice.inputs() {
        let mut dims = Vec::with_capacity(input.num_targets());
        for d in 0..input.num_targets() {
            let key = RecordKey {
                task_name: task.task_name.clone(),
                window_index: slice.window.index,
                item_id: input.item_id.to_string(),
                dim_index: d,
            };
            match index.get(&key) {
                Some(record) => dims.push(dim_forecast(record, &key, task)?),
                None => {
                    complete = false;
                    missing.push(key);
                }
            }
        }
        series.push(SeriesForecast {
            item_id: input.item_id.to_string(),
            dims,
        });
    }
    Ok(complete.then(|| ForecastSet {
        model_name: model_name.to_string(),
        quantile_levels: task.quantile_levels.clone(),
        series,
    }))
}
