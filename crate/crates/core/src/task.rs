//! Tasks, benchmarks and rolling-origin evaluation windows.
//!
//! A task fixes the horizon `H`, the number of requested windows `W`, the
//! seasonal period `m` and the quantile grid. Windows are end-anchored and
//! spaced by `H`: with `L` the shortest series length, window `w` of `W'`
//! has cutoff `L - (W' - w + 1) * H`, and the first cutoff keeps at least
//! `2H + 1` observations of history.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{resolve_data_path, DatasetError, DatasetManifest, TimeSeriesDataset};
use crate::frequency::{parse_timestamp, Frequency};
use crate::metrics::{MetricKind, WindowScores};

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("duplicate task name `{0}`")]
    DuplicateTaskName(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown frequency `{0}`")]
    UnknownFrequency(String),
    #[error("no feasible window: {0}")]
    NoFeasibleWindow(String),
    #[error("timestamp cutoff `{0}` must be resolved against a dataset")]
    UnresolvedCutoff(String),
    #[error("expected scores for {expected} windows, got {got}")]
    WindowCountMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Explicit first cutoff: an observation count or a timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialCutoff {
    Index(usize),
    Timestamp(String),
}

pub const DEFAULT_QUANTILE_LEVELS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// A fully resolved forecasting problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub task_name: String,
    pub dataset: DatasetManifest,
    pub horizon: usize,
    pub num_windows: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_cutoff: Option<InitialCutoff>,
    pub seasonality: usize,
    pub quantile_levels: Vec<f64>,
    pub eval_metric: MetricKind,
    pub quantile_metric: MetricKind,
}

impl Task {
    /// A task with default seasonality (from the dataset frequency),
    /// default quantile grid and MASE / SQL as the primary metrics.
    pub fn new(
        name: impl Into<String>,
        dataset: DatasetManifest,
        horizon: usize,
        num_windows: usize,
    ) -> Self {
        let seasonality = dataset.frequency.default_seasonality();
        Task {
            task_name: name.into(),
            dataset,
            horizon,
            num_windows,
            initial_cutoff: None,
            seasonality,
            quantile_levels: DEFAULT_QUANTILE_LEVELS.to_vec(),
            eval_metric: MetricKind::Mase,
            quantile_metric: MetricKind::Sql,
        }
    }

    pub fn with_seasonality(mut self, m: usize) -> Self {
        self.seasonality = m;
        self
    }

    pub fn with_quantile_levels(mut self, levels: Vec<f64>) -> Self {
        self.quantile_levels = levels;
        self
    }

    pub fn with_initial_cutoff(mut self, cutoff: InitialCutoff) -> Self {
        self.initial_cutoff = Some(cutoff);
        self
    }

    /// Checks the task invariants. `path` prefixes error locations.
    pub fn check(&self, path: &str) -> Result<(), TaskError> {
        let schema = |key: &str, message: String| TaskError::Schema {
            path: format!("{path}.{key}"),
            message,
        };
        if self.horizon == 0 {
            return Err(schema("horizon", "must be at least 1".into()));
        }
        if self.num_windows == 0 {
            return Err(schema("num_windows", "must be at least 1".into()));
        }
        if self.seasonality == 0 {
            return Err(schema("seasonality", "must be at least 1".into()));
        }
        if self.quantile_levels.is_empty() {
            return Err(schema("quantile_levels", "must not be empty".into()));
        }
        if let Some(q) = self
            .quantile_levels
            .iter()
            .find(|q| !(**q > 0.0 && **q < 1.0))
        {
            return Err(schema("quantile_levels", format!("{q} is outside (0, 1)")));
        }
        if self.quantile_levels.windows(2).any(|p| p[0] >= p[1]) {
            return Err(schema(
                "quantile_levels",
                "must be strictly increasing".into(),
            ));
        }
        if !self.eval_metric.is_point() {
            return Err(schema(
                "eval_metric",
                format!("`{}` is not a point metric (mase, wape)", self.eval_metric),
            ));
        }
        if self.quantile_metric.is_point() {
            return Err(schema(
                "quantile_metric",
                format!(
                    "`{}` is not a quantile metric (sql, wql)",
                    self.quantile_metric
                ),
            ));
        }
        self.dataset
            .check()
            .map_err(|e| schema("dataset", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub name: String,
    pub tasks: Vec<Task>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBenchmark {
    name: String,
    tasks: Vec<RawTask>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTask {
    #[serde(default)]
    task_name: Option<String>,
    dataset: serde_yaml::Value,
    horizon: usize,
    #[serde(default)]
    num_windows: Option<usize>,
    #[serde(default)]
    initial_cutoff: Option<InitialCutoff>,
    #[serde(default)]
    seasonality: Option<usize>,
    #[serde(default)]
    quantile_levels: Option<Vec<f64>>,
    #[serde(default)]
    eval_metric: Option<MetricKind>,
    #[serde(default)]
    quantile_metric: Option<MetricKind>,
}

/// Reads and resolves a benchmark YAML file. Relative dataset paths are
/// resolved against the benchmark file's directory.
pub fn parse_benchmark(path: &Path) -> Result<Benchmark, TaskError> {
    let text = std::fs::read_to_string(path).map_err(|source| TaskError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_benchmark_str(&text, path.parent())
}

pub fn parse_benchmark_str(text: &str, base_dir: Option<&Path>) -> Result<Benchmark, TaskError> {
    let de = serde_yaml::Deserializer::from_str(text);
    let raw: RawBenchmark =
        serde_path_to_error::deserialize(de).map_err(|e| TaskError::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;

    let mut names = BTreeSet::new();
    let mut tasks = Vec::with_capacity(raw.tasks.len());
    for (i, raw_task) in raw.tasks.into_iter().enumerate() {
        let path = format!("tasks[{i}]");
        let task = resolve_task(raw_task, &path, base_dir)?;
        if !names.insert(task.task_name.clone()) {
            return Err(TaskError::DuplicateTaskName(task.task_name));
        }
        tasks.push(task);
    }
    Ok(Benchmark {
        name: raw.name,
        tasks,
    })
}

fn resolve_task(raw: RawTask, path: &str, base_dir: Option<&Path>) -> Result<Task, TaskError> {
    let dataset_path = format!("{path}.dataset");
    let dataset = match raw.dataset {
        serde_yaml::Value::String(file) => {
            let manifest_path = resolve_data_path(Path::new(&file), base_dir);
            DatasetManifest::from_yaml_file(&manifest_path).map_err(|e| TaskError::Schema {
                path: dataset_path.clone(),
                message: e.to_string(),
            })?
        }
        value @ serde_yaml::Value::Mapping(_) => {
            let mut manifest: DatasetManifest =
                serde_path_to_error::deserialize(value).map_err(|e| TaskError::Schema {
                    path: format!("{dataset_path}.{}", e.path()),
                    message: e.inner().to_string(),
                })?;
            manifest.data_path = resolve_data_path(&manifest.data_path, base_dir);
            manifest
        }
        _ => {
            return Err(TaskError::Schema {
                path: dataset_path,
                message: "expected a manifest mapping or a path to a manifest file".into(),
            })
        }
    };

    let task_name = match raw.task_name {
        Some(name) => name,
        None => dataset
            .data_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| TaskError::Schema {
                path: format!("{path}.task_name"),
                message: "missing and cannot be derived from the dataset path".into(),
            })?,
    };
    let seasonality = raw
        .seasonality
        .unwrap_or_else(|| dataset.frequency.default_seasonality());
    let task = Task {
        task_name,
        dataset,
        horizon: raw.horizon,
        num_windows: raw.num_windows.unwrap_or(1),
        initial_cutoff: raw.initial_cutoff,
        seasonality,
        quantile_levels: raw
            .quantile_levels
            .unwrap_or_else(|| DEFAULT_QUANTILE_LEVELS.to_vec()),
        eval_metric: raw.eval_metric.unwrap_or(MetricKind::Mase),
        quantile_metric: raw.quantile_metric.unwrap_or(MetricKind::Sql),
    };
    task.check(path)?;
    Ok(task)
}

pub fn default_seasonality(token: &str) -> Result<usize, TaskError> {
    token
        .parse::<Frequency>()
        .map(|f| f.default_seasonality())
        .map_err(|_| TaskError::UnknownFrequency(token.to_string()))
}

/// One rolling-origin split: the model sees the first `cutoff`
/// observations of every series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationWindow {
    /// 1-based window number.
    pub index: usize,
    pub cutoff: usize,
}

/// Generates the evaluation windows for series of minimum length `L`.
pub fn generate_windows(
    task: &Task,
    min_series_length: usize,
) -> Result<Vec<EvaluationWindow>, TaskError> {
    let first = match &task.initial_cutoff {
        None => None,
        Some(InitialCutoff::Index(c)) => Some(*c),
        Some(InitialCutoff::Timestamp(ts)) => return Err(TaskError::UnresolvedCutoff(ts.clone())),
    };
    windows_with_cutoff(task.horizon, task.num_windows, first, min_series_length)
}

fn windows_with_cutoff(
    horizon: usize,
    requested: usize,
    first_cutoff: Option<usize>,
    length: usize,
) -> Result<Vec<EvaluationWindow>, TaskError> {
    let min_history = 2 * horizon + 1;
    let (first, count) = match first_cutoff {
        None => {
            if length < min_history + horizon {
                return Err(TaskError::NoFeasibleWindow(format!(
                    "series length {length} < {} required for H={horizon}",
                    min_history + horizon
                )));
            }
            let count = requested.min((length - min_history) / horizon);
            (length - count * horizon, count)
        }
        Some(first) => {
            if first < min_history {
                return Err(TaskError::NoFeasibleWindow(format!(
                    "initial cutoff {first} leaves fewer than {min_history} past observations"
                )));
            }
            let count = requested.min(length.saturating_sub(first) / horizon);
            if count == 0 {
                return Err(TaskError::NoFeasibleWindow(format!(
                    "initial cutoff {first} plus H={horizon} exceeds series length {length}"
                )));
            }
            (first, count)
        }
    };
    Ok((0..count)
        .map(|i| EvaluationWindow {
            index: i + 1,
            cutoff: first + i * horizon,
        })
        .collect())
}

/// Window generation against an actual dataset: `L` is the shortest
/// series, and a timestamp cutoff becomes the number of observations of
/// that series at or before the timestamp.
pub fn windows_for_dataset(
    task: &Task,
    ds: &TimeSeriesDataset,
) -> Result<Vec<EvaluationWindow>, TaskError> {
    let length = ds.min_length();
    let first = match &task.initial_cutoff {
        None => None,
        Some(InitialCutoff::Index(c)) => Some(*c),
        Some(InitialCutoff::Timestamp(raw)) => {
            let ts = parse_timestamp(raw).map_err(|e| TaskError::Schema {
                path: "initial_cutoff".into(),
                message: e.to_string(),
            })?;
            let (cut, _) = ds.frequency.period_index(&ts);
            let shortest = ds
                .series
                .iter()
                .find(|s| s.len() == length)
                .ok_or_else(|| TaskError::NoFeasibleWindow("dataset has no series".into()))?;
            let count = (cut - shortest.start_index + 1).clamp(0, shortest.len() as i64);
            Some(count as usize)
        }
    };
    windows_with_cutoff(task.horizon, task.num_windows, first, length)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryFlags {
    pub trained_on_this_dataset: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub index: usize,
    pub cutoff: usize,
    pub metrics: WindowScores,
}

/// Outcome of one model on one task, with the full task echoed so runs
/// with different setups are never mistaken for each other.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub task_name: String,
    pub model_name: String,
    pub task: Task,
    pub windows: Vec<WindowResult>,
    /// Mean over windows; absent when the run failed.
    pub metrics: Option<WindowScores>,
    pub runtime_s: Option<f64>,
    pub trained_on_this_dataset: bool,
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_reason: Option<String>,
}

impl EvaluationSummary {
    pub fn failure(
        task: &Task,
        model_name: &str,
        reason: impl Into<String>,
        runtime_s: Option<f64>,
        flags: SummaryFlags,
    ) -> Self {
        EvaluationSummary {
            task_name: task.task_name.clone(),
            model_name: model_name.to_string(),
            task: task.clone(),
            windows: Vec::new(),
            metrics: None,
            runtime_s,
            trained_on_this_dataset: flags.trained_on_this_dataset,
            failed: true,
            failure_reason: Some(reason.into()),
        }
    }

    pub fn metric(&self, kind: MetricKind) -> Option<f64> {
        self.metrics.as_ref().map(|m| m.get(kind))
    }
}

/// Builds a summary whose task-level metrics are the arithmetic mean of
/// the per-window metrics.
pub fn summarize(
    task: &Task,
    model_name: &str,
    windows: &[EvaluationWindow],
    per_window: Vec<WindowScores>,
    runtime_s: Option<f64>,
    flags: SummaryFlags,
) -> Result<EvaluationSummary, TaskError> {
    if windows.len() != per_window.len() || windows.is_empty() {
        return Err(TaskError::WindowCountMismatch {
            expected: windows.len(),
            got: per_window.len(),
        });
    }
    let mean = WindowScores::mean(&per_window);
    let windows = windows
        .iter()
        .zip(per_window)
        .map(|(w, metrics)| WindowResult {
            index: w.index,
            cutoff: w.cutoff,
            metrics,
        })
        .collect();
    Ok(EvaluationSummary {
        task_name: task.task_name.clone(),
        model_name: model_name.to_string(),
        task: task.clone(),
        windows,
        metrics: Some(mean),
        runtime_s: runtime_s.map(|r| r.max(0.0)),
        trained_on_this_dataset: flags.trained_on_this_dataset,
        failed: false,
        failure_reason: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DataFormat;
    use proptest::prelude::*;

    fn manifest() -> DatasetManifest {
        DatasetManifest {
            data_path: "d.csv".into(),
            format: DataFormat::Csv,
            id_column: "id".into(),
            timestamp_column: "ts".into(),
            frequency: Frequency::Hourly,
            target_columns: vec!["y".into()],
            past_dynamic_columns: vec![],
            known_dynamic_columns: vec![],
            static_columns: vec![],
        }
    }

    fn cutoffs(task: &Task, len: usize) -> Vec<usize> {
        generate_windows(task, len)
            .unwrap()
            .into_iter()
            .map(|w| w.cutoff)
            .collect()
    }

    #[test]
    fn window_examples() {
        let t = Task::new("t", manifest(), 10, 5);
        assert_eq!(cutoffs(&t, 100), vec![50, 60, 70, 80, 90]);
        assert_eq!(cutoffs(&t, 41), vec![21, 31]);
        assert!(matches!(
            generate_windows(&t, 25),
            Err(TaskError::NoFeasibleWindow(_))
        ));
        assert_eq!(cutoffs(&t, 31), vec![21]);
        assert!(generate_windows(&t, 30).is_err());
    }

    #[test]
    fn explicit_initial_cutoff() {
        let t = Task::new("t", manifest(), 10, 5).with_initial_cutoff(InitialCutoff::Index(40));
        assert_eq!(cutoffs(&t, 100), vec![40, 50, 60, 70, 80]);
        assert_eq!(cutoffs(&t, 65), vec![40, 50]);
        let early = Task::new("t", manifest(), 10, 5).with_initial_cutoff(InitialCutoff::Index(20));
        assert!(generate_windows(&early, 100).is_err());
    }

    #[test]
    fn seasonality_defaults() {
        assert_eq!(default_seasonality("M").unwrap(), 12);
        assert_eq!(default_seasonality("H").unwrap(), 24);
        assert_eq!(default_seasonality("Y").unwrap(), 1);
        assert!(matches!(
            default_seasonality("fortnightly"),
            Err(TaskError::UnknownFrequency(_))
        ));
    }

    const DATASET: &str = "{data_path: d.csv, format: csv, id_column: id, timestamp_column: ts, frequency: M, target_columns: [y]}";

    #[test]
    fn minimal_task_gets_defaults() {
        let yaml = format!("name: b\ntasks:\n  - dataset: {DATASET}\n    horizon: 24\n");
        let b = parse_benchmark_str(&yaml, None).unwrap();
        let t = &b.tasks[0];
        assert_eq!(t.task_name, "d");
        assert_eq!(t.quantile_levels, DEFAULT_QUANTILE_LEVELS.to_vec());
        assert_eq!(t.seasonality, 12);
        assert_eq!(t.num_windows, 1);
        assert_eq!(t.eval_metric, MetricKind::Mase);
        assert_eq!(t.quantile_metric, MetricKind::Sql);
    }

    #[test]
    fn quantile_passthrough_and_validation() {
        let yaml = format!(
            "name: b\ntasks:\n  - dataset: {DATASET}\n    horizon: 3\n    quantile_levels: [0.5]\n"
        );
        let b = parse_benchmark_str(&yaml, None).unwrap();
        assert_eq!(b.tasks[0].quantile_levels, vec![0.5]);

        let yaml = format!(
            "name: b\ntasks:\n  - dataset: {DATASET}\n    horizon: 3\n    quantile_levels: [0.5, 0.2]\n"
        );
        let err = parse_benchmark_str(&yaml, None).unwrap_err();
        assert!(
            matches!(err, TaskError::Schema { ref path, .. } if path == "tasks[0].quantile_levels"),
            "{err}"
        );
    }

    #[test]
    fn duplicate_task_names_rejected() {
        let yaml = format!(
            "name: b\ntasks:\n  - {{task_name: a, dataset: {DATASET}, horizon: 2}}\n  - {{task_name: a, dataset: {DATASET}, horizon: 3}}\n"
        );
        assert!(matches!(
            parse_benchmark_str(&yaml, None),
            Err(TaskError::DuplicateTaskName(name)) if name == "a"
        ));
    }

    #[test]
    fn unknown_keys_report_their_path() {
        let yaml =
            format!("name: b\ntasks:\n  - dataset: {DATASET}\n    horizon: 2\n    horizn: 3\n");
        match parse_benchmark_str(&yaml, None) {
            Err(TaskError::Schema { path, message }) => {
                assert_eq!(path, "tasks[0].horizn");
                assert!(message.contains("horizn"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let yaml = "name: b\ntasks:\n  - dataset: {data_path: d.csv, format: csv, id_column: id, timestamp_column: ts, frequency: M, target_columns: [y], colour: red}\n    horizon: 2\n";
        match parse_benchmark_str(yaml, None) {
            Err(TaskError::Schema { path, .. }) => {
                assert!(path.starts_with("tasks[0].dataset"), "{path}")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn summary_means_over_windows() {
        let t = Task::new("t", manifest(), 2, 2);
        let windows = generate_windows(&t, 20).unwrap();
        let scores = |v: f64| WindowScores {
            mase: v,
            sql: 2.0 * v,
            wql: v,
            wape: v,
        };
        let s = summarize(
            &t,
            "m",
            &windows,
            vec![scores(0.5), scores(0.7)],
            Some(1.0),
            SummaryFlags::default(),
        )
        .unwrap();
        let metrics = s.metrics.unwrap();
        assert!((metrics.mase - 0.6).abs() < 1e-15);
        assert!((metrics.sql - 1.2).abs() < 1e-15);

        let three = Task::new("t", manifest(), 2, 3);
        let windows = generate_windows(&three, 20).unwrap();
        assert!(matches!(
            summarize(
                &three,
                "m",
                &windows,
                vec![scores(0.5), scores(0.7)],
                None,
                SummaryFlags::default()
            ),
            Err(TaskError::WindowCountMismatch {
                expected: 3,
                got: 2
            })
        ));

        let failed = EvaluationSummary::failure(&t, "m", "timeout", None, SummaryFlags::default());
        assert!(failed.metrics.is_none());
        assert_eq!(failed.failure_reason.as_deref(), Some("timeout"));
    }

    proptest! {
        #[test]
        fn windows_are_feasible_and_spaced(h in 1usize..30, w in 1usize..25, len in 1usize..1000) {
            let t = Task::new("t", manifest(), h, w);
            match generate_windows(&t, len) {
                Ok(windows) => {
                    prop_assert!(!windows.is_empty() && windows.len() <= w);
                    prop_assert!(windows[0].cutoff > 2 * h);
                    prop_assert_eq!(windows.last().unwrap().cutoff + h, len);
                    for pair in windows.windows(2) {
                        prop_assert_eq!(pair[1].cutoff - pair[0].cutoff, h);
                    }
                    // maximal: one more window would break the history floor
                    if windows.len() < w {
                        prop_assert!(windows[0].cutoff < 3 * h + 1);
                    }
                }
                Err(_) => prop_assert!(len < 3 * h + 1),
            }
        }

        #[test]
        fn parsing_is_deterministic(h in 1usize..50, w in 1usize..10) {
            let yaml = format!("name: b\ntasks:\n  - dataset: {DATASET}\n    horizon: {h}\n    num_windows: {w}\n");
            let a = serde_json::to_string(&parse_benchmark_str(&yaml, None).unwrap()).unwrap();
            let b = serde_json::to_string(&parse_benchmark_str(&yaml, None).unwrap()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
