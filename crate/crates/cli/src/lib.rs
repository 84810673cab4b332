//! Command implementations behind the `tsbench` binary.
//!
//! Each command is a plain function returning its artifacts so it can be
//! driven from tests; `main.rs` only parses arguments and maps errors to
//! exit codes.

pub mod submission;

use std::collections::{BTreeMap, HashSet};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;
use tsbench_core::aggregate::{
    aggregate, build_error_matrix_with, AggregateConfig, AggregateReport,
};
use tsbench_core::baselines::{BaselineKind, BaselineSpec};
use tsbench_core::dataset::{
    load_dataset, slice_window, validate_dataset, DefectKind, Severity, ValidationReport,
};
use tsbench_core::metrics::{score_window, MetricKind, ZeroScalePolicy};
use tsbench_core::numfmt::to_json_line;
use tsbench_core::report::{render_csv, render_json, render_markdown};
use tsbench_core::task::{
    parse_benchmark, summarize, windows_for_dataset, EvaluationSummary, SummaryFlags,
};
use tsbench_core::{AggregateError, Task, TaskError};

use crate::submission::{read_submission, window_forecast, RecordKey, TaskRecords};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("submission is missing {} record(s): {}", .0.len(), .0.iter().take(10).map(ToString::to_string).collect::<Vec<_>>().join(", "))]
    IncompleteSubmission(Vec<RecordKey>),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("conflicting trained_on_this_dataset flags on task `{0}`")]
    ConflictingLeakage(String),
    #[error("submission mixes models: {0:?}")]
    MixedModels(Vec<String>),
    #[error("submission is empty")]
    EmptySubmission,
    #[error("submission refers to task `{0}`, which is not in the benchmark")]
    UnknownTask(String),
    #[error("no summary files match {0:?}")]
    NoSummaries(Vec<String>),
    #[error("bad glob pattern `{pattern}`: {message}")]
    Glob { pattern: String, message: String },
}

impl CliError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Stable name of the error class, printed ahead of the message.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Task(TaskError::Schema { .. }) => "SchemaError",
            CliError::Task(TaskError::NoFeasibleWindow(_)) => "NoFeasibleWindow",
            CliError::Task(TaskError::Dataset(_)) => "DatasetError",
            CliError::Task(_) => "TaskError",
            CliError::Aggregate(AggregateError::BaselineIncomplete { .. }) => "BaselineIncomplete",
            CliError::Aggregate(AggregateError::TooFewModels(_)) => "TooFewModels",
            CliError::Aggregate(_) => "AggregateError",
            CliError::Io { .. } => "IoError",
            CliError::Parse { .. } => "ParseError",
            CliError::IncompleteSubmission(_) => "IncompleteSubmission",
            CliError::ShapeMismatch(_) => "ShapeMismatch",
            CliError::ConflictingLeakage(_) => "ConflictingLeakage",
            CliError::MixedModels(_) => "MixedModels",
            CliError::EmptySubmission => "EmptySubmission",
            CliError::UnknownTask(_) => "UnknownTask",
            CliError::NoSummaries(_) => "NoSummaries",
            CliError::Glob { .. } => "GlobError",
        }
    }
}

/// How runtimes are recorded in summaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Timing {
    /// Wall-clock seconds per (model, task).
    #[default]
    Wall,
    /// Always 0, so reruns produce byte-identical files.
    Off,
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Concurrent tasks; 0 uses every core.
    pub jobs: usize,
    pub timing: Timing,
    pub zero_scale: ZeroScalePolicy,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            jobs: 0,
            timing: Timing::Wall,
            zero_scale: ZeroScalePolicy::Error,
        }
    }
}

fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Writes through a temporary file in the destination directory and
/// renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

fn summaries_jsonl(summaries: &[EvaluationSummary]) -> String {
    let mut out = String::new();
    for s in summaries {
        out.push_str(&to_json_line(s).expect("summary serializes"));
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------- validate

#[derive(Debug, Clone, Serialize)]
pub struct TaskCheck {
    pub task_name: String,
    pub feasible: bool,
    /// Error class and message of the first blocking problem.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<(String, String)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<ValidationReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidateOutcome {
    pub benchmark: String,
    pub tasks: Vec<TaskCheck>,
}

impl ValidateOutcome {
    pub fn all_feasible(&self) -> bool {
        self.tasks.iter().all(|t| t.feasible)
    }

    pub fn first_failure(&self) -> Option<&TaskCheck> {
        self.tasks.iter().find(|t| !t.feasible)
    }
}

fn check_task(task: &Task) -> TaskCheck {
    let fail = |kind: &str, msg: String| TaskCheck {
        task_name: task.task_name.clone(),
        feasible: false,
        error: Some((kind.to_string(), msg)),
        report: None,
    };
    let ds = match load_dataset(&task.dataset) {
        Ok(ds) => ds,
        Err(e) => return fail("DatasetError", e.to_string()),
    };
    let report = validate_dataset(&ds, task);
    let error = match windows_for_dataset(task, &ds) {
        Err(e) => {
            let message = report_error(&report).unwrap_or_else(|| e.to_string());
            Some((CliError::from(e).kind().to_string(), message))
        }
        Ok(_) => report
            .defects
            .iter()
            .find(|d| d.severity == Severity::Error)
            .map(|d| {
                let kind = match d.kind {
                    DefectKind::NoFeasibleWindow { .. } => "NoFeasibleWindow",
                    DefectKind::MissingKnownCovariate { .. } => "MissingKnownCovariate",
                    _ => "ValidationError",
                };
                (kind.to_string(), describe(&d.kind))
            }),
    };
    TaskCheck {
        task_name: task.task_name.clone(),
        feasible: error.is_none() && report.is_feasible(),
        error,
        report: Some(report),
    }
}

fn report_error(report: &ValidationReport) -> Option<String> {
    report
        .defects
        .iter()
        .find(|d| d.severity == Severity::Error)
        .map(|d| describe(&d.kind))
}

fn describe(kind: &DefectKind) -> String {
    match kind {
        DefectKind::NoFeasibleWindow { detail } => detail.clone(),
        DefectKind::MissingKnownCovariate { column, window } => {
            format!(
                "known covariate `{column}` has missing values in the horizon of window {window}"
            )
        }
        other => format!("{other:?}"),
    }
}

/// Parses the benchmark, loads every dataset and checks that each task
/// yields at least one evaluation window.
pub fn cmd_validate(benchmark: &Path) -> Result<ValidateOutcome, CliError> {
    let bench = parse_benchmark(benchmark)?;
    let tasks = bench.tasks.par_iter().map(check_task).collect();
    Ok(ValidateOutcome {
        benchmark: bench.name,
        tasks,
    })
}

// ----------------------------------------------------------- run-baselines

fn elapsed(start: Instant, timing: Timing) -> f64 {
    match timing {
        Timing::Wall => start.elapsed().as_secs_f64(),
        Timing::Off => 0.0,
    }
}

/// Runs one baseline on one task. Any error becomes a failed summary.
pub fn run_baseline_on_task(
    task: &Task,
    kind: BaselineKind,
    opts: &RunOptions,
) -> EvaluationSummary {
    let model = kind.as_str();
    let flags = SummaryFlags::default();
    let start = Instant::now();
    let outcome = (|| -> Result<EvaluationSummary, String> {
        let ds = load_dataset(&task.dataset).map_err(|e| e.to_string())?;
        let windows = windows_for_dataset(task, &ds).map_err(|e| e.to_string())?;
        let spec = BaselineSpec {
            kind,
            seasonality: task.seasonality,
        };
        let mut scores = Vec::with_capacity(windows.len());
        for w in &windows {
            let slice = slice_window(&ds, w, task).map_err(|e| e.to_string())?;
            let forecast = spec
                .forecast_window(&slice, &task.quantile_levels)
                .map_err(|e| format!("window {}: {e}", w.index))?;
            scores.push(
                score_window(&slice, &forecast, task, opts.zero_scale)
                    .map_err(|e| e.to_string())?,
            );
        }
        summarize(
            task,
            model,
            &windows,
            scores,
            Some(elapsed(start, opts.timing)),
            flags,
        )
        .map_err(|e| e.to_string())
    })();
    outcome.unwrap_or_else(|reason| {
        EvaluationSummary::failure(
            task,
            model,
            reason,
            Some(elapsed(start, opts.timing)),
            flags,
        )
    })
}

/// Evaluates each baseline on every task and writes `<kind>.jsonl` per
/// baseline into `out_dir`. Returns the written paths.
pub fn cmd_run_baselines(
    benchmark: &Path,
    kinds: &[BaselineKind],
    out_dir: &Path,
    opts: &RunOptions,
) -> Result<Vec<PathBuf>, CliError> {
    let bench = parse_benchmark(benchmark)?;
    let mut paths = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let summaries: Vec<EvaluationSummary> = with_jobs(opts.jobs, || {
            bench
                .tasks
                .par_iter()
                .map(|t| run_baseline_on_task(t, kind, opts))
                .collect()
        });
        let path = out_dir.join(format!("{kind}.jsonl"));
        write_atomic(&path, summaries_jsonl(&summaries).as_bytes())?;
        paths.push(path);
    }
    Ok(paths)
}

// ------------------------------------------------------------------- score

fn score_task(
    task: &Task,
    records: &TaskRecords<'_>,
    model: &str,
    opts: &RunOptions,
) -> Result<EvaluationSummary, CliError> {
    let flags = SummaryFlags {
        trained_on_this_dataset: records.leakage_flag()?,
    };
    let runtime = records.runtime();
    if let Some(reason) = records.declared_failure() {
        return Ok(EvaluationSummary::failure(
            task, model, reason, runtime, flags,
        ));
    }
    let index = records.index()?;
    let ds = load_dataset(&task.dataset).map_err(TaskError::from)?;
    let windows = windows_for_dataset(task, &ds)?;

    let mut missing = Vec::new();
    let mut forecasts = Vec::with_capacity(windows.len());
    let mut slices = Vec::with_capacity(windows.len());
    for w in &windows {
        let slice = slice_window(&ds, w, task).map_err(TaskError::from)?;
        forecasts.push(window_forecast(&index, &slice, task, model, &mut missing)?);
        slices.push(slice);
    }
    if !missing.is_empty() {
        return Err(CliError::IncompleteSubmission(missing));
    }
    let expected: usize = slices
        .iter()
        .map(|s| s.num_series() * s.num_targets())
        .sum();
    if index.len() != expected {
        let known: HashSet<(usize, &str)> = slices
            .iter()
            .flat_map(|s| s.inputs().map(move |i| (s.window.index, i.item_id)))
            .collect();
        let extra = index
            .keys()
            .filter(|k| {
                !known.contains(&(k.window_index, k.item_id.as_str()))
                    || k.dim_index >= ds.num_targets()
            })
            .min()
            .map(ToString::to_string)
            .unwrap_or_default();
        return Err(CliError::ShapeMismatch(format!(
            "record {extra} does not match any forecast slot"
        )));
    }

    let mut scores = Vec::with_capacity(windows.len());
    for (slice, forecast) in slices.iter().zip(forecasts) {
        let forecast = forecast.expect("complete when nothing is missing");
        match score_window(slice, &forecast, task, opts.zero_scale) {
            Ok(s) => scores.push(s),
            Err(e) => {
                return Ok(EvaluationSummary::failure(
                    task,
                    model,
                    e.to_string(),
                    runtime,
                    flags,
                ))
            }
        }
    }
    Ok(summarize(task, model, &windows, scores, runtime, flags)?)
}

/// Scores an external submission against the held-out actuals of every
/// task and writes one summary line per task to `out`.
pub fn cmd_score(
    benchmark: &Path,
    submission: &Path,
    out: &Path,
    opts: &RunOptions,
) -> Result<Vec<EvaluationSummary>, CliError> {
    let bench = parse_benchmark(benchmark)?;
    let records = read_submission(submission)?;
    let models: Vec<String> = records
        .iter()
        .map(|r| r.model_name.clone())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let model = match models.as_slice() {
        [] => return Err(CliError::EmptySubmission),
        [one] => one.clone(),
        _ => return Err(CliError::MixedModels(models)),
    };

    let mut by_task: BTreeMap<&str, TaskRecords<'_>> = BTreeMap::new();
    for r in &records {
        if !bench.tasks.iter().any(|t| t.task_name == r.task_name) {
            return Err(CliError::UnknownTask(r.task_name.clone()));
        }
        by_task
            .entry(r.task_name.as_str())
            .or_default()
            .records
            .push(r);
    }
    let empty = TaskRecords::default();
    let results: Vec<Result<EvaluationSummary, CliError>> = with_jobs(opts.jobs, || {
        bench
            .tasks
            .par_iter()
            .map(|t| {
                score_task(
                    t,
                    by_task.get(t.task_name.as_str()).unwrap_or(&empty),
                    &model,
                    opts,
                )
            })
            .collect()
    });

    let mut summaries = Vec::with_capacity(results.len());
    let mut missing = Vec::new();
    for r in results {
        match r {
            Ok(s) => summaries.push(s),
            Err(CliError::IncompleteSubmission(keys)) => missing.extend(keys),
            Err(e) => return Err(e),
        }
    }
    if !missing.is_empty() {
        return Err(CliError::IncompleteSubmission(missing));
    }
    write_atomic(out, summaries_jsonl(&summaries).as_bytes())?;
    Ok(summaries)
}

// ------------------------------------------------------------- leaderboard

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OutputFormat {
    Markdown,
    Csv,
    Json,
}

impl OutputFormat {
    pub const ALL: [OutputFormat; 3] = [
        OutputFormat::Markdown,
        OutputFormat::Csv,
        OutputFormat::Json,
    ];

    pub fn file_name(&self) -> &'static str {
        match self {
            OutputFormat::Markdown => "leaderboard.md",
            OutputFormat::Csv => "leaderboard.csv",
            OutputFormat::Json => "leaderboard.json",
        }
    }
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "md" | "markdown" => Ok(OutputFormat::Markdown),
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!(
                "unknown format `{other}` (expected md, csv or json)"
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LeaderboardOptions {
    /// Metric feeding the error matrix; `None` uses each task's quantile metric.
    pub metric: Option<MetricKind>,
    pub baseline: String,
    pub leakage_reference: Option<String>,
    pub aggregate: AggregateConfig,
    pub formats: Vec<OutputFormat>,
    pub jobs: usize,
}

impl Default for LeaderboardOptions {
    fn default() -> Self {
        LeaderboardOptions {
            metric: None,
            baseline: BaselineKind::SeasonalNaive.to_string(),
            leakage_reference: None,
            aggregate: AggregateConfig::default(),
            formats: OutputFormat::ALL.to_vec(),
            jobs: 0,
        }
    }
}

/// Expands glob patterns (plain paths match themselves) into a sorted,
/// de-duplicated file list.
pub fn expand_globs(patterns: &[String]) -> Result<Vec<PathBuf>, CliError> {
    let mut paths = std::collections::BTreeSet::new();
    for pattern in patterns {
        let matches = glob::glob(pattern).map_err(|e| CliError::Glob {
            pattern: pattern.clone(),
            message: e.to_string(),
        })?;
        for entry in matches {
            let path =
                entry.map_err(|e| CliError::io(e.path(), std::io::Error::other(e.to_string())))?;
            if path.is_file() {
                paths.insert(path);
            }
        }
    }
    if paths.is_empty() {
        return Err(CliError::NoSummaries(patterns.to_vec()));
    }
    Ok(paths.into_iter().collect())
}

pub fn read_summaries(path: &Path) -> Result<Vec<EvaluationSummary>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| CliError::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Builds the leaderboard from summary files and writes the requested
/// formats into `out_dir`.
pub fn cmd_leaderboard(
    summary_globs: &[String],
    out_dir: &Path,
    opts: &LeaderboardOptions,
) -> Result<AggregateReport, CliError> {
    let mut summaries = Vec::new();
    for path in expand_globs(summary_globs)? {
        summaries.extend(read_summaries(&path)?);
    }
    let metric = match opts.metric {
        Some(m) => Some(m),
        None => {
            let chosen: HashSet<MetricKind> =
                summaries.iter().map(|s| s.task.quantile_metric).collect();
            match chosen.len() {
                0 | 1 => chosen.into_iter().next(),
                _ => None,
            }
        }
    };
    let matrix = build_error_matrix_with(
        &summaries,
        |s| s.metric(opts.metric.unwrap_or(s.task.quantile_metric)),
        &opts.baseline,
        opts.leakage_reference.as_deref(),
    )?;
    let report = with_jobs(opts.jobs, || aggregate(&matrix, metric, &opts.aggregate))?;
    for format in &opts.formats {
        let body = match format {
            OutputFormat::Markdown => render_markdown(&report),
            OutputFormat::Csv => render_csv(&report),
            OutputFormat::Json => render_json(&report),
        };
        write_atomic(&out_dir.join(format.file_name()), body.as_bytes())?;
    }
    Ok(report)
}
