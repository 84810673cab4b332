//! Forecast evaluation harness.
//!
//! Declarative benchmarks ([`task`]) over manifest-described datasets
//! ([`dataset`]) are split into rolling-origin windows, forecasts are scored
//! with scale-free metrics ([`metrics`]), and per-task results from many
//! models are aggregated into win rates, skill scores and paired-bootstrap
//! intervals ([`aggregate`]). Three reference forecasters ([`baselines`])
//! make the pipeline runnable without external models.

pub mod aggregate;
pub mod baselines;
pub mod dataset;
pub mod frequency;
pub mod metrics;
pub mod numfmt;
pub mod report;
pub mod synthetic;
pub mod task;

pub use aggregate::{
    aggregate, average_rank, average_win_rate, bootstrap_intervals, bradley_terry,
    build_error_matrix, build_error_matrix_with, pairwise_skill, pairwise_win_rate, skill_scores,
    AggregateConfig, AggregateError, AggregateReport, BootstrapConfig, BradleyTerryConfig,
    ClipBounds, ErrorMatrix, Interval, PairwiseStatistic,
};
pub use baselines::{BaselineError, BaselineKind, BaselineSpec};
pub use dataset::{
    load_dataset, slice_window, validate_dataset, DatasetError, DatasetManifest, TimeSeriesDataset,
};
pub use frequency::Frequency;
pub use metrics::{
    score_window, ForecastSet, MetricError, MetricKind, WindowScores, ZeroScalePolicy,
};
pub use task::{
    generate_windows, parse_benchmark, summarize, Benchmark, EvaluationSummary, EvaluationWindow,
    Task, TaskError,
};
