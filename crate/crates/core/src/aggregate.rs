//! Cross-task aggregation of an error matrix `E` (tasks x models, lower is
//! better) into win rates, skill scores and their bootstrap intervals.
//!
//! Win-rate arithmetic is done on integer "half-win" credits (2 for a win,
//! 1 for a tie, 0 for a loss) and converted to a fraction once, so ties are
//! counted exactly. Skill scores use the clipped geometric mean of error
//! ratios, computed as `exp(mean(ln(clip(ratio))))`.

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::MetricKind;
use crate::task::EvaluationSummary;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AggregateError {
    #[error("baseline `{baseline}` has no valid score on task `{task}`")]
    BaselineIncomplete { baseline: String, task: String },
    #[error("model `{model}` has no score on task `{task}` and no failure record")]
    MissingTaskScore { model: String, task: String },
    #[error("model `{model}` has more than one summary for task `{task}`")]
    DuplicateSummary { model: String, task: String },
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("need at least 2 models, got {0}")]
    TooFewModels(usize),
    #[error("error matrix has no tasks")]
    NoTasks,
    #[error("error matrix is ragged or has negative/non-finite entries: {0}")]
    InvalidMatrix(String),
    #[error("baseline error is zero on task {task} while model {model} has a positive error")]
    ZeroBaseline { task: usize, model: usize },
    #[error("reference error is zero on task {task} while model {model} has a positive error")]
    ZeroReference { task: usize, model: usize },
    #[error("Bradley-Terry fit did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NonConvergence {
        iterations: usize,
        gradient_norm: f64,
    },
    #[error("Bradley-Terry MLE is not finite: the comparison graph is not strongly connected")]
    NoFiniteMle,
}

/// Bounds applied to error ratios before taking logs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipBounds {
    pub lower: f64,
    pub upper: f64,
}

impl Default for ClipBounds {
    fn default() -> Self {
        ClipBounds {
            lower: 1e-2,
            upper: 100.0,
        }
    }
}

impl ClipBounds {
    pub fn clip(&self, x: f64) -> f64 {
        x.clamp(self.lower, self.upper)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputationReason {
    Failure,
    Leakage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Imputation {
    pub task_index: usize,
    pub model_index: usize,
    pub task_name: String,
    pub model_name: String,
    pub reason: ImputationReason,
    pub source_model: String,
}

/// Per-task scores of every model after failure and leakage imputation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorMatrix {
    /// `values[r][j]`: score of model `j` on task `r`.
    pub values: Vec<Vec<f64>>,
    pub task_names: Vec<String>,
    pub model_names: Vec<String>,
    pub baseline_index: usize,
    pub failure_mask: Vec<Vec<bool>>,
    pub leakage_mask: Vec<Vec<bool>>,
    pub imputation_log: Vec<Imputation>,
    pub runtimes: Vec<Vec<Option<f64>>>,
}

impl ErrorMatrix {
    /// Wraps raw values with no failures, leakage or runtimes.
    pub fn from_values(
        values: Vec<Vec<f64>>,
        task_names: Vec<String>,
        model_names: Vec<String>,
        baseline_index: usize,
    ) -> Result<Self, AggregateError> {
        let (r, m) = (values.len(), model_names.len());
        if task_names.len() != r {
            return Err(AggregateError::InvalidMatrix(format!(
                "{r} rows but {} task names",
                task_names.len()
            )));
        }
        if baseline_index >= m {
            return Err(AggregateError::InvalidMatrix(format!(
                "baseline index {baseline_index} >= {m} models"
            )));
        }
        check_matrix(&values)?;
        if values.first().is_some_and(|row| row.len() != m) {
            return Err(AggregateError::InvalidMatrix(format!(
                "rows have {} columns for {m} models",
                values[0].len()
            )));
        }
        Ok(ErrorMatrix {
            failure_mask: vec![vec![false; m]; r],
            leakage_mask: vec![vec![false; m]; r],
            runtimes: vec![vec![None; m]; r],
            imputation_log: Vec::new(),
            values,
            task_names,
            model_names,
            baseline_index,
        })
    }

    pub fn num_tasks(&self) -> usize {
        self.values.len()
    }

    pub fn num_models(&self) -> usize {
        self.model_names.len()
    }

    pub fn model_index(&self, name: &str) -> Option<usize> {
        self.model_names.iter().position(|m| m == name)
    }
}

fn check_matrix<R: AsRef<[f64]>>(rows: &[R]) -> Result<(usize, usize), AggregateError> {
    let r = rows.len();
    if r == 0 {
        return Err(AggregateError::NoTasks);
    }
    let m = rows[0].as_ref().len();
    for (i, row) in rows.iter().enumerate() {
        let row = row.as_ref();
        if row.len() != m {
            return Err(AggregateError::InvalidMatrix(format!(
                "row {i} has {} columns, expected {m}",
                row.len()
            )));
        }
        if let Some(v) = row.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(AggregateError::InvalidMatrix(format!(
                "row {i} contains {v}"
            )));
        }
    }
    if m < 2 {
        return Err(AggregateError::TooFewModels(m));
    }
    Ok((r, m))
}

/// Assembles the error matrix for one metric. Failed runs take the
/// baseline's score on that task; runs flagged as trained on the task's
/// dataset take the reference model's score (the baseline when no
/// reference is given, or when the reference itself is unusable there).
pub fn build_error_matrix(
    summaries: &[EvaluationSummary],
    metric: MetricKind,
    baseline_name: &str,
    reference_name: Option<&str>,
) -> Result<ErrorMatrix, AggregateError> {
    build_error_matrix_with(
        summaries,
        |s| s.metric(metric),
        baseline_name,
        reference_name,
    )
}

/// Like [`build_error_matrix`], with the per-task score picked by `score`
/// (for example the metric each task names as primary).
pub fn build_error_matrix_with<F>(
    summaries: &[EvaluationSummary],
    score: F,
    baseline_name: &str,
    reference_name: Option<&str>,
) -> Result<ErrorMatrix, AggregateError>
where
    F: Fn(&EvaluationSummary) -> Option<f64>,
{
    let mut task_names: Vec<String> = Vec::new();
    let mut seen_tasks = BTreeSet::new();
    let mut models = BTreeSet::new();
    let mut lookup: HashMap<(&str, &str), &EvaluationSummary> = HashMap::new();
    for s in summaries {
        if seen_tasks.insert(s.task_name.as_str()) {
            task_names.push(s.task_name.clone());
        }
        models.insert(s.model_name.clone());
        if lookup.insert((&s.task_name, &s.model_name), s).is_some() {
            return Err(AggregateError::DuplicateSummary {
                model: s.model_name.clone(),
                task: s.task_name.clone(),
            });
        }
    }
    let model_names: Vec<String> = models.into_iter().collect();
    if task_names.is_empty() {
        return Err(AggregateError::NoTasks);
    }
    let baseline_index = model_names
        .iter()
        .position(|m| m == baseline_name)
        .ok_or_else(|| AggregateError::UnknownModel(baseline_name.to_string()))?;
    let reference_name = reference_name.unwrap_or(baseline_name);
    if !model_names.iter().any(|m| m == reference_name) {
        return Err(AggregateError::UnknownModel(reference_name.to_string()));
    }

    let valid = |s: &EvaluationSummary| -> Option<f64> {
        if s.failed || s.trained_on_this_dataset {
            return None;
        }
        score(s).filter(|v| v.is_finite())
    };

    let (r, m) = (task_names.len(), model_names.len());
    let mut values = vec![vec![0.0; m]; r];
    let mut failure_mask = vec![vec![false; m]; r];
    let mut leakage_mask = vec![vec![false; m]; r];
    let mut runtimes = vec![vec![None; m]; r];
    let mut log = Vec::new();

    for (ti, task) in task_names.iter().enumerate() {
        let base = lookup
            .get(&(task.as_str(), baseline_name))
            .and_then(|s| valid(s))
            .ok_or_else(|| AggregateError::BaselineIncomplete {
                baseline: baseline_name.to_string(),
                task: task.clone(),
            })?;
        let (reference_value, reference_source) = match lookup
            .get(&(task.as_str(), reference_name))
            .and_then(|s| valid(s))
        {
            Some(v) => (v, reference_name),
            None => (base, baseline_name),
        };

        for (mi, model) in model_names.iter().enumerate() {
            let s = lookup
                .get(&(task.as_str(), model.as_str()))
                .ok_or_else(|| AggregateError::MissingTaskScore {
                    model: model.clone(),
                    task: task.clone(),
                })?;
            runtimes[ti][mi] = s.runtime_s;
            failure_mask[ti][mi] = s.failed;
            leakage_mask[ti][mi] = s.trained_on_this_dataset;
            let mut impute = |reason, source: &str| {
                log.push(Imputation {
                    task_index: ti,
                    model_index: mi,
                    task_name: task.clone(),
                    model_name: model.clone(),
                    reason,
                    source_model: source.to_string(),
                })
            };
            values[ti][mi] = if s.failed {
                impute(ImputationReason::Failure, baseline_name);
                base
            } else if s.trained_on_this_dataset {
                impute(ImputationReason::Leakage, reference_source);
                reference_value
            } else {
                score(s).filter(|v| v.is_finite()).ok_or_else(|| {
                    AggregateError::MissingTaskScore {
                        model: model.clone(),
                        task: task.clone(),
                    }
                })?
            };
        }
    }

    check_matrix(&values)?;
    Ok(ErrorMatrix {
        values,
        task_names,
        model_names,
        baseline_index,
        failure_mask,
        leakage_mask,
        imputation_log: log,
        runtimes,
    })
}

/// Half-win credit of `a` against `b` (lower error wins).
#[inline]
fn credit(a: f64, b: f64) -> u64 {
    if a < b {
        2
    } else if a == b {
        1
    } else {
        0
    }
}

/// Half-win credits of each model summed over tasks and opponents.
pub fn win_credits<R: AsRef<[f64]>>(rows: &[R]) -> Vec<u64> {
    let m = rows.first().map_or(0, |r| r.as_ref().len());
    let mut credits = vec![0u64; m];
    for row in rows {
        let row = row.as_ref();
        for j in 0..m {
            for k in 0..m {
                if j != k {
                    credits[j] += credit(row[j], row[k]);
                }
            }
        }
    }
    credits
}

/// Probability that a model beats a random other model on a random task,
/// ties counting half.
pub fn average_win_rate<R: AsRef<[f64]>>(rows: &[R]) -> Result<Vec<f64>, AggregateError> {
    let (r, m) = check_matrix(rows)?;
    let denom = (2 * r * (m - 1)) as f64;
    Ok(win_credits(rows)
        .into_iter()
        .map(|c| c as f64 / denom)
        .collect())
}

fn log_ratio(
    num: f64,
    den: f64,
    clip: ClipBounds,
    on_zero: impl FnOnce() -> AggregateError,
) -> Result<f64, AggregateError> {
    if den == 0.0 {
        if num == 0.0 {
            return Ok(0.0);
        }
        return Err(on_zero());
    }
    Ok(clip.clip(num / den).ln())
}

/// `1 - geomean_r clip(E_rj / E_rb)` for every model `j`.
pub fn skill_scores<R: AsRef<[f64]>>(
    rows: &[R],
    baseline: usize,
    clip: ClipBounds,
) -> Result<Vec<f64>, AggregateError> {
    let (r, m) = check_matrix(rows)?;
    if baseline >= m {
        return Err(AggregateError::InvalidMatrix(format!(
            "baseline index {baseline} >= {m}"
        )));
    }
    (0..m)
        .map(|j| {
            let mut sum = 0.0;
            for (ti, row) in rows.iter().enumerate() {
                let row = row.as_ref();
                sum += log_ratio(row[j], row[baseline], clip, || {
                    AggregateError::ZeroBaseline { task: ti, model: j }
                })?;
            }
            Ok(1.0 - (sum / r as f64).exp())
        })
        .collect()
}

/// Half-win credits of `j` against `k` summed over tasks; the diagonal
/// is `R` (a model ties with itself).
pub fn pairwise_credits<R: AsRef<[f64]>>(rows: &[R]) -> Vec<Vec<u64>> {
    let m = rows.first().map_or(0, |r| r.as_ref().len());
    let mut credits = vec![vec![0u64; m]; m];
    for row in rows {
        let row = row.as_ref();
        for j in 0..m {
            for k in 0..m {
                credits[j][k] += credit(row[j], row[k]);
            }
        }
    }
    credits
}

/// `W[j][k]`: fraction of tasks where `j` beats `k`, ties half; diagonal 0.5.
pub fn pairwise_win_rate<R: AsRef<[f64]>>(rows: &[R]) -> Result<Vec<Vec<f64>>, AggregateError> {
    let (r, _) = check_matrix(rows)?;
    let denom = (2 * r) as f64;
    Ok(pairwise_credits(rows)
        .into_iter()
        .map(|row| row.into_iter().map(|c| c as f64 / denom).collect())
        .collect())
}

/// `S[j][k] = 1 - geomean_r clip(E_rj / E_rk)`; diagonal 0.
pub fn pairwise_skill<R: AsRef<[f64]>>(
    rows: &[R],
    clip: ClipBounds,
) -> Result<Vec<Vec<f64>>, AggregateError> {
    let (r, m) = check_matrix(rows)?;
    let mut out = vec![vec![0.0; m]; m];
    for j in 0..m {
        for k in 0..m {
            if j == k {
                continue;
            }
            let mut sum = 0.0;
            for (ti, row) in rows.iter().enumerate() {
                let row = row.as_ref();
                sum += log_ratio(row[j], row[k], clip, || AggregateError::ZeroReference {
                    task: ti,
                    model: j,
                })?;
            }
            out[j][k] = 1.0 - (sum / r as f64).exp();
        }
    }
    Ok(out)
}

/// Mean midrank of each model: `1 + #lower + #tied / 2` per task.
pub fn average_rank<R: AsRef<[f64]>>(rows: &[R]) -> Result<Vec<f64>, AggregateError> {
    let (r, m) = check_matrix(rows)?;
    // doubled ranks: 2 + 2 * lower + tied
    let mut doubled = vec![0u64; m];
    for row in rows {
        let row = row.as_ref();
        for j in 0..m {
            let mut d = 2u64;
            for k in 0..m {
                if k != j {
                    d += 2 - credit(row[j], row[k]);
                }
            }
            doubled[j] += d;
        }
    }
    let denom = (2 * r) as f64;
    Ok(doubled.into_iter().map(|d| d as f64 / denom).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    /// Number of bootstrap replicates `B`.
    pub samples: usize,
    /// Intervals have coverage `1 - alpha`.
    pub alpha: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            samples: 1000,
            alpha: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairwiseStatistic {
    WinRate,
    Skill,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

/// Row indices of bootstrap replicate `replicate`.
///
/// Each replicate draws from its own ChaCha8 stream: the generator is
/// seeded with `seed` and switched to stream number `replicate`, so any
/// replicate can be regenerated independently of the others.
pub fn resample_indices(seed: u64, replicate: usize, num_tasks: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    (0..num_tasks)
        .map(|_| rng.random_range(0..num_tasks))
        .collect()
}

/// Empirical `p`-quantile of sorted values with linear interpolation
/// between order statistics (position `(n - 1) p`).
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let pos = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    if frac == 0.0 || sorted[lo] == sorted[hi] {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

fn check_bootstrap(cfg: &BootstrapConfig) -> Result<(), AggregateError> {
    if cfg.samples == 0 || !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(AggregateError::InvalidMatrix(format!(
            "bootstrap needs samples >= 1 and 0 < alpha < 1 (got {}, {})",
            cfg.samples, cfg.alpha
        )));
    }
    Ok(())
}

fn percentile_intervals(mut replicates: Vec<Vec<f64>>, alpha: f64) -> Vec<Interval> {
    replicates
        .iter_mut()
        .map(|vals| {
            vals.sort_by(f64::total_cmp);
            Interval {
                lower: empirical_quantile(vals, alpha / 2.0),
                upper: empirical_quantile(vals, 1.0 - alpha / 2.0),
            }
        })
        .collect()
}

/// Paired bootstrap over tasks: every replicate resamples whole rows of `E`
/// (all models together) and recomputes the pairwise statistic. Returns
/// percentile intervals `[Q(alpha/2), Q(1 - alpha/2)]` indexed `[j][k]`.
pub fn bootstrap_intervals<R: AsRef<[f64]> + Sync>(
    rows: &[R],
    statistic: PairwiseStatistic,
    cfg: &BootstrapConfig,
    clip: ClipBounds,
) -> Result<Vec<Vec<Interval>>, AggregateError> {
    let (r, m) = check_matrix(rows)?;
    check_bootstrap(cfg)?;

    // Per-task contributions, so a replicate is a sum over sampled rows.
    let contributions: Vec<Vec<f64>> = rows
        .iter()
        .enumerate()
        .map(|(ti, row)| {
            let row = row.as_ref();
            let mut c = vec![0.0; m * m];
            for j in 0..m {
                for k in 0..m {
                    c[j * m + k] = match statistic {
                        PairwiseStatistic::WinRate => credit(row[j], row[k]) as f64,
                        PairwiseStatistic::Skill if j == k => 0.0,
                        PairwiseStatistic::Skill => log_ratio(row[j], row[k], clip, || {
                            AggregateError::ZeroReference { task: ti, model: j }
                        })?,
                    };
                }
            }
            Ok(c)
        })
        .collect::<Result<_, AggregateError>>()?;

    let replicates: Vec<Vec<f64>> = (0..cfg.samples)
        .into_par_iter()
        .map(|b| {
            let mut sums = vec![0.0; m * m];
            for idx in resample_indices(cfg.seed, b, r) {
                for (s, c) in sums.iter_mut().zip(&contributions[idx]) {
                    *s += c;
                }
            }
            sums.into_iter()
                .enumerate()
                .map(|(cell, s)| match statistic {
                    PairwiseStatistic::WinRate => s / (2 * r) as f64,
                    PairwiseStatistic::Skill if cell / m == cell % m => 0.0,
                    PairwiseStatistic::Skill => 1.0 - (s / r as f64).exp(),
                })
                .collect()
        })
        .collect();

    // transpose to one sample vector per cell
    let per_cell: Vec<Vec<f64>> = (0..m * m)
        .map(|cell| replicates.iter().map(|rep| rep[cell]).collect())
        .collect();
    let flat = percentile_intervals(per_cell, cfg.alpha);
    Ok(flat.chunks(m).map(<[Interval]>::to_vec).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalStatistic {
    WinRate,
    Skill { baseline: usize },
}

/// Paired-bootstrap percentile intervals for the marginal statistics.
pub fn bootstrap_marginal_intervals<R: AsRef<[f64]> + Sync>(
    rows: &[R],
    statistic: MarginalStatistic,
    cfg: &BootstrapConfig,
    clip: ClipBounds,
) -> Result<Vec<Interval>, AggregateError> {
    let (r, m) = check_matrix(rows)?;
    check_bootstrap(cfg)?;
    if let MarginalStatistic::Skill { baseline } = statistic {
        skill_scores(rows, baseline, clip)?;
    }
    let replicates: Vec<Vec<f64>> = (0..cfg.samples)
        .into_par_iter()
        .map(|b| {
            let sample: Vec<&[f64]> = resample_indices(cfg.seed, b, r)
                .into_iter()
                .map(|i| rows[i].as_ref())
                .collect();
            match statistic {
                MarginalStatistic::WinRate => average_win_rate(&sample),
                MarginalStatistic::Skill { baseline } => skill_scores(&sample, baseline, clip),
            }
            .expect("resampled rows of a valid matrix are valid")
        })
        .collect();
    let per_model: Vec<Vec<f64>> = (0..m)
        .map(|j| replicates.iter().map(|rep| rep[j]).collect())
        .collect();
    Ok(percentile_intervals(per_model, cfg.alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BradleyTerryConfig {
    /// Logistic scale: `P(j beats k) = sigmoid(lambda * (theta_j - theta_k))`.
    pub lambda: f64,
    pub anchor_index: usize,
    pub anchor_value: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for BradleyTerryConfig {
    fn default() -> Self {
        BradleyTerryConfig {
            lambda: std::f64::consts::LN_10 / 400.0,
            anchor_index: 0,
            anchor_value: 1000.0,
            max_iterations: 500,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BradleyTerryFit {
    pub theta: Vec<f64>,
    pub iterations: usize,
    /// Euclidean norm of the log-likelihood gradient in `lambda * theta`
    /// units at the returned point.
    pub gradient_norm: f64,
}

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn bt_log_likelihood(w: &[Vec<f64>], x: &[f64]) -> f64 {
    let m = x.len();
    let mut ll = 0.0;
    for j in 0..m {
        for k in j + 1..m {
            let d = x[j] - x[k];
            ll += w[j][k] * log_sigmoid(d) + (1.0 - w[j][k]) * log_sigmoid(-d);
        }
    }
    ll
}

/// Whether every model can reach every other through "beats with
/// positive rate" edges. Without it the likelihood has no finite maximum.
fn strongly_connected(w: &[Vec<f64>]) -> bool {
    let m = w.len();
    let reach = |forward: bool| {
        let mut seen = vec![false; m];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(j) = stack.pop() {
            for k in 0..m {
                let edge = if forward { w[j][k] } else { w[k][j] };
                if !seen[k] && j != k && edge > 0.0 {
                    seen[k] = true;
                    stack.push(k);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

/// Solves `a x = b` in place by Gaussian elimination with partial pivoting.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                let (upper, lower) = a.split_at_mut(row);
                for (x, p) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                    *x -= f * p;
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Maximum-likelihood Bradley-Terry ratings from a complete pairwise
/// win-rate matrix, by damped Newton ascent with the anchor model held
/// fixed at `anchor_value`.
pub fn bradley_terry(
    pairwise: &[Vec<f64>],
    cfg: &BradleyTerryConfig,
) -> Result<BradleyTerryFit, AggregateError> {
    let m = pairwise.len();
    if m < 2 {
        return Err(AggregateError::TooFewModels(m));
    }
    if pairwise.iter().any(|row| row.len() != m)
        || cfg.anchor_index >= m
        || cfg.lambda.is_nan()
        || cfg.lambda <= 0.0
    {
        return Err(AggregateError::InvalidMatrix(
            "pairwise matrix must be square with a valid anchor".into(),
        ));
    }
    if !strongly_connected(pairwise) {
        return Err(AggregateError::NoFiniteMle);
    }

    let anchor = cfg.anchor_index;
    let free: Vec<usize> = (0..m).filter(|&j| j != anchor).collect();
    let mut x = vec![0.0; m];

    let gradient = |x: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0; m];
        for j in 0..m {
            for k in j + 1..m {
                let resid = pairwise[j][k] - sigmoid(x[j] - x[k]);
                g[j] += resid;
                g[k] -= resid;
            }
        }
        g
    };
    let norm = |g: &[f64]| g.iter().map(|v| v * v).sum::<f64>().sqrt();

    let mut iterations = 0;
    let mut g = gradient(&x);
    let mut gnorm = norm(&g);
    while gnorm > cfg.tolerance {
        if iterations == cfg.max_iterations {
            return Err(AggregateError::NonConvergence {
                iterations,
                gradient_norm: gnorm,
            });
        }
        iterations += 1;

        // negative Hessian restricted to the free coordinates
        let mut info = vec![vec![0.0; m]; m];
        for j in 0..m {
            for k in j + 1..m {
                let p = sigmoid(x[j] - x[k]);
                let v = p * (1.0 - p);
                info[j][j] += v;
                info[k][k] += v;
                info[j][k] -= v;
                info[k][j] -= v;
            }
        }
        let a: Vec<Vec<f64>> = free
            .iter()
            .map(|&i| free.iter().map(|&j| info[i][j]).collect())
            .collect();
        let b: Vec<f64> = free.iter().map(|&i| g[i]).collect();
        let step = solve_linear(a, b).ok_or(AggregateError::NonConvergence {
            iterations,
            gradient_norm: gnorm,
        })?;

        // Backtracking on the likelihood. Close to the optimum its change
        // drops below rounding, so a smaller gradient also counts as progress.
        let current = bt_log_likelihood(pairwise, &x);
        let mut t = 1.0;
        let mut candidate = x.clone();
        let mut candidate_g = g.clone();
        for _ in 0..60 {
            for (&i, s) in free.iter().zip(&step) {
                candidate[i] = x[i] + t * s;
            }
            candidate_g = gradient(&candidate);
            if bt_log_likelihood(pairwise, &candidate) >= current || norm(&candidate_g) < gnorm {
                break;
            }
            t *= 0.5;
        }
        x = candidate;
        g = candidate_g;
        gnorm = norm(&g);
    }

    let theta = x
        .iter()
        .map(|xi| cfg.anchor_value + (xi - x[anchor]) / cfg.lambda)
        .collect();
    Ok(BradleyTerryFit {
        theta,
        iterations,
        gradient_norm: gnorm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateConfig {
    pub clip: ClipBounds,
    pub bootstrap: BootstrapConfig,
    /// Also report bootstrap intervals for the marginal statistics.
    pub marginal_intervals: bool,
    pub bt_lambda: f64,
    pub bt_anchor_value: f64,
}

impl Default for AggregateConfig {
    fn default() -> Self {
        AggregateConfig {
            clip: ClipBounds::default(),
            bootstrap: BootstrapConfig::default(),
            marginal_intervals: false,
            bt_lambda: std::f64::consts::LN_10 / 400.0,
            bt_anchor_value: 1000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub model: String,
    pub avg_win_rate: f64,
    pub skill_score: f64,
    pub median_runtime_s: Option<f64>,
    pub leakage_pct: f64,
    pub failures: usize,
    pub average_rank: f64,
    pub bt_rating: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub win_rate_interval: Option<Interval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skill_interval: Option<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BradleyTerrySummary {
    pub lambda: f64,
    pub anchor_model: String,
    pub anchor_value: f64,
    pub iterations: Option<usize>,
    pub gradient_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Leaderboard plus pairwise comparisons. Pairwise matrices and intervals
/// are indexed in `model_names` order; `marginal` is sorted by average
/// win rate, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub metric: Option<String>,
    pub baseline: String,
    pub num_tasks: usize,
    pub task_names: Vec<String>,
    pub model_names: Vec<String>,
    pub clip: ClipBounds,
    pub bootstrap: BootstrapConfig,
    pub marginal: Vec<ModelRow>,
    pub pairwise_win_rate: Vec<Vec<f64>>,
    pub pairwise_skill: Vec<Vec<f64>>,
    pub win_rate_intervals: Vec<Vec<Interval>>,
    pub skill_intervals: Vec<Vec<Interval>>,
    pub bradley_terry: BradleyTerrySummary,
    pub imputations: Vec<Imputation>,
}

fn median(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

pub fn aggregate(
    matrix: &ErrorMatrix,
    metric: Option<MetricKind>,
    cfg: &AggregateConfig,
) -> Result<AggregateReport, AggregateError> {
    let rows = &matrix.values;
    let (r, m) = check_matrix(rows)?;
    let beta = matrix.baseline_index;

    let win = average_win_rate(rows)?;
    let skill = skill_scores(rows, beta, cfg.clip)?;
    let ranks = average_rank(rows)?;
    let pw_win = pairwise_win_rate(rows)?;
    let pw_skill = pairwise_skill(rows, cfg.clip)?;
    let win_ci = bootstrap_intervals(rows, PairwiseStatistic::WinRate, &cfg.bootstrap, cfg.clip)?;
    let skill_ci = bootstrap_intervals(rows, PairwiseStatistic::Skill, &cfg.bootstrap, cfg.clip)?;
    let (marginal_win_ci, marginal_skill_ci) = if cfg.marginal_intervals {
        (
            Some(bootstrap_marginal_intervals(
                rows,
                MarginalStatistic::WinRate,
                &cfg.bootstrap,
                cfg.clip,
            )?),
            Some(bootstrap_marginal_intervals(
                rows,
                MarginalStatistic::Skill { baseline: beta },
                &cfg.bootstrap,
                cfg.clip,
            )?),
        )
    } else {
        (None, None)
    };

    let bt_cfg = BradleyTerryConfig {
        lambda: cfg.bt_lambda,
        anchor_index: beta,
        anchor_value: cfg.bt_anchor_value,
        ..BradleyTerryConfig::default()
    };
    let bt = bradley_terry(&pw_win, &bt_cfg);
    let bradley_terry = BradleyTerrySummary {
        lambda: cfg.bt_lambda,
        anchor_model: matrix.model_names[beta].clone(),
        anchor_value: cfg.bt_anchor_value,
        iterations: bt.as_ref().ok().map(|f| f.iterations),
        gradient_norm: bt.as_ref().ok().map(|f| f.gradient_norm),
        error: bt.as_ref().err().map(ToString::to_string),
    };
    let theta = bt.ok().map(|f| f.theta);

    let mut marginal: Vec<ModelRow> = (0..m)
        .map(|j| {
            let runtimes = matrix.runtimes.iter().filter_map(|row| row[j]).collect();
            let leaked = matrix.leakage_mask.iter().filter(|row| row[j]).count();
            ModelRow {
                model: matrix.model_names[j].clone(),
                avg_win_rate: win[j],
                skill_score: skill[j],
                median_runtime_s: median(runtimes),
                leakage_pct: 100.0 * leaked as f64 / r as f64,
                failures: matrix.failure_mask.iter().filter(|row| row[j]).count(),
                average_rank: ranks[j],
                bt_rating: theta.as_ref().map(|t| t[j]),
                win_rate_interval: marginal_win_ci.as_ref().map(|c| c[j]),
                skill_interval: marginal_skill_ci.as_ref().map(|c| c[j]),
            }
        })
        .collect();
    marginal.sort_by(|a, b| {
        b.avg_win_rate
            .total_cmp(&a.avg_win_rate)
            .then_with(|| b.skill_score.total_cmp(&a.skill_score))
            .then_with(|| a.model.cmp(&b.model))
    });

    Ok(AggregateReport {
        metric: metric.map(|k| k.to_string()),
        baseline: matrix.model_names[beta].clone(),
        num_tasks: r,
        task_names: matrix.task_names.clone(),
        model_names: matrix.model_names.clone(),
        clip: cfg.clip,
        bootstrap: cfg.bootstrap,
        marginal,
        pairwise_win_rate: pw_win,
        pairwise_skill: pw_skill,
        win_rate_intervals: win_ci,
        skill_intervals: skill_ci,
        bradley_terry,
        imputations: matrix.imputation_log.clone(),
    })
}
