//! Manifest-described time series datasets: loading, validation against a
//! task, write-back, and per-window slicing.
//!
//! Missing numeric cells are stored as `NaN`. Files may spell them as an
//! empty CSV cell, a JSON `null`, or the literals `NaN`/`nan`/`NA`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frequency::{parse_timestamp, Frequency, FrequencyError};
use crate::metrics::seasonal_error;
use crate::task::{windows_for_dataset, EvaluationWindow, Task};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("column `{column}` declared in the manifest is missing from {path}")]
    MissingColumn { column: String, path: PathBuf },
    #[error("irregular timestamps for item `{item_id}`: {detail}")]
    IrregularTimestamps { item_id: String, detail: String },
    #[error("dataset {0} contains no rows")]
    EmptyDataset(PathBuf),
    #[error("line {line}: column `{column}` holds non-numeric value `{value}`")]
    BadValue {
        line: usize,
        column: String,
        value: String,
    },
    #[error("line {line}: {source}")]
    Timestamp {
        line: usize,
        #[source]
        source: FrequencyError,
    },
    #[error("item `{item_id}`: static column `{column}` is not constant")]
    InconsistentStatic { item_id: String, column: String },
    #[error("item `{item_id}` has length {length}, window needs {required}")]
    InsufficientLength {
        item_id: String,
        length: usize,
        required: usize,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Csv,
    Jsonl,
}

/// Where a dataset lives and which role each column plays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub data_path: PathBuf,
    pub format: DataFormat,
    pub id_column: String,
    pub timestamp_column: String,
    pub frequency: Frequency,
    pub target_columns: Vec<String>,
    #[serde(default)]
    pub past_dynamic_columns: Vec<String>,
    #[serde(default)]
    pub known_dynamic_columns: Vec<String>,
    #[serde(default)]
    pub static_columns: Vec<String>,
}

impl DatasetManifest {
    /// Checks the role invariants: at least one target, and no column used
    /// in two roles.
    pub fn check(&self) -> Result<(), DatasetError> {
        if self.target_columns.is_empty() {
            return Err(DatasetError::InvalidManifest(
                "target_columns must not be empty".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        let all = [&self.id_column, &self.timestamp_column]
            .into_iter()
            .chain(&self.target_columns)
            .chain(&self.past_dynamic_columns)
            .chain(&self.known_dynamic_columns)
            .chain(&self.static_columns);
        for col in all {
            if !seen.insert(col.as_str()) {
                return Err(DatasetError::InvalidManifest(format!(
                    "column `{col}` appears in more than one role"
                )));
            }
        }
        Ok(())
    }

    pub fn roles(&self) -> ColumnRoles {
        ColumnRoles {
            id_column: self.id_column.clone(),
            timestamp_column: self.timestamp_column.clone(),
            target_columns: self.target_columns.clone(),
            past_dynamic_columns: self.past_dynamic_columns.clone(),
            known_dynamic_columns: self.known_dynamic_columns.clone(),
            static_columns: self.static_columns.clone(),
        }
    }

    /// Loads a standalone manifest YAML file. A relative `data_path` is
    /// resolved against the manifest's directory.
    pub fn from_yaml_file(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut manifest: DatasetManifest = serde_yaml::from_str(&text)
            .map_err(|e| DatasetError::InvalidManifest(format!("{}: {e}", path.display())))?;
        manifest.data_path = resolve_data_path(&manifest.data_path, path.parent());
        manifest.check()?;
        Ok(manifest)
    }
}

/// Environment variable naming the root directory for relative data paths.
pub const DATA_ROOT_ENV: &str = "TSBENCH_DATA_ROOT";

/// Resolves a relative data path: against `$TSBENCH_DATA_ROOT` when set,
/// otherwise against the directory of the file that referenced it.
pub fn resolve_data_path(data_path: &Path, base_dir: Option<&Path>) -> PathBuf {
    if data_path.is_absolute() {
        return data_path.to_path_buf();
    }
    if let Some(root) = std::env::var_os(DATA_ROOT_ENV) {
        return PathBuf::from(root).join(data_path);
    }
    match base_dir {
        Some(dir) => dir.join(data_path),
        None => data_path.to_path_buf(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnRoles {
    pub id_column: String,
    pub timestamp_column: String,
    pub target_columns: Vec<String>,
    pub past_dynamic_columns: Vec<String>,
    pub known_dynamic_columns: Vec<String>,
    pub static_columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StaticValue {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub item_id: String,
    /// Timestamps as written in the source file.
    pub timestamps: Vec<String>,
    /// Period index of the first observation at the dataset frequency.
    pub start_index: i64,
    /// One array per target column, each of length `len()`.
    pub targets: Vec<Vec<f64>>,
    pub past_dynamic: Vec<Vec<f64>>,
    pub known_dynamic: Vec<Vec<f64>>,
    pub statics: BTreeMap<String, StaticValue>,
}

impl Series {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    pub series: Vec<Series>,
    pub frequency: Frequency,
    pub roles: ColumnRoles,
}

impl TimeSeriesDataset {
    pub fn num_series(&self) -> usize {
        self.series.len()
    }

    pub fn num_targets(&self) -> usize {
        self.roles.target_columns.len()
    }

    pub fn min_length(&self) -> usize {
        self.series.iter().map(Series::len).min().unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
enum Cell {
    Number(f64),
    Missing,
    Text(String),
}

struct Row {
    line: usize,
    id: String,
    timestamp: String,
    cells: HashMap<String, Cell>,
}

fn is_missing_literal(s: &str) -> bool {
    matches!(s, "" | "NaN" | "nan" | "NA")
}

fn numeric(cell: Option<&Cell>, line: usize, column: &str) -> Result<f64, DatasetError> {
    match cell {
        None | Some(Cell::Missing) => Ok(f64::NAN),
        Some(Cell::Number(v)) => Ok(*v),
        Some(Cell::Text(s)) => {
            let s = s.trim();
            if is_missing_literal(s) {
                return Ok(f64::NAN);
            }
            s.parse::<f64>().map_err(|_| DatasetError::BadValue {
                line,
                column: column.to_string(),
                value: s.to_string(),
            })
        }
    }
}

fn read_csv_rows(manifest: &DatasetManifest) -> Result<Vec<Row>, DatasetError> {
    let path = &manifest.data_path;
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.clone(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let headers = reader.headers()?.clone();
    let position: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    for col in declared_columns(manifest) {
        if !position.contains_key(col.as_str()) {
            return Err(DatasetError::MissingColumn {
                column: col.clone(),
                path: path.clone(),
            });
        }
    }
    let id_pos = position[manifest.id_column.as_str()];
    let ts_pos = position[manifest.timestamp_column.as_str()];
    let value_columns: Vec<(&String, usize)> = value_columns(manifest)
        .map(|c| (c, position[c.as_str()]))
        .collect();

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let mut cells = HashMap::with_capacity(value_columns.len());
        for (col, pos) in &value_columns {
            let raw = record.get(*pos).unwrap_or("");
            let cell = if raw.is_empty() {
                Cell::Missing
            } else {
                Cell::Text(raw.to_string())
            };
            cells.insert((*col).clone(), cell);
        }
        rows.push(Row {
            line,
            id: record.get(id_pos).unwrap_or("").to_string(),
            timestamp: record.get(ts_pos).unwrap_or("").to_string(),
            cells,
        });
    }
    Ok(rows)
}

fn read_jsonl_rows(manifest: &DatasetManifest) -> Result<Vec<Row>, DatasetError> {
    let path = &manifest.data_path;
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.clone(),
        source,
    })?;
    let mut rows = Vec::new();
    let mut keys_seen: BTreeSet<String> = BTreeSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| DatasetError::Io {
            path: path.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: serde_json::Map<String, serde_json::Value> = serde_json::from_str(&line)
            .map_err(|source| DatasetError::Json {
                line: line_no,
                source,
            })?;
        keys_seen.extend(record.keys().cloned());
        let text_of = |key: &str| -> String {
            match record.get(key) {
                Some(serde_json::Value::String(s)) => s.clone(),
                Some(serde_json::Value::Null) | None => String::new(),
                Some(other) => other.to_string(),
            }
        };
        let mut cells = HashMap::new();
        for col in value_columns(manifest) {
            let cell = match record.get(col) {
                None | Some(serde_json::Value::Null) => Cell::Missing,
                Some(serde_json::Value::Number(n)) => Cell::Number(n.as_f64().unwrap_or(f64::NAN)),
                Some(serde_json::Value::String(s)) => Cell::Text(s.clone()),
                Some(other) => Cell::Text(other.to_string()),
            };
            cells.insert(col.clone(), cell);
        }
        rows.push(Row {
            line: line_no,
            id: text_of(&manifest.id_column),
            timestamp: text_of(&manifest.timestamp_column),
            cells,
        });
    }
    if !rows.is_empty() {
        for col in declared_columns(manifest) {
            if !keys_seen.contains(col) {
                return Err(DatasetError::MissingColumn {
                    column: col.clone(),
                    path: path.clone(),
                });
            }
        }
    }
    Ok(rows)
}

fn value_columns(manifest: &DatasetManifest) -> impl Iterator<Item = &String> {
    manifest
        .target_columns
        .iter()
        .chain(&manifest.past_dynamic_columns)
        .chain(&manifest.known_dynamic_columns)
        .chain(&manifest.static_columns)
}

fn declared_columns(manifest: &DatasetManifest) -> impl Iterator<Item = &String> {
    [&manifest.id_column, &manifest.timestamp_column]
        .into_iter()
        .chain(value_columns(manifest))
}

/// Reads a dataset, grouping rows by item id (first-appearance order) and
/// sorting each group by timestamp.
pub fn load_dataset(manifest: &DatasetManifest) -> Result<TimeSeriesDataset, DatasetError> {
    manifest.check()?;
    let rows = match manifest.format {
        DataFormat::Csv => read_csv_rows(manifest)?,
        DataFormat::Jsonl => read_jsonl_rows(manifest)?,
    };
    if rows.is_empty() {
        return Err(DatasetError::EmptyDataset(manifest.data_path.clone()));
    }

    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<(i64, i64, Row)>> = HashMap::new();
    for row in rows {
        let ts = parse_timestamp(&row.timestamp).map_err(|source| DatasetError::Timestamp {
            line: row.line,
            source,
        })?;
        let (index, phase) = manifest.frequency.period_index(&ts);
        let group = groups.entry(row.id.clone()).or_insert_with(|| {
            order.push(row.id.clone());
            Vec::new()
        });
        group.push((index, phase, row));
    }

    let mut series = Vec::with_capacity(order.len());
    for id in order {
        let mut group = groups.remove(&id).expect("group recorded in order");
        group.sort_by_key(|(index, _, _)| *index);
        series.push(build_series(manifest, id, group)?);
    }
    Ok(TimeSeriesDataset {
        series,
        frequency: manifest.frequency,
        roles: manifest.roles(),
    })
}

fn build_series(
    manifest: &DatasetManifest,
    item_id: String,
    group: Vec<(i64, i64, Row)>,
) -> Result<Series, DatasetError> {
    let phase = group[0].1;
    for pair in group.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        let detail = if next.0 == prev.0 {
            Some(format!("duplicate timestamp `{}`", next.2.timestamp))
        } else if next.0 != prev.0 + 1 {
            Some(format!(
                "gap between `{}` and `{}` at frequency {}",
                prev.2.timestamp, next.2.timestamp, manifest.frequency
            ))
        } else if next.1 != phase {
            Some(format!(
                "`{}` is not aligned with the series' {} grid",
                next.2.timestamp, manifest.frequency
            ))
        } else {
            None
        };
        if let Some(detail) = detail {
            return Err(DatasetError::IrregularTimestamps { item_id, detail });
        }
    }

    let column = |names: &[String]| -> Result<Vec<Vec<f64>>, DatasetError> {
        names
            .iter()
            .map(|name| {
                group
                    .iter()
                    .map(|(_, _, row)| numeric(row.cells.get(name), row.line, name))
                    .collect()
            })
            .collect()
    };
    let targets = column(&manifest.target_columns)?;
    let past_dynamic = column(&manifest.past_dynamic_columns)?;
    let known_dynamic = column(&manifest.known_dynamic_columns)?;

    let mut statics = BTreeMap::new();
    for name in &manifest.static_columns {
        let mut value: Option<StaticValue> = None;
        for (_, _, row) in &group {
            let v = match row.cells.get(name) {
                None | Some(Cell::Missing) => continue,
                Some(Cell::Number(x)) => StaticValue::Number(*x),
                Some(Cell::Text(s)) => match s.trim().parse::<f64>() {
                    Ok(x) => StaticValue::Number(x),
                    Err(_) => StaticValue::Text(s.clone()),
                },
            };
            match &value {
                None => value = Some(v),
                Some(prev) if *prev != v => {
                    return Err(DatasetError::InconsistentStatic {
                        item_id,
                        column: name.clone(),
                    })
                }
                Some(_) => {}
            }
        }
        if let Some(v) = value {
            statics.insert(name.clone(), v);
        }
    }

    let start_index = group[0].0;
    let timestamps = group.into_iter().map(|(_, _, row)| row.timestamp).collect();
    Ok(Series {
        item_id,
        timestamps,
        start_index,
        targets,
        past_dynamic,
        known_dynamic,
        statics,
    })
}

fn format_cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

/// Writes a dataset back in long format. Floats use the shortest decimal
/// representation that round-trips; missing cells are written empty (CSV)
/// or `null` (JSONL).
pub fn write_dataset(
    ds: &TimeSeriesDataset,
    path: &Path,
    format: DataFormat,
) -> Result<(), DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let roles = &ds.roles;
    let numeric_names: Vec<&String> = roles
        .target_columns
        .iter()
        .chain(&roles.past_dynamic_columns)
        .chain(&roles.known_dynamic_columns)
        .collect();
    match format {
        DataFormat::Csv => {
            let mut writer = csv::Writer::from_path(path)?;
            let header: Vec<&str> = [&roles.id_column, &roles.timestamp_column]
                .into_iter()
                .chain(numeric_names.iter().copied())
                .chain(&roles.static_columns)
                .map(String::as_str)
                .collect();
            writer.write_record(&header)?;
            for s in &ds.series {
                for t in 0..s.len() {
                    let mut record = vec![s.item_id.clone(), s.timestamps[t].clone()];
                    for arr in s
                        .targets
                        .iter()
                        .chain(&s.past_dynamic)
                        .chain(&s.known_dynamic)
                    {
                        record.push(format_cell(arr[t]));
                    }
                    for name in &roles.static_columns {
                        record.push(match s.statics.get(name) {
                            Some(StaticValue::Number(x)) => format_cell(*x),
                            Some(StaticValue::Text(text)) => text.clone(),
                            None => String::new(),
                        });
                    }
                    writer.write_record(&record)?;
                }
            }
            writer.flush().map_err(io_err)?;
        }
        DataFormat::Jsonl => {
            let file = File::create(path).map_err(io_err)?;
            let mut out = BufWriter::new(file);
            for s in &ds.series {
                for t in 0..s.len() {
                    let mut record = serde_json::Map::new();
                    record.insert(roles.id_column.clone(), s.item_id.clone().into());
                    record.insert(
                        roles.timestamp_column.clone(),
                        s.timestamps[t].clone().into(),
                    );
                    let arrays = s
                        .targets
                        .iter()
                        .chain(&s.past_dynamic)
                        .chain(&s.known_dynamic);
                    for (name, arr) in numeric_names.iter().zip(arrays) {
                        let value = serde_json::Number::from_f64(arr[t])
                            .map(serde_json::Value::Number)
                            .unwrap_or(serde_json::Value::Null);
                        record.insert((*name).clone(), value);
                    }
                    for name in &roles.static_columns {
                        let value = match s.statics.get(name) {
                            Some(v) => serde_json::to_value(v).unwrap_or(serde_json::Value::Null),
                            None => serde_json::Value::Null,
                        };
                        record.insert(name.clone(), value);
                    }
                    let line = serde_json::Value::Object(record).to_string();
                    writeln!(out, "{line}").map_err(io_err)?;
                }
            }
            out.flush().map_err(io_err)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DefectKind {
    MissingTargets {
        dim: usize,
        count: usize,
    },
    ShortHistory {
        length: usize,
        required: usize,
    },
    ZeroScale {
        dim: usize,
        window: usize,
    },
    ScaleHistoryTooShort {
        window: usize,
        cutoff: usize,
        seasonality: usize,
    },
    MissingKnownCovariate {
        column: String,
        window: usize,
    },
    NoFeasibleWindow {
        detail: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Defect {
    pub item_id: Option<String>,
    pub severity: Severity,
    #[serde(flatten)]
    pub kind: DefectKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesReport {
    pub item_id: String,
    pub length: usize,
    /// `2H + 1 + W·H` for the requested number of windows.
    pub required_length: usize,
    pub sufficient_history: bool,
    pub nan_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub task_name: String,
    pub series: Vec<SeriesReport>,
    pub windows: Vec<EvaluationWindow>,
    pub defects: Vec<Defect>,
}

impl ValidationReport {
    /// True when windows could be generated and no error-level defect exists.
    pub fn is_feasible(&self) -> bool {
        !self.windows.is_empty() && self.defects.iter().all(|d| d.severity != Severity::Error)
    }
}

/// Reports history sufficiency, missing values and zero-scale risk for
/// every series of `ds` under `task`. Never fails; problems become defects.
pub fn validate_dataset(ds: &TimeSeriesDataset, task: &Task) -> ValidationReport {
    let h = task.horizon;
    let required_length = 2 * h + 1 + task.num_windows * h;
    let mut defects = Vec::new();

    let windows = match windows_for_dataset(task, ds) {
        Ok(w) => w,
        Err(e) => {
            defects.push(Defect {
                item_id: None,
                severity: Severity::Error,
                kind: DefectKind::NoFeasibleWindow {
                    detail: e.to_string(),
                },
            });
            Vec::new()
        }
    };

    let mut series = Vec::with_capacity(ds.series.len());
    for s in &ds.series {
        let nan_counts: Vec<usize> = s
            .targets
            .iter()
            .map(|arr| arr.iter().filter(|v| v.is_nan()).count())
            .collect();
        for (dim, &count) in nan_counts.iter().enumerate() {
            if count > 0 {
                defects.push(Defect {
                    item_id: Some(s.item_id.clone()),
                    severity: Severity::Warning,
                    kind: DefectKind::MissingTargets { dim, count },
                });
            }
        }
        let sufficient_history = s.len() >= required_length;
        if !sufficient_history {
            defects.push(Defect {
                item_id: Some(s.item_id.clone()),
                severity: Severity::Warning,
                kind: DefectKind::ShortHistory {
                    length: s.len(),
                    required: required_length,
                },
            });
        }

        for window in &windows {
            let cutoff = window.cutoff;
            for (dim, arr) in s.targets.iter().enumerate() {
                match seasonal_error(&arr[..cutoff], task.seasonality) {
                    Ok(scale) if scale.is_zero() => defects.push(Defect {
                        item_id: Some(s.item_id.clone()),
                        severity: Severity::Warning,
                        kind: DefectKind::ZeroScale {
                            dim,
                            window: window.index,
                        },
                    }),
                    Ok(_) => {}
                    Err(_) => defects.push(Defect {
                        item_id: Some(s.item_id.clone()),
                        severity: Severity::Warning,
                        kind: DefectKind::ScaleHistoryTooShort {
                            window: window.index,
                            cutoff,
                            seasonality: task.seasonality,
                        },
                    }),
                }
            }
            for (name, arr) in ds.roles.known_dynamic_columns.iter().zip(&s.known_dynamic) {
                let end = cutoff + h;
                let short = arr.len() < end;
                if short || arr[cutoff..end].iter().any(|v| v.is_nan()) {
                    defects.push(Defect {
                        item_id: Some(s.item_id.clone()),
                        severity: Severity::Error,
                        kind: DefectKind::MissingKnownCovariate {
                            column: name.clone(),
                            window: window.index,
                        },
                    });
                }
            }
        }

        series.push(SeriesReport {
            item_id: s.item_id.clone(),
            length: s.len(),
            required_length,
            sufficient_history,
            nan_counts,
        });
    }

    ValidationReport {
        task_name: task.task_name.clone(),
        series,
        windows,
        defects,
    }
}

/// Model-facing view of one series at a cutoff. Holds nothing past the
/// cutoff except known dynamic covariates.
#[derive(Debug, Clone, Copy)]
pub struct SeriesInput<'a> {
    pub item_id: &'a str,
    series: &'a Series,
    cutoff: usize,
    horizon: usize,
}

impl<'a> SeriesInput<'a> {
    pub fn num_targets(&self) -> usize {
        self.series.targets.len()
    }

    pub fn past_target(&self, dim: usize) -> &'a [f64] {
        &self.series.targets[dim][..self.cutoff]
    }

    pub fn past_dynamic(&self, idx: usize) -> &'a [f64] {
        &self.series.past_dynamic[idx][..self.cutoff]
    }

    pub fn known_past(&self, idx: usize) -> &'a [f64] {
        &self.series.known_dynamic[idx][..self.cutoff]
    }

    pub fn known_future(&self, idx: usize) -> &'a [f64] {
        &self.series.known_dynamic[idx][self.cutoff..self.cutoff + self.horizon]
    }

    pub fn past_timestamps(&self) -> &'a [String] {
        &self.series.timestamps[..self.cutoff]
    }

    pub fn statics(&self) -> &'a BTreeMap<String, StaticValue> {
        &self.series.statics
    }
}

/// One evaluation window cut out of a dataset. Borrowing, so any number of
/// slices over the same dataset coexist.
#[derive(Debug, Clone, Copy)]
pub struct WindowSlice<'a> {
    dataset: &'a TimeSeriesDataset,
    pub window: EvaluationWindow,
    pub horizon: usize,
}

impl<'a> WindowSlice<'a> {
    pub fn num_series(&self) -> usize {
        self.dataset.series.len()
    }

    pub fn num_targets(&self) -> usize {
        self.dataset.num_targets()
    }

    pub fn cutoff(&self) -> usize {
        self.window.cutoff
    }

    pub fn dataset(&self) -> &'a TimeSeriesDataset {
        self.dataset
    }

    /// Prediction-input view: past targets, past covariates, and known
    /// covariates for the whole horizon.
    pub fn inputs(&self) -> impl Iterator<Item = SeriesInput<'a>> + 'a {
        let cutoff = self.window.cutoff;
        let horizon = self.horizon;
        self.dataset.series.iter().map(move |series| SeriesInput {
            item_id: &series.item_id,
            series,
            cutoff,
            horizon,
        })
    }

    pub fn input(&self, n: usize) -> SeriesInput<'a> {
        let series = &self.dataset.series[n];
        SeriesInput {
            item_id: &series.item_id,
            series,
            cutoff: self.window.cutoff,
            horizon: self.horizon,
        }
    }

    /// Held-out target values for `(cutoff, cutoff + H]`.
    pub fn future_actuals(&self, n: usize, dim: usize) -> &'a [f64] {
        let cutoff = self.window.cutoff;
        &self.dataset.series[n].targets[dim][cutoff..cutoff + self.horizon]
    }
}

pub fn slice_window<'a>(
    ds: &'a TimeSeriesDataset,
    window: &EvaluationWindow,
    task: &Task,
) -> Result<WindowSlice<'a>, DatasetError> {
    let required = window.cutoff + task.horizon;
    if let Some(short) = ds.series.iter().find(|s| s.len() < required) {
        return Err(DatasetError::InsufficientLength {
            item_id: short.item_id.clone(),
            length: short.len(),
            required,
        });
    }
    Ok(WindowSlice {
        dataset: ds,
        window: *window,
        horizon: task.horizon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::Task;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let path = dir.join(name);
        std::fs::write(&path, body).unwrap();
        path
    }

    fn csv_manifest(path: PathBuf) -> DatasetManifest {
        DatasetManifest {
            data_path: path,
            format: DataFormat::Csv,
            id_column: "id".into(),
            timestamp_column: "ts".into(),
            frequency: Frequency::Daily,
            target_columns: vec!["y".into()],
            past_dynamic_columns: vec![],
            known_dynamic_columns: vec![],
            static_columns: vec![],
        }
    }

    #[test]
    fn loads_two_series_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            dir.path(),
            "d.csv",
            "id,ts,y\nb,2024-01-02,2\na,2024-01-01,1\nb,2024-01-01,1\na,2024-01-02,\n",
        );
        let ds = load_dataset(&csv_manifest(path)).unwrap();
        assert_eq!(ds.num_series(), 2);
        assert_eq!(ds.num_targets(), 1);
        assert_eq!(ds.series[0].item_id, "b");
        assert_eq!(ds.series[0].targets[0], vec![1.0, 2.0]);
        assert!(ds.series[1].targets[0][1].is_nan());
    }

    #[test]
    fn duplicate_timestamp_is_irregular() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            dir.path(),
            "d.csv",
            "id,ts,y\na,2024-01-01,1\na,2024-01-01,2\n",
        );
        let err = load_dataset(&csv_manifest(path)).unwrap_err();
        assert!(
            matches!(err, DatasetError::IrregularTimestamps { .. }),
            "{err}"
        );
    }

    #[test]
    fn gap_is_irregular() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            dir.path(),
            "d.csv",
            "id,ts,y\na,2024-01-01,1\na,2024-01-03,2\n",
        );
        assert!(matches!(
            load_dataset(&csv_manifest(path)),
            Err(DatasetError::IrregularTimestamps { .. })
        ));
    }

    #[test]
    fn missing_column_and_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(dir.path(), "d.csv", "id,ts,value\na,2024-01-01,1\n");
        assert!(matches!(
            load_dataset(&csv_manifest(path)),
            Err(DatasetError::MissingColumn { .. })
        ));
        let path = write(dir.path(), "e.csv", "id,ts,y\n");
        assert!(matches!(
            load_dataset(&csv_manifest(path)),
            Err(DatasetError::EmptyDataset(_))
        ));
    }

    #[test]
    fn multivariate_jsonl_with_known_covariate() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            dir.path(),
            "d.jsonl",
            concat!(
                "{\"id\":\"s\",\"ts\":\"2024-01-01T00:00:00\",\"y1\":1,\"y2\":2.5,\"price\":9}\n",
                "{\"id\":\"s\",\"ts\":\"2024-01-01T01:00:00\",\"y1\":null,\"y2\":3,\"price\":8}\n",
            ),
        );
        let manifest = DatasetManifest {
            format: DataFormat::Jsonl,
            frequency: Frequency::Hourly,
            target_columns: vec!["y1".into(), "y2".into()],
            known_dynamic_columns: vec!["price".into()],
            ..csv_manifest(path)
        };
        let ds = load_dataset(&manifest).unwrap();
        assert_eq!(ds.num_series(), 1);
        assert_eq!(ds.num_targets(), 2);
        assert_eq!(ds.series[0].known_dynamic.len(), 1);
        assert_eq!(ds.series[0].known_dynamic[0], vec![9.0, 8.0]);
        assert!(ds.series[0].targets[0][1].is_nan());
    }

    #[test]
    fn manifest_roles_must_be_disjoint() {
        let mut m = csv_manifest("x.csv".into());
        m.known_dynamic_columns = vec!["y".into()];
        assert!(matches!(m.check(), Err(DatasetError::InvalidManifest(_))));
        m.known_dynamic_columns.clear();
        m.target_columns.clear();
        assert!(matches!(m.check(), Err(DatasetError::InvalidManifest(_))));
    }

    #[test]
    fn static_must_be_constant() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            dir.path(),
            "d.csv",
            "id,ts,y,region\na,2024-01-01,1,north\na,2024-01-02,2,south\n",
        );
        let mut m = csv_manifest(path);
        m.static_columns = vec!["region".into()];
        assert!(matches!(
            load_dataset(&m),
            Err(DatasetError::InconsistentStatic { .. })
        ));
    }

    fn synthetic_dataset(lengths: &[usize], known: bool) -> TimeSeriesDataset {
        let series = lengths
            .iter()
            .enumerate()
            .map(|(i, &len)| Series {
                item_id: format!("s{i}"),
                timestamps: (0..len).map(|t| t.to_string()).collect(),
                start_index: 0,
                targets: vec![(0..len).map(|t| t as f64).collect()],
                past_dynamic: vec![(0..len).map(|t| -(t as f64)).collect()],
                known_dynamic: if known {
                    vec![(0..len).map(|t| 100.0 + t as f64).collect()]
                } else {
                    vec![]
                },
                statics: BTreeMap::new(),
            })
            .collect();
        TimeSeriesDataset {
            series,
            frequency: Frequency::Daily,
            roles: ColumnRoles {
                id_column: "id".into(),
                timestamp_column: "ts".into(),
                target_columns: vec!["y".into()],
                past_dynamic_columns: vec!["p".into()],
                known_dynamic_columns: if known { vec!["k".into()] } else { vec![] },
                static_columns: vec![],
            },
        }
    }

    fn task(h: usize, w: usize, m: usize) -> Task {
        Task::new("t", csv_manifest("unused.csv".into()), h, w).with_seasonality(m)
    }

    #[test]
    fn slice_lengths() {
        let ds = synthetic_dataset(&[100], true);
        let t = task(10, 1, 1);
        let window = EvaluationWindow {
            index: 1,
            cutoff: 90,
        };
        let slice = slice_window(&ds, &window, &t).unwrap();
        let input = slice.input(0);
        assert_eq!(input.past_target(0).len(), 90);
        assert_eq!(input.past_dynamic(0).len(), 90);
        assert_eq!(input.known_future(0).len(), 10);
        assert_eq!(input.known_future(0)[0], 190.0);
        assert_eq!(slice.future_actuals(0, 0).len(), 10);
        assert_eq!(slice.future_actuals(0, 0)[0], 90.0);

        let late = EvaluationWindow {
            index: 1,
            cutoff: 95,
        };
        assert!(matches!(
            slice_window(&ds, &late, &t),
            Err(DatasetError::InsufficientLength { required: 105, .. })
        ));
    }

    #[test]
    fn validation_sufficient_history() {
        let (h, w) = (5, 3);
        let ds = synthetic_dataset(&[2 * h + 1 + w * h], false);
        let report = validate_dataset(&ds, &task(h, w, 1));
        assert!(report.series[0].sufficient_history);
        assert_eq!(report.windows.len(), w);
        assert!(report.defects.is_empty(), "{:?}", report.defects);
        assert!(report.is_feasible());

        let short = synthetic_dataset(&[2 * h + w * h], false);
        let report = validate_dataset(&short, &task(h, w, 1));
        assert!(!report.series[0].sufficient_history);
    }

    #[test]
    fn validation_flags_zero_scale() {
        let mut ds = synthetic_dataset(&[40], false);
        ds.series[0].targets[0] = vec![3.0; 40];
        let report = validate_dataset(&ds, &task(5, 1, 1));
        assert!(report
            .defects
            .iter()
            .any(|d| matches!(d.kind, DefectKind::ZeroScale { dim: 0, .. })));
    }

    #[test]
    fn validation_rejects_missing_known_covariate_in_horizon() {
        let mut ds = synthetic_dataset(&[40], true);
        ds.series[0].known_dynamic[0][39] = f64::NAN;
        let report = validate_dataset(&ds, &task(5, 1, 1));
        assert!(!report.is_feasible());
    }
}
