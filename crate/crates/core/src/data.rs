//! Sweep records: ingestion from JSONL/CSV, validation, serialization and
//! grouping into per-(model, horizon) learning-rate sweeps.
//!
//! Token counts and parameter counts are raw counts (`8e11` tokens, not
//! `800` billions). Scaling-law code converts to reference units itself.
//!
//! Row indices in errors and reports are 1-based. For JSONL they are line
//! numbers; for CSV they count data rows after the header.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Batch size assumed when a record omits `batch_size_tokens` (2^19 tokens).
pub const DEFAULT_BATCH_SIZE_TOKENS: f64 = 524_288.0;

/// Minimum number of distinct learning rates for a quadratic fit.
pub const MIN_DISTINCT_LRS: usize = 3;

/// Fixed CSV column order, used for writing. Reading matches by header name.
pub const CSV_COLUMNS: [&str; 12] = [
    "model_name",
    "n_params",
    "n_layers",
    "batch_size_tokens",
    "token_horizon",
    "max_lr",
    "final_val_loss",
    "seed",
    "status",
    "parametrization",
    "unique_tokens",
    "architecture",
];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    #[default]
    Completed,
    Diverged,
}

impl FromStr for RunStatus {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "completed" => Ok(RunStatus::Completed),
            "diverged" => Ok(RunStatus::Diverged),
            other => Err(format!("expected `completed` or `diverged`, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Parametrization {
    #[default]
    #[serde(rename = "standard")]
    Standard,
    #[serde(rename = "muP")]
    MuP,
}

impl FromStr for Parametrization {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "standard" | "sp" => Ok(Parametrization::Standard),
            "mup" => Ok(Parametrization::MuP),
            other => Err(format!("expected `standard` or `muP`, got `{other}`")),
        }
    }
}

/// One training run of a learning-rate sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model_name: String,
    /// Total trainable parameters.
    pub n_params: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_layers: Option<u32>,
    pub batch_size_tokens: f64,
    /// Total training tokens, counting repeats.
    pub token_horizon: f64,
    /// Peak learning rate of the schedule.
    pub max_lr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_val_loss: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub status: RunStatus,
    #[serde(default)]
    pub parametrization: Parametrization,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unique_tokens: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub architecture: Option<String>,
}

impl RunRecord {
    pub fn is_completed(&self) -> bool {
        self.status == RunStatus::Completed
    }

    /// Checks the record invariants. `row` is only used for error messages.
    pub fn validate(&self, row: usize) -> Result<()> {
        let positive = |field: &str, value: f64| {
            if value.is_finite() && value > 0.0 {
                Ok(())
            } else {
                Err(Error::Validation {
                    row,
                    field: field.to_string(),
                    message: format!("must be a positive finite number, got {value}"),
                })
            }
        };
        if self.model_name.is_empty() {
            return Err(Error::Validation {
                row,
                field: "model_name".into(),
                message: "must not be empty".into(),
            });
        }
        positive("n_params", self.n_params)?;
        positive("batch_size_tokens", self.batch_size_tokens)?;
        positive("token_horizon", self.token_horizon)?;
        positive("max_lr", self.max_lr)?;
        if let Some(n_layers) = self.n_layers {
            if n_layers == 0 {
                return Err(Error::Validation {
                    row,
                    field: "n_layers".into(),
                    message: "must be a positive integer".into(),
                });
            }
        }
        if let Some(unique) = self.unique_tokens {
            positive("unique_tokens", unique)?;
        }
        match (self.status, self.final_val_loss) {
            (_, Some(loss)) => positive("final_val_loss", loss)?,
            (RunStatus::Completed, None) => {
                return Err(Error::Validation {
                    row,
                    field: "final_val_loss".into(),
                    message: "required for completed runs".into(),
                })
            }
            (RunStatus::Diverged, None) => {}
        }
        Ok(())
    }

    /// Total order used wherever a canonical record order is needed.
    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.n_params
            .total_cmp(&other.n_params)
            .then_with(|| self.token_horizon.total_cmp(&other.token_horizon))
            .then_with(|| self.model_name.cmp(&other.model_name))
            .then_with(|| self.batch_size_tokens.total_cmp(&other.batch_size_tokens))
            .then_with(|| self.parametrization.cmp(&other.parametrization))
            .then_with(|| self.max_lr.total_cmp(&other.max_lr))
            .then_with(|| self.seed.cmp(&other.seed))
            .then_with(|| self.status.cmp(&other.status))
            .then_with(|| cmp_opt_f64(self.final_val_loss, other.final_val_loss))
            .then_with(|| self.n_layers.cmp(&other.n_layers))
            .then_with(|| cmp_opt_f64(self.unique_tokens, other.unique_tokens))
            .then_with(|| self.architecture.cmp(&other.architecture))
    }
}

fn cmp_opt_f64(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (Some(a), Some(b)) => a.total_cmp(&b),
        (a, b) => a.is_some().cmp(&b.is_some()),
    }
}

/// Sorts records into the canonical order.
pub fn sort_canonical(records: &mut [RunRecord]) {
    records.sort_by(RunRecord::canonical_cmp);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    Jsonl,
    Csv,
}

impl FromStr for InputFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(InputFormat::Jsonl),
            "csv" => Ok(InputFormat::Csv),
            other => Err(format!("unknown input format `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub row: usize,
    pub reason: String,
}

/// Counts and diagnostics from one ingest call.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    /// Valid rows, including diverged ones.
    pub accepted: usize,
    pub diverged: usize,
    pub rejected: Vec<RejectedRow>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ingested {
    pub records: Vec<RunRecord>,
    pub report: IngestReport,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IngestOptions {
    /// Collect bad rows into the report instead of failing on the first one.
    pub lenient: bool,
}

/// Reads and validates a sweep file.
pub fn ingest(path: &Path, format: InputFormat) -> Result<Ingested> {
    ingest_with(path, format, IngestOptions::default())
}

pub fn ingest_with(path: &Path, format: InputFormat, options: IngestOptions) -> Result<Ingested> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_str(&text, format, options)
}

pub fn parse_str(text: &str, format: InputFormat, options: IngestOptions) -> Result<Ingested> {
    match format {
        InputFormat::Jsonl => parse_jsonl_with(text, options),
        InputFormat::Csv => parse_csv_with(text, options),
    }
}

pub fn parse_jsonl(text: &str) -> Result<Ingested> {
    parse_jsonl_with(text, IngestOptions::default())
}

pub fn parse_csv(text: &str) -> Result<Ingested> {
    parse_csv_with(text, IngestOptions::default())
}

/// A raw field value from either input format.
enum Cell<'a> {
    Json(&'a Value),
    Text(&'a str),
}

type FieldLookup<'a> = Box<dyn Fn(&str) -> Option<Cell<'a>> + 'a>;

struct RowReader<'a> {
    row: usize,
    get: FieldLookup<'a>,
}

impl<'a> RowReader<'a> {
    fn parse_err(&self, field: &str, message: impl Into<String>) -> Error {
        Error::Parse {
            row: self.row,
            field: Some(field.to_string()),
            message: message.into(),
        }
    }

    fn cell(&self, field: &str) -> Option<Cell<'a>> {
        match (self.get)(field) {
            Some(Cell::Json(Value::Null)) => None,
            Some(Cell::Text(s)) if s.trim().is_empty() => None,
            other => other,
        }
    }

    fn string(&self, field: &str) -> Result<Option<String>> {
        match self.cell(field) {
            None => Ok(None),
            Some(Cell::Json(Value::String(s))) => Ok(Some(s.clone())),
            Some(Cell::Json(other)) => Err(self.parse_err(field, format!("expected a string, got {other}"))),
            Some(Cell::Text(s)) => Ok(Some(s.trim().to_string())),
        }
    }

    fn number(&self, field: &str) -> Result<Option<f64>> {
        match self.cell(field) {
            None => Ok(None),
            Some(Cell::Json(Value::Number(n))) => n
                .as_f64()
                .map(Some)
                .ok_or_else(|| self.parse_err(field, "number out of range")),
            Some(Cell::Json(other)) => Err(self.parse_err(field, format!("expected a number, got {other}"))),
            Some(Cell::Text(s)) => s
                .trim()
                .parse::<f64>()
                .map(Some)
                .map_err(|_| self.parse_err(field, format!("expected a number, got `{s}`"))),
        }
    }

    fn integer(&self, field: &str) -> Result<Option<u64>> {
        let Some(value) = self.number(field)? else {
            return Ok(None);
        };
        if value.fract() != 0.0 || !(0.0..=u64::MAX as f64).contains(&value) {
            return Err(self.parse_err(field, format!("expected a non-negative integer, got {value}")));
        }
        Ok(Some(value as u64))
    }

    fn required<T>(&self, field: &str, value: Option<T>) -> Result<T> {
        value.ok_or_else(|| self.parse_err(field, "missing required field"))
    }

    fn parsed<T: FromStr<Err = String>>(&self, field: &str) -> Result<Option<T>> {
        self.string(field)?
            .map(|s| s.parse::<T>().map_err(|e| self.parse_err(field, e)))
            .transpose()
    }

    fn record(&self) -> Result<RunRecord> {
        let n_layers = match self.integer("n_layers")? {
            Some(v) => Some(u32::try_from(v).map_err(|_| self.parse_err("n_layers", "value too large"))?),
            None => None,
        };
        let record = RunRecord {
            model_name: self.required("model_name", self.string("model_name")?)?,
            n_params: self.required("n_params", self.number("n_params")?)?,
            n_layers,
            batch_size_tokens: self.number("batch_size_tokens")?.unwrap_or(DEFAULT_BATCH_SIZE_TOKENS),
            token_horizon: self.required("token_horizon", self.number("token_horizon")?)?,
            max_lr: self.required("max_lr", self.number("max_lr")?)?,
            final_val_loss: self.number("final_val_loss")?,
            seed: self.integer("seed")?.unwrap_or(0),
            status: self.parsed("status")?.unwrap_or_default(),
            parametrization: self.parsed("parametrization")?.unwrap_or_default(),
            unique_tokens: self.number("unique_tokens")?,
            architecture: self.string("architecture")?,
        };
        record.validate(self.row)?;
        Ok(record)
    }
}

#[derive(Default)]
struct Collector {
    out: Ingested,
    unknown_fields: BTreeSet<String>,
}

impl Collector {
    fn push(&mut self, row: usize, result: Result<RunRecord>, options: IngestOptions) -> Result<()> {
        match result {
            Ok(record) => {
                self.out.report.accepted += 1;
                if !record.is_completed() {
                    self.out.report.diverged += 1;
                }
                self.out.records.push(record);
                Ok(())
            }
            Err(err) if options.lenient => {
                self.out.report.rejected.push(RejectedRow {
                    row,
                    reason: err.to_string(),
                });
                Ok(())
            }
            Err(err) => Err(err),
        }
    }

    fn finish(mut self) -> Ingested {
        if !self.unknown_fields.is_empty() {
            let names: Vec<_> = self.unknown_fields.into_iter().collect();
            self.out
                .report
                .warnings
                .push(format!("ignored unknown fields: {}", names.join(", ")));
        }
        if self.out.records.is_empty() && self.out.report.rejected.is_empty() {
            self.out.report.warnings.push("input contains no records".into());
        }
        self.out
    }
}

pub fn parse_jsonl_with(text: &str, options: IngestOptions) -> Result<Ingested> {
    let mut collector = Collector::default();
    for (idx, line) in text.lines().enumerate() {
        let row = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let result = serde_json::from_str::<Value>(line)
            .map_err(|e| Error::Parse {
                row,
                field: None,
                message: format!("invalid JSON: {e}"),
            })
            .and_then(|value| match value {
                Value::Object(map) => {
                    for key in map.keys() {
                        if !CSV_COLUMNS.contains(&key.as_str()) {
                            collector.unknown_fields.insert(key.clone());
                        }
                    }
                    RowReader {
                        row,
                        get: Box::new(|field| map.get(field).map(Cell::Json)),
                    }
                    .record()
                }
                _ => Err(Error::Parse {
                    row,
                    field: None,
                    message: "expected a JSON object".into(),
                }),
            });
        collector.push(row, result, options)?;
    }
    Ok(collector.finish())
}

pub fn parse_csv_with(text: &str, options: IngestOptions) -> Result<Ingested> {
    let mut collector = Collector::default();
    if text.trim().is_empty() {
        return Ok(collector.finish());
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            field: None,
            message: format!("invalid CSV header: {e}"),
        })?
        .clone();
    let mut columns = BTreeMap::new();
    for (idx, name) in headers.iter().enumerate() {
        if CSV_COLUMNS.contains(&name) {
            if columns.insert(name.to_string(), idx).is_some() {
                return Err(Error::Parse {
                    row: 0,
                    field: Some(name.to_string()),
                    message: "duplicate column".into(),
                });
            }
        } else {
            collector.unknown_fields.insert(name.to_string());
        }
    }
    for (idx, row_result) in reader.records().enumerate() {
        let row = idx + 1;
        let result = row_result
            .map_err(|e| Error::Parse {
                row,
                field: None,
                message: format!("malformed CSV row: {e}"),
            })
            .and_then(|fields| {
                RowReader {
                    row,
                    get: Box::new(|name| columns.get(name).and_then(|&i| fields.get(i)).map(Cell::Text)),
                }
                .record()
            });
        collector.push(row, result, options)?;
    }
    Ok(collector.finish())
}

/// Serializes records as JSONL, one object per line.
pub fn to_jsonl(records: &[RunRecord]) -> String {
    let mut out = String::new();
    for record in records {
        // RunRecord serialization cannot fail: all keys are strings and
        // floats are finite after validation.
        out.push_str(&serde_json::to_string(record).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Serializes records as CSV with the fixed [`CSV_COLUMNS`] order.
pub fn to_csv(records: &[RunRecord]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(CSV_COLUMNS).expect("in-memory write");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        let status = match r.status {
            RunStatus::Completed => "completed",
            RunStatus::Diverged => "diverged",
        };
        let parametrization = match r.parametrization {
            Parametrization::Standard => "standard",
            Parametrization::MuP => "muP",
        };
        writer
            .write_record([
                r.model_name.clone(),
                r.n_params.to_string(),
                r.n_layers.map(|v| v.to_string()).unwrap_or_default(),
                r.batch_size_tokens.to_string(),
                r.token_horizon.to_string(),
                r.max_lr.to_string(),
                opt(r.final_val_loss),
                r.seed.to_string(),
                status.to_string(),
                parametrization.to_string(),
                opt(r.unique_tokens),
                r.architecture.clone().unwrap_or_default(),
            ])
            .expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

/// Identifies one model trained at one horizon and batch size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupKey {
    pub model_name: String,
    pub n_params: f64,
    pub batch_size_tokens: f64,
    pub token_horizon: f64,
    pub parametrization: Parametrization,
}

impl GroupKey {
    pub fn of(record: &RunRecord) -> Self {
        GroupKey {
            model_name: record.model_name.clone(),
            n_params: record.n_params,
            batch_size_tokens: record.batch_size_tokens,
            token_horizon: record.token_horizon,
            parametrization: record.parametrization,
        }
    }

    fn cmp(&self, other: &Self) -> Ordering {
        self.n_params
            .total_cmp(&other.n_params)
            .then_with(|| self.token_horizon.total_cmp(&other.token_horizon))
            .then_with(|| self.model_name.cmp(&other.model_name))
            .then_with(|| self.batch_size_tokens.total_cmp(&other.batch_size_tokens))
            .then_with(|| self.parametrization.cmp(&other.parametrization))
    }

    /// The key with the horizon dropped: one curve of LR* against D.
    pub fn family(&self) -> FamilyKey {
        FamilyKey {
            model_name: self.model_name.clone(),
            n_params: self.n_params,
            batch_size_tokens: self.batch_size_tokens,
            parametrization: self.parametrization,
        }
    }

    /// Human-readable label, e.g. `350m@1e11`.
    pub fn label(&self) -> String {
        format!("{}@{:e}", self.family().label(), self.token_horizon)
    }
}

/// A model family across horizons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyKey {
    pub model_name: String,
    pub n_params: f64,
    pub batch_size_tokens: f64,
    pub parametrization: Parametrization,
}

impl FamilyKey {
    pub fn label(&self) -> String {
        let mut label = self.model_name.clone();
        if self.batch_size_tokens != DEFAULT_BATCH_SIZE_TOKENS {
            label.push_str(&format!("/bs{:e}", self.batch_size_tokens));
        }
        if self.parametrization == Parametrization::MuP {
            label.push_str("/muP");
        }
        label
    }

    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.n_params
            .total_cmp(&other.n_params)
            .then_with(|| self.model_name.cmp(&other.model_name))
            .then_with(|| self.batch_size_tokens.total_cmp(&other.batch_size_tokens))
            .then_with(|| self.parametrization.cmp(&other.parametrization))
    }
}

/// A (learning rate, loss) point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub lr: f64,
    pub loss: f64,
    /// Number of seed replicates averaged into `loss`.
    pub replicates: usize,
}

/// Completed runs sharing one [`GroupKey`], one point per distinct LR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGroup {
    pub key: GroupKey,
    /// Sorted by increasing learning rate.
    pub points: Vec<SweepPoint>,
}

impl SweepGroup {
    pub fn distinct_lrs(&self) -> usize {
        self.points.len()
    }

    pub fn is_fittable(&self) -> bool {
        self.distinct_lrs() >= MIN_DISTINCT_LRS
    }
}

/// Groups completed runs by key and averages seed replicates at equal LR.
///
/// Output is sorted by `(n_params, token_horizon)` and then by the remaining
/// key fields, and does not depend on input order. Diverged runs are dropped.
pub fn group(records: &[RunRecord]) -> Vec<SweepGroup> {
    let mut completed: Vec<&RunRecord> = records
        .iter()
        .filter(|r| r.is_completed() && r.final_val_loss.is_some())
        .collect();
    completed.sort_by(|a, b| a.canonical_cmp(b));

    let mut groups: Vec<SweepGroup> = Vec::new();
    for record in completed {
        let key = GroupKey::of(record);
        let loss = record.final_val_loss.expect("filtered above");
        if groups.last().is_none_or(|g| g.key.cmp(&key) != Ordering::Equal) {
            groups.push(SweepGroup {
                key,
                points: Vec::new(),
            });
        }
        let group = groups.last_mut().expect("just pushed");
        match group.points.last_mut() {
            Some(point) if point.lr == record.max_lr => {
                // running sum; divided below
                point.loss += loss;
                point.replicates += 1;
            }
            _ => group.points.push(SweepPoint {
                lr: record.max_lr,
                loss,
                replicates: 1,
            }),
        }
    }
    for group in &mut groups {
        for point in &mut group.points {
            point.loss /= point.replicates as f64;
        }
    }
    groups
}
