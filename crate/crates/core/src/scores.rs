//! Evaluation score storage.
//!
//! Scores are kept as fractions in `[0, 1]` keyed by
//! `(model, task, source, target, steps)`, where `steps = 0` is the zero-shot evaluation
//! and `steps = c` the few-shot evaluation after `c` target fine-tuning steps.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::tsv::{self, Table, TsvError};

pub const SCORE_COLUMNS: [&str; 7] = [
    "model_id",
    "task",
    "source",
    "target",
    "steps",
    "metric_kind",
    "value",
];

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Schema { line: u64, message: String },
    #[error("line {line}: {reason}")]
    InvalidRow { line: u64, reason: String },
    #[error("source set is empty")]
    EmptySourceSet,
    #[error("few-shot step count must be positive")]
    ZeroSteps,
    #[error("no zero-shot score for any source: model {model}, task {task}, target {target}")]
    EmptyProfile {
        model: String,
        task: Task,
        target: String,
    },
}

impl ScoreError {
    fn from_tsv(err: TsvError, path: Option<&Path>) -> Self {
        match err {
            TsvError::Io(source) => ScoreError::Io {
                path: path.map(Path::to_path_buf).unwrap_or_default(),
                source,
            },
            TsvError::Parse { line, message } => ScoreError::Schema { line, message },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "POS")]
    Pos,
    #[serde(rename = "DEP")]
    Dep,
    #[serde(rename = "NER")]
    Ner,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Pos, Task::Dep, Task::Ner];

    /// Evaluation metric used for the task: accuracy for tagging tasks, LAS for parsing.
    pub fn default_metric(self) -> MetricKind {
        match self {
            Task::Pos | Task::Ner => MetricKind::Accuracy,
            Task::Dep => MetricKind::Las,
        }
    }

    pub fn accepts_metric(self, metric: MetricKind) -> bool {
        metric == self.default_metric() || (self == Task::Ner && metric == MetricKind::F1)
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pos" => Ok(Task::Pos),
            "dep" | "deprel" | "parsing" => Ok(Task::Dep),
            "ner" => Ok(Task::Ner),
            other => Err(format!("unknown task `{other}`")),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Pos => "POS",
            Task::Dep => "DEP",
            Task::Ner => "NER",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MetricKind {
    Accuracy,
    #[serde(rename = "LAS")]
    Las,
    F1,
}

impl FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "accuracy" | "acc" => Ok(MetricKind::Accuracy),
            "las" => Ok(MetricKind::Las),
            "f1" => Ok(MetricKind::F1),
            other => Err(format!("unknown metric kind `{other}`")),
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricKind::Accuracy => "Accuracy",
            MetricKind::Las => "LAS",
            MetricKind::F1 => "F1",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ScoreKey {
    pub model_id: String,
    pub task: Task,
    pub source: String,
    pub target: String,
    pub steps: u32,
}

impl fmt::Display for ScoreKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}->{}/steps={}",
            self.model_id, self.task, self.source, self.target, self.steps
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub model_id: String,
    pub task: Task,
    pub source: String,
    pub target: String,
    pub steps: u32,
    pub metric_kind: MetricKind,
    pub value: f64,
}

impl EvalRecord {
    pub fn key(&self) -> ScoreKey {
        ScoreKey {
            model_id: self.model_id.clone(),
            task: self.task,
            source: self.source.clone(),
            target: self.target.clone(),
            steps: self.steps,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.model_id.is_empty() || self.source.is_empty() || self.target.is_empty() {
            return Err("empty identifier".into());
        }
        if !(0.0..=1.0).contains(&self.value) {
            return Err(format!("value out of range: {}", self.value));
        }
        if !self.task.accepts_metric(self.metric_kind) {
            return Err(format!(
                "metric {} does not match task {}",
                self.metric_kind, self.task
            ));
        }
        Ok(())
    }
}

/// A row-level problem found while reading a score file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub rejected: Vec<Rejection>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestOptions {
    /// Values are percentages and are divided by 100 on the way in.
    pub percent: bool,
}

fn score_columns(table: &Table) -> Result<[usize; 7], ScoreError> {
    let mut idx = [0; 7];
    for (slot, name) in idx.iter_mut().zip(SCORE_COLUMNS) {
        *slot = table.column(name).map_err(|e| ScoreError::from_tsv(e, None))?;
    }
    Ok(idx)
}

fn parse_row(row: &tsv::Row, idx: &[usize; 7], opts: IngestOptions) -> Result<EvalRecord, String> {
    let task: Task = row.get(idx[1]).parse()?;
    let steps: u32 = row
        .get(idx[4])
        .parse()
        .map_err(|_| format!("bad steps field `{}`", row.get(idx[4])))?;
    let metric_kind: MetricKind = row.get(idx[5]).parse()?;
    let raw: f64 = row
        .get(idx[6])
        .parse()
        .map_err(|_| format!("bad value field `{}`", row.get(idx[6])))?;
    let record = EvalRecord {
        model_id: row.get(idx[0]).to_owned(),
        task,
        source: row.get(idx[2]).to_owned(),
        target: row.get(idx[3]).to_owned(),
        steps,
        metric_kind,
        value: if opts.percent { raw / 100.0 } else { raw },
    };
    record.validate()?;
    Ok(record)
}

/// Source line number and the parsed record or the reason it was rejected.
pub type ParsedRow = (u64, Result<EvalRecord, String>);

/// Parses every row of a score file. Header problems are fatal; row problems are returned
/// per row so callers can choose between lenient ingestion and strict import.
pub fn parse_score_rows<R: Read>(
    reader: R,
    opts: IngestOptions,
) -> Result<Vec<ParsedRow>, ScoreError> {
    let table = tsv::read_table(reader).map_err(|e| ScoreError::from_tsv(e, None))?;
    let idx = score_columns(&table)?;
    Ok(table
        .rows
        .iter()
        .map(|row| (row.line, parse_row(row, &idx, opts)))
        .collect())
}

/// Strict variant: the first malformed row is an error naming its line.
pub fn read_records<R: Read>(reader: R, opts: IngestOptions) -> Result<Vec<EvalRecord>, ScoreError> {
    parse_score_rows(reader, opts)?
        .into_iter()
        .map(|(line, r)| r.map_err(|reason| ScoreError::InvalidRow { line, reason }))
        .collect()
}

pub fn read_records_path(path: &Path, opts: IngestOptions) -> Result<Vec<EvalRecord>, ScoreError> {
    let file = std::fs::File::open(path).map_err(|source| ScoreError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_records(file, opts)
}

/// Writes records in the score-file schema, in the given order.
pub fn write_records<'a, W: Write>(
    out: W,
    records: impl IntoIterator<Item = &'a EvalRecord>,
) -> std::io::Result<()> {
    let mut w = tsv::writer(out);
    w.write_record(SCORE_COLUMNS).map_err(tsv::csv_io)?;
    for r in records {
        w.write_record([
            r.model_id.as_str(),
            &r.task.to_string(),
            &r.source,
            &r.target,
            &r.steps.to_string(),
            &r.metric_kind.to_string(),
            &tsv::fmt_f64(r.value),
        ])
        .map_err(tsv::csv_io)?;
    }
    w.flush()
}

/// Hex digest identifying a source set, independent of order and duplicates.
pub fn source_set_digest<S: AsRef<str>>(sources: &[S]) -> String {
    let set: BTreeSet<&str> = sources.iter().map(AsRef::as_ref).collect();
    let mut hasher = Sha256::new();
    for s in set {
        hasher.update(s.as_bytes());
        hasher.update([0u8]);
    }
    let digest = hasher.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SourceScores {
    pub z0: Option<f64>,
    pub f: Option<f64>,
}

/// Zero-shot and few-shot scores of every configured source on one target, plus the
/// zero-shot average over the sources that have a zero-shot score.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferProfile {
    pub model_id: String,
    pub task: Task,
    pub target: String,
    pub c: u32,
    pub source_set: Vec<String>,
    pub per_source: BTreeMap<String, SourceScores>,
    pub za: f64,
    pub coverage: usize,
}

impl TransferProfile {
    pub fn source_set_hash(&self) -> String {
        source_set_digest(&self.source_set)
    }

    pub fn is_complete(&self) -> bool {
        self.coverage == self.source_set.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct StoredScore {
    metric_kind: MetricKind,
    value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreStore {
    entries: BTreeMap<ScoreKey, StoredScore>,
}

impl ScoreStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Inserts a validated record; duplicates of an existing key are refused.
    pub fn insert(&mut self, record: EvalRecord) -> Result<(), String> {
        record.validate()?;
        let key = record.key();
        if self.entries.contains_key(&key) {
            return Err(format!("duplicate key {key}"));
        }
        self.entries.insert(
            key,
            StoredScore {
                metric_kind: record.metric_kind,
                value: record.value,
            },
        );
        Ok(())
    }

    pub fn ingest_reader<R: Read>(
        &mut self,
        reader: R,
        opts: IngestOptions,
    ) -> Result<IngestReport, ScoreError> {
        let mut report = IngestReport::default();
        for (line, row) in parse_score_rows(reader, opts)? {
            match row.and_then(|rec| self.insert(rec)) {
                Ok(()) => report.accepted += 1,
                Err(reason) => report.rejected.push(Rejection { line, reason }),
            }
        }
        Ok(report)
    }

    pub fn ingest_path(&mut self, path: &Path, opts: IngestOptions) -> Result<IngestReport, ScoreError> {
        let file = std::fs::File::open(path).map_err(|source| ScoreError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.ingest_reader(file, opts)
    }

    pub fn ingest_records(&mut self, records: impl IntoIterator<Item = EvalRecord>) -> IngestReport {
        let mut report = IngestReport::default();
        for (i, rec) in records.into_iter().enumerate() {
            match self.insert(rec) {
                Ok(()) => report.accepted += 1,
                Err(reason) => report.rejected.push(Rejection {
                    line: i as u64 + 1,
                    reason,
                }),
            }
        }
        report
    }

    pub fn get_score(
        &self,
        model: &str,
        task: Task,
        source: &str,
        target: &str,
        steps: u32,
    ) -> Option<f64> {
        self.entries
            .get(&ScoreKey {
                model_id: model.to_owned(),
                task,
                source: source.to_owned(),
                target: target.to_owned(),
                steps,
            })
            .map(|s| s.value)
    }

    pub fn records(&self) -> impl Iterator<Item = EvalRecord> + '_ {
        self.entries.iter().map(|(k, v)| EvalRecord {
            model_id: k.model_id.clone(),
            task: k.task,
            source: k.source.clone(),
            target: k.target.clone(),
            steps: k.steps,
            metric_kind: v.metric_kind,
            value: v.value,
        })
    }

    /// Writes every record sorted by key.
    pub fn export<W: Write>(&self, out: W) -> std::io::Result<()> {
        let records: Vec<EvalRecord> = self.records().collect();
        write_records(out, &records)
    }

    pub fn models(&self) -> BTreeSet<String> {
        self.entries.keys().map(|k| k.model_id.clone()).collect()
    }

    /// Sources that have any score for `(model, task)`.
    pub fn sources_for(&self, model: &str, task: Task) -> BTreeSet<String> {
        self.entries
            .keys()
            .filter(|k| k.model_id == model && k.task == task)
            .map(|k| k.source.clone())
            .collect()
    }

    pub fn targets_for(&self, model: &str, task: Task) -> BTreeSet<String> {
        self.entries
            .keys()
            .filter(|k| k.model_id == model && k.task == task)
            .map(|k| k.target.clone())
            .collect()
    }

    /// Case-insensitive match of a user-supplied language name against stored ids.
    pub fn resolve_language(&self, name: &str) -> Option<String> {
        self.entries
            .keys()
            .flat_map(|k| [&k.source, &k.target])
            .find(|id| id.as_str() == name)
            .or_else(|| {
                self.entries
                    .keys()
                    .flat_map(|k| [&k.source, &k.target])
                    .find(|id| id.eq_ignore_ascii_case(name))
            })
            .cloned()
    }

    pub fn resolve_model(&self, name: &str) -> Option<String> {
        let models = self.models();
        if models.contains(name) {
            return Some(name.to_owned());
        }
        models.into_iter().find(|m| m.eq_ignore_ascii_case(name))
    }

    /// Collects zero-shot (`steps = 0`) and few-shot (`steps = c`) scores of each source on
    /// `target`. Missing scores stay absent and shrink the zero-shot average's denominator.
    pub fn build_profile<S: AsRef<str>>(
        &self,
        model: &str,
        task: Task,
        target: &str,
        source_set: &[S],
        c: u32,
    ) -> Result<TransferProfile, ScoreError> {
        if source_set.is_empty() {
            return Err(ScoreError::EmptySourceSet);
        }
        if c == 0 {
            return Err(ScoreError::ZeroSteps);
        }
        let mut ordered = Vec::with_capacity(source_set.len());
        for s in source_set {
            let s = s.as_ref().to_owned();
            if !ordered.contains(&s) {
                ordered.push(s);
            }
        }
        let per_source: BTreeMap<String, SourceScores> = ordered
            .iter()
            .map(|s| {
                (
                    s.clone(),
                    SourceScores {
                        z0: self.get_score(model, task, s, target, 0),
                        f: self.get_score(model, task, s, target, c),
                    },
                )
            })
            .collect();
        // summed in source-id order so the mean does not depend on the caller's ordering
        let present: Vec<f64> = per_source.values().filter_map(|s| s.z0).collect();
        if present.is_empty() {
            return Err(ScoreError::EmptyProfile {
                model: model.to_owned(),
                task,
                target: target.to_owned(),
            });
        }
        let za = present.iter().sum::<f64>() / present.len() as f64;
        Ok(TransferProfile {
            model_id: model.to_owned(),
            task,
            target: target.to_owned(),
            c,
            source_set: ordered,
            per_source,
            za,
            coverage: present.len(),
        })
    }
}
