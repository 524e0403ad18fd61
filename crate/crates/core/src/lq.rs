//! The Learning Quotient.
//!
//! For a source `s` and target `t`, with few-shot score `F`, zero-shot score `Z0` and the
//! target's zero-shot average over all configured sources `ZA`:
//!
//! ```text
//! LQ = (F - ZA) * (F + Z0) / (ZA + epsilon)
//! ```
//!
//! LQ is relative to the source set that produced `ZA`, so every result carries a digest
//! of that set and results are only comparable when digests and step counts match.
//! Values are in the units of the stored scores (fractions); LQ scales linearly with the
//! scores, so percent-scale figures are the fraction-scale figures times 100.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::scores::{source_set_digest, ScoreError, ScoreKey, ScoreStore, Task, TransferProfile};
use crate::tsv::{self, TsvError};

pub const DEFAULT_EPSILON: f64 = 1e-9;
pub const DEFAULT_STEPS: u32 = 10;

pub const LQ_VALUE_COLUMNS: [&str; 6] = ["model_id", "task", "source", "target", "steps", "lq"];

#[derive(Debug, Error)]
pub enum LqError {
    #[error("epsilon must be positive, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("{name} = {value} is outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("few-shot score is zero; the simplified form divides by it")]
    ZeroFewShot,
    #[error("zero-shot average is zero; the simplified form divides by it")]
    ZeroAverage,
    #[error("missing score {0}")]
    MissingScore(ScoreKey),
    #[error("source `{source_lang}` is not in the source set")]
    SourceNotInSet { source_lang: String },
    #[error("target set is empty")]
    EmptyTargetSet,
    #[error(transparent)]
    Profile(#[from] ScoreError),
    #[error("results use different source sets ({0} vs {1}); LQ values are only comparable over the same sources")]
    IncomparableSourceSet(String, String),
    #[error("results use different few-shot step counts ({0} vs {1})")]
    IncomparableSteps(u32, u32),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl From<TsvError> for LqError {
    fn from(err: TsvError) -> Self {
        match err {
            TsvError::Io(e) => LqError::Io(e),
            TsvError::Parse { line, message } => LqError::Parse { line, message },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LqInputs {
    /// Few-shot score after `c` target steps.
    pub f: f64,
    /// Zero-shot score of this source on the target.
    pub z0: f64,
    /// Zero-shot average of the target over the source set.
    pub za: f64,
    pub epsilon: f64,
}

impl LqInputs {
    pub fn new(f: f64, z0: f64, za: f64, epsilon: f64) -> Result<Self, LqError> {
        let inputs = Self { f, z0, za, epsilon };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn validate(&self) -> Result<(), LqError> {
        if !(self.epsilon > 0.0) {
            return Err(LqError::NonPositiveEpsilon(self.epsilon));
        }
        for (name, value) in [("f", self.f), ("z0", self.z0), ("za", self.za)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(LqError::OutOfRange { name, value });
            }
        }
        Ok(())
    }
}

/// Unchecked evaluation of the LQ expression. Accepts any scale and `epsilon = 0`.
#[inline]
pub fn lq_expression(f: f64, z0: f64, za: f64, epsilon: f64) -> f64 {
    (f - za) * (f + z0) / (za + epsilon)
}

pub fn learning_quotient(inputs: &LqInputs) -> Result<f64, LqError> {
    inputs.validate()?;
    Ok(lq_expression(inputs.f, inputs.z0, inputs.za, inputs.epsilon))
}

/// The expanded form `F (F + Z0) / ZA - F (1 + Z0 / F)`, equal to LQ with `epsilon = 0`.
pub fn simplified_lq(f: f64, z0: f64, za: f64) -> Result<f64, LqError> {
    if f == 0.0 {
        return Err(LqError::ZeroFewShot);
    }
    if za == 0.0 {
        return Err(LqError::ZeroAverage);
    }
    Ok(f * ((f + z0) / za) - f * (1.0 + z0 / f))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LqResult {
    pub model_id: String,
    pub task: Task,
    pub source: String,
    pub target: String,
    pub c: u32,
    /// Absent for values ingested from published tables rather than computed from scores.
    pub inputs: Option<LqInputs>,
    pub lq: f64,
    pub coverage: Option<usize>,
    pub source_set_hash: String,
}

impl LqResult {
    /// Two results may be compared only when they share the source set and step count.
    pub fn ensure_comparable(&self, other: &LqResult) -> Result<(), LqError> {
        if self.source_set_hash != other.source_set_hash {
            return Err(LqError::IncomparableSourceSet(
                self.source_set_hash.clone(),
                other.source_set_hash.clone(),
            ));
        }
        if self.c != other.c {
            return Err(LqError::IncomparableSteps(self.c, other.c));
        }
        Ok(())
    }
}

fn result_from_profile(
    profile: &TransferProfile,
    source: &str,
    epsilon: f64,
) -> Result<LqResult, LqError> {
    let missing = |steps| {
        LqError::MissingScore(ScoreKey {
            model_id: profile.model_id.clone(),
            task: profile.task,
            source: source.to_owned(),
            target: profile.target.clone(),
            steps,
        })
    };
    let scores = profile
        .per_source
        .get(source)
        .ok_or_else(|| LqError::SourceNotInSet {
            source_lang: source.to_owned(),
        })?;
    let z0 = scores.z0.ok_or_else(|| missing(0))?;
    let f = scores.f.ok_or_else(|| missing(profile.c))?;
    let inputs = LqInputs::new(f, z0, profile.za, epsilon)?;
    Ok(LqResult {
        model_id: profile.model_id.clone(),
        task: profile.task,
        source: source.to_owned(),
        target: profile.target.clone(),
        c: profile.c,
        lq: learning_quotient(&inputs)?,
        inputs: Some(inputs),
        coverage: Some(profile.coverage),
        source_set_hash: profile.source_set_hash(),
    })
}

#[allow(clippy::too_many_arguments)]
pub fn lq_for_pair<S: AsRef<str>>(
    store: &ScoreStore,
    model: &str,
    task: Task,
    source: &str,
    target: &str,
    source_set: &[S],
    c: u32,
    epsilon: f64,
) -> Result<LqResult, LqError> {
    if !(epsilon > 0.0) {
        return Err(LqError::NonPositiveEpsilon(epsilon));
    }
    if !source_set.iter().any(|s| s.as_ref() == source) {
        return Err(LqError::SourceNotInSet {
            source_lang: source.to_owned(),
        });
    }
    let profile = store.build_profile(model, task, target, source_set, c)?;
    result_from_profile(&profile, source, epsilon)
}

fn dedup(items: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    items.into_iter().filter(|s| seen.insert(s.clone())).collect()
}

/// LQ values over a grid of sources and targets for one model, task and step count.
/// Cells are keyed by `(source, target)`; a `None` cell means the inputs were missing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LqMatrix {
    pub model_id: String,
    pub task: Task,
    pub c: u32,
    pub source_set: Vec<String>,
    pub target_set: Vec<String>,
    pub source_set_hash: String,
    pub cells: BTreeMap<(String, String), Option<LqResult>>,
}

impl LqMatrix {
    fn empty(model: &str, task: Task, c: u32, sources: Vec<String>, targets: Vec<String>) -> Self {
        let cells = sources
            .iter()
            .flat_map(|s| targets.iter().map(move |t| ((s.clone(), t.clone()), None)))
            .collect();
        Self {
            model_id: model.to_owned(),
            task,
            c,
            source_set_hash: source_set_digest(&sources),
            source_set: sources,
            target_set: targets,
            cells,
        }
    }

    pub fn get(&self, source: &str, target: &str) -> Option<&LqResult> {
        self.cells
            .get(&(source.to_owned(), target.to_owned()))
            .and_then(Option::as_ref)
    }

    pub fn present(&self) -> impl Iterator<Item = &LqResult> {
        self.cells.values().flatten()
    }

    pub fn present_count(&self) -> usize {
        self.present().count()
    }

    pub fn has_source(&self, source: &str) -> bool {
        self.source_set.iter().any(|s| s == source)
    }

    pub fn has_target(&self, target: &str) -> bool {
        self.target_set.iter().any(|t| t == target)
    }

    /// Builds a matrix from already-computed LQ values (e.g. values printed in a results
    /// table). `source_set` is the set the values were computed against.
    pub fn from_published(
        model: &str,
        task: Task,
        c: u32,
        source_set: &[String],
        values: &[PublishedLq],
    ) -> Self {
        let rows: Vec<&PublishedLq> = values
            .iter()
            .filter(|v| v.model_id == model && v.task == task && v.steps == c)
            .collect();
        let sources = dedup(
            source_set
                .iter()
                .cloned()
                .chain(rows.iter().map(|r| r.source.clone())),
        );
        let targets = dedup(rows.iter().map(|r| r.target.clone()));
        let mut m = Self::empty(model, task, c, sources, targets);
        for r in rows {
            m.cells.insert(
                (r.source.clone(), r.target.clone()),
                Some(LqResult {
                    model_id: model.to_owned(),
                    task,
                    source: r.source.clone(),
                    target: r.target.clone(),
                    c,
                    inputs: None,
                    lq: r.lq,
                    coverage: None,
                    source_set_hash: m.source_set_hash.clone(),
                }),
            );
        }
        m
    }

    /// Rows `(source, target, z0, f, za, lq, coverage)` sorted by `(target, source)`.
    /// Absent cells are written with empty value fields.
    pub fn export<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut keys: Vec<&(String, String)> = self.cells.keys().collect();
        keys.sort_by(|a, b| (&a.1, &a.0).cmp(&(&b.1, &b.0)));
        let mut w = tsv::writer(out);
        w.write_record(["source", "target", "z0", "f", "za", "lq", "coverage"])
            .map_err(tsv::csv_io)?;
        for key in keys {
            let cell = self.cells[key].as_ref();
            let inputs = cell.and_then(|c| c.inputs);
            w.write_record([
                key.0.as_str(),
                key.1.as_str(),
                &tsv::fmt_opt(inputs.map(|i| i.z0)),
                &tsv::fmt_opt(inputs.map(|i| i.f)),
                &tsv::fmt_opt(inputs.map(|i| i.za)),
                &tsv::fmt_opt(cell.map(|c| c.lq)),
                &cell
                    .and_then(|c| c.coverage)
                    .map(|n| n.to_string())
                    .unwrap_or_default(),
            ])
            .map_err(tsv::csv_io)?;
        }
        w.flush()
    }
}

/// Fills every computable cell of the `(source, target)` grid.
pub fn lq_matrix<S: AsRef<str>, T: AsRef<str>>(
    store: &ScoreStore,
    model: &str,
    task: Task,
    source_set: &[S],
    target_set: &[T],
    c: u32,
    epsilon: f64,
) -> Result<LqMatrix, LqError> {
    if source_set.is_empty() {
        return Err(ScoreError::EmptySourceSet.into());
    }
    if target_set.is_empty() {
        return Err(LqError::EmptyTargetSet);
    }
    if c == 0 {
        return Err(ScoreError::ZeroSteps.into());
    }
    if !(epsilon > 0.0) {
        return Err(LqError::NonPositiveEpsilon(epsilon));
    }
    let sources = dedup(source_set.iter().map(|s| s.as_ref().to_owned()));
    let targets = dedup(target_set.iter().map(|t| t.as_ref().to_owned()));
    let mut m = LqMatrix::empty(model, task, c, sources, targets);
    for target in &m.target_set {
        let Ok(profile) = store.build_profile(model, task, target, &m.source_set, c) else {
            continue;
        };
        for source in &m.source_set {
            if let Ok(result) = result_from_profile(&profile, source, epsilon) {
                m.cells
                    .insert((source.clone(), target.clone()), Some(result));
            }
        }
    }
    Ok(m)
}

/// One LQ value as printed in a results table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PublishedLq {
    pub model_id: String,
    pub task: Task,
    pub source: String,
    pub target: String,
    pub steps: u32,
    pub lq: f64,
}

/// Reads `(model_id, task, source, target, steps, lq)` rows. With `percent`, values are
/// divided by 100 to bring them to fraction scale.
pub fn read_published_lq<R: Read>(reader: R, percent: bool) -> Result<Vec<PublishedLq>, LqError> {
    let table = tsv::read_table(reader)?;
    let mut idx = [0usize; 6];
    for (slot, name) in idx.iter_mut().zip(LQ_VALUE_COLUMNS) {
        *slot = table.column(name)?;
    }
    let mut out = Vec::with_capacity(table.rows.len());
    for row in &table.rows {
        let bad = |message: String| LqError::Parse {
            line: row.line,
            message,
        };
        let task: Task = row.get(idx[1]).parse().map_err(bad)?;
        let steps: u32 = row
            .get(idx[4])
            .parse()
            .map_err(|_| bad(format!("bad steps field `{}`", row.get(idx[4]))))?;
        let lq: f64 = row
            .get(idx[5])
            .parse()
            .map_err(|_| bad(format!("bad lq field `{}`", row.get(idx[5]))))?;
        if !lq.is_finite() {
            return Err(bad(format!("non-finite lq `{lq}`")));
        }
        out.push(PublishedLq {
            model_id: row.get(idx[0]).to_owned(),
            task,
            source: row.get(idx[2]).to_owned(),
            target: row.get(idx[3]).to_owned(),
            steps,
            lq: if percent { lq / 100.0 } else { lq },
        });
    }
    Ok(out)
}

pub fn read_published_lq_path(path: &Path, percent: bool) -> Result<Vec<PublishedLq>, LqError> {
    read_published_lq(std::fs::File::open(path)?, percent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scores::{EvalRecord, MetricKind};

    fn eval(f: f64, z0: f64, za: f64) -> f64 {
        learning_quotient(&LqInputs::new(f, z0, za, DEFAULT_EPSILON).unwrap()).unwrap()
    }

    #[test]
    fn zero_when_few_shot_equals_average() {
        for z0 in [0.0, 0.3, 1.0] {
            assert_eq!(eval(0.4, z0, 0.4), 0.0);
        }
    }

    #[test]
    fn worked_values() {
        // (0.25 - 0.333)(0.25 + 0.238) / 0.333
        assert!((eval(0.250, 0.238, 0.333) - (-0.12163)).abs() < 1e-4);
        assert!((eval(0.5, 0.0, 0.25) - 0.5).abs() < 1e-6);
        assert!((eval(0.2, 0.1, 0.4) - (-0.15)).abs() < 1e-6);
    }

    #[test]
    fn epsilon_must_be_positive() {
        assert!(matches!(
            LqInputs::new(0.2, 0.1, 0.4, 0.0),
            Err(LqError::NonPositiveEpsilon(_))
        ));
        let raw = LqInputs {
            f: 0.2,
            z0: 0.1,
            za: 0.4,
            epsilon: -1.0,
        };
        assert!(learning_quotient(&raw).is_err());
        assert!(LqInputs::new(1.5, 0.1, 0.4, 1e-9).is_err());
    }

    #[test]
    fn simplified_form_values() {
        assert!((simplified_lq(0.5, 0.3, 0.4).unwrap() - 0.2).abs() < 1e-9);
        assert_eq!(simplified_lq(0.3, 0.3, 0.3).unwrap(), 0.0);
        assert!((simplified_lq(0.250, 0.238, 0.333).unwrap() - (-0.12163)).abs() < 1e-4);
        assert!(matches!(simplified_lq(0.0, 0.3, 0.4), Err(LqError::ZeroFewShot)));
        assert!(matches!(simplified_lq(0.2, 0.3, 0.0), Err(LqError::ZeroAverage)));
    }

    #[test]
    fn learning_quotient_handles_zero_few_shot() {
        assert!(eval(0.0, 0.2, 0.3) < 0.0);
    }

    fn record(source: &str, target: &str, steps: u32, value: f64) -> EvalRecord {
        EvalRecord {
            model_id: "M".into(),
            task: Task::Pos,
            source: source.into(),
            target: target.into(),
            steps,
            metric_kind: MetricKind::Accuracy,
            value,
        }
    }

    #[test]
    fn single_source_pair_is_zero() {
        let mut store = ScoreStore::new();
        store.insert(record("a", "t", 0, 0.4)).unwrap();
        store.insert(record("a", "t", 10, 0.4)).unwrap();
        let r = lq_for_pair(&store, "M", Task::Pos, "a", "t", &["a"], 10, DEFAULT_EPSILON).unwrap();
        assert_eq!(r.lq, 0.0);
        assert_eq!(r.coverage, Some(1));
    }

    #[test]
    fn missing_few_shot_names_key() {
        let mut store = ScoreStore::new();
        store.insert(record("a", "t", 0, 0.4)).unwrap();
        match lq_for_pair(&store, "M", Task::Pos, "a", "t", &["a"], 10, DEFAULT_EPSILON) {
            Err(LqError::MissingScore(key)) => {
                assert_eq!(key.steps, 10);
                assert_eq!(key.source, "a");
            }
            other => panic!("expected missing score, got {other:?}"),
        }
        assert!(matches!(
            lq_for_pair(&store, "M", Task::Pos, "b", "t", &["a"], 10, DEFAULT_EPSILON),
            Err(LqError::SourceNotInSet { .. })
        ));
    }

    #[test]
    fn matrix_absent_cells() {
        let store = ScoreStore::new();
        let m = lq_matrix(&store, "M", Task::Pos, &["a", "b"], &["t"], 10, DEFAULT_EPSILON).unwrap();
        assert_eq!(m.cells.len(), 2);
        assert_eq!(m.present_count(), 0);

        let mut store = ScoreStore::new();
        for (s, z0, f) in [("a", 0.2, 0.3), ("b", 0.4, 0.5)] {
            store.insert(record(s, "t", 0, z0)).unwrap();
            store.insert(record(s, "t", 10, f)).unwrap();
        }
        store.insert(record("a", "u", 0, 0.1)).unwrap();
        store.insert(record("b", "u", 0, 0.1)).unwrap();
        store.insert(record("b", "u", 10, 0.1)).unwrap();
        let m = lq_matrix(&store, "M", Task::Pos, &["a", "b"], &["t", "u"], 10, DEFAULT_EPSILON).unwrap();
        assert_eq!(m.present_count(), 3);
        assert!(m.get("a", "u").is_none());
        assert!(m.present().all(|r| r.source_set_hash == m.source_set_hash));
    }

    #[test]
    fn comparability_guard() {
        let base = LqResult {
            model_id: "A".into(),
            task: Task::Pos,
            source: "s".into(),
            target: "t".into(),
            c: 10,
            inputs: None,
            lq: 0.1,
            coverage: None,
            source_set_hash: "x".into(),
        };
        let mut other = base.clone();
        other.model_id = "B".into();
        base.ensure_comparable(&other).unwrap();
        other.c = 5;
        assert!(matches!(base.ensure_comparable(&other), Err(LqError::IncomparableSteps(10, 5))));
        other.c = 10;
        other.source_set_hash = "y".into();
        assert!(matches!(
            base.ensure_comparable(&other),
            Err(LqError::IncomparableSourceSet(..))
        ));
    }

    #[test]
    fn published_values_parse_at_fraction_scale() {
        let text = "model_id\ttask\tsource\ttarget\tsteps\tlq\nPIXEL\tPOS\tHindi\tUrdu\t10\t-0.4\n";
        let v = read_published_lq(text.as_bytes(), true).unwrap();
        assert_eq!(v[0].lq, -0.004);
        let bad = "model_id\ttask\tsource\ttarget\tsteps\tlq\nPIXEL\tPOS\tHindi\tUrdu\tx\t-0.4\n";
        assert!(matches!(
            read_published_lq(bad.as_bytes(), true),
            Err(LqError::Parse { line: 2, .. })
        ));
    }
}
