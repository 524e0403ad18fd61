//! Rankings, per-source averages, script groupings and correlations over LQ matrices.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::lq::{LqError, LqMatrix, LqResult};
use crate::registry::{language_key, LexicalSimilarityMatrix, Registry, RegistryError, Relation};
use crate::scores::{ScoreStore, Task};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("source `{0}` is not part of the matrix")]
    UnknownSource(String),
    #[error("target `{0}` is not part of the matrix")]
    UnknownTarget(String),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("need at least 3 targets with both an LQ value and a lexical similarity, found {0}")]
    InsufficientPairs(usize),
    #[error("correlation is undefined when one side is constant")]
    ConstantInput,
    #[error("nothing to compare")]
    EmptyComparison,
    #[error("results cover different pairs: {0} and {1}")]
    MismatchedPair(String, String),
    #[error("results cover different tasks: {0} and {1}")]
    MismatchedTask(Task, Task),
    #[error("model `{0}` appears more than once")]
    DuplicateModel(String),
    #[error(transparent)]
    Incomparable(#[from] LqError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    TargetsGivenSource,
    SourcesGivenTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedEntry {
    pub language: String,
    pub lq: f64,
    pub rank: usize,
}

/// Languages ordered by LQ, highest first. Ties are broken by language id so ranks are
/// always the positions `1..=n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedList {
    pub model_id: String,
    pub task: Task,
    pub fixed_language: String,
    pub direction: Direction,
    pub entries: Vec<RankedEntry>,
}

impl RankedList {
    pub fn rank_of(&self, language: &str) -> Option<usize> {
        self.entries
            .iter()
            .find(|e| e.language == language)
            .map(|e| e.rank)
    }

    pub fn order(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.language.as_str()).collect()
    }
}

fn ranked(mut items: Vec<(String, f64)>) -> Vec<RankedEntry> {
    items.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    items
        .into_iter()
        .enumerate()
        .map(|(i, (language, lq))| RankedEntry {
            language,
            lq,
            rank: i + 1,
        })
        .collect()
}

/// Ranks all targets that have an LQ value for `source`.
pub fn rank_targets(matrix: &LqMatrix, source: &str) -> Result<RankedList, AnalysisError> {
    if !matrix.has_source(source) {
        return Err(AnalysisError::UnknownSource(source.to_owned()));
    }
    let items = matrix
        .present()
        .filter(|r| r.source == source)
        .map(|r| (r.target.clone(), r.lq))
        .collect();
    Ok(RankedList {
        model_id: matrix.model_id.clone(),
        task: matrix.task,
        fixed_language: source.to_owned(),
        direction: Direction::TargetsGivenSource,
        entries: ranked(items),
    })
}

/// Ranks all sources that have an LQ value for `target`.
pub fn rank_sources(matrix: &LqMatrix, target: &str) -> Result<RankedList, AnalysisError> {
    if !matrix.has_target(target) {
        return Err(AnalysisError::UnknownTarget(target.to_owned()));
    }
    let items = matrix
        .present()
        .filter(|r| r.target == target)
        .map(|r| (r.source.clone(), r.lq))
        .collect();
    Ok(RankedList {
        model_id: matrix.model_id.clone(),
        task: matrix.task,
        fixed_language: target.to_owned(),
        direction: Direction::SourcesGivenTarget,
        entries: ranked(items),
    })
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len().is_multiple_of(2) {
        (v[mid - 1] + v[mid]) / 2.0
    } else {
        v[mid]
    })
}

/// Mean LQ over the present cells of each source. Sources without any present cell are
/// left out.
pub fn average_lq_by_source(matrix: &LqMatrix) -> BTreeMap<String, f64> {
    let mut by_source: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    // cells iterate in (source, target) order, so each source's sum has a fixed order
    for r in matrix.present() {
        by_source.entry(&r.source).or_default().push(r.lq);
    }
    by_source
        .into_iter()
        .filter_map(|(s, v)| mean(&v).map(|m| (s.to_owned(), m)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupStats {
    pub label: String,
    pub count: usize,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub members: Vec<String>,
}

impl GroupStats {
    fn from_members(label: &str, members: Vec<(String, f64)>) -> Self {
        let values: Vec<f64> = members.iter().map(|m| m.1).collect();
        Self {
            label: label.to_owned(),
            count: values.len(),
            mean: mean(&values),
            median: median(&values),
            members: members.into_iter().map(|m| m.0).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupComparison {
    pub description: String,
    pub model_id: String,
    pub source: String,
    pub groups: Vec<GroupStats>,
}

impl GroupComparison {
    pub fn group(&self, label: &str) -> Option<&GroupStats> {
        self.groups.iter().find(|g| g.label == label)
    }
}

pub const SAME_SCRIPT: &str = "same-script";
pub const DIFFERENT_SCRIPT: &str = "different-script";

/// Splits the present cells of `source` by whether the target writes in the same script.
/// The source's own language is left out.
pub fn group_by_script(
    matrix: &LqMatrix,
    registry: &Registry,
    source: &str,
) -> Result<GroupComparison, AnalysisError> {
    if !matrix.has_source(source) {
        return Err(AnalysisError::UnknownSource(source.to_owned()));
    }
    let source_script = registry.get(source)?.script.clone();
    let mut same = Vec::new();
    let mut different = Vec::new();
    let source_key = language_key(source);
    for r in matrix
        .present()
        .filter(|r| r.source == source && language_key(&r.target) != source_key)
    {
        let rel = registry.script_relation(source, &r.target)?;
        let bucket = if rel.relation == Relation::Same {
            &mut same
        } else {
            &mut different
        };
        bucket.push((r.target.clone(), r.lq));
    }
    Ok(GroupComparison {
        description: format!("targets by script relation to {source} ({source_script})"),
        model_id: matrix.model_id.clone(),
        source: source.to_owned(),
        groups: vec![
            GroupStats::from_members(SAME_SCRIPT, same),
            GroupStats::from_members(DIFFERENT_SCRIPT, different),
        ],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum CorrelationMethod {
    #[default]
    Spearman,
    Pearson,
}

impl FromStr for CorrelationMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "spearman" => Ok(Self::Spearman),
            "pearson" => Ok(Self::Pearson),
            other => Err(format!("unknown correlation method `{other}`")),
        }
    }
}

impl fmt::Display for CorrelationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Spearman => "spearman",
            Self::Pearson => "pearson",
        })
    }
}

/// Ranks starting at 1, with tied values sharing the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman's rho: Pearson correlation of the average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LexicalCorrelation {
    pub method: CorrelationMethod,
    pub rho: f64,
    pub n_pairs: usize,
    /// `(target, lq, lexical similarity)` triples that entered the statistic.
    pub pairs: Vec<(String, f64, f64)>,
}

/// Correlates LQ with lexical similarity to `source` across targets. The source's own
/// language is skipped; targets without a similarity value are skipped.
pub fn correlate_lexical(
    matrix: &LqMatrix,
    lexical: &LexicalSimilarityMatrix,
    source: &str,
    method: CorrelationMethod,
) -> Result<LexicalCorrelation, AnalysisError> {
    if !matrix.has_source(source) {
        return Err(AnalysisError::UnknownSource(source.to_owned()));
    }
    let source_key = language_key(source);
    let pairs: Vec<(String, f64, f64)> = matrix
        .present()
        .filter(|r| r.source == source && language_key(&r.target) != source_key)
        .filter_map(|r| {
            lexical
                .get(source, &r.target)
                .map(|sim| (r.target.clone(), r.lq, sim))
        })
        .collect();
    if pairs.len() < 3 {
        return Err(AnalysisError::InsufficientPairs(pairs.len()));
    }
    let lq: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let sim: Vec<f64> = pairs.iter().map(|p| p.2).collect();
    let rho = match method {
        CorrelationMethod::Spearman => spearman(&lq, &sim),
        CorrelationMethod::Pearson => pearson(&lq, &sim),
    }
    .ok_or(AnalysisError::ConstantInput)?;
    Ok(LexicalCorrelation {
        method,
        rho,
        n_pairs: pairs.len(),
        pairs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelComparison {
    pub source: String,
    pub target: String,
    pub task: Task,
    pub c: u32,
    /// `(model, lq)` sorted by LQ descending, then model id.
    pub rows: Vec<(String, f64)>,
}

impl ModelComparison {
    pub fn best(&self) -> Option<&str> {
        self.rows.first().map(|r| r.0.as_str())
    }

    pub fn models(&self) -> Vec<&str> {
        self.rows.iter().map(|r| r.0.as_str()).collect()
    }
}

/// Orders several models on one `(source, target, task, c)` pair. All results must come
/// from the same source set and step count.
pub fn model_compare(results: &[LqResult]) -> Result<ModelComparison, AnalysisError> {
    let first = results.first().ok_or(AnalysisError::EmptyComparison)?;
    let mut models = BTreeSet::new();
    for r in results {
        if r.source != first.source || r.target != first.target {
            return Err(AnalysisError::MismatchedPair(
                format!("{}->{}", first.source, first.target),
                format!("{}->{}", r.source, r.target),
            ));
        }
        if r.task != first.task {
            return Err(AnalysisError::MismatchedTask(first.task, r.task));
        }
        first.ensure_comparable(r)?;
        if !models.insert(r.model_id.as_str()) {
            return Err(AnalysisError::DuplicateModel(r.model_id.clone()));
        }
    }
    let mut rows: Vec<(String, f64)> = results.iter().map(|r| (r.model_id.clone(), r.lq)).collect();
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(ModelComparison {
        source: first.source.clone(),
        target: first.target.clone(),
        task: first.task,
        c: first.c,
        rows,
    })
}

/// Orders models by their raw score on one pair at `steps`, highest first, ties by
/// model id. Models without a score are left out.
pub fn rank_models_by_score<M: AsRef<str>>(
    store: &ScoreStore,
    models: &[M],
    task: Task,
    source: &str,
    target: &str,
    steps: u32,
) -> Vec<(String, f64)> {
    let unique: BTreeSet<&str> = models.iter().map(AsRef::as_ref).collect();
    let mut rows: Vec<(String, f64)> = unique
        .into_iter()
        .filter_map(|m| {
            store
                .get_score(m, task, source, target, steps)
                .map(|v| (m.to_owned(), v))
        })
        .collect();
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    rows
}
