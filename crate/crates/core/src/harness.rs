//! Experiment manifests for the two-phase protocol, result import, and a seeded mock runner.
//!
//! Phase one fine-tunes each model on each source language. Phase two takes that checkpoint
//! and trains it for `c` steps on each target. Zero-shot evaluation needs no run of its own;
//! it is reported as a `steps = 0` record next to the few-shot one.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::registry::Registry;
use crate::scores::{self, EvalRecord, IngestOptions, MetricKind, ScoreError, Task};

pub const TRAIN_BATCH_SIZE: u32 = 32;
pub const LEARNING_RATE: f64 = 5e-5;
pub const MAX_SEQ_LEN: u32 = 256;
pub const SOURCE_FINETUNE_STEPS: u32 = 15_000;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("empty {0} set")]
    EmptySet(&'static str),
    #[error("few-shot step count must be positive")]
    ZeroSteps,
    #[error("invalid mock configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Manifest { line: u64, message: String },
    #[error(transparent)]
    Scores(#[from] ScoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    SourceFinetune,
    FewShot,
}

/// Training settings of one run. `early_stopping` is only set for source fine-tuning;
/// no patience or validation split is specified, so it stays a bare flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub train_batch_size: u32,
    pub max_steps: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_stopping: Option<bool>,
    pub learning_rate: f64,
    pub max_seq_len: u32,
    pub eval_metric: MetricKind,
}

impl Hyperparams {
    /// One parameter block per (phase, metric); tagging tasks share theirs.
    pub fn for_phase(phase: Phase, task: Task, c: u32) -> Self {
        let (max_steps, early_stopping) = match phase {
            Phase::SourceFinetune => (SOURCE_FINETUNE_STEPS, Some(true)),
            Phase::FewShot => (c, None),
        };
        Self {
            train_batch_size: TRAIN_BATCH_SIZE,
            max_steps,
            early_stopping,
            learning_rate: LEARNING_RATE,
            max_seq_len: MAX_SEQ_LEN,
            eval_metric: task.default_metric(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub id: String,
    pub model_id: String,
    pub task: Task,
    pub phase: Phase,
    /// Training language: the source for fine-tuning, the target for few-shot runs.
    pub language: String,
    /// Source language whose checkpoint a few-shot run starts from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_run: Option<String>,
    pub hyperparams: Hyperparams,
}

fn finetune_id(model: &str, task: Task, source: &str) -> String {
    format!("ft/{model}/{task}/{source}")
}

fn fewshot_id(model: &str, task: Task, source: &str, target: &str) -> String {
    format!("fs/{model}/{task}/{source}/{target}")
}

fn dedup<S: AsRef<str>>(items: &[S]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    items
        .iter()
        .map(|s| s.as_ref().to_owned())
        .filter(|s| seen.insert(s.clone()))
        .collect()
}

/// Per task: every (model, source) fine-tuning run followed by its few-shot runs on every
/// target. Inputs keep their given order; duplicates are dropped.
pub fn generate_manifests<M: AsRef<str>, S: AsRef<str>, T: AsRef<str>>(
    models: &[M],
    tasks: &[Task],
    sources: &[S],
    targets: &[T],
    c: u32,
) -> Result<Vec<RunManifest>, HarnessError> {
    let models = dedup(models);
    let sources = dedup(sources);
    let targets = dedup(targets);
    let tasks: Vec<Task> = {
        let mut seen = BTreeSet::new();
        tasks.iter().copied().filter(|t| seen.insert(*t)).collect()
    };
    if models.is_empty() {
        return Err(HarnessError::EmptySet("model"));
    }
    if tasks.is_empty() {
        return Err(HarnessError::EmptySet("task"));
    }
    if sources.is_empty() {
        return Err(HarnessError::EmptySet("source"));
    }
    if targets.is_empty() {
        return Err(HarnessError::EmptySet("target"));
    }
    if c == 0 {
        return Err(HarnessError::ZeroSteps);
    }

    let mut out = Vec::with_capacity(tasks.len() * models.len() * sources.len() * (1 + targets.len()));
    for &task in &tasks {
        for model in &models {
            for source in &sources {
                let parent = finetune_id(model, task, source);
                out.push(RunManifest {
                    id: parent.clone(),
                    model_id: model.clone(),
                    task,
                    phase: Phase::SourceFinetune,
                    language: source.clone(),
                    source: None,
                    parent_run: None,
                    hyperparams: Hyperparams::for_phase(Phase::SourceFinetune, task, c),
                });
                for target in &targets {
                    out.push(RunManifest {
                        id: fewshot_id(model, task, source, target),
                        model_id: model.clone(),
                        task,
                        phase: Phase::FewShot,
                        language: target.clone(),
                        source: Some(source.clone()),
                        parent_run: Some(parent.clone()),
                        hyperparams: Hyperparams::for_phase(Phase::FewShot, task, c),
                    });
                }
            }
        }
    }
    Ok(out)
}

/// One JSON object per line, fields in declaration order.
pub fn write_manifests<W: Write>(mut out: W, manifests: &[RunManifest]) -> std::io::Result<()> {
    for m in manifests {
        let line = serde_json::to_string(m).map_err(std::io::Error::other)?;
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_manifests<R: BufRead>(reader: R) -> Result<Vec<RunManifest>, HarnessError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line.map_err(|e| HarnessError::Manifest {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let m: RunManifest = serde_json::from_str(&line).map_err(|e| HarnessError::Manifest {
            line: line_no,
            message: e.to_string(),
        })?;
        out.push(m);
    }
    Ok(out)
}

pub fn read_manifests_path(path: &Path) -> Result<Vec<RunManifest>, HarnessError> {
    let file = File::open(path).map_err(|source| HarnessError::Io {
        path: path.to_owned(),
        source,
    })?;
    read_manifests(BufReader::new(file))
}

/// Reads a results file written by an external runner. Any bad row is an error.
pub fn import_results(path: &Path, percent: bool) -> Result<Vec<EvalRecord>, HarnessError> {
    Ok(scores::read_records_path(path, IngestOptions { percent })?)
}

pub fn export_results<W: Write>(out: W, records: &[EvalRecord]) -> std::io::Result<()> {
    scores::write_records(out, records)
}

/// Metadata the mock runner can condition on.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LanguageTraits {
    pub script: String,
    pub family: String,
    pub subfamily: String,
    pub seen_by: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AffinityPredicate {
    SameScript,
    SameFamily,
    SameSubfamily,
    /// The target was in the model's pretraining data.
    TargetSeen,
}

impl FromStr for AffinityPredicate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "same-script" => Ok(Self::SameScript),
            "same-family" => Ok(Self::SameFamily),
            "same-subfamily" => Ok(Self::SameSubfamily),
            "target-seen" => Ok(Self::TargetSeen),
            other => Err(format!("unknown affinity predicate `{other}`")),
        }
    }
}

impl fmt::Display for AffinityPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::SameScript => "same-script",
            Self::SameFamily => "same-family",
            Self::SameSubfamily => "same-subfamily",
            Self::TargetSeen => "target-seen",
        })
    }
}

/// Adds `bonus` to the few-shot score when the predicate holds. An empty model list
/// applies the rule to every model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityRule {
    pub predicate: AffinityPredicate,
    pub bonus: f64,
    #[serde(default)]
    pub models: Vec<String>,
}

impl FromStr for AffinityRule {
    type Err = String;

    /// `predicate:bonus[:model,model...]`, e.g. `same-script:0.2:PIXEL`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.splitn(3, ':');
        let predicate = parts.next().unwrap_or_default().parse()?;
        let bonus = parts
            .next()
            .ok_or_else(|| format!("affinity rule `{s}` has no bonus"))?
            .parse::<f64>()
            .map_err(|_| format!("affinity rule `{s}` has a bad bonus"))?;
        let models = parts
            .next()
            .map(|m| m.split(',').filter(|x| !x.is_empty()).map(str::to_owned).collect())
            .unwrap_or_default();
        Ok(Self {
            predicate,
            bonus,
            models,
        })
    }
}

impl AffinityRule {
    fn applies(&self, model: &str, source: Option<&LanguageTraits>, target: Option<&LanguageTraits>) -> bool {
        if !self.models.is_empty() && !self.models.iter().any(|m| m == model) {
            return false;
        }
        match self.predicate {
            AffinityPredicate::TargetSeen => target.is_some_and(|t| t.seen_by.contains(model)),
            _ => match (source, target) {
                (Some(s), Some(t)) => match self.predicate {
                    AffinityPredicate::SameScript => s.script == t.script,
                    AffinityPredicate::SameFamily => s.family == t.family,
                    AffinityPredicate::SameSubfamily => s.subfamily == t.subfamily,
                    AffinityPredicate::TargetSeen => unreachable!(),
                },
                _ => false,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRunnerConfig {
    pub seed: u64,
    /// Per-target difficulty in [0, 1]; zero-shot scores start at `1 - difficulty`.
    #[serde(default)]
    pub base_difficulty: BTreeMap<String, f64>,
    pub default_difficulty: f64,
    /// Few-shot improvement over zero-shot before affinity bonuses.
    pub fewshot_gain: f64,
    /// Half-width of the uniform noise added to each score.
    pub noise: f64,
    #[serde(default)]
    pub affinity_rules: Vec<AffinityRule>,
    #[serde(default)]
    pub traits: BTreeMap<String, LanguageTraits>,
}

impl Default for MockRunnerConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            base_difficulty: BTreeMap::new(),
            default_difficulty: 0.6,
            fewshot_gain: 0.05,
            noise: 0.05,
            affinity_rules: Vec::new(),
            traits: BTreeMap::new(),
        }
    }
}

impl MockRunnerConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    /// Copies script, family and pretraining metadata of every registry language, keyed by code.
    pub fn with_registry(mut self, registry: &Registry) -> Self {
        for r in registry.records() {
            self.traits.insert(
                r.code.clone(),
                LanguageTraits {
                    script: r.script.clone(),
                    family: r.family.clone(),
                    subfamily: r.subfamily.clone(),
                    seen_by: r
                        .pretrain_coverage
                        .iter()
                        .filter(|(_, &v)| v)
                        .map(|(m, _)| m.clone())
                        .collect(),
                },
            );
        }
        self
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(HarnessError::InvalidConfig(format!("{name} = {v} is outside [0, 1]")))
            }
        };
        unit("default_difficulty", self.default_difficulty)?;
        unit("noise", self.noise)?;
        for (lang, &d) in &self.base_difficulty {
            unit(&format!("difficulty of {lang}"), d)?;
        }
        if !self.fewshot_gain.is_finite() {
            return Err(HarnessError::InvalidConfig("fewshot_gain is not finite".into()));
        }
        for rule in &self.affinity_rules {
            if !rule.bonus.is_finite() {
                return Err(HarnessError::InvalidConfig(format!("bonus of {} is not finite", rule.predicate)));
            }
        }
        Ok(())
    }

    fn rng_for(&self, manifest_id: &str) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(manifest_id.as_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }
}

/// Synthesizes a zero-shot and a few-shot record for every few-shot manifest. Each
/// manifest draws from its own stream, so output does not depend on manifest order.
pub fn mock_run(manifests: &[RunManifest], config: &MockRunnerConfig) -> Result<Vec<EvalRecord>, HarnessError> {
    config.validate()?;
    let mut out = Vec::new();
    for m in manifests.iter().filter(|m| m.phase == Phase::FewShot) {
        let source = m.source.clone().unwrap_or_default();
        let target = &m.language;
        let mut rng = config.rng_for(&m.id);
        let mut jitter = || {
            if config.noise > 0.0 {
                rng.random_range(-config.noise..=config.noise)
            } else {
                0.0
            }
        };
        let difficulty = config
            .base_difficulty
            .get(target)
            .copied()
            .unwrap_or(config.default_difficulty);
        let z0 = (1.0 - difficulty + jitter()).clamp(0.0, 1.0);
        let bonus: f64 = config
            .affinity_rules
            .iter()
            .filter(|r| r.applies(&m.model_id, config.traits.get(&source), config.traits.get(target)))
            .map(|r| r.bonus)
            .sum();
        let f = (z0 + config.fewshot_gain + bonus + jitter()).clamp(0.0, 1.0);
        for (steps, value) in [(0, z0), (m.hyperparams.max_steps, f)] {
            out.push(EvalRecord {
                model_id: m.model_id.clone(),
                task: m.task,
                source: source.clone(),
                target: target.clone(),
                steps,
                metric_kind: m.hyperparams.eval_metric,
                value,
            });
        }
    }
    Ok(out)
}
