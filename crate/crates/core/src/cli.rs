//! Command-line front end. Every subcommand builds its whole output in memory and writes
//! it once, to `--out` or stdout.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::{self, CorrelationMethod};
use crate::harness::{self, AffinityRule, MockRunnerConfig};
use crate::lq::{self, LqMatrix, LqResult, PublishedLq, DEFAULT_EPSILON, DEFAULT_STEPS};
use crate::recommender::{
    self, BranchOrder, PartialQuery, Recommender, SemanticDependency,
};
use crate::registry::{self, LexicalSimilarityMatrix, Registry, ResourceClass};
use crate::report::{self, Grid, Scale, TableData, TableShape, TableSpec};
use crate::scores::{IngestOptions, IngestReport, ScoreStore, Task};

/// Zero-shot and few-shot POS scores for PIXEL across the nine fine-tuning languages,
/// used when no score file is given.
pub const BUNDLED_SCORES: &str = include_str!("../data/pixel_pos_scores.tsv");

pub const DEFAULT_MODELS: [&str; 4] = ["BERT", "mBERT", "CANINE", "PIXEL"];

#[derive(Debug, Parser)]
#[command(name = "lqt", version, about = "Learning Quotient (LQ) toolkit for cross-lingual transfer scores")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Language registry file; the bundled registry is used when unset
    #[arg(long, global = true, env = "LQT_REGISTRY")]
    pub registry: Option<PathBuf>,
    /// Stabilizer added to the zero-shot average in the LQ denominator
    #[arg(long, global = true, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// Few-shot training steps c
    #[arg(short = 'c', long = "steps", global = true, default_value_t = DEFAULT_STEPS)]
    pub c: u32,
    /// Reporting scale for LQ values and tables
    #[arg(long, global = true, value_enum, default_value_t = ScaleArg::Fraction)]
    pub scale: ScaleArg,
    /// Input score values are percentages and are divided by 100 on ingestion
    #[arg(long, global = true)]
    pub percent: bool,
    /// Output file; stdout when unset
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScaleArg {
    Fraction,
    Percent,
}

impl From<ScaleArg> for Scale {
    fn from(s: ScaleArg) -> Self {
        match s {
            ScaleArg::Fraction => Scale::Fraction,
            ScaleArg::Percent => Scale::Percent,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum YesNo {
    Yes,
    No,
}

impl From<YesNo> for bool {
    fn from(v: YesNo) -> Self {
        matches!(v, YesNo::Yes)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Level {
    High,
    Low,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OrderArg {
    UnseenFirst,
    VisualFirst,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Spearman,
    Pearson,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ShapeArg {
    /// Models on one pair, from published LQ values or scores
    PairModels,
    /// LQ of every target for one source
    SourceToTargets,
    /// Few-shot scores of one source, targets by models
    FewShot,
    /// Zero-shot scores, targets by sources
    ZeroShot,
    /// Few-shot scores, targets by sources
    FewShotMatrix,
    /// LQ values, targets by sources
    LqMatrix,
    /// Same-script vs different-script LQ groups for one source
    GroupBars,
    /// Mean LQ per source
    SourceAverages,
}

#[derive(Debug, Args)]
pub struct ScoreInput {
    /// Score files (model_id, task, source, target, steps, metric_kind, value); the bundled
    /// PIXEL POS scores are used when none is given
    #[arg(long = "scores", num_args = 1..)]
    pub scores: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Selection {
    #[arg(long)]
    pub model: String,
    #[arg(long, value_parser = parse_task)]
    pub task: Task,
    /// Comma-separated source set; all sources with scores for the model and task by default
    #[arg(long, value_delimiter = ',')]
    pub sources: Vec<String>,
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse()
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read score files and write the accepted records in canonical order
    Ingest {
        #[command(flatten)]
        input: ScoreInput,
    },
    /// Check the registry and optional score files and print a summary
    Validate {
        #[arg(long = "scores", num_args = 1..)]
        scores: Vec<PathBuf>,
    },
    /// LQ of one pair, or of every pair when --source and --target are left out
    Lq {
        #[command(flatten)]
        input: ScoreInput,
        #[command(flatten)]
        sel: Selection,
        #[arg(long)]
        source: Option<String>,
        #[arg(long)]
        target: Option<String>,
    },
    /// Rank targets for a source, or sources for a target, by LQ
    Rank {
        #[command(flatten)]
        input: ScoreInput,
        #[command(flatten)]
        sel: Selection,
        #[arg(long, conflicts_with = "target", required_unless_present = "target")]
        source: Option<String>,
        #[arg(long)]
        target: Option<String>,
    },
    /// Order models on one pair by LQ
    Compare {
        #[command(flatten)]
        input: ScoreInput,
        /// Published LQ values (model_id, task, source, target, steps, lq) instead of scores
        #[arg(long)]
        published: Option<PathBuf>,
        #[arg(long, value_parser = parse_task)]
        task: Task,
        #[arg(long)]
        source: String,
        #[arg(long)]
        target: String,
        /// Comma-separated models; every model in the input by default
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        sources: Vec<String>,
        /// Order by raw few-shot score at c instead of LQ
        #[arg(long, conflicts_with = "published")]
        few_shot: bool,
    },
    /// Split a source's targets by script relation and summarize LQ per group
    Group {
        #[command(flatten)]
        input: ScoreInput,
        #[command(flatten)]
        sel: Selection,
        #[arg(long)]
        source: String,
    },
    /// Correlate a source's LQ values with lexical similarity
    Correlate {
        #[command(flatten)]
        input: ScoreInput,
        #[command(flatten)]
        sel: Selection,
        #[arg(long)]
        source: String,
        /// Lexical similarity file (lang_a, lang_b, value); bundled values by default
        #[arg(long)]
        lexical: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = MethodArg::Spearman)]
        method: MethodArg,
    },
    /// Recommend a model class from explicit query fields or from registry metadata
    Recommend {
        /// Target language to prefill the query from the registry (needs --task)
        #[arg(long, requires = "task")]
        target: Option<String>,
        #[arg(long, value_parser = parse_task)]
        task: Option<Task>,
        #[arg(long, value_enum)]
        resource: Option<Level>,
        #[arg(long, value_enum)]
        visual_similar: Option<YesNo>,
        #[arg(long, value_enum)]
        related_pretrained: Option<YesNo>,
        #[arg(long, value_enum)]
        semantic: Option<Level>,
        #[arg(long, value_enum)]
        seen_pretraining: Option<YesNo>,
        #[arg(long, value_enum, default_value_t = OrderArg::UnseenFirst)]
        order: OrderArg,
        #[arg(long, value_enum, default_value_t = FormatArg::Text)]
        format: FormatArg,
        /// Print all 32 query combinations instead of a single recommendation
        #[arg(long)]
        table: bool,
    },
    /// Generate fine-tuning and few-shot run manifests as JSON lines
    Manifest {
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_MODELS.map(String::from))]
        models: Vec<String>,
        #[arg(long, value_delimiter = ',', value_parser = parse_task, default_value = "pos")]
        tasks: Vec<Task>,
        #[arg(long, value_delimiter = ',', default_values_t = registry::DEFAULT_HIGH_RESOURCE.map(String::from))]
        sources: Vec<String>,
        /// Comma-separated targets; every registry language by default
        #[arg(long, value_delimiter = ',')]
        targets: Vec<String>,
    },
    /// Produce synthetic scores for the few-shot runs of a manifest file
    Mock {
        #[arg(long)]
        manifests: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value_t = 0.6)]
        difficulty: f64,
        #[arg(long, default_value_t = 0.05)]
        gain: f64,
        /// `predicate:bonus[:model,...]` with predicate one of same-script, same-family,
        /// same-subfamily, target-seen
        #[arg(long = "affinity")]
        affinity: Vec<AffinityRule>,
    },
    /// Render a markdown table
    Report {
        #[arg(long, value_enum)]
        shape: ShapeArg,
        #[command(flatten)]
        input: ScoreInput,
        #[arg(long)]
        published: Option<PathBuf>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
        #[arg(long, value_parser = parse_task)]
        task: Task,
        #[arg(long)]
        source: Option<String>,
        #[arg(long)]
        target: Option<String>,
        #[arg(long, value_delimiter = ',')]
        sources: Vec<String>,
        #[arg(long)]
        precision: Option<usize>,
        /// Also write the plotted series (label, value) for source-averages and group-bars
        #[arg(long)]
        plot: Option<PathBuf>,
    },
}

/// Converts a module error into its crate-level, module-qualified form.
fn m<T, E: Into<crate::Error>>(r: Result<T, E>) -> anyhow::Result<T> {
    r.map_err(|e| anyhow::Error::new(e.into()))
}

struct Ctx<'a> {
    g: &'a GlobalOpts,
}

impl Ctx<'_> {
    fn registry(&self) -> anyhow::Result<Registry> {
        match &self.g.registry {
            Some(p) => m(registry::load_registry(p)),
            None => Ok(Registry::bundled()),
        }
    }

    fn opts(&self) -> IngestOptions {
        IngestOptions {
            percent: self.g.percent,
        }
    }

    fn store(&self, input: &ScoreInput) -> anyhow::Result<(ScoreStore, IngestReport)> {
        let mut store = ScoreStore::new();
        let mut report = IngestReport::default();
        if input.scores.is_empty() {
            let r = m(store.ingest_reader(BUNDLED_SCORES.as_bytes(), IngestOptions::default()))?;
            report.accepted += r.accepted;
        }
        for path in &input.scores {
            let r = m(store.ingest_path(path, self.opts()))?;
            report.accepted += r.accepted;
            report.rejected.extend(r.rejected.into_iter().map(|mut rej| {
                rej.reason = format!("{}: {}", path.display(), rej.reason);
                rej
            }));
        }
        Ok((store, report))
    }

    /// Store with no rejected rows; analysis commands refuse partially valid input.
    fn strict_store(&self, input: &ScoreInput) -> anyhow::Result<ScoreStore> {
        let (store, report) = self.store(input)?;
        if let Some(first) = report.rejected.first() {
            bail!(
                "scores: {} row(s) rejected, first at line {}: {}",
                report.rejected.len(),
                first.line,
                first.reason
            );
        }
        Ok(store)
    }

    fn scale(&self) -> Scale {
        self.g.scale.into()
    }
}

fn resolve_model(store: &ScoreStore, name: &str) -> String {
    store.resolve_model(name).unwrap_or_else(|| name.to_owned())
}

fn resolve_lang(store: &ScoreStore, name: &str) -> String {
    store.resolve_language(name).unwrap_or_else(|| name.to_owned())
}

struct Resolved {
    model: String,
    task: Task,
    sources: Vec<String>,
    targets: Vec<String>,
}

fn resolve(store: &ScoreStore, sel: &Selection) -> anyhow::Result<Resolved> {
    let model = resolve_model(store, &sel.model);
    let sources: Vec<String> = if sel.sources.is_empty() {
        store.sources_for(&model, sel.task).into_iter().collect()
    } else {
        sel.sources.iter().map(|s| resolve_lang(store, s)).collect()
    };
    if sources.is_empty() {
        bail!("scores: no sources with {} {} scores", model, sel.task);
    }
    // targets that are also sources come first, in source order, so square grids line up
    let all = store.targets_for(&model, sel.task);
    let mut targets: Vec<String> = sources.iter().filter(|s| all.contains(*s)).cloned().collect();
    targets.extend(all.into_iter().filter(|t| !sources.contains(t)));
    Ok(Resolved {
        model,
        task: sel.task,
        sources,
        targets,
    })
}

fn fmt_f(v: f64) -> String {
    format!("{v}")
}

fn lq_matrix(ctx: &Ctx, store: &ScoreStore, r: &Resolved) -> anyhow::Result<LqMatrix> {
    m(lq::lq_matrix(store, &r.model, r.task, &r.sources, &r.targets, ctx.g.c, ctx.g.epsilon))
}

fn pair_text(res: &LqResult, scale: Scale) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| out.push_str(&format!("{k}\t{v}\n"));
    kv("model", res.model_id.clone());
    kv("task", res.task.to_string());
    kv("source", res.source.clone());
    kv("target", res.target.clone());
    kv("steps", res.c.to_string());
    if let Some(i) = &res.inputs {
        kv("z0", fmt_f(i.z0));
        kv("f", fmt_f(i.f));
        kv("za", fmt_f(i.za));
        kv("epsilon", fmt_f(i.epsilon));
    }
    if let Some(c) = res.coverage {
        kv("coverage", c.to_string());
    }
    kv("source_set_hash", res.source_set_hash.clone());
    kv("scale", format!("{scale:?}").to_lowercase());
    kv("lq", fmt_f(scale.apply(res.lq)));
    out
}

fn published_results(
    values: &[PublishedLq],
    task: Task,
    source: &str,
    target: &str,
    c: u32,
    models: &[String],
) -> Vec<LqResult> {
    let mut ids: Vec<String> = values
        .iter()
        .filter(|v| v.task == task && v.source == source && v.target == target && v.steps == c)
        .map(|v| v.model_id.clone())
        .filter(|id| models.is_empty() || models.iter().any(|m| m.eq_ignore_ascii_case(id)))
        .collect();
    ids.sort();
    ids.dedup();
    ids.iter()
        .filter_map(|model| {
            LqMatrix::from_published(model, task, c, &[source.to_owned()], values)
                .get(source, target)
                .cloned()
        })
        .collect()
}

fn score_results(
    ctx: &Ctx,
    store: &ScoreStore,
    task: Task,
    source: &str,
    target: &str,
    models: &[String],
    sources: &[String],
) -> anyhow::Result<Vec<LqResult>> {
    let models: Vec<String> = if models.is_empty() {
        store.models().into_iter().collect()
    } else {
        models.iter().map(|x| resolve_model(store, x)).collect()
    };
    let source = resolve_lang(store, source);
    let target = resolve_lang(store, target);
    let mut out = Vec::new();
    for model in models {
        let set: Vec<String> = if sources.is_empty() {
            store.sources_for(&model, task).into_iter().collect()
        } else {
            sources.iter().map(|s| resolve_lang(store, s)).collect()
        };
        if set.is_empty() {
            continue;
        }
        out.push(m(lq::lq_for_pair(store, &model, task, &source, &target, &set, ctx.g.c, ctx.g.epsilon))?);
    }
    Ok(out)
}

fn tsv_lines(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut out = format!("{header}\n");
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

fn execute(cli: &Cli) -> anyhow::Result<Vec<u8>> {
    let ctx = Ctx { g: &cli.global };
    if !(ctx.g.epsilon > 0.0) {
        bail!("cli: --epsilon must be positive");
    }
    if ctx.g.c == 0 {
        bail!("cli: --steps must be positive");
    }
    let scale = ctx.scale();
    let text = match &cli.command {
        Command::Ingest { input } => {
            let (store, report) = ctx.store(input)?;
            let mut buf = Vec::new();
            store.export(&mut buf)?;
            if !report.rejected.is_empty() {
                let mut msg = format!("scores: {} row(s) rejected", report.rejected.len());
                for r in &report.rejected {
                    msg.push_str(&format!("\n  line {}: {}", r.line, r.reason));
                }
                write_output(ctx.g.out.as_deref(), &buf)?;
                bail!(msg);
            }
            return Ok(buf);
        }
        Command::Validate { scores } => {
            let reg = ctx.registry()?;
            let stats = reg.stats();
            let mut out = format!(
                "languages\t{}\nscripts\t{}\nfamilies\t{}\nsubfamilies\t{}\n",
                reg.len(), stats.script_count, stats.family_count, stats.subfamily_count
            );
            if !scores.is_empty() {
                let store = ctx.strict_store(&ScoreInput { scores: scores.clone() })?;
                out.push_str(&format!("records\t{}\n", store.len()));
                out.push_str(&format!("models\t{}\n", store.models().into_iter().collect::<Vec<_>>().join(",")));
            }
            out
        }
        Command::Lq {
            input,
            sel,
            source,
            target,
        } => {
            let store = ctx.strict_store(input)?;
            let r = resolve(&store, sel)?;
            match (source, target) {
                (Some(s), Some(t)) => {
                    let s = resolve_lang(&store, s);
                    let t = resolve_lang(&store, t);
                    let res = m(lq::lq_for_pair(&store, &r.model, r.task, &s, &t, &r.sources, ctx.g.c, ctx.g.epsilon))?;
                    pair_text(&res, scale)
                }
                (None, None) => {
                    let matrix = lq_matrix(&ctx, &store, &r)?;
                    let mut buf = Vec::new();
                    matrix.export(&mut buf)?;
                    String::from_utf8(buf)?
                }
                _ => bail!("cli: give both --source and --target, or neither for the full matrix"),
            }
        }
        Command::Rank {
            input,
            sel,
            source,
            target,
        } => {
            let store = ctx.strict_store(input)?;
            let r = resolve(&store, sel)?;
            let matrix = lq_matrix(&ctx, &store, &r)?;
            let list = match (source, target) {
                (Some(s), _) => m(analysis::rank_targets(&matrix, &resolve_lang(&store, s)))?,
                (None, Some(t)) => m(analysis::rank_sources(&matrix, &resolve_lang(&store, t)))?,
                (None, None) => unreachable!("clap requires one of --source/--target"),
            };
            tsv_lines(
                "rank\tlanguage\tlq",
                list.entries
                    .iter()
                    .map(|e| format!("{}\t{}\t{}", e.rank, e.language, fmt_f(scale.apply(e.lq)))),
            )
        }
        Command::Compare {
            input,
            published,
            task,
            source,
            target,
            models,
            sources,
            few_shot,
        } => {
            if *few_shot {
                let store = ctx.strict_store(input)?;
                let models: Vec<String> = if models.is_empty() {
                    store.models().into_iter().collect()
                } else {
                    models.iter().map(|x| resolve_model(&store, x)).collect()
                };
                let (s, t) = (resolve_lang(&store, source), resolve_lang(&store, target));
                let rows = analysis::rank_models_by_score(&store, &models, *task, &s, &t, ctx.g.c);
                if rows.is_empty() {
                    bail!("scores: no few-shot scores for {s}->{t} at {} steps", ctx.g.c);
                }
                let text = tsv_lines(
                    "rank\tmodel\tscore",
                    rows.iter()
                        .enumerate()
                        .map(|(i, (model, v))| format!("{}\t{}\t{}", i + 1, model, fmt_f(scale.apply(*v)))),
                );
                return Ok(text.into_bytes());
            }
            let results = match published {
                Some(p) => {
                    let values = m(lq::read_published_lq_path(p, ctx.g.percent))?;
                    published_results(&values, *task, source, target, ctx.g.c, models)
                }
                None => {
                    let store = ctx.strict_store(input)?;
                    score_results(&ctx, &store, *task, source, target, models, sources)?
                }
            };
            let cmp = m(analysis::model_compare(&results))?;
            tsv_lines(
                "rank\tmodel\tlq",
                cmp.rows
                    .iter()
                    .enumerate()
                    .map(|(i, (model, lq))| format!("{}\t{}\t{}", i + 1, model, fmt_f(scale.apply(*lq)))),
            )
        }
        Command::Group { input, sel, source } => {
            let store = ctx.strict_store(input)?;
            let reg = ctx.registry()?;
            let r = resolve(&store, sel)?;
            let matrix = lq_matrix(&ctx, &store, &r)?;
            let g = m(analysis::group_by_script(&matrix, &reg, &resolve_lang(&store, source)))?;
            let opt = |v: Option<f64>| v.map(|v| fmt_f(scale.apply(v))).unwrap_or_default();
            tsv_lines(
                "group\tcount\tmean_lq\tmedian_lq\tmembers",
                g.groups.iter().map(|gs| {
                    format!(
                        "{}\t{}\t{}\t{}\t{}",
                        gs.label,
                        gs.count,
                        opt(gs.mean),
                        opt(gs.median),
                        gs.members.join(",")
                    )
                }),
            )
        }
        Command::Correlate {
            input,
            sel,
            source,
            lexical,
            method,
        } => {
            let store = ctx.strict_store(input)?;
            let r = resolve(&store, sel)?;
            let matrix = lq_matrix(&ctx, &store, &r)?;
            let lex = match lexical {
                Some(p) => m(LexicalSimilarityMatrix::load(p))?,
                None => LexicalSimilarityMatrix::bundled(),
            };
            let method = match method {
                MethodArg::Spearman => CorrelationMethod::Spearman,
                MethodArg::Pearson => CorrelationMethod::Pearson,
            };
            let c = m(analysis::correlate_lexical(&matrix, &lex, &resolve_lang(&store, source), method))?;
            let mut out = format!("method\t{:?}\nrho\t{}\nn_pairs\t{}\n", c.method, fmt_f(c.rho), c.n_pairs);
            out.push_str("target\tlq\tlexical_similarity\n");
            for (t, lq, sim) in &c.pairs {
                out.push_str(&format!("{t}\t{}\t{}\n", fmt_f(scale.apply(*lq)), fmt_f(*sim)));
            }
            out
        }
        Command::Recommend {
            target,
            task,
            resource,
            visual_similar,
            related_pretrained,
            semantic,
            seen_pretraining,
            order,
            format,
            table,
        } => {
            let order = match order {
                OrderArg::UnseenFirst => BranchOrder::UnseenFirst,
                OrderArg::VisualFirst => BranchOrder::VisualFirst,
            };
            let engine = Recommender::new(order);
            if *table {
                let rows = recommender::enumerate_with(engine);
                let mut out = String::from(
                    "target_resource\tvisually_similar\trelated_in_pretraining\tsemantic_dependency\tseen_in_pretraining\tmodel_class\n",
                );
                for (q, rec) in rows {
                    out.push_str(&format!(
                        "{}\t{}\t{}\t{}\t{}\t{}\n",
                        q.target_resource,
                        q.visually_similar_high_resource_exists,
                        q.related_high_resource_in_pretraining,
                        q.semantic_dependency,
                        q.source_seen_in_pretraining,
                        rec.model_class
                    ));
                }
                out
            } else {
                let explicit = PartialQuery {
                    target_resource: resource.map(|l| match l {
                        Level::High => ResourceClass::High,
                        Level::Low => ResourceClass::Low,
                    }),
                    visually_similar_high_resource_exists: visual_similar.map(bool::from),
                    related_high_resource_in_pretraining: related_pretrained.map(bool::from),
                    semantic_dependency: semantic.map(|l| match l {
                        Level::High => SemanticDependency::High,
                        Level::Low => SemanticDependency::Low,
                    }),
                    source_seen_in_pretraining: seen_pretraining.map(bool::from),
                };
                let (prefix, rec) = match (target, task) {
                    (Some(t), Some(task)) => {
                        let reg = ctx.registry()?;
                        let (assist, suggested) = m(recommender::suggest_query(&reg, t, *task))?;
                        let query = explicit.over(suggested);
                        let prefix = format!(
                            "target\t{}\nvisually_similar_candidates\t{}\nrelated_pretrained_candidates\t{}\npretraining_models\t{}\n",
                            assist.target_code,
                            assist.visually_similar_candidates.join(","),
                            assist.related_pretrained_candidates.join(","),
                            assist.pretraining_models.join(",")
                        );
                        (prefix, engine.recommend(&query))
                    }
                    _ => (String::new(), m(engine.recommend_partial(&explicit))?),
                };
                match format {
                    FormatArg::Text => format!("{prefix}{}", rec.render_text()),
                    FormatArg::Json => serde_json::to_string_pretty(&rec)? + "\n",
                }
            }
        }
        Command::Manifest {
            models,
            tasks,
            sources,
            targets,
        } => {
            let targets: Vec<String> = if targets.is_empty() {
                ctx.registry()?.records().iter().map(|r| r.code.clone()).collect()
            } else {
                targets.clone()
            };
            let manifests = m(harness::generate_manifests(models, tasks, sources, &targets, ctx.g.c))?;
            let mut buf = Vec::new();
            harness::write_manifests(&mut buf, &manifests)?;
            return Ok(buf);
        }
        Command::Mock {
            manifests,
            seed,
            noise,
            difficulty,
            gain,
            affinity,
        } => {
            let manifests = m(harness::read_manifests_path(manifests))?;
            let config = MockRunnerConfig {
                seed: *seed,
                noise: *noise,
                default_difficulty: *difficulty,
                fewshot_gain: *gain,
                affinity_rules: affinity.clone(),
                ..MockRunnerConfig::default()
            }
            .with_registry(&ctx.registry()?);
            let records = m(harness::mock_run(&manifests, &config))?;
            let mut buf = Vec::new();
            harness::export_results(&mut buf, &records)?;
            return Ok(buf);
        }
        Command::Report {
            shape,
            input,
            published,
            model,
            models,
            task,
            source,
            target,
            sources,
            precision,
            plot,
        } => {
            let need = |v: &Option<String>, flag: &str| {
                v.clone().ok_or_else(|| anyhow!("cli: --shape {shape:?} needs --{flag}"))
            };
            let selection = || -> anyhow::Result<Selection> {
                Ok(Selection {
                    model: need(model, "model")?,
                    task: *task,
                    sources: sources.clone(),
                })
            };
            let (table_shape, data, series) = match shape {
                ShapeArg::PairModels => {
                    let (s, t) = (need(source, "source")?, need(target, "target")?);
                    let results = match published {
                        Some(p) => {
                            let values = m(lq::read_published_lq_path(p, ctx.g.percent))?;
                            published_results(&values, *task, &s, &t, ctx.g.c, models)
                        }
                        None => {
                            let store = ctx.strict_store(input)?;
                            score_results(&ctx, &store, *task, &s, &t, models, sources)?
                        }
                    };
                    let cmp = m(analysis::model_compare(&results))?;
                    (TableShape::PairModelComparison, TableData::Models(cmp), None)
                }
                ShapeArg::FewShot => {
                    let store = ctx.strict_store(input)?;
                    let s = resolve_lang(&store, &need(source, "source")?);
                    let models: Vec<String> = if models.is_empty() {
                        store.models().into_iter().collect()
                    } else {
                        models.iter().map(|x| resolve_model(&store, x)).collect()
                    };
                    let mut targets: Vec<String> = Vec::new();
                    for model in &models {
                        for t in store.targets_for(model, *task) {
                            if store.get_score(model, *task, &s, &t, ctx.g.c).is_some() && !targets.contains(&t) {
                                targets.push(t);
                            }
                        }
                    }
                    targets.sort();
                    let grid = Grid::by_model(&store, &models, *task, &s, &targets, ctx.g.c);
                    (TableShape::FewShotAccuracy, TableData::Grid(grid), None)
                }
                ShapeArg::ZeroShot | ShapeArg::FewShotMatrix => {
                    let store = ctx.strict_store(input)?;
                    let r = resolve(&store, &selection()?)?;
                    let steps = if matches!(shape, ShapeArg::ZeroShot) { 0 } else { ctx.g.c };
                    let grid = Grid::scores(&store, &r.model, r.task, &r.sources, &r.targets, steps);
                    (TableShape::ZeroFewMatrix, TableData::Grid(grid), None)
                }
                ShapeArg::LqMatrix | ShapeArg::SourceToTargets | ShapeArg::GroupBars | ShapeArg::SourceAverages => {
                    let store = ctx.strict_store(input)?;
                    let r = resolve(&store, &selection()?)?;
                    let matrix = lq_matrix(&ctx, &store, &r)?;
                    match shape {
                        ShapeArg::LqMatrix => (TableShape::ZeroFewMatrix, TableData::Grid(Grid::from_matrix(&matrix)), None),
                        ShapeArg::SourceToTargets => {
                            let s = resolve_lang(&store, &need(source, "source")?);
                            let list = m(analysis::rank_targets(&matrix, &s))?;
                            (TableShape::SourceToTargets, TableData::Ranking(list), None)
                        }
                        ShapeArg::GroupBars => {
                            let reg = ctx.registry()?;
                            let s = resolve_lang(&store, &need(source, "source")?);
                            let g = m(analysis::group_by_script(&matrix, &reg, &s))?;
                            let series: Vec<(String, f64)> = g
                                .groups
                                .iter()
                                .filter_map(|gs| gs.mean.map(|v| (gs.label.clone(), scale.apply(v))))
                                .collect();
                            (TableShape::GroupBars, TableData::Groups(g), Some(series))
                        }
                        _ => {
                            let avg: Vec<(String, f64)> = analysis::average_lq_by_source(&matrix).into_iter().collect();
                            let series = avg.iter().map(|(l, v)| (l.clone(), scale.apply(*v))).collect();
                            (TableShape::SourceAverages, TableData::Series(avg), Some(series))
                        }
                    }
                }
            };
            let mut spec = TableSpec::new(table_shape, scale);
            if let Some(p) = precision {
                spec = spec.with_precision(*p);
            }
            let table = m(report::render_table(&data, &spec))?;
            if let Some(path) = plot {
                let series = series.ok_or_else(|| anyhow!("cli: --plot is only available for group-bars and source-averages"))?;
                m(report::emit_plot_data(&series, path))?;
            }
            table
        }
    };
    Ok(text.into_bytes())
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| anyhow!("cli: writing {}: {e}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

/// Parses `argv` and runs the command. Returns the process exit status; diagnostics go
/// to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let result = execute(&cli).and_then(|bytes| write_output(cli.global.out.as_deref(), &bytes));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn no_arguments_is_an_error() {
        assert_ne!(run(["lqt"]), 0);
    }

    #[test]
    fn recommend_flags_parse() {
        let cli = Cli::try_parse_from([
            "lqt",
            "recommend",
            "--resource",
            "low",
            "--visual-similar",
            "yes",
            "--seen-pretraining",
            "yes",
        ])
        .unwrap();
        let out = String::from_utf8(execute(&cli).unwrap()).unwrap();
        assert!(out.starts_with("PixelBased\n"));
    }

    #[test]
    fn lq_on_bundled_scores() {
        let cli = Cli::try_parse_from([
            "lqt", "lq", "--model", "PIXEL", "--task", "pos", "--target", "english", "--source", "arabic",
        ])
        .unwrap();
        let out = String::from_utf8(execute(&cli).unwrap()).unwrap();
        let lq: f64 = out
            .lines()
            .find_map(|l| l.strip_prefix("lq\t"))
            .unwrap()
            .parse()
            .unwrap();
        assert!((lq + 0.122).abs() < 0.001, "{lq}");
    }
}
