//! Model-class recommendation as a small decision tree with an explainable trace.
//!
//! The tree looks at target resource availability, pretraining exposure, visual (script)
//! similarity to a high-resource language, relatedness to a high-resource language seen in
//! multilingual pretraining, and how much the task depends on word meaning. Every visited
//! node is recorded in the trace together with the reason it exists.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::registry::{Registry, RegistryError, Relation, ResourceClass, MULTILINGUAL_MODELS};
use crate::scores::Task;

#[derive(Debug, Error)]
pub enum RecommenderError {
    #[error("query field `{0}` is required to reach a recommendation")]
    MissingField(&'static str),
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ModelClass {
    MultilingualTokenBased,
    CharacterBased,
    PixelBased,
    MonolingualWithTransliteration,
    /// Either a token- or a character-based multilingual model.
    AdvancedMultilingual,
}

impl fmt::Display for ModelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelClass::MultilingualTokenBased => "MultilingualTokenBased",
            ModelClass::CharacterBased => "CharacterBased",
            ModelClass::PixelBased => "PixelBased",
            ModelClass::MonolingualWithTransliteration => "MonolingualWithTransliteration",
            ModelClass::AdvancedMultilingual => "AdvancedMultilingual",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum SemanticDependency {
    High,
    Low,
}

impl FromStr for SemanticDependency {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "high" => Ok(Self::High),
            "low" => Ok(Self::Low),
            other => Err(format!("unknown semantic dependency `{other}`")),
        }
    }
}

impl fmt::Display for SemanticDependency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::High => "High",
            Self::Low => "Low",
        })
    }
}

impl SemanticDependency {
    /// Tagging tasks hinge on word meaning; parsing hinges on relations between words.
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Pos | Task::Ner => Self::High,
            Task::Dep => Self::Low,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct RecommendationQuery {
    pub target_resource: ResourceClass,
    pub visually_similar_high_resource_exists: bool,
    pub related_high_resource_in_pretraining: bool,
    pub semantic_dependency: SemanticDependency,
    pub source_seen_in_pretraining: bool,
}

/// A query whose fields may be unset. Unset fields are never defaulted: evaluation fails
/// if the path through the tree needs one.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PartialQuery {
    pub target_resource: Option<ResourceClass>,
    pub visually_similar_high_resource_exists: Option<bool>,
    pub related_high_resource_in_pretraining: Option<bool>,
    pub semantic_dependency: Option<SemanticDependency>,
    pub source_seen_in_pretraining: Option<bool>,
}

impl From<RecommendationQuery> for PartialQuery {
    fn from(q: RecommendationQuery) -> Self {
        Self {
            target_resource: Some(q.target_resource),
            visually_similar_high_resource_exists: Some(q.visually_similar_high_resource_exists),
            related_high_resource_in_pretraining: Some(q.related_high_resource_in_pretraining),
            semantic_dependency: Some(q.semantic_dependency),
            source_seen_in_pretraining: Some(q.source_seen_in_pretraining),
        }
    }
}

impl PartialQuery {
    /// Fields set here take precedence over `base`.
    pub fn over(self, base: RecommendationQuery) -> RecommendationQuery {
        RecommendationQuery {
            target_resource: self.target_resource.unwrap_or(base.target_resource),
            visually_similar_high_resource_exists: self
                .visually_similar_high_resource_exists
                .unwrap_or(base.visually_similar_high_resource_exists),
            related_high_resource_in_pretraining: self
                .related_high_resource_in_pretraining
                .unwrap_or(base.related_high_resource_in_pretraining),
            semantic_dependency: self.semantic_dependency.unwrap_or(base.semantic_dependency),
            source_seen_in_pretraining: self
                .source_seen_in_pretraining
                .unwrap_or(base.source_seen_in_pretraining),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceStep {
    pub node: String,
    pub branch: String,
    pub anchor: String,
    /// Set on the final step only.
    pub outcome: Option<ModelClass>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Recommendation {
    pub model_class: ModelClass,
    pub trace: Vec<TraceStep>,
}

impl Recommendation {
    pub fn render_text(&self) -> String {
        let mut out = format!("{}\n", self.model_class);
        for (i, step) in self.trace.iter().enumerate() {
            out.push_str(&format!(
                "  {}. {} = {} ({})\n",
                i + 1,
                step.node,
                step.branch,
                step.anchor
            ));
        }
        out
    }
}

/// Which check runs first when the target is both unseen in pretraining and visually close
/// to a high-resource language.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum BranchOrder {
    #[default]
    UnseenFirst,
    VisualFirst,
}

impl FromStr for BranchOrder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "unseen-first" => Ok(Self::UnseenFirst),
            "visual-first" => Ok(Self::VisualFirst),
            other => Err(format!("unknown branch order `{other}`")),
        }
    }
}

pub const DEFAULT_BRANCH_ORDER: BranchOrder = BranchOrder::UnseenFirst;

const WHY_RESOURCE: &str =
    "high-resource targets are served best by the strongest multilingual models, token- or character-based";
const WHY_UNSEEN: &str =
    "multilingual models adapt poorly to languages missing from pretraining; transliteration into a high-resource language helps";
const WHY_VISUAL: &str =
    "pixel-based models exploit visual overlap with a high-resource language in a similar script";
const WHY_RELATED: &str =
    "a related high-resource language seen in multilingual pretraining makes transfer viable; choose by task semantics";
const WHY_SEMANTIC_HIGH: &str =
    "tasks driven by word meaning (POS tagging, NER) favour token-based multilingual models";
const WHY_SEMANTIC_LOW: &str =
    "tasks driven by relations between words (dependency parsing) favour character-based models";
const WHY_FALLBACK: &str =
    "no usable transfer signal; fall back to transliteration with a monolingual model";

struct Walk {
    trace: Vec<TraceStep>,
}

impl Walk {
    fn visit(&mut self, node: &str, branch: impl ToString, anchor: &str) {
        self.trace.push(TraceStep {
            node: node.to_owned(),
            branch: branch.to_string(),
            anchor: anchor.to_owned(),
            outcome: None,
        });
    }

    fn finish(mut self, class: ModelClass, anchor: &str) -> Recommendation {
        self.trace.push(TraceStep {
            node: "recommendation".to_owned(),
            branch: class.to_string(),
            anchor: anchor.to_owned(),
            outcome: Some(class),
        });
        Recommendation {
            model_class: class,
            trace: self.trace,
        }
    }
}

fn need<T>(value: Option<T>, field: &'static str) -> Result<T, RecommenderError> {
    value.ok_or(RecommenderError::MissingField(field))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Recommender {
    pub order: BranchOrder,
}

impl Recommender {
    pub fn new(order: BranchOrder) -> Self {
        Self { order }
    }

    pub fn recommend(&self, query: &RecommendationQuery) -> Recommendation {
        self.recommend_partial(&PartialQuery::from(*query))
            .expect("a complete query always reaches a leaf")
    }

    pub fn recommend_partial(&self, q: &PartialQuery) -> Result<Recommendation, RecommenderError> {
        let mut walk = Walk { trace: Vec::new() };

        let resource = need(q.target_resource, "target_resource")?;
        walk.visit("target_resource", resource, WHY_RESOURCE);
        if resource == ResourceClass::High {
            return Ok(walk.finish(ModelClass::AdvancedMultilingual, WHY_RESOURCE));
        }

        let checks: [Check; 2] =
            match self.order {
                BranchOrder::UnseenFirst => [check_unseen, check_visual],
                BranchOrder::VisualFirst => [check_visual, check_unseen],
            };
        for check in checks {
            if let Some(class) = check(q, &mut walk)? {
                let anchor = match class {
                    ModelClass::PixelBased => WHY_VISUAL,
                    _ => WHY_UNSEEN,
                };
                return Ok(walk.finish(class, anchor));
            }
        }

        let related = need(
            q.related_high_resource_in_pretraining,
            "related_high_resource_in_pretraining",
        )?;
        walk.visit("related_high_resource_in_pretraining", related, WHY_RELATED);
        if related {
            let semantic = need(q.semantic_dependency, "semantic_dependency")?;
            return Ok(match semantic {
                SemanticDependency::High => {
                    walk.visit("semantic_dependency", semantic, WHY_SEMANTIC_HIGH);
                    walk.finish(ModelClass::MultilingualTokenBased, WHY_SEMANTIC_HIGH)
                }
                SemanticDependency::Low => {
                    walk.visit("semantic_dependency", semantic, WHY_SEMANTIC_LOW);
                    walk.finish(ModelClass::CharacterBased, WHY_SEMANTIC_LOW)
                }
            });
        }
        walk.visit("fallback", "no remaining criteria", WHY_FALLBACK);
        Ok(walk.finish(ModelClass::MonolingualWithTransliteration, WHY_FALLBACK))
    }
}

type Check = fn(&PartialQuery, &mut Walk) -> Result<Option<ModelClass>, RecommenderError>;

fn check_unseen(q: &PartialQuery, walk: &mut Walk) -> Result<Option<ModelClass>, RecommenderError> {
    let seen = need(q.source_seen_in_pretraining, "source_seen_in_pretraining")?;
    walk.visit("source_seen_in_pretraining", seen, WHY_UNSEEN);
    Ok((!seen).then_some(ModelClass::MonolingualWithTransliteration))
}

fn check_visual(q: &PartialQuery, walk: &mut Walk) -> Result<Option<ModelClass>, RecommenderError> {
    let visual = need(
        q.visually_similar_high_resource_exists,
        "visually_similar_high_resource_exists",
    )?;
    walk.visit("visually_similar_high_resource_exists", visual, WHY_VISUAL);
    Ok(visual.then_some(ModelClass::PixelBased))
}

/// Recommendation with the default branch order.
pub fn recommend(query: &RecommendationQuery) -> Recommendation {
    Recommender::new(DEFAULT_BRANCH_ORDER).recommend(query)
}

/// All 32 combinations of the five query fields with their recommendations.
pub fn enumerate_decision_table() -> Vec<(RecommendationQuery, Recommendation)> {
    enumerate_with(Recommender::default())
}

pub fn enumerate_with(recommender: Recommender) -> Vec<(RecommendationQuery, Recommendation)> {
    let mut rows = Vec::with_capacity(32);
    for target_resource in [ResourceClass::High, ResourceClass::Low] {
        for visual in [true, false] {
            for related in [true, false] {
                for semantic_dependency in [SemanticDependency::High, SemanticDependency::Low] {
                    for seen in [true, false] {
                        let q = RecommendationQuery {
                            target_resource,
                            visually_similar_high_resource_exists: visual,
                            related_high_resource_in_pretraining: related,
                            semantic_dependency,
                            source_seen_in_pretraining: seen,
                        };
                        rows.push((q, recommender.recommend(&q)));
                    }
                }
            }
        }
    }
    rows
}

/// Registry-derived hints used to prefill a query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QueryAssist {
    pub target_code: String,
    /// High-resource languages written in the same script as the target.
    pub visually_similar_candidates: Vec<String>,
    /// High-resource languages of the target's sub-family seen by a multilingual model.
    pub related_pretrained_candidates: Vec<String>,
    /// Models whose pretraining data included the target.
    pub pretraining_models: Vec<String>,
}

/// Prefills a query for `target` from registry metadata. Explicit user input should be
/// layered on top with [`PartialQuery::over`].
pub fn suggest_query(
    registry: &Registry,
    target: &str,
    task: Task,
) -> Result<(QueryAssist, RecommendationQuery), RecommenderError> {
    let rec = registry.get(target)?;
    let mut visual = Vec::new();
    let mut related = Vec::new();
    for other in registry.records() {
        if other.base_language == rec.base_language || other.resource_class != ResourceClass::High {
            continue;
        }
        if registry.script_relations().relation(&rec.script, &other.script).relation == Relation::Same {
            visual.push(other.code.clone());
        }
        if other.subfamily == rec.subfamily && MULTILINGUAL_MODELS.iter().any(|m| other.seen_by(m)) {
            related.push(other.code.clone());
        }
    }
    visual.sort();
    related.sort();
    let assist = QueryAssist {
        target_code: rec.code.clone(),
        pretraining_models: rec
            .pretrain_coverage
            .iter()
            .filter(|(_, &v)| v)
            .map(|(m, _)| m.clone())
            .collect(),
        visually_similar_candidates: visual,
        related_pretrained_candidates: related,
    };
    let query = RecommendationQuery {
        target_resource: rec.resource_class,
        visually_similar_high_resource_exists: !assist.visually_similar_candidates.is_empty(),
        related_high_resource_in_pretraining: !assist.related_pretrained_candidates.is_empty(),
        semantic_dependency: SemanticDependency::for_task(task),
        source_seen_in_pretraining: rec.seen_by_any(),
    };
    Ok((assist, query))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(
        resource: ResourceClass,
        visual: bool,
        related: bool,
        semantic: SemanticDependency,
        seen: bool,
    ) -> RecommendationQuery {
        RecommendationQuery {
            target_resource: resource,
            visually_similar_high_resource_exists: visual,
            related_high_resource_in_pretraining: related,
            semantic_dependency: semantic,
            source_seen_in_pretraining: seen,
        }
    }

    use ResourceClass::{High, Low};
    use SemanticDependency as S;

    #[test]
    fn anchored_examples() {
        assert_eq!(
            recommend(&q(High, false, false, S::Low, false)).model_class,
            ModelClass::AdvancedMultilingual
        );
        assert_eq!(recommend(&q(Low, true, false, S::Low, true)).model_class, ModelClass::PixelBased);
        assert_eq!(
            recommend(&q(Low, false, true, S::High, true)).model_class,
            ModelClass::MultilingualTokenBased
        );
        assert_eq!(
            recommend(&q(Low, false, true, S::Low, true)).model_class,
            ModelClass::CharacterBased
        );
        assert_eq!(
            recommend(&q(Low, false, false, S::High, false)).model_class,
            ModelClass::MonolingualWithTransliteration
        );
    }

    #[test]
    fn fallback_has_its_own_node() {
        let r = recommend(&q(Low, false, false, S::High, true));
        assert_eq!(r.model_class, ModelClass::MonolingualWithTransliteration);
        assert!(r.trace.iter().any(|s| s.node == "fallback"));
        assert_eq!(r.trace.last().unwrap().outcome, Some(r.model_class));
    }

    #[test]
    fn branch_order_is_configurable() {
        let both = q(Low, true, true, S::High, false);
        assert_eq!(
            Recommender::new(BranchOrder::UnseenFirst).recommend(&both).model_class,
            ModelClass::MonolingualWithTransliteration
        );
        assert_eq!(
            Recommender::new(BranchOrder::VisualFirst).recommend(&both).model_class,
            ModelClass::PixelBased
        );
    }

    #[test]
    fn partial_queries_fail_only_when_a_needed_field_is_missing() {
        let partial = PartialQuery {
            target_resource: Some(Low),
            visually_similar_high_resource_exists: Some(true),
            source_seen_in_pretraining: Some(true),
            ..Default::default()
        };
        let r = Recommender::default().recommend_partial(&partial).unwrap();
        assert_eq!(r.model_class, ModelClass::PixelBased);

        let partial = PartialQuery {
            target_resource: Some(Low),
            visually_similar_high_resource_exists: Some(false),
            source_seen_in_pretraining: Some(true),
            ..Default::default()
        };
        assert!(matches!(
            Recommender::default().recommend_partial(&partial),
            Err(RecommenderError::MissingField("related_high_resource_in_pretraining"))
        ));
    }

    #[test]
    fn table_has_every_combination() {
        let table = enumerate_decision_table();
        assert_eq!(table.len(), 32);
        let distinct: std::collections::HashSet<_> = table.iter().map(|r| r.0).collect();
        assert_eq!(distinct.len(), 32);
        assert!(table.iter().all(|(_, r)| !r.trace.is_empty()));
    }

    #[test]
    fn suggestion_for_urdu() {
        let reg = Registry::bundled();
        let (assist, query) = suggest_query(&reg, "Urdu", Task::Pos).unwrap();
        assert_eq!(assist.target_code, "Urdu-UDTB");
        assert!(query.visually_similar_high_resource_exists);
        assert!(assist.visually_similar_candidates.contains(&"Arabic-PADT".to_owned()));
        assert!(query.source_seen_in_pretraining);
        assert_eq!(query.target_resource, Low);
        assert_eq!(recommend(&query).model_class, ModelClass::PixelBased);
    }

    #[test]
    fn suggestion_for_high_resource_and_unseen_targets() {
        let reg = Registry::bundled();
        let (_, english) = suggest_query(&reg, "English", Task::Dep).unwrap();
        assert_eq!(english.target_resource, High);
        assert_eq!(english.semantic_dependency, S::Low);
        assert_eq!(recommend(&english).model_class, ModelClass::AdvancedMultilingual);

        let (assist, coptic) = suggest_query(&reg, "Coptic", Task::Pos).unwrap();
        assert!(!coptic.source_seen_in_pretraining);
        assert!(assist.pretraining_models.is_empty());
        assert!(suggest_query(&reg, "Klingon", Task::Pos).is_err());
    }

    #[test]
    fn explicit_fields_override_suggestions() {
        let reg = Registry::bundled();
        let (_, suggested) = suggest_query(&reg, "Urdu", Task::Pos).unwrap();
        let explicit = PartialQuery {
            visually_similar_high_resource_exists: Some(false),
            ..Default::default()
        };
        let merged = explicit.over(suggested);
        assert!(!merged.visually_similar_high_resource_exists);
        assert_eq!(merged.target_resource, suggested.target_resource);
    }
}
