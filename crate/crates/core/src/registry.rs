//! Language metadata: scripts, families, resource class and pretraining coverage.
//!
//! A [`Registry`] is keyed by treebank id (`Urdu-UDTB`). Each record also carries a base
//! language (`Urdu`) so analyses phrased in terms of languages can resolve either form.
//! The script-relation table and the lexical-similarity matrix live alongside it and are
//! immutable once loaded.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::tsv::{self, Table, TsvError};

pub const BUNDLED_REGISTRY: &str = include_str!("../data/registry.tsv");
pub const BUNDLED_SCRIPT_RELATIONS: &str = include_str!("../data/script_relations.tsv");
pub const BUNDLED_LEXICAL_SIMILARITY: &str = include_str!("../data/lexical_similarity.tsv");

/// Base languages treated as high-resource when a registry row leaves `resource_class` empty.
/// These are the nine POS/DEP fine-tuning sources.
pub const DEFAULT_HIGH_RESOURCE: [&str; 9] = [
    "English",
    "Arabic",
    "Korean",
    "Vietnamese",
    "Tamil",
    "Chinese",
    "Japanese",
    "Coptic",
    "Hindi",
];

/// Model families whose pretraining data spans many languages.
pub const MULTILINGUAL_MODELS: [&str; 2] = ["mBERT", "CANINE"];

const PRETRAIN_PREFIX: &str = "pretrain:";

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("duplicate language code `{0}`")]
    DuplicateCode(String),
    #[error("unknown language `{0}`")]
    UnknownLanguage(String),
}

impl RegistryError {
    fn from_tsv(err: TsvError, path: Option<&Path>) -> Self {
        match err {
            TsvError::Io(source) => RegistryError::Io {
                path: path.map(Path::to_path_buf).unwrap_or_default(),
                source,
            },
            TsvError::Parse { line, message } => RegistryError::Parse { line, message },
        }
    }

    fn parse(line: u64, message: impl Into<String>) -> Self {
        RegistryError::Parse {
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ResourceClass {
    High,
    Low,
}

impl FromStr for ResourceClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "high" => Ok(ResourceClass::High),
            "low" => Ok(ResourceClass::Low),
            other => Err(format!("unknown resource class `{other}`")),
        }
    }
}

impl fmt::Display for ResourceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResourceClass::High => "High",
            ResourceClass::Low => "Low",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LanguageRecord {
    pub code: String,
    pub name: String,
    pub base_language: String,
    pub script: String,
    pub family: String,
    pub subfamily: String,
    pub resource_class: ResourceClass,
    /// Model family id -> whether the language was part of that model's pretraining data.
    pub pretrain_coverage: BTreeMap<String, bool>,
}

impl LanguageRecord {
    pub fn seen_by(&self, model: &str) -> bool {
        self.pretrain_coverage.get(model).copied().unwrap_or(false)
    }

    pub fn seen_by_any(&self) -> bool {
        self.pretrain_coverage.values().any(|&v| v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Relation {
    Same,
    Close,
    Dissimilar,
}

impl FromStr for Relation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "same" => Ok(Relation::Same),
            "close" => Ok(Relation::Close),
            "dissimilar" => Ok(Relation::Dissimilar),
            other => Err(format!("unknown script relation `{other}`")),
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Same => "Same",
            Relation::Close => "Close",
            Relation::Dissimilar => "Dissimilar",
        })
    }
}

/// Relation between the scripts of two languages. `defaulted` is set when the pair was
/// not listed in the relation table and fell back to `Dissimilar`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScriptRelation {
    pub script_a: String,
    pub script_b: String,
    pub relation: Relation,
    pub defaulted: bool,
}

fn ordered_pair(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_owned(), b.to_owned())
    } else {
        (b.to_owned(), a.to_owned())
    }
}

/// Symmetric table of script relations. Identical scripts are always `Same`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScriptRelationTable {
    entries: BTreeMap<(String, String), Relation>,
}

impl ScriptRelationTable {
    pub fn bundled() -> Self {
        Self::parse_str(BUNDLED_SCRIPT_RELATIONS).expect("bundled script relations are valid")
    }

    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        let table =
            tsv::read_table_path(path).map_err(|e| RegistryError::from_tsv(e, Some(path)))?;
        Self::from_table(&table)
    }

    pub fn parse_str(text: &str) -> Result<Self, RegistryError> {
        let table = tsv::read_table(text.as_bytes()).map_err(|e| RegistryError::from_tsv(e, None))?;
        Self::from_table(&table)
    }

    fn from_table(table: &Table) -> Result<Self, RegistryError> {
        let col = |name| table.column(name).map_err(|e| RegistryError::from_tsv(e, None));
        let (ia, ib, ir) = (col("script_a")?, col("script_b")?, col("relation")?);
        let mut out = Self::default();
        for row in &table.rows {
            let (a, b) = (row.get(ia), row.get(ib));
            if a.is_empty() || b.is_empty() {
                return Err(RegistryError::parse(row.line, "empty script name"));
            }
            let rel: Relation = row
                .get(ir)
                .parse()
                .map_err(|m: String| RegistryError::parse(row.line, m))?;
            out.insert(a, b, rel)
                .map_err(|m| RegistryError::parse(row.line, m))?;
        }
        Ok(out)
    }

    pub fn insert(&mut self, a: &str, b: &str, relation: Relation) -> Result<(), String> {
        if a == b && relation != Relation::Same {
            return Err(format!("script `{a}` must relate to itself as Same"));
        }
        let key = ordered_pair(a, b);
        match self.entries.get(&key) {
            Some(&existing) if existing != relation => Err(format!(
                "conflicting relations for ({a}, {b}): {existing} and {relation}"
            )),
            _ => {
                self.entries.insert(key, relation);
                Ok(())
            }
        }
    }

    pub fn relation(&self, script_a: &str, script_b: &str) -> ScriptRelation {
        let (relation, defaulted) = if script_a == script_b {
            (Relation::Same, false)
        } else {
            match self.entries.get(&ordered_pair(script_a, script_b)) {
                Some(&r) => (r, false),
                None => (Relation::Dissimilar, true),
            }
        };
        ScriptRelation {
            script_a: script_a.to_owned(),
            script_b: script_b.to_owned(),
            relation,
            defaulted,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Normalizes a language or treebank id to the key used by the lexical-similarity matrix:
/// `UD_French-GSD`, `French-GSD` and `french` all map to `french`.
pub fn language_key(id: &str) -> String {
    let id = id.trim();
    let id = id.strip_prefix("UD_").unwrap_or(id);
    let base = id.split('-').next().unwrap_or(id);
    base.replace('_', " ").trim().to_lowercase()
}

/// Sparse symmetric lexical-similarity fractions. An absent pair means "unknown", not zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LexicalSimilarityMatrix {
    entries: BTreeMap<(String, String), f64>,
}

impl LexicalSimilarityMatrix {
    pub fn bundled() -> Self {
        Self::parse_str(BUNDLED_LEXICAL_SIMILARITY).expect("bundled lexical similarity is valid")
    }

    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        let table =
            tsv::read_table_path(path).map_err(|e| RegistryError::from_tsv(e, Some(path)))?;
        Self::from_table(&table)
    }

    pub fn parse_str(text: &str) -> Result<Self, RegistryError> {
        let table = tsv::read_table(text.as_bytes()).map_err(|e| RegistryError::from_tsv(e, None))?;
        Self::from_table(&table)
    }

    fn from_table(table: &Table) -> Result<Self, RegistryError> {
        let col = |name| table.column(name).map_err(|e| RegistryError::from_tsv(e, None));
        let (ia, ib, iv) = (col("lang_a")?, col("lang_b")?, col("value")?);
        let mut out = Self::default();
        for row in &table.rows {
            let value: f64 = row
                .get(iv)
                .parse()
                .map_err(|_| RegistryError::parse(row.line, format!("bad value `{}`", row.get(iv))))?;
            out.insert(row.get(ia), row.get(ib), value)
                .map_err(|m| RegistryError::parse(row.line, m))?;
        }
        Ok(out)
    }

    pub fn insert(&mut self, a: &str, b: &str, value: f64) -> Result<(), String> {
        if !(0.0..=1.0).contains(&value) {
            return Err(format!("similarity {value} outside [0, 1]"));
        }
        let (ka, kb) = (language_key(a), language_key(b));
        if ka.is_empty() || kb.is_empty() {
            return Err("empty language name".into());
        }
        if ka == kb {
            return if value == 1.0 {
                Ok(())
            } else {
                Err(format!("self-similarity of `{a}` must be 1"))
            };
        }
        let key = ordered_pair(&ka, &kb);
        match self.entries.get(&key) {
            Some(&existing) if existing != value => Err(format!(
                "conflicting similarity for ({a}, {b}): {existing} and {value}"
            )),
            _ => {
                self.entries.insert(key, value);
                Ok(())
            }
        }
    }

    /// Similarity of two languages in either order; `Some(1.0)` on the diagonal.
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let (ka, kb) = (language_key(a), language_key(b));
        if ka == kb {
            return Some(1.0);
        }
        self.entries.get(&ordered_pair(&ka, &kb)).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RegistryStats {
    pub script_count: usize,
    pub family_count: usize,
    pub subfamily_count: usize,
}

#[derive(Debug, Clone)]
pub struct Registry {
    records: Vec<LanguageRecord>,
    by_code: HashMap<String, usize>,
    relations: ScriptRelationTable,
}

fn parse_flag(line: u64, raw: &str) -> Result<bool, RegistryError> {
    match raw.to_ascii_lowercase().as_str() {
        "yes" | "true" | "1" | "y" => Ok(true),
        "no" | "false" | "0" | "n" | "" => Ok(false),
        other => Err(RegistryError::parse(line, format!("bad pretraining flag `{other}`"))),
    }
}

impl Registry {
    /// The bundled 123-treebank target registry with the bundled script relations.
    pub fn bundled() -> Self {
        Self::parse_str(BUNDLED_REGISTRY).expect("bundled registry is valid")
    }

    pub fn parse_str(text: &str) -> Result<Self, RegistryError> {
        let table = tsv::read_table(text.as_bytes()).map_err(|e| RegistryError::from_tsv(e, None))?;
        Self::from_table(&table)
    }

    pub fn from_records(records: Vec<LanguageRecord>) -> Result<Self, RegistryError> {
        let mut by_code = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if by_code.insert(r.code.clone(), i).is_some() {
                return Err(RegistryError::DuplicateCode(r.code.clone()));
            }
        }
        Ok(Self {
            records,
            by_code,
            relations: ScriptRelationTable::bundled(),
        })
    }

    fn from_table(table: &Table) -> Result<Self, RegistryError> {
        let col = |name| table.column(name).map_err(|e| RegistryError::from_tsv(e, None));
        let i_code = col("code")?;
        let i_name = col("name")?;
        let i_base = col("base_language")?;
        let i_script = col("script")?;
        let i_family = col("family")?;
        let i_sub = col("subfamily")?;
        let i_res = col("resource_class")?;
        let pretrain_cols: Vec<(usize, String)> = table
            .header
            .iter()
            .enumerate()
            .filter_map(|(i, h)| h.strip_prefix(PRETRAIN_PREFIX).map(|m| (i, m.to_owned())))
            .collect();

        let mut records = Vec::with_capacity(table.rows.len());
        let mut seen = HashMap::new();
        for row in &table.rows {
            let code = row.get(i_code).to_owned();
            if code.is_empty() {
                return Err(RegistryError::parse(row.line, "empty code"));
            }
            if seen.insert(code.clone(), row.line).is_some() {
                return Err(RegistryError::DuplicateCode(code));
            }
            for (idx, field) in [(i_script, "script"), (i_family, "family"), (i_sub, "subfamily")] {
                if row.get(idx).is_empty() {
                    return Err(RegistryError::parse(row.line, format!("empty {field} for `{code}`")));
                }
            }
            let base_language = match row.get(i_base) {
                "" => code.split('-').next().unwrap_or(&code).to_owned(),
                b => b.to_owned(),
            };
            let resource_class = match row.get(i_res) {
                "" if DEFAULT_HIGH_RESOURCE.contains(&base_language.as_str()) => ResourceClass::High,
                "" => ResourceClass::Low,
                raw => raw
                    .parse()
                    .map_err(|m: String| RegistryError::parse(row.line, m))?,
            };
            let mut pretrain_coverage = BTreeMap::new();
            for (idx, model) in &pretrain_cols {
                pretrain_coverage.insert(model.clone(), parse_flag(row.line, row.get(*idx))?);
            }
            records.push(LanguageRecord {
                name: match row.get(i_name) {
                    "" => code.clone(),
                    n => n.to_owned(),
                },
                code,
                base_language,
                script: row.get(i_script).to_owned(),
                family: row.get(i_family).to_owned(),
                subfamily: row.get(i_sub).to_owned(),
                resource_class,
                pretrain_coverage,
            });
        }
        Self::from_records(records)
    }

    pub fn with_script_relations(mut self, relations: ScriptRelationTable) -> Self {
        self.relations = relations;
        self
    }

    pub fn script_relations(&self) -> &ScriptRelationTable {
        &self.relations
    }

    pub fn records(&self) -> &[LanguageRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Resolves a treebank id (with or without a `UD_` prefix), a base language or a display
    /// name. Base-language matches pick the lexicographically smallest treebank code.
    pub fn lookup(&self, id: &str) -> Option<&LanguageRecord> {
        let id = id.trim();
        let id = id.strip_prefix("UD_").unwrap_or(id);
        if let Some(&i) = self.by_code.get(id) {
            return Some(&self.records[i]);
        }
        let smallest = |pred: &dyn Fn(&LanguageRecord) -> bool| {
            self.records
                .iter()
                .filter(|r| pred(r))
                .min_by(|a, b| a.code.cmp(&b.code))
        };
        smallest(&|r| r.code.eq_ignore_ascii_case(id))
            .or_else(|| smallest(&|r| r.base_language.eq_ignore_ascii_case(id)))
            .or_else(|| {
                let spaced = id.replace('_', " ");
                smallest(&|r| r.base_language.replace('_', " ").eq_ignore_ascii_case(&spaced))
            })
            .or_else(|| smallest(&|r| r.name.eq_ignore_ascii_case(id)))
    }

    pub fn get(&self, id: &str) -> Result<&LanguageRecord, RegistryError> {
        self.lookup(id)
            .ok_or_else(|| RegistryError::UnknownLanguage(id.to_owned()))
    }

    pub fn stats(&self) -> RegistryStats {
        let distinct = |f: fn(&LanguageRecord) -> &str| {
            self.records.iter().map(f).collect::<BTreeSet<_>>().len()
        };
        RegistryStats {
            script_count: distinct(|r| &r.script),
            family_count: distinct(|r| &r.family),
            subfamily_count: distinct(|r| &r.subfamily),
        }
    }

    pub fn script_relation(&self, lang_a: &str, lang_b: &str) -> Result<ScriptRelation, RegistryError> {
        let a = self.get(lang_a)?;
        let b = self.get(lang_b)?;
        Ok(self.relations.relation(&a.script, &b.script))
    }
}

/// Loads a registry file and the bundled script-relation table.
pub fn load_registry(path: &Path) -> Result<Registry, RegistryError> {
    let table = tsv::read_table_path(path).map_err(|e| RegistryError::from_tsv(e, Some(path)))?;
    Registry::from_table(&table)
}

pub fn registry_stats(registry: &Registry) -> RegistryStats {
    registry.stats()
}

pub fn script_relation(
    registry: &Registry,
    lang_a: &str,
    lang_b: &str,
) -> Result<ScriptRelation, RegistryError> {
    registry.script_relation(lang_a, lang_b)
}

pub fn lexical_similarity(matrix: &LexicalSimilarityMatrix, lang_a: &str, lang_b: &str) -> Option<f64> {
    matrix.get(lang_a, lang_b)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "code\tname\tbase_language\tscript\tfamily\tsubfamily\tresource_class\tpretrain:mBERT\n";

    #[test]
    fn bundled_registry_has_all_target_treebanks() {
        let reg = Registry::bundled();
        assert_eq!(reg.len(), 123);
        assert_eq!(
            reg.stats(),
            RegistryStats {
                script_count: 19,
                family_count: 13,
                subfamily_count: 28
            }
        );
    }

    #[test]
    fn empty_registry_with_header() {
        let reg = Registry::parse_str(HEADER).unwrap();
        assert!(reg.is_empty());
        assert_eq!(reg.stats().script_count, 0);
    }

    #[test]
    fn duplicate_code_is_rejected() {
        let text = format!(
            "{HEADER}Urdu-UDTB\tUrdu\tUrdu\tArabic\tIndo-European\tIndo-Aryan\tLow\tyes\n\
             Urdu-UDTB\tUrdu\tUrdu\tArabic\tIndo-European\tIndo-Aryan\tLow\tyes\n"
        );
        match Registry::parse_str(&text) {
            Err(RegistryError::DuplicateCode(code)) => assert_eq!(code, "Urdu-UDTB"),
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = format!("{HEADER}Urdu-UDTB\tUrdu\tUrdu\tArabic\tIndo-European\tIndo-Aryan\tMedium\tyes\n");
        match Registry::parse_str(&text) {
            Err(RegistryError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        let text = format!("{HEADER}Urdu-UDTB\tUrdu\n");
        assert!(matches!(
            Registry::parse_str(&text),
            Err(RegistryError::Parse { line: 2, .. })
        ));
        let text = format!("{HEADER}Urdu-UDTB\tUrdu\tUrdu\t\tIndo-European\tIndo-Aryan\tLow\tyes\n");
        assert!(matches!(
            Registry::parse_str(&text),
            Err(RegistryError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn single_language_stats() {
        let text = format!("{HEADER}Urdu-UDTB\tUrdu\tUrdu\tArabic\tIndo-European\tIndo-Aryan\t\tyes\n");
        let reg = Registry::parse_str(&text).unwrap();
        assert_eq!(
            reg.stats(),
            RegistryStats {
                script_count: 1,
                family_count: 1,
                subfamily_count: 1
            }
        );
        assert_eq!(reg.records()[0].resource_class, ResourceClass::Low);
    }

    #[test]
    fn resource_class_defaults_follow_source_languages() {
        let text = format!("{HEADER}Hindi-HDTB\t\t\tDevanagari\tIndo-European\tIndo-Aryan\t\tyes\n");
        let reg = Registry::parse_str(&text).unwrap();
        let hindi = reg.get("Hindi").unwrap();
        assert_eq!(hindi.resource_class, ResourceClass::High);
        assert_eq!(hindi.name, "Hindi-HDTB");
    }

    #[test]
    fn lookup_accepts_codes_base_languages_and_prefixes() {
        let reg = Registry::bundled();
        assert_eq!(reg.get("UD_Urdu-UDTB").unwrap().code, "Urdu-UDTB");
        assert_eq!(reg.get("urdu").unwrap().code, "Urdu-UDTB");
        // smallest code among the Arabic treebanks
        assert_eq!(reg.get("Arabic").unwrap().code, "Arabic-NYUAD");
        assert_eq!(reg.get("Ancient Greek").unwrap().base_language, "Ancient_Greek");
        assert!(matches!(reg.get("Klingon"), Err(RegistryError::UnknownLanguage(_))));
    }

    #[test]
    fn script_relations_from_arabic() {
        let reg = Registry::bundled();
        let rel = |b| reg.script_relation("Arabic", b).unwrap();
        assert_eq!(rel("Persian").relation, Relation::Same);
        assert_eq!(rel("Hebrew").relation, Relation::Close);
        assert_eq!(rel("Maltese").relation, Relation::Dissimilar);
        assert!(!rel("Maltese").defaulted);
        assert_eq!(rel("Urdu").relation, Relation::Same);
        let unlisted = reg.script_relation("Arabic", "Tamil").unwrap();
        assert_eq!(unlisted.relation, Relation::Dissimilar);
        assert!(unlisted.defaulted);
        assert!(reg.script_relation("Arabic", "Klingon").is_err());
    }

    #[test]
    fn relation_table_rejects_conflicts() {
        let mut t = ScriptRelationTable::default();
        t.insert("Arabic", "Hebrew", Relation::Close).unwrap();
        assert!(t.insert("Hebrew", "Arabic", Relation::Same).is_err());
        assert!(t.insert("Latin", "Latin", Relation::Close).is_err());
        assert_eq!(t.relation("Hebrew", "Arabic").relation, Relation::Close);
    }

    #[test]
    fn lexical_similarity_lookups() {
        let m = LexicalSimilarityMatrix::bundled();
        assert_eq!(lexical_similarity(&m, "English", "French"), Some(0.27));
        assert_eq!(lexical_similarity(&m, "French", "English"), Some(0.27));
        assert_eq!(lexical_similarity(&m, "English", "Russian"), Some(0.24));
        assert_eq!(lexical_similarity(&m, "English", "Italian"), None);
        assert_eq!(lexical_similarity(&m, "Coptic", "Coptic"), Some(1.0));
        assert_eq!(lexical_similarity(&m, "UD_French-GSD", "english"), Some(0.27));
    }

    #[test]
    fn lexical_similarity_validation() {
        let mut m = LexicalSimilarityMatrix::default();
        assert!(m.insert("a", "b", 1.2).is_err());
        assert!(m.insert("a", "a", 0.5).is_err());
        m.insert("a", "b", 0.5).unwrap();
        assert!(m.insert("b", "a", 0.4).is_err());
        let bad = "lang_a\tlang_b\tvalue\nEnglish\tFrench\tlots\n";
        assert!(matches!(
            LexicalSimilarityMatrix::parse_str(bad),
            Err(RegistryError::Parse { line: 2, .. })
        ));
    }
}
