//! Structured articles: data model, JSONL ingestion, canonical field orders.

mod synthetic;

pub use synthetic::{
    default_gazetteer, make_synthetic_corpus, make_synthetic_corpus_with_log, SyntheticCorpus,
    SyntheticDesign, SyntheticRecord,
};

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ner::EntityCategory;
use crate::serializer::contains_special_literal;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed JSON: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {message}")]
    Validation { line: usize, message: String },
    #[error("unknown canonical order preset `{0}`")]
    UnknownPreset(String),
    #[error("unknown field tag `{0}`")]
    UnknownField(String),
    #[error("invalid canonical order: {0}")]
    InvalidOrder(String),
    #[error("invalid synthetic corpus request: {0}")]
    Synthetic(String),
    #[error("invalid split: {0}")]
    Split(String),
}

/// One typed segment of an article.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldTag {
    Domain,
    Date,
    Topic,
    NamedEntity,
    Title,
    Caption,
    Summary,
    Body,
}

impl FieldTag {
    pub const ALL: [FieldTag; 8] = [
        FieldTag::Domain,
        FieldTag::Date,
        FieldTag::Topic,
        FieldTag::NamedEntity,
        FieldTag::Title,
        FieldTag::Caption,
        FieldTag::Summary,
        FieldTag::Body,
    ];

    /// Name used in configuration and CLI flags.
    pub fn as_str(self) -> &'static str {
        match self {
            FieldTag::Domain => "domain",
            FieldTag::Date => "date",
            FieldTag::Topic => "topic",
            FieldTag::NamedEntity => "named-entity",
            FieldTag::Title => "title",
            FieldTag::Caption => "caption",
            FieldTag::Summary => "summary",
            FieldTag::Body => "body",
        }
    }

    /// Name inside boundary tokens; the entity list is spelled `entity`.
    pub fn token_name(self) -> &'static str {
        match self {
            FieldTag::NamedEntity => "entity",
            other => other.as_str(),
        }
    }

    /// Metadata strings that are never annotated with category tokens.
    pub fn is_metadata(self) -> bool {
        matches!(self, FieldTag::Domain | FieldTag::Date | FieldTag::Topic)
    }

    /// Fields carried as free text on an [`Article`] (everything but the entity list).
    pub fn is_article_text(self) -> bool {
        self != FieldTag::NamedEntity
    }
}

impl fmt::Display for FieldTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FieldTag {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        FieldTag::ALL
            .into_iter()
            .find(|f| f.as_str() == t || f.token_name() == t || (t == "named_entity" && *f == FieldTag::NamedEntity))
            .ok_or_else(|| CorpusError::UnknownField(s.to_string()))
    }
}

/// An entity annotation supplied by the corpus file itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuppliedEntity {
    pub surface: String,
    pub category: EntityCategory,
    pub field: FieldTag,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Article {
    pub id: String,
    /// Text per field; never contains [`FieldTag::NamedEntity`].
    pub fields: BTreeMap<FieldTag, String>,
    pub image_refs: Vec<String>,
    pub oracle_entities: Option<Vec<SuppliedEntity>>,
}

impl Article {
    pub fn new(id: impl Into<String>, body: impl Into<String>) -> Self {
        let mut fields = BTreeMap::new();
        fields.insert(FieldTag::Body, body.into());
        Article { id: id.into(), fields, image_refs: Vec::new(), oracle_entities: None }
    }

    pub fn with_field(mut self, tag: FieldTag, text: impl Into<String>) -> Self {
        self.set_field(tag, text);
        self
    }

    /// Empty text removes the field.
    pub fn set_field(&mut self, tag: FieldTag, text: impl Into<String>) {
        let text = text.into();
        if text.is_empty() {
            self.fields.remove(&tag);
        } else {
            self.fields.insert(tag, text);
        }
    }

    pub fn field(&self, tag: FieldTag) -> Option<&str> {
        self.fields.get(&tag).map(String::as_str)
    }

    pub fn body(&self) -> &str {
        self.field(FieldTag::Body).unwrap_or("")
    }

    pub fn populated_fields(&self) -> usize {
        self.fields.len()
    }

    /// Checks the per-article invariants.
    pub fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.fields.contains_key(&FieldTag::NamedEntity) {
            return Err("named-entity is derived and cannot be supplied as text".into());
        }
        match self.fields.get(&FieldTag::Body) {
            Some(b) if !b.is_empty() => {}
            _ => return Err(format!("article `{}` has no body", self.id)),
        }
        for (tag, text) in &self.fields {
            if contains_special_literal(text) {
                return Err(format!("field `{tag}` contains a reserved token literal"));
            }
        }
        if let Some(ents) = &self.oracle_entities {
            for e in ents {
                let text = self
                    .field(e.field)
                    .ok_or_else(|| format!("oracle entity `{}` refers to absent field `{}`", e.surface, e.field))?;
                if e.start >= e.end || e.end > text.len() {
                    return Err(format!("oracle entity `{}` has out-of-range offsets", e.surface));
                }
                if text.get(e.start..e.end) != Some(e.surface.as_str()) {
                    return Err(format!("oracle entity `{}` does not match its offsets", e.surface));
                }
            }
        }
        Ok(())
    }
}

/// On-disk JSONL record.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArticleRecord {
    id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    domain: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    date: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    topic: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    caption: Option<CaptionValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    summary: Option<String>,
    body: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    image_refs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    oracle_entities: Option<Vec<SuppliedEntity>>,
}

/// A caption may arrive as one string or as a list joined with "; ".
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum CaptionValue {
    One(String),
    Many(Vec<String>),
}

impl CaptionValue {
    fn into_text(self) -> String {
        match self {
            CaptionValue::One(s) => s,
            CaptionValue::Many(v) => v.join("; "),
        }
    }
}

impl ArticleRecord {
    fn into_article(self) -> Result<Article, String> {
        let id = self.id.ok_or("missing required key `id`")?;
        let body = self.body.ok_or_else(|| format!("article `{id}` is missing required key `body`"))?;
        let mut a = Article::new(id, body);
        let opt = [
            (FieldTag::Domain, self.domain),
            (FieldTag::Date, self.date),
            (FieldTag::Topic, self.topic),
            (FieldTag::Title, self.title),
            (FieldTag::Caption, self.caption.map(CaptionValue::into_text)),
            (FieldTag::Summary, self.summary),
        ];
        for (tag, text) in opt {
            if let Some(t) = text {
                a.set_field(tag, t);
            }
        }
        a.image_refs = self.image_refs;
        a.oracle_entities = self.oracle_entities;
        a.validate()?;
        Ok(a)
    }

    fn from_article(a: &Article) -> Self {
        let get = |t| a.field(t).map(str::to_string);
        ArticleRecord {
            id: Some(a.id.clone()),
            domain: get(FieldTag::Domain),
            date: get(FieldTag::Date),
            topic: get(FieldTag::Topic),
            title: get(FieldTag::Title),
            caption: get(FieldTag::Caption).map(CaptionValue::One),
            summary: get(FieldTag::Summary),
            body: get(FieldTag::Body),
            image_refs: a.image_refs.clone(),
            oracle_entities: a.oracle_entities.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoadMode {
    /// First bad line aborts the load.
    #[default]
    Strict,
    /// Bad lines are skipped and reported.
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reject {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct LoadedCorpus {
    pub articles: Vec<Article>,
    pub rejects: Vec<Reject>,
}

/// Loads a JSONL corpus in strict mode.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Article>, CorpusError> {
    Ok(load_corpus_with(path, LoadMode::Strict)?.articles)
}

pub fn load_corpus_with(path: impl AsRef<Path>, mode: LoadMode) -> Result<LoadedCorpus, CorpusError> {
    let file = File::open(path)?;
    read_corpus(BufReader::new(file), mode)
}

pub fn read_corpus<R: BufRead>(reader: R, mode: LoadMode) -> Result<LoadedCorpus, CorpusError> {
    let mut out = LoadedCorpus::default();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<ArticleRecord>(&line)
            .map_err(|e| CorpusError::Parse { line: line_no, message: e.to_string() })
            .and_then(|rec| {
                rec.into_article().map_err(|m| CorpusError::Validation { line: line_no, message: m })
            })
            .and_then(|a| {
                if seen.contains(&a.id) {
                    Err(CorpusError::Validation { line: line_no, message: format!("duplicate id `{}`", a.id) })
                } else {
                    Ok(a)
                }
            });
        match parsed {
            Ok(a) => {
                seen.insert(a.id.clone());
                out.articles.push(a);
            }
            Err(e) if mode == LoadMode::Lenient => out.rejects.push(Reject { line: line_no, reason: e.to_string() }),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

pub fn write_corpus(path: impl AsRef<Path>, articles: &[Article]) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_corpus_to(&mut w, articles)?;
    w.flush()?;
    Ok(())
}

pub fn write_corpus_to<W: Write>(w: &mut W, articles: &[Article]) -> Result<(), CorpusError> {
    for a in articles {
        let line = serde_json::to_string(&ArticleRecord::from_article(a))
            .map_err(|e| CorpusError::Parse { line: 0, message: e.to_string() })?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Ordered field list used for serialization; body is always last.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<FieldTag>", into = "Vec<FieldTag>")]
pub struct CanonicalOrder(Vec<FieldTag>);

impl CanonicalOrder {
    pub fn new(tags: Vec<FieldTag>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for t in &tags {
            if !seen.insert(*t) {
                return Err(CorpusError::InvalidOrder(format!("duplicate field `{t}`")));
            }
        }
        match tags.last() {
            Some(FieldTag::Body) => Ok(CanonicalOrder(tags)),
            _ => Err(CorpusError::InvalidOrder("body must be the final field".into())),
        }
    }

    pub fn fields(&self) -> &[FieldTag] {
        &self.0
    }

    pub fn contains(&self, tag: FieldTag) -> bool {
        self.0.contains(&tag)
    }

    /// Copy without the given fields (body is never removed).
    pub fn without(&self, drop: &[FieldTag]) -> CanonicalOrder {
        CanonicalOrder(self.0.iter().copied().filter(|t| *t == FieldTag::Body || !drop.contains(t)).collect())
    }

    /// Same field set, possibly different sequence.
    pub fn is_permutation_of(&self, other: &CanonicalOrder) -> bool {
        let mut a = self.0.clone();
        let mut b = other.0.clone();
        a.sort();
        b.sort();
        a == b
    }

    /// Parses a comma-separated list, e.g. `domain,date,title,body`.
    pub fn parse_list(s: &str) -> Result<Self, CorpusError> {
        let tags = s.split(',').filter(|p| !p.trim().is_empty()).map(FieldTag::from_str).collect::<Result<Vec<_>, _>>()?;
        CanonicalOrder::new(tags)
    }
}

impl TryFrom<Vec<FieldTag>> for CanonicalOrder {
    type Error = CorpusError;
    fn try_from(v: Vec<FieldTag>) -> Result<Self, Self::Error> {
        CanonicalOrder::new(v)
    }
}

impl From<CanonicalOrder> for Vec<FieldTag> {
    fn from(o: CanonicalOrder) -> Self {
        o.0
    }
}

impl fmt::Display for CanonicalOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.0.iter().map(|t| t.as_str()).collect();
        f.write_str(&names.join(","))
    }
}

/// Named preset (`goodnews`, `visualnews`) or an explicit comma-separated list.
pub fn canonical_order(preset: &str) -> Result<CanonicalOrder, CorpusError> {
    use FieldTag::*;
    match preset.trim().to_ascii_lowercase().as_str() {
        "goodnews" => CanonicalOrder::new(vec![Domain, Date, NamedEntity, Title, Caption, Summary, Body]),
        "visualnews" => CanonicalOrder::new(vec![Domain, Date, Topic, NamedEntity, Title, Caption, Body]),
        s if s.contains(',') => CanonicalOrder::parse_list(s),
        _ => Err(CorpusError::UnknownPreset(preset.to_string())),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

impl CorpusSplit {
    /// Deterministic split by position: the first `n_train` ids train, the next
    /// `n_validation` validate, the rest test.
    pub fn by_counts(articles: &[Article], n_train: usize, n_validation: usize) -> Result<Self, CorpusError> {
        if n_train + n_validation > articles.len() {
            return Err(CorpusError::Split(format!(
                "requested {} + {} articles from a corpus of {}",
                n_train,
                n_validation,
                articles.len()
            )));
        }
        let ids: Vec<String> = articles.iter().map(|a| a.id.clone()).collect();
        Ok(CorpusSplit {
            train: ids[..n_train].to_vec(),
            validation: ids[n_train..n_train + n_validation].to_vec(),
            test: ids[n_train + n_validation..].to_vec(),
        })
    }

    pub fn validate(&self, articles: &[Article]) -> Result<(), CorpusError> {
        let mut seen = HashSet::new();
        for id in self.train.iter().chain(&self.validation).chain(&self.test) {
            if !seen.insert(id.as_str()) {
                return Err(CorpusError::Split(format!("id `{id}` appears in more than one split")));
            }
        }
        let all: HashSet<&str> = articles.iter().map(|a| a.id.as_str()).collect();
        if seen != all {
            return Err(CorpusError::Split("split does not cover the corpus exactly".into()));
        }
        Ok(())
    }

    pub fn select<'a>(ids: &[String], articles: &'a [Article]) -> Vec<&'a Article> {
        let index: BTreeMap<&str, &Article> = articles.iter().map(|a| (a.id.as_str(), a)).collect();
        ids.iter().filter_map(|id| index.get(id.as_str()).copied()).collect()
    }
}
