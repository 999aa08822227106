//! Named entities: categories, gazetteer tagging, oracle entity lists,
//! embedding-similarity visual NER and entity recall.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Article, FieldTag};
use crate::embed::{check_vectors, dot, EmbedKind, EmbeddingProvider, ProviderError};

#[derive(Debug, Error)]
pub enum NerError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("contract error: {0}")]
    Contract(String),
    #[error("undefined input: {0}")]
    Undefined(String),
    #[error("unknown entity category `{0}`")]
    UnknownCategory(String),
}

macro_rules! categories {
    ($($variant:ident => $lit:literal),+ $(,)?) => {
        /// OntoNotes-style entity categories.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum EntityCategory {
            $(#[serde(rename = $lit)] $variant,)+
        }

        impl EntityCategory {
            pub const ALL: [EntityCategory; 18] = [$(EntityCategory::$variant,)+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $(EntityCategory::$variant => $lit,)+
                }
            }
        }
    };
}

categories! {
    Person => "PERSON",
    Org => "ORG",
    Gpe => "GPE",
    Loc => "LOC",
    Date => "DATE",
    Time => "TIME",
    Money => "MONEY",
    Percent => "PERCENT",
    Quantity => "QUANTITY",
    Ordinal => "ORDINAL",
    Cardinal => "CARDINAL",
    Norp => "NORP",
    Fac => "FAC",
    Product => "PRODUCT",
    Event => "EVENT",
    WorkOfArt => "WORK_OF_ART",
    Law => "LAW",
    Language => "LANGUAGE",
}

impl fmt::Display for EntityCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityCategory {
    type Err = NerError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let u = s.trim().to_ascii_uppercase();
        EntityCategory::ALL.into_iter().find(|c| c.as_str() == u).ok_or_else(|| NerError::UnknownCategory(s.into()))
    }
}

/// A mention inside one field's text; offsets are bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySpan {
    pub field: FieldTag,
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub category: EntityCategory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityEntry {
    pub surface: String,
    pub category: EntityCategory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f32>,
}

impl EntityEntry {
    pub fn new(surface: impl Into<String>, category: EntityCategory) -> Self {
        EntityEntry { surface: surface.into(), category, score: None }
    }

    fn key(&self) -> (String, EntityCategory) {
        dedup_key(&self.surface, self.category)
    }
}

fn dedup_key(surface: &str, category: EntityCategory) -> (String, EntityCategory) {
    (surface.to_lowercase(), category)
}

/// Ordered, deduplicated list of (surface, category).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityList(Vec<EntityEntry>);

impl EntityList {
    pub fn new() -> Self {
        EntityList(Vec::new())
    }

    /// Keeps the first occurrence of every (case-folded surface, category) key.
    pub fn from_entries(entries: impl IntoIterator<Item = EntityEntry>) -> Self {
        let mut l = EntityList::new();
        for e in entries {
            l.push(e);
        }
        l
    }

    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, EntityCategory)>) -> Self {
        Self::from_entries(pairs.into_iter().map(|(s, c)| EntityEntry::new(s, c)))
    }

    /// Returns false if the key was already present.
    pub fn push(&mut self, e: EntityEntry) -> bool {
        let k = e.key();
        if self.0.iter().any(|x| x.key() == k) {
            return false;
        }
        self.0.push(e);
        true
    }

    pub fn entries(&self) -> &[EntityEntry] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn truncated(&self, k: usize) -> EntityList {
        EntityList(self.0.iter().take(k).cloned().collect())
    }

    pub fn pairs(&self) -> Vec<(String, EntityCategory)> {
        self.0.iter().map(|e| (e.surface.clone(), e.category)).collect()
    }

    fn keys(&self) -> HashSet<(String, EntityCategory)> {
        self.0.iter().map(EntityEntry::key).collect()
    }
}

/// Text entity recognizer.
pub trait Tagger: Send + Sync {
    /// Non-overlapping `(start, end, category)` byte ranges, left to right.
    fn tag(&self, text: &str) -> Vec<(usize, usize, EntityCategory)>;
}

#[derive(Debug, Default, Clone)]
struct TrieNode {
    children: BTreeMap<u8, usize>,
    terminal: Option<EntityCategory>,
}

/// Longest-match gazetteer tagger. Matches must start and end on word
/// boundaries; at each position the longest entry wins, scanning left to right.
#[derive(Debug, Clone)]
pub struct GazetteerTagger {
    nodes: Vec<TrieNode>,
    len: usize,
}

impl GazetteerTagger {
    pub fn new<S: AsRef<str>>(entries: impl IntoIterator<Item = (S, EntityCategory)>) -> Self {
        let mut t = GazetteerTagger { nodes: vec![TrieNode::default()], len: 0 };
        for (s, c) in entries {
            t.insert(s.as_ref(), c);
        }
        t
    }

    /// First insertion of a surface keeps its category.
    pub fn insert(&mut self, surface: &str, category: EntityCategory) {
        if surface.is_empty() {
            return;
        }
        let mut node = 0;
        for &b in surface.as_bytes() {
            node = match self.nodes[node].children.get(&b) {
                Some(&n) => n,
                None => {
                    self.nodes.push(TrieNode::default());
                    let n = self.nodes.len() - 1;
                    self.nodes[node].children.insert(b, n);
                    n
                }
            };
        }
        if self.nodes[node].terminal.is_none() {
            self.nodes[node].terminal = Some(category);
            self.len += 1;
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn boundary_before(text: &str, i: usize) -> bool {
    i == 0 || !text[..i].chars().next_back().map(is_word_char).unwrap_or(false)
}

fn boundary_after(text: &str, i: usize) -> bool {
    i == text.len() || !text[i..].chars().next().map(is_word_char).unwrap_or(false)
}

impl Tagger for GazetteerTagger {
    fn tag(&self, text: &str) -> Vec<(usize, usize, EntityCategory)> {
        let bytes = text.as_bytes();
        let mut out = Vec::new();
        let mut i = 0;
        while i < bytes.len() {
            if !text.is_char_boundary(i) || !boundary_before(text, i) {
                i += 1;
                continue;
            }
            let mut node = 0;
            let mut best = None;
            let mut j = i;
            while j < bytes.len() {
                match self.nodes[node].children.get(&bytes[j]) {
                    Some(&n) => node = n,
                    None => break,
                }
                j += 1;
                if let Some(c) = self.nodes[node].terminal {
                    if text.is_char_boundary(j) && boundary_after(text, j) {
                        best = Some((j, c));
                    }
                }
            }
            match best {
                Some((end, c)) => {
                    out.push((i, end, c));
                    i = end;
                }
                None => i += 1,
            }
        }
        out
    }
}

/// Tags one field's text.
pub fn tag_entities(text: &str, field: FieldTag, tagger: &dyn Tagger) -> Vec<EntitySpan> {
    tagger
        .tag(text)
        .into_iter()
        .map(|(start, end, category)| EntitySpan { field, start, end, surface: text[start..end].to_string(), category })
        .collect()
}

/// Mentions in every populated text field, in field order. Entities supplied
/// with the article take precedence over the tagger.
pub fn article_spans(article: &Article, tagger: &dyn Tagger) -> Vec<EntitySpan> {
    if let Some(supplied) = &article.oracle_entities {
        let mut spans: Vec<EntitySpan> = supplied
            .iter()
            .map(|e| EntitySpan {
                field: e.field,
                start: e.start,
                end: e.end,
                surface: e.surface.clone(),
                category: e.category,
            })
            .collect();
        spans.sort_by_key(|s| (s.field, s.start));
        return spans;
    }
    article.fields.iter().flat_map(|(tag, text)| tag_entities(text, *tag, tagger)).collect()
}

/// The entity list of the article itself (user-provided entities simulation).
pub fn oracle_entities(article: &Article, tagger: &dyn Tagger) -> EntityList {
    if let Some(supplied) = &article.oracle_entities {
        return EntityList::from_entries(supplied.iter().map(|e| EntityEntry::new(e.surface.clone(), e.category)));
    }
    EntityList::from_entries(article_spans(article, tagger).into_iter().map(|s| EntityEntry::new(s.surface, s.category)))
}

/// Entities mentioned in one field only (e.g. caption-derived entities).
pub fn field_entities(article: &Article, field: FieldTag, tagger: &dyn Tagger) -> EntityList {
    EntityList::from_entries(
        article_spans(article, tagger)
            .into_iter()
            .filter(|s| s.field == field)
            .map(|s| EntityEntry::new(s.surface, s.category)),
    )
}

/// Corpus-wide candidate list for visual NER.
#[derive(Debug, Clone, Default)]
pub struct CandidateIndex {
    entries: Vec<(String, EntityCategory)>,
    embeddings: Option<(usize, Vec<Vec<f32>>)>,
}

impl CandidateIndex {
    /// Sorted by surface, then category; case-folded duplicates collapse to the first.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, EntityCategory)>) -> Self {
        let mut v: Vec<(String, EntityCategory)> = pairs.into_iter().collect();
        v.sort();
        let mut seen = HashSet::new();
        v.retain(|(s, c)| seen.insert(dedup_key(s, *c)));
        CandidateIndex { entries: v, embeddings: None }
    }

    pub fn entries(&self) -> &[(String, EntityCategory)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn embedding_dim(&self) -> Option<usize> {
        self.embeddings.as_ref().map(|e| e.0)
    }

    /// Precomputes candidate text embeddings (bare surface strings).
    pub fn embed_with(&mut self, provider: &dyn EmbeddingProvider) -> Result<(), NerError> {
        let items: Vec<String> = self.entries.iter().map(|e| e.0.clone()).collect();
        let vectors = if items.is_empty() { Vec::new() } else { provider.embed(EmbedKind::Text, &items)? };
        check_vectors(provider.dim(), items.len(), &vectors)?;
        self.embeddings = Some((provider.dim(), vectors));
        Ok(())
    }
}

pub fn build_candidate_index(corpus: &[Article], tagger: &dyn Tagger) -> CandidateIndex {
    CandidateIndex::from_pairs(corpus.iter().flat_map(|a| oracle_entities(a, tagger).pairs()))
}

/// Top-`k` candidates for an image by cosine similarity, best first.
pub fn visual_ner(
    image_ref: &str,
    index: &CandidateIndex,
    provider: &dyn EmbeddingProvider,
    k: usize,
) -> Result<EntityList, NerError> {
    visual_ner_restricted(image_ref, index, provider, k, None)
}

/// [`visual_ner`] limited to candidates whose keys appear in `allowed`.
pub fn visual_ner_restricted(
    image_ref: &str,
    index: &CandidateIndex,
    provider: &dyn EmbeddingProvider,
    k: usize,
    allowed: Option<&EntityList>,
) -> Result<EntityList, NerError> {
    if k == 0 {
        return Err(NerError::Contract("k must be at least 1".into()));
    }
    if index.is_empty() {
        return Err(NerError::Contract("candidate index is empty".into()));
    }
    let owned;
    let cand_vecs: &[Vec<f32>] = match &index.embeddings {
        Some((d, v)) => {
            if *d != provider.dim() {
                return Err(NerError::Contract(format!(
                    "index embedded at dimension {d}, provider dimension {}",
                    provider.dim()
                )));
            }
            v
        }
        None => {
            let mut tmp = index.clone();
            tmp.embed_with(provider)?;
            owned = tmp.embeddings.unwrap().1;
            &owned
        }
    };
    let img = provider.embed(EmbedKind::Image, &[image_ref.to_string()])?;
    check_vectors(provider.dim(), 1, &img)?;
    let allowed_keys = allowed.map(EntityList::keys);
    let mut scored: Vec<(usize, f32)> = cand_vecs
        .iter()
        .enumerate()
        .filter(|(i, _)| {
            let (s, c) = &index.entries[*i];
            allowed_keys.as_ref().map(|a| a.contains(&dedup_key(s, *c))).unwrap_or(true)
        })
        .map(|(i, v)| (i, dot(&img[0], v)))
        .collect();
    // stable: equal scores keep index order
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(EntityList::from_entries(scored.into_iter().take(k).map(|(i, score)| {
        let (s, c) = &index.entries[i];
        EntityEntry { surface: s.clone(), category: *c, score: Some(score) }
    })))
}

/// Fraction of oracle entities present in the prediction.
pub fn ner_recall(predicted: &EntityList, oracle: &EntityList) -> Result<f64, NerError> {
    if oracle.is_empty() {
        return Err(NerError::Undefined("oracle entity list is empty".into()));
    }
    let pred = predicted.keys();
    let gold = oracle.keys();
    Ok(gold.intersection(&pred).count() as f64 / gold.len() as f64)
}

/// Builds a tagger from `(surface, category)` pairs read from a gazetteer file
/// (one `surface<TAB>CATEGORY` per line).
pub fn parse_gazetteer(text: &str) -> Result<Vec<(String, EntityCategory)>, NerError> {
    let mut out = Vec::new();
    let mut seen = HashMap::new();
    for line in text.lines() {
        let line = line.trim_end();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (s, c) = line
            .rsplit_once('\t')
            .ok_or_else(|| NerError::Contract(format!("gazetteer line without a tab: `{line}`")))?;
        let cat: EntityCategory = c.parse()?;
        if seen.insert(s.to_string(), cat).is_none() {
            out.push((s.to_string(), cat));
        }
    }
    Ok(out)
}
