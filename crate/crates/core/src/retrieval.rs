//! Image/article retrieval with entity-aware text inputs.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Article, FieldTag};
use crate::embed::{EmbedKind, EmbeddingProvider, ProviderError};
use crate::evalsuite::{recall_at_k, EvalError};
use crate::ner::{oracle_entities, tag_entities, EntityList, GazetteerTagger, Tagger};
use crate::serializer::{annotate, find_special_tokens, render_entity_list, SerializerError};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Serializer(#[from] SerializerError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("article {0} has no image")]
    MissingImage(String),
    #[error("invalid input: {0}")]
    Input(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RetrievalMode {
    #[serde(rename = "text-only")]
    TextOnly,
    #[serde(rename = "ne")]
    Ne,
    #[serde(rename = "ne-ea")]
    NeEa,
}

impl RetrievalMode {
    pub const ALL: [RetrievalMode; 3] = [RetrievalMode::TextOnly, RetrievalMode::Ne, RetrievalMode::NeEa];

    pub fn as_str(self) -> &'static str {
        match self {
            RetrievalMode::TextOnly => "text-only",
            RetrievalMode::Ne => "ne",
            RetrievalMode::NeEa => "ne-ea",
        }
    }
}

impl fmt::Display for RetrievalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RetrievalMode {
    type Err = RetrievalError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RetrievalMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| RetrievalError::Input(format!("unknown retrieval mode `{s}`")))
    }
}

/// Cuts `text` to at most `limit` characters, ending at a whitespace boundary
/// when there is one; never splits a special-token literal.
pub fn truncate_at_whitespace(text: &str, limit: usize) -> &str {
    let Some((cut, _)) = text.char_indices().nth(limit) else { return text };
    let head = &text[..cut];
    if text[cut..].starts_with(char::is_whitespace) {
        return head.trim_end();
    }
    if let Some(ws) = head.rfind(char::is_whitespace) {
        return head[..ws].trim_end();
    }
    // a single overlong word: cut before any special literal it contains
    let mut end = cut;
    for (s, e, _) in find_special_tokens(text) {
        if s < cut && e > cut {
            end = s;
        }
    }
    &text[..end]
}

/// Text handed to the embedding provider for an article.
///
/// `text-only`: title and body. `ne`: the rendered entity list, then title
/// and body. `ne-ea`: as `ne`, with mentions of the listed entities in title
/// and body followed by their category tokens.
pub fn build_text_input(
    article: &Article,
    mode: RetrievalMode,
    entities: &EntityList,
    limit: usize,
) -> Result<String, RetrievalError> {
    let tagger = GazetteerTagger::new(entities.pairs().into_iter().map(|(s, c)| (s, c)));
    let mut parts = Vec::new();
    if mode != RetrievalMode::TextOnly && !entities.is_empty() {
        parts.push(render_entity_list(entities));
    }
    for tag in [FieldTag::Title, FieldTag::Body] {
        let Some(text) = article.field(tag) else { continue };
        if mode == RetrievalMode::NeEa {
            parts.push(annotate(text, &tag_entities(text, tag, &tagger))?);
        } else {
            parts.push(text.to_string());
        }
    }
    Ok(truncate_at_whitespace(&parts.join(" "), limit).to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f32>,
    pub normalized: bool,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Embeds `items` in order; every vector must share one dimension.
pub fn embed_batch(
    items: &[String],
    kind: EmbedKind,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<EmbeddingVector>, RetrievalError> {
    if items.is_empty() {
        return Err(RetrievalError::Input("empty batch".into()));
    }
    let vectors = provider.embed(kind, items)?;
    if vectors.len() != items.len() {
        return Err(RetrievalError::Dimension(format!("{} items but {} vectors", items.len(), vectors.len())));
    }
    let dim = vectors[0].len();
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(RetrievalError::Dimension(format!("vector of dimension {} in a batch of {dim}", v.len())));
    }
    Ok(vectors
        .into_iter()
        .map(|values| {
            let norm = values.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
            EmbeddingVector { normalized: (norm - 1.0).abs() <= 1e-4, values }
        })
        .collect())
}

/// `sim[i][j] = <queries[i], targets[j]>`.
pub fn rank(queries: &[EmbeddingVector], targets: &[EmbeddingVector]) -> Result<Vec<Vec<f32>>, RetrievalError> {
    let dim = queries.first().or(targets.first()).map_or(0, EmbeddingVector::dim);
    if queries.iter().chain(targets).any(|v| v.dim() != dim) {
        return Err(RetrievalError::Dimension("queries and targets differ in dimension".into()));
    }
    Ok(queries
        .iter()
        .map(|q| {
            targets
                .iter()
                .map(|t| q.values.iter().zip(&t.values).map(|(a, b)| (*a as f64) * (*b as f64)).sum::<f64>() as f32)
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    ImageToArticle,
    ArticleToImage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalRecord {
    pub mode: RetrievalMode,
    pub direction: Direction,
    pub k: usize,
    pub recall: f64,
    pub n: usize,
    pub seed: u64,
}

/// Deterministic sample of up to `n` article indices.
pub fn sample_indices(total: usize, n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..total).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(n.min(total));
    idx
}

/// Recall@K in both directions over a seeded sample of `sample` articles,
/// pairing each article with its first image.
pub fn evaluate_retrieval(
    articles: &[Article],
    mode: RetrievalMode,
    provider: &dyn EmbeddingProvider,
    tagger: &dyn Tagger,
    ks: &[usize],
    sample: usize,
    seed: u64,
) -> Result<Vec<RetrievalRecord>, RetrievalError> {
    let picked: Vec<&Article> = sample_indices(articles.len(), sample, seed).into_iter().map(|i| &articles[i]).collect();
    if picked.is_empty() {
        return Err(RetrievalError::Input("no articles to evaluate".into()));
    }
    let mut images = Vec::with_capacity(picked.len());
    let mut texts = Vec::with_capacity(picked.len());
    for a in &picked {
        images.push(a.image_refs.first().cloned().ok_or_else(|| RetrievalError::MissingImage(a.id.clone()))?);
        let ents = if mode == RetrievalMode::TextOnly { EntityList::new() } else { oracle_entities(a, tagger) };
        texts.push(build_text_input(a, mode, &ents, provider.text_limit())?);
    }
    let img = embed_batch(&images, EmbedKind::Image, provider)?;
    let txt = embed_batch(&texts, EmbedKind::Text, provider)?;
    let i2a = rank(&img, &txt)?;
    let a2i = rank(&txt, &img)?;
    let n = picked.len();
    let mut out = Vec::with_capacity(2 * ks.len());
    for (direction, sim) in [(Direction::ImageToArticle, &i2a), (Direction::ArticleToImage, &a2i)] {
        for (k, recall) in recall_at_k(sim, ks)? {
            out.push(RetrievalRecord { mode, direction, k, recall, n, seed });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ner::EntityCategory;
    use crate::serializer::strip_annotations;

    fn article() -> Article {
        Article::new("a", "Ann Lee spoke in Varo. Ann Lee left.").with_field(FieldTag::Title, "Ann Lee visits")
    }

    #[test]
    fn modes() {
        let ents = EntityList::from_pairs([("Ann Lee", EntityCategory::Person)]);
        let a = article();
        let t = build_text_input(&a, RetrievalMode::TextOnly, &ents, 512).unwrap();
        assert_eq!(t, "Ann Lee visits Ann Lee spoke in Varo. Ann Lee left.");
        let ne = build_text_input(&a, RetrievalMode::Ne, &ents, 512).unwrap();
        assert!(ne.starts_with("Ann Lee <|PERSON|> Ann Lee visits"));
        let ea = build_text_input(&a, RetrievalMode::NeEa, &ents, 512).unwrap();
        assert_eq!(ea.matches("<|PERSON|>").count(), 4);
        assert_eq!(strip_annotations(&ea), strip_annotations(&ne));
    }

    #[test]
    fn truncation_respects_words_and_literals() {
        assert_eq!(truncate_at_whitespace("alpha beta gamma", 8), "alpha");
        assert_eq!(truncate_at_whitespace("alpha beta", 10), "alpha beta");
        assert_eq!(truncate_at_whitespace("alpha beta", 5), "alpha");
        assert_eq!(truncate_at_whitespace("ab<|PERSON|>", 6), "ab");
        let ents = EntityList::from_pairs([("Ann Lee", EntityCategory::Person)]);
        for limit in 1..60 {
            let s = build_text_input(&article(), RetrievalMode::NeEa, &ents, limit).unwrap();
            assert!(s.chars().count() <= limit);
            assert_eq!(s.matches('<').count(), s.matches("<|PERSON|>").count());
        }
    }

    #[test]
    fn rank_is_bilinear_and_checks_dims() {
        let v = |x: &[f32]| EmbeddingVector { values: x.to_vec(), normalized: true };
        let q = vec![v(&[1.0, 0.0]), v(&[0.0, 1.0])];
        let t = vec![v(&[1.0, 0.0]), v(&[0.0, -1.0])];
        assert_eq!(rank(&q, &t).unwrap(), vec![vec![1.0, 0.0], vec![0.0, -1.0]]);
        assert!(rank(&q, &[v(&[1.0])]).is_err());
    }
}
