//! Building serialized documents for an experimental configuration and
//! training/evaluating a model on them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Article, CanonicalOrder, FieldTag};
use crate::embed::EmbeddingProvider;
use crate::lm::data::fit_to_window;
use crate::lm::optim::AdamW;
use crate::lm::train::{train, TrainReport};
use crate::lm::{Checkpoint, LmError, Model, ModelConfig, TrainConfig};
use crate::ner::{article_spans, field_entities, oracle_entities, visual_ner, CandidateIndex, EntityList, NerError, Tagger};
use crate::serializer::{serialize, AnnotatedDocument, AnnotationScope, SerializerError, SpecialToken};
use crate::tokenizer::{encode, Vocab};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ner(#[from] NerError),
    #[error(transparent)]
    Serializer(#[from] SerializerError),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error("configuration: {0}")]
    Config(String),
}

/// Where the named-entity field comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeSource {
    /// No entity field.
    None,
    /// Entities of the whole article (user-provided entities).
    Oracle,
    /// Entities tagged in the caption.
    Caption,
    /// Top-k candidates retrieved from the article's first image.
    Clip,
}

impl FromStr for NeSource {
    type Err = PipelineError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(NeSource::None),
            "oracle" => Ok(NeSource::Oracle),
            "caption" => Ok(NeSource::Caption),
            "clip" => Ok(NeSource::Clip),
            other => Err(PipelineError::Config(format!("unknown NE source `{other}`"))),
        }
    }
}

impl fmt::Display for NeSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NeSource::None => "none",
            NeSource::Oracle => "oracle",
            NeSource::Caption => "caption",
            NeSource::Clip => "clip",
        })
    }
}

/// One serialization recipe: which fields, which entity source, whether
/// mentions get category tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocConfig {
    pub name: String,
    pub order: CanonicalOrder,
    pub ne_source: NeSource,
    /// Visual-NER list length (`Clip` only).
    pub k: Option<usize>,
    pub scope: AnnotationScope,
}

/// Names of the entity-field ablation ladder, weakest first.
pub const FIELD_ABLATIONS: &[&str] = &["text-only", "cap", "cap-ea", "capne", "clipne", "ne"];

impl DocConfig {
    /// Ablation presets over `base` (which should contain caption and
    /// named-entity):
    /// `text-only` drops caption and entities; `cap` adds the caption;
    /// `cap-ea` also annotates mentions; `capne`, `clipne` and `ne` add an
    /// entity field from the caption, the image (top `k`) and the article
    /// respectively, all with annotation.
    pub fn preset(name: &str, base: &CanonicalOrder, k: usize) -> Result<Self, PipelineError> {
        let no_ne = base.without(&[FieldTag::NamedEntity]);
        let (order, ne_source, k, scope) = match name {
            "text-only" => (base.without(&[FieldTag::NamedEntity, FieldTag::Caption]), NeSource::None, None, AnnotationScope::none()),
            "cap" => (no_ne, NeSource::None, None, AnnotationScope::none()),
            "cap-ea" => (no_ne, NeSource::None, None, AnnotationScope::narrative()),
            "capne" => (base.clone(), NeSource::Caption, None, AnnotationScope::narrative()),
            "clipne" => (base.clone(), NeSource::Clip, Some(k), AnnotationScope::narrative()),
            "ne" => (base.clone(), NeSource::Oracle, None, AnnotationScope::narrative()),
            other => return Err(PipelineError::Config(format!("unknown ablation config `{other}`"))),
        };
        Ok(DocConfig { name: name.to_string(), order, ne_source, k, scope })
    }

    /// Caption plus the top-`k` visual entities, annotated; `k = 0` leaves the
    /// entity field empty.
    pub fn clip_topk(base: &CanonicalOrder, k: usize) -> Self {
        DocConfig {
            name: format!("clipne-k{k}"),
            order: base.clone(),
            ne_source: NeSource::Clip,
            k: Some(k),
            scope: AnnotationScope::narrative(),
        }
    }

    pub fn with_order(&self, order: CanonicalOrder) -> Self {
        DocConfig { order, ..self.clone() }
    }
}

/// Candidate index (already embedded) and provider for visual NER.
pub struct ClipContext<'a> {
    pub index: &'a CandidateIndex,
    pub provider: &'a dyn EmbeddingProvider,
}

pub struct NeContext<'a> {
    pub tagger: &'a dyn Tagger,
    pub clip: Option<ClipContext<'a>>,
}

/// Entity list for `article` under `cfg`.
pub fn entity_list(article: &Article, cfg: &DocConfig, ctx: &NeContext) -> Result<EntityList, PipelineError> {
    Ok(match cfg.ne_source {
        NeSource::None => EntityList::new(),
        NeSource::Oracle => oracle_entities(article, ctx.tagger),
        NeSource::Caption => field_entities(article, FieldTag::Caption, ctx.tagger),
        NeSource::Clip => {
            let k = cfg.k.unwrap_or(10);
            if k == 0 {
                return Ok(EntityList::new());
            }
            let clip = ctx
                .clip
                .as_ref()
                .ok_or_else(|| PipelineError::Config("clip entity source needs an embedding provider".into()))?;
            let image = article
                .image_refs
                .first()
                .ok_or_else(|| PipelineError::Config(format!("article {} has no image", article.id)))?;
            visual_ner(image, clip.index, clip.provider, k)?
        }
    })
}

pub fn build_document(article: &Article, cfg: &DocConfig, ctx: &NeContext) -> Result<AnnotatedDocument, PipelineError> {
    let entities = entity_list(article, cfg, ctx)?;
    let spans = if cfg.scope.is_empty() { Vec::new() } else { article_spans(article, ctx.tagger) };
    let mut doc = serialize(article, &cfg.order, &entities, &spans, &cfg.scope)?;
    doc.k = cfg.k;
    Ok(doc)
}

pub fn build_documents(
    articles: &[Article],
    cfg: &DocConfig,
    ctx: &NeContext,
) -> Result<Vec<AnnotatedDocument>, PipelineError> {
    articles.iter().map(|a| build_document(a, cfg, ctx)).collect()
}

/// Token ids of a document as the model sees it: end-of-document marker
/// first, then the serialized stream, shortened to `window`.
pub fn document_ids(doc: &AnnotatedDocument, vocab: &Vocab, window: usize) -> Result<Vec<u32>, LmError> {
    let mut ids = vec![Vocab::special_id(SpecialToken::Eod)];
    ids.extend(encode(&doc.serialized, vocab).ids);
    fit_to_window(&ids, window)
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub checkpoint: Checkpoint,
    pub report: TrainReport,
}

/// Trains a fresh model on `docs`.
pub fn train_on_documents(
    docs: &[AnnotatedDocument],
    vocab: &Vocab,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<TrainedModel, PipelineError> {
    if model_cfg.vocab_size != vocab.len() {
        return Err(PipelineError::Config(format!(
            "model vocabulary {} differs from tokenizer size {}",
            model_cfg.vocab_size,
            vocab.len()
        )));
    }
    let window = train_cfg.seq_len.unwrap_or(model_cfg.context_length).min(model_cfg.context_length);
    let ids = docs.iter().map(|d| document_ids(d, vocab, window)).collect::<Result<Vec<_>, _>>()?;
    let mut model = Model::<f32>::init(model_cfg.clone())?;
    let mut opt = AdamW::new(model.params.len());
    let report = train(&mut model, &mut opt, ids, train_cfg, |_, _, _| Ok(()))?;
    let checkpoint = Checkpoint::new(&model, train_cfg.total_steps as u64, vocab.hash(), Some(opt));
    Ok(TrainedModel { checkpoint, report })
}
