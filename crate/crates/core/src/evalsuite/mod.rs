//! Perplexity, ablation harnesses and Recall@K.

pub mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{Article, CanonicalOrder, FieldTag};
use crate::lm::data::{fit_to_window, pack_indexed, Segment};
use crate::lm::model::Activations;
use crate::lm::{Checkpoint, LmError, Model, ModelConfig, TrainConfig};
use crate::pipeline::{build_documents, train_on_documents, DocConfig, NeContext, PipelineError};
use crate::serializer::{AnnotatedDocument, SpecialToken};
use crate::tokenizer::{encode, Vocab};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("checkpoint was trained with vocabulary {checkpoint} but the tokenizer is {tokenizer}")]
    VocabMismatch { checkpoint: String, tokenizer: String },
    #[error("evaluation mask selects no tokens")]
    EmptyMask,
    #[error("order {0} is not a permutation of the training order")]
    NotPermutation(String),
    #[error("k = {k} exceeds the {targets} available targets")]
    KTooLarge { k: usize, targets: usize },
    #[error("invalid input: {0}")]
    Input(String),
}

/// Which target tokens count toward perplexity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskPolicy {
    /// Body tokens only, excluding category and boundary tokens and a bare
    /// space directly before a special token.
    #[default]
    Body,
    /// Every next-token prediction inside the document.
    All,
}

impl FromStr for MaskPolicy {
    type Err = EvalError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "body" => Ok(MaskPolicy::Body),
            "all" => Ok(MaskPolicy::All),
            other => Err(EvalError::Input(format!("unknown mask policy `{other}`"))),
        }
    }
}

impl fmt::Display for MaskPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaskPolicy::Body => "body",
            MaskPolicy::All => "all",
        })
    }
}

/// For each token of `ids`, whether it is scored as a prediction target.
/// The first token is never a target.
pub fn target_mask(ids: &[u32], policy: MaskPolicy) -> Vec<bool> {
    let start_body = Vocab::special_id(SpecialToken::FieldStart(FieldTag::Body));
    let end_body = Vocab::special_id(SpecialToken::FieldEnd(FieldTag::Body));
    let space = Vocab::space_id();
    let mut in_body = false;
    let mut out = Vec::with_capacity(ids.len());
    for (i, &id) in ids.iter().enumerate() {
        if id == start_body {
            in_body = true;
        } else if id == end_body {
            in_body = false;
        }
        let keep = match policy {
            MaskPolicy::All => i > 0,
            MaskPolicy::Body => {
                let next_special = ids.get(i + 1).is_some_and(|&n| Vocab::is_special(n));
                i > 0 && in_body && !Vocab::is_special(id) && !(id == space && next_special)
            }
        };
        out.push(keep);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocPpl {
    pub id: String,
    pub n_tokens: usize,
    pub nll: f64,
    /// `None` when the document has no scored tokens.
    pub ppl: Option<f64>,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PPLReport {
    pub docs: Vec<DocPpl>,
    pub n_tokens: usize,
    pub total_nll: f64,
    pub mean_nll: f64,
    /// `exp(total_nll / n_tokens)`: token-weighted over all documents.
    pub ppl: f64,
    pub policy: MaskPolicy,
    pub fingerprint: String,
}

/// Perplexity of a checkpoint; refuses a tokenizer it was not trained with.
pub fn perplexity(
    ckpt: &Checkpoint,
    vocab: &Vocab,
    docs: &[AnnotatedDocument],
    policy: MaskPolicy,
) -> Result<PPLReport, EvalError> {
    let hash = vocab.hash();
    if ckpt.vocab_hash != hash {
        return Err(EvalError::VocabMismatch { checkpoint: ckpt.vocab_hash.clone(), tokenizer: hash });
    }
    let model = ckpt.model()?;
    perplexity_model(&model, vocab, docs, policy, 4)
}

/// Perplexity of `model`, packing documents `rows` rows per forward pass.
pub fn perplexity_model(
    model: &Model<f32>,
    vocab: &Vocab,
    docs: &[AnnotatedDocument],
    policy: MaskPolicy,
    rows: usize,
) -> Result<PPLReport, EvalError> {
    if model.config.vocab_size != vocab.len() {
        return Err(EvalError::VocabMismatch {
            checkpoint: format!("{} entries", model.config.vocab_size),
            tokenizer: format!("{} entries", vocab.len()),
        });
    }
    let window = model.config.context_length;
    let mut segments = Vec::with_capacity(docs.len());
    let mut truncated = Vec::with_capacity(docs.len());
    for d in docs {
        let mut ids = vec![Vocab::special_id(SpecialToken::Eod)];
        ids.extend(encode(&d.serialized, vocab).ids);
        let fitted = fit_to_window(&ids, window)?;
        truncated.push(fitted.len() < ids.len());
        let tmask = target_mask(&fitted, policy);
        // position i predicts token i + 1
        let mask = (0..fitted.len()).map(|i| tmask.get(i + 1).copied().unwrap_or(false)).collect();
        segments.push(Segment { ids: fitted, mask });
    }
    let refs: Vec<&Segment> = segments.iter().collect();
    let (batches, placements) = pack_indexed(&refs, window, rows)?;
    let mut per_doc = vec![(0usize, 0f64); docs.len()];
    let mut acts = Activations::default();
    let mut by_batch: Vec<Vec<usize>> = vec![Vec::new(); batches.len()];
    for (pi, p) in placements.iter().enumerate() {
        by_batch[p.batch].push(pi);
    }
    for (bi, batch) in batches.iter().enumerate() {
        model.forward(batch, &mut acts, None)?;
        for &pi in &by_batch[bi] {
            let p = placements[pi];
            let seg = &segments[p.segment];
            for i in 0..seg.len() {
                if seg.mask[i] {
                    per_doc[p.segment].0 += 1;
                    per_doc[p.segment].1 -= acts.target_logp[p.offset + i];
                }
            }
        }
    }
    let n_tokens: usize = per_doc.iter().map(|d| d.0).sum();
    if n_tokens == 0 {
        return Err(EvalError::EmptyMask);
    }
    let total_nll: f64 = per_doc.iter().map(|d| d.1).sum();
    let mean_nll = total_nll / n_tokens as f64;
    let docs_out = docs
        .iter()
        .zip(&per_doc)
        .zip(&truncated)
        .map(|((d, &(n, nll)), &tr)| DocPpl {
            id: d.id.clone(),
            n_tokens: n,
            nll,
            ppl: (n > 0).then(|| (nll / n as f64).exp()),
            truncated: tr,
        })
        .collect();
    Ok(PPLReport {
        docs: docs_out,
        n_tokens,
        total_nll,
        mean_nll,
        ppl: mean_nll.exp(),
        policy,
        fingerprint: fingerprint(&model.config, vocab, docs, policy),
    })
}

fn fingerprint(cfg: &ModelConfig, vocab: &Vocab, docs: &[AnnotatedDocument], policy: MaskPolicy) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(cfg).unwrap_or_default());
    h.update(vocab.hash().as_bytes());
    h.update(policy.to_string().as_bytes());
    for d in docs {
        h.update(d.id.as_bytes());
        h.update([0]);
        h.update(d.serialized.as_bytes());
        h.update([0]);
    }
    hex::encode(&h.finalize()[..8])
}

/// One row of an ablation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub config: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<String>,
    pub ppl: f64,
    pub n_tokens: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_train_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn get(&self, config: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.config == config)
    }
}

/// Everything needed to train and score one configuration.
pub struct Experiment<'a> {
    pub train: &'a [Article],
    pub eval: &'a [Article],
    pub ne: NeContext<'a>,
    pub vocab: &'a Vocab,
    pub model: ModelConfig,
    pub train_cfg: TrainConfig,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub checkpoint: Checkpoint,
    pub ppl: PPLReport,
    pub final_train_loss: Option<f64>,
}

impl Experiment<'_> {
    /// Trains on the training split serialized under `cfg` and scores the
    /// evaluation split under the same configuration.
    pub fn run(&self, cfg: &DocConfig) -> Result<RunOutcome, EvalError> {
        let train_docs = build_documents(self.train, cfg, &self.ne)?;
        let eval_docs = build_documents(self.eval, cfg, &self.ne)?;
        let trained = train_on_documents(&train_docs, self.vocab, &self.model, &self.train_cfg)?;
        let ppl = perplexity(&trained.checkpoint, self.vocab, &eval_docs, MaskPolicy::Body)?;
        Ok(RunOutcome { checkpoint: trained.checkpoint, ppl, final_train_loss: trained.report.final_loss(50) })
    }
}

/// One model per configuration, identical training budget and seed.
pub fn ablate_fields(exp: &Experiment, configs: &[DocConfig]) -> Result<AblationTable, EvalError> {
    let mut rows = Vec::with_capacity(configs.len());
    for cfg in configs {
        let out = exp.run(cfg)?;
        rows.push(AblationRow {
            config: cfg.name.clone(),
            k: cfg.k,
            order: None,
            ppl: out.ppl.ppl,
            n_tokens: out.ppl.n_tokens,
            final_train_loss: out.final_train_loss,
            seed: Some(exp.train_cfg.seed),
        });
    }
    Ok(AblationTable { rows })
}

/// Visual-NER entity lists truncated at each `k` (k = 0 leaves the entity
/// field empty), one model per `k`.
pub fn ablate_topk(exp: &Experiment, base: &CanonicalOrder, ks: &[usize]) -> Result<AblationTable, EvalError> {
    let configs: Vec<DocConfig> = ks.iter().map(|&k| DocConfig::clip_topk(base, k)).collect();
    ablate_fields(exp, &configs)
}

/// Scores one checkpoint under several serialization orders of the same
/// configuration.
pub fn ablate_order(
    ckpt: &Checkpoint,
    vocab: &Vocab,
    articles: &[Article],
    cfg: &DocConfig,
    ne: &NeContext,
    orders: &[CanonicalOrder],
) -> Result<AblationTable, EvalError> {
    let mut rows = Vec::with_capacity(orders.len());
    for order in orders {
        if !order.is_permutation_of(&cfg.order) {
            return Err(EvalError::NotPermutation(order.to_string()));
        }
        let docs = build_documents(articles, &cfg.with_order(order.clone()), ne)?;
        let r = perplexity(ckpt, vocab, &docs, MaskPolicy::Body)?;
        rows.push(AblationRow {
            config: cfg.name.clone(),
            k: cfg.k,
            order: Some(order.to_string()),
            ppl: r.ppl,
            n_tokens: r.n_tokens,
            final_train_loss: None,
            seed: None,
        });
    }
    Ok(AblationTable { rows })
}

/// Rank (0-based) of target `i` for query `i`: targets scoring higher, plus
/// equal-scoring targets with a smaller index.
pub fn true_rank(row: &[f32], i: usize) -> usize {
    let s = row[i];
    row.iter().enumerate().filter(|&(j, &x)| x > s || (x == s && j < i)).count()
}

/// Fraction of queries whose paired target (same index) ranks within the top
/// `k`, for each requested `k`.
pub fn recall_at_k(sim: &[Vec<f32>], ks: &[usize]) -> Result<BTreeMap<usize, f64>, EvalError> {
    let n_targets = sim.first().map_or(0, Vec::len);
    if sim.is_empty() {
        return Err(EvalError::Input("similarity matrix has no queries".into()));
    }
    if sim.iter().any(|r| r.len() != n_targets) {
        return Err(EvalError::Input("similarity matrix rows differ in length".into()));
    }
    if sim.len() > n_targets {
        return Err(EvalError::Input(format!("{} queries but only {n_targets} targets", sim.len())));
    }
    for &k in ks {
        if k == 0 {
            return Err(EvalError::Input("k must be at least 1".into()));
        }
        if k > n_targets {
            return Err(EvalError::KTooLarge { k, targets: n_targets });
        }
    }
    let ranks: Vec<usize> = sim.iter().enumerate().map(|(i, row)| true_rank(row, i)).collect();
    Ok(ks
        .iter()
        .map(|&k| (k, ranks.iter().filter(|&&r| r < k).count() as f64 / ranks.len() as f64))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::encode;

    #[test]
    fn recall_examples() -> Result<(), EvalError> {
        let eye: Vec<Vec<f32>> = (0..4).map(|i| (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        assert_eq!(recall_at_k(&eye, &[1])?[&1], 1.0);
        let rev: Vec<Vec<f32>> = (0..4).map(|i| (0..4).map(|j| if i + j == 3 { 1.0 } else { 0.0 }).collect()).collect();
        let r = recall_at_k(&rev, &[1, 4])?;
        assert_eq!(r[&1], 0.0);
        assert_eq!(r[&4], 1.0);
        assert!(matches!(recall_at_k(&eye, &[5]), Err(EvalError::KTooLarge { k: 5, targets: 4 })));
        // equal scores: the lower target index wins
        let flat = vec![vec![0.5f32; 3]; 3];
        let r = recall_at_k(&flat, &[1, 2])?;
        assert!((r[&1] - 1.0 / 3.0).abs() < 1e-12);
        assert!((r[&2] - 2.0 / 3.0).abs() < 1e-12);
        Ok(())
    }

    #[test]
    fn body_mask_agrees_with_token_masks() {
        let vocab = Vocab::bytes_only();
        let text = "<start-title> T <end-title> <start-body> Ann Lee <|PERSON|> spoke. <end-body>";
        let seq = encode(text, &vocab);
        let mut ids = vec![Vocab::special_id(SpecialToken::Eod)];
        ids.extend(&seq.ids);
        let m = target_mask(&ids, MaskPolicy::Body);
        for (j, &keep) in m.iter().enumerate().skip(1) {
            let k = j - 1;
            let lone_space = seq.ids[k] == Vocab::space_id() && seq.ids.get(k + 1).is_some_and(|&n| Vocab::is_special(n));
            let want = seq.field_mask[k] == Some(FieldTag::Body)
                && !seq.category_mask[k]
                && !Vocab::is_boundary(seq.ids[k])
                && !lone_space;
            assert_eq!(keep, want, "token {k}");
        }
        let scored: Vec<u32> = ids.iter().zip(&m).filter(|(_, &k)| k).map(|(&i, _)| i).collect();
        assert_eq!(crate::tokenizer::decode(&scored, &vocab).unwrap(), " Ann Lee spoke.");
    }
}
