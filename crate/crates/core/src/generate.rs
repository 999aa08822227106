//! Nucleus sampling and body generation.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::FieldTag;
use crate::lm::{LmError, Model};
use crate::serializer::{strip_annotations, SpecialToken};
use crate::tokenizer::{decode, encode, TokenizerError, Vocab};

/// Slack on the cumulative-mass comparison so that e.g. 0.5 + 0.3 reaches 0.8.
const MASS_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error("context of {len} tokens leaves no room in a window of {max}")]
    ContextTooLong { len: usize, max: usize },
    #[error("invalid sampler setting: {0}")]
    Config(String),
    #[error("checkpoint vocabulary has {model} entries but the tokenizer has {vocab}")]
    VocabMismatch { model: usize, vocab: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub p: f64,
    pub temperature: f64,
    pub max_new_tokens: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { p: 0.95, temperature: 1.0, max_new_tokens: 256, seed: 0 }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), GenerateError> {
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(GenerateError::Config(format!("p = {} outside (0, 1]", self.p)));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(GenerateError::Config(format!("temperature = {} must be positive", self.temperature)));
        }
        Ok(())
    }
}

/// Keeps the smallest prefix of tokens, sorted by descending probability and
/// then by ascending id, whose mass reaches `p`, and renormalizes it. Every
/// other entry becomes exactly 0.
pub fn top_p_filter(probs: &[f64], p: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let mut out = vec![0.0; probs.len()];
    let mut mass = 0.0;
    for &i in &order {
        out[i] = probs[i];
        mass += probs[i];
        if mass >= p - MASS_TOL {
            break;
        }
    }
    if mass > 0.0 {
        out.iter_mut().for_each(|x| *x /= mass);
    }
    out
}

/// Inverse-CDF draw over `probs` with `u` in [0, 1). Zero-probability entries
/// are never returned.
pub fn sample_index(probs: &[f64], u: f64) -> usize {
    let total: f64 = probs.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        last_nonzero = i;
        acc += p;
        if target < acc {
            return i;
        }
    }
    last_nonzero
}

/// Softmax of `logits / temperature`, in f64.
pub fn softmax_with_temperature(logits: &[f64], temperature: f64) -> Vec<f64> {
    let maxv = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|&l| ((l - maxv) / temperature).exp()).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= s);
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    EndBody,
    MaxNewTokens,
    ContextFull,
    /// A boundary token other than `<end-body>` (or end-of-document) appeared.
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    /// Body text with category annotations as generated.
    pub text: String,
    /// `text` with category annotations removed.
    pub stripped: String,
    /// Every sampled id, including the stop token when there is one.
    pub trace: Vec<u32>,
    pub stop: StopReason,
    pub malformed: bool,
}

/// Samples a body continuation of `context` (a serialized prefix normally
/// ending in `<start-body>`).
pub fn generate_field(
    model: &Model<f32>,
    vocab: &Vocab,
    context: &str,
    cfg: &SamplerConfig,
) -> Result<Generation, GenerateError> {
    generate_with(model, vocab, context, cfg, |logits| {
        top_p_filter(&softmax_with_temperature(logits, cfg.temperature), cfg.p)
    })
}

/// Argmax decoding (ties to the lowest id).
pub fn generate_greedy(
    model: &Model<f32>,
    vocab: &Vocab,
    context: &str,
    max_new_tokens: usize,
) -> Result<Generation, GenerateError> {
    let cfg = SamplerConfig { max_new_tokens, ..Default::default() };
    generate_with(model, vocab, context, &cfg, |logits| {
        let mut best = 0;
        for (i, &l) in logits.iter().enumerate() {
            if l > logits[best] {
                best = i;
            }
        }
        let mut one = vec![0.0; logits.len()];
        one[best] = 1.0;
        one
    })
}

fn generate_with<F>(
    model: &Model<f32>,
    vocab: &Vocab,
    context: &str,
    cfg: &SamplerConfig,
    mut dist: F,
) -> Result<Generation, GenerateError>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    cfg.validate()?;
    if model.config.vocab_size != vocab.len() {
        return Err(GenerateError::VocabMismatch { model: model.config.vocab_size, vocab: vocab.len() });
    }
    let max = model.config.context_length;
    let mut ids = vec![Vocab::special_id(SpecialToken::Eod)];
    ids.extend(encode(context, vocab).ids);
    if ids.len() >= max {
        return Err(GenerateError::ContextTooLong { len: ids.len(), max });
    }
    let end_body = Vocab::special_id(SpecialToken::FieldEnd(FieldTag::Body));
    let eod = Vocab::special_id(SpecialToken::Eod);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trace = Vec::new();
    let mut body = Vec::new();
    let mut stop = StopReason::MaxNewTokens;
    for _ in 0..cfg.max_new_tokens {
        if ids.len() >= max {
            stop = StopReason::ContextFull;
            break;
        }
        let logits = model.next_token_logits(&ids)?;
        let probs = dist(&logits);
        let next = sample_index(&probs, rng.gen::<f64>()) as u32;
        trace.push(next);
        if next == end_body {
            stop = StopReason::EndBody;
            break;
        }
        if next == eod || Vocab::is_boundary(next) {
            stop = StopReason::Malformed;
            break;
        }
        body.push(next);
        ids.push(next);
    }
    let raw = decode(&body, vocab)?;
    let text = raw.strip_prefix(' ').unwrap_or(&raw);
    let text = if stop == StopReason::EndBody { text.strip_suffix(' ').unwrap_or(text) } else { text };
    Ok(Generation {
        text: text.to_string(),
        stripped: strip_annotations(text),
        trace,
        stop,
        malformed: stop == StopReason::Malformed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let out = top_p_filter(&[0.5, 0.3, 0.15, 0.05], 0.8);
        assert!((out[0] - 0.625).abs() < 1e-12);
        assert!((out[1] - 0.375).abs() < 1e-12);
        assert_eq!(out[2], 0.0);
        assert_eq!(out[3], 0.0);
    }

    #[test]
    fn p_one_is_identity_and_one_hot_is_fixed() {
        let d = [0.1, 0.2, 0.3, 0.4];
        let out = top_p_filter(&d, 1.0);
        for (a, b) in out.iter().zip(d) {
            assert!((a - b).abs() < 1e-12);
        }
        for p in [1e-9, 0.3, 1.0] {
            assert_eq!(top_p_filter(&[0.0, 1.0, 0.0], p), vec![0.0, 1.0, 0.0]);
        }
    }

    #[test]
    fn ties_prefer_lower_ids() {
        assert_eq!(top_p_filter(&[0.25, 0.25, 0.25, 0.25], 0.3), vec![0.5, 0.5, 0.0, 0.0]);
        assert_eq!(top_p_filter(&[0.25, 0.25, 0.25, 0.25], 1e-6), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn sampling_skips_zero_mass() {
        let p = [0.0, 0.5, 0.0, 0.5, 0.0];
        for i in 0..100 {
            let k = sample_index(&p, i as f64 / 100.0);
            assert!(k == 1 || k == 3);
        }
        assert_eq!(sample_index(&p, 0.999_999_999_999), 3);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(SamplerConfig { p: 0.0, ..Default::default() }.validate().is_err());
        assert!(SamplerConfig { temperature: 0.0, ..Default::default() }.validate().is_err());
    }
}
