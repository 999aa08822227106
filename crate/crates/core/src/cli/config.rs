//! Run configuration: a TOML file whose values are overridden by flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::corpus::{canonical_order, CanonicalOrder, FieldTag};
use crate::lm::{ModelConfig, TrainConfig};
use crate::pipeline::{DocConfig, NeSource};
use crate::serializer::AnnotationScope;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub gazetteer: Option<PathBuf>,
    /// Preset name (`goodnews`, `visualnews`) or a comma-separated field list.
    pub order: Option<String>,
    pub ne_source: Option<NeSource>,
    /// `none`, `body`, `narrative` or a comma-separated field list.
    pub scope: Option<String>,
    pub k: Option<usize>,
    /// `stub` or an `http://` endpoint.
    pub provider: Option<String>,
    pub provider_dim: Option<usize>,
    /// Use the stub provider when the endpoint is unreachable.
    pub provider_fallback: Option<bool>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub preset: Option<String>,
    pub n_layers: Option<usize>,
    pub d_model: Option<usize>,
    pub n_heads: Option<usize>,
    pub context_length: Option<usize>,
    pub dropout: Option<f32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub steps: Option<usize>,
    pub batch_size: Option<usize>,
    pub seq_len: Option<usize>,
    pub max_lr: Option<f64>,
    pub min_lr_ratio: Option<f64>,
    pub warmup_frac: Option<f64>,
    pub grad_clip: Option<f64>,
    pub weight_decay: Option<f64>,
}

pub const DEFAULT_SEED: u64 = 7;
pub const DEFAULT_K: usize = 10;
pub const DEFAULT_PROVIDER_DIM: usize = 256;

macro_rules! overlay {
    ($dst:expr, $src:expr; $($f:ident),*) => { $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )* };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Values set in `flags` win.
    pub fn merge(mut self, flags: &RunConfig) -> Self {
        overlay!(self, flags; corpus, gazetteer, order, ne_source, scope, k, provider, provider_dim, provider_fallback, seed);
        overlay!(self.model, flags.model; preset, n_layers, d_model, n_heads, context_length, dropout);
        overlay!(self.train, flags.train; steps, batch_size, seq_len, max_lr, min_lr_ratio, warmup_frac, grad_clip, weight_decay);
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn order(&self) -> Result<CanonicalOrder> {
        Ok(canonical_order(self.order.as_deref().unwrap_or("goodnews"))?)
    }

    pub fn scope(&self) -> Result<AnnotationScope> {
        parse_scope(self.scope.as_deref().unwrap_or("narrative"))
    }

    pub fn ne_source(&self) -> NeSource {
        self.ne_source.unwrap_or(NeSource::Oracle)
    }

    /// Consistency checks that do not need any file.
    pub fn validate(&self) -> Result<()> {
        if self.ne_source() == NeSource::Clip && self.provider.is_none() {
            bail!("ne_source = clip requires a provider (`stub` or an http endpoint)");
        }
        let order = self.order()?;
        if self.ne_source() != NeSource::None && !order.contains(FieldTag::NamedEntity) {
            bail!("ne_source = {} but the order has no named-entity field", self.ne_source());
        }
        self.scope()?;
        Ok(())
    }

    pub fn doc_config(&self) -> Result<DocConfig> {
        self.validate()?;
        let mut order = self.order()?;
        if self.ne_source() == NeSource::None {
            order = order.without(&[FieldTag::NamedEntity]);
        }
        let ne_source = self.ne_source();
        let k = (ne_source == NeSource::Clip).then(|| self.k.unwrap_or(DEFAULT_K));
        Ok(DocConfig { name: format!("{ne_source}"), order, ne_source, k, scope: self.scope()? })
    }

    pub fn model_config(&self, vocab_size: usize) -> Result<ModelConfig> {
        let m = &self.model;
        let mut cfg = ModelConfig::preset(m.preset.as_deref().unwrap_or("nano"), vocab_size)?;
        for (src, dst) in [
            (m.n_layers, &mut cfg.n_layers),
            (m.d_model, &mut cfg.d_model),
            (m.n_heads, &mut cfg.n_heads),
            (m.context_length, &mut cfg.context_length),
        ] {
            if let Some(v) = src {
                *dst = v;
            }
        }
        if let Some(d) = m.dropout {
            cfg.dropout = d;
        }
        cfg.seed = self.seed();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let t = &self.train;
        let mut cfg = TrainConfig::desk(t.steps.unwrap_or(1000), self.seed());
        if let Some(v) = t.batch_size {
            cfg.batch_size = v;
        }
        cfg.seq_len = t.seq_len.or(cfg.seq_len);
        let floats = [
            (t.max_lr, &mut cfg.max_lr),
            (t.min_lr_ratio, &mut cfg.min_lr_ratio),
            (t.warmup_frac, &mut cfg.warmup_frac),
            (t.grad_clip, &mut cfg.grad_clip),
            (t.weight_decay, &mut cfg.weight_decay),
        ];
        for (src, dst) in floats {
            if let Some(v) = src {
                *dst = v;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn parse_scope(s: &str) -> Result<AnnotationScope> {
    Ok(match s.trim() {
        "none" => AnnotationScope::none(),
        "body" => AnnotationScope::body(),
        "narrative" => AnnotationScope::narrative(),
        list => {
            let tags = list.split(',').map(|t| t.trim().parse::<FieldTag>()).collect::<Result<Vec<_>, _>>()?;
            AnnotationScope::with(tags)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file: RunConfig = toml::from_str(
            "order = \"goodnews\"\nk = 5\nseed = 3\n[model]\npreset = \"tiny\"\n[train]\nsteps = 10\nmax_lr = 0.01\n",
        )
        .unwrap();
        let flags = RunConfig { k: Some(20), train: TrainSection { steps: Some(99), ..Default::default() }, ..Default::default() };
        let cfg = file.merge(&flags);
        assert_eq!(cfg.k, Some(20));
        assert_eq!(cfg.seed(), 3);
        let tc = cfg.train_config().unwrap();
        assert_eq!((tc.total_steps, tc.max_lr), (99, 0.01));
        assert_eq!(cfg.model_config(300).unwrap().d_model, 32);
    }

    #[test]
    fn clip_needs_provider() {
        let cfg = RunConfig { ne_source: Some(NeSource::Clip), ..Default::default() };
        assert!(cfg.validate().is_err());
        let ok = RunConfig { provider: Some("stub".into()), ..cfg };
        assert_eq!(ok.doc_config().unwrap().k, Some(DEFAULT_K));
        assert!(toml::from_str::<RunConfig>("bogus = 1").is_err());
    }
}
