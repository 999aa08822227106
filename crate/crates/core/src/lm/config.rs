use serde::{Deserialize, Serialize};

use super::LmError;

/// Longest context any configuration may declare.
pub const MAX_CONTEXT: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub context_length: usize,
    pub vocab_size: usize,
    #[serde(default)]
    pub dropout: f32,
    #[serde(default)]
    pub seed: u64,
}

impl ModelConfig {
    /// Desk-scale default: 4 layers, width 128, 4 heads, 256-token window.
    pub fn nano(vocab_size: usize) -> Self {
        ModelConfig { n_layers: 4, d_model: 128, n_heads: 4, context_length: 256, vocab_size, dropout: 0.0, seed: 0 }
    }

    /// Gradient-check size: 2 layers, width 32.
    pub fn tiny(vocab_size: usize) -> Self {
        ModelConfig { n_layers: 2, d_model: 32, n_heads: 2, context_length: 32, vocab_size, dropout: 0.0, seed: 0 }
    }

    pub fn base(vocab_size: usize) -> Self {
        ModelConfig { n_layers: 12, d_model: 768, n_heads: 12, context_length: 1024, vocab_size, dropout: 0.1, seed: 0 }
    }

    pub fn medium(vocab_size: usize) -> Self {
        ModelConfig { n_layers: 24, d_model: 1024, n_heads: 16, context_length: 1024, vocab_size, dropout: 0.1, seed: 0 }
    }

    pub fn xl(vocab_size: usize) -> Self {
        ModelConfig { n_layers: 48, d_model: 1600, n_heads: 25, context_length: 1024, vocab_size, dropout: 0.1, seed: 0 }
    }

    pub fn preset(name: &str, vocab_size: usize) -> Result<Self, LmError> {
        match name {
            "nano" => Ok(Self::nano(vocab_size)),
            "tiny" => Ok(Self::tiny(vocab_size)),
            "base" => Ok(Self::base(vocab_size)),
            "medium" => Ok(Self::medium(vocab_size)),
            "xl" => Ok(Self::xl(vocab_size)),
            other => Err(LmError::Config(format!("unknown model preset `{other}`"))),
        }
    }

    pub fn validate(&self) -> Result<(), LmError> {
        let positive = [
            ("n_layers", self.n_layers),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("context_length", self.context_length),
            ("vocab_size", self.vocab_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(LmError::Config(format!("{name} must be positive")));
            }
        }
        if self.d_model % self.n_heads != 0 {
            return Err(LmError::Config(format!("d_model {} is not divisible by n_heads {}", self.d_model, self.n_heads)));
        }
        if self.context_length > MAX_CONTEXT {
            return Err(LmError::Config(format!("context_length {} exceeds {MAX_CONTEXT}", self.context_length)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(LmError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// Number of learned scalars (output head tied to the token embedding).
    pub fn n_params(&self) -> usize {
        let (v, c, t, l) = (self.vocab_size, self.d_model, self.context_length, self.n_layers);
        v * c + t * c + l * (12 * c * c + 13 * c) + 2 * c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Row length in tokens; `None` uses the model context length.
    #[serde(default)]
    pub seq_len: Option<usize>,
    pub max_lr: f64,
    /// Cosine decay floor as a fraction of `max_lr`.
    pub min_lr_ratio: f64,
    pub warmup_frac: f64,
    pub total_steps: usize,
    pub grad_clip: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    #[serde(default)]
    pub checkpoint_every: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 8,
            seq_len: None,
            max_lr: 1e-4,
            min_lr_ratio: 0.1,
            warmup_frac: 0.06,
            total_steps: 1000,
            grad_clip: 1.0,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.95,
            adam_eps: 1e-8,
            seed: 0,
            checkpoint_every: None,
        }
    }
}

impl TrainConfig {
    /// From-scratch desk-scale recipe (higher peak rate than fine-tuning).
    pub fn desk(total_steps: usize, seed: u64) -> Self {
        TrainConfig { batch_size: 2, max_lr: 2e-3, total_steps, seed, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), LmError> {
        if !(0.0..1.0).contains(&self.warmup_frac) {
            return Err(LmError::Config(format!("warmup fraction {} outside [0, 1)", self.warmup_frac)));
        }
        if self.batch_size == 0 || self.total_steps == 0 {
            return Err(LmError::Config("batch size and total steps must be positive".into()));
        }
        if self.max_lr <= 0.0 || !self.max_lr.is_finite() {
            return Err(LmError::Config("max_lr must be positive".into()));
        }
        if self.seq_len == Some(0) {
            return Err(LmError::Config("seq_len must be positive".into()));
        }
        Ok(())
    }

    /// Linear warmup to `max_lr`, then cosine decay to `min_lr_ratio * max_lr`.
    pub fn lr_at(&self, step: usize) -> f64 {
        let warmup = (self.warmup_frac * self.total_steps as f64).round() as usize;
        if step < warmup {
            return self.max_lr * (step + 1) as f64 / warmup as f64;
        }
        let span = (self.total_steps - warmup).max(1) as f64;
        let progress = ((step - warmup) as f64 / span).min(1.0);
        let min_lr = self.max_lr * self.min_lr_ratio;
        min_lr + 0.5 * (self.max_lr - min_lr) * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in ["nano", "tiny", "base", "medium", "xl"] {
            ModelConfig::preset(name, 8192).unwrap().validate().unwrap();
        }
        assert!(ModelConfig::preset("huge", 10).is_err());
        // GPT-2 small with its 50257-token vocabulary has ~124M parameters.
        let base = ModelConfig::base(50257);
        assert!((base.n_params() as f64 / 124.4e6 - 1.0).abs() < 0.01, "{}", base.n_params());
    }

    #[test]
    fn invalid_configs() {
        let mut c = ModelConfig::nano(100);
        c.n_heads = 3;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::nano(100);
        c.context_length = 2048;
        assert!(c.validate().is_err());
        let t = TrainConfig { warmup_frac: 1.0, ..Default::default() };
        assert!(t.validate().is_err());
    }

    #[test]
    fn schedule_shape() {
        let t = TrainConfig { total_steps: 100, warmup_frac: 0.1, max_lr: 1.0, min_lr_ratio: 0.1, ..Default::default() };
        assert!((t.lr_at(0) - 0.1).abs() < 1e-12);
        assert!((t.lr_at(9) - 1.0).abs() < 1e-12);
        assert!(t.lr_at(50) < 1.0 && t.lr_at(50) > 0.1);
        assert!((t.lr_at(100) - 0.1).abs() < 1e-12);
        let t0 = TrainConfig { warmup_frac: 0.0, max_lr: 1.0, total_steps: 10, ..Default::default() };
        assert!((t0.lr_at(0) - 1.0).abs() < 1e-12);
    }
}
