use std::time::Instant;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::data::BatchStream;
use super::model::{Activations, BackwardFaults, Model};
use super::optim::{clip_grad_norm, AdamParams, AdamW};
use super::LmError;

/// Consecutive steps above the divergence threshold before training aborts.
pub const DIVERGENCE_PATIENCE: usize = 100;
pub const DIVERGENCE_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    pub grad_norm: f64,
    pub tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub steps: Vec<StepInfo>,
    pub epochs: usize,
    pub elapsed_secs: f64,
}

impl TrainReport {
    pub fn losses(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.loss).collect()
    }

    pub fn initial_loss(&self) -> Option<f64> {
        self.steps.first().map(|s| s.loss)
    }

    /// Mean loss over the last `n` steps.
    pub fn final_loss(&self, n: usize) -> Option<f64> {
        let k = n.min(self.steps.len());
        (k > 0).then(|| self.steps[self.steps.len() - k..].iter().map(|s| s.loss).sum::<f64>() / k as f64)
    }
}

/// Tracks the abort rule: loss above `factor` times the first loss for
/// `patience` consecutive steps.
#[derive(Debug, Clone)]
pub struct DivergenceGuard {
    initial: Option<f64>,
    streak: usize,
    factor: f64,
    patience: usize,
}

impl DivergenceGuard {
    pub fn new(factor: f64, patience: usize) -> Self {
        DivergenceGuard { initial: None, streak: 0, factor, patience }
    }

    pub fn observe(&mut self, step: usize, loss: f64) -> Result<(), LmError> {
        let initial = *self.initial.get_or_insert(loss);
        if !loss.is_finite() || loss > self.factor * initial {
            self.streak += 1;
        } else {
            self.streak = 0;
        }
        if self.streak >= self.patience {
            return Err(LmError::Diverged { step, loss, initial });
        }
        Ok(())
    }
}

/// Trains `model` in place on tokenized documents. `on_step` runs after every
/// update (logging, periodic checkpoints) and may abort by returning an error.
pub fn train<F>(
    model: &mut Model<f32>,
    opt: &mut AdamW,
    docs: Vec<Vec<u32>>,
    cfg: &TrainConfig,
    mut on_step: F,
) -> Result<TrainReport, LmError>
where
    F: FnMut(&StepInfo, &Model<f32>, &AdamW) -> Result<(), LmError>,
{
    cfg.validate()?;
    if docs.is_empty() {
        return Err(LmError::NoData("empty training corpus".into()));
    }
    if opt.m.len() != model.params.len() {
        return Err(LmError::Shape("optimizer state does not match the model".into()));
    }
    let t = cfg.seq_len.unwrap_or(model.config.context_length).min(model.config.context_length);
    let mut stream = BatchStream::new(docs, t, cfg.batch_size, cfg.seed)?;
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_d809);
    let decay = model.decay_mask();
    let mut grads = vec![0f32; model.params.len()];
    let mut acts = Activations::default();
    let mut guard = DivergenceGuard::new(DIVERGENCE_FACTOR, DIVERGENCE_PATIENCE);
    let mut steps = Vec::with_capacity(cfg.total_steps);
    let started = Instant::now();

    for step in 0..cfg.total_steps {
        let batch = stream.next_batch();
        let loss = model.forward(&batch, &mut acts, Some(&mut dropout_rng))?.ok_or(LmError::EmptyMask)?;
        guard.observe(step, loss)?;
        grads.iter_mut().for_each(|g| *g = 0.0);
        model.backward(&batch, &acts, &mut grads, BackwardFaults::default())?;
        let grad_norm = clip_grad_norm(&mut grads, cfg.grad_clip);
        let lr = cfg.lr_at(step);
        let hp = AdamParams { lr, beta1: cfg.beta1, beta2: cfg.beta2, eps: cfg.adam_eps, weight_decay: cfg.weight_decay };
        opt.step(&mut model.params, &grads, &decay, hp);
        let info = StepInfo { step, loss, lr, grad_norm, tokens: batch.n_targets() };
        on_step(&info, model, opt)?;
        steps.push(info);
    }
    Ok(TrainReport { steps, epochs: stream.epoch, elapsed_secs: started.elapsed().as_secs_f64() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::config::ModelConfig;

    fn docs() -> Vec<Vec<u32>> {
        (0..20).map(|i| vec![2, 40 + (i % 7), 50, 51 + (i % 3), 52, 53, 54 + (i % 5)]).collect()
    }

    #[test]
    fn loss_descends_and_is_deterministic() {
        let cfg = TrainConfig { total_steps: 50, batch_size: 2, seq_len: Some(32), max_lr: 3e-3, ..Default::default() };
        let run = || {
            let mut m = Model::<f32>::init(ModelConfig::tiny(64)).unwrap();
            let mut opt = AdamW::new(m.params.len());
            train(&mut m, &mut opt, docs(), &cfg, |_, _, _| Ok(())).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.losses(), b.losses());
        assert!(a.final_loss(5).unwrap() < a.initial_loss().unwrap());
    }

    #[test]
    fn guard_trips_after_patience() {
        let mut g = DivergenceGuard::new(3.0, 3);
        g.observe(0, 1.0).unwrap();
        g.observe(1, 4.0).unwrap();
        g.observe(2, 1.0).unwrap();
        g.observe(3, 4.0).unwrap();
        g.observe(4, f64::NAN).unwrap();
        assert!(matches!(g.observe(5, 5.0), Err(LmError::Diverged { step: 5, .. })));
    }
}
