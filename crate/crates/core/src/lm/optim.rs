use serde::{Deserialize, Serialize};

/// Decoupled-weight-decay Adam state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
    pub t: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamW {
    pub fn new(n: usize) -> Self {
        AdamW { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// One update; `decay[i]` selects parameters that receive weight decay.
    pub fn step(&mut self, params: &mut [f32], grads: &[f32], decay: &[bool], hp: AdamParams) {
        self.t += 1;
        let b1c = 1.0 - hp.beta1.powi(self.t as i32);
        let b2c = 1.0 - hp.beta2.powi(self.t as i32);
        let (b1, b2) = (hp.beta1 as f32, hp.beta2 as f32);
        let lr = hp.lr as f32;
        let wd = (hp.lr * hp.weight_decay) as f32;
        let (b1c, b2c, eps) = (b1c as f32, b2c as f32, hp.eps as f32);
        for i in 0..params.len() {
            let g = grads[i];
            let m = b1 * self.m[i] + (1.0 - b1) * g;
            let v = b2 * self.v[i] + (1.0 - b2) * g * g;
            self.m[i] = m;
            self.v[i] = v;
            let mhat = m / b1c;
            let vhat = v / b2c;
            if decay[i] {
                params[i] -= wd * params[i];
            }
            params[i] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
}

/// Global L2 norm of `grads`, accumulated in f64.
pub fn global_norm(grads: &[f32]) -> f64 {
    grads.iter().map(|&g| (g as f64) * (g as f64)).sum::<f64>().sqrt()
}

/// Scales `grads` so their global norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_grad_norm(grads: &mut [f32], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if max_norm > 0.0 && norm > max_norm {
        let s = (max_norm / (norm + 1e-6)) as f32;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}
