use rand::seq::index::sample;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{tensor_specs, Activations, BackwardFaults, Batch, Model};
use super::LmError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradEntry {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst: Option<GradEntry>,
    /// True when no parameter was checked; the maximum is then 0 by convention.
    pub vacuous: bool,
}

pub fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

/// Analytic gradient of the mean masked loss.
pub fn analytic_gradient(model: &Model<f64>, batch: &Batch, faults: BackwardFaults) -> Result<Vec<f64>, LmError> {
    let mut acts = Activations::default();
    model.forward(batch, &mut acts, None)?.ok_or(LmError::EmptyMask)?;
    let mut grads = vec![0.0; model.params.len()];
    model.backward(batch, &acts, &mut grads, faults)?;
    Ok(grads)
}

/// Compares analytic and central-difference gradients at the given flat
/// parameter indices.
pub fn grad_check_indices(
    model: &Model<f64>,
    batch: &Batch,
    epsilon: f64,
    indices: &[usize],
    faults: BackwardFaults,
) -> Result<GradCheckReport, LmError> {
    if indices.is_empty() {
        return Ok(GradCheckReport { checked: 0, max_rel_error: 0.0, worst: None, vacuous: true });
    }
    let grads = analytic_gradient(model, batch, faults)?;
    let names = tensor_names(model);
    let mut probe = model.clone();
    let mut worst: Option<GradEntry> = None;
    for &i in indices {
        if i >= probe.params.len() {
            return Err(LmError::Shape(format!("parameter index {i} out of range")));
        }
        let orig = probe.params[i];
        probe.params[i] = orig + epsilon;
        let up = probe.loss(batch)?;
        probe.params[i] = orig - epsilon;
        let down = probe.loss(batch)?;
        probe.params[i] = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        let e = rel_error(grads[i], numeric);
        if worst.as_ref().map_or(true, |w| e > w.rel_error) {
            let (tensor, index) = names(i);
            worst = Some(GradEntry { tensor, index, analytic: grads[i], numeric, rel_error: e });
        }
    }
    let max_rel_error = worst.as_ref().map_or(0.0, |w| w.rel_error);
    Ok(GradCheckReport { checked: indices.len(), max_rel_error, worst, vacuous: false })
}

/// Checks up to `per_tensor` randomly chosen entries of every parameter tensor.
pub fn grad_check(
    model: &Model<f64>,
    batch: &Batch,
    epsilon: f64,
    per_tensor: usize,
    seed: u64,
    faults: BackwardFaults,
) -> Result<GradCheckReport, LmError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = Vec::new();
    let mut offset = 0;
    for s in tensor_specs(&model.config) {
        let n = s.numel();
        let k = per_tensor.min(n);
        let mut picked: Vec<usize> = sample(&mut rng, n, k).into_iter().map(|j| offset + j).collect();
        picked.sort_unstable();
        indices.extend(picked);
        offset += n;
    }
    grad_check_indices(model, batch, epsilon, &indices, faults)
}

fn tensor_names(model: &Model<f64>) -> impl Fn(usize) -> (String, usize) {
    let specs = tensor_specs(&model.config);
    move |flat| {
        let mut off = 0;
        for s in &specs {
            if flat < off + s.numel() {
                return (s.name.clone(), flat - off);
            }
            off += s.numel();
        }
        ("?".into(), flat)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::config::ModelConfig;

    fn setup() -> (Model<f64>, Batch) {
        let mut cfg = ModelConfig::tiny(40);
        cfg.seed = 11;
        let model = Model::<f64>::init(cfg).unwrap();
        let ids: Vec<u32> = (0..12).map(|i| (i * 7 + 3) % 40).collect();
        (model, Batch::single(&ids))
    }

    #[test]
    fn empty_subset_is_vacuous() {
        let (m, b) = setup();
        let r = grad_check_indices(&m, &b, 1e-4, &[], BackwardFaults::default()).unwrap();
        assert!(r.vacuous);
        assert_eq!(r.checked, 0);
    }

    #[test]
    fn small_random_subset_passes() {
        let (m, b) = setup();
        let r = grad_check(&m, &b, 1e-4, 3, 5, BackwardFaults::default()).unwrap();
        assert!(!r.vacuous);
        assert!(r.max_rel_error <= 1e-3, "{:?}", r.worst);
    }
}
