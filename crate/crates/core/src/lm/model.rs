use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::ops;
use super::real::Real;
use super::LmError;

const INIT_STD: f64 = 0.02;

/// One named parameter tensor inside the flat parameter buffer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Parameter tensors in storage order: `wte`, `wpe`, then each layer's block,
/// then the final norm.
pub fn tensor_specs(cfg: &ModelConfig) -> Vec<TensorSpec> {
    let (v, c, t) = (cfg.vocab_size, cfg.d_model, cfg.context_length);
    let spec = |name: String, shape: Vec<usize>| TensorSpec { name, shape };
    let mut out = vec![spec("wte".into(), vec![v, c]), spec("wpe".into(), vec![t, c])];
    for l in 0..cfg.n_layers {
        let p = format!("h{l}.");
        out.push(spec(format!("{p}ln1.w"), vec![c]));
        out.push(spec(format!("{p}ln1.b"), vec![c]));
        out.push(spec(format!("{p}attn.qkv.w"), vec![3 * c, c]));
        out.push(spec(format!("{p}attn.qkv.b"), vec![3 * c]));
        out.push(spec(format!("{p}attn.proj.w"), vec![c, c]));
        out.push(spec(format!("{p}attn.proj.b"), vec![c]));
        out.push(spec(format!("{p}ln2.w"), vec![c]));
        out.push(spec(format!("{p}ln2.b"), vec![c]));
        out.push(spec(format!("{p}mlp.fc.w"), vec![4 * c, c]));
        out.push(spec(format!("{p}mlp.fc.b"), vec![4 * c]));
        out.push(spec(format!("{p}mlp.proj.w"), vec![c, 4 * c]));
        out.push(spec(format!("{p}mlp.proj.b"), vec![c]));
    }
    out.push(spec("lnf.w".into(), vec![c]));
    out.push(spec("lnf.b".into(), vec![c]));
    out
}

struct LayerView<'a, T> {
    ln1w: &'a [T],
    ln1b: &'a [T],
    qkvw: &'a [T],
    qkvb: &'a [T],
    projw: &'a [T],
    projb: &'a [T],
    ln2w: &'a [T],
    ln2b: &'a [T],
    fcw: &'a [T],
    fcb: &'a [T],
    fcprojw: &'a [T],
    fcprojb: &'a [T],
}

struct LayerViewMut<'a, T> {
    ln1w: &'a mut [T],
    ln1b: &'a mut [T],
    qkvw: &'a mut [T],
    qkvb: &'a mut [T],
    projw: &'a mut [T],
    projb: &'a mut [T],
    ln2w: &'a mut [T],
    ln2b: &'a mut [T],
    fcw: &'a mut [T],
    fcb: &'a mut [T],
    fcprojw: &'a mut [T],
    fcprojb: &'a mut [T],
}

struct ParamView<'a, T> {
    wte: &'a [T],
    wpe: &'a [T],
    layers: Vec<LayerView<'a, T>>,
    lnfw: &'a [T],
    lnfb: &'a [T],
}

struct ParamViewMut<'a, T> {
    wte: &'a mut [T],
    wpe: &'a mut [T],
    layers: Vec<LayerViewMut<'a, T>>,
    lnfw: &'a mut [T],
    lnfb: &'a mut [T],
}

fn take<'a, T>(rest: &mut &'a [T], n: usize) -> &'a [T] {
    let (head, tail) = rest.split_at(n);
    *rest = tail;
    head
}

fn take_mut<'a, T>(rest: &mut &'a mut [T], n: usize) -> &'a mut [T] {
    let (head, tail) = std::mem::take(rest).split_at_mut(n);
    *rest = tail;
    head
}

fn view<'a, T>(cfg: &ModelConfig, buf: &'a [T]) -> ParamView<'a, T> {
    let (v, c, t) = (cfg.vocab_size, cfg.d_model, cfg.context_length);
    let mut r = buf;
    let wte = take(&mut r, v * c);
    let wpe = take(&mut r, t * c);
    let layers = (0..cfg.n_layers)
        .map(|_| LayerView {
            ln1w: take(&mut r, c),
            ln1b: take(&mut r, c),
            qkvw: take(&mut r, 3 * c * c),
            qkvb: take(&mut r, 3 * c),
            projw: take(&mut r, c * c),
            projb: take(&mut r, c),
            ln2w: take(&mut r, c),
            ln2b: take(&mut r, c),
            fcw: take(&mut r, 4 * c * c),
            fcb: take(&mut r, 4 * c),
            fcprojw: take(&mut r, 4 * c * c),
            fcprojb: take(&mut r, c),
        })
        .collect();
    let lnfw = take(&mut r, c);
    let lnfb = take(&mut r, c);
    ParamView { wte, wpe, layers, lnfw, lnfb }
}

fn view_mut<'a, T>(cfg: &ModelConfig, buf: &'a mut [T]) -> ParamViewMut<'a, T> {
    let (v, c, t) = (cfg.vocab_size, cfg.d_model, cfg.context_length);
    let mut r = buf;
    let wte = take_mut(&mut r, v * c);
    let wpe = take_mut(&mut r, t * c);
    let layers = (0..cfg.n_layers)
        .map(|_| LayerViewMut {
            ln1w: take_mut(&mut r, c),
            ln1b: take_mut(&mut r, c),
            qkvw: take_mut(&mut r, 3 * c * c),
            qkvb: take_mut(&mut r, 3 * c),
            projw: take_mut(&mut r, c * c),
            projb: take_mut(&mut r, c),
            ln2w: take_mut(&mut r, c),
            ln2b: take_mut(&mut r, c),
            fcw: take_mut(&mut r, 4 * c * c),
            fcb: take_mut(&mut r, 4 * c),
            fcprojw: take_mut(&mut r, 4 * c * c),
            fcprojb: take_mut(&mut r, c),
        })
        .collect();
    let lnfw = take_mut(&mut r, c);
    let lnfb = take_mut(&mut r, c);
    ParamViewMut { wte, wpe, layers, lnfw, lnfb }
}

/// A packed `(B, T)` block of token rows.
///
/// Each row holds one or more segments (documents). Attention never crosses a
/// segment boundary and positions restart at zero in every segment, so a
/// document scores the same whether it is packed or evaluated alone.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub b: usize,
    pub t: usize,
    pub ids: Vec<u32>,
    pub positions: Vec<u32>,
    /// Row index at which the segment containing each token begins.
    pub seg_start: Vec<u32>,
    pub targets: Vec<u32>,
    pub mask: Vec<bool>,
}

impl Batch {
    /// One segment; every position except the last predicts its successor.
    pub fn single(ids: &[u32]) -> Self {
        let n = ids.len();
        let mut targets: Vec<u32> = ids.iter().skip(1).copied().collect();
        targets.push(0);
        let mut mask = vec![true; n];
        if let Some(last) = mask.last_mut() {
            *last = false;
        }
        Batch {
            b: 1,
            t: n,
            ids: ids.to_vec(),
            positions: (0..n as u32).collect(),
            seg_start: vec![0; n],
            targets,
            mask,
        }
    }

    /// One segment with no loss targets (inference only).
    pub fn context(ids: &[u32]) -> Self {
        let mut b = Self::single(ids);
        b.mask.iter_mut().for_each(|m| *m = false);
        b
    }

    pub fn n_targets(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn validate(&self, cfg: &ModelConfig) -> Result<(), LmError> {
        let n = self.b * self.t;
        if self.t > cfg.context_length {
            return Err(LmError::ContextOverflow { len: self.t, max: cfg.context_length });
        }
        if n == 0 {
            return Err(LmError::Shape("empty batch".into()));
        }
        for (name, len) in [
            ("ids", self.ids.len()),
            ("positions", self.positions.len()),
            ("seg_start", self.seg_start.len()),
            ("targets", self.targets.len()),
            ("mask", self.mask.len()),
        ] {
            if len != n {
                return Err(LmError::Shape(format!("{name} has {len} entries, expected {n}")));
            }
        }
        for i in 0..n {
            let id = self.ids[i];
            if id as usize >= cfg.vocab_size {
                return Err(LmError::TokenOutOfRange { id, vocab: cfg.vocab_size });
            }
            if self.mask[i] && self.targets[i] as usize >= cfg.vocab_size {
                return Err(LmError::TokenOutOfRange { id: self.targets[i], vocab: cfg.vocab_size });
            }
            let ti = i % self.t;
            let s = self.seg_start[i] as usize;
            if s > ti || self.positions[i] as usize != ti - s {
                return Err(LmError::Shape(format!("inconsistent segment layout at row offset {ti}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Default)]
struct LayerActs<T> {
    ln1: Vec<T>,
    ln1_mean: Vec<T>,
    ln1_rstd: Vec<T>,
    qkv: Vec<T>,
    atty: Vec<T>,
    att: Vec<T>,
    attproj: Vec<T>,
    res2: Vec<T>,
    ln2: Vec<T>,
    ln2_mean: Vec<T>,
    ln2_rstd: Vec<T>,
    fch: Vec<T>,
    fch_gelu: Vec<T>,
    fcproj: Vec<T>,
    res3: Vec<T>,
    drop_attn: Vec<T>,
    drop_fc: Vec<T>,
}

/// Saved forward state needed by the backward pass.
#[derive(Debug, Default)]
pub struct Activations<T> {
    b: usize,
    t: usize,
    encoded: Vec<T>,
    drop_emb: Vec<T>,
    layers: Vec<LayerActs<T>>,
    lnf: Vec<T>,
    lnf_mean: Vec<T>,
    lnf_rstd: Vec<T>,
    logits: Vec<T>,
    /// `log p(target)` at every masked position (0 elsewhere).
    pub target_logp: Vec<f64>,
    dropout_active: bool,
}

fn resize<T: Real>(v: &mut Vec<T>, n: usize) {
    v.clear();
    v.resize(n, T::zero());
}

impl<T: Real> Activations<T> {
    fn prepare(&mut self, cfg: &ModelConfig, b: usize, t: usize) {
        let (c, nh, v) = (cfg.d_model, cfg.n_heads, cfg.vocab_size);
        let n = b * t;
        self.b = b;
        self.t = t;
        resize(&mut self.encoded, n * c);
        self.layers.resize_with(cfg.n_layers, LayerActs::default);
        for la in &mut self.layers {
            resize(&mut la.ln1, n * c);
            resize(&mut la.ln1_mean, n);
            resize(&mut la.ln1_rstd, n);
            resize(&mut la.qkv, n * 3 * c);
            resize(&mut la.atty, n * c);
            resize(&mut la.att, b * nh * t * t);
            resize(&mut la.attproj, n * c);
            resize(&mut la.res2, n * c);
            resize(&mut la.ln2, n * c);
            resize(&mut la.ln2_mean, n);
            resize(&mut la.ln2_rstd, n);
            resize(&mut la.fch, n * 4 * c);
            resize(&mut la.fch_gelu, n * 4 * c);
            resize(&mut la.fcproj, n * c);
            resize(&mut la.res3, n * c);
        }
        resize(&mut self.lnf, n * c);
        resize(&mut self.lnf_mean, n);
        resize(&mut self.lnf_rstd, n);
        resize(&mut self.logits, n * v);
        self.target_logp.clear();
        self.target_logp.resize(n, 0.0);
    }

    /// Logits of row `i` of the flattened `(B*T, V)` output.
    pub fn logits_row(&self, i: usize) -> &[T] {
        let v = self.logits.len() / (self.b * self.t);
        &self.logits[i * v..(i + 1) * v]
    }
}

/// Fault switches for negative-control gradient checks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BackwardFaults {
    pub layernorm_drop_mean: bool,
    pub gelu_slope: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T: Real> {
    pub config: ModelConfig,
    pub params: Vec<T>,
}

fn dropout_mask<T: Real>(buf: &mut Vec<T>, n: usize, p: f32, rng: &mut ChaCha8Rng) {
    let keep = T::of(1.0 / (1.0 - p as f64));
    buf.clear();
    buf.extend((0..n).map(|_| if rng.gen::<f32>() < p { T::zero() } else { keep }));
}

fn apply_mask<T: Real>(x: &mut [T], mask: &[T]) {
    for (a, m) in x.iter_mut().zip(mask) {
        *a = *a * *m;
    }
}

impl<T: Real> Model<T> {
    /// GPT-2 style initialization: N(0, 0.02) weights, residual projections
    /// scaled by 1/sqrt(2 L), zero biases and unit norm gains.
    pub fn init(config: ModelConfig) -> Result<Self, LmError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let specs = tensor_specs(&config);
        let resid_std = INIT_STD / (2.0 * config.n_layers as f64).sqrt();
        let mut params = Vec::with_capacity(config.n_params());
        for s in &specs {
            let n = s.numel();
            let name = s.name.as_str();
            if name.ends_with("ln1.w") || name.ends_with("ln2.w") || name == "lnf.w" {
                params.extend(std::iter::repeat(T::one()).take(n));
            } else if s.shape.len() == 1 {
                params.extend(std::iter::repeat(T::zero()).take(n));
            } else {
                let std = if name.ends_with("proj.w") { resid_std } else { INIT_STD };
                let normal = Normal::new(0.0, std).expect("positive std");
                params.extend((0..n).map(|_| T::of(normal.sample(&mut rng))));
            }
        }
        debug_assert_eq!(params.len(), config.n_params());
        Ok(Model { config, params })
    }

    /// Initialized model whose tied output head (and thus token embedding)
    /// is all zeros: every position predicts the uniform distribution.
    pub fn init_zero_head(config: ModelConfig) -> Result<Self, LmError> {
        let mut m = Self::init(config)?;
        let n = m.config.vocab_size * m.config.d_model;
        m.params[..n].iter_mut().for_each(|x| *x = T::zero());
        Ok(m)
    }

    pub fn from_params(config: ModelConfig, params: Vec<T>) -> Result<Self, LmError> {
        config.validate()?;
        if params.len() != config.n_params() {
            return Err(LmError::Shape(format!(
                "{} parameters supplied, configuration needs {}",
                params.len(),
                config.n_params()
            )));
        }
        Ok(Model { config, params })
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model { config: self.config.clone(), params: self.params.iter().map(|x| U::of(x.f64())).collect() }
    }

    /// Indices of matrix-shaped parameters (those that receive weight decay).
    pub fn decay_mask(&self) -> Vec<bool> {
        let mut mask = Vec::with_capacity(self.params.len());
        for s in tensor_specs(&self.config) {
            mask.extend(std::iter::repeat(s.shape.len() >= 2).take(s.numel()));
        }
        mask
    }

    /// Runs the network on `batch`, filling `acts`. Returns the mean negative
    /// log-likelihood over masked positions, or `None` when the mask is empty.
    /// Dropout is applied only when `rng` is supplied and the rate is positive.
    pub fn forward(
        &self,
        batch: &Batch,
        acts: &mut Activations<T>,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Option<f64>, LmError> {
        batch.validate(&self.config)?;
        let cfg = &self.config;
        let (b, t, c, nh, v) = (batch.b, batch.t, cfg.d_model, cfg.n_heads, cfg.vocab_size);
        let n = b * t;
        acts.prepare(cfg, b, t);
        let p = view(cfg, &self.params);
        let mut rng = rng.filter(|_| cfg.dropout > 0.0);
        acts.dropout_active = rng.is_some();

        ops::encoder_forward(&mut acts.encoded, &batch.ids, &batch.positions, p.wte, p.wpe, c);
        if let Some(r) = rng.as_deref_mut() {
            dropout_mask(&mut acts.drop_emb, n * c, cfg.dropout, r);
            apply_mask(&mut acts.encoded, &acts.drop_emb);
        }

        for l in 0..cfg.n_layers {
            let (prev, rest) = acts.layers.split_at_mut(l);
            let residual: &[T] = if l == 0 { &acts.encoded } else { &prev[l - 1].res3 };
            let la = &mut rest[0];
            let w = &p.layers[l];
            ops::layernorm_forward(&mut la.ln1, &mut la.ln1_mean, &mut la.ln1_rstd, residual, w.ln1w, w.ln1b, c);
            ops::matmul_forward(&mut la.qkv, &la.ln1, w.qkvw, Some(w.qkvb), c, 3 * c);
            ops::attention_forward(&mut la.atty, &mut la.att, &la.qkv, &batch.seg_start, b, t, c, nh);
            ops::matmul_forward(&mut la.attproj, &la.atty, w.projw, Some(w.projb), c, c);
            if let Some(r) = rng.as_deref_mut() {
                dropout_mask(&mut la.drop_attn, n * c, cfg.dropout, r);
                apply_mask(&mut la.attproj, &la.drop_attn);
            }
            for i in 0..n * c {
                la.res2[i] = residual[i] + la.attproj[i];
            }
            ops::layernorm_forward(&mut la.ln2, &mut la.ln2_mean, &mut la.ln2_rstd, &la.res2, w.ln2w, w.ln2b, c);
            ops::matmul_forward(&mut la.fch, &la.ln2, w.fcw, Some(w.fcb), c, 4 * c);
            ops::gelu_forward(&mut la.fch_gelu, &la.fch);
            ops::matmul_forward(&mut la.fcproj, &la.fch_gelu, w.fcprojw, Some(w.fcprojb), 4 * c, c);
            if let Some(r) = rng.as_deref_mut() {
                dropout_mask(&mut la.drop_fc, n * c, cfg.dropout, r);
                apply_mask(&mut la.fcproj, &la.drop_fc);
            }
            for i in 0..n * c {
                la.res3[i] = la.res2[i] + la.fcproj[i];
            }
        }

        let last: &[T] = match acts.layers.last() {
            Some(la) => &la.res3,
            None => &acts.encoded,
        };
        ops::layernorm_forward(&mut acts.lnf, &mut acts.lnf_mean, &mut acts.lnf_rstd, last, p.lnfw, p.lnfb, c);
        ops::matmul_forward(&mut acts.logits, &acts.lnf, p.wte, None, c, v);

        let mut total = 0.0;
        let mut count = 0usize;
        for i in 0..n {
            if !batch.mask[i] {
                continue;
            }
            let lp = target_log_prob(&acts.logits[i * v..(i + 1) * v], batch.targets[i] as usize);
            acts.target_logp[i] = lp;
            total -= lp;
            count += 1;
        }
        Ok((count > 0).then(|| total / count as f64))
    }

    /// Gradient of the mean masked NLL, accumulated into `grads`.
    /// Must follow a `forward` on the same batch.
    pub fn backward(
        &self,
        batch: &Batch,
        acts: &Activations<T>,
        grads: &mut [T],
        faults: BackwardFaults,
    ) -> Result<(), LmError> {
        let cfg = &self.config;
        let (b, t, c, nh, v) = (batch.b, batch.t, cfg.d_model, cfg.n_heads, cfg.vocab_size);
        let n = b * t;
        if acts.b != b || acts.t != t {
            return Err(LmError::Shape("activations do not belong to this batch".into()));
        }
        if grads.len() != self.params.len() {
            return Err(LmError::Shape("gradient buffer size differs from parameters".into()));
        }
        let count = batch.n_targets();
        if count == 0 {
            return Err(LmError::EmptyMask);
        }
        let p = view(cfg, &self.params);
        let g = view_mut(cfg, grads);
        let ParamViewMut { wte: gwte, wpe: gwpe, layers: mut glayers, lnfw: glnfw, lnfb: glnfb } = g;

        // d logits = (softmax - onehot) / count on masked rows
        let mut dlogits = vec![T::zero(); n * v];
        let inv = T::of(1.0 / count as f64);
        for i in 0..n {
            if !batch.mask[i] {
                continue;
            }
            let row = &mut dlogits[i * v..(i + 1) * v];
            ops::softmax_rows(row, &acts.logits[i * v..(i + 1) * v], v);
            let tgt = batch.targets[i] as usize;
            row[tgt] = row[tgt] - T::one();
            row.iter_mut().for_each(|x| *x = *x * inv);
        }
        let mut dlnf = vec![T::zero(); n * c];
        ops::matmul_backward(&mut dlnf, gwte, None, &dlogits, &acts.lnf, p.wte, c, v);
        drop(dlogits);

        let mut dres = vec![T::zero(); n * c];
        let last: &[T] = match acts.layers.last() {
            Some(la) => &la.res3,
            None => &acts.encoded,
        };
        ops::layernorm_backward(
            &mut dres,
            glnfw,
            glnfb,
            &dlnf,
            last,
            p.lnfw,
            &acts.lnf_mean,
            &acts.lnf_rstd,
            c,
            faults.layernorm_drop_mean,
        );

        let mut dtmp = vec![T::zero(); n * c];
        let mut dwide = vec![T::zero(); n * 4 * c];
        let mut dwide2 = vec![T::zero(); n * 4 * c];
        let mut dln = vec![T::zero(); n * c];
        let mut dqkv = vec![T::zero(); n * 3 * c];
        for l in (0..cfg.n_layers).rev() {
            let la = &acts.layers[l];
            let residual: &[T] = if l == 0 { &acts.encoded } else { &acts.layers[l - 1].res3 };
            let w = &p.layers[l];
            let gw = &mut glayers[l];

            // MLP branch
            dtmp.copy_from_slice(&dres);
            if acts.dropout_active {
                apply_mask(&mut dtmp, &la.drop_fc);
            }
            dwide.iter_mut().for_each(|x| *x = T::zero());
            ops::matmul_backward(&mut dwide, gw.fcprojw, Some(&mut *gw.fcprojb), &dtmp, &la.fch_gelu, w.fcprojw, 4 * c, c);
            dwide2.iter_mut().for_each(|x| *x = T::zero());
            ops::gelu_backward(&mut dwide2, &la.fch, &dwide, faults.gelu_slope);
            dln.iter_mut().for_each(|x| *x = T::zero());
            ops::matmul_backward(&mut dln, gw.fcw, Some(&mut *gw.fcb), &dwide2, &la.ln2, w.fcw, c, 4 * c);
            ops::layernorm_backward(
                &mut dres,
                gw.ln2w,
                gw.ln2b,
                &dln,
                &la.res2,
                w.ln2w,
                &la.ln2_mean,
                &la.ln2_rstd,
                c,
                faults.layernorm_drop_mean,
            );

            // attention branch
            dtmp.copy_from_slice(&dres);
            if acts.dropout_active {
                apply_mask(&mut dtmp, &la.drop_attn);
            }
            dln.iter_mut().for_each(|x| *x = T::zero());
            ops::matmul_backward(&mut dln, gw.projw, Some(&mut *gw.projb), &dtmp, &la.atty, w.projw, c, c);
            dqkv.iter_mut().for_each(|x| *x = T::zero());
            ops::attention_backward(&mut dqkv, &dln, &la.qkv, &la.att, &batch.seg_start, b, t, c, nh);
            dln.iter_mut().for_each(|x| *x = T::zero());
            ops::matmul_backward(&mut dln, gw.qkvw, Some(&mut *gw.qkvb), &dqkv, &la.ln1, w.qkvw, c, 3 * c);
            ops::layernorm_backward(
                &mut dres,
                gw.ln1w,
                gw.ln1b,
                &dln,
                residual,
                w.ln1w,
                &la.ln1_mean,
                &la.ln1_rstd,
                c,
                faults.layernorm_drop_mean,
            );
        }

        if acts.dropout_active {
            apply_mask(&mut dres, &acts.drop_emb);
        }
        ops::encoder_backward(gwte, gwpe, &dres, &batch.ids, &batch.positions, c);
        Ok(())
    }

    /// Mean masked NLL without dropout.
    pub fn loss(&self, batch: &Batch) -> Result<f64, LmError> {
        let mut acts = Activations::default();
        self.forward(batch, &mut acts, None)?.ok_or(LmError::EmptyMask)
    }

    /// Per-position log-probabilities of `batch.targets` on masked positions.
    pub fn target_log_probs(&self, batch: &Batch) -> Result<Vec<f64>, LmError> {
        let mut acts = Activations::default();
        self.forward(batch, &mut acts, None)?;
        Ok(acts.target_logp)
    }

    /// Full next-token log-distribution at every position of `ids`.
    pub fn log_probs(&self, ids: &[u32]) -> Result<Vec<Vec<f64>>, LmError> {
        let batch = Batch::context(ids);
        let mut acts = Activations::default();
        self.forward(&batch, &mut acts, None)?;
        Ok((0..ids.len()).map(|i| ops::log_softmax_f64(acts.logits_row(i))).collect())
    }

    /// Logits for the token following `ids`.
    pub fn next_token_logits(&self, ids: &[u32]) -> Result<Vec<f64>, LmError> {
        if ids.is_empty() {
            return Err(LmError::Shape("empty context".into()));
        }
        let batch = Batch::context(ids);
        let mut acts = Activations::default();
        self.forward(&batch, &mut acts, None)?;
        Ok(acts.logits_row(ids.len() - 1).iter().map(|x| x.f64()).collect())
    }
}

/// `log softmax(logits)[target]`, accumulated in f64.
pub fn target_log_prob<T: Real>(logits: &[T], target: usize) -> f64 {
    let maxv = logits.iter().map(|x| x.f64()).fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|x| (x.f64() - maxv).exp()).sum();
    logits[target].f64() - maxv - sum.ln()
}
