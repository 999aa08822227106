//! Embedding providers: text/image items to L2-normalized vectors.
//!
//! Wire protocol (HTTP sidecar):
//! `POST /embed` with `{"kind":"text"|"image","items":[...]}` answers
//! `{"dim":D,"vectors":[[f32; D], ...]}`; `GET /health` answers `{"dim":D,"model":...}`.

use std::collections::HashMap;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Text inputs longer than this (in characters) are cut before embedding.
pub const DEFAULT_TEXT_LIMIT: usize = 512;
const NORM_TOLERANCE: f32 = 1e-4;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("embedding transport failure: {0}")]
    Transport(String),
    #[error("embedding provider answered {status}: {body}")]
    Status { status: u16, body: String },
    #[error("embedding contract violation: {0}")]
    Contract(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedKind {
    Text,
    Image,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub kind: EmbedKind,
    pub items: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub dim: usize,
    pub vectors: Vec<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub dim: usize,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_text_len: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_batch: Option<usize>,
}

/// Anything that maps text or image references to unit vectors of a fixed dimension.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;

    fn text_limit(&self) -> usize {
        DEFAULT_TEXT_LIMIT
    }

    fn embed(&self, kind: EmbedKind, items: &[String]) -> Result<Vec<Vec<f32>>, ProviderError>;
}

pub fn l2_normalize(v: &mut [f32]) {
    let n = v.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt();
    if n > 0.0 {
        for x in v.iter_mut() {
            *x = (*x as f64 / n) as f32;
        }
    }
}

pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (*x as f64) * (*y as f64)).sum::<f64>() as f32
}

/// Checks count, uniform dimension and unit norm of a provider answer.
pub fn check_vectors(expected_dim: usize, n_items: usize, vectors: &[Vec<f32>]) -> Result<(), ProviderError> {
    if vectors.len() != n_items {
        return Err(ProviderError::Contract(format!("asked for {n_items} vectors, got {}", vectors.len())));
    }
    for (i, v) in vectors.iter().enumerate() {
        if v.len() != expected_dim {
            return Err(ProviderError::Contract(format!(
                "vector {i} has dimension {}, provider declared {expected_dim}",
                v.len()
            )));
        }
        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(ProviderError::Contract(format!("vector {i} has norm {norm}")));
        }
    }
    Ok(())
}

/// Deterministic in-process provider.
///
/// Each item is reduced to a key (the item itself unless aliased) whose vector is
/// a seeded hash expanded to a Gaussian direction. The key space is shared between
/// text and image items. Image references of the form
/// `synth://...#Surface A|Surface B` are "scenes": their vector is the normalized
/// sum of the listed surfaces' vectors plus a reference-specific noise term.
#[derive(Debug, Clone)]
pub struct StubProvider {
    dim: usize,
    seed: u64,
    aliases: HashMap<String, String>,
    scene_noise: f32,
    text_limit: usize,
}

impl StubProvider {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        StubProvider { dim, seed, aliases: HashMap::new(), scene_noise: 0.5, text_limit: DEFAULT_TEXT_LIMIT }
    }

    /// Makes `item` embed exactly like `key`.
    pub fn alias(mut self, item: impl Into<String>, key: impl Into<String>) -> Self {
        self.aliases.insert(item.into(), key.into());
        self
    }

    pub fn add_alias(&mut self, item: impl Into<String>, key: impl Into<String>) {
        self.aliases.insert(item.into(), key.into());
    }

    pub fn with_scene_noise(mut self, noise: f32) -> Self {
        self.scene_noise = noise;
        self
    }

    pub fn with_text_limit(mut self, limit: usize) -> Self {
        self.text_limit = limit;
        self
    }

    fn key_vector(&self, key: &str) -> Vec<f32> {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(key.as_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(seed);
        let mut v: Vec<f32> = (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        l2_normalize(&mut v);
        v
    }

    fn item_vector(&self, kind: EmbedKind, item: &str) -> Vec<f32> {
        if let Some(key) = self.aliases.get(item) {
            return self.key_vector(key);
        }
        if kind == EmbedKind::Image {
            if let Some(scene) = parse_scene(item) {
                let mut acc = self.key_vector(item);
                for x in acc.iter_mut() {
                    *x *= self.scene_noise;
                }
                for s in scene {
                    for (a, b) in acc.iter_mut().zip(self.key_vector(s)) {
                        *a += b;
                    }
                }
                l2_normalize(&mut acc);
                return acc;
            }
        }
        self.key_vector(item)
    }
}

/// Surfaces listed in a `synth://...#A|B` image reference.
pub fn parse_scene(image_ref: &str) -> Option<Vec<&str>> {
    let rest = image_ref.strip_prefix("synth://")?;
    let (_, frag) = rest.split_once('#')?;
    Some(frag.split('|').filter(|s| !s.is_empty()).collect())
}

impl EmbeddingProvider for StubProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn text_limit(&self) -> usize {
        self.text_limit
    }

    fn embed(&self, kind: EmbedKind, items: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        Ok(items.iter().map(|it| self.item_vector(kind, it)).collect())
    }
}

/// Client for the embedding sidecar.
#[derive(Debug, Clone)]
pub struct HttpProvider {
    base: String,
    agent: ureq::Agent,
    health: HealthResponse,
    max_batch: usize,
}

impl HttpProvider {
    /// Connects and performs the `/health` handshake.
    pub fn connect(base_url: &str) -> Result<Self, ProviderError> {
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs(120)).build();
        let base = base_url.trim_end_matches('/').to_string();
        let health: HealthResponse = agent
            .get(&format!("{base}/health"))
            .call()
            .map_err(map_ureq)?
            .into_json()
            .map_err(|e| ProviderError::Contract(format!("bad /health payload: {e}")))?;
        if health.dim == 0 {
            return Err(ProviderError::Contract("provider declared dimension 0".into()));
        }
        let max_batch = health.max_batch.unwrap_or(64).max(1);
        Ok(HttpProvider { base, agent, health, max_batch })
    }

    /// Like [`connect`](Self::connect) but fails unless the declared dimension is `dim`.
    pub fn connect_expecting(base_url: &str, dim: usize) -> Result<Self, ProviderError> {
        let p = Self::connect(base_url)?;
        if p.health.dim != dim {
            return Err(ProviderError::Contract(format!("provider dimension {} != expected {dim}", p.health.dim)));
        }
        Ok(p)
    }

    pub fn health(&self) -> &HealthResponse {
        &self.health
    }
}

fn map_ureq(e: ureq::Error) -> ProviderError {
    match e {
        ureq::Error::Status(status, resp) => {
            ProviderError::Status { status, body: resp.into_string().unwrap_or_default() }
        }
        ureq::Error::Transport(t) => ProviderError::Transport(t.to_string()),
    }
}

impl EmbeddingProvider for HttpProvider {
    fn dim(&self) -> usize {
        self.health.dim
    }

    fn text_limit(&self) -> usize {
        self.health.max_text_len.unwrap_or(DEFAULT_TEXT_LIMIT)
    }

    fn embed(&self, kind: EmbedKind, items: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        let mut out = Vec::with_capacity(items.len());
        for chunk in items.chunks(self.max_batch) {
            let req = EmbedRequest { kind, items: chunk.to_vec() };
            let resp: EmbedResponse = self
                .agent
                .post(&format!("{}/embed", self.base))
                .send_json(&req)
                .map_err(map_ureq)?
                .into_json()
                .map_err(|e| ProviderError::Contract(format!("bad /embed payload: {e}")))?;
            if resp.dim != self.health.dim {
                return Err(ProviderError::Contract(format!(
                    "response dimension {} != handshake dimension {}",
                    resp.dim, self.health.dim
                )));
            }
            check_vectors(self.health.dim, chunk.len(), &resp.vectors)?;
            out.extend(resp.vectors);
        }
        Ok(out)
    }
}
