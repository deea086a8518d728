//! Text embedding backends and initial node features.

use crate::gnn::Linear;
use crate::proxy::AnnotatedNetwork;
use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding backend failed: {0}")]
    Backend(String),
    #[error("embedding configuration error: {0}")]
    Config(String),
}

/// A text encoder with a fixed output dimension.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    /// Stable identifier, part of the run configuration.
    fn id(&self) -> String;
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError>;

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let mut v = self.embed_batch(&[text])?;
        v.pop().ok_or_else(|| EmbedError::Backend("empty batch answer".into()))
    }
}

/// Hashed bag of words: lowercase alphanumeric tokens, FNV-1a into `dim`
/// buckets, counts, L2 normalisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Result<Self, EmbedError> {
        if dim == 0 {
            return Err(EmbedError::Config("embedding dim must be positive".into()));
        }
        Ok(Self { dim })
    }

    /// Bucket of an already lowercased token.
    pub fn bucket(&self, token: &str) -> usize {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in token.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        (h % self.dim as u64) as usize
    }

    fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for token in text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            v[self.bucket(&token.to_lowercase())] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl Embedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn id(&self) -> String {
        format!("hash-{}", self.dim)
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

/// Client of an embedding service speaking
/// `POST /embed {"texts": [...]} -> {"dim": d, "vectors": [[...]]}`.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    url: String,
    dim: usize,
    batch: usize,
    client: reqwest::blocking::Client,
}

impl RemoteEmbedder {
    pub fn new(base_url: &str, dim: usize, timeout: Duration) -> Result<Self, EmbedError> {
        if dim == 0 {
            return Err(EmbedError::Config("embedding dim must be positive".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| EmbedError::Backend(e.to_string()))?;
        Ok(Self { url: format!("{}/embed", base_url.trim_end_matches('/')), dim, batch: 32, client })
    }

    /// Maximum texts per request.
    pub fn with_batch(mut self, batch: usize) -> Self {
        self.batch = batch.max(1);
        self
    }

    fn request(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let resp = self
            .client
            .post(&self.url)
            .json(&EmbedRequest { texts })
            .send()
            .map_err(|e| EmbedError::Backend(format!("{}: {e}", self.url)))?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(EmbedError::Backend(format!("{} answered {status}: {body}", self.url)));
        }
        let body: EmbedResponse = resp.json().map_err(|e| EmbedError::Backend(format!("bad embed response: {e}")))?;
        if body.dim != self.dim {
            return Err(EmbedError::Config(format!("service dim {} but configured {}", body.dim, self.dim)));
        }
        if body.vectors.len() != texts.len() {
            return Err(EmbedError::Backend(format!(
                "sent {} texts, received {} vectors",
                texts.len(),
                body.vectors.len()
            )));
        }
        for v in &body.vectors {
            if v.len() != self.dim {
                return Err(EmbedError::Config(format!("vector of length {} but dim {}", v.len(), self.dim)));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(EmbedError::Backend("non-finite vector entry".into()));
            }
        }
        Ok(body.vectors)
    }
}

impl Embedder for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn id(&self) -> String {
        format!("remote-{}", self.dim)
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch) {
            out.extend(self.request(chunk)?);
        }
        Ok(out)
    }
}

/// Memoises another embedder by text hash; the map can be saved to disk.
pub struct CachedEmbedder<E> {
    inner: E,
    map: Mutex<HashMap<String, Vec<f64>>>,
}

fn text_key(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl<E: Embedder> CachedEmbedder<E> {
    pub fn new(inner: E) -> Self {
        Self { inner, map: Mutex::new(HashMap::new()) }
    }

    /// Loads a map written by [`CachedEmbedder::save`]; a missing file gives an empty cache.
    pub fn load(inner: E, path: &Path) -> Result<Self, EmbedError> {
        let map: HashMap<String, Vec<f64>> = match std::fs::read(path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| EmbedError::Config(format!("{}: {e}", path.display())))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => HashMap::new(),
            Err(e) => return Err(EmbedError::Config(format!("{}: {e}", path.display()))),
        };
        if let Some(v) = map.values().find(|v| v.len() != inner.dim()) {
            return Err(EmbedError::Config(format!("cached vector of length {} but dim {}", v.len(), inner.dim())));
        }
        Ok(Self { inner, map: Mutex::new(map) })
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let map = self.map.lock().unwrap_or_else(|e| e.into_inner());
        let sorted: std::collections::BTreeMap<_, _> = map.iter().collect();
        std::fs::write(path, serde_json::to_vec(&sorted)?)
    }

    pub fn len(&self) -> usize {
        self.map.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<E: Embedder> Embedder for CachedEmbedder<E> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn id(&self) -> String {
        self.inner.id()
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let keys: Vec<String> = texts.iter().map(|t| text_key(t)).collect();
        let missing: Vec<&str> = {
            let map = self.map.lock().unwrap_or_else(|e| e.into_inner());
            let mut seen = std::collections::HashSet::new();
            texts
                .iter()
                .zip(&keys)
                .filter(|(_, k)| !map.contains_key(*k) && seen.insert(k.as_str()))
                .map(|(t, _)| *t)
                .collect()
        };
        if !missing.is_empty() {
            let fresh = self.inner.embed_batch(&missing)?;
            let mut map = self.map.lock().unwrap_or_else(|e| e.into_inner());
            for (t, v) in missing.iter().zip(fresh) {
                map.insert(text_key(t), v);
            }
        }
        let map = self.map.lock().unwrap_or_else(|e| e.into_inner());
        Ok(keys.iter().map(|k| map[k].clone()).collect())
    }
}

/// Initial node fusion: `h0 = [h_ori ; h_ext] W + b`, `W` stored as `2d x hidden`.
pub type FusionLayer = Linear;

/// One encoded graph ready for the GNN.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInput {
    pub id: String,
    /// `n x 2d`: node text embedding next to explanation embedding.
    pub x: Array2<f64>,
    /// Undirected tree edges as (child, parent).
    pub edges: Vec<(usize, usize)>,
    /// Gold label indices.
    pub labels: Vec<usize>,
}

impl GraphInput {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }
}

/// Embeds every node text and its explanation (zero vector when absent).
pub fn encode_network(net: &AnnotatedNetwork, backend: &dyn Embedder) -> Result<GraphInput, EmbedError> {
    let d = backend.dim();
    let n = net.network.len();
    let expl = net.node_explanations();
    let mut texts: Vec<&str> = net.network.nodes.iter().map(|v| v.text.as_str()).collect();
    let with_expl: Vec<usize> = (0..n).filter(|&i| !expl[i].is_empty()).collect();
    texts.extend(with_expl.iter().map(|&i| expl[i]));
    let vectors = backend.embed_batch(&texts)?;
    if vectors.len() != texts.len() {
        return Err(EmbedError::Backend(format!("asked for {} vectors, got {}", texts.len(), vectors.len())));
    }
    let mut x = Array2::zeros((n, 2 * d));
    for (i, v) in vectors[..n].iter().enumerate() {
        check_dim(v, d)?;
        x.slice_mut(s![i, ..d]).assign(&ndarray::ArrayView1::from(v.as_slice()));
    }
    for (&i, v) in with_expl.iter().zip(&vectors[n..]) {
        check_dim(v, d)?;
        x.slice_mut(s![i, d..]).assign(&ndarray::ArrayView1::from(v.as_slice()));
    }
    Ok(GraphInput {
        id: net.network.article.id.clone(),
        x,
        edges: net.network.edges.iter().map(|e| (e.child, e.parent)).collect(),
        labels: net.network.article.labels.clone(),
    })
}

fn check_dim(v: &[f64], d: usize) -> Result<(), EmbedError> {
    if v.len() != d {
        return Err(EmbedError::Config(format!("vector of length {} but dim {d}", v.len())));
    }
    Ok(())
}

/// Fused initial node features `h0` for one encoded graph.
pub fn init_node_features(input: &GraphInput, fusion: &FusionLayer) -> Result<Array2<f64>, EmbedError> {
    if fusion.w.nrows() != input.x.ncols() {
        return Err(EmbedError::Config(format!(
            "fusion expects {} inputs, graph has {}",
            fusion.w.nrows(),
            input.x.ncols()
        )));
    }
    Ok(fusion.forward(&input.x))
}
