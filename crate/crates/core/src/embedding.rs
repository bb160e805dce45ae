//! Embedding backends and cosine similarity.
//!
//! Every backend implements [`EmbeddingBackend`] and is addressed by name
//! through the registry, so callers never depend on a concrete type. Three
//! implementations live here:
//!
//! * [`HashedBackend`]: offline and deterministic. Each token's vector is
//!   drawn from a ChaCha8 stream seeded by sha256(seed, token), so equal
//!   tokens embed equally across runs and machines.
//! * [`FixedVectorBackend`]: an explicit token table for tests that need
//!   vectors with known geometry.
//! * [`RemoteEmbeddingBackend`]: newline-delimited JSON over TCP against an
//!   external embedding service.

use crate::normalize::normalize_text;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("embedding dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("cosine is undefined for a zero vector")]
    ZeroVector,
    #[error("embedding vectors must be nonempty and finite")]
    InvalidVector,
    #[error("cannot embed {0:?}: no tokens after normalization")]
    EmptyInput(String),
    #[error("no vector registered for token {0:?}")]
    UnknownToken(String),
    #[error("{endpoint}: transport failure after {attempts} attempt(s) (retryable: {retryable}): {source}")]
    Transport {
        endpoint: String,
        attempts: u32,
        retryable: bool,
        #[source]
        source: std::io::Error,
    },
    #[error("{endpoint}: protocol violation: {detail}")]
    Protocol { endpoint: String, detail: String },
    #[error("{endpoint}: service reported: {message}")]
    Service { endpoint: String, message: String },
}

/// A finite, nonempty f64 vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, BackendError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(BackendError::InvalidVector);
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = BackendError;
    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

/// Identity and properties of a backend, recorded in run manifests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub name: String,
    pub dim: usize,
    pub deterministic: bool,
}

/// Token strings paired with their vectors, in text order.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbeddings {
    pub tokens: Vec<String>,
    pub vectors: Vec<EmbeddingVector>,
}

pub trait EmbeddingBackend: Send + Sync {
    fn descriptor(&self) -> BackendDescriptor;

    /// One vector per input text, in input order.
    fn embed_sentences(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, BackendError>;

    /// Per-token vectors for one text, in token order.
    fn embed_tokens(&self, text: &str) -> Result<TokenEmbeddings, BackendError>;
}

/// Cosine similarity. Identical vectors compare as exactly 1.0; all other
/// results are clamped into [-1, 1], logging a warning when rounding pushed
/// the raw value outside that interval.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, BackendError> {
    if a.dim() != b.dim() {
        return Err(BackendError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(BackendError::ZeroVector);
    }
    if a.as_slice() == b.as_slice() {
        return Ok(1.0);
    }
    let raw = dot / (na.sqrt() * nb.sqrt());
    if raw > 1.0 {
        log::warn!("cosine {raw} exceeds 1, clamping");
        Ok(1.0)
    } else if raw < -1.0 {
        log::warn!("cosine {raw} below -1, clamping");
        Ok(-1.0)
    } else {
        Ok(raw)
    }
}

/// Deterministic offline backend. Not a semantic model; it gives every
/// distinct token a stable pseudorandom direction so that pipelines can run
/// end to end without an embedding service.
pub struct HashedBackend {
    seed: u64,
    dim: usize,
}

impl HashedBackend {
    pub const DEFAULT_DIM: usize = 32;

    pub fn new(seed: u64, dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { seed, dim }
    }

    fn token_vector(&self, token: &str) -> EmbeddingVector {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(token.as_bytes());
        let digest = hasher.finalize();
        let mut rng_seed = [0u8; 32];
        rng_seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(rng_seed);
        let values: Vec<f64> = (0..self.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        EmbeddingVector::new(values).expect("generated values are finite")
    }
}

impl Default for HashedBackend {
    fn default() -> Self {
        Self::new(0, Self::DEFAULT_DIM)
    }
}

impl EmbeddingBackend for HashedBackend {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor {
            name: format!("hash(seed={},dim={})", self.seed, self.dim),
            dim: self.dim,
            deterministic: true,
        }
    }

    fn embed_sentences(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, BackendError> {
        texts.iter().map(|t| mean_of_tokens(self, t)).collect()
    }

    fn embed_tokens(&self, text: &str) -> Result<TokenEmbeddings, BackendError> {
        let tokens = normalize_text(text);
        let vectors = tokens.iter().map(|t| self.token_vector(t)).collect();
        Ok(TokenEmbeddings { tokens, vectors })
    }
}

/// Sentence vector as the mean of the backend's token vectors.
fn mean_of_tokens<B: EmbeddingBackend + ?Sized>(
    backend: &B,
    text: &str,
) -> Result<EmbeddingVector, BackendError> {
    let embedded = backend.embed_tokens(text)?;
    if embedded.vectors.is_empty() {
        return Err(BackendError::EmptyInput(text.to_owned()));
    }
    let dim = embedded.vectors[0].dim();
    let mut sum = vec![0.0f64; dim];
    for vector in &embedded.vectors {
        for (acc, v) in sum.iter_mut().zip(vector.as_slice()) {
            *acc += v;
        }
    }
    let n = embedded.vectors.len() as f64;
    EmbeddingVector::new(sum.into_iter().map(|s| s / n).collect())
}

/// Table-driven backend: every token must be registered.
pub struct FixedVectorBackend {
    table: BTreeMap<String, EmbeddingVector>,
    dim: usize,
}

impl FixedVectorBackend {
    pub fn new(entries: Vec<(String, Vec<f64>)>) -> Result<Self, BackendError> {
        let mut table = BTreeMap::new();
        let mut dim = 0;
        for (token, values) in entries {
            let vector = EmbeddingVector::new(values)?;
            if dim == 0 {
                dim = vector.dim();
            } else if vector.dim() != dim {
                return Err(BackendError::DimensionMismatch {
                    left: dim,
                    right: vector.dim(),
                });
            }
            table.insert(token, vector);
        }
        if table.is_empty() {
            return Err(BackendError::InvalidVector);
        }
        Ok(Self { table, dim })
    }
}

impl EmbeddingBackend for FixedVectorBackend {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor {
            name: format!("table({} tokens)", self.table.len()),
            dim: self.dim,
            deterministic: true,
        }
    }

    fn embed_sentences(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, BackendError> {
        texts.iter().map(|t| mean_of_tokens(self, t)).collect()
    }

    fn embed_tokens(&self, text: &str) -> Result<TokenEmbeddings, BackendError> {
        let tokens = normalize_text(text);
        let vectors = tokens
            .iter()
            .map(|t| {
                self.table
                    .get(t)
                    .cloned()
                    .ok_or_else(|| BackendError::UnknownToken(t.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TokenEmbeddings { tokens, vectors })
    }
}

/// Connection settings for [`RemoteEmbeddingBackend`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteEmbeddingConfig {
    pub endpoint: String,
    pub batch_size: usize,
    pub timeout_ms: u64,
    pub max_retries: u32,
}

impl Default for RemoteEmbeddingConfig {
    fn default() -> Self {
        Self {
            endpoint: "127.0.0.1:9090".to_owned(),
            batch_size: 32,
            timeout_ms: 10_000,
            max_retries: 2,
        }
    }
}

#[derive(Serialize)]
struct SentenceRequest<'a> {
    texts: &'a [String],
}

#[derive(Serialize)]
struct TokenRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct ServiceReply {
    #[serde(default)]
    error: Option<String>,
    #[serde(default)]
    vectors: Vec<Vec<f64>>,
    #[serde(default)]
    tokens: Vec<String>,
    #[serde(default)]
    dim: usize,
    #[serde(default)]
    name: String,
}

/// Client for an embedding service speaking one JSON object per line over
/// TCP. A request with `{"texts": [...]}` returns sentence vectors; one with
/// `{"text": "..."}` returns per-token vectors. Either reply carries `dim`
/// and `name`. An empty `texts` list serves as a handshake probe, which
/// `connect` uses to learn the service's descriptor up front.
pub struct RemoteEmbeddingBackend {
    config: RemoteEmbeddingConfig,
    descriptor: BackendDescriptor,
}

impl RemoteEmbeddingBackend {
    pub fn connect(config: RemoteEmbeddingConfig) -> Result<Self, BackendError> {
        let probe = call(&config, &SentenceRequest { texts: &[] })?;
        if probe.dim == 0 {
            return Err(BackendError::Protocol {
                endpoint: config.endpoint.clone(),
                detail: "handshake reply has dim 0".to_owned(),
            });
        }
        let descriptor = BackendDescriptor {
            name: format!("remote({}@{})", probe.name, config.endpoint),
            dim: probe.dim,
            // The service owns the model; assume nothing about stability.
            deterministic: false,
        };
        Ok(Self { config, descriptor })
    }

    fn check_reply_dim(&self, reply: &ServiceReply) -> Result<(), BackendError> {
        if reply.dim != self.descriptor.dim {
            return Err(BackendError::Protocol {
                endpoint: self.config.endpoint.clone(),
                detail: format!(
                    "reply dim {} differs from handshake dim {}",
                    reply.dim, self.descriptor.dim
                ),
            });
        }
        Ok(())
    }
}

impl EmbeddingBackend for RemoteEmbeddingBackend {
    fn descriptor(&self) -> BackendDescriptor {
        self.descriptor.clone()
    }

    fn embed_sentences(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, BackendError> {
        let mut out = Vec::with_capacity(texts.len());
        for batch in texts.chunks(self.config.batch_size.max(1)) {
            let reply = call(&self.config, &SentenceRequest { texts: batch })?;
            self.check_reply_dim(&reply)?;
            if reply.vectors.len() != batch.len() {
                return Err(BackendError::Protocol {
                    endpoint: self.config.endpoint.clone(),
                    detail: format!(
                        "sent {} texts, got {} vectors",
                        batch.len(),
                        reply.vectors.len()
                    ),
                });
            }
            for values in reply.vectors {
                out.push(EmbeddingVector::new(values)?);
            }
        }
        Ok(out)
    }

    fn embed_tokens(&self, text: &str) -> Result<TokenEmbeddings, BackendError> {
        let reply = call(&self.config, &TokenRequest { text })?;
        self.check_reply_dim(&reply)?;
        if reply.tokens.len() != reply.vectors.len() {
            return Err(BackendError::Protocol {
                endpoint: self.config.endpoint.clone(),
                detail: format!(
                    "{} tokens but {} vectors",
                    reply.tokens.len(),
                    reply.vectors.len()
                ),
            });
        }
        let vectors = reply
            .vectors
            .into_iter()
            .map(EmbeddingVector::new)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TokenEmbeddings {
            tokens: reply.tokens,
            vectors,
        })
    }
}

/// One request/reply round trip with retries on transport failure. Service
/// errors and malformed replies are returned immediately: retrying them
/// would send the same bytes to the same deterministic failure.
fn call<R: Serialize>(
    config: &RemoteEmbeddingConfig,
    request: &R,
) -> Result<ServiceReply, BackendError> {
    let payload = serde_json::to_string(request).expect("requests serialize");
    let attempts = config.max_retries + 1;
    let mut last_io: Option<std::io::Error> = None;
    for attempt in 1..=attempts {
        if attempt > 1 {
            std::thread::sleep(Duration::from_millis(50 * u64::from(attempt)));
        }
        match round_trip(config, &payload) {
            Ok(line) => {
                let reply: ServiceReply =
                    serde_json::from_str(&line).map_err(|e| BackendError::Protocol {
                        endpoint: config.endpoint.clone(),
                        detail: format!("unparseable reply: {e}"),
                    })?;
                if let Some(message) = reply.error {
                    return Err(BackendError::Service {
                        endpoint: config.endpoint.clone(),
                        message,
                    });
                }
                return Ok(reply);
            }
            Err(io) => {
                log::warn!(
                    "embedding service {} attempt {attempt}/{attempts} failed: {io}",
                    config.endpoint
                );
                last_io = Some(io);
            }
        }
    }
    Err(BackendError::Transport {
        endpoint: config.endpoint.clone(),
        attempts,
        retryable: true,
        source: last_io.expect("at least one attempt ran"),
    })
}

fn round_trip(config: &RemoteEmbeddingConfig, payload: &str) -> std::io::Result<String> {
    let timeout = Duration::from_millis(config.timeout_ms);
    let addr = config
        .endpoint
        .to_socket_addrs()?
        .next()
        .ok_or_else(|| std::io::Error::other("endpoint resolved to no address"))?;
    let mut stream = TcpStream::connect_timeout(&addr, timeout)?;
    stream.set_read_timeout(Some(timeout))?;
    stream.set_write_timeout(Some(timeout))?;
    stream.write_all(payload.as_bytes())?;
    stream.write_all(b"\n")?;
    stream.flush()?;
    let mut line = String::new();
    BufReader::new(stream).read_line(&mut line)?;
    if line.is_empty() {
        return Err(std::io::Error::other("connection closed before reply"));
    }
    Ok(line)
}
