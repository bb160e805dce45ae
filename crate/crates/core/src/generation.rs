//! Answer-generation backends.
//!
//! Mirrors the embedding side: a [`GenerationBackend`] trait, addressed by
//! name through the registry, with three implementations. [`EchoBackend`]
//! and [`ScriptedBackend`] exist so pipelines and tests run offline with
//! answers that are fully under the caller's control;
//! [`RemoteGenerationBackend`] talks to a real model service.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::path::Path;
use std::time::Duration;

#[derive(Debug, thiserror::Error)]
pub enum GenerationError {
    #[error("no scripted answer for record {0:?}")]
    MissingScript(String),
    #[error("scripted failure for record {record_id:?}: {message}")]
    ScriptedFailure { record_id: String, message: String },
    #[error("failed to read script {path}: {source}")]
    ScriptIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad script entry at {path} line {line}: {source}")]
    ScriptParse {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("script {path} repeats record {record_id:?}")]
    ScriptDuplicate { path: String, record_id: String },
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

impl GenerationError {
    /// Whether retrying the same request could plausibly succeed.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            Self::Transport {
                retryable: true,
                ..
            }
        )
    }
}

/// Sampling settings passed through to the backend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationParams {
    pub max_tokens: u32,
    pub temperature: f64,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            max_tokens: 64,
            temperature: 0.0,
        }
    }
}

/// One prompt to answer. `record_id` and `term` ride along so offline
/// backends can key or template their replies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub record_id: String,
    pub term: String,
    pub prompt: String,
    pub params: GenerationParams,
}

/// Identity of a generation backend, recorded in run manifests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationDescriptor {
    pub name: String,
    pub deterministic: bool,
}

pub trait GenerationBackend: Send + Sync {
    fn descriptor(&self) -> GenerationDescriptor;
    fn generate(&self, request: &GenerationRequest) -> Result<String, GenerationError>;
}

/// Replies with a fixed sentence built from the request's term. Useful as a
/// smoke-test backend: every answer mentions its term and nothing else.
#[derive(Debug, Default, Clone, Copy)]
pub struct EchoBackend;

impl GenerationBackend for EchoBackend {
    fn descriptor(&self) -> GenerationDescriptor {
        GenerationDescriptor {
            name: "echo".to_owned(),
            deterministic: true,
        }
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String, GenerationError> {
        Ok(format!("{} is {}.", request.term, request.term))
    }
}

#[derive(Debug, Clone, Deserialize)]
struct ScriptEntry {
    record_id: String,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    fail: Option<String>,
}

/// Answers looked up by record id from a prepared table. An entry may carry
/// `fail` instead of `text` to inject an error for that record, which is how
/// tests exercise the harness's failure paths.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    answers: BTreeMap<String, Result<String, String>>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_answer(mut self, record_id: &str, text: &str) -> Self {
        self.answers
            .insert(record_id.to_owned(), Ok(text.to_owned()));
        self
    }

    pub fn with_failure(mut self, record_id: &str, message: &str) -> Self {
        self.answers
            .insert(record_id.to_owned(), Err(message.to_owned()));
        self
    }

    /// Load from a JSONL file of `{"record_id", "text"}` entries, where
    /// `"fail"` may replace `"text"` to script an error.
    pub fn from_jsonl(path: &Path) -> Result<Self, GenerationError> {
        let display = path.display().to_string();
        let content =
            std::fs::read_to_string(path).map_err(|source| GenerationError::ScriptIo {
                path: display.clone(),
                source,
            })?;
        let mut backend = Self::new();
        for (idx, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptEntry =
                serde_json::from_str(line).map_err(|source| GenerationError::ScriptParse {
                    path: display.clone(),
                    line: idx + 1,
                    source,
                })?;
            let value = match (entry.text, entry.fail) {
                (_, Some(message)) => Err(message),
                (Some(text), None) => Ok(text),
                (None, None) => Err("script entry has neither text nor fail".to_owned()),
            };
            if backend
                .answers
                .insert(entry.record_id.clone(), value)
                .is_some()
            {
                return Err(GenerationError::ScriptDuplicate {
                    path: display,
                    record_id: entry.record_id,
                });
            }
        }
        Ok(backend)
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }
}

impl GenerationBackend for ScriptedBackend {
    fn descriptor(&self) -> GenerationDescriptor {
        GenerationDescriptor {
            name: format!("script({} records)", self.answers.len()),
            deterministic: true,
        }
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String, GenerationError> {
        match self.answers.get(&request.record_id) {
            Some(Ok(text)) => Ok(text.clone()),
            Some(Err(message)) => Err(GenerationError::ScriptedFailure {
                record_id: request.record_id.clone(),
                message: message.clone(),
            }),
            None => Err(GenerationError::MissingScript(request.record_id.clone())),
        }
    }
}

/// Connection settings for [`RemoteGenerationBackend`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteGenerationConfig {
    pub endpoint: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
}

impl Default for RemoteGenerationConfig {
    fn default() -> Self {
        Self {
            endpoint: "127.0.0.1:9091".to_owned(),
            timeout_ms: 30_000,
            max_retries: 2,
        }
    }
}

#[derive(Serialize)]
struct RemoteRequest<'a> {
    prompt: &'a str,
    max_tokens: u32,
    temperature: f64,
}

#[derive(Deserialize)]
struct RemoteReply {
    #[serde(default)]
    error: Option<String>,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    model: String,
}

/// Client for a generation service speaking one JSON object per line over
/// TCP: `{"prompt", "max_tokens", "temperature"}` in, `{"text"}` out, with
/// an optional `model` field echoed into the descriptor after first use.
pub struct RemoteGenerationBackend {
    config: RemoteGenerationConfig,
    model: std::sync::Mutex<Option<String>>,
}

impl RemoteGenerationBackend {
    pub fn new(config: RemoteGenerationConfig) -> Self {
        Self {
            config,
            model: std::sync::Mutex::new(None),
        }
    }
}

impl GenerationBackend for RemoteGenerationBackend {
    fn descriptor(&self) -> GenerationDescriptor {
        let model = self.model.lock().expect("descriptor lock");
        let name = match model.as_deref() {
            Some(m) => format!("remote({m}@{})", self.config.endpoint),
            None => format!("remote(@{})", self.config.endpoint),
        };
        GenerationDescriptor {
            name,
            deterministic: false,
        }
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String, GenerationError> {
        let payload = serde_json::to_string(&RemoteRequest {
            prompt: &request.prompt,
            max_tokens: request.params.max_tokens,
            temperature: request.params.temperature,
        })
        .expect("requests serialize");

        let attempts = self.config.max_retries + 1;
        let mut last_io = None;
        for attempt in 1..=attempts {
            if attempt > 1 {
                std::thread::sleep(Duration::from_millis(50 * u64::from(attempt)));
            }
            match round_trip(&self.config, &payload) {
                Ok(line) => {
                    let reply: RemoteReply =
                        serde_json::from_str(&line).map_err(|e| GenerationError::Protocol {
                            endpoint: self.config.endpoint.clone(),
                            detail: format!("unparseable reply: {e}"),
                        })?;
                    if let Some(message) = reply.error {
                        return Err(GenerationError::Service {
                            endpoint: self.config.endpoint.clone(),
                            message,
                        });
                    }
                    let text = reply.text.ok_or_else(|| GenerationError::Protocol {
                        endpoint: self.config.endpoint.clone(),
                        detail: "reply has neither text nor error".to_owned(),
                    })?;
                    if !reply.model.is_empty() {
                        *self.model.lock().expect("descriptor lock") = Some(reply.model);
                    }
                    return Ok(text);
                }
                Err(io) => {
                    log::warn!(
                        "generation service {} attempt {attempt}/{attempts} failed: {io}",
                        self.config.endpoint
                    );
                    last_io = Some(io);
                }
            }
        }
        Err(GenerationError::Transport {
            endpoint: self.config.endpoint.clone(),
            attempts,
            retryable: true,
            source: last_io.expect("at least one attempt ran"),
        })
    }
}

fn round_trip(config: &RemoteGenerationConfig, payload: &str) -> std::io::Result<String> {
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

#[cfg(test)]
mod tests {
    use super::*;

    fn request(record_id: &str, term: &str) -> GenerationRequest {
        GenerationRequest {
            record_id: record_id.to_owned(),
            term: term.to_owned(),
            prompt: format!("Define {term}"),
            params: GenerationParams::default(),
        }
    }

    #[test]
    fn echo_mentions_the_term() {
        let text = EchoBackend.generate(&request("r1", "anemia")).unwrap();
        assert!(text.contains("anemia"));
    }

    #[test]
    fn scripted_answers_by_record_id() {
        let backend = ScriptedBackend::new()
            .with_answer("r1", "a chronic condition")
            .with_failure("r2", "simulated outage");
        assert_eq!(
            backend.generate(&request("r1", "x")).unwrap(),
            "a chronic condition"
        );
        assert!(matches!(
            backend.generate(&request("r2", "x")).unwrap_err(),
            GenerationError::ScriptedFailure { .. }
        ));
        assert!(matches!(
            backend.generate(&request("r3", "x")).unwrap_err(),
            GenerationError::MissingScript(id) if id == "r3"
        ));
    }

    #[test]
    fn scripted_loads_jsonl_and_rejects_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("script.jsonl");
        std::fs::write(
            &path,
            concat!(
                "{\"record_id\":\"r1\",\"text\":\"alpha\"}\n",
                "\n",
                "{\"record_id\":\"r2\",\"fail\":\"boom\"}\n",
            ),
        )
        .unwrap();
        let backend = ScriptedBackend::from_jsonl(&path).unwrap();
        assert_eq!(backend.len(), 2);
        assert_eq!(backend.generate(&request("r1", "t")).unwrap(), "alpha");

        std::fs::write(
            &path,
            concat!(
                "{\"record_id\":\"r1\",\"text\":\"alpha\"}\n",
                "{\"record_id\":\"r1\",\"text\":\"beta\"}\n",
            ),
        )
        .unwrap();
        assert!(matches!(
            ScriptedBackend::from_jsonl(&path).unwrap_err(),
            GenerationError::ScriptDuplicate { record_id, .. } if record_id == "r1"
        ));
    }

    #[test]
    fn transport_errors_are_retryable_scripted_are_not() {
        let transport = GenerationError::Transport {
            endpoint: "nowhere:1".to_owned(),
            attempts: 3,
            retryable: true,
            source: std::io::Error::other("down"),
        };
        assert!(transport.is_retryable());
        let scripted = GenerationError::MissingScript("r".to_owned());
        assert!(!scripted.is_retryable());
    }
}
