//! Name-keyed registry of embedding and generation backends.
//!
//! Pipelines select backends by string (from config or the command line),
//! never by concrete type. The registry maps each name to a factory that
//! builds a boxed trait object from the run's settings. `with_defaults`
//! wires up the built-in backends; callers may register additional ones,
//! which is how tests plug in table-driven embeddings without the core
//! crate knowing about them.

use crate::embedding::{
    EmbeddingBackend, HashedBackend, RemoteEmbeddingBackend, RemoteEmbeddingConfig,
};
use crate::generation::{
    EchoBackend, GenerationBackend, GenerationParams, RemoteGenerationBackend,
    RemoteGenerationConfig, ScriptedBackend,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("unknown embedding backend {name:?}; known: {}", known.join(", "))]
    UnknownEmbedding { name: String, known: Vec<String> },
    #[error("unknown generation backend {name:?}; known: {}", known.join(", "))]
    UnknownGeneration { name: String, known: Vec<String> },
    #[error("backend {backend:?} requires the {setting} setting")]
    MissingSetting {
        backend: &'static str,
        setting: &'static str,
    },
    #[error(transparent)]
    Embedding(#[from] crate::embedding::BackendError),
    #[error(transparent)]
    Generation(#[from] crate::generation::GenerationError),
}

/// Everything an embedding factory may need to build its backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingSettings {
    /// Registry key, e.g. "hash" or "remote".
    pub backend: String,
    /// Seed for deterministic offline backends.
    pub seed: u64,
    /// Vector width for offline backends.
    pub dim: usize,
    pub remote: RemoteEmbeddingConfig,
}

impl Default for EmbeddingSettings {
    fn default() -> Self {
        Self {
            backend: "hash".to_owned(),
            seed: 0,
            dim: HashedBackend::DEFAULT_DIM,
            remote: RemoteEmbeddingConfig::default(),
        }
    }
}

/// Everything a generation factory may need to build its backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationSettings {
    /// Registry key, e.g. "echo", "script", or "remote".
    pub backend: String,
    /// Answer table for the "script" backend.
    pub script_path: Option<PathBuf>,
    pub remote: RemoteGenerationConfig,
    pub params: GenerationParams,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        Self {
            backend: "echo".to_owned(),
            script_path: None,
            remote: RemoteGenerationConfig::default(),
            params: GenerationParams::default(),
        }
    }
}

type EmbeddingFactory = Box<
    dyn Fn(&EmbeddingSettings) -> Result<Box<dyn EmbeddingBackend>, RegistryError> + Send + Sync,
>;
type GenerationFactory = Box<
    dyn Fn(&GenerationSettings) -> Result<Box<dyn GenerationBackend>, RegistryError> + Send + Sync,
>;

pub struct BackendRegistry {
    embedding: BTreeMap<String, EmbeddingFactory>,
    generation: BTreeMap<String, GenerationFactory>,
}

impl BackendRegistry {
    /// Empty registry; useful when a test wants full control of the names.
    pub fn new() -> Self {
        Self {
            embedding: BTreeMap::new(),
            generation: BTreeMap::new(),
        }
    }

    /// Registry with the built-in backends: embedding "hash" and "remote",
    /// generation "echo", "script", and "remote".
    pub fn with_defaults() -> Self {
        let mut registry = Self::new();
        registry.register_embedding("hash", |settings| {
            Ok(Box::new(HashedBackend::new(settings.seed, settings.dim)))
        });
        registry.register_embedding("remote", |settings| {
            Ok(Box::new(RemoteEmbeddingBackend::connect(
                settings.remote.clone(),
            )?))
        });
        registry.register_generation("echo", |_| Ok(Box::new(EchoBackend)));
        registry.register_generation("script", |settings| {
            let path = settings
                .script_path
                .as_ref()
                .ok_or(RegistryError::MissingSetting {
                    backend: "script",
                    setting: "script_path",
                })?;
            Ok(Box::new(ScriptedBackend::from_jsonl(path)?))
        });
        registry.register_generation("remote", |settings| {
            Ok(Box::new(RemoteGenerationBackend::new(
                settings.remote.clone(),
            )))
        });
        registry
    }

    pub fn register_embedding<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&EmbeddingSettings) -> Result<Box<dyn EmbeddingBackend>, RegistryError>
            + Send
            + Sync
            + 'static,
    {
        self.embedding.insert(name.to_owned(), Box::new(factory));
    }

    pub fn register_generation<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&GenerationSettings) -> Result<Box<dyn GenerationBackend>, RegistryError>
            + Send
            + Sync
            + 'static,
    {
        self.generation.insert(name.to_owned(), Box::new(factory));
    }

    pub fn embedding_names(&self) -> Vec<String> {
        self.embedding.keys().cloned().collect()
    }

    pub fn generation_names(&self) -> Vec<String> {
        self.generation.keys().cloned().collect()
    }

    pub fn build_embedding(
        &self,
        settings: &EmbeddingSettings,
    ) -> Result<Box<dyn EmbeddingBackend>, RegistryError> {
        let factory = self.embedding.get(&settings.backend).ok_or_else(|| {
            RegistryError::UnknownEmbedding {
                name: settings.backend.clone(),
                known: self.embedding_names(),
            }
        })?;
        factory(settings)
    }

    pub fn build_generation(
        &self,
        settings: &GenerationSettings,
    ) -> Result<Box<dyn GenerationBackend>, RegistryError> {
        let factory = self.generation.get(&settings.backend).ok_or_else(|| {
            RegistryError::UnknownGeneration {
                name: settings.backend.clone(),
                known: self.generation_names(),
            }
        })?;
        factory(settings)
    }
}

impl Default for BackendRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}
