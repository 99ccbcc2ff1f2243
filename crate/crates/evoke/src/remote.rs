//! External embedding provider client and the on-disk embedding cache.
//!
//! Wire format: `POST <url>` with body `{"model": "...", "input": "..."}`;
//! the endpoint replies `{"embedding": [f64, ...]}`. The credential is sent
//! as a bearer token. Endpoint, model, and credential come from the
//! `EVOKE_EMBED_URL` / `EVOKE_EMBED_MODEL` / `EVOKE_EMBED_API_KEY`
//! environment variables unless set in the config file.
//!
//! Responses are cached on disk keyed by `(provider fingerprint, text)`, so
//! repeated runs embed each text at most once and stay deterministic.

use evoke_core::embedding::{EmbeddingProvider, EmbeddingVector};
use evoke_core::error::EmbedError;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::time::Duration;

use crate::hashes::sha256_hex;

pub const ENV_URL: &str = "EVOKE_EMBED_URL";
pub const ENV_MODEL: &str = "EVOKE_EMBED_MODEL";
pub const ENV_API_KEY: &str = "EVOKE_EMBED_API_KEY";

/// Remote client settings.
#[derive(Debug, Clone)]
pub struct RemoteEmbedderConfig {
    pub url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub dimension: usize,
    /// Upper bound on concurrent requests (requests are currently issued
    /// sequentially, trivially within the bound).
    pub max_in_flight: usize,
    pub max_retries: u32,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    embedding: Vec<f64>,
}

/// Blocking HTTPS embedding client with exponential-backoff retries.
#[derive(Debug)]
pub struct RemoteEmbedder {
    config: RemoteEmbedderConfig,
    client: reqwest::blocking::Client,
}

impl RemoteEmbedder {
    /// Build from explicit values, falling back to the environment; missing
    /// settings name the variable that would supply them.
    pub fn from_config(
        url: Option<String>,
        model: Option<String>,
        api_key: Option<String>,
        dimension: usize,
        max_in_flight: usize,
    ) -> Result<Self, EmbedError> {
        let url = url
            .or_else(|| std::env::var(ENV_URL).ok())
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| EmbedError::MissingConfiguration(ENV_URL.to_string()))?;
        let model = model
            .or_else(|| std::env::var(ENV_MODEL).ok())
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| EmbedError::MissingConfiguration(ENV_MODEL.to_string()))?;
        let api_key = api_key.or_else(|| std::env::var(ENV_API_KEY).ok());
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| EmbedError::Provider {
                text_id: String::new(),
                message: e.to_string(),
                retryable: false,
            })?;
        Ok(Self {
            config: RemoteEmbedderConfig {
                url,
                model,
                api_key,
                dimension,
                max_in_flight: max_in_flight.max(1),
                max_retries: 3,
            },
            client,
        })
    }

    fn request_once(&self, text: &str) -> Result<Vec<f64>, String> {
        let mut request = self
            .client
            .post(&self.config.url)
            .json(&EmbedRequest {
                model: &self.config.model,
                input: text,
            });
        if let Some(key) = &self.config.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| e.to_string())?;
        if !response.status().is_success() {
            return Err(format!("endpoint returned {}", response.status()));
        }
        let body: EmbedResponse = response.json().map_err(|e| e.to_string())?;
        Ok(body.embedding)
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn fingerprint(&self) -> String {
        format!("remote:{}:d={}", self.config.model, self.config.dimension)
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let text_id: String = text.chars().take(24).collect();
        let mut last_error = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(100 << attempt));
            }
            match self.request_once(text) {
                Ok(values) => {
                    if values.len() != self.config.dimension {
                        return Err(EmbedError::DimensionMismatch {
                            expected: self.config.dimension,
                            got: values.len(),
                        });
                    }
                    return EmbeddingVector::new(values);
                }
                Err(message) => {
                    log::warn!("embedding request attempt {attempt} failed: {message}");
                    last_error = message;
                }
            }
        }
        Err(EmbedError::Provider {
            text_id,
            message: last_error,
            retryable: true,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    fingerprint: String,
    embedding: Vec<f64>,
}

/// Disk cache wrapper around any embedding provider. Cache keys hash the
/// provider fingerprint together with the text, so switching models never
/// serves stale vectors.
pub struct CachedEmbedder<P> {
    inner: P,
    dir: PathBuf,
}

impl<P: EmbeddingProvider> CachedEmbedder<P> {
    pub fn new(inner: P, dir: PathBuf) -> std::io::Result<Self> {
        std::fs::create_dir_all(&dir)?;
        Ok(Self { inner, dir })
    }

    fn key_path(&self, text: &str) -> PathBuf {
        let key = sha256_hex(format!("{}\u{0}{}", self.inner.fingerprint(), text).as_bytes());
        self.dir.join(format!("{key}.json"))
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for CachedEmbedder<P> {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn fingerprint(&self) -> String {
        // identical vectors, identical identity: the cache is transparent
        self.inner.fingerprint()
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let path = self.key_path(text);
        if let Ok(bytes) = std::fs::read(&path) {
            if let Ok(entry) = serde_json::from_slice::<CacheEntry>(&bytes) {
                if entry.fingerprint == self.inner.fingerprint()
                    && entry.embedding.len() == self.inner.dimension()
                {
                    return EmbeddingVector::new(entry.embedding);
                }
            }
            log::warn!("ignoring unreadable cache entry {}", path.display());
        }
        let vector = self.inner.embed_text(text)?;
        let entry = CacheEntry {
            fingerprint: self.inner.fingerprint(),
            embedding: vector.as_slice().to_vec(),
        };
        let tmp = path.with_extension("tmp");
        if std::fs::write(&tmp, serde_json::to_vec(&entry).expect("serializable"))
            .and_then(|_| std::fs::rename(&tmp, &path))
            .is_err()
        {
            log::warn!("could not persist embedding cache entry {}", path.display());
        }
        Ok(vector)
    }
}
