//! Client interfaces for every external service, plus record/replay caching.
//!
//! The pipeline talks only to [`Providers`]. Each service sits behind a trait
//! so that live HTTP clients, the replay cache, and in-process mocks are
//! interchangeable.

pub mod credibility;
pub mod live;
pub mod mock;
pub mod replay;
pub mod scripted;
pub mod similarity;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::config::{PipelineConfig, SimilarityBackend, Temperatures};
use crate::error::{Error, ProviderError, Result};

pub use credibility::{registrable_domain, CredibilityTable, CredibilityTier};
pub use replay::ReplayStore;
pub use similarity::TokenOverlapSimilarity;

/// The LLM-backed stages; each has its own sampling temperature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Claim,
    Kg,
    Persuasion,
    Question,
    Answer,
    Memory,
    Classifier,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Claim => "claim",
            Stage::Kg => "kg",
            Stage::Persuasion => "persuasion",
            Stage::Question => "question",
            Stage::Answer => "answer",
            Stage::Memory => "memory",
            Stage::Classifier => "classifier",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseContract {
    FreeText,
    StructuredRecord,
}

impl ResponseContract {
    pub fn as_str(self) -> &'static str {
        match self {
            ResponseContract::FreeText => "free_text",
            ResponseContract::StructuredRecord => "structured_record",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub stage: Stage,
    pub prompt: String,
    pub temperature: f64,
    pub contract: ResponseContract,
}

impl LlmRequest {
    /// Builds a request at the configured temperature for `stage`.
    pub fn new(stage: Stage, prompt: impl Into<String>, contract: ResponseContract, temps: &Temperatures) -> Self {
        LlmRequest {
            stage,
            prompt: prompt.into(),
            temperature: temps.for_stage(stage),
            contract,
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    /// Canonical form used for cache keys: only stage, prompt, temperature and contract.
    pub fn canonical(&self) -> serde_json::Value {
        let mut m = BTreeMap::new();
        m.insert("stage", serde_json::Value::from(self.stage.as_str()));
        m.insert("prompt", serde_json::Value::from(self.prompt.as_str()));
        m.insert("temperature", serde_json::Value::from(self.temperature));
        m.insert("contract", serde_json::Value::from(self.contract.as_str()));
        serde_json::to_value(m).expect("canonical request")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSearchHit {
    pub url: String,
    pub title: String,
    #[serde(default)]
    pub snippet: String,
    #[serde(default)]
    pub published_date: Option<NaiveDate>,
    pub rank: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawImageHit {
    #[serde(default)]
    pub image_url: String,
    #[serde(default)]
    pub article_url: String,
    #[serde(default)]
    pub web_entities: Vec<String>,
    #[serde(default)]
    pub article_title: String,
    #[serde(default)]
    pub article_summary: String,
    #[serde(default)]
    pub published_date: Option<NaiveDate>,
}

pub trait LlmProvider: Send + Sync {
    fn complete(&self, req: &LlmRequest) -> Result<String, ProviderError>;
}

pub trait SearchProvider: Send + Sync {
    fn search(&self, query: &str, max_results: usize) -> Result<Vec<RawSearchHit>, ProviderError>;
}

pub trait VisionProvider: Send + Sync {
    fn reverse_image_search(&self, image: &str) -> Result<Vec<RawImageHit>, ProviderError>;
    fn extract_image_entities(&self, image: &str) -> Result<Vec<String>, ProviderError>;
}

pub trait SimilarityProvider: Send + Sync {
    /// Raw similarity; callers clamp to `[0, 1]`.
    fn similarity(&self, a: &str, b: &str) -> Result<f64, ProviderError>;
}

/// Binary classifier service consumed by the distilled final stage.
pub trait SlmProvider: Send + Sync {
    fn predict(&self, records: &[crate::slm::DistillRecord]) -> Result<Vec<crate::slm::SlmPrediction>, ProviderError>;
}

/// Per-service call counts, keyed like `llm.question` or `search`.
#[derive(Debug, Default)]
pub struct CallCounter {
    counts: Mutex<BTreeMap<String, u64>>,
}

impl CallCounter {
    pub fn bump(&self, key: &str) {
        *self.counts.lock().unwrap().entry(key.to_string()).or_insert(0) += 1;
    }

    pub fn get(&self, key: &str) -> u64 {
        self.counts.lock().unwrap().get(key).copied().unwrap_or(0)
    }

    pub fn snapshot(&self) -> BTreeMap<String, u64> {
        self.counts.lock().unwrap().clone()
    }
}

/// How provider traffic is served.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderMode {
    Live,
    /// Live calls, with every response written to the directory.
    Record(PathBuf),
    /// Responses served only from the directory; unseen requests fail.
    Replay(PathBuf),
}

impl ProviderMode {
    pub fn name(&self) -> &'static str {
        match self {
            ProviderMode::Live => "live",
            ProviderMode::Record(_) => "record",
            ProviderMode::Replay(_) => "replay",
        }
    }
}

/// Credentials and endpoints for live services.
#[derive(Debug, Clone, Default)]
pub struct ProviderEnv {
    pub llm_api_key: Option<String>,
    pub llm_api_base: Option<String>,
    pub search_api_key: Option<String>,
    pub search_engine_id: Option<String>,
    pub vision_api_key: Option<String>,
}

impl ProviderEnv {
    pub fn from_env() -> Self {
        let get = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        ProviderEnv {
            llm_api_key: get("LLM_API_KEY"),
            llm_api_base: get("LLM_API_BASE"),
            search_api_key: get("SEARCH_API_KEY"),
            search_engine_id: get("SEARCH_ENGINE_ID"),
            vision_api_key: get("VISION_API_KEY"),
        }
    }
}

/// Every service the pipeline consults, with call metering.
#[derive(Clone)]
pub struct Providers {
    pub llm: Arc<dyn LlmProvider>,
    pub search: Arc<dyn SearchProvider>,
    pub vision: Arc<dyn VisionProvider>,
    pub similarity: Arc<dyn SimilarityProvider>,
    pub slm: Option<Arc<dyn SlmProvider>>,
    pub credibility: Arc<CredibilityTable>,
    pub calls: Arc<CallCounter>,
}

impl Providers {
    pub fn new(
        llm: Arc<dyn LlmProvider>,
        search: Arc<dyn SearchProvider>,
        vision: Arc<dyn VisionProvider>,
        credibility: CredibilityTable,
    ) -> Self {
        Providers {
            llm,
            search,
            vision,
            similarity: Arc::new(TokenOverlapSimilarity),
            slm: None,
            credibility: Arc::new(credibility),
            calls: Arc::new(CallCounter::default()),
        }
    }

    /// Wires providers for `mode` from config and credentials.
    pub fn build(mode: &ProviderMode, config: &PipelineConfig, env: &ProviderEnv) -> Result<Self> {
        let credibility = match &config.credibility_table {
            Some(path) => CredibilityTable::from_path(path)?,
            None => CredibilityTable::builtin(),
        };
        let store = match mode {
            ProviderMode::Live => None,
            ProviderMode::Record(dir) => Some(Arc::new(ReplayStore::open(dir, true)?)),
            ProviderMode::Replay(dir) => Some(Arc::new(ReplayStore::open(dir, false)?)),
        };
        let live = !matches!(mode, ProviderMode::Replay(_));

        let limiter = Arc::new(live::RateLimiter::new(config.rate_limit_per_sec));
        let (llm, search, vision): (Option<Arc<dyn LlmProvider>>, Option<Arc<dyn SearchProvider>>, Option<Arc<dyn VisionProvider>>) =
            if live {
                let key = env
                    .llm_api_key
                    .clone()
                    .ok_or_else(|| ProviderError::Unavailable("LLM_API_KEY is not set".into()))?;
                (
                    Some(Arc::new(live::OpenAiCompatibleLlm::new(
                        key,
                        env.llm_api_base.clone(),
                        config.llm_model.clone(),
                        limiter.clone(),
                    ))),
                    Some(Arc::new(live::GoogleCustomSearch::new(
                        env.search_api_key.clone(),
                        env.search_engine_id.clone(),
                        limiter.clone(),
                    ))),
                    Some(Arc::new(live::GoogleVision::new(env.vision_api_key.clone(), limiter.clone()))),
                )
            } else {
                (None, None, None)
            };

        let similarity: Arc<dyn SimilarityProvider> = match config.similarity {
            SimilarityBackend::TokenOverlap => Arc::new(TokenOverlapSimilarity),
            SimilarityBackend::Embedding => {
                let inner: Option<Arc<dyn SimilarityProvider>> = if live {
                    let key = env
                        .llm_api_key
                        .clone()
                        .ok_or_else(|| ProviderError::Unavailable("LLM_API_KEY is not set".into()))?;
                    Some(Arc::new(similarity::EmbeddingSimilarity::new(
                        key,
                        env.llm_api_base.clone(),
                        config.embedding_model.clone(),
                        limiter.clone(),
                    )))
                } else {
                    None
                };
                match &store {
                    Some(s) => Arc::new(replay::CachedSimilarity::new(inner, s.clone())),
                    None => inner.expect("live similarity"),
                }
            }
        };

        let slm: Option<Arc<dyn SlmProvider>> = match &config.slm_endpoint {
            None => None,
            Some(endpoint) => {
                let inner: Option<Arc<dyn SlmProvider>> =
                    if live { Some(Arc::new(crate::slm::HttpSlmClient::new(endpoint.clone()))) } else { None };
                Some(match &store {
                    Some(s) => Arc::new(replay::CachedSlm::new(inner, s.clone())),
                    None => inner.expect("live slm"),
                })
            }
        };

        let (llm, search, vision): (Arc<dyn LlmProvider>, Arc<dyn SearchProvider>, Arc<dyn VisionProvider>) = match &store {
            Some(s) => (
                Arc::new(replay::CachedLlm::new(llm, s.clone())),
                Arc::new(replay::CachedSearch::new(search, s.clone())),
                Arc::new(replay::CachedVision::new(vision, s.clone())),
            ),
            None => (llm.unwrap(), search.unwrap(), vision.unwrap()),
        };

        Ok(Providers {
            llm,
            search,
            vision,
            similarity,
            slm,
            credibility: Arc::new(credibility),
            calls: Arc::new(CallCounter::default()),
        })
    }

    pub fn with_similarity(mut self, similarity: Arc<dyn SimilarityProvider>) -> Self {
        self.similarity = similarity;
        self
    }

    pub fn with_slm(mut self, slm: Arc<dyn SlmProvider>) -> Self {
        self.slm = Some(slm);
        self
    }

    /// Fresh call counters sharing the same underlying clients.
    pub fn with_fresh_counter(&self) -> Self {
        let mut p = self.clone();
        p.calls = Arc::new(CallCounter::default());
        p
    }

    pub fn llm_complete(&self, req: &LlmRequest) -> Result<String> {
        self.calls.bump(&format!("llm.{}", req.stage));
        Ok(self.llm.complete(req)?)
    }

    /// At most `max_results` hits, ordered by rank.
    pub fn search_web(&self, query: &str, max_results: usize) -> Result<Vec<RawSearchHit>> {
        if query.trim().is_empty() {
            return Err(Error::Precondition("search query must be non-empty".into()));
        }
        if max_results == 0 {
            return Err(Error::Precondition("max_results must be at least 1".into()));
        }
        self.calls.bump("search");
        let mut hits = self.search.search(query, max_results)?;
        hits.sort_by_key(|h| h.rank);
        hits.truncate(max_results);
        Ok(hits)
    }

    pub fn reverse_image_search(&self, image: &str) -> Result<Vec<RawImageHit>> {
        self.calls.bump("vision.reverse_search");
        Ok(self.vision.reverse_image_search(image)?)
    }

    pub fn extract_image_entities(&self, image: &str) -> Result<Vec<String>> {
        self.calls.bump("vision.entities");
        Ok(self.vision.extract_image_entities(image)?)
    }

    /// Similarity clamped to `[0, 1]`.
    pub fn semantic_similarity(&self, a: &str, b: &str) -> Result<f64> {
        if a.trim().is_empty() || b.trim().is_empty() {
            return Err(Error::Precondition("similarity inputs must be non-empty".into()));
        }
        self.calls.bump("similarity");
        let s = self.similarity.similarity(a, b)?;
        Ok(if s.is_nan() { 0.0 } else { s.clamp(0.0, 1.0) })
    }

    pub fn slm_predict(&self, records: &[crate::slm::DistillRecord]) -> Result<Option<Vec<crate::slm::SlmPrediction>>> {
        match &self.slm {
            None => Ok(None),
            Some(slm) => {
                self.calls.bump("slm");
                Ok(Some(slm.predict(records)?))
            }
        }
    }
}
