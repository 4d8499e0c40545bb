//! In-process providers for tests and offline demos.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Mutex;

use super::{LlmProvider, LlmRequest, RawImageHit, RawSearchHit, SearchProvider, VisionProvider};
use crate::error::ProviderError;

type Responder = Box<dyn Fn(&LlmRequest) -> Result<String, ProviderError> + Send + Sync>;

/// LLM double driven by a closure; every request is logged.
pub struct MockLlm {
    responder: Responder,
    log: Mutex<Vec<LlmRequest>>,
}

impl MockLlm {
    pub fn new<F>(responder: F) -> Self
    where
        F: Fn(&LlmRequest) -> Result<String, ProviderError> + Send + Sync + 'static,
    {
        MockLlm {
            responder: Box::new(responder),
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn fixed(text: &str) -> Self {
        let text = text.to_string();
        Self::new(move |_| Ok(text.clone()))
    }

    pub fn failing() -> Self {
        Self::new(|_| Err(ProviderError::Unavailable("mock provider down".into())))
    }

    pub fn calls(&self) -> usize {
        self.log.lock().unwrap().len()
    }

    pub fn requests(&self) -> Vec<LlmRequest> {
        self.log.lock().unwrap().clone()
    }
}

impl LlmProvider for MockLlm {
    fn complete(&self, req: &LlmRequest) -> Result<String, ProviderError> {
        self.log.lock().unwrap().push(req.clone());
        (self.responder)(req)
    }
}

/// Returns the same hit list for every query, truncated to `max_results`.
#[derive(Debug, Clone, Default)]
pub struct StaticSearch {
    hits: Vec<RawSearchHit>,
}

impl StaticSearch {
    pub fn new(hits: Vec<RawSearchHit>) -> Self {
        StaticSearch { hits }
    }
}

impl SearchProvider for StaticSearch {
    fn search(&self, _query: &str, max_results: usize) -> Result<Vec<RawSearchHit>, ProviderError> {
        let mut hits = self.hits.clone();
        hits.sort_by_key(|h| h.rank);
        hits.truncate(max_results);
        Ok(hits)
    }
}

/// Vision double keyed by image reference. Unknown references are unresolvable.
#[derive(Debug, Clone, Default)]
pub struct StaticVision {
    entities: BTreeMap<String, Vec<String>>,
    hits: BTreeMap<String, Vec<RawImageHit>>,
    unresolvable: BTreeSet<String>,
}

impl StaticVision {
    pub fn with_image(mut self, image: &str, entities: Vec<String>, hits: Vec<RawImageHit>) -> Self {
        self.entities.insert(image.to_string(), entities);
        self.hits.insert(image.to_string(), hits);
        self
    }

    pub fn unresolvable(mut self, image: &str) -> Self {
        self.unresolvable.insert(image.to_string());
        self
    }

    fn check(&self, image: &str) -> Result<(), ProviderError> {
        if self.unresolvable.contains(image) || !self.entities.contains_key(image) {
            return Err(ProviderError::UnresolvableImage(image.to_string()));
        }
        Ok(())
    }
}

impl VisionProvider for StaticVision {
    fn reverse_image_search(&self, image: &str) -> Result<Vec<RawImageHit>, ProviderError> {
        self.check(image)?;
        Ok(self.hits.get(image).cloned().unwrap_or_default())
    }

    fn extract_image_entities(&self, image: &str) -> Result<Vec<String>, ProviderError> {
        self.check(image)?;
        Ok(self.entities.get(image).cloned().unwrap_or_default())
    }
}
