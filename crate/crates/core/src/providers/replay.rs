//! Content-addressed record/replay cache.
//!
//! Each request is canonicalized (sorted keys) and hashed with SHA-256 over
//! `service \n canonical-json`. The response lives in `<hash>.json` next to
//! the canonical request so that cache files can be read and edited by hand.

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{LlmProvider, LlmRequest, RawImageHit, RawSearchHit, SearchProvider, SimilarityProvider, SlmProvider, VisionProvider};
use crate::error::{Error, ProviderError, Result};
use crate::slm::{DistillRecord, SlmPrediction};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoredExchange {
    service: String,
    request: Value,
    response: StoredResponse,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum StoredResponse {
    Ok(Value),
    Error { kind: String, message: String },
}

pub fn request_hash(service: &str, canonical: &Value) -> String {
    let mut h = Sha256::new();
    h.update(service.as_bytes());
    h.update(b"\n");
    h.update(serde_json::to_string(canonical).expect("canonical json").as_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug)]
pub struct ReplayStore {
    dir: PathBuf,
    writable: bool,
    write_lock: Mutex<()>,
}

impl ReplayStore {
    pub fn open(dir: impl AsRef<Path>, writable: bool) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        if writable {
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        } else if !dir.is_dir() {
            return Err(Error::Precondition(format!("replay directory {} does not exist", dir.display())));
        }
        Ok(ReplayStore {
            dir,
            writable,
            write_lock: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn is_writable(&self) -> bool {
        self.writable
    }

    fn path_for(&self, hash: &str) -> PathBuf {
        self.dir.join(format!("{hash}.json"))
    }

    fn load(&self, service: &str, canonical: &Value) -> Result<Option<StoredResponse>, ProviderError> {
        let hash = request_hash(service, canonical);
        let path = self.path_for(&hash);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(ProviderError::Unavailable(format!("{}: {e}", path.display()))),
        };
        let stored: StoredExchange = serde_json::from_str(&text)
            .map_err(|e| ProviderError::Malformed(format!("replay file {}: {e}", path.display())))?;
        if stored.service != service || &stored.request != canonical {
            return Err(ProviderError::Malformed(format!("replay file {} does not match its request", path.display())));
        }
        Ok(Some(stored.response))
    }

    fn save(&self, service: &str, canonical: &Value, response: StoredResponse) -> Result<(), ProviderError> {
        let hash = request_hash(service, canonical);
        let exchange = StoredExchange {
            service: service.to_string(),
            request: canonical.clone(),
            response,
        };
        let mut text = serde_json::to_string_pretty(&exchange).expect("serializable exchange");
        text.push('\n');
        let _guard = self.write_lock.lock().unwrap();
        let path = self.path_for(&hash);
        let tmp = self.dir.join(format!(".{hash}.tmp"));
        std::fs::write(&tmp, text)
            .and_then(|_| std::fs::rename(&tmp, &path))
            .map_err(|e| ProviderError::Unavailable(format!("cannot write {}: {e}", path.display())))
    }

    /// Serves `canonical` from the cache, falling back to `live` when recording.
    ///
    /// Only outcomes that are properties of the request (successful responses
    /// and unresolvable images) are cached; transport failures are not.
    pub fn through<T, F>(&self, service: &str, canonical: Value, live: Option<F>) -> Result<T, ProviderError>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<T, ProviderError>,
    {
        if let Some(stored) = self.load(service, &canonical)? {
            return match stored {
                StoredResponse::Ok(v) => serde_json::from_value(v)
                    .map_err(|e| ProviderError::Malformed(format!("replayed {service} response: {e}"))),
                StoredResponse::Error { kind, message } => Err(match kind.as_str() {
                    "unresolvable_image" => ProviderError::UnresolvableImage(message),
                    _ => ProviderError::Unavailable(message),
                }),
            };
        }
        let live = match (live, self.writable) {
            (Some(f), true) => f,
            _ => {
                return Err(ProviderError::ReplayMiss {
                    service: service.to_string(),
                    hash: request_hash(service, &canonical),
                })
            }
        };
        match live() {
            Ok(value) => {
                self.save(service, &canonical, StoredResponse::Ok(serde_json::to_value(&value).expect("serializable")))?;
                Ok(value)
            }
            Err(ProviderError::UnresolvableImage(msg)) => {
                self.save(
                    service,
                    &canonical,
                    StoredResponse::Error {
                        kind: "unresolvable_image".into(),
                        message: msg.clone(),
                    },
                )?;
                Err(ProviderError::UnresolvableImage(msg))
            }
            Err(e) => Err(e),
        }
    }
}

pub struct CachedLlm {
    inner: Option<Arc<dyn LlmProvider>>,
    store: Arc<ReplayStore>,
}

impl CachedLlm {
    pub fn new(inner: Option<Arc<dyn LlmProvider>>, store: Arc<ReplayStore>) -> Self {
        CachedLlm { inner, store }
    }
}

impl LlmProvider for CachedLlm {
    fn complete(&self, req: &LlmRequest) -> Result<String, ProviderError> {
        let live = self.inner.as_ref().map(|p| || p.complete(req));
        self.store.through("llm", req.canonical(), live)
    }
}

pub struct CachedSearch {
    inner: Option<Arc<dyn SearchProvider>>,
    store: Arc<ReplayStore>,
}

impl CachedSearch {
    pub fn new(inner: Option<Arc<dyn SearchProvider>>, store: Arc<ReplayStore>) -> Self {
        CachedSearch { inner, store }
    }
}

impl SearchProvider for CachedSearch {
    fn search(&self, query: &str, max_results: usize) -> Result<Vec<RawSearchHit>, ProviderError> {
        let canonical = json!({ "max_results": max_results, "query": query });
        let live = self.inner.as_ref().map(|p| || p.search(query, max_results));
        self.store.through("search", canonical, live)
    }
}

pub struct CachedVision {
    inner: Option<Arc<dyn VisionProvider>>,
    store: Arc<ReplayStore>,
}

impl CachedVision {
    pub fn new(inner: Option<Arc<dyn VisionProvider>>, store: Arc<ReplayStore>) -> Self {
        CachedVision { inner, store }
    }
}

impl VisionProvider for CachedVision {
    fn reverse_image_search(&self, image: &str) -> Result<Vec<RawImageHit>, ProviderError> {
        let canonical = json!({ "image": image, "operation": "reverse_image_search" });
        let live = self.inner.as_ref().map(|p| || p.reverse_image_search(image));
        self.store.through("vision", canonical, live)
    }

    fn extract_image_entities(&self, image: &str) -> Result<Vec<String>, ProviderError> {
        let canonical = json!({ "image": image, "operation": "extract_image_entities" });
        let live = self.inner.as_ref().map(|p| || p.extract_image_entities(image));
        self.store.through("vision", canonical, live)
    }
}

pub struct CachedSimilarity {
    inner: Option<Arc<dyn SimilarityProvider>>,
    store: Arc<ReplayStore>,
}

impl CachedSimilarity {
    pub fn new(inner: Option<Arc<dyn SimilarityProvider>>, store: Arc<ReplayStore>) -> Self {
        CachedSimilarity { inner, store }
    }
}

impl SimilarityProvider for CachedSimilarity {
    fn similarity(&self, a: &str, b: &str) -> Result<f64, ProviderError> {
        let canonical = json!({ "a": a, "b": b });
        let live = self.inner.as_ref().map(|p| || p.similarity(a, b));
        self.store.through("similarity", canonical, live)
    }
}

pub struct CachedSlm {
    inner: Option<Arc<dyn SlmProvider>>,
    store: Arc<ReplayStore>,
}

impl CachedSlm {
    pub fn new(inner: Option<Arc<dyn SlmProvider>>, store: Arc<ReplayStore>) -> Self {
        CachedSlm { inner, store }
    }
}

impl SlmProvider for CachedSlm {
    fn predict(&self, records: &[DistillRecord]) -> Result<Vec<SlmPrediction>, ProviderError> {
        let canonical = json!({ "records": records });
        let live = self.inner.as_ref().map(|p| || p.predict(records));
        self.store.through("slm", canonical, live)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Temperatures;
    use crate::providers::mock::{MockLlm, StaticVision};
    use crate::providers::{ResponseContract, Stage};

    fn req(prompt: &str) -> LlmRequest {
        LlmRequest::new(Stage::Claim, prompt, ResponseContract::FreeText, &Temperatures::default())
    }

    #[test]
    fn record_then_replay_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let live = Arc::new(MockLlm::fixed("recorded answer"));
        let store = Arc::new(ReplayStore::open(dir.path(), true).unwrap());
        let recorder = CachedLlm::new(Some(live.clone()), store);
        assert_eq!(recorder.complete(&req("H1")).unwrap(), "recorded answer");
        // Second identical call is served from the cache.
        assert_eq!(recorder.complete(&req("H1")).unwrap(), "recorded answer");
        assert_eq!(live.calls(), 1);

        let replay = CachedLlm::new(None, Arc::new(ReplayStore::open(dir.path(), false).unwrap()));
        assert_eq!(replay.complete(&req("H1")).unwrap(), "recorded answer");
        assert!(matches!(replay.complete(&req("unseen")), Err(ProviderError::ReplayMiss { .. })));
    }

    #[test]
    fn hash_ignores_nothing_but_request_fields() {
        let a = req("same");
        let b = req("same");
        assert_eq!(request_hash("llm", &a.canonical()), request_hash("llm", &b.canonical()));
        let c = req("same").with_temperature(0.9);
        assert_ne!(request_hash("llm", &a.canonical()), request_hash("llm", &c.canonical()));
    }

    #[test]
    fn unresolvable_images_are_cached() {
        let dir = tempfile::tempdir().unwrap();
        let vision = Arc::new(StaticVision::default().unresolvable("img-404"));
        let store = Arc::new(ReplayStore::open(dir.path(), true).unwrap());
        let rec = CachedVision::new(Some(vision), store);
        assert!(matches!(rec.reverse_image_search("img-404"), Err(ProviderError::UnresolvableImage(_))));
        let replay = CachedVision::new(None, Arc::new(ReplayStore::open(dir.path(), false).unwrap()));
        assert!(matches!(replay.reverse_image_search("img-404"), Err(ProviderError::UnresolvableImage(_))));
        assert!(matches!(replay.reverse_image_search("img-777"), Err(ProviderError::ReplayMiss { .. })));
    }

    #[test]
    fn missing_replay_dir_rejected() {
        assert!(ReplayStore::open("/nonexistent/replay/dir", false).is_err());
    }
}
