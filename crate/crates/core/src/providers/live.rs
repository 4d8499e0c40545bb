//! HTTP clients for the live services: an OpenAI-compatible chat endpoint,
//! Google Custom Search, and Google Cloud Vision.

use std::sync::{Arc, Mutex, OnceLock};
use std::time::{Duration, Instant};

use base64::Engine;
use chrono::NaiveDate;
use regex::Regex;
use serde_json::{json, Value};

use super::{LlmProvider, LlmRequest, RawImageHit, RawSearchHit, ResponseContract, SearchProvider, VisionProvider};
use crate::error::ProviderError;

pub const DEFAULT_LLM_BASE: &str = "https://api.openai.com/v1";
const SEARCH_ENDPOINT: &str = "https://www.googleapis.com/customsearch/v1";
const VISION_ENDPOINT: &str = "https://vision.googleapis.com/v1/images:annotate";

pub(crate) fn http_client() -> &'static reqwest::blocking::Client {
    static CLIENT: OnceLock<reqwest::blocking::Client> = OnceLock::new();
    CLIENT.get_or_init(|| {
        reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(90))
            .build()
            .expect("http client")
    })
}

fn unavailable(e: impl std::fmt::Display) -> ProviderError {
    ProviderError::Unavailable(e.to_string())
}

/// Token bucket shared by all live clients of one run.
#[derive(Debug)]
pub struct RateLimiter {
    per_sec: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn new(per_sec: f64) -> Self {
        let burst = per_sec.max(1.0);
        RateLimiter {
            per_sec,
            state: Mutex::new((burst, Instant::now())),
        }
    }

    /// Blocks until one request may be sent.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut st = self.state.lock().unwrap();
                let now = Instant::now();
                let burst = self.per_sec.max(1.0);
                st.0 = (st.0 + now.duration_since(st.1).as_secs_f64() * self.per_sec).min(burst);
                st.1 = now;
                if st.0 >= 1.0 {
                    st.0 -= 1.0;
                    return;
                }
                (1.0 - st.0) / self.per_sec
            };
            std::thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}

pub struct OpenAiCompatibleLlm {
    api_key: String,
    base: String,
    model: String,
    limiter: Arc<RateLimiter>,
}

impl OpenAiCompatibleLlm {
    pub fn new(api_key: String, base: Option<String>, model: String, limiter: Arc<RateLimiter>) -> Self {
        OpenAiCompatibleLlm {
            api_key,
            base: base.unwrap_or_else(|| DEFAULT_LLM_BASE.to_string()),
            model,
            limiter,
        }
    }
}

impl LlmProvider for OpenAiCompatibleLlm {
    fn complete(&self, req: &LlmRequest) -> Result<String, ProviderError> {
        self.limiter.acquire();
        let mut body = json!({
            "model": self.model,
            "temperature": req.temperature,
            "messages": [{ "role": "user", "content": req.prompt }],
        });
        if req.contract == ResponseContract::StructuredRecord {
            body["response_format"] = json!({ "type": "json_object" });
        }
        let url = format!("{}/chat/completions", self.base.trim_end_matches('/'));
        let resp: Value = http_client()
            .post(url)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(unavailable)?;
        resp["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ProviderError::Malformed("chat completion without content".into()))
    }
}

pub struct GoogleCustomSearch {
    api_key: Option<String>,
    engine_id: Option<String>,
    limiter: Arc<RateLimiter>,
}

impl GoogleCustomSearch {
    pub fn new(api_key: Option<String>, engine_id: Option<String>, limiter: Arc<RateLimiter>) -> Self {
        GoogleCustomSearch {
            api_key,
            engine_id,
            limiter,
        }
    }
}

/// Best-effort publication date from a result's page metadata.
fn metatag_date(item: &Value) -> Option<NaiveDate> {
    let tags = item["pagemap"]["metatags"].as_array()?;
    for tag in tags {
        for key in ["article:published_time", "og:published_time", "datepublished", "date", "pubdate"] {
            if let Some(s) = tag[key].as_str() {
                if let Some(d) = s.get(..10).and_then(|p| NaiveDate::parse_from_str(p, "%Y-%m-%d").ok()) {
                    return Some(d);
                }
            }
        }
    }
    None
}

impl SearchProvider for GoogleCustomSearch {
    fn search(&self, query: &str, max_results: usize) -> Result<Vec<RawSearchHit>, ProviderError> {
        let key = self
            .api_key
            .as_deref()
            .ok_or_else(|| ProviderError::Unavailable("SEARCH_API_KEY is not set".into()))?;
        let cx = self
            .engine_id
            .as_deref()
            .ok_or_else(|| ProviderError::Unavailable("SEARCH_ENGINE_ID is not set".into()))?;
        let mut hits = Vec::new();
        // The API pages 10 results at a time and stops at 100.
        while hits.len() < max_results.min(100) {
            let start = hits.len() + 1;
            let num = (max_results - hits.len()).min(10);
            self.limiter.acquire();
            let resp: Value = http_client()
                .get(SEARCH_ENDPOINT)
                .query(&[("key", key), ("cx", cx), ("q", query)])
                .query(&[("num", num), ("start", start)])
                .send()
                .and_then(|r| r.error_for_status())
                .and_then(|r| r.json())
                .map_err(unavailable)?;
            let Some(items) = resp["items"].as_array() else { break };
            if items.is_empty() {
                break;
            }
            for item in items {
                let Some(url) = item["link"].as_str() else { continue };
                hits.push(RawSearchHit {
                    url: url.to_string(),
                    title: item["title"].as_str().unwrap_or_default().to_string(),
                    snippet: item["snippet"].as_str().unwrap_or_default().to_string(),
                    published_date: metatag_date(item),
                    rank: hits.len() as u32 + 1,
                });
            }
            if items.len() < num {
                break;
            }
        }
        hits.truncate(max_results);
        Ok(hits)
    }
}

pub struct GoogleVision {
    api_key: Option<String>,
    limiter: Arc<RateLimiter>,
}

impl GoogleVision {
    pub fn new(api_key: Option<String>, limiter: Arc<RateLimiter>) -> Self {
        GoogleVision { api_key, limiter }
    }

    fn image_payload(image: &str) -> Result<Value, ProviderError> {
        if image.starts_with("http://") || image.starts_with("https://") || image.starts_with("gs://") {
            return Ok(json!({ "source": { "imageUri": image } }));
        }
        let bytes = std::fs::read(image).map_err(|e| ProviderError::UnresolvableImage(format!("{image}: {e}")))?;
        Ok(json!({ "content": base64::engine::general_purpose::STANDARD.encode(bytes) }))
    }

    fn annotate(&self, image: &str, features: Value) -> Result<Value, ProviderError> {
        let key = self
            .api_key
            .as_deref()
            .ok_or_else(|| ProviderError::Unavailable("VISION_API_KEY is not set".into()))?;
        let body = json!({ "requests": [{ "image": Self::image_payload(image)?, "features": features }] });
        self.limiter.acquire();
        let resp: Value = http_client()
            .post(VISION_ENDPOINT)
            .query(&[("key", key)])
            .json(&body)
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(unavailable)?;
        let first = resp["responses"][0].clone();
        if let Some(msg) = first["error"]["message"].as_str() {
            return Err(ProviderError::UnresolvableImage(format!("{image}: {msg}")));
        }
        Ok(first)
    }
}

fn strip_tags(s: &str) -> String {
    static TAGS: OnceLock<Regex> = OnceLock::new();
    let re = TAGS.get_or_init(|| Regex::new(r"<[^>]*>").unwrap());
    re.replace_all(s, "").trim().to_string()
}

impl VisionProvider for GoogleVision {
    fn reverse_image_search(&self, image: &str) -> Result<Vec<RawImageHit>, ProviderError> {
        let resp = self.annotate(image, json!([{ "type": "WEB_DETECTION", "maxResults": 20 }]))?;
        let web = &resp["webDetection"];
        let entities: Vec<String> = web["webEntities"]
            .as_array()
            .map(|a| a.iter().filter_map(|e| e["description"].as_str().map(str::to_string)).collect())
            .unwrap_or_default();
        let pages = web["pagesWithMatchingImages"].as_array().cloned().unwrap_or_default();
        Ok(pages
            .iter()
            .map(|p| RawImageHit {
                image_url: p["fullMatchingImages"][0]["url"]
                    .as_str()
                    .or_else(|| p["partialMatchingImages"][0]["url"].as_str())
                    .unwrap_or_default()
                    .to_string(),
                article_url: p["url"].as_str().unwrap_or_default().to_string(),
                web_entities: entities.clone(),
                article_title: strip_tags(p["pageTitle"].as_str().unwrap_or_default()),
                article_summary: String::new(),
                published_date: None,
            })
            .collect())
    }

    fn extract_image_entities(&self, image: &str) -> Result<Vec<String>, ProviderError> {
        let resp = self.annotate(
            image,
            json!([
                { "type": "LABEL_DETECTION", "maxResults": 10 },
                { "type": "LANDMARK_DETECTION", "maxResults": 3 },
                { "type": "TEXT_DETECTION", "maxResults": 1 }
            ]),
        )?;
        let mut out: Vec<String> = Vec::new();
        let mut push = |s: &str| {
            let s = s.trim();
            if !s.is_empty() && !out.iter().any(|o| o.eq_ignore_ascii_case(s)) {
                out.push(s.to_string());
            }
        };
        for key in ["labelAnnotations", "landmarkAnnotations"] {
            for a in resp[key].as_array().into_iter().flatten() {
                if let Some(d) = a["description"].as_str() {
                    push(&d.to_lowercase());
                }
            }
        }
        if let Some(text) = resp["textAnnotations"][0]["description"].as_str() {
            if let Some(line) = text.lines().next() {
                push(line);
            }
        }
        Ok(out)
    }
}
