use std::collections::HashMap;
use std::sync::Arc;

use serde_json::json;

use super::live::{http_client, RateLimiter};
use super::SimilarityProvider;
use crate::error::ProviderError;
use crate::text::tokenize;

/// Deterministic bag-of-tokens F1. Symmetric, and `sim(a, a) = 1`.
#[derive(Debug, Clone, Copy, Default)]
pub struct TokenOverlapSimilarity;

impl TokenOverlapSimilarity {
    pub fn score(a: &str, b: &str) -> f64 {
        if a == b {
            return 1.0;
        }
        let ta = tokenize(a);
        let tb = tokenize(b);
        if ta.is_empty() || tb.is_empty() {
            return 0.0;
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for t in &ta {
            *counts.entry(t.as_str()).or_insert(0) += 1;
        }
        let mut overlap = 0usize;
        for t in &tb {
            if let Some(c) = counts.get_mut(t.as_str()) {
                if *c > 0 {
                    *c -= 1;
                    overlap += 1;
                }
            }
        }
        if overlap == 0 {
            return 0.0;
        }
        let precision = overlap as f64 / tb.len() as f64;
        let recall = overlap as f64 / ta.len() as f64;
        2.0 * precision * recall / (precision + recall)
    }
}

impl SimilarityProvider for TokenOverlapSimilarity {
    fn similarity(&self, a: &str, b: &str) -> Result<f64, ProviderError> {
        Ok(Self::score(a, b))
    }
}

/// Cosine similarity of embeddings from an OpenAI-compatible `/embeddings` endpoint.
pub struct EmbeddingSimilarity {
    api_key: String,
    base: String,
    model: String,
    limiter: Arc<RateLimiter>,
}

impl EmbeddingSimilarity {
    pub fn new(api_key: String, base: Option<String>, model: String, limiter: Arc<RateLimiter>) -> Self {
        EmbeddingSimilarity {
            api_key,
            base: base.unwrap_or_else(|| super::live::DEFAULT_LLM_BASE.to_string()),
            model,
            limiter,
        }
    }
}

impl SimilarityProvider for EmbeddingSimilarity {
    fn similarity(&self, a: &str, b: &str) -> Result<f64, ProviderError> {
        self.limiter.acquire();
        let url = format!("{}/embeddings", self.base.trim_end_matches('/'));
        let body = json!({ "model": self.model, "input": [a, b] });
        let resp: serde_json::Value = http_client()
            .post(url)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(|e| ProviderError::Unavailable(e.to_string()))?;
        let vec_at = |i: usize| -> Result<Vec<f64>, ProviderError> {
            resp["data"][i]["embedding"]
                .as_array()
                .map(|v| v.iter().filter_map(|x| x.as_f64()).collect())
                .ok_or_else(|| ProviderError::Malformed("embedding response missing data".into()))
        };
        let (va, vb) = (vec_at(0)?, vec_at(1)?);
        let dot: f64 = va.iter().zip(&vb).map(|(x, y)| x * y).sum();
        let na: f64 = va.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = vb.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            return Ok(0.0);
        }
        Ok((dot / (na * nb)).clamp(0.0, 1.0))
    }
}
