//! Interchange with the distilled classifier: training-record export and the
//! HTTP prediction client.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::ProviderError;
use crate::model::Label;
use crate::providers::SlmProvider;

/// One training or inference record for the small classifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistillRecord {
    pub id: String,
    pub headline: String,
    pub body_preprocessed: String,
    /// Empty when the article had no usable image.
    #[serde(default)]
    pub image_summary: String,
    pub justification: String,
    /// Absent for inference-only requests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlmPrediction {
    pub id: String,
    pub label: Label,
    pub logprob_real: f64,
    pub logprob_fake: f64,
}

impl SlmPrediction {
    pub fn logprob_of(&self, label: Label) -> f64 {
        match label {
            Label::Real => self.logprob_real,
            Label::Fake => self.logprob_fake,
        }
    }
}

/// Client for a classifier service exposing `POST /predict`.
pub struct HttpSlmClient {
    endpoint: String,
}

impl HttpSlmClient {
    pub fn new(endpoint: impl Into<String>) -> Self {
        HttpSlmClient {
            endpoint: endpoint.into(),
        }
    }

    fn predict_url(&self) -> String {
        let base = self.endpoint.trim_end_matches('/');
        if base.ends_with("/predict") {
            base.to_string()
        } else {
            format!("{base}/predict")
        }
    }
}

impl SlmProvider for HttpSlmClient {
    fn predict(&self, records: &[DistillRecord]) -> Result<Vec<SlmPrediction>, ProviderError> {
        let resp = crate::providers::live::http_client()
            .post(self.predict_url())
            .json(&json!(records))
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| ProviderError::Unavailable(e.to_string()))?;
        let preds: Vec<SlmPrediction> = resp
            .json()
            .map_err(|e| ProviderError::Malformed(format!("slm response: {e}")))?;
        if preds.len() != records.len() {
            return Err(ProviderError::Malformed(format!(
                "slm returned {} predictions for {} records",
                preds.len(),
                records.len()
            )));
        }
        for (p, r) in preds.iter().zip(records) {
            if p.id != r.id {
                return Err(ProviderError::Malformed(format!("slm prediction order mismatch at `{}`", r.id)));
            }
        }
        Ok(preds)
    }
}
