//! Per-item handle bundling configuration, providers and prompt templates.

use crate::config::PipelineConfig;
use crate::error::Result;
use crate::prompts::{header, PromptSet};
use crate::providers::{LlmRequest, Providers, ResponseContract, Stage};

const RETRY_NOTE: &str =
    "\n\nYour previous response could not be parsed. Reply again and follow the response format exactly.";

#[derive(Clone, Copy)]
pub struct Ctx<'a> {
    pub config: &'a PipelineConfig,
    pub providers: &'a Providers,
    pub prompts: &'a PromptSet,
    pub item_id: &'a str,
}

impl<'a> Ctx<'a> {
    pub fn new(config: &'a PipelineConfig, providers: &'a Providers, prompts: &'a PromptSet, item_id: &'a str) -> Self {
        Ctx {
            config,
            providers,
            prompts,
            item_id,
        }
    }

    /// Sends `body` to the LLM behind a header naming the item, stage and `markers`.
    pub fn ask(&self, stage: Stage, markers: &[(&str, &str)], body: &str, contract: ResponseContract) -> Result<String> {
        let mut pairs: Vec<(&str, &str)> = vec![("ITEM", self.item_id), ("STAGE", stage.as_str())];
        pairs.extend_from_slice(markers);
        let prompt = format!("{}{}", header(&pairs), body);
        self.providers
            .llm_complete(&LlmRequest::new(stage, prompt, contract, &self.config.temperatures))
    }

    /// Same as [`Ctx::ask`], flagged as a retry after an unparseable response.
    pub fn ask_again(&self, stage: Stage, markers: &[(&str, &str)], body: &str, contract: ResponseContract) -> Result<String> {
        let mut pairs = markers.to_vec();
        pairs.push(("RETRY", "1"));
        self.ask(stage, &pairs, &format!("{body}{RETRY_NOTE}"), contract)
    }
}

/// The outermost `{...}` span of a response, tolerating prose or code fences around it.
pub fn json_object(text: &str) -> Option<serde_json::Value> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    if end < start {
        return None;
    }
    serde_json::from_str(&text[start..=end]).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_object_ignores_fences() {
        let v = json_object("```json\n{\"claim\": \"x\"}\n```").unwrap();
        assert_eq!(v["claim"], "x");
        assert!(json_object("no json here").is_none());
        assert!(json_object("} backwards {").is_none());
    }
}
