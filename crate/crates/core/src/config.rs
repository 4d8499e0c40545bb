//! Pipeline configuration: defaults, TOML ingestion, and validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Persona;
use crate::providers::Stage;

/// Which subset of the pipeline runs. Ablation flags apply on top.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Retrieval, persona reasoning, gated persuasion refinement.
    #[default]
    Full,
    /// Retrieval and classification; no persona rounds, no persuasion stage.
    EvidenceOnly,
    /// Persona rounds over the article alone; no retrieval, no persuasion stage.
    AgenticOnly,
    /// Persuasion analysis over the article alone, run unconditionally.
    PkmOnly,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimilarityBackend {
    #[default]
    TokenOverlap,
    Embedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Temperatures {
    pub claim: f64,
    pub kg: f64,
    pub persuasion: f64,
    pub question: f64,
    pub answer: f64,
    pub memory: f64,
    pub classifier: f64,
}

impl Default for Temperatures {
    fn default() -> Self {
        Temperatures {
            claim: 0.30,
            kg: 0.20,
            persuasion: 0.30,
            question: 0.70,
            answer: 0.40,
            memory: 0.50,
            classifier: 0.25,
        }
    }
}

impl Temperatures {
    pub fn for_stage(&self, stage: Stage) -> f64 {
        match stage {
            Stage::Claim => self.claim,
            Stage::Kg => self.kg,
            Stage::Persuasion => self.persuasion,
            Stage::Question => self.question,
            Stage::Answer => self.answer,
            Stage::Memory => self.memory,
            Stage::Classifier => self.classifier,
        }
    }

    fn iter(&self) -> [(&'static str, f64); 7] {
        [
            ("claim", self.claim),
            ("kg", self.kg),
            ("persuasion", self.persuasion),
            ("question", self.question),
            ("answer", self.answer),
            ("memory", self.memory),
            ("classifier", self.classifier),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Candidate pool sizes for textual and visual retrieval.
    pub k1: usize,
    pub k2: usize,
    /// Retained evidence counts.
    pub k1p: usize,
    pub k2p: usize,
    pub k3: usize,
    /// Hits requested from the search provider before domain restriction.
    pub search_pool: usize,
    pub dedup_domains: bool,
    pub tau: u32,
    pub lambda: [f64; 4],
    pub alpha_h: f64,
    pub alpha_m: f64,
    pub alpha_u: f64,
    pub alpha_l: f64,
    pub alpha_t: f64,
    pub gamma: f64,
    pub eta: f64,
    pub beta: [f64; 6],
    /// Minimum claim similarity for a reverse-image hit to be kept.
    pub visual_relevance: f64,
    pub temperatures: Temperatures,
    pub persona_order: Vec<Persona>,
    pub variant: Variant,
    pub disable_pkm: bool,
    pub disable_image: bool,
    pub disable_kg: bool,
    pub single_persona: bool,
    pub clickbait_patterns: Vec<String>,
    pub similarity: SimilarityBackend,
    pub llm_model: String,
    pub embedding_model: String,
    /// Upper bound on article characters placed into any prompt.
    pub max_body_chars: usize,
    pub credibility_table: Option<PathBuf>,
    pub taxonomy: Option<PathBuf>,
    pub fewshots: Option<PathBuf>,
    /// Directory whose `<name>.txt` files replace the built-in prompt templates.
    pub prompts_dir: Option<PathBuf>,
    pub slm_endpoint: Option<String>,
    /// Shared request budget for live providers, in requests per second.
    pub rate_limit_per_sec: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            k1: 15,
            k2: 15,
            k1p: 10,
            k2p: 10,
            k3: 10,
            search_pool: 30,
            dedup_domains: true,
            tau: 4,
            lambda: [0.25; 4],
            alpha_h: 0.9,
            alpha_m: 0.7,
            alpha_u: 0.5,
            alpha_l: 0.3,
            alpha_t: 0.2,
            gamma: 0.1,
            eta: 0.5,
            beta: [1.0; 6],
            visual_relevance: 0.3,
            temperatures: Temperatures::default(),
            persona_order: Persona::ALL.to_vec(),
            variant: Variant::Full,
            disable_pkm: false,
            disable_image: false,
            disable_kg: false,
            single_persona: false,
            clickbait_patterns: default_clickbait_patterns(),
            similarity: SimilarityBackend::TokenOverlap,
            llm_model: "gpt-4o-mini".to_string(),
            embedding_model: "text-embedding-3-small".to_string(),
            max_body_chars: 4000,
            credibility_table: None,
            taxonomy: None,
            fewshots: None,
            prompts_dir: None,
            slm_endpoint: None,
            rate_limit_per_sec: 5.0,
        }
    }
}

pub fn default_clickbait_patterns() -> Vec<String> {
    [
        "you won't believe",
        "you wont believe",
        "doctors hate",
        "what happened next",
        "will shock you",
        "this one trick",
        "they don't want you to know",
        "the truth about",
        "miracle cure",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

impl PipelineConfig {
    /// Parses a TOML document; unset fields take their defaults.
    pub fn from_toml_str(raw: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(raw).map_err(|e| Error::config("document", e.message().to_string()))?;
        cfg.validate()
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&raw)?;
        // Relative asset paths resolve against the config file's directory.
        if let Some(dir) = path.parent() {
            for slot in [&mut cfg.credibility_table, &mut cfg.taxonomy, &mut cfg.fewshots, &mut cfg.prompts_dir] {
                if let Some(p) = slot.as_mut() {
                    if p.is_relative() {
                        *p = dir.join(&*p);
                    }
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every invariant, returning the config unchanged on success.
    pub fn validate(self) -> Result<Self> {
        let sum: f64 = self.lambda.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config("lambda", format!("lambda must sum to 1 (got {sum})")));
        }
        if self.lambda.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(Error::config("lambda", "weights must lie in [0, 1]"));
        }
        let alphas = [self.alpha_h, self.alpha_m, self.alpha_u, self.alpha_l];
        if alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::config("alpha", "credibility weights must lie in [0, 1]"));
        }
        if !(self.alpha_h > self.alpha_m && self.alpha_m > self.alpha_u && self.alpha_u > self.alpha_l) {
            return Err(Error::config(
                "alpha",
                "alpha ordering violated: need alpha_h > alpha_m > alpha_u > alpha_l",
            ));
        }
        if !(0.0..=1.0).contains(&self.alpha_t) {
            return Err(Error::config("alpha_t", "must lie in [0, 1]"));
        }
        if self.tau < 1 {
            return Err(Error::config("tau", "at least one round is required"));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::config("gamma", "must be positive"));
        }
        if !(self.eta > 0.0) {
            return Err(Error::config("eta", "must be positive"));
        }
        if self.beta.iter().any(|b| !(*b > 0.0)) {
            return Err(Error::config("beta", "category importances must be positive"));
        }
        for (stage, t) in self.temperatures.iter() {
            if !(0.0..=2.0).contains(&t) {
                return Err(Error::config(format!("temperatures.{stage}"), "must lie in [0, 2]"));
            }
        }
        if self.persona_order.is_empty() {
            return Err(Error::config("persona_order", "at least one persona is required"));
        }
        for (i, p) in self.persona_order.iter().enumerate() {
            if self.persona_order[..i].contains(p) {
                return Err(Error::config("persona_order", format!("persona {p} listed twice")));
            }
        }
        for (name, v) in [("k1", self.k1), ("k2", self.k2), ("k1p", self.k1p), ("k2p", self.k2p), ("k3", self.k3)] {
            if v == 0 {
                return Err(Error::config(name, "must be at least 1"));
            }
        }
        if self.search_pool < self.k1 {
            return Err(Error::config("search_pool", "must be at least k1"));
        }
        if !(0.0..=1.0).contains(&self.visual_relevance) {
            return Err(Error::config("visual_relevance", "must lie in [0, 1]"));
        }
        if !(self.rate_limit_per_sec > 0.0) {
            return Err(Error::config("rate_limit_per_sec", "must be positive"));
        }
        Ok(self)
    }

    /// Personas that take part in the question rounds, honoring the single-persona ablation.
    pub fn active_personas(&self) -> Vec<Persona> {
        if self.single_persona {
            self.persona_order.iter().take(1).copied().collect()
        } else {
            self.persona_order.clone()
        }
    }

    pub fn uses_retrieval(&self) -> bool {
        matches!(self.variant, Variant::Full | Variant::EvidenceOnly)
    }

    pub fn uses_rounds(&self) -> bool {
        matches!(self.variant, Variant::Full | Variant::AgenticOnly)
    }

    /// Whether the gated persuasion stage may run at all.
    pub fn gated_pkm_enabled(&self) -> bool {
        self.variant == Variant::Full && !self.disable_pkm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_yields_defaults() {
        let cfg = PipelineConfig::from_toml_str("").unwrap();
        assert_eq!(cfg.k1, 15);
        assert_eq!(cfg.k1p, 10);
        assert_eq!(cfg.tau, 4);
        assert_eq!(cfg.alpha_h, 0.9);
        assert_eq!(cfg.alpha_m, 0.7);
        assert_eq!(cfg.alpha_u, 0.5);
        assert_eq!(cfg.alpha_l, 0.3);
        assert_eq!(cfg.alpha_t, 0.2);
        assert_eq!(cfg.k3, 10);
        assert_eq!(cfg.temperatures.classifier, 0.25);
        assert_eq!(cfg.gamma, 0.1);
        assert_eq!(cfg.eta, 0.5);
        assert_eq!(cfg.beta, [1.0; 6]);
    }

    #[test]
    fn lambda_must_sum_to_one() {
        let err = PipelineConfig::from_toml_str("lambda = [0.5, 0.5, 0.1, 0.0]").unwrap_err();
        assert!(err.to_string().contains("lambda must sum to 1"), "{err}");
    }

    #[test]
    fn alpha_ordering_enforced() {
        let err = PipelineConfig::from_toml_str("alpha_h = 0.5\nalpha_m = 0.7").unwrap_err();
        assert!(err.to_string().contains("alpha ordering"), "{err}");
    }

    #[test]
    fn temperature_range_enforced() {
        let err = PipelineConfig::from_toml_str("[temperatures]\nquestion = 2.5").unwrap_err();
        assert!(err.to_string().contains("temperatures.question"), "{err}");
    }

    #[test]
    fn unknown_field_rejected() {
        assert!(PipelineConfig::from_toml_str("k_one = 3").is_err());
    }

    #[test]
    fn single_persona_takes_first() {
        let cfg = PipelineConfig { single_persona: true, ..Default::default() };
        assert_eq!(cfg.active_personas(), vec![Persona::Supervisor]);
    }

    #[test]
    fn round_trip_default() {
        let cfg = PipelineConfig::default();
        let back = PipelineConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, back);
    }
}
