//! Deterministic scenario-driven providers.
//!
//! A [`Scenario`] describes one article together with the search hits, image
//! analysis and model replies it should receive. [`ScriptedLlm`] reads the
//! `### KEY: value` header that every pipeline prompt starts with to decide
//! which scripted reply to return, so a set of scenarios behaves like a small,
//! fully reproducible service stack. The fixture replay cache is recorded
//! from these providers.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::mock::StaticVision;
use super::replay::{CachedLlm, CachedSearch, CachedVision};
use super::{
    CredibilityTable, LlmProvider, LlmRequest, Providers, RawImageHit, RawSearchHit, ReplayStore, SearchProvider, Stage,
    VisionProvider,
};
use crate::config::PipelineConfig;
use crate::error::{Error, ProviderError, Result};
use crate::model::{NewsItem, Persona};
use crate::pipeline::Pipeline;
use crate::prompts::parse_header;
use crate::text::{first_sentence, tokenize};
use crate::verdict::render_output;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioImage {
    pub reference: String,
    #[serde(default)]
    pub entities: Vec<String>,
    #[serde(default)]
    pub hits: Vec<RawImageHit>,
    #[serde(default)]
    pub unresolvable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedDetection {
    pub technique: String,
    pub span: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedPersuasion {
    #[serde(default)]
    pub detections: Vec<ScriptedDetection>,
    #[serde(default)]
    pub summary: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedReplies {
    /// Raw reply to the claim prompt.
    pub claim: String,
    #[serde(default)]
    pub image_summary: String,
    #[serde(default)]
    pub kg: Vec<String>,
    /// Stance word per evidence url; unlisted urls are NEUTRAL.
    #[serde(default)]
    pub stances: BTreeMap<String, String>,
    /// Raw classifier reply per pass; the last one repeats.
    #[serde(default)]
    pub classifier: Vec<String>,
    #[serde(default)]
    pub persuasion: Option<ScriptedPersuasion>,
    /// Question overrides keyed `PERSONA:round`, e.g. `LEGAL:2`.
    #[serde(default)]
    pub questions: BTreeMap<String, String>,
    /// `PERSONA:round` keys whose first attempt repeats an earlier question.
    #[serde(default)]
    pub duplicate_first_try: Vec<String>,
    /// `PERSONA:round` keys whose every attempt repeats an earlier question.
    #[serde(default)]
    pub duplicate_always: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub item: NewsItem,
    #[serde(default)]
    pub search_hits: Vec<RawSearchHit>,
    #[serde(default)]
    pub image: Option<ScenarioImage>,
    pub llm: ScriptedReplies,
}

impl Scenario {
    /// Claim text the scripted claim reply resolves to, used to route searches.
    fn claim_text(&self) -> String {
        crate::context::json_object(&self.llm.claim)
            .and_then(|v| v.get("claim").and_then(|c| c.as_str()).map(str::to_string))
            .unwrap_or_else(|| self.item.headline.clone())
    }
}

/// Loads every `*.json` scenario in `dir`, sorted by file name.
pub fn load_scenarios(dir: &Path) -> Result<Vec<Scenario>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let raw = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&raw).map_err(|e| Error::Schema {
                line: e.line(),
                message: format!("{}: {e}", p.display()),
            })
        })
        .collect()
}

const QUESTION_TEMPLATES: [[&str; 4]; 4] = [
    [
        "Which independent sources confirm the central assertion about {subject}?",
        "Does any high-reliability evidence settle what happened with {subject}?",
        "Are there contradictions between the sources describing {subject}?",
        "Is the combined evidence on {subject} strong enough to support a verdict?",
    ],
    [
        "Which outlets first reported the story about {subject}, and how credible are they?",
        "Does the headline framing about {subject} match what the sources actually say?",
        "Is the story about {subject} amplified mainly by low-credibility sites?",
        "Can the original statement or document behind the {subject} story be traced?",
    ],
    [
        "Is there an official record or filing that documents the events involving {subject}?",
        "Have any authorities or courts made statements concerning {subject}?",
        "Would the assertions about {subject} create legal liability if false?",
        "Are any formal investigations into {subject} mentioned by reliable sources?",
    ],
    [
        "Are the figures and dates reported about {subject} internally consistent?",
        "Is the account of {subject} physically and statistically plausible?",
        "Do knowledge-base facts about {subject} agree with the claim?",
        "Which technical detail about {subject} remains unverified by the evidence?",
    ],
];

fn persona_index(p: Persona) -> usize {
    Persona::ALL.iter().position(|q| *q == p).unwrap_or(0)
}

fn claim_subject(prompt: &str) -> String {
    match prompt.lines().find_map(|l| l.strip_prefix("Entities: ")) {
        Some(entities) if entities != "(none)" => entities.split("; ").next().unwrap_or(entities).to_string(),
        _ => "the claim".to_string(),
    }
}

fn default_question(persona: Persona, round: u32, prompt: &str) -> String {
    let templates = &QUESTION_TEMPLATES[persona_index(persona)];
    let t = templates[(round.saturating_sub(1) as usize) % templates.len()];
    t.replace("{subject}", &claim_subject(prompt))
}

/// Evidence lines (`T1 ...`, `I1 ...`, `K1 ...`) of the observation block.
fn digest_lines(prompt: &str) -> Vec<&str> {
    let Some(start) = prompt.find("\nEvidence:\n") else {
        return Vec::new();
    };
    prompt[start + "\nEvidence:\n".len()..]
        .lines()
        .take_while(|l| !l.trim().is_empty())
        .filter(|l| {
            let mut c = l.chars();
            matches!(c.next(), Some('T' | 'I' | 'K')) && c.next().is_some_and(|d| d.is_ascii_digit())
        })
        .collect()
}

fn scripted_answer(persona: Persona, round: u32, prompt: &str) -> String {
    let lines = digest_lines(prompt);
    if lines.is_empty() {
        return "There is insufficient evidence to answer this question from the available observation.".into();
    }
    let pick = (persona_index(persona) + 4 * round.saturating_sub(1) as usize) % lines.len();
    let line = lines[pick];
    let (id, rest) = line.split_once(' ').unwrap_or((line, ""));
    if id.starts_with('K') {
        let fact = rest.split(" source=").next().unwrap_or(rest);
        return format!("The knowledge base records {fact} [{id}].");
    }
    let domain = rest.split_whitespace().next().unwrap_or("");
    let title = rest.split_once(": ").map(|(_, t)| t).unwrap_or("");
    let title = title.trim_end_matches(['.', '!', '?']);
    format!("According to {domain} [{id}], {title}.")
}

/// LLM double answering from a set of scenarios keyed by item id.
pub struct ScriptedLlm {
    scenarios: BTreeMap<String, ScriptedReplies>,
}

impl ScriptedLlm {
    pub fn new(scenarios: &[Scenario]) -> Self {
        ScriptedLlm {
            scenarios: scenarios.iter().map(|s| (s.item.id.clone(), s.llm.clone())).collect(),
        }
    }

    fn question(&self, s: &ScriptedReplies, h: &BTreeMap<String, String>, prompt: &str) -> String {
        let persona = h.get("PERSONA").and_then(|p| Persona::parse(p)).unwrap_or(Persona::Supervisor);
        let round: u32 = h.get("ROUND").and_then(|r| r.parse().ok()).unwrap_or(1);
        let key = format!("{persona}:{round}");
        let regenerate = h.contains_key("REGENERATE");
        let repeat = s.duplicate_always.contains(&key) || (!regenerate && s.duplicate_first_try.contains(&key));
        if repeat {
            // Repeat the very first question of the session.
            let first = Persona::ALL[0];
            return s
                .questions
                .get(&format!("{first}:1"))
                .cloned()
                .unwrap_or_else(|| default_question(first, 1, prompt));
        }
        s.questions
            .get(&key)
            .cloned()
            .unwrap_or_else(|| default_question(persona, round, prompt))
    }
}

impl LlmProvider for ScriptedLlm {
    fn complete(&self, req: &LlmRequest) -> Result<String, ProviderError> {
        let h = parse_header(&req.prompt);
        let item = h
            .get("ITEM")
            .ok_or_else(|| ProviderError::Malformed("prompt has no ITEM marker".into()))?;
        let s = self
            .scenarios
            .get(item)
            .ok_or_else(|| ProviderError::Unavailable(format!("no scenario for item `{item}`")))?;
        let task = h.get("TASK").map(String::as_str).unwrap_or("");
        let reply = match (req.stage, task) {
            (Stage::Claim, "claim") => s.claim.clone(),
            (Stage::Claim, "image_summary") => s.image_summary.clone(),
            (Stage::Kg, _) => s.kg.join("\n"),
            (Stage::Classifier, "stance") => {
                let url = h.get("URL").map(String::as_str).unwrap_or("");
                s.stances.get(url).cloned().unwrap_or_else(|| "NEUTRAL".into())
            }
            (Stage::Classifier, "classify") => {
                let pass: usize = h.get("PASS").and_then(|p| p.parse().ok()).unwrap_or(1);
                s.classifier
                    .get(pass.saturating_sub(1))
                    .or_else(|| s.classifier.last())
                    .cloned()
                    .unwrap_or_default()
            }
            (Stage::Persuasion, "detect") => {
                let detections = s.persuasion.as_ref().map(|p| p.detections.clone()).unwrap_or_default();
                json!({ "techniques": detections }).to_string()
            }
            (Stage::Persuasion, "summarize") => s.persuasion.as_ref().map(|p| p.summary.clone()).unwrap_or_default(),
            (Stage::Question, _) => self.question(s, &h, &req.prompt),
            (Stage::Answer, _) => {
                let persona = h.get("PERSONA").and_then(|p| Persona::parse(p)).unwrap_or(Persona::Supervisor);
                let round = h.get("ROUND").and_then(|r| r.parse().ok()).unwrap_or(1);
                scripted_answer(persona, round, &req.prompt)
            }
            (Stage::Memory, _) => {
                let persona = h.get("PERSONA").and_then(|p| Persona::parse(p)).unwrap_or(Persona::Supervisor);
                let round = h.get("ROUND").map(String::as_str).unwrap_or("1");
                let answer = req.prompt.lines().find_map(|l| l.strip_prefix("Answer: ")).unwrap_or("");
                format!("{} (round {round}) established: {}", persona.display_name(), first_sentence(answer))
            }
            (stage, task) => {
                return Err(ProviderError::Malformed(format!("no scripted reply for stage {stage} task `{task}`")));
            }
        };
        Ok(reply)
    }
}

/// Search double routing each query to the scenario whose claim it best matches.
pub struct ScriptedSearch {
    routes: Vec<(Vec<String>, Vec<RawSearchHit>)>,
}

impl ScriptedSearch {
    pub fn new(scenarios: &[Scenario]) -> Self {
        ScriptedSearch {
            routes: scenarios
                .iter()
                .map(|s| (tokenize(&s.claim_text()), s.search_hits.clone()))
                .collect(),
        }
    }
}

fn overlap(a: &[String], b: &[String]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let common = a.iter().filter(|t| b.contains(t)).count() as f64;
    2.0 * common / (a.len() + b.len()) as f64
}

impl SearchProvider for ScriptedSearch {
    fn search(&self, query: &str, max_results: usize) -> Result<Vec<RawSearchHit>, ProviderError> {
        let q = tokenize(query);
        let best = self
            .routes
            .iter()
            .map(|(toks, hits)| (overlap(&q, toks), hits))
            .filter(|(score, _)| *score >= 0.5)
            .max_by(|a, b| a.0.total_cmp(&b.0));
        let mut hits = best.map(|(_, h)| h.clone()).unwrap_or_default();
        hits.sort_by_key(|h| h.rank);
        hits.truncate(max_results);
        Ok(hits)
    }
}

/// Vision double holding every scenario image.
pub fn scripted_vision(scenarios: &[Scenario]) -> StaticVision {
    scenarios
        .iter()
        .filter_map(|s| s.image.as_ref())
        .fold(StaticVision::default(), |v, img| {
            if img.unresolvable {
                v.unresolvable(&img.reference)
            } else {
                v.with_image(&img.reference, img.entities.clone(), img.hits.clone())
            }
        })
}

/// Providers serving the scenarios directly.
pub fn scripted_providers(scenarios: &[Scenario], credibility: CredibilityTable) -> Providers {
    Providers::new(
        Arc::new(ScriptedLlm::new(scenarios)),
        Arc::new(ScriptedSearch::new(scenarios)),
        Arc::new(scripted_vision(scenarios)),
        credibility,
    )
}

/// Scripted providers whose traffic is written to `store` as a replay cache.
pub fn recording_providers(scenarios: &[Scenario], credibility: CredibilityTable, store: Arc<ReplayStore>) -> Providers {
    let llm: Arc<dyn LlmProvider> = Arc::new(ScriptedLlm::new(scenarios));
    let search: Arc<dyn SearchProvider> = Arc::new(ScriptedSearch::new(scenarios));
    let vision: Arc<dyn VisionProvider> = Arc::new(scripted_vision(scenarios));
    Providers::new(
        Arc::new(CachedLlm::new(Some(llm), store.clone())),
        Arc::new(CachedSearch::new(Some(search), store.clone())),
        Arc::new(CachedVision::new(Some(vision), store)),
        credibility,
    )
}

/// Runs every scenario through a pipeline whose provider traffic is recorded
/// into `replay_dir`, returning `(id, rendered record)` pairs in scenario order.
pub fn record_scenarios(scenarios: &[Scenario], config: &PipelineConfig, replay_dir: &Path) -> Result<Vec<(String, String)>> {
    let credibility = match &config.credibility_table {
        Some(p) => CredibilityTable::from_path(p)?,
        None => CredibilityTable::builtin(),
    };
    let store = Arc::new(ReplayStore::open(replay_dir, true)?);
    let pipeline = Pipeline::new(config.clone(), recording_providers(scenarios, credibility, store))?;
    scenarios
        .iter()
        .map(|s| {
            let v = pipeline.verify(&s.item)?;
            Ok((s.item.id.clone(), render_output(v.record())))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompts::header;
    use crate::config::Temperatures;
    use crate::providers::ResponseContract;

    fn scenario() -> Scenario {
        Scenario {
            item: NewsItem::new("a1", "Bridge reopens in Springfield", "").unwrap(),
            search_hits: vec![RawSearchHit {
                url: "https://news.example/bridge".into(),
                title: "Springfield bridge reopens".into(),
                snippet: String::new(),
                published_date: None,
                rank: 1,
            }],
            image: None,
            llm: ScriptedReplies {
                claim: r#"{"claim": "The Springfield bridge reopened on Monday", "entities": ["Springfield"]}"#.into(),
                stances: [("https://news.example/bridge".to_string(), "SUPPORTING".to_string())].into(),
                classifier: vec!["first".into(), "second".into()],
                ..Default::default()
            },
        }
    }

    fn ask(llm: &ScriptedLlm, stage: Stage, markers: &[(&str, &str)], body: &str) -> String {
        let prompt = format!("{}{body}", header(markers));
        llm.complete(&LlmRequest::new(stage, prompt, ResponseContract::FreeText, &Temperatures::default()))
            .unwrap()
    }

    #[test]
    fn routes_by_markers() {
        let llm = ScriptedLlm::new(&[scenario()]);
        assert!(ask(&llm, Stage::Claim, &[("ITEM", "a1"), ("TASK", "claim")], "").contains("Springfield bridge"));
        let stance = [("ITEM", "a1"), ("TASK", "stance"), ("URL", "https://news.example/bridge")];
        assert_eq!(ask(&llm, Stage::Classifier, &stance, ""), "SUPPORTING");
        let other = [("ITEM", "a1"), ("TASK", "stance"), ("URL", "https://other.example")];
        assert_eq!(ask(&llm, Stage::Classifier, &other, ""), "NEUTRAL");
        let pass2 = [("ITEM", "a1"), ("TASK", "classify"), ("PASS", "2")];
        assert_eq!(ask(&llm, Stage::Classifier, &pass2, ""), "second");
        let pass3 = [("ITEM", "a1"), ("TASK", "classify"), ("PASS", "3")];
        assert_eq!(ask(&llm, Stage::Classifier, &pass3, ""), "second");
    }

    #[test]
    fn unknown_item_is_provider_error() {
        let llm = ScriptedLlm::new(&[scenario()]);
        let req = LlmRequest::new(Stage::Kg, header(&[("ITEM", "zz")]), ResponseContract::FreeText, &Temperatures::default());
        assert!(llm.complete(&req).is_err());
    }

    #[test]
    fn answers_cite_digest_lines() {
        let llm = ScriptedLlm::new(&[scenario()]);
        let body = "Observation:\nEvidence:\nT1 news.example R=0.812 MEDIUM stance=pending date=undated: Bridge reopens\nK1 <Springfield, locatedIn, Illinois> source=wikidata\n\nMemory: (empty)";
        let a = ask(&llm, Stage::Answer, &[("ITEM", "a1"), ("PERSONA", "SUPERVISOR"), ("ROUND", "1")], body);
        assert_eq!(a, "According to news.example [T1], Bridge reopens.");
        let a = ask(&llm, Stage::Answer, &[("ITEM", "a1"), ("PERSONA", "JOURNALIST"), ("ROUND", "1")], body);
        assert_eq!(a, "The knowledge base records <Springfield, locatedIn, Illinois> [K1].");
        let none = "Observation:\nEvidence:\nno external evidence retrieved\n";
        let a = ask(&llm, Stage::Answer, &[("ITEM", "a1"), ("PERSONA", "LEGAL"), ("ROUND", "2")], none);
        assert!(a.starts_with("There is insufficient evidence"));
    }

    #[test]
    fn search_routes_by_claim() {
        let search = ScriptedSearch::new(&[scenario()]);
        assert_eq!(search.search("The Springfield bridge reopened on Monday", 10).unwrap().len(), 1);
        assert!(search.search("completely unrelated text", 10).unwrap().is_empty());
    }
}
