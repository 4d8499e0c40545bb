//! Multi-persona question rounds over a shared, append-only memory.
//!
//! Each round every persona asks one question, the answering agent replies from
//! the observation and memory, and the exchange is condensed into an insight.

use crate::context::Ctx;
use crate::error::{Error, Result};
use crate::model::{EvidenceBundle, Memory, MemoryEntry, ObservationBundle, Persona};
use crate::prompts::render;
use crate::providers::{ResponseContract, Stage};
use crate::text::{clip_chars, collapse_whitespace, first_sentence, normalize_question, truncate_sentences};

pub const NO_EVIDENCE_DIGEST: &str = "no external evidence retrieved";
const MAX_ANSWER_SENTENCES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PersonaSpec {
    pub persona: Persona,
    pub goal: &'static str,
}

impl PersonaSpec {
    pub fn of(persona: Persona) -> Self {
        let goal = match persona {
            Persona::Supervisor => "determine the overall veracity of the claim",
            Persona::Journalist => "probe the credibility, bias and contextual consistency of the sources",
            Persona::Legal => "check regulatory or legal compliance and legally consequential assertions",
            Persona::Scientific => "validate the factual and scientific correctness of the claim",
        };
        PersonaSpec { persona, goal }
    }

    pub fn fallback_question(&self) -> String {
        format!(
            "What remains unverified about this claim from a {} standpoint?",
            self.persona.role_word()
        )
    }
}

/// Deterministic rendering of every document and triplet in the bundle.
pub fn evidence_digest(bundle: &EvidenceBundle) -> String {
    if bundle.is_empty() {
        return NO_EVIDENCE_DIGEST.to_string();
    }
    let mut lines = Vec::new();
    for d in bundle.documents() {
        let date = d.published_date.map(|d| d.to_string()).unwrap_or_else(|| "undated".into());
        let stance = d.stance.map(|s| s.to_string()).unwrap_or_else(|| "pending".into());
        lines.push(format!(
            "{} {} R={:.3} {} stance={} date={}: {}",
            d.id, d.domain, d.reliability, d.tier, stance, date, d.title
        ));
    }
    for (i, t) in bundle.kg.iter().enumerate() {
        lines.push(format!(
            "{} <{}, {}, {}> source={}",
            EvidenceBundle::kg_id(i),
            t.subject,
            t.relation,
            t.object,
            t.source.as_str()
        ));
    }
    lines.join("\n")
}

pub fn init_memory(obs: &ObservationBundle) -> Memory {
    Memory {
        evidence_digest: evidence_digest(&obs.evidence),
        ..Memory::default()
    }
}

/// The observation block shown to every agent.
pub fn render_observation(obs: &ObservationBundle, max_body_chars: usize) -> String {
    let entities = if obs.claim.entities.is_empty() { "(none)".to_string() } else { obs.claim.entities.join("; ") };
    let image = obs.image_summary.as_ref().map(|s| s.text.as_str()).unwrap_or("(no image)");
    format!(
        "Observation:\nHeadline: {}\nArticle: {}\nClaim: {}\nEntities: {}\nImage: {}\nEvidence:\n{}",
        obs.headline,
        clip_chars(&obs.preprocessed_body, max_body_chars),
        obs.claim.text,
        entities,
        image,
        evidence_digest(&obs.evidence)
    )
}

/// The memory block: entries, insights and, once present, the persuasion report.
pub fn render_memory(memory: &Memory) -> String {
    let mut out = String::from("Memory:");
    if memory.entries.is_empty() && memory.insights.is_empty() {
        out.push_str(" (empty)");
    }
    for e in &memory.entries {
        out.push_str(&format!(
            "\n[round {} {}] Q: {} A: {} Insight: {}",
            e.round,
            e.persona.display_name(),
            e.question,
            e.answer,
            e.insight
        ));
    }
    for (i, s) in memory.insights.iter().enumerate() {
        out.push_str(&format!("\nInsight {}: {}", i + 1, s));
    }
    out
}

fn prior_questions(memory: &Memory) -> String {
    if memory.entries.is_empty() {
        return "(none)".into();
    }
    memory
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| format!("{}. {}", i + 1, e.question))
        .collect::<Vec<_>>()
        .join("\n")
}

fn is_duplicate(question: &str, memory: &Memory) -> bool {
    let key = normalize_question(question);
    key.is_empty() || memory.entries.iter().any(|e| normalize_question(&e.question) == key)
}

fn clean_question(raw: &str) -> String {
    let q = collapse_whitespace(raw);
    let q = q.trim_start_matches(|c: char| c == '-' || c == '*' || c.is_whitespace());
    q.strip_prefix("Question:").unwrap_or(q).trim().trim_matches('"').trim().to_string()
}

/// One probing question from `spec`, never repeating an earlier one.
///
/// A duplicate triggers one regeneration; a second duplicate falls back to a
/// fixed persona question (suffixed with the round if even that was asked).
pub fn generate_question(ctx: &Ctx, spec: &PersonaSpec, obs: &ObservationBundle, memory: &Memory, round: u32) -> Result<String> {
    let round_s = round.to_string();
    let rounds_s = ctx.config.tau.to_string();
    let observation = render_observation(obs, ctx.config.max_body_chars);
    let mem = render_memory(memory);
    let prior = prior_questions(memory);
    let prompt = render(
        ctx.prompts.persona(spec.persona),
        &[
            ("observation", &observation),
            ("memory", &mem),
            ("prior_questions", &prior),
            ("round", &round_s),
            ("rounds", &rounds_s),
        ],
    );
    let persona = spec.persona.to_string();
    let markers = [("PERSONA", persona.as_str()), ("ROUND", round_s.as_str())];
    let q = clean_question(&ctx.ask(Stage::Question, &markers, &prompt, ResponseContract::FreeText)?);
    if !is_duplicate(&q, memory) {
        return Ok(q);
    }
    log::info!("{}: {} round {} repeated a question, regenerating", ctx.item_id, spec.persona, round);
    let retry_prompt = format!(
        "{prompt}\n\nYour question \"{q}\" repeats one already asked. Ask a different question."
    );
    let retry_markers = [("PERSONA", persona.as_str()), ("ROUND", round_s.as_str()), ("REGENERATE", "1")];
    let q2 = clean_question(&ctx.ask(Stage::Question, &retry_markers, &retry_prompt, ResponseContract::FreeText)?);
    if !is_duplicate(&q2, memory) {
        return Ok(q2);
    }
    let fallback = spec.fallback_question();
    if !is_duplicate(&fallback, memory) {
        return Ok(fallback);
    }
    Ok(format!("{} (round {round})", fallback.trim_end_matches('?')) + "?")
}

/// Evidence-grounded answer of at most four sentences.
pub fn answer_question(
    ctx: &Ctx,
    question: &str,
    obs: &ObservationBundle,
    memory: &Memory,
    persona: Persona,
    round: u32,
) -> Result<String> {
    if question.trim().is_empty() {
        return Err(Error::Precondition("cannot answer an empty question".into()));
    }
    let observation = render_observation(obs, ctx.config.max_body_chars);
    let mem = render_memory(memory);
    let prompt = render(
        &ctx.prompts.answer,
        &[("question", question), ("observation", &observation), ("memory", &mem)],
    );
    let persona_s = persona.to_string();
    let round_s = round.to_string();
    let raw = ctx.ask(
        Stage::Answer,
        &[("PERSONA", persona_s.as_str()), ("ROUND", round_s.as_str())],
        &prompt,
        ResponseContract::FreeText,
    )?;
    let answer = truncate_sentences(&raw, MAX_ANSWER_SENTENCES);
    if answer.is_empty() {
        return Ok("There is insufficient evidence to answer this question.".into());
    }
    Ok(answer)
}

/// Returns `memory` extended by one entry whose insight condenses the exchange.
///
/// When synthesis fails the insight is the answer's first sentence.
pub fn update_memory(ctx: &Ctx, memory: &Memory, question: &str, answer: &str, round: u32, persona: Persona) -> Result<Memory> {
    if question.trim().is_empty() || answer.trim().is_empty() {
        return Err(Error::Precondition("memory entries need a question and an answer".into()));
    }
    let prompt = render(&ctx.prompts.memory, &[("question", question), ("answer", answer)]);
    let persona_s = persona.to_string();
    let round_s = round.to_string();
    let synthesized = ctx
        .ask(
            Stage::Memory,
            &[("PERSONA", persona_s.as_str()), ("ROUND", round_s.as_str())],
            &prompt,
            ResponseContract::FreeText,
        )
        .map(|s| first_sentence(&collapse_whitespace(&s)));
    let insight = match synthesized {
        Ok(s) if !s.is_empty() => s,
        Ok(_) => first_sentence(answer),
        Err(e) => {
            log::warn!("{}: insight synthesis failed ({e}), keeping the answer's first sentence", ctx.item_id);
            first_sentence(answer)
        }
    };
    let mut next = memory.clone();
    next.entries.push(MemoryEntry {
        round,
        persona,
        question: question.to_string(),
        answer: answer.to_string(),
        insight,
    });
    Ok(next)
}

/// Runs `tau` rounds over the active personas, returning `tau * |personas|` entries.
pub fn run_rounds(ctx: &Ctx, obs: &ObservationBundle, initial: Memory) -> Result<Memory> {
    let personas = ctx.config.active_personas();
    if personas.is_empty() || ctx.config.tau < 1 {
        return Err(Error::Precondition("question rounds need at least one persona and one round".into()));
    }
    let mut memory = initial;
    for round in 1..=ctx.config.tau {
        for &persona in &personas {
            let spec = PersonaSpec::of(persona);
            let question = generate_question(ctx, &spec, obs, &memory, round)?;
            let answer = answer_question(ctx, &question, obs, &memory, persona, round)?;
            memory = update_memory(ctx, &memory, &question, &answer, round, persona)?;
        }
    }
    Ok(memory)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PipelineConfig;
    use crate::model::Claim;
    use crate::prompts::{parse_header, PromptSet};
    use crate::providers::credibility::CredibilityTable;
    use crate::providers::mock::{MockLlm, StaticSearch, StaticVision};
    use crate::providers::Providers;
    use crate::error::ProviderError;
    use std::sync::Arc;

    fn obs() -> ObservationBundle {
        ObservationBundle {
            headline: "H".into(),
            preprocessed_body: "B".into(),
            claim: Claim {
                text: "C".into(),
                entities: vec![],
            },
            image_summary: None,
            evidence: EvidenceBundle::default(),
        }
    }

    fn providers(llm: MockLlm) -> Providers {
        Providers::new(
            Arc::new(llm),
            Arc::new(StaticSearch::default()),
            Arc::new(StaticVision::default()),
            CredibilityTable::default(),
        )
    }

    /// Questions always repeat "Same question?" so every path past the first is exercised.
    fn repetitive() -> MockLlm {
        MockLlm::new(|req| {
            let h = parse_header(&req.prompt);
            Ok(match req.stage {
                Stage::Question => "Same question?".to_string(),
                Stage::Answer => format!("Answer for {} round {}. More detail.", h["PERSONA"], h["ROUND"]),
                _ => "Insight sentence. Extra.".to_string(),
            })
        })
    }

    #[test]
    fn empty_bundle_digest() {
        assert_eq!(init_memory(&obs()).evidence_digest, NO_EVIDENCE_DIGEST);
        assert!(init_memory(&obs()).entries.is_empty());
    }

    #[test]
    fn rounds_produce_unique_questions() {
        let p = providers(repetitive());
        let cfg = PipelineConfig::default();
        let prompts = PromptSet::default();
        let ctx = Ctx::new(&cfg, &p, &prompts, "x");
        let m = run_rounds(&ctx, &obs(), init_memory(&obs())).unwrap();
        assert_eq!(m.entries.len(), 16);
        let mut keys: Vec<String> = m.entries.iter().map(|e| normalize_question(&e.question)).collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), 16);
        assert_eq!(m.entries[0].question, "Same question?");
        assert_eq!(m.entries[1].question, "What remains unverified about this claim from a journalist standpoint?");
        assert_eq!(
            m.entries[5].question,
            "What remains unverified about this claim from a journalist standpoint (round 2)?"
        );
        assert_eq!(m.entries[0].insight, "Insight sentence.");
    }

    #[test]
    fn single_persona_single_round() {
        let p = providers(repetitive());
        let cfg = PipelineConfig { tau: 1, single_persona: true, ..Default::default() };
        let prompts = PromptSet::default();
        let ctx = Ctx::new(&cfg, &p, &prompts, "x");
        let m = run_rounds(&ctx, &obs(), init_memory(&obs())).unwrap();
        assert_eq!(m.entries.len(), 1);
        assert_eq!(m.entries[0].persona, Persona::Supervisor);
    }

    #[test]
    fn insight_falls_back_to_first_sentence() {
        let p = providers(MockLlm::new(|req| match req.stage {
            Stage::Memory => Err(ProviderError::Unavailable("down".into())),
            _ => Ok("x".into()),
        }));
        let cfg = PipelineConfig::default();
        let prompts = PromptSet::default();
        let ctx = Ctx::new(&cfg, &p, &prompts, "x");
        let before = Memory::default();
        let after = update_memory(&ctx, &before, "Q?", "First part. Second part.", 1, Persona::Legal).unwrap();
        assert_eq!(after.entries.len(), 1);
        assert!(before.entries.is_empty());
        assert_eq!(after.entries[0].insight, "First part.");
    }

    #[test]
    fn long_answers_truncated() {
        let p = providers(MockLlm::fixed("One. Two. Three. Four. Five. Six."));
        let cfg = PipelineConfig::default();
        let prompts = PromptSet::default();
        let ctx = Ctx::new(&cfg, &p, &prompts, "x");
        let a = answer_question(&ctx, "Q?", &obs(), &Memory::default(), Persona::Supervisor, 1).unwrap();
        assert_eq!(a, "One. Two. Three. Four.");
    }
}
