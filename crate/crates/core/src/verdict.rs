//! Pseudo-labeling: stance tagging, reliability-weighted aggregation, the
//! rule-based preliminary verdict, the constrained classifier, persuasion
//! gating, and the canonical output record.

use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::config::{PipelineConfig, Variant};
use crate::context::{json_object, Ctx};
use crate::error::{Error, Result};
use crate::mmaf::{evidence_digest, render_memory};
use crate::model::{
    EvidenceBundle, EvidenceDoc, Memory, MemoryEntry, ObservationBundle, PersuasionReport, SlmVerdict, Stance, Tier,
    Verdict, VerdictRecord,
};
use crate::pkm::{self, PersuasionTaxonomy};
use crate::prompts::render;
use crate::providers::{ResponseContract, Stage};
use crate::text::collapse_whitespace;

pub const UNPARSEABLE_JUSTIFICATION: &str = "classifier response unparseable";
const BUILTIN_FEWSHOTS: &str = include_str!("../assets/fewshots.json");

/// Reads the first stance word in a classifier reply; anything else is NEUTRAL.
pub fn parse_stance(raw: &str) -> Stance {
    let upper = raw.to_ascii_uppercase();
    let found = [
        ("SUPPORT", Stance::Supporting),
        ("CONTRADICT", Stance::Contradicting),
        ("NEUTRAL", Stance::Neutral),
    ]
    .into_iter()
    .filter_map(|(word, stance)| upper.find(word).map(|pos| (pos, stance)))
    .min_by_key(|(pos, _)| *pos);
    found.map(|(_, s)| s).unwrap_or(Stance::Neutral)
}

pub fn classify_stance(ctx: &Ctx, claim: &str, doc: &EvidenceDoc) -> Result<Stance> {
    let prompt = render(
        &ctx.prompts.stance,
        &[("claim", claim), ("title", &doc.title), ("snippet", &doc.snippet)],
    );
    let raw = ctx.ask(
        Stage::Classifier,
        &[("TASK", "stance"), ("DOC", doc.id.as_str()), ("URL", doc.url.as_str())],
        &prompt,
        ResponseContract::FreeText,
    )?;
    Ok(parse_stance(&raw))
}

/// Returns the bundle with every textual and visual document stance-tagged.
pub fn tag_stances(ctx: &Ctx, claim: &str, bundle: &EvidenceBundle) -> Result<EvidenceBundle> {
    let mut out = bundle.clone();
    for doc in out.textual.iter_mut().chain(out.visual.iter_mut()) {
        doc.stance = Some(classify_stance(ctx, claim, doc)?);
    }
    Ok(out)
}

/// Reliability-weighted support and contradiction over stance-tagged evidence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SupportAggregate {
    pub s_plus: f64,
    pub s_minus: f64,
    pub high_plus: u32,
    pub high_minus: u32,
    pub med_plus: f64,
    pub med_minus: f64,
    pub low_only_support: bool,
    pub impl_flag: u8,
}

/// Deterministic sensationalism checks on the headline.
pub fn implausibility_flag(headline: &str, clickbait_patterns: &[String]) -> u8 {
    let letters: Vec<char> = headline.chars().filter(|c| c.is_alphabetic()).collect();
    let upper = letters.iter().filter(|c| c.is_uppercase()).count();
    let shouting = headline.chars().count() > 20 && !letters.is_empty() && upper as f64 / letters.len() as f64 > 0.6;
    let normalized = headline.to_lowercase().replace(['\u{2019}', '\u{2018}'], "'");
    let clickbait = clickbait_patterns
        .iter()
        .any(|p| !p.trim().is_empty() && normalized.contains(&p.to_lowercase()));
    let exclaims = headline.contains("!!!");
    u8::from(shouting || clickbait || exclaims)
}

pub fn aggregate_support(docs: &[EvidenceDoc], headline: &str, config: &PipelineConfig) -> Result<SupportAggregate> {
    let mut agg = SupportAggregate::default();
    let mut supporters = 0usize;
    let mut low_supporters = 0usize;
    for d in docs {
        let stance = d
            .stance
            .ok_or_else(|| Error::Reject(format!("document {} has no stance", d.id)))?;
        let tier = Tier::from_reliability(d.reliability, config.alpha_h, config.alpha_m);
        match stance {
            Stance::Supporting => {
                agg.s_plus += d.reliability;
                supporters += 1;
                match tier {
                    Tier::High => agg.high_plus += 1,
                    Tier::Medium => agg.med_plus += d.reliability,
                    Tier::Low => low_supporters += 1,
                }
            }
            Stance::Contradicting => {
                agg.s_minus += d.reliability;
                match tier {
                    Tier::High => agg.high_minus += 1,
                    Tier::Medium => agg.med_minus += d.reliability,
                    Tier::Low => {}
                }
            }
            Stance::Neutral => {}
        }
    }
    agg.low_only_support = supporters > 0 && supporters == low_supporters;
    agg.impl_flag = implausibility_flag(headline, &config.clickbait_patterns);
    Ok(agg)
}

/// The rule verdict, evaluated in fixed precedence: conflict, high-tier
/// dominance, sensationalism and weak support, sparsity, medium-tier margin.
pub fn preliminary_verdict(agg: &SupportAggregate, config: &PipelineConfig) -> Verdict {
    let no_high = agg.high_plus == 0 && agg.high_minus == 0;
    if agg.high_plus > 0 && agg.high_minus > 0 {
        Verdict::Uncertain
    } else if agg.high_plus > 0 {
        Verdict::Real
    } else if agg.high_minus > 0 {
        Verdict::Fake
    } else if agg.impl_flag == 1 || agg.low_only_support {
        Verdict::Fake
    } else if agg.s_plus + agg.s_minus < config.eta {
        Verdict::Uncertain
    } else if no_high && agg.med_plus - agg.med_minus >= config.gamma {
        Verdict::Real
    } else if no_high && agg.med_minus - agg.med_plus >= config.gamma {
        Verdict::Fake
    } else {
        Verdict::Uncertain
    }
}

/// `|S+ - S-| / (S+ + S-)`, or 0 without any stanced support.
pub fn margin_confidence(agg: &SupportAggregate) -> f64 {
    let total = agg.s_plus + agg.s_minus;
    if total <= 0.0 {
        0.0
    } else {
        ((agg.s_plus - agg.s_minus).abs() / total).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShot {
    pub headline: String,
    pub memory: String,
    pub verdict: Verdict,
    pub confidence: f64,
    pub justification: String,
}

pub fn builtin_fewshots() -> Vec<FewShot> {
    serde_json::from_str(BUILTIN_FEWSHOTS).expect("builtin few-shot exemplars parse")
}

pub fn load_fewshots(path: &Path) -> Result<Vec<FewShot>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Schema {
        line: e.line(),
        message: e.to_string(),
    })
}

fn render_fewshots(shots: &[FewShot]) -> String {
    shots
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let answer = serde_json::json!({
                "verdict": s.verdict,
                "confidence": s.confidence,
                "justification": s.justification,
            });
            format!("Example {}:\nHeadline: {}\nMemory: {}\nAnswer: {}", i + 1, s.headline, s.memory, answer)
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn render_stanced(bundle: &EvidenceBundle) -> String {
    let mut lines: Vec<String> = bundle
        .documents()
        .map(|d| {
            let stance = d.stance.map(|s| s.to_string()).unwrap_or_else(|| "NEUTRAL".into());
            format!("{} [{}] {} R={:.3} {}: {}", d.id, stance, d.domain, d.reliability, d.tier, d.title)
        })
        .collect();
    for (i, t) in bundle.kg.iter().enumerate() {
        lines.push(format!("{} <{}, {}, {}>", EvidenceBundle::kg_id(i), t.subject, t.relation, t.object));
    }
    if lines.is_empty() {
        "(none)".into()
    } else {
        lines.join("\n")
    }
}

fn render_signal(rule: Verdict, agg: &SupportAggregate) -> String {
    format!(
        "{rule} (S+ = {:.3}, S- = {:.3}, high-tier supporting {} / contradicting {}, implausibility flag {})",
        agg.s_plus, agg.s_minus, agg.high_plus, agg.high_minus, agg.impl_flag
    )
}

/// Classifier output before citation validation.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabel {
    pub verdict: Verdict,
    pub confidence: f64,
    pub justification: String,
    pub parsed: bool,
}

pub fn parse_pseudo_label(raw: &str) -> Option<PseudoLabel> {
    let v = json_object(raw)?;
    let verdict = Verdict::parse(v.get("verdict")?.as_str()?)?;
    let mut confidence = v.get("confidence")?.as_f64()?;
    if !confidence.is_finite() {
        return None;
    }
    // Some models answer on a 0-100 scale despite the instruction.
    if confidence > 1.0 && confidence <= 100.0 {
        confidence /= 100.0;
    }
    let justification = collapse_whitespace(v.get("justification")?.as_str()?);
    if justification.is_empty() {
        return None;
    }
    Some(PseudoLabel {
        verdict,
        confidence: confidence.clamp(0.0, 1.0),
        justification,
        parsed: true,
    })
}

pub struct ClassifierInput<'a> {
    pub headline: &'a str,
    pub claim: &'a str,
    pub memory: &'a Memory,
    pub bundle: &'a EvidenceBundle,
    pub rule: Verdict,
    pub aggregate: &'a SupportAggregate,
    pub fewshots: &'a [FewShot],
}

/// One constrained classifier pass, retried once if unparseable, with a
/// margin-based fallback after that.
pub fn llm_pseudo_label(ctx: &Ctx, input: &ClassifierInput, pass: u8) -> Result<PseudoLabel> {
    let fewshots = render_fewshots(input.fewshots);
    let memory = format!("{}\nEvidence digest:\n{}", render_memory(input.memory), input.memory.evidence_digest);
    let evidence = render_stanced(input.bundle);
    let signal = render_signal(input.rule, input.aggregate);
    let prompt = render(
        &ctx.prompts.classifier,
        &[
            ("fewshots", &fewshots),
            ("headline", input.headline),
            ("claim", input.claim),
            ("memory", &memory),
            ("evidence", &evidence),
            ("signal", &signal),
        ],
    );
    let pass_s = pass.to_string();
    let markers = [("TASK", "classify"), ("PASS", pass_s.as_str())];
    let mut parsed = parse_pseudo_label(&ctx.ask(Stage::Classifier, &markers, &prompt, ResponseContract::StructuredRecord)?);
    if parsed.is_none() {
        log::warn!("{}: classifier response unparseable, retrying", ctx.item_id);
        parsed = parse_pseudo_label(&ctx.ask_again(Stage::Classifier, &markers, &prompt, ResponseContract::StructuredRecord)?);
    }
    Ok(parsed.unwrap_or_else(|| {
        log::warn!("{}: classifier response unparseable twice, falling back", ctx.item_id);
        PseudoLabel {
            verdict: Verdict::Uncertain,
            confidence: margin_confidence(input.aggregate),
            justification: UNPARSEABLE_JUSTIFICATION.to_string(),
            parsed: false,
        }
    }))
}

fn citation_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b[TIK][1-9]\d*\b").unwrap())
}

/// Evidence ids cited in `justification`, in order of first mention, limited
/// to ids that exist in `bundle`.
pub fn extract_citations(justification: &str, bundle: &EvidenceBundle, item_id: &str) -> Vec<String> {
    let valid = bundle.ids();
    let mut out: Vec<String> = Vec::new();
    for m in citation_pattern().find_iter(justification) {
        let id = m.as_str();
        if out.iter().any(|o| o == id) {
            continue;
        }
        if valid.iter().any(|v| v == id) {
            out.push(id.to_string());
        } else {
            log::warn!("{item_id}: justification cites {id}, which is not in the evidence bundle");
        }
    }
    out
}

/// Everything the decision step produced for one item.
#[derive(Debug, Clone)]
pub struct Decision {
    pub record: VerdictRecord,
    pub bundle: EvidenceBundle,
    pub aggregate: SupportAggregate,
}

/// Stance tagging, aggregation, rule verdict and classifier, with one gated
/// persuasion pass and re-query when the first classifier pass is UNCERTAIN.
pub fn decide(
    ctx: &Ctx,
    obs: &ObservationBundle,
    memory: Memory,
    taxonomy: &PersuasionTaxonomy,
    fewshots: &[FewShot],
) -> Result<Decision> {
    let cfg = ctx.config;
    let bundle = tag_stances(ctx, &obs.claim.text, &obs.evidence)?;
    let docs: Vec<EvidenceDoc> = bundle.documents().cloned().collect();
    let aggregate = aggregate_support(&docs, &obs.headline, cfg)?;
    let rule = preliminary_verdict(&aggregate, cfg);

    let mut memory = memory;
    memory.evidence_digest = evidence_digest(&bundle);

    let mut pkm_invoked = false;
    if cfg.variant == Variant::PkmOnly {
        let report = pkm::analyze(ctx, &obs.claim.text, &obs.preprocessed_body, &memory, taxonomy)?;
        memory = pkm::pkm_update_memory(&memory, &report);
        pkm_invoked = true;
    }
    let input = ClassifierInput {
        headline: &obs.headline,
        claim: &obs.claim.text,
        memory: &memory,
        bundle: &bundle,
        rule,
        aggregate: &aggregate,
        fewshots,
    };
    let first = llm_pseudo_label(ctx, &input, 1)?;
    let mut label = first.clone();
    if first.verdict == Verdict::Uncertain && cfg.gated_pkm_enabled() {
        let report = pkm::analyze(ctx, &obs.claim.text, &obs.preprocessed_body, &memory, taxonomy)?;
        let refined = pkm::pkm_update_memory(&memory, &report);
        label = llm_pseudo_label(ctx, &ClassifierInput { memory: &refined, ..input }, 2)?;
        memory = refined;
        pkm_invoked = true;
    }
    let citations = extract_citations(&label.justification, &bundle, ctx.item_id);
    Ok(Decision {
        record: VerdictRecord {
            id: ctx.item_id.to_string(),
            verdict: label.verdict,
            confidence: label.confidence,
            justification: label.justification,
            citations,
            rule_verdict: Some(rule),
            first_pass: first.verdict,
            pkm_invoked,
            image_summary: obs.image_summary.as_ref().map(|s| s.text.clone()),
            trace: memory,
            slm: None,
        },
        bundle,
        aggregate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedPersuasion {
    pub activations: Vec<u8>,
    pub counts: Vec<u32>,
    pub index: f64,
    pub summary: String,
}

impl From<&PersuasionReport> for RenderedPersuasion {
    fn from(r: &PersuasionReport) -> Self {
        RenderedPersuasion {
            activations: r.activations.clone(),
            counts: r.counts.clone(),
            index: r.index,
            summary: r.summary.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedTrace {
    pub entries: Vec<MemoryEntry>,
    pub insights: Vec<String>,
}

/// The canonical machine-readable verdict record; field order is key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderedRecord {
    pub id: String,
    pub verdict: Verdict,
    pub confidence: u8,
    pub justification: String,
    pub citations: Vec<String>,
    pub rule_verdict: Option<Verdict>,
    pub pkm_invoked: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persuasion: Option<RenderedPersuasion>,
    pub trace: RenderedTrace,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_summary: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slm: Option<SlmVerdict>,
}

pub fn confidence_percent(c: f64) -> u8 {
    (c.clamp(0.0, 1.0) * 100.0).round() as u8
}

impl From<&VerdictRecord> for RenderedRecord {
    fn from(r: &VerdictRecord) -> Self {
        RenderedRecord {
            id: r.id.clone(),
            verdict: r.verdict,
            confidence: confidence_percent(r.confidence),
            justification: r.justification.clone(),
            citations: r.citations.clone(),
            rule_verdict: r.rule_verdict,
            pkm_invoked: r.pkm_invoked,
            persuasion: r.trace.persuasion.as_ref().map(RenderedPersuasion::from),
            trace: RenderedTrace {
                entries: r.trace.entries.clone(),
                insights: r.trace.insights.clone(),
            },
            image_summary: r.image_summary.clone(),
            slm: r.slm.clone(),
        }
    }
}

impl RenderedRecord {
    /// Verdict after the distilled classifier, when one ran.
    pub fn final_verdict(&self) -> Verdict {
        self.slm.as_ref().map(|s| Verdict::from(s.label)).unwrap_or(self.verdict)
    }
}

/// Compact single-line rendering with stable key order.
pub fn render_output(record: &VerdictRecord) -> String {
    serde_json::to_string(&RenderedRecord::from(record)).expect("record serializes")
}

pub fn parse_output(line: &str) -> Result<RenderedRecord> {
    serde_json::from_str(line).map_err(|e| Error::Schema {
        line: e.line(),
        message: e.to_string(),
    })
}
