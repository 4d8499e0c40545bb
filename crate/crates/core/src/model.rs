//! Domain value types shared by every pipeline stage.

use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gold label of a benchmark record and the SLM's binary output space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    pub fn parse(s: &str) -> Option<Label> {
        match s.trim().to_ascii_uppercase().as_str() {
            "REAL" => Some(Label::Real),
            "FAKE" => Some(Label::Fake),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Real => "REAL",
            Label::Fake => "FAKE",
        })
    }
}

/// Ternary pseudo-label produced by the rule and the LLM classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Real,
    Fake,
    Uncertain,
}

impl Verdict {
    pub fn parse(s: &str) -> Option<Verdict> {
        match s.trim().to_ascii_uppercase().as_str() {
            "REAL" => Some(Verdict::Real),
            "FAKE" => Some(Verdict::Fake),
            "UNCERTAIN" => Some(Verdict::Uncertain),
            _ => None,
        }
    }

    pub fn as_label(self) -> Option<Label> {
        match self {
            Verdict::Real => Some(Label::Real),
            Verdict::Fake => Some(Label::Fake),
            Verdict::Uncertain => None,
        }
    }
}

impl From<Label> for Verdict {
    fn from(label: Label) -> Self {
        match label {
            Label::Real => Verdict::Real,
            Label::Fake => Verdict::Fake,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Real => "REAL",
            Verdict::Fake => "FAKE",
            Verdict::Uncertain => "UNCERTAIN",
        })
    }
}

/// One article under verification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewsItem {
    pub id: String,
    pub headline: String,
    #[serde(default)]
    pub body: String,
    /// File path, URL, or opaque fixture id understood by the vision provider.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_label: Option<Label>,
}

impl NewsItem {
    pub fn new(id: impl Into<String>, headline: impl Into<String>, body: impl Into<String>) -> Result<Self> {
        let item = NewsItem {
            id: id.into(),
            headline: headline.into(),
            body: body.into(),
            image: None,
            gold_label: None,
        };
        item.validate()?;
        Ok(item)
    }

    pub fn with_image(mut self, image: impl Into<String>) -> Self {
        self.image = Some(image.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.headline.trim().is_empty() {
            return Err(Error::Precondition(format!("news item `{}` has an empty headline", self.id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub text: String,
    pub entities: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSummary {
    pub text: String,
    pub entities: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EvidenceKind {
    Text,
    Image,
}

/// Reliability tier of a scored document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Tier {
    High,
    Medium,
    Low,
}

impl Tier {
    /// HIGH iff `r > alpha_h`; MEDIUM iff `alpha_m < r <= alpha_h`; LOW otherwise.
    pub fn from_reliability(r: f64, alpha_h: f64, alpha_m: f64) -> Tier {
        if r > alpha_h {
            Tier::High
        } else if r > alpha_m {
            Tier::Medium
        } else {
            Tier::Low
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::High => "HIGH",
            Tier::Medium => "MEDIUM",
            Tier::Low => "LOW",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Stance {
    Supporting,
    Contradicting,
    Neutral,
}

impl fmt::Display for Stance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stance::Supporting => "SUPPORTING",
            Stance::Contradicting => "CONTRADICTING",
            Stance::Neutral => "NEUTRAL",
        })
    }
}

/// One retrieved candidate with its component scores.
///
/// `id` is assigned after ranking (`T1..` for textual, `I1..` for visual) and is
/// the handle justifications cite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceDoc {
    pub id: String,
    pub url: String,
    pub domain: String,
    pub title: String,
    pub snippet: String,
    pub published_date: Option<NaiveDate>,
    pub kind: EvidenceKind,
    /// Provider rank, used to break reliability ties.
    pub rank: u32,
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
    pub s4: f64,
    pub reliability: f64,
    pub tier: Tier,
    pub stance: Option<Stance>,
}

impl EvidenceDoc {
    pub fn surface_text(&self) -> String {
        if self.snippet.is_empty() {
            self.title.clone()
        } else {
            format!("{} {}", self.title, self.snippet)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KgSource {
    Wikidata,
    Dbpedia,
    Googlekg,
    LlmInternal,
}

impl KgSource {
    pub fn parse(s: &str) -> Option<KgSource> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "wikidata" => Some(KgSource::Wikidata),
            "dbpedia" => Some(KgSource::Dbpedia),
            "googlekg" | "googleknowledgegraph" => Some(KgSource::Googlekg),
            "llminternal" | "llm" | "internal" => Some(KgSource::LlmInternal),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            KgSource::Wikidata => "wikidata",
            KgSource::Dbpedia => "dbpedia",
            KgSource::Googlekg => "googlekg",
            KgSource::LlmInternal => "llm-internal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KgTriplet {
    pub subject: String,
    pub relation: String,
    pub object: String,
    pub source: KgSource,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvidenceBundle {
    pub textual: Vec<EvidenceDoc>,
    pub visual: Vec<EvidenceDoc>,
    pub kg: Vec<KgTriplet>,
}

impl EvidenceBundle {
    pub fn is_empty(&self) -> bool {
        self.textual.is_empty() && self.visual.is_empty() && self.kg.is_empty()
    }

    /// Documents eligible for stance tagging, textual first.
    pub fn documents(&self) -> impl Iterator<Item = &EvidenceDoc> {
        self.textual.iter().chain(self.visual.iter())
    }

    pub fn kg_id(index: usize) -> String {
        format!("K{}", index + 1)
    }

    /// Every citable id in the bundle.
    pub fn ids(&self) -> Vec<String> {
        self.documents()
            .map(|d| d.id.clone())
            .chain((0..self.kg.len()).map(Self::kg_id))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationBundle {
    pub headline: String,
    pub preprocessed_body: String,
    pub claim: Claim,
    pub image_summary: Option<ImageSummary>,
    pub evidence: EvidenceBundle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Persona {
    Supervisor,
    Journalist,
    Legal,
    Scientific,
}

impl Persona {
    pub const ALL: [Persona; 4] = [Persona::Supervisor, Persona::Journalist, Persona::Legal, Persona::Scientific];

    pub fn parse(s: &str) -> Option<Persona> {
        match s.trim().to_ascii_lowercase().as_str() {
            "supervisor" => Some(Persona::Supervisor),
            "journalist" => Some(Persona::Journalist),
            "legal" | "legal analyst" => Some(Persona::Legal),
            "scientific" | "scientific expert" => Some(Persona::Scientific),
            _ => None,
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Persona::Supervisor => "Supervisor",
            Persona::Journalist => "Journalist",
            Persona::Legal => "Legal Analyst",
            Persona::Scientific => "Scientific Expert",
        }
    }

    /// Lowercase role word used in fallback questions.
    pub fn role_word(self) -> &'static str {
        match self {
            Persona::Supervisor => "supervisor",
            Persona::Journalist => "journalist",
            Persona::Legal => "legal",
            Persona::Scientific => "scientific",
        }
    }
}

impl fmt::Display for Persona {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Persona::Supervisor => "SUPERVISOR",
            Persona::Journalist => "JOURNALIST",
            Persona::Legal => "LEGAL",
            Persona::Scientific => "SCIENTIFIC",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub round: u32,
    pub persona: Persona,
    pub question: String,
    pub answer: String,
    pub insight: String,
}

/// Shared contextual memory built by the persona loop.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Memory {
    pub entries: Vec<MemoryEntry>,
    pub insights: Vec<String>,
    pub evidence_digest: String,
    pub persuasion: Option<PersuasionReport>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersuasionSpan {
    pub technique: usize,
    pub phrase: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersuasionReport {
    pub activations: Vec<u8>,
    pub spans: Vec<PersuasionSpan>,
    pub counts: Vec<u32>,
    pub index: f64,
    pub summary: String,
}

/// Structured output of the pseudo-labeling stage.
///
/// `confidence` is kept in `[0, 1]` here; the rendered record carries
/// `round(100 * confidence)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub id: String,
    pub verdict: Verdict,
    pub confidence: f64,
    pub justification: String,
    pub citations: Vec<String>,
    pub rule_verdict: Option<Verdict>,
    /// Classifier verdict before any persuasion refinement.
    pub first_pass: Verdict,
    pub pkm_invoked: bool,
    pub image_summary: Option<String>,
    pub trace: Memory,
    pub slm: Option<SlmVerdict>,
}

/// Final binary decision returned by the distilled classifier service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlmVerdict {
    pub label: Label,
    pub logprob_real: f64,
    pub logprob_fake: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tier_boundaries() {
        assert_eq!(Tier::from_reliability(0.95, 0.9, 0.7), Tier::High);
        assert_eq!(Tier::from_reliability(0.9, 0.9, 0.7), Tier::Medium);
        assert_eq!(Tier::from_reliability(0.8, 0.9, 0.7), Tier::Medium);
        assert_eq!(Tier::from_reliability(0.7, 0.9, 0.7), Tier::Low);
        assert_eq!(Tier::from_reliability(0.0, 0.9, 0.7), Tier::Low);
    }

    #[test]
    fn empty_headline_rejected() {
        assert!(NewsItem::new("x", "  ", "body").is_err());
        assert!(NewsItem::new("x", "Headline", "").is_ok());
    }

    #[test]
    fn kg_source_aliases() {
        assert_eq!(KgSource::parse("Wikidata"), Some(KgSource::Wikidata));
        assert_eq!(KgSource::parse("Google KG"), Some(KgSource::Googlekg));
        assert_eq!(KgSource::parse("llm-internal"), Some(KgSource::LlmInternal));
        assert_eq!(KgSource::parse("blog"), None);
    }
}
