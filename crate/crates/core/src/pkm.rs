//! Persuasion analysis: technique detection over a fixed taxonomy, category
//! aggregation, the persuasion index, and memory enrichment.

use std::path::Path;

use serde::Deserialize;

use crate::context::{json_object, Ctx};
use crate::error::{Error, Result};
use crate::model::{Memory, PersuasionReport, PersuasionSpan};
use crate::mmaf::render_memory;
use crate::prompts::render;
use crate::providers::{ResponseContract, Stage};
use crate::text::{clip_chars, collapse_whitespace, truncate_sentences};

pub const CATEGORIES: [&str; 6] = [
    "justification",
    "simplification",
    "distraction",
    "call",
    "reputation attack",
    "manipulative wording",
];
pub const TECHNIQUE_COUNT: usize = 23;
pub const NO_TECHNIQUES: &str = "no persuasion techniques detected";

const BUILTIN_TAXONOMY: &str = include_str!("../assets/taxonomy.tsv");

/// Techniques with their category; category indices follow [`CATEGORIES`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PersuasionTaxonomy {
    techniques: Vec<String>,
    category_of: Vec<usize>,
}

fn name_key(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_alphanumeric())
        .collect::<String>()
        .to_lowercase()
}

impl PersuasionTaxonomy {
    /// Parses `technique<TAB>category` rows and checks the 23-technique, 6-category shape.
    pub fn parse(text: &str) -> Result<Self> {
        let mut techniques = Vec::new();
        let mut category_of = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let schema = |message: String| Error::Schema { line: i + 1, message };
            let (name, category) = line
                .split_once('\t')
                .ok_or_else(|| schema("expected `technique<TAB>category`".into()))?;
            let name = name.trim();
            let category = category.trim().to_lowercase();
            let g = CATEGORIES
                .iter()
                .position(|c| *c == category)
                .ok_or_else(|| schema(format!("unknown category `{category}`")))?;
            if name.is_empty() {
                return Err(schema("empty technique name".into()));
            }
            if techniques.iter().any(|t: &String| name_key(t) == name_key(name)) {
                return Err(schema(format!("technique `{name}` listed twice")));
            }
            techniques.push(name.to_string());
            category_of.push(g);
        }
        let tax = PersuasionTaxonomy { techniques, category_of };
        tax.validate()?;
        Ok(tax)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn builtin() -> Self {
        Self::parse(BUILTIN_TAXONOMY).expect("builtin taxonomy is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.techniques.len() != TECHNIQUE_COUNT {
            return Err(Error::config(
                "taxonomy",
                format!("expected {TECHNIQUE_COUNT} techniques, found {}", self.techniques.len()),
            ));
        }
        let a = self.incidence();
        for k in 0..TECHNIQUE_COUNT {
            let col: u32 = a.iter().map(|row| row[k] as u32).sum();
            if col != 1 {
                return Err(Error::config("taxonomy", format!("technique {k} belongs to {col} categories")));
            }
        }
        if let Some(g) = self.category_sizes().iter().position(|s| *s == 0) {
            return Err(Error::config("taxonomy", format!("category `{}` has no techniques", CATEGORIES[g])));
        }
        Ok(())
    }

    pub fn techniques(&self) -> &[String] {
        &self.techniques
    }

    pub fn category_of(&self, technique: usize) -> usize {
        self.category_of[technique]
    }

    /// The 6 x 23 binary category-technique matrix.
    pub fn incidence(&self) -> Vec<Vec<u8>> {
        let mut a = vec![vec![0u8; self.techniques.len()]; CATEGORIES.len()];
        for (k, g) in self.category_of.iter().enumerate() {
            a[*g][k] = 1;
        }
        a
    }

    pub fn category_sizes(&self) -> Vec<u32> {
        let mut sizes = vec![0u32; CATEGORIES.len()];
        for g in &self.category_of {
            sizes[*g] += 1;
        }
        sizes
    }

    /// Case- and punctuation-insensitive name lookup.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        let key = name_key(name);
        self.techniques.iter().position(|t| name_key(t) == key)
    }
}

/// `u = A z`.
pub fn category_counts(z: &[u8], taxonomy: &PersuasionTaxonomy) -> Result<Vec<u32>> {
    if z.len() != taxonomy.techniques.len() {
        return Err(Error::Reject(format!(
            "activation vector has length {}, expected {}",
            z.len(),
            taxonomy.techniques.len()
        )));
    }
    Ok(taxonomy
        .incidence()
        .iter()
        .map(|row| row.iter().zip(z).map(|(a, z)| (*a as u32) * (*z as u32)).sum())
        .collect())
}

/// `Pi = (sum_g beta_g * u_g / size_g) / sum_g beta_g`.
pub fn persuasion_index(u: &[u32], beta: &[f64], taxonomy: &PersuasionTaxonomy) -> Result<f64> {
    let sizes = taxonomy.category_sizes();
    if u.len() != sizes.len() || beta.len() != sizes.len() {
        return Err(Error::Reject("category counts and importances need one entry per category".into()));
    }
    if beta.iter().any(|b| !(*b > 0.0)) {
        return Err(Error::Reject("category importances must be positive".into()));
    }
    if u.iter().zip(&sizes).any(|(u, s)| u > s) {
        return Err(Error::Reject("category count exceeds category size".into()));
    }
    let weighted: f64 = u
        .iter()
        .zip(&sizes)
        .zip(beta)
        .map(|((u, s), b)| b * (*u as f64) / (*s as f64))
        .sum();
    Ok((weighted / beta.iter().sum::<f64>()).clamp(0.0, 1.0))
}

#[derive(Deserialize)]
struct Detection {
    technique: String,
    #[serde(alias = "phrase")]
    span: String,
}

#[derive(Deserialize)]
struct Detections {
    techniques: Vec<Detection>,
}

fn parse_detections(raw: &str) -> Option<Vec<Detection>> {
    let v = json_object(raw)?;
    serde_json::from_value::<Detections>(v).ok().map(|d| d.techniques)
}

/// Keeps taxonomy techniques whose quoted span occurs verbatim in the claim or body.
pub fn filter_detections(
    detections: Vec<(String, String)>,
    claim: &str,
    body: &str,
    taxonomy: &PersuasionTaxonomy,
) -> (Vec<u8>, Vec<PersuasionSpan>) {
    let mut z = vec![0u8; taxonomy.techniques.len()];
    let mut spans: Vec<PersuasionSpan> = Vec::new();
    for (name, span) in detections {
        let Some(k) = taxonomy.index_of(&name) else {
            log::debug!("dropping unknown technique `{name}`");
            continue;
        };
        let phrase = span.trim();
        if phrase.is_empty() || !(claim.contains(phrase) || body.contains(phrase)) {
            log::debug!("dropping span not found verbatim: `{phrase}`");
            continue;
        }
        if spans.iter().any(|s| s.technique == k && s.phrase == phrase) {
            continue;
        }
        z[k] = 1;
        spans.push(PersuasionSpan {
            technique: k,
            phrase: phrase.to_string(),
        });
    }
    spans.sort_by(|a, b| a.technique.cmp(&b.technique).then_with(|| a.phrase.cmp(&b.phrase)));
    (z, spans)
}

/// One detection call (retried once if unparseable) yielding activations and spans.
pub fn detect_techniques(
    ctx: &Ctx,
    claim: &str,
    body: &str,
    memory: &Memory,
    taxonomy: &PersuasionTaxonomy,
) -> Result<(Vec<u8>, Vec<PersuasionSpan>)> {
    let listing = taxonomy
        .techniques
        .iter()
        .enumerate()
        .map(|(k, t)| format!("- {t} ({})", CATEGORIES[taxonomy.category_of[k]]))
        .collect::<Vec<_>>()
        .join("\n");
    let mem = render_memory(memory);
    let prompt = render(
        &ctx.prompts.persuasion_detect,
        &[
            ("claim", claim),
            ("body", clip_chars(body, ctx.config.max_body_chars)),
            ("memory", &mem),
            ("techniques", &listing),
        ],
    );
    let markers = [("TASK", "detect")];
    let mut parsed = parse_detections(&ctx.ask(Stage::Persuasion, &markers, &prompt, ResponseContract::StructuredRecord)?);
    if parsed.is_none() {
        log::warn!("{}: persuasion response unparseable, retrying", ctx.item_id);
        parsed = parse_detections(&ctx.ask_again(Stage::Persuasion, &markers, &prompt, ResponseContract::StructuredRecord)?);
    }
    let Some(detections) = parsed else {
        log::warn!("{}: persuasion response unparseable twice, assuming no techniques", ctx.item_id);
        return Ok((vec![0; taxonomy.techniques.len()], Vec::new()));
    };
    Ok(filter_detections(
        detections.into_iter().map(|d| (d.technique, d.span)).collect(),
        claim,
        body,
        taxonomy,
    ))
}

fn active_names(z: &[u8], taxonomy: &PersuasionTaxonomy) -> Vec<String> {
    z.iter()
        .enumerate()
        .filter(|(_, on)| **on == 1)
        .map(|(k, _)| taxonomy.techniques[k].clone())
        .collect()
}

/// At most three sentences naming every active technique.
pub fn summarize_persuasion(ctx: &Ctx, z: &[u8], spans: &[PersuasionSpan], taxonomy: &PersuasionTaxonomy) -> String {
    let names = active_names(z, taxonomy);
    if names.is_empty() {
        return NO_TECHNIQUES.to_string();
    }
    let template = format!("Detected: {}.", names.join(", "));
    let detections = spans
        .iter()
        .map(|s| format!("- {}: \"{}\"", taxonomy.techniques[s.technique], s.phrase))
        .collect::<Vec<_>>()
        .join("\n");
    let prompt = render(&ctx.prompts.persuasion_summary, &[("detections", &detections)]);
    let summary = match ctx.ask(Stage::Persuasion, &[("TASK", "summarize")], &prompt, ResponseContract::FreeText) {
        Ok(s) => truncate_sentences(&collapse_whitespace(&s), 3),
        Err(e) => {
            log::warn!("{}: persuasion summary failed ({e}), using template", ctx.item_id);
            return template;
        }
    };
    if summary.is_empty() {
        return template;
    }
    let lower = summary.to_lowercase();
    let missing: Vec<&str> = names
        .iter()
        .filter(|n| !lower.contains(&n.to_lowercase()))
        .map(String::as_str)
        .collect();
    if missing.is_empty() {
        summary
    } else {
        format!("{summary} Also detected: {}.", missing.join(", "))
    }
}

/// Detection, aggregation, index and summary in one report.
pub fn analyze(ctx: &Ctx, claim: &str, body: &str, memory: &Memory, taxonomy: &PersuasionTaxonomy) -> Result<PersuasionReport> {
    ctx.providers.calls.bump("pkm");
    let (z, spans) = detect_techniques(ctx, claim, body, memory, taxonomy)?;
    let counts = category_counts(&z, taxonomy)?;
    let index = persuasion_index(&counts, &ctx.config.beta, taxonomy)?;
    let summary = summarize_persuasion(ctx, &z, &spans, taxonomy);
    Ok(PersuasionReport {
        activations: z,
        spans,
        counts,
        index,
        summary,
    })
}

/// Returns `memory` with the report in its persuasion slot and one insight appended.
pub fn pkm_update_memory(memory: &Memory, report: &PersuasionReport) -> Memory {
    let mut next = memory.clone();
    next.insights.push(format!("persuasion index Π = {:.4}; {}", report.index, report.summary));
    next.persuasion = Some(report.clone());
    next
}
