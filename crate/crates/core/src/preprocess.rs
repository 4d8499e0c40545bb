//! Body cleaning, claim generation and image summarization.

use crate::context::{json_object, Ctx};
use crate::error::{Error, Result};
use crate::model::{Claim, ImageSummary};
use crate::prompts::render;
use crate::providers::{ResponseContract, Stage};
use crate::text::{clip_chars, collapse_whitespace, truncate_sentences};

const MAX_CLAIM_SENTENCES: usize = 3;

/// Whitespace runs become one space, control characters are dropped, runs of
/// three or more `.`/`!`/`?` shrink to their first character, and the ends are
/// trimmed.
pub fn clean_text(body: &str) -> String {
    let mut out = String::with_capacity(body.len());
    let chars: Vec<char> = body
        .chars()
        .filter_map(|c| {
            if c.is_whitespace() {
                Some(' ')
            } else if c.is_control() {
                None
            } else {
                Some(c)
            }
        })
        .collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if matches!(c, '.' | '!' | '?') {
            let mut j = i;
            while j < chars.len() && matches!(chars[j], '.' | '!' | '?') {
                j += 1;
            }
            if j - i >= 3 {
                out.push(c);
            } else {
                out.extend(&chars[i..j]);
            }
            i = j;
        } else {
            out.push(c);
            i += 1;
        }
    }
    collapse_whitespace(&out)
}

fn parse_claim(raw: &str) -> Option<(String, Vec<String>)> {
    let v = json_object(raw)?;
    let claim = collapse_whitespace(v.get("claim")?.as_str()?);
    if claim.is_empty() {
        return None;
    }
    let entities = match v.get("entities") {
        None | Some(serde_json::Value::Null) => Vec::new(),
        Some(e) => e
            .as_array()?
            .iter()
            .filter_map(|x| x.as_str())
            .map(collapse_whitespace)
            .filter(|x| !x.is_empty())
            .collect(),
    };
    Some((claim, entities))
}

/// Keeps entities that occur in the claim or headline, first occurrence wins.
fn grounded_entities(entities: Vec<String>, claim: &str, headline: &str) -> Vec<String> {
    let haystack = format!("{}\n{}", claim.to_lowercase(), headline.to_lowercase());
    let mut out: Vec<String> = Vec::new();
    for e in entities {
        let key = e.to_lowercase();
        if haystack.contains(&key) && !out.iter().any(|o| o.to_lowercase() == key) {
            out.push(e);
        }
    }
    out
}

/// Distills headline and cleaned body into a claim of at most three sentences.
///
/// An unparseable response is retried once; after that the headline itself
/// becomes the claim.
pub fn generate_claim(ctx: &Ctx, headline: &str, body: &str) -> Result<Claim> {
    if headline.trim().is_empty() {
        return Err(Error::Precondition("claim generation needs a non-empty headline".into()));
    }
    let prompt = render(
        &ctx.prompts.claim,
        &[("headline", headline), ("body", clip_chars(body, ctx.config.max_body_chars))],
    );
    let markers = [("TASK", "claim")];
    let mut parsed = parse_claim(&ctx.ask(Stage::Claim, &markers, &prompt, ResponseContract::StructuredRecord)?);
    if parsed.is_none() {
        log::warn!("{}: claim response unparseable, retrying", ctx.item_id);
        parsed = parse_claim(&ctx.ask_again(Stage::Claim, &markers, &prompt, ResponseContract::StructuredRecord)?);
    }
    Ok(match parsed {
        Some((text, entities)) => {
            let text = truncate_sentences(&text, MAX_CLAIM_SENTENCES);
            let entities = grounded_entities(entities, &text, headline);
            Claim { text, entities }
        }
        None => {
            log::warn!("{}: claim response unparseable twice, using the headline", ctx.item_id);
            Claim {
                text: collapse_whitespace(headline),
                entities: Vec::new(),
            }
        }
    })
}

/// One-paragraph description of the image that names every detected entity.
pub fn summarize_image(ctx: &Ctx, entities: &[String]) -> Result<ImageSummary> {
    let listed = if entities.is_empty() { "(none detected)".to_string() } else { entities.join(", ") };
    let prompt = render(&ctx.prompts.image_summary, &[("entities", &listed)]);
    let raw = ctx.ask(Stage::Claim, &[("TASK", "image_summary")], &prompt, ResponseContract::FreeText)?;
    let mut text = collapse_whitespace(&raw);
    let lower = text.to_lowercase();
    let missing: Vec<&str> = entities
        .iter()
        .filter(|e| !lower.contains(&e.to_lowercase()))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        if text.is_empty() {
            text = format!("The image shows {}.", missing.join(", "));
        } else {
            text = format!("{text} Detected elements: {}.", missing.join(", "));
        }
    }
    if text.is_empty() {
        text = "No description of the image is available.".to_string();
    }
    Ok(ImageSummary {
        text,
        entities: entities.to_vec(),
    })
}
