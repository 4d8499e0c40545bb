//! Evidence retrieval: textual search, reverse-image search and knowledge-base
//! triplets, each candidate scored and ranked by fused reliability.

pub mod scoring;

use std::collections::HashSet;
use std::sync::OnceLock;

use chrono::NaiveDate;
use regex::Regex;

use crate::config::PipelineConfig;
use crate::context::Ctx;
use crate::error::{Error, ProviderError, Result};
use crate::model::{Claim, EvidenceBundle, EvidenceDoc, EvidenceKind, KgSource, KgTriplet, Tier};
use crate::prompts::render;
use crate::providers::{registrable_domain, CredibilityTier, RawSearchHit, ResponseContract, Stage};

pub use scoring::{bm25_scores, credibility_weight, fuse_reliability, median_date, normalize_sigma, temporal_scores};

/// Domain key used for deduplication and credibility lookup.
fn domain_of(url: &str) -> String {
    registrable_domain(url)
        .or_else(|| url::Url::parse(url).ok().and_then(|u| u.host_str().map(str::to_ascii_lowercase)))
        .unwrap_or_default()
}

/// First `k1` hits by provider rank, at most one per registrable domain when
/// `dedup` is set.
pub fn restrict_top_domains(hits: &[RawSearchHit], k1: usize, dedup: bool) -> Vec<RawSearchHit> {
    let mut sorted = hits.to_vec();
    sorted.sort_by(|a, b| a.rank.cmp(&b.rank).then_with(|| a.url.cmp(&b.url)));
    let mut seen = HashSet::new();
    sorted
        .into_iter()
        .filter(|h| !dedup || seen.insert(domain_of(&h.url)))
        .take(k1)
        .collect()
}

/// A retrieved item awaiting scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub url: String,
    pub title: String,
    /// Snippet for web hits, article summary for image hits.
    pub snippet: String,
    pub published_date: Option<NaiveDate>,
    pub rank: u32,
    /// Precomputed semantic similarity, when the caller already has it.
    pub similarity: Option<f64>,
}

impl Candidate {
    fn surface(&self) -> String {
        if self.snippet.is_empty() {
            self.title.clone()
        } else {
            format!("{} {}", self.title, self.snippet)
        }
    }
}

impl From<RawSearchHit> for Candidate {
    fn from(h: RawSearchHit) -> Self {
        Candidate {
            url: h.url,
            title: h.title,
            snippet: h.snippet,
            published_date: h.published_date,
            rank: h.rank,
            similarity: None,
        }
    }
}

/// Scores every candidate against the claim, ranks by reliability (ties by
/// provider rank) and keeps the first `keep`, numbering them `<prefix>1..`.
pub fn score_and_rank(
    ctx: &Ctx,
    claim: &str,
    candidates: Vec<Candidate>,
    kind: EvidenceKind,
    keep: usize,
) -> Result<Vec<EvidenceDoc>> {
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let cfg = ctx.config;
    let surfaces: Vec<String> = candidates.iter().map(Candidate::surface).collect();
    let s1 = normalize_sigma(&bm25_scores(claim, &surfaces));
    let dates: Vec<Option<NaiveDate>> = candidates.iter().map(|c| c.published_date).collect();
    let s4 = temporal_scores(&dates, cfg.alpha_t);
    let mut docs = Vec::with_capacity(candidates.len());
    for (i, c) in candidates.into_iter().enumerate() {
        let s2 = match c.similarity {
            Some(s) => s,
            None if surfaces[i].trim().is_empty() => 0.0,
            None => ctx.providers.semantic_similarity(claim, &surfaces[i])?,
        };
        let domain = domain_of(&c.url);
        let tier = if domain.is_empty() {
            CredibilityTier::Unknown
        } else {
            ctx.providers.credibility.lookup(&domain)?
        };
        let s3 = credibility_weight(tier, cfg);
        let reliability = fuse_reliability([s1[i], s2, s3, s4[i]], cfg.lambda)?;
        docs.push(EvidenceDoc {
            id: String::new(),
            url: c.url,
            domain,
            title: c.title,
            snippet: c.snippet,
            published_date: c.published_date,
            kind,
            rank: c.rank,
            s1: s1[i],
            s2,
            s3,
            s4: s4[i],
            reliability,
            tier: Tier::from_reliability(reliability, cfg.alpha_h, cfg.alpha_m),
            stance: None,
        });
    }
    docs.sort_by(|a, b| {
        b.reliability
            .total_cmp(&a.reliability)
            .then_with(|| a.rank.cmp(&b.rank))
            .then_with(|| a.url.cmp(&b.url))
    });
    docs.truncate(keep);
    let prefix = match kind {
        EvidenceKind::Text => "T",
        EvidenceKind::Image => "I",
    };
    for (i, d) in docs.iter_mut().enumerate() {
        d.id = format!("{prefix}{}", i + 1);
    }
    Ok(docs)
}

/// Web search on the claim, domain restriction, scoring and top-`k1p` selection.
pub fn select_textual_evidence(ctx: &Ctx, claim: &Claim) -> Result<Vec<EvidenceDoc>> {
    let cfg = ctx.config;
    let hits = ctx.providers.search_web(&claim.text, cfg.search_pool.max(cfg.k1))?;
    let pool = restrict_top_domains(&hits, cfg.k1, cfg.dedup_domains);
    score_and_rank(ctx, &claim.text, pool.into_iter().map(Candidate::from).collect(), EvidenceKind::Text, cfg.k1p)
}

/// Reverse-image search, relevance filtering, then the same scoring as textual evidence.
///
/// An unresolvable image yields no visual evidence rather than an error.
pub fn select_visual_evidence(ctx: &Ctx, image: &str, claim: &Claim) -> Result<Vec<EvidenceDoc>> {
    let cfg = ctx.config;
    let hits = match ctx.providers.reverse_image_search(image) {
        Ok(h) => h,
        Err(Error::Provider(ProviderError::UnresolvableImage(msg))) => {
            log::warn!("{}: image unresolvable, no visual evidence ({msg})", ctx.item_id);
            return Ok(Vec::new());
        }
        Err(e) => return Err(e),
    };
    let mut kept = Vec::new();
    for (i, h) in hits.into_iter().enumerate() {
        if h.article_url.trim().is_empty() {
            continue;
        }
        let surface = if h.article_summary.is_empty() {
            h.article_title.clone()
        } else {
            format!("{} {}", h.article_title, h.article_summary)
        };
        let sim = if surface.trim().is_empty() {
            0.0
        } else {
            ctx.providers.semantic_similarity(&claim.text, &surface)?
        };
        if sim < cfg.visual_relevance {
            continue;
        }
        kept.push((
            RawSearchHit {
                url: h.article_url,
                title: h.article_title,
                snippet: h.article_summary,
                published_date: h.published_date,
                rank: i as u32 + 1,
            },
            sim,
        ));
    }
    let pool_hits: Vec<RawSearchHit> = kept.iter().map(|(h, _)| h.clone()).collect();
    let pool = restrict_top_domains(&pool_hits, cfg.k2, cfg.dedup_domains);
    let candidates = pool
        .into_iter()
        .map(|h| {
            let sim = kept.iter().find(|(k, _)| k.rank == h.rank).map(|(_, s)| *s);
            Candidate {
                similarity: sim,
                ..Candidate::from(h)
            }
        })
        .collect();
    score_and_rank(ctx, &claim.text, candidates, EvidenceKind::Image, cfg.k2p)
}

fn list_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(?:\d+[.)]|[-*•])\s+").unwrap())
}

fn clean_component(s: &str) -> String {
    s.trim()
        .trim_matches(|c: char| matches!(c, '<' | '>' | '(' | ')' | '"' | '`'))
        .trim()
        .to_string()
}

/// Parses `subject | relation | object | source` lines; anything else is dropped.
pub fn parse_triplets(raw: &str) -> Vec<KgTriplet> {
    raw.lines()
        .filter_map(|line| {
            let line = list_marker().replace(line.trim(), "");
            let parts: Vec<&str> = line.split('|').collect();
            if parts.len() != 4 {
                return None;
            }
            let subject = clean_component(parts[0]);
            let relation = clean_component(parts[1]);
            let object = clean_component(parts[2]);
            let source = KgSource::parse(parts[3])?;
            if subject.is_empty() || relation.is_empty() || object.is_empty() {
                return None;
            }
            Some(KgTriplet {
                subject,
                relation,
                object,
                source,
            })
        })
        .collect()
}

/// Up to `k3` knowledge-base facts about the claim's entities.
pub fn retrieve_kg_triplets(ctx: &Ctx, claim: &Claim) -> Result<Vec<KgTriplet>> {
    let cfg = ctx.config;
    if cfg.disable_kg || claim.entities.is_empty() {
        return Ok(Vec::new());
    }
    let limit = cfg.k3.to_string();
    let prompt = render(
        &ctx.prompts.kg,
        &[("claim", &claim.text), ("entities", &claim.entities.join("; ")), ("limit", &limit)],
    );
    let mut triplets = parse_triplets(&ctx.ask(Stage::Kg, &[], &prompt, ResponseContract::FreeText)?);
    if triplets.is_empty() {
        log::warn!("{}: no parseable triplets, retrying", ctx.item_id);
        triplets = parse_triplets(&ctx.ask_again(Stage::Kg, &[], &prompt, ResponseContract::FreeText)?);
        if triplets.is_empty() {
            log::warn!("{}: knowledge-base response unparseable twice, continuing without triplets", ctx.item_id);
        }
    }
    triplets.truncate(cfg.k3);
    Ok(triplets)
}

pub fn assemble_bundle(textual: Vec<EvidenceDoc>, visual: Vec<EvidenceDoc>, kg: Vec<KgTriplet>) -> EvidenceBundle {
    EvidenceBundle { textual, visual, kg }
}

/// Checks the size caps and ordering a bundle must satisfy.
pub fn check_bundle(bundle: &EvidenceBundle, config: &PipelineConfig) -> Result<()> {
    let sorted = |docs: &[EvidenceDoc]| docs.windows(2).all(|w| w[0].reliability >= w[1].reliability);
    if bundle.textual.len() > config.k1p || bundle.visual.len() > config.k2p || bundle.kg.len() > config.k3 {
        return Err(Error::Precondition("evidence bundle exceeds its configured caps".into()));
    }
    if !sorted(&bundle.textual) || !sorted(&bundle.visual) {
        return Err(Error::Precondition("evidence lists must be sorted by reliability".into()));
    }
    Ok(())
}
