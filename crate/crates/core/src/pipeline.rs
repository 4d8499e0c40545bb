//! End-to-end orchestration of one article, batches, run manifests and the
//! distillation export.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;

use crate::config::PipelineConfig;
use crate::context::Ctx;
use crate::error::{Error, ProviderError, Result};
use crate::eval::{load_dataset, DatasetFormat, DatasetRecord};
use crate::evidence::{
    assemble_bundle, check_bundle, retrieve_kg_triplets, select_textual_evidence, select_visual_evidence,
};
use crate::mmaf::{init_memory, run_rounds};
use crate::model::{ImageSummary, NewsItem, ObservationBundle, SlmVerdict, Verdict, VerdictRecord};
use crate::pkm::PersuasionTaxonomy;
use crate::preprocess::{clean_text, generate_claim, summarize_image};
use crate::prompts::PromptSet;
use crate::providers::Providers;
use crate::slm::DistillRecord;
use crate::verdict::{builtin_fewshots, decide, load_fewshots, Decision, FewShot, RenderedRecord};

/// A configured pipeline bound to a provider stack.
pub struct Pipeline {
    pub config: PipelineConfig,
    pub providers: Providers,
    pub prompts: PromptSet,
    pub taxonomy: PersuasionTaxonomy,
    pub fewshots: Vec<FewShot>,
}

/// Result of verifying one item, with the intermediate artifacts.
#[derive(Debug, Clone)]
pub struct Verification {
    pub observation: ObservationBundle,
    pub decision: Decision,
}

impl Verification {
    pub fn record(&self) -> &VerdictRecord {
        &self.decision.record
    }
}

impl Pipeline {
    pub fn new(config: PipelineConfig, providers: Providers) -> Result<Self> {
        let config = config.validate()?;
        let prompts = match &config.prompts_dir {
            Some(dir) => PromptSet::load_dir(dir)?,
            None => PromptSet::default(),
        };
        let taxonomy = match &config.taxonomy {
            Some(p) => PersuasionTaxonomy::from_path(p)?,
            None => PersuasionTaxonomy::builtin(),
        };
        taxonomy.validate()?;
        let fewshots = match &config.fewshots {
            Some(p) => load_fewshots(p)?,
            None => builtin_fewshots(),
        };
        Ok(Pipeline {
            config,
            providers,
            prompts,
            taxonomy,
            fewshots,
        })
    }

    fn ctx<'a>(&'a self, item_id: &'a str) -> Ctx<'a> {
        Ctx::new(&self.config, &self.providers, &self.prompts, item_id)
    }

    fn image_summary(&self, ctx: &Ctx, image: &str) -> Result<Option<ImageSummary>> {
        match self.providers.extract_image_entities(image) {
            Ok(entities) => Ok(Some(summarize_image(ctx, &entities)?)),
            Err(Error::Provider(ProviderError::UnresolvableImage(msg))) => {
                log::warn!("{}: image unresolvable, continuing text-only ({msg})", ctx.item_id);
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }

    /// Preprocessing and evidence retrieval.
    pub fn observe(&self, item: &NewsItem) -> Result<ObservationBundle> {
        item.validate()?;
        let cfg = &self.config;
        let ctx = self.ctx(&item.id);
        let body = clean_text(&item.body);
        let claim = generate_claim(&ctx, &item.headline, &body)?;
        let image = item.image.as_deref().filter(|_| !cfg.disable_image);
        let image_summary = match image {
            Some(img) => self.image_summary(&ctx, img)?,
            None => None,
        };
        let evidence = if cfg.uses_retrieval() {
            let textual = select_textual_evidence(&ctx, &claim)?;
            let visual = match image {
                Some(img) => select_visual_evidence(&ctx, img, &claim)?,
                None => Vec::new(),
            };
            let kg = retrieve_kg_triplets(&ctx, &claim)?;
            let bundle = assemble_bundle(textual, visual, kg);
            check_bundle(&bundle, cfg)?;
            bundle
        } else {
            Default::default()
        };
        Ok(ObservationBundle {
            headline: item.headline.clone(),
            preprocessed_body: body,
            claim,
            image_summary,
            evidence,
        })
    }

    /// Full verification of one item.
    pub fn verify(&self, item: &NewsItem) -> Result<Verification> {
        let observation = self.observe(item)?;
        let ctx = self.ctx(&item.id);
        let mut memory = init_memory(&observation);
        if self.config.uses_rounds() {
            memory = run_rounds(&ctx, &observation, memory)?;
        }
        let mut decision = decide(&ctx, &observation, memory, &self.taxonomy, &self.fewshots)?;
        if self.providers.slm.is_some() {
            let request = distill_request(&observation, &decision.record);
            if let Some(mut preds) = self.providers.slm_predict(std::slice::from_ref(&request))? {
                let p = preds.remove(0);
                decision.record.slm = Some(SlmVerdict {
                    label: p.label,
                    logprob_real: p.logprob_real,
                    logprob_fake: p.logprob_fake,
                });
            }
        }
        Ok(Verification { observation, decision })
    }

    /// Verifies `items` on up to `jobs` threads; results keep input order.
    pub fn run_batch(&self, items: &[NewsItem], jobs: usize) -> Vec<Result<Verification>> {
        let jobs = jobs.clamp(1, items.len().max(1));
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<Result<Verification>>>> = Mutex::new((0..items.len()).map(|_| None).collect());
        std::thread::scope(|scope| {
            for _ in 0..jobs {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= items.len() {
                        break;
                    }
                    let result = self.verify(&items[i]);
                    if let Err(e) = &result {
                        log::error!("{}: {e}", items[i].id);
                    }
                    slots.lock().unwrap()[i] = Some(result);
                });
            }
        });
        slots
            .into_inner()
            .unwrap()
            .into_iter()
            .map(|r| r.expect("every item processed"))
            .collect()
    }
}

fn distill_request(obs: &ObservationBundle, record: &VerdictRecord) -> DistillRecord {
    DistillRecord {
        id: record.id.clone(),
        headline: obs.headline.clone(),
        body_preprocessed: obs.preprocessed_body.clone(),
        image_summary: obs.image_summary.as_ref().map(|s| s.text.clone()).unwrap_or_default(),
        justification: record.justification.clone(),
        label: None,
    }
}

/// Reads news items from a `.json` object or array, a `.jsonl` file, or a
/// labeled `.csv` / `.tsv` dataset.
pub fn load_items(path: &Path) -> Result<Vec<NewsItem>> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    if let Some(format @ DatasetFormat::Delimited) = DatasetFormat::from_path(path) {
        return Ok(load_dataset(path, format)?.iter().map(DatasetRecord::to_news_item).collect());
    }
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let schema = |line: usize, e: serde_json::Error| Error::Schema {
        line,
        message: e.to_string(),
    };
    let items: Vec<NewsItem> = if ext == "jsonl" || ext == "ndjson" {
        raw.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| schema(i + 1, e)))
            .collect::<Result<_>>()?
    } else {
        let value: serde_json::Value = serde_json::from_str(&raw).map_err(|e| schema(e.line(), e))?;
        if value.is_array() {
            serde_json::from_value(value).map_err(|e| schema(0, e))?
        } else {
            vec![serde_json::from_value(value).map_err(|e| schema(0, e))?]
        }
    };
    for item in &items {
        item.validate()?;
    }
    Ok(items)
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestItem {
    pub id: String,
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    /// 1-based line of the record in the output file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Everything needed to reproduce or audit a batch run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub provider_mode: String,
    pub inputs: Vec<String>,
    pub output: String,
    pub jobs: usize,
    pub config: PipelineConfig,
    pub items: Vec<ManifestItem>,
    pub succeeded: usize,
    pub failed: usize,
    pub call_counts: BTreeMap<String, u64>,
    pub elapsed_ms: u128,
}

impl RunManifest {
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        pipeline: &Pipeline,
        provider_mode: &str,
        inputs: Vec<String>,
        output: String,
        jobs: usize,
        items: &[NewsItem],
        results: &[Result<Verification>],
        started: Instant,
    ) -> Self {
        let mut line = 0;
        let entries: Vec<ManifestItem> = items
            .iter()
            .zip(results)
            .map(|(item, r)| match r {
                Ok(v) => {
                    line += 1;
                    ManifestItem {
                        id: item.id.clone(),
                        status: "ok",
                        verdict: Some(v.record().verdict),
                        output_line: Some(line),
                        error: None,
                    }
                }
                Err(e) => ManifestItem {
                    id: item.id.clone(),
                    status: "error",
                    verdict: None,
                    output_line: None,
                    error: Some(e.to_string()),
                },
            })
            .collect();
        let succeeded = entries.iter().filter(|e| e.status == "ok").count();
        RunManifest {
            provider_mode: provider_mode.to_string(),
            inputs,
            output,
            jobs,
            config: pipeline.config.clone(),
            failed: entries.len() - succeeded,
            succeeded,
            items: entries,
            call_counts: pipeline.providers.calls.snapshot(),
            elapsed_ms: started.elapsed().as_millis(),
        }
    }
}

/// Joins verdict records with their dataset rows into training records.
///
/// UNCERTAIN records are dropped unless `keep_uncertain_with_gold`, in which
/// case they take the gold label.
pub fn export_distill(
    records: &[RenderedRecord],
    dataset: &[DatasetRecord],
    keep_uncertain_with_gold: bool,
) -> Result<Vec<DistillRecord>> {
    let by_id: HashMap<&str, &DatasetRecord> = dataset.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut out = Vec::new();
    for rec in records {
        let row = by_id
            .get(rec.id.as_str())
            .ok_or_else(|| Error::Reject(format!("verdict record `{}` has no dataset row", rec.id)))?;
        let label = match rec.verdict.as_label() {
            Some(l) => l,
            None if keep_uncertain_with_gold => row.label,
            None => continue,
        };
        out.push(DistillRecord {
            id: rec.id.clone(),
            headline: row.headline.clone(),
            body_preprocessed: clean_text(&row.body),
            image_summary: rec.image_summary.clone().unwrap_or_default(),
            justification: rec.justification.clone(),
            label: Some(label),
        });
    }
    Ok(out)
}
