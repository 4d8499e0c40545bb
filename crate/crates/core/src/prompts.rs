//! Prompt templates and the small header block every prompt starts with.
//!
//! Templates are plain text with `{slot}` placeholders. Built-in copies ship
//! in `assets/prompts/`; a directory with same-named files overrides them.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::Persona;

const HEADER_PREFIX: &str = "### ";

/// Renders `### KEY: value` lines. Values are flattened to a single line.
pub fn header(pairs: &[(&str, &str)]) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        out.push_str(HEADER_PREFIX);
        out.push_str(k);
        out.push_str(": ");
        out.push_str(&v.replace('\n', " "));
        out.push('\n');
    }
    out.push('\n');
    out
}

/// Reads the leading header block of a prompt.
pub fn parse_header(prompt: &str) -> BTreeMap<String, String> {
    prompt
        .lines()
        .map_while(|l| l.strip_prefix(HEADER_PREFIX))
        .filter_map(|l| l.split_once(": "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

/// Replaces each `{key}` with its value. Unknown braces are left alone.
pub fn render(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (k, v) in slots {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub claim: String,
    pub image_summary: String,
    pub kg: String,
    pub supervisor: String,
    pub journalist: String,
    pub legal: String,
    pub scientific: String,
    pub answer: String,
    pub memory: String,
    pub stance: String,
    pub classifier: String,
    pub persuasion_detect: String,
    pub persuasion_summary: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        PromptSet {
            claim: include_str!("../assets/prompts/claim.txt").to_string(),
            image_summary: include_str!("../assets/prompts/image_summary.txt").to_string(),
            kg: include_str!("../assets/prompts/kg.txt").to_string(),
            supervisor: include_str!("../assets/prompts/persona_supervisor.txt").to_string(),
            journalist: include_str!("../assets/prompts/persona_journalist.txt").to_string(),
            legal: include_str!("../assets/prompts/persona_legal.txt").to_string(),
            scientific: include_str!("../assets/prompts/persona_scientific.txt").to_string(),
            answer: include_str!("../assets/prompts/answer.txt").to_string(),
            memory: include_str!("../assets/prompts/memory.txt").to_string(),
            stance: include_str!("../assets/prompts/stance.txt").to_string(),
            classifier: include_str!("../assets/prompts/classifier.txt").to_string(),
            persuasion_detect: include_str!("../assets/prompts/persuasion_detect.txt").to_string(),
            persuasion_summary: include_str!("../assets/prompts/persuasion_summary.txt").to_string(),
        }
    }
}

impl PromptSet {
    /// Built-ins, with any same-named `.txt` file in `dir` taking precedence.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut set = PromptSet::default();
        let slots: [(&str, &mut String); 13] = [
            ("claim", &mut set.claim),
            ("image_summary", &mut set.image_summary),
            ("kg", &mut set.kg),
            ("persona_supervisor", &mut set.supervisor),
            ("persona_journalist", &mut set.journalist),
            ("persona_legal", &mut set.legal),
            ("persona_scientific", &mut set.scientific),
            ("answer", &mut set.answer),
            ("memory", &mut set.memory),
            ("stance", &mut set.stance),
            ("classifier", &mut set.classifier),
            ("persuasion_detect", &mut set.persuasion_detect),
            ("persuasion_summary", &mut set.persuasion_summary),
        ];
        for (name, slot) in slots {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                *slot = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            }
        }
        Ok(set)
    }

    pub fn persona(&self, persona: Persona) -> &str {
        match persona {
            Persona::Supervisor => &self.supervisor,
            Persona::Journalist => &self.journalist,
            Persona::Legal => &self.legal,
            Persona::Scientific => &self.scientific,
        }
    }
}
