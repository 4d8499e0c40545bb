//! Domain credibility snapshot (`domain<TAB>tier`) and URL-to-domain mapping.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BUILTIN_TABLE: &str = include_str!("../../assets/credibility.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "PascalCase")]
pub enum CredibilityTier {
    High,
    Medium,
    Unknown,
    Low,
}

impl CredibilityTier {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "high" => Some(CredibilityTier::High),
            "medium" => Some(CredibilityTier::Medium),
            "unknown" => Some(CredibilityTier::Unknown),
            "low" => Some(CredibilityTier::Low),
            _ => None,
        }
    }
}

impl fmt::Display for CredibilityTier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CredibilityTier::High => "High",
            CredibilityTier::Medium => "Medium",
            CredibilityTier::Unknown => "Unknown",
            CredibilityTier::Low => "Low",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CredibilityTable {
    tiers: BTreeMap<String, CredibilityTier>,
}

impl CredibilityTable {
    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, CredibilityTier)>,
        S: Into<String>,
    {
        CredibilityTable {
            tiers: pairs.into_iter().map(|(d, t)| (d.into().to_ascii_lowercase(), t)).collect(),
        }
    }

    /// Parses the tab-separated snapshot format. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut tiers = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            let (Some(domain), Some(tier), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(Error::Schema {
                    line: i + 1,
                    message: "expected `domain<TAB>tier`".into(),
                });
            };
            let tier = CredibilityTier::parse(tier).ok_or_else(|| Error::Schema {
                line: i + 1,
                message: format!("unknown tier `{tier}`"),
            })?;
            tiers.insert(domain.trim().to_ascii_lowercase(), tier);
        }
        Ok(CredibilityTable { tiers })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Small sample snapshot shipped with the crate.
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_TABLE).expect("builtin credibility table parses")
    }

    pub fn len(&self) -> usize {
        self.tiers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiers.is_empty()
    }

    /// Tier for a normalized registrable domain; absent domains are `Unknown`.
    pub fn lookup(&self, domain: &str) -> Result<CredibilityTier> {
        let normalized = !domain.is_empty()
            && domain
                .chars()
                .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '.' || c == '-' || !c.is_ascii());
        if !normalized {
            return Err(Error::Precondition(format!(
                "`{domain}` is not a normalized registrable domain (lowercase, no scheme or path)"
            )));
        }
        Ok(self.tiers.get(domain).copied().unwrap_or(CredibilityTier::Unknown))
    }
}

/// Registrable domain (public-suffix aware) of a URL, lowercased.
pub fn registrable_domain(raw_url: &str) -> Option<String> {
    let parsed = url::Url::parse(raw_url.trim()).ok()?;
    let host = parsed.host_str()?.trim_end_matches('.').to_ascii_lowercase();
    if host.parse::<std::net::IpAddr>().is_ok() || host.starts_with('[') {
        return Some(host);
    }
    Some(psl::domain_str(&host).map(str::to_string).unwrap_or(host))
}
