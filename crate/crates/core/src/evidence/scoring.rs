//! The four per-document scores and their fusion into reliability.

use chrono::NaiveDate;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::providers::CredibilityTier;
use crate::text::tokenize;

pub const BM25_K1: f64 = 1.5;
pub const BM25_B: f64 = 0.75;

/// Okapi BM25 of `query` against each document, using the documents themselves
/// as the corpus. Repeated query tokens contribute once per occurrence.
pub fn bm25_scores(query: &str, docs: &[String]) -> Vec<f64> {
    let q = tokenize(query);
    let toks: Vec<Vec<String>> = docs.iter().map(|d| tokenize(d)).collect();
    let n = toks.len() as f64;
    if toks.is_empty() {
        return Vec::new();
    }
    let avgdl = toks.iter().map(Vec::len).sum::<usize>() as f64 / n;
    if avgdl == 0.0 {
        return vec![0.0; toks.len()];
    }
    let idf = |term: &str| {
        let df = toks.iter().filter(|d| d.iter().any(|t| t == term)).count() as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    };
    let idfs: Vec<f64> = q.iter().map(|t| idf(t)).collect();
    toks.iter()
        .map(|doc| {
            let dl = doc.len() as f64;
            q.iter()
                .zip(&idfs)
                .map(|(term, idf)| {
                    let f = doc.iter().filter(|t| *t == term).count() as f64;
                    idf * f * (BM25_K1 + 1.0) / (f + BM25_K1 * (1.0 - BM25_B + BM25_B * dl / avgdl))
                })
                .sum()
        })
        .collect()
}

/// Min-max scaling; a degenerate set (all equal, or a singleton) maps to 0.5.
pub fn normalize_sigma(raw: &[f64]) -> Vec<f64> {
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if raw.is_empty() {
        return Vec::new();
    }
    if max - min <= 0.0 {
        return vec![0.5; raw.len()];
    }
    raw.iter().map(|x| ((x - min) / (max - min)).clamp(0.0, 1.0)).collect()
}

pub fn credibility_weight(tier: CredibilityTier, config: &PipelineConfig) -> f64 {
    match tier {
        CredibilityTier::High => config.alpha_h,
        CredibilityTier::Medium => config.alpha_m,
        CredibilityTier::Unknown => config.alpha_u,
        CredibilityTier::Low => config.alpha_l,
    }
}

/// Median of the known dates; for an even count the lower middle date.
pub fn median_date(dates: &[Option<NaiveDate>]) -> Option<NaiveDate> {
    let mut known: Vec<NaiveDate> = dates.iter().flatten().copied().collect();
    if known.is_empty() {
        return None;
    }
    known.sort();
    Some(known[(known.len() - 1) / 2])
}

/// `max(alpha_t, 1 - |t - median| / 365)` for dated documents, 0 for undated ones.
pub fn temporal_scores(dates: &[Option<NaiveDate>], alpha_t: f64) -> Vec<f64> {
    let Some(median) = median_date(dates) else {
        return vec![0.0; dates.len()];
    };
    dates
        .iter()
        .map(|d| match d {
            None => 0.0,
            Some(d) => {
                let delta = (*d - median).num_days().unsigned_abs() as f64;
                (1.0 - delta / 365.0).max(alpha_t)
            }
        })
        .collect()
}

/// `R = sum_j lambda_j * s_j`.
pub fn fuse_reliability(s: [f64; 4], lambda: [f64; 4]) -> Result<f64> {
    if s.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::Reject(format!("component scores must lie in [0, 1] (got {s:?})")));
    }
    if lambda.iter().any(|x| !(0.0..=1.0).contains(x)) || (lambda.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Reject(format!("weights must be non-negative and sum to 1 (got {lambda:?})")));
    }
    let r: f64 = s.iter().zip(&lambda).map(|(s, l)| s * l).sum();
    Ok(r.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> Option<NaiveDate> {
        NaiveDate::from_ymd_opt(y, m, day)
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(normalize_sigma(&[2.0, 4.0, 6.0]), vec![0.0, 0.5, 1.0]);
        assert_eq!(normalize_sigma(&[3.0, 3.0]), vec![0.5, 0.5]);
        assert_eq!(normalize_sigma(&[7.1]), vec![0.5]);
    }

    #[test]
    fn bm25_unrelated_doc_scores_zero() {
        let s = bm25_scores("fuel cutoff", &["fuel switches moved to cutoff".into(), "celebrity wedding rumor".into()]);
        assert!(s[0] > 0.0);
        assert_eq!(s[1], 0.0);
        assert_eq!(bm25_scores("zzz", &["a b".into(), "c".into()]), vec![0.0, 0.0]);
    }

    #[test]
    fn temporal_examples() {
        let s = temporal_scores(&[d(2025, 1, 1), d(2025, 3, 15), d(2025, 3, 15), None], 0.2);
        // Median is 2025-03-15; the first date is 73 days before it.
        assert!((s[0] - 0.8).abs() < 1e-12);
        assert_eq!(s[1], 1.0);
        assert_eq!(s[3], 0.0);
        let far = temporal_scores(&[d(2020, 1, 1), d(2025, 1, 1), d(2025, 1, 1)], 0.2);
        assert_eq!(far[0], 0.2);
        assert_eq!(temporal_scores(&[None, None], 0.2), vec![0.0, 0.0]);
    }

    #[test]
    fn even_count_uses_lower_middle() {
        assert_eq!(median_date(&[d(2025, 1, 4), d(2025, 1, 1), d(2025, 1, 3), d(2025, 1, 2)]), d(2025, 1, 2));
    }

    #[test]
    fn fusion_examples() {
        let r = fuse_reliability([0.8, 0.6, 0.9, 1.0], [0.25; 4]).unwrap();
        assert!((r - 0.825).abs() < 1e-12);
        assert_eq!(fuse_reliability([1.0; 4], [0.1, 0.2, 0.3, 0.4]).unwrap(), 1.0);
        assert!(fuse_reliability([1.2, 0.0, 0.0, 0.0], [0.25; 4]).is_err());
        assert!(fuse_reliability([0.5; 4], [0.5, 0.5, 0.5, 0.0]).is_err());
    }
}
