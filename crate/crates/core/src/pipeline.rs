//! Stage glue: filter pages, score compliant ones, build site vectors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{decile_vector, predict, ClassifyError, DecileVector, Prediction, SvmModel};
use crate::corpus::{group_by_site, PageRecord, PageSource};
use crate::extract::{extract_main_content, flag_boilerplate_texts, CdcParams, ExtractError};
use crate::quality::{assess_text, CompliancePolicy, QualityError, TokenCounter};
use crate::scorer::{Scorer, ScorerError};

pub const DEFAULT_MIN_PAGES: usize = 15;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Quality(#[from] QualityError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error("scorer returned {got} scores for {want} texts")]
    ScoreCount { got: usize, want: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub policy: CompliancePolicy,
    pub cdc: CdcParams,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub site: String,
    pub pages: usize,
    pub compliant: usize,
}

/// Fill `extracted_text` from `raw_html` where it is missing. Pre-extracted
/// pages keep their text.
pub fn extract_pages(pages: &mut [PageRecord]) {
    pages.par_iter_mut().for_each(|p| {
        if p.source == PageSource::PreExtracted || p.extracted_text.is_some() {
            return;
        }
        if let Some(html) = &p.raw_html {
            p.extracted_text = Some(extract_main_content(html).text);
        }
    });
}

/// Extract, measure cross-page duplication within each site, and attach a
/// compliance verdict to every page. Site and page order are preserved.
pub fn filter_records(
    records: Vec<PageRecord>,
    cfg: &FilterConfig,
    tokens: &dyn TokenCounter,
) -> Result<(Vec<PageRecord>, Vec<FilterSummary>), PipelineError> {
    cfg.policy.validate()?;
    cfg.cdc.validate()?;
    let mut out = Vec::with_capacity(records.len());
    let mut summaries = Vec::new();
    for mut site in group_by_site(records) {
        extract_pages(&mut site.pages);
        let texts: Vec<&str> = site
            .pages
            .iter()
            .map(|p| p.extracted_text.as_deref().unwrap_or(""))
            .collect();
        let verdicts = flag_boilerplate_texts(&texts, &cfg.cdc, cfg.policy.dup_cap)?;
        let results = texts
            .iter()
            .zip(&verdicts)
            .map(|(t, v)| assess_text(t, v.duplicate_ratio, &cfg.policy, tokens))
            .collect::<Result<Vec<_>, _>>()?;
        let mut compliant = 0;
        for (page, result) in site.pages.iter_mut().zip(results) {
            compliant += usize::from(result.compliant);
            page.token_count = Some(result.token_count);
            page.compliance = Some(result);
        }
        summaries.push(FilterSummary {
            site: site.site.clone(),
            pages: site.pages.len(),
            compliant,
        });
        out.extend(site.pages);
    }
    Ok((out, summaries))
}

pub fn is_compliant(p: &PageRecord) -> bool {
    p.compliance.as_ref().is_some_and(|c| c.compliant)
}

/// Score pages (compliant ones only when `only_compliant`) in one batch
/// call; returns how many were scored.
pub fn score_records(records: &mut [PageRecord], scorer: &dyn Scorer, only_compliant: bool) -> Result<usize, PipelineError> {
    let idx: Vec<usize> = records
        .iter()
        .enumerate()
        .filter(|(_, p)| p.extracted_text.is_some() && (!only_compliant || is_compliant(p)))
        .map(|(i, _)| i)
        .collect();
    let texts: Vec<String> = idx
        .iter()
        .map(|&i| records[i].extracted_text.clone().unwrap_or_default())
        .collect();
    let scores = scorer.score(&texts)?;
    if scores.len() != texts.len() {
        return Err(PipelineError::ScoreCount {
            got: scores.len(),
            want: texts.len(),
        });
    }
    for (i, s) in idx.iter().zip(scores) {
        records[*i].score = Some(s);
    }
    Ok(idx.len())
}

/// Scores of a site's compliant, scored pages in record order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteScores {
    pub site: String,
    pub scores: Vec<f64>,
}

pub fn site_scores(records: &[PageRecord]) -> Vec<SiteScores> {
    group_by_site(records.to_vec())
        .into_iter()
        .map(|s| SiteScores {
            site: s.site,
            scores: s
                .pages
                .iter()
                .filter(|p| is_compliant(p))
                .filter_map(|p| p.score)
                .collect(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SiteVerdict {
    Classified {
        label: crate::classify::SiteLabel,
        distance: f64,
        vector: DecileVector,
    },
    Insufficient {
        n_pages: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteClassification {
    pub site: String,
    #[serde(flatten)]
    pub verdict: SiteVerdict,
}

/// Classify sites with at least `min_pages` scored pages, using the first
/// `cap` of them when set; the rest are reported as insufficient.
pub fn classify_sites(
    sites: &[SiteScores],
    model: &SvmModel,
    min_pages: usize,
    cap: Option<usize>,
) -> Result<Vec<SiteClassification>, PipelineError> {
    sites
        .par_iter()
        .map(|s| {
            let verdict = if s.scores.len() < min_pages.max(1) {
                SiteVerdict::Insufficient {
                    n_pages: s.scores.len(),
                }
            } else {
                let take = cap.unwrap_or(s.scores.len()).min(s.scores.len());
                let vector = decile_vector(&s.scores[..take])?;
                let Prediction {
                    label,
                    signed_distance,
                } = predict(model, &vector);
                SiteVerdict::Classified {
                    label,
                    distance: signed_distance,
                    vector,
                }
            };
            Ok(SiteClassification {
                site: s.site.clone(),
                verdict,
            })
        })
        .collect()
}
