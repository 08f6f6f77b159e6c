//! Synthetic corpora for desk-scale experiments: mock sites rendered,
//! filtered and scored end to end, with sites spread over the three
//! evaluation groups.

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{ScoredSite, SiteGroup, SiteLabel};
use crate::corpus::{PageRecord, PageSource};
use crate::pipeline::{filter_records, is_compliant, score_records, FilterConfig, PipelineError};
use crate::quality::HeuristicTokenCounter;
use crate::scorer::{LabelHint, MockProfile, MockScorer};
use crate::sitegen::{mock_site, SiteGenError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_llm: usize,
    pub n_human: usize,
    pub seed: u64,
    pub profile: MockProfile,
    pub filter: FilterConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_llm: 60,
            n_human: 60,
            seed: 42,
            profile: MockProfile::default(),
            filter: FilterConfig::default(),
        }
    }
}

/// Round-robin group assignment so every group holds both labels.
pub fn group_for(index: usize) -> SiteGroup {
    [SiteGroup::Company, SiteGroup::Personal, SiteGroup::Other][index % 3]
}

pub fn synthetic_host(label: LabelHint, index: usize) -> String {
    match label {
        LabelHint::Llm => format!("llm-{index:04}.synthetic.test"),
        LabelHint::Human => format!("human-{index:04}.synthetic.test"),
    }
}

/// Per-site generator seed derived from the corpus seed and the host name.
pub fn site_seed(seed: u64, host: &str) -> u64 {
    let mut h = blake3::Hasher::new();
    h.update(&seed.to_le_bytes());
    h.update(host.as_bytes());
    u64::from_le_bytes(h.finalize().as_bytes()[..8].try_into().expect("8 bytes"))
}

/// Rendered pages of one mock site as crawl-like records.
pub fn synthetic_site_records(
    host: &str,
    label: LabelHint,
    seed: u64,
    fetched_at: DateTime<Utc>,
) -> Result<Vec<PageRecord>, SiteGenError> {
    let (_, pages) = mock_site(host, site_seed(seed, host), label)?;
    Ok(pages
        .into_iter()
        .map(|(slug, html)| {
            let mut r = PageRecord::new(&format!("https://{host}{slug}"), fetched_at, PageSource::LiveCrawl)
                .expect("synthetic host is a valid FQDN");
            r.raw_html = Some(html.into_bytes());
            r
        })
        .collect())
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error(transparent)]
    SiteGen(#[from] SiteGenError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// Build, filter and mock-score every site; each site keeps the scores of
/// its compliant pages in URL order.
pub fn synthetic_corpus(cfg: &SynthConfig) -> Result<Vec<ScoredSite>, SynthError> {
    let fetched_at = DateTime::<Utc>::UNIX_EPOCH;
    let specs: Vec<(LabelHint, usize)> = (0..cfg.n_llm)
        .map(|i| (LabelHint::Llm, i))
        .chain((0..cfg.n_human).map(|i| (LabelHint::Human, i)))
        .collect();
    let scorer = MockScorer {
        seed: cfg.seed,
        profile: cfg.profile,
    };
    specs
        .par_iter()
        .map(|&(label, i)| {
            let host = synthetic_host(label, i);
            let records = synthetic_site_records(&host, label, cfg.seed, fetched_at)?;
            let (mut records, _) = filter_records(records, &cfg.filter, &HeuristicTokenCounter)?;
            score_records(&mut records, &scorer, true)?;
            Ok(ScoredSite {
                site: host,
                scores: records.iter().filter(|p| is_compliant(p)).filter_map(|p| p.score).collect(),
                label: match label {
                    LabelHint::Llm => SiteLabel::LlmDominant,
                    LabelHint::Human => SiteLabel::NotLlmDominant,
                },
                group: group_for(i),
            })
        })
        .collect()
}
