use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::NaiveDate;
use degentweb::analyze::{
    cluster_shared_ids, cohort_prevalence, date_page, default_affiliate_patterns, detect_transition, extract_signals,
    parse_affiliate_patterns, rank_stats, shuffle_null, AdSelectors, CohortReport, DatedScore, MonetizationSignals,
    RankSummary, SearchResult, SiteCluster, SiteTimeline, TransitionResult,
};
use degentweb::classify::SiteLabel;
use degentweb::corpus::{group_by_site, normalize_fqdn};
use degentweb::pipeline::{is_compliant, SiteClassification, SiteVerdict};
use serde::Serialize;

use crate::config::{read_json, PipelineConfig};
use crate::io::{load_records, records_path, usage, Reporter};

#[derive(Serialize)]
struct Report {
    cohorts: CohortReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    ranks: Option<RankSummary>,
}

pub fn report(
    records: Option<PathBuf>,
    predictions: &Path,
    search: Option<&Path>,
    cfg: &PipelineConfig,
    out: &Reporter,
) -> Result<()> {
    let records = load_records(&records_path(records, cfg)?, cfg)?;
    let predictions: Vec<SiteClassification> = read_json(predictions)?;
    let labels: BTreeMap<String, SiteLabel> = predictions
        .into_iter()
        .filter_map(|p| match p.verdict {
            SiteVerdict::Classified { label, .. } => Some((normalize_fqdn(&p.site), label)),
            SiteVerdict::Insufficient { .. } => None,
        })
        .collect();
    let sites: Vec<_> = group_by_site(records)
        .into_iter()
        .filter_map(|s| labels.get(&s.site).map(|l| (s.clone(), *l)))
        .collect();
    let cohorts = cohort_prevalence(&sites);
    let ranks = match search {
        Some(path) => {
            let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
            let results = rdr
                .deserialize::<SearchResult>()
                .enumerate()
                .map(|(i, r)| {
                    r.map(|r| SearchResult { site: normalize_fqdn(&r.site), ..r })
                        .with_context(|| format!("{}:{}: bad search row", path.display(), i + 2))
                })
                .collect::<Result<Vec<_>>>()?;
            Some(rank_stats(&results, &labels))
        }
        None => None,
    };
    let report = Report { cohorts, ranks };
    out.emit("report", &report, || {
        let mut s = report.cohorts.to_markdown();
        if !report.cohorts.undated_sites.is_empty() {
            s.push_str(&format!("\n{} sites have no archive date\n", report.cohorts.undated_sites.len()));
        }
        if let Some(r) = &report.ranks {
            let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.2}"));
            s.push_str(&format!(
                "\n{} queries; llm-dominant sites in the top 10 for {:.1}%, top 20 for {:.1}%\n",
                r.n_queries,
                100.0 * r.frac_queries_llm_top10,
                100.0 * r.frac_queries_llm_top20
            ));
            s.push_str(&format!(
                "median site rank: llm-dominant {}, not {}\n",
                fmt(r.llm_dominant.median_site_median_rank),
                fmt(r.not_llm_dominant.median_site_median_rank)
            ));
        }
        s
    })
}

#[derive(Serialize)]
struct TransitionReport {
    cutoff: NaiveDate,
    sites: usize,
    undated_pages: usize,
    flagged: Vec<TransitionResult>,
    observed: usize,
    null_mean: f64,
    null_ratio: Option<f64>,
    n_shuffles: usize,
    seed: u64,
}

pub fn transition(
    records: Option<PathBuf>,
    cutoff: Option<NaiveDate>,
    shuffles: Option<usize>,
    cfg: &PipelineConfig,
    out: &Reporter,
) -> Result<()> {
    let records = load_records(&records_path(records, cfg)?, cfg)?;
    let cutoff = cutoff.unwrap_or(cfg.analysis.cutoff);
    let shuffles = shuffles.unwrap_or(cfg.analysis.shuffles);
    let mut undated_pages = 0;
    let timelines: Vec<SiteTimeline> = group_by_site(records)
        .into_iter()
        .map(|s| {
            let pages = s
                .pages
                .iter()
                .filter(|p| is_compliant(p))
                .filter_map(|p| {
                    let score = p.score?;
                    match p.dated_at.or_else(|| date_page(p)) {
                        Some(dated_at) => Some(DatedScore { dated_at, score }),
                        None => {
                            undated_pages += 1;
                            None
                        }
                    }
                })
                .collect();
            SiteTimeline { site: s.site, pages }
        })
        .collect();
    let flagged: Vec<TransitionResult> = timelines
        .iter()
        .map(|t| detect_transition(t, cutoff))
        .filter(|r| r.flagged)
        .collect();
    let null = shuffle_null(&timelines, shuffles, cfg.analysis.shuffle_seed, cutoff);
    let report = TransitionReport {
        cutoff,
        sites: timelines.len(),
        undated_pages,
        observed: null.observed,
        null_ratio: (null.observed > 0).then(|| null.mean / null.observed as f64),
        null_mean: null.mean,
        flagged,
        n_shuffles: null.n_shuffles,
        seed: null.seed,
    };
    out.emit("transition", &report, || {
        let mut s = format!(
            "{} of {} sites flagged at cutoff {}; shuffled dates flag {:.2} on average over {} shuffles\n",
            report.observed, report.sites, report.cutoff, report.null_mean, report.n_shuffles
        );
        for f in &report.flagged {
            s.push_str(&format!("  {} ({} pre, {} post)\n", f.site, f.n_pre, f.n_post));
        }
        s
    })
}

#[derive(Serialize)]
struct SignalsReport {
    sites: BTreeMap<String, MonetizationSignals>,
    clusters: Vec<SiteCluster>,
    unsupported_ad_rules: usize,
}

pub fn signals(
    records: Option<PathBuf>,
    easylist: Option<&Path>,
    affiliate_patterns: Option<&Path>,
    cfg: &PipelineConfig,
    out: &Reporter,
) -> Result<()> {
    let records = load_records(&records_path(records, cfg)?, cfg)?;
    let ads = match easylist {
        Some(p) => AdSelectors::parse(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?),
        None => AdSelectors::parse(""),
    };
    let patterns = match affiliate_patterns {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            parse_affiliate_patterns(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
        }
        None => default_affiliate_patterns(),
    };
    let mut sites: BTreeMap<String, MonetizationSignals> = BTreeMap::new();
    for rec in &records {
        let entry = sites.entry(rec.site.clone()).or_default();
        if let Some(html) = &rec.raw_html {
            entry.merge(extract_signals(html, &ads, &patterns));
        }
    }
    let clusters = cluster_shared_ids(&sites);
    let report = SignalsReport { sites, clusters, unsupported_ad_rules: ads.unsupported };
    out.emit("signals", &report, || {
        let with_ads = report.sites.values().filter(|s| !s.adsense_ids.is_empty() || s.ad_element_count > 0).count();
        let with_aff = report.sites.values().filter(|s| !s.affiliate_links.is_empty()).count();
        let mut s = format!(
            "{} sites: {} show ads, {} carry affiliate links; {} clusters share an ID\n",
            report.sites.len(),
            with_ads,
            with_aff,
            report.clusters.len()
        );
        for c in &report.clusters {
            s.push_str(&format!("  {} via {}\n", c.sites.join(", "), c.shared_keys.join(", ")));
        }
        s
    })
}
