use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use anyhow::{Context, Result};
use chrono::{DateTime, TimeZone, Utc};
use degentweb::corpus::{site_of_url, PageRecord};
use degentweb::crawl::{
    CrawlPolicy, CrawlStats, Crawler, DirectoryTransport, HostScheduler, HttpTransport, StopReason, SystemClock,
    VirtualClock,
};
use degentweb::extract::extract_main_content;
use degentweb::quality::{assess_text, HeuristicTokenCounter};
use degentweb::sample::sample_pages;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{read_json, PipelineConfig};
use crate::io::{read_lines, save_records, usage, Reporter};

const HTTP_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Serialize)]
struct CrawlSummary {
    sites: usize,
    pages_fetched: usize,
    compliant_pages: usize,
    requests_made: usize,
    target_met: usize,
    per_site: Vec<CrawlStats>,
}

/// Virtual crawls start here unless `--start` says otherwise, so repeated
/// runs produce identical records.
fn default_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).single().expect("valid date")
}

pub fn run(
    sites_file: &Path,
    out_path: &Path,
    root: Option<&Path>,
    start: Option<DateTime<Utc>>,
    policy_file: Option<&Path>,
    cfg: &PipelineConfig,
    out: &Reporter,
) -> Result<()> {
    let policy: CrawlPolicy = match policy_file {
        Some(p) => read_json(p)?,
        None => cfg.crawl.clone(),
    };
    policy.validate().map_err(|e| usage(e.to_string()))?;

    let mut grouped: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for url in read_lines(sites_file)? {
        let site = site_of_url(&url).ok_or_else(|| usage(format!("{}: not a URL with a host: {url}", sites_file.display())))?;
        grouped.entry(site).or_default().push(url);
    }
    let sites: Vec<(String, Vec<String>)> = grouped
        .into_iter()
        .map(|(site, urls)| {
            let picked = sample_pages(&urls, policy.sample_cap, cfg.sampling.algorithm);
            (site, picked)
        })
        .collect();

    let filter = cfg.filter();
    let evaluate = |rec: &PageRecord| {
        let Some(html) = &rec.raw_html else { return false };
        let text = extract_main_content(html).text;
        assess_text(&text, 0.0, &filter.policy, &HeuristicTokenCounter).is_ok_and(|r| r.compliant)
    };

    let results = match root {
        Some(root) => {
            let transport = DirectoryTransport::new(root);
            let start = start.unwrap_or_else(default_start);
            sites
                .par_iter()
                .map(|(site, urls)| {
                    let clock = VirtualClock::new(start);
                    let scheduler = HostScheduler::new();
                    let crawler = Crawler { policy: &policy, transport: &transport, clock: &clock, scheduler: &scheduler };
                    crawler.crawl_site(site, urls, &evaluate)
                })
                .collect::<Vec<_>>()
        }
        None => {
            let transport = HttpTransport::new(HTTP_TIMEOUT)?;
            let scheduler = HostScheduler::new();
            let crawler = Crawler { policy: &policy, transport: &transport, clock: &SystemClock, scheduler: &scheduler };
            crawler.crawl_sites(&sites, &evaluate)
        }
    };

    let mut records = Vec::new();
    let mut per_site = Vec::new();
    for ((site, _), result) in sites.iter().zip(results) {
        let (pages, stats) = result.with_context(|| format!("crawling {site}"))?;
        records.extend(pages);
        per_site.push(stats);
    }
    save_records(out_path, &records, cfg)?;

    let summary = CrawlSummary {
        sites: per_site.len(),
        pages_fetched: per_site.iter().map(|s| s.pages_fetched).sum(),
        compliant_pages: per_site.iter().map(|s| s.compliant_pages).sum(),
        requests_made: per_site.iter().map(|s| s.requests_made).sum(),
        target_met: per_site.iter().filter(|s| s.stopped_reason == StopReason::TargetMet).count(),
        per_site,
    };
    out.emit("crawl", &summary, || {
        format!(
            "crawled {} sites: {} pages fetched, {} likely compliant, {} requests; {} sites reached the target",
            summary.sites, summary.pages_fetched, summary.compliant_pages, summary.requests_made, summary.target_met
        )
    })
}
