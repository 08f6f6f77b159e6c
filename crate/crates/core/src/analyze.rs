//! Downstream analyses over classified sites: prevalence by cohort,
//! transition detection with a date-shuffle null, search-rank statistics,
//! and monetization signals with shared-ID clustering.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use chrono::{DateTime, Datelike, NaiveDate, Utc};
use petgraph::unionfind::UnionFind;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use regex::Regex;
use scraper::{Html, Selector};
use serde::{Deserialize, Serialize};
use std::sync::LazyLock;

use crate::classify::{percentile, SiteLabel};
use crate::corpus::{PageRecord, SiteSample};

pub const MIN_PAGES_PER_SIDE: usize = 4;

/// Day of ChatGPT's public launch; pages dated before it are "pre".
pub fn default_cutoff() -> NaiveDate {
    NaiveDate::from_ymd_opt(2022, 11, 30).expect("valid date")
}

pub fn half_year_label(t: &DateTime<Utc>) -> String {
    format!("{}H{}", t.year(), if t.month() <= 6 { 1 } else { 2 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortBucket {
    pub label: String,
    pub n_sites: usize,
    pub n_llm_dominant: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortReport {
    pub buckets: Vec<CohortBucket>,
    /// Sites without any archive date, left out of the buckets.
    pub undated_sites: Vec<String>,
}

impl CohortReport {
    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| cohort | sites | llm-dominant | fraction |\n|---|---|---|---|\n");
        for b in &self.buckets {
            s.push_str(&format!(
                "| {} | {} | {} | {:.4} |\n",
                b.label, b.n_sites, b.n_llm_dominant, b.fraction
            ));
        }
        s
    }
}

/// Bucket sites by the half-year of their earliest archived page.
pub fn cohort_prevalence(sites: &[(SiteSample, SiteLabel)]) -> CohortReport {
    let mut buckets: BTreeMap<(i32, u32), (usize, usize)> = BTreeMap::new();
    let mut undated_sites = Vec::new();
    for (sample, label) in sites {
        let Some(t) = sample.earliest_archived_at else {
            undated_sites.push(sample.site.clone());
            continue;
        };
        let e = buckets
            .entry((t.year(), if t.month() <= 6 { 1 } else { 2 }))
            .or_default();
        e.0 += 1;
        if *label == SiteLabel::LlmDominant {
            e.1 += 1;
        }
    }
    CohortReport {
        buckets: buckets
            .into_iter()
            .map(|((y, h), (n, llm))| CohortBucket {
                label: format!("{y}H{h}"),
                n_sites: n,
                n_llm_dominant: llm,
                fraction: llm as f64 / n as f64,
            })
            .collect(),
        undated_sites,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatedScore {
    pub dated_at: NaiveDate,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteTimeline {
    pub site: String,
    pub pages: Vec<DatedScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionResult {
    pub site: String,
    pub n_pre: usize,
    pub n_post: usize,
    pub q25_pre: Option<f64>,
    pub q75_post: Option<f64>,
    pub flagged: bool,
}

fn quantile(mut v: Vec<f64>, p: f64) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(percentile(&v, p))
}

fn transition_of(site: &str, pages: impl Iterator<Item = (NaiveDate, f64)>, cutoff: NaiveDate) -> TransitionResult {
    let (mut pre, mut post) = (Vec::new(), Vec::new());
    for (date, score) in pages {
        if date < cutoff {
            pre.push(score);
        } else {
            post.push(score);
        }
    }
    let (n_pre, n_post) = (pre.len(), post.len());
    let q25_pre = quantile(pre, 25.0);
    let q75_post = quantile(post, 75.0);
    let flagged = n_pre >= MIN_PAGES_PER_SIDE
        && n_post >= MIN_PAGES_PER_SIDE
        && matches!((q75_post, q25_pre), (Some(post), Some(pre)) if post < pre);
    TransitionResult {
        site: site.to_string(),
        n_pre,
        n_post,
        q25_pre,
        q75_post,
        flagged,
    }
}

/// Flag a site whose post-cutoff 75th percentile falls below its
/// pre-cutoff 25th percentile, given at least 4 pages on each side.
pub fn detect_transition(site: &SiteTimeline, cutoff: NaiveDate) -> TransitionResult {
    transition_of(&site.site, site.pages.iter().map(|p| (p.dated_at, p.score)), cutoff)
}

pub fn count_flags(sites: &[SiteTimeline], cutoff: NaiveDate) -> usize {
    sites.iter().filter(|s| detect_transition(s, cutoff).flagged).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShuffleNull {
    pub observed: usize,
    pub n_shuffles: usize,
    pub seed: u64,
    pub counts: Vec<usize>,
    pub mean: f64,
}

fn shuffle_seed(seed: u64, shuffle: usize) -> u64 {
    let mut h = blake3::Hasher::new();
    h.update(&seed.to_le_bytes());
    h.update(&(shuffle as u64).to_le_bytes());
    let bytes = h.finalize();
    u64::from_le_bytes(bytes.as_bytes()[..8].try_into().expect("8 bytes"))
}

/// Null model: shuffle page dates within each site (scores stay put) and
/// count flags again, `n_shuffles` times.
pub fn shuffle_null(sites: &[SiteTimeline], n_shuffles: usize, seed: u64, cutoff: NaiveDate) -> ShuffleNull {
    let mut null = shuffle_null_with(sites, n_shuffles, cutoff, |shuffle, dates: &mut Vec<Vec<NaiveDate>>| {
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed(seed, shuffle));
        for d in dates.iter_mut() {
            d.shuffle(&mut rng);
        }
    });
    null.seed = seed;
    null
}

/// As [`shuffle_null`] with a caller-supplied permutation of each site's
/// dates for shuffle `i`.
pub fn shuffle_null_with<F>(sites: &[SiteTimeline], n_shuffles: usize, cutoff: NaiveDate, permute: F) -> ShuffleNull
where
    F: Fn(usize, &mut Vec<Vec<NaiveDate>>) + Sync,
{
    let counts: Vec<usize> = (0..n_shuffles)
        .into_par_iter()
        .map(|i| {
            let mut dates: Vec<Vec<NaiveDate>> = sites
                .iter()
                .map(|s| s.pages.iter().map(|p| p.dated_at).collect())
                .collect();
            permute(i, &mut dates);
            sites
                .iter()
                .zip(&dates)
                .filter(|(s, d)| {
                    transition_of(&s.site, d.iter().copied().zip(s.pages.iter().map(|p| p.score)), cutoff).flagged
                })
                .count()
        })
        .collect();
    let mean = if n_shuffles == 0 {
        0.0
    } else {
        counts.iter().sum::<usize>() as f64 / n_shuffles as f64
    };
    ShuffleNull {
        observed: count_flags(sites, cutoff),
        n_shuffles,
        seed: 0,
        counts,
        mean,
    }
}

static META_DATE_KEYS: &[&str] = &["article:published_time", "date", "last-modified"];
static URL_DATE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"/((?:19|20)\d{2})/(0[1-9]|1[0-2])/").unwrap());
static META: LazyLock<Selector> = LazyLock::new(|| Selector::parse("meta").unwrap());

fn parse_loose_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc).date_naive());
    }
    if let Ok(t) = DateTime::parse_from_rfc2822(s) {
        return Some(t.with_timezone(&Utc).date_naive());
    }
    s.get(..10).and_then(|d| NaiveDate::parse_from_str(d, "%Y-%m-%d").ok())
}

/// Content date in priority order: archive capture time, a date meta tag,
/// then a `/YYYY/MM/` URL segment (first of the month).
pub fn date_page(rec: &PageRecord) -> Option<NaiveDate> {
    if let Some(t) = rec.archived_at {
        return Some(t.date_naive());
    }
    if let Some(html) = &rec.raw_html {
        let doc = Html::parse_document(&String::from_utf8_lossy(html));
        for key in META_DATE_KEYS {
            let found = doc.select(&META).find_map(|m| {
                let el = m.value();
                let name = el
                    .attr("property")
                    .or_else(|| el.attr("name"))
                    .or_else(|| el.attr("http-equiv"))?;
                if name.eq_ignore_ascii_case(key) {
                    el.attr("content").and_then(parse_loose_date)
                } else {
                    None
                }
            });
            if found.is_some() {
                return found;
            }
        }
    }
    let caps = URL_DATE.captures(&rec.url)?;
    NaiveDate::from_ymd_opt(caps[1].parse().ok()?, caps[2].parse().ok()?, 1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    pub query: String,
    pub rank: u32,
    pub site: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRankStats {
    pub n_sites: usize,
    pub median_site_median_rank: Option<f64>,
    pub mean_site_median_rank: Option<f64>,
    pub mean_links_per_site: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSummary {
    pub llm_dominant: ClassRankStats,
    pub not_llm_dominant: ClassRankStats,
    pub n_queries: usize,
    pub frac_queries_llm_top10: f64,
    pub frac_queries_llm_top20: f64,
    pub unlabeled_sites: usize,
}

fn median(v: &[f64]) -> Option<f64> {
    quantile(v.to_vec(), 50.0)
}

/// Rank statistics per label class. Results for sites without a label are
/// left out of the class rows but still count as queries.
pub fn rank_stats(results: &[SearchResult], labels: &BTreeMap<String, SiteLabel>) -> RankSummary {
    let mut ranks: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut top10: BTreeSet<&str> = BTreeSet::new();
    let mut top20: BTreeSet<&str> = BTreeSet::new();
    let queries: BTreeSet<&str> = results.iter().map(|r| r.query.as_str()).collect();
    for r in results {
        ranks.entry(&r.site).or_default().push(r.rank as f64);
        if labels.get(&r.site) == Some(&SiteLabel::LlmDominant) {
            if r.rank <= 10 {
                top10.insert(&r.query);
            }
            if r.rank <= 20 {
                top20.insert(&r.query);
            }
        }
    }
    let class = |want: SiteLabel| {
        let per_site: Vec<(f64, usize)> = ranks
            .iter()
            .filter(|(site, _)| labels.get(**site) == Some(&want))
            .map(|(_, r)| (median(r).expect("non-empty"), r.len()))
            .collect();
        let medians: Vec<f64> = per_site.iter().map(|p| p.0).collect();
        let n = per_site.len();
        ClassRankStats {
            n_sites: n,
            median_site_median_rank: median(&medians),
            mean_site_median_rank: (n > 0).then(|| medians.iter().sum::<f64>() / n as f64),
            mean_links_per_site: (n > 0).then(|| per_site.iter().map(|p| p.1).sum::<usize>() as f64 / n as f64),
        }
    };
    let nq = queries.len();
    let frac = |s: &BTreeSet<&str>| if nq == 0 { 0.0 } else { s.len() as f64 / nq as f64 };
    RankSummary {
        llm_dominant: class(SiteLabel::LlmDominant),
        not_llm_dominant: class(SiteLabel::NotLlmDominant),
        n_queries: nq,
        frac_queries_llm_top10: frac(&top10),
        frac_queries_llm_top20: frac(&top20),
        unlabeled_sites: ranks.keys().filter(|s| !labels.contains_key(**s)).count(),
    }
}

static ADSENSE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"ca-pub-\d{16}\b").unwrap());
static AFFILIATE_TAG: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[?&](?:tag|aff|affid|aff_id|affiliate|affiliate_id|ref_id)=([A-Za-z0-9_.\-]+)").unwrap());
static ANCHOR: LazyLock<Selector> = LazyLock::new(|| Selector::parse("a[href]").unwrap());

pub const DEFAULT_AFFILIATE_PATTERNS: &[&str] = &[
    r"amazon\.[a-z.]+/.*[?&]tag=",
    r"\bamzn\.to/",
    r"[?&](?:aff|affid|aff_id|affiliate|affiliate_id)=",
    r"shareasale\.com/r\.cfm",
    r"click\.linksynergy\.com/",
    r"\b(?:anrdoezrs\.net|jdoqocy\.com|tkqlhce\.com|dpbolvw\.net|kqzyfj\.com)/",
    r"awin1\.com/cread\.php",
    r"go\.skimresources\.com",
    r"redirect\.viglink\.com",
];

pub fn default_affiliate_patterns() -> Vec<Regex> {
    DEFAULT_AFFILIATE_PATTERNS
        .iter()
        .map(|p| Regex::new(p).expect("built-in pattern"))
        .collect()
}

/// One regex per line; blank lines and `#` comments skipped.
pub fn parse_affiliate_patterns(text: &str) -> Result<Vec<Regex>, regex::Error> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(Regex::new)
        .collect()
}

/// The generic element-hiding subset of an ad-block filter list.
pub struct AdSelectors {
    selectors: Vec<Selector>,
    /// `##` rules whose selector the CSS parser rejected.
    pub unsupported: usize,
}

impl AdSelectors {
    pub fn parse(list: &str) -> Self {
        let mut selectors = Vec::new();
        let mut unsupported = 0;
        for line in list.lines() {
            let Some(sel) = line.trim().strip_prefix("##") else {
                continue;
            };
            match Selector::parse(sel) {
                Ok(s) => selectors.push(s),
                Err(_) => unsupported += 1,
            }
        }
        AdSelectors { selectors, unsupported }
    }

    pub fn len(&self) -> usize {
        self.selectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selectors.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonetizationSignals {
    pub adsense_ids: BTreeSet<String>,
    pub affiliate_links: Vec<String>,
    pub ad_element_count: usize,
}

impl MonetizationSignals {
    pub fn merge(&mut self, other: MonetizationSignals) {
        self.adsense_ids.extend(other.adsense_ids);
        self.affiliate_links.extend(other.affiliate_links);
        self.ad_element_count += other.ad_element_count;
    }

    /// Keys that can link sites to a common owner.
    pub fn shared_keys(&self) -> BTreeSet<String> {
        let mut keys: BTreeSet<String> = self.adsense_ids.iter().map(|id| format!("adsense:{id}")).collect();
        keys.extend(
            self.affiliate_links
                .iter()
                .filter_map(|l| affiliate_tag(l))
                .map(|t| format!("affiliate:{t}")),
        );
        keys
    }
}

/// Affiliate tag carried in a link's query string, if any.
pub fn affiliate_tag(href: &str) -> Option<String> {
    AFFILIATE_TAG.captures(href).map(|c| c[1].to_string())
}

pub fn extract_signals(html: &[u8], ads: &AdSelectors, affiliate_patterns: &[Regex]) -> MonetizationSignals {
    let source = String::from_utf8_lossy(html);
    let adsense_ids = ADSENSE.find_iter(&source).map(|m| m.as_str().to_string()).collect();
    let doc = Html::parse_document(&source);
    let affiliate_links = doc
        .select(&ANCHOR)
        .filter_map(|a| a.value().attr("href"))
        .filter(|href| affiliate_patterns.iter().any(|p| p.is_match(href)))
        .map(str::to_string)
        .collect();
    let mut ad_nodes = HashSet::new();
    for sel in &ads.selectors {
        ad_nodes.extend(doc.select(sel).map(|el| el.id()));
    }
    MonetizationSignals {
        adsense_ids,
        affiliate_links,
        ad_element_count: ad_nodes.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteCluster {
    pub sites: Vec<String>,
    pub shared_keys: Vec<String>,
}

/// Connected components of sites linked by a common AdSense ID or
/// affiliate tag; only groups of two or more.
pub fn cluster_shared_ids(signals: &BTreeMap<String, MonetizationSignals>) -> Vec<SiteCluster> {
    let sites: Vec<&String> = signals.keys().collect();
    let mut by_key: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, s) in sites.iter().enumerate() {
        for k in signals[*s].shared_keys() {
            by_key.entry(k).or_default().push(i);
        }
    }
    let mut uf = UnionFind::<usize>::new(sites.len());
    for members in by_key.values() {
        for w in members.windows(2) {
            uf.union(w[0], w[1]);
        }
    }
    let mut groups: BTreeMap<usize, SiteCluster> = BTreeMap::new();
    for (key, members) in &by_key {
        if members.len() < 2 {
            continue;
        }
        let g = groups.entry(uf.find(members[0])).or_insert_with(|| SiteCluster {
            sites: Vec::new(),
            shared_keys: Vec::new(),
        });
        g.shared_keys.push(key.clone());
    }
    for (i, s) in sites.iter().enumerate() {
        if let Some(g) = groups.get_mut(&uf.find(i)) {
            g.sites.push((*s).clone());
        }
    }
    let mut out: Vec<SiteCluster> = groups.into_values().collect();
    out.sort_by(|a, b| a.sites.cmp(&b.sites));
    out
}
