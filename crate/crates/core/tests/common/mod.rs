//! Independent oracles and fixtures shared by the integration tests and the
//! acceptance harness. Nothing here calls the code it is checking.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::PathBuf;
use std::sync::Mutex;

use chrono::{DateTime, NaiveDate, Utc};
use degentweb::analyze::{DatedScore, SiteTimeline};
use degentweb::crawl::{Clock, HttpResponse, Transport, TransportError, VirtualClock};
use degentweb::extract::{CdcParams, RABIN_DEGREE, RABIN_POLYNOMIAL};
use degentweb::quality::{GopherRule, GopherThresholds, TerminalSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Deserialize;
use url::Url;

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

// ---------------------------------------------------------------------------
// Filter vectors

#[derive(Debug, Deserialize)]
pub struct FilterVectors {
    pub thresholds: GopherThresholds,
    pub cases: Vec<FilterCase>,
}

#[derive(Debug, Deserialize)]
pub struct Recipe {
    pub kind: String,
    pub lead: String,
    pub n_words: usize,
    pub word_len: usize,
    pub per_line: usize,
}

#[derive(Debug, Deserialize, PartialEq)]
pub struct Expect {
    pub english: bool,
    pub token_count: u64,
    pub gopher_pass: bool,
    pub failed_rules: Vec<GopherRule>,
    pub compliant: bool,
    pub nopunc_removed_fraction: f64,
}

#[derive(Debug, Deserialize)]
pub struct FilterCase {
    pub name: String,
    pub rule: String,
    pub terminals: TerminalSet,
    pub dup_ratio: f64,
    pub text: Option<String>,
    pub recipe: Option<Recipe>,
    pub expect: Expect,
}

impl FilterCase {
    pub fn text(&self) -> String {
        match (&self.text, &self.recipe) {
            (Some(t), _) => t.clone(),
            (None, Some(r)) => render_recipe(r),
            (None, None) => panic!("case {} has neither text nor recipe", self.name),
        }
    }
}

pub fn load_filter_vectors() -> FilterVectors {
    let raw = std::fs::read_to_string(data_path("filter_vectors.json")).expect("filter_vectors.json");
    serde_json::from_str(&raw).expect("filter vectors parse")
}

const FIXTURE_STOPWORDS: &str = "the of and to a in is it you that he was for on are with as i his they be at one have this \
     from or had by not but what some we can out other were all there when up use your how an \
     which do their if";
const FIXTURE_REQUIRED: [&str; 8] = ["the", "be", "to", "of", "and", "that", "have", "with"];

/// Fixed-length lowercase words counting up in base 26 from "aaa…", never a
/// stopword or required word. Mirrors the generator script.
pub struct FillerWords {
    len: usize,
    i: u64,
    skip: HashSet<&'static str>,
}

impl FillerWords {
    pub fn new(len: usize) -> Self {
        let mut skip: HashSet<&'static str> = FIXTURE_STOPWORDS.split_whitespace().collect();
        skip.extend(FIXTURE_REQUIRED);
        FillerWords { len, i: 0, skip }
    }
}

impl Iterator for FillerWords {
    type Item = String;

    fn next(&mut self) -> Option<String> {
        loop {
            let mut n = self.i;
            self.i += 1;
            let mut w = vec![b'a'; self.len];
            for slot in w.iter_mut().rev() {
                *slot = b'a' + (n % 26) as u8;
                n /= 26;
            }
            let w = String::from_utf8(w).expect("ascii");
            if !self.skip.contains(w.as_str()) {
                return Some(w);
            }
        }
    }
}

pub fn render_recipe(r: &Recipe) -> String {
    assert_eq!(r.kind, "filler");
    let lead: Vec<String> = r.lead.split_whitespace().map(str::to_string).collect();
    let fill = r.n_words - lead.len();
    let words: Vec<String> = lead.into_iter().chain(FillerWords::new(r.word_len).take(fill)).collect();
    words
        .chunks(r.per_line)
        .map(|line| format!("{}.", line.join(" ")))
        .collect::<Vec<_>>()
        .join("\n")
}

// ---------------------------------------------------------------------------
// Chunking

/// Remainder of the byte string read as a GF(2) polynomial, one bit at a time.
pub fn poly_mod(bytes: &[u8]) -> u64 {
    let mut r: u128 = 0;
    for &b in bytes {
        for bit in (0..8).rev() {
            r = (r << 1) | u128::from((b >> bit) & 1);
            if r & (1 << RABIN_DEGREE) != 0 {
                r ^= u128::from(RABIN_POLYNOMIAL);
            }
        }
    }
    r as u64
}

/// Chunk boundaries found by hashing every candidate window from scratch.
pub fn reference_chunks(data: &[u8], p: &CdcParams) -> Vec<std::ops::Range<usize>> {
    let mask = p.avg_chunk_bytes as u64 - 1;
    let mut out = Vec::new();
    let mut start = 0;
    while start < data.len() {
        let hard_end = (start + p.max_chunk_bytes).min(data.len());
        let mut end = hard_end;
        if data.len() - start > p.min_chunk_bytes {
            for last in (start + p.min_chunk_bytes - 1)..hard_end {
                let window = &data[last + 1 - p.window_bytes..=last];
                if poly_mod(window) & mask == mask {
                    end = last + 1;
                    break;
                }
            }
        } else {
            end = data.len();
        }
        out.push(start..end);
        start = end;
    }
    out
}

/// Per-text share of bytes in chunks whose exact bytes also occur as a chunk
/// of some other text.
pub fn reference_dup_ratios(texts: &[&str], p: &CdcParams) -> Vec<f64> {
    let chunked: Vec<Vec<&[u8]>> = texts
        .iter()
        .map(|t| {
            let b = t.as_bytes();
            reference_chunks(b, p).into_iter().map(|r| &b[r]).collect()
        })
        .collect();
    (0..texts.len())
        .map(|i| {
            let others: HashSet<&[u8]> = chunked
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .flat_map(|(_, cs)| cs.iter().copied())
                .collect();
            let total = texts[i].len();
            if total == 0 {
                return 0.0;
            }
            let dup: usize = chunked[i].iter().filter(|c| others.contains(*c)).map(|c| c.len()).sum();
            dup as f64 / total as f64
        })
        .collect()
}

const VOCAB: [&str; 24] = [
    "river", "stone", "garden", "quiet", "harbor", "lantern", "meadow", "copper", "window", "signal",
    "orchard", "canvas", "thunder", "pebble", "saddle", "violet", "ember", "glacier", "hollow", "marble",
    "pilgrim", "tundra", "willow", "zephyr",
];

fn sentence(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(6..16);
    let words: Vec<&str> = (0..n).map(|_| VOCAB[rng.gen_range(0..VOCAB.len())]).collect();
    format!("{}.", words.join(" "))
}

fn paragraph(rng: &mut ChaCha8Rng, sentences: usize) -> String {
    (0..sentences).map(|_| sentence(rng)).collect::<Vec<_>>().join(" ")
}

/// Sites of pages that mix site-wide shared blocks (nav, footer) with
/// page-specific prose; roughly 0.1 to 6 KB per page.
pub fn random_sites(seed: u64, n_sites: usize, pages_per_site: usize) -> Vec<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_sites)
        .map(|_| {
            let shared: Vec<String> = (0..3)
                .map(|_| {
                    let k = rng.gen_range(1..8);
                    paragraph(&mut rng, k)
                })
                .collect();
            (0..pages_per_site)
                .map(|_| {
                    let mut parts = Vec::new();
                    if rng.gen_bool(0.7) {
                        parts.push(shared[0].clone());
                    }
                    let k = rng.gen_range(0..30);
                    parts.push(paragraph(&mut rng, k));
                    for s in &shared[1..] {
                        if rng.gen_bool(0.5) {
                            parts.push(s.clone());
                        }
                    }
                    parts.join("\n")
                })
                .collect()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Percentiles and the linear model

/// Sort-and-interpolate percentile at the fractional index `p/100 * (n-1)`.
pub fn oracle_percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let h = (v.len() - 1) as f64 * p / 100.0;
    let below = h.floor();
    let i = below as usize;
    if i + 1 >= v.len() {
        return v[i];
    }
    v[i] * (1.0 - (h - below)) + v[i + 1] * (h - below)
}

pub fn oracle_deciles(values: &[f64]) -> [f64; 9] {
    std::array::from_fn(|k| oracle_percentile(values, (k as f64 + 1.0) * 10.0))
}

/// Signed distance of `x` to the hyperplane after z-scoring with `means`/`sds`.
pub fn oracle_distance(weights: &[f64], bias: f64, means: &[f64], sds: &[f64], x: &[f64]) -> f64 {
    let mut acc = bias;
    let mut norm2 = 0.0;
    for j in 0..weights.len() {
        acc += weights[j] * ((x[j] - means[j]) / sds[j]);
        norm2 += weights[j] * weights[j];
    }
    if norm2 > 0.0 {
        acc / norm2.sqrt()
    } else {
        acc
    }
}

// ---------------------------------------------------------------------------
// Hash selection fixture

#[derive(Debug, Deserialize)]
pub struct DigestRow {
    pub name: String,
    pub blake3: String,
    pub sha256: String,
}

#[derive(Debug, Deserialize)]
pub struct HashFixtures {
    pub name_count: usize,
    pub url_count: usize,
    pub first_digests: Vec<DigestRow>,
    pub names: BTreeMap<String, BTreeMap<String, Vec<String>>>,
    pub urls: BTreeMap<String, Vec<String>>,
}

pub fn load_hash_fixtures() -> HashFixtures {
    let raw = std::fs::read_to_string(data_path("hash_fixtures.json")).expect("hash_fixtures.json");
    serde_json::from_str(&raw).expect("hash fixtures parse")
}

pub fn fixture_names(count: usize) -> Vec<String> {
    (0..count as u64)
        .map(|i| format!("cc-index-{:016x}.gz", splitmix64(i)))
        .collect()
}

pub fn fixture_urls(count: usize) -> Vec<String> {
    (0..count as u64)
        .map(|i| format!("https://site{}.example/p/{:x}", i % 7, splitmix64(1_000_000 + i)))
        .collect()
}

// ---------------------------------------------------------------------------
// Planted transition corpus

pub const PRE_MEAN: f64 = 0.95;
pub const POST_MEAN: f64 = 0.75;
pub const LEVEL_SD: f64 = 0.02;

fn random_day(rng: &mut ChaCha8Rng, from: NaiveDate, to: NaiveDate) -> NaiveDate {
    let span = (to - from).num_days();
    from + chrono::Days::new(rng.gen_range(0..span) as u64)
}

/// A site whose scores drop from the human level to the LLM level at the
/// cutoff, with `per_side` pages dated on each side.
pub fn transitioning_site(rng: &mut ChaCha8Rng, name: String, cutoff: NaiveDate, per_side: usize) -> SiteTimeline {
    site_with_levels(rng, name, cutoff, per_side, PRE_MEAN, POST_MEAN)
}

pub fn site_with_levels(
    rng: &mut ChaCha8Rng,
    name: String,
    cutoff: NaiveDate,
    per_side: usize,
    pre: f64,
    post: f64,
) -> SiteTimeline {
    let early = NaiveDate::from_ymd_opt(2018, 1, 1).unwrap();
    let late = NaiveDate::from_ymd_opt(2025, 1, 1).unwrap();
    let pre_d = Normal::new(pre, LEVEL_SD).unwrap();
    let post_d = Normal::new(post, LEVEL_SD).unwrap();
    let mut pages = Vec::with_capacity(2 * per_side);
    for _ in 0..per_side {
        pages.push(DatedScore { dated_at: random_day(rng, early, cutoff), score: pre_d.sample(rng) });
        pages.push(DatedScore { dated_at: random_day(rng, cutoff, late), score: post_d.sample(rng) });
    }
    SiteTimeline { site: name, pages }
}

/// `n_sites` sites of which the first `frac` transition; the rest hold a
/// steady human or LLM level. Returns the sites and which were planted.
pub fn planted_transition_corpus(
    seed: u64,
    n_sites: usize,
    frac: f64,
    per_side: usize,
    cutoff: NaiveDate,
) -> (Vec<SiteTimeline>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_planted = (n_sites as f64 * frac).round() as usize;
    let mut sites = Vec::with_capacity(n_sites);
    let mut planted = Vec::with_capacity(n_sites);
    for i in 0..n_sites {
        let name = format!("site{i:05}.example");
        let site = if i < n_planted {
            transitioning_site(&mut rng, name, cutoff, per_side)
        } else if i % 2 == 0 {
            site_with_levels(&mut rng, name, cutoff, per_side, PRE_MEAN, PRE_MEAN)
        } else {
            site_with_levels(&mut rng, name, cutoff, per_side, POST_MEAN, POST_MEAN)
        };
        sites.push(site);
        planted.push(i < n_planted);
    }
    (sites, planted)
}

// ---------------------------------------------------------------------------
// Simulated web server for the crawler

#[derive(Clone)]
pub enum Route {
    Page(u16, &'static str),
    Redirect(&'static str),
    Fail,
}

/// In-memory server that logs every request with the virtual time it
/// arrived at.
pub struct SimServer<'c> {
    clock: &'c VirtualClock,
    routes: HashMap<String, Route>,
    fallback: Route,
    log: Mutex<Vec<(DateTime<Utc>, String, String)>>,
}

impl<'c> SimServer<'c> {
    pub fn new(clock: &'c VirtualClock, fallback: Route) -> Self {
        SimServer {
            clock,
            routes: HashMap::new(),
            fallback,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn route(mut self, path: &str, r: Route) -> Self {
        self.routes.insert(path.to_string(), r);
        self
    }

    pub fn log(&self) -> Vec<(DateTime<Utc>, String, String)> {
        self.log.lock().unwrap().clone()
    }
}

impl Transport for SimServer<'_> {
    fn get(&self, url: &Url, user_agent: &str) -> Result<HttpResponse, TransportError> {
        self.log
            .lock()
            .unwrap()
            .push((self.clock.now(), url.to_string(), user_agent.to_string()));
        let route = self.routes.get(url.path()).unwrap_or(&self.fallback).clone();
        match route {
            Route::Page(status, body) => Ok(HttpResponse::new(status, body)),
            Route::Redirect(to) => {
                let mut r = HttpResponse::new(301, "");
                r.headers.push(("Location".into(), to.into()));
                Ok(r)
            }
            Route::Fail => Err(TransportError::Connect("refused".into())),
        }
    }
}
