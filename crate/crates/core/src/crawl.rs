//! Polite site crawler.
//!
//! Requests to one host are serialized through a shared [`HostScheduler`]
//! that hands out start times at least `per_host_delay_s` apart. The clock
//! and transport are injected so the delay, robots handling and stop rules
//! can be exercised against a simulated server on virtual time.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use chrono::{DateTime, TimeDelta, Utc};
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::corpus::{normalize_fqdn, PageRecord, PageSource};

pub const DEFAULT_USER_AGENT: &str = "degentweb-crawler/0.1 (+https://example.org/degentweb-crawler)";

#[derive(Debug, Error)]
pub enum CrawlError {
    #[error("invalid crawl policy: {0}")]
    InvalidPolicy(String),
    #[error("candidate {url} is not on site {site}")]
    OffSite { url: String, site: String },
    #[error("transport setup failed: {0}")]
    Transport(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrawlPolicy {
    pub per_host_delay_s: f64,
    pub max_site_visits: usize,
    pub max_consecutive_errors: usize,
    pub user_agent: String,
    pub obey_robots: bool,
    pub target_compliant_pages: usize,
    /// Page URLs sampled per site before crawling.
    pub sample_cap: usize,
    pub robots_attempts: usize,
    pub max_redirects: usize,
}

impl Default for CrawlPolicy {
    fn default() -> Self {
        CrawlPolicy {
            per_host_delay_s: 60.0,
            max_site_visits: 340,
            max_consecutive_errors: 3,
            user_agent: DEFAULT_USER_AGENT.into(),
            obey_robots: true,
            target_compliant_pages: 15,
            sample_cap: 20,
            robots_attempts: 2,
            max_redirects: 5,
        }
    }
}

impl CrawlPolicy {
    pub fn validate(&self) -> Result<(), CrawlError> {
        let bad = |m: &str| Err(CrawlError::InvalidPolicy(m.into()));
        if !(self.per_host_delay_s.is_finite() && self.per_host_delay_s > 0.0) {
            return bad("per_host_delay_s must be positive");
        }
        if self.max_site_visits == 0
            || self.max_consecutive_errors == 0
            || self.target_compliant_pages == 0
            || self.sample_cap == 0
            || self.robots_attempts == 0
        {
            return bad("caps and counts must be positive");
        }
        if self.user_agent.trim().is_empty() {
            return bad("user_agent must be non-empty");
        }
        Ok(())
    }

    fn delay(&self) -> TimeDelta {
        TimeDelta::milliseconds((self.per_host_delay_s * 1000.0).round() as i64)
    }

    /// Lowercased product token, the part of the user agent robots.txt groups match.
    pub fn robots_token(&self) -> String {
        self.user_agent
            .split(['/', ' '])
            .next()
            .unwrap_or_default()
            .to_ascii_lowercase()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    TargetMet,
    VisitCap,
    ErrorStop,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrawlStats {
    pub site: String,
    pub requests_made: usize,
    pub robots_denied: usize,
    /// Transport errors (connection, DNS, timeout).
    pub errors: usize,
    /// Final responses outside 2xx.
    pub http_errors: usize,
    pub pages_fetched: usize,
    pub compliant_pages: usize,
    pub cross_host_redirects: Vec<String>,
    pub robots_warning: Option<String>,
    pub stopped_reason: StopReason,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl HttpResponse {
    pub fn new(status: u16, body: impl Into<Vec<u8>>) -> Self {
        HttpResponse {
            status,
            headers: Vec::new(),
            body: body.into(),
        }
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    fn is_redirect(&self) -> bool {
        matches!(self.status, 301 | 302 | 303 | 307 | 308)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TransportError {
    #[error("connection failed: {0}")]
    Connect(String),
    #[error("DNS failure: {0}")]
    Dns(String),
    #[error("timed out: {0}")]
    Timeout(String),
    #[error("{0}")]
    Other(String),
}

/// One HTTP GET without following redirects.
pub trait Transport: Send + Sync {
    fn get(&self, url: &Url, user_agent: &str) -> Result<HttpResponse, TransportError>;
}

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
    fn sleep_until(&self, t: DateTime<Utc>);
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }

    fn sleep_until(&self, t: DateTime<Utc>) {
        if let Ok(d) = (t - Utc::now()).to_std() {
            std::thread::sleep(d);
        }
    }
}

/// Time that only moves when someone sleeps.
pub struct VirtualClock {
    now: Mutex<DateTime<Utc>>,
}

impl VirtualClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        VirtualClock { now: Mutex::new(start) }
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.now.lock().unwrap()
    }

    fn sleep_until(&self, t: DateTime<Utc>) {
        let mut now = self.now.lock().unwrap();
        if t > *now {
            *now = t;
        }
    }
}

/// Per-host request slots. The only shared mutable state between crawls.
#[derive(Default)]
pub struct HostScheduler {
    last: Mutex<HashMap<String, DateTime<Utc>>>,
}

impl HostScheduler {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reserve the earliest start time for `host` that is at least `delay`
    /// after its previous reservation and not before `now`.
    pub fn reserve(&self, host: &str, now: DateTime<Utc>, delay: TimeDelta) -> DateTime<Utc> {
        let mut last = self.last.lock().unwrap();
        let slot = match last.get(host) {
            Some(prev) => (*prev + delay).max(now),
            None => now,
        };
        last.insert(host.to_string(), slot);
        slot
    }
}

#[derive(Debug, Clone)]
struct RobotsRule {
    allow: bool,
    len: usize,
    pattern: Regex,
}

/// Rules of the robots.txt group that applies to one user agent.
#[derive(Debug, Clone, Default)]
pub struct RobotsRules {
    rules: Vec<RobotsRule>,
}

impl RobotsRules {
    pub fn allow_all() -> Self {
        RobotsRules::default()
    }

    /// Parse robots.txt for the product token `agent` (lowercase). The most
    /// specific matching group wins; `*` is the fallback.
    pub fn parse(text: &str, agent: &str) -> Self {
        let mut groups: Vec<(Vec<String>, Vec<(bool, String)>)> = Vec::new();
        let mut in_agents = false;
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or_default().trim();
            let Some((key, value)) = line.split_once(':') else {
                continue;
            };
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim();
            match key.as_str() {
                "user-agent" => {
                    if !in_agents {
                        groups.push((Vec::new(), Vec::new()));
                        in_agents = true;
                    }
                    groups.last_mut().unwrap().0.push(value.to_ascii_lowercase());
                }
                "allow" | "disallow" => {
                    in_agents = false;
                    if let Some(g) = groups.last_mut() {
                        g.1.push((key == "allow", value.to_string()));
                    }
                }
                _ => in_agents = false,
            }
        }
        let mut best: Option<usize> = None;
        let mut chosen: Vec<(bool, String)> = Vec::new();
        for (agents, rules) in &groups {
            for a in agents {
                let specificity = if a == "*" {
                    Some(0)
                } else if !a.is_empty() && agent.contains(a.as_str()) {
                    Some(a.len())
                } else {
                    None
                };
                if let Some(s) = specificity {
                    match best {
                        Some(b) if s < b => {}
                        Some(b) if s == b => chosen.extend(rules.iter().cloned()),
                        _ => {
                            best = Some(s);
                            chosen = rules.clone();
                        }
                    }
                }
            }
        }
        let rules = chosen
            .into_iter()
            .filter(|(_, p)| !p.is_empty())
            .map(|(allow, p)| RobotsRule {
                allow,
                len: p.len(),
                pattern: compile_pattern(&p),
            })
            .collect();
        RobotsRules { rules }
    }

    /// Longest matching rule decides; Allow wins a tie; no match allows.
    pub fn allowed(&self, path: &str) -> bool {
        let mut verdict: Option<(usize, bool)> = None;
        for r in &self.rules {
            if r.pattern.is_match(path) {
                verdict = match verdict {
                    Some((len, allow)) if len > r.len || (len == r.len && allow) => Some((len, allow)),
                    _ => Some((r.len, r.allow)),
                };
            }
        }
        verdict.is_none_or(|(_, allow)| allow)
    }
}

fn compile_pattern(p: &str) -> Regex {
    let (body, anchored) = match p.strip_suffix('$') {
        Some(b) => (b, true),
        None => (p, false),
    };
    let mut re = String::from("^");
    for (i, part) in body.split('*').enumerate() {
        if i > 0 {
            re.push_str(".*");
        }
        re.push_str(&regex::escape(part));
    }
    if anchored {
        re.push('$');
    }
    Regex::new(&re).expect("escaped pattern is valid")
}

fn path_of(url: &Url) -> String {
    match url.query() {
        Some(q) => format!("{}?{}", url.path(), q),
        None => url.path().to_string(),
    }
}

/// Decides whether a fetched page counts toward the compliance target.
pub type PageEvaluator<'a> = dyn Fn(&PageRecord) -> bool + Sync + 'a;

pub struct Crawler<'a> {
    pub policy: &'a CrawlPolicy,
    pub transport: &'a dyn Transport,
    pub clock: &'a dyn Clock,
    pub scheduler: &'a HostScheduler,
}

struct SiteRun<'a, 'b> {
    crawler: &'b Crawler<'a>,
    host: String,
    stats: CrawlStats,
    consecutive_errors: usize,
}

enum Outcome {
    Response(Url, HttpResponse),
    TransportError,
    Capped,
    Denied,
    CrossHost,
}

impl SiteRun<'_, '_> {
    fn request(&mut self, url: &Url) -> Option<Result<HttpResponse, TransportError>> {
        let policy = self.crawler.policy;
        if self.stats.requests_made >= policy.max_site_visits {
            return None;
        }
        let clock = self.crawler.clock;
        let slot = self.crawler.scheduler.reserve(&self.host, clock.now(), policy.delay());
        clock.sleep_until(slot);
        self.stats.requests_made += 1;
        let result = self.crawler.transport.get(url, &policy.user_agent);
        match &result {
            Ok(_) => self.consecutive_errors = 0,
            Err(e) => {
                log::debug!("{url}: {e}");
                self.stats.errors += 1;
                self.consecutive_errors += 1;
            }
        }
        Some(result)
    }

    fn error_stop(&self) -> bool {
        self.consecutive_errors >= self.crawler.policy.max_consecutive_errors
    }

    fn load_robots(&mut self, base: &Url) -> RobotsRules {
        let robots_url = base.join("/robots.txt").expect("static path joins");
        let agent = self.crawler.policy.robots_token();
        for _ in 0..self.crawler.policy.robots_attempts {
            match self.request(&robots_url) {
                None => break,
                Some(Ok(r)) if (200..300).contains(&r.status) => {
                    return RobotsRules::parse(&String::from_utf8_lossy(&r.body), &agent);
                }
                // A missing robots.txt means no restrictions.
                Some(Ok(r)) if (400..500).contains(&r.status) => return RobotsRules::allow_all(),
                Some(_) if self.error_stop() => break,
                Some(_) => {}
            }
        }
        let msg = format!("{robots_url} unavailable; treating as allow-all");
        log::warn!("{msg}");
        self.stats.robots_warning = Some(msg);
        RobotsRules::allow_all()
    }

    fn fetch(&mut self, start: Url, robots: &RobotsRules) -> Outcome {
        let mut url = start;
        let mut hops = 0;
        loop {
            let resp = match self.request(&url) {
                None => return Outcome::Capped,
                Some(Err(_)) => return Outcome::TransportError,
                Some(Ok(r)) => r,
            };
            if !resp.is_redirect() || hops >= self.crawler.policy.max_redirects {
                return Outcome::Response(url, resp);
            }
            let Some(next) = resp.header("location").and_then(|l| url.join(l).ok()) else {
                return Outcome::Response(url, resp);
            };
            if next.host_str().map(normalize_fqdn).as_deref() != Some(self.host.as_str()) {
                self.stats.cross_host_redirects.push(next.to_string());
                return Outcome::CrossHost;
            }
            if self.crawler.policy.obey_robots && !robots.allowed(&path_of(&next)) {
                self.stats.robots_denied += 1;
                return Outcome::Denied;
            }
            url = next;
            hops += 1;
        }
    }
}

impl Crawler<'_> {
    /// Crawl candidates in order until the compliance target, the visit
    /// cap, or the consecutive-error limit stops the site.
    pub fn crawl_site(
        &self,
        site: &str,
        candidates: &[String],
        evaluate: &PageEvaluator<'_>,
    ) -> Result<(Vec<PageRecord>, CrawlStats), CrawlError> {
        self.policy.validate()?;
        let host = normalize_fqdn(site);
        let mut urls = Vec::with_capacity(candidates.len());
        for c in candidates {
            let u = Url::parse(c).map_err(|_| CrawlError::OffSite {
                url: c.clone(),
                site: host.clone(),
            })?;
            if u.host_str().map(normalize_fqdn).as_deref() != Some(host.as_str()) {
                return Err(CrawlError::OffSite {
                    url: c.clone(),
                    site: host.clone(),
                });
            }
            urls.push(u);
        }
        let mut run = SiteRun {
            crawler: self,
            host: host.clone(),
            stats: CrawlStats {
                site: host.clone(),
                requests_made: 0,
                robots_denied: 0,
                errors: 0,
                http_errors: 0,
                pages_fetched: 0,
                compliant_pages: 0,
                cross_host_redirects: Vec::new(),
                robots_warning: None,
                stopped_reason: StopReason::Exhausted,
            },
            consecutive_errors: 0,
        };
        let mut pages = Vec::new();
        let robots = match (self.policy.obey_robots, urls.first()) {
            (true, Some(first)) => run.load_robots(first),
            _ => RobotsRules::allow_all(),
        };
        let mut reason = if run.error_stop() {
            Some(StopReason::ErrorStop)
        } else {
            None
        };

        for url in urls {
            if reason.is_some() {
                break;
            }
            if self.policy.obey_robots && !robots.allowed(&path_of(&url)) {
                run.stats.robots_denied += 1;
                continue;
            }
            match run.fetch(url, &robots) {
                Outcome::Capped => reason = Some(StopReason::VisitCap),
                Outcome::TransportError if run.error_stop() => reason = Some(StopReason::ErrorStop),
                Outcome::TransportError | Outcome::Denied | Outcome::CrossHost => {}
                Outcome::Response(final_url, resp) => {
                    if !(200..300).contains(&resp.status) {
                        run.stats.http_errors += 1;
                    } else {
                        let mut rec = PageRecord::new(final_url.as_str(), self.clock.now(), PageSource::LiveCrawl)
                            .map_err(|e| CrawlError::Transport(e.to_string()))?;
                        rec.raw_html = Some(resp.body);
                        run.stats.pages_fetched += 1;
                        if evaluate(&rec) {
                            run.stats.compliant_pages += 1;
                        }
                        pages.push(rec);
                    }
                }
            }
            if reason.is_none() {
                if run.stats.compliant_pages >= self.policy.target_compliant_pages {
                    reason = Some(StopReason::TargetMet);
                } else if run.stats.requests_made >= self.policy.max_site_visits {
                    reason = Some(StopReason::VisitCap);
                }
            }
        }
        run.stats.stopped_reason = reason.unwrap_or(StopReason::Exhausted);
        Ok((pages, run.stats))
    }

    /// Crawl several sites concurrently; each host stays serialized by the
    /// shared scheduler.
    pub fn crawl_sites(
        &self,
        sites: &[(String, Vec<String>)],
        evaluate: &PageEvaluator<'_>,
    ) -> Vec<Result<(Vec<PageRecord>, CrawlStats), CrawlError>> {
        sites
            .par_iter()
            .map(|(site, urls)| self.crawl_site(site, urls, evaluate))
            .collect()
    }
}

/// Blocking HTTP transport that never follows redirects itself.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Result<Self, CrawlError> {
        let client = reqwest::blocking::Client::builder()
            .redirect(reqwest::redirect::Policy::none())
            .timeout(timeout)
            .build()
            .map_err(|e| CrawlError::Transport(e.to_string()))?;
        Ok(HttpTransport { client })
    }
}

impl Transport for HttpTransport {
    fn get(&self, url: &Url, user_agent: &str) -> Result<HttpResponse, TransportError> {
        let resp = self
            .client
            .get(url.clone())
            .header(reqwest::header::USER_AGENT, user_agent)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    TransportError::Timeout(e.to_string())
                } else if e.is_connect() {
                    TransportError::Connect(e.to_string())
                } else {
                    TransportError::Other(e.to_string())
                }
            })?;
        let status = resp.status().as_u16();
        let headers = resp
            .headers()
            .iter()
            .map(|(k, v)| (k.to_string(), String::from_utf8_lossy(v.as_bytes()).into_owned()))
            .collect();
        let body = resp
            .bytes()
            .map_err(|e| TransportError::Other(e.to_string()))?
            .to_vec();
        Ok(HttpResponse { status, headers, body })
    }
}

/// Serves `root/<host>/<path>` from disk, the layout written by the site
/// renderer. Directory paths map to `index.html`; an unknown host behaves
/// like a DNS failure.
pub struct DirectoryTransport {
    root: PathBuf,
}

impl DirectoryTransport {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DirectoryTransport { root: root.into() }
    }
}

/// File backing a URL path under a site directory, refusing `..` escapes.
pub fn file_for_path(site_dir: &Path, path: &str) -> Option<PathBuf> {
    let mut file = site_dir.to_path_buf();
    for seg in path.split('/').filter(|s| !s.is_empty()) {
        if seg == ".." || seg == "." {
            return None;
        }
        file.push(seg);
    }
    if path.ends_with('/') || file.extension().is_none() {
        file.push("index.html");
    }
    Some(file)
}

impl Transport for DirectoryTransport {
    fn get(&self, url: &Url, _user_agent: &str) -> Result<HttpResponse, TransportError> {
        let host = url.host_str().map(normalize_fqdn).unwrap_or_default();
        let site_dir = self.root.join(&host);
        if host.is_empty() || !site_dir.is_dir() {
            return Err(TransportError::Dns(host));
        }
        match file_for_path(&site_dir, url.path()).and_then(|f| fs::read(f).ok()) {
            Some(body) => Ok(HttpResponse::new(200, body)),
            None => Ok(HttpResponse::new(404, "not found")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn robots_longest_match() {
        let txt = "User-agent: *\nDisallow: /private\nAllow: /private/ok\nDisallow: /*.pdf$\n";
        let r = RobotsRules::parse(txt, "degentweb-crawler");
        assert!(r.allowed("/public"));
        assert!(!r.allowed("/private/x"));
        assert!(r.allowed("/private/ok/page"));
        assert!(!r.allowed("/doc/a.pdf"));
        assert!(r.allowed("/doc/a.pdf?x=1"));
    }

    #[test]
    fn robots_allow_wins_tie() {
        let r = RobotsRules::parse("User-agent: *\nDisallow: /a\nAllow: /a\n", "x");
        assert!(r.allowed("/a"));
    }

    #[test]
    fn robots_specific_group() {
        let txt = "User-agent: *\nDisallow: /\n\nUser-agent: degentweb-crawler\nDisallow: /tmp\n";
        let r = RobotsRules::parse(txt, "degentweb-crawler");
        assert!(r.allowed("/page"));
        assert!(!r.allowed("/tmp/x"));
        let other = RobotsRules::parse(txt, "otherbot");
        assert!(!other.allowed("/page"));
    }

    #[test]
    fn robots_empty_disallow_allows() {
        let r = RobotsRules::parse("User-agent: *\nDisallow:\n", "x");
        assert!(r.allowed("/anything"));
    }

    #[test]
    fn scheduler_spacing() {
        let s = HostScheduler::new();
        let t0 = Utc::now();
        let d = TimeDelta::seconds(60);
        assert_eq!(s.reserve("a", t0, d), t0);
        assert_eq!(s.reserve("a", t0, d), t0 + d);
        assert_eq!(s.reserve("b", t0, d), t0);
        assert_eq!(s.reserve("a", t0 + TimeDelta::seconds(500), d), t0 + TimeDelta::seconds(500));
    }

    #[test]
    fn policy_validation() {
        assert!(CrawlPolicy::default().validate().is_ok());
        let p = CrawlPolicy {
            user_agent: " ".into(),
            ..Default::default()
        };
        assert!(p.validate().is_err());
        assert_eq!(CrawlPolicy::default().robots_token(), "degentweb-crawler");
    }

    #[test]
    fn directory_paths() {
        let root = Path::new("/srv/site");
        assert_eq!(file_for_path(root, "/"), Some(root.join("index.html")));
        assert_eq!(file_for_path(root, "/a/b"), Some(root.join("a/b/index.html")));
        assert_eq!(file_for_path(root, "/robots.txt"), Some(root.join("robots.txt")));
        assert_eq!(file_for_path(root, "/../etc/passwd"), None);
    }
}
