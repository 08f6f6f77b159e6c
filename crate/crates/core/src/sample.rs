//! Reproducible sampling.
//!
//! Selection by hash sorts names by their digest and keeps the first `n`,
//! so the result is independent of input order and stable when the
//! population grows. Archive index records come from a CDX endpoint and
//! bodies from gzip-member byte ranges of WARC files.

use std::collections::BTreeSet;
use std::io::Read;
use std::thread;
use std::time::Duration;

use flate2::read::GzDecoder;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("invalid sampling parameters: {0}")]
    InvalidParams(String),
    #[error("malformed CDX record: {0}")]
    MalformedCdx(String),
    #[error("malformed WARC record: {0}")]
    MalformedWarc(String),
    #[error("malformed sitemap: {0}")]
    MalformedSitemap(String),
    #[error("request to {url} failed after {attempts} attempts: {message}")]
    Http {
        url: String,
        attempts: u32,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HashAlgorithm {
    #[default]
    Blake3,
    Sha256,
}

impl HashAlgorithm {
    pub fn digest(self, name: &str) -> [u8; 32] {
        match self {
            HashAlgorithm::Blake3 => *blake3::hash(name.as_bytes()).as_bytes(),
            HashAlgorithm::Sha256 => Sha256::digest(name.as_bytes()).into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashSelectSpec {
    #[serde(default)]
    pub algorithm: HashAlgorithm,
    pub n: usize,
}

impl HashSelectSpec {
    pub fn new(algorithm: HashAlgorithm, n: usize) -> Self {
        HashSelectSpec { algorithm, n }
    }

    pub fn validate(&self) -> Result<(), SampleError> {
        if self.n == 0 {
            return Err(SampleError::InvalidParams("n must be at least 1".into()));
        }
        Ok(())
    }
}

/// Deduplicate, sort by digest (ties broken by name), take the first `n`.
pub fn hash_select<S: AsRef<str>>(names: &[S], spec: &HashSelectSpec) -> Vec<String> {
    let unique: BTreeSet<&str> = names.iter().map(|s| s.as_ref()).collect();
    let mut keyed: Vec<([u8; 32], &str)> = unique
        .into_iter()
        .map(|name| (spec.algorithm.digest(name), name))
        .collect();
    keyed.sort_unstable();
    keyed
        .into_iter()
        .take(spec.n)
        .map(|(_, name)| name.to_string())
        .collect()
}

/// Items at positions `offset, offset + stride, ...`.
pub fn stride_sample<T: Clone>(items: &[T], stride: usize, offset: usize) -> Result<Vec<T>, SampleError> {
    if stride == 0 || offset >= stride {
        return Err(SampleError::InvalidParams(format!(
            "need stride >= 1 and offset < stride (stride {stride}, offset {offset})"
        )));
    }
    Ok(items.iter().skip(offset).step_by(stride).cloned().collect())
}

/// Up to `n` page URLs of one site, chosen by hash.
pub fn sample_pages<S: AsRef<str>>(page_urls: &[S], n: usize, algorithm: HashAlgorithm) -> Vec<String> {
    hash_select(page_urls, &HashSelectSpec { algorithm, n })
}

/// Text before the first colon, trimmed.
pub fn strip_title(title: &str) -> &str {
    match title.split_once(':') {
        Some((head, _)) => head.trim(),
        None => title.trim(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CdxRecord {
    pub url: String,
    pub host: String,
    /// Capture time as the archive's 14-digit `YYYYMMDDhhmmss` string.
    pub timestamp: String,
    pub status: Option<u16>,
    pub mime: String,
    pub languages: Vec<String>,
    pub filename: Option<String>,
    pub offset: Option<u64>,
    pub length: Option<u64>,
}

#[derive(Deserialize)]
struct RawCdx {
    url: String,
    timestamp: String,
    #[serde(default)]
    status: Option<String>,
    #[serde(default)]
    mime: Option<String>,
    #[serde(default, rename = "mime-detected")]
    mime_detected: Option<String>,
    #[serde(default)]
    languages: Option<String>,
    #[serde(default)]
    filename: Option<String>,
    #[serde(default)]
    offset: Option<String>,
    #[serde(default)]
    length: Option<String>,
}

fn parse_num<T: std::str::FromStr>(field: &str, v: Option<String>) -> Result<Option<T>, SampleError> {
    match v.as_deref() {
        None | Some("-") | Some("") => Ok(None),
        Some(s) => s
            .parse()
            .map(Some)
            .map_err(|_| SampleError::MalformedCdx(format!("{field} {s:?} is not a number"))),
    }
}

/// Parse one index line: either a bare JSON object or the
/// `urlkey timestamp {json}` form.
pub fn parse_cdx_line(line: &str) -> Result<CdxRecord, SampleError> {
    let line = line.trim();
    let json = match line.find('{') {
        Some(i) => &line[i..],
        None => return Err(SampleError::MalformedCdx("no JSON object".into())),
    };
    let raw: RawCdx = serde_json::from_str(json).map_err(|e| SampleError::MalformedCdx(e.to_string()))?;
    if raw.timestamp.len() != 14 || !raw.timestamp.bytes().all(|b| b.is_ascii_digit()) {
        return Err(SampleError::MalformedCdx(format!("bad timestamp {:?}", raw.timestamp)));
    }
    let parsed = url::Url::parse(&raw.url).map_err(|e| SampleError::MalformedCdx(format!("url: {e}")))?;
    let host = parsed
        .host_str()
        .map(crate::corpus::normalize_fqdn)
        .ok_or_else(|| SampleError::MalformedCdx("url has no host".into()))?;
    Ok(CdxRecord {
        host,
        timestamp: raw.timestamp,
        status: parse_num("status", raw.status)?,
        mime: raw.mime_detected.or(raw.mime).unwrap_or_default(),
        languages: raw
            .languages
            .map(|l| l.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
            .unwrap_or_default(),
        filename: raw.filename,
        offset: parse_num("offset", raw.offset)?,
        length: parse_num("length", raw.length)?,
        url: raw.url,
    })
}

/// English, 2xx, text/html.
pub fn cdx_keep(r: &CdxRecord) -> bool {
    matches!(r.status, Some(200..=299))
        && r.mime.eq_ignore_ascii_case("text/html")
        && r.languages.iter().any(|l| l == "eng")
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct CdxFilterOutcome {
    pub kept: Vec<CdxRecord>,
    pub dropped: usize,
    /// (1-based line number, diagnostic)
    pub malformed: Vec<(usize, String)>,
}

pub fn cdx_filter<'a, I: IntoIterator<Item = &'a str>>(lines: I) -> CdxFilterOutcome {
    let mut out = CdxFilterOutcome::default();
    for (i, line) in lines.into_iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_cdx_line(line) {
            Ok(r) if cdx_keep(&r) => out.kept.push(r),
            Ok(_) => out.dropped += 1,
            Err(e) => {
                log::warn!("cdx line {}: {e}", i + 1);
                out.malformed.push((i + 1, e.to_string()));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CdxClientConfig {
    /// Index endpoint, e.g. `https://index.commoncrawl.org/CC-MAIN-2024-10-index`.
    pub base_url: String,
    /// Base for WARC range fetches.
    pub data_url: String,
    pub retry_backoff_s: f64,
    pub max_attempts: u32,
    pub timeout_s: u64,
    pub user_agent: String,
}

impl Default for CdxClientConfig {
    fn default() -> Self {
        CdxClientConfig {
            base_url: String::new(),
            data_url: "https://data.commoncrawl.org".into(),
            retry_backoff_s: 5.0,
            max_attempts: 3,
            timeout_s: 60,
            user_agent: crate::crawl::DEFAULT_USER_AGENT.into(),
        }
    }
}

/// Serial index client: one request in flight, fixed delay between retries.
pub struct CdxClient {
    config: CdxClientConfig,
    http: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct PageCount {
    pages: u64,
}

impl CdxClient {
    pub fn new(config: CdxClientConfig) -> Result<Self, SampleError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_s))
            .user_agent(config.user_agent.clone())
            .build()
            .map_err(|e| SampleError::InvalidParams(e.to_string()))?;
        Ok(CdxClient { config, http })
    }

    fn get(&self, url: &str, range: Option<(u64, u64)>) -> Result<Vec<u8>, SampleError> {
        let mut last = String::new();
        for attempt in 1..=self.config.max_attempts {
            if attempt > 1 {
                thread::sleep(Duration::from_secs_f64(self.config.retry_backoff_s));
            }
            let mut req = self.http.get(url);
            if let Some((start, len)) = range {
                req = req.header(reqwest::header::RANGE, format!("bytes={}-{}", start, start + len - 1));
            }
            match req.send() {
                Ok(resp) if resp.status().is_success() => match resp.bytes() {
                    Ok(b) => return Ok(b.to_vec()),
                    Err(e) => last = e.to_string(),
                },
                Ok(resp) => {
                    last = format!("status {}", resp.status());
                    if resp.status().is_client_error() && resp.status().as_u16() != 429 {
                        break;
                    }
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(SampleError::Http {
            url: url.to_string(),
            attempts: self.config.max_attempts,
            message: last,
        })
    }

    fn query_url(&self, pattern: &str, extra: &str) -> String {
        let mut u = url::Url::parse(&self.config.base_url).expect("base_url validated by caller");
        u.query_pairs_mut()
            .append_pair("url", pattern)
            .append_pair("output", "json");
        format!("{u}{extra}")
    }

    /// All index lines for a URL pattern, page by page.
    pub fn query_lines(&self, pattern: &str) -> Result<Vec<String>, SampleError> {
        url::Url::parse(&self.config.base_url)
            .map_err(|e| SampleError::InvalidParams(format!("base_url: {e}")))?;
        let count_body = self.get(&self.query_url(pattern, "&showNumPages=true"), None)?;
        let count: PageCount = serde_json::from_slice(&count_body)
            .map_err(|e| SampleError::MalformedCdx(format!("page count: {e}")))?;
        let mut lines = Vec::new();
        for page in 0..count.pages {
            let body = self.get(&self.query_url(pattern, &format!("&page={page}")), None)?;
            let text = String::from_utf8_lossy(&body);
            lines.extend(text.lines().filter(|l| !l.trim().is_empty()).map(str::to_string));
        }
        Ok(lines)
    }

    pub fn query(&self, pattern: &str) -> Result<CdxFilterOutcome, SampleError> {
        let lines = self.query_lines(pattern)?;
        Ok(cdx_filter(lines.iter().map(String::as_str)))
    }

    /// Fetch and decode the WARC record a CDX entry points at.
    pub fn fetch_record(&self, r: &CdxRecord) -> Result<WarcRecord, SampleError> {
        let (Some(file), Some(offset), Some(length)) = (&r.filename, r.offset, r.length) else {
            return Err(SampleError::MalformedCdx(format!("{} has no WARC location", r.url)));
        };
        if length == 0 {
            return Err(SampleError::MalformedCdx("zero-length record".into()));
        }
        let url = format!("{}/{}", self.config.data_url.trim_end_matches('/'), file);
        let bytes = self.get(&url, Some((offset, length)))?;
        parse_warc_member(&bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WarcRecord {
    pub headers: Vec<(String, String)>,
    pub http_status: Option<u16>,
    pub http_body: Vec<u8>,
}

impl WarcRecord {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

fn split_head(data: &[u8]) -> Option<(&[u8], &[u8])> {
    data.windows(4)
        .position(|w| w == b"\r\n\r\n")
        .map(|i| (&data[..i], &data[i + 4..]))
}

/// Decode one gzip member holding a WARC record; for `response` records the
/// HTTP status line and headers are stripped from the body.
pub fn parse_warc_member(gz: &[u8]) -> Result<WarcRecord, SampleError> {
    let mut data = Vec::new();
    GzDecoder::new(gz)
        .read_to_end(&mut data)
        .map_err(|e| SampleError::MalformedWarc(format!("gzip: {e}")))?;
    let (head, rest) = split_head(&data).ok_or_else(|| SampleError::MalformedWarc("no header terminator".into()))?;
    let head = String::from_utf8_lossy(head);
    let mut lines = head.split("\r\n");
    let version = lines.next().unwrap_or_default();
    if !version.starts_with("WARC/") {
        return Err(SampleError::MalformedWarc(format!("bad version line {version:?}")));
    }
    let headers: Vec<(String, String)> = lines
        .filter_map(|l| l.split_once(':'))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect();
    let mut record = WarcRecord {
        headers,
        http_status: None,
        http_body: Vec::new(),
    };
    let len: usize = record
        .header("Content-Length")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| SampleError::MalformedWarc("missing Content-Length".into()))?;
    if rest.len() < len {
        return Err(SampleError::MalformedWarc(format!(
            "block truncated: {} of {len} bytes",
            rest.len()
        )));
    }
    let block = &rest[..len];
    if record.header("WARC-Type") == Some("response") {
        let (http_head, body) =
            split_head(block).ok_or_else(|| SampleError::MalformedWarc("no HTTP header terminator".into()))?;
        let status_line = String::from_utf8_lossy(http_head.split(|&b| b == b'\r').next().unwrap_or_default());
        record.http_status = status_line.split_whitespace().nth(1).and_then(|s| s.parse().ok());
        record.http_body = body.to_vec();
    } else {
        record.http_body = block.to_vec();
    }
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sitemap {
    Urls(Vec<String>),
    Index(Vec<String>),
}

/// Parse a `urlset` or `sitemapindex` document.
pub fn parse_sitemap(xml: &str) -> Result<Sitemap, SampleError> {
    let doc = roxmltree::Document::parse(xml).map_err(|e| SampleError::MalformedSitemap(e.to_string()))?;
    let root = doc.root_element();
    let child = match root.tag_name().name() {
        "urlset" => "url",
        "sitemapindex" => "sitemap",
        other => return Err(SampleError::MalformedSitemap(format!("unexpected root <{other}>"))),
    };
    let locs: Vec<String> = root
        .children()
        .filter(|n| n.tag_name().name() == child)
        .filter_map(|n| n.children().find(|c| c.tag_name().name() == "loc"))
        .filter_map(|loc| loc.text())
        .map(|t| t.trim().to_string())
        .filter(|t| !t.is_empty())
        .collect();
    Ok(if child == "url" {
        Sitemap::Urls(locs)
    } else {
        Sitemap::Index(locs)
    })
}

/// Page URLs reachable from a sitemap, following one level of index
/// nesting. Child sitemaps that fail to load are skipped with a warning.
pub fn collect_sitemap_urls<F>(root_url: &str, mut fetch: F) -> Result<Vec<String>, SampleError>
where
    F: FnMut(&str) -> Result<String, SampleError>,
{
    match parse_sitemap(&fetch(root_url)?)? {
        Sitemap::Urls(urls) => Ok(urls),
        Sitemap::Index(children) => {
            let mut urls = Vec::new();
            for child in children {
                match fetch(&child).and_then(|body| parse_sitemap(&body)) {
                    Ok(Sitemap::Urls(u)) => urls.extend(u),
                    Ok(Sitemap::Index(_)) => log::warn!("{child}: nested sitemap index ignored"),
                    Err(e) => log::warn!("{child}: {e}"),
                }
            }
            Ok(urls)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use flate2::write::GzEncoder;
    use flate2::Compression;
    use std::io::Write;

    #[test]
    fn known_digests() {
        assert_eq!(
            hex(&HashAlgorithm::Blake3.digest("abc"))[..8],
            *"6437b3ac"
        );
        assert_eq!(
            hex(&HashAlgorithm::Sha256.digest("abc"))[..8],
            *"ba7816bf"
        );
    }

    fn hex(b: &[u8]) -> String {
        b.iter().map(|x| format!("{x:02x}")).collect()
    }

    #[test]
    fn selection_ignores_order_and_duplicates() {
        let a = ["x", "y", "z", "w", "x"];
        let b = ["w", "z", "y", "x"];
        let spec = HashSelectSpec::new(HashAlgorithm::Blake3, 2);
        assert_eq!(hash_select(&a, &spec), hash_select(&b, &spec));
        let all = hash_select(&a, &HashSelectSpec::new(HashAlgorithm::Blake3, 10));
        assert_eq!(all.len(), 4);
    }

    #[test]
    fn stride() {
        let items: Vec<usize> = (0..589).collect();
        let s = stride_sample(&items, 32, 0).unwrap();
        assert_eq!(s.len(), 19);
        assert_eq!(s.last(), Some(&576));
        assert_eq!(stride_sample(&items, 1, 0).unwrap(), items);
        assert!(stride_sample(&items, 4, 4).is_err());
        assert!(stride_sample(&items, 0, 0).is_err());
    }

    #[test]
    fn titles() {
        assert_eq!(strip_title("How to Tie a Tie: 4 Knots"), "How to Tie a Tie");
        assert_eq!(strip_title("No colon here"), "No colon here");
        assert_eq!(strip_title("a: b: c"), "a");
    }

    #[test]
    fn cdx_lines() {
        let ok = r#"com,example)/a 20230101000000 {"url": "https://Example.com/a", "timestamp": "20230101000000", "status": "200", "mime": "text/html", "languages": "eng,fra", "filename": "f.warc.gz", "offset": "10", "length": "20"}"#;
        let missing = r#"{"url": "https://example.com/b", "timestamp": "20230101000000", "status": "404", "mime": "text/html", "languages": "eng"}"#;
        let german = r#"{"url": "https://example.com/c", "timestamp": "20230101000000", "status": "200", "mime": "text/html", "languages": "deu"}"#;
        let out = cdx_filter([ok, missing, german, "garbage", ""]);
        assert_eq!(out.kept.len(), 1);
        assert_eq!(out.kept[0].host, "example.com");
        assert_eq!(out.kept[0].offset, Some(10));
        assert_eq!(out.dropped, 2);
        assert_eq!(out.malformed.len(), 1);
        assert_eq!(out.malformed[0].0, 4);
    }

    fn gz(data: &[u8]) -> Vec<u8> {
        let mut e = GzEncoder::new(Vec::new(), Compression::default());
        e.write_all(data).unwrap();
        e.finish().unwrap()
    }

    #[test]
    fn warc_response() {
        let http = b"HTTP/1.1 200 OK\r\nContent-Type: text/html\r\n\r\n<p>hello</p>";
        let mut rec = format!(
            "WARC/1.0\r\nWARC-Type: response\r\nWARC-Target-URI: https://example.com/\r\nContent-Length: {}\r\n\r\n",
            http.len()
        )
        .into_bytes();
        rec.extend_from_slice(http);
        rec.extend_from_slice(b"\r\n\r\n");
        let r = parse_warc_member(&gz(&rec)).unwrap();
        assert_eq!(r.http_status, Some(200));
        assert_eq!(r.http_body, b"<p>hello</p>");
        assert_eq!(r.header("warc-target-uri"), Some("https://example.com/"));
        assert!(parse_warc_member(b"not gzip").is_err());
        assert!(parse_warc_member(&gz(b"HTTP/1.1 200\r\n\r\n")).is_err());
    }

    #[test]
    fn sitemaps() {
        let urlset = r#"<?xml version="1.0"?><urlset xmlns="http://www.sitemaps.org/schemas/sitemap/0.9">
            <url><loc> https://e.com/a </loc></url><url><loc>https://e.com/b</loc></url></urlset>"#;
        assert_eq!(
            parse_sitemap(urlset).unwrap(),
            Sitemap::Urls(vec!["https://e.com/a".into(), "https://e.com/b".into()])
        );
        let index = r#"<sitemapindex xmlns="http://www.sitemaps.org/schemas/sitemap/0.9">
            <sitemap><loc>https://e.com/s1.xml</loc></sitemap><sitemap><loc>https://e.com/bad.xml</loc></sitemap></sitemapindex>"#;
        let urls = collect_sitemap_urls("https://e.com/sitemap.xml", |u| match u {
            "https://e.com/sitemap.xml" => Ok(index.to_string()),
            "https://e.com/s1.xml" => Ok(urlset.to_string()),
            _ => Ok("<oops".to_string()),
        })
        .unwrap();
        assert_eq!(urls.len(), 2);
        assert!(parse_sitemap("<html/>").is_err());
    }
}
