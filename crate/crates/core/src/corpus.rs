//! Page and site records, JSON-lines persistence and grouping by site.
//!
//! A record file holds one JSON object per line. Raw HTML is stored inline
//! as base64; when a blob directory is configured, bodies larger than
//! [`BLOB_THRESHOLD_BYTES`] are written to `<blob_dir>/<sha256>.html` and the
//! line carries `"raw_html": "blob:<sha256>"` instead.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use chrono::{DateTime, NaiveDate, Utc};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use url::Url;

use crate::quality::ComplianceResult;

pub const BLOB_THRESHOLD_BYTES: usize = 1 << 20;

const BLOB_PREFIX: &str = "blob:";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("invalid record for {url}: {reason}")]
    Invalid { url: String, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Where a page's content came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PageSource {
    LiveCrawl,
    Archive,
    PreExtracted,
}

/// One fetched or archived page.
#[derive(Debug, Clone, PartialEq)]
pub struct PageRecord {
    pub url: String,
    pub site: String,
    pub fetched_at: DateTime<Utc>,
    pub archived_at: Option<DateTime<Utc>>,
    pub dated_at: Option<NaiveDate>,
    pub raw_html: Option<Vec<u8>>,
    pub extracted_text: Option<String>,
    pub token_count: Option<u64>,
    pub compliance: Option<ComplianceResult>,
    pub score: Option<f64>,
    pub source: PageSource,
}

impl PageRecord {
    /// A bare record for `url`, with `site` derived from its host.
    pub fn new(url: &str, fetched_at: DateTime<Utc>, source: PageSource) -> Result<Self, CorpusError> {
        let site = site_of_url(url).ok_or_else(|| CorpusError::Invalid {
            url: url.to_string(),
            reason: "url has no host".into(),
        })?;
        Ok(PageRecord {
            url: url.to_string(),
            site,
            fetched_at,
            archived_at: None,
            dated_at: None,
            raw_html: None,
            extracted_text: None,
            token_count: None,
            compliance: None,
            score: None,
            source,
        })
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let invalid = |reason: &str| CorpusError::Invalid {
            url: self.url.clone(),
            reason: reason.to_string(),
        };
        if normalize_fqdn(&self.site) != self.site || self.site.is_empty() {
            return Err(invalid("site is not a normalized lowercase FQDN"));
        }
        match site_of_url(&self.url) {
            Some(host) if host == self.site => {}
            _ => return Err(invalid("site does not match url host")),
        }
        if let Some(s) = self.score {
            if !s.is_finite() {
                return Err(invalid("score is not finite"));
            }
        }
        if self.extracted_text.is_some()
            && self.raw_html.is_none()
            && self.source != PageSource::PreExtracted
        {
            return Err(invalid("extracted_text without raw_html on a non pre-extracted record"));
        }
        Ok(())
    }
}

/// Lowercase, strip a trailing dot. No public-suffix collapsing: every FQDN
/// is its own site.
pub fn normalize_fqdn(host: &str) -> String {
    host.trim().trim_end_matches('.').to_ascii_lowercase()
}

pub fn site_of_url(url: &str) -> Option<String> {
    let parsed = Url::parse(url).ok()?;
    parsed.host_str().map(normalize_fqdn).filter(|h| !h.is_empty())
}

/// All pages of one FQDN.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteSample {
    pub site: String,
    pub pages: Vec<PageRecord>,
    pub earliest_archived_at: Option<DateTime<Utc>>,
}

impl SiteSample {
    pub fn new(site: String, pages: Vec<PageRecord>) -> Self {
        let earliest_archived_at = pages.iter().filter_map(|p| p.archived_at).min();
        SiteSample {
            site,
            pages,
            earliest_archived_at,
        }
    }
}

/// Partition records by FQDN. Sites appear in order of first occurrence and
/// pages keep their input order.
pub fn group_by_site(records: Vec<PageRecord>) -> Vec<SiteSample> {
    let mut groups: IndexMap<String, Vec<PageRecord>> = IndexMap::new();
    for record in records {
        groups.entry(record.site.clone()).or_default().push(record);
    }
    groups
        .into_iter()
        .map(|(site, pages)| SiteSample::new(site, pages))
        .collect()
}

pub fn flatten_sites(sites: Vec<SiteSample>) -> Vec<PageRecord> {
    sites.into_iter().flat_map(|s| s.pages).collect()
}

// On-disk shape; identical field names, raw_html in its encoded form.
#[derive(Serialize, Deserialize)]
struct StoredRecord {
    url: String,
    site: String,
    fetched_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    archived_at: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dated_at: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    raw_html: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    extracted_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    token_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    compliance: Option<ComplianceResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
    source: PageSource,
}

/// How the reader treats lines that fail to parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MalformedPolicy {
    #[default]
    Fail,
    Skip,
}

#[derive(Debug, Clone, Default)]
pub struct RecordStoreOptions {
    /// Side-car directory for oversized HTML bodies. `None` keeps everything inline.
    pub blob_dir: Option<PathBuf>,
    pub on_malformed: MalformedPolicy,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedLine {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct ReadOutcome {
    pub records: Vec<PageRecord>,
    pub skipped: Vec<SkippedLine>,
}

pub fn write_records(
    path: &Path,
    records: &[PageRecord],
    opts: &RecordStoreOptions,
) -> Result<(), CorpusError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for record in records {
        let line = encode_record(record, opts)?;
        out.write_all(line.as_bytes()).map_err(io_err(path))?;
        out.write_all(b"\n").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn encode_record(record: &PageRecord, opts: &RecordStoreOptions) -> Result<String, CorpusError> {
    let raw_html = match (&record.raw_html, &opts.blob_dir) {
        (Some(html), Some(dir)) if html.len() > BLOB_THRESHOLD_BYTES => {
            let digest = hex_digest(html);
            fs::create_dir_all(dir).map_err(io_err(dir))?;
            let blob_path = dir.join(format!("{digest}.html"));
            if !blob_path.exists() {
                fs::write(&blob_path, html).map_err(io_err(&blob_path))?;
            }
            Some(format!("{BLOB_PREFIX}{digest}"))
        }
        (Some(html), _) => Some(BASE64.encode(html)),
        (None, _) => None,
    };
    let stored = StoredRecord {
        url: record.url.clone(),
        site: record.site.clone(),
        fetched_at: record.fetched_at,
        archived_at: record.archived_at,
        dated_at: record.dated_at,
        raw_html,
        extracted_text: record.extracted_text.clone(),
        token_count: record.token_count,
        compliance: record.compliance.clone(),
        score: record.score,
        source: record.source,
    };
    serde_json::to_string(&stored).map_err(|e| CorpusError::Invalid {
        url: record.url.clone(),
        reason: e.to_string(),
    })
}

fn decode_record(line: &str, opts: &RecordStoreOptions) -> Result<PageRecord, String> {
    let stored: StoredRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let raw_html = match stored.raw_html {
        None => None,
        Some(enc) => match enc.strip_prefix(BLOB_PREFIX) {
            Some(digest) => {
                let dir = opts
                    .blob_dir
                    .as_ref()
                    .ok_or_else(|| format!("blob reference {digest} but no blob directory configured"))?;
                let bytes = fs::read(dir.join(format!("{digest}.html")))
                    .map_err(|e| format!("blob {digest}: {e}"))?;
                Some(bytes)
            }
            None => Some(BASE64.decode(enc.as_bytes()).map_err(|e| format!("raw_html: {e}"))?),
        },
    };
    Ok(PageRecord {
        url: stored.url,
        site: stored.site,
        fetched_at: stored.fetched_at,
        archived_at: stored.archived_at,
        dated_at: stored.dated_at,
        raw_html,
        extracted_text: stored.extracted_text,
        token_count: stored.token_count,
        compliance: stored.compliance,
        score: stored.score,
        source: stored.source,
    })
}

pub fn read_records(path: &Path, opts: &RecordStoreOptions) -> Result<ReadOutcome, CorpusError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut outcome = ReadOutcome::default();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        match decode_record(&line, opts) {
            Ok(record) => outcome.records.push(record),
            Err(message) => match opts.on_malformed {
                MalformedPolicy::Fail => {
                    return Err(CorpusError::Malformed {
                        path: path.to_path_buf(),
                        line: line_no,
                        message,
                    })
                }
                MalformedPolicy::Skip => {
                    log::warn!("{}:{line_no}: skipping malformed record: {message}", path.display());
                    outcome.skipped.push(SkippedLine {
                        line: line_no,
                        message,
                    });
                }
            },
        }
    }
    Ok(outcome)
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
