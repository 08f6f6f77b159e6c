//! File formats shared by several subcommands and the summary printer.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use degentweb::classify::{SiteGroup, SiteLabel};
use degentweb::corpus::{read_records, write_records, PageRecord};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;

/// A problem with how the command was invoked; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Non-empty lines, trimmed, without `#` comments.
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

pub fn write_lines(path: Option<&Path>, lines: &[String]) -> Result<()> {
    let mut text = lines.join("\n");
    if !lines.is_empty() {
        text.push('\n');
    }
    write_text(path, &text)
}

/// Write to `path`, or stdout when `None`.
pub fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            fs::write(p, text).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Record file from the flag, falling back to the config's `paths.records`.
pub fn records_path(flag: Option<PathBuf>, cfg: &PipelineConfig) -> Result<PathBuf> {
    flag.or_else(|| cfg.paths.records.clone())
        .ok_or_else(|| usage("no record file: pass --records or set paths.records in the config"))
}

pub fn model_path(flag: Option<PathBuf>, cfg: &PipelineConfig) -> Result<PathBuf> {
    flag.or_else(|| cfg.paths.model.clone())
        .ok_or_else(|| usage("no model file: pass --model or set paths.model in the config"))
}

pub fn load_records(path: &Path, cfg: &PipelineConfig) -> Result<Vec<PageRecord>> {
    let out = read_records(path, &cfg.store())?;
    for s in &out.skipped {
        log::warn!("{}:{}: skipped: {}", path.display(), s.line, s.message);
    }
    Ok(out.records)
}

pub fn save_records(path: &Path, records: &[PageRecord], cfg: &PipelineConfig) -> Result<()> {
    write_records(path, records, &cfg.store())?;
    Ok(())
}

/// One row of a labels CSV: `site,label[,group]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub site: String,
    pub label: SiteLabel,
    #[serde(default)]
    pub group: Option<SiteGroup>,
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRow>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    rdr.deserialize()
        .enumerate()
        .map(|(i, row)| row.with_context(|| format!("{}:{}: bad label row", path.display(), i + 2)))
        .collect()
}

pub fn write_labels(path: &Path, rows: &[LabelRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Prints a command's summary: pretty JSON with `--json`, otherwise the
/// human rendering. A copy goes to the reports directory when configured.
pub struct Reporter {
    pub json: bool,
    pub reports_dir: Option<PathBuf>,
}

impl Reporter {
    pub fn emit<T: Serialize>(&self, command: &str, value: &T, human: impl FnOnce() -> String) -> Result<()> {
        let json = to_json(value)?;
        if let Some(dir) = &self.reports_dir {
            write_text(Some(&dir.join(format!("{command}.json"))), &json)?;
        }
        if self.json {
            write_text(None, &json)
        } else {
            let mut text = human();
            if !text.ends_with('\n') {
                text.push('\n');
            }
            write_text(None, &text)
        }
    }
}
