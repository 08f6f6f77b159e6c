use std::collections::BTreeMap;

use anyhow::{Context, Result};
use degentweb::corpus::site_of_url;
use degentweb::sample::{cdx_filter, hash_select, sample_pages, strip_title, stride_sample, HashAlgorithm, HashSelectSpec};
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::io::{read_lines, usage, write_lines, write_text, Reporter};
use crate::SampleMode;

#[derive(Serialize)]
struct SampleSummary {
    mode: &'static str,
    input: usize,
    selected: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    dropped: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    malformed: Option<usize>,
}

impl SampleSummary {
    fn human(&self) -> String {
        let mut s = format!("{}: selected {} of {}", self.mode, self.selected, self.input);
        if let Some(d) = self.dropped {
            s.push_str(&format!(", dropped {d}"));
        }
        if let Some(m) = self.malformed {
            s.push_str(&format!(", malformed {m}"));
        }
        s
    }
}

fn spec(algorithm: HashAlgorithm, n: usize) -> Result<HashSelectSpec> {
    let spec = HashSelectSpec::new(algorithm, n);
    spec.validate().map_err(|e| usage(e.to_string()))?;
    Ok(spec)
}

pub fn run(mode: SampleMode, cfg: &PipelineConfig, out: &Reporter) -> Result<()> {
    // Selections go to --out when given; the summary then goes to stdout.
    // Without --out the selection itself is the stdout payload.
    let (summary, path, lines) = match mode {
        SampleMode::Hash { input, n, algorithm, out: path } => {
            let spec = spec(algorithm.map_or(cfg.sampling.algorithm, Into::into), n)?;
            let names = read_lines(&input)?;
            let picked = hash_select(&names, &spec);
            (SampleSummary { mode: "hash", input: names.len(), selected: picked.len(), dropped: None, malformed: None }, path, picked)
        }
        SampleMode::Stride { input, stride, offset, out: path } => {
            let items = read_lines(&input)?;
            let picked = stride_sample(
                &items,
                stride.unwrap_or(cfg.sampling.stride),
                offset.unwrap_or(cfg.sampling.offset),
            )
            .map_err(|e| usage(e.to_string()))?;
            (SampleSummary { mode: "stride", input: items.len(), selected: picked.len(), dropped: None, malformed: None }, path, picked)
        }
        SampleMode::Pages { input, n, algorithm, out: path } => {
            let alg = spec(algorithm.map_or(cfg.sampling.algorithm, Into::into), n)?.algorithm;
            let urls = read_lines(&input)?;
            let mut by_site: BTreeMap<String, Vec<String>> = BTreeMap::new();
            let mut dropped = 0;
            for u in &urls {
                match site_of_url(u) {
                    Some(site) => by_site.entry(site).or_default().push(u.clone()),
                    None => dropped += 1,
                }
            }
            let picked: Vec<String> = by_site.values().flat_map(|v| sample_pages(v, n, alg)).collect();
            (SampleSummary { mode: "pages", input: urls.len(), selected: picked.len(), dropped: Some(dropped), malformed: None }, path, picked)
        }
        SampleMode::Titles { input, n, out: path } => {
            let spec = spec(HashAlgorithm::Sha256, n)?;
            let titles = read_lines(&input)?;
            let stripped: Vec<&str> = titles.iter().map(|t| strip_title(t)).filter(|t| !t.is_empty()).collect();
            let picked = hash_select(&stripped, &spec);
            (SampleSummary { mode: "titles", input: titles.len(), selected: picked.len(), dropped: None, malformed: None }, path, picked)
        }
        SampleMode::Cdx { input, out: path } => {
            let text = std::fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let outcome = cdx_filter(text.lines());
            let lines = outcome
                .kept
                .iter()
                .map(serde_json::to_string)
                .collect::<Result<Vec<_>, _>>()?;
            let summary = SampleSummary {
                mode: "cdx",
                input: outcome.kept.len() + outcome.dropped + outcome.malformed.len(),
                selected: outcome.kept.len(),
                dropped: Some(outcome.dropped),
                malformed: Some(outcome.malformed.len()),
            };
            (summary, path, lines)
        }
    };
    match path {
        Some(p) => {
            write_lines(Some(&p), &lines)?;
            out.emit("sample", &summary, || summary.human())
        }
        None if out.json => write_text(None, &crate::io::to_json(&lines)?),
        None => write_lines(None, &lines),
    }
}
