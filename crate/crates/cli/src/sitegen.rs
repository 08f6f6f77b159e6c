use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use degentweb::classify::SiteLabel;
use degentweb::scorer::LabelHint;
use degentweb::sitegen::{mock_site, normalize_slug, render_site, validate_plan, write_site, PageDoc, StaticServer, Strictness};
use degentweb::synth::{group_for, site_seed, synthetic_host};
use serde::Serialize;

use crate::config::read_json;
use crate::io::{write_labels, write_lines, LabelRow, Reporter};

pub enum Source {
    Documents { plan: PathBuf, docs: PathBuf, host: String },
    Synthetic { n_llm: usize, n_human: usize, seed: u64 },
}

#[derive(Serialize)]
struct SitegenReport {
    out: PathBuf,
    sites: usize,
    pages: usize,
}

pub fn run(source: Source, out_dir: &Path, serve: Option<&str>, out: &Reporter) -> Result<()> {
    let report = match source {
        Source::Documents { plan, docs, host } => {
            let text = fs::read_to_string(&plan).with_context(|| format!("reading {}", plan.display()))?;
            let plan = validate_plan(&text)?;
            let docs: BTreeMap<String, PageDoc> = read_json::<BTreeMap<String, PageDoc>>(&docs)?
                .into_iter()
                .map(|(slug, doc)| (normalize_slug(&slug), doc))
                .collect();
            let pages = render_site(&plan, &docs, Strictness::WarnWordCount)?;
            write_site(out_dir, &host, &pages)?;
            SitegenReport { out: out_dir.to_path_buf(), sites: 1, pages: pages.len() }
        }
        Source::Synthetic { n_llm, n_human, seed } => {
            let specs = (0..n_llm)
                .map(|i| (LabelHint::Llm, i))
                .chain((0..n_human).map(|i| (LabelHint::Human, i)));
            let mut urls = Vec::new();
            let mut labels = Vec::new();
            for (label, i) in specs {
                let host = synthetic_host(label, i);
                let (_, pages) = mock_site(&host, site_seed(seed, &host), label)?;
                write_site(&out_dir.join(&host), &host, &pages)?;
                urls.extend(pages.keys().map(|slug| format!("https://{host}{slug}")));
                labels.push(LabelRow {
                    site: host,
                    label: match label {
                        LabelHint::Llm => SiteLabel::LlmDominant,
                        LabelHint::Human => SiteLabel::NotLlmDominant,
                    },
                    group: Some(group_for(i)),
                });
            }
            write_lines(Some(&out_dir.join("urls.txt")), &urls)?;
            write_labels(&out_dir.join("labels.csv"), &labels)?;
            SitegenReport { out: out_dir.to_path_buf(), sites: labels.len(), pages: urls.len() }
        }
    };
    out.emit("sitegen", &report, || {
        format!("rendered {} pages for {} sites into {}", report.pages, report.sites, report.out.display())
    })?;
    if let Some(addr) = serve {
        let server = StaticServer::start(out_dir, addr).with_context(|| format!("binding {addr}"))?;
        eprintln!("serving {} on http://{}", out_dir.display(), server.addr);
        loop {
            std::thread::park();
        }
    }
    Ok(())
}
