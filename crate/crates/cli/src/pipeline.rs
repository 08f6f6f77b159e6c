use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use degentweb::classify::{ood_cross_validate, train_svm, OodReport, ScoredSite, SiteGroup, SiteLabel, SvmModel};
use degentweb::corpus::normalize_fqdn;
use degentweb::pipeline::{classify_sites, filter_records, score_records, site_scores, FilterSummary, SiteClassification, SiteScores, SiteVerdict};
use degentweb::quality::{HeuristicTokenCounter, TokenCounter};
use degentweb::scorer::{RemoteScorer, ScorerBackend};
use degentweb::synth::{synthetic_corpus, SynthConfig};
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::io::{load_records, model_path, read_labels, records_path, save_records, to_json, usage, write_text, Reporter};
use crate::Format;

#[derive(Serialize)]
struct FilterReport {
    pages: usize,
    compliant: usize,
    sites: usize,
    per_site: Vec<FilterSummary>,
}

pub fn filter(records: Option<PathBuf>, out_path: &Path, cfg: &PipelineConfig, out: &Reporter) -> Result<()> {
    let input = records_path(records, cfg)?;
    let records = load_records(&input, cfg)?;
    // The service's own tokenizer when one is configured.
    let tokens: Box<dyn TokenCounter> = match &cfg.scorer {
        ScorerBackend::Remote(r) => Box::new(RemoteScorer::new(r.clone())?),
        ScorerBackend::Mock { .. } => Box::new(HeuristicTokenCounter),
    };
    let (records, per_site) = filter_records(records, &cfg.filter(), tokens.as_ref())?;
    save_records(out_path, &records, cfg)?;
    let report = FilterReport {
        pages: records.len(),
        compliant: per_site.iter().map(|s| s.compliant).sum(),
        sites: per_site.len(),
        per_site,
    };
    out.emit("filter", &report, || {
        format!("{} of {} pages compliant across {} sites", report.compliant, report.pages, report.sites)
    })
}

#[derive(Serialize)]
struct ScoreReport {
    pages: usize,
    scored: usize,
    backend: &'static str,
}

pub fn score(records: Option<PathBuf>, out_path: &Path, cfg: &PipelineConfig, out: &Reporter) -> Result<()> {
    let input = records_path(records, cfg)?;
    let mut records = load_records(&input, cfg)?;
    let scorer = cfg.scorer.build()?;
    let scored = score_records(&mut records, scorer.as_ref(), true)?;
    save_records(out_path, &records, cfg)?;
    let report = ScoreReport {
        pages: records.len(),
        scored,
        backend: match cfg.scorer {
            ScorerBackend::Mock { .. } => "mock",
            ScorerBackend::Remote(_) => "remote",
        },
    };
    out.emit("score", &report, || format!("scored {} of {} pages ({})", report.scored, report.pages, report.backend))
}

/// Sites with a label, joined with their scored pages. Labeled sites
/// missing from the records or below the page minimum end up in `excluded`.
struct Joined {
    sites: Vec<ScoredSite>,
    excluded: Vec<Excluded>,
}

#[derive(Serialize)]
struct Excluded {
    site: String,
    n_pages: usize,
}

fn join_labels(scores: Vec<SiteScores>, labels: &Path, min_pages: usize, need_group: bool) -> Result<Joined> {
    let mut by_site: BTreeMap<String, Vec<f64>> = scores.into_iter().map(|s| (s.site, s.scores)).collect();
    let mut sites = Vec::new();
    let mut excluded = Vec::new();
    for row in read_labels(labels)? {
        let site = normalize_fqdn(&row.site);
        let group = match row.group {
            Some(g) => g,
            None if need_group => return Err(usage(format!("{}: site {site} has no group", labels.display()))),
            None => SiteGroup::Other,
        };
        let scores = by_site.remove(&site).unwrap_or_default();
        if scores.len() < min_pages.max(1) {
            excluded.push(Excluded { site, n_pages: scores.len() });
            continue;
        }
        sites.push(ScoredSite { site, scores, label: row.label, group });
    }
    Ok(Joined { sites, excluded })
}

#[derive(Serialize)]
struct TrainReport {
    model: PathBuf,
    n_train: usize,
    n_llm_dominant: usize,
    training_accuracy: f64,
    excluded: Vec<Excluded>,
}

pub fn train(
    records: Option<PathBuf>,
    labels: &Path,
    model: Option<PathBuf>,
    cfg: &PipelineConfig,
    out: &Reporter,
) -> Result<()> {
    let input = records_path(records, cfg)?;
    let model_file = model_path(model, cfg)?;
    let records = load_records(&input, cfg)?;
    let joined = join_labels(site_scores(&records), labels, cfg.classify.min_pages, false)?;
    let data = joined
        .sites
        .iter()
        .map(|s| s.labeled(cfg.classify.page_cap))
        .collect::<Result<Vec<_>, _>>()?;
    let model = train_svm(&data, &cfg.classify.hyperparams)?;
    model.save(&model_file)?;
    let report = TrainReport {
        model: model_file,
        n_train: model.training_stats.n_train,
        n_llm_dominant: model.training_stats.n_llm_dominant,
        training_accuracy: model.training_stats.accuracy,
        excluded: joined.excluded,
    };
    out.emit("train", &report, || {
        format!(
            "trained on {} sites ({} llm-dominant), training accuracy {:.4}; {} labeled sites excluded; model at {}",
            report.n_train,
            report.n_llm_dominant,
            report.training_accuracy,
            report.excluded.len(),
            report.model.display()
        )
    })
}

fn classifications_csv(rows: &[SiteClassification]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["site".to_string(), "status".into(), "label".into(), "distance".into(), "n_pages".into()];
    header.extend((1..=9).map(|d| format!("d{}", d * 10)));
    w.write_record(&header)?;
    for r in rows {
        let mut row = vec![r.site.clone()];
        match &r.verdict {
            SiteVerdict::Classified { label, distance, vector } => {
                row.extend(["classified".into(), label.as_str().into(), distance.to_string(), vector.n_pages.to_string()]);
                row.extend(vector.values.iter().map(f64::to_string));
            }
            SiteVerdict::Insufficient { n_pages } => {
                row.extend(["insufficient".into(), String::new(), String::new(), n_pages.to_string()]);
                row.extend(std::iter::repeat_n(String::new(), 9));
            }
        }
        w.write_record(&row)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

#[derive(Serialize)]
struct ClassifyReport {
    out: PathBuf,
    sites: usize,
    llm_dominant: usize,
    not_llm_dominant: usize,
    insufficient: usize,
}

pub fn classify(
    model: Option<PathBuf>,
    records: Option<PathBuf>,
    out_path: Option<PathBuf>,
    format: Option<Format>,
    cfg: &PipelineConfig,
    out: &Reporter,
) -> Result<()> {
    let model = SvmModel::load(&model_path(model, cfg)?)?;
    let records = load_records(&records_path(records, cfg)?, cfg)?;
    let rows = classify_sites(&site_scores(&records), &model, cfg.classify.min_pages, cfg.classify.page_cap)?;
    let text = match format.unwrap_or(Format::Json) {
        Format::Json => to_json(&rows)?,
        Format::Csv => classifications_csv(&rows)?,
    };
    let Some(path) = out_path else {
        return write_text(None, &text);
    };
    write_text(Some(&path), &text)?;
    let count = |l: SiteLabel| {
        rows.iter()
            .filter(|r| matches!(r.verdict, SiteVerdict::Classified { label, .. } if label == l))
            .count()
    };
    let report = ClassifyReport {
        out: path,
        sites: rows.len(),
        llm_dominant: count(SiteLabel::LlmDominant),
        not_llm_dominant: count(SiteLabel::NotLlmDominant),
        insufficient: rows.iter().filter(|r| matches!(r.verdict, SiteVerdict::Insufficient { .. })).count(),
    };
    out.emit("classify", &report, || {
        format!(
            "{} sites: {} llm-dominant, {} not, {} with too few pages",
            report.sites, report.llm_dominant, report.not_llm_dominant, report.insufficient
        )
    })
}

pub enum CvSource {
    Records { records: Option<PathBuf>, labels: PathBuf },
    Synthetic { n_llm: usize, n_human: usize, seed: u64 },
}

#[derive(Serialize)]
struct CvReport {
    sites: usize,
    excluded: Vec<Excluded>,
    runs: Vec<OodReport>,
}

pub fn cross_validate(source: CvSource, pages: &[usize], cfg: &PipelineConfig, out: &Reporter) -> Result<()> {
    if pages.contains(&0) {
        return Err(usage("--pages must be at least 1"));
    }
    let min_pages = cfg.classify.min_pages;
    let joined = match source {
        CvSource::Records { records, labels } => {
            let records = load_records(&records_path(records, cfg)?, cfg)?;
            join_labels(site_scores(&records), &labels, min_pages, true)?
        }
        CvSource::Synthetic { n_llm, n_human, seed } => {
            let synth = SynthConfig { n_llm, n_human, seed, filter: cfg.filter(), ..SynthConfig::default() };
            let (sites, short): (Vec<_>, Vec<_>) =
                synthetic_corpus(&synth)?.into_iter().partition(|s| s.scores.len() >= min_pages.max(1));
            Joined {
                sites,
                excluded: short.into_iter().map(|s| Excluded { n_pages: s.scores.len(), site: s.site }).collect(),
            }
        }
    };
    let budgets: Vec<Option<usize>> = if pages.is_empty() {
        vec![cfg.classify.page_cap]
    } else {
        pages.iter().copied().map(Some).collect()
    };
    let runs = budgets
        .into_iter()
        .map(|b| ood_cross_validate(&joined.sites, b, &cfg.classify.hyperparams))
        .collect::<Result<Vec<_>, _>>()
        .context("cross-validation")?;
    let report = CvReport { sites: joined.sites.len(), excluded: joined.excluded, runs };
    out.emit("cross-validate", &report, || {
        let mut s = format!("{} sites ({} excluded)\n", report.sites, report.excluded.len());
        s.push_str("| pages | train | test | n_test | accuracy |\n|---|---|---|---|---|\n");
        for r in &report.runs {
            let budget = r.pages_per_site.map_or("all".to_string(), |p| p.to_string());
            for f in &r.folds {
                let test: Vec<String> = f.test_groups.iter().map(|g| format!("{g:?}").to_lowercase()).collect();
                s.push_str(&format!(
                    "| {budget} | {} | {} | {} | {:.4} |\n",
                    format!("{:?}", f.train_group).to_lowercase(),
                    test.join("+"),
                    f.n_test,
                    f.accuracy
                ));
            }
            s.push_str(&format!("| {budget} | mean | | | {:.4} |\n", r.mean_accuracy));
        }
        s
    })
}
