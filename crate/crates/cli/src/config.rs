use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::NaiveDate;
use degentweb::analyze::default_cutoff;
use degentweb::classify::Hyperparams;
use degentweb::corpus::{MalformedPolicy, RecordStoreOptions};
use degentweb::crawl::CrawlPolicy;
use degentweb::extract::CdcParams;
use degentweb::pipeline::{FilterConfig, DEFAULT_MIN_PAGES};
use degentweb::quality::CompliancePolicy;
use degentweb::sample::HashAlgorithm;
use degentweb::scorer::{MockProfile, RemoteConfig, ScorerBackend};
use serde::{Deserialize, Serialize};

/// Everything a run needs, from one JSON file. Every field has a default,
/// so `{}` is a valid config.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub policy: CompliancePolicy,
    pub cdc: CdcParams,
    pub crawl: CrawlPolicy,
    pub scorer: ScorerBackend,
    pub sampling: SamplingConfig,
    pub classify: ClassifyConfig,
    pub analysis: AnalysisConfig,
    /// Side-car directory for oversized HTML bodies in record files.
    pub blob_dir: Option<PathBuf>,
    /// Skip malformed record lines instead of failing.
    pub skip_malformed: bool,
}

/// Fallback locations used when a subcommand's flag is omitted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub records: Option<PathBuf>,
    pub model: Option<PathBuf>,
    /// Directory that receives a copy of each analysis summary.
    pub reports: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub algorithm: HashAlgorithm,
    pub stride: usize,
    pub offset: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            algorithm: HashAlgorithm::Blake3,
            stride: 32,
            offset: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyConfig {
    /// Sites with fewer compliant scored pages are reported as insufficient.
    pub min_pages: usize,
    /// Pages per site used to build the decile vector; `null` uses all.
    pub page_cap: Option<usize>,
    pub hyperparams: Hyperparams,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            min_pages: DEFAULT_MIN_PAGES,
            page_cap: Some(DEFAULT_MIN_PAGES),
            hyperparams: Hyperparams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub cutoff: NaiveDate,
    pub shuffles: usize,
    pub shuffle_seed: u64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            cutoff: default_cutoff(),
            shuffles: 200,
            shuffle_seed: 0,
        }
    }
}

/// Command-line values that override the file.
#[derive(Debug, Default)]
pub struct Overrides {
    pub policy: Option<PathBuf>,
    pub seed: Option<u64>,
    pub scorer_url: Option<String>,
    pub mock: bool,
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => read_json(p),
            None => Ok(PipelineConfig::default()),
        }
    }

    /// Apply the seed and scorer overrides. The scorer URL (flag, or the
    /// environment variable through clap) replaces a configured backend;
    /// `--mock` wins over both.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.classify.hyperparams.seed = seed;
            self.analysis.shuffle_seed = seed;
            if let ScorerBackend::Mock { seed: s, .. } = &mut self.scorer {
                *s = seed;
            }
        }
        if let Some(url) = &o.scorer_url {
            self.scorer = match &self.scorer {
                ScorerBackend::Remote(cfg) => ScorerBackend::Remote(RemoteConfig {
                    url: url.clone(),
                    ..cfg.clone()
                }),
                ScorerBackend::Mock { .. } => ScorerBackend::Remote(RemoteConfig::new(url.clone())),
            };
        }
        if o.mock {
            if let ScorerBackend::Remote(_) = self.scorer {
                self.scorer = ScorerBackend::Mock {
                    seed: o.seed.unwrap_or(0),
                    profile: MockProfile::default(),
                };
            }
        }
    }

    pub fn filter(&self) -> FilterConfig {
        FilterConfig {
            policy: self.policy.clone(),
            cdc: self.cdc,
        }
    }

    pub fn store(&self) -> RecordStoreOptions {
        RecordStoreOptions {
            blob_dir: self.blob_dir.clone(),
            on_malformed: if self.skip_malformed {
                MalformedPolicy::Skip
            } else {
                MalformedPolicy::Fail
            },
        }
    }
}
