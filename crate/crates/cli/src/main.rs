mod analysis;
mod config;
mod crawl;
mod io;
mod pipeline;
mod sample;
mod sitegen;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use chrono::{DateTime, NaiveDate, Utc};
use clap::{Parser, Subcommand, ValueEnum};
use degentweb::sample::HashAlgorithm;

use crate::config::{Overrides, PipelineConfig};
use crate::io::{Reporter, UsageError};

#[derive(Parser)]
#[command(name = "degentweb", version, about = "Classify whole websites as LLM-dominant or not")]
struct Cli {
    /// Pipeline config file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Policy override (JSON): compliance thresholds, or the crawl policy for `crawl`.
    #[arg(long, global = true)]
    policy: Option<PathBuf>,
    /// Seed for the mock scorer, SVM training, shuffles and synthetic sites.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print the summary as JSON.
    #[arg(long, global = true)]
    json: bool,
    /// Scoring service base URL.
    #[arg(long, global = true, env = "DEGENTWEB_SCORER_URL")]
    scorer_url: Option<String>,
    /// Use the deterministic mock scorer regardless of other settings.
    #[arg(long, global = true)]
    mock: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Algorithm {
    Blake3,
    Sha256,
}

impl From<Algorithm> for HashAlgorithm {
    fn from(a: Algorithm) -> Self {
        match a {
            Algorithm::Blake3 => HashAlgorithm::Blake3,
            Algorithm::Sha256 => HashAlgorithm::Sha256,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
pub enum SampleMode {
    /// Pick the n names with the smallest digests.
    Hash {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum)]
        algorithm: Option<Algorithm>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Every stride-th item starting at offset.
    Stride {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long)]
        offset: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Up to n page URLs per site by hash; input holds one URL per line.
    Pages {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long, value_enum)]
        algorithm: Option<Algorithm>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Strip titles after the first colon, then pick n by SHA-256.
    Titles {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Keep English 2xx text/html index lines, one JSON record per line.
    Cdx {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum Command {
    /// Deterministic sampling of names, index files, pages and titles.
    Sample {
        #[command(subcommand)]
        mode: SampleMode,
    },
    /// Politely fetch pages of each site into a record file.
    Crawl {
        /// One URL per line; lines are grouped by host.
        #[arg(long)]
        sites: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Serve sites from `<root>/<host>/` on a virtual clock instead of the network.
        #[arg(long)]
        root: Option<PathBuf>,
        /// Virtual start time for `--root` crawls (RFC 3339).
        #[arg(long, requires = "root")]
        start: Option<DateTime<Utc>>,
    },
    /// Extract main content and apply the quality and boilerplate gates.
    Filter {
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score compliant pages with the configured detector.
    Score {
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the site classifier from scored records and site labels.
    Train {
        #[arg(long)]
        records: Option<PathBuf>,
        /// CSV with columns site,label[,group].
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Classify every site in a scored record file.
    Classify {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Out-of-distribution cross-validation over site groups.
    CrossValidate {
        #[arg(long, conflicts_with = "synthetic")]
        records: Option<PathBuf>,
        #[arg(long, required_unless_present = "synthetic")]
        labels: Option<PathBuf>,
        /// Generate, filter and mock-score a synthetic corpus instead.
        #[arg(long)]
        synthetic: bool,
        #[arg(long, default_value_t = 60)]
        n_llm: usize,
        #[arg(long, default_value_t = 60)]
        n_human: usize,
        /// Pages per site; repeat to compare several budgets.
        #[arg(long)]
        pages: Vec<usize>,
    },
    /// Prevalence by archive cohort and optional search-rank statistics.
    Report {
        #[arg(long)]
        records: Option<PathBuf>,
        /// Output of `classify --format json`.
        #[arg(long)]
        predictions: PathBuf,
        /// CSV with columns query,rank,site.
        #[arg(long)]
        search: Option<PathBuf>,
    },
    /// Detect sites whose scores drop after a cutoff, with a shuffle null.
    Transition {
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long)]
        cutoff: Option<NaiveDate>,
        #[arg(long)]
        shuffles: Option<usize>,
    },
    /// Ad and affiliate signals per site, clustered by shared IDs.
    Signals {
        #[arg(long)]
        records: Option<PathBuf>,
        /// Adblock-style list; only `##` element-hiding rules are used.
        #[arg(long)]
        easylist: Option<PathBuf>,
        /// One regex per line; replaces the built-in affiliate patterns.
        #[arg(long)]
        affiliate_patterns: Option<PathBuf>,
    },
    /// Render sites from the fixed template.
    Sitegen {
        /// Plan document (JSON).
        #[arg(long, requires_all = ["docs", "host"], conflicts_with = "synthetic")]
        plan: Option<PathBuf>,
        /// Page documents keyed by slug (JSON).
        #[arg(long)]
        docs: Option<PathBuf>,
        #[arg(long)]
        host: Option<String>,
        /// Render labeled mock sites under `<out>/<host>/`, plus urls.txt and labels.csv.
        #[arg(long, required_unless_present = "plan")]
        synthetic: bool,
        #[arg(long, default_value_t = 60)]
        n_llm: usize,
        #[arg(long, default_value_t = 60)]
        n_human: usize,
        #[arg(long)]
        out: PathBuf,
        /// Serve the rendered single site on this address until interrupted.
        #[arg(long, requires = "plan")]
        serve: Option<String>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = PipelineConfig::load(cli.config.as_deref())?;
    let overrides = Overrides {
        policy: cli.policy,
        seed: cli.seed,
        scorer_url: cli.scorer_url,
        mock: cli.mock,
    };
    cfg.apply(&overrides);
    let out = Reporter {
        json: cli.json,
        reports_dir: cfg.paths.reports.clone(),
    };
    match cli.command {
        Command::Sample { mode } => sample::run(mode, &cfg, &out),
        Command::Crawl { sites, out: path, root, start } => {
            crawl::run(&sites, &path, root.as_deref(), start, overrides.policy.as_deref(), &cfg, &out)
        }
        command => {
            if let Some(p) = &overrides.policy {
                cfg.policy = config::read_json(p)?;
            }
            match command {
                Command::Filter { records, out: path } => pipeline::filter(records, &path, &cfg, &out),
                Command::Score { records, out: path } => pipeline::score(records, &path, &cfg, &out),
                Command::Train { records, labels, model } => pipeline::train(records, &labels, model, &cfg, &out),
                Command::Classify { model, records, out: path, format } => {
                    pipeline::classify(model, records, path, format, &cfg, &out)
                }
                Command::CrossValidate { records, labels, synthetic, n_llm, n_human, pages } => {
                    let source = if synthetic {
                        pipeline::CvSource::Synthetic { n_llm, n_human, seed: overrides.seed.unwrap_or(42) }
                    } else {
                        pipeline::CvSource::Records { records, labels: labels.expect("required by clap") }
                    };
                    pipeline::cross_validate(source, &pages, &cfg, &out)
                }
                Command::Report { records, predictions, search } => {
                    analysis::report(records, &predictions, search.as_deref(), &cfg, &out)
                }
                Command::Transition { records, cutoff, shuffles } => {
                    analysis::transition(records, cutoff, shuffles, &cfg, &out)
                }
                Command::Signals { records, easylist, affiliate_patterns } => {
                    analysis::signals(records, easylist.as_deref(), affiliate_patterns.as_deref(), &cfg, &out)
                }
                Command::Sitegen { plan, docs, host, synthetic, n_llm, n_human, out: dir, serve } => {
                    let source = if synthetic {
                        sitegen::Source::Synthetic { n_llm, n_human, seed: overrides.seed.unwrap_or(42) }
                    } else {
                        sitegen::Source::Documents {
                            plan: plan.expect("required by clap"),
                            docs: docs.expect("required by clap"),
                            host: host.expect("required by clap"),
                        }
                    };
                    sitegen::run(source, &dir, serve.as_deref(), &out)
                }
                Command::Sample { .. } | Command::Crawl { .. } => unreachable!("handled above"),
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(2));
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
