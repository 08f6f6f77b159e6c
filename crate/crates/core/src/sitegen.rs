//! Synthetic site rendering.
//!
//! A site plan lists exactly 20 pages; each page body is an HTML fragment
//! wrapped in one fixed template (`templates/page.html`). Page text comes
//! from a [`PageTextSource`]; the bundled mock source writes deterministic
//! prose tagged with an invisible label marker for the mock scorer.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;
use std::thread;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use regex::Regex;
use scraper::{Html, Selector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crawl::file_for_path;
use crate::extract::visible_text;
use crate::scorer::{LabelHint, HUMAN_MARKER, LLM_MARKER};

pub const PAGE_TEMPLATE: &str = include_str!("../templates/page.html");
pub const PLAN_PAGES: usize = 20;
pub const MIN_NESTED_SLUGS: usize = 6;
pub const MIN_WORDS: usize = 100;
pub const MAX_WORDS: usize = 900;
pub const MIN_INTERNAL_LINKS: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanPage {
    pub slug: String,
    pub title: String,
    pub parent_slug: Option<String>,
    pub page_type: String,
    pub instruction: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SitePlan {
    pub site_name: String,
    pub tagline: String,
    pub theme: String,
    pub footer_blurb: String,
    pub pages: Vec<PlanPage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageDoc {
    pub meta_description: String,
    pub og_type: String,
    pub hero_heading: String,
    pub body_html: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanViolation {
    Parse(String),
    PageCount(usize),
    RootCount(usize),
    TooFewNested(usize),
    DuplicateSlug(String),
    InvalidSlug(String),
}

impl fmt::Display for PlanViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanViolation::Parse(m) => write!(f, "parse: {m}"),
            PlanViolation::PageCount(n) => write!(f, "page count: {n} (need exactly {PLAN_PAGES})"),
            PlanViolation::RootCount(n) => write!(f, "root page: {n} pages with slug \"/\" (need exactly 1)"),
            PlanViolation::TooFewNested(n) => {
                write!(f, "nested slugs: {n} with two or more segments (need {MIN_NESTED_SLUGS})")
            }
            PlanViolation::DuplicateSlug(s) => write!(f, "duplicate slug {s:?}"),
            PlanViolation::InvalidSlug(s) => write!(f, "invalid slug {s:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DocProblem {
    ForbiddenTag(String),
    WordCount(usize),
    InternalLinks(usize),
}

impl fmt::Display for DocProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DocProblem::ForbiddenTag(t) => write!(f, "body contains <{t}>"),
            DocProblem::WordCount(n) => write!(f, "{n} visible words (expected {MIN_WORDS}..={MAX_WORDS})"),
            DocProblem::InternalLinks(n) => write!(f, "{n} internal links (need {MIN_INTERNAL_LINKS})"),
        }
    }
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error)]
pub enum SiteGenError {
    #[error("invalid site plan: {}", join(.0))]
    Plan(Vec<PlanViolation>),
    #[error("page {slug}: {}", join(.problems))]
    Page { slug: String, problems: Vec<DocProblem> },
    #[error("no page document for slug {0}")]
    MissingDoc(String),
    #[error("i/o error at {path}")]
    Io { path: PathBuf, source: io::Error },
}

/// Lowercase, trim, collapse repeated slashes, force a leading slash and
/// drop a trailing one.
pub fn normalize_slug(slug: &str) -> String {
    let segs: Vec<String> = slug
        .trim()
        .to_lowercase()
        .split('/')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect();
    format!("/{}", segs.join("/"))
}

fn segments(slug: &str) -> usize {
    slug.split('/').filter(|s| !s.is_empty()).count()
}

static SLUG_SEGMENT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[a-z0-9][a-z0-9._~-]*$").unwrap());

/// Parse a plan document, normalize its slugs, and check every invariant,
/// reporting all violations together.
pub fn validate_plan(json: &str) -> Result<SitePlan, SiteGenError> {
    let mut plan: SitePlan =
        serde_json::from_str(json).map_err(|e| SiteGenError::Plan(vec![PlanViolation::Parse(e.to_string())]))?;
    for p in &mut plan.pages {
        p.slug = normalize_slug(&p.slug);
        p.parent_slug = p.parent_slug.as_deref().map(normalize_slug);
    }
    let problems = plan_violations(&plan);
    if problems.is_empty() {
        Ok(plan)
    } else {
        Err(SiteGenError::Plan(problems))
    }
}

pub fn plan_violations(plan: &SitePlan) -> Vec<PlanViolation> {
    let mut v = Vec::new();
    if plan.pages.len() != PLAN_PAGES {
        v.push(PlanViolation::PageCount(plan.pages.len()));
    }
    let roots = plan.pages.iter().filter(|p| p.slug == "/").count();
    if roots != 1 {
        v.push(PlanViolation::RootCount(roots));
    }
    let nested = plan.pages.iter().filter(|p| segments(&p.slug) >= 2).count();
    if nested < MIN_NESTED_SLUGS {
        v.push(PlanViolation::TooFewNested(nested));
    }
    let mut seen = BTreeSet::new();
    let mut reported = BTreeSet::new();
    for p in &plan.pages {
        if !seen.insert(p.slug.as_str()) && reported.insert(p.slug.as_str()) {
            v.push(PlanViolation::DuplicateSlug(p.slug.clone()));
        }
        if !p.slug.starts_with('/') || !p.slug.split('/').skip(1).filter(|s| !s.is_empty()).all(|s| SLUG_SEGMENT.is_match(s)) {
            v.push(PlanViolation::InvalidSlug(p.slug.clone()));
        }
    }
    v
}

impl SitePlan {
    pub fn slugs(&self) -> BTreeSet<String> {
        self.pages.iter().map(|p| p.slug.clone()).collect()
    }

    /// Root plus single-segment slugs, in plan order.
    pub fn top_level(&self) -> Vec<&PlanPage> {
        self.pages.iter().filter(|p| segments(&p.slug) <= 1).collect()
    }

    pub fn page(&self, slug: &str) -> Option<&PlanPage> {
        self.pages.iter().find(|p| p.slug == slug)
    }
}

static FORBIDDEN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)<\s*/?\s*(html|head|body|main|header|footer)\b").unwrap());
static ANCHOR: LazyLock<Selector> = LazyLock::new(|| Selector::parse("a[href]").unwrap());
static ROOT: LazyLock<url::Url> = LazyLock::new(|| url::Url::parse("http://site.invalid/").unwrap());

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocCheck {
    pub word_count: usize,
    pub internal_links: usize,
    pub problems: Vec<DocProblem>,
}

pub fn visible_word_count(fragment: &str) -> usize {
    visible_text(fragment.as_bytes()).split_whitespace().count()
}

/// Anchors whose href, resolved against the site root, lands on a plan slug.
pub fn internal_link_count(fragment: &str, slugs: &BTreeSet<String>) -> usize {
    let doc = Html::parse_fragment(fragment);
    doc.select(&ANCHOR)
        .filter_map(|a| a.value().attr("href"))
        .filter_map(|h| ROOT.join(h).ok())
        .filter(|u| u.host_str() == ROOT.host_str())
        .filter(|u| slugs.contains(&normalize_slug(u.path())))
        .count()
}

pub fn check_doc(doc: &PageDoc, slugs: &BTreeSet<String>) -> DocCheck {
    let mut problems: Vec<DocProblem> = FORBIDDEN
        .captures_iter(&doc.body_html)
        .map(|c| c[1].to_lowercase())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(DocProblem::ForbiddenTag)
        .collect();
    let word_count = visible_word_count(&doc.body_html);
    if !(MIN_WORDS..=MAX_WORDS).contains(&word_count) {
        problems.push(DocProblem::WordCount(word_count));
    }
    let internal_links = internal_link_count(&doc.body_html, slugs);
    if internal_links < MIN_INTERNAL_LINKS {
        problems.push(DocProblem::InternalLinks(internal_links));
    }
    DocCheck {
        word_count,
        internal_links,
        problems,
    }
}

/// How to treat the loose word-count bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strictness {
    /// Every problem is an error (mock output).
    #[default]
    Strict,
    /// Word count outside the bound is only logged (external documents).
    WarnWordCount,
}

pub fn html_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

static PLACEHOLDER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{\{(\w+)\}\}").unwrap());

fn theme_class(theme: &str) -> String {
    let t: String = theme
        .to_lowercase()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
        .collect();
    t.trim_matches('-').to_string()
}

fn nav_html(plan: &SitePlan) -> String {
    plan.top_level()
        .iter()
        .map(|p| format!("<a href=\"{}\">{}</a>", html_escape(&p.slug), html_escape(&p.title)))
        .collect::<Vec<_>>()
        .join(" ")
}

/// One page: the fixed template with a single substitution pass.
pub fn render_page(plan: &SitePlan, page: &PlanPage, doc: &PageDoc) -> String {
    let nav = nav_html(plan);
    PLACEHOLDER
        .replace_all(PAGE_TEMPLATE, |c: &regex::Captures<'_>| match &c[1] {
            "title" => html_escape(&page.title),
            "site_name" => html_escape(&plan.site_name),
            "meta_description" => html_escape(&doc.meta_description),
            "og_type" => html_escape(&doc.og_type),
            "theme" => theme_class(&plan.theme),
            "tagline" => html_escape(&plan.tagline),
            "nav" => nav.clone(),
            "hero_heading" => html_escape(&doc.hero_heading),
            "body" => doc.body_html.clone(),
            "footer_blurb" => html_escape(&plan.footer_blurb),
            other => panic!("template placeholder {other} has no value"),
        })
        .into_owned()
}

/// Render every plan page; `docs` must cover each slug.
pub fn render_site(
    plan: &SitePlan,
    docs: &BTreeMap<String, PageDoc>,
    strictness: Strictness,
) -> Result<BTreeMap<String, String>, SiteGenError> {
    let problems = plan_violations(plan);
    if !problems.is_empty() {
        return Err(SiteGenError::Plan(problems));
    }
    let slugs = plan.slugs();
    plan.pages
        .par_iter()
        .map(|page| {
            let doc = docs
                .get(&page.slug)
                .ok_or_else(|| SiteGenError::MissingDoc(page.slug.clone()))?;
            let mut problems = check_doc(doc, &slugs).problems;
            if strictness == Strictness::WarnWordCount {
                problems.retain(|p| {
                    let keep = !matches!(p, DocProblem::WordCount(_));
                    if !keep {
                        log::warn!("page {}: {p}", page.slug);
                    }
                    keep
                });
            }
            if !problems.is_empty() {
                return Err(SiteGenError::Page {
                    slug: page.slug.clone(),
                    problems,
                });
            }
            Ok((page.slug.clone(), render_page(plan, page, doc)))
        })
        .collect()
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> SiteGenError + '_ {
    move |source| SiteGenError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Write `dir/<slug>/index.html` per page plus `robots.txt` and `sitemap.xml`.
pub fn write_site(dir: &Path, host: &str, pages: &BTreeMap<String, String>) -> Result<(), SiteGenError> {
    for (slug, html) in pages {
        let file = file_for_path(dir, slug).ok_or_else(|| SiteGenError::MissingDoc(slug.clone()))?;
        if let Some(parent) = file.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        fs::write(&file, html).map_err(io_err(&file))?;
    }
    let robots = dir.join("robots.txt");
    fs::write(&robots, format!("User-agent: *\nAllow: /\n\nSitemap: https://{host}/sitemap.xml\n"))
        .map_err(io_err(&robots))?;
    let mut xml = String::from(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<urlset xmlns=\"http://www.sitemaps.org/schemas/sitemap/0.9\">\n",
    );
    for slug in pages.keys() {
        xml.push_str(&format!("  <url><loc>https://{host}{}</loc></url>\n", html_escape(slug)));
    }
    xml.push_str("</urlset>\n");
    let sitemap = dir.join("sitemap.xml");
    fs::write(&sitemap, xml).map_err(io_err(&sitemap))
}

/// Produces the page document for one plan page.
pub trait PageTextSource: Sync {
    fn page_doc(&self, plan: &SitePlan, page: &PlanPage) -> Result<PageDoc, SiteGenError>;
}

pub struct MockTextSource {
    pub seed: u64,
    pub label: LabelHint,
}

impl PageTextSource for MockTextSource {
    fn page_doc(&self, _plan: &SitePlan, page: &PlanPage) -> Result<PageDoc, SiteGenError> {
        Ok(mock_page_text(&page.slug, self.seed, self.label))
    }
}

/// Run a text source over a plan.
pub fn generate_docs(plan: &SitePlan, source: &dyn PageTextSource) -> Result<BTreeMap<String, PageDoc>, SiteGenError> {
    plan.pages
        .par_iter()
        .map(|p| Ok((p.slug.clone(), source.page_doc(plan, p)?)))
        .collect()
}

const ADJECTIVES: &[&str] = &[
    "careful", "simple", "reliable", "seasonal", "durable", "practical", "modest", "patient", "bright", "quiet",
    "sturdy", "gentle", "steady", "local", "honest", "curious", "humble", "rugged", "flexible", "familiar",
    "useful", "natural", "ordinary", "early", "narrow", "generous", "compact", "rural", "coastal", "fragile",
    "historic", "colorful", "precise", "thoughtful", "regular", "clever", "hidden", "robust", "cheerful", "frugal",
];
const NOUNS: &[&str] = &[
    "garden", "kitchen", "bicycle", "notebook", "window", "recipe", "budget", "harbor", "meadow", "library",
    "workshop", "compass", "lantern", "orchard", "village", "journey", "blanket", "ladder", "market", "pottery",
    "bridge", "forest", "teapot", "engine", "canvas", "river", "cabinet", "hammer", "festival", "balcony",
    "cottage", "saddle", "telescope", "quilt", "barrel", "glacier", "pantry", "carpet", "anchor", "chimney",
    "trellis", "schedule", "ledger", "backpack", "sourdough", "fence", "pond", "mailbox", "skillet", "greenhouse",
    "tractor", "violin", "sketchbook", "terrace", "compost", "workbench", "harvest", "kettle", "lighthouse", "porch",
];
const VERBS: &[&str] = &[
    "supports", "improves", "protects", "shapes", "reveals", "balances", "changes", "guides", "extends", "softens",
    "complements", "strengthens", "organizes", "simplifies", "frames", "anchors", "brightens", "shelters", "connects",
    "sustains", "steadies", "refreshes", "outlasts", "rewards", "invites", "tolerates", "replaces", "matches",
    "limits", "follows",
];
const ADVERBS: &[&str] = &[
    "quietly", "steadily", "usually", "rarely", "gradually", "easily", "often", "slowly", "clearly", "gently",
    "seldom", "reliably", "mostly", "certainly", "briefly", "partly",
];
const PEOPLE: &[&str] = &[
    "beginners", "neighbors", "families", "students", "travelers", "volunteers", "collectors", "gardeners",
    "builders", "readers", "cooks", "parents", "hikers", "visitors",
];
const FRAMES: &[&str] = &[
    "The {adj} {noun} {verb} the {noun2} when {people} pay attention to {adj2} details.",
    "Most {people} find that a {adj} {noun} {adv} {verb} their {noun2}.",
    "A {noun} with {adj} edges {verb} any {noun2} near the {noun3}.",
    "When the {noun} is {adj}, the {noun2} {adv} {verb} the rest of the {noun3}.",
    "We have seen {people} keep a {adj} {noun} beside the {noun2} for years.",
    "It helps to compare the {noun} and the {noun2} before choosing a {adj} {noun3}.",
    "Nobody expects a {adj} {noun} to {verb_base} a {noun2} on its own.",
    "Our {adj} {noun} {verb} the {noun2}, and that matters to {people}.",
    "Before winter, {people} check whether the {noun} still {verb} the {adj} {noun2}.",
    "There is no single {adj} {noun}; each {noun2} {adv} {verb} a different {noun3}.",
    "You can pair a {adj} {noun} with an old {noun2} without much trouble.",
    "Some {people} argue that the {noun} {verb} the {noun2} better than a {adj} {noun3}.",
    "If your {noun} feels {adj}, try moving the {noun2} closer to the {noun3}.",
    "For {people}, the {adj} {noun} {adv} {verb} every {noun2} in the {noun3}.",
    "Over time the {noun} becomes {adj} and {verb} the {noun2} with little effort.",
    "Keep the {noun} away from the {noun2} so that it stays {adj} through the season.",
    "This {noun} {verb} the {adj} {noun2} because {people} tend to use it {adv}.",
    "Think of the {noun} as a {adj} {noun2} that {adv} {verb} the {noun3}.",
];

fn pick<'a>(rng: &mut ChaCha8Rng, list: &[&'a str]) -> &'a str {
    list[rng.gen_range(0..list.len())]
}

fn sentence(rng: &mut ChaCha8Rng, topic: &str) -> String {
    let frame = pick(rng, FRAMES);
    let mut s = PLACEHOLDER_SLOT
        .replace_all(frame, |c: &regex::Captures<'_>| match &c[1] {
            "adj" | "adj2" => pick(rng, ADJECTIVES).to_string(),
            "noun" => {
                if rng.gen_bool(0.3) {
                    topic.to_string()
                } else {
                    pick(rng, NOUNS).to_string()
                }
            }
            "noun2" | "noun3" => pick(rng, NOUNS).to_string(),
            "verb" => pick(rng, VERBS).to_string(),
            "verb_base" => pick(rng, VERBS).trim_end_matches('s').to_string(),
            "adv" => pick(rng, ADVERBS).to_string(),
            "people" => pick(rng, PEOPLE).to_string(),
            other => unreachable!("unknown slot {other}"),
        })
        .into_owned();
    if let Some(first) = s.get(..1) {
        s.replace_range(..1, &first.to_uppercase());
    }
    s
}

fn five_grams(s: &str) -> Vec<String> {
    let words: Vec<String> = s
        .split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .collect();
    words.windows(5).map(|w| w.join(" ")).collect()
}

/// Draw sentences until one shares no 5-gram with the page so far, so
/// repeated frames cannot trip the duplicate n-gram rules.
fn fresh_sentence(rng: &mut ChaCha8Rng, topic: &str, seen: &mut HashSet<String>) -> String {
    let mut s = sentence(rng, topic);
    for _ in 0..64 {
        if five_grams(&s).iter().all(|g| !seen.contains(g)) {
            break;
        }
        s = sentence(rng, topic);
    }
    seen.extend(five_grams(&s));
    s
}

static PLACEHOLDER_SLOT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{(\w+)\}").unwrap());

pub fn title_from_slug(slug: &str) -> String {
    let last = slug.rsplit('/').find(|s| !s.is_empty()).unwrap_or("home");
    last.split('-')
        .filter(|w| !w.is_empty())
        .map(|w| {
            let mut c = w.chars();
            match c.next() {
                Some(f) => f.to_uppercase().chain(c).collect::<String>(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn parent_of(slug: &str) -> String {
    match slug.rsplit_once('/') {
        Some((head, _)) if !head.is_empty() => head.to_string(),
        _ => "/".to_string(),
    }
}

fn page_rng(slug: &str, seed: u64) -> ChaCha8Rng {
    let mut h = blake3::Hasher::new();
    h.update(&seed.to_le_bytes());
    h.update(slug.as_bytes());
    ChaCha8Rng::from_seed(*h.finalize().as_bytes())
}

/// Deterministic prose for one page, 250 to 600 words in paragraphs of
/// similar length, with links to the home page and the parent page. The
/// two labels produce identical text apart from the leading marker.
pub fn mock_page_text(slug: &str, seed: u64, label: LabelHint) -> PageDoc {
    let mut rng = page_rng(slug, seed);
    let title = title_from_slug(slug);
    let topic = slug
        .rsplit('/')
        .find(|s| !s.is_empty())
        .and_then(|s| s.split('-').next())
        .filter(|s| s.len() >= 3)
        .unwrap_or("home")
        .to_string();
    let target_words = rng.gen_range(280..=520);
    let mut paragraphs: Vec<String> = Vec::new();
    let mut seen = HashSet::new();
    let mut words = 0;
    while words < target_words {
        let n = rng.gen_range(4..=5);
        let p: Vec<String> = (0..n).map(|_| fresh_sentence(&mut rng, &topic, &mut seen)).collect();
        let p = p.join(" ");
        words += p.split_whitespace().count();
        paragraphs.push(p);
    }
    let marker = match label {
        LabelHint::Llm => LLM_MARKER,
        LabelHint::Human => HUMAN_MARKER,
    };
    let parent = parent_of(slug);
    let closing = format!(
        "For more background, start from the <a href=\"/\">home page</a> or return to <a href=\"{}\">{}</a>, \
         where related notes about the {} are collected.",
        html_escape(&parent),
        html_escape(&if parent == "/" { "the overview".to_string() } else { title_from_slug(&parent) }),
        html_escape(&topic),
    );
    let mut body = String::new();
    for (i, p) in paragraphs.iter().enumerate() {
        body.push_str("<p>");
        if i == 0 {
            body.push(marker);
        }
        body.push_str(&html_escape(p));
        if i + 1 == paragraphs.len() {
            body.push(' ');
            body.push_str(&closing);
        }
        body.push_str("</p>\n");
    }
    let meta_description = paragraphs[0]
        .split_inclusive('.')
        .next()
        .unwrap_or_default()
        .trim()
        .to_string();
    PageDoc {
        meta_description,
        og_type: if slug == "/" { "website" } else { "article" }.into(),
        hero_heading: title,
        body_html: body,
    }
}

const SECTIONS: &[&str] = &[
    "guides", "reviews", "recipes", "projects", "journal", "basics", "tools", "seasons", "stories", "resources",
];

/// A valid 20-page plan: home, five sections, fourteen nested pages.
pub fn mock_site_plan(site_name: &str, seed: u64) -> SitePlan {
    let mut rng = page_rng(site_name, seed);
    let mut sections = SECTIONS.to_vec();
    sections.shuffle(&mut rng);
    let mut nouns = NOUNS.to_vec();
    nouns.shuffle(&mut rng);
    let mut nouns = nouns.into_iter();
    let mut pages = vec![PlanPage {
        slug: "/".into(),
        title: "Home".into(),
        parent_slug: None,
        page_type: "home".into(),
        instruction: format!("Introduce {site_name} and its sections."),
    }];
    for (i, section) in sections.iter().take(5).enumerate() {
        let slug = format!("/{section}");
        pages.push(PlanPage {
            slug: slug.clone(),
            title: title_from_slug(&slug),
            parent_slug: Some("/".into()),
            page_type: "section".into(),
            instruction: format!("Overview of the {section} section."),
        });
        for _ in 0..if i < 4 { 3 } else { 2 } {
            let a = nouns.next().expect("enough nouns");
            let b = pick(&mut rng, ADJECTIVES);
            let child = format!("{slug}/{a}-{b}");
            pages.push(PlanPage {
                title: title_from_slug(&child),
                slug: child,
                parent_slug: Some(slug.clone()),
                page_type: "article".into(),
                instruction: format!("Write about the {b} {a}."),
            });
        }
    }
    SitePlan {
        site_name: site_name.into(),
        tagline: format!("Notes and ideas from {site_name}"),
        theme: pick(&mut rng, &["light", "earth", "ocean", "paper"]).into(),
        footer_blurb: format!("{site_name} is an independent site. All pages are written for curious readers."),
        pages,
    }
}

/// Plan, mock text and rendering for one synthetic site.
pub fn mock_site(site_name: &str, seed: u64, label: LabelHint) -> Result<(SitePlan, BTreeMap<String, String>), SiteGenError> {
    let plan = mock_site_plan(site_name, seed);
    let docs = generate_docs(&plan, &MockTextSource { seed, label })?;
    let pages = render_site(&plan, &docs, Strictness::Strict)?;
    Ok((plan, pages))
}

/// Static file server over one rendered site directory, for crawl tests.
pub struct StaticServer {
    server: std::sync::Arc<tiny_http::Server>,
    handle: Option<thread::JoinHandle<()>>,
    pub addr: std::net::SocketAddr,
}

impl StaticServer {
    pub fn start(site_dir: impl Into<PathBuf>, addr: &str) -> io::Result<Self> {
        let root: PathBuf = site_dir.into();
        let server = tiny_http::Server::http(addr).map_err(io::Error::other)?;
        let server = std::sync::Arc::new(server);
        let local = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| io::Error::other("not an IP listener"))?;
        let worker = server.clone();
        let handle = thread::spawn(move || {
            for req in worker.incoming_requests() {
                let path = req.url().split('?').next().unwrap_or("/").to_string();
                let resp = match file_for_path(&root, &path).and_then(|f| fs::read(&f).ok().map(|b| (f, b))) {
                    Some((f, body)) => {
                        let ctype = match f.extension().and_then(|e| e.to_str()) {
                            Some("xml") => "application/xml",
                            Some("txt") => "text/plain; charset=utf-8",
                            _ => "text/html; charset=utf-8",
                        };
                        tiny_http::Response::from_data(body).with_header(
                            tiny_http::Header::from_bytes("Content-Type", ctype).expect("static header"),
                        )
                    }
                    None => tiny_http::Response::from_data(b"not found".to_vec()).with_status_code(404),
                };
                let _ = req.respond(resp);
            }
        });
        Ok(StaticServer {
            server,
            handle: Some(handle),
            addr: local,
        })
    }
}

impl Drop for StaticServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
