//! Page compliance gates.
//!
//! A page is compliant when its extracted text is English, has at least
//! `min_tokens` tokens, shares no more than `dup_cap` of its bytes with other
//! pages of the same site, and passes the relaxed Gopher rule set. The
//! Gopher rules run on the NoPunc-cleaned text; the NoPunc removal fraction
//! is reported but never used to reject a page.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::PageRecord;

#[derive(Debug, Error)]
pub enum QualityError {
    #[error("page {0} has no extracted text")]
    MissingText(String),
    #[error("token counting failed: {0}")]
    TokenCount(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
}

/// Line terminators that survive NoPunc cleaning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalSet {
    /// `: ? ! " ” .`
    #[default]
    Extended,
    /// `: ? ! ”` only.
    Literal,
}

impl TerminalSet {
    pub fn contains(self, c: char) -> bool {
        match self {
            TerminalSet::Extended => matches!(c, ':' | '?' | '!' | '"' | '\u{201D}' | '.'),
            TerminalSet::Literal => matches!(c, ':' | '?' | '!' | '\u{201D}'),
        }
    }
}

/// Keep lines whose last non-whitespace character is a terminal mark.
/// Returns the cleaned text and the fraction of lines removed.
pub fn clean_nopunc(text: &str, terminals: TerminalSet) -> (String, f64) {
    let mut kept = Vec::new();
    let mut total = 0usize;
    for line in text.lines() {
        total += 1;
        if line.trim_end().chars().last().is_some_and(|c| terminals.contains(c)) {
            kept.push(line);
        }
    }
    if total == 0 {
        return (String::new(), 0.0);
    }
    let removed = (total - kept.len()) as f64 / total as f64;
    (kept.join("\n"), removed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GopherThresholds {
    pub max_frac_chars_top_bigram: f64,
    pub max_frac_chars_top_trigram: f64,
    pub max_frac_chars_top_4gram: f64,
    pub max_frac_chars_dup_5gram: f64,
    pub max_frac_chars_dup_6gram: f64,
    pub max_frac_chars_dup_7gram: f64,
    pub max_frac_chars_dup_8gram: f64,
    pub max_frac_chars_dup_9gram: f64,
    pub max_frac_chars_dup_10gram: f64,
    pub min_words: usize,
    pub max_words: usize,
    pub min_median_word_len: f64,
    pub max_median_word_len: f64,
    pub max_symbol_word_ratio: f64,
    pub min_frac_alpha_words: f64,
    pub required_words: Vec<String>,
    pub min_required_word_hits: usize,
    pub max_frac_bullet_lines: f64,
    pub max_frac_ellipsis_lines: f64,
    pub max_frac_dup_lines: f64,
    pub max_frac_chars_in_dup_lines: f64,
}

impl Default for GopherThresholds {
    fn default() -> Self {
        GopherThresholds {
            max_frac_chars_top_bigram: 0.20,
            max_frac_chars_top_trigram: 0.18,
            max_frac_chars_top_4gram: 0.16,
            max_frac_chars_dup_5gram: 0.15,
            max_frac_chars_dup_6gram: 0.14,
            max_frac_chars_dup_7gram: 0.13,
            max_frac_chars_dup_8gram: 0.12,
            max_frac_chars_dup_9gram: 0.11,
            max_frac_chars_dup_10gram: 0.10,
            min_words: 50,
            max_words: 100_000,
            min_median_word_len: 3.0,
            max_median_word_len: 10.0,
            max_symbol_word_ratio: 0.10,
            min_frac_alpha_words: 0.80,
            required_words: ["the", "be", "to", "of", "and", "that", "have", "with"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            min_required_word_hits: 2,
            max_frac_bullet_lines: 0.90,
            max_frac_ellipsis_lines: 0.30,
            max_frac_dup_lines: 0.30,
            max_frac_chars_in_dup_lines: 0.30,
        }
    }
}

impl GopherThresholds {
    fn top_ngram_limit(&self, n: usize) -> f64 {
        match n {
            2 => self.max_frac_chars_top_bigram,
            3 => self.max_frac_chars_top_trigram,
            4 => self.max_frac_chars_top_4gram,
            _ => unreachable!("top n-gram rules cover n in 2..=4"),
        }
    }

    fn dup_ngram_limit(&self, n: usize) -> f64 {
        match n {
            5 => self.max_frac_chars_dup_5gram,
            6 => self.max_frac_chars_dup_6gram,
            7 => self.max_frac_chars_dup_7gram,
            8 => self.max_frac_chars_dup_8gram,
            9 => self.max_frac_chars_dup_9gram,
            10 => self.max_frac_chars_dup_10gram,
            _ => unreachable!("duplicate n-gram rules cover n in 5..=10"),
        }
    }

    pub fn validate(&self) -> Result<(), QualityError> {
        let fractions = [
            self.max_frac_chars_top_bigram,
            self.max_frac_chars_top_trigram,
            self.max_frac_chars_top_4gram,
            self.max_frac_chars_dup_5gram,
            self.max_frac_chars_dup_6gram,
            self.max_frac_chars_dup_7gram,
            self.max_frac_chars_dup_8gram,
            self.max_frac_chars_dup_9gram,
            self.max_frac_chars_dup_10gram,
            self.min_frac_alpha_words,
            self.max_frac_bullet_lines,
            self.max_frac_ellipsis_lines,
            self.max_frac_dup_lines,
            self.max_frac_chars_in_dup_lines,
        ];
        if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(QualityError::InvalidPolicy("gopher fractions must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Identifier of a failed Gopher rule. Names match the threshold fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GopherRule {
    MaxFracCharsTopBigram,
    MaxFracCharsTopTrigram,
    #[serde(rename = "max_frac_chars_top_4gram")]
    MaxFracCharsTop4gram,
    #[serde(rename = "max_frac_chars_dup_5gram")]
    MaxFracCharsDup5gram,
    #[serde(rename = "max_frac_chars_dup_6gram")]
    MaxFracCharsDup6gram,
    #[serde(rename = "max_frac_chars_dup_7gram")]
    MaxFracCharsDup7gram,
    #[serde(rename = "max_frac_chars_dup_8gram")]
    MaxFracCharsDup8gram,
    #[serde(rename = "max_frac_chars_dup_9gram")]
    MaxFracCharsDup9gram,
    #[serde(rename = "max_frac_chars_dup_10gram")]
    MaxFracCharsDup10gram,
    MinWords,
    MaxWords,
    MinMedianWordLen,
    MaxMedianWordLen,
    MaxSymbolWordRatio,
    MinFracAlphaWords,
    MinRequiredWordHits,
    MaxFracBulletLines,
    MaxFracEllipsisLines,
    MaxFracDupLines,
    MaxFracCharsInDupLines,
}

impl GopherRule {
    fn top_ngram(n: usize) -> Self {
        match n {
            2 => GopherRule::MaxFracCharsTopBigram,
            3 => GopherRule::MaxFracCharsTopTrigram,
            _ => GopherRule::MaxFracCharsTop4gram,
        }
    }

    fn dup_ngram(n: usize) -> Self {
        match n {
            5 => GopherRule::MaxFracCharsDup5gram,
            6 => GopherRule::MaxFracCharsDup6gram,
            7 => GopherRule::MaxFracCharsDup7gram,
            8 => GopherRule::MaxFracCharsDup8gram,
            9 => GopherRule::MaxFracCharsDup9gram,
            _ => GopherRule::MaxFracCharsDup10gram,
        }
    }
}

impl fmt::Display for GopherRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("rule serializes");
        write!(f, "{}", s.as_str().unwrap_or_default())
    }
}

/// Raw values behind each Gopher rule.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct GopherStats {
    pub total_chars: usize,
    pub n_words: usize,
    /// Index `n - 2` for n in 2..=4.
    pub top_ngram_frac: [f64; 3],
    /// Index `n - 5` for n in 5..=10.
    pub dup_ngram_frac: [f64; 6],
    pub median_word_len: Option<f64>,
    pub symbol_word_ratio: Option<f64>,
    pub frac_alpha_words: Option<f64>,
    pub required_word_hits: usize,
    pub n_lines: usize,
    pub frac_bullet_lines: f64,
    pub frac_ellipsis_lines: f64,
    pub frac_dup_lines: f64,
    pub frac_chars_in_dup_lines: f64,
}

fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Words interned to ids, with their character lengths, so n-gram tables
/// hash small integer slices rather than strings.
struct Interned {
    ids: Vec<u32>,
    lens: Vec<usize>,
}

impl Interned {
    fn new(words: &[&str]) -> Self {
        let mut table: HashMap<&str, u32> = HashMap::new();
        let ids = words
            .iter()
            .map(|w| {
                let next = table.len() as u32;
                *table.entry(w).or_insert(next)
            })
            .collect();
        Interned {
            ids,
            lens: words.iter().map(|w| char_len(w)).collect(),
        }
    }

    /// Characters of the n-gram starting at `i`, counting the single spaces
    /// that join its words.
    fn gram_chars(&self, i: usize, n: usize) -> usize {
        self.lens[i..i + n].iter().sum::<usize>() + n.saturating_sub(1)
    }

    fn ngram_counts(&self, n: usize) -> HashMap<&[u32], usize> {
        let mut counts = HashMap::new();
        if self.ids.len() >= n {
            for gram in self.ids.windows(n) {
                *counts.entry(gram).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Characters in the most common n-gram times its count. Ties on count go
    /// to the longer n-gram.
    fn top_ngram_chars(&self, n: usize) -> usize {
        let counts = self.ngram_counts(n);
        (0..self.ids.len().saturating_sub(n - 1))
            .map(|i| (counts[&self.ids[i..i + n]], self.gram_chars(i, n)))
            .max()
            .map(|(count, chars)| count * chars)
            .unwrap_or(0)
    }

    /// Characters covered by n-grams that occur at least twice, scanning left
    /// to right and jumping past each covered n-gram so no word is counted
    /// twice.
    fn dup_ngram_chars(&self, n: usize) -> usize {
        let counts = self.ngram_counts(n);
        let mut covered = 0;
        let mut i = 0;
        while i + n <= self.ids.len() {
            if counts[&self.ids[i..i + n]] >= 2 {
                covered += self.gram_chars(i, n);
                i += n;
            } else {
                i += 1;
            }
        }
        covered
    }
}

fn median(sorted: &[usize]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2] as f64),
        _ => Some((sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0),
    }
}

fn bare_word(word: &str) -> String {
    word.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase()
}

pub fn gopher_stats(text: &str, required_words: &[String]) -> GopherStats {
    let total_chars = char_len(text);
    let words: Vec<&str> = text.split_whitespace().collect();
    let n_words = words.len();
    let frac = |num: usize| if total_chars == 0 { 0.0 } else { num as f64 / total_chars as f64 };

    let interned = Interned::new(&words);
    let mut top_ngram_frac = [0.0; 3];
    for n in 2..=4 {
        top_ngram_frac[n - 2] = frac(interned.top_ngram_chars(n));
    }
    let mut dup_ngram_frac = [0.0; 6];
    for n in 5..=10 {
        dup_ngram_frac[n - 5] = frac(interned.dup_ngram_chars(n));
    }

    let mut lens: Vec<usize> = words.iter().map(|w| char_len(w)).collect();
    lens.sort_unstable();
    let per_word = |num: usize| (n_words > 0).then(|| num as f64 / n_words as f64);
    let symbols = text.matches('#').count() + text.matches("...").count() + text.matches('\u{2026}').count();
    let alpha = words.iter().filter(|w| w.chars().any(char::is_alphabetic)).count();
    let required: HashSet<&str> = required_words.iter().map(String::as_str).collect();
    let required_word_hits = words
        .iter()
        .filter(|w| required.contains(bare_word(w).as_str()))
        .count();

    let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let n_lines = lines.len();
    let line_frac = |num: usize| if n_lines == 0 { 0.0 } else { num as f64 / n_lines as f64 };
    let bullets = lines
        .iter()
        .filter(|l| l.starts_with(['\u{2022}', '-', '*', '\u{2023}']))
        .count();
    let ellipses = lines
        .iter()
        .filter(|l| l.ends_with("...") || l.ends_with('\u{2026}'))
        .count();
    let mut line_counts: HashMap<&str, usize> = HashMap::new();
    for l in &lines {
        *line_counts.entry(l).or_insert(0) += 1;
    }
    let (dup_lines, dup_line_chars) = line_counts
        .iter()
        .filter(|(_, &c)| c > 1)
        .fold((0, 0), |(n, ch), (l, &c)| (n + c, ch + c * char_len(l)));

    GopherStats {
        total_chars,
        n_words,
        top_ngram_frac,
        dup_ngram_frac,
        median_word_len: median(&lens),
        symbol_word_ratio: per_word(symbols),
        frac_alpha_words: per_word(alpha),
        required_word_hits,
        n_lines,
        frac_bullet_lines: line_frac(bullets),
        frac_ellipsis_lines: line_frac(ellipses),
        frac_dup_lines: line_frac(dup_lines),
        frac_chars_in_dup_lines: frac(dup_line_chars),
    }
}

/// Evaluate every rule against NoPunc-cleaned text. Returns whether the text
/// passes and the rules that failed, in rule order.
pub fn gopher_check(cleaned: &str, t: &GopherThresholds) -> (bool, Vec<GopherRule>) {
    let s = gopher_stats(cleaned, &t.required_words);
    let mut failed = Vec::new();
    for n in 2..=4 {
        if s.top_ngram_frac[n - 2] > t.top_ngram_limit(n) {
            failed.push(GopherRule::top_ngram(n));
        }
    }
    for n in 5..=10 {
        if s.dup_ngram_frac[n - 5] > t.dup_ngram_limit(n) {
            failed.push(GopherRule::dup_ngram(n));
        }
    }
    if s.n_words < t.min_words {
        failed.push(GopherRule::MinWords);
    }
    if s.n_words > t.max_words {
        failed.push(GopherRule::MaxWords);
    }
    if let Some(m) = s.median_word_len {
        if m < t.min_median_word_len {
            failed.push(GopherRule::MinMedianWordLen);
        }
        if m > t.max_median_word_len {
            failed.push(GopherRule::MaxMedianWordLen);
        }
    }
    if s.symbol_word_ratio.is_some_and(|r| r > t.max_symbol_word_ratio) {
        failed.push(GopherRule::MaxSymbolWordRatio);
    }
    if s.frac_alpha_words.is_some_and(|r| r < t.min_frac_alpha_words) {
        failed.push(GopherRule::MinFracAlphaWords);
    }
    if s.required_word_hits < t.min_required_word_hits {
        failed.push(GopherRule::MinRequiredWordHits);
    }
    if s.frac_bullet_lines > t.max_frac_bullet_lines {
        failed.push(GopherRule::MaxFracBulletLines);
    }
    if s.frac_ellipsis_lines > t.max_frac_ellipsis_lines {
        failed.push(GopherRule::MaxFracEllipsisLines);
    }
    if s.frac_dup_lines > t.max_frac_dup_lines {
        failed.push(GopherRule::MaxFracDupLines);
    }
    if s.frac_chars_in_dup_lines > t.max_frac_chars_in_dup_lines {
        failed.push(GopherRule::MaxFracCharsInDupLines);
    }
    (failed.is_empty(), failed)
}

/// Counts tokens for the minimum-length gate.
pub trait TokenCounter: Send + Sync {
    fn count_tokens(&self, text: &str) -> Result<u64, QualityError>;
}

/// Maximal runs of letters/digits, plus every other non-whitespace character
/// as a token of its own.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicTokenCounter;

impl TokenCounter for HeuristicTokenCounter {
    fn count_tokens(&self, text: &str) -> Result<u64, QualityError> {
        Ok(heuristic_token_count(text))
    }
}

pub fn heuristic_token_count(text: &str) -> u64 {
    let mut count = 0;
    let mut in_word = false;
    for c in text.chars() {
        if c.is_alphanumeric() {
            if !in_word {
                count += 1;
                in_word = true;
            }
        } else {
            in_word = false;
            if !c.is_whitespace() {
                count += 1;
            }
        }
    }
    count
}

pub const ENGLISH_STOPWORDS: [&str; 50] = [
    "the", "of", "and", "to", "a", "in", "is", "it", "you", "that", "he", "was", "for", "on",
    "are", "with", "as", "i", "his", "they", "be", "at", "one", "have", "this", "from", "or",
    "had", "by", "not", "but", "what", "some", "we", "can", "out", "other", "were", "all",
    "there", "when", "up", "use", "your", "how", "an", "which", "do", "their", "if",
];

pub fn stopword_fraction(text: &str) -> Option<f64> {
    let words: Vec<String> = text.split_whitespace().map(bare_word).collect();
    if words.is_empty() {
        return None;
    }
    let hits = words.iter().filter(|w| ENGLISH_STOPWORDS.contains(&w.as_str())).count();
    Some(hits as f64 / words.len() as f64)
}

pub fn is_english(text: &str, min_frac: f64) -> bool {
    stopword_fraction(text).is_some_and(|f| f >= min_frac)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompliancePolicy {
    pub min_tokens: u64,
    pub dup_cap: f64,
    pub gopher: GopherThresholds,
    pub english_min_stopword_frac: f64,
    pub nopunc_terminals: TerminalSet,
}

impl Default for CompliancePolicy {
    fn default() -> Self {
        CompliancePolicy {
            min_tokens: 200,
            dup_cap: 0.5,
            gopher: GopherThresholds::default(),
            english_min_stopword_frac: 0.03,
            nopunc_terminals: TerminalSet::Extended,
        }
    }
}

impl CompliancePolicy {
    pub fn validate(&self) -> Result<(), QualityError> {
        if self.min_tokens < 1 {
            return Err(QualityError::InvalidPolicy("min_tokens must be at least 1".into()));
        }
        if !(self.dup_cap > 0.0 && self.dup_cap <= 1.0) {
            return Err(QualityError::InvalidPolicy("dup_cap must lie in (0, 1]".into()));
        }
        self.gopher.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplianceResult {
    pub english: bool,
    pub token_count: u64,
    pub duplicate_ratio: f64,
    pub gopher_pass: bool,
    pub failed_rules: Vec<GopherRule>,
    pub compliant: bool,
    #[serde(default)]
    pub nopunc_removed_fraction: f64,
}

/// Run every gate on a page's extracted text. No gate short-circuits the
/// others, so the result is complete for diagnostics.
pub fn assess_text(
    text: &str,
    site_dup_ratio: f64,
    policy: &CompliancePolicy,
    tokens: &dyn TokenCounter,
) -> Result<ComplianceResult, QualityError> {
    let english = is_english(text, policy.english_min_stopword_frac);
    let token_count = tokens.count_tokens(text)?;
    let (cleaned, removed) = clean_nopunc(text, policy.nopunc_terminals);
    let (gopher_pass, failed_rules) = gopher_check(&cleaned, &policy.gopher);
    let compliant = english
        && token_count >= policy.min_tokens
        && site_dup_ratio <= policy.dup_cap
        && gopher_pass;
    Ok(ComplianceResult {
        english,
        token_count,
        duplicate_ratio: site_dup_ratio,
        gopher_pass,
        failed_rules,
        compliant,
        nopunc_removed_fraction: removed,
    })
}

pub fn assess_page(
    page: &PageRecord,
    site_dup_ratio: f64,
    policy: &CompliancePolicy,
    tokens: &dyn TokenCounter,
) -> Result<ComplianceResult, QualityError> {
    let text = page
        .extracted_text
        .as_deref()
        .ok_or_else(|| QualityError::MissingText(page.url.clone()))?;
    assess_text(text, site_dup_ratio, policy, tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    const PROSE: &str = "The old harbor town of Kestrel Bay sits at the mouth of a narrow river, \
        and its fishermen have worked the cold northern waters for more than two centuries. \
        Every morning before dawn, crews gather on the stone quay to check their nets, trade \
        news about the weather, and argue good-naturedly over which boat will bring home the \
        largest catch. Visitors who arrive in summer often remark that the place feels \
        unchanged by time, yet the community has quietly adapted to new regulations, shifting \
        fish stocks, and a growing number of tourists drawn by the rugged coastline. Local \
        historians keep careful records of shipwrecks, storms, and family lineages, while the \
        small museum near the church displays carved figureheads, brass compasses, and faded \
        photographs of crews that never returned. Children learn to tie knots before they can \
        ride bicycles, and many still expect to follow their parents onto the water. Others \
        leave for universities in distant cities, though most return each year for the autumn \
        festival, when lanterns line the harbor wall and the whole town shares a long supper \
        of smoked mackerel, brown bread, and strong dark tea. In winter the pace slows, \
        repairs are made to hulls and engines, and the pub by the ferry slip becomes the \
        unofficial council chamber where disputes about mooring fees are settled over \
        cards. Few outsiders stay through those months, but the ones who do rarely leave.";

    #[test]
    fn nopunc_keeps_terminated_lines() {
        let (cleaned, removed) = clean_nopunc("Hello world.\nClick here\nReally?", TerminalSet::Extended);
        assert_eq!(cleaned, "Hello world.\nReally?");
        assert!((removed - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(clean_nopunc("", TerminalSet::Extended), (String::new(), 0.0));
        let (literal, _) = clean_nopunc("Hello world.\nReally?", TerminalSet::Literal);
        assert_eq!(literal, "Really?");
        let (quoted, _) = clean_nopunc("He said \u{201C}go\u{201D}  \nplain", TerminalSet::Literal);
        assert_eq!(quoted, "He said \u{201C}go\u{201D}  ");
    }

    #[test]
    fn short_paragraph_fails_only_min_words() {
        let forty: Vec<&str> = PROSE.split_whitespace().take(40).collect();
        let mut text = forty.join(" ");
        text.push('.');
        let (pass, rules) = gopher_check(&text, &GopherThresholds::default());
        assert!(!pass);
        assert_eq!(rules, vec![GopherRule::MinWords]);
    }

    #[test]
    fn natural_prose_passes() {
        assert!(PROSE.split_whitespace().count() >= 200);
        let (pass, rules) = gopher_check(PROSE, &GopherThresholds::default());
        assert!(pass, "{rules:?}");
    }

    #[test]
    fn repeated_word_fails_top_bigram() {
        let text = vec!["spam"; 100].join(" ");
        let (pass, rules) = gopher_check(&text, &GopherThresholds::default());
        assert!(!pass);
        assert!(rules.contains(&GopherRule::MaxFracCharsTopBigram));
        let stats = gopher_stats(&text, &[]);
        // 99 bigrams "spam spam" of 9 chars over 499 chars.
        assert_eq!(stats.top_ngram_frac[0], 99.0 * 9.0 / 499.0);
    }

    #[test]
    fn distinct_words_never_trip_repetition_rules() {
        let text: Vec<String> = (0..300).map(|i| format!("w{i:04}x")).collect();
        let stats = gopher_stats(&text.join(" "), &[]);
        assert!(stats.dup_ngram_frac.iter().all(|&f| f == 0.0));
        assert!(stats.top_ngram_frac.iter().all(|&f| f < 0.02));
    }

    #[test]
    fn heuristic_tokens() {
        assert_eq!(heuristic_token_count(""), 0);
        assert_eq!(heuristic_token_count("Hello, world!"), 4);
        assert_eq!(heuristic_token_count("don't  stop-2 ok"), 7);
    }

    #[test]
    fn english_detection() {
        assert!(!is_english("", 0.03));
        assert!(is_english(PROSE, 0.03));
        assert!(!is_english("zorblat quintex morvane plitch", 0.03));
    }

    #[test]
    fn token_gate_boundary() {
        let policy = CompliancePolicy::default();
        struct Fixed(u64);
        impl TokenCounter for Fixed {
            fn count_tokens(&self, _: &str) -> Result<u64, QualityError> {
                Ok(self.0)
            }
        }
        assert!(assess_text(PROSE, 0.1, &policy, &Fixed(200)).unwrap().compliant);
        let r = assess_text(PROSE, 0.1, &policy, &Fixed(199)).unwrap();
        assert!(!r.compliant && r.english && r.gopher_pass);
    }

    #[test]
    fn duplicate_gate_only() {
        let policy = CompliancePolicy::default();
        let ok = assess_text(PROSE, 0.1, &policy, &HeuristicTokenCounter).unwrap();
        assert!(ok.compliant, "{ok:?}");
        let dup = assess_text(PROSE, 0.6, &policy, &HeuristicTokenCounter).unwrap();
        assert!(!dup.compliant);
        assert!(dup.english && dup.gopher_pass && dup.token_count >= 200);
    }

    #[test]
    fn missing_text_is_an_error() {
        let page = PageRecord::new(
            "https://s.example/a",
            chrono::Utc::now(),
            crate::corpus::PageSource::LiveCrawl,
        )
        .unwrap();
        let err = assess_page(&page, 0.0, &CompliancePolicy::default(), &HeuristicTokenCounter);
        assert!(matches!(err, Err(QualityError::MissingText(_))));
    }

    #[test]
    fn rule_names_match_threshold_fields() {
        assert_eq!(GopherRule::MaxFracCharsTop4gram.to_string(), "max_frac_chars_top_4gram");
        assert_eq!(GopherRule::MinWords.to_string(), "min_words");
        let fields = serde_json::to_value(GopherThresholds::default()).unwrap();
        for rule in [
            GopherRule::MaxFracCharsTopBigram,
            GopherRule::MaxFracCharsDup10gram,
            GopherRule::MaxFracCharsInDupLines,
            GopherRule::MinRequiredWordHits,
        ] {
            assert!(fields.get(rule.to_string()).is_some(), "{rule}");
        }
    }
}
