//! Reader-mode style main-content extraction.
//!
//! The document is parsed leniently, non-content subtrees are dropped, and
//! the remaining text is split into blocks at block-level element
//! boundaries. Each block scores its character length, or zero when more
//! than half of its characters sit inside links. Blocks scoring at least
//! 20% of the best block are kept, in document order, one per line.

use ego_tree::NodeRef;
use scraper::{Html, Node};
use serde::{Deserialize, Serialize};

const SKIPPED: &[&str] = &[
    "script", "style", "noscript", "template", "head", "nav", "header", "footer", "aside", "form",
    "iframe", "svg", "select", "button",
];

const BLOCKS: &[&str] = &[
    "address", "article", "blockquote", "body", "caption", "dd", "details", "div", "dl", "dt",
    "figcaption", "figure", "h1", "h2", "h3", "h4", "h5", "h6", "li", "main", "ol", "p", "pre",
    "section", "summary", "table", "td", "th", "tr", "ul",
];

const KEEP_FRACTION: f64 = 0.2;
const MAX_LINK_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractWarning {
    /// Input was not valid UTF-8 and was decoded lossily.
    InvalidUtf8,
    /// Nothing scored above zero.
    NoContent,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Extraction {
    pub text: String,
    pub warnings: Vec<ExtractWarning>,
}

#[derive(Default)]
struct Block {
    raw: String,
    link_chars: usize,
}

struct Walker {
    blocks: Vec<Block>,
    current: usize,
    link_depth: usize,
}

impl Walker {
    // A nested block, and the parent text after it, each start a new segment
    // so blocks stay in document order.
    fn open_block(&mut self) {
        self.blocks.push(Block::default());
        self.current = self.blocks.len() - 1;
    }

    fn push_text(&mut self, text: &str) {
        let block = &mut self.blocks[self.current];
        for c in text.chars() {
            block.raw.push(if c.is_whitespace() { ' ' } else { c });
        }
        if self.link_depth > 0 {
            block.link_chars += text.chars().filter(|c| !c.is_whitespace()).count();
        }
    }

    fn walk(&mut self, node: NodeRef<'_, Node>) {
        match node.value() {
            Node::Text(t) => self.push_text(t),
            Node::Element(el) => {
                let name = el.name();
                if SKIPPED.contains(&name) || el.attr("hidden").is_some() {
                    return;
                }
                if name == "br" {
                    self.blocks[self.current].raw.push('\n');
                    return;
                }
                let is_block = BLOCKS.contains(&name);
                let is_link = name == "a";
                if is_block {
                    self.open_block();
                }
                if is_link {
                    self.link_depth += 1;
                }
                for child in node.children() {
                    self.walk(child);
                }
                if is_link {
                    self.link_depth -= 1;
                }
                if is_block {
                    self.open_block();
                }
            }
            Node::Document | Node::Fragment => {
                for child in node.children() {
                    self.walk(child);
                }
            }
            _ => {}
        }
    }
}

/// Collapse runs of spaces within each line; drop empty lines.
fn normalize(raw: &str) -> String {
    raw.split('\n')
        .map(|line| line.split(' ').filter(|w| !w.is_empty()).collect::<Vec<_>>().join(" "))
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}

fn decode(html: &[u8], warnings: &mut Vec<ExtractWarning>) -> String {
    match std::str::from_utf8(html) {
        Ok(s) => s.to_string(),
        Err(_) => {
            warnings.push(ExtractWarning::InvalidUtf8);
            String::from_utf8_lossy(html).into_owned()
        }
    }
}

fn blocks_of(doc: &Html) -> Vec<(String, usize)> {
    let mut walker = Walker {
        blocks: vec![Block::default()],
        current: 0,
        link_depth: 0,
    };
    walker.walk(doc.tree.root());
    walker
        .blocks
        .into_iter()
        .map(|b| (normalize(&b.raw), b.link_chars))
        .filter(|(t, _)| !t.is_empty())
        .collect()
}

pub fn extract_main_content(html: &[u8]) -> Extraction {
    let mut warnings = Vec::new();
    let source = decode(html, &mut warnings);
    let doc = Html::parse_document(&source);
    let blocks = blocks_of(&doc);

    let scores: Vec<usize> = blocks
        .iter()
        .map(|(text, link_chars)| {
            let chars = text.chars().filter(|c| !c.is_whitespace()).count();
            if chars == 0 || *link_chars as f64 / chars as f64 > MAX_LINK_FRACTION {
                0
            } else {
                text.chars().count()
            }
        })
        .collect();
    let best = scores.iter().copied().max().unwrap_or(0);
    if best == 0 {
        warnings.push(ExtractWarning::NoContent);
        return Extraction {
            text: String::new(),
            warnings,
        };
    }
    let cutoff = KEEP_FRACTION * best as f64;
    let text = blocks
        .iter()
        .zip(&scores)
        .filter(|(_, &s)| s > 0 && s as f64 >= cutoff)
        .map(|((t, _), _)| t.as_str())
        .collect::<Vec<_>>()
        .join("\n");
    Extraction { text, warnings }
}

/// All visible text of a document (skipped subtrees removed), one block
/// per line, before scoring.
pub fn visible_text(html: &[u8]) -> String {
    let source = decode(html, &mut Vec::new());
    let doc = Html::parse_document(&source);
    blocks_of(&doc)
        .into_iter()
        .map(|(t, _)| t)
        .collect::<Vec<_>>()
        .join("\n")
}
