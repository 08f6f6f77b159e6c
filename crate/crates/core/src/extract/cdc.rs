//! Content-defined chunking with Rabin fingerprints.
//!
//! A chunk boundary falls after byte `i` when the Rabin hash of the
//! `window_bytes` bytes ending at `i` satisfies `hash mod avg == avg - 1`,
//! subject to the min/max chunk lengths. Because the boundary test depends
//! only on the window contents and the distance from the previous boundary,
//! a run of text shared by two pages chunks identically once both pages are
//! aligned on a common boundary.
//!
//! Polynomial arithmetic is over GF(2) modulo [`RABIN_POLYNOMIAL`], an
//! irreducible polynomial of degree 53.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ExtractError;
use crate::corpus::SiteSample;

/// x^53 + ... ; irreducible over GF(2).
pub const RABIN_POLYNOMIAL: u64 = 0x3DA3_358B_4DC1_73;
pub const RABIN_DEGREE: u32 = 53;

const LOW_MASK: u64 = (1 << RABIN_DEGREE) - 1;
const TOP_SHIFT: u32 = RABIN_DEGREE - 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CdcParams {
    pub window_bytes: usize,
    pub avg_chunk_bytes: usize,
    pub min_chunk_bytes: usize,
    pub max_chunk_bytes: usize,
}

impl Default for CdcParams {
    fn default() -> Self {
        CdcParams {
            window_bytes: 48,
            avg_chunk_bytes: 256,
            min_chunk_bytes: 64,
            max_chunk_bytes: 1024,
        }
    }
}

impl CdcParams {
    pub fn validate(&self) -> Result<(), ExtractError> {
        let p = self;
        if p.window_bytes == 0 || p.min_chunk_bytes == 0 {
            return Err(ExtractError::InvalidParams("sizes must be positive".into()));
        }
        if !p.avg_chunk_bytes.is_power_of_two() {
            return Err(ExtractError::InvalidParams("avg_chunk_bytes must be a power of two".into()));
        }
        if !(p.min_chunk_bytes <= p.avg_chunk_bytes && p.avg_chunk_bytes <= p.max_chunk_bytes) {
            return Err(ExtractError::InvalidParams("require min <= avg <= max".into()));
        }
        if p.window_bytes > p.min_chunk_bytes {
            return Err(ExtractError::InvalidParams("require window <= min".into()));
        }
        Ok(())
    }
}

/// `t * x^53 mod P` for an 8-bit `t`.
fn reduce_top(t: u64) -> u64 {
    let mut v = t << RABIN_DEGREE;
    for bit in (RABIN_DEGREE..RABIN_DEGREE + 8).rev() {
        if v & (1 << bit) != 0 {
            v ^= RABIN_POLYNOMIAL << (bit - RABIN_DEGREE);
        }
    }
    v
}

/// Table-driven Rabin hashing for a fixed window length.
#[derive(Clone)]
pub struct RabinHasher {
    reduce: [u64; 256],
    out: [u64; 256],
}

impl RabinHasher {
    pub fn new(window: usize) -> Self {
        let mut reduce = [0u64; 256];
        for (t, slot) in reduce.iter_mut().enumerate() {
            *slot = reduce_top(t as u64);
        }
        let mut hasher = RabinHasher {
            reduce,
            out: [0; 256],
        };
        // Contribution of the oldest window byte: b * x^(8 * (window - 1)) mod P.
        for b in 0..256usize {
            let mut h = b as u64;
            for _ in 1..window {
                h = hasher.append(h, 0);
            }
            hasher.out[b] = h;
        }
        hasher
    }

    #[inline]
    pub fn append(&self, h: u64, byte: u8) -> u64 {
        let top = (h >> TOP_SHIFT) as usize;
        (((h << 8) & LOW_MASK) | byte as u64) ^ self.reduce[top]
    }

    #[inline]
    fn slide(&self, h: u64, leaving: u8, entering: u8) -> u64 {
        self.append(h ^ self.out[leaving as usize], entering)
    }

    /// Hash of a whole byte string.
    pub fn hash(&self, bytes: &[u8]) -> u64 {
        bytes.iter().fold(0, |h, &b| self.append(h, b))
    }
}

/// Rabin fingerprint of a chunk's bytes.
pub fn fingerprint(bytes: &[u8]) -> u64 {
    thread_local! {
        static HASHER: RabinHasher = RabinHasher::new(1);
    }
    HASHER.with(|h| h.hash(bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Chunk {
    pub fingerprint: u64,
    pub offset: usize,
    pub byte_length: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ChunkSet {
    pub chunks: Vec<Chunk>,
    pub total_bytes: usize,
}

impl ChunkSet {
    pub fn chunk_bytes<'a>(&self, data: &'a [u8], chunk: &Chunk) -> &'a [u8] {
        &data[chunk.offset..chunk.offset + chunk.byte_length]
    }

    /// Append `other`, shifting its offsets past this set's bytes.
    pub fn concat(mut self, other: &ChunkSet) -> ChunkSet {
        let shift = self.total_bytes;
        self.chunks.extend(other.chunks.iter().map(|c| Chunk {
            offset: c.offset + shift,
            ..*c
        }));
        self.total_bytes += other.total_bytes;
        self
    }
}

pub fn chunk_text(text: &str, params: &CdcParams) -> Result<ChunkSet, ExtractError> {
    chunk_bytes(text.as_bytes(), params)
}

pub fn chunk_bytes(data: &[u8], params: &CdcParams) -> Result<ChunkSet, ExtractError> {
    params.validate()?;
    let hasher = RabinHasher::new(params.window_bytes);
    let mask = params.avg_chunk_bytes as u64 - 1;
    let w = params.window_bytes;
    let mut chunks = Vec::new();
    let mut start = 0;

    while start < data.len() {
        let remaining = data.len() - start;
        let mut end = start + remaining.min(params.max_chunk_bytes);
        if remaining > params.min_chunk_bytes {
            // First candidate boundary is after byte start + min - 1; the
            // window ending there starts at start + min - w.
            let first = start + params.min_chunk_bytes - 1;
            let mut h = hasher.hash(&data[first + 1 - w..=first]);
            let limit = end;
            let mut i = first;
            loop {
                if h & mask == mask {
                    end = i + 1;
                    break;
                }
                i += 1;
                if i >= limit {
                    break;
                }
                h = hasher.slide(h, data[i - w], data[i]);
            }
        } else {
            end = data.len();
        }
        let bytes = &data[start..end];
        chunks.push(Chunk {
            fingerprint: fingerprint(bytes),
            offset: start,
            byte_length: bytes.len(),
        });
        start = end;
    }

    Ok(ChunkSet {
        chunks,
        total_bytes: data.len(),
    })
}

#[derive(Debug, Clone)]
struct IndexEntry {
    bytes: Vec<u8>,
    /// (owner page, occurrences)
    owners: Vec<(usize, usize)>,
}

/// Multiset of chunks keyed by fingerprint. Matches are confirmed by a
/// byte comparison so fingerprint collisions never count as duplicates.
#[derive(Debug, Clone, Default)]
pub struct ChunkIndex {
    entries: HashMap<u64, Vec<IndexEntry>>,
}

impl ChunkIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, owner: usize, data: &[u8], set: &ChunkSet) {
        for chunk in &set.chunks {
            let bytes = set.chunk_bytes(data, chunk);
            let bucket = self.entries.entry(chunk.fingerprint).or_default();
            let entry = match bucket.iter_mut().position(|e| e.bytes == bytes) {
                Some(i) => &mut bucket[i],
                None => {
                    bucket.push(IndexEntry {
                        bytes: bytes.to_vec(),
                        owners: Vec::new(),
                    });
                    bucket.last_mut().expect("just pushed")
                }
            };
            match entry.owners.iter_mut().find(|(o, _)| *o == owner) {
                Some((_, n)) => *n += 1,
                None => entry.owners.push((owner, 1)),
            }
        }
    }

    /// Whether `bytes` (with fingerprint `fp`) occurs under any owner other
    /// than `exclude`.
    pub fn contains(&self, fp: u64, bytes: &[u8], exclude: Option<usize>) -> bool {
        self.entries.get(&fp).is_some_and(|bucket| {
            bucket
                .iter()
                .filter(|e| e.bytes == bytes)
                .any(|e| e.owners.iter().any(|(o, _)| Some(*o) != exclude))
        })
    }

    pub fn len(&self) -> usize {
        self.entries
            .values()
            .flatten()
            .map(|e| e.owners.iter().map(|(_, n)| n).sum::<usize>())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn ratio_with_exclusion(data: &[u8], page: &ChunkSet, index: &ChunkIndex, exclude: Option<usize>) -> f64 {
    if page.total_bytes == 0 {
        return 0.0;
    }
    let dup: usize = page
        .chunks
        .iter()
        .filter(|c| index.contains(c.fingerprint, page.chunk_bytes(data, c), exclude))
        .map(|c| c.byte_length)
        .sum();
    dup as f64 / page.total_bytes as f64
}

/// Fraction of the page's bytes whose chunks appear in `index`, which must be
/// built from the site's other pages only.
pub fn duplicate_ratio(data: &[u8], page: &ChunkSet, index: &ChunkIndex) -> f64 {
    ratio_with_exclusion(data, page, index, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoilerplateVerdict {
    pub duplicate_ratio: f64,
    pub excluded: bool,
}

/// Duplicate ratio of each text against all the others; a page is excluded
/// when its ratio exceeds `cap`.
pub fn flag_boilerplate_texts(
    texts: &[&str],
    params: &CdcParams,
    cap: f64,
) -> Result<Vec<BoilerplateVerdict>, ExtractError> {
    let sets = texts
        .par_iter()
        .map(|t| chunk_text(t, params))
        .collect::<Result<Vec<_>, _>>()?;
    let mut index = ChunkIndex::new();
    for (i, (t, set)) in texts.iter().zip(&sets).enumerate() {
        index.insert(i, t.as_bytes(), set);
    }
    Ok(texts
        .par_iter()
        .zip(&sets)
        .enumerate()
        .map(|(i, (t, set))| {
            let duplicate_ratio = ratio_with_exclusion(t.as_bytes(), set, &index, Some(i));
            BoilerplateVerdict {
                duplicate_ratio,
                excluded: duplicate_ratio > cap,
            }
        })
        .collect())
}

pub fn flag_boilerplate_pages(
    site: &SiteSample,
    params: &CdcParams,
    cap: f64,
) -> Result<Vec<BoilerplateVerdict>, ExtractError> {
    let texts = site
        .pages
        .iter()
        .map(|p| {
            p.extracted_text
                .as_deref()
                .ok_or_else(|| ExtractError::MissingText(p.url.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    flag_boilerplate_texts(&texts, params, cap)
}
