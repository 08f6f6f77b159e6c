//! Main-content extraction and cross-page boilerplate detection.

mod cdc;
mod html;

pub use cdc::{
    chunk_bytes, chunk_text, duplicate_ratio, fingerprint, flag_boilerplate_pages,
    flag_boilerplate_texts, BoilerplateVerdict, CdcParams, Chunk, ChunkIndex, ChunkSet,
    RabinHasher, RABIN_POLYNOMIAL, RABIN_DEGREE,
};
pub use html::{extract_main_content, visible_text, ExtractWarning, Extraction};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ExtractError {
    #[error("invalid chunking parameters: {0}")]
    InvalidParams(String),
    #[error("page {0} has no extracted text")]
    MissingText(String),
}
