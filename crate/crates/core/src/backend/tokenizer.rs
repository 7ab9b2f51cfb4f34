//! Deterministic hashing tokenizer for the native encoder backend.
//!
//! Word units (see [`crate::segment`]) are mapped into a fixed id space via
//! FNV-1a, so identical text always produces identical ids without a learned
//! vocabulary. Id 0 is padding; id 1 is reserved.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segment;

pub const PAD_ID: usize = 0;
const RESERVED_IDS: usize = 2;

/// Padding strategy. Everything is padded to the configured maximum length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    MaxLength,
}

/// Sequence-shaping settings applied before the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerSettings {
    pub max_length: usize,
    pub padding: Padding,
    pub truncation: bool,
}

impl TokenizerSettings {
    pub fn new(max_length: usize) -> Result<Self> {
        if max_length == 0 {
            return Err(Error::Argument("tokenizer max_length must be positive".into()));
        }
        Ok(TokenizerSettings { max_length, padding: Padding::MaxLength, truncation: true })
    }
}

impl Default for TokenizerSettings {
    fn default() -> Self {
        TokenizerSettings { max_length: 128, padding: Padding::MaxLength, truncation: true }
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Encoded sequence: fixed-length ids plus the count of real (non-pad) slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoded {
    pub ids: Vec<usize>,
    pub real_len: usize,
}

/// Map text to a fixed-length id sequence.
pub fn encode(text: &str, vocab_size: usize, settings: &TokenizerSettings) -> Encoded {
    debug_assert!(vocab_size > RESERVED_IDS);
    let content_span = (vocab_size - RESERVED_IDS) as u64;
    let mut ids: Vec<usize> = segment::word_units(text, None)
        .iter()
        .map(|u| RESERVED_IDS + (fnv1a64(u.text.as_bytes()) % content_span) as usize)
        .collect();
    if settings.truncation {
        ids.truncate(settings.max_length);
    }
    let real_len = ids.len().min(settings.max_length);
    ids.resize(settings.max_length, PAD_ID);
    Encoded { ids, real_len }
}
