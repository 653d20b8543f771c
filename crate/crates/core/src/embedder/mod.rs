//! Frozen text embedder: punctuation stripping, hash-bucket token ids and
//! mask-aware mean pooling over a deterministic embedding table.
//!
//! The table is built once from `(seed, row id)` streams and never receives
//! gradients. Pooling accumulates one contribution per unique token id in
//! ascending id order, which makes the mean independent of token order and
//! bit-identical across runs and thread counts.

mod cache;
mod external;

use std::collections::BTreeMap;

use once_cell::sync::Lazy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::exec::{self, tags};
use crate::{Error, Result};

pub use cache::{load_embedding_cache, save_embedding_cache, EmbeddingCacheHeader};
pub use external::EmbedClient;

/// Reserved token id for padding positions; row 0 of the table is all zeros
/// and is never referenced by pooling.
pub const PAD_ID: u32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderConfig {
    /// Embedding dimension L.
    pub dim: usize,
    pub vocab_buckets: u32,
    pub seed: u64,
    pub max_len: usize,
    pub lowercase: bool,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig {
            dim: 768,
            vocab_buckets: 32_768,
            seed: 0,
            max_len: 256,
            lowercase: true,
        }
    }
}

impl EmbedderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("embedding dimension must be at least 1".into()));
        }
        if self.vocab_buckets < 2 {
            return Err(Error::Config("vocab_buckets must be at least 2".into()));
        }
        if self.max_len == 0 {
            return Err(Error::Config("max_len must be at least 1".into()));
        }
        Ok(())
    }
}

/// Which biography field of a resume to embed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BioField {
    Raw,
    Neutral,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessedText {
    /// Real tokens after punctuation removal, lowercasing and truncation.
    pub tokens: Vec<String>,
    /// One id per position up to `max_len`; padding positions carry [`PAD_ID`].
    pub token_ids: Vec<u32>,
    /// 1 for real tokens, then 0 for padding; monotone non-increasing.
    pub attention_mask: Vec<u8>,
    /// Set when no token survived preprocessing; embedding must reject it.
    pub is_empty: bool,
}

static PUNCTUATION: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"\p{P}+").expect("static punctuation pattern"));

/// Hash-bucket id of a token: `1 + (fnv1a64(token) mod (vocab_buckets - 1))`.
pub fn token_id(token: &str, vocab_buckets: u32) -> u32 {
    1 + (exec::fnv1a64(token.as_bytes()) % (u64::from(vocab_buckets) - 1)) as u32
}

/// Delete all Unicode punctuation, optionally lowercase, split on
/// whitespace, truncate to `max_len` and pad.
pub fn preprocess(text: &str, config: &EmbedderConfig) -> PreprocessedText {
    let stripped = PUNCTUATION.replace_all(text, "");
    let normalized = if config.lowercase {
        stripped.to_lowercase()
    } else {
        stripped.into_owned()
    };
    let mut tokens: Vec<String> = normalized
        .split_whitespace()
        .take(config.max_len)
        .map(str::to_string)
        .collect();
    tokens.shrink_to_fit();

    let mut token_ids = Vec::with_capacity(config.max_len);
    let mut attention_mask = Vec::with_capacity(config.max_len);
    for token in &tokens {
        token_ids.push(token_id(token, config.vocab_buckets));
        attention_mask.push(1);
    }
    token_ids.resize(config.max_len, PAD_ID);
    attention_mask.resize(config.max_len, 0);

    PreprocessedText {
        is_empty: tokens.is_empty(),
        tokens,
        token_ids,
        attention_mask,
    }
}

/// Pooled text embedding with finite components.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "embedding contains non-finite component {bad}"
            )));
        }
        Ok(EmbeddingVector { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Frozen embedding table: `vocab_buckets` rows of dimension `dim`, row `id`
/// drawn uniformly from `(-1/sqrt(dim), 1/sqrt(dim))` by an id-keyed stream.
pub struct EmbeddingTable {
    dim: usize,
    vocab_buckets: u32,
    seed: u64,
    rows: Vec<f64>,
}

impl EmbeddingTable {
    pub fn build(config: &EmbedderConfig) -> Result<Self> {
        config.validate()?;
        let dim = config.dim;
        let bound = 1.0 / (dim as f64).sqrt();
        let seed = config.seed;
        let mut rows = vec![0.0; config.vocab_buckets as usize * dim];

        let fill = |id: usize, chunk: &mut [f64]| {
            if id == PAD_ID as usize {
                return;
            }
            let mut rng =
                ChaCha8Rng::seed_from_u64(exec::stream_seed(seed, tags::TABLE_ROW, id as u64));
            for v in chunk.iter_mut() {
                *v = -bound + rng.gen::<f64>() * (2.0 * bound);
            }
        };

        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            rows.par_chunks_mut(dim).enumerate().for_each(|(id, chunk)| fill(id, chunk));
        }
        #[cfg(not(feature = "parallel"))]
        for (id, chunk) in rows.chunks_mut(dim).enumerate() {
            fill(id, chunk);
        }

        Ok(EmbeddingTable {
            dim,
            vocab_buckets: config.vocab_buckets,
            seed,
            rows,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_buckets(&self) -> u32 {
        self.vocab_buckets
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn row(&self, id: u32) -> &[f64] {
        let start = id as usize * self.dim;
        &self.rows[start..start + self.dim]
    }

    /// Full table contents, for frozen-weight byte comparisons.
    pub fn rows(&self) -> &[f64] {
        &self.rows
    }
}

/// Mask-aware mean pooling: the average of the embeddings of all unmasked
/// positions. Padding contributes nothing.
pub fn embed(pre: &PreprocessedText, table: &EmbeddingTable) -> Result<EmbeddingVector> {
    if pre.is_empty {
        return Err(Error::EmptyText { id: None });
    }
    let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
    let mut total = 0u32;
    for (id, mask) in pre.token_ids.iter().zip(&pre.attention_mask) {
        if *mask == 1 {
            *counts.entry(*id).or_insert(0) += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::EmptyText { id: None });
    }
    let mut values = vec![0.0; table.dim()];
    for (id, count) in counts {
        let weight = f64::from(count) / f64::from(total);
        for (v, r) in values.iter_mut().zip(table.row(id)) {
            *v += weight * r;
        }
    }
    EmbeddingVector::new(values)
}

fn embed_corpus_impl(
    corpus: &Corpus,
    field: BioField,
    table: &EmbeddingTable,
    config: &EmbedderConfig,
    parallel: bool,
) -> Result<Vec<EmbeddingVector>> {
    if corpus.is_empty() {
        return Err(Error::Config("cannot embed an empty corpus".into()));
    }
    exec::try_map_ordered(&corpus.resumes, parallel, |resume| {
        let text = match field {
            BioField::Raw => &resume.bio_raw,
            BioField::Neutral => &resume.bio_neutral,
        };
        embed(&preprocess(text, config), table).map_err(|e| match e {
            Error::EmptyText { .. } => Error::EmptyText {
                id: Some(resume.id),
            },
            other => other,
        })
    })
}

/// Embed one biography field of every resume, in corpus order.
pub fn embed_corpus(
    corpus: &Corpus,
    field: BioField,
    table: &EmbeddingTable,
    config: &EmbedderConfig,
) -> Result<Vec<EmbeddingVector>> {
    embed_corpus_impl(corpus, field, table, config, true)
}

/// Sequential variant of [`embed_corpus`] with identical output.
#[doc(hidden)]
pub fn embed_corpus_seq(
    corpus: &Corpus,
    field: BioField,
    table: &EmbeddingTable,
    config: &EmbedderConfig,
) -> Result<Vec<EmbeddingVector>> {
    embed_corpus_impl(corpus, field, table, config, false)
}

#[cfg(test)]
mod tests;
