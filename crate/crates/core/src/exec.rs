//! Deterministic execution primitives: the token/stream hash and
//! order-preserving map helpers that run on rayon when the `parallel`
//! feature is enabled.
//!
//! Every randomized component in the crate derives an independent RNG stream
//! from `(seed, tag, index)` instead of sharing one sequential generator, so
//! work can be scheduled in any order (or in parallel) without changing a
//! single output byte.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::Result;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over a byte slice, 64-bit variant. Used both as the published
/// token hash of the embedder and for deriving per-item RNG stream seeds.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Purpose tags separating the RNG streams of different components.
pub(crate) mod tags {
    pub const RESUME: u64 = 0x01;
    pub const SPLIT: u64 = 0x02;
    pub const TABLE_ROW: u64 = 0x03;
    pub const PARAM_INIT: u64 = 0x04;
    pub const SHUFFLE: u64 = 0x05;
    pub const DROPOUT: u64 = 0x06;
}

/// Derive the seed of an independent random stream from a base seed, a
/// purpose tag and a per-item index.
pub fn stream_seed(seed: u64, tag: u64, index: u64) -> u64 {
    let mut buf = [0u8; 24];
    buf[..8].copy_from_slice(&seed.to_le_bytes());
    buf[8..16].copy_from_slice(&tag.to_le_bytes());
    buf[16..].copy_from_slice(&index.to_le_bytes());
    fnv1a64(&buf)
}

/// Map `f` over `0..n`, preserving index order in the output.
pub(crate) fn map_indexed<U, F>(n: usize, parallel: bool, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = parallel;
    (0..n).map(f).collect()
}

/// Map `f` over a slice, preserving input order in the output.
pub(crate) fn map_ordered<T, U, F>(items: &[T], parallel: bool, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel {
        return items.par_iter().map(f).collect();
    }
    let _ = parallel;
    items.iter().map(f).collect()
}

/// Fallible ordered map. The first error in input order wins, so error
/// reporting is as deterministic as the success path.
pub(crate) fn try_map_ordered<T, U, F>(items: &[T], parallel: bool, f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U> + Sync + Send,
{
    let results = map_ordered(items, parallel, f);
    let mut out = Vec::with_capacity(results.len());
    for r in results {
        out.push(r?);
    }
    Ok(out)
}

/// Like [`try_map_ordered`] but never runs more than `limit` items at a time;
/// used for external backends with a concurrency cap.
pub(crate) fn try_map_ordered_chunked<T, U, F>(
    items: &[T],
    parallel: bool,
    limit: usize,
    f: F,
) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U> + Sync + Send,
{
    let limit = limit.max(1);
    let mut out = Vec::with_capacity(items.len());
    for chunk in items.chunks(limit) {
        out.extend(try_map_ordered(chunk, parallel, &f)?);
    }
    Ok(out)
}
