//! Binary embedding cache: resume id to vector, little-endian 64-bit
//! floats, with a header recording the embedder parameters that produced it.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::embedder::EmbeddingVector;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"FSEMB001";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingCacheHeader {
    pub dim: u32,
    pub vocab_buckets: u32,
    pub seed: u64,
}

pub fn save_embedding_cache(
    path: &Path,
    header: EmbeddingCacheHeader,
    ids: &[u64],
    vectors: &[EmbeddingVector],
) -> Result<()> {
    if ids.len() != vectors.len() {
        return Err(Error::Shape(format!(
            "cache ids ({}) and vectors ({}) differ in count",
            ids.len(),
            vectors.len()
        )));
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<File>, bytes: &[u8]| {
        out.write_all(bytes).map_err(|e| Error::io(path, e))
    };
    write(&mut out, MAGIC)?;
    write(&mut out, &header.dim.to_le_bytes())?;
    write(&mut out, &header.vocab_buckets.to_le_bytes())?;
    write(&mut out, &header.seed.to_le_bytes())?;
    write(&mut out, &(ids.len() as u64).to_le_bytes())?;
    for (id, vector) in ids.iter().zip(vectors) {
        if vector.len() != header.dim as usize {
            return Err(Error::Shape(format!(
                "vector for id {id} has dimension {}, header says {}",
                vector.len(),
                header.dim
            )));
        }
        write(&mut out, &id.to_le_bytes())?;
        for v in vector.values() {
            write(&mut out, &v.to_le_bytes())?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn load_embedding_cache(
    path: &Path,
) -> Result<(EmbeddingCacheHeader, Vec<u64>, Vec<EmbeddingVector>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let format_err = |msg: String| Error::Format {
        path: path.to_path_buf(),
        msg,
    };

    let mut magic = [0u8; 8];
    reader
        .read_exact(&mut magic)
        .map_err(|e| Error::io(path, e))?;
    if &magic != MAGIC {
        return Err(format_err("bad magic; not an embedding cache".into()));
    }
    let mut u32buf = [0u8; 4];
    let mut u64buf = [0u8; 8];
    let mut read_u32 = |reader: &mut BufReader<File>| -> Result<u32> {
        reader
            .read_exact(&mut u32buf)
            .map_err(|e| Error::io(path, e))?;
        Ok(u32::from_le_bytes(u32buf))
    };
    let dim = read_u32(&mut reader)?;
    let vocab_buckets = read_u32(&mut reader)?;
    let mut read_u64 = |reader: &mut BufReader<File>| -> Result<u64> {
        reader
            .read_exact(&mut u64buf)
            .map_err(|e| Error::io(path, e))?;
        Ok(u64::from_le_bytes(u64buf))
    };
    let seed = read_u64(&mut reader)?;
    let count = read_u64(&mut reader)? as usize;

    let mut ids = Vec::with_capacity(count);
    let mut vectors = Vec::with_capacity(count);
    let mut f64buf = [0u8; 8];
    for _ in 0..count {
        reader
            .read_exact(&mut u64buf)
            .map_err(|e| Error::io(path, e))?;
        ids.push(u64::from_le_bytes(u64buf));
        let mut values = Vec::with_capacity(dim as usize);
        for _ in 0..dim {
            reader
                .read_exact(&mut f64buf)
                .map_err(|e| Error::io(path, e))?;
            values.push(f64::from_le_bytes(f64buf));
        }
        vectors.push(EmbeddingVector::new(values).map_err(|e| format_err(e.to_string()))?);
    }
    let mut trailing = [0u8; 1];
    if reader.read(&mut trailing).map_err(|e| Error::io(path, e))? != 0 {
        return Err(format_err("trailing bytes after declared record count".into()));
    }
    Ok((
        EmbeddingCacheHeader {
            dim,
            vocab_buckets,
            seed,
        },
        ids,
        vectors,
    ))
}
