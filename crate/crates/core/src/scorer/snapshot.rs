//! Model snapshot file: a fixed header (dimensions, fusion layout, seed,
//! weight decay) followed by all parameters as little-endian 64-bit floats
//! in layer order w1, b1, w2, b2, w3, b3, ws, bs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::scorer::{FusionInputs, ModelParams, GROUPS_OUT, HIDDEN1, HIDDEN2};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"FSMDL001";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotMeta {
    pub seed: u64,
    pub weight_decay: f64,
}

fn fusion_code(fusion: FusionInputs) -> u8 {
    match fusion {
        FusionInputs::G => 0,
        FusionInputs::H2G => 1,
        FusionInputs::H1H2G => 2,
    }
}

fn fusion_from_code(code: u8) -> Option<FusionInputs> {
    match code {
        0 => Some(FusionInputs::G),
        1 => Some(FusionInputs::H2G),
        2 => Some(FusionInputs::H1H2G),
        _ => None,
    }
}

pub fn save_snapshot(params: &ModelParams, meta: SnapshotMeta, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut write = |bytes: &[u8]| out.write_all(bytes).map_err(|e| Error::io(path, e));
    write(MAGIC)?;
    write(&(params.input_dim as u32).to_le_bytes())?;
    write(&(HIDDEN1 as u32).to_le_bytes())?;
    write(&(HIDDEN2 as u32).to_le_bytes())?;
    write(&(GROUPS_OUT as u32).to_le_bytes())?;
    write(&[fusion_code(params.fusion)])?;
    write(&meta.seed.to_le_bytes())?;
    write(&meta.weight_decay.to_le_bytes())?;
    for block in [
        &params.w1, &params.b1, &params.w2, &params.b2, &params.w3, &params.b3, &params.ws,
    ] {
        for v in block.iter() {
            write(&v.to_le_bytes())?;
        }
    }
    write(&params.bs.to_le_bytes())?;
    out.into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?
        .flush()
        .map_err(|e| Error::io(path, e))
}

pub fn load_snapshot(path: &Path) -> Result<(ModelParams, SnapshotMeta)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let format_err = |msg: &str| Error::Format {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };

    let mut magic = [0u8; 8];
    reader.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if &magic != MAGIC {
        return Err(format_err("bad magic; not a model snapshot"));
    }

    let mut u32buf = [0u8; 4];
    let mut u64buf = [0u8; 8];
    let mut read_u32 = |r: &mut BufReader<File>| -> Result<u32> {
        r.read_exact(&mut u32buf).map_err(|e| Error::io(path, e))?;
        Ok(u32::from_le_bytes(u32buf))
    };
    let input_dim = read_u32(&mut reader)? as usize;
    let h1 = read_u32(&mut reader)? as usize;
    let h2 = read_u32(&mut reader)? as usize;
    let out_units = read_u32(&mut reader)? as usize;
    if (h1, h2, out_units) != (HIDDEN1, HIDDEN2, GROUPS_OUT) {
        return Err(format_err("layer sizes do not match this build"));
    }
    let mut byte = [0u8; 1];
    reader.read_exact(&mut byte).map_err(|e| Error::io(path, e))?;
    let fusion =
        fusion_from_code(byte[0]).ok_or_else(|| format_err("unknown fusion layout code"))?;
    reader.read_exact(&mut u64buf).map_err(|e| Error::io(path, e))?;
    let seed = u64::from_le_bytes(u64buf);
    reader.read_exact(&mut u64buf).map_err(|e| Error::io(path, e))?;
    let weight_decay = f64::from_le_bytes(u64buf);

    let mut read_block = |len: usize| -> Result<Vec<f64>> {
        let mut block = Vec::with_capacity(len);
        let mut buf = [0u8; 8];
        for _ in 0..len {
            reader.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
            block.push(f64::from_le_bytes(buf));
        }
        Ok(block)
    };
    let w1 = read_block(HIDDEN1 * input_dim)?;
    let b1 = read_block(HIDDEN1)?;
    let w2 = read_block(HIDDEN2 * HIDDEN1)?;
    let b2 = read_block(HIDDEN2)?;
    let w3 = read_block(GROUPS_OUT * HIDDEN2)?;
    let b3 = read_block(GROUPS_OUT)?;
    let ws = read_block(fusion.dim())?;
    let bs = read_block(1)?[0];

    Ok((
        ModelParams {
            input_dim,
            fusion,
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            ws,
            bs,
        },
        SnapshotMeta { seed, weight_decay },
    ))
}
