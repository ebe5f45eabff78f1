//! Model checkpoints.
//!
//! Layout: one line of compact JSON (the [`CheckpointHeader`]) terminated by
//! `\n`, followed by every parameter block of [`ModelParams::tensors`] as
//! little-endian `f64`, in declaration order.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Architecture, ModelParams};
use super::optim::OptimizerKind;
use crate::error::{DarnError, Result};

pub const FORMAT_NAME: &str = "darn-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub architecture: Architecture,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    /// Length of each parameter block.
    pub blocks: Vec<usize>,
}

pub fn write_checkpoint<W: Write>(
    mut out: W,
    params: &ModelParams,
    seed: u64,
    optimizer: OptimizerKind,
) -> Result<()> {
    let tensors = params.tensors();
    let header = CheckpointHeader {
        format: FORMAT_NAME.to_string(),
        version: FORMAT_VERSION,
        architecture: params.architecture.clone(),
        seed,
        optimizer,
        blocks: tensors.iter().map(|t| t.len()).collect(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for t in tensors {
        for x in t {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(input: R) -> Result<(CheckpointHeader, ModelParams)> {
    let mut reader = BufReader::new(input);
    let mut line = Vec::new();
    reader.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(DarnError::Checkpoint("missing header terminator".into()));
    }
    let header: CheckpointHeader = serde_json::from_slice(&line[..line.len() - 1])?;
    if header.format != FORMAT_NAME || header.version != FORMAT_VERSION {
        return Err(DarnError::Checkpoint(format!(
            "unsupported format {} v{}",
            header.format, header.version
        )));
    }
    let mut params = ModelParams::new(header.architecture.clone(), header.seed)?;
    let expected: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    if expected != header.blocks {
        return Err(DarnError::Checkpoint(
            "block sizes do not match the declared architecture".into(),
        ));
    }
    let mut buf = [0u8; 8];
    for block in params.tensors_mut() {
        for x in block.iter_mut() {
            reader
                .read_exact(&mut buf)
                .map_err(|e| DarnError::Checkpoint(format!("truncated parameter data: {e}")))?;
            *x = f64::from_le_bytes(buf);
        }
    }
    if reader.read(&mut buf)? != 0 {
        return Err(DarnError::Checkpoint("trailing bytes after parameters".into()));
    }
    Ok((header, params))
}

pub fn save(path: &Path, params: &ModelParams, seed: u64, optimizer: OptimizerKind) -> Result<()> {
    let file = fs::File::create(path)?;
    write_checkpoint(std::io::BufWriter::new(file), params, seed, optimizer)
}

pub fn load(path: &Path) -> Result<(CheckpointHeader, ModelParams)> {
    read_checkpoint(fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch() -> Architecture {
        Architecture {
            input_dim: 4,
            feature_dims: vec![6],
            label_hidden: vec![],
            num_outputs: 2,
            domain_hidden: vec![3],
            num_domains: 3,
            dropout: 0.1,
        }
    }

    #[test]
    fn round_trip_preserves_every_bit() {
        let mut p = ModelParams::new(arch(), 17).unwrap();
        p.label_head[0].bias[1] = -0.0;
        p.feature_extractor[0].bias[0] = f64::MIN_POSITIVE;
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &p, 17, OptimizerKind::Adadelta).unwrap();
        let (header, q) = read_checkpoint(&bytes[..]).unwrap();
        assert_eq!(header.optimizer, OptimizerKind::Adadelta);
        let bits = |m: &ModelParams| -> Vec<u64> {
            m.tensors().concat().iter().map(|x| x.to_bits()).collect()
        };
        assert_eq!(bits(&p), bits(&q));
        assert_eq!(q.architecture, p.architecture);
    }

    #[test]
    fn header_is_a_json_line_followed_by_le_floats() {
        let p = ModelParams::new(arch(), 1).unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &p, 1, OptimizerKind::SgdMomentum).unwrap();
        let nl = bytes.iter().position(|b| *b == b'\n').unwrap();
        let header: serde_json::Value = serde_json::from_slice(&bytes[..nl]).unwrap();
        assert_eq!(header["format"], FORMAT_NAME);
        assert_eq!(bytes.len() - nl - 1, 8 * p.num_params());
        let first = f64::from_le_bytes(bytes[nl + 1..nl + 9].try_into().unwrap());
        assert_eq!(first, p.tensors()[0][0]);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let p = ModelParams::new(arch(), 1).unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &p, 1, OptimizerKind::SgdMomentum).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(read_checkpoint(&bytes[..]), Err(DarnError::Checkpoint(_))));
    }
}
