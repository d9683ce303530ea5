//! WFT1 binary tensor dumps.
//!
//! Layout: 4-byte magic `WFT1`, u32 little-endian rank, one precision tag
//! byte (4 or 8), `rank` u32 little-endian dims, then the raw little-endian
//! IEEE-754 payload at the tagged precision.
//!
//! Readers accept either precision tag and convert to the active grade;
//! writers always emit the active grade.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Result, WaveError};
use crate::field::{Real, PRECISION_BYTES};

pub const MAGIC: &[u8; 4] = b"WFT1";

pub fn write_wft1<W: Write>(mut w: W, dims: &[u32], data: &[Real]) -> Result<()> {
    let expect: usize = dims.iter().map(|&d| d as usize).product();
    if expect != data.len() {
        return Err(WaveError::ShapeMismatch(format!(
            "WFT1 dims {:?} imply {} values, got {}",
            dims,
            expect,
            data.len()
        )));
    }
    w.write_all(MAGIC)?;
    w.write_all(&(dims.len() as u32).to_le_bytes())?;
    w.write_all(&[PRECISION_BYTES as u8])?;
    for &d in dims {
        w.write_all(&d.to_le_bytes())?;
    }
    for &v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_wft1<R: Read>(mut r: R) -> Result<(Vec<u32>, Vec<Real>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| WaveError::Format("WFT1: truncated magic".into()))?;
    if &magic != MAGIC {
        return Err(WaveError::Format(format!(
            "WFT1: bad magic {:02x?}",
            magic
        )));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)
        .map_err(|_| WaveError::Format("WFT1: truncated rank".into()))?;
    let rank = u32::from_le_bytes(u32buf) as usize;
    if rank > 8 {
        return Err(WaveError::Format(format!("WFT1: rank {rank} too large")));
    }
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)
        .map_err(|_| WaveError::Format("WFT1: truncated precision tag".into()))?;
    if tag[0] != 4 && tag[0] != 8 {
        return Err(WaveError::Format(format!(
            "WFT1: bad precision tag {}",
            tag[0]
        )));
    }
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        r.read_exact(&mut u32buf)
            .map_err(|_| WaveError::Format("WFT1: truncated dims".into()))?;
        dims.push(u32::from_le_bytes(u32buf));
    }
    let count: usize = dims.iter().map(|&d| d as usize).product();
    let mut data = Vec::with_capacity(count);
    if tag[0] == 8 {
        let mut buf = [0u8; 8];
        for _ in 0..count {
            r.read_exact(&mut buf)
                .map_err(|_| WaveError::Format("WFT1: truncated payload".into()))?;
            data.push(f64::from_le_bytes(buf) as Real);
        }
    } else {
        let mut buf = [0u8; 4];
        for _ in 0..count {
            r.read_exact(&mut buf)
                .map_err(|_| WaveError::Format("WFT1: truncated payload".into()))?;
            data.push(f32::from_le_bytes(buf) as Real);
        }
    }
    Ok((dims, data))
}

pub fn write_wft1_file(path: &Path, dims: &[u32], data: &[Real]) -> Result<()> {
    let f = File::create(path)?;
    let mut w = BufWriter::new(f);
    write_wft1(&mut w, dims, data)?;
    w.flush()?;
    Ok(())
}

pub fn read_wft1_file(path: &Path) -> Result<(Vec<u32>, Vec<Real>)> {
    let f = File::open(path)?;
    read_wft1(BufReader::new(f))
}
