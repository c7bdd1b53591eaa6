//! `MRIPFB1` binary filter-bank format.
//!
//! Layout (little endian): 8 magic bytes `MRIPFB1\0`, then five `u32`
//! fields `dims, K, M, len, reserved=0`, then `K * M * len^dims` `f64`
//! weights in `(filter, channel, spatial row-major)` order.

use std::io::{Read, Write};

use super::filterbank::{Dims, FilterBank};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"MRIPFB1\0";

pub fn write_filterbank<W: Write>(mut w: W, bank: &FilterBank) -> Result<()> {
    w.write_all(MAGIC)?;
    let header = [
        bank.dims().count(),
        to_u32(bank.num_filters())?,
        to_u32(bank.num_channels())?,
        to_u32(bank.filter_len())?,
        0,
    ];
    for field in header {
        w.write_all(&field.to_le_bytes())?;
    }
    for &x in bank.weights() {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_filterbank<R: Read>(mut r: R) -> Result<FilterBank> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("truncated header".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let mut header = [0u32; 5];
    for field in header.iter_mut() {
        let mut buf = [0u8; 4];
        r.read_exact(&mut buf)
            .map_err(|_| Error::Format("truncated header".into()))?;
        *field = u32::from_le_bytes(buf);
    }
    let [dims, k, m, len, reserved] = header;
    if reserved != 0 {
        return Err(Error::Format(format!("reserved field is {reserved}, expected 0")));
    }
    let dims = Dims::try_from(u8::try_from(dims).unwrap_or(0)).map_err(Error::Format)?;
    let count = (k as usize)
        .checked_mul(m as usize)
        .and_then(|c| c.checked_mul(dims.volume(len as usize)))
        .ok_or_else(|| Error::Format("weight count overflows".into()))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != count * 8 {
        return Err(Error::Format(format!(
            "expected {} weight bytes, found {}",
            count * 8,
            bytes.len()
        )));
    }
    let weights = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FilterBank::new(k as usize, m as usize, len as usize, dims, weights)
}

fn to_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))
}
