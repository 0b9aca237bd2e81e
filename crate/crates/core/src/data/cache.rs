//! Binary window cache.
//!
//! Layout, all little-endian: `LVR1`, `n`, `timesteps`, `features` as u64,
//! then `n*timesteps*features` window values row-major, then per-window
//! target, label index, session index and end row (all f64), then the
//! feature names (u64 count, each a u64 length plus UTF-8 bytes), then a
//! u8 normalization flag followed by the min and max vectors when set.

use std::io::{Read, Write};

use super::{NormStats, Severity, WindowedDataset};
use crate::error::{Error, Result};
use crate::tensor::Tensor3;

pub const CACHE_MAGIC: &[u8; 4] = b"LVR1";

pub fn write_cache<W: Write>(data: &WindowedDataset, mut out: W) -> Result<()> {
    let (n, t, f) = data.windows.shape();
    out.write_all(CACHE_MAGIC)?;
    for d in [n, t, f] {
        out.write_all(&(d as u64).to_le_bytes())?;
    }
    write_f64s(&mut out, data.windows.as_slice())?;
    write_f64s(&mut out, &data.targets)?;
    let as_f64 = |v: &[usize]| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
    write_f64s(&mut out, &as_f64(&data.label_indices()))?;
    write_f64s(&mut out, &as_f64(&data.sessions))?;
    write_f64s(&mut out, &as_f64(&data.end_rows))?;
    out.write_all(&(data.feature_names.len() as u64).to_le_bytes())?;
    for name in &data.feature_names {
        out.write_all(&(name.len() as u64).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
    }
    match &data.normalization {
        None => out.write_all(&[0])?,
        Some(s) => {
            out.write_all(&[1])?;
            write_f64s(&mut out, &s.min)?;
            write_f64s(&mut out, &s.max)?;
        }
    }
    Ok(())
}

pub fn read_cache<R: Read>(mut input: R) -> Result<WindowedDataset> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(Error::Format("not a window cache (bad magic)".into()));
    }
    let n = read_u64(&mut input)? as usize;
    let t = read_u64(&mut input)? as usize;
    let f = read_u64(&mut input)? as usize;
    let cells = n
        .checked_mul(t)
        .and_then(|v| v.checked_mul(f))
        .ok_or_else(|| Error::Format("window dimensions overflow".into()))?;
    let windows = Tensor3::from_vec((n, t, f), read_f64s(&mut input, cells)?)?;
    let targets = read_f64s(&mut input, n)?;
    let index = |v: f64| -> Result<usize> {
        if v >= 0.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(Error::Format(format!("expected an index, found {v}")))
        }
    };
    let labels = read_f64s(&mut input, n)?
        .into_iter()
        .map(|v| index(v).and_then(|i| Severity::from_index(i).ok_or_else(|| Error::Format(format!("label {i}")))))
        .collect::<Result<Vec<_>>>()?;
    let sessions = read_f64s(&mut input, n)?.into_iter().map(index).collect::<Result<Vec<_>>>()?;
    let end_rows = read_f64s(&mut input, n)?.into_iter().map(index).collect::<Result<Vec<_>>>()?;
    let n_names = read_u64(&mut input)? as usize;
    if n_names != f {
        return Err(Error::Format(format!("{n_names} names for {f} features")));
    }
    let mut feature_names = Vec::with_capacity(f);
    for _ in 0..n_names {
        let len = read_u64(&mut input)? as usize;
        let mut buf = vec![0u8; len];
        input.read_exact(&mut buf)?;
        feature_names.push(String::from_utf8(buf).map_err(|_| Error::Format("feature name is not UTF-8".into()))?);
    }
    let mut flag = [0u8; 1];
    input.read_exact(&mut flag)?;
    let normalization = match flag[0] {
        0 => None,
        1 => Some(NormStats {
            min: read_f64s(&mut input, f)?,
            max: read_f64s(&mut input, f)?,
        }),
        other => return Err(Error::Format(format!("bad normalization flag {other}"))),
    };
    Ok(WindowedDataset {
        windows,
        labels,
        targets,
        sessions,
        end_rows,
        feature_names,
        normalization,
    })
}

fn write_f64s<W: Write>(out: &mut W, values: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s<R: Read>(input: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    input.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}
