//! Binary adapter checkpoints and raw matrix files.
//!
//! Checkpoint layout, all integers and reals little-endian:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `MSLA`                            |
//! | 4      | 4    | version (`u32`, currently 1)            |
//! | 8      | 4    | `d1` (`u32`)                            |
//! | 12     | 4    | `d2` (`u32`)                            |
//! | 16     | 4    | `r` (`u32`)                             |
//! | 20     | 1    | mixer tag                               |
//! | 21     | 1    | init tag (255 for fixed mixers)         |
//! | 22     | 8    | `alpha` (`f64`)                         |
//! | 30     | ...  | `A`, `W`, `B` row-major `f64`           |
//!
//! The adapter seed is not stored; loaded adapters carry seed 0.
//!
//! Raw matrix files are `rows: u32`, `cols: u32`, then row-major `f64`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::adapter::{Adapter, AdapterConfig, MixerKind};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MAGIC: [u8; 4] = *b"MSLA";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 30;

fn put_u32(buf: &mut Vec<u8>, v: usize, what: &str) -> Result<()> {
    let v =
        u32::try_from(v).map_err(|_| Error::Config(format!("{what} = {v} does not fit in u32")))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_matrix(buf: &mut Vec<u8>, m: &Matrix) {
    for v in m.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn u32_at(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("4-byte slice"))
}

fn f64s(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect()
}

fn payload_len(d1: u64, d2: u64, r: u64) -> u64 {
    8 * (d1 * r + r * r + r * d2)
}

/// Serializes an adapter in checkpoint layout.
pub fn encode_checkpoint(adapter: &Adapter) -> Result<Vec<u8>> {
    let cfg = adapter.config();
    let mut buf = Vec::with_capacity(
        HEADER_LEN + payload_len(cfg.d1 as u64, cfg.d2 as u64, cfg.rank as u64) as usize,
    );
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    put_u32(&mut buf, cfg.d1, "d1")?;
    put_u32(&mut buf, cfg.d2, "d2")?;
    put_u32(&mut buf, cfg.rank, "rank")?;
    buf.push(cfg.mixer.tag());
    buf.push(cfg.mixer.init_tag());
    buf.extend_from_slice(&cfg.alpha.to_le_bytes());
    put_matrix(&mut buf, adapter.a());
    put_matrix(&mut buf, adapter.w());
    put_matrix(&mut buf, adapter.b());
    Ok(buf)
}

/// Parses checkpoint bytes; `path` only labels errors.
pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<Adapter> {
    let format = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < 4 {
        return Err(format(format!(
            "{} bytes is too short for a checkpoint header",
            bytes.len()
        )));
    }
    if bytes[..4] != MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            found: bytes[..4].try_into().expect("4-byte slice"),
        });
    }
    if bytes.len() < 8 {
        return Err(format("truncated header".into()));
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.to_path_buf(),
            version,
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(format("truncated header".into()));
    }
    let (d1, d2, r) = (u32_at(bytes, 8), u32_at(bytes, 12), u32_at(bytes, 16));
    if d1 == 0 || d2 == 0 || r == 0 {
        return Err(format(format!(
            "zero dimension in header: d1={d1}, d2={d2}, r={r}"
        )));
    }
    let expected = HEADER_LEN as u64 + payload_len(u64::from(d1), u64::from(d2), u64::from(r));
    if bytes.len() as u64 != expected {
        return Err(Error::LengthMismatch {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    let mixer = MixerKind::from_tags(bytes[20], bytes[21]).map_err(|e| format(e.to_string()))?;
    let alpha = f64::from_le_bytes(bytes[22..30].try_into().expect("8-byte slice"));

    let (d1, d2, r) = (d1 as usize, d2 as usize, r as usize);
    let config = AdapterConfig {
        d1,
        d2,
        rank: r,
        mixer,
        alpha,
        seed: 0,
    };
    let payload = &bytes[HEADER_LEN..];
    let (a_bytes, rest) = payload.split_at(8 * d1 * r);
    let (w_bytes, b_bytes) = rest.split_at(8 * r * r);
    let matrix = |rows, cols, raw: &[u8]| {
        Matrix::new(rows, cols, f64s(raw)).map_err(|e| format(e.to_string()))
    };
    Adapter::from_parts(
        config,
        matrix(d1, r, a_bytes)?,
        matrix(r, r, w_bytes)?,
        matrix(r, d2, b_bytes)?,
    )
    .map_err(|e| format(e.to_string()))
}

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp_name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp: PathBuf = path.with_file_name(tmp_name);
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn save_checkpoint(adapter: &Adapter, path: &Path) -> Result<()> {
    write_atomic(path, &encode_checkpoint(adapter)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Adapter> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}

pub fn encode_matrix(m: &Matrix) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(8 + 8 * m.data().len());
    put_u32(&mut buf, m.rows(), "rows")?;
    put_u32(&mut buf, m.cols(), "cols")?;
    put_matrix(&mut buf, m);
    Ok(buf)
}

pub fn decode_matrix(bytes: &[u8], path: &Path) -> Result<Matrix> {
    if bytes.len() < 8 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: "truncated matrix header".into(),
        });
    }
    let (rows, cols) = (u32_at(bytes, 0), u32_at(bytes, 4));
    let expected = 8 + 8 * u64::from(rows) * u64::from(cols);
    if bytes.len() as u64 != expected {
        return Err(Error::LengthMismatch {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    Matrix::new(rows as usize, cols as usize, f64s(&bytes[8..])).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn write_matrix(m: &Matrix, path: &Path) -> Result<()> {
    write_atomic(path, &encode_matrix(m)?)
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix(&bytes, path)
}

/// Merges the adapter at `adapter_path` into the base weight at `base_path`
/// and writes `W0 + s·A·W·B` to `out_path`.
pub fn merge_files(base_path: &Path, adapter_path: &Path, out_path: &Path) -> Result<Matrix> {
    let base = read_matrix(base_path)?;
    let adapter = load_checkpoint(adapter_path)?;
    let merged = adapter.merge(&base)?;
    write_matrix(&merged, out_path)?;
    Ok(merged)
}
