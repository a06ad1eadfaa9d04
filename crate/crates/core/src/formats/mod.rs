//! Self-describing little-endian binary artifacts.
//!
//! | magic  | contents                         | module                      |
//! |--------|----------------------------------|-----------------------------|
//! | `MSPC` | raw microphone audio             | [`audio`]                   |
//! | `MSEP` | echo / differential echo profile | [`profile`]                 |
//! | `MSDS` | labeled window dataset           | [`crate::dataset::container`] |
//! | `MSMD` | classifier checkpoint            | [`crate::classifier::checkpoint`] |

pub mod audio;
pub mod profile;

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub use audio::{load_audio, read_audio, save_audio, write_audio};
pub use profile::{load_profile, read_profile, save_profile, write_profile, ProfileKind, StoredProfile};

/// Reads exactly `N` bytes, mapping a short read to a format error.
pub(crate) fn read_array<const N: usize, R: Read>(r: &mut R, format: &'static str, what: &str) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::format(format, format!("truncated while reading {what}")),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

pub(crate) fn read_u32<R: Read>(r: &mut R, format: &'static str, what: &str) -> Result<u32> {
    read_array::<4, R>(r, format, what).map(u32::from_le_bytes)
}

pub(crate) fn read_u64<R: Read>(r: &mut R, format: &'static str, what: &str) -> Result<u64> {
    read_array::<8, R>(r, format, what).map(u64::from_le_bytes)
}

pub(crate) fn read_f64<R: Read>(r: &mut R, format: &'static str, what: &str) -> Result<f64> {
    read_array::<8, R>(r, format, what).map(f64::from_le_bytes)
}

pub(crate) fn expect_magic<R: Read>(r: &mut R, format: &'static str, magic: &[u8; 4]) -> Result<()> {
    let got = read_array::<4, R>(r, format, "magic")?;
    if &got != magic {
        return Err(Error::format(format, format!("bad magic {got:?}")));
    }
    Ok(())
}

pub(crate) fn expect_version<R: Read>(r: &mut R, format: &'static str, supported: u32) -> Result<()> {
    let v = read_u32(r, format, "version")?;
    if v != supported {
        return Err(Error::format(format, format!("unsupported version {v}")));
    }
    Ok(())
}

/// Reads `n` little-endian f32 values.
pub(crate) fn read_f32s<R: Read>(r: &mut R, n: usize, format: &'static str) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; n.checked_mul(4).ok_or_else(|| Error::format(format, "payload size overflows"))?];
    r.read_exact(&mut bytes).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::format(format, "truncated payload"),
        _ => Error::Io(e),
    })?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub(crate) fn write_f32s<W: Write>(w: &mut W, values: impl IntoIterator<Item = f32>) -> Result<()> {
    let mut buf = Vec::with_capacity(64 * 1024);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
        if buf.len() >= 64 * 1024 {
            w.write_all(&buf)?;
            buf.clear();
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Fails unless the reader is exhausted.
pub(crate) fn expect_eof<R: Read>(r: &mut R, format: &'static str) -> Result<()> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok(()),
        _ => Err(Error::format(format, "trailing bytes after payload")),
    }
}
