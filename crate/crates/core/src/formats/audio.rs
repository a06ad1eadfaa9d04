//! `MSPC`: raw multichannel audio.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "MSPC"
//!      4     4  version (u32, = 1)
//!      8     4  n_channels (u32)
//!     12     4  sample_rate in Hz (u32)
//!     16     8  n_samples per channel (u64)
//!     24     8  reserved, zero
//!     32     …  f32 samples, interleaved by channel
//! ```
//! All integers and floats are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{expect_eof, expect_magic, expect_version, read_array, read_f32s, read_u32, read_u64, write_f32s};
use crate::error::{Error, Result};
use crate::signal::AudioStream;

const MAGIC: &[u8; 4] = b"MSPC";
const VERSION: u32 = 1;
const NAME: &str = "MSPC";

pub fn write_audio<W: Write>(stream: &AudioStream, mut w: W) -> Result<()> {
    let rate = stream.sample_rate;
    if !(rate > 0.0 && rate.fract() == 0.0 && rate <= u32::MAX as f64) {
        return Err(Error::argument(format!("sample rate {rate} is not a whole number of Hz")));
    }
    let n_channels = u32::try_from(stream.n_channels()).map_err(|_| Error::argument("too many channels"))?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&n_channels.to_le_bytes())?;
    w.write_all(&(rate as u32).to_le_bytes())?;
    w.write_all(&(stream.len() as u64).to_le_bytes())?;
    w.write_all(&[0u8; 8])?;
    let n = stream.len();
    let chans = &stream.channels;
    write_f32s(&mut w, (0..n).flat_map(|k| chans.iter().map(move |c| c[k])))?;
    w.flush()?;
    Ok(())
}

pub fn read_audio<R: Read>(mut r: R) -> Result<AudioStream> {
    expect_magic(&mut r, NAME, MAGIC)?;
    expect_version(&mut r, NAME, VERSION)?;
    let n_channels = read_u32(&mut r, NAME, "n_channels")? as usize;
    let rate = read_u32(&mut r, NAME, "sample_rate")?;
    let n_samples = read_u64(&mut r, NAME, "n_samples")?;
    read_array::<8, _>(&mut r, NAME, "reserved bytes")?;
    if n_channels == 0 || rate == 0 {
        return Err(Error::format(NAME, "zero channels or zero sample rate"));
    }
    let n_samples = usize::try_from(n_samples).map_err(|_| Error::format(NAME, "n_samples too large"))?;
    let total = n_samples
        .checked_mul(n_channels)
        .ok_or_else(|| Error::format(NAME, "payload size overflows"))?;
    let flat = read_f32s(&mut r, total, NAME)?;
    expect_eof(&mut r, NAME)?;
    let mut channels = vec![Vec::with_capacity(n_samples); n_channels];
    for frame in flat.chunks_exact(n_channels) {
        for (ch, &v) in channels.iter_mut().zip(frame) {
            ch.push(v);
        }
    }
    AudioStream::new(channels, f64::from(rate))
}

pub fn save_audio(stream: &AudioStream, path: impl AsRef<Path>) -> Result<()> {
    write_audio(stream, BufWriter::new(File::create(path)?))
}

pub fn load_audio(path: impl AsRef<Path>) -> Result<AudioStream> {
    read_audio(BufReader::new(File::open(path)?))
}
