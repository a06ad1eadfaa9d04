//! `MSEP`: echo-profile tensors.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "MSEP"
//!      4     4  version (u32, = 1)
//!      8     4  kind (u32): 0 = echo profile, 1 = differential
//!     12     4  n_channels (u32)
//!     16     4  n_bins (u32)
//!     20     4  n_frames (u32)
//!     24     8  bin_resolution_m (f64)
//!     32     8  frame_rate in frames/s (f64)
//!     40  2·C   channel layout: (microphone, band) byte pairs, mic 0 = left
//!      …     …  f32 payload, row-major [channel][bin][frame]
//! ```
//! Values are stored as f32, so a round trip through this format rounds the
//! in-memory f64 profile to single precision.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{expect_eof, expect_magic, expect_version, read_array, read_f32s, read_f64, read_u32, write_f32s};
use crate::error::{Error, Result};
use crate::signal::{ChannelId, DifferentialEchoProfile, EchoProfile, Microphone, ProfileTensor};

const MAGIC: &[u8; 4] = b"MSEP";
const VERSION: u32 = 1;
const NAME: &str = "MSEP";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    Echo,
    Differential,
}

/// A profile loaded from disk, tagged with its kind.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredProfile {
    Echo(EchoProfile),
    Differential(DifferentialEchoProfile),
}

impl StoredProfile {
    pub fn kind(&self) -> ProfileKind {
        match self {
            StoredProfile::Echo(_) => ProfileKind::Echo,
            StoredProfile::Differential(_) => ProfileKind::Differential,
        }
    }

    pub fn tensor(&self) -> &ProfileTensor {
        match self {
            StoredProfile::Echo(p) => p,
            StoredProfile::Differential(p) => p,
        }
    }

    pub fn into_differential(self) -> Result<DifferentialEchoProfile> {
        match self {
            StoredProfile::Differential(p) => Ok(p),
            StoredProfile::Echo(_) => Err(Error::argument("expected a differential profile, found an echo profile")),
        }
    }

    pub fn into_echo(self) -> Result<EchoProfile> {
        match self {
            StoredProfile::Echo(p) => Ok(p),
            StoredProfile::Differential(_) => Err(Error::argument("expected an echo profile, found a differential profile")),
        }
    }
}

impl From<EchoProfile> for StoredProfile {
    fn from(p: EchoProfile) -> Self {
        StoredProfile::Echo(p)
    }
}

impl From<DifferentialEchoProfile> for StoredProfile {
    fn from(p: DifferentialEchoProfile) -> Self {
        StoredProfile::Differential(p)
    }
}

fn dim(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::argument(format!("{what} = {v} does not fit the MSEP header")))
}

pub fn write_profile<W: Write>(tensor: &ProfileTensor, kind: ProfileKind, mut w: W) -> Result<()> {
    if tensor.channel_layout.len() != tensor.n_channels {
        return Err(Error::argument("channel layout length differs from n_channels"));
    }
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let kind_code: u32 = match kind {
        ProfileKind::Echo => 0,
        ProfileKind::Differential => 1,
    };
    w.write_all(&kind_code.to_le_bytes())?;
    w.write_all(&dim(tensor.n_channels, "n_channels")?.to_le_bytes())?;
    w.write_all(&dim(tensor.n_bins, "n_bins")?.to_le_bytes())?;
    w.write_all(&dim(tensor.n_frames, "n_frames")?.to_le_bytes())?;
    w.write_all(&tensor.bin_resolution_m.to_le_bytes())?;
    w.write_all(&tensor.frame_rate.to_le_bytes())?;
    for ch in &tensor.channel_layout {
        let band = u8::try_from(ch.band).map_err(|_| Error::argument("band index above 255"))?;
        w.write_all(&[ch.mic.index() as u8, band])?;
    }
    write_f32s(&mut w, tensor.data.iter().map(|&v| v as f32))?;
    w.flush()?;
    Ok(())
}

pub fn read_profile<R: Read>(mut r: R) -> Result<StoredProfile> {
    expect_magic(&mut r, NAME, MAGIC)?;
    expect_version(&mut r, NAME, VERSION)?;
    let kind = match read_u32(&mut r, NAME, "kind")? {
        0 => ProfileKind::Echo,
        1 => ProfileKind::Differential,
        k => return Err(Error::format(NAME, format!("unknown profile kind {k}"))),
    };
    let n_channels = read_u32(&mut r, NAME, "n_channels")? as usize;
    let n_bins = read_u32(&mut r, NAME, "n_bins")? as usize;
    let n_frames = read_u32(&mut r, NAME, "n_frames")? as usize;
    let bin_resolution_m = read_f64(&mut r, NAME, "bin_resolution_m")?;
    let frame_rate = read_f64(&mut r, NAME, "frame_rate")?;
    if !(bin_resolution_m > 0.0 && frame_rate > 0.0) {
        return Err(Error::format(NAME, "non-positive bin resolution or frame rate"));
    }
    let mut layout = Vec::with_capacity(n_channels);
    for _ in 0..n_channels {
        let [mic, band] = read_array::<2, _>(&mut r, NAME, "channel layout")?;
        let mic = match mic {
            0 => Microphone::Left,
            1 => Microphone::Right,
            m => return Err(Error::format(NAME, format!("unknown microphone {m}"))),
        };
        layout.push(ChannelId {
            mic,
            band: band as usize,
        });
    }
    let total = n_channels
        .checked_mul(n_bins)
        .and_then(|v| v.checked_mul(n_frames))
        .ok_or_else(|| Error::format(NAME, "payload size overflows"))?;
    let data = read_f32s(&mut r, total, NAME)?;
    expect_eof(&mut r, NAME)?;
    let tensor = ProfileTensor {
        data: data.into_iter().map(f64::from).collect(),
        n_channels,
        n_bins,
        n_frames,
        bin_resolution_m,
        frame_rate,
        channel_layout: layout,
    };
    Ok(match kind {
        ProfileKind::Echo => StoredProfile::Echo(EchoProfile(tensor)),
        ProfileKind::Differential => StoredProfile::Differential(DifferentialEchoProfile(tensor)),
    })
}

pub fn save_profile(tensor: &ProfileTensor, kind: ProfileKind, path: impl AsRef<Path>) -> Result<()> {
    write_profile(tensor, kind, BufWriter::new(File::create(path)?))
}

pub fn load_profile(path: impl AsRef<Path>) -> Result<StoredProfile> {
    read_profile(BufReader::new(File::open(path)?))
}
