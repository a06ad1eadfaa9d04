//! `MSDS`: a single-file container of labeled windows.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "MSDS"
//!      4     4  version (u32, = 1)
//!      8     8  n_samples (u64)
//!     16    12  tensor dims: channels, bins, frames (3 × u32)
//!     28     4  n_labels (u32)
//!     32     …  label table: per label, u8 length + UTF-8 name, in class-index order
//!      …  24·N  index: per sample
//!                 u8 label, 3 zero bytes, u32 group, f64 start_time_s,
//!                 u64 absolute byte offset of its tensor block
//!      …     …  tensor blocks, f32 row-major [channel][bin][frame]
//! ```
//! The index sits in front of the payload so one sample can be read with a
//! single seek ([`DatasetFile::read_sample`]).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use super::WindowedSample;
use crate::error::{Error, Result};
use crate::formats::{expect_magic, expect_version, read_array, read_f32s, read_f64, read_u32, read_u64, write_f32s};
use crate::labels::ActivityClass;

const MAGIC: &[u8; 4] = b"MSDS";
const VERSION: u32 = 1;
const NAME: &str = "MSDS";
const INDEX_ENTRY: u64 = 24;

/// Per-sample index entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexEntry {
    pub label: ActivityClass,
    pub group: u32,
    pub start_time_s: f64,
    pub offset: u64,
}

pub fn write_dataset<W: Write>(samples: &[WindowedSample], mut w: W) -> Result<()> {
    let shape = samples.first().map_or([0; 3], |s| s.shape);
    if let Some(bad) = samples.iter().find(|s| s.shape != shape || s.tensor.len() != shape.iter().product::<usize>()) {
        return Err(Error::argument(format!(
            "all samples must share shape {shape:?}; found {:?} with {} values",
            bad.shape,
            bad.tensor.len()
        )));
    }
    let dims: Vec<u32> = shape
        .iter()
        .map(|&d| u32::try_from(d).map_err(|_| Error::argument("tensor dimension too large")))
        .collect::<Result<_>>()?;

    let mut header = Vec::new();
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&VERSION.to_le_bytes());
    header.extend_from_slice(&(samples.len() as u64).to_le_bytes());
    for d in &dims {
        header.extend_from_slice(&d.to_le_bytes());
    }
    header.extend_from_slice(&(ActivityClass::ALL.len() as u32).to_le_bytes());
    for class in ActivityClass::ALL {
        let name = class.name().as_bytes();
        header.push(name.len() as u8);
        header.extend_from_slice(name);
    }
    let block = shape.iter().product::<usize>() as u64 * 4;
    let payload_start = header.len() as u64 + INDEX_ENTRY * samples.len() as u64;
    for (i, s) in samples.iter().enumerate() {
        header.push(s.label.index() as u8);
        header.extend_from_slice(&[0; 3]);
        header.extend_from_slice(&s.group.to_le_bytes());
        header.extend_from_slice(&s.start_time_s.to_le_bytes());
        header.extend_from_slice(&(payload_start + i as u64 * block).to_le_bytes());
    }
    w.write_all(&header)?;
    for s in samples {
        write_f32s(&mut w, s.tensor.iter().copied())?;
    }
    w.flush()?;
    Ok(())
}

/// Header and index of an `MSDS` file, with random access to its samples.
#[derive(Debug)]
pub struct DatasetFile {
    pub path: PathBuf,
    pub shape: [usize; 3],
    pub entries: Vec<IndexEntry>,
}

impl DatasetFile {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut r = BufReader::new(File::open(&path)?);
        let (shape, entries) = read_header(&mut r)?;
        let file_len = std::fs::metadata(&path)?.len();
        let block = shape.iter().product::<usize>() as u64 * 4;
        if let Some(e) = entries.iter().find(|e| e.offset.checked_add(block).map_or(true, |end| end > file_len)) {
            return Err(Error::format(NAME, format!("sample block at {} runs past end of file", e.offset)));
        }
        Ok(Self { path, shape, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn groups(&self) -> Vec<u32> {
        self.entries.iter().map(|e| e.group).collect()
    }

    pub fn read_sample(&self, index: usize) -> Result<WindowedSample> {
        let e = self
            .entries
            .get(index)
            .ok_or_else(|| Error::argument(format!("sample {index} out of range ({} samples)", self.len())))?;
        let mut f = File::open(&self.path)?;
        f.seek(SeekFrom::Start(e.offset))?;
        let tensor = read_f32s(&mut BufReader::new(f), self.shape.iter().product(), NAME)?;
        Ok(WindowedSample {
            tensor,
            shape: self.shape,
            label: e.label,
            start_time_s: e.start_time_s,
            group: e.group,
        })
    }
}

fn read_header<R: Read>(r: &mut R) -> Result<([usize; 3], Vec<IndexEntry>)> {
    expect_magic(r, NAME, MAGIC)?;
    expect_version(r, NAME, VERSION)?;
    let n = read_u64(r, NAME, "n_samples")?;
    let mut shape = [0usize; 3];
    for d in &mut shape {
        *d = read_u32(r, NAME, "tensor dims")? as usize;
    }
    let n_labels = read_u32(r, NAME, "n_labels")? as usize;
    if n_labels != ActivityClass::ALL.len() {
        return Err(Error::format(NAME, format!("label table has {n_labels} entries, expected 6")));
    }
    for class in ActivityClass::ALL {
        let [len] = read_array::<1, _>(r, NAME, "label table")?;
        let mut name = vec![0u8; len as usize];
        r.read_exact(&mut name).map_err(|_| Error::format(NAME, "truncated label table"))?;
        if name != class.name().as_bytes() {
            return Err(Error::format(
                NAME,
                format!("label {} is {:?}, expected {}", class.index(), String::from_utf8_lossy(&name), class),
            ));
        }
    }
    let n = usize::try_from(n).map_err(|_| Error::format(NAME, "n_samples too large"))?;
    let mut entries = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let [label, ..] = read_array::<4, _>(r, NAME, "index")?;
        let label = ActivityClass::from_index(label as usize)
            .ok_or_else(|| Error::format(NAME, format!("unknown label index {label}")))?;
        let group = read_u32(r, NAME, "index")?;
        let start_time_s = read_f64(r, NAME, "index")?;
        let offset = read_u64(r, NAME, "index")?;
        entries.push(IndexEntry {
            label,
            group,
            start_time_s,
            offset,
        });
    }
    Ok((shape, entries))
}

/// Reads a whole container whose blocks follow the index in order (as
/// written by [`write_dataset`]).
pub fn read_dataset<R: Read>(mut r: R) -> Result<Vec<WindowedSample>> {
    let (shape, entries) = read_header(&mut r)?;
    let block = shape.iter().product::<usize>();
    let mut pos = None;
    let mut out = Vec::with_capacity(entries.len());
    for e in entries {
        if let Some(p) = pos {
            if e.offset != p {
                return Err(Error::format(NAME, "sample blocks are not stored in index order"));
            }
        }
        pos = Some(e.offset + block as u64 * 4);
        out.push(WindowedSample {
            tensor: read_f32s(&mut r, block, NAME)?,
            shape,
            label: e.label,
            start_time_s: e.start_time_s,
            group: e.group,
        });
    }
    crate::formats::expect_eof(&mut r, NAME)?;
    Ok(out)
}

pub fn save_dataset(samples: &[WindowedSample], path: impl AsRef<Path>) -> Result<()> {
    write_dataset(samples, BufWriter::new(File::create(path)?))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<WindowedSample>> {
    read_dataset(BufReader::new(File::open(path)?))
}
