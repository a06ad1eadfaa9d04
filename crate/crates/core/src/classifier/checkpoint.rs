//! `MSMD`: classifier checkpoint.
//!
//! ```text
//! magic "MSMD", version u32 (= 1)
//! config_len u32, config as UTF-8 JSON
//! input_scale f32
//! n_params u32, n_buffers u32
//! per tensor: name_len u16, name bytes, rank u32, dims u64 × rank, f32 values
//! ```
//! Parameters come first, then buffers, in model order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::model::{Model, Tensor};
use super::ModelConfig;
use crate::error::{Error, Result};
use crate::formats::{expect_eof, expect_magic, expect_version, read_array, read_f32s, read_u32, read_u64, write_f32s};

const MAGIC: &[u8; 4] = b"MSMD";
const VERSION: u32 = 1;
const NAME: &str = "MSMD";
const MAX_RANK: u32 = 8;

pub fn write_model<W: Write>(model: &Model, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let config = serde_json::to_vec(model.config())?;
    w.write_all(&(config.len() as u32).to_le_bytes())?;
    w.write_all(&config)?;
    w.write_all(&model.input_scale().to_le_bytes())?;
    w.write_all(&(model.params().len() as u32).to_le_bytes())?;
    w.write_all(&(model.buffers().len() as u32).to_le_bytes())?;
    for t in model.params().iter().chain(model.buffers()) {
        let name = t.name.as_bytes();
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
        for &d in &t.shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        write_f32s(&mut w, t.data.iter().copied())?;
    }
    w.flush()?;
    Ok(())
}

fn read_tensor<R: Read>(r: &mut R) -> Result<Tensor> {
    let name_len = u16::from_le_bytes(read_array::<2, _>(r, NAME, "tensor name length")?) as usize;
    let mut name = vec![0u8; name_len];
    r.read_exact(&mut name)
        .map_err(|_| Error::format(NAME, "truncated tensor name"))?;
    let name = String::from_utf8(name).map_err(|_| Error::format(NAME, "tensor name is not UTF-8"))?;
    let rank = read_u32(r, NAME, "tensor rank")?;
    if rank > MAX_RANK {
        return Err(Error::format(NAME, format!("tensor {name} has rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank as usize);
    let mut n = 1usize;
    for _ in 0..rank {
        let d = usize::try_from(read_u64(r, NAME, "tensor dimension")?)
            .map_err(|_| Error::format(NAME, "tensor dimension too large"))?;
        n = n
            .checked_mul(d)
            .ok_or_else(|| Error::format(NAME, "tensor size overflows"))?;
        shape.push(d);
    }
    let data = read_f32s(r, n, NAME)?;
    Ok(Tensor { name, shape, data })
}

pub fn read_model<R: Read>(mut r: R) -> Result<Model> {
    expect_magic(&mut r, NAME, MAGIC)?;
    expect_version(&mut r, NAME, VERSION)?;
    let config_len = read_u32(&mut r, NAME, "config length")? as usize;
    let mut config = Vec::new();
    (&mut r).take(config_len as u64).read_to_end(&mut config)?;
    if config.len() != config_len {
        return Err(Error::format(NAME, "truncated config"));
    }
    let config: ModelConfig =
        serde_json::from_slice(&config).map_err(|e| Error::format(NAME, format!("config JSON: {e}")))?;
    let input_scale = f32::from_le_bytes(read_array::<4, _>(&mut r, NAME, "input scale")?);
    let n_params = read_u32(&mut r, NAME, "parameter count")?;
    let n_buffers = read_u32(&mut r, NAME, "buffer count")?;
    let params = (0..n_params).map(|_| read_tensor(&mut r)).collect::<Result<_>>()?;
    let buffers = (0..n_buffers).map(|_| read_tensor(&mut r)).collect::<Result<_>>()?;
    expect_eof(&mut r, NAME)?;
    Model::from_parts(config, input_scale, params, buffers)
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    write_model(model, BufWriter::new(File::create(path)?))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    read_model(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::NUM_CLASSES;

    fn small() -> Model {
        let cfg = ModelConfig {
            input_shape: [2, 7, 9],
            encoder_channels: vec![3],
            embedding_dim: 4,
            head_widths: vec![5, NUM_CLASSES],
            ..Default::default()
        };
        let mut m = Model::new(cfg, 8).unwrap();
        m.set_input_scale(0.25).unwrap();
        m
    }

    #[test]
    fn round_trip_is_exact() {
        let m = small();
        let mut bytes = Vec::new();
        write_model(&m, &mut bytes).unwrap();
        let back = read_model(bytes.as_slice()).unwrap();
        assert_eq!(back, m);
        let x = vec![0.3f32; 2 * 7 * 9];
        assert_eq!(back.forward(&x).unwrap(), m.forward(&x).unwrap());
        let mut again = Vec::new();
        write_model(&back, &mut again).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn corruption_is_a_format_error() {
        let mut bytes = Vec::new();
        write_model(&small(), &mut bytes).unwrap();
        for cut in [3, 20, bytes.len() - 1] {
            assert!(matches!(read_model(&bytes[..cut]), Err(Error::Format { .. })), "cut {cut}");
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_model(bad.as_slice()), Err(Error::Format { .. })));
        let mut long = bytes;
        long.push(0);
        assert!(matches!(read_model(long.as_slice()), Err(Error::Format { .. })));
    }
}
