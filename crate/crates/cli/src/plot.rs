//! PNG heatmaps with the numbers behind them written as CSV.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use echodiet::{Error, Result};

/// Row-major matrix of values to draw; row 0 is drawn at the top.
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl Grid {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || values.len() != rows * cols {
            return Err(Error::Argument(format!("{rows}x{cols} grid with {} values", values.len())));
        }
        Ok(Self { rows, cols, values })
    }

    fn range(&self) -> (f64, f64) {
        let finite = self.values.iter().copied().filter(|v| v.is_finite());
        let lo = finite.clone().fold(f64::INFINITY, f64::min);
        let hi = finite.fold(f64::NEG_INFINITY, f64::max);
        if lo.is_finite() {
            (lo, hi)
        } else {
            (0.0, 0.0)
        }
    }

    pub fn write_csv(&self, path: &Path, row_names: &[String], col_names: &[String]) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        write!(w, "row")?;
        for c in col_names {
            write!(w, ",{c}")?;
        }
        writeln!(w)?;
        for (name, row) in row_names.iter().zip(self.values.chunks(self.cols)) {
            write!(w, "{name}")?;
            for v in row {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Each cell becomes a `cell_h` by `cell_w` block of colour.
    pub fn write_png(&self, path: &Path, cell_w: usize, cell_h: usize) -> Result<()> {
        let (lo, hi) = self.range();
        let span = if hi > lo { hi - lo } else { 1.0 };
        let width = self.cols * cell_w;
        let height = self.rows * cell_h;
        let mut pixels = Vec::with_capacity(width * height * 3);
        for r in 0..self.rows {
            let mut line = Vec::with_capacity(width * 3);
            for c in 0..self.cols {
                let v = self.values[r * self.cols + c];
                let t = if v.is_finite() { (v - lo) / span } else { 0.0 };
                let rgb = colormap(t);
                for _ in 0..cell_w {
                    line.extend_from_slice(&rgb);
                }
            }
            for _ in 0..cell_h {
                pixels.extend_from_slice(&line);
            }
        }
        let file = BufWriter::new(File::create(path)?);
        let mut enc = png::Encoder::new(file, width as u32, height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        writer
            .write_image_data(&pixels)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        Ok(())
    }
}

/// Piecewise-linear approximation of viridis.
fn colormap(t: f64) -> [u8; 3] {
    const STOPS: [[f64; 3]; 5] = [
        [68.0, 1.0, 84.0],
        [59.0, 82.0, 139.0],
        [33.0, 145.0, 140.0],
        [94.0, 201.0, 98.0],
        [253.0, 231.0, 37.0],
    ];
    let x = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (x.floor() as usize).min(STOPS.len() - 2);
    let f = x - i as f64;
    let mut out = [0u8; 3];
    for k in 0..3 {
        out[k] = (STOPS[i][k] + f * (STOPS[i + 1][k] - STOPS[i][k])).round() as u8;
    }
    out
}
