//! Forward and backward kernels. Tensors are plain `f32` slices in row-major
//! `[channel][row][col]` (single sample) or `[sample][feature]` (batch) order.

/// `c = alpha · a·b + beta · c` for row-major `a: m×k`, `b: k×n`, `c: m×n`,
/// with optional transposition of `a` and `b` (as stored).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    a_t: bool,
    b: &[f32],
    b_t: bool,
    c: &mut [f32],
    beta: f32,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the bounds above cover every element addressed by the given
    // dimensions and strides.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of a 3×3, stride-2, padding-1 convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
}

pub(crate) const KSIZE: usize = 3;
const STRIDE: usize = 2;
const PAD: usize = 1;

impl ConvGeom {
    pub fn oh(&self) -> usize {
        (self.h + 2 * PAD - KSIZE) / STRIDE + 1
    }

    pub fn ow(&self) -> usize {
        (self.w + 2 * PAD - KSIZE) / STRIDE + 1
    }

    pub fn out_len(&self) -> usize {
        self.cout * self.oh() * self.ow()
    }

    pub fn in_len(&self) -> usize {
        self.cin * self.h * self.w
    }

    /// Rows of the im2col matrix.
    pub fn k(&self) -> usize {
        self.cin * KSIZE * KSIZE
    }

    pub fn cols_len(&self) -> usize {
        self.k() * self.oh() * self.ow()
    }
}

/// Unfolds `x` into `cols: [cin·9][oh·ow]`.
pub(crate) fn im2col(x: &[f32], g: &ConvGeom, cols: &mut [f32]) {
    let (oh, ow) = (g.oh(), g.ow());
    for c in 0..g.cin {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..KSIZE {
            for kx in 0..KSIZE {
                let row = (c * KSIZE + ky) * KSIZE + kx;
                let dst = &mut cols[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = (oy * STRIDE + ky) as isize - PAD as isize;
                    let out_row = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= g.h as isize {
                        out_row.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, o) in out_row.iter_mut().enumerate() {
                        let ix = (ox * STRIDE + kx) as isize - PAD as isize;
                        *o = if ix < 0 || ix >= g.w as isize { 0.0 } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

/// Adds the folded-back `cols` into `dx` (adjoint of [`im2col`]).
pub(crate) fn col2im_add(cols: &[f32], g: &ConvGeom, dx: &mut [f32]) {
    let (oh, ow) = (g.oh(), g.ow());
    for c in 0..g.cin {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..KSIZE {
            for kx in 0..KSIZE {
                let row = (c * KSIZE + ky) * KSIZE + kx;
                let src = &cols[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = (oy * STRIDE + ky) as isize - PAD as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..ow {
                        let ix = (ox * STRIDE + kx) as isize - PAD as isize;
                        if ix >= 0 && (ix as usize) < g.w {
                            dst[ix as usize] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// `out = W · im2col(x)` with `W: [cout][cin·9]`.
pub(crate) fn conv_forward(w: &[f32], x: &[f32], g: &ConvGeom, cols: &mut [f32], out: &mut [f32]) {
    im2col(x, g, cols);
    gemm(g.cout, g.k(), g.oh() * g.ow(), w, false, cols, false, out, 0.0);
}

/// Weight gradient into `dw` (overwritten) and, if requested, input gradient
/// into `dx` (overwritten).
pub(crate) fn conv_backward(
    w: &[f32],
    x: &[f32],
    dy: &[f32],
    g: &ConvGeom,
    cols: &mut [f32],
    dw: &mut [f32],
    dx: Option<&mut [f32]>,
) {
    let n = g.oh() * g.ow();
    im2col(x, g, cols);
    gemm(g.cout, n, g.k(), dy, false, cols, true, dw, 0.0);
    if let Some(dx) = dx {
        gemm(g.k(), g.cout, n, w, true, dy, false, cols, 0.0);
        dx.fill(0.0);
        col2im_add(cols, g, dx);
    }
}

#[inline]
pub(crate) fn leaky(v: f32, slope: f32) -> f32 {
    if v > 0.0 {
        v
    } else {
        v * slope
    }
}

/// Leaky-ReLU derivative, read off the activation's output (same sign as its input).
#[inline]
pub(crate) fn leaky_grad(out: f32, slope: f32) -> f32 {
    if out > 0.0 {
        1.0
    } else {
        slope
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct-loop convolution used as an oracle.
    fn conv_naive(w: &[f32], x: &[f32], g: &ConvGeom) -> Vec<f32> {
        let (oh, ow) = (g.oh(), g.ow());
        let mut out = vec![0.0f32; g.out_len()];
        for co in 0..g.cout {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0f64;
                    for ci in 0..g.cin {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = (oy * 2 + ky) as isize - 1;
                                let ix = (ox * 2 + kx) as isize - 1;
                                if iy >= 0 && ix >= 0 && (iy as usize) < g.h && (ix as usize) < g.w {
                                    acc += f64::from(w[((co * g.cin + ci) * 3 + ky) * 3 + kx])
                                        * f64::from(x[(ci * g.h + iy as usize) * g.w + ix as usize]);
                                }
                            }
                        }
                    }
                    out[(co * oh + oy) * ow + ox] = acc as f32;
                }
            }
        }
        out
    }

    fn pseudo(n: usize, seed: u32) -> Vec<f32> {
        (0..n)
            .map(|i| {
                let v = (i as u32).wrapping_mul(2_654_435_761).wrapping_add(seed.wrapping_mul(40503));
                (v >> 8) as f32 / (1u32 << 24) as f32 - 0.5
            })
            .collect()
    }

    #[test]
    fn output_sizes_halve_rounding_up() {
        let g = ConvGeom { cin: 4, h: 150, w: 166, cout: 16 };
        assert_eq!((g.oh(), g.ow()), (75, 83));
        let g = ConvGeom { cin: 16, h: 75, w: 83, cout: 32 };
        assert_eq!((g.oh(), g.ow()), (38, 42));
    }

    #[test]
    fn conv_matches_direct_loops() {
        for g in [
            ConvGeom { cin: 3, h: 9, w: 7, cout: 5 },
            ConvGeom { cin: 1, h: 1, w: 1, cout: 2 },
            ConvGeom { cin: 2, h: 6, w: 10, cout: 3 },
        ] {
            let w = pseudo(g.cout * g.k(), 1);
            let x = pseudo(g.in_len(), 2);
            let mut cols = vec![0.0; g.cols_len()];
            let mut out = vec![0.0; g.out_len()];
            conv_forward(&w, &x, &g, &mut cols, &mut out);
            let want = conv_naive(&w, &x, &g);
            for (a, b) in out.iter().zip(&want) {
                assert!((a - b).abs() < 1e-5, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn conv_backward_is_the_adjoint() {
        // <dy, conv(x)> must equal <dx, x> for the input gradient and
        // <dw, w> for the weight gradient (the map is bilinear).
        let g = ConvGeom { cin: 3, h: 8, w: 11, cout: 4 };
        let w = pseudo(g.cout * g.k(), 3);
        let x = pseudo(g.in_len(), 4);
        let dy = pseudo(g.out_len(), 5);
        let mut cols = vec![0.0; g.cols_len()];
        let mut y = vec![0.0; g.out_len()];
        conv_forward(&w, &x, &g, &mut cols, &mut y);
        let mut dw = vec![0.0; w.len()];
        let mut dx = vec![0.0; x.len()];
        conv_backward(&w, &x, &dy, &g, &mut cols, &mut dw, Some(&mut dx));
        let dot = |a: &[f32], b: &[f32]| a.iter().zip(b).map(|(p, q)| f64::from(*p) * f64::from(*q)).sum::<f64>();
        let lhs = dot(&dy, &y);
        assert!((lhs - dot(&dx, &x)).abs() < 1e-4 * lhs.abs().max(1.0));
        assert!((lhs - dot(&dw, &w)).abs() < 1e-4 * lhs.abs().max(1.0));
    }

    #[test]
    fn gemm_transposes() {
        // a: 2×3, b: 3×2
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let mut c = [0.0; 4];
        gemm(2, 3, 2, &a, false, &b, false, &mut c, 0.0);
        assert_eq!(c, [4.0, 5.0, 10.0, 11.0]);
        // aᵀ stored as 3×2.
        let at = [1.0, 4.0, 2.0, 5.0, 3.0, 6.0];
        let mut c2 = [0.0; 4];
        gemm(2, 3, 2, &at, true, &b, false, &mut c2, 0.0);
        assert_eq!(c2, c);
        let bt = [1.0, 0.0, 1.0, 0.0, 1.0, 1.0];
        let mut c3 = [1.0; 4];
        gemm(2, 3, 2, &a, false, &bt, true, &mut c3, 1.0);
        assert_eq!(c3, [5.0, 6.0, 11.0, 12.0]);
    }
}
