//! Raw loops behind the graph primitives. Layouts are NCHW; convolution
//! weights are `[out, in, kh, kw]` for conv2d and `[in, out, kh, kw]` for
//! the transposed convolution, so the two share one correlation kernel.
//!
//! Each output plane is computed by one task with a fixed summation order,
//! so parallel runs are bit-identical to serial ones.

use rayon::prelude::*;

/// Geometry of a strided 2-D correlation from an image side
/// `(c, h, w)` to a feature side `(o, oh, ow)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Geom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub o: usize,
    pub oh: usize,
    pub ow: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
}

/// Output size of a convolution, `None` when the kernel does not fit.
pub fn conv2d_out(
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> Option<(usize, usize)> {
    if stride == 0 || h + 2 * pad < kh || w + 2 * pad < kw {
        return None;
    }
    Some((
        (h + 2 * pad - kh) / stride + 1,
        (w + 2 * pad - kw) / stride + 1,
    ))
}

/// Output size of a transposed convolution, `None` when padding eats the
/// whole output.
pub fn conv_transpose2d_out(
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> Option<(usize, usize)> {
    if stride == 0 || h == 0 || w == 0 {
        return None;
    }
    let oh = ((h - 1) * stride + kh).checked_sub(2 * pad)?;
    let ow = ((w - 1) * stride + kw).checked_sub(2 * pad)?;
    (oh > 0 && ow > 0).then_some((oh, ow))
}

/// Range of feature coordinates whose tap `k` lands inside `0..len`.
#[inline]
fn valid_range(k: usize, pad: usize, stride: usize, len: usize, out_len: usize) -> (usize, usize) {
    let k = k as isize;
    let pad = pad as isize;
    let s = stride as isize;
    // need 0 <= o*s + k - pad <= len-1
    let lo = (pad - k + s - 1).div_euclid(s).max(0);
    let hi = (len as isize - 1 + pad - k)
        .div_euclid(s)
        .min(out_len as isize - 1);
    if hi < lo {
        (0, 0)
    } else {
        (lo as usize, hi as usize + 1)
    }
}

/// `feat[n,o] += sum_c w[o,c] (*) img[n,c]`
pub(crate) fn corr_forward(img: &[f64], wt: &[f64], g: &Geom, feat: &mut [f64]) {
    let img_plane = g.h * g.w;
    let feat_plane = g.oh * g.ow;
    if feat_plane == 0 {
        return;
    }
    feat.par_chunks_mut(feat_plane)
        .enumerate()
        .for_each(|(idx, out)| {
            let (n, o) = (idx / g.o, idx % g.o);
            {
                for c in 0..g.c {
                    let src = &img[(n * g.c + c) * img_plane..][..img_plane];
                    for ki in 0..g.kh {
                        let (y0, y1) = valid_range(ki, g.pad, g.stride, g.h, g.oh);
                        for kj in 0..g.kw {
                            let wv = wt[((o * g.c + c) * g.kh + ki) * g.kw + kj];
                            let (x0, x1) = valid_range(kj, g.pad, g.stride, g.w, g.ow);
                            for oy in y0..y1 {
                                let iy = oy * g.stride + ki - g.pad;
                                let row = &src[iy * g.w..][..g.w];
                                let dst = &mut out[oy * g.ow..][..g.ow];
                                for ox in x0..x1 {
                                    dst[ox] += wv * row[ox * g.stride + kj - g.pad];
                                }
                            }
                        }
                    }
                }
            }
        });
}

/// Adjoint of [`corr_forward`] in the image argument.
pub(crate) fn corr_backward_data(feat: &[f64], wt: &[f64], g: &Geom, img: &mut [f64]) {
    let img_plane = g.h * g.w;
    let feat_plane = g.oh * g.ow;
    if img_plane == 0 {
        return;
    }
    img.par_chunks_mut(img_plane)
        .enumerate()
        .for_each(|(idx, dst)| {
            let (n, c) = (idx / g.c, idx % g.c);
            {
                for o in 0..g.o {
                    let src = &feat[(n * g.o + o) * feat_plane..][..feat_plane];
                    for ki in 0..g.kh {
                        let (y0, y1) = valid_range(ki, g.pad, g.stride, g.h, g.oh);
                        for kj in 0..g.kw {
                            let wv = wt[((o * g.c + c) * g.kh + ki) * g.kw + kj];
                            let (x0, x1) = valid_range(kj, g.pad, g.stride, g.w, g.ow);
                            for oy in y0..y1 {
                                let iy = oy * g.stride + ki - g.pad;
                                let frow = &src[oy * g.ow..][..g.ow];
                                let irow = &mut dst[iy * g.w..][..g.w];
                                for ox in x0..x1 {
                                    irow[ox * g.stride + kj - g.pad] += wv * frow[ox];
                                }
                            }
                        }
                    }
                }
            }
        });
}

/// Gradient of [`corr_forward`] in the weight argument.
pub(crate) fn corr_backward_weight(img: &[f64], feat: &[f64], g: &Geom, wt: &mut [f64]) {
    let img_plane = g.h * g.w;
    let feat_plane = g.oh * g.ow;
    let taps = g.kh * g.kw;
    wt.par_chunks_mut(taps).enumerate().for_each(|(idx, wk)| {
        let (o, c) = (idx / g.c, idx % g.c);
        {
            for ki in 0..g.kh {
                let (y0, y1) = valid_range(ki, g.pad, g.stride, g.h, g.oh);
                for kj in 0..g.kw {
                    let (x0, x1) = valid_range(kj, g.pad, g.stride, g.w, g.ow);
                    let mut acc = 0.0;
                    for n in 0..g.n {
                        let src = &img[(n * g.c + c) * img_plane..][..img_plane];
                        let f = &feat[(n * g.o + o) * feat_plane..][..feat_plane];
                        for oy in y0..y1 {
                            let iy = oy * g.stride + ki - g.pad;
                            let irow = &src[iy * g.w..][..g.w];
                            let frow = &f[oy * g.ow..][..g.ow];
                            for ox in x0..x1 {
                                acc += irow[ox * g.stride + kj - g.pad] * frow[ox];
                            }
                        }
                    }
                    wk[ki * g.kw + kj] += acc;
                }
            }
        }
    });
}

/// Adds `bias[ch]` to every element of channel `ch`.
pub(crate) fn add_channel_bias(y: &mut [f64], bias: &[f64], n: usize, plane: usize) {
    let ch = bias.len();
    for i in 0..n {
        for (c, &b) in bias.iter().enumerate() {
            for v in &mut y[(i * ch + c) * plane..][..plane] {
                *v += b;
            }
        }
    }
}

pub(crate) fn channel_sums(dy: &[f64], n: usize, ch: usize, plane: usize, out: &mut [f64]) {
    for i in 0..n {
        for (c, o) in out.iter_mut().enumerate().take(ch) {
            *o += dy[(i * ch + c) * plane..][..plane].iter().sum::<f64>();
        }
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
