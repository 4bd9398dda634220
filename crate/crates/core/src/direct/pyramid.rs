//! Burt–Adelson Gaussian and Laplacian pyramids with the 5-tap binomial
//! kernel `[1, 4, 6, 4, 1] / 16`, edge replication and ceil-halving levels.

use crate::error::{BlendError, Result};
use crate::model::Frame;
use rayon::prelude::*;

const K: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PyramidKind {
    Gaussian,
    Laplacian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid {
    pub levels: Vec<Frame>,
    pub kind: PyramidKind,
}

impl Pyramid {
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }
}

/// `floor(log2(min(w, h))) - 2`, clamped to `[2, 8]`.
pub fn default_levels(width: usize, height: usize) -> usize {
    let m = width.min(height).max(1);
    let lg = usize::BITS - 1 - m.leading_zeros();
    (lg as i64 - 2).clamp(2, 8) as usize
}

#[inline]
pub(crate) fn half(n: usize) -> usize {
    n.div_ceil(2)
}

pub(crate) fn check_levels(width: usize, height: usize, levels: usize) -> Result<()> {
    if levels == 0 {
        return Err(BlendError::parameter("pyramid needs at least one level"));
    }
    let (mut w, mut h) = (width, height);
    for _ in 1..levels {
        w = half(w);
        h = half(h);
    }
    if w.min(h) < 2 {
        return Err(BlendError::parameter(format!(
            "{levels} levels is too many for {width}x{height}: top level would be {w}x{h}"
        )));
    }
    Ok(())
}

/// Blur with the binomial kernel and keep every other sample in both
/// directions. Only the retained samples are computed.
pub(crate) fn reduce(src: &[f64], w: usize, h: usize, c: usize) -> (Vec<f64>, usize, usize) {
    let (w2, h2) = (half(w), half(h));
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;

    let mut tmp = vec![0.0; h * w2 * c];
    tmp.par_chunks_mut(w2 * c).enumerate().for_each(|(y, out)| {
        let row = &src[y * w * c..(y + 1) * w * c];
        for x in 0..w2 {
            let cx = 2 * x as isize;
            for ch in 0..c {
                let mut acc = 0.0;
                for (t, k) in K.iter().enumerate() {
                    acc += k * row[clamp(cx + t as isize - 2, w) * c + ch];
                }
                out[x * c + ch] = acc;
            }
        }
    });

    let stride = w2 * c;
    let mut dst = vec![0.0; h2 * stride];
    dst.par_chunks_mut(stride).enumerate().for_each(|(y, out)| {
        let cy = 2 * y as isize;
        for (t, k) in K.iter().enumerate() {
            let r = clamp(cy + t as isize - 2, h);
            let row = &tmp[r * stride..(r + 1) * stride];
            for (o, v) in out.iter_mut().zip(row) {
                *o += k * v;
            }
        }
    });
    (dst, w2, h2)
}

/// Upsample a coarse level to `fw x fh`: zero insertion followed by the
/// binomial blur scaled by 4, with the coarse signal edge-replicated.
///
/// Per dimension this is `fine[2m] = (c[m-1] + 6 c[m] + c[m+1]) / 8` and
/// `fine[2m+1] = (c[m] + c[m+1]) / 2`.
pub(crate) fn expand(
    src: &[f64],
    w: usize,
    h: usize,
    c: usize,
    fw: usize,
    fh: usize,
) -> Vec<f64> {
    let at = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;

    let mut tmp = vec![0.0; h * fw * c];
    tmp.par_chunks_mut(fw * c).enumerate().for_each(|(y, out)| {
        let row = &src[y * w * c..(y + 1) * w * c];
        for x in 0..fw {
            let m = (x / 2) as isize;
            for ch in 0..c {
                out[x * c + ch] = if x % 2 == 0 {
                    (row[at(m - 1, w) * c + ch]
                        + 6.0 * row[at(m, w) * c + ch]
                        + row[at(m + 1, w) * c + ch])
                        / 8.0
                } else {
                    (row[at(m, w) * c + ch] + row[at(m + 1, w) * c + ch]) / 2.0
                };
            }
        }
    });

    let stride = fw * c;
    let mut dst = vec![0.0; fh * stride];
    dst.par_chunks_mut(stride).enumerate().for_each(|(y, out)| {
        let m = (y / 2) as isize;
        let row = |i: isize| {
            let r = at(i, h);
            &tmp[r * stride..(r + 1) * stride]
        };
        if y % 2 == 0 {
            let (a, b, d) = (row(m - 1), row(m), row(m + 1));
            for i in 0..stride {
                out[i] = (a[i] + 6.0 * b[i] + d[i]) / 8.0;
            }
        } else {
            let (a, b) = (row(m), row(m + 1));
            for i in 0..stride {
                out[i] = (a[i] + b[i]) / 2.0;
            }
        }
    });
    dst
}

pub fn gaussian_pyramid(frame: &Frame, levels: usize) -> Result<Pyramid> {
    let (w, h, c) = (frame.width(), frame.height(), frame.channels());
    check_levels(w, h, levels)?;
    let mut out = Vec::with_capacity(levels);
    out.push(frame.clone());
    for _ in 1..levels {
        let prev = out.last().expect("nonempty");
        let (data, w2, h2) = reduce(prev.data(), prev.width(), prev.height(), c);
        out.push(Frame::from_parts(w2, h2, c, data));
    }
    Ok(Pyramid {
        levels: out,
        kind: PyramidKind::Gaussian,
    })
}

/// `L_j = G_j - EXPAND(G_{j+1})`, top level `G_{l-1}`.
pub fn laplacian_pyramid(frame: &Frame, levels: usize) -> Result<Pyramid> {
    let g = gaussian_pyramid(frame, levels)?;
    Ok(laplacian_from_gaussian(g))
}

pub(crate) fn laplacian_from_gaussian(g: Pyramid) -> Pyramid {
    let mut levels = g.levels;
    for j in 0..levels.len() - 1 {
        let (fine, coarse) = levels.split_at_mut(j + 1);
        let f = &mut fine[j];
        let cg = &coarse[0];
        let up = expand(
            cg.data(),
            cg.width(),
            cg.height(),
            cg.channels(),
            f.width(),
            f.height(),
        );
        for (v, u) in f.data_mut().iter_mut().zip(&up) {
            *v -= u;
        }
    }
    Pyramid {
        levels,
        kind: PyramidKind::Laplacian,
    }
}

/// Sum of the expanded Laplacian levels.
pub fn collapse(pyramid: &Pyramid) -> Result<Frame> {
    if pyramid.kind != PyramidKind::Laplacian {
        return Err(BlendError::structural("only Laplacian pyramids collapse"));
    }
    let mut iter = pyramid.levels.iter().rev();
    let mut acc = iter
        .next()
        .ok_or_else(|| BlendError::structural("empty pyramid"))?
        .clone();
    for fine in iter {
        let mut data = expand(
            acc.data(),
            acc.width(),
            acc.height(),
            acc.channels(),
            fine.width(),
            fine.height(),
        );
        for (v, l) in data.iter_mut().zip(fine.data()) {
            *v += l;
        }
        acc = Frame::from_parts(fine.width(), fine.height(), fine.channels(), data);
    }
    Ok(acc)
}
