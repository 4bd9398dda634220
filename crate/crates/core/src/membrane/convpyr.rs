//! Convolution-pyramid membranes.
//!
//! The membrane is the ratio `(w * P̂) / (w * χ)` of two convolutions with
//! the same wide kernel `w`. Each convolution is approximated in linear time
//! by a pyramid of small separable filters: analysis `h1` and downsampling
//! on the way down, upsampling and synthesis `h2` on the way up, with `g`
//! applied at every level. Every level is zero-padded before filtering.

use super::SparseBoundaryImage;
use crate::error::{BlendError, Result};
use crate::model::{Mask, OffsetMap};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvPyramidFilters {
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub g: Vec<f64>,
    pub pad: usize,
}

impl Default for ConvPyramidFilters {
    fn default() -> Self {
        serde_json::from_str(include_str!("../../data/convpyr_membrane.json"))
            .expect("bundled filter data parses")
    }
}

impl ConvPyramidFilters {
    pub fn validate(&self) -> Result<()> {
        for (name, k) in [("h1", &self.h1), ("h2", &self.h2), ("g", &self.g)] {
            if k.is_empty() || k.len() % 2 == 0 || k.iter().any(|v| !v.is_finite()) {
                return Err(BlendError::parameter(format!(
                    "filter {name} must have odd length and finite taps"
                )));
            }
        }
        Ok(())
    }
}

/// Separable convolution with a centered odd kernel, zero outside.
fn conv_sep(src: &[f64], w: usize, h: usize, c: usize, k: &[f64]) -> Vec<f64> {
    let r = (k.len() / 2) as isize;
    let mut tmp = vec![0.0; w * h * c];
    tmp.par_chunks_mut(w * c).enumerate().for_each(|(y, out)| {
        let row = &src[y * w * c..(y + 1) * w * c];
        for x in 0..w as isize {
            for (t, &kv) in k.iter().enumerate() {
                let sx = x + t as isize - r;
                if sx < 0 || sx >= w as isize {
                    continue;
                }
                let (o, s) = (x as usize * c, sx as usize * c);
                for ch in 0..c {
                    out[o + ch] += kv * row[s + ch];
                }
            }
        }
    });
    let stride = w * c;
    let mut dst = vec![0.0; w * h * c];
    dst.par_chunks_mut(stride).enumerate().for_each(|(y, out)| {
        for (t, &kv) in k.iter().enumerate() {
            let sy = y as isize + t as isize - r;
            if sy < 0 || sy >= h as isize {
                continue;
            }
            let row = &tmp[sy as usize * stride..(sy as usize + 1) * stride];
            for (o, v) in out.iter_mut().zip(row) {
                *o += kv * v;
            }
        }
    });
    dst
}

fn pad_zero(src: &[f64], w: usize, h: usize, c: usize, p: usize) -> Vec<f64> {
    let pw = w + 2 * p;
    let mut out = vec![0.0; pw * (h + 2 * p) * c];
    for y in 0..h {
        let d = ((y + p) * pw + p) * c;
        out[d..d + w * c].copy_from_slice(&src[y * w * c..(y + 1) * w * c]);
    }
    out
}

/// Approximates `w * src` with the filter pyramid.
pub fn convpyr_apply(filters: &ConvPyramidFilters, src: &[f64], w: usize, h: usize, c: usize) -> Vec<f64> {
    let p = filters.pad;
    let min_size = 2 * p + 2;
    let mut levels = vec![(src.to_vec(), w, h)];
    loop {
        let (cur, lw, lh) = levels.last().expect("nonempty");
        if (*lw).max(*lh) <= min_size || levels.len() > 40 {
            break;
        }
        let (pw, ph) = (lw + 2 * p, lh + 2 * p);
        let blurred = conv_sep(&pad_zero(cur, *lw, *lh, c, p), pw, ph, c, &filters.h1);
        let (dw, dh) = (pw.div_ceil(2), ph.div_ceil(2));
        let mut down = vec![0.0; dw * dh * c];
        down.par_chunks_mut(dw * c).enumerate().for_each(|(y, out)| {
            for x in 0..dw {
                let s = ((2 * y) * pw + 2 * x) * c;
                out[x * c..(x + 1) * c].copy_from_slice(&blurred[s..s + c]);
            }
        });
        levels.push((down, dw, dh));
    }

    let (top, tw, th) = levels.last().expect("nonempty");
    let mut acc = conv_sep(top, *tw, *th, c, &filters.g);
    for l in (0..levels.len() - 1).rev() {
        let (cur, lw, lh) = &levels[l];
        let (cw, ch) = (levels[l + 1].1, levels[l + 1].2);
        let (pw, ph) = (lw + 2 * p, lh + 2 * p);
        let mut up = vec![0.0; pw * ph * c];
        for y in 0..ch {
            for x in 0..cw {
                let (fx, fy) = (2 * x, 2 * y);
                if fx < pw && fy < ph {
                    let d = (fy * pw + fx) * c;
                    up[d..d + c].copy_from_slice(&acc[(y * cw + x) * c..(y * cw + x + 1) * c]);
                }
            }
        }
        let synth = conv_sep(&up, pw, ph, c, &filters.h2);
        let mut next = conv_sep(cur, *lw, *lh, c, &filters.g);
        next.par_chunks_mut(lw * c).enumerate().for_each(|(y, out)| {
            let s = ((y + p) * pw + p) * c;
            for (o, v) in out.iter_mut().zip(&synth[s..s + lw * c]) {
                *o += v;
            }
        });
        acc = next;
    }
    acc
}

/// Per-region precomputation: bounding box and the reciprocal denominator
/// `1 / (w * χ)` for a fixed set of boundary pixels.
#[derive(Debug, Clone)]
pub(crate) struct ConvPlan {
    pub x0: usize,
    pub y0: usize,
    pub bw: usize,
    pub bh: usize,
    pub inv_den: Vec<f64>,
}

impl ConvPlan {
    pub fn new(filters: &ConvPyramidFilters, region: &Mask, indicator: &Mask) -> Result<Self> {
        let (x0, y0, x1, y1) = region
            .bbox()
            .ok_or_else(|| BlendError::structural("empty region"))?;
        let (bw, bh) = (x1 - x0, y1 - y0);
        let chi: Vec<f64> = (0..bw * bh)
            .map(|i| indicator.get(x0 + i % bw, y0 + i / bw) as u8 as f64)
            .collect();
        let den = convpyr_apply(filters, &chi, bw, bh, 1);
        let mut inv_den = vec![0.0; bw * bh];
        for i in 0..bw * bh {
            if region.get(x0 + i % bw, y0 + i / bw) {
                if den[i] < 1e-12 {
                    return Err(BlendError::Numerical(format!(
                        "membrane denominator {:e} at ({}, {})",
                        den[i],
                        x0 + i % bw,
                        y0 + i / bw
                    )));
                }
                inv_den[i] = 1.0 / den[i];
            }
        }
        Ok(Self { x0, y0, bw, bh, inv_den })
    }

    /// Membrane from boundary values at `pts` (`vals` holds `c` values per
    /// point), written into `out` at the region's pixels.
    pub fn evaluate_into(
        &self,
        filters: &ConvPyramidFilters,
        pts: &[(usize, usize)],
        vals: &[f64],
        c: usize,
        region: &Mask,
        out: &mut OffsetMap,
    ) {
        let (x0, y0, bw, bh) = (self.x0, self.y0, self.bw, self.bh);
        let mut sub = vec![0.0; bw * bh * c];
        for (k, &(x, y)) in pts.iter().enumerate() {
            let i = (y - y0) * bw + (x - x0);
            sub[i * c..(i + 1) * c].copy_from_slice(&vals[k * c..(k + 1) * c]);
        }
        let num = convpyr_apply(filters, &sub, bw, bh, c);
        for y in 0..bh {
            for x in 0..bw {
                let (gx, gy) = (x0 + x, y0 + y);
                if region.get(gx, gy) {
                    let i = y * bw + x;
                    for (ch, o) in out.pixel_mut(gx, gy).iter_mut().enumerate() {
                        *o = num[i * c + ch] * self.inv_den[i];
                    }
                }
            }
        }
        for (k, &(x, y)) in pts.iter().enumerate() {
            out.pixel_mut(x, y).copy_from_slice(&vals[k * c..(k + 1) * c]);
        }
    }
}

/// `(w * P̂) / (w * χ)` over the region, zero outside. Pixels carrying a
/// boundary value keep it exactly.
pub fn convpyr_membrane(sparse: &SparseBoundaryImage) -> Result<OffsetMap> {
    convpyr_membrane_with(&ConvPyramidFilters::default(), sparse)
}

pub fn convpyr_membrane_with(filters: &ConvPyramidFilters, sparse: &SparseBoundaryImage) -> Result<OffsetMap> {
    filters.validate()?;
    if sparse.indicator.is_empty() {
        return Err(BlendError::DegenerateInput("no boundary values to interpolate".into()));
    }
    let (w, h) = sparse.region.dims();
    if sparse.indicator.dims() != (w, h) || (sparse.values.width(), sparse.values.height()) != (w, h) {
        return Err(BlendError::structural("sparse boundary image parts differ in size"));
    }
    if !sparse.indicator.is_subset_of(&sparse.region) {
        return Err(BlendError::structural("boundary values lie outside the region"));
    }
    let plan = ConvPlan::new(filters, &sparse.region, &sparse.indicator)?;
    let c = sparse.values.channels();
    let mut pts = Vec::new();
    let mut vals = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if sparse.indicator.get(x, y) {
                pts.push((x, y));
                vals.extend_from_slice(sparse.values.pixel(x, y));
            }
        }
    }
    let mut out = OffsetMap::zeros(w, h, c);
    plan.evaluate_into(filters, &pts, &vals, c, &sparse.region, &mut out);
    Ok(out)
}
