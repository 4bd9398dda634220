//! Direct composition: feather blending and multi-band blending.

mod pyramid;

pub use pyramid::{
    collapse, default_levels, gaussian_pyramid, laplacian_pyramid, Pyramid, PyramidKind,
};

use crate::compose::{check_layout, compose_frames};
use crate::error::{BlendError, Result};
use crate::model::{check_frames, frames_at, Frame, MappedStream};
use crate::seams::{SeamLayout, WeightMaps};
use pyramid::{check_levels, expand, reduce};
use rayon::prelude::*;

/// `P = Σ ω_i P_i` for frame `frame_index`.
pub fn feather_blend(
    streams: &[MappedStream],
    weights: &WeightMaps,
    frame_index: usize,
) -> Result<Frame> {
    let frames = frames_at(streams, frame_index)?;
    feather_blend_frames(&frames, weights)
}

/// Weighted sum evaluated as `P_r + Σ_{i≠r} ω_i (P_i - P_r)`, with `r` the
/// heaviest stream at the pixel, so equal inputs come through unchanged bit
/// for bit.
pub fn feather_blend_frames(frames: &[&Frame], weights: &WeightMaps) -> Result<Frame> {
    check_frames(frames)?;
    if frames.len() != weights.weights.len() {
        return Err(BlendError::structural(format!(
            "{} streams but {} weight maps",
            frames.len(),
            weights.weights.len()
        )));
    }
    let (w, h, c) = (frames[0].width(), frames[0].height(), frames[0].channels());
    if (w, h) != (weights.width, weights.height) {
        return Err(BlendError::structural("weight maps and frames differ in size"));
    }
    let n = frames.len();
    let mut out = vec![0.0; w * h * c];
    out.par_chunks_mut(w * c).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            let p = y * w + x;
            let mut r = usize::MAX;
            let mut best = 0.0;
            for i in 0..n {
                let wi = weights.weights[i][p];
                if wi > best {
                    best = wi;
                    r = i;
                }
            }
            if r == usize::MAX {
                continue;
            }
            let base = frames[r].pixel(x, y);
            let px = &mut row[x * c..(x + 1) * c];
            px.copy_from_slice(base);
            for i in (0..n).filter(|&i| i != r) {
                let wi = weights.weights[i][p];
                if wi == 0.0 {
                    continue;
                }
                for (o, (v, b)) in px.iter_mut().zip(frames[i].pixel(x, y).iter().zip(base)) {
                    *o += wi * (v - b);
                }
            }
        }
    });
    Ok(Frame::from_parts(w, h, c, out))
}

/// Multi-band blender with the per-level mask weights precomputed.
///
/// Each stream's Laplacian pyramid is weighted at every level by the
/// Gaussian pyramid of its trimmed mask (renormalized so the weights sum to
/// one wherever any of them is positive), and the blended pyramid is
/// collapsed. Pixels a stream does not cover are filled from the trimmed
/// composite before its pyramid is built, so no undefined data leaks in.
#[derive(Debug, Clone)]
pub struct MultibandBlender {
    levels: usize,
    width: usize,
    height: usize,
    // weights[i][j]: stream i, level j, one scalar per pixel
    weights: Vec<Vec<Vec<f64>>>,
    layout: SeamLayout,
}

impl MultibandBlender {
    pub fn new(layout: &SeamLayout, levels: usize) -> Result<Self> {
        let (w, h) = layout.dims();
        check_levels(w, h, levels)?;
        let n = layout.stream_count();
        let mut weights: Vec<Vec<Vec<f64>>> = layout
            .trimmed_masks()
            .iter()
            .map(|m| {
                let mut lv = vec![m.data().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect::<Vec<f64>>()];
                let (mut lw, mut lh) = (w, h);
                for _ in 1..levels {
                    let (d, w2, h2) = reduce(lv.last().expect("nonempty"), lw, lh, 1);
                    lv.push(d);
                    lw = w2;
                    lh = h2;
                }
                lv
            })
            .collect();
        for j in 0..levels {
            let len = weights[0][j].len();
            for p in 0..len {
                let s: f64 = (0..n).map(|i| weights[i][j][p]).sum();
                for wi in weights.iter_mut() {
                    wi[j][p] = if s > 0.0 { wi[j][p] / s } else { 0.0 };
                }
            }
        }
        Ok(Self {
            levels,
            width: w,
            height: h,
            weights,
            layout: layout.clone(),
        })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn blend(&self, frames: &[&Frame]) -> Result<Frame> {
        check_layout(frames, &self.layout)?;
        let c = frames[0].channels();
        let composite = compose_frames(frames, &self.layout)?;

        let mut dims = vec![(self.width, self.height)];
        for _ in 1..self.levels {
            let (w, h) = *dims.last().expect("nonempty");
            dims.push((pyramid::half(w), pyramid::half(h)));
        }
        let mut blended: Vec<Vec<f64>> = dims.iter().map(|&(w, h)| vec![0.0; w * h * c]).collect();

        for (i, frame) in frames.iter().enumerate() {
            let mask = &self.layout.masks()[i];
            let mut filled = composite.data().to_vec();
            filled
                .par_chunks_mut(c)
                .zip(frame.data().par_chunks(c))
                .zip(mask.data().par_iter())
                .for_each(|((dst, src), &m)| {
                    if m {
                        dst.copy_from_slice(src);
                    }
                });

            let mut g = vec![filled];
            for j in 1..self.levels {
                let (w, h) = dims[j - 1];
                g.push(reduce(&g[j - 1], w, h, c).0);
            }
            for j in 0..self.levels {
                let (w, h) = dims[j];
                let lap: std::borrow::Cow<[f64]> = if j + 1 < self.levels {
                    let (cw, ch) = dims[j + 1];
                    let mut up = expand(&g[j + 1], cw, ch, c, w, h);
                    up.iter_mut().zip(&g[j]).for_each(|(u, v)| *u = v - *u);
                    up.into()
                } else {
                    (&g[j][..]).into()
                };
                let wt = &self.weights[i][j];
                blended[j]
                    .par_chunks_mut(c)
                    .zip(lap.par_chunks(c))
                    .zip(wt.par_iter())
                    .for_each(|((acc, l), &a)| {
                        if a != 0.0 {
                            for (o, v) in acc.iter_mut().zip(l) {
                                *o += a * v;
                            }
                        }
                    });
            }
        }

        let levels = blended
            .into_iter()
            .zip(&dims)
            .map(|(d, &(w, h))| Frame::from_parts(w, h, c, d))
            .collect();
        collapse(&Pyramid {
            levels,
            kind: PyramidKind::Laplacian,
        })
    }
}

/// `P = Σ_j EXPAND(Q_j)` with `Q_j = Σ_i G_i^j L_i^j`.
pub fn multiband_blend(
    streams: &[MappedStream],
    layout: &SeamLayout,
    levels: usize,
    frame_index: usize,
) -> Result<Frame> {
    let frames = frames_at(streams, frame_index)?;
    MultibandBlender::new(layout, levels)?.blend(&frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Mask;
    use crate::seams::{compute_seams, feather_weights};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn strips(w: usize, h: usize, overlap: usize) -> Vec<Mask> {
        vec![
            Mask::from_fn(w, h, |x, _| x < w / 2 + overlap / 2),
            Mask::from_fn(w, h, |x, _| x >= w / 2 - overlap / 2),
        ]
    }

    fn streams_from(frames: Vec<Frame>, masks: Vec<Mask>) -> Vec<MappedStream> {
        frames
            .into_iter()
            .zip(masks)
            .enumerate()
            .map(|(i, (f, m))| MappedStream::new(vec![f], m, i + 1).unwrap())
            .collect()
    }

    #[test]
    fn feather_constant_streams_average_on_seam() {
        let (w, h) = (100, 4);
        let masks = strips(w, h, 20);
        let layout = compute_seams(&masks).unwrap();
        let wm = feather_weights(&masks, &layout, None).unwrap();
        let streams = streams_from(vec![Frame::filled(w, h, 3, 0.2), Frame::filled(w, h, 3, 0.8)], masks);
        let out = feather_blend(&streams, &wm, 0).unwrap();
        // seam between x = 49 and x = 50: both have weights near 0.5
        let seam = (0..w).find(|&x| wm.weight(0, x, 0) == 0.5);
        if let Some(x) = seam {
            assert!((out.get(x, 0, 0) - 0.5).abs() < 1e-12);
        }
        assert_eq!(out.get(0, 0, 0), 0.2);
        assert_eq!(out.get(w - 1, 0, 0), 0.8);
        for x in 1..w {
            assert!(out.get(x, 0, 0) >= out.get(x - 1, 0, 0));
        }
    }

    #[test]
    fn feather_identical_streams_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (w, h) = (60, 30);
        let masks = strips(w, h, 14);
        let layout = compute_seams(&masks).unwrap();
        let wm = feather_weights(&masks, &layout, None).unwrap();
        let f = Frame::from_fn(w, h, 3, |_, _, _| rng.gen_range(0.0..1.0));
        let streams = streams_from(vec![f.clone(), f.clone()], masks);
        assert_eq!(feather_blend(&streams, &wm, 0).unwrap(), f);
    }

    #[test]
    fn feather_matches_weighted_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (w, h) = (48, 40);
        let masks = vec![
            Mask::from_fn(w, h, |x, y| x < 30 && y < 28),
            Mask::from_fn(w, h, |x, y| x >= 18 && y < 28),
            Mask::from_fn(w, h, |_, y| y >= 20),
        ];
        let layout = compute_seams(&masks).unwrap();
        let wm = feather_weights(&masks, &layout, Some(5.0)).unwrap();
        let frames: Vec<Frame> = (0..3)
            .map(|_| Frame::from_fn(w, h, 3, |_, _, _| rng.gen_range(0.0..1.0)))
            .collect();
        let refs: Vec<&Frame> = frames.iter().collect();
        let out = feather_blend_frames(&refs, &wm).unwrap();
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    let expect: f64 = (0..3).map(|i| wm.weight(i, x, y) * frames[i].get(x, y, c)).sum();
                    assert!((out.get(x, y, c) - expect).abs() < 1e-12);
                }
            }
        }
        assert!(feather_blend_frames(&refs[..2], &wm).is_err());
    }

    #[test]
    fn multiband_identical_streams() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (w, h) = (96, 64);
        let masks = strips(w, h, 20);
        let layout = compute_seams(&masks).unwrap();
        let f = Frame::from_fn(w, h, 3, |_, _, _| rng.gen_range(0.0..1.0));
        let streams = streams_from(vec![f.clone(), f.clone()], masks);
        let out = multiband_blend(&streams, &layout, 4, 0).unwrap();
        let mae: f64 = out.data().iter().zip(f.data()).map(|(a, b)| (a - b).abs()).sum::<f64>()
            / f.data().len() as f64;
        assert!(mae < 1e-4, "mae {mae}");
    }

    // ---- scalar reference over a single scanline ----

    fn reduce_1d(s: &[f64]) -> Vec<f64> {
        let k = [1.0, 4.0, 6.0, 4.0, 1.0];
        let n = s.len() as isize;
        (0..s.len().div_ceil(2))
            .map(|m| {
                (0..5)
                    .map(|t| k[t] * s[(2 * m as isize + t as isize - 2).clamp(0, n - 1) as usize])
                    .sum::<f64>()
                    / 16.0
            })
            .collect()
    }

    fn expand_1d(s: &[f64], n: usize) -> Vec<f64> {
        let at = |i: isize| s[i.clamp(0, s.len() as isize - 1) as usize];
        (0..n)
            .map(|x| {
                let m = (x / 2) as isize;
                if x % 2 == 0 {
                    (at(m - 1) + 6.0 * at(m) + at(m + 1)) / 8.0
                } else {
                    (at(m) + at(m + 1)) / 2.0
                }
            })
            .collect()
    }

    fn multiband_1d(a: &[f64], b: &[f64], seam: usize, levels: usize) -> Vec<f64> {
        let gauss = |s: &[f64]| {
            let mut g = vec![s.to_vec()];
            for _ in 1..levels {
                g.push(reduce_1d(g.last().unwrap()));
            }
            g
        };
        let lap = |g: &Vec<Vec<f64>>| {
            let mut l = Vec::new();
            for j in 0..levels - 1 {
                let up = expand_1d(&g[j + 1], g[j].len());
                l.push(g[j].iter().zip(&up).map(|(x, u)| x - u).collect::<Vec<_>>());
            }
            l.push(g[levels - 1].clone());
            l
        };
        let ma: Vec<f64> = (0..a.len()).map(|x| if x < seam { 1.0 } else { 0.0 }).collect();
        let mb: Vec<f64> = ma.iter().map(|v| 1.0 - v).collect();
        let (ga, gb) = (gauss(&ma), gauss(&mb));
        let (la, lb) = (lap(&gauss(a)), lap(&gauss(b)));
        let q: Vec<Vec<f64>> = (0..levels)
            .map(|j| {
                (0..la[j].len())
                    .map(|p| {
                        let s = ga[j][p] + gb[j][p];
                        (ga[j][p] * la[j][p] + gb[j][p] * lb[j][p]) / s
                    })
                    .collect()
            })
            .collect();
        let mut acc = q[levels - 1].clone();
        for j in (0..levels - 1).rev() {
            let up = expand_1d(&acc, q[j].len());
            acc = up.iter().zip(&q[j]).map(|(u, v)| u + v).collect();
        }
        acc
    }

    #[test]
    fn multiband_constant_step_matches_scanline_reference() {
        let (w, h) = (128, 32);
        let masks = strips(w, h, 26);
        let layout = compute_seams(&masks).unwrap();
        let seam = (0..w).find(|&x| layout.label(x, 0) == Some(1)).unwrap();
        let streams = streams_from(vec![Frame::filled(w, h, 1, 0.2), Frame::filled(w, h, 1, 0.8)], masks.clone());
        let levels = 4;
        let out = multiband_blend(&streams, &layout, levels, 0).unwrap();

        // uncovered samples are filled from the trimmed composite
        let comp = |x: usize| if x < seam { 0.2 } else { 0.8 };
        let a: Vec<f64> = (0..w).map(|x| if masks[0].get(x, 0) { 0.2 } else { comp(x) }).collect();
        let b: Vec<f64> = (0..w).map(|x| if masks[1].get(x, 0) { 0.8 } else { comp(x) }).collect();
        let expect = multiband_1d(&a, &b, seam, levels);
        for y in [0, h / 2, h - 1] {
            for x in 0..w {
                assert!((out.get(x, y, 0) - expect[x]).abs() < 1e-12, "x={x} y={y}");
            }
        }
        for x in 1..w {
            assert!(out.get(x, 0, 0) >= out.get(x - 1, 0, 0) - 1e-12);
        }

        // transition is wider than feathering at the default radius
        let wm = feather_weights(&masks, &layout, None).unwrap();
        let fb = feather_blend(&streams, &wm, 0).unwrap();
        let width_of = |f: &Frame| {
            (0..w)
                .filter(|&x| {
                    let v = f.get(x, 0, 0);
                    v > 0.2 + 1e-3 && v < 0.8 - 1e-3
                })
                .count()
        };
        assert!(width_of(&out) > width_of(&fb), "{} vs {}", width_of(&out), width_of(&fb));
    }

    #[test]
    fn multiband_averages_a_brightened_stream() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (w, h) = (128, 64);
        let masks = strips(w, h, 26);
        let layout = compute_seams(&masks).unwrap();
        let a = Frame::from_fn(w, h, 3, |_, _, _| rng.gen_range(0.2..0.6));
        let b = Frame::from_fn(w, h, 3, |x, y, c| a.get(x, y, c) + 0.3);
        let streams = streams_from(vec![a.clone(), b.clone()], masks);
        let out = multiband_blend(&streams, &layout, default_levels(w, h), 0).unwrap();
        for side in 0..2 {
            let (mut so, mut sa, mut sb, mut n) = (0.0, 0.0, 0.0, 0.0);
            for y in 0..h {
                for x in 0..w {
                    if layout.label(x, y) == Some(side) {
                        for c in 0..3 {
                            so += out.get(x, y, c);
                            sa += a.get(x, y, c);
                            sb += b.get(x, y, c);
                            n += 1.0;
                        }
                    }
                }
            }
            let (mo, ma, mb) = (so / n, sa / n, sb / n);
            assert!(mo > ma && mo < mb, "side {side}: {ma} < {mo} < {mb}");
        }
    }

    #[test]
    fn order_independence() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (w, h) = (80, 48);
        let masks = vec![
            Mask::from_fn(w, h, |x, _| x < 34),
            Mask::from_fn(w, h, |x, _| x >= 22 && x < 60),
            Mask::from_fn(w, h, |x, _| x >= 50),
        ];
        let frames: Vec<Frame> = (0..3)
            .map(|_| Frame::from_fn(w, h, 3, |_, _, _| rng.gen_range(0.0..1.0)))
            .collect();
        let layout = compute_seams(&masks).unwrap();
        let refs: Vec<&Frame> = frames.iter().collect();
        let base = MultibandBlender::new(&layout, 3).unwrap().blend(&refs).unwrap();
        let wm = feather_weights(&masks, &layout, None).unwrap();
        let fb = feather_blend_frames(&refs, &wm).unwrap();

        let perm = [2, 0, 1];
        let pmasks: Vec<Mask> = perm.iter().map(|&i| masks[i].clone()).collect();
        let prefs: Vec<&Frame> = perm.iter().map(|&i| &frames[i]).collect();
        let playout = compute_seams(&pmasks).unwrap();
        let other = MultibandBlender::new(&playout, 3).unwrap().blend(&prefs).unwrap();
        let pwm = feather_weights(&pmasks, &playout, None).unwrap();
        let pfb = feather_blend_frames(&prefs, &pwm).unwrap();
        for (a, b) in base.data().iter().zip(other.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in fb.data().iter().zip(pfb.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
