//! Modified Poisson blending: a whole-panorama screened Poisson solve,
//! pulling towards the composited gradients while staying near the
//! composite intensities, done in the cosine domain.

use super::dct::Dct2d;
use crate::compose::{check_layout, compose_frames};
use crate::error::{BlendError, Result};
use crate::model::{frames_at, Frame, MappedStream, OffsetMap};
use crate::seams::{SeamLayout, UNCOVERED};
use std::f64::consts::PI;

/// Intensity weight used when none is given.
pub const DEFAULT_EPSILON: f64 = 0.01;

/// Forward-difference gradients of each pixel's own stream, and the
/// divergence of that field by backward differences. Where the owning stream
/// does not see the neighbour, the neighbour's stream is used if it sees
/// both pixels; differences leaving the image or all coverage are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMap {
    pub gx: OffsetMap,
    pub gy: OffsetMap,
    pub laplacian: OffsetMap,
}

pub fn build_gradient_map(streams: &[MappedStream], layout: &SeamLayout, frame_index: usize) -> Result<GradientMap> {
    let frames = frames_at(streams, frame_index)?;
    build_gradient_map_frames(&frames, layout)
}

pub fn build_gradient_map_frames(frames: &[&Frame], layout: &SeamLayout) -> Result<GradientMap> {
    check_layout(frames, layout)?;
    let (w, h) = layout.dims();
    let c = frames[0].channels();
    let labels = layout.label_map();
    let masks = layout.masks();
    let mut gx = OffsetMap::zeros(w, h, c);
    let mut gy = OffsetMap::zeros(w, h, c);
    for y in 0..h {
        for x in 0..w {
            let l = labels[y * w + x];
            if l == UNCOVERED {
                continue;
            }
            // own stream's difference; at junctions where it does not see
            // the neighbour, the neighbour's stream if that one sees both
            let pick = |qx: usize, qy: usize| {
                let own = l as usize;
                if masks[own].get(qx, qy) {
                    return Some(own);
                }
                let other = labels[qy * w + qx];
                (other != UNCOVERED && masks[other as usize].get(x, y)).then_some(other as usize)
            };
            if x + 1 < w {
                if let Some(s) = pick(x + 1, y) {
                    for ch in 0..c {
                        gx.set(x, y, ch, frames[s].get(x + 1, y, ch) - frames[s].get(x, y, ch));
                    }
                }
            }
            if y + 1 < h {
                if let Some(s) = pick(x, y + 1) {
                    for ch in 0..c {
                        gy.set(x, y, ch, frames[s].get(x, y + 1, ch) - frames[s].get(x, y, ch));
                    }
                }
            }
        }
    }
    let laplacian = divergence(&gx, &gy);
    Ok(GradientMap { gx, gy, laplacian })
}

/// Backward-difference divergence; matches the reflecting-border Laplacian
/// when the field is a forward-difference gradient.
pub fn divergence(gx: &OffsetMap, gy: &OffsetMap) -> OffsetMap {
    let (w, h, c) = (gx.width(), gx.height(), gx.channels());
    let mut out = OffsetMap::zeros(w, h, c);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut v = gx.get(x, y, ch) + gy.get(x, y, ch);
                if x > 0 {
                    v -= gx.get(x - 1, y, ch);
                }
                if y > 0 {
                    v -= gy.get(x, y - 1, ch);
                }
                out.set(x, y, ch, v);
            }
        }
    }
    out
}

/// Cosine-domain solver for one panorama size.
#[derive(Debug, Clone)]
pub struct MpbSolver {
    dct: Dct2d,
    // eigenvalues of the reflecting 5-point Laplacian, all <= 0
    eigen: Vec<f64>,
}

impl MpbSolver {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(BlendError::structural("empty panorama"));
        }
        let ex: Vec<f64> = (0..width).map(|k| 2.0 * (PI * k as f64 / width as f64).cos() - 2.0).collect();
        let ey: Vec<f64> = (0..height).map(|l| 2.0 * (PI * l as f64 / height as f64).cos() - 2.0).collect();
        let eigen = ey.iter().flat_map(|b| ex.iter().map(move |a| a + b)).collect();
        Ok(Self {
            dct: Dct2d::new(width, height),
            eigen,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dct.dims()
    }

    /// Operator eigenvalue at frequency `(k, l)`.
    pub fn eigenvalue(&self, k: usize, l: usize) -> f64 {
        self.eigen[l * self.dct.dims().0 + k]
    }

    /// Minimises `eps * |P - I|^2 + |grad P - g|^2`, i.e. solves
    /// `(eps - L) P = eps * I - div g`.
    pub fn solve(&self, intensity: &Frame, laplacian: &OffsetMap, epsilon: f64) -> Result<Frame> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(BlendError::parameter(format!("epsilon must be positive, got {epsilon}")));
        }
        let (w, h) = self.dims();
        let c = intensity.channels();
        if intensity.dims() != (w, h) || (laplacian.width(), laplacian.height()) != (w, h) || laplacian.channels() != c {
            return Err(BlendError::structural("intensity, Laplacian and solver sizes differ"));
        }
        let mut denom = Vec::with_capacity(w * h);
        for &d in &self.eigen {
            let v = d - epsilon;
            if v.abs() < 1e-12 {
                return Err(BlendError::Numerical("screened operator is ill-conditioned".into()));
            }
            denom.push(v);
        }
        let mut out = Frame::zeros(w, h, c);
        for ch in 0..c {
            let mut u: Vec<f64> = intensity.data().iter().skip(ch).step_by(c).copied().collect();
            let mut v: Vec<f64> = laplacian.data().iter().skip(ch).step_by(c).copied().collect();
            self.dct.forward(&mut u);
            self.dct.forward(&mut v);
            for ((p, vt), d) in u.iter_mut().zip(&v).zip(&denom) {
                *p = (vt - epsilon * *p) / d;
            }
            self.dct.inverse(&mut u);
            for (dst, s) in out.data_mut().iter_mut().skip(ch).step_by(c).zip(u) {
                *dst = s;
            }
        }
        Ok(out)
    }

    pub fn blend(&self, frames: &[&Frame], layout: &SeamLayout, epsilon: f64) -> Result<Frame> {
        if layout.dims() != self.dims() {
            return Err(BlendError::structural("solver and layout sizes differ"));
        }
        let gmap = build_gradient_map_frames(frames, layout)?;
        let composite = compose_frames(frames, layout)?;
        self.solve(&composite, &gmap.laplacian, epsilon)
    }
}

pub fn mpb_solve(composite: &Frame, gmap: &GradientMap, epsilon: f64) -> Result<Frame> {
    let (w, h) = composite.dims();
    MpbSolver::new(w, h)?.solve(composite, &gmap.laplacian, epsilon)
}

pub fn mpb_blend(streams: &[MappedStream], layout: &SeamLayout, epsilon: f64, frame_index: usize) -> Result<Frame> {
    let frames = frames_at(streams, frame_index)?;
    let (w, h) = layout.dims();
    MpbSolver::new(w, h)?.blend(&frames, layout, epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Mask;
    use crate::seams::compute_seams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_frame(w: usize, h: usize, c: usize, seed: u64) -> Frame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Frame::from_fn(w, h, c, |_, _, _| rng.gen_range(0.0..1.0))
    }

    #[test]
    fn single_stream_map_is_the_plain_gradient() {
        let (w, h) = (9, 6);
        let f = random_frame(w, h, 2, 1);
        let layout = compute_seams(&[Mask::full(w, h)]).unwrap();
        let g = build_gradient_map_frames(&[&f], &layout).unwrap();
        for y in 0..h {
            for x in 0..w {
                for c in 0..2 {
                    let ex = if x + 1 < w { f.get(x + 1, y, c) - f.get(x, y, c) } else { 0.0 };
                    let ey = if y + 1 < h { f.get(x, y + 1, c) - f.get(x, y, c) } else { 0.0 };
                    assert_eq!(g.gx.get(x, y, c), ex);
                    assert_eq!(g.gy.get(x, y, c), ey);
                }
            }
        }
    }

    #[test]
    fn constant_pair_gradient_is_zero_off_the_seam() {
        let (w, h) = (20, 8);
        let masks = vec![
            Mask::from_fn(w, h, |x, _| x < 12),
            Mask::from_fn(w, h, |x, _| x >= 8),
        ];
        let layout = compute_seams(&masks).unwrap();
        let a = Frame::filled(w, h, 1, 0.2);
        let b = Frame::filled(w, h, 1, 0.8);
        let g = build_gradient_map_frames(&[&a, &b], &layout).unwrap();
        // each pixel differences within its own stream: all zero
        assert!(g.gx.is_zero() && g.gy.is_zero() && g.laplacian.is_zero());
    }

    #[test]
    fn consistent_gradients_reproduce_the_image() {
        let (w, h) = (17, 12);
        let f = random_frame(w, h, 3, 2);
        let layout = compute_seams(&[Mask::full(w, h)]).unwrap();
        let g = build_gradient_map_frames(&[&f], &layout).unwrap();
        for eps in [1e-3, 1e-2, 1.0] {
            let p = mpb_solve(&f, &g, eps).unwrap();
            let mae: f64 = p.data().iter().zip(f.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / f.data().len() as f64;
            assert!(mae < 1e-9, "eps={eps} mae={mae}");
        }
    }

    #[test]
    fn huge_epsilon_keeps_intensities() {
        let (w, h) = (16, 10);
        let f = random_frame(w, h, 1, 3);
        let noise = random_frame(w, h, 1, 4);
        let layout = compute_seams(&[Mask::full(w, h)]).unwrap();
        let g = build_gradient_map_frames(&[&noise], &layout).unwrap();
        let p = mpb_solve(&f, &g, 1e6).unwrap();
        let mae: f64 = p.data().iter().zip(f.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / (w * h) as f64;
        assert!(mae < 1e-3);
    }

    #[test]
    fn eigenvalues_are_non_positive() {
        let s = MpbSolver::new(7, 5).unwrap();
        assert_eq!(s.eigenvalue(0, 0), 0.0);
        for l in 0..5 {
            for k in 0..7 {
                assert!(s.eigenvalue(k, l) <= 0.0);
            }
        }
    }

    #[test]
    fn epsilon_must_be_positive() {
        let f = Frame::zeros(4, 4, 1);
        let s = MpbSolver::new(4, 4).unwrap();
        let l = OffsetMap::zeros(4, 4, 1);
        assert!(s.solve(&f, &l, 0.0).is_err());
        assert!(s.solve(&f, &l, f64::NAN).is_err());
    }
}
