//! Multi-spline offsets: one smooth spline offset field per stream, fitted
//! so that offset jumps across seams cancel the colour jumps there.

use super::linalg::{Csr, SkylineCholesky};
use crate::compose::{check_layout, compose_frames};
use crate::error::{BlendError, Result};
use crate::model::{frames_at, Frame, MappedStream, OffsetMap};
use crate::seams::{SeamLayout, UNCOVERED};
use rayon::prelude::*;

/// Control point spacing used when none is given.
pub const DEFAULT_SPACING: usize = 64;
/// Systems up to this many unknowns are factorized directly.
pub const DIRECT_SOLVE_LIMIT: usize = 20_000;
/// Weight of the control-lattice smoothness term. It only removes null
/// directions of control points that barely touch their region.
const LATTICE_SMOOTHNESS: f64 = 1e-6;
const CG_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplineBasis {
    /// Tensor-product tent, support 2R per axis.
    #[default]
    Bilinear,
    /// Uniform cubic B-spline, support 4R per axis.
    Cubic,
}

impl SplineBasis {
    /// Lattice indices and weights along one axis, zero weights dropped.
    fn axis(self, x: usize, r: usize) -> ([usize; 4], [f64; 4], usize) {
        // lattice point k sits at pixel (k - 1) * r
        let k0 = x / r + 1;
        let f = (x % r) as f64 / r as f64;
        let mut idx = [0; 4];
        let mut w = [0.0; 4];
        let mut n = 0;
        let mut push = |k: usize, v: f64| {
            if v != 0.0 {
                idx[n] = k;
                w[n] = v;
                n += 1;
            }
        };
        match self {
            SplineBasis::Bilinear => {
                push(k0, 1.0 - f);
                push(k0 + 1, f);
            }
            SplineBasis::Cubic => {
                let g = 1.0 - f;
                push(k0 - 1, g * g * g / 6.0);
                push(k0, (3.0 * f * f * f - 6.0 * f * f + 4.0) / 6.0);
                push(k0 + 1, (-3.0 * f * f * f + 3.0 * f * f + 3.0 * f + 1.0) / 6.0);
                push(k0 + 2, f * f * f / 6.0);
            }
        }
        (idx, w, n)
    }

    /// Largest change of the 1-D basis between neighbouring pixels, per unit
    /// control value.
    pub fn max_slope(self, r: usize) -> f64 {
        match self {
            SplineBasis::Bilinear => 1.0 / r as f64,
            SplineBasis::Cubic => 0.5 / r as f64,
        }
    }
}

/// Modified gradients on seam-crossing pixel pairs. `gx` at `(x, y)` refers
/// to the pair `(x, y)`–`(x+1, y)`, `gy` to `(x, y)`–`(x, y+1)`.
///
/// The two-pixel difference sum is halved: the value is the average colour
/// jump between the two streams over the two pixels of the pair. Where only
/// one pixel of the pair is seen by both streams, that pixel's jump is used;
/// where neither is, the target stays 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SeamGradients {
    pub gx: OffsetMap,
    pub gy: OffsetMap,
}

pub fn seam_gradients(streams: &[MappedStream], layout: &SeamLayout, frame_index: usize) -> Result<SeamGradients> {
    let frames = frames_at(streams, frame_index)?;
    seam_gradients_frames(&frames, layout)
}

pub fn seam_gradients_frames(frames: &[&Frame], layout: &SeamLayout) -> Result<SeamGradients> {
    check_layout(frames, layout)?;
    let (w, h) = layout.dims();
    let c = frames[0].channels();
    let labels = layout.label_map();
    let masks = layout.masks();
    let mut gx = OffsetMap::zeros(w, h, c);
    let mut gy = OffsetMap::zeros(w, h, c);
    for (dir, out) in [(0usize, &mut gx), (1, &mut gy)] {
        for y in 0..h {
            for x in 0..w {
                let (qx, qy) = if dir == 0 { (x + 1, y) } else { (x, y + 1) };
                if qx >= w || qy >= h {
                    continue;
                }
                let (la, lb) = (labels[y * w + x], labels[qy * w + qx]);
                if la == lb || la == UNCOVERED || lb == UNCOVERED {
                    continue;
                }
                let (a, b) = (la as usize, lb as usize);
                // at junctions one pixel of the pair may lie outside a
                // stream; average over the pixels both streams see
                let both: Vec<(usize, usize)> = [(x, y), (qx, qy)]
                    .into_iter()
                    .filter(|&(px, py)| masks[a].get(px, py) && masks[b].get(px, py))
                    .collect();
                if both.is_empty() {
                    continue;
                }
                let g = out.pixel_mut(x, y);
                for (ch, v) in g.iter_mut().enumerate() {
                    let sum: f64 = both
                        .iter()
                        .map(|&(px, py)| frames[a].get(px, py, ch) - frames[b].get(px, py, ch))
                        .sum();
                    *v = sum / both.len() as f64;
                }
            }
        }
    }
    Ok(SeamGradients { gx, gy })
}

/// Control points of every stream's spline on a shared lattice with one
/// cell of margin around the panorama.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineGrid {
    spacing: usize,
    basis: SplineBasis,
    kx: usize,
    ky: usize,
    streams: usize,
    channels: usize,
    coeffs: Vec<f64>,
}

impl SplineGrid {
    pub fn zeros(width: usize, height: usize, streams: usize, channels: usize, spacing: usize, basis: SplineBasis) -> Result<Self> {
        if spacing == 0 {
            return Err(BlendError::parameter("spline spacing must be at least 1"));
        }
        if width == 0 || height == 0 {
            return Err(BlendError::structural("empty panorama"));
        }
        let kx = (width - 1) / spacing + 4;
        let ky = (height - 1) / spacing + 4;
        Ok(Self {
            spacing,
            basis,
            kx,
            ky,
            streams,
            channels,
            coeffs: vec![0.0; streams * kx * ky * channels],
        })
    }

    pub fn spacing(&self) -> usize {
        self.spacing
    }

    pub fn basis(&self) -> SplineBasis {
        self.basis
    }

    /// Lattice size `(kx, ky)`.
    pub fn lattice(&self) -> (usize, usize) {
        (self.kx, self.ky)
    }

    pub fn streams(&self) -> usize {
        self.streams
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Pixel position of lattice point `(k, m)`; may be negative.
    pub fn position(&self, k: usize, m: usize) -> (isize, isize) {
        let r = self.spacing as isize;
        ((k as isize - 1) * r, (m as isize - 1) * r)
    }

    fn at(&self, s: usize, k: usize, m: usize) -> usize {
        ((s * self.ky + m) * self.kx + k) * self.channels
    }

    pub fn get(&self, stream: usize, k: usize, m: usize) -> &[f64] {
        let i = self.at(stream, k, m);
        &self.coeffs[i..i + self.channels]
    }

    pub fn get_mut(&mut self, stream: usize, k: usize, m: usize) -> &mut [f64] {
        let i = self.at(stream, k, m);
        &mut self.coeffs[i..i + self.channels]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    /// Nonzero basis functions at pixel `(x, y)` as `((k, m), weight)`.
    pub fn basis_at(&self, x: usize, y: usize) -> Vec<((usize, usize), f64)> {
        let (ix, wx, nx) = self.basis.axis(x, self.spacing);
        let (iy, wy, ny) = self.basis.axis(y, self.spacing);
        let mut v = Vec::with_capacity(nx * ny);
        for b in 0..ny {
            for a in 0..nx {
                v.push(((ix[a], iy[b]), wx[a] * wy[b]));
            }
        }
        v
    }

    /// Offset of `stream`'s spline at pixel `(x, y)` into `out`.
    pub fn evaluate(&self, stream: usize, x: usize, y: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let (ix, wx, nx) = self.basis.axis(x, self.spacing);
        let (iy, wy, ny) = self.basis.axis(y, self.spacing);
        for b in 0..ny {
            for a in 0..nx {
                let wgt = wx[a] * wy[b];
                for (o, c) in out.iter_mut().zip(self.get(stream, ix[a], iy[b])) {
                    *o += wgt * c;
                }
            }
        }
    }
}

/// Evaluates each pixel's own stream spline; uncovered pixels get 0.
pub fn msb_reconstruct(grid: &SplineGrid, layout: &SeamLayout) -> Result<OffsetMap> {
    let (w, h) = layout.dims();
    let (kx, ky) = grid.lattice();
    let expect = SplineGrid::zeros(w, h, 1, 1, grid.spacing, grid.basis)?.lattice();
    if (kx, ky) != expect || grid.streams != layout.stream_count() {
        return Err(BlendError::structural("spline grid does not match the layout"));
    }
    let c = grid.channels;
    let labels = layout.label_map();
    let mut out = OffsetMap::zeros(w, h, c);
    out.data_mut()
        .par_chunks_mut(w * c)
        .enumerate()
        .for_each(|(y, row)| {
            for x in 0..w {
                let l = labels[y * w + x];
                if l != UNCOVERED {
                    grid.evaluate(l as usize, x, y, &mut row[x * c..(x + 1) * c]);
                }
            }
        });
    Ok(out)
}

/// Seam energy of an offset map: the sum over neighbouring covered pixel
/// pairs of `(offset(q) - offset(p) - g(p))^2`, summed over channels.
pub fn msb_energy(offset: &OffsetMap, grads: &SeamGradients, layout: &SeamLayout) -> f64 {
    let (w, h) = layout.dims();
    let labels = layout.label_map();
    let mut e = 0.0;
    for y in 0..h {
        for x in 0..w {
            if labels[y * w + x] == UNCOVERED {
                continue;
            }
            for (q, g) in [((x + 1, y), &grads.gx), ((x, y + 1), &grads.gy)] {
                if q.0 >= w || q.1 >= h || labels[q.1 * w + q.0] == UNCOVERED {
                    continue;
                }
                for ch in 0..offset.channels() {
                    let d = offset.get(q.0, q.1, ch) - offset.get(x, y, ch) - g.get(x, y, ch);
                    e += d * d;
                }
            }
        }
    }
    e
}

#[derive(Debug, Clone)]
enum Solver {
    Direct(SkylineCholesky),
    Iterative,
}

/// Everything about the spline fit that depends only on the seam layout:
/// unknown numbering, the normal matrix and its factorization.
#[derive(Debug, Clone)]
pub struct MsbPlan {
    layout: SeamLayout,
    grid: SplineGrid,
    // unknown -> (stream, k, m)
    unknowns: Vec<(usize, usize, usize)>,
    // (stream, lattice position) -> unknown
    index: Vec<u32>,
    matrix: Csr,
    solver: Solver,
    // mean over covered pixels of each unknown's basis weight
    mean_weights: Vec<f64>,
    seam_pairs: Vec<(usize, u8)>,
}

const NONE: u32 = u32::MAX;

impl MsbPlan {
    pub fn new(layout: &SeamLayout, spacing: usize, basis: SplineBasis) -> Result<Self> {
        let (w, h) = layout.dims();
        let n_streams = layout.stream_count();
        let grid = SplineGrid::zeros(w, h, n_streams, 1, spacing, basis)?;
        let (kx, ky) = grid.lattice();
        let labels = layout.label_map();

        // Active control points: those whose basis is nonzero somewhere in
        // their stream's region. Numbered position-major so that coupled
        // unknowns stay close together.
        let mut active = vec![false; kx * ky * n_streams];
        for y in 0..h {
            for x in 0..w {
                let l = labels[y * w + x];
                if l == UNCOVERED {
                    continue;
                }
                for ((k, m), _) in grid.basis_at(x, y) {
                    active[(m * kx + k) * n_streams + l as usize] = true;
                }
            }
        }
        let mut index = vec![NONE; active.len()];
        let mut unknowns = Vec::new();
        for (i, &a) in active.iter().enumerate() {
            if a {
                index[i] = unknowns.len() as u32;
                let (pos, s) = (i / n_streams, i % n_streams);
                unknowns.push((s, pos % kx, pos / kx));
            }
        }
        let n = unknowns.len();
        if n == 0 {
            return Err(BlendError::DegenerateInput("no covered pixels".into()));
        }
        let row_of = |x: usize, y: usize, s: usize| -> Vec<(u32, f64)> {
            grid.basis_at(x, y)
                .into_iter()
                .map(|((k, m), wgt)| (index[(m * kx + k) * n_streams + s], wgt))
                .collect()
        };

        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        let add = |rows: &mut Vec<Vec<(u32, f64)>>, i: u32, j: u32, v: f64| {
            let r = &mut rows[i as usize];
            match r.iter_mut().find(|e| e.0 == j) {
                Some(e) => e.1 += v,
                None => r.push((j, v)),
            }
        };
        let mut mean_weights = vec![0.0; n];
        let mut covered = 0usize;
        let mut seam_pairs = Vec::new();
        let mut parent: Vec<usize> = (0..n_streams).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        let mut term: Vec<(u32, f64)> = Vec::with_capacity(32);
        for y in 0..h {
            for x in 0..w {
                let lp = labels[y * w + x];
                if lp == UNCOVERED {
                    continue;
                }
                let rp = row_of(x, y, lp as usize);
                covered += 1;
                for &(i, wgt) in &rp {
                    mean_weights[i as usize] += wgt;
                }
                for (dir, (qx, qy)) in [(0u8, (x + 1, y)), (1, (x, y + 1))] {
                    if qx >= w || qy >= h {
                        continue;
                    }
                    let lq = labels[qy * w + qx];
                    if lq == UNCOVERED {
                        continue;
                    }
                    if lq != lp {
                        seam_pairs.push((y * w + x, dir));
                        let (a, b) = (find(&mut parent, lp as usize), find(&mut parent, lq as usize));
                        parent[a.max(b)] = a.min(b);
                    }
                    // a = basis(q) - basis(p)
                    term.clear();
                    term.extend(row_of(qx, qy, lq as usize));
                    for &(i, wgt) in &rp {
                        match term.iter_mut().find(|e| e.0 == i) {
                            Some(e) => e.1 -= wgt,
                            None => term.push((i, -wgt)),
                        }
                    }
                    for &(i, vi) in &term {
                        for &(j, vj) in &term {
                            if j <= i && vi * vj != 0.0 {
                                add(&mut rows, i, j, vi * vj);
                            }
                        }
                    }
                }
            }
        }
        for v in &mut mean_weights {
            *v /= covered as f64;
        }
        for (i, &(s, k, m)) in unknowns.iter().enumerate() {
            add(&mut rows, i as u32, i as u32, 0.0);
            for (k2, m2) in [(k + 1, m), (k, m + 1)] {
                if k2 >= kx || m2 >= ky {
                    continue;
                }
                let j = index[(m2 * kx + k2) * n_streams + s];
                if j == NONE {
                    continue;
                }
                let (i, j) = (i as u32, j);
                add(&mut rows, i, i, LATTICE_SMOOTHNESS);
                add(&mut rows, j, j, LATTICE_SMOOTHNESS);
                add(&mut rows, j.max(i), j.min(i), -LATTICE_SMOOTHNESS);
            }
        }

        let present: Vec<usize> = (0..n_streams)
            .filter(|&s| !layout.trimmed_masks()[s].is_empty())
            .collect();
        if let Some(&first) = present.first() {
            let root = find(&mut parent, first);
            if let Some(&s) = present.iter().find(|&&s| find(&mut parent, s) != root) {
                return Err(BlendError::RankDeficient(format!(
                    "stream {s} shares no seam with stream {first}; offsets are not determined"
                )));
            }
        }

        let matrix = Csr::from_lower(n, &rows);
        let solver = if n <= DIRECT_SOLVE_LIMIT {
            // gauge: pin the first unknown, the zero-mean shift comes later
            let pinned = |i: usize, j: usize, v: f64| -> f64 {
                if i == 0 || j == 0 {
                    if i == j {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    v
                }
            };
            Solver::Direct(SkylineCholesky::factor(n, &rows, pinned)?)
        } else {
            Solver::Iterative
        };
        Ok(Self {
            layout: layout.clone(),
            grid,
            unknowns,
            index,
            matrix,
            solver,
            mean_weights,
            seam_pairs,
        })
    }

    pub fn unknown_count(&self) -> usize {
        self.unknowns.len()
    }

    pub fn spacing(&self) -> usize {
        self.grid.spacing
    }

    pub fn basis(&self) -> SplineBasis {
        self.grid.basis
    }

    pub fn is_direct(&self) -> bool {
        matches!(self.solver, Solver::Direct(_))
    }

    fn rhs(&self, grads: &SeamGradients, ch: usize) -> Vec<f64> {
        let (w, _) = self.layout.dims();
        let n_streams = self.layout.stream_count();
        let (kx, _) = self.grid.lattice();
        let labels = self.layout.label_map();
        let mut b = vec![0.0; self.unknowns.len()];
        for &(p, dir) in &self.seam_pairs {
            let (x, y) = (p % w, p / w);
            let ((qx, qy), g) = if dir == 0 {
                ((x + 1, y), grads.gx.get(x, y, ch))
            } else {
                ((x, y + 1), grads.gy.get(x, y, ch))
            };
            if g == 0.0 {
                continue;
            }
            let lp = labels[p] as usize;
            let lq = labels[qy * w + qx] as usize;
            for ((k, m), wgt) in self.grid.basis_at(qx, qy) {
                b[self.index[(m * kx + k) * n_streams + lq] as usize] += wgt * g;
            }
            for ((k, m), wgt) in self.grid.basis_at(x, y) {
                b[self.index[(m * kx + k) * n_streams + lp] as usize] -= wgt * g;
            }
        }
        b
    }

    fn check_grads(&self, grads: &SeamGradients) -> Result<usize> {
        let (w, h) = self.layout.dims();
        let c = grads.gx.channels();
        if grads.gx.width() != w
            || grads.gx.height() != h
            || grads.gy.width() != w
            || grads.gy.height() != h
            || grads.gy.channels() != c
        {
            return Err(BlendError::structural("seam gradients do not match the layout"));
        }
        Ok(c)
    }

    /// Fits all stream splines. The result is shifted so the mean offset
    /// over covered pixels is zero, which makes it independent of stream
    /// numbering.
    pub fn solve(&self, grads: &SeamGradients) -> Result<SplineGrid> {
        let c = self.check_grads(grads)?;
        let (w, h) = self.layout.dims();
        let mut grid = SplineGrid::zeros(w, h, self.layout.stream_count(), c, self.grid.spacing, self.grid.basis)?;
        for ch in 0..c {
            let b = self.rhs(grads, ch);
            let mut z = match &self.solver {
                Solver::Direct(f) => {
                    let mut b = b;
                    b[0] = 0.0;
                    f.solve(&mut b);
                    b
                }
                Solver::Iterative => self.matrix.cg_jacobi(&b, CG_TOLERANCE, 10 * self.unknowns.len())?,
            };
            let shift: f64 = z.iter().zip(&self.mean_weights).map(|(a, b)| a * b).sum();
            for v in &mut z {
                *v -= shift;
            }
            for (&(s, k, m), v) in self.unknowns.iter().zip(&z) {
                grid.get_mut(s, k, m)[ch] = *v;
            }
        }
        Ok(grid)
    }

    /// Largest absolute entry of `A z - b` for a fitted grid (normal
    /// equations of the seam energy, before gauge fixing).
    pub fn normal_residual(&self, grid: &SplineGrid, grads: &SeamGradients) -> Result<f64> {
        let c = self.check_grads(grads)?;
        if grid.channels != c {
            return Err(BlendError::structural("grid and gradients differ in channels"));
        }
        let mut worst: f64 = 0.0;
        for ch in 0..c {
            let z: Vec<f64> = self.unknowns.iter().map(|&(s, k, m)| grid.get(s, k, m)[ch]).collect();
            let az = self.matrix.mul(&z);
            let b = self.rhs(grads, ch);
            for (a, b) in az.iter().zip(&b) {
                worst = worst.max((a - b).abs());
            }
        }
        Ok(worst)
    }

    /// Returns the blended frame and its offset map.
    pub fn blend(&self, frames: &[&Frame]) -> Result<(Frame, OffsetMap)> {
        let grads = seam_gradients_frames(frames, &self.layout)?;
        let grid = self.solve(&grads)?;
        let offset = msb_reconstruct(&grid, &self.layout)?;
        let composite = compose_frames(frames, &self.layout)?;
        let out = crate::compose::apply_offset(&composite, &offset)?;
        Ok((out, offset))
    }
}

/// One-shot fit with a fresh plan and the default bilinear basis.
pub fn msb_solve(grads: &SeamGradients, layout: &SeamLayout, spacing: usize) -> Result<SplineGrid> {
    MsbPlan::new(layout, spacing, SplineBasis::Bilinear)?.solve(grads)
}

pub fn msb_blend(streams: &[MappedStream], layout: &SeamLayout, spacing: usize, frame_index: usize) -> Result<Frame> {
    let frames = frames_at(streams, frame_index)?;
    Ok(MsbPlan::new(layout, spacing, SplineBasis::Bilinear)?.blend(&frames)?.0)
}
