//! Mean-value-coordinate membranes.
//!
//! Weights use the tangent-half-angle form `w_k = (tan(a_{k-1}/2) +
//! tan(a_k/2)) / |p_k - x|` with signed angles, which keeps linear precision
//! on non-convex chains. `tan(a/2)` is evaluated as `cross / (|r||r'| + dot)`.
//!
//! Large regions are not evaluated at every pixel: a quadtree over the
//! region keeps cells that are far from the chain, evaluates coordinates at
//! their corners only and fills the inside bilinearly. Boundary samples can
//! also be chosen hierarchically per query point, coarser farther away.

use super::BoundaryDiff;
use crate::error::{BlendError, Result};
use crate::model::{Mask, OffsetMap};
use crate::seams::{edt, BoundaryChain};
use rayon::prelude::*;
use std::io::{Read, Write};

/// Regions up to this many pixels get one coordinate row per pixel.
pub const DENSE_REGION_PIXELS: usize = 4096;
/// Chains up to this length default to exact (all-sample) coordinates.
pub const EXACT_CHAIN_LEN: usize = 1024;
/// Default adaptive tolerance for longer chains.
pub const DEFAULT_TOLERANCE: f64 = 0.25;

const MAX_CELL: usize = 16;

/// Sampling tolerance used when none is given.
pub fn default_tolerance(chain_len: usize) -> f64 {
    if chain_len <= EXACT_CHAIN_LEN {
        0.0
    } else {
        DEFAULT_TOLERANCE
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Rule {
    /// Chain pixel: the boundary value when constrained, otherwise `row`
    /// (coordinates at a point nudged into the region).
    Chain { k: u32, row: u32 },
    Row(u32),
    Bilinear { rows: [u32; 4], w: [f64; 4] },
}

/// Precomputed mean value coordinates of one region.
#[derive(Debug, Clone, PartialEq)]
pub struct MvcTable {
    width: usize,
    height: usize,
    chain: BoundaryChain,
    tolerance: f64,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    pixels: Vec<u32>,
    rules: Vec<Rule>,
}

impl MvcTable {
    pub fn chain(&self) -> &BoundaryChain {
        &self.chain
    }

    pub fn region_index(&self) -> usize {
        self.chain.region_index
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Number of region pixels the table covers.
    pub fn pixel_count(&self) -> usize {
        self.pixels.len()
    }

    /// Number of stored coordinate rows (evaluation points).
    pub fn row_count(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Chain indices referenced by at least one row.
    pub fn boundary_samples(&self) -> Vec<usize> {
        let mut used = vec![false; self.chain.len()];
        for &c in &self.cols {
            used[c as usize] = true;
        }
        for r in &self.rules {
            if let Rule::Chain { k, .. } = r {
                used[*k as usize] = true;
            }
        }
        (0..used.len()).filter(|&k| used[k]).collect()
    }

    fn row(&self, r: u32) -> (&[u32], &[f64]) {
        let (a, b) = (self.row_ptr[r as usize], self.row_ptr[r as usize + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    /// Effective normalized coordinates of region pixel `(x, y)` over chain
    /// indices, or `None` outside the region. Chain pixels report the
    /// coordinates used when they are not themselves constrained.
    pub fn weights_at(&self, x: usize, y: usize) -> Option<Vec<(usize, f64)>> {
        let p = (y * self.width + x) as u32;
        let i = self.pixels.binary_search(&p).ok()?;
        let mut acc: Vec<(usize, f64)> = Vec::new();
        let add = |r: u32, s: f64, acc: &mut Vec<(usize, f64)>| {
            let (c, v) = self.row(r);
            for (&k, &w) in c.iter().zip(v) {
                match acc.iter_mut().find(|e| e.0 == k as usize) {
                    Some(e) => e.1 += s * w,
                    None => acc.push((k as usize, s * w)),
                }
            }
        };
        match self.rules[i] {
            Rule::Chain { row, .. } | Rule::Row(row) => add(row, 1.0, &mut acc),
            Rule::Bilinear { rows, w } => {
                for (r, s) in rows.iter().zip(w) {
                    add(*r, s, &mut acc);
                }
            }
        }
        acc.sort_by_key(|e| e.0);
        Some(acc)
    }

    /// Membrane values at every row, as ratios over the constrained samples.
    fn row_values(&self, values: &[f64], constrained: &[bool], c: usize) -> Result<Vec<f64>> {
        let rows = self.row_count();
        let mut out = vec![0.0; rows * c];
        let bad = out
            .par_chunks_mut(c)
            .enumerate()
            .map(|(r, o)| {
                let (cols, vals) = self.row(r as u32);
                let mut den = 0.0;
                for (&k, &w) in cols.iter().zip(vals) {
                    let k = k as usize;
                    if constrained[k] {
                        den += w;
                        for (ch, v) in o.iter_mut().enumerate() {
                            *v += w * values[k * c + ch];
                        }
                    }
                }
                if den.abs() < 1e-12 {
                    return true;
                }
                for v in o.iter_mut() {
                    *v /= den;
                }
                false
            })
            .collect::<Vec<bool>>()
            .iter()
            .position(|&b| b);
        if let Some(r) = bad {
            return Err(BlendError::Numerical(format!(
                "constrained coordinates of row {r} in region {} sum to ~0",
                self.chain.region_index
            )));
        }
        Ok(out)
    }

    /// Writes membrane values into `out` (which must have the table's size)
    /// at the region's pixels.
    pub(crate) fn evaluate_into(
        &self,
        values: &[f64],
        constrained: &[bool],
        c: usize,
        out: &mut OffsetMap,
    ) -> Result<()> {
        if !constrained.iter().any(|&b| b) {
            for &p in &self.pixels {
                let p = p as usize;
                out.data_mut()[p * c..(p + 1) * c].fill(0.0);
            }
            return Ok(());
        }
        let rv = self.row_values(values, constrained, c)?;
        let data = out.data_mut();
        for (&p, rule) in self.pixels.iter().zip(&self.rules) {
            let px = &mut data[p as usize * c..(p as usize + 1) * c];
            match *rule {
                Rule::Chain { k, row } => {
                    let k = k as usize;
                    if constrained[k] {
                        px.copy_from_slice(&values[k * c..(k + 1) * c]);
                    } else {
                        px.copy_from_slice(&rv[row as usize * c..(row as usize + 1) * c]);
                    }
                }
                Rule::Row(r) => px.copy_from_slice(&rv[r as usize * c..(r as usize + 1) * c]),
                Rule::Bilinear { rows, w } => {
                    px.fill(0.0);
                    for (r, s) in rows.iter().zip(w) {
                        for (o, v) in px.iter_mut().zip(&rv[*r as usize * c..(*r as usize + 1) * c]) {
                            *o += s * v;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        let u = |w: &mut dyn Write, v: u64| w.write_all(&v.to_le_bytes());
        u(w, self.width as u64)?;
        u(w, self.height as u64)?;
        u(w, self.chain.region_index as u64)?;
        w.write_all(&self.tolerance.to_le_bytes())?;
        u(w, self.chain.points.len() as u64)?;
        for &(x, y) in &self.chain.points {
            u(w, x as u64)?;
            u(w, y as u64)?;
        }
        u(w, self.row_ptr.len() as u64)?;
        for &r in &self.row_ptr {
            u(w, r as u64)?;
        }
        u(w, self.cols.len() as u64)?;
        for (&c, &v) in self.cols.iter().zip(&self.vals) {
            w.write_all(&c.to_le_bytes())?;
            w.write_all(&v.to_le_bytes())?;
        }
        u(w, self.pixels.len() as u64)?;
        for (&p, r) in self.pixels.iter().zip(&self.rules) {
            w.write_all(&p.to_le_bytes())?;
            match *r {
                Rule::Chain { k, row } => {
                    w.write_all(&[0])?;
                    w.write_all(&k.to_le_bytes())?;
                    w.write_all(&row.to_le_bytes())?;
                }
                Rule::Row(row) => {
                    w.write_all(&[1])?;
                    w.write_all(&row.to_le_bytes())?;
                }
                Rule::Bilinear { rows, w: ws } => {
                    w.write_all(&[2])?;
                    for r in rows {
                        w.write_all(&r.to_le_bytes())?;
                    }
                    for s in ws {
                        w.write_all(&s.to_le_bytes())?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> std::io::Result<Self> {
        fn u64_(r: &mut dyn Read) -> std::io::Result<u64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(u64::from_le_bytes(b))
        }
        fn u32_(r: &mut dyn Read) -> std::io::Result<u32> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b))
        }
        fn f64_(r: &mut dyn Read) -> std::io::Result<f64> {
            Ok(f64::from_bits(u64_(r)?))
        }
        let invalid = |m: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, m.to_string());
        // guards against absurd lengths from a corrupt file
        let len = |r: &mut dyn Read, max: u64| -> std::io::Result<usize> {
            let n = u64_(r)?;
            if n > max {
                return Err(invalid("length field out of range"));
            }
            Ok(n as usize)
        };
        const MAX: u64 = 1 << 34;

        let width = len(r, MAX)?;
        let height = len(r, MAX)?;
        let region_index = len(r, MAX)?;
        let tolerance = f64_(r)?;
        let m = len(r, MAX)?;
        let mut points = Vec::with_capacity(m.min(1 << 20));
        for _ in 0..m {
            points.push((len(r, MAX)?, len(r, MAX)?));
        }
        let nrp = len(r, MAX)?;
        let mut row_ptr = Vec::with_capacity(nrp.min(1 << 20));
        for _ in 0..nrp {
            row_ptr.push(len(r, MAX)?);
        }
        let nnz = len(r, MAX)?;
        let mut cols = Vec::with_capacity(nnz.min(1 << 24));
        let mut vals = Vec::with_capacity(nnz.min(1 << 24));
        for _ in 0..nnz {
            cols.push(u32_(r)?);
            vals.push(f64_(r)?);
        }
        let np = len(r, MAX)?;
        let mut pixels = Vec::with_capacity(np.min(1 << 24));
        let mut rules = Vec::with_capacity(np.min(1 << 24));
        for _ in 0..np {
            pixels.push(u32_(r)?);
            let mut tag = [0u8];
            r.read_exact(&mut tag)?;
            rules.push(match tag[0] {
                0 => Rule::Chain {
                    k: u32_(r)?,
                    row: u32_(r)?,
                },
                1 => Rule::Row(u32_(r)?),
                2 => {
                    let rows = [u32_(r)?, u32_(r)?, u32_(r)?, u32_(r)?];
                    let w = [f64_(r)?, f64_(r)?, f64_(r)?, f64_(r)?];
                    Rule::Bilinear { rows, w }
                }
                _ => return Err(invalid("unknown pixel rule")),
            });
        }
        let rows = row_ptr.len().saturating_sub(1);
        let consistent = !row_ptr.is_empty()
            && row_ptr.windows(2).all(|w| w[0] <= w[1])
            && row_ptr.last() == Some(&nnz)
            && cols.iter().all(|&c| (c as usize) < m)
            && pixels.iter().all(|&p| (p as usize) < width * height)
            && rules.iter().all(|r| match *r {
                Rule::Chain { k, row } => (k as usize) < m && (row as usize) < rows,
                Rule::Row(row) => (row as usize) < rows,
                Rule::Bilinear { rows: rr, .. } => rr.iter().all(|&x| (x as usize) < rows),
            });
        if !consistent {
            return Err(invalid("inconsistent table"));
        }
        Ok(Self {
            width,
            height,
            chain: BoundaryChain {
                points,
                region_index,
            },
            tolerance,
            row_ptr,
            cols,
            vals,
            pixels,
            rules,
        })
    }
}

/// Binary tree over the closed chain used for hierarchical sampling.
struct SampleTree {
    pts: Vec<(f64, f64)>,
    nodes: Vec<Node>,
    roots: Vec<u32>,
}

struct Node {
    a: usize,
    b: usize, // exclusive; vertex b % m closes the span
    bbox: [f64; 4],
    kids: Option<(u32, u32)>,
}

impl SampleTree {
    fn new(pts: Vec<(f64, f64)>) -> Self {
        let m = pts.len();
        let mut seg = 1usize;
        while seg * 2 <= m / 8 {
            seg *= 2;
        }
        let mut t = SampleTree {
            pts,
            nodes: Vec::new(),
            roots: Vec::new(),
        };
        let mut a = 0;
        while a < m {
            let b = (a + seg).min(m);
            let id = t.build(a, b);
            t.roots.push(id);
            a = b;
        }
        t
    }

    fn build(&mut self, a: usize, b: usize) -> u32 {
        let m = self.pts.len();
        let mut bbox = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for i in a..=b {
            let (x, y) = self.pts[i % m];
            bbox[0] = bbox[0].min(x);
            bbox[1] = bbox[1].min(y);
            bbox[2] = bbox[2].max(x);
            bbox[3] = bbox[3].max(y);
        }
        let kids = if b - a > 1 {
            let mid = a + (b - a) / 2;
            Some((self.build(a, mid), self.build(mid, b)))
        } else {
            None
        };
        self.nodes.push(Node { a, b, bbox, kids });
        (self.nodes.len() - 1) as u32
    }

    fn sample(&self, x: (f64, f64), tol: f64, out: &mut Vec<usize>) {
        out.clear();
        for &r in &self.roots {
            self.visit(r, x, tol, out);
        }
    }

    fn visit(&self, id: u32, x: (f64, f64), tol: f64, out: &mut Vec<usize>) {
        let n = &self.nodes[id as usize];
        match n.kids {
            Some((l, r)) if (n.b - n.a) as f64 > tol * bbox_dist(&n.bbox, x) => {
                self.visit(l, x, tol, out);
                self.visit(r, x, tol, out);
            }
            _ => out.push(n.a),
        }
    }
}

fn bbox_dist(b: &[f64; 4], (x, y): (f64, f64)) -> f64 {
    let dx = (b[0] - x).max(0.0).max(x - b[2]);
    let dy = (b[1] - y).max(0.0).max(y - b[3]);
    dx.hypot(dy)
}

/// Mean value coordinates of `x` with respect to the closed polygon
/// `pts[idx[0]], pts[idx[1]], ...`; returns `(index, weight)` pairs summing
/// to one.
pub(crate) fn mvc_weights(pts: &[(f64, f64)], idx: &[usize], x: (f64, f64)) -> Result<Vec<(usize, f64)>> {
    let n = idx.len();
    let r: Vec<(f64, f64)> = idx.iter().map(|&k| (pts[k].0 - x.0, pts[k].1 - x.1)).collect();
    let len: Vec<f64> = r.iter().map(|v| v.0.hypot(v.1)).collect();
    for i in 0..n {
        if len[i] < 1e-12 {
            return Ok(vec![(idx[i], 1.0)]);
        }
    }
    let mut tan_half = vec![0.0; n];
    for i in 0..n {
        let j = (i + 1) % n;
        let cross = r[i].0 * r[j].1 - r[i].1 * r[j].0;
        let dot = r[i].0 * r[j].0 + r[i].1 * r[j].1;
        let den = len[i] * len[j] + dot;
        if den <= 1e-12 * len[i] * len[j] {
            // x lies on the edge between the two vertices
            let s = len[i] + len[j];
            return Ok(vec![(idx[i], len[j] / s), (idx[j], len[i] / s)]);
        }
        tan_half[i] = cross / den;
    }
    let mut w: Vec<(usize, f64)> = (0..n)
        .map(|i| (idx[i], (tan_half[(i + n - 1) % n] + tan_half[i]) / len[i]))
        .collect();
    let sum: f64 = w.iter().map(|e| e.1).sum();
    if sum.abs() < 1e-300 || !sum.is_finite() {
        return Err(BlendError::Numerical(format!(
            "mean value weights at ({}, {}) do not normalize",
            x.0, x.1
        )));
    }
    for e in &mut w {
        e.1 /= sum;
    }
    Ok(w)
}

/// Point just inside the region next to chain vertex `k`, used where a
/// chain pixel needs interpolated rather than prescribed values.
fn nudged(chain: &[(f64, f64)], k: usize) -> (f64, f64) {
    let m = chain.len();
    let (px, py) = chain[k];
    let prev = chain[(k + m - 1) % m];
    let next = chain[(k + 1) % m];
    let (tx, ty) = (next.0 - prev.0, next.1 - prev.1);
    let tl = tx.hypot(ty);
    let (tx, ty) = if tl > 0.0 { (tx / tl, ty / tl) } else { (0.6, 0.8) };
    // interior lies on the left of travel as drawn on screen
    let (nx, ny) = (ty, -tx);
    (px + 0.5 * nx + 0.25 * tx, py + 0.5 * ny + 0.25 * ty)
}

/// Builds the coordinate table for `region` bounded by `chain`.
///
/// `sampling_tolerance` 0 uses every chain point for every pixel; larger
/// values let a chain span of `s` points stand in for its first point when
/// `s <= tolerance * distance`.
pub fn precompute_mvc(chain: &BoundaryChain, region: &Mask, sampling_tolerance: f64) -> Result<MvcTable> {
    let m = chain.len();
    if m < 3 {
        return Err(BlendError::structural(format!(
            "chain of region {} has {m} point(s), need at least 3",
            chain.region_index
        )));
    }
    if !(sampling_tolerance >= 0.0) || !sampling_tolerance.is_finite() {
        return Err(BlendError::parameter(format!(
            "sampling tolerance must be >= 0, got {sampling_tolerance}"
        )));
    }
    let (w, h) = region.dims();
    if chain.points.iter().any(|&(x, y)| x >= w || y >= h || !region.get(x, y)) {
        return Err(BlendError::structural(format!(
            "chain of region {} leaves the region",
            chain.region_index
        )));
    }

    let mut chain_at = vec![u32::MAX; w * h];
    for (k, &(x, y)) in chain.points.iter().enumerate() {
        let p = y * w + x;
        if chain_at[p] == u32::MAX {
            chain_at[p] = k as u32;
        }
    }

    let pixels: Vec<u32> = (0..w * h).filter(|&p| region.data()[p]).map(|p| p as u32).collect();
    let mut rule_of: Vec<Option<Rule>> = vec![None; w * h];
    let mut points: Vec<(f64, f64)> = Vec::new();
    let mut row_of_pixel = vec![u32::MAX; w * h];
    let fpts: Vec<(f64, f64)> = chain.points.iter().map(|&(x, y)| (x as f64, y as f64)).collect();

    let node_row = |row_of_pixel: &mut [u32], points: &mut Vec<(f64, f64)>, p: usize| -> u32 {
        if row_of_pixel[p] == u32::MAX {
            row_of_pixel[p] = points.len() as u32;
            points.push(((p % w) as f64, (p / w) as f64));
        }
        row_of_pixel[p]
    };

    if pixels.len() > DENSE_REGION_PIXELS {
        let mut chain_mask = Mask::new(w, h);
        for &(x, y) in &chain.points {
            chain_mask.set(x, y, true);
        }
        let dist = edt::edt(&chain_mask);
        let (bx0, by0, bx1, by1) = region.bbox().expect("nonempty region");
        let mut stack = Vec::new();
        let mut y0 = by0;
        while y0 < by1 {
            let mut x0 = bx0;
            while x0 < bx1 {
                stack.push((x0, y0, MAX_CELL));
                x0 += MAX_CELL;
            }
            y0 += MAX_CELL;
        }
        while let Some((x0, y0, s)) = stack.pop() {
            if s < 2 {
                continue;
            }
            let fits = x0 + s < w && y0 + s < h && {
                let mut ok = true;
                'cell: for y in y0..=y0 + s {
                    for x in x0..=x0 + s {
                        let p = y * w + x;
                        if !region.data()[p] || chain_at[p] != u32::MAX || dist[p] < s as f64 {
                            ok = false;
                            break 'cell;
                        }
                    }
                }
                ok
            };
            if fits {
                let corners = [
                    y0 * w + x0,
                    y0 * w + x0 + s,
                    (y0 + s) * w + x0,
                    (y0 + s) * w + x0 + s,
                ];
                let rows = corners.map(|p| node_row(&mut row_of_pixel, &mut points, p));
                let inv = 1.0 / s as f64;
                for y in y0..=y0 + s {
                    for x in x0..=x0 + s {
                        let p = y * w + x;
                        if rule_of[p].is_some() {
                            continue;
                        }
                        let fx = (x - x0) as f64 * inv;
                        let fy = (y - y0) as f64 * inv;
                        let wts = [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy];
                        rule_of[p] = Some(if row_of_pixel[p] != u32::MAX {
                            Rule::Row(row_of_pixel[p])
                        } else {
                            Rule::Bilinear { rows, w: wts }
                        });
                    }
                }
            } else {
                let t = s / 2;
                stack.push((x0, y0, t));
                stack.push((x0 + t, y0, t));
                stack.push((x0, y0 + t, t));
                stack.push((x0 + t, y0 + t, t));
            }
        }
        // corner nodes discovered after a neighbouring cell claimed the pixel
        for &p in &pixels {
            let p = p as usize;
            if row_of_pixel[p] != u32::MAX {
                rule_of[p] = Some(Rule::Row(row_of_pixel[p]));
            }
        }
    }

    for &p in &pixels {
        let p = p as usize;
        if rule_of[p].is_some() {
            continue;
        }
        rule_of[p] = Some(if chain_at[p] != u32::MAX {
            let k = chain_at[p] as usize;
            let row = points.len() as u32;
            points.push(nudged(&fpts, k));
            Rule::Chain { k: k as u32, row }
        } else {
            Rule::Row(node_row(&mut row_of_pixel, &mut points, p))
        });
    }

    let tree = SampleTree::new(fpts.clone());
    let all: Vec<usize> = (0..m).collect();
    let rows: Vec<Result<Vec<(usize, f64)>>> = points
        .par_iter()
        .map_init(Vec::new, |buf, &x| {
            if sampling_tolerance == 0.0 {
                mvc_weights(&fpts, &all, x)
            } else {
                tree.sample(x, sampling_tolerance, buf);
                if buf.len() < 3 {
                    mvc_weights(&fpts, &all, x)
                } else {
                    mvc_weights(&fpts, buf, x)
                }
            }
        })
        .collect();

    let mut row_ptr = Vec::with_capacity(rows.len() + 1);
    row_ptr.push(0);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    for r in rows {
        for (k, v) in r? {
            cols.push(k as u32);
            vals.push(v);
        }
        row_ptr.push(cols.len());
    }
    let rules = pixels
        .iter()
        .map(|&p| rule_of[p as usize].expect("every region pixel has a rule"))
        .collect();

    Ok(MvcTable {
        width: w,
        height: h,
        chain: chain.clone(),
        tolerance: sampling_tolerance,
        row_ptr,
        cols,
        vals,
        pixels,
        rules,
    })
}

/// `P*(x) = Σ λ_k(x) b_k`, zero outside the region.
///
/// Points of `diffs` flagged unconstrained carry no data; coordinates are
/// then renormalized over the constrained ones.
pub fn mvc_membrane(table: &MvcTable, diffs: &BoundaryDiff) -> Result<OffsetMap> {
    if diffs.chain.len() != table.chain.len() || diffs.constrained.len() != table.chain.len() {
        return Err(BlendError::structural(format!(
            "{} boundary values for a table over {} samples",
            diffs.chain.len(),
            table.chain.len()
        )));
    }
    let c = diffs.channels;
    let mut out = OffsetMap::zeros(table.width, table.height, c);
    table.evaluate_into(&diffs.values, &diffs.constrained, c, &mut out)?;
    Ok(out)
}
