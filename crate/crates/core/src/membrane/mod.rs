//! Boundary-interpolation blenders: regions are shifted by a smooth
//! membrane interpolating the colour differences along their border.
//!
//! Regions are processed one at a time. The first region in the anchor
//! order is left untouched; every later region takes, at each border pixel
//! next to an already blended region, the difference between that region's
//! blended result extended across the seam and its own value.

mod convpyr;
mod mvc;

pub use convpyr::{convpyr_apply, convpyr_membrane, convpyr_membrane_with, ConvPyramidFilters};
pub use mvc::{
    default_tolerance, mvc_membrane, precompute_mvc, MvcTable, DEFAULT_TOLERANCE,
    DENSE_REGION_PIXELS, EXACT_CHAIN_LEN,
};

use crate::compose::{check_layout, compose_frames};
use crate::error::{BlendError, Result};
use crate::model::{frames_at, Frame, MappedStream, Mask, OffsetMap};
use crate::seams::{extract_boundary, BoundaryChain, SeamLayout};
use convpyr::ConvPlan;
use std::io::{Read, Write};
use std::path::Path;

/// Per-point boundary differences `anchor - own`, `channels` values each.
/// Points flagged unconstrained carry no data and are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryDiff {
    pub chain: BoundaryChain,
    pub channels: usize,
    pub values: Vec<f64>,
    pub constrained: Vec<bool>,
}

impl BoundaryDiff {
    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.channels..(k + 1) * self.channels]
    }
}

/// Boundary values spread over the whole domain (zero elsewhere) with their
/// indicator, plus the region the membrane is wanted on.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseBoundaryImage {
    pub values: OffsetMap,
    pub indicator: Mask,
    pub region: Mask,
}

impl SparseBoundaryImage {
    pub fn from_diff(diff: &BoundaryDiff, region: &Mask) -> Self {
        let (w, h) = region.dims();
        let mut values = OffsetMap::zeros(w, h, diff.channels);
        let mut indicator = Mask::new(w, h);
        for (k, &(x, y)) in diff.chain.points.iter().enumerate() {
            if diff.constrained[k] {
                values.pixel_mut(x, y).copy_from_slice(diff.value(k));
                indicator.set(x, y, true);
            }
        }
        Self {
            values,
            indicator,
            region: region.clone(),
        }
    }
}

/// `anchor(p) - target(p)` at every chain point.
pub fn boundary_diff(
    anchor: &Frame,
    anchor_coverage: &Mask,
    target: &MappedStream,
    chain: &BoundaryChain,
    frame_index: usize,
) -> Result<BoundaryDiff> {
    let own = target.frame(frame_index)?;
    if anchor.dims() != own.dims() || anchor.channels() != own.channels() {
        return Err(BlendError::structural("anchor and target frames differ in shape"));
    }
    if anchor_coverage.dims() != anchor.dims() {
        return Err(BlendError::structural("anchor coverage differs from frame size"));
    }
    let c = anchor.channels();
    let mut values = Vec::with_capacity(chain.len() * c);
    for (k, &(x, y)) in chain.points.iter().enumerate() {
        if x >= anchor.width() || y >= anchor.height() {
            return Err(BlendError::DataUnavailable {
                point: k,
                reason: format!("({x}, {y}) is outside the panorama"),
            });
        }
        if !anchor_coverage.get(x, y) {
            return Err(BlendError::DataUnavailable {
                point: k,
                reason: format!("anchor has no data at ({x}, {y})"),
            });
        }
        if !target.mask.get(x, y) {
            return Err(BlendError::DataUnavailable {
                point: k,
                reason: format!("stream {} has no data at ({x}, {y})", target.stream_index),
            });
        }
        for (a, b) in anchor.pixel(x, y).iter().zip(own.pixel(x, y)) {
            values.push(a - b);
        }
    }
    Ok(BoundaryDiff {
        chain: chain.clone(),
        channels: c,
        values,
        constrained: vec![true; chain.len()],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MembraneMethod {
    Mvc,
    ConvPyramid,
}

#[derive(Debug, Clone)]
enum Interp {
    Mvc(MvcTable),
    Conv(ConvPlan),
}

#[derive(Debug, Clone)]
struct RegionPlan {
    region: usize,
    chain: BoundaryChain,
    // chain index -> (blended region providing data, its pixel next to the point)
    sources: Vec<Option<(usize, usize)>>,
    interp: Option<Interp>,
}

/// Sequential membrane blender with all geometry precomputed for a scene.
#[derive(Debug, Clone)]
pub struct MembraneBlender {
    layout: SeamLayout,
    method: MembraneMethod,
    order: Vec<usize>,
    plans: Vec<RegionPlan>,
    filters: ConvPyramidFilters,
}

fn check_order(order: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    for &i in order {
        if i >= n || seen[i] {
            return Err(BlendError::parameter(format!(
                "anchor order {order:?} is not a permutation of 0..{n}"
            )));
        }
        seen[i] = true;
    }
    if order.len() != n {
        return Err(BlendError::parameter(format!(
            "anchor order {order:?} is not a permutation of 0..{n}"
        )));
    }
    Ok(())
}

impl MembraneBlender {
    /// `anchor_order` lists region indices; the first is the anchor. `None`
    /// means ascending order. `sampling_tolerance` only affects MVC; `None`
    /// picks [`default_tolerance`] per chain.
    pub fn new(
        layout: &SeamLayout,
        method: MembraneMethod,
        anchor_order: Option<&[usize]>,
        sampling_tolerance: Option<f64>,
    ) -> Result<Self> {
        Self::with_filters(layout, method, anchor_order, sampling_tolerance, ConvPyramidFilters::default())
    }

    pub fn with_filters(
        layout: &SeamLayout,
        method: MembraneMethod,
        anchor_order: Option<&[usize]>,
        sampling_tolerance: Option<f64>,
        filters: ConvPyramidFilters,
    ) -> Result<Self> {
        filters.validate()?;
        let mut blender = Self::plan_only(layout, anchor_order)?;
        let (w, h) = layout.dims();
        for plan in blender.plans.iter_mut() {
            if plan.sources.iter().all(Option::is_none) {
                continue;
            }
            let region = &layout.trimmed_masks()[plan.region];
            plan.interp = Some(match method {
                MembraneMethod::Mvc => {
                    let tol =
                        sampling_tolerance.unwrap_or_else(|| default_tolerance(plan.chain.len()));
                    Interp::Mvc(precompute_mvc(&plan.chain, region, tol)?)
                }
                MembraneMethod::ConvPyramid => {
                    let mut ind = Mask::new(w, h);
                    for (s, &(x, y)) in plan.sources.iter().zip(&plan.chain.points) {
                        if s.is_some() {
                            ind.set(x, y, true);
                        }
                    }
                    Interp::Conv(ConvPlan::new(&filters, region, &ind)?)
                }
            });
        }
        blender.method = method;
        blender.filters = filters;
        Ok(blender)
    }

    pub fn method(&self) -> MembraneMethod {
        self.method
    }

    pub fn anchor_order(&self) -> &[usize] {
        &self.order
    }

    /// Regions in the order their membranes are computed (anchor first).
    pub fn processing_order(&self) -> Vec<usize> {
        std::iter::once(self.order[0])
            .chain(self.plans.iter().map(|p| p.region))
            .collect()
    }

    /// Blends one set of frames; returns the output and the offset map.
    pub fn blend(&self, frames: &[&Frame]) -> Result<(Frame, OffsetMap)> {
        check_layout(frames, &self.layout)?;
        let composite = compose_frames(frames, &self.layout)?;
        let (w, h) = self.layout.dims();
        let c = frames[0].channels();
        let mut offset = OffsetMap::zeros(w, h, c);

        for plan in &self.plans {
            let Some(interp) = &plan.interp else { continue };
            let k = plan.region;
            let m = plan.chain.len();
            let mut values = vec![0.0; m * c];
            let mut constrained = vec![false; m];
            for (idx, (src, &(x, y))) in plan.sources.iter().zip(&plan.chain.points).enumerate() {
                if let Some((j, q)) = *src {
                    let (qx, qy) = (q % w, q / w);
                    let a = frames[j].pixel(x, y);
                    let b = frames[k].pixel(x, y);
                    let o = offset.pixel(qx, qy);
                    for ch in 0..c {
                        values[idx * c + ch] = a[ch] + o[ch] - b[ch];
                    }
                    constrained[idx] = true;
                }
            }
            match interp {
                Interp::Mvc(table) => table.evaluate_into(&values, &constrained, c, &mut offset)?,
                Interp::Conv(cp) => {
                    let mut pts = Vec::new();
                    let mut vals = Vec::new();
                    for (idx, &p) in plan.chain.points.iter().enumerate() {
                        if constrained[idx] {
                            pts.push(p);
                            vals.extend_from_slice(&values[idx * c..(idx + 1) * c]);
                        }
                    }
                    cp.evaluate_into(&self.filters, &pts, &vals, c, &self.layout.trimmed_masks()[k], &mut offset);
                }
            }
        }

        let data = composite
            .data()
            .iter()
            .zip(offset.data())
            .map(|(a, b)| a + b)
            .collect();
        Ok((Frame::from_parts(w, h, c, data), offset))
    }

    /// MVC tables of the processed regions (empty for the convolution method).
    pub fn mvc_tables(&self) -> Vec<&MvcTable> {
        self.plans
            .iter()
            .filter_map(|p| match &p.interp {
                Some(Interp::Mvc(t)) => Some(t),
                _ => None,
            })
            .collect()
    }

    /// Writes the MVC tables to `path`, keyed by the layout digest and order.
    pub fn save_cache(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(CACHE_MAGIC)?;
        f.write_all(self.cache_key().as_bytes())?;
        let tables = self.mvc_tables();
        f.write_all(&(tables.len() as u64).to_le_bytes())?;
        for t in tables {
            t.write_to(&mut f)?;
        }
        f.flush()
    }

    /// Like [`MembraneBlender::new`] for the MVC method, but reuses tables
    /// from `path` when the file matches this layout, order and tolerance;
    /// otherwise computes them and rewrites the file.
    pub fn mvc_cached(
        layout: &SeamLayout,
        anchor_order: Option<&[usize]>,
        sampling_tolerance: Option<f64>,
        path: &Path,
    ) -> Result<Self> {
        // Geometry (order, chains, sources) is cheap; tables are the cost.
        let mut shell = Self::plan_only(layout, anchor_order)?;
        let key = shell.cache_key_with(sampling_tolerance);
        if let Some(tables) = read_cache(path, &key) {
            let needs: Vec<usize> = shell
                .plans
                .iter()
                .filter(|p| p.sources.iter().any(Option::is_some))
                .map(|p| p.region)
                .collect();
            if tables.len() == needs.len()
                && tables.iter().zip(&needs).all(|(t, &r)| t.region_index() == r)
            {
                let mut it = tables.into_iter();
                for p in shell.plans.iter_mut() {
                    if p.sources.iter().any(Option::is_some) {
                        p.interp = Some(Interp::Mvc(it.next().expect("counted")));
                    }
                }
                return Ok(shell);
            }
        }
        let full = Self::new(layout, MembraneMethod::Mvc, anchor_order, sampling_tolerance)?;
        // a cache write failure only costs time on the next run
        let _ = full.write_cache_with_key(path, &key);
        Ok(full)
    }

    fn plan_only(layout: &SeamLayout, anchor_order: Option<&[usize]>) -> Result<Self> {
        // Processing order, chains and constraint sources only; no interpolators.
        let n = layout.stream_count();
        let order: Vec<usize> = match anchor_order {
            Some(o) => {
                check_order(o, n)?;
                o.to_vec()
            }
            None => (0..n).collect(),
        };
        let (w, h) = layout.dims();
        let mut rank = vec![usize::MAX; n];
        rank[order[0]] = 0;
        let mut count = 1;
        let mut pending: Vec<usize> = order[1..].to_vec();
        let mut chains: Vec<Option<BoundaryChain>> = vec![None; n];
        let mut plans = Vec::new();
        while !pending.is_empty() {
            let mut picked = None;
            for (pos, &k) in pending.iter().enumerate() {
                if chains[k].is_none() {
                    chains[k] = Some(extract_boundary(layout, k)?);
                }
                let sources = constraint_sources(layout, chains[k].as_ref().expect("set"), &rank, w, h);
                if sources.iter().any(Option::is_some) {
                    picked = Some((pos, sources));
                    break;
                }
            }
            let Some((pos, sources)) = picked else {
                for &k in &pending {
                    let chain = chains[k].take().expect("extracted");
                    plans.push(RegionPlan {
                        region: k,
                        sources: vec![None; chain.len()],
                        chain,
                        interp: None,
                    });
                }
                break;
            };
            let k = pending.remove(pos);
            rank[k] = count;
            count += 1;
            plans.push(RegionPlan {
                region: k,
                chain: chains[k].take().expect("extracted"),
                sources,
                interp: None,
            });
        }
        Ok(Self {
            layout: layout.clone(),
            method: MembraneMethod::Mvc,
            order,
            plans,
            filters: ConvPyramidFilters::default(),
        })
    }

    fn cache_key(&self) -> String {
        let tol = self.mvc_tables().first().map(|t| t.tolerance());
        self.cache_key_with(tol)
    }

    fn cache_key_with(&self, tol: Option<f64>) -> String {
        let tol = match tol {
            Some(t) => format!("{t:e}"),
            None => "default".into(),
        };
        let order: Vec<String> = self.order.iter().map(|i| i.to_string()).collect();
        format!("{}|{}|{}\n", self.layout.digest(), order.join(","), tol)
    }

    fn write_cache_with_key(&self, path: &Path, key: &str) -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(CACHE_MAGIC)?;
        f.write_all(key.as_bytes())?;
        let tables = self.mvc_tables();
        f.write_all(&(tables.len() as u64).to_le_bytes())?;
        for t in tables {
            t.write_to(&mut f)?;
        }
        f.flush()
    }
}

const CACHE_MAGIC: &[u8] = b"PBMVC1\n";

fn read_cache(path: &Path, key: &str) -> Option<Vec<MvcTable>> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path).ok()?);
    let mut magic = vec![0u8; CACHE_MAGIC.len()];
    f.read_exact(&mut magic).ok()?;
    if magic != CACHE_MAGIC {
        return None;
    }
    let mut stored = vec![0u8; key.len()];
    f.read_exact(&mut stored).ok()?;
    if stored != key.as_bytes() {
        return None;
    }
    let mut n = [0u8; 8];
    f.read_exact(&mut n).ok()?;
    let n = u64::from_le_bytes(n);
    if n > 1 << 16 {
        return None;
    }
    (0..n).map(|_| MvcTable::read_from(&mut f).ok()).collect()
}

/// For each chain point of a region, the already blended 4-neighbour region
/// (earliest in processing order) whose stream also covers the point.
fn constraint_sources(
    layout: &SeamLayout,
    chain: &BoundaryChain,
    rank: &[usize],
    w: usize,
    h: usize,
) -> Vec<Option<(usize, usize)>> {
    chain
        .points
        .iter()
        .map(|&(x, y)| {
            let mut best: Option<(usize, usize)> = None;
            let nbrs = [
                (x.wrapping_sub(1), y),
                (x + 1, y),
                (x, y.wrapping_sub(1)),
                (x, y + 1),
            ];
            for (nx, ny) in nbrs {
                if nx >= w || ny >= h {
                    continue;
                }
                let Some(j) = layout.label(nx, ny) else { continue };
                if rank[j] == usize::MAX || !layout.masks()[j].get(x, y) {
                    continue;
                }
                if best.is_none_or(|(b, _)| rank[j] < rank[b]) {
                    best = Some((j, ny * w + nx));
                }
            }
            best
        })
        .collect()
}

/// Blends frame `frame_index` with a freshly planned [`MembraneBlender`].
pub fn membrane_blend(
    streams: &[MappedStream],
    layout: &SeamLayout,
    method: MembraneMethod,
    anchor_order: Option<&[usize]>,
    frame_index: usize,
) -> Result<Frame> {
    let frames = frames_at(streams, frame_index)?;
    let blender = MembraneBlender::new(layout, method, anchor_order, None)?;
    Ok(blender.blend(&frames)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seams::compute_seams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_streams(w: usize, h: usize, a: Frame, b: Frame) -> (Vec<MappedStream>, SeamLayout) {
        let masks = vec![
            Mask::from_fn(w, h, |x, _| x < w / 2 + w / 10),
            Mask::from_fn(w, h, |x, _| x >= w / 2 - w / 10),
        ];
        let layout = compute_seams(&masks).unwrap();
        let streams = vec![
            MappedStream::new(vec![a], masks[0].clone(), 1).unwrap(),
            MappedStream::new(vec![b], masks[1].clone(), 2).unwrap(),
        ];
        (streams, layout)
    }

    #[test]
    fn boundary_diff_values_and_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (w, h) = (40, 20);
        let a = Frame::from_fn(w, h, 3, |_, _, _| rng.gen_range(0.0..1.0));
        let b = Frame::from_fn(w, h, 3, |x, y, c| a.get(x, y, c) - 0.3);
        let (streams, layout) = two_streams(w, h, a.clone(), b);
        let chain = extract_boundary(&layout, 1).unwrap();
        let cov = layout.masks()[0].clone();
        // the chain touches the image edge where stream 0 has no data
        assert!(matches!(
            boundary_diff(&a, &cov, &streams[1], &chain, 0),
            Err(BlendError::DataUnavailable { .. })
        ));
        let full = Mask::full(w, h);
        let d = boundary_diff(&a, &full, &streams[1], &chain, 0).unwrap();
        assert!(d.values.iter().all(|&v| (v - 0.3).abs() < 1e-12));
        let same = boundary_diff(&a, &full, &streams[0], &extract_boundary(&layout, 0).unwrap(), 0).unwrap();
        assert!(same.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identical_streams_give_zero_offsets() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (w, h) = (60, 30);
        let f = Frame::from_fn(w, h, 3, |_, _, _| rng.gen_range(0.0..1.0));
        let (streams, layout) = two_streams(w, h, f.clone(), f.clone());
        for method in [MembraneMethod::Mvc, MembraneMethod::ConvPyramid] {
            let b = MembraneBlender::new(&layout, method, None, None).unwrap();
            let frames = frames_at(&streams, 0).unwrap();
            let (out, off) = b.blend(&frames).unwrap();
            assert!(off.is_zero());
            assert_eq!(out, f);
        }
    }

    #[test]
    fn shifted_stream_is_pulled_to_anchor() {
        let (w, h) = (64, 32);
        let base = Frame::from_fn(w, h, 1, |x, y, _| 0.4 + 0.002 * x as f64 + 0.003 * y as f64);
        let darker = Frame::from_fn(w, h, 1, |x, y, c| base.get(x, y, c) - 0.3);
        let (streams, layout) = two_streams(w, h, base.clone(), darker);
        for method in [MembraneMethod::Mvc, MembraneMethod::ConvPyramid] {
            let out = membrane_blend(&streams, &layout, method, None, 0).unwrap();
            for y in 0..h {
                for x in 1..w {
                    if layout.label(x - 1, y) != layout.label(x, y) {
                        let jump = (out.get(x, y, 0) - out.get(x - 1, y, 0)).abs();
                        assert!(jump < 2.0 / 255.0, "{method:?} jump {jump} at {x},{y}");
                    }
                }
            }
            // the anchor region is untouched
            assert_eq!(out.get(0, 0, 0), base.get(0, 0, 0));
        }
    }

    #[test]
    fn swapping_anchor_negates_offsets() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (w, h) = (50, 30);
        let a = Frame::from_fn(w, h, 2, |_, _, _| rng.gen_range(0.0..1.0));
        let b = Frame::from_fn(w, h, 2, |_, _, _| rng.gen_range(0.0..1.0));
        let (streams, layout) = two_streams(w, h, a, b);
        let table_of = |k: usize| {
            let chain = extract_boundary(&layout, k).unwrap();
            let t = precompute_mvc(&chain, &layout.trimmed_masks()[k], 0.0).unwrap();
            (chain, t)
        };
        let (chain, table) = table_of(1);
        let full = Mask::full(w, h);
        let fa = streams[0].frame(0).unwrap();
        let fb = streams[1].frame(0).unwrap();
        let d_ab = boundary_diff(fa, &full, &streams[1], &chain, 0).unwrap();
        let target_a = MappedStream::new(vec![fa.clone()], full.clone(), 1).unwrap();
        let d_ba = boundary_diff(fb, &full, &target_a, &chain, 0).unwrap();
        let m1 = mvc_membrane(&table, &d_ab).unwrap();
        let m2 = mvc_membrane(&table, &d_ba).unwrap();
        for (u, v) in m1.data().iter().zip(m2.data()) {
            assert_eq!(*u, -*v);
        }
    }

    #[test]
    fn order_must_be_a_permutation() {
        let f = Frame::zeros(30, 10, 1);
        let (_, layout) = two_streams(30, 10, f.clone(), f);
        assert!(MembraneBlender::new(&layout, MembraneMethod::Mvc, Some(&[0, 0]), None).is_err());
        assert!(MembraneBlender::new(&layout, MembraneMethod::Mvc, Some(&[1]), None).is_err());
        let b = MembraneBlender::new(&layout, MembraneMethod::Mvc, Some(&[1, 0]), None).unwrap();
        assert_eq!(b.processing_order(), vec![1, 0]);
    }

    #[test]
    fn mvc_cache_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (w, h) = (90, 40);
        let a = Frame::from_fn(w, h, 3, |_, _, _| rng.gen_range(0.0..1.0));
        let b = Frame::from_fn(w, h, 3, |_, _, _| rng.gen_range(0.0..1.0));
        let (streams, layout) = two_streams(w, h, a, b);
        let dir = std::env::temp_dir().join(format!("pb-mvc-cache-{}", std::process::id()));
        let _ = std::fs::remove_file(&dir);
        let fresh = MembraneBlender::mvc_cached(&layout, None, None, &dir).unwrap();
        assert!(dir.exists());
        let cached = MembraneBlender::mvc_cached(&layout, None, None, &dir).unwrap();
        let frames = frames_at(&streams, 0).unwrap();
        assert_eq!(fresh.blend(&frames).unwrap(), cached.blend(&frames).unwrap());
        std::fs::remove_file(&dir).unwrap();
    }
}
