//! Fixed seam layout shared by all frames of a scene.
//!
//! Overlap pixels go to the stream whose exclusive (non-overlapping) zone is
//! nearest in exact Euclidean distance, ties to the lowest stream position.

mod boundary;
pub mod edt;
mod feather;

pub use boundary::{extract_boundary, trace_region, BoundaryChain};
pub use feather::{default_feather_radius, feather_weights, WeightMaps};

use crate::error::{BlendError, Result};
use crate::model::Mask;
use sha2::{Digest, Sha256};

/// Label value for pixels covered by no stream.
pub const UNCOVERED: u32 = u32::MAX;

/// Pixels covered by both streams `a < b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Overlap {
    pub a: usize,
    pub b: usize,
    pub mask: Mask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeamLayout {
    width: usize,
    height: usize,
    masks: Vec<Mask>,
    trimmed: Vec<Mask>,
    labels: Vec<u32>,
    coverage: Mask,
    overlaps: Vec<Overlap>,
}

impl SeamLayout {
    /// Rebuilds a layout from original and trimmed masks (e.g. after import),
    /// validating the partition invariants.
    pub fn from_trimmed(masks: Vec<Mask>, trimmed: Vec<Mask>) -> Result<Self> {
        validate_masks(&masks)?;
        if trimmed.len() != masks.len() {
            return Err(BlendError::structural(format!(
                "{} trimmed masks for {} streams",
                trimmed.len(),
                masks.len()
            )));
        }
        let (w, h) = masks[0].dims();
        for (i, (t, m)) in trimmed.iter().zip(&masks).enumerate() {
            if t.dims() != (w, h) {
                return Err(BlendError::structural(format!("trimmed mask {i} has wrong size")));
            }
            if !t.is_subset_of(m) {
                return Err(BlendError::structural(format!(
                    "trimmed mask {i} is not contained in its coverage mask"
                )));
            }
        }
        let coverage = union(&masks);
        let mut labels = vec![UNCOVERED; w * h];
        for p in 0..w * h {
            let owners: Vec<usize> = (0..trimmed.len()).filter(|&i| trimmed[i].data()[p]).collect();
            match (coverage.data()[p], owners.as_slice()) {
                (false, []) => {}
                (true, [i]) => labels[p] = *i as u32,
                _ => {
                    return Err(BlendError::structural(format!(
                        "trimmed masks do not partition coverage at pixel ({}, {})",
                        p % w,
                        p / w
                    )))
                }
            }
        }
        let overlaps = pairwise_overlaps(&masks);
        Ok(SeamLayout {
            width: w,
            height: h,
            masks,
            trimmed,
            labels,
            coverage,
            overlaps,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn stream_count(&self) -> usize {
        self.masks.len()
    }

    /// Original coverage masks `M_i`.
    pub fn masks(&self) -> &[Mask] {
        &self.masks
    }

    /// Trimmed masks `M'_i`.
    pub fn trimmed_masks(&self) -> &[Mask] {
        &self.trimmed
    }

    pub fn label_map(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, x: usize, y: usize) -> Option<usize> {
        let l = self.labels[y * self.width + x];
        (l != UNCOVERED).then_some(l as usize)
    }

    /// Union of all coverage masks; pixels outside it are never blended.
    pub fn coverage(&self) -> &Mask {
        &self.coverage
    }

    /// Non-empty pairwise overlaps.
    pub fn overlaps(&self) -> &[Overlap] {
        &self.overlaps
    }

    /// Regions `i` and `j` share a 4-adjacent pixel pair.
    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        let (w, h) = self.dims();
        for y in 0..h {
            for x in 0..w {
                let l = self.labels[y * w + x];
                if l == UNCOVERED {
                    continue;
                }
                let check = |o: u32| (l as usize == i && o as usize == j) || (l as usize == j && o as usize == i);
                if x + 1 < w && self.labels[y * w + x + 1] != UNCOVERED && check(self.labels[y * w + x + 1]) {
                    return true;
                }
                if y + 1 < h && self.labels[(y + 1) * w + x] != UNCOVERED && check(self.labels[(y + 1) * w + x]) {
                    return true;
                }
            }
        }
        false
    }

    /// Stable digest of the layout geometry, used to key precomputation caches.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.width as u64).to_le_bytes());
        hasher.update((self.height as u64).to_le_bytes());
        hasher.update((self.masks.len() as u64).to_le_bytes());
        for m in self.masks.iter().chain(&self.trimmed) {
            let bytes: Vec<u8> = m.data().iter().map(|&b| b as u8).collect();
            hasher.update(&bytes);
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

fn validate_masks(masks: &[Mask]) -> Result<()> {
    let first = masks
        .first()
        .ok_or_else(|| BlendError::structural("no masks given"))?;
    for (i, m) in masks.iter().enumerate() {
        if m.dims() != first.dims() {
            return Err(BlendError::structural(format!(
                "mask {i} is {}x{}, expected {}x{}",
                m.width(),
                m.height(),
                first.width(),
                first.height()
            )));
        }
        if m.is_empty() {
            return Err(BlendError::structural(format!("mask {i} is empty")));
        }
    }
    Ok(())
}

fn union(masks: &[Mask]) -> Mask {
    let (w, h) = masks[0].dims();
    let mut out = Mask::new(w, h);
    for m in masks {
        for y in 0..h {
            for x in 0..w {
                if m.get(x, y) {
                    out.set(x, y, true);
                }
            }
        }
    }
    out
}

fn pairwise_overlaps(masks: &[Mask]) -> Vec<Overlap> {
    let mut out = Vec::new();
    for a in 0..masks.len() {
        for b in a + 1..masks.len() {
            let mask = masks[a].and(&masks[b]);
            if !mask.is_empty() {
                out.push(Overlap { a, b, mask });
            }
        }
    }
    out
}

/// Exclusive zone of each stream: pixels it covers and no other stream does.
pub(crate) fn exclusive_zones(masks: &[Mask]) -> Vec<Mask> {
    let (w, h) = masks[0].dims();
    let mut counts = vec![0u32; w * h];
    for m in masks {
        for (c, &b) in counts.iter_mut().zip(m.data()) {
            *c += b as u32;
        }
    }
    masks
        .iter()
        .map(|m| {
            let data = m
                .data()
                .iter()
                .zip(&counts)
                .map(|(&b, &c)| b && c == 1)
                .collect();
            Mask::from_vec(w, h, data).expect("same dims")
        })
        .collect()
}

/// Computes the seam layout for a set of coverage masks.
pub fn compute_seams(masks: &[Mask]) -> Result<SeamLayout> {
    validate_masks(masks)?;
    for i in 0..masks.len() {
        for j in 0..masks.len() {
            if i != j && masks[i].is_subset_of(&masks[j]) && masks[i] != masks[j] {
                return Err(BlendError::DegenerateLayout(format!(
                    "stream {i} is strictly contained in stream {j}"
                )));
            }
        }
    }

    let (w, h) = masks[0].dims();
    let zones = exclusive_zones(masks);
    let dist: Vec<Vec<f64>> = zones.iter().map(edt::squared_edt).collect();

    let mut trimmed: Vec<Mask> = (0..masks.len()).map(|_| Mask::new(w, h)).collect();
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let mut best: Option<(usize, f64)> = None;
            for (i, m) in masks.iter().enumerate() {
                if !m.get(x, y) {
                    continue;
                }
                let d = dist[i][p];
                // strict comparison keeps the lowest index on ties
                if best.map_or(true, |(_, bd)| d < bd) {
                    best = Some((i, d));
                }
            }
            if let Some((i, _)) = best {
                trimmed[i].set(x, y, true);
            }
        }
    }

    SeamLayout::from_trimmed(masks.to_vec(), trimmed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rect(w: usize, h: usize, x0: usize, x1: usize) -> Mask {
        Mask::from_fn(w, h, |x, _| x >= x0 && x < x1)
    }

    #[test]
    fn overlapping_rectangles_split_at_band_midline() {
        // two 60-wide streams over a 100-wide panorama: overlap [40, 60)
        let (w, h) = (100, 20);
        let layout = compute_seams(&[rect(w, h, 0, 60), rect(w, h, 40, 100)]).unwrap();
        for y in 0..h {
            for x in 0..w {
                let expect = if x < 50 { 0 } else { 1 };
                assert_eq!(layout.label(x, y), Some(expect), "({x},{y})");
            }
        }
        assert_eq!(layout.overlaps().len(), 1);
        assert_eq!(layout.overlaps()[0].mask.count(), 20 * h);
    }

    #[test]
    fn odd_band_tie_goes_to_lower_index() {
        // overlap [40, 61): x = 50 is equidistant (11 from both zones)
        let (w, h) = (101, 4);
        let layout = compute_seams(&[rect(w, h, 0, 61), rect(w, h, 40, 101)]).unwrap();
        assert_eq!(layout.label(50, 0), Some(0));
        assert_eq!(layout.label(51, 0), Some(1));
    }

    #[test]
    fn identical_masks_go_to_first_stream() {
        let m = Mask::full(8, 8);
        let layout = compute_seams(&[m.clone(), m]).unwrap();
        assert_eq!(layout.trimmed_masks()[0].count(), 64);
        assert!(layout.trimmed_masks()[1].is_empty());
    }

    #[test]
    fn empty_and_contained_masks_are_rejected() {
        let (w, h) = (10, 10);
        assert!(matches!(
            compute_seams(&[Mask::full(w, h), Mask::new(w, h)]),
            Err(BlendError::Structural(_))
        ));
        assert!(matches!(
            compute_seams(&[Mask::full(w, h), rect(w, h, 2, 5)]),
            Err(BlendError::DegenerateLayout(_))
        ));
        assert!(compute_seams(&[Mask::full(w, h), Mask::full(w, h + 1)]).is_err());
    }

    #[test]
    fn uncovered_pixels_have_no_label() {
        let (w, h) = (30, 5);
        let layout = compute_seams(&[rect(w, h, 0, 12), rect(w, h, 10, 25)]).unwrap();
        assert_eq!(layout.label(27, 2), None);
        assert!(!layout.coverage().get(27, 2));
    }

    fn random_blob(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Mask {
        let n = rng.gen_range(2..5);
        let disks: Vec<(f64, f64, f64)> = (0..n)
            .map(|_| {
                (
                    rng.gen_range(0.0..w as f64),
                    rng.gen_range(0.0..h as f64),
                    rng.gen_range(8.0..24.0),
                )
            })
            .collect();
        Mask::from_fn(w, h, |x, y| {
            disks
                .iter()
                .any(|&(cx, cy, r)| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r)
        })
    }

    #[test]
    fn assignment_matches_brute_force_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        while checked < 8 {
            let (w, h) = (rng.gen_range(40..96), rng.gen_range(40..96));
            let masks: Vec<Mask> = (0..rng.gen_range(2..4)).map(|_| random_blob(&mut rng, w, h)).collect();
            let layout = match compute_seams(&masks) {
                Ok(l) => l,
                Err(_) => continue,
            };
            checked += 1;
            let zones = exclusive_zones(&masks);
            let zone_pts: Vec<Vec<(usize, usize)>> = zones
                .iter()
                .map(|z| {
                    (0..h)
                        .flat_map(|y| (0..w).map(move |x| (x, y)))
                        .filter(|&(x, y)| z.get(x, y))
                        .collect()
                })
                .collect();
            for y in 0..h {
                for x in 0..w {
                    let mut best: Option<(usize, i64)> = None;
                    for (i, m) in masks.iter().enumerate() {
                        if !m.get(x, y) {
                            continue;
                        }
                        let d = zone_pts[i]
                            .iter()
                            .map(|&(px, py)| {
                                let dx = px as i64 - x as i64;
                                let dy = py as i64 - y as i64;
                                dx * dx + dy * dy
                            })
                            .min()
                            .unwrap_or(i64::MAX);
                        if best.map_or(true, |(_, bd)| d < bd) {
                            best = Some((i, d));
                        }
                    }
                    assert_eq!(layout.label(x, y), best.map(|b| b.0), "({x},{y})");
                }
            }
        }
    }

    #[test]
    fn from_trimmed_rejects_overlapping_partition() {
        let (w, h) = (10, 4);
        let a = rect(w, h, 0, 6);
        let b = rect(w, h, 4, 10);
        assert!(SeamLayout::from_trimmed(vec![a.clone(), b.clone()], vec![a.clone(), b.clone()]).is_err());
        let layout = compute_seams(&[a.clone(), b.clone()]).unwrap();
        let rebuilt =
            SeamLayout::from_trimmed(vec![a, b], layout.trimmed_masks().to_vec()).unwrap();
        assert_eq!(rebuilt, layout);
        assert_eq!(rebuilt.digest(), layout.digest());
    }
}
