use super::{edt, exclusive_zones, SeamLayout};
use crate::error::{BlendError, Result};
use crate::model::Mask;

/// Per-stream feather weights; `weights[i][y * width + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMaps {
    pub width: usize,
    pub height: usize,
    pub radius: f64,
    pub weights: Vec<Vec<f64>>,
}

impl WeightMaps {
    #[inline]
    pub fn weight(&self, stream: usize, x: usize, y: usize) -> f64 {
        self.weights[stream][y * self.width + x]
    }
}

/// Half of the narrowest pairwise overlap band, at least one pixel.
///
/// The band width of an overlap is twice its largest inscribed distance.
pub fn default_feather_radius(layout: &SeamLayout) -> f64 {
    let mut min_width = f64::INFINITY;
    for ov in layout.overlaps() {
        let outside = Mask::from_vec(
            ov.mask.width(),
            ov.mask.height(),
            ov.mask.data().iter().map(|&b| !b).collect(),
        )
        .expect("same dims");
        let inscribed = edt::edt(&outside)
            .into_iter()
            .zip(ov.mask.data())
            .filter(|(_, &b)| b)
            .fold(0.0f64, |m, (d, _)| m.max(d));
        if inscribed.is_finite() {
            min_width = min_width.min(2.0 * inscribed);
        }
    }
    if min_width.is_finite() {
        (0.5 * min_width).max(1.0)
    } else {
        1.0
    }
}

/// Linear cross-fade weights around the seams.
///
/// For a stream `i` covering pixel `p`, let `d_i` be the distance from `p` to
/// the exclusive zone of `i` and `o_i` the smallest such distance among the
/// other streams covering `p`. The signed distance to the seam is
/// `(o_i - d_i) / 2`, and the raw weight ramps linearly from 0 to 1 over
/// `[-radius, radius]`. Raw weights are renormalized to sum to one, which only
/// changes anything where three or more streams overlap.
pub fn feather_weights(
    masks: &[Mask],
    layout: &SeamLayout,
    radius: Option<f64>,
) -> Result<WeightMaps> {
    if masks.len() != layout.stream_count() {
        return Err(BlendError::structural(format!(
            "{} masks for a layout of {} streams",
            masks.len(),
            layout.stream_count()
        )));
    }
    let radius = radius.unwrap_or_else(|| default_feather_radius(layout));
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(BlendError::parameter(format!("feather radius must be > 0, got {radius}")));
    }
    let (w, h) = layout.dims();
    if masks.iter().any(|m| m.dims() != (w, h)) {
        return Err(BlendError::structural("mask size differs from layout"));
    }

    let dist: Vec<Vec<f64>> = exclusive_zones(masks).iter().map(edt::edt).collect();
    let n = masks.len();
    let mut weights = vec![vec![0.0; w * h]; n];
    let mut covering = Vec::with_capacity(n);
    let mut raw = vec![0.0; n];

    for p in 0..w * h {
        covering.clear();
        covering.extend((0..n).filter(|&i| masks[i].data()[p]));
        match covering.len() {
            0 => continue,
            1 => {
                weights[covering[0]][p] = 1.0;
                continue;
            }
            _ => {}
        }
        if covering.iter().all(|&i| dist[i][p].is_infinite()) {
            // no exclusive zone anywhere near: follow the trimmed label
            if let Some(l) = layout.label(p % w, p / w) {
                weights[l][p] = 1.0;
            }
            continue;
        }
        let mut sum = 0.0;
        for &i in &covering {
            let d = dist[i][p];
            let other = covering
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| dist[j][p])
                .fold(f64::INFINITY, f64::min);
            let r = if d.is_infinite() {
                0.0
            } else if other.is_infinite() {
                1.0
            } else {
                let s = 0.5 * (other - d);
                (0.5 + s / (2.0 * radius)).clamp(0.0, 1.0)
            };
            raw[i] = r;
            sum += r;
        }
        for &i in &covering {
            weights[i][p] = raw[i] / sum;
        }
    }

    Ok(WeightMaps {
        width: w,
        height: h,
        radius,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seams::compute_seams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rect(w: usize, h: usize, x0: usize, x1: usize, y0: usize, y1: usize) -> Mask {
        Mask::from_fn(w, h, |x, y| x >= x0 && x < x1 && y >= y0 && y < y1)
    }

    #[test]
    fn seam_pixel_gets_equal_weights() {
        // overlap [40, 61), x = 50 is equidistant from both exclusive zones
        let (w, h) = (101, 3);
        let masks = [rect(w, h, 0, 61, 0, h), rect(w, h, 40, 101, 0, h)];
        let layout = compute_seams(&masks).unwrap();
        let wm = feather_weights(&masks, &layout, None).unwrap();
        assert_eq!(wm.weight(0, 50, 1), 0.5);
        assert_eq!(wm.weight(1, 50, 1), 0.5);
        // exclusive interiors
        assert_eq!(wm.weight(0, 10, 1), 1.0);
        assert_eq!(wm.weight(1, 10, 1), 0.0);
        assert_eq!(wm.weight(1, 90, 1), 1.0);
    }

    #[test]
    fn ramp_is_linear_in_seam_distance() {
        let (w, h) = (101, 1);
        let masks = [rect(w, h, 0, 61, 0, h), rect(w, h, 40, 101, 0, h)];
        let layout = compute_seams(&masks).unwrap();
        let wm = feather_weights(&masks, &layout, Some(4.0)).unwrap();
        for x in 40..61 {
            let s = 50.0 - x as f64; // signed distance into stream 0's side
            let expect = (0.5 + s / 8.0).clamp(0.0, 1.0);
            assert!((wm.weight(0, x, 0) - expect).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn default_radius_is_half_band() {
        let (w, h) = (100, 30);
        let masks = [rect(w, h, 0, 60, 0, h), rect(w, h, 40, 100, 0, h)];
        let layout = compute_seams(&masks).unwrap();
        assert_eq!(default_feather_radius(&layout), 10.0);
    }

    #[test]
    fn non_positive_radius_is_rejected() {
        let (w, h) = (10, 4);
        let masks = [rect(w, h, 0, 6, 0, h), rect(w, h, 4, 10, 0, h)];
        let layout = compute_seams(&masks).unwrap();
        assert!(matches!(
            feather_weights(&masks, &layout, Some(0.0)),
            Err(BlendError::Parameter(_))
        ));
        assert!(feather_weights(&masks, &layout, Some(-1.0)).is_err());
    }

    #[test]
    fn weights_sum_to_one_on_random_layouts() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let (w, h) = (rng.gen_range(30..80), rng.gen_range(30..80));
            let n = rng.gen_range(2..5);
            let masks: Vec<Mask> = (0..n)
                .map(|_| {
                    let x0 = rng.gen_range(0..w / 2);
                    let y0 = rng.gen_range(0..h / 2);
                    rect(w, h, x0, x0 + rng.gen_range(w / 3..w), y0, y0 + rng.gen_range(h / 3..h))
                })
                .collect();
            let Ok(layout) = compute_seams(&masks) else { continue };
            let wm = feather_weights(&masks, &layout, None).unwrap();
            for y in 0..h {
                for x in 0..w {
                    let s: f64 = (0..n).map(|i| wm.weight(i, x, y)).sum();
                    if layout.coverage().get(x, y) {
                        assert!((s - 1.0).abs() < 1e-6, "sum {s} at ({x},{y})");
                    } else {
                        assert_eq!(s, 0.0);
                    }
                    for i in 0..n {
                        if !masks[i].get(x, y) {
                            assert_eq!(wm.weight(i, x, y), 0.0);
                        }
                    }
                }
            }
        }
    }
}
