//! Exact squared Euclidean distance transform (lower envelope of parabolas,
//! one pass over columns then one over rows).

use crate::model::Mask;
use rayon::prelude::*;

/// Squared distance assigned to pixels when the feature set is empty.
pub const INF: f64 = f64::INFINITY;

/// Squared Euclidean distance from every pixel to the nearest set pixel of
/// `features`. Distances are exact integers; `INF` when there are no features.
pub fn squared_edt(features: &Mask) -> Vec<f64> {
    let (w, h) = features.dims();
    if w == 0 || h == 0 {
        return Vec::new();
    }

    // Column pass, written transposed so both passes walk contiguous memory.
    let mut cols = vec![INF; w * h];
    cols.par_chunks_mut(h).enumerate().for_each(|(x, out)| {
        let f: Vec<f64> = (0..h)
            .map(|y| if features.get(x, y) { 0.0 } else { INF })
            .collect();
        transform_1d(&f, out);
    });

    let mut out = vec![INF; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let f: Vec<f64> = (0..w).map(|x| cols[x * h + y]).collect();
        transform_1d(&f, row);
    });
    out
}

/// Euclidean distance (not squared).
pub fn edt(features: &Mask) -> Vec<f64> {
    squared_edt(features).into_iter().map(f64::sqrt).collect()
}

/// 1-D squared distance transform of a sampled function. Infinite samples
/// contribute no parabola.
fn transform_1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v: Vec<usize> = Vec::with_capacity(n);
    let mut z: Vec<f64> = Vec::with_capacity(n + 1);

    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        let fq = f[q] + (q * q) as f64;
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    z.clear();
                    z.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let s = (fq - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
                    if s <= *z.last().unwrap() {
                        v.pop();
                        z.pop();
                        if v.is_empty() {
                            continue;
                        }
                    } else {
                        v.push(q);
                        z.push(s);
                        break;
                    }
                }
            }
        }
    }

    if v.is_empty() {
        out.iter_mut().for_each(|o| *o = INF);
        return;
    }
    z.push(f64::INFINITY);
    let mut k = 0;
    for (p, o) in out.iter_mut().enumerate() {
        while z[k + 1] < p as f64 {
            k += 1;
        }
        let d = p as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(mask: &Mask) -> Vec<f64> {
        let (w, h) = mask.dims();
        let pts: Vec<(usize, usize)> = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .filter(|&(x, y)| mask.get(x, y))
            .collect();
        let mut out = vec![INF; w * h];
        for y in 0..h {
            for x in 0..w {
                for &(px, py) in &pts {
                    let dx = x as f64 - px as f64;
                    let dy = y as f64 - py as f64;
                    out[y * w + x] = out[y * w + x].min(dx * dx + dy * dy);
                }
            }
        }
        out
    }

    #[test]
    fn matches_brute_force_on_random_sparse_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let w = rng.gen_range(1..40);
            let h = rng.gen_range(1..40);
            let p = rng.gen_range(0.0..0.2);
            let m = Mask::from_fn(w, h, |_, _| rng.gen_bool(p));
            assert_eq!(squared_edt(&m), brute(&m));
        }
    }

    #[test]
    fn empty_feature_set_is_infinite() {
        let d = squared_edt(&Mask::new(5, 3));
        assert!(d.iter().all(|v| v.is_infinite()));
    }

    #[test]
    fn single_point() {
        let mut m = Mask::new(5, 5);
        m.set(2, 2, true);
        let d = squared_edt(&m);
        assert_eq!(d[0], 8.0);
        assert_eq!(d[2 * 5 + 4], 4.0);
    }
}
