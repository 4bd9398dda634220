//! Orthonormal DCT-II / DCT-III on top of a same-length complex FFT
//! (Makhoul's even/odd reordering).

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

#[derive(Clone)]
pub struct Dct1 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    // e^{-i pi k / 2n}, orthonormal scale folded in
    twiddle: Vec<Complex64>,
    scratch_len: usize,
}

impl std::fmt::Debug for Dct1 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dct1").field("n", &self.n).finish()
    }
}

/// Per-thread buffers for [`Dct1`].
pub struct DctScratch {
    buf: Vec<Complex64>,
    fft: Vec<Complex64>,
}

impl Dct1 {
    pub fn new(planner: &mut FftPlanner<f64>, n: usize) -> Self {
        assert!(n > 0, "empty transform");
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let scratch_len = fwd
            .get_inplace_scratch_len()
            .max(inv.get_inplace_scratch_len());
        let twiddle = (0..n)
            .map(|k| {
                let s = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
                Complex64::from_polar(s, -PI * k as f64 / (2 * n) as f64)
            })
            .collect();
        Self {
            n,
            fwd,
            inv,
            twiddle,
            scratch_len,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn scratch(&self) -> DctScratch {
        DctScratch {
            buf: vec![Complex64::default(); self.n],
            fft: vec![Complex64::default(); self.scratch_len],
        }
    }

    /// In-place orthonormal DCT-II.
    pub fn forward(&self, x: &mut [f64], s: &mut DctScratch) {
        let n = self.n;
        debug_assert_eq!(x.len(), n);
        for i in 0..n.div_ceil(2) {
            s.buf[i] = Complex64::new(x[2 * i], 0.0);
        }
        for i in 0..n / 2 {
            s.buf[n - 1 - i] = Complex64::new(x[2 * i + 1], 0.0);
        }
        self.fwd.process_with_scratch(&mut s.buf, &mut s.fft);
        for k in 0..n {
            x[k] = (self.twiddle[k] * s.buf[k]).re;
        }
    }

    /// In-place orthonormal DCT-III (inverse of [`Dct1::forward`]).
    pub fn inverse(&self, x: &mut [f64], s: &mut DctScratch) {
        let n = self.n;
        debug_assert_eq!(x.len(), n);
        // undo scaling, then W_k V_k = X_k - i X_{n-k}
        for k in 0..n {
            let t = self.twiddle[k];
            let scale = t.norm();
            let a = x[k] / scale;
            let b = if k == 0 {
                0.0
            } else {
                x[n - k] / self.twiddle[n - k].norm()
            };
            s.buf[k] = Complex64::new(a, -b) * (t.conj() / scale);
        }
        self.inv.process_with_scratch(&mut s.buf, &mut s.fft);
        let inv_n = 1.0 / n as f64;
        for i in 0..n.div_ceil(2) {
            x[2 * i] = s.buf[i].re * inv_n;
        }
        for i in 0..n / 2 {
            x[2 * i + 1] = s.buf[n - 1 - i].re * inv_n;
        }
    }
}

/// Separable 2-D DCT on single-channel row-major planes.
#[derive(Debug, Clone)]
pub struct Dct2d {
    width: usize,
    height: usize,
    rows: Dct1,
    cols: Dct1,
}

impl Dct2d {
    pub fn new(width: usize, height: usize) -> Self {
        let mut planner = FftPlanner::new();
        let rows = Dct1::new(&mut planner, width);
        let cols = Dct1::new(&mut planner, height);
        Self {
            width,
            height,
            rows,
            cols,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn forward(&self, plane: &mut [f64]) {
        self.apply(plane, true);
    }

    pub fn inverse(&self, plane: &mut [f64]) {
        self.apply(plane, false);
    }

    fn apply(&self, plane: &mut [f64], forward: bool) {
        let (w, h) = (self.width, self.height);
        assert_eq!(plane.len(), w * h, "plane size mismatch");
        let run = |t: &Dct1, data: &mut [f64], len: usize| {
            data.par_chunks_mut(len).for_each_init(
                || t.scratch(),
                |s, row| {
                    if forward {
                        t.forward(row, s)
                    } else {
                        t.inverse(row, s)
                    }
                },
            );
        };
        run(&self.rows, plane, w);
        let mut tr = transpose(plane, w, h);
        run(&self.cols, &mut tr, h);
        plane.copy_from_slice(&transpose(&tr, h, w));
    }
}

fn transpose(src: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(h).enumerate().for_each(|(x, col)| {
        for (y, v) in col.iter_mut().enumerate() {
            *v = src[y * w + x];
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                let s: f64 = (0..n)
                    .map(|i| x[i] * (PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos())
                    .sum();
                s * if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() }
            })
            .collect()
    }

    #[test]
    fn matches_defining_sum_and_inverts() {
        let mut planner = FftPlanner::new();
        for n in [1, 2, 3, 5, 8, 13, 64] {
            let d = Dct1::new(&mut planner, n);
            let mut s = d.scratch();
            let x: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) % 5) as f64 - 1.7).collect();
            let mut y = x.clone();
            d.forward(&mut y, &mut s);
            for (a, b) in y.iter().zip(naive(&x)) {
                assert!((a - b).abs() < 1e-12, "n={n}");
            }
            d.inverse(&mut y, &mut s);
            for (a, b) in y.iter().zip(&x) {
                assert!((a - b).abs() < 1e-12, "n={n}");
            }
        }
    }

    #[test]
    fn two_d_round_trip_on_odd_shape() {
        let (w, h) = (7, 4);
        let x: Vec<f64> = (0..w * h).map(|i| (i as f64 * 0.37).sin()).collect();
        let t = Dct2d::new(w, h);
        let mut y = x.clone();
        t.forward(&mut y);
        // separability: first coefficient is the scaled mean
        let mean = x.iter().sum::<f64>() / (w * h) as f64;
        assert!((y[0] - mean * ((w * h) as f64).sqrt()).abs() < 1e-12);
        t.inverse(&mut y);
        for (a, b) in y.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
