//! Slow, direct reference computations for tests. Everything here works on
//! plain row-major `f64` slices so it shares no code with the library under
//! test.

/// Symmetric positive definite matrix stored by lower band.
pub struct SymBanded {
    n: usize,
    bw: usize,
    // row i holds columns i-bw..=i
    data: Vec<f64>,
}

impl SymBanded {
    pub fn new(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    fn at(&mut self, i: usize, j: usize) -> &mut f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.bw, "entry ({i}, {j}) outside band {}", self.bw);
        &mut self.data[i * (self.bw + 1) + self.bw - (i - j)]
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        *self.at(i, j) += v;
    }

    /// Cholesky factorization and solve; `None` if not positive definite.
    pub fn solve(mut self, rhs: &[f64]) -> Option<Vec<f64>> {
        let (n, bw) = (self.n, self.bw);
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let mut s = *self.at(i, j);
                for k in j0.max(j.saturating_sub(bw))..j {
                    s -= *self.at(i, k) * *self.at(j, k);
                }
                if i == j {
                    if s <= 0.0 {
                        return None;
                    }
                    *self.at(i, i) = s.sqrt();
                } else {
                    let d = *self.at(j, j);
                    *self.at(i, j) = s / d;
                }
            }
        }
        let mut y = rhs.to_vec();
        for i in 0..n {
            for k in i.saturating_sub(bw)..i {
                y[i] -= *self.at(i, k) * y[k];
            }
            y[i] /= *self.at(i, i);
        }
        for i in (0..n).rev() {
            for k in i + 1..(i + bw + 1).min(n) {
                y[i] -= *self.at(k, i) * y[k];
            }
            y[i] /= *self.at(i, i);
        }
        Some(y)
    }
}

fn neighbours(w: usize, h: usize, p: usize) -> impl Iterator<Item = usize> {
    let (x, y) = (p % w, p / w);
    let mut v = Vec::with_capacity(4);
    if x > 0 {
        v.push(p - 1);
    }
    if x + 1 < w {
        v.push(p + 1);
    }
    if y > 0 {
        v.push(p - w);
    }
    if y + 1 < h {
        v.push(p + w);
    }
    v.into_iter()
}

/// Discrete harmonic interpolation: pixels with `fixed` values are Dirichlet
/// data, other `inside` pixels satisfy the 4-neighbour Laplace equation with
/// reflecting (Neumann) behaviour towards pixels outside. Returns 0 outside.
/// `None` if some free pixel is not connected to any fixed one.
pub fn harmonic_fill(w: usize, h: usize, inside: &[bool], fixed: &[Option<f64>]) -> Option<Vec<f64>> {
    let n = w * h;
    assert_eq!(inside.len(), n);
    assert_eq!(fixed.len(), n);
    let mut index = vec![usize::MAX; n];
    let mut free = Vec::new();
    for p in 0..n {
        if inside[p] && fixed[p].is_none() {
            index[p] = free.len();
            free.push(p);
        }
    }
    let mut a = SymBanded::new(free.len(), w);
    let mut b = vec![0.0; free.len()];
    for (r, &p) in free.iter().enumerate() {
        for q in neighbours(w, h, p) {
            if !inside[q] && fixed[q].is_none() {
                continue;
            }
            a.add(r, r, 1.0);
            match fixed[q] {
                Some(v) => b[r] += v,
                None if index[q] < r => a.add(r, index[q], -1.0),
                None => {}
            }
        }
    }
    let sol = if free.is_empty() { Vec::new() } else { a.solve(&b)? };
    let mut out = vec![0.0; n];
    for p in 0..n {
        if let Some(v) = fixed[p] {
            out[p] = v;
        }
    }
    for (r, &p) in free.iter().enumerate() {
        out[p] = sol[r];
    }
    Some(out)
}

/// 5-point Laplacian with reflecting borders (missing neighbours dropped).
pub fn neumann_laplacian(w: usize, h: usize, u: &[f64]) -> Vec<f64> {
    (0..w * h)
        .map(|p| neighbours(w, h, p).map(|q| u[q] - u[p]).sum())
        .collect()
}

/// Solves `(eps - L) p = eps * intensity - div` with `L` the reflecting
/// 5-point Laplacian, by dense banded Cholesky.
pub fn screened_poisson(w: usize, h: usize, eps: f64, intensity: &[f64], div: &[f64]) -> Vec<f64> {
    let n = w * h;
    let mut a = SymBanded::new(n, w);
    for p in 0..n {
        a.add(p, p, eps);
        for q in neighbours(w, h, p) {
            a.add(p, p, 1.0);
            if q < p {
                a.add(p, q, -1.0);
            }
        }
    }
    let rhs: Vec<f64> = intensity.iter().zip(div).map(|(i, d)| eps * i - d).collect();
    a.solve(&rhs).expect("screened operator is positive definite")
}

/// Orthonormal DCT-II by the defining sum.
pub fn dct2(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let s: f64 = x
                .iter()
                .enumerate()
                .map(|(i, v)| v * (std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos())
                .sum();
            let scale = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
            s * scale
        })
        .collect()
}

/// Histogram bin of `v` among `bins` equal bins over `[0, max]`.
pub fn bin_of(v: f64, max: f64, bins: usize) -> usize {
    ((v / max * bins as f64).floor() as usize).min(bins - 1)
}

/// Otsu's threshold index over a `bins`-bin histogram on `[0, max]`,
/// found by evaluating every split from scratch. Pixels in bins `>= t` form
/// the upper class; the first maximiser wins.
pub fn otsu_exhaustive(values: &[f64], bins: usize) -> usize {
    let max = values.iter().cloned().fold(0.0, f64::max);
    let b: Vec<usize> = values.iter().map(|&v| bin_of(v, max, bins)).collect();
    let mut best = (-1.0f64, 1);
    for t in 1..bins {
        let lo: Vec<f64> = b.iter().filter(|&&i| i < t).map(|&i| i as f64).collect();
        let hi: Vec<f64> = b.iter().filter(|&&i| i >= t).map(|&i| i as f64).collect();
        let score = if lo.is_empty() || hi.is_empty() {
            0.0
        } else {
            let n = values.len() as f64;
            let (w0, w1) = (lo.len() as f64 / n, hi.len() as f64 / n);
            let m0 = lo.iter().sum::<f64>() / lo.len() as f64;
            let m1 = hi.iter().sum::<f64>() / hi.len() as f64;
            w0 * w1 * (m0 - m1) * (m0 - m1)
        };
        if score > best.0 + 1e-12 * best.0.abs().max(1e-300) {
            best = (score, t);
        }
    }
    best.1
}

/// Straight-line bleeding computation on an energy map already expressed in
/// 8-bit intensity units. Returns `(A_h, E_h, B, P_B)`.
pub fn bleeding(energy: &[f64], alpha: f64, delta: f64) -> (usize, f64, Vec<f64>, f64) {
    let max = energy.iter().cloned().fold(0.0, f64::max);
    let min = energy.iter().cloned().fold(f64::INFINITY, f64::min);
    if max < 1.0 || max == min {
        return (0, 0.0, vec![0.0; energy.len()], 0.0);
    }
    let t = otsu_exhaustive(energy, 256);
    let mut a_h = 0usize;
    let mut e_h = 0.0;
    for &e in energy {
        if bin_of(e, max, 256) >= t {
            a_h += 1;
            e_h += e;
        }
    }
    let shrink = alpha * e_h / (a_h as f64 + delta);
    let mut b = Vec::with_capacity(energy.len());
    let mut p_b = 0.0;
    for &e in energy {
        let v = if e - shrink > 0.0 { e - shrink } else { 0.0 };
        b.push(v);
        p_b += v * v;
    }
    (a_h, e_h, b, p_b)
}
