//! Small sparse symmetric solvers for the spline normal equations.

use crate::error::{BlendError, Result};

/// Symmetric matrix in compressed rows (both triangles stored).
#[derive(Debug, Clone)]
pub struct Csr {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl Csr {
    /// From per-row lower-triangle entries `(col <= row, value)`.
    pub fn from_lower(n: usize, rows: &[Vec<(u32, f64)>]) -> Self {
        let mut full: Vec<Vec<(u32, f64)>> = rows.to_vec();
        for (i, r) in rows.iter().enumerate() {
            for &(j, v) in r {
                if j as usize != i {
                    full[j as usize].push((i as u32, v));
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut r in full {
            r.sort_by_key(|e| e.0);
            for (j, v) in r {
                cols.push(j);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .map(|e| self.vals[e] * x[self.cols[e] as usize])
                    .sum()
            })
            .collect()
    }

    fn diag(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .find(|&e| self.cols[e] as usize == i)
                    .map_or(0.0, |e| self.vals[e])
            })
            .collect()
    }

    /// Jacobi-preconditioned conjugate gradients from zero, stopping at
    /// relative residual `tol`. Works for singular but consistent systems.
    pub fn cg_jacobi(&self, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
        let n = self.n;
        let inv_d: Vec<f64> = self
            .diag()
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
            .collect();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let bnorm = dot(b, b).sqrt();
        let mut x = vec![0.0; n];
        if bnorm == 0.0 {
            return Ok(x);
        }
        let mut r = b.to_vec();
        let mut z: Vec<f64> = r.iter().zip(&inv_d).map(|(a, d)| a * d).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        for _ in 0..max_iter {
            let ap = self.mul(&p);
            let alpha = rz / dot(&p, &ap);
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            if dot(&r, &r).sqrt() <= tol * bnorm {
                return Ok(x);
            }
            for i in 0..n {
                z[i] = r[i] * inv_d[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(BlendError::Numerical(format!(
            "conjugate gradients did not reach relative residual {tol:e} in {max_iter} iterations"
        )))
    }
}

/// Cholesky factor stored by row profile (skyline).
#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    first: Vec<usize>,
    ptr: Vec<usize>,
    l: Vec<f64>,
}

impl SkylineCholesky {
    /// Factors the matrix given by lower-triangle rows, with `map(i, j, v)`
    /// applied to every stored entry (used to impose constraints).
    pub fn factor(n: usize, rows: &[Vec<(u32, f64)>], map: impl Fn(usize, usize, f64) -> f64) -> Result<Self> {
        let first: Vec<usize> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| r.iter().map(|e| e.0 as usize).min().unwrap_or(i).min(i))
            .collect();
        let mut ptr = Vec::with_capacity(n + 1);
        ptr.push(0);
        for i in 0..n {
            ptr.push(ptr[i] + i - first[i] + 1);
        }
        let mut l = vec![0.0; ptr[n]];
        for (i, r) in rows.iter().enumerate() {
            for &(j, v) in r {
                let j = j as usize;
                l[ptr[i] + j - first[i]] += v;
            }
            for j in first[i]..=i {
                let e = &mut l[ptr[i] + j - first[i]];
                *e = map(i, j, *e);
            }
        }
        for i in 0..n {
            let fi = first[i];
            let scale = l[ptr[i] + i - fi].abs().max(f64::MIN_POSITIVE);
            for j in fi..=i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let mut s = l[ptr[i] + j - fi];
                let (ri, rj) = (ptr[i] + k0 - fi, ptr[j] + k0 - fj);
                for t in 0..j - k0 {
                    s -= l[ri + t] * l[rj + t];
                }
                if j < i {
                    l[ptr[i] + j - fi] = s / l[ptr[j] + j - fj];
                } else {
                    if s <= 1e-13 * scale {
                        return Err(BlendError::RankDeficient(format!(
                            "normal matrix is singular at unknown {i}"
                        )));
                    }
                    l[ptr[i] + i - fi] = s.sqrt();
                }
            }
        }
        Ok(Self { first, ptr, l })
    }

    pub fn solve(&self, b: &mut [f64]) {
        let n = self.first.len();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.l[self.ptr[i]..self.ptr[i + 1]];
            let mut s = b[i];
            for (t, k) in (fi..i).enumerate() {
                s -= row[t] * b[k];
            }
            b[i] = s / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.l[self.ptr[i]..self.ptr[i + 1]];
            b[i] /= row[i - fi];
            let bi = b[i];
            for (t, k) in (fi..i).enumerate() {
                b[k] -= row[t] * bi;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> Vec<Vec<(u32, f64)>> {
        (0..n)
            .map(|i| {
                let mut r = vec![(i as u32, 2.0)];
                if i > 0 {
                    r.push((i as u32 - 1, -1.0));
                }
                r
            })
            .collect()
    }

    #[test]
    fn skyline_and_cg_agree() {
        let n = 30;
        let rows = laplace_1d(n);
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let f = SkylineCholesky::factor(n, &rows, |_, _, v| v).unwrap();
        let mut x = b.clone();
        f.solve(&mut x);
        let a = Csr::from_lower(n, &rows);
        let r = a.mul(&x);
        for (u, v) in r.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
        let y = a.cg_jacobi(&b, 1e-12, 200).unwrap();
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        // pure Neumann chain: constants are in the null space
        let n = 5;
        let mut rows = laplace_1d(n);
        rows[0][0].1 = 1.0;
        rows[n - 1][0].1 = 1.0;
        assert!(matches!(
            SkylineCholesky::factor(n, &rows, |_, _, v| v),
            Err(BlendError::RankDeficient(_))
        ));
    }
}
