//! Dense complex-matrix kernels used by the precoder.
//!
//! Matrices are small (at most a few tens of rows), so everything is a
//! plain row-major `Vec<Complex64>` with straightforward loops. The three
//! non-trivial kernels are:
//!
//! - [`lq_decompose`]: Householder LQ factorization `A = L·Q` with a positive
//!   real diagonal on `L` and a thin `Q` with orthonormal rows.
//! - [`dominant_right_singular_direction`]: power iteration on `A^H·A`.
//! - [`permute_rows`]: row reordering for the branch patterns.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Magnitude below which an LQ diagonal entry is treated as zero.
pub const RANK_TOL: f64 = 1e-12;

/// Default relative tolerance for the power iteration.
pub const POWER_ITER_TOL: f64 = 1e-12;

/// Default iteration cap for the power iteration.
pub const POWER_ITER_CAP: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    /// Builds a matrix from row-major data.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                expected: (rows, cols),
                got: (data.len(), 1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Real diagonal matrix padded with zero columns to `cols`.
    pub fn from_real_diag(diag: &[f64], cols: usize) -> Self {
        Self::from_fn(diag.len(), cols, |i, j| {
            if i == j {
                C64::new(diag[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Conjugate transpose.
    pub fn hermitian(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::ShapeMismatch {
                expected: (self.cols, rhs.cols),
                got: rhs.shape(),
            });
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs.data[k * rhs.cols + j];
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, x: &[C64]) -> Result<Vec<C64>> {
        if x.len() != self.cols {
            return Err(Error::ShapeMismatch {
                expected: (self.cols, 1),
                got: (x.len(), 1),
            });
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn add(&self, rhs: &Self) -> Result<Self> {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self> {
        self.zip_with(rhs, |a, b| a - b)
    }

    fn zip_with(&self, rhs: &Self, f: impl Fn(C64, C64) -> C64) -> Result<Self> {
        if self.shape() != rhs.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.shape(),
                got: rhs.shape(),
            });
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    /// Multiplies row `i` by `d[i]` (left multiplication by `diag(d)`).
    pub fn scale_rows(&self, d: &[f64]) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)] * d[i])
    }

    /// Multiplies column `j` by `d[j]` (right multiplication by `diag(d)`).
    pub fn scale_cols(&self, d: &[f64]) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)] * d[j])
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entrywise modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

pub fn vec_norm(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `Σ a_i · b_i` without conjugation.
pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Thin LQ factors of a `K×Nt` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LqFactors {
    /// `K×K` lower triangular with positive real diagonal.
    pub l: ComplexMatrix,
    /// `K×Nt` with orthonormal rows.
    pub q: ComplexMatrix,
}

/// Householder LQ factorization `A = L·Q` of a `K×Nt` matrix with `K ≤ Nt`.
///
/// Reflections are applied from the right, one row at a time, zeroing the
/// entries to the right of the diagonal. A final diagonal phase rotation makes
/// the diagonal of `L` real and positive, which fixes the factorization
/// uniquely.
pub fn lq_decompose(a: &ComplexMatrix) -> Result<LqFactors> {
    let (k, nt) = a.shape();
    if k > nt {
        return Err(Error::ShapeMismatch {
            expected: (nt, nt),
            got: (k, nt),
        });
    }
    if !a.is_finite() {
        return Err(Error::RankDeficient {
            index: 0,
            magnitude: f64::NAN,
        });
    }

    let mut m = a.clone();
    // Accumulates H_K···H_1 (each reflector is Hermitian and unitary).
    let mut p = ComplexMatrix::identity(nt);

    for i in 0..k {
        // y = (row segment)^H; reflect y onto alpha·e1.
        let y: Vec<C64> = (i..nt).map(|j| m[(i, j)].conj()).collect();
        let norm_y = vec_norm(&y);
        if norm_y < RANK_TOL {
            return Err(Error::RankDeficient {
                index: i,
                magnitude: norm_y,
            });
        }
        let phase = if y[0].norm() > 0.0 {
            y[0] / y[0].norm()
        } else {
            C64::new(1.0, 0.0)
        };
        let alpha = -phase * norm_y;
        let mut u = y;
        u[0] -= alpha;
        let u_norm2: f64 = u.iter().map(|z| z.norm_sqr()).sum();
        let tau = 2.0 / u_norm2;

        // Rows: m[r, i..] <- m[r, i..] - tau (m[r, i..]·u) u^H
        for r in i..k {
            let s: C64 = (i..nt).map(|j| m[(r, j)] * u[j - i]).sum();
            for j in i..nt {
                let uj = u[j - i].conj();
                m[(r, j)] -= tau * s * uj;
            }
        }
        // p <- H p with H = I - tau u u^H acting on rows i..nt
        for c in 0..nt {
            let s: C64 = (i..nt).map(|j| u[j - i].conj() * p[(j, c)]).sum();
            for j in i..nt {
                p[(j, c)] -= tau * u[j - i] * s;
            }
        }
        // exact zeros to the right of the diagonal
        for j in (i + 1)..nt {
            m[(i, j)] = C64::new(0.0, 0.0);
        }
    }

    let mut l = ComplexMatrix::from_fn(k, k, |i, j| if j <= i { m[(i, j)] } else { C64::new(0.0, 0.0) });
    let mut q = ComplexMatrix::from_fn(k, nt, |i, j| p[(i, j)]);

    for i in 0..k {
        let d = l[(i, i)];
        let mag = d.norm();
        if mag < RANK_TOL {
            return Err(Error::RankDeficient {
                index: i,
                magnitude: mag,
            });
        }
        let ph = d / mag;
        for r in i..k {
            l[(r, i)] *= ph.conj();
        }
        l[(i, i)] = C64::new(mag, 0.0);
        for j in 0..nt {
            q[(i, j)] *= ph;
        }
    }

    Ok(LqFactors { l, q })
}

/// Inverse of a square lower-triangular matrix by forward substitution.
pub fn invert_lower(l: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = l.rows();
    if l.cols() != n {
        return Err(Error::ShapeMismatch {
            expected: (n, n),
            got: l.shape(),
        });
    }
    let mut inv = ComplexMatrix::zeros(n, n);
    for c in 0..n {
        for i in c..n {
            let rhs = if i == c { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
            let acc: C64 = (c..i).map(|j| l[(i, j)] * inv[(j, c)]).sum();
            let d = l[(i, i)];
            if d.norm() < RANK_TOL {
                return Err(Error::RankDeficient {
                    index: i,
                    magnitude: d.norm(),
                });
            }
            inv[(i, c)] = (rhs - acc) / d;
        }
    }
    Ok(inv)
}

/// Rotates `v` so that its first entry with magnitude above 1e-8 is real positive.
pub fn fix_phase(v: &mut [C64]) {
    if let Some(z) = v.iter().copied().find(|z| z.norm() > 1e-8) {
        let ph = (z / z.norm()).conj();
        for x in v.iter_mut() {
            *x *= ph;
        }
    }
}

/// Unit-norm dominant right-singular vector of `a`, by power iteration on `A^H·A`.
///
/// Converges when the phase-normalized iterate changes by less than `tol`
/// (Euclidean norm) between steps. On hitting `max_iter` the best iterate is
/// returned inside [`Error::NoConvergence`]. The phase is fixed so the first
/// non-negligible entry is real positive.
pub fn dominant_right_singular_direction(
    a: &ComplexMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<C64>> {
    let gram = a.hermitian().matmul(a)?;
    let n = gram.rows();

    // Start from the Gram column with the largest norm; it lies in the row
    // space of `a` and is nonzero whenever `a` is.
    let (start, start_norm) = (0..n)
        .map(|j| {
            let c = gram.column(j);
            let nrm = vec_norm(&c);
            (c, nrm)
        })
        .fold((Vec::new(), -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
    if start_norm <= 0.0 {
        return Err(Error::RankDeficient {
            index: 0,
            magnitude: 0.0,
        });
    }
    let mut v: Vec<C64> = start.iter().map(|z| z / start_norm).collect();
    fix_phase(&mut v);

    let mut last_change = f64::INFINITY;
    for _ in 0..max_iter {
        let mut w = gram.mul_vec(&v)?;
        let nrm = vec_norm(&w);
        if nrm == 0.0 {
            return Err(Error::RankDeficient {
                index: 0,
                magnitude: 0.0,
            });
        }
        for z in w.iter_mut() {
            *z /= nrm;
        }
        fix_phase(&mut w);
        last_change = w.iter().zip(&v).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
        v = w;
        if last_change < tol {
            return Ok(v);
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        last_change,
        best_iterate: v,
    })
}

/// Returns the matrix whose row `i` is row `perm[i]` of `a` (0-based indices).
pub fn permute_rows(a: &ComplexMatrix, perm: &[usize]) -> Result<ComplexMatrix> {
    if !is_permutation(perm, a.rows()) {
        return Err(Error::InvalidPermutation(perm.to_vec()));
    }
    Ok(ComplexMatrix::from_fn(a.rows(), a.cols(), |i, j| a[(perm[i], j)]))
}

pub fn is_permutation(perm: &[usize], n: usize) -> bool {
    if perm.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return false;
        }
        seen[p] = true;
    }
    true
}

/// Inverse permutation (0-based).
pub fn invert_permutation(perm: &[usize]) -> Result<Vec<usize>> {
    if !is_permutation(perm, perm.len()) {
        return Err(Error::InvalidPermutation(perm.to_vec()));
    }
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    Ok(inv)
}
