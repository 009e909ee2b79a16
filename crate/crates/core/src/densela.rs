//! Dense complex matrices and LU factorization with partial pivoting.
//!
//! Storage is column-major.

use num_complex::Complex64;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

pub type CVector = Vec<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for c in 0..cols {
            for r in 0..rows {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Number of stored complex entries.
    pub fn entries(&self) -> usize {
        self.data.len()
    }

    pub fn column(&self, c: usize) -> &[Complex64] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub fn column_mut(&mut self, c: usize) -> &mut [Complex64] {
        let r = self.rows;
        &mut self.data[c * r..(c + 1) * r]
    }

    pub fn from_columns(rows: usize, columns: &[CVector]) -> Self {
        let mut m = Self::zeros(rows, columns.len());
        for (c, col) in columns.iter().enumerate() {
            m.column_mut(c).copy_from_slice(col);
        }
        m
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> CMatrix {
        CMatrix::from_fn(rows, cols, |r, c| self[(r0 + r, c0 + c)])
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &CMatrix) {
        for c in 0..b.cols {
            let dst = &mut self.data[(c0 + c) * self.rows + r0..(c0 + c) * self.rows + r0 + b.rows];
            dst.copy_from_slice(b.column(c));
        }
    }

    pub fn block2(tl: &CMatrix, tr: &CMatrix, bl: &CMatrix, br: &CMatrix) -> CMatrix {
        let mut m = CMatrix::zeros(tl.rows + bl.rows, tl.cols + tr.cols);
        m.set_block(0, 0, tl);
        m.set_block(0, tl.cols, tr);
        m.set_block(tl.rows, 0, bl);
        m.set_block(tl.rows, tl.cols, br);
        m
    }

    pub fn transpose(&self) -> CMatrix {
        CMatrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn adjoint(&self) -> CMatrix {
        CMatrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn matmul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = CMatrix::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            let dst = &mut out.data[j * self.rows..(j + 1) * self.rows];
            for k in 0..self.cols {
                let b = other.data[j * other.rows + k];
                if b == ZERO {
                    continue;
                }
                let col = &self.data[k * self.rows..(k + 1) * self.rows];
                for (d, a) in dst.iter_mut().zip(col) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> CVector {
        assert_eq!(self.cols, v.len(), "matrix-vector shape mismatch");
        let mut out = vec![ZERO; self.rows];
        for (k, &b) in v.iter().enumerate() {
            if b == ZERO {
                continue;
            }
            for (d, a) in out.iter_mut().zip(self.column(k)) {
                *d += a * b;
            }
        }
        out
    }

    pub fn add(&self, other: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, s: Complex64) -> CMatrix {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    /// `self + s I`
    pub fn add_diagonal(&self, s: Complex64) -> CMatrix {
        let mut m = self.clone();
        for i in 0..self.rows.min(self.cols) {
            m[(i, i)] += s;
        }
        m
    }

    pub fn norm1(&self) -> f64 {
        (0..self.cols)
            .map(|c| self.column(c).iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Spectral norm by power iteration on `A^H A`.
    pub fn norm2(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        let mut v: CVector = (0..self.cols)
            .map(|i| Complex64::new(1.0 + 0.1 * (i as f64).sin(), 0.3 * (i as f64 * 0.7).cos()))
            .collect();
        let adj = self.adjoint();
        let mut sigma = 0.0;
        for _ in 0..500 {
            let nv = vec_norm(&v);
            v.iter_mut().for_each(|z| *z /= nv);
            let w = adj.mul_vec(&self.mul_vec(&v));
            let next = vec_norm(&w).sqrt();
            v = w;
            if (next - sigma).abs() <= 1e-12 * next {
                sigma = next;
                break;
            }
            sigma = next;
        }
        sigma
    }

    fn check_finite(&self) -> Result<()> {
        for c in 0..self.cols {
            for r in 0..self.rows {
                let z = self[(r, c)];
                if !z.re.is_finite() || !z.im.is_finite() {
                    return Err(Error::NonFinite { row: r, col: c });
                }
            }
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[c * self.rows + r]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[c * self.rows + r]
    }
}

pub fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Discrete `L^2` norm `(sum_l w_l |v_l|^2)^{1/2}` with positive weights.
pub fn norm2_weighted(v: &[Complex64], weights: &[f64]) -> Result<f64> {
    if v.len() != weights.len() {
        return Err(Error::Shape(format!("{} values vs {} weights", v.len(), weights.len())));
    }
    if weights.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::Domain("quadrature weights must be positive".into()));
    }
    Ok(v.iter().zip(weights).map(|(z, w)| w * z.norm_sqr()).sum::<f64>().sqrt())
}

pub fn vec_add(a: &[Complex64], b: &[Complex64]) -> CVector {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn vec_sub(a: &[Complex64], b: &[Complex64]) -> CVector {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn vec_scale(a: &[Complex64], s: Complex64) -> CVector {
    a.iter().map(|x| x * s).collect()
}

/// Packed `P A = L U` factors.
#[derive(Debug, Clone)]
pub struct LUFactors {
    lu: CMatrix,
    perm: Vec<usize>,
    norm1: f64,
    cond1: f64,
}

impl LUFactors {
    pub fn dim(&self) -> usize {
        self.lu.rows
    }

    /// Estimated 1-norm condition number.
    pub fn condition(&self) -> f64 {
        self.cond1
    }

    pub fn entries(&self) -> usize {
        self.lu.entries()
    }

    /// Row permutation: row `i` of `P A` is row `perm[i]` of `A`.
    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn lower(&self) -> CMatrix {
        let n = self.dim();
        CMatrix::from_fn(n, n, |r, c| match r.cmp(&c) {
            std::cmp::Ordering::Greater => self.lu[(r, c)],
            std::cmp::Ordering::Equal => ONE,
            std::cmp::Ordering::Less => ZERO,
        })
    }

    pub fn upper(&self) -> CMatrix {
        let n = self.dim();
        CMatrix::from_fn(n, n, |r, c| if r <= c { self.lu[(r, c)] } else { ZERO })
    }

    pub fn solve_vec(&self, b: &[Complex64]) -> CVector {
        let n = self.dim();
        assert_eq!(b.len(), n, "solve shape mismatch");
        let mut x: CVector = self.perm.iter().map(|&p| b[p]).collect();
        // forward substitution with unit lower factor
        for c in 0..n {
            let xc = x[c];
            if xc == ZERO {
                continue;
            }
            let col = self.lu.column(c);
            for r in c + 1..n {
                x[r] -= col[r] * xc;
            }
        }
        for c in (0..n).rev() {
            let col = self.lu.column(c);
            x[c] /= col[c];
            let xc = x[c];
            for r in 0..c {
                x[r] -= col[r] * xc;
            }
        }
        x
    }

    pub fn solve(&self, b: &CMatrix) -> CMatrix {
        let cols: Vec<CVector> = (0..b.cols()).map(|c| self.solve_vec(b.column(c))).collect();
        CMatrix::from_columns(b.rows(), &cols)
    }

    /// Solves `A^H x = b`.
    pub fn solve_adjoint_vec(&self, b: &[Complex64]) -> CVector {
        let n = self.dim();
        // A^H = U^H L^H P, so solve U^H z = b, L^H y = z, x = P^T y.
        let mut z = b.to_vec();
        for c in 0..n {
            let col = self.lu.column(c);
            let mut s = z[c];
            for r in 0..c {
                s -= col[r].conj() * z[r];
            }
            z[c] = s / col[c].conj();
        }
        for c in (0..n).rev() {
            let col = self.lu.column(c);
            let mut s = z[c];
            for r in c + 1..n {
                s -= col[r].conj() * z[r];
            }
            z[c] = s;
        }
        let mut x = vec![ZERO; n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = z[i];
        }
        x
    }

    pub fn inverse(&self) -> CMatrix {
        self.solve(&CMatrix::identity(self.dim()))
    }

    /// Hager-Higham estimate of `||A^{-1}||_1`.
    fn inverse_norm1_estimate(&self) -> f64 {
        let n = self.dim();
        let mut x = vec![Complex64::new(1.0 / n as f64, 0.0); n];
        let mut est = 0.0;
        let mut last_j = usize::MAX;
        for _ in 0..5 {
            let y = self.solve_vec(&x);
            let ny: f64 = y.iter().map(|z| z.norm()).sum();
            if ny <= est && last_j != usize::MAX {
                break;
            }
            est = ny;
            let xi: CVector = y
                .iter()
                .map(|z| if z.norm() > 0.0 { z / z.norm() } else { ONE })
                .collect();
            let w = self.solve_adjoint_vec(&xi);
            let (j, wmax) = w
                .iter()
                .enumerate()
                .map(|(i, z)| (i, z.norm()))
                .fold((0, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc });
            let wx: f64 = w.iter().zip(&x).map(|(a, b)| (a.conj() * b).re).sum();
            if wmax <= wx || j == last_j {
                break;
            }
            last_j = j;
            x = vec![ZERO; n];
            x[j] = ONE;
        }
        // Higham's alternating-sign safeguard
        let alt: CVector = (0..n)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                Complex64::new(s * (1.0 + i as f64 / (n.max(2) - 1) as f64), 0.0)
            })
            .collect();
        let ya = self.solve_vec(&alt);
        let alt_est = 2.0 * ya.iter().map(|z| z.norm()).sum::<f64>() / (3.0 * n as f64);
        est.max(alt_est)
    }
}

/// LU factorization with partial pivoting. Fails when a pivot falls below
/// `1e-14 ||A||_1`.
pub fn lu_factor(a: &CMatrix) -> Result<LUFactors> {
    if !a.is_square() {
        return Err(Error::Shape(format!("LU of a {}x{} matrix", a.rows, a.cols)));
    }
    a.check_finite()?;
    let n = a.rows;
    let norm1 = a.norm1();
    let tiny = 1e-14 * norm1;
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (p, pmax) = (k..n)
            .map(|r| (r, lu[(r, k)].norm()))
            .fold((k, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc });
        if !(pmax > tiny) || pmax == 0.0 {
            return Err(Error::Singular { pivot: k, cond: f64::INFINITY });
        }
        if p != k {
            perm.swap(p, k);
            for c in 0..n {
                let base = c * n;
                lu.data.swap(base + p, base + k);
            }
        }
        let pivot = lu[(k, k)];
        let inv = ONE / pivot;
        {
            let col = lu.column_mut(k);
            for v in &mut col[k + 1..] {
                *v *= inv;
            }
        }
        for c in k + 1..n {
            let f = lu[(k, c)];
            if f == ZERO {
                continue;
            }
            let (left, right) = lu.data.split_at_mut(c * n);
            let lcol = &left[k * n..k * n + n];
            let rcol = &mut right[..n];
            for r in k + 1..n {
                rcol[r] -= lcol[r] * f;
            }
        }
    }
    let mut f = LUFactors {
        lu,
        perm,
        norm1,
        cond1: 0.0,
    };
    f.cond1 = f.norm1 * f.inverse_norm1_estimate();
    Ok(f)
}

/// Solves `A X = B` through one LU factorization.
pub fn solve(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    Ok(lu_factor(a)?.solve(b))
}
