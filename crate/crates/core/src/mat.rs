//! Dense column-major matrices over `f64`.
//!
//! All linear algebra in this crate runs through [`DenseMat`]: ambient points
//! and tangent vectors of matrix manifolds, normal-space bases, Hessian
//! blocks, and the small reduced systems of the Newton solvers. Entries are
//! stored column-major so a column is a contiguous slice.

use std::fmt;

/// Dense column-major matrix. Entries are finite by construction.
#[derive(Clone, PartialEq)]
pub struct DenseMat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows.min(8) {
            write!(f, "  ")?;
            for j in 0..self.cols.min(8) {
                write!(f, "{:>12.5e} ", self.get(i, j))?;
            }
            writeln!(f, "{}", if self.cols > 8 { "..." } else { "" })?;
        }
        if self.rows > 8 {
            writeln!(f, "  ...")?;
        }
        write!(f, "]")
    }
}

impl DenseMat {
    /// Zero matrix of the given shape.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Identity matrix of order `n`.
    pub fn identity(n: usize) -> Self {
        let mut m = DenseMat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Build from column-major entries. Panics on length mismatch or
    /// non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "entry count {} does not match {}x{}",
            data.len(),
            rows,
            cols
        );
        assert!(
            data.iter().all(|v| v.is_finite()),
            "matrix entries must be finite"
        );
        DenseMat { rows, cols, data }
    }

    /// Build from row-major entries (convenient for literals in tests).
    pub fn from_rows(rows: usize, cols: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), rows * cols);
        let mut m = DenseMat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, data[i * cols + j]);
            }
        }
        assert!(m.data.iter().all(|v| v.is_finite()));
        m
    }

    /// Build entrywise from a function of (row, col).
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = DenseMat::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Column vector from a slice.
    pub fn col_vec(data: &[f64]) -> Self {
        DenseMat::from_vec(data.len(), 1, data.to_vec())
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

    /// Total entry count (ambient dimension when the matrix is vec'd).
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline(always)]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[j * self.rows + i]
    }

    #[inline(always)]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[j * self.rows + i] = v;
    }

    /// Entries in column-major order. Index `k` maps to
    /// (row, col) = (k % rows, k / rows).
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    /// Copy of the `j`-th column as a new single-column matrix.
    pub fn col_owned(&self, j: usize) -> DenseMat {
        DenseMat::from_vec(self.rows, 1, self.col(j).to_vec())
    }

    pub fn transpose(&self) -> DenseMat {
        let mut t = DenseMat::zeros(self.cols, self.rows);
        for j in 0..self.cols {
            for i in 0..self.rows {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// Matrix product `self * other`.
    pub fn matmul(&self, other: &DenseMat) -> DenseMat {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut c = DenseMat::zeros(self.rows, other.cols);
        gemm(1.0, self, false, other, false, 0.0, &mut c);
        c
    }

    /// `selfᵀ * other` without materializing the transpose.
    pub fn t_matmul(&self, other: &DenseMat) -> DenseMat {
        assert_eq!(self.rows, other.rows, "t_matmul shape mismatch");
        let mut c = DenseMat::zeros(self.cols, other.cols);
        gemm(1.0, self, true, other, false, 0.0, &mut c);
        c
    }

    /// `self * otherᵀ` without materializing the transpose.
    pub fn matmul_t(&self, other: &DenseMat) -> DenseMat {
        assert_eq!(self.cols, other.cols, "matmul_t shape mismatch");
        let mut c = DenseMat::zeros(self.rows, other.rows);
        gemm(1.0, self, false, other, true, 0.0, &mut c);
        c
    }

    pub fn add(&self, other: &DenseMat) -> DenseMat {
        assert_eq!(self.shape(), other.shape());
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        DenseMat {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn sub(&self, other: &DenseMat) -> DenseMat {
        assert_eq!(self.shape(), other.shape());
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        DenseMat {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn scale(&self, s: f64) -> DenseMat {
        DenseMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &DenseMat) {
        assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    /// Frobenius inner product ⟨self, other⟩ = Σᵢⱼ selfᵢⱼ otherᵢⱼ.
    pub fn dot(&self, other: &DenseMat) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    /// Entrywise one norm Σ|xᵢ|.
    pub fn norm_l1(&self) -> f64 {
        self.data.iter().map(|a| a.abs()).sum()
    }

    pub fn norm_inf(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, a| m.max(a.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Symmetry defect ‖A − Aᵀ‖_F (0 for non-square input is not defined;
    /// panics unless square).
    pub fn sym_defect(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let mut s = 0.0;
        for j in 0..self.cols {
            for i in 0..j {
                let d = self.get(i, j) - self.get(j, i);
                s += 2.0 * d * d;
            }
        }
        s.sqrt()
    }

    /// Rows gathered into a new matrix, in the order given.
    pub fn select_rows(&self, idx: &[usize]) -> DenseMat {
        let mut m = DenseMat::zeros(idx.len(), self.cols);
        for j in 0..self.cols {
            let src = self.col(j);
            let dst = m.col_mut(j);
            for (k, &i) in idx.iter().enumerate() {
                dst[k] = src[i];
            }
        }
        m
    }
}

/// `c = alpha * op(a) * op(b) + beta * c` with optional transposes.
pub fn gemm(alpha: f64, a: &DenseMat, ta: bool, b: &DenseMat, tb: bool, beta: f64, c: &mut DenseMat) {
    let (am, ak) = if ta { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let (bk, bn) = if tb { (b.cols, b.rows) } else { (b.rows, b.cols) };
    assert_eq!(ak, bk, "gemm inner dimension mismatch");
    assert_eq!(c.shape(), (am, bn), "gemm output shape mismatch");
    if am == 0 || bn == 0 {
        return;
    }
    if ak == 0 {
        for v in c.data.iter_mut() {
            *v *= beta;
        }
        return;
    }
    // Column-major strides: (row stride, col stride) = (1, rows); a transpose
    // swaps them.
    let (rsa, csa) = if ta {
        (a.rows as isize, 1)
    } else {
        (1, a.rows as isize)
    };
    let (rsb, csb) = if tb {
        (b.rows as isize, 1)
    } else {
        (1, b.rows as isize)
    };
    let rsc = 1;
    let csc = c.rows as isize;
    unsafe {
        matrixmultiply::dgemm(
            am,
            ak,
            bn,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            rsc,
            csc,
        );
    }
}

/// LU factorization with partial pivoting, kept packed in `lu` with the row
/// permutation in `piv`.
pub struct LuFactors {
    lu: DenseMat,
    piv: Vec<usize>,
}

/// Factor a square matrix; `None` when a pivot is exactly zero (singular to
/// working precision).
pub fn lu_factor(a: &DenseMat) -> Option<LuFactors> {
    assert_eq!(a.rows, a.cols, "lu_factor needs a square matrix");
    let n = a.rows;
    let mut lu = a.clone();
    let mut piv: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let mut p = k;
        let mut pmax = lu.get(k, k).abs();
        for i in (k + 1)..n {
            let v = lu.get(i, k).abs();
            if v > pmax {
                pmax = v;
                p = i;
            }
        }
        if pmax == 0.0 {
            return None;
        }
        if p != k {
            piv.swap(k, p);
            for j in 0..n {
                let t = lu.get(k, j);
                lu.set(k, j, lu.get(p, j));
                lu.set(p, j, t);
            }
        }
        let pivot = lu.get(k, k);
        for i in (k + 1)..n {
            let m = lu.get(i, k) / pivot;
            lu.set(i, k, m);
            if m != 0.0 {
                for j in (k + 1)..n {
                    let v = lu.get(i, j) - m * lu.get(k, j);
                    lu.set(i, j, v);
                }
            }
        }
    }
    Some(LuFactors { lu, piv })
}

impl LuFactors {
    /// Solve `A x = b` for one right-hand side.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows;
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.piv.iter().map(|&p| b[p]).collect();
        // Forward substitution with unit lower factor.
        for i in 1..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu.get(i, j) * x[j];
            }
            x[i] = s;
        }
        // Back substitution.
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s -= self.lu.get(i, j) * x[j];
            }
            x[i] = s / self.lu.get(i, i);
        }
        x
    }
}

/// Solve `A x = b` by LU with partial pivoting.
pub fn lu_solve(a: &DenseMat, b: &[f64]) -> Option<Vec<f64>> {
    lu_factor(a).map(|f| f.solve(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_against_hand_computation() {
        let a = DenseMat::from_rows(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = DenseMat::from_rows(3, 2, &[7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = a.matmul(&b);
        assert_eq!(c.get(0, 0), 58.0);
        assert_eq!(c.get(0, 1), 64.0);
        assert_eq!(c.get(1, 0), 139.0);
        assert_eq!(c.get(1, 1), 154.0);
    }

    #[test]
    fn transposed_products_agree_with_explicit_transpose() {
        let a = DenseMat::from_fn(4, 3, |i, j| (i * 3 + j) as f64 * 0.25 - 1.0);
        let b = DenseMat::from_fn(4, 2, |i, j| (i + 2 * j) as f64 * 0.5);
        let d1 = a.t_matmul(&b);
        let d2 = a.transpose().matmul(&b);
        assert!(d1.sub(&d2).norm() < 1e-14);
        let e = DenseMat::from_fn(2, 3, |i, j| (i as f64) - (j as f64));
        let f1 = e.matmul_t(&a);
        let f2 = e.matmul(&a.transpose());
        assert!(f1.sub(&f2).norm() < 1e-14);
    }

    #[test]
    fn lu_solves_a_known_system() {
        let a = DenseMat::from_rows(3, 3, &[2.0, 1.0, 1.0, 1.0, 3.0, 2.0, 1.0, 0.0, 0.0]);
        let b = [4.0, 5.0, 6.0];
        let x = lu_solve(&a, &b).unwrap();
        // Residual check.
        for i in 0..3 {
            let mut r = -b[i];
            for j in 0..3 {
                r += a.get(i, j) * x[j];
            }
            assert!(r.abs() < 1e-12);
        }
    }

    #[test]
    fn lu_reports_singular() {
        let a = DenseMat::from_rows(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(lu_factor(&a).is_none());
    }

    #[test]
    #[should_panic]
    fn non_finite_entries_rejected() {
        DenseMat::from_vec(1, 2, vec![1.0, f64::NAN]);
    }
}
