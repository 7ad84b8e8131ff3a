//! Dense complex linear algebra.
//!
//! Everything here is small and dense: pilot matrices, angular dictionaries,
//! sensing matrices with a few thousand columns at most. Matrices are stored
//! row-major and every operation returns a fresh value.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Dense row-major complex matrix. Column vectors are `n × 1` matrices.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            write!(f, "  ")?;
            for c in 0..self.cols.min(8) {
                let z = self[(r, c)];
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
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

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "from_row_major",
                format!("{} entries for {rows}x{cols}", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn column_vector(entries: Vec<C64>) -> Self {
        let rows = entries.len();
        Self {
            rows,
            cols: 1,
            data: entries,
        }
    }

    pub fn diag(entries: &[C64]) -> Self {
        let mut m = Self::zeros(entries.len(), entries.len());
        for (i, &z) in entries.iter().enumerate() {
            m[(i, i)] = z;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn column(&self, c: usize) -> ComplexMatrix {
        ComplexMatrix::column_vector((0..self.rows).map(|r| self[(r, c)]).collect())
    }

    /// Sub-matrix made of the listed columns, in the listed order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<ComplexMatrix> {
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.cols) {
            return Err(Error::shape(
                "select_columns",
                format!("column {bad} out of range for {} columns", self.cols),
            ));
        }
        Ok(ComplexMatrix::from_fn(self.rows, cols.len(), |r, j| {
            self[(r, cols[j])]
        }))
    }

    pub fn select_rows(&self, rows: &[usize]) -> Result<ComplexMatrix> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.rows) {
            return Err(Error::shape(
                "select_rows",
                format!("row {bad} out of range for {} rows", self.rows),
            ));
        }
        Ok(ComplexMatrix::from_fn(rows.len(), self.cols, |i, c| {
            self[(rows[i], c)]
        }))
    }

    pub fn transpose(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn conj(&self) -> ComplexMatrix {
        self.map(|z| z.conj())
    }

    /// Conjugate transpose.
    pub fn hermitian(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> ComplexMatrix {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    /// Like [`map`](Self::map) but the closure may carry state, e.g. an RNG.
    pub fn map_with(&self, mut f: impl FnMut(C64) -> C64) -> ComplexMatrix {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn scale(&self, s: C64) -> ComplexMatrix {
        self.map(|z| z * s)
    }

    pub fn scale_real(&self, s: f64) -> ComplexMatrix {
        self.map(|z| z * s)
    }

    pub fn add(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    /// Elementwise (Hadamard) product.
    pub fn hadamard(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    fn zip_with(
        &self,
        other: &ComplexMatrix,
        op: &'static str,
        f: impl Fn(C64, C64) -> C64,
    ) -> Result<ComplexMatrix> {
        if self.dims() != other.dims() {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.dims(), other.dims()),
            ));
        }
        Ok(ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// `self + s·I`; `self` must be square.
    pub fn add_diagonal(&self, s: f64) -> Result<ComplexMatrix> {
        if !self.is_square() {
            return Err(Error::shape("add_diagonal", format!("{:?}", self.dims())));
        }
        let mut out = self.clone();
        for i in 0..self.rows {
            out[(i, i)] += s;
        }
        Ok(out)
    }

    pub fn frobenius_norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sqr().sqrt()
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Largest entrywise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        assert_eq!(self.dims(), other.dims(), "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Stacks the columns into one column vector.
    pub fn vec(&self) -> ComplexMatrix {
        let mut out = Vec::with_capacity(self.data.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                out.push(self[(r, c)]);
            }
        }
        ComplexMatrix::column_vector(out)
    }

    /// Inverse of [`ComplexMatrix::vec`]: refills a `rows × cols` matrix column by column.
    pub fn unvec(v: &ComplexMatrix, rows: usize, cols: usize) -> Result<ComplexMatrix> {
        if v.cols != 1 || v.rows != rows * cols {
            return Err(Error::shape(
                "unvec",
                format!("{:?} into {rows}x{cols}", v.dims()),
            ));
        }
        Ok(ComplexMatrix::from_fn(rows, cols, |r, c| v.data[c * rows + r]))
    }
}

/// Standard matrix product `A·B`.
pub fn matmul(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a.cols != b.rows {
        return Err(Error::shape(
            "matmul",
            format!("{:?} x {:?}", a.dims(), b.dims()),
        ));
    }
    let mut out = ComplexMatrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for k in 0..a.cols {
            let aik = a.data[i * a.cols + k];
            if aik == C64::new(0.0, 0.0) {
                continue;
            }
            let b_row = &b.data[k * b.cols..(k + 1) * b.cols];
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// `A^H · B` without materializing `A^H`.
pub fn matmul_hermitian_left(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a.rows != b.rows {
        return Err(Error::shape(
            "matmul_hermitian_left",
            format!("{:?}^H x {:?}", a.dims(), b.dims()),
        ));
    }
    let mut out = ComplexMatrix::zeros(a.cols, b.cols);
    for k in 0..a.rows {
        let b_row = &b.data[k * b.cols..(k + 1) * b.cols];
        for i in 0..a.cols {
            let aki = a.data[k * a.cols + i].conj();
            let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aki * bkj;
            }
        }
    }
    Ok(out)
}

/// Kronecker product `A ⊗ B`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let rows = a.rows * b.rows;
    let cols = a.cols * b.cols;
    ComplexMatrix::from_fn(rows, cols, |r, c| {
        a[(r / b.rows, c / b.cols)] * b[(r % b.rows, c % b.cols)]
    })
}

/// Unnormalized DFT matrix, `D[k][l] = exp(−j2πkl/n)`.
pub fn dft_matrix(n: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(n, n, |k, l| {
        // reduce kl mod n first so large indices keep full phase precision
        let phase = -2.0 * PI * ((k * l) % n) as f64 / n as f64;
        C64::from_polar(1.0, phase)
    })
}

/// Solves `A·X = B` for Hermitian positive definite `A` by Cholesky factorization.
///
/// A pivot below `1e-12 · trace(A)/n` is reported as a singular system.
pub fn solve_hermitian(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !a.is_square() {
        return Err(Error::shape("solve_hermitian", format!("A is {:?}", a.dims())));
    }
    if b.rows != a.rows {
        return Err(Error::shape(
            "solve_hermitian",
            format!("A is {:?}, B is {:?}", a.dims(), b.dims()),
        ));
    }
    let n = a.rows;
    let scale = a.trace().re.abs() / n.max(1) as f64;
    let floor = 1e-12 * scale;

    // lower-triangular L with A = L L^H
    let mut l = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > floor) || scale == 0.0 {
            return Err(Error::singular(
                "solve_hermitian",
                format!("pivot {d:e} at column {j} below {floor:e}"),
            ));
        }
        let djj = d.sqrt();
        l[(j, j)] = C64::new(djj, 0.0);
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / djj;
        }
    }

    let mut x = b.clone();
    for c in 0..b.cols {
        // forward: L z = b
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
        // backward: L^H x = z
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in (i + 1)..n {
                s -= l[(k, i)].conj() * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    Ok(x)
}

/// Least-squares solution of `A·x ≈ b` for tall, full-column-rank `A`,
/// computed with Householder QR.
pub fn least_squares(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    let (m, n) = a.dims();
    if b.rows != m {
        return Err(Error::shape(
            "least_squares",
            format!("A is {:?}, b is {:?}", a.dims(), b.dims()),
        ));
    }
    if m < n {
        return Err(Error::shape(
            "least_squares",
            format!("underdetermined system {m}x{n}"),
        ));
    }
    let mut r = a.clone();
    let mut qtb = b.clone();
    let mut diag_max = 0.0f64;
    for j in 0..n {
        let norm_x = (j..m).map(|i| r[(i, j)].norm_sqr()).sum::<f64>().sqrt();
        diag_max = diag_max.max(norm_x);
        if norm_x == 0.0 {
            return Err(Error::singular(
                "least_squares",
                format!("zero column {j} after elimination"),
            ));
        }
        let x0 = r[(j, j)];
        let phase = if x0.norm() == 0.0 {
            C64::new(1.0, 0.0)
        } else {
            x0 / x0.norm()
        };
        let alpha = -phase * norm_x;
        // Householder vector v = x − alpha·e1, reflector I − 2vv^H/(v^H v)
        let mut v: Vec<C64> = (j..m).map(|i| r[(i, j)]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if vnorm2 > 0.0 {
            let apply = |mat: &mut ComplexMatrix, cols: std::ops::Range<usize>| {
                for c in cols {
                    let mut dot = C64::new(0.0, 0.0);
                    for (k, vk) in v.iter().enumerate() {
                        dot += vk.conj() * mat[(j + k, c)];
                    }
                    let f = dot * (2.0 / vnorm2);
                    for (k, vk) in v.iter().enumerate() {
                        mat[(j + k, c)] -= vk * f;
                    }
                }
            };
            apply(&mut r, j..n);
            let bc = qtb.cols;
            apply(&mut qtb, 0..bc);
        }
    }
    let tol = 1e-12 * diag_max;
    for j in 0..n {
        if r[(j, j)].norm() <= tol {
            return Err(Error::singular(
                "least_squares",
                format!("rank deficient: |R[{j},{j}]| = {:e}", r[(j, j)].norm()),
            ));
        }
    }
    let mut x = ComplexMatrix::zeros(n, b.cols);
    for c in 0..b.cols {
        for i in (0..n).rev() {
            let mut s = qtb[(i, c)];
            for k in (i + 1)..n {
                s -= r[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / r[(i, i)];
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
        ComplexMatrix::from_fn(rows, cols, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn random_hpd(n: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
        let g = random(n, n, rng);
        matmul(&g, &g.hermitian()).unwrap().add_diagonal(0.5).unwrap()
    }

    fn naive_product(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix::from_fn(a.rows(), b.cols(), |i, j| {
            let mut s = C64::new(0.0, 0.0);
            for k in 0..a.cols() {
                s += a[(i, k)] * b[(k, j)];
            }
            s
        })
    }

    #[test]
    fn matmul_identity_and_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random(3, 5, &mut rng);
        assert_eq!(matmul(&ComplexMatrix::identity(3), &m).unwrap(), m);
        let z = matmul(&m, &ComplexMatrix::zeros(5, 2)).unwrap();
        assert!(z.as_slice().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random(3, 4, &mut rng);
        let b = random(4, 2, &mut rng);
        let got = matmul(&a, &b).unwrap();
        let want = naive_product(&a, &b);
        assert!(got.max_abs_diff(&want) <= 1e-12 * want.frobenius_norm());
    }

    #[test]
    fn matmul_rejects_mismatch() {
        let err = matmul(&ComplexMatrix::zeros(2, 3), &ComplexMatrix::zeros(2, 3)).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
    }

    #[test]
    fn hermitian_product_matches_explicit() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(6, 3, &mut rng);
        let b = random(6, 2, &mut rng);
        let fast = matmul_hermitian_left(&a, &b).unwrap();
        let slow = matmul(&a.hermitian(), &b).unwrap();
        assert!(fast.max_abs_diff(&slow) < 1e-13);
    }

    #[test]
    fn hermitian_is_an_involution() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random(3, 7, &mut rng);
        assert_eq!(a.hermitian().hermitian(), a);
    }

    #[test]
    fn solve_identity_and_scalar() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = random(4, 3, &mut rng);
        let x = solve_hermitian(&ComplexMatrix::identity(4), &b).unwrap();
        assert!(x.max_abs_diff(&b) < 1e-15);
        let two = ComplexMatrix::identity(4).scale_real(2.0);
        let x = solve_hermitian(&two, &b).unwrap();
        assert!(x.max_abs_diff(&b.scale_real(0.5)) < 1e-15);
    }

    #[test]
    fn solve_residual_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for n in [1, 2, 5, 12] {
            let a = random_hpd(n, &mut rng);
            let b = random(n, 3, &mut rng);
            let x = solve_hermitian(&a, &b).unwrap();
            let res = matmul(&a, &x).unwrap().sub(&b).unwrap();
            assert!(res.frobenius_norm() <= 1e-9 * b.frobenius_norm());
        }
    }

    #[test]
    fn solve_rejects_singular_and_nonsquare() {
        let mut a = ComplexMatrix::identity(3);
        a[(2, 2)] = C64::new(0.0, 0.0);
        let b = ComplexMatrix::zeros(3, 1);
        assert!(matches!(
            solve_hermitian(&a, &b).unwrap_err(),
            Error::Singular { .. }
        ));
        assert!(matches!(
            solve_hermitian(&ComplexMatrix::zeros(3, 2), &b).unwrap_err(),
            Error::Shape { .. }
        ));
    }

    #[test]
    fn least_squares_exact_and_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random(4, 4, &mut rng);
        let x0 = random(4, 1, &mut rng);
        let b = matmul(&a, &x0).unwrap();
        let x = least_squares(&a, &b).unwrap();
        assert!(x.max_abs_diff(&x0) < 1e-10);

        let tall = random(9, 3, &mut rng);
        let b = matmul(&tall, &x0.select_rows(&[0, 1, 2]).unwrap()).unwrap();
        let x = least_squares(&tall, &b).unwrap();
        assert!(x.max_abs_diff(&x0.select_rows(&[0, 1, 2]).unwrap()) < 1e-10);
    }

    #[test]
    fn least_squares_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random(8, 3, &mut rng);
        let b = random(8, 1, &mut rng);
        let x = least_squares(&a, &b).unwrap();
        // oracle: (A^H A)^{-1} A^H b via the Cholesky path
        let gram = matmul(&a.hermitian(), &a).unwrap();
        let rhs = matmul(&a.hermitian(), &b).unwrap();
        let oracle = solve_hermitian(&gram, &rhs).unwrap();
        assert!(x.max_abs_diff(&oracle) < 1e-10 * oracle.frobenius_norm());
        // residual orthogonal to the column space
        let r = b.sub(&matmul(&a, &x).unwrap()).unwrap();
        let proj = matmul(&a.hermitian(), &r).unwrap();
        assert!(proj.frobenius_norm() <= 1e-9 * a.frobenius_norm() * b.frobenius_norm());
    }

    #[test]
    fn least_squares_rejects_rank_deficiency() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c = random(6, 1, &mut rng);
        let mut a = ComplexMatrix::zeros(6, 2);
        for r in 0..6 {
            a[(r, 0)] = c[(r, 0)];
            a[(r, 1)] = c[(r, 0)] * 2.0;
        }
        let b = random(6, 1, &mut rng);
        assert!(matches!(
            least_squares(&a, &b).unwrap_err(),
            Error::Singular { .. }
        ));
    }

    #[test]
    fn kron_and_vec_basics() {
        assert_eq!(
            kron(&ComplexMatrix::identity(2), &ComplexMatrix::identity(3)),
            ComplexMatrix::identity(6)
        );
        let (a, b, c, d) = (
            C64::new(1.0, 0.0),
            C64::new(2.0, 0.0),
            C64::new(3.0, 0.0),
            C64::new(4.0, 0.0),
        );
        // [[a, c], [b, d]] stacks to [a, b, c, d]
        let m = ComplexMatrix::from_row_major(2, 2, vec![a, c, b, d]).unwrap();
        assert_eq!(m.vec().into_vec(), vec![a, b, c, d]);
        assert_eq!(ComplexMatrix::unvec(&m.vec(), 2, 2).unwrap(), m);
    }

    #[test]
    fn dft_closed_forms() {
        let d2 = dft_matrix(2);
        let want = ComplexMatrix::from_row_major(
            2,
            2,
            vec![
                C64::new(1.0, 0.0),
                C64::new(1.0, 0.0),
                C64::new(1.0, 0.0),
                C64::new(-1.0, 0.0),
            ],
        )
        .unwrap();
        assert!(d2.max_abs_diff(&want) < 1e-15);

        let d8 = dft_matrix(8);
        let g = matmul(&d8.hermitian(), &d8).unwrap();
        assert!(g.max_abs_diff(&ComplexMatrix::identity(8).scale_real(8.0)) < 1e-12);

        let d16 = dft_matrix(16);
        for k in 0..16 {
            let oracle = (C64::new(0.0, -2.0 * PI * k as f64 / 16.0)).exp();
            assert!((d16[(k, 1)] - oracle).norm() < 1e-12);
        }
    }

    #[test]
    fn dft_of_impulse_is_all_ones() {
        let mut e0 = ComplexMatrix::zeros(11, 1);
        e0[(0, 0)] = C64::new(1.0, 0.0);
        let y = matmul(&dft_matrix(11), &e0).unwrap();
        assert!(y.as_slice().iter().all(|z| (z - 1.0).norm() < 1e-15));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn seeded(seed: u64, r: usize, c: usize) -> ComplexMatrix {
            random(r, c, &mut ChaCha8Rng::seed_from_u64(seed))
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn matmul_is_associative(seed in any::<u64>(), m in 1usize..6, n in 1usize..6, p in 1usize..6, q in 1usize..6) {
                let a = seeded(seed, m, n);
                let b = seeded(seed ^ 1, n, p);
                let c = seeded(seed ^ 2, p, q);
                let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
                let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
                prop_assert!(left.max_abs_diff(&right) <= 1e-10 * (1.0 + left.frobenius_norm()));
            }

            #[test]
            fn vec_kron_identity(seed in any::<u64>(), r in 1usize..5, k in 1usize..5, l in 1usize..5, c in 1usize..5) {
                let a = seeded(seed, r, k);
                let x = seeded(seed ^ 7, k, l);
                let cm = seeded(seed ^ 9, l, c);
                let lhs = matmul(&matmul(&a, &x).unwrap(), &cm).unwrap().vec();
                let rhs = matmul(&kron(&cm.transpose(), &a), &x.vec()).unwrap();
                prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-12 * (1.0 + lhs.frobenius_norm()));
            }

            #[test]
            fn solve_then_multiply_reproduces_rhs(seed in any::<u64>(), n in 1usize..10) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let a = random_hpd(n, &mut rng);
                let b = random(n, 2, &mut rng);
                let x = solve_hermitian(&a, &b).unwrap();
                let res = matmul(&a, &x).unwrap().sub(&b).unwrap();
                prop_assert!(res.frobenius_norm() <= 1e-9 * b.frobenius_norm());
            }
        }
    }
}
