//! Small dense complex linear algebra.
//!
//! Sized for the per-bin problems of microphone array processing (a few to a
//! few dozen channels): Hermitian Cholesky, Hermitian eigendecomposition via
//! Householder tridiagonalization and implicit QL, and the principal
//! generalized eigenvector of a Hermitian-definite pencil.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Deref, DerefMut, Index, IndexMut, Mul, Sub};

use num_complex::Complex;

use crate::math;
use crate::{Error, Result};

pub type C64 = Complex<f64>;

/// Sweep budget per eigenvalue in the QL iteration.
const MAX_QL_SWEEPS: usize = 30;

/// Relative gap below which the two largest generalized eigenvalues count as tied.
const DEGENERATE_RTOL: f64 = 1e-10;

/// Dense complex vector.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct CVector(pub Vec<C64>);

impl CVector {
    pub fn zeros(n: usize) -> Self {
        CVector(vec![C64::new(0.0, 0.0); n])
    }

    pub fn ones(n: usize) -> Self {
        CVector(vec![C64::new(1.0, 0.0); n])
    }

    /// Canonical basis vector `e_i` of length `n`.
    pub fn basis(n: usize, i: usize) -> Self {
        let mut v = Self::zeros(n);
        v.0[i] = C64::new(1.0, 0.0);
        v
    }

    pub fn from_real(values: &[f64]) -> Self {
        CVector(values.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    /// Inner product `self^H other`.
    pub fn dot(&self, other: &CVector) -> C64 {
        debug_assert_eq!(self.len(), other.len());
        self.iter().zip(other.iter()).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        math::sqrt(self.norm_sqr())
    }

    /// `1^T v`, the plain (unconjugated) sum of the entries.
    pub fn sum(&self) -> C64 {
        self.iter().sum()
    }

    pub fn scale(&self, s: C64) -> CVector {
        CVector(self.iter().map(|z| z * s).collect())
    }

    /// Rotates the vector so its largest-magnitude entry is real and positive.
    /// Ties go to the lowest index.
    pub fn canonical_phase(&self) -> CVector {
        let mut best = 0;
        let mut best_mag = -1.0;
        for (i, z) in self.iter().enumerate() {
            let m = z.norm_sqr();
            if m > best_mag {
                best_mag = m;
                best = i;
            }
        }
        if best_mag <= 0.0 {
            return self.clone();
        }
        let pivot = self.0[best];
        let rot = pivot.conj() / pivot.norm();
        let mut out = self.scale(rot);
        out.0[best] = C64::new(out.0[best].norm(), 0.0);
        out
    }
}

impl Deref for CVector {
    type Target = [C64];
    fn deref(&self) -> &[C64] {
        &self.0
    }
}

impl DerefMut for CVector {
    fn deref_mut(&mut self) -> &mut [C64] {
        &mut self.0
    }
}

impl From<Vec<C64>> for CVector {
    fn from(v: Vec<C64>) -> Self {
        CVector(v)
    }
}

impl Add for &CVector {
    type Output = CVector;
    fn add(self, rhs: &CVector) -> CVector {
        CVector(self.iter().zip(rhs.iter()).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &CVector {
    type Output = CVector;
    fn sub(self, rhs: &CVector) -> CVector {
        CVector(self.iter().zip(rhs.iter()).map(|(a, b)| a - b).collect())
    }
}

/// Dense complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix {
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

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(d, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        CMatrix { rows, cols, data }
    }

    /// Builds a matrix from row-major entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(CMatrix { rows, cols, data })
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[CVector]) -> Self {
        let cols = columns.len();
        let rows = columns.first().map_or(0, |c| c.len());
        Self::from_fn(rows, cols, |i, j| columns[j][i])
    }

    /// Outer product `u v^H`.
    pub fn outer(u: &[C64], v: &[C64]) -> Self {
        Self::from_fn(u.len(), v.len(), |i, j| u[i] * v[j].conj())
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

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> CVector {
        CVector((0..self.rows).map(|i| self[(i, j)]).collect())
    }

    pub fn diag_real(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)].re).collect()
    }

    pub fn adjoint(&self) -> CMatrix {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        math::sqrt(self.data.iter().map(|z| z.norm_sqr()).sum())
    }

    pub fn scale(&self, s: C64) -> CMatrix {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> CMatrix {
        self.scale(C64::new(s, 0.0))
    }

    pub fn mul_vec(&self, v: &[C64]) -> CVector {
        debug_assert_eq!(self.cols, v.len());
        CVector(
            (0..self.rows)
                .map(|i| {
                    let row = &self.data[i * self.cols..(i + 1) * self.cols];
                    row.iter().zip(v).map(|(a, b)| a * b).sum()
                })
                .collect(),
        )
    }

    pub fn matmul(&self, rhs: &CMatrix) -> CMatrix {
        debug_assert_eq!(self.cols, rhs.rows);
        let mut out = CMatrix::zeros(self.rows, rhs.cols);
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
        out
    }

    /// Quadratic form `v^H M v`.
    pub fn quad_form(&self, v: &[C64]) -> C64 {
        let mv = self.mul_vec(v);
        v.iter().zip(mv.iter()).map(|(a, b)| a.conj() * b).sum()
    }

    /// `(M + M^H) / 2`, with an exactly real diagonal.
    pub fn hermitian_part(&self) -> CMatrix {
        debug_assert!(self.is_square());
        let n = self.rows;
        let mut out = self.clone();
        for i in 0..n {
            out[(i, i)] = C64::new(self[(i, i)].re, 0.0);
            for j in 0..i {
                let v = (self[(i, j)] + self[(j, i)].conj()) * 0.5;
                out[(i, j)] = v;
                out[(j, i)] = v.conj();
            }
        }
        out
    }

    /// Checks `M[i][j] == conj(M[j][i])` up to `rtol` times the largest entry magnitude.
    pub fn is_hermitian(&self, rtol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let scale = self.data.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let tol = rtol * scale.max(f64::MIN_POSITIVE);
        for i in 0..self.rows {
            for j in 0..=i {
                if (self[(i, j)] - self[(j, i)].conj()).norm() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// Submatrix of the given row and column index sets.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> CMatrix {
        Self::from_fn(rows.len(), cols.len(), |i, j| self[(rows[i], cols[j])])
    }

    fn require_square(&self) -> Result<()> {
        if self.is_square() {
            Ok(())
        } else {
            Err(Error::NotSquare {
                rows: self.rows,
                cols: self.cols,
            })
        }
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        debug_assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        debug_assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs)
    }
}

/// Lower-triangular Cholesky factor `L` with `M = L L^H`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: CMatrix,
}

impl Cholesky {
    /// Factorizes a Hermitian positive definite matrix. Only the lower
    /// triangle of `m` is read.
    pub fn new(m: &CMatrix) -> Result<Self> {
        m.require_square()?;
        let n = m.rows();
        let mut l = CMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = m[(j, j)].re;
            for k in 0..j {
                d -= l[(j, k)].norm_sqr();
            }
            // also rejects NaN
            if !(d > 0.0) {
                return Err(Error::NotPositiveDefinite { pivot: j });
            }
            let ljj = math::sqrt(d);
            l[(j, j)] = C64::new(ljj, 0.0);
            for i in j + 1..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn factor(&self) -> &CMatrix {
        &self.l
    }

    pub fn into_factor(self) -> CMatrix {
        self.l
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// Solves `L y = b`.
    pub fn solve_lower(&self, b: &[C64]) -> CVector {
        let n = self.dim();
        let mut y = CVector::zeros(n);
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)].re;
        }
        y
    }

    /// Solves `L^H x = y`.
    pub fn solve_upper(&self, y: &[C64]) -> CVector {
        let n = self.dim();
        let mut x = CVector::zeros(n);
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.l[(k, i)].conj() * x[k];
            }
            x[i] = s / self.l[(i, i)].re;
        }
        x
    }

    /// Solves `M x = b`.
    pub fn solve(&self, b: &[C64]) -> Result<CVector> {
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: b.len(),
            });
        }
        Ok(self.solve_upper(&self.solve_lower(b)))
    }

    /// Solves `M X = B` column by column.
    pub fn solve_matrix(&self, b: &CMatrix) -> Result<CMatrix> {
        if b.rows() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: b.rows(),
            });
        }
        let cols: Vec<CVector> = (0..b.cols())
            .map(|j| self.solve_upper(&self.solve_lower(&b.column(j))))
            .collect();
        Ok(CMatrix::from_columns(&cols))
    }
}

/// Lower Cholesky factor of a Hermitian positive definite matrix.
pub fn hermitian_cholesky(m: &CMatrix) -> Result<CMatrix> {
    Cholesky::new(m).map(Cholesky::into_factor)
}

/// Solves `M x = b` for Hermitian positive definite `M`.
pub fn solve_hermitian(m: &CMatrix, b: &[C64]) -> Result<CVector> {
    if b.len() != m.rows() {
        return Err(Error::DimensionMismatch {
            expected: m.rows(),
            found: b.len(),
        });
    }
    Cholesky::new(m)?.solve(b)
}

/// Eigenpairs of a Hermitian matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct HermitianEig {
    pub values: Vec<f64>,
    /// Unit-norm eigenvectors, `vectors[i]` pairs with `values[i]`.
    pub vectors: Vec<CVector>,
}

/// Eigendecomposition of a Hermitian matrix.
///
/// Householder reflections bring the matrix to Hermitian tridiagonal form, a
/// diagonal unitary scaling makes the off-diagonal real, and implicit QL with
/// Wilkinson-style shifts diagonalizes the resulting real symmetric
/// tridiagonal matrix. Eigenvectors use the canonical phase (largest entry
/// real positive).
pub fn hermitian_eig(m: &CMatrix) -> Result<HermitianEig> {
    m.require_square()?;
    let n = m.rows();
    if n == 0 {
        return Ok(HermitianEig {
            values: Vec::new(),
            vectors: Vec::new(),
        });
    }
    let mut a = m.hermitian_part();
    let mut q = CMatrix::identity(n);

    for k in 0..n.saturating_sub(2) {
        let alpha = math::sqrt((k + 1..n).map(|i| a[(i, k)].norm_sqr()).sum());
        if alpha == 0.0 {
            continue;
        }
        let x0 = a[(k + 1, k)];
        let x0n = x0.norm();
        let phase = if x0n > 0.0 { x0 / x0n } else { C64::new(1.0, 0.0) };
        let mut v = vec![C64::new(0.0, 0.0); n];
        for i in k + 1..n {
            v[i] = a[(i, k)];
        }
        v[k + 1] += phase * alpha;
        let vnorm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        let tau = 2.0 / vnorm2;
        // A <- H A H, H = I - tau v v^H
        for j in 0..n {
            let s: C64 = (k + 1..n).map(|i| v[i].conj() * a[(i, j)]).sum::<C64>() * tau;
            for i in k + 1..n {
                let d = v[i] * s;
                a[(i, j)] -= d;
            }
        }
        for i in 0..n {
            let s: C64 = (k + 1..n).map(|j| a[(i, j)] * v[j]).sum::<C64>() * tau;
            for j in k + 1..n {
                let d = s * v[j].conj();
                a[(i, j)] -= d;
            }
        }
        for i in 0..n {
            let s: C64 = (k + 1..n).map(|j| q[(i, j)] * v[j]).sum::<C64>() * tau;
            for j in k + 1..n {
                let d = s * v[j].conj();
                q[(i, j)] -= d;
            }
        }
    }

    // Unitary diagonal D so that D^H T D has a real nonnegative off-diagonal.
    let mut phases = vec![C64::new(1.0, 0.0); n];
    let mut diag: Vec<f64> = (0..n).map(|i| a[(i, i)].re).collect();
    let mut off = vec![0.0; n];
    for k in 0..n - 1 {
        let e = a[(k + 1, k)];
        let en = e.norm();
        off[k] = en;
        phases[k + 1] = if en > 0.0 { phases[k] * (e / en) } else { phases[k] };
    }

    let mut z = vec![0.0; n * n];
    for i in 0..n {
        z[i * n + i] = 1.0;
    }
    tridiagonal_ql(&mut diag, &mut off, &mut z, n)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diag[i].total_cmp(&diag[j]));

    let values = order.iter().map(|&i| diag[i]).collect();
    let vectors = order
        .iter()
        .map(|&col| {
            // eigenvector = Q D z
            let dz: Vec<C64> = (0..n).map(|r| phases[r] * z[r * n + col]).collect();
            let v = q.mul_vec(&dz);
            let nrm = v.norm();
            v.scale(C64::new(1.0 / nrm, 0.0)).canonical_phase()
        })
        .collect();
    Ok(HermitianEig { values, vectors })
}

/// Implicit QL on a real symmetric tridiagonal matrix (diagonal `d`,
/// off-diagonal `e[i]` between rows `i` and `i + 1`). Rotations are
/// accumulated into the row-major `n x n` matrix `z`.
fn tridiagonal_ql(d: &mut [f64], e: &mut [f64], z: &mut [f64], n: usize) -> Result<()> {
    if n > 0 {
        e[n - 1] = 0.0;
    }
    for l in 0..n {
        let mut sweeps = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            sweeps += 1;
            if sweeps > MAX_QL_SWEEPS {
                return Err(Error::ConvergenceFailure { index: l });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = math::hypot(g, 1.0);
            g = d[m] - d[l] + e[l] / (g + if g >= 0.0 { r } else { -r });
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = math::hypot(f, g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    let f = z[k * n + i + 1];
                    z[k * n + i + 1] = s * z[k * n + i] + c * f;
                    z[k * n + i] = c * z[k * n + i] - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Principal generalized eigenvector of the pencil `(A, B)`.
#[derive(Clone, Debug)]
pub struct PrincipalEigen {
    /// Unit-norm eigenvector of `B^-1 A` for the largest eigenvalue.
    pub vector: CVector,
    pub value: f64,
    /// The top two eigenvalues coincided; `vector` is the tied candidate with
    /// the largest `|1^T v|`.
    pub degenerate: bool,
}

/// Maximizer of the generalized Rayleigh quotient `v^H A v / v^H B v`.
///
/// Reduces to a standard problem with `B = L L^H`: the eigenvectors `u` of
/// `L^-1 A L^-H` map back through `v = L^-H u`.
pub fn gevd_principal(a: &CMatrix, b: &CMatrix) -> Result<PrincipalEigen> {
    a.require_square()?;
    b.require_square()?;
    if a.rows() != b.rows() {
        return Err(Error::DimensionMismatch {
            expected: b.rows(),
            found: a.rows(),
        });
    }
    let n = a.rows();
    if n == 0 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: 0,
        });
    }
    let chol = Cholesky::new(b)?;
    let x: Vec<CVector> = (0..n).map(|j| chol.solve_lower(&a.column(j))).collect();
    // C = L^-1 A L^-H = L^-1 (L^-1 A)^H since A is Hermitian.
    let xh = CMatrix::from_columns(&x).adjoint();
    let c_cols: Vec<CVector> = (0..n).map(|j| chol.solve_lower(&xh.column(j))).collect();
    let c = CMatrix::from_columns(&c_cols).hermitian_part();

    let eig = hermitian_eig(&c)?;
    let top = eig.values[n - 1];
    let tol = DEGENERATE_RTOL * top.abs().max(f64::MIN_POSITIVE);
    let back = |u: &CVector| {
        let v = chol.solve_upper(u);
        let nrm = v.norm();
        v.scale(C64::new(1.0 / nrm, 0.0))
    };

    let tied: Vec<usize> = (0..n).filter(|&i| top - eig.values[i] <= tol).collect();
    let degenerate = tied.len() > 1;
    let vector = if degenerate {
        let mut best = back(&eig.vectors[n - 1]);
        let mut best_sum = best.sum().norm();
        for &i in tied.iter().rev().skip(1) {
            let cand = back(&eig.vectors[i]);
            let s = cand.sum().norm();
            if s > best_sum {
                best = cand;
                best_sum = s;
            }
        }
        best
    } else {
        back(&eig.vectors[n - 1])
    };
    Ok(PrincipalEigen {
        vector: vector.canonical_phase(),
        value: top,
        degenerate,
    })
}

/// Generalized Rayleigh quotient `v^H A v / v^H B v` (real part).
pub fn rayleigh_quotient(a: &CMatrix, b: &CMatrix, v: &[C64]) -> f64 {
    a.quad_form(v).re / b.quad_form(v).re
}
