//! Dense symmetric linear algebra for small matrices.
//!
//! Everything on the manifold reduces to a symmetric eigendecomposition
//! followed by a scalar map on the spectrum, so this module provides a
//! deterministic cyclic Jacobi solver and the spectral functions built on it.
//! Storage is dense row-major; the dimensions involved are tiny (d = 5 for
//! image descriptors) and packed formats would only add index arithmetic.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;
const OFF_DIAGONAL_TOL: f64 = 1e-14;

/// Square dense matrix, row-major. Used for intermediate products that are
/// not symmetric (e.g. the transport operator or congruence factors).
#[derive(Clone, PartialEq)]
pub struct Matrix {
    dim: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        Matrix { dim, data: vec![0.0; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::input("matrix dimension must be at least 1"));
        }
        if data.len() != dim * dim {
            return Err(Error::input(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                data.len()
            )));
        }
        Ok(Matrix { dim, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::input("rows must form a square matrix"));
            }
            data.extend_from_slice(row);
        }
        Self::from_row_major(dim, data)
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let dim = diag.len();
        let mut m = Self::zeros(dim);
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * dim + i] = v;
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix {
        let n = self.dim;
        let mut t = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                t.data[j * n + i] = self.data[i * n + j];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        debug_assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                let row = &other.data[k * n..(k + 1) * n];
                let dst = &mut out[i * n..(i + 1) * n];
                for (d, &b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        Matrix { dim: n, data: out }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `(A + Aᵀ) / 2`.
    pub fn symmetric_part(&self) -> SymMat {
        let n = self.dim;
        let mut data = self.data.clone();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        SymMat { inner: Matrix { dim: n, data } }
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[f64]> = self.data.chunks(self.dim).collect();
        f.debug_struct("Matrix").field("dim", &self.dim).field("rows", &rows).finish()
    }
}

/// Dense real symmetric matrix with finite entries.
///
/// Symmetry is exact: every constructor either checks it or symmetrizes,
/// and all arithmetic preserves it.
#[derive(Clone, PartialEq)]
pub struct SymMat {
    inner: Matrix,
}

impl SymMat {
    pub fn zeros(dim: usize) -> Self {
        SymMat { inner: Matrix::zeros(dim) }
    }

    pub fn identity(dim: usize) -> Self {
        SymMat { inner: Matrix::identity(dim) }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMat { inner: Matrix::from_diagonal(diag) }
    }

    /// Build from row-major entries, rejecting anything not exactly symmetric.
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        let m = Matrix::from_row_major(dim, data)?;
        Self::try_from_matrix(m)
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        Self::try_from_matrix(Matrix::from_rows(rows)?)
    }

    pub fn try_from_matrix(m: Matrix) -> Result<Self> {
        if !m.is_finite() {
            return Err(Error::input("matrix has non-finite entries"));
        }
        let n = m.dim;
        for i in 0..n {
            for j in (i + 1)..n {
                if m.get(i, j) != m.get(j, i) {
                    return Err(Error::input(format!(
                        "matrix is not symmetric at ({i}, {j}): {} vs {}",
                        m.get(i, j),
                        m.get(j, i)
                    )));
                }
            }
        }
        Ok(SymMat { inner: m })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.inner.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner.get(i, j)
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.inner
    }

    pub fn into_matrix(self) -> Matrix {
        self.inner
    }

    pub fn as_slice(&self) -> &[f64] {
        self.inner.as_slice()
    }

    pub fn is_finite(&self) -> bool {
        self.inner.is_finite()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner.frobenius_norm()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.get(i, i)).sum()
    }

    /// Frobenius inner product `tr(A B)` for symmetric `A`, `B`.
    pub fn frobenius_dot(&self, other: &SymMat) -> f64 {
        self.as_slice().iter().zip(other.as_slice()).map(|(a, b)| a * b).sum()
    }

    pub fn scale(&self, c: f64) -> SymMat {
        SymMat {
            inner: Matrix {
                dim: self.dim(),
                data: self.inner.data.iter().map(|v| v * c).collect(),
            },
        }
    }

    pub fn add(&self, other: &SymMat) -> SymMat {
        debug_assert_eq!(self.dim(), other.dim());
        SymMat {
            inner: Matrix {
                dim: self.dim(),
                data: self.inner.data.iter().zip(&other.inner.data).map(|(a, b)| a + b).collect(),
            },
        }
    }

    pub fn sub(&self, other: &SymMat) -> SymMat {
        debug_assert_eq!(self.dim(), other.dim());
        SymMat {
            inner: Matrix {
                dim: self.dim(),
                data: self.inner.data.iter().zip(&other.inner.data).map(|(a, b)| a - b).collect(),
            },
        }
    }

    /// `self += c * other`.
    pub fn add_scaled_in_place(&mut self, c: f64, other: &SymMat) {
        for (a, b) in self.inner.data.iter_mut().zip(&other.inner.data) {
            *a += c * b;
        }
    }

    /// `A · self · A` for symmetric `A`, symmetrized to remove rounding asymmetry.
    pub fn sandwich(&self, a: &SymMat) -> SymMat {
        a.inner.matmul(&self.inner).matmul(&a.inner).symmetric_part()
    }

    pub fn max_abs_diff(&self, other: &SymMat) -> f64 {
        self.as_slice()
            .iter()
            .zip(other.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl fmt::Debug for SymMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[f64]> = self.inner.data.chunks(self.dim()).collect();
        f.debug_struct("SymMat").field("dim", &self.dim()).field("rows", &rows).finish()
    }
}

/// Eigenpairs of a symmetric matrix: eigenvalues descending, eigenvector
/// `i` stored in column `i` of `vectors`.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenDecomp {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl EigenDecomp {
    /// `V · diag(f(λ)) · Vᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> SymMat {
        let n = self.values.len();
        let mapped: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let v = &self.vectors;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += v.get(i, k) * mapped[k] * v.get(j, k);
                }
                out.set(i, j, s);
                out.set(j, i, s);
            }
        }
        SymMat { inner: out }
    }

    pub fn reconstruct(&self) -> SymMat {
        self.reconstruct_with(|l| l)
    }
}

fn off_diagonal_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i * n + j] * a[i * n + j];
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi sweeps on `a` (row-major, overwritten). When `v` is given the
/// rotations are accumulated into it. Returns the diagonal.
fn jacobi_in_place(a: &mut [f64], n: usize, mut v: Option<&mut [f64]>) -> Result<Vec<f64>> {
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = OFF_DIAGONAL_TOL * scale;
    let mut converged = false;
    for sweep in 0..MAX_SWEEPS {
        let off = off_diagonal_norm(a, n);
        if off <= tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                // Threshold step: once an element is negligible next to both
                // diagonal entries, zero it instead of rotating.
                let g = 100.0 * apq.abs();
                if sweep > 3 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    continue;
                }
                let h = aqq - app;
                let t = if h.abs() + g == h.abs() {
                    apq / h
                } else {
                    let theta = 0.5 * h / apq;
                    let t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
                    if theta < 0.0 {
                        -t
                    } else {
                        t
                    }
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                if let Some(v) = v.as_deref_mut() {
                    for k in 0..n {
                        let vkp = v[k * n + p];
                        let vkq = v[k * n + q];
                        v[k * n + p] = c * vkp - s * vkq;
                        v[k * n + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }
    if !converged {
        let off = off_diagonal_norm(a, n);
        if off > tol {
            return Err(Error::Numerical { what: "Jacobi eigensolver", residual: off });
        }
    }
    Ok((0..n).map(|i| a[i * n + i]).collect())
}

fn check_finite(s: &SymMat) -> Result<()> {
    if s.is_finite() {
        Ok(())
    } else {
        Err(Error::input("matrix has non-finite entries"))
    }
}

/// Full symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Output is canonical: eigenvalues descending, each eigenvector signed so its
/// first non-negligible component is positive, equal eigenvalues ordered by
/// their eigenvectors lexicographically (descending).
pub fn sym_eigen(s: &SymMat) -> Result<EigenDecomp> {
    check_finite(s)?;
    let n = s.dim();
    let mut a = s.as_slice().to_vec();
    let mut v = Matrix::identity(n).data;
    let values = jacobi_in_place(&mut a, n, Some(&mut v))?;

    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|j| {
            let mut col: Vec<f64> = (0..n).map(|i| v[i * n + j]).collect();
            let lead = col.iter().position(|x| x.abs() > 1e-14).unwrap_or(0);
            if col[lead] < 0.0 {
                col.iter_mut().for_each(|x| *x = -*x);
            }
            (values[j], col)
        })
        .collect();
    pairs.sort_by(|(la, va), (lb, vb)| {
        lb.partial_cmp(la).unwrap_or(Ordering::Equal).then_with(|| {
            vb.iter()
                .zip(va)
                .map(|(b, a)| b.partial_cmp(a).unwrap_or(Ordering::Equal))
                .find(|o| *o != Ordering::Equal)
                .unwrap_or(Ordering::Equal)
        })
    });

    let mut vectors = Matrix::zeros(n);
    let mut values = Vec::with_capacity(n);
    for (j, (l, col)) in pairs.into_iter().enumerate() {
        values.push(l);
        for (i, x) in col.into_iter().enumerate() {
            vectors.set(i, j, x);
        }
    }
    Ok(EigenDecomp { values, vectors })
}

/// Eigenvalues only (descending); skips eigenvector accumulation.
pub fn sym_eigenvalues(s: &SymMat) -> Result<Vec<f64>> {
    check_finite(s)?;
    let n = s.dim();
    let mut a = s.as_slice().to_vec();
    let mut values = jacobi_in_place(&mut a, n, None)?;
    values.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    Ok(values)
}

/// Spectral function `V · diag(f(λ)) · Vᵀ`, after checking every eigenvalue
/// against `domain`.
pub fn sym_apply_fn(
    s: &SymMat,
    f: impl Fn(f64) -> f64,
    domain: impl Fn(f64) -> bool,
    name: &'static str,
) -> Result<SymMat> {
    let eig = sym_eigen(s)?;
    if let Some(&bad) = eig.values.iter().find(|&&l| !domain(l)) {
        return Err(Error::Domain { function: name, eigenvalue: bad });
    }
    Ok(eig.reconstruct_with(f))
}

fn positive(l: f64) -> bool {
    l > 0.0
}

pub fn sym_exp(s: &SymMat) -> Result<SymMat> {
    sym_apply_fn(s, f64::exp, |_| true, "exp")
}

pub fn sym_log(s: &SymMat) -> Result<SymMat> {
    sym_apply_fn(s, f64::ln, positive, "log")
}

pub fn sym_sqrt(s: &SymMat) -> Result<SymMat> {
    sym_apply_fn(s, f64::sqrt, positive, "sqrt")
}

pub fn sym_inv_sqrt(s: &SymMat) -> Result<SymMat> {
    sym_apply_fn(s, |l| 1.0 / l.sqrt(), positive, "inverse sqrt")
}

/// `G · S · Gᵀ`.
pub fn congruence(g: &Matrix, s: &SymMat) -> Result<SymMat> {
    if g.dim() != s.dim() {
        return Err(Error::input(format!(
            "dimension mismatch: {}x{} factor against {}x{} matrix",
            g.dim(),
            g.dim(),
            s.dim(),
            s.dim()
        )));
    }
    if !g.is_finite() {
        return Err(Error::input("congruence factor has non-finite entries"));
    }
    Ok(g.matmul(s.as_matrix()).matmul(&g.transpose()).symmetric_part())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(rng: &mut impl Rng, n: usize) -> SymMat {
        let data: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        Matrix::from_row_major(n, data).unwrap().symmetric_part()
    }

    fn random_orthogonal(rng: &mut impl Rng, n: usize) -> Matrix {
        sym_eigen(&random_sym(rng, n)).unwrap().vectors
    }

    /// Symmetric matrix with prescribed spectrum spread over [1, cond].
    fn conditioned(rng: &mut impl Rng, n: usize, cond: f64) -> SymMat {
        let q = random_orthogonal(rng, n);
        let diag: Vec<f64> = (0..n)
            .map(|i| {
                let t = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                sign * cond.powf(t)
            })
            .collect();
        congruence(&q, &SymMat::from_diagonal(&diag)).unwrap()
    }

    #[test]
    fn diagonal_input_is_already_decomposed() {
        let e = sym_eigen(&SymMat::from_diagonal(&[2.0, 1.0])).unwrap();
        assert_eq!(e.values, vec![2.0, 1.0]);
        assert_eq!(e.vectors, Matrix::identity(2));
    }

    #[test]
    fn two_by_two_matches_characteristic_polynomial() {
        // λ² − 4λ + 3 = 0 → λ ∈ {3, 1}; eigenvectors (1,1)/√2 and (1,−1)/√2.
        let s = SymMat::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]).unwrap();
        let e = sym_eigen(&s).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-15);
        assert!((e.values[1] - 1.0).abs() < 1e-15);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        for (got, want) in [
            (e.vectors.get(0, 0), r),
            (e.vectors.get(1, 0), r),
            (e.vectors.get(0, 1), r),
            (e.vectors.get(1, 1), -r),
        ] {
            assert!((got - want).abs() < 1e-15, "{got} vs {want}");
        }
    }

    #[test]
    fn reconstruction_and_orthogonality_up_to_cond_1e6() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 2..=10 {
            for &cond in &[1.0, 1e3, 1e6] {
                let s = conditioned(&mut rng, n, cond);
                let e = sym_eigen(&s).unwrap();
                let err = e.reconstruct().sub(&s).frobenius_norm() / s.frobenius_norm();
                assert!(err < 1e-12, "n={n} cond={cond} reconstruction {err:e}");
                let vtv = e.vectors.transpose().matmul(&e.vectors);
                let mut dev = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        let t = vtv.get(i, j) - if i == j { 1.0 } else { 0.0 };
                        dev += t * t;
                    }
                }
                assert!(dev.sqrt() < 1e-12, "n={n} orthogonality {:e}", dev.sqrt());
                assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
            }
        }
    }

    #[test]
    fn random_five_by_five_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_sym(&mut rng, 5);
        let e = sym_eigen(&s).unwrap();
        let err = e.reconstruct().sub(&s).frobenius_norm() / s.frobenius_norm();
        assert!(err < 1e-12);
    }

    #[test]
    fn eigenvalues_only_agree_with_full_decomposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = random_sym(&mut rng, 6);
        let a = sym_eigen(&s).unwrap().values;
        let b = sym_eigenvalues(&s).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn deterministic_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_sym(&mut rng, 7);
        assert_eq!(sym_eigen(&s).unwrap(), sym_eigen(&s).unwrap());
    }

    #[test]
    fn repeated_eigenvalues_are_canonical() {
        let e = sym_eigen(&SymMat::identity(3)).unwrap();
        assert_eq!(e.values, vec![1.0; 3]);
        // lexicographically descending columns of the identity: e1, e2, e3
        assert_eq!(e.vectors, Matrix::identity(3));
    }

    #[test]
    fn zero_matrix_converges_immediately() {
        let e = sym_eigen(&SymMat::zeros(4)).unwrap();
        assert_eq!(e.values, vec![0.0; 4]);
    }

    #[test]
    fn non_finite_rejected() {
        let m = Matrix::from_rows(&[&[1.0, f64::NAN], &[f64::NAN, 1.0]]).unwrap();
        assert!(SymMat::try_from_matrix(m.clone()).is_err());
        let s = SymMat { inner: m };
        assert!(matches!(sym_eigen(&s), Err(Error::Input(_))));
    }

    #[test]
    fn asymmetric_rows_rejected() {
        assert!(SymMat::from_rows(&[&[1.0, 2.0], &[3.0, 1.0]]).is_err());
    }

    #[test]
    fn exp_of_zero_is_identity() {
        assert_eq!(sym_exp(&SymMat::zeros(3)).unwrap(), SymMat::identity(3));
    }

    #[test]
    fn log_inverts_exp() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let mut s = random_sym(&mut rng, 5);
            let norm = s.frobenius_norm();
            s = s.scale(rng.random_range(0.0..2.0) / norm);
            let back = sym_log(&sym_exp(&s).unwrap()).unwrap();
            assert!(back.sub(&s).frobenius_norm() <= 1e-10 * s.frobenius_norm().max(1e-300));
        }
    }

    #[test]
    fn sqrt_squares_back() {
        let s = SymMat::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]).unwrap();
        let r = sym_sqrt(&s).unwrap();
        let rr = r.as_matrix().matmul(r.as_matrix());
        for i in 0..2 {
            for j in 0..2 {
                assert!((rr.get(i, j) - s.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn domain_guard_reports_offending_eigenvalue() {
        let s = SymMat::from_diagonal(&[1.0, -2.0]);
        match sym_log(&s) {
            Err(Error::Domain { eigenvalue, .. }) => assert_eq!(eigenvalue, -2.0),
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn spectral_mapping() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let s = random_sym(&mut rng, 6);
        let before = sym_eigenvalues(&s).unwrap();
        let cubed = sym_apply_fn(&s, |l| l * l * l, |_| true, "cube").unwrap();
        let mut want: Vec<f64> = before.iter().map(|l| l * l * l).collect();
        want.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let got = sym_eigenvalues(&cubed).unwrap();
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-10 * w.abs().max(1.0), "{g} vs {w}");
        }
    }

    #[test]
    fn identity_function_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let s = random_sym(&mut rng, 8);
        let out = sym_apply_fn(&s, |l| l, |_| true, "id").unwrap();
        assert!(out.sub(&s).frobenius_norm() < 1e-12);
    }

    #[test]
    fn congruence_cases() {
        let s = SymMat::from_rows(&[&[3.0, 1.0], &[1.0, 2.0]]).unwrap();
        assert_eq!(congruence(&Matrix::identity(2), &s).unwrap(), s);
        let out = congruence(&Matrix::from_diagonal(&[2.0, 1.0]), &SymMat::identity(2)).unwrap();
        assert_eq!(out, SymMat::from_diagonal(&[4.0, 1.0]));
        assert!(congruence(&Matrix::identity(3), &s).is_err());
    }

    #[test]
    fn congruence_preserves_definiteness() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let g = Matrix::from_row_major(4, (0..16).map(|_| rng.random_range(-2.0..2.0)).collect())
                .unwrap();
            let out = congruence(&g, &SymMat::from_diagonal(&[1.0, 2.0, 3.0, 0.5])).unwrap();
            let vals = sym_eigenvalues(&out).unwrap();
            assert!(vals.iter().all(|&l| l > 0.0), "{vals:?}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn reconstruction_bound(entries in proptest::collection::vec(-10.0f64..10.0, 36)) {
                let s = Matrix::from_row_major(6, entries).unwrap().symmetric_part();
                let e = sym_eigen(&s).unwrap();
                let scale = s.frobenius_norm().max(f64::MIN_POSITIVE);
                prop_assert!(e.reconstruct().sub(&s).frobenius_norm() <= 1e-12 * scale);
            }
        }
    }
}
