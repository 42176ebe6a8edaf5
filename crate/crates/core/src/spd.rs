//! The manifold of symmetric positive definite matrices under the
//! affine-invariant metric `⟨X, Y⟩_P = tr(X P⁻¹ Y P⁻¹)`.
//!
//! Every operation works in whitened coordinates `P^{-1/2} · P^{-1/2}`, where
//! the metric becomes the Frobenius inner product. Points cache `P^{1/2}` and
//! `P^{-1/2}` so a point is decomposed once no matter how many tangent
//! vectors are attached to it.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::symmat::{sym_eigen, sym_eigenvalues, sym_exp, sym_log, sym_sqrt, Matrix, SymMat};

struct PointData {
    mat: SymMat,
    sqrt: SymMat,
    inv_sqrt: SymMat,
    min_eigenvalue: f64,
}

/// A point of S^d_{++}. Cheap to clone.
#[derive(Clone)]
pub struct SpdPoint(Arc<PointData>);

impl SpdPoint {
    /// Validates positive definiteness (smallest eigenvalue strictly positive).
    pub fn new(mat: SymMat) -> Result<Self> {
        let eig = sym_eigen(&mat)?;
        let min = *eig.values.last().expect("dimension >= 1");
        if !(min > 0.0) {
            return Err(Error::Domain { function: "SPD point", eigenvalue: min });
        }
        let sqrt = eig.reconstruct_with(f64::sqrt);
        let inv_sqrt = eig.reconstruct_with(|l| 1.0 / l.sqrt());
        Ok(SpdPoint(Arc::new(PointData { mat, sqrt, inv_sqrt, min_eigenvalue: min })))
    }

    pub fn identity(dim: usize) -> Self {
        let id = SymMat::identity(dim);
        SpdPoint(Arc::new(PointData {
            mat: id.clone(),
            sqrt: id.clone(),
            inv_sqrt: id,
            min_eigenvalue: 1.0,
        }))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(SymMat::from_diagonal(diag))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.mat.dim()
    }

    pub fn mat(&self) -> &SymMat {
        &self.0.mat
    }

    pub fn sqrt(&self) -> &SymMat {
        &self.0.sqrt
    }

    pub fn inv_sqrt(&self) -> &SymMat {
        &self.0.inv_sqrt
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.0.min_eigenvalue
    }

    /// `P^{-1/2} X P^{-1/2}`.
    pub fn whiten(&self, x: &SymMat) -> SymMat {
        x.sandwich(self.inv_sqrt())
    }

    /// `P^{1/2} W P^{1/2}`.
    pub fn unwhiten(&self, w: &SymMat) -> SymMat {
        w.sandwich(self.sqrt())
    }

    fn same_as(&self, other: &SpdPoint) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0.mat == other.0.mat
    }

    /// Zero tangent vector at this point.
    pub fn zero_tangent(&self) -> TangentVec {
        TangentVec { base: self.clone(), vec: SymMat::zeros(self.dim()) }
    }

    /// Tangent vector at this point; `vec` must have matching dimension.
    pub fn tangent(&self, vec: SymMat) -> Result<TangentVec> {
        if vec.dim() != self.dim() {
            return Err(Error::input(format!(
                "tangent of dimension {} at a point of dimension {}",
                vec.dim(),
                self.dim()
            )));
        }
        Ok(TangentVec { base: self.clone(), vec })
    }
}

impl PartialEq for SpdPoint {
    fn eq(&self, other: &Self) -> bool {
        self.same_as(other)
    }
}

impl fmt::Debug for SpdPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("SpdPoint").field(self.mat()).finish()
    }
}

/// Symmetric matrix attached to a base point.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVec {
    base: SpdPoint,
    vec: SymMat,
}

impl TangentVec {
    pub fn base(&self) -> &SpdPoint {
        &self.base
    }

    pub fn vec(&self) -> &SymMat {
        &self.vec
    }

    pub fn into_vec(self) -> SymMat {
        self.vec
    }

    pub fn scale(&self, c: f64) -> TangentVec {
        TangentVec { base: self.base.clone(), vec: self.vec.scale(c) }
    }

    pub fn add(&self, other: &TangentVec) -> Result<TangentVec> {
        check_base(&self.base, other)?;
        Ok(TangentVec { base: self.base.clone(), vec: self.vec.add(&other.vec) })
    }

    pub fn sub(&self, other: &TangentVec) -> Result<TangentVec> {
        check_base(&self.base, other)?;
        Ok(TangentVec { base: self.base.clone(), vec: self.vec.sub(&other.vec) })
    }
}

/// Lower bound on sectional curvature, `κ ≤ 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvatureBound(f64);

impl CurvatureBound {
    /// The bound for SPD matrices under the affine-invariant metric.
    pub const SPD: CurvatureBound = CurvatureBound(-0.5);

    pub fn new(kappa: f64) -> Result<Self> {
        if kappa.is_finite() && kappa <= 0.0 {
            Ok(CurvatureBound(kappa))
        } else {
            Err(Error::input(format!("curvature bound must be finite and <= 0, got {kappa}")))
        }
    }

    pub fn kappa(self) -> f64 {
        self.0
    }
}

impl Default for CurvatureBound {
    fn default() -> Self {
        Self::SPD
    }
}

fn check_base(p: &SpdPoint, x: &TangentVec) -> Result<()> {
    if p.same_as(&x.base) {
        Ok(())
    } else {
        Err(Error::input("tangent vector is not based at the given point"))
    }
}

fn check_dims(p: &SpdPoint, q: &SpdPoint) -> Result<()> {
    if p.dim() == q.dim() {
        Ok(())
    } else {
        Err(Error::input(format!("dimension mismatch: {} vs {}", p.dim(), q.dim())))
    }
}

/// `tr(X P⁻¹ Y P⁻¹)`.
pub fn inner(p: &SpdPoint, x: &TangentVec, y: &TangentVec) -> Result<f64> {
    check_base(p, x)?;
    check_base(p, y)?;
    Ok(p.whiten(&x.vec).frobenius_dot(&p.whiten(&y.vec)))
}

pub fn norm(p: &SpdPoint, x: &TangentVec) -> Result<f64> {
    check_base(p, x)?;
    Ok(p.whiten(&x.vec).frobenius_norm())
}

/// `P^{1/2} exp(P^{-1/2} X P^{-1/2}) P^{1/2}`.
pub fn exp_map(p: &SpdPoint, x: &TangentVec) -> Result<SpdPoint> {
    check_base(p, x)?;
    if !x.vec.is_finite() {
        return Err(Error::input("tangent vector has non-finite entries"));
    }
    let e = sym_exp(&p.whiten(&x.vec))?;
    SpdPoint::new(p.unwhiten(&e))
}

/// `P^{1/2} log(P^{-1/2} Q P^{-1/2}) P^{1/2}`, the inverse of [`exp_map`].
pub fn log_map(p: &SpdPoint, q: &SpdPoint) -> Result<TangentVec> {
    check_dims(p, q)?;
    let l = sym_log(&p.whiten(q.mat()))?;
    Ok(TangentVec { base: p.clone(), vec: p.unwhiten(&l) })
}

/// `log(P^{-1/2} Q P^{-1/2})`, the logarithm in whitened coordinates at `p`.
/// Its Frobenius norm is the geodesic distance.
pub fn whitened_log(p: &SpdPoint, q: &SpdPoint) -> Result<SymMat> {
    check_dims(p, q)?;
    sym_log(&p.whiten(q.mat()))
}

/// Squared geodesic distance from the spectrum of `P^{-1/2} Q P^{-1/2}`.
pub fn distance_squared(p: &SpdPoint, q: &SpdPoint) -> Result<f64> {
    check_dims(p, q)?;
    let vals = sym_eigenvalues(&p.whiten(q.mat()))?;
    if let Some(&bad) = vals.iter().find(|&&l| !(l > 0.0)) {
        return Err(Error::Domain { function: "distance", eigenvalue: bad });
    }
    Ok(vals.iter().map(|l| l.ln().powi(2)).sum())
}

/// `‖log(P^{-1/2} Q P^{-1/2})‖_F`.
pub fn distance(p: &SpdPoint, q: &SpdPoint) -> Result<f64> {
    distance_squared(p, q).map(f64::sqrt)
}

/// Parallel transport of `x` from `p` to `q` along their geodesic:
/// `E X Eᵀ` with `E = P^{1/2} (P^{-1/2} Q P^{-1/2})^{1/2} P^{-1/2}`.
pub fn parallel_transport(p: &SpdPoint, q: &SpdPoint, x: &TangentVec) -> Result<TangentVec> {
    check_dims(p, q)?;
    check_base(p, x)?;
    let mid = sym_sqrt(&p.whiten(q.mat()))?;
    let e = p.sqrt().as_matrix().matmul(mid.as_matrix()).matmul(p.inv_sqrt().as_matrix());
    let moved = e.matmul(x.vec.as_matrix()).matmul(&e.transpose()).symmetric_part();
    Ok(TangentVec { base: q.clone(), vec: moved })
}

/// Curvature comparison factor `√|κ| c / tanh(√|κ| c)`, extended by
/// continuity to 1 at `κ = 0`.
pub fn zeta(kappa: CurvatureBound, c: f64) -> Result<f64> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::input(format!("zeta needs a positive finite side length, got {c}")));
    }
    let x = kappa.kappa().abs().sqrt() * c;
    if x < 1e-8 {
        return Ok(1.0 + x * x / 3.0);
    }
    Ok(x / x.tanh())
}

/// The congruence action `P ↦ G P Gᵀ`, an isometry of the metric.
pub fn transform_point(g: &Matrix, p: &SpdPoint) -> Result<SpdPoint> {
    SpdPoint::new(crate::symmat::congruence(g, p.mat())?)
}

/// The congruence action on a tangent vector, moving it to `G P Gᵀ`.
pub fn transform_tangent(g: &Matrix, x: &TangentVec) -> Result<TangentVec> {
    let base = transform_point(g, &x.base)?;
    let vec = crate::symmat::congruence(g, &x.vec)?;
    Ok(TangentVec { base, vec })
}
