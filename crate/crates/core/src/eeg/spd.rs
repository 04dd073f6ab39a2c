//! Symmetric positive definite matrices and the affine-invariant Riemannian
//! toolkit: matrix functions, Karcher mean and tangent-space projection.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SYM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpdRepr", into = "SpdRepr")]
pub struct SpdMatrix(DMatrix<f64>);

#[derive(Serialize, Deserialize)]
struct SpdRepr {
    n: usize,
    data: Vec<f64>,
}

impl From<SpdMatrix> for SpdRepr {
    fn from(m: SpdMatrix) -> Self {
        SpdRepr {
            n: m.0.nrows(),
            data: m.0.as_slice().to_vec(),
        }
    }
}

impl TryFrom<SpdRepr> for SpdMatrix {
    type Error = Error;

    fn try_from(r: SpdRepr) -> Result<Self> {
        if r.data.len() != r.n * r.n {
            return Err(Error::DimensionMismatch {
                expected: r.n * r.n,
                found: r.data.len(),
            });
        }
        SpdMatrix::new(DMatrix::from_vec(r.n, r.n, r.data))
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn eig(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    SymmetricEigen::new(symmetrize(m))
}

/// `V f(Λ) Vᵀ` for a symmetric `m`.
pub fn sym_apply(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let e = eig(m);
    let d = DVector::from_iterator(e.eigenvalues.len(), e.eigenvalues.iter().map(|&v| f(v)));
    let vd = &e.eigenvectors * DMatrix::from_diagonal(&d);
    symmetrize(&(vd * e.eigenvectors.transpose()))
}

impl SpdMatrix {
    /// Validates symmetry (to 1e-10, relative to the largest entry) and
    /// strict positivity of the spectrum.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::NotSpd(format!("{}x{} is not square", m.nrows(), m.ncols())));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("SPD candidate has non-finite entries".into()));
        }
        let scale = m.amax().max(1.0);
        let asym = (&m - m.transpose()).amax();
        if asym > SYM_TOL * scale {
            return Err(Error::NotSpd(format!("symmetry residual {asym:e}")));
        }
        let m = symmetrize(&m);
        let e = eig(&m);
        let max = e.eigenvalues.max();
        let min = e.eigenvalues.min();
        let floor = max.abs() * f64::EPSILON * m.nrows() as f64;
        if !(min > floor) || !(max > 0.0) {
            return Err(Error::NotSpd(format!("smallest eigenvalue {min:e}")));
        }
        Ok(SpdMatrix(m))
    }

    pub fn identity(n: usize) -> Self {
        SpdMatrix(DMatrix::identity(n, n))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        eig(&self.0).eigenvalues.iter().copied().collect()
    }

    pub fn sqrt(&self) -> DMatrix<f64> {
        sym_apply(&self.0, f64::sqrt)
    }

    pub fn inv_sqrt(&self) -> DMatrix<f64> {
        sym_apply(&self.0, |v| 1.0 / v.sqrt())
    }

    pub fn log(&self) -> DMatrix<f64> {
        sym_apply(&self.0, f64::ln)
    }
}

/// Sample covariance of mean-centred rows, `C = X Xᵀ / (T - 1)`, shrunk toward
/// a scaled identity: `(1 - λ) C + λ (tr C / n) I`.
pub fn spatial_covariance(x: &DMatrix<f64>, shrinkage: f64) -> Result<SpdMatrix> {
    let (n, t) = x.shape();
    if !(0.0..=1.0).contains(&shrinkage) {
        return Err(Error::Invalid(format!("shrinkage must be in [0, 1], got {shrinkage}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("EEG epoch contains non-finite samples".into()));
    }
    if t < 2 || (shrinkage == 0.0 && t <= n) {
        return Err(Error::InsufficientSignal(format!(
            "covariance of {n} channels needs more than {n} samples, got {t}"
        )));
    }
    let mut xc = x.clone();
    for mut row in xc.row_iter_mut() {
        let m = row.mean();
        row.add_scalar_mut(-m);
    }
    let c = (&xc * xc.transpose()) / (t as f64 - 1.0);
    let mu = c.trace() / n as f64;
    let mut r = c * (1.0 - shrinkage);
    for i in 0..n {
        r[(i, i)] += shrinkage * mu;
    }
    SpdMatrix::new(r)
}

/// `log(R^{-1/2} C R^{-1/2})`.
pub fn log_map(c: &SpdMatrix, r_inv_sqrt: &DMatrix<f64>) -> DMatrix<f64> {
    sym_apply(&(r_inv_sqrt * c.matrix() * r_inv_sqrt), f64::ln)
}

/// Affine-invariant Riemannian distance.
pub fn riemann_distance(a: &SpdMatrix, b: &SpdMatrix) -> f64 {
    log_map(a, &b.inv_sqrt()).norm()
}

/// Riemannian (Karcher) mean by fixed-point iteration from the arithmetic
/// mean. Returns once the mean tangent vector has Frobenius norm below `tol`.
pub fn karcher_mean(mats: &[SpdMatrix], tol: f64, max_iter: usize) -> Result<SpdMatrix> {
    let first = mats
        .first()
        .ok_or_else(|| Error::Invalid("karcher mean of an empty set".into()))?;
    let n = first.n();
    if let Some(bad) = mats.iter().find(|m| m.n() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: bad.n(),
        });
    }
    let mut sum = DMatrix::zeros(n, n);
    for m in mats {
        sum += m.matrix();
    }
    let mut m = SpdMatrix::new(sum / mats.len() as f64)?;
    let mut residual = f64::INFINITY;
    for _ in 0..=max_iter {
        let isq = m.inv_sqrt();
        let mut tangent = DMatrix::zeros(n, n);
        for c in mats {
            tangent += log_map(c, &isq);
        }
        tangent /= mats.len() as f64;
        residual = tangent.norm();
        if residual < tol {
            return Ok(m);
        }
        let sq = m.sqrt();
        m = SpdMatrix::new(&sq * sym_apply(&tangent, f64::exp) * &sq)?;
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

/// Upper triangle (row-major) with off-diagonal entries scaled by √2, so the
/// Euclidean norm equals the Frobenius norm.
pub fn upper_vec(s: &DMatrix<f64>) -> Vec<f64> {
    let n = s.nrows();
    let mut v = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            v.push(if i == j {
                s[(i, j)]
            } else {
                std::f64::consts::SQRT_2 * s[(i, j)]
            });
        }
    }
    v
}

pub fn tangent_project(c: &SpdMatrix, reference: &SpdMatrix) -> Result<Vec<f64>> {
    if c.n() != reference.n() {
        return Err(Error::DimensionMismatch {
            expected: reference.n(),
            found: c.n(),
        });
    }
    Ok(upper_vec(&log_map(c, &reference.inv_sqrt())))
}
