//! Dense complex primitives: full SVD, tolerance-aware rank, orthonormal
//! nullspace bases and Hermitian sign tests.

use nalgebra::DMatrix;
use num_complex::Complex;

use super::ToleranceProfile;
use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type ComplexMatrix = DMatrix<C64>;

pub fn c(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

pub fn zeros(rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::zeros(rows, cols)
}

pub fn identity(n: usize) -> ComplexMatrix {
    ComplexMatrix::identity(n, n)
}

/// Builds a matrix from real row-major data.
pub fn from_real_rows(rows: usize, cols: usize, data: &[f64]) -> ComplexMatrix {
    assert_eq!(data.len(), rows * cols);
    ComplexMatrix::from_fn(rows, cols, |i, j| c(data[i * cols + j], 0.0))
}

pub fn is_finite(m: &ComplexMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn ensure_finite(name: &str, m: &ComplexMatrix) -> Result<()> {
    if is_finite(m) {
        Ok(())
    } else {
        Err(Error::ContractViolation(format!(
            "matrix {name} contains NaN or infinite entries"
        )))
    }
}

pub fn fro(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Concatenates blocks side by side. All blocks must share a row count.
pub fn hstack(blocks: &[&ComplexMatrix]) -> ComplexMatrix {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack row mismatch");
        out.view_mut((0, at), (rows, b.ncols())).copy_from(*b);
        at += b.ncols();
    }
    out
}

/// Stacks blocks vertically. All blocks must share a column count.
pub fn vstack(blocks: &[&ComplexMatrix]) -> ComplexMatrix {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vstack column mismatch");
        out.view_mut((at, 0), (b.nrows(), cols)).copy_from(*b);
        at += b.nrows();
    }
    out
}

pub fn block_diag(blocks: &[&ComplexMatrix]) -> ComplexMatrix {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = zeros(rows, cols);
    let (mut r, mut k) = (0, 0);
    for b in blocks {
        out.view_mut((r, k), b.shape()).copy_from(*b);
        r += b.nrows();
        k += b.ncols();
    }
    out
}

/// Copies the `(rows.len() x cols.len())` sub-block starting at the given offsets.
pub fn sub(m: &ComplexMatrix, r0: usize, c0: usize, rows: usize, cols: usize) -> ComplexMatrix {
    m.view((r0, c0), (rows, cols)).into_owned()
}

pub fn herm_part(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()) * c(0.5, 0.0)
}

/// Singular value decomposition with square unitary factors.
///
/// `m = u * diag(sigma) * v^H` where `u` is `rows x rows`, `v` is
/// `cols x cols` and `sigma` (length `min(rows, cols)`) is sorted in
/// decreasing order.
#[derive(Clone, Debug)]
pub struct FullSvd {
    pub u: ComplexMatrix,
    pub sigma: Vec<f64>,
    pub v: ComplexMatrix,
}

pub(crate) fn to_faer(m: &ComplexMatrix) -> faer::Mat<C64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, C64>) -> ComplexMatrix {
    ComplexMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// `M = U diag(sigma) V^H` with square unitary `U`, `V` and `sigma` nonincreasing.
pub fn full_svd(m: &ComplexMatrix) -> Result<FullSvd> {
    ensure_finite("svd input", m)?;
    let (r, cdim) = m.shape();
    if r == 0 || cdim == 0 {
        return Ok(FullSvd {
            u: identity(r),
            sigma: Vec::new(),
            v: identity(cdim),
        });
    }
    let svd = to_faer(m)
        .svd()
        .map_err(|e| Error::Numeric(format!("SVD did not converge: {e:?}")))?;
    Ok(FullSvd {
        u: from_faer(svd.U()),
        sigma: svd.S().column_vector().iter().map(|z| z.re).collect(),
        v: from_faer(svd.V()),
    })
}

pub fn singular_values(m: &ComplexMatrix) -> Result<Vec<f64>> {
    ensure_finite("svd input", m)?;
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(Vec::new());
    }
    let mut s = to_faer(m)
        .singular_values()
        .map_err(|e| Error::Numeric(format!("SVD did not converge: {e:?}")))?;
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Spectral norm.
pub fn norm2(m: &ComplexMatrix) -> Result<f64> {
    Ok(singular_values(m)?.first().copied().unwrap_or(0.0))
}

/// Cut-off below which singular values of a `rows x cols` matrix count as zero.
pub fn rank_threshold(sigma_max: f64, rows: usize, cols: usize, tol: &ToleranceProfile) -> f64 {
    tol.rank_rel * rows.max(cols) as f64 * sigma_max
}

pub fn count_above(sigma: &[f64], threshold: f64) -> usize {
    sigma.iter().filter(|&&s| s > threshold).count()
}

pub fn rank_from_sigma(sigma: &[f64], rows: usize, cols: usize, tol: &ToleranceProfile) -> usize {
    let smax = sigma.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return 0;
    }
    count_above(sigma, rank_threshold(smax, rows, cols, tol))
}

/// Numerical rank with the sigma-max scaled cut-off.
pub fn rank_tol(m: &ComplexMatrix, tol: &ToleranceProfile) -> Result<usize> {
    let s = singular_values(m)?;
    Ok(rank_from_sigma(&s, m.nrows(), m.ncols(), tol))
}

/// Numerical rank with the cut-off scaled by `max(sigma_max, scale)`, for a
/// matrix formed by cancellation among terms of size `scale`.
pub fn rank_tol_scaled(m: &ComplexMatrix, scale: f64, tol: &ToleranceProfile) -> Result<usize> {
    let s = singular_values(m)?;
    let top = s.first().copied().unwrap_or(0.0).max(scale);
    if top == 0.0 {
        return Ok(0);
    }
    Ok(count_above(&s, rank_threshold(top, m.nrows(), m.ncols(), tol)))
}

/// Orthonormal basis of `{x : M x = 0}` at tolerance.
pub fn nullspace_right(m: &ComplexMatrix, tol: &ToleranceProfile) -> Result<ComplexMatrix> {
    let cols = m.ncols();
    if m.nrows() == 0 {
        return Ok(identity(cols));
    }
    if cols == 0 {
        return Ok(zeros(0, 0));
    }
    let svd = full_svd(m)?;
    let rank = rank_from_sigma(&svd.sigma, m.nrows(), cols, tol);
    Ok(sub(&svd.v, 0, rank, cols, cols - rank))
}

/// Orthonormal basis of `{y : y^H M = 0}`; an `n x 0` input yields a basis of all of `C^n`.
pub fn nullspace_left(m: &ComplexMatrix, tol: &ToleranceProfile) -> Result<ComplexMatrix> {
    nullspace_right(&m.adjoint(), tol)
}

/// Outcome of a semidefiniteness test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PsdCheck {
    pub holds: bool,
    /// Smallest eigenvalue of the Hermitian part.
    pub min_eigenvalue: f64,
    /// `||M - M^H||_F`.
    pub hermitian_residual: f64,
}

fn require_square(name: &str, m: &ComplexMatrix) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::ContractViolation(format!(
            "{name} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

pub fn hermitian_eigenvalues(m: &ComplexMatrix) -> Result<Vec<f64>> {
    require_square("hermitian eigen input", m)?;
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let mut v = to_faer(&herm_part(m))
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|e| Error::Numeric(format!("Hermitian eigensolver did not converge: {e:?}")))?;
    v.sort_by(f64::total_cmp);
    Ok(v)
}

pub fn is_psd(m: &ComplexMatrix, tol: &ToleranceProfile) -> Result<PsdCheck> {
    require_square("is_psd input", m)?;
    ensure_finite("is_psd input", m)?;
    let herm_res = fro(&(m - m.adjoint()));
    let norm = fro(m);
    let eig = hermitian_eigenvalues(m)?;
    let min_eigenvalue = eig.first().copied().unwrap_or(0.0);
    let spec_norm = eig.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    let hermitian = herm_res <= tol.residual_rel * norm;
    let holds = hermitian && min_eigenvalue >= -tol.psd_abs * (1.0 + spec_norm);
    Ok(PsdCheck {
        holds,
        min_eigenvalue,
        hermitian_residual: herm_res,
    })
}

pub fn is_hermitian(m: &ComplexMatrix, tol: &ToleranceProfile) -> Result<bool> {
    require_square("is_hermitian input", m)?;
    Ok(fro(&(m - m.adjoint())) <= tol.residual_rel * fro(m))
}

pub fn is_skew_hermitian(m: &ComplexMatrix, tol: &ToleranceProfile) -> Result<bool> {
    require_square("is_skew_hermitian input", m)?;
    Ok(fro(&(m + m.adjoint())) <= tol.residual_rel * fro(m))
}

/// `||Q^H Q - I||_F` for a matrix that should have orthonormal columns.
pub fn orthonormality_residual(q: &ComplexMatrix) -> f64 {
    fro(&(q.adjoint() * q - identity(q.ncols())))
}

/// 2-norm condition number; infinite for singular input.
pub fn cond2(m: &ComplexMatrix) -> Result<f64> {
    let s = singular_values(m)?;
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => Ok(hi / lo),
        (Some(_), Some(_)) => Ok(f64::INFINITY),
        _ => Ok(1.0),
    }
}

pub fn inverse(m: &ComplexMatrix, what: &str) -> Result<ComplexMatrix> {
    require_square(what, m)?;
    m.clone()
        .try_inverse()
        .filter(is_finite)
        .ok_or_else(|| Error::StructureViolation(format!("{what} is singular")))
}
