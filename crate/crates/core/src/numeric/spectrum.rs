//! Finite generalized eigenvalues of a square pencil `s E - A`.
//!
//! Infinite eigenvalues are deflated exactly with rank-revealing
//! compressions before any eigenvalue is computed, so impulsive
//! (higher-index) structure never leaks into the finite spectrum as huge
//! spurious eigenvalues. Each deflation step either proves the pencil
//! singular (a block row or column of `s E - A` vanishes identically) or
//! shrinks it while preserving `det(s E - A)` up to a nonzero constant.

use super::linalg::{
    c, count_above, ensure_finite, full_svd, norm2, rank_threshold, sub, ComplexMatrix, C64,
};
use super::ToleranceProfile;
use crate::error::{Error, Result};

/// Finite spectrum of a pencil, or the verdict that it is singular.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub regular: bool,
    /// Finite eigenvalues with algebraic multiplicity, sorted by real then
    /// imaginary part. Empty when the pencil is singular.
    pub eigenvalues: Vec<C64>,
}

struct Floors {
    e: f64,
    a: f64,
}

pub fn finite_spectrum(e: &ComplexMatrix, a: &ComplexMatrix, tol: &ToleranceProfile) -> Result<Spectrum> {
    if !e.is_square() || e.shape() != a.shape() {
        return Err(Error::ContractViolation(format!(
            "pencil needs square E and A of equal size, got {:?} and {:?}",
            e.shape(),
            a.shape()
        )));
    }
    ensure_finite("E", e)?;
    ensure_finite("A", a)?;
    let n = e.nrows();
    let floors = Floors {
        e: tol.rank_rel * n as f64 * norm2(e)?,
        a: tol.rank_rel * n as f64 * norm2(a)?,
    };
    Ok(match deflate(e.clone(), a.clone(), &floors, tol)? {
        Some(mut eigenvalues) => {
            eigenvalues.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
            Spectrum {
                regular: true,
                eigenvalues,
            }
        }
        None => Spectrum {
            regular: false,
            eigenvalues: Vec::new(),
        },
    })
}

fn dense_eigenvalues(m: ComplexMatrix) -> Result<Vec<C64>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    super::linalg::to_faer(&m)
        .eigenvalues()
        .map_err(|e| Error::Numeric(format!("eigenvalue iteration did not converge: {e:?}")))
}

/// Eigenvalues of `diag(sigma)^{-1} a`.
fn scaled_eigenvalues(sigma: &[f64], a: &ComplexMatrix) -> Result<Vec<C64>> {
    let m = ComplexMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] / sigma[i]);
    dense_eigenvalues(m)
}

fn deflate(mut e: ComplexMatrix, mut a: ComplexMatrix, floors: &Floors, tol: &ToleranceProfile) -> Result<Option<Vec<C64>>> {
    loop {
        let k = e.nrows();
        if k == 0 {
            return Ok(Some(Vec::new()));
        }

        // E = U diag(sigma_r, 0) V^H
        let svd = full_svd(&e)?;
        let smax = svd.sigma.first().copied().unwrap_or(0.0);
        let thr_e = rank_threshold(smax, k, k, tol).max(floors.e);
        let r = count_above(&svd.sigma, thr_e);
        let at = svd.u.adjoint() * &a * &svd.v;
        if r == k {
            return scaled_eigenvalues(&svd.sigma, &at).map(Some);
        }

        let thr_a = rank_threshold(norm2(&at)?, k, k, tol).max(floors.a);
        let a22 = sub(&at, r, r, k - r, k - r);
        let s22 = full_svd(&a22)?;
        let q = count_above(&s22.sigma, thr_a);
        let p = k - r - q;
        let a12 = sub(&at, 0, r, r, k - r) * &s22.v;
        let a21 = s22.u.adjoint() * sub(&at, r, 0, k - r, r);

        // Schur complement against the nonsingular part of A22.
        let a12a = sub(&a12, 0, 0, r, q);
        let a21a = ComplexMatrix::from_fn(q, r, |i, j| a21[(i, j)] / s22.sigma[i]);
        let a11 = sub(&at, 0, 0, r, r) - a12a * a21a;

        if p == 0 {
            return scaled_eigenvalues(&svd.sigma[..r], &a11).map(Some);
        }
        if p > r {
            return Ok(None);
        }

        // Rows and columns of s E - A that are constant and must be full rank.
        let a21b = sub(&a21, q, 0, p, r);
        let a12b = sub(&a12, 0, q, r, p);
        let s21 = full_svd(&a21b)?;
        let s12 = full_svd(&a12b)?;
        if count_above(&s21.sigma, thr_a) < p || count_above(&s12.sigma, thr_a) < p {
            return Ok(None);
        }
        // Column compression of A21b and row compression of A12b, moving
        // their rank into the trailing p coordinates of block 1.
        let col_perm = ComplexMatrix::from_fn(r, r, |i, j| s21.v[(i, (j + p) % r)]);
        let row_perm = ComplexMatrix::from_fn(r, r, |i, j| s12.u[(i, (j + p) % r)]).adjoint();
        let e11 = ComplexMatrix::from_fn(r, r, |i, j| {
            if i == j {
                c(svd.sigma[i], 0.0)
            } else {
                c(0.0, 0.0)
            }
        });
        let e_next = &row_perm * e11 * &col_perm;
        let a_next = &row_perm * a11 * &col_perm;
        e = sub(&e_next, 0, 0, r - p, r - p);
        a = sub(&a_next, 0, 0, r - p, r - p);
    }
}
