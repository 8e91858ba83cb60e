//! Tolerance-aware dense complex linear algebra.

pub mod linalg;
pub mod spectrum;
mod tolerance;

pub use linalg::{
    block_diag, c, ensure_finite, fro, full_svd, hstack, identity, is_hermitian, is_psd,
    is_skew_hermitian, norm2, nullspace_left, nullspace_right, rank_tol, rank_tol_scaled, singular_values, vstack,
    zeros, ComplexMatrix, FullSvd, PsdCheck, C64,
};
pub use spectrum::{finite_spectrum, Spectrum};
pub use tolerance::ToleranceProfile;
