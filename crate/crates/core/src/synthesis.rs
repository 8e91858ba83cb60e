//! Construction of the proportional gain `K` and derivative gain `F`.

use serde::{Deserialize, Serialize};

use crate::analysis::{
    check_condition_i, check_condition_ii, check_full_column_rank_ta_a_sb, order_range_derivative_only,
    order_range_pd_stabilizing, OrderRange,
};
use crate::condensed::{block, condense_unitary, eliminate, EliminatedCondensedForm};
use crate::error::{Error, Result};
use crate::model::{DescriptorSystem, Sampler};
use crate::numeric::linalg::{cond2, count_above, inverse, rank_threshold};
use crate::numeric::{block_diag, c, full_svd, identity, norm2, rank_tol, rank_tol_scaled, zeros, ComplexMatrix, ToleranceProfile};
use crate::verify::verify_design;

/// Above this condition number of `blkdiag(C11, C33)` the derivative gain
/// would be dominated by rounding error.
pub const MAX_OUTPUT_PIVOT_COND: f64 = 1e8;

/// How the proportional gain is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KPolicy {
    #[default]
    Identity,
    /// `factor * I` with `factor > 0`.
    Scaled { factor: f64 },
    /// `L L^H + epsilon I` with a seeded Gaussian `L`.
    Random { seed: u64, epsilon: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PsdMode {
    /// Leading diagonal ones.
    #[default]
    IdentitySelector,
    /// `V D V^H` with seeded orthonormal `V` and positive diagonal `D`.
    RandomOrthonormal,
}

/// Source of the free positive semidefinite factor in the derivative gain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PsdFactoryPolicy {
    pub mode: PsdMode,
    pub seed: u64,
}

impl PsdFactoryPolicy {
    pub fn random(seed: u64) -> Self {
        Self {
            mode: PsdMode::RandomOrthonormal,
            seed,
        }
    }

    /// A `size x size` Hermitian positive semidefinite matrix of rank `rank`.
    pub fn emit(&self, size: usize, rank: usize) -> Result<ComplexMatrix> {
        if rank > size {
            return Err(Error::ContractViolation(format!(
                "cannot emit rank {rank} semidefinite matrix of size {size}"
            )));
        }
        Ok(match self.mode {
            PsdMode::IdentitySelector => ComplexMatrix::from_fn(size, size, |i, j| {
                if i == j && i < rank {
                    c(1.0, 0.0)
                } else {
                    c(0.0, 0.0)
                }
            }),
            PsdMode::RandomOrthonormal => {
                let mut rng = Sampler::new(self.seed);
                let v = rng.unitary(size).columns(0, rank).into_owned();
                let d = ComplexMatrix::from_fn(rank, rank, |i, j| {
                    if i == j {
                        c(rng.uniform(0.5, 2.0), 0.0)
                    } else {
                        c(0.0, 0.0)
                    }
                });
                let f = &v * d * v.adjoint();
                // Exact Hermitian symmetry.
                (&f + f.adjoint()) * c(0.5, 0.0)
            }
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DesignPolicy {
    pub k: KPolicy,
    pub psd: PsdFactoryPolicy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Proportional,
    OrderOnly,
    ProportionalDerivative,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackDesign {
    pub k: ComplexMatrix,
    pub f: ComplexMatrix,
    pub target_r: Option<usize>,
    pub achieved_r: usize,
    /// `E + B F C`.
    pub closed_e: ComplexMatrix,
    /// `A - B K C`.
    pub closed_a: ComplexMatrix,
    pub provenance: Provenance,
}

pub fn choose_k(m: usize, policy: &KPolicy) -> Result<ComplexMatrix> {
    match *policy {
        KPolicy::Identity => Ok(identity(m)),
        KPolicy::Scaled { factor } => {
            if !(factor.is_finite() && factor > 0.0) {
                return Err(Error::ContractViolation(format!(
                    "gain scale must be positive, got {factor}"
                )));
            }
            Ok(identity(m) * c(factor, 0.0))
        }
        KPolicy::Random { seed, epsilon } => {
            if !(epsilon.is_finite() && epsilon > 0.0) {
                return Err(Error::ContractViolation(format!(
                    "gain shift must be positive, got {epsilon}"
                )));
            }
            let l = Sampler::new(seed).gaussian(m, m);
            let k = &l * l.adjoint() + identity(m) * c(epsilon, 0.0);
            Ok((&k + k.adjoint()) * c(0.5, 0.0))
        }
    }
}

pub fn closed_loop(sys: &DescriptorSystem, design: &FeedbackDesign) -> Result<DescriptorSystem> {
    let m = sys.m();
    if design.k.shape() != (m, m) || design.f.shape() != (m, m) {
        return Err(Error::ContractViolation(format!(
            "gains {:?}/{:?} do not fit a system with {m} inputs",
            design.k.shape(),
            design.f.shape()
        )));
    }
    DescriptorSystem::new(
        &sys.e + &sys.b * &design.f * &sys.c,
        &sys.a - &sys.b * &design.k * &sys.c,
        sys.b.clone(),
        sys.c.clone(),
    )
}

fn require(verdict: crate::analysis::ConditionVerdict) -> Result<()> {
    if verdict.holds {
        Ok(())
    } else {
        Err(Error::PreconditionFailure(Box::new(verdict)))
    }
}

/// `E + B F C` and its order, with the rank cut-off scaled by the size of
/// the terms that cancel. Singular values under that cut-off are removed, so
/// an order of zero yields an exact zero matrix instead of rounding error.
pub fn closed_descriptor(sys: &DescriptorSystem, f: &ComplexMatrix, tol: &ToleranceProfile) -> Result<(ComplexMatrix, usize)> {
    let closed_e = &sys.e + &sys.b * f * &sys.c;
    let scale = norm2(&sys.e)?.max(norm2(&sys.b)? * norm2(f)? * norm2(&sys.c)?);
    let r = rank_tol_scaled(&closed_e, scale, tol)?;
    if r == rank_tol(&closed_e, tol)? {
        return Ok((closed_e, r));
    }
    let svd = full_svd(&closed_e)?;
    let s = ComplexMatrix::from_fn(r, r, |i, j| if i == j { c(svd.sigma[i], 0.0) } else { c(0.0, 0.0) });
    let trimmed = svd.u.columns(0, r) * s * svd.v.columns(0, r).adjoint();
    Ok((trimmed, r))
}

fn assemble(
    sys: &DescriptorSystem,
    k: ComplexMatrix,
    f: ComplexMatrix,
    target_r: Option<usize>,
    provenance: Provenance,
    tol: &ToleranceProfile,
) -> Result<FeedbackDesign> {
    let (closed_e, achieved_r) = closed_descriptor(sys, &f, tol)?;
    let closed_a = &sys.a - &sys.b * &k * &sys.c;
    if let Some(r) = target_r {
        if achieved_r != r {
            return Err(Error::Numeric(format!(
                "derivative gain achieved order {achieved_r} instead of {r}"
            )));
        }
    }
    Ok(FeedbackDesign {
        k,
        f,
        target_r,
        achieved_r,
        closed_e,
        closed_a,
        provenance,
    })
}

pub fn synthesize_proportional(sys: &DescriptorSystem, tol: &ToleranceProfile, policy: &DesignPolicy) -> Result<FeedbackDesign> {
    require(check_condition_i(sys, tol)?)?;
    require(check_condition_ii(sys, tol)?)?;
    let m = sys.m();
    let k = choose_k(m, &policy.k)?;
    assemble(sys, k, zeros(m, m), None, Provenance::Proportional, tol)
}

fn check_in_range(range: &OrderRange, r: usize) -> Result<()> {
    if range.empty {
        return Err(Error::EmptyOrderRange {
            r_min: range.r_min,
            r_max: range.r_max,
        });
    }
    if !range.contains(r) {
        return Err(Error::OrderOutOfRange {
            r,
            r_min: range.r_min,
            r_max: range.r_max,
        });
    }
    Ok(())
}

fn eliminated(sys: &DescriptorSystem, range: &OrderRange, tol: &ToleranceProfile) -> Result<EliminatedCondensedForm> {
    let el = eliminate(&condense_unitary(sys, tol)?, tol)?;
    let d = el.dims;
    let br = range.basis_ranks;
    if d.n2 != br.rank_e_b - br.rank_b || d.n1 + d.n2 + d.n3 != br.rank_e_b {
        return Err(Error::StructureViolation(format!(
            "condensed block sizes {:?} disagree with rank[E B] = {} and rank B = {}",
            d.as_array(),
            br.rank_e_b,
            br.rank_b
        )));
    }
    Ok(el)
}

/// Derivative gain in original coordinates from the free factor `calf`
/// of size `n1 + n3`.
fn derivative_gain(el: &EliminatedCondensedForm, calf: &ComplexMatrix) -> Result<ComplexMatrix> {
    let d = el.dims;
    let (n1, n3) = (d.n1, d.n3);
    let m = d.m();
    let c11 = el.c_block(0, 0);
    let c33 = el.c_block(2, 2);
    let cblk = block_diag(&[&c11, &c33]);
    if n1 + n3 > 0 && cond2(&cblk)? > MAX_OUTPUT_PIVOT_COND {
        return Err(Error::StructureViolation(format!(
            "output pivot blocks are too ill-conditioned (cond {:.3e})",
            cond2(&cblk)?
        )));
    }
    let mut coupling = zeros(n1 + n3, n1 + n3);
    if n1 > 0 {
        let b11i = inverse(&el.b_block(0, 0), "B11")?;
        let g = c11.adjoint() * b11i * el.e_block(0, 0);
        coupling.view_mut((0, 0), (n1, n1)).copy_from(&g);
    }
    let mid = calf - coupling;
    let fb = if n1 + n3 > 0 {
        inverse(&cblk.adjoint(), "blkdiag(C11, C33)^H")? * mid * inverse(&cblk, "blkdiag(C11, C33)")?
    } else {
        zeros(0, 0)
    };
    let mut fw = zeros(m, m);
    for (bi, fi) in [(0usize, 0..n1), (2usize, n1..n1 + n3)] {
        for (bj, fj) in [(0usize, 0..n1), (2usize, n1..n1 + n3)] {
            let piece = block(&fb, fi.clone(), fj);
            let (ri, rj) = (d.input(bi), d.input(bj));
            fw.view_mut((ri.start, rj.start), (ri.len(), rj.len())).copy_from(&piece);
        }
    }
    Ok(&el.w * fw * el.w.adjoint())
}

/// Structure-preserving derivative feedback with prescribed order `r`; `K = 0`.
pub fn synthesize_order_only(sys: &DescriptorSystem, r: usize, tol: &ToleranceProfile, policy: &DesignPolicy) -> Result<FeedbackDesign> {
    let range = order_range_derivative_only(sys, tol)?;
    check_in_range(&range, r)?;
    let el = eliminated(sys, &range, tol)?;
    let d = el.dims;
    let calf = policy.psd.emit(d.n1 + d.n3, r - d.n2)?;
    let f = derivative_gain(&el, &calf)?;
    let m = sys.m();
    assemble(sys, zeros(m, m), f, Some(r), Provenance::OrderOnly, tol)
}

/// Proportional-derivative feedback that stabilizes with prescribed order `r`.
pub fn synthesize_pd(sys: &DescriptorSystem, r: usize, tol: &ToleranceProfile, policy: &DesignPolicy) -> Result<FeedbackDesign> {
    require(check_full_column_rank_ta_a_sb(sys, tol)?.0)?;
    require(check_condition_ii(sys, tol)?)?;
    let range = order_range_pd_stabilizing(sys, tol)?;
    check_in_range(&range, r)?;
    let el = eliminated(sys, &range, tol)?;
    let d = el.dims;
    let size = d.n1 + d.n3;
    let calf = if d.n5 == 0 {
        policy.psd.emit(size, r - d.n2)?
    } else {
        // Rotate the range of [C11^H B11^-1 A15; C33^H B33^-1 A35] onto the leading n5 rows.
        let mut x = zeros(size, d.n5);
        if d.n1 > 0 {
            let top = el.c_block(0, 0).adjoint() * inverse(&el.b_block(0, 0), "B11")? * el.a_block(0, 4);
            x.view_mut((0, 0), (d.n1, d.n5)).copy_from(&top);
        }
        if d.n3 > 0 {
            let bottom = el.c_block(2, 2).adjoint() * inverse(&el.b_block(2, 2), "B33")? * el.a_block(2, 4);
            x.view_mut((d.n1, 0), (d.n3, d.n5)).copy_from(&bottom);
        }
        let svd = full_svd(&x)?;
        let cut = rank_threshold(norm2(&x)?, size, d.n5, tol);
        if count_above(&svd.sigma, cut) != d.n5 {
            return Err(Error::StructureViolation(
                "coupling of the fifth block into the actuated blocks lost rank".into(),
            ));
        }
        let tail = policy.psd.emit(size - d.n5, r - d.n2)?;
        let padded = block_diag(&[&zeros(d.n5, d.n5), &tail]);
        // U~ = svd.u^H, so U~^H diag(0, F33) U~ = svd.u diag(0, F33) svd.u^H.
        &svd.u * padded * svd.u.adjoint()
    };
    let f = derivative_gain(&el, &calf)?;
    let k = choose_k(sys.m(), &policy.k)?;
    let design = assemble(sys, k, f, Some(r), Provenance::ProportionalDerivative, tol)?;
    let report = verify_design(sys, &design, None, tol)?;
    if !report.all_true() {
        return Err(Error::Numeric(format!(
            "closed loop failed verification: regular={}, impulse_free={}, stable={}, order={}",
            report.regular, report.impulse_free, report.stable, report.order
        )));
    }
    Ok(design)
}
