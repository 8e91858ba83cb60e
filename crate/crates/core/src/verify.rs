//! Independent certification of closed-loop properties.
//!
//! The verifier only reads assembled matrices; it never consults condensed
//! forms or synthesis internals.

use serde::{Deserialize, Serialize};

use crate::analysis::{
    check_condition_i, check_condition_ii_with_grid, check_full_column_rank_ta_a_sb, check_n5_zero,
    compute_ta_sb, is_asymptotically_stable, is_impulse_free, order_range_derivative_only,
    order_range_pd_stabilizing, ConditionVerdict, OrderRange, DEFAULT_GRID_POINTS,
};
use crate::error::{Error, Result};
use crate::model::{DescriptorSystem, PhGenerator};
use crate::numeric::{is_psd, rank_tol, ToleranceProfile, C64};
use crate::synthesis::{choose_k, closed_descriptor, closed_loop, FeedbackDesign, KPolicy, Provenance};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StructureStatus {
    /// Checked numerically against a supplied structure matrix.
    VerifiedWithOracle,
    /// No structure matrix available; preservation follows from the construction.
    ImpliedByTheorem,
    Failed,
}

/// What the caller expects of a closed loop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Expectations {
    pub order: Option<usize>,
    pub structure: Option<StructureStatus>,
    /// Regularity, impulse-freeness and stability are part of the contract.
    pub stability: bool,
}

impl Default for Expectations {
    fn default() -> Self {
        Self {
            order: None,
            structure: None,
            stability: true,
        }
    }
}

impl Expectations {
    pub fn order(r: usize) -> Self {
        Self {
            order: Some(r),
            ..Self::default()
        }
    }

    /// Order assignment alone promises nothing about stability.
    pub fn order_only(r: usize) -> Self {
        Self {
            order: Some(r),
            stability: false,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedValue {
    pub name: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub regular: bool,
    pub impulse_free: bool,
    pub stable: bool,
    pub marginal: bool,
    pub finite_spectrum: Vec<C64>,
    pub order: usize,
    pub order_target: Option<usize>,
    pub stability_expected: bool,
    pub structure_preserved: StructureStatus,
    pub structure_witnesses: Vec<OracleWitness>,
    pub condition_verdicts: Vec<ConditionVerdict>,
    pub residuals: Vec<NamedValue>,
    pub tolerances: ToleranceProfile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<f64>,
}

impl AnalysisReport {
    /// Every expectation met; the dynamic verdicts count only when stability is expected.
    pub fn all_true(&self) -> bool {
        let dynamics = self.regular && self.impulse_free && self.stable && self.condition_verdicts.iter().all(|v| v.holds);
        (dynamics || !self.stability_expected)
            && self.order_target.is_none_or(|r| r == self.order)
            && self.structure_preserved != StructureStatus::Failed
    }
}

pub fn verify_closed_loop(sys_cl: &DescriptorSystem, expectations: &Expectations, tol: &ToleranceProfile) -> Result<AnalysisReport> {
    let impulse = is_impulse_free(&sys_cl.e, &sys_cl.a, tol)?;
    let stability = is_asymptotically_stable(&sys_cl.e, &sys_cl.a, tol)?;
    let order = rank_tol(&sys_cl.e, tol)?;
    let abscissa = stability
        .spectrum
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let residuals = if abscissa.is_finite() {
        vec![NamedValue {
            name: "spectral abscissa".into(),
            value: abscissa,
        }]
    } else {
        Vec::new()
    };
    Ok(AnalysisReport {
        regular: stability.regular,
        impulse_free: impulse.holds,
        stable: stability.stable,
        marginal: stability.marginal,
        finite_spectrum: stability.spectrum,
        order,
        order_target: expectations.order,
        stability_expected: expectations.stability,
        structure_preserved: expectations.structure.unwrap_or(StructureStatus::ImpliedByTheorem),
        structure_witnesses: Vec::new(),
        condition_verdicts: vec![impulse],
        residuals,
        tolerances: *tol,
        timing_ms: None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleWitness {
    pub name: String,
    pub holds: bool,
    pub min_eigenvalue: f64,
    pub hermitian_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureCheck {
    pub status: StructureStatus,
    pub witnesses: Vec<OracleWitness>,
}

fn witness(name: &str, m: &crate::numeric::ComplexMatrix, tol: &ToleranceProfile) -> Result<OracleWitness> {
    let chk = is_psd(m, tol)?;
    Ok(OracleWitness {
        name: name.into(),
        holds: chk.holds,
        min_eigenvalue: chk.min_eigenvalue,
        hermitian_residual: chk.hermitian_residual,
    })
}

pub fn verify_structure_with_oracle(g: &PhGenerator, design: &FeedbackDesign, tol: &ToleranceProfile) -> Result<StructureCheck> {
    let n = g.n();
    let m = g.m();
    if design.k.shape() != (m, m) || design.f.shape() != (m, m) || g.q.shape() != (n, n) {
        return Err(Error::ContractViolation(format!(
            "design gains {:?}/{:?} do not match a system with n = {n}, m = {m}",
            design.k.shape(),
            design.f.shape()
        )));
    }
    let sys = g.realize_unchecked();
    let qh = g.q.adjoint();
    let energy = &qh * (&sys.e + &sys.b * &design.f * &sys.c);
    let mut witnesses = vec![witness("Q^H (E + B F C)", &energy, tol)?];
    let k_psd = is_psd(&design.k, tol)?.holds;
    if k_psd {
        let diss = &qh * (&g.r + &g.g * &design.k * g.g.adjoint()) * &g.q;
        witnesses.push(witness("Q^H (R + G K G^H) Q", &diss, tol)?);
    }
    let status = if witnesses.iter().all(|w| w.holds) {
        StructureStatus::VerifiedWithOracle
    } else {
        StructureStatus::Failed
    };
    Ok(StructureCheck { status, witnesses })
}

/// The contract a design of the given provenance has to meet.
pub fn expectations_for(design: &FeedbackDesign) -> Expectations {
    match (design.provenance, design.target_r) {
        (Provenance::OrderOnly, Some(r)) => Expectations::order_only(r),
        (Provenance::OrderOnly, None) => Expectations {
            stability: false,
            ..Expectations::default()
        },
        (_, Some(r)) => Expectations::order(r),
        (_, None) => Expectations::default(),
    }
}

/// Rebuilds the closed loop from the gains alone and certifies it; with an
/// oracle the structure check replaces the theorem-implied status.
pub fn verify_design(sys: &DescriptorSystem, design: &FeedbackDesign, oracle: Option<&PhGenerator>, tol: &ToleranceProfile) -> Result<AnalysisReport> {
    let mut cl = closed_loop(sys, design)?;
    cl.e = closed_descriptor(sys, &design.f, tol)?.0;
    let mut report = verify_closed_loop(&cl, &expectations_for(design), tol)?;
    if let Some(g) = oracle {
        let check = verify_structure_with_oracle(g, design, tol)?;
        report.structure_preserved = check.status;
        report.structure_witnesses = check.witnesses;
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub budget: usize,
    pub sampled: usize,
    pub stabilizing: usize,
    /// Largest real part of a finite closed-loop eigenvalue, per trial; the
    /// minimum over trials shows how close any gain came to stabilizing.
    pub min_spectral_abscissa: Option<f64>,
    pub max_spectral_abscissa: Option<f64>,
}

/// Samples `budget` positive definite gains (the first is `I`) and counts
/// those that make the closed loop regular, impulse-free and stable.
pub fn necessity_probe(sys: &DescriptorSystem, budget: usize, seed: u64, tol: &ToleranceProfile) -> Result<ProbeReport> {
    let m = sys.m();
    let mut stabilizing = 0;
    let mut lo: Option<f64> = None;
    let mut hi: Option<f64> = None;
    for trial in 0..budget {
        let policy = if trial == 0 {
            KPolicy::Identity
        } else {
            KPolicy::Random {
                seed: seed.wrapping_add(trial as u64),
                epsilon: 1e-2,
            }
        };
        let k = choose_k(m, &policy)?;
        let a = &sys.a - &sys.b * k * &sys.c;
        let st = is_asymptotically_stable(&sys.e, &a, tol)?;
        if st.stable && is_impulse_free(&sys.e, &a, tol)?.holds {
            stabilizing += 1;
        }
        if let Some(x) = st.spectrum.iter().map(|z| z.re).reduce(f64::max) {
            lo = Some(lo.map_or(x, |v| v.min(x)));
            hi = Some(hi.map_or(x, |v| v.max(x)));
        }
    }
    Ok(ProbeReport {
        budget,
        sampled: budget,
        stabilizing,
        min_spectral_abscissa: lo,
        max_spectral_abscissa: hi,
    })
}

/// Open-loop analysis of a system: every Q-free predicate in one record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpenLoopReport {
    pub n: usize,
    pub m: usize,
    pub regular: bool,
    pub impulse_free: bool,
    pub stable: bool,
    pub finite_spectrum: Vec<C64>,
    pub dynamical_order: usize,
    pub condition_i: bool,
    pub condition_ii: bool,
    pub proportional_stabilizable: bool,
    pub ta_a_sb_full_column_rank: bool,
    pub sb_width: usize,
    pub n5_zero: bool,
    pub pd_stabilizable: bool,
    pub order_range_derivative: OrderRange,
    pub order_range_pd: OrderRange,
    pub condition_verdicts: Vec<ConditionVerdict>,
    pub tolerances: ToleranceProfile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<f64>,
}

pub fn analyze_open_loop(sys: &DescriptorSystem, tol: &ToleranceProfile, grid: Option<usize>) -> Result<OpenLoopReport> {
    let impulse = is_impulse_free(&sys.e, &sys.a, tol)?;
    let stability = is_asymptotically_stable(&sys.e, &sys.a, tol)?;
    let ci = check_condition_i(sys, tol)?;
    let cii = check_condition_ii_with_grid(sys, tol, grid.unwrap_or(DEFAULT_GRID_POINTS))?;
    let (fcr, _) = check_full_column_rank_ta_a_sb(sys, tol)?;
    let n5 = check_n5_zero(sys, tol)?;
    let (_, sb) = compute_ta_sb(sys, tol)?;
    let range_d = order_range_derivative_only(sys, tol)?;
    let range_pd = order_range_pd_stabilizing(sys, tol)?;
    Ok(OpenLoopReport {
        n: sys.n(),
        m: sys.m(),
        regular: stability.regular,
        impulse_free: impulse.holds,
        stable: stability.stable,
        finite_spectrum: stability.spectrum,
        dynamical_order: rank_tol(&sys.e, tol)?,
        condition_i: ci.holds,
        condition_ii: cii.holds,
        proportional_stabilizable: ci.holds && cii.holds,
        ta_a_sb_full_column_rank: fcr.holds,
        sb_width: sb.ncols(),
        n5_zero: n5.holds,
        pd_stabilizable: fcr.holds && cii.holds && !range_pd.empty,
        order_range_derivative: range_d,
        order_range_pd: range_pd,
        condition_verdicts: vec![impulse, ci, cii, fcr, n5],
        tolerances: *tol,
        timing_ms: None,
    })
}
