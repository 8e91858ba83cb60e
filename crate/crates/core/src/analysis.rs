//! Decision procedures that read only `(E, A, B, C)`.
//!
//! Every rank comparison goes through [`rank_tol`] with the caller's
//! [`ToleranceProfile`], so verdicts from different predicates on the same
//! system are mutually consistent.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::DescriptorSystem;
use crate::numeric::{
    c, finite_spectrum, hstack, identity, norm2, nullspace_left, nullspace_right, rank_tol, vstack,
    zeros, ComplexMatrix, ToleranceProfile, C64,
};

/// Magnitudes sampled on the positive imaginary axis when the open-loop
/// pencil is singular. Each magnitude is tested at `+i|s|` and `-i|s|`.
pub const DEFAULT_GRID_POINTS: usize = 512;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankCheck {
    pub label: String,
    pub computed: usize,
    pub required: usize,
}

impl RankCheck {
    pub fn new(label: impl Into<String>, computed: usize, required: usize) -> Self {
        Self {
            label: label.into(),
            computed,
            required,
        }
    }

    pub fn passes(&self) -> bool {
        self.computed == self.required
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckMethod {
    /// A finite set of rank identities.
    RankIdentity,
    /// Rank tests at `s = 0` and at every finite eigenvalue near the axis.
    EigenvalueCandidates,
    /// Rank tests on a logarithmic grid along the imaginary axis.
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionVerdict {
    pub name: String,
    pub holds: bool,
    pub ranks: Vec<RankCheck>,
    /// Points `s` where a rank test failed, in scan order.
    pub witnesses: Vec<C64>,
    pub method: CheckMethod,
    /// False when the verdict rests on sampling.
    pub certified: bool,
    pub tolerances: ToleranceProfile,
}

impl ConditionVerdict {
    fn new(
        name: &str,
        ranks: Vec<RankCheck>,
        witnesses: Vec<C64>,
        method: CheckMethod,
        certified: bool,
        tol: &ToleranceProfile,
    ) -> Self {
        let holds = witnesses.is_empty() && ranks.iter().all(RankCheck::passes);
        Self {
            name: name.to_string(),
            holds,
            ranks,
            witnesses,
            method,
            certified,
            tolerances: *tol,
        }
    }

    fn identity(name: &str, ranks: Vec<RankCheck>, tol: &ToleranceProfile) -> Self {
        Self::new(name, ranks, Vec::new(), CheckMethod::RankIdentity, true, tol)
    }

    /// One-line human readable account of the verdict.
    pub fn summary(&self) -> String {
        let mut out = format!("{} {}", self.name, if self.holds { "holds" } else { "fails" });
        for rc in self.ranks.iter().filter(|rc| !rc.passes()) {
            let _ = write!(out, "; {} = {} (required {})", rc.label, rc.computed, rc.required);
        }
        if let Some(w) = self.witnesses.first() {
            let _ = write!(out, "; witness s = {:+.6e}{:+.6e}i", w.re, w.im);
        }
        if !self.certified {
            out.push_str(" [sampled, not certified]");
        }
        out
    }
}

/// Ranks underlying an [`OrderRange`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisRanks {
    pub rank_e_b: usize,
    pub rank_e_c: usize,
    pub rank_b: usize,
    pub rank_ta_a_sb: Option<usize>,
}

/// Feasible dynamical orders `r_min..=r_max`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderRange {
    pub r_min: usize,
    pub r_max: usize,
    pub basis_ranks: BasisRanks,
    pub empty: bool,
}

impl OrderRange {
    fn new(r_min: usize, r_max: isize, basis_ranks: BasisRanks) -> Self {
        let empty = r_max < r_min as isize;
        Self {
            r_min,
            r_max: r_max.max(0) as usize,
            basis_ranks,
            empty,
        }
    }

    pub fn contains(&self, r: usize) -> bool {
        !self.empty && (self.r_min..=self.r_max).contains(&r)
    }

    pub fn orders(&self) -> Vec<usize> {
        if self.empty {
            Vec::new()
        } else {
            (self.r_min..=self.r_max).collect()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub stable: bool,
    pub regular: bool,
    /// Some eigenvalue has real part in `(-stability_margin, 0)`.
    pub marginal: bool,
    pub spectrum: Vec<C64>,
}

fn rank(m: &ComplexMatrix, tol: &ToleranceProfile) -> Result<usize> {
    rank_tol(m, tol)
}

pub fn is_regular(e: &ComplexMatrix, a: &ComplexMatrix, tol: &ToleranceProfile) -> Result<bool> {
    Ok(finite_spectrum(e, a, tol)?.regular)
}

pub fn is_impulse_free(e: &ComplexMatrix, a: &ComplexMatrix, tol: &ToleranceProfile) -> Result<ConditionVerdict> {
    if !e.is_square() || e.shape() != a.shape() {
        return Err(crate::Error::ContractViolation(format!(
            "pencil needs square E and A of equal size, got {:?} and {:?}",
            e.shape(),
            a.shape()
        )));
    }
    let n = e.nrows();
    let stack = vstack(&[&hstack(&[e, &zeros(n, n)]), &hstack(&[a, e])]);
    let required = n + rank(e, tol)?;
    Ok(ConditionVerdict::identity(
        "impulse-free",
        vec![RankCheck::new("rank[E 0; A E]", rank(&stack, tol)?, required)],
        tol,
    ))
}

pub fn is_asymptotically_stable(e: &ComplexMatrix, a: &ComplexMatrix, tol: &ToleranceProfile) -> Result<StabilityVerdict> {
    let spec = finite_spectrum(e, a, tol)?;
    let margin = tol.stability_margin;
    let stable = spec.regular && spec.eigenvalues.iter().all(|z| z.re < -margin);
    let marginal = spec.eigenvalues.iter().any(|z| z.re > -margin && z.re < 0.0);
    Ok(StabilityVerdict {
        stable,
        regular: spec.regular,
        marginal,
        spectrum: spec.eigenvalues,
    })
}

pub fn check_condition_i(sys: &DescriptorSystem, tol: &ToleranceProfile) -> Result<ConditionVerdict> {
    let n = sys.n();
    let m = sys.m();
    let stack = vstack(&[
        &hstack(&[&sys.e, &sys.a]),
        &hstack(&[&zeros(n, n), &sys.e]),
        &hstack(&[&zeros(m, n), &sys.c]),
    ]);
    let required = n + rank(&sys.e, tol)?;
    Ok(ConditionVerdict::identity(
        "condition (i)",
        vec![RankCheck::new("rank[E A; 0 E; 0 C]", rank(&stack, tol)?, required)],
        tol,
    ))
}

pub fn check_condition_ii(sys: &DescriptorSystem, tol: &ToleranceProfile) -> Result<ConditionVerdict> {
    check_condition_ii_with_grid(sys, tol, DEFAULT_GRID_POINTS)
}

fn axis_ranks(sys: &DescriptorSystem, s: C64, tol: &ToleranceProfile) -> Result<(usize, usize)> {
    let pencil = &sys.e * s - &sys.a;
    Ok((
        rank(&hstack(&[&pencil, &sys.b]), tol)?,
        rank(&vstack(&[&pencil, &sys.c]), tol)?,
    ))
}

fn fmt_s(s: C64) -> String {
    if s.im == 0.0 {
        "0".to_string()
    } else {
        format!("{:+.6e}i", s.im)
    }
}

/// Imaginary-axis points to test after `s = 0`, ordered by `|s|`.
fn axis_candidates(sys: &DescriptorSystem, tol: &ToleranceProfile, grid: usize) -> Result<(Vec<C64>, CheckMethod)> {
    let spec = finite_spectrum(&sys.e, &sys.a, tol)?;
    let mut pts: Vec<f64> = if spec.regular {
        spec.eigenvalues
            .iter()
            .filter(|z| z.re.abs() <= tol.stability_margin * (1.0 + z.norm()))
            .map(|z| z.im)
            .collect()
    } else {
        let ne = norm2(&sys.e)?;
        let na = norm2(&sys.a)?;
        let scale = if ne > 0.0 && na > 0.0 { na / ne } else { 1.0 };
        let count = grid.max(1);
        let mut v = Vec::with_capacity(2 * count);
        for k in 0..count {
            let t = if count == 1 { 0.5 } else { k as f64 / (count - 1) as f64 };
            let mag = scale * 10f64.powf(-6.0 + 12.0 * t);
            v.push(mag);
            v.push(-mag);
        }
        v
    };
    // Drop points indistinguishable from s = 0 or from an earlier point.
    pts.retain(|w| w.abs() > f64::EPSILON);
    pts.sort_by(|x, y| x.abs().total_cmp(&y.abs()).then(y.total_cmp(x)));
    pts.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * (1.0 + x.abs()));
    let method = if spec.regular {
        CheckMethod::EigenvalueCandidates
    } else {
        CheckMethod::Sampled
    };
    Ok((pts.into_iter().map(|w| c(0.0, w)).collect(), method))
}

/// Both rank tests of condition (ii) at `s = 0` only. Passing this certifies
/// a nonsingular structure matrix for port-Hamiltonian inputs.
pub fn check_condition_ii_at_zero(sys: &DescriptorSystem, tol: &ToleranceProfile) -> Result<ConditionVerdict> {
    let n = sys.n();
    let (rc, ro) = axis_ranks(sys, c(0.0, 0.0), tol)?;
    let witnesses = if rc != n || ro != n { vec![c(0.0, 0.0)] } else { Vec::new() };
    let ranks = vec![
        RankCheck::new("rank[sE-A, B] at s=0", rc, n),
        RankCheck::new("rank[sE-A; C] at s=0", ro, n),
    ];
    Ok(ConditionVerdict::new("condition (ii) at s=0", ranks, witnesses, CheckMethod::RankIdentity, true, tol))
}

pub fn check_condition_ii_with_grid(sys: &DescriptorSystem, tol: &ToleranceProfile, grid: usize) -> Result<ConditionVerdict> {
    let n = sys.n();
    let mut ranks = Vec::new();
    let mut witnesses = Vec::new();
    let mut test = |s: C64, always_record: bool, ranks: &mut Vec<RankCheck>| -> Result<()> {
        let (rc, ro) = axis_ranks(sys, s, tol)?;
        if always_record || rc != n || ro != n {
            let at = fmt_s(s);
            ranks.push(RankCheck::new(format!("rank[sE-A, B] at s={at}"), rc, n));
            ranks.push(RankCheck::new(format!("rank[sE-A; C] at s={at}"), ro, n));
        }
        if rc != n || ro != n {
            witnesses.push(s);
        }
        Ok(())
    };
    test(c(0.0, 0.0), true, &mut ranks)?;
    let (candidates, method) = axis_candidates(sys, tol, grid)?;
    for s in candidates {
        test(s, false, &mut ranks)?;
    }
    let certified = method != CheckMethod::Sampled;
    Ok(ConditionVerdict::new("condition (ii)", ranks, witnesses, method, certified, tol))
}

/// `T_a` and `S_b`, orthonormal bases used by the stabilizability test.
pub fn compute_ta_sb(sys: &DescriptorSystem, tol: &ToleranceProfile) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let s_c = nullspace_right(&sys.c, tol)?;
    let ta = if s_c.ncols() == 0 {
        identity(sys.n())
    } else {
        nullspace_left(&(&sys.e * s_c), tol)?
    };
    let w_inf = nullspace_left(&hstack(&[&sys.e, &sys.b]), tol)?;
    let sb = nullspace_right(&vstack(&[&sys.e, &(w_inf.adjoint() * &sys.a), &sys.c]), tol)?;
    Ok((ta, sb))
}

/// Verdict on full column rank of `T_a^H A S_b`, together with its rank.
pub fn check_full_column_rank_ta_a_sb(sys: &DescriptorSystem, tol: &ToleranceProfile) -> Result<(ConditionVerdict, usize)> {
    let (ta, sb) = compute_ta_sb(sys, tol)?;
    let width = sb.ncols();
    let r = if width == 0 || ta.ncols() == 0 {
        0
    } else {
        rank(&(ta.adjoint() * &sys.a * &sb), tol)?
    };
    let verdict = ConditionVerdict::identity(
        "full column rank of Ta^H A Sb",
        vec![RankCheck::new("rank(Ta^H A Sb)", r, width)],
        tol,
    );
    Ok((verdict, r))
}

fn basis_ranks(sys: &DescriptorSystem, tol: &ToleranceProfile) -> Result<BasisRanks> {
    Ok(BasisRanks {
        rank_e_b: rank(&hstack(&[&sys.e, &sys.b]), tol)?,
        rank_e_c: rank(&vstack(&[&sys.e, &sys.c]), tol)?,
        rank_b: rank(&sys.b, tol)?,
        rank_ta_a_sb: None,
    })
}

/// Orders reachable by derivative feedback that keeps the structure.
pub fn order_range_derivative_only(sys: &DescriptorSystem, tol: &ToleranceProfile) -> Result<OrderRange> {
    let br = basis_ranks(sys, tol)?;
    Ok(OrderRange::new(br.rank_e_b.saturating_sub(br.rank_b), br.rank_e_b as isize, br))
}

/// Orders reachable by proportional-derivative feedback that also stabilizes.
pub fn order_range_pd_stabilizing(sys: &DescriptorSystem, tol: &ToleranceProfile) -> Result<OrderRange> {
    let mut br = basis_ranks(sys, tol)?;
    let (_, r_ta) = check_full_column_rank_ta_a_sb(sys, tol)?;
    br.rank_ta_a_sb = Some(r_ta);
    Ok(OrderRange::new(
        br.rank_e_b.saturating_sub(br.rank_b),
        br.rank_e_b as isize - r_ta as isize,
        br,
    ))
}

/// Rank identity that is equivalent to an empty fifth block in the condensed form.
pub fn check_n5_zero(sys: &DescriptorSystem, tol: &ToleranceProfile) -> Result<ConditionVerdict> {
    let n = sys.n();
    let m = sys.m();
    let stack = vstack(&[
        &hstack(&[&sys.e, &zeros(n, n), &zeros(n, m)]),
        &hstack(&[&sys.a, &sys.e, &sys.b]),
        &hstack(&[&sys.c, &zeros(m, n), &zeros(m, m)]),
    ]);
    let required = n + rank(&hstack(&[&sys.e, &sys.b]), tol)?;
    Ok(ConditionVerdict::identity(
        "n5 = 0",
        vec![RankCheck::new("rank[E 0 0; A E B; C 0 0]", rank(&stack, tol)?, required)],
        tol,
    ))
}
