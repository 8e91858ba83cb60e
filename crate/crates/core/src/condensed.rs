//! Unitary and eliminated condensed forms of a port-Hamiltonian descriptor
//! system with nonsingular (but unknown) structure matrix.
//!
//! The unitary form is reached by six rank-revealing SVD steps. Blocks of
//! `C` that vanish only because `C = B^H Q` and `Q^H E = E^H Q` are measured
//! against `residual_rel * |C|` and then set to exact zeros, so every later
//! stage works with exact block patterns.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::analysis::{check_condition_ii_at_zero, RankCheck};
use crate::error::{Error, Result};
use crate::model::DescriptorSystem;
use crate::numeric::linalg::{count_above, cond2, inverse, rank_threshold, sub};
use crate::numeric::{block_diag, fro, full_svd, identity, norm2, singular_values, ComplexMatrix, ToleranceProfile};

/// Block sizes of the condensed forms: states split as `n1..n5`, inputs as `(n1, m1, n3)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockDims {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub n4: usize,
    pub n5: usize,
    pub m1: usize,
}

impl BlockDims {
    pub fn n(&self) -> usize {
        self.n1 + self.n2 + self.n3 + self.n4 + self.n5
    }

    pub fn m(&self) -> usize {
        self.n1 + self.m1 + self.n3
    }

    pub fn as_array(&self) -> [usize; 5] {
        [self.n1, self.n2, self.n3, self.n4, self.n5]
    }

    /// State block offsets `[0, n1, n1+n2, ...]`.
    pub fn state_offsets(&self) -> [usize; 6] {
        let d = self.as_array();
        let mut o = [0; 6];
        for i in 0..5 {
            o[i + 1] = o[i] + d[i];
        }
        o
    }

    pub fn input_sizes(&self) -> [usize; 3] {
        [self.n1, self.m1, self.n3]
    }

    /// Rows or columns of state block `i` (0-based).
    pub fn state(&self, i: usize) -> Range<usize> {
        let o = self.state_offsets();
        o[i]..o[i + 1]
    }

    /// Rows or columns of input block `j` (0-based, order `n1, m1, n3`).
    pub fn input(&self, j: usize) -> Range<usize> {
        let s = self.input_sizes();
        let start: usize = s[..j].iter().sum();
        start..start + s[j]
    }
}

pub fn block(m: &ComplexMatrix, rows: Range<usize>, cols: Range<usize>) -> ComplexMatrix {
    sub(m, rows.start, cols.start, rows.len(), cols.len())
}

fn set_block(m: &mut ComplexMatrix, rows: Range<usize>, cols: Range<usize>, value: &ComplexMatrix) {
    m.view_mut((rows.start, cols.start), (rows.len(), cols.len())).copy_from(value);
}

/// Zero-pattern residual measured before hard-zeroing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternResidual {
    pub label: String,
    /// Frobenius mass outside the pattern, relative to the matrix norm.
    pub relative: f64,
    /// True when exceeding `residual_rel` rejects the input.
    pub gated: bool,
}

/// Relative mass of `m` outside the allowed blocks, and `m` with that mass removed.
fn split_pattern(
    m: &ComplexMatrix,
    rows: &[Range<usize>],
    cols: &[Range<usize>],
    allowed: impl Fn(usize, usize) -> bool,
    scale: f64,
) -> (f64, ComplexMatrix) {
    let mut out = m.clone();
    let mut mass = 0.0;
    for (i, r) in rows.iter().enumerate() {
        for (j, cr) in cols.iter().enumerate() {
            if allowed(i, j) || r.is_empty() || cr.is_empty() {
                continue;
            }
            let blk = block(m, r.clone(), cr.clone());
            mass += fro(&blk).powi(2);
            out.view_mut((r.start, cr.start), (r.len(), cr.len())).fill(crate::numeric::c(0.0, 0.0));
        }
    }
    (relative(mass.sqrt(), scale), out)
}

fn relative(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// Pattern of the unitary form, as `(E, B, A, C)` allowed-block predicates.
mod pattern {
    pub fn e_unitary(i: usize, j: usize) -> bool {
        i < 2 && j < 2
    }
    pub fn b_unitary(i: usize, j: usize) -> bool {
        matches!((i, j), (0, 0) | (0, 2) | (1, 2) | (2, 2))
    }
    pub fn a_unitary(i: usize, j: usize) -> bool {
        !matches!((i, j), (3, 4) | (4, 3) | (4, 4))
    }
    pub fn c_unitary(i: usize, j: usize) -> bool {
        matches!((i, j), (0, 0) | (2, 0) | (2, 1) | (2, 2))
    }
    pub fn e_eliminated(i: usize, j: usize) -> bool {
        i == j && i < 2
    }
    pub fn bc_eliminated(i: usize, j: usize) -> bool {
        matches!((i, j), (0, 0) | (2, 2))
    }
    pub fn a_eliminated(i: usize, j: usize) -> bool {
        match (i, j) {
            (3, 3) => true,
            (3, _) | (_, 3) | (4, 4) => false,
            _ => true,
        }
    }
}

/// `U E V`, `U A V`, `U B W`, `W^H C V` with unitary `U`, `V`, `W`.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryCondensedForm {
    pub u: ComplexMatrix,
    pub v: ComplexMatrix,
    pub w: ComplexMatrix,
    pub dims: BlockDims,
    pub e: ComplexMatrix,
    pub a: ComplexMatrix,
    pub b: ComplexMatrix,
    pub c: ComplexMatrix,
    pub residuals: Vec<PatternResidual>,
}

/// `S E T`, `S A T`, `S B W`, `W^H C T` with nonsingular `S`, `T` and unitary `W`.
#[derive(Clone, Debug, PartialEq)]
pub struct EliminatedCondensedForm {
    pub s: ComplexMatrix,
    pub t: ComplexMatrix,
    pub w: ComplexMatrix,
    pub dims: BlockDims,
    pub e: ComplexMatrix,
    pub a: ComplexMatrix,
    pub b: ComplexMatrix,
    pub c: ComplexMatrix,
    pub cond_s: f64,
    pub cond_t: f64,
    pub residuals: Vec<PatternResidual>,
}

struct Norms {
    e: f64,
    a: f64,
    b: f64,
    c: f64,
}

struct Cuts {
    e: f64,
    a: f64,
    b: f64,
    c: f64,
}

/// SVD of a sub-block with the rank cut scaled by the parent matrix, so
/// rounding noise in a nearly empty block is never promoted to rank.
fn split_rank(m: &ComplexMatrix, cut: f64) -> Result<(crate::numeric::FullSvd, usize)> {
    let svd = full_svd(m)?;
    let r = count_above(&svd.sigma, cut);
    Ok((svd, r))
}

fn rank_at(m: &ComplexMatrix, cut: f64) -> Result<usize> {
    Ok(count_above(&singular_values(m)?, cut))
}

/// Moves the leading `k` columns of `v` to the back.
fn rotate_columns(v: &ComplexMatrix, k: usize) -> ComplexMatrix {
    let n = v.ncols();
    ComplexMatrix::from_fn(v.nrows(), n, |i, j| v[(i, (j + k) % n.max(1))])
}

pub fn condense_unitary(sys: &DescriptorSystem, tol: &ToleranceProfile) -> Result<UnitaryCondensedForm> {
    let gate = check_condition_ii_at_zero(sys, tol)?;
    if !gate.holds {
        return Err(Error::PreconditionFailure(Box::new(gate)));
    }
    let n = sys.n();
    let m = sys.m();
    let norms = Norms {
        e: norm2(&sys.e)?,
        a: norm2(&sys.a)?,
        b: norm2(&sys.b)?,
        c: norm2(&sys.c)?,
    };
    let cuts = Cuts {
        e: rank_threshold(norms.e, n, n, tol),
        a: rank_threshold(norms.a, n, n, tol),
        b: rank_threshold(norms.b, n, m, tol),
        c: rank_threshold(norms.c, m, n, tol),
    };

    // Step 1: E = U1^H diag(Sigma_E, 0) V1^H.
    let (s1, re) = split_rank(&sys.e, cuts.e)?;
    let mut u = s1.u.adjoint();
    let mut v = s1.v;
    let mut w = identity(m);
    let cur_b = |u: &ComplexMatrix, w: &ComplexMatrix| u * &sys.b * w;
    let cur_c = |w: &ComplexMatrix, v: &ComplexMatrix| w.adjoint() * &sys.c * v;

    // Step 2: compress the rows of B below rank(E) into n3 rows and the
    // trailing n3 input columns.
    let b1 = cur_b(&u, &w);
    let (s2, n3) = split_rank(&block(&b1, re..n, 0..m), cuts.b)?;
    u = block_diag(&[&identity(re), &s2.u.adjoint()]) * u;
    w = rotate_columns(&s2.v, n3);

    // Step 3: column compression of [C22 C23] into C33.
    let c2 = cur_c(&w, &v);
    let (s3, r3) = split_rank(&block(&c2, m - n3..m, re..n), cuts.c)?;
    if r3 != n3 {
        return Err(Error::StructureViolation(format!(
            "trailing output block has rank {r3}, expected {n3}"
        )));
    }
    v *= block_diag(&[&identity(re), &s3.v]);

    // Step 4: SVD of the leading input block of B.
    let b3 = cur_b(&u, &w);
    let (s4, n1) = split_rank(&block(&b3, 0..re, 0..m - n3), cuts.b)?;
    u = block_diag(&[&s4.u.adjoint(), &identity(n - re)]) * u;
    w *= block_diag(&[&s4.v, &identity(n3)]);
    let n2 = re - n1;
    let m1 = m - n1 - n3;

    // Step 5: column compression of [C11 C12].
    let c4 = cur_c(&w, &v);
    let (s5, r5) = split_rank(&block(&c4, 0..n1, 0..re), cuts.c)?;
    if r5 != n1 {
        return Err(Error::StructureViolation(format!(
            "leading output block has rank {r5}, expected {n1}"
        )));
    }
    v *= block_diag(&[&s5.v, &identity(n - re)]);

    // Step 6: SVD of the trailing square block of A.
    let o4 = re + n3;
    let a5 = &u * &sys.a * &v;
    let (s6, n4) = split_rank(&block(&a5, o4..n, o4..n), cuts.a)?;
    u = block_diag(&[&identity(o4), &s6.u.adjoint()]) * u;
    v *= block_diag(&[&identity(o4), &s6.v]);
    let n5 = n - o4 - n4;

    let dims = BlockDims { n1, n2, n3, n4, n5, m1 };
    let t = sys.transform(&u, &v, &w);
    let sr: Vec<Range<usize>> = (0..5).map(|i| dims.state(i)).collect();
    let ir: Vec<Range<usize>> = (0..3).map(|j| dims.input(j)).collect();

    let mut residuals = Vec::new();
    // Blocks of C that vanish because C = B^H Q (steps 2 and 4).
    let upper = 0..n1 + m1;
    let proved_2 = relative(fro(&block(&t.c, upper, re..n)), norms.c);
    let proved_4 = relative(fro(&block(&t.c, ir[1].clone(), 0..re)), norms.c);
    for (label, value) in [("C proved zero after step 2", proved_2), ("C proved zero after step 4", proved_4)] {
        if value > tol.residual_rel {
            return Err(Error::StructureViolation(format!(
                "{label}: relative residual {value:.3e} exceeds {:.3e}; input is not port-Hamiltonian with nonsingular Q",
                tol.residual_rel
            )));
        }
        residuals.push(PatternResidual {
            label: label.into(),
            relative: value,
            gated: true,
        });
    }
    let (re_e, e) = split_pattern(&t.e, &sr, &sr, pattern::e_unitary, norms.e);
    let (re_a, a) = split_pattern(&t.a, &sr, &sr, pattern::a_unitary, norms.a);
    let (re_b, b) = split_pattern(&t.b, &sr, &ir, pattern::b_unitary, norms.b);
    let (re_c, c) = split_pattern(&t.c, &ir, &sr, pattern::c_unitary, norms.c);
    for (label, value) in [("E pattern", re_e), ("A pattern", re_a), ("B pattern", re_b), ("C pattern", re_c)] {
        residuals.push(PatternResidual {
            label: label.into(),
            relative: value,
            gated: false,
        });
    }
    Ok(UnitaryCondensedForm {
        u,
        v,
        w,
        dims,
        e,
        a,
        b,
        c,
        residuals,
    })
}

impl UnitaryCondensedForm {
    /// Rank properties of the pivot blocks, measured independently.
    pub fn rank_checks(&self, tol: &ToleranceProfile) -> Result<Vec<RankCheck>> {
        let d = &self.dims;
        let n = d.n();
        let m = d.m();
        let ce = rank_threshold(norm2(&self.e)?, n, n, tol);
        let ca = rank_threshold(norm2(&self.a)?, n, n, tol);
        let cb = rank_threshold(norm2(&self.b)?, n, m, tol);
        let cc = rank_threshold(norm2(&self.c)?, m, n, tol);
        let lead = 0..d.n1 + d.n2;
        Ok(vec![
            RankCheck::new("rank[E11 E12; E21 E22]", rank_at(&block(&self.e, lead.clone(), lead), ce)?, d.n1 + d.n2),
            RankCheck::new("rank(E22)", rank_at(&block(&self.e, d.state(1), d.state(1)), ce)?, d.n2),
            RankCheck::new("rank(B11)", rank_at(&block(&self.b, d.state(0), d.input(0)), cb)?, d.n1),
            RankCheck::new("rank(C11)", rank_at(&block(&self.c, d.input(0), d.state(0)), cc)?, d.n1),
            RankCheck::new("rank(B33)", rank_at(&block(&self.b, d.state(2), d.input(2)), cb)?, d.n3),
            RankCheck::new("rank(C33)", rank_at(&block(&self.c, d.input(2), d.state(2)), cc)?, d.n3),
            RankCheck::new("rank(A44)", rank_at(&block(&self.a, d.state(3), d.state(3)), ca)?, d.n4),
        ])
    }

    pub fn unitarity_residual(&self) -> f64 {
        [&self.u, &self.v, &self.w]
            .iter()
            .map(|q| crate::numeric::linalg::orthonormality_residual(q))
            .fold(0.0, f64::max)
    }

    pub fn reconstruct(&self) -> Result<DescriptorSystem> {
        let ui = self.u.adjoint();
        let vi = self.v.adjoint();
        DescriptorSystem::new(
            &ui * &self.e * &vi,
            &ui * &self.a * &vi,
            &ui * &self.b * self.w.adjoint(),
            &self.w * &self.c * &vi,
        )
    }
}

struct Elimination<'a> {
    dims: &'a BlockDims,
    e: ComplexMatrix,
    a: ComplexMatrix,
    b: ComplexMatrix,
    c: ComplexMatrix,
    s: ComplexMatrix,
    t: ComplexMatrix,
}

impl Elimination<'_> {
    /// `I` plus the given off-diagonal state blocks.
    fn unit(&self, entries: &[(usize, usize, ComplexMatrix)]) -> ComplexMatrix {
        let mut l = identity(self.dims.n());
        for (i, j, x) in entries {
            set_block(&mut l, self.dims.state(*i), self.dims.state(*j), x);
        }
        l
    }

    fn left(&mut self, entries: &[(usize, usize, ComplexMatrix)]) {
        if entries.is_empty() {
            return;
        }
        let l = self.unit(entries);
        self.e = &l * &self.e;
        self.a = &l * &self.a;
        self.b = &l * &self.b;
        self.s = &l * &self.s;
    }

    fn right(&mut self, entries: &[(usize, usize, ComplexMatrix)]) {
        if entries.is_empty() {
            return;
        }
        let r = self.unit(entries);
        self.e = &self.e * &r;
        self.a = &self.a * &r;
        self.c = &self.c * &r;
        self.t = &self.t * &r;
    }

    fn sblk(&self, m: &ComplexMatrix, i: usize, j: usize) -> ComplexMatrix {
        block(m, self.dims.state(i), self.dims.state(j))
    }
}

fn pivot_inverse(blk: &ComplexMatrix, cut: f64, what: &str) -> Result<ComplexMatrix> {
    let r = rank_at(blk, cut)?;
    if r != blk.nrows() {
        return Err(Error::StructureViolation(format!(
            "pivot block {what} has rank {r}, expected {}",
            blk.nrows()
        )));
    }
    inverse(blk, what)
}

pub fn eliminate(u: &UnitaryCondensedForm, tol: &ToleranceProfile) -> Result<EliminatedCondensedForm> {
    let d = u.dims;
    let n = d.n();
    let m = d.m();
    let ne = norm2(&u.e)?;
    let na = norm2(&u.a)?;
    let nb = norm2(&u.b)?;
    let nc = norm2(&u.c)?;
    let ce = rank_threshold(ne, n, n, tol);
    let ca = rank_threshold(na, n, n, tol);
    let cb = rank_threshold(nb, n, m, tol);
    let cc = rank_threshold(nc, m, n, tol);
    let mut el = Elimination {
        dims: &d,
        e: u.e.clone(),
        a: u.a.clone(),
        b: u.b.clone(),
        c: u.c.clone(),
        s: u.u.clone(),
        t: u.v.clone(),
    };

    // E coupling against E22.
    if d.n2 > 0 && d.n1 > 0 {
        let e22i = pivot_inverse(&el.sblk(&el.e, 1, 1), ce, "E22")?;
        let x = -(el.sblk(&el.e, 0, 1) * &e22i);
        let y = -(&e22i * el.sblk(&el.e, 1, 0));
        el.left(&[(0, 1, x)]);
        el.right(&[(1, 0, y)]);
    } else if d.n2 > 0 {
        pivot_inverse(&el.sblk(&el.e, 1, 1), ce, "E22")?;
    }

    // B coupling against B33, C coupling against C33.
    if d.n3 > 0 {
        let b33 = block(&el.b, d.state(2), d.input(2));
        let c33 = block(&el.c, d.input(2), d.state(2));
        let b33i = pivot_inverse(&b33, cb, "B33")?;
        let c33i = pivot_inverse(&c33, cc, "C33")?;
        let rows: Vec<_> = [0, 1]
            .into_iter()
            .filter(|&i| d.as_array()[i] > 0)
            .map(|i| (i, 2, -(block(&el.b, d.state(i), d.input(2)) * &b33i)))
            .collect();
        el.left(&rows);
        let cols: Vec<_> = [0, 1]
            .into_iter()
            .filter(|&j| d.as_array()[j] > 0)
            .map(|j| (2, j, -(&c33i * block(&el.c, d.input(2), d.state(j)))))
            .collect();
        el.right(&cols);
    }

    // Fourth block row and column of A against A44.
    if d.n4 > 0 {
        let a44i = pivot_inverse(&el.sblk(&el.a, 3, 3), ca, "A44")?;
        let others: Vec<usize> = [0, 1, 2, 4].into_iter().filter(|&i| d.as_array()[i] > 0).collect();
        let rows: Vec<_> = others.iter().map(|&i| (i, 3, -(el.sblk(&el.a, i, 3) * &a44i))).collect();
        el.left(&rows);
        let cols: Vec<_> = others.iter().map(|&j| (3, j, -(&a44i * el.sblk(&el.a, 3, j)))).collect();
        el.right(&cols);
    }

    // Remaining pivots keep their full ranks.
    if d.n1 > 0 {
        pivot_inverse(&el.sblk(&el.e, 0, 0), ce, "E11")?;
        pivot_inverse(&block(&el.b, d.state(0), d.input(0)), cb, "B11")?;
        pivot_inverse(&block(&el.c, d.input(0), d.state(0)), cc, "C11")?;
    }

    let sr: Vec<Range<usize>> = (0..5).map(|i| d.state(i)).collect();
    let ir: Vec<Range<usize>> = (0..3).map(|j| d.input(j)).collect();
    let (re_e, e) = split_pattern(&el.e, &sr, &sr, pattern::e_eliminated, ne);
    let (re_a, a) = split_pattern(&el.a, &sr, &sr, pattern::a_eliminated, na);
    let (re_b, b) = split_pattern(&el.b, &sr, &ir, pattern::bc_eliminated, nb);
    let (re_c, c) = split_pattern(&el.c, &ir, &sr, pattern::bc_eliminated, nc);
    let residuals = [("E pattern", re_e), ("A pattern", re_a), ("B pattern", re_b), ("C pattern", re_c)]
        .into_iter()
        .map(|(label, relative)| PatternResidual {
            label: label.into(),
            relative,
            gated: false,
        })
        .collect();
    Ok(EliminatedCondensedForm {
        cond_s: cond2(&el.s)?,
        cond_t: cond2(&el.t)?,
        s: el.s,
        t: el.t,
        w: u.w.clone(),
        dims: d,
        e,
        a,
        b,
        c,
        residuals,
    })
}

impl EliminatedCondensedForm {
    pub fn reconstruct(&self) -> Result<DescriptorSystem> {
        let si = inverse(&self.s, "S")?;
        let ti = inverse(&self.t, "T")?;
        DescriptorSystem::new(
            &si * &self.e * &ti,
            &si * &self.a * &ti,
            &si * &self.b * self.w.adjoint(),
            &self.w * &self.c * &ti,
        )
    }

    pub fn e_block(&self, i: usize, j: usize) -> ComplexMatrix {
        block(&self.e, self.dims.state(i), self.dims.state(j))
    }

    pub fn a_block(&self, i: usize, j: usize) -> ComplexMatrix {
        block(&self.a, self.dims.state(i), self.dims.state(j))
    }

    /// Block of `S B W` at state block `i`, input block `j`.
    pub fn b_block(&self, i: usize, j: usize) -> ComplexMatrix {
        block(&self.b, self.dims.state(i), self.dims.input(j))
    }

    /// Block of `W^H C T` at input block `i`, state block `j`.
    pub fn c_block(&self, i: usize, j: usize) -> ComplexMatrix {
        block(&self.c, self.dims.input(i), self.dims.state(j))
    }
}
