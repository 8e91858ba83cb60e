//! Descriptor systems, port-Hamiltonian generators and seeded synthesis of
//! test systems with a known structure matrix.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::linalg::{cond2, ensure_finite, inverse, rank_tol as rank};
use crate::numeric::{block_diag, c, fro, identity, is_psd, zeros, ComplexMatrix, ToleranceProfile};

/// Coefficients of `E x' = A x + B u, y = C x` with `u, y` of equal length.
#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorSystem {
    pub e: ComplexMatrix,
    pub a: ComplexMatrix,
    pub b: ComplexMatrix,
    pub c: ComplexMatrix,
}

impl DescriptorSystem {
    pub fn new(e: ComplexMatrix, a: ComplexMatrix, b: ComplexMatrix, c: ComplexMatrix) -> Result<Self> {
        let n = e.nrows();
        let m = b.ncols();
        let ok = e.shape() == (n, n) && a.shape() == (n, n) && b.nrows() == n && c.shape() == (m, n);
        if !ok {
            return Err(Error::ContractViolation(format!(
                "inconsistent system dimensions: E {:?}, A {:?}, B {:?}, C {:?}",
                e.shape(),
                a.shape(),
                b.shape(),
                c.shape()
            )));
        }
        for (name, mtx) in [("E", &e), ("A", &a), ("B", &b), ("C", &c)] {
            ensure_finite(name, mtx)?;
        }
        Ok(Self { e, a, b, c })
    }

    pub fn n(&self) -> usize {
        self.e.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// Applies `x -> V x`, `u -> W u` and premultiplies the state equation by `U`.
    pub fn transform(&self, u: &ComplexMatrix, v: &ComplexMatrix, w: &ComplexMatrix) -> Self {
        Self {
            e: u * &self.e * v,
            a: u * &self.a * v,
            b: u * &self.b * w,
            c: w.adjoint() * &self.c * v,
        }
    }
}

/// Port-Hamiltonian data `(E, J, R, Q, G, P)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhGenerator {
    pub e: ComplexMatrix,
    pub j: ComplexMatrix,
    pub r: ComplexMatrix,
    pub q: ComplexMatrix,
    pub g: ComplexMatrix,
    pub p: ComplexMatrix,
}

/// One of the four structural constraints on a generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub name: String,
    pub holds: bool,
    /// Relative residual of the equality part of the constraint.
    pub residual: f64,
    /// Smallest eigenvalue of the Hermitian part for the semidefinite constraints.
    pub min_eigenvalue: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorValidation {
    pub checks: Vec<ConstraintCheck>,
}

impl GeneratorValidation {
    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }

    pub fn max_residual(&self) -> f64 {
        self.checks.iter().fold(0.0, |a, c| a.max(c.residual))
    }
}

fn rel(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

impl PhGenerator {
    pub fn n(&self) -> usize {
        self.e.nrows()
    }

    pub fn m(&self) -> usize {
        self.g.ncols()
    }

    fn check_dims(&self) -> Result<()> {
        let n = self.n();
        let m = self.m();
        let square = [&self.e, &self.j, &self.r, &self.q].iter().all(|x| x.shape() == (n, n));
        if !square || self.g.nrows() != n || self.p.shape() != (n, m) {
            return Err(Error::ContractViolation("inconsistent generator dimensions".into()));
        }
        Ok(())
    }

    /// Residuals of `Q^H E = E^H Q >= 0`, `Q^H J Q` skew, `Q^H R Q >= 0`, `Q^H P = 0`.
    pub fn validate(&self, tol: &ToleranceProfile) -> Result<GeneratorValidation> {
        self.check_dims()?;
        let qh = self.q.adjoint();
        let mut checks = Vec::with_capacity(4);

        let h = &qh * &self.e;
        let psd = is_psd(&h, tol)?;
        let residual = rel(psd.hermitian_residual, fro(&h));
        checks.push(ConstraintCheck {
            name: "Q^H E = E^H Q >= 0".into(),
            holds: psd.holds,
            residual,
            min_eigenvalue: Some(psd.min_eigenvalue),
        });

        let jq = &qh * &self.j * &self.q;
        let residual = rel(fro(&(&jq + jq.adjoint())), fro(&jq));
        checks.push(ConstraintCheck {
            name: "Q^H J Q skew-Hermitian".into(),
            holds: residual <= tol.residual_rel,
            residual,
            min_eigenvalue: None,
        });

        let rq = &qh * &self.r * &self.q;
        let psd = is_psd(&rq, tol)?;
        checks.push(ConstraintCheck {
            name: "Q^H R Q >= 0".into(),
            holds: psd.holds,
            residual: rel(psd.hermitian_residual, fro(&rq)),
            min_eigenvalue: Some(psd.min_eigenvalue),
        });

        let residual = rel(fro(&(&qh * &self.p)), fro(&self.q) * fro(&self.p));
        checks.push(ConstraintCheck {
            name: "Q^H P = 0".into(),
            holds: residual <= tol.residual_rel,
            residual,
            min_eigenvalue: None,
        });
        Ok(GeneratorValidation { checks })
    }

    /// `(E, (J - R) Q, G - P, (G + P)^H Q)`.
    pub fn realize(&self, tol: &ToleranceProfile) -> Result<DescriptorSystem> {
        let report = self.validate(tol)?;
        if let Some(bad) = report.checks.iter().find(|c| !c.holds) {
            return Err(Error::ContractViolation(format!(
                "generator violates {} (residual {:.3e})",
                bad.name, bad.residual
            )));
        }
        Ok(self.realize_unchecked())
    }

    pub(crate) fn realize_unchecked(&self) -> DescriptorSystem {
        DescriptorSystem {
            e: self.e.clone(),
            a: (&self.j - &self.r) * &self.q,
            b: &self.g - &self.p,
            c: (&self.g + &self.p).adjoint() * &self.q,
        }
    }

    /// `Q^H E`; the Hamiltonian is `x^H (Q^H E) x / 2`.
    pub fn hamiltonian_matrix(&self) -> ComplexMatrix {
        self.q.adjoint() * &self.e
    }

    fn congruence(&self, l: &ComplexMatrix, r: &ComplexMatrix, w: &ComplexMatrix) -> Self {
        Self {
            e: l * &self.e * r,
            j: l * &self.j * l.adjoint(),
            r: l * &self.r * l.adjoint(),
            q: l * &self.q * r,
            g: l * &self.g * w,
            p: l * &self.p * w,
        }
    }
}

/// Seeded recipe for a random port-Hamiltonian system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRecipe {
    pub n: usize,
    pub m: usize,
    pub rank_e: usize,
    /// Planted condensed-form block sizes `(n1, .., n5)`.
    pub dims: Option<[usize; 5]>,
    /// Rank of the dissipation `Q^H R Q`; drawn from the seed when absent.
    pub dissipation_rank: Option<usize>,
    pub seed: u64,
    /// Build `Q` with a one-dimensional nullspace and nonzero `P`.
    pub singular_q: bool,
}

impl GeneratorRecipe {
    pub fn new(n: usize, m: usize, seed: u64) -> Self {
        Self {
            n,
            m,
            rank_e: n,
            dims: None,
            dissipation_rank: None,
            seed,
            singular_q: false,
        }
    }

    pub fn rank_e(mut self, rank_e: usize) -> Self {
        self.rank_e = rank_e;
        self
    }

    pub fn dims(mut self, dims: [usize; 5]) -> Self {
        self.rank_e = dims[0] + dims[1];
        self.dims = Some(dims);
        self
    }

    pub fn dissipation_rank(mut self, d: usize) -> Self {
        self.dissipation_rank = Some(d);
        self
    }

    pub fn singular_q(mut self) -> Self {
        self.singular_q = true;
        self
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ContractViolation(msg));
        if self.n == 0 {
            return bad("state dimension must be positive".into());
        }
        if self.rank_e > self.n {
            return bad(format!("rank_E = {} exceeds n = {}", self.rank_e, self.n));
        }
        if self.dissipation_rank.is_some_and(|d| d > self.n) {
            return bad("dissipation rank exceeds n".into());
        }
        if let Some(d) = self.dims {
            if d.iter().sum::<usize>() != self.n {
                return bad(format!("block dims {d:?} do not sum to n = {}", self.n));
            }
            if d[0] + d[2] > self.m {
                return bad(format!("block dims need n1 + n3 = {} <= m = {}", d[0] + d[2], self.m));
            }
            if d[4] > d[0] + d[1] + d[2] {
                return bad(format!("block dims need n5 = {} <= n1 + n2 + n3 = {}", d[4], d[0] + d[1] + d[2]));
            }
            if self.rank_e != d[0] + d[1] {
                return bad("rank_E must equal n1 + n2 when block dims are planted".into());
            }
            if self.singular_q {
                return bad("planted block dims require a nonsingular Q".into());
            }
        }
        if self.singular_q && self.rank_e >= self.n {
            return bad("a singular Q forces rank_E < n".into());
        }
        Ok(())
    }
}

pub(crate) struct Sampler {
    rng: ChaCha8Rng,
}

const MAX_COND_Q: f64 = 1e4;

impl Sampler {
    pub(crate) fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub(crate) fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub(crate) fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.random_range(lo..hi)
    }

    pub(crate) fn index(&mut self, upto_inclusive: usize) -> usize {
        self.rng.random_range(0..=upto_inclusive)
    }

    /// Complex Gaussian matrix with unit-variance entries.
    pub(crate) fn gaussian(&mut self, rows: usize, cols: usize) -> ComplexMatrix {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        DMatrix::from_fn(rows, cols, |_, _| c(s * self.normal(), s * self.normal()))
    }

    pub(crate) fn unitary(&mut self, n: usize) -> ComplexMatrix {
        if n == 0 {
            return zeros(0, 0);
        }
        self.gaussian(n, n).qr().q()
    }

    /// Hermitian PSD of exact rank `k` (generic).
    pub(crate) fn psd(&mut self, n: usize, k: usize) -> ComplexMatrix {
        let x = self.gaussian(n, k);
        &x * x.adjoint()
    }

    pub(crate) fn skew(&mut self, n: usize) -> ComplexMatrix {
        let y = self.gaussian(n, n);
        (&y - y.adjoint()) * c(0.5, 0.0)
    }

    /// Nonsingular matrix with singular values in `[0.5, 2]`.
    pub(crate) fn well_conditioned(&mut self, n: usize) -> ComplexMatrix {
        let u = self.unitary(n);
        let v = self.unitary(n);
        let d = DMatrix::from_fn(n, n, |i, j| if i == j { c(self.uniform(0.5, 2.0), 0.0) } else { c(0.0, 0.0) });
        u * d * v
    }

    fn bounded_q(&mut self, n: usize) -> Result<ComplexMatrix> {
        for _ in 0..1000 {
            let q = self.gaussian(n, n);
            if cond2(&q)? <= MAX_COND_Q {
                return Ok(q);
            }
        }
        Err(Error::Numeric("could not draw a well-conditioned Q".into()))
    }
}

/// Draws a generator following `recipe`; identical recipes give bit-identical output.
pub fn random_ph_system(recipe: &GeneratorRecipe) -> Result<PhGenerator> {
    recipe.validate()?;
    let mut rng = Sampler::new(recipe.seed);
    if let Some(dims) = recipe.dims {
        return planted_dims(recipe, dims, &mut rng);
    }
    if recipe.singular_q {
        return singular_q(recipe, &mut rng);
    }
    let n = recipe.n;
    let q = rng.bounded_q(n)?;
    let h = rng.psd(n, recipe.rank_e);
    let sk = rng.skew(n);
    let d = match recipe.dissipation_rank {
        Some(d) => d,
        None => rng.index(n),
    };
    let diss = rng.psd(n, d);
    let g = rng.gaussian(n, recipe.m);
    let qi = inverse(&q, "Q")?;
    let qih = qi.adjoint();
    Ok(PhGenerator {
        e: &qih * h,
        j: &qih * sk * &qi,
        r: &qih * diss * &qi,
        q,
        g,
        p: zeros(n, recipe.m),
    })
}

fn singular_q(recipe: &GeneratorRecipe, rng: &mut Sampler) -> Result<PhGenerator> {
    let n = recipe.n;
    let m = recipe.m;
    let k = n - 1;
    let u = rng.unitary(n);
    let v = rng.unitary(n);
    let sig: Vec<f64> = (0..k).map(|_| rng.uniform(0.5, 2.0)).collect();
    let diag = |f: &dyn Fn(f64) -> f64| DMatrix::from_fn(n, n, |i, j| if i == j && i < k { c(f(sig[i]), 0.0) } else { c(0.0, 0.0) });
    let q = &u * diag(&|s| s) * v.adjoint();
    // (Q^+)^H = U diag(1/s, 0) V^H
    let qpinv_h = &u * diag(&|s| 1.0 / s) * v.adjoint();
    let vr = v.columns(0, k).into_owned();
    let lift = |inner: ComplexMatrix| &vr * inner * vr.adjoint();
    let h = lift(rng.psd(k, recipe.rank_e));
    let sk = lift(rng.skew(k));
    let d = recipe.dissipation_rank.unwrap_or(k).min(k);
    let diss = lift(rng.psd(k, d));
    let qpinv = qpinv_h.adjoint();
    let g = rng.gaussian(n, m);
    let ker = u.columns(k, 1).into_owned();
    let p = ker * rng.gaussian(1, m);
    Ok(PhGenerator {
        e: &qpinv_h * h,
        j: &qpinv_h * sk * &qpinv,
        r: &qpinv_h * diss * &qpinv,
        q,
        g,
        p,
    })
}

/// Builds the system in condensed coordinates with the requested block
/// sizes, then scrambles states and inputs with random unitaries.
fn planted_dims(recipe: &GeneratorRecipe, dims: [usize; 5], rng: &mut Sampler) -> Result<PhGenerator> {
    let [n1, n2, n3, n4, n5] = dims;
    let n = recipe.n;
    let m = recipe.m;
    let m1 = m - n1 - n3;
    let n12 = n1 + n2;
    let groups = dims;

    // Q: block lower triangular over the five state blocks.
    let q = loop {
        let mut q = zeros(n, n);
        let mut r0 = 0;
        for (bi, &rows) in groups.iter().enumerate() {
            let mut c0 = 0;
            for (bj, &cols) in groups[..=bi].iter().enumerate() {
                let blk = if bj == bi {
                    rng.well_conditioned(rows)
                } else {
                    rng.gaussian(rows, cols) * c(0.5, 0.0)
                };
                q.view_mut((r0, c0), (rows, cols)).copy_from(&blk);
                c0 += cols;
            }
            r0 += rows;
        }
        if cond2(&q)? <= MAX_COND_Q {
            break q;
        }
    };
    let qi = inverse(&q, "Q")?;
    let qih = qi.adjoint();

    let h = block_diag(&[&rng.psd(n12, n12), &zeros(n - n12, n - n12)]);

    // Dissipation lives on blocks 1..4; block 5 carries no damping.
    let n14 = n - n5;
    let d = recipe.dissipation_rank.unwrap_or(n14).min(n14);
    let (sk, diss) = loop {
        let diss = block_diag(&[&rng.psd(n14, d), &zeros(n5, n5)]);
        let mut sk = rng.skew(n);
        let o4 = n12 + n3;
        for i in o4..n {
            for j in o4..n {
                if i >= o4 + n4 || j >= o4 + n4 {
                    sk[(i, j)] = c(0.0, 0.0);
                }
            }
        }
        let z4 = (&sk - &diss).view((o4, o4), (n4, n4)).into_owned();
        if rank(&z4, &ToleranceProfile::default())? == n4 {
            break (sk, diss);
        }
    };

    // G in condensed input coordinates (n1, m1, n3).
    let mut g = zeros(n, m);
    g.view_mut((0, 0), (n1, n1)).copy_from(&rng.well_conditioned(n1));
    g.view_mut((0, n1 + m1), (n12, n3)).copy_from(&rng.gaussian(n12, n3));
    g.view_mut((n12, n1 + m1), (n3, n3)).copy_from(&rng.well_conditioned(n3));

    let hat = PhGenerator {
        e: &qih * h,
        j: &qih * sk * &qi,
        r: &qih * diss * &qi,
        q,
        g,
        p: zeros(n, m),
    };
    let l = rng.unitary(n);
    let r = rng.unitary(n);
    let w = rng.unitary(m);
    Ok(hat.congruence(&l, &r, &w))
}

/// A pH system with a lossless, disconnected oscillator at `+-i omega`
/// (uncontrollable and unobservable) attached to a random damped part.
pub fn plant_imaginary_mode(n: usize, m: usize, omega: f64, seed: u64) -> Result<PhGenerator> {
    if n < 3 || m == 0 || !(omega.is_finite() && omega > 0.0) {
        return Err(Error::ContractViolation(
            "planted mode needs n >= 3, m >= 1 and omega > 0".into(),
        ));
    }
    let mut rng = Sampler::new(seed);
    let rest = n - 2;
    let q = rng.bounded_q(n)?;
    let osc = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(omega, 0.0), c(-omega, 0.0), c(0.0, 0.0)]);
    let h = block_diag(&[&identity(2), &rng.psd(rest, rest)]);
    let sk = block_diag(&[&osc, &rng.skew(rest)]);
    let diss = block_diag(&[&zeros(2, 2), &rng.psd(rest, rest)]);
    let bt = crate::numeric::vstack(&[&zeros(2, m), &rng.gaussian(rest, m)]);
    let qi = inverse(&q, "Q")?;
    let qih = qi.adjoint();
    Ok(PhGenerator {
        e: &qih * h,
        j: &qih * sk * &qi,
        r: &qih * diss * &qi,
        g: &qih * bt,
        q,
        p: zeros(n, m),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::linalg::from_real_rows;

    fn tol() -> ToleranceProfile {
        ToleranceProfile::default()
    }

    fn scalar_generator() -> PhGenerator {
        let one = from_real_rows(1, 1, &[1.0]);
        PhGenerator {
            e: one.clone(),
            j: zeros(1, 1),
            r: one.clone(),
            q: one.clone(),
            g: one,
            p: zeros(1, 1),
        }
    }

    fn two_state_generator() -> PhGenerator {
        PhGenerator {
            e: identity(2),
            j: from_real_rows(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            r: from_real_rows(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            q: identity(2),
            g: from_real_rows(2, 1, &[1.0, 0.0]),
            p: zeros(2, 1),
        }
    }

    #[test]
    fn realize_scalar() {
        let sys = scalar_generator().realize(&tol()).unwrap();
        assert_eq!(sys.e, from_real_rows(1, 1, &[1.0]));
        assert_eq!(sys.a, from_real_rows(1, 1, &[-1.0]));
        assert_eq!(sys.b, from_real_rows(1, 1, &[1.0]));
        assert_eq!(sys.c, from_real_rows(1, 1, &[1.0]));
    }

    #[test]
    fn realize_identity_q() {
        let sys = two_state_generator().realize(&tol()).unwrap();
        assert_eq!(sys.a, from_real_rows(2, 2, &[-1.0, 1.0, -1.0, 0.0]));
        assert_eq!(sys.b, from_real_rows(2, 1, &[1.0, 0.0]));
        assert_eq!(sys.c, from_real_rows(1, 2, &[1.0, 0.0]));
    }

    #[test]
    fn negative_dissipation_is_flagged() {
        for mut g in [scalar_generator(), two_state_generator()] {
            assert!(g.validate(&tol()).unwrap().all_hold());
            g.r = -g.r;
            let v = g.validate(&tol()).unwrap();
            let check = &v.checks[2];
            assert!(!check.holds);
            assert!(check.min_eigenvalue.unwrap() < 0.0);
            assert!(g.realize(&tol()).is_err());
        }
    }

    #[test]
    fn seeded_generator_output_equals_bh_q() {
        let g = random_ph_system(&GeneratorRecipe::new(6, 2, 11)).unwrap();
        let sys = g.realize(&tol()).unwrap();
        let bhq = sys.b.adjoint() * &g.q;
        assert!(fro(&(&sys.c - &bhq)) <= 1e-12 * fro(&sys.c));
    }

    #[test]
    fn full_rank_recipe() {
        let g = random_ph_system(&GeneratorRecipe::new(4, 2, 7)).unwrap();
        assert_eq!(rank(&g.e, &tol()).unwrap(), 4);
        let v = g.validate(&tol()).unwrap();
        assert!(v.all_hold());
        assert!(v.max_residual() < 1e-10);
    }

    #[test]
    fn zero_hamiltonian_recipe() {
        let g = random_ph_system(&GeneratorRecipe::new(3, 1, 1).rank_e(0)).unwrap();
        assert_eq!(fro(&g.e), 0.0);
        assert!(g.validate(&tol()).unwrap().all_hold());
        assert_eq!(fro(&g.hamiltonian_matrix()), 0.0);
    }

    #[test]
    fn hamiltonian_matrix_examples() {
        let g = PhGenerator {
            e: identity(2),
            q: identity(2),
            ..two_state_generator()
        };
        assert_eq!(g.hamiltonian_matrix(), identity(2));
        let g = random_ph_system(&GeneratorRecipe::new(5, 2, 3).rank_e(3)).unwrap();
        assert!(is_psd(&g.hamiltonian_matrix(), &tol()).unwrap().holds);
    }

    #[test]
    fn singular_q_generator_is_valid_but_rank_deficient() {
        let g = random_ph_system(&GeneratorRecipe::new(5, 2, 9).rank_e(3).singular_q()).unwrap();
        assert!(g.validate(&tol()).unwrap().all_hold());
        assert_eq!(rank(&g.q, &tol()).unwrap(), 4);
        assert!(fro(&g.p) > 0.0);
    }

    #[test]
    fn infeasible_dims_rejected() {
        let r = GeneratorRecipe::new(4, 1, 0).dims([2, 1, 0, 1, 0]);
        assert!(matches!(random_ph_system(&r), Err(Error::ContractViolation(_))));
        let r = GeneratorRecipe::new(4, 2, 0).dims([1, 1, 1, 0, 0]);
        assert!(matches!(random_ph_system(&r), Err(Error::ContractViolation(_))));
    }

    #[test]
    fn deterministic_in_seed() {
        let r = GeneratorRecipe::new(5, 2, 42).dims([1, 1, 1, 1, 1]);
        assert_eq!(random_ph_system(&r).unwrap(), random_ph_system(&r).unwrap());
        let r2 = GeneratorRecipe { seed: 43, ..r };
        assert_ne!(random_ph_system(&r).unwrap(), random_ph_system(&r2).unwrap());
    }

    #[test]
    fn planted_dims_generator_is_valid() {
        let g = random_ph_system(&GeneratorRecipe::new(5, 2, 4).dims([1, 1, 1, 1, 1])).unwrap();
        assert!(g.validate(&tol()).unwrap().all_hold());
        assert_eq!(rank(&g.e, &tol()).unwrap(), 2);
    }
}
