//! Cheating semidefinite programs: construction from round-form protocols,
//! a primal-dual interior-point solver, dual certificates, and a
//! parameterized-strategy oracle.
//!
//! Problems have the form
//!
//! ```text
//! maximize   Σ_b <C_b, X_b> + c0
//! subject to Σ_t coef_t · Tr_T(L_t X_{b_t} L_t*) = R_f     for every family f
//!            X_b ⪰ 0
//! ```
//!
//! with dual `minimize Σ_f <Y_f, R_f> + c0` over Hermitian `Y_f` such that
//! `S_b = Σ_t coef_t L_t* (Y_f ⊗ I_T) L_t − C_b ⪰ 0`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{Party, ProtocolSpec};
use crate::qlin::{
    self, apply_on_factors, haar_unitary, hermitian_eigenvalues, hermitian_part, identity,
    min_eigenvalue, tensor, zeros, ComplexMatrix, C64,
};
use crate::{Error, Result};

/// Largest total variable dimension the solver accepts.
pub const MAX_TOTAL_DIM: usize = 256;

/// PSD floor and equality tolerance used when re-verifying a certificate.
pub const CERTIFICATE_TOL: f64 = 1e-8;

/// Largest local dimension the brute-force oracle accepts.
pub const MAX_BRUTE_FORCE_DIM: usize = 64;

/// Residual level accepted when the solver stalls short of its target.
pub const ACCEPTABLE_TOL: f64 = 1e-6;

/// Iterations without a new best residual before an acceptable iterate is returned.
const STALL_ITERATIONS: usize = 8;

/// One term `coef · Tr_T(L X_block L*)`; `L X L*` lives on `kept ⊗ traced`,
/// so `L` may be rectangular.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub block: usize,
    pub coef: f64,
    /// `None` stands for the identity.
    #[serde(with = "opt_matrix")]
    pub map: Option<ComplexMatrix>,
    pub traced: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintFamily {
    pub name: String,
    pub kept: usize,
    pub terms: Vec<Term>,
    #[serde(with = "qlin::serde_matrix")]
    pub rhs: ComplexMatrix,
}

/// Bookkeeping for protocol SDPs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SdpMeta {
    pub description: String,
    pub party: Option<Party>,
    pub target: Option<String>,
    /// Messages sent by the cheating party: the index `N` of the final variable.
    pub n_messages: usize,
    /// Alternating round pairs of the protocol.
    pub n_round_pairs: usize,
    /// Real scalar constraints.
    pub n_constraints: usize,
    /// Block sizes and constraint count before facial reduction.
    pub unreduced_blocks: Vec<usize>,
    pub unreduced_constraints: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpProblem {
    pub blocks: Vec<usize>,
    #[serde(with = "matrix_list")]
    pub objective: Vec<ComplexMatrix>,
    pub objective_constant: f64,
    pub families: Vec<ConstraintFamily>,
    /// Upper bounds on `Tr X_b` implied by the constraints.
    pub trace_bounds: Vec<f64>,
    pub meta: SdpMeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpSolution {
    pub primal_value: f64,
    /// Certified upper bound: `Σ <Y_f, R_f> + c0` plus the repair penalty.
    pub dual_value: f64,
    /// `Σ <Y_f, R_f> + c0` before repair.
    pub raw_dual_value: f64,
    #[serde(with = "matrix_list")]
    pub primal: Vec<ComplexMatrix>,
    /// One Hermitian multiplier per constraint family.
    #[serde(with = "matrix_list")]
    pub dual: Vec<ComplexMatrix>,
    /// Dual slacks `S_b` recomputed from `dual`.
    #[serde(with = "matrix_list")]
    pub slack: Vec<ComplexMatrix>,
    pub residuals: Residuals,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Target for relative primal/dual infeasibility and relative gap.
    pub tol: f64,
    pub max_iterations: usize,
    /// Randomize the initial iterates with this seed.
    pub random_start: Option<u64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_iterations: 100,
            random_start: None,
        }
    }
}

// ---------------------------------------------------------------------------
// Hermitian coordinates

/// Orthonormal basis of `K x K` Hermitian matrices, as sparse entry lists.
fn hermitian_basis(k: usize) -> Vec<Vec<(usize, usize, C64)>> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(k * k);
    for p in 0..k {
        out.push(vec![(p, p, qlin::r(1.0))]);
        for q in p + 1..k {
            out.push(vec![(p, q, qlin::r(s)), (q, p, qlin::r(s))]);
            out.push(vec![(p, q, qlin::c(0.0, s)), (q, p, qlin::c(0.0, -s))]);
        }
    }
    out
}

/// Coordinates `Tr(H_α W)` of the Hermitian part of `w`.
fn to_coords(w: &ComplexMatrix, out: &mut Vec<f64>) {
    let s = std::f64::consts::SQRT_2;
    let k = w.nrows();
    for p in 0..k {
        out.push(w[(p, p)].re);
        for q in p + 1..k {
            let h = (w[(p, q)] + w[(q, p)].conj()) * 0.5;
            out.push(s * h.re);
            out.push(s * h.im);
        }
    }
}

fn from_coords(y: &[f64], k: usize) -> ComplexMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut m = zeros(k, k);
    let mut i = 0;
    for p in 0..k {
        m[(p, p)] = qlin::r(y[i]);
        i += 1;
        for q in p + 1..k {
            let z = qlin::c(y[i] * s, y[i + 1] * s);
            m[(p, q)] = z;
            m[(q, p)] = z.conj();
            i += 2;
        }
    }
    m
}

/// Partial trace over the last factor of dimension `t`.
fn trace_last(m: &ComplexMatrix, t: usize) -> ComplexMatrix {
    let k = m.nrows() / t;
    ComplexMatrix::from_fn(k, k, |p, q| (0..t).map(|j| m[(p * t + j, q * t + j)]).sum())
}

fn conjugate(l: &Option<ComplexMatrix>, x: &ComplexMatrix) -> ComplexMatrix {
    match l {
        None => x.clone(),
        Some(l) => l * x * l.adjoint(),
    }
}

fn conjugate_adjoint(l: &Option<ComplexMatrix>, y: &ComplexMatrix) -> ComplexMatrix {
    match l {
        None => y.clone(),
        Some(l) => l.adjoint() * y * l,
    }
}

fn frobenius(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

impl SdpProblem {
    pub fn total_dim(&self) -> usize {
        self.blocks.iter().sum()
    }

    pub fn n_constraints(&self) -> usize {
        self.families.iter().map(|f| f.kept * f.kept).sum()
    }

    /// The problem with family `i` removed (a relaxation, possibly unbounded).
    pub fn without_family(&self, i: usize) -> SdpProblem {
        let mut p = self.clone();
        p.families.remove(i);
        p.meta.n_constraints = p.n_constraints();
        p
    }

    /// The problem with family `i` replaced by its full trace (a relaxation
    /// that keeps the feasible set bounded).
    pub fn relax_family(&self, i: usize) -> SdpProblem {
        let mut p = self.clone();
        let f = &mut p.families[i];
        for t in &mut f.terms {
            t.traced *= f.kept;
        }
        f.rhs = ComplexMatrix::from_element(1, 1, qlin::trace(&f.rhs));
        f.kept = 1;
        f.name = format!("tr {}", f.name);
        p.meta.n_constraints = p.n_constraints();
        p
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(format!("SDP: {m}")));
        if self.objective.len() != self.blocks.len() || self.trace_bounds.len() != self.blocks.len()
        {
            return bad("objective and trace bounds need one entry per block".into());
        }
        for (b, (c, &d)) in self.objective.iter().zip(&self.blocks).enumerate() {
            if c.nrows() != d || c.ncols() != d || !qlin::is_hermitian(c, qlin::OPERATOR_TOL) {
                return bad(format!(
                    "objective of block {b} is not a Hermitian {d}x{d} matrix"
                ));
            }
        }
        for f in &self.families {
            if f.rhs.nrows() != f.kept
                || f.rhs.ncols() != f.kept
                || !qlin::is_hermitian(&f.rhs, qlin::OPERATOR_TOL)
            {
                return bad(format!(
                    "family `{}` has a malformed right-hand side",
                    f.name
                ));
            }
            for t in &f.terms {
                let Some(&d) = self.blocks.get(t.block) else {
                    return bad(format!("family `{}` refers to block {}", f.name, t.block));
                };
                if t.map.as_ref().map_or(d, |l| l.nrows()) != f.kept * t.traced
                    || t.map.as_ref().is_some_and(|l| l.ncols() != d)
                {
                    return bad(format!(
                        "family `{}` term on block {} has inconsistent dimensions",
                        f.name, t.block
                    ));
                }
            }
        }
        Ok(())
    }

    /// `Σ_t coef_t Tr_T(L_t X L_t*)` for family `f`.
    pub fn apply_family(&self, f: &ConstraintFamily, x: &[ComplexMatrix]) -> ComplexMatrix {
        let mut out = zeros(f.kept, f.kept);
        for t in &f.terms {
            out += trace_last(&conjugate(&t.map, &x[t.block]), t.traced) * qlin::r(t.coef);
        }
        out
    }

    /// `A*(Y)` for block-wise family multipliers.
    pub fn adjoint(&self, y: &[ComplexMatrix]) -> Vec<ComplexMatrix> {
        let mut out: Vec<ComplexMatrix> = self.blocks.iter().map(|&d| zeros(d, d)).collect();
        for (f, yf) in self.families.iter().zip(y) {
            for t in &f.terms {
                let lifted = tensor(yf, &identity(t.traced)) * qlin::r(t.coef);
                out[t.block] += conjugate_adjoint(&t.map, &lifted);
            }
        }
        out
    }

    fn objective_value(&self, x: &[ComplexMatrix]) -> f64 {
        self.objective
            .iter()
            .zip(x)
            .map(|(c, x)| qlin::inner_re(c, x))
            .sum::<f64>()
            + self.objective_constant
    }

    fn dual_objective(&self, y: &[ComplexMatrix]) -> f64 {
        self.families
            .iter()
            .zip(y)
            .map(|(f, y)| qlin::inner_re(&f.rhs, y))
            .sum::<f64>()
            + self.objective_constant
    }

    /// `A(X)` in Hermitian coordinates.
    fn apply_coords(&self, x: &[ComplexMatrix]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_constraints());
        for f in &self.families {
            to_coords(&self.apply_family(f, x), &mut out);
        }
        out
    }

    fn rhs_coords(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_constraints());
        for f in &self.families {
            to_coords(&f.rhs, &mut out);
        }
        out
    }

    fn split_coords(&self, y: &[f64]) -> Vec<ComplexMatrix> {
        let mut off = 0;
        self.families
            .iter()
            .map(|f| {
                let n = f.kept * f.kept;
                let m = from_coords(&y[off..off + n], f.kept);
                off += n;
                m
            })
            .collect()
    }

    /// Schur complement `M_ij = Re Tr(A_i X A_j Z)`.
    fn schur(&self, x: &[ComplexMatrix], z: &[ComplexMatrix]) -> DMatrix<f64> {
        let n = self.n_constraints();
        let mut m = DMatrix::<f64>::zeros(n, n);
        let offsets: Vec<usize> = self
            .families
            .iter()
            .scan(0, |acc, f| {
                let o = *acc;
                *acc += f.kept * f.kept;
                Some(o)
            })
            .collect();
        let bases: Vec<Vec<Vec<(usize, usize, C64)>>> = self
            .families
            .iter()
            .map(|f| hermitian_basis(f.kept))
            .collect();
        for (fi, f) in self.families.iter().enumerate() {
            for (gi, g) in self.families.iter().enumerate().skip(fi) {
                for t in &f.terms {
                    for u in g.terms.iter().filter(|u| u.block == t.block) {
                        let b = t.block;
                        let xl = match &u.map {
                            None => x[b].clone(),
                            Some(l) => &x[b] * l.adjoint(),
                        };
                        let p = match &t.map {
                            None => xl,
                            Some(l) => l * xl,
                        };
                        let zl = match &t.map {
                            None => z[b].clone(),
                            Some(l) => &z[b] * l.adjoint(),
                        };
                        let q = match &u.map {
                            None => zl,
                            Some(l) => l * zl,
                        };
                        let (kt, tt, ku, tu) = (f.kept, t.traced, g.kept, u.traced);
                        // G[q, r, s, p] = Σ_{m, m'} P[(q,m),(r,m')] Q[(s,m'),(p,m)]
                        let idx = |q: usize, r: usize, s: usize, p: usize| {
                            ((q * ku + r) * ku + s) * kt + p
                        };
                        let mut gt = vec![C64::default(); kt * ku * ku * kt];
                        for mm in 0..tt {
                            for mp in 0..tu {
                                for qq in 0..kt {
                                    for rr in 0..ku {
                                        let a = p[(qq * tt + mm, rr * tu + mp)];
                                        if a == C64::default() {
                                            continue;
                                        }
                                        for ss in 0..ku {
                                            let base = idx(qq, rr, ss, 0);
                                            for pp in 0..kt {
                                                gt[base + pp] +=
                                                    a * q[(ss * tu + mp, pp * tt + mm)];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                        let w = t.coef * u.coef;
                        for (al, ha) in bases[fi].iter().enumerate() {
                            for (be, hb) in bases[gi].iter().enumerate() {
                                let mut acc = C64::default();
                                for &(pp, qq, h1) in ha {
                                    for &(rr, ss, h2) in hb {
                                        acc += h1 * h2 * gt[idx(qq, rr, ss, pp)];
                                    }
                                }
                                m[(offsets[fi] + al, offsets[gi] + be)] += w * acc.re;
                            }
                        }
                    }
                }
            }
        }
        // Fill the lower triangle of off-diagonal family pairs by symmetry.
        for i in 0..n {
            for j in 0..i {
                let fam_i = offsets.partition_point(|&o| o <= i) - 1;
                let fam_j = offsets.partition_point(|&o| o <= j) - 1;
                if fam_i != fam_j {
                    m[(i, j)] = m[(j, i)];
                } else {
                    let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
        }
        m
    }
}

// ---------------------------------------------------------------------------
// Solver

fn hermitian_inverse(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let h = hermitian_part(m);
    match h.clone().cholesky() {
        Some(ch) => Ok(hermitian_part(&ch.inverse())),
        None => h
            .try_inverse()
            .map(|i| hermitian_part(&i))
            .ok_or_else(|| Error::Precondition("iterate lost positive definiteness".into())),
    }
}

/// Largest `α` with `X + α ΔX ⪰ 0`, or infinity.
fn max_step(x: &ComplexMatrix, dx: &ComplexMatrix) -> f64 {
    let Some(ch) = hermitian_part(x).cholesky() else {
        return 0.0;
    };
    let l = ch.l();
    let Some(li) = l.clone().try_inverse() else {
        return 0.0;
    };
    let w = &li * dx * li.adjoint();
    let lmin = min_eigenvalue(&w);
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

struct Factorized {
    chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    lu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl Factorized {
    fn new(m: DMatrix<f64>) -> Self {
        match m.clone().cholesky() {
            Some(c) => Factorized {
                chol: Some(c),
                lu: None,
            },
            None => {
                let scale = m.diagonal().amax().max(1.0);
                let reg = &m + DMatrix::<f64>::identity(m.nrows(), m.nrows()) * (1e-13 * scale);
                match reg.clone().cholesky() {
                    Some(c) => Factorized {
                        chol: Some(c),
                        lu: None,
                    },
                    None => Factorized {
                        chol: None,
                        lu: Some(reg.lu()),
                    },
                }
            }
        }
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let v = nalgebra::DVector::from_column_slice(rhs);
        let out = match (&self.chol, &self.lu) {
            (Some(c), _) => c.solve(&v),
            (_, Some(lu)) => lu
                .solve(&v)
                .unwrap_or_else(|| nalgebra::DVector::zeros(rhs.len())),
            _ => unreachable!(),
        };
        out.iter().copied().collect()
    }
}

fn random_pd(d: usize, scale: f64, rng: &mut ChaCha8Rng) -> ComplexMatrix {
    let u = haar_unitary(d, rng);
    let diag: Vec<f64> = (0..d).map(|_| scale * rng.random_range(0.5..2.0)).collect();
    hermitian_part(&(&u * qlin::diag(&diag) * u.adjoint()))
}

/// Solves the problem with an infeasible primal-dual interior-point method
/// (HKM direction, Mehrotra predictor-corrector).
pub fn solve_sdp(problem: &SdpProblem, options: SolverOptions) -> Result<SdpSolution> {
    problem.check()?;
    if problem.total_dim() > MAX_TOTAL_DIM {
        return Err(Error::Unsupported(format!(
            "total variable dimension {} exceeds {MAX_TOTAL_DIM}",
            problem.total_dim()
        )));
    }
    if problem.blocks.is_empty() {
        let v = problem.objective_constant;
        return Ok(SdpSolution {
            primal_value: v,
            dual_value: v,
            raw_dual_value: v,
            primal: vec![],
            dual: problem
                .families
                .iter()
                .map(|f| zeros(f.kept, f.kept))
                .collect(),
            slack: vec![],
            residuals: Residuals {
                primal: 0.0,
                dual: 0.0,
                gap: 0.0,
            },
            iterations: 0,
        });
    }
    let nb = problem.blocks.len();
    let b = problem.rhs_coords();
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let c_norm = problem
        .objective
        .iter()
        .map(|c| frobenius(c).powi(2))
        .sum::<f64>()
        .sqrt();
    let total: f64 = problem.total_dim() as f64;
    let s_scale = 1.0
        + problem
            .objective
            .iter()
            .map(qlin::max_abs)
            .fold(0.0, f64::max);

    let mut rng = options.random_start.map(ChaCha8Rng::seed_from_u64);
    let mut x: Vec<ComplexMatrix> = Vec::with_capacity(nb);
    let mut s: Vec<ComplexMatrix> = Vec::with_capacity(nb);
    for &d in &problem.blocks {
        match rng.as_mut() {
            Some(r) => {
                x.push(random_pd(d, 1.0, r));
                s.push(random_pd(d, s_scale, r));
            }
            None => {
                x.push(identity(d));
                s.push(identity(d) * qlin::r(s_scale));
            }
        }
    }
    let mut y = vec![0.0; problem.n_constraints()];

    let worst = |r: &Residuals| r.primal.max(r.dual).max(r.gap);
    let mut best: Option<(Residuals, usize, Vec<ComplexMatrix>, Vec<f64>)> = None;
    for iter in 0..=options.max_iterations {
        let ymat = problem.split_coords(&y);
        let aty = problem.adjoint(&ymat);
        let ax = problem.apply_coords(&x);
        let rp: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let rd: Vec<ComplexMatrix> = (0..nb)
            .map(|i| &problem.objective[i] - &aty[i] + &s[i])
            .collect();
        let pobj = problem.objective_value(&x);
        let dobj = problem.dual_objective(&ymat);
        let res = Residuals {
            primal: rp.iter().map(|v| v * v).sum::<f64>().sqrt() / (1.0 + b_norm),
            dual: rd.iter().map(|m| frobenius(m).powi(2)).sum::<f64>().sqrt() / (1.0 + c_norm),
            gap: (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs()),
        };
        if best.as_ref().is_none_or(|(r, ..)| worst(&res) < worst(r)) {
            best = Some((res, iter, x.clone(), y.clone()));
        }
        if worst(&res) <= options.tol {
            return Ok(finish(problem, x, ymat, res, iter));
        }
        let stalled = best
            .as_ref()
            .is_some_and(|(r, at, ..)| worst(r) <= ACCEPTABLE_TOL && iter >= at + STALL_ITERATIONS);
        if iter == options.max_iterations || stalled {
            break;
        }

        let mu: f64 = (0..nb).map(|i| qlin::inner_re(&x[i], &s[i])).sum::<f64>() / total;
        let Ok(z) = s.iter().map(hermitian_inverse).collect::<Result<Vec<_>>>() else {
            break;
        };
        let fact = Factorized::new(problem.schur(&x, &z));
        let xrdz: Vec<ComplexMatrix> = (0..nb).map(|i| &x[i] * &rd[i] * &z[i]).collect();
        let a_xrdz = problem.apply_coords(&xrdz);

        // Direction for complementarity target R (R S^{-1} - X - X ΔS S^{-1}).
        let direction =
            |r: &[ComplexMatrix]| -> (Vec<ComplexMatrix>, Vec<f64>, Vec<ComplexMatrix>) {
                let rz: Vec<ComplexMatrix> = (0..nb).map(|i| &r[i] * &z[i]).collect();
                let a_rz = problem.apply_coords(&rz);
                let rhs: Vec<f64> = (0..b.len()).map(|k| a_rz[k] - b[k] + a_xrdz[k]).collect();
                let dy = fact.solve(&rhs);
                let atdy = problem.adjoint(&problem.split_coords(&dy));
                let ds: Vec<ComplexMatrix> = (0..nb)
                    .map(|i| hermitian_part(&(&atdy[i] - &rd[i])))
                    .collect();
                let dx: Vec<ComplexMatrix> = (0..nb)
                    .map(|i| hermitian_part(&(&rz[i] - &x[i] - &x[i] * &ds[i] * &z[i])))
                    .collect();
                (dx, dy, ds)
            };
        let steps = |dx: &[ComplexMatrix], ds: &[ComplexMatrix]| -> (f64, f64) {
            let ap = (0..nb)
                .map(|i| max_step(&x[i], &dx[i]))
                .fold(f64::INFINITY, f64::min);
            let ad = (0..nb)
                .map(|i| max_step(&s[i], &ds[i]))
                .fold(f64::INFINITY, f64::min);
            (ap, ad)
        };

        let zero: Vec<ComplexMatrix> = problem.blocks.iter().map(|&d| zeros(d, d)).collect();
        let (dxa, _, dsa) = direction(&zero);
        let (apa, ada) = steps(&dxa, &dsa);
        let (apa, ada) = (apa.min(1.0), ada.min(1.0));
        let mu_aff: f64 = (0..nb)
            .map(|i| {
                qlin::inner_re(
                    &(&x[i] + &dxa[i] * qlin::r(apa)),
                    &(&s[i] + &dsa[i] * qlin::r(ada)),
                )
            })
            .sum::<f64>()
            / total;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
        let target: Vec<ComplexMatrix> = (0..nb)
            .map(|i| identity(problem.blocks[i]) * qlin::r(sigma * mu) - &dxa[i] * &dsa[i])
            .collect();
        let (dx, dy, ds) = direction(&target);
        let (ap, ad) = steps(&dx, &ds);
        let gamma = 0.95;
        let (ap, ad) = ((gamma * ap).min(1.0), (gamma * ad).min(1.0));
        for i in 0..nb {
            x[i] = hermitian_part(&(&x[i] + &dx[i] * qlin::r(ap)));
            s[i] = hermitian_part(&(&s[i] + &ds[i] * qlin::r(ad)));
        }
        for (yk, dk) in y.iter_mut().zip(&dy) {
            *yk += ad * dk;
        }
    }
    let (res, at, x, y) = best.expect("at least one iteration ran");
    if worst(&res) <= ACCEPTABLE_TOL.max(options.tol) {
        return Ok(finish(problem, x, problem.split_coords(&y), res, at));
    }
    Err(Error::Convergence {
        iterations: options.max_iterations,
        primal_residual: res.primal,
        dual_residual: res.dual,
        gap: res.gap,
    })
}

/// Recomputes the slacks from `y` and folds any negativity into the bound.
fn finish(
    problem: &SdpProblem,
    x: Vec<ComplexMatrix>,
    y: Vec<ComplexMatrix>,
    res: Residuals,
    iter: usize,
) -> SdpSolution {
    let raw = problem.dual_objective(&y);
    let slack = slacks(problem, &y);
    let penalty = repair_penalty(problem, &slack);
    SdpSolution {
        primal_value: problem.objective_value(&x),
        dual_value: raw + penalty,
        raw_dual_value: raw,
        primal: x,
        dual: y,
        slack,
        residuals: res,
        iterations: iter,
    }
}

fn slacks(problem: &SdpProblem, y: &[ComplexMatrix]) -> Vec<ComplexMatrix> {
    problem
        .adjoint(y)
        .iter()
        .zip(&problem.objective)
        .map(|(a, c)| hermitian_part(&(a - c)))
        .collect()
}

fn repair_penalty(problem: &SdpProblem, slack: &[ComplexMatrix]) -> f64 {
    slack
        .iter()
        .zip(&problem.trace_bounds)
        .map(|(s, tb)| tb * (-min_eigenvalue(s)).max(0.0))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CertificateCheck {
    pub pass: bool,
    /// Largest of the slack-equality residual and the PSD violation.
    pub max_residual: f64,
    pub equality_residual: f64,
    pub psd_violation: f64,
    /// Upper bound implied by the dual multipliers alone.
    pub certified_value: f64,
}

/// Independently re-verifies the dual part of `solution`: recomputes every
/// slack from the multipliers, checks it against the reported slack and for
/// positive semidefiniteness, and checks that the certified bound covers the
/// reported primal value.
pub fn verify_dual_certificate(problem: &SdpProblem, solution: &SdpSolution) -> CertificateCheck {
    let fail = CertificateCheck {
        pass: false,
        max_residual: f64::INFINITY,
        equality_residual: f64::INFINITY,
        psd_violation: f64::INFINITY,
        certified_value: f64::INFINITY,
    };
    if problem.check().is_err()
        || solution.dual.len() != problem.families.len()
        || solution.slack.len() != problem.blocks.len()
        || solution
            .dual
            .iter()
            .zip(&problem.families)
            .any(|(y, f)| y.nrows() != f.kept || y.ncols() != f.kept)
        || solution
            .slack
            .iter()
            .zip(&problem.blocks)
            .any(|(s, &d)| s.nrows() != d || s.ncols() != d)
    {
        return fail;
    }
    let y: Vec<ComplexMatrix> = solution.dual.iter().map(hermitian_part).collect();
    let recomputed = slacks(problem, &y);
    let equality_residual = recomputed
        .iter()
        .zip(&solution.slack)
        .map(|(a, b)| qlin::max_abs(&(a - b)))
        .fold(0.0, f64::max);
    let psd_violation = solution
        .slack
        .iter()
        .map(|s| (-min_eigenvalue(s)).max(0.0))
        .fold(0.0, f64::max);
    let certified_value = problem.dual_objective(&y) + repair_penalty(problem, &recomputed);
    let max_residual = equality_residual.max(psd_violation);
    let pass = equality_residual <= CERTIFICATE_TOL
        && psd_violation <= 1e-6
        && certified_value >= solution.primal_value - 1e-6
        && (certified_value - solution.dual_value).abs() <= 1e-8;
    CertificateCheck {
        pass,
        max_residual,
        equality_residual,
        psd_violation,
        certified_value,
    }
}

// ---------------------------------------------------------------------------
// Builders

/// `max Σ_i p_i <E_i, ρ_i>` over POVMs `{E_i}`.
pub fn discrimination_sdp(states: &[ComplexMatrix], priors: &[f64]) -> Result<SdpProblem> {
    let Some(first) = states.first() else {
        return Err(Error::Validation("no states to discriminate".into()));
    };
    let d = first.nrows();
    if states.iter().any(|s| s.nrows() != d || s.ncols() != d) || priors.len() != states.len() {
        return Err(Error::Dimension(
            "states must share one dimension and have one prior each".into(),
        ));
    }
    if (priors.iter().sum::<f64>() - 1.0).abs() > 1e-9 || priors.iter().any(|&p| p < 0.0) {
        return Err(Error::Validation(
            "priors must be a probability vector".into(),
        ));
    }
    let m = states.len();
    let family = ConstraintFamily {
        name: "sum to identity".into(),
        kept: d,
        terms: (0..m)
            .map(|i| Term {
                block: i,
                coef: 1.0,
                map: None,
                traced: 1,
            })
            .collect(),
        rhs: identity(d),
    };
    let mut p = SdpProblem {
        blocks: vec![d; m],
        objective: states
            .iter()
            .zip(priors)
            .map(|(s, &p)| hermitian_part(s) * qlin::r(p))
            .collect(),
        objective_constant: 0.0,
        families: vec![family],
        trace_bounds: vec![d as f64; m],
        meta: SdpMeta {
            description: "state discrimination".into(),
            ..Default::default()
        },
    };
    p.meta.n_constraints = p.n_constraints();
    Ok(p)
}

/// `max <C, ρ>` over density matrices.
pub fn density_sdp(c: &ComplexMatrix) -> SdpProblem {
    let d = c.nrows();
    SdpProblem {
        blocks: vec![d],
        objective: vec![hermitian_part(c)],
        objective_constant: 0.0,
        families: vec![ConstraintFamily {
            name: "unit trace".into(),
            kept: 1,
            terms: vec![Term {
                block: 0,
                coef: 1.0,
                map: None,
                traced: d,
            }],
            rhs: identity(1),
        }],
        trace_bounds: vec![1.0],
        meta: SdpMeta {
            description: "maximum over density matrices".into(),
            n_constraints: 1,
            ..Default::default()
        },
    }
}

/// The honest party's view of the cheater: the state on (private, M) is
/// either known or `then · X_block · then*`.
enum View {
    Fixed(ComplexMatrix),
    Var { block: usize, then: ComplexMatrix },
}

/// Orthonormal basis of the support of a PSD matrix, as columns.
fn support_basis(m: &ComplexMatrix) -> ComplexMatrix {
    let (vals, vecs) = qlin::hermitian_eigen(m);
    let top = vals.last().copied().unwrap_or(0.0).max(0.0);
    let keep: Vec<usize> = (0..vals.len())
        .filter(|&i| vals[i] > 1e-10 * top.max(1e-300))
        .collect();
    ComplexMatrix::from_fn(m.nrows(), keep.len(), |r, c| vecs[(r, keep[c])])
}

/// The cheating SDP for `party` forcing the honest party's outcome `target`.
///
/// Variables are states on the honest party's private space and the message,
/// one after every move of the cheater, constrained on the private part.
/// Honest unitaries after the last variable are folded into the objective.
///
/// Each variable is restricted to (support of its private marginal) ⊗ M.
/// Every feasible point lies there, so the value is unchanged, and the
/// restricted problem is strictly feasible.
pub fn build_cheating_sdp(spec: &ProtocolSpec, party: Party, target: &str) -> Result<SdpProblem> {
    let violations = crate::model::validate(spec);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(Error::Validation(list.join("; ")));
    }
    if target == crate::model::ABORT {
        return Err(Error::UnknownLabel(target.into()));
    }
    let honest = party.other();
    let element = spec
        .povm(honest)
        .get(target)
        .ok_or_else(|| Error::UnknownLabel(target.into()))?;
    let (private, dm) = match honest {
        Party::Alice => (spec.dim_a, spec.dim_m),
        Party::Bob => (spec.dim_b, spec.dim_m),
    };
    let d = private * dm;
    // Honest unitaries in (private, M) order.
    let reorder = |u: &ComplexMatrix| -> Result<ComplexMatrix> {
        match honest {
            Party::Alice => Ok(u.clone()),
            Party::Bob => {
                let map: Vec<usize> = (0..d).map(|j| (j % private) * dm + j / private).collect();
                let p = qlin::permutation_matrix(&map)?;
                Ok(&p * u * p.adjoint())
            }
        }
    };

    // Merge consecutive rounds of the same actor.
    let mut merged: Vec<(Party, ComplexMatrix)> = Vec::new();
    for round in &spec.rounds {
        match merged.last_mut() {
            Some((a, u)) if *a == round.actor => *u = &round.unitary * &*u,
            _ => merged.push((round.actor, round.unitary.clone())),
        }
    }

    let mut start = zeros(d, d);
    start[(0, 0)] = qlin::r(1.0);
    let mut view = View::Fixed(start);
    let mut families = Vec::new();
    let mut blocks = Vec::new();
    let mut unreduced_constraints = 0;
    for (actor, u) in &merged {
        if *actor == honest {
            let u = reorder(u)?;
            view = match view {
                View::Fixed(rho) => View::Fixed(&u * rho * u.adjoint()),
                View::Var { block, then } => View::Var {
                    block,
                    then: u * then,
                },
            };
            continue;
        }
        let marginal_support = match &view {
            View::Fixed(rho) => trace_last(rho, dm),
            View::Var { then, .. } => trace_last(&(then * then.adjoint()), dm),
        };
        let basis = support_basis(&marginal_support);
        let rank = basis.ncols();
        let restrict = tensor(&basis.adjoint(), &identity(dm));
        let block = blocks.len();
        blocks.push(rank * dm);
        unreduced_constraints += private * private;
        let own = Term {
            block,
            coef: 1.0,
            map: None,
            traced: dm,
        };
        let (terms, rhs) = match &view {
            View::Fixed(rho) => (
                vec![own],
                hermitian_part(&(basis.adjoint() * trace_last(rho, dm) * &basis)),
            ),
            View::Var { block: prev, then } => (
                vec![
                    own,
                    Term {
                        block: *prev,
                        coef: -1.0,
                        map: Some(&restrict * then),
                        traced: dm,
                    },
                ],
                zeros(rank, rank),
            ),
        };
        families.push(ConstraintFamily {
            name: format!("rho_{block}"),
            kept: rank,
            terms,
            rhs,
        });
        view = View::Var {
            block,
            then: restrict.adjoint(),
        };
    }

    let local_obj = tensor(element, &identity(dm));
    let mut objective: Vec<ComplexMatrix> = blocks.iter().map(|&d| zeros(d, d)).collect();
    let mut constant = 0.0;
    match view {
        View::Fixed(rho) => constant = qlin::inner_re(&local_obj, &rho),
        View::Var { block, then } => {
            objective[block] = hermitian_part(&(then.adjoint() * &local_obj * &then))
        }
    }
    let n_messages = merged.iter().filter(|(a, _)| *a == party).count();
    let n_blocks = blocks.len();
    let mut problem = SdpProblem {
        blocks,
        objective,
        objective_constant: constant,
        families,
        trace_bounds: vec![1.0; n_blocks],
        meta: SdpMeta {
            description: format!("{party} forces {honest}'s outcome `{target}`"),
            party: Some(party),
            target: Some(target.into()),
            n_messages,
            n_round_pairs: merged.len().div_ceil(2),
            n_constraints: 0,
            unreduced_blocks: vec![d; n_blocks],
            unreduced_constraints,
        },
    };
    problem.meta.n_constraints = problem.n_constraints();
    Ok(problem)
}

// ---------------------------------------------------------------------------
// Parameterized-strategy oracle

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BruteForceOptions {
    pub restarts: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Start the first restart from the honest unitaries.
    pub honest_start: bool,
}

impl Default for BruteForceOptions {
    fn default() -> Self {
        BruteForceOptions {
            restarts: 20,
            iterations: 300,
            seed: 0,
            honest_start: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BruteForceResult {
    pub value: f64,
    pub restart_values: Vec<f64>,
    /// Value at the honest starting point, when requested.
    pub honest_value: Option<f64>,
}

fn cayley(a: &ComplexMatrix, t: f64) -> ComplexMatrix {
    let d = a.nrows();
    let half = a * qlin::r(0.5 * t);
    let lhs = identity(d) - &half;
    let rhs = identity(d) + &half;
    lhs.lu().solve(&rhs).unwrap_or_else(|| identity(d))
}

struct Landscape<'a> {
    spec: &'a ProtocolSpec,
    party: Party,
    /// Honest POVM element embedded on its private factor.
    element: ComplexMatrix,
    element_factor: usize,
    cheater_rounds: Vec<usize>,
}

impl Landscape<'_> {
    fn unitaries(&self, v: &[ComplexMatrix]) -> Vec<ComplexMatrix> {
        let mut out: Vec<ComplexMatrix> =
            self.spec.rounds.iter().map(|r| r.unitary.clone()).collect();
        for (slot, vi) in self.cheater_rounds.iter().zip(v) {
            out[*slot] = vi.clone();
        }
        out
    }

    /// Value and Euclidean gradients `Tr_other(|ψ_{i-1}><χ_i|)` per cheater round.
    fn evaluate(&self, v: &[ComplexMatrix], with_gradient: bool) -> (f64, Vec<ComplexMatrix>) {
        let dims = self.spec.layout();
        let us = self.unitaries(v);
        let mut states = Vec::with_capacity(us.len() + 1);
        let mut psi = vec![C64::default(); self.spec.total_dim()];
        psi[0] = qlin::r(1.0);
        states.push(psi.clone());
        for (round, u) in self.spec.rounds.iter().zip(&us) {
            apply_on_factors(&mut psi, &dims, &ProtocolSpec::factors(round.actor), u);
            states.push(psi.clone());
        }
        let mut chi = psi.clone();
        apply_on_factors(&mut chi, &dims, &[self.element_factor], &self.element);
        let value: f64 = psi.iter().zip(&chi).map(|(a, b)| (a.conj() * b).re).sum();
        if !with_gradient {
            return (value, vec![]);
        }
        let mut grads = vec![ComplexMatrix::zeros(0, 0); self.cheater_rounds.len()];
        for i in (0..us.len()).rev() {
            let factors = ProtocolSpec::factors(self.spec.rounds[i].actor);
            if let Some(pos) = self.cheater_rounds.iter().position(|&r| r == i) {
                grads[pos] = local_outer(&states[i], &chi, &dims, self.party);
            }
            apply_on_factors(&mut chi, &dims, &factors, &us[i].adjoint());
        }
        (value, grads)
    }
}

/// `Tr_other(|ψ><χ|)` over the factor the cheater does not act on.
fn local_outer(psi: &[C64], chi: &[C64], dims: &[usize; 3], party: Party) -> ComplexMatrix {
    match party {
        Party::Bob => {
            let other = dims[0];
            let d = dims[1] * dims[2];
            ComplexMatrix::from_fn(d, d, |r, s| {
                (0..other)
                    .map(|a| psi[a * d + r] * chi[a * d + s].conj())
                    .sum()
            })
        }
        Party::Alice => {
            let other = dims[2];
            let d = dims[0] * dims[1];
            ComplexMatrix::from_fn(d, d, |r, s| {
                (0..other)
                    .map(|b| psi[r * other + b] * chi[s * other + b].conj())
                    .sum()
            })
        }
    }
}

/// Best cheating probability found by Riemannian gradient ascent over the
/// cheater's round unitaries, with the cheater's memory fixed to the protocol's
/// private space. Every value is achievable, so it is a lower bound.
pub fn brute_force_cheat(
    spec: &ProtocolSpec,
    party: Party,
    target: &str,
    options: BruteForceOptions,
) -> Result<BruteForceResult> {
    let violations = crate::model::validate(spec);
    if !violations.is_empty() {
        return Err(Error::Validation(format!(
            "{} violations, first: {}",
            violations.len(),
            violations[0]
        )));
    }
    let honest = party.other();
    if target == crate::model::ABORT {
        return Err(Error::UnknownLabel(target.into()));
    }
    let element = spec
        .povm(honest)
        .get(target)
        .ok_or_else(|| Error::UnknownLabel(target.into()))?
        .clone();
    let cheater_rounds: Vec<usize> = spec
        .rounds
        .iter()
        .enumerate()
        .filter(|(_, r)| r.actor == party)
        .map(|(i, _)| i)
        .collect();
    let land = Landscape {
        spec,
        party,
        element,
        element_factor: if honest == Party::Alice { 0 } else { 2 },
        cheater_rounds,
    };
    let local = spec.local_dim(party);
    if local > MAX_BRUTE_FORCE_DIM {
        return Err(Error::Unsupported(format!(
            "cheater dimension {local} exceeds {MAX_BRUTE_FORCE_DIM}"
        )));
    }
    let honest_start = options.honest_start.then(|| -> Vec<ComplexMatrix> {
        land.cheater_rounds
            .iter()
            .map(|&i| spec.rounds[i].unitary.clone())
            .collect()
    });
    let runs: Vec<(f64, f64)> = (0..options.restarts.max(1))
        .into_par_iter()
        .map(|restart| {
            let start = match (&honest_start, restart) {
                (Some(h), 0) => h.clone(),
                _ => {
                    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
                    rng.set_stream(restart as u64);
                    land.cheater_rounds
                        .iter()
                        .map(|_| haar_unitary(local, &mut rng))
                        .collect()
                }
            };
            ascend(&land, start, options.iterations)
        })
        .collect();
    let honest_value = honest_start.is_some().then(|| runs[0].0);
    let restart_values: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let value = restart_values
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(BruteForceResult {
        value,
        restart_values,
        honest_value,
    })
}

/// Polak-Ribière conjugate gradient on the Lie algebra with `V <- cayley(d, t) V`.
/// Returns the starting and final values.
fn ascend(land: &Landscape<'_>, mut v: Vec<ComplexMatrix>, iterations: usize) -> (f64, f64) {
    let dot = |x: &[ComplexMatrix], y: &[ComplexMatrix]| -> f64 {
        x.iter()
            .zip(y)
            .map(|(a, b)| {
                a.iter()
                    .zip(b.iter())
                    .map(|(p, q)| (p.conj() * q).re)
                    .sum::<f64>()
            })
            .sum()
    };
    let (mut value, mut grads) = land.evaluate(&v, true);
    let initial = value;
    let mut step = 1.0;
    let mut prev: Option<(Vec<ComplexMatrix>, Vec<ComplexMatrix>)> = None;
    let mut history = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let grad: Vec<ComplexMatrix> = v
            .iter()
            .zip(&grads)
            .map(|(vi, g)| {
                let bm = vi * g;
                bm.adjoint() - bm
            })
            .collect();
        let norm2 = dot(&grad, &grad);
        if norm2 < 1e-24 {
            break;
        }
        let mut dir = grad.clone();
        if let Some((g_old, d_old)) = &prev {
            let diff: Vec<ComplexMatrix> = grad.iter().zip(g_old).map(|(a, b)| a - b).collect();
            let beta = (dot(&grad, &diff) / dot(g_old, g_old)).max(0.0);
            let cand: Vec<ComplexMatrix> = grad
                .iter()
                .zip(d_old)
                .map(|(g, d)| g + d * qlin::r(beta))
                .collect();
            if dot(&cand, &grad) > 0.0 {
                dir = cand;
            }
        }
        let slope = dot(&dir, &grad);
        let mut accepted = None;
        let mut t = step * 2.0;
        while t > 1e-12 {
            let cand: Vec<ComplexMatrix> = v
                .iter()
                .zip(&dir)
                .map(|(vi, a)| cayley(a, t) * vi)
                .collect();
            let (cv, _) = land.evaluate(&cand, false);
            if cv > value + 1e-4 * t * slope {
                accepted = Some((cand, t, cv));
                break;
            }
            t *= 0.5;
        }
        // Armijo alone accepts steps that jump across a narrow ridge; keep
        // halving while that still improves.
        while let Some((_, t_ok, v_ok)) = &accepted {
            let t = t_ok * 0.5;
            let cand: Vec<ComplexMatrix> = v
                .iter()
                .zip(&dir)
                .map(|(vi, a)| cayley(a, t) * vi)
                .collect();
            let (cv, _) = land.evaluate(&cand, false);
            if cv <= *v_ok {
                break;
            }
            accepted = Some((cand, t, cv));
        }
        let Some((next, t, _)) = accepted else { break };
        v = next;
        step = t;
        prev = Some((grad, dir));
        (value, grads) = land.evaluate(&v, true);
        history.push(value);
        // Stop once twenty iterations gain less than 1e-6 in total.
        if history.len() > 20 && value - history[history.len() - 21] < 1e-6 {
            break;
        }
    }
    (initial, value)
}

/// Smallest eigenvalue of every slack block.
pub fn slack_spectrum(solution: &SdpSolution) -> Vec<f64> {
    solution
        .slack
        .iter()
        .map(|s| hermitian_eigenvalues(s).first().copied().unwrap_or(0.0))
        .collect()
}

mod matrix_list {
    use super::*;
    use crate::qlin::serde_matrix::Matrix;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        m: &[ComplexMatrix],
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        let wrapped: Vec<Matrix> = m.iter().map(|x| Matrix(x.clone())).collect();
        wrapped.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Vec<ComplexMatrix>, D::Error> {
        let wrapped: Vec<Matrix> = Vec::deserialize(d)?;
        Ok(wrapped.into_iter().map(|m| m.0).collect())
    }
}

mod opt_matrix {
    use super::*;
    use crate::qlin::serde_matrix::Matrix;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        m: &Option<ComplexMatrix>,
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        m.as_ref().map(|x| Matrix(x.clone())).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Option<ComplexMatrix>, D::Error> {
        Ok(Option::<Matrix>::deserialize(d)?.map(|m| m.0))
    }
}
