//! Dense complex linear algebra at small dimension.
//!
//! Matrices are `nalgebra::DMatrix<Complex64>`. States and density matrices
//! are thin validated wrappers. Composite spaces use the row-major basis
//! convention: for factor dimensions `[d0, d1, ..., dk]` the basis index of
//! `|i0 i1 ... ik>` is `sum_j i_j * prod_{l > j} d_l`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type ComplexMatrix = DMatrix<C64>;
pub type ComplexVector = DVector<C64>;

/// Tolerance on state normalization and density-matrix hermiticity/trace.
pub const STATE_TOL: f64 = 1e-12;
/// Tolerance on unitarity and idempotence of operators.
pub const OPERATOR_TOL: f64 = 1e-10;
/// Eigenvalue floor for positive semidefiniteness.
pub const PSD_FLOOR: f64 = -1e-10;
/// Tolerance on derived equalities.
pub const DERIVED_TOL: f64 = 1e-9;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn r(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn identity(d: usize) -> ComplexMatrix {
    ComplexMatrix::identity(d, d)
}

pub fn zeros(rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::zeros(rows, cols)
}

/// Computational basis vector `|i>` in dimension `d`.
pub fn ket(d: usize, i: usize) -> ComplexVector {
    let mut v = ComplexVector::zeros(d);
    v[i] = r(1.0);
    v
}

/// `|a><b|`
pub fn outer(a: &ComplexVector, b: &ComplexVector) -> ComplexMatrix {
    a * b.adjoint()
}

/// `|i><i|` in dimension `d`.
pub fn basis_projector(d: usize, i: usize) -> ComplexMatrix {
    let mut m = zeros(d, d);
    m[(i, i)] = r(1.0);
    m
}

/// Diagonal matrix from real entries.
pub fn diag(entries: &[f64]) -> ComplexMatrix {
    let d = entries.len();
    let mut m = zeros(d, d);
    for (i, &e) in entries.iter().enumerate() {
        m[(i, i)] = r(e);
    }
    m
}

/// Kronecker product `a ⊗ b`.
pub fn tensor(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// Kronecker product of a list of matrices, left to right.
pub fn tensor_all(factors: &[&ComplexMatrix]) -> ComplexMatrix {
    let mut acc = identity(1);
    for f in factors {
        acc = acc.kronecker(*f);
    }
    acc
}

pub fn tensor_vec(a: &ComplexVector, b: &ComplexVector) -> ComplexVector {
    a.kronecker(b)
}

pub fn is_finite(m: &ComplexMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Largest absolute entry.
pub fn max_abs(m: &ComplexMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn hermitian_part(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()) * r(0.5)
}

pub fn is_hermitian(m: &ComplexMatrix, tol: f64) -> bool {
    m.is_square() && max_abs(&(m - m.adjoint())) <= tol
}

pub fn is_unitary(m: &ComplexMatrix, tol: f64) -> bool {
    m.is_square() && max_abs(&(m.adjoint() * m - identity(m.nrows()))) <= tol
}

/// Hermitian idempotent within `tol`.
pub fn is_projector(m: &ComplexMatrix, tol: f64) -> bool {
    is_hermitian(m, tol) && max_abs(&(m * m - m)) <= tol
}

/// `Re Tr(a b)`, the real Hilbert-Schmidt pairing for Hermitian `a`, `b`.
pub fn inner_re(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    // Tr(a b) = sum_ij a_ij b_ji
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let x = a[(i, j)] * b[(j, i)];
            acc += x.re;
        }
    }
    acc
}

pub fn trace(m: &ComplexMatrix) -> C64 {
    m.trace()
}

/// Eigen-decomposition of a Hermitian matrix; eigenvalues ascending.
pub fn hermitian_eigen(m: &ComplexMatrix) -> (Vec<f64>, ComplexMatrix) {
    let h = hermitian_part(m);
    let eig = h.symmetric_eigen();
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

pub fn hermitian_eigenvalues(m: &ComplexMatrix) -> Vec<f64> {
    let mut v: Vec<f64> = hermitian_part(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn min_eigenvalue(m: &ComplexMatrix) -> f64 {
    hermitian_eigenvalues(m).first().copied().unwrap_or(0.0)
}

pub fn max_eigenvalue(m: &ComplexMatrix) -> f64 {
    hermitian_eigenvalues(m).last().copied().unwrap_or(0.0)
}

/// Sum of singular values.
pub fn trace_norm(m: &ComplexMatrix) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "trace norm needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    if is_hermitian(m, 1e-14) {
        return Ok(hermitian_eigenvalues(m).iter().map(|x| x.abs()).sum());
    }
    Ok(m.clone().singular_values().iter().sum())
}

/// Matrix with entries from a row-major nested list.
pub fn from_rows(rows: &[Vec<C64>]) -> Result<ComplexMatrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != ncols) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    let m = ComplexMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]);
    if !is_finite(&m) {
        return Err(Error::Validation("matrix has non-finite entries".into()));
    }
    Ok(m)
}

pub fn to_rows(m: &ComplexMatrix) -> Vec<Vec<C64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Ordered factor dimensions of a composite space, e.g. `[dim_A, dim_M, dim_B]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsystemLayout(Vec<usize>);

impl SubsystemLayout {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::Dimension(format!("invalid layout {dims:?}")));
        }
        Ok(Self(dims))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn total(&self) -> usize {
        self.0.iter().product()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Row-major stride of each factor.
    pub fn strides(&self) -> Vec<usize> {
        strides(&self.0)
    }

    fn check_total(&self, dim: usize) -> Result<()> {
        if self.total() != dim {
            return Err(Error::Dimension(format!(
                "layout {:?} has total dimension {} but the operand has dimension {}",
                self.0,
                self.total(),
                dim
            )));
        }
        Ok(())
    }

    fn check_factors(&self, factors: &[usize]) -> Result<()> {
        for (i, &f) in factors.iter().enumerate() {
            if f >= self.0.len() || factors[..i].contains(&f) {
                return Err(Error::Dimension(format!(
                    "factor list {factors:?} invalid for layout {:?}",
                    self.0
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

/// Global-index offsets of every basis element of the listed factors
/// (in the listed order), with all other digits zero.
pub(crate) fn factor_offsets(dims: &[usize], factors: &[usize]) -> Vec<usize> {
    let st = strides(dims);
    let sub: Vec<usize> = factors.iter().map(|&f| dims[f]).collect();
    let total: usize = sub.iter().product();
    let mut out = Vec::with_capacity(total);
    for t in 0..total {
        let mut rem = t;
        let mut off = 0;
        for pos in (0..factors.len()).rev() {
            off += (rem % sub[pos]) * st[factors[pos]];
            rem /= sub[pos];
        }
        out.push(off);
    }
    out
}

fn complement(n: usize, factors: &[usize]) -> Vec<usize> {
    (0..n).filter(|f| !factors.contains(f)).collect()
}

/// Applies `op` to the listed factors of a state vector in place.
///
/// `op` acts on the tensor product of `factors` taken in the listed order.
pub fn apply_on_factors(amps: &mut [C64], dims: &[usize], factors: &[usize], op: &ComplexMatrix) {
    let (targets, rest) = split_offsets(dims, factors);
    apply_with_offsets(amps, &targets, &rest, op);
}

/// Offsets of `factors` and of the remaining factors.
pub(crate) fn split_offsets(dims: &[usize], factors: &[usize]) -> (Vec<usize>, Vec<usize>) {
    (
        factor_offsets(dims, factors),
        factor_offsets(dims, &complement(dims.len(), factors)),
    )
}

pub(crate) fn apply_with_offsets(
    amps: &mut [C64],
    targets: &[usize],
    rest: &[usize],
    op: &ComplexMatrix,
) {
    let n = targets.len();
    debug_assert_eq!(op.nrows(), n);
    let mut buf = vec![C64::default(); n];
    let mut out = vec![C64::default(); n];
    // Protocol operators are mostly permutations and basis projectors.
    let nonzero: Vec<(usize, usize, C64)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter_map(|(i, j)| {
            let z = op[(i, j)];
            (z != C64::default()).then_some((i, j, z))
        })
        .collect();
    if 2 * nonzero.len() < n * n {
        for &base in rest {
            for (slot, &t) in buf.iter_mut().zip(targets) {
                *slot = amps[base + t];
            }
            out.iter_mut().for_each(|o| *o = C64::default());
            for &(i, j, z) in &nonzero {
                out[i] += z * buf[j];
            }
            for (o, &t) in out.iter().zip(targets) {
                amps[base + t] = *o;
            }
        }
        return;
    }
    for &base in rest {
        for (slot, &t) in buf.iter_mut().zip(targets) {
            *slot = amps[base + t];
        }
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = C64::default();
            for (j, b) in buf.iter().enumerate() {
                acc += op[(i, j)] * b;
            }
            *o = acc;
        }
        for (o, &t) in out.iter().zip(targets) {
            amps[base + t] = *o;
        }
    }
}

/// Full-space matrix of `op` acting on the listed factors.
pub fn embed_operator(dims: &[usize], factors: &[usize], op: &ComplexMatrix) -> ComplexMatrix {
    let total: usize = dims.iter().product();
    let mut m = zeros(total, total);
    let mut col = vec![C64::default(); total];
    for j in 0..total {
        col.iter_mut().for_each(|z| *z = C64::default());
        col[j] = r(1.0);
        apply_on_factors(&mut col, dims, factors, op);
        for (i, z) in col.iter().enumerate() {
            m[(i, j)] = *z;
        }
    }
    m
}

/// Partial trace of a square matrix, keeping `keep` (in ascending layout order).
pub fn partial_trace_matrix(
    m: &ComplexMatrix,
    layout: &SubsystemLayout,
    keep: &[usize],
) -> Result<ComplexMatrix> {
    if !m.is_square() {
        return Err(Error::Dimension(
            "partial trace of a non-square matrix".into(),
        ));
    }
    layout.check_total(m.nrows())?;
    layout.check_factors(keep)?;
    let mut keep = keep.to_vec();
    keep.sort_unstable();
    let dims = layout.dims();
    let kept = factor_offsets(dims, &keep);
    let rest = factor_offsets(dims, &complement(dims.len(), &keep));
    let k = kept.len();
    let mut out = zeros(k, k);
    for (i, &oi) in kept.iter().enumerate() {
        for (j, &oj) in kept.iter().enumerate() {
            let mut acc = C64::default();
            for &or in &rest {
                acc += m[(oi + or, oj + or)];
            }
            out[(i, j)] = acc;
        }
    }
    Ok(out)
}

/// Normalized pure state.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: ComplexVector,
}

impl PureState {
    pub fn new(amplitudes: ComplexVector) -> Result<Self> {
        if amplitudes.is_empty()
            || amplitudes
                .iter()
                .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::Validation(
                "state amplitudes must be finite and non-empty".into(),
            ));
        }
        let norm2 = amplitudes.norm_squared();
        if (norm2 - 1.0).abs() > STATE_TOL {
            return Err(Error::Validation(format!(
                "state norm² is {norm2}, expected 1"
            )));
        }
        Ok(Self { amplitudes })
    }

    /// Normalizes a nonzero vector.
    pub fn normalized(amplitudes: ComplexVector) -> Result<Self> {
        let n = amplitudes.norm();
        if !n.is_finite() || n <= 0.0 {
            return Err(Error::Validation(
                "cannot normalize a zero or non-finite vector".into(),
            ));
        }
        Self::new(amplitudes / r(n))
    }

    pub fn from_slice(amps: &[C64]) -> Result<Self> {
        Self::new(ComplexVector::from_column_slice(amps))
    }

    pub fn basis(d: usize, i: usize) -> Self {
        Self {
            amplitudes: ket(d, i),
        }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &ComplexVector {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> ComplexVector {
        self.amplitudes
    }

    /// `<self|other>`
    pub fn inner(&self, other: &PureState) -> C64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    pub fn tensor(&self, other: &PureState) -> PureState {
        PureState {
            amplitudes: self.amplitudes.kronecker(&other.amplitudes),
        }
    }

    pub fn projector(&self) -> ComplexMatrix {
        outer(&self.amplitudes, &self.amplitudes)
    }

    pub fn density(&self) -> DensityMatrix {
        DensityMatrix {
            matrix: self.projector(),
            subnormalized: false,
        }
    }
}

impl Serialize for PureState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v: Vec<[f64; 2]> = self.amplitudes.iter().map(|z| [z.re, z.im]).collect();
        v.serialize(s)
    }
}

/// Density operator. Trace one unless flagged subnormalized (trace ≤ 1).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
    subnormalized: bool,
}

impl DensityMatrix {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        Self::validate(&matrix, false)?;
        Ok(Self {
            matrix,
            subnormalized: false,
        })
    }

    /// Positive semidefinite with trace at most one.
    pub fn new_subnormalized(matrix: ComplexMatrix) -> Result<Self> {
        Self::validate(&matrix, true)?;
        Ok(Self {
            matrix,
            subnormalized: true,
        })
    }

    fn validate(m: &ComplexMatrix, subnormalized: bool) -> Result<()> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::Dimension(
                "density matrix must be square and non-empty".into(),
            ));
        }
        if !is_finite(m) {
            return Err(Error::Validation(
                "density matrix has non-finite entries".into(),
            ));
        }
        if !is_hermitian(m, STATE_TOL) {
            return Err(Error::Validation("density matrix is not Hermitian".into()));
        }
        let lmin = min_eigenvalue(m);
        if lmin < PSD_FLOOR {
            return Err(Error::Validation(format!(
                "density matrix has eigenvalue {lmin:.3e} < 0"
            )));
        }
        let t = m.trace();
        if t.im.abs() > STATE_TOL {
            return Err(Error::Validation("density matrix trace is not real".into()));
        }
        if subnormalized {
            if t.re > 1.0 + STATE_TOL {
                return Err(Error::Validation(format!(
                    "subnormalized trace {} exceeds 1",
                    t.re
                )));
            }
        } else if (t.re - 1.0).abs() > STATE_TOL {
            return Err(Error::Validation(format!("trace is {}, expected 1", t.re)));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn is_subnormalized(&self) -> bool {
        self.subnormalized
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }
}

/// Reduced state on the kept factors.
pub fn partial_trace(
    rho: &DensityMatrix,
    layout: &SubsystemLayout,
    keep: &[usize],
) -> Result<DensityMatrix> {
    let m = partial_trace_matrix(&rho.matrix, layout, keep)?;
    Ok(DensityMatrix {
        matrix: hermitian_part(&m),
        subnormalized: rho.subnormalized,
    })
}

/// Applies a unitary on the listed factors of `state`.
pub fn apply_unitary(
    state: &PureState,
    u: &ComplexMatrix,
    layout: &SubsystemLayout,
    on: &[usize],
) -> Result<PureState> {
    layout.check_total(state.dim())?;
    layout.check_factors(on)?;
    let sub: usize = on.iter().map(|&f| layout.dims()[f]).product();
    if u.nrows() != sub || u.ncols() != sub {
        return Err(Error::Dimension(format!(
            "operator is {}x{} but the targeted factors have dimension {sub}",
            u.nrows(),
            u.ncols()
        )));
    }
    if !is_unitary(u, OPERATOR_TOL) {
        return Err(Error::Validation("operator is not unitary".into()));
    }
    let mut amps: Vec<C64> = state.amplitudes.iter().copied().collect();
    apply_on_factors(&mut amps, layout.dims(), on, u);
    Ok(PureState {
        amplitudes: ComplexVector::from_vec(amps),
    })
}

/// Orthogonal projector onto the span of linearly independent vectors.
pub fn projector_span(vectors: &[PureState]) -> Result<ComplexMatrix> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::Precondition("projector_span needs at least one vector".into()))?;
    let d = first.dim();
    if vectors.iter().any(|v| v.dim() != d) {
        return Err(Error::Dimension("vectors have different dimensions".into()));
    }
    let k = vectors.len();
    let mut basis = zeros(d, k);
    for (j, v) in vectors.iter().enumerate() {
        basis.set_column(j, v.amplitudes());
    }
    let gram = basis.adjoint() * &basis;
    let (values, vecs) = hermitian_eigen(&gram);
    let min = values[0];
    if min <= OPERATOR_TOL {
        return Err(Error::Rank {
            min_eigenvalue: min,
        });
    }
    // Gram^{-1} through its eigen-decomposition.
    let inv_diag = diag(&values.iter().map(|v| 1.0 / v).collect::<Vec<_>>());
    let gram_inv = &vecs * inv_diag * vecs.adjoint();
    Ok(hermitian_part(&(&basis * gram_inv * basis.adjoint())))
}

/// Unitary whose first column is `target` (a Householder reflection, up to a phase).
pub fn unitary_from_first_column(target: &ComplexVector) -> ComplexMatrix {
    let d = target.len();
    let e0 = ket(d, 0);
    let t0 = target[0];
    // Phase so that the reflected vector's first entry is real and non-positive relative to e0.
    let phase = if t0.norm() > 1e-15 {
        t0 / r(t0.norm())
    } else {
        r(1.0)
    };
    let w = target - &e0 * phase;
    let wn = w.norm_squared();
    if wn < 1e-28 {
        return identity(d) * phase;
    }
    // H = I - 2 w w*/|w|²  maps phase*e0 to target (both unit, <w, phase e0> real).
    let h = identity(d) - outer(&w, &w) * r(2.0 / wn);
    // H (phase e0) = target, so H * phase maps e0 to target.
    h * phase
}

/// Unitary permutation matrix sending basis index `j` to `map[j]`.
pub fn permutation_matrix(map: &[usize]) -> Result<ComplexMatrix> {
    let n = map.len();
    let mut seen = vec![false; n];
    let mut m = zeros(n, n);
    for (j, &i) in map.iter().enumerate() {
        if i >= n || seen[i] {
            return Err(Error::Validation("map is not a permutation".into()));
        }
        seen[i] = true;
        m[(i, j)] = r(1.0);
    }
    Ok(m)
}

/// Unitary `F` with `F|0>` uniform: the discrete Fourier transform.
pub fn fourier(d: usize) -> ComplexMatrix {
    let s = 1.0 / (d as f64).sqrt();
    ComplexMatrix::from_fn(d, d, |j, k| {
        let angle = 2.0 * std::f64::consts::PI * (j * k) as f64 / d as f64;
        C64::from_polar(s, angle)
    })
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c(re, im) * (0.5f64).sqrt()
}

/// Haar-random pure state.
pub fn haar_state<R: Rng + ?Sized>(d: usize, rng: &mut R) -> PureState {
    loop {
        let v = ComplexVector::from_fn(d, |_, _| complex_normal(rng));
        if let Ok(s) = PureState::normalized(v) {
            return s;
        }
    }
}

/// Haar-random unitary (QR of a Ginibre matrix with phase correction).
pub fn haar_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> ComplexMatrix {
    let g = ComplexMatrix::from_fn(d, d, |_, _| complex_normal(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let rr = qr.r();
    for j in 0..d {
        let x = rr[(j, j)];
        let ph = if x.norm() > 0.0 {
            x / r(x.norm())
        } else {
            r(1.0)
        };
        for i in 0..d {
            q[(i, j)] *= ph;
        }
    }
    q
}

/// Random full-rank density matrix `G G* / Tr`.
pub fn random_density<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DensityMatrix {
    let g = ComplexMatrix::from_fn(d, d, |_, _| complex_normal(rng));
    let m = &g * g.adjoint();
    let t = m.trace().re;
    DensityMatrix {
        matrix: hermitian_part(&(m / r(t))),
        subnormalized: false,
    }
}

/// Serde support for complex matrices as row-major nested `[re, im]` pairs.
pub mod serde_matrix {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        m: &ComplexMatrix,
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = (0..m.nrows())
            .map(|i| {
                (0..m.ncols())
                    .map(|j| [m[(i, j)].re, m[(i, j)].im])
                    .collect()
            })
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<ComplexMatrix, D::Error> {
        let rows: Vec<Vec<[f64; 2]>> = Vec::deserialize(d)?;
        let rows: Vec<Vec<C64>> = rows
            .into_iter()
            .map(|row| row.into_iter().map(|[a, b]| c(a, b)).collect())
            .collect();
        from_rows(&rows).map_err(serde::de::Error::custom)
    }

    /// Wrapper for use in maps and vectors.
    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct Matrix(#[serde(with = "super::serde_matrix")] pub ComplexMatrix);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn phi(b: usize) -> PureState {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut v = ComplexVector::zeros(9);
        v[b * 3 + b] = r(s);
        v[2 * 3 + 2] = r(s);
        PureState::new(v).unwrap()
    }

    #[test]
    fn tensor_identities() {
        assert_eq!(tensor(&identity(2), &identity(2)), identity(4));
        let t = tensor(&basis_projector(2, 0), &basis_projector(2, 1));
        let mut expected = zeros(4, 4);
        expected[(1, 1)] = r(1.0);
        assert_eq!(t, expected);
    }

    #[test]
    fn phi_state_indices() {
        let p = phi(0);
        let nonzero: Vec<usize> = (0..9).filter(|&i| p.amplitudes()[i].norm() > 0.0).collect();
        assert_eq!(nonzero, vec![0, 8]);
        assert!((p.amplitudes()[0].re - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn partial_trace_examples() {
        let layout = SubsystemLayout::new(vec![3, 3]).unwrap();
        let red = partial_trace(&phi(0).density(), &layout, &[0]).unwrap();
        assert!(max_abs(&(red.matrix() - diag(&[0.5, 0.0, 0.5]))) < 1e-15);

        let bell =
            PureState::from_slice(&[r(0.5f64.sqrt()), r(0.0), r(0.0), r(0.5f64.sqrt())]).unwrap();
        let l2 = SubsystemLayout::new(vec![2, 2]).unwrap();
        let red = partial_trace(&bell.density(), &l2, &[0]).unwrap();
        assert!(max_abs(&(red.matrix() - identity(2) * r(0.5))) < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_density(2, &mut rng);
        let b = random_density(3, &mut rng);
        let prod = DensityMatrix::new(tensor(a.matrix(), b.matrix())).unwrap();
        let l = SubsystemLayout::new(vec![2, 3]).unwrap();
        assert!(max_abs(&(partial_trace(&prod, &l, &[0]).unwrap().matrix() - a.matrix())) < 1e-12);
        assert!(max_abs(&(partial_trace(&prod, &l, &[1]).unwrap().matrix() - b.matrix())) < 1e-12);
    }

    #[test]
    fn partial_trace_rejects_bad_layout() {
        let layout = SubsystemLayout::new(vec![2, 2]).unwrap();
        let rho = phi(0).density();
        assert!(matches!(
            partial_trace(&rho, &layout, &[0]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn trace_norm_examples() {
        let s0 = diag(&[0.5, 0.0, 0.5]);
        let s1 = diag(&[0.0, 0.5, 0.5]);
        assert!((trace_norm(&(s0 - s1)).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(trace_norm(&zeros(3, 3)).unwrap(), 0.0);
        assert!((trace_norm(&identity(5)).unwrap() - 5.0).abs() < 1e-14);
        assert!(matches!(trace_norm(&zeros(2, 3)), Err(Error::Dimension(_))));
    }

    #[test]
    fn apply_unitary_examples() {
        // phase |a> -> (-1)^{x_a}|a> with x0 = 1, x1 = 0, x2 = 0 on the first factor
        let phase = diag(&[-1.0, 1.0, 1.0]);
        let layout = SubsystemLayout::new(vec![3, 3]).unwrap();
        let out = apply_unitary(&phi(0), &phase, &layout, &[0]).unwrap();
        let s = 0.5f64.sqrt();
        assert!((out.amplitudes()[0] - r(-s)).norm() < 1e-15);
        assert!((out.amplitudes()[8] - r(s)).norm() < 1e-15);

        let same = apply_unitary(&phi(1), &identity(3), &layout, &[1]).unwrap();
        assert_eq!(same, phi(1));

        let x = ComplexMatrix::from_row_slice(2, 2, &[r(0.0), r(1.0), r(1.0), r(0.0)]);
        let psi = PureState::from_slice(&[r(0.6), c(0.0, 0.8)]).unwrap();
        let state = PureState::basis(2, 0).tensor(&psi);
        let l = SubsystemLayout::new(vec![2, 2]).unwrap();
        let out = apply_unitary(&state, &x, &l, &[0]).unwrap();
        assert!((out.inner(&PureState::basis(2, 1).tensor(&psi)).norm() - 1.0).abs() < 1e-15);

        let not_unitary = diag(&[1.0, 2.0]);
        assert!(matches!(
            apply_unitary(&state, &not_unitary, &l, &[0]),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn projector_span_examples() {
        let p = projector_span(&[PureState::basis(2, 0)]).unwrap();
        assert_eq!(p, basis_projector(2, 0));

        let s = 0.5f64.sqrt();
        let phi_prime = {
            let mut v = ComplexVector::zeros(9);
            v[0] = r(s);
            v[8] = r(-s);
            PureState::new(v).unwrap()
        };
        let p = projector_span(&[phi(0), phi_prime]).unwrap();
        assert!(is_projector(&p, OPERATOR_TOL));
        assert!((p.trace().re - 2.0).abs() < 1e-12);
        let image = &p * phi(0).amplitudes();
        assert!((image - phi(0).amplitudes()).norm() < 1e-12);

        assert!(matches!(
            projector_span(&[phi(0), phi(0)]),
            Err(Error::Rank { .. })
        ));
    }

    #[test]
    fn householder_first_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for d in [1, 2, 3, 7] {
            let t = haar_state(d, &mut rng);
            let u = unitary_from_first_column(t.amplitudes());
            assert!(is_unitary(&u, 1e-12));
            assert!((u.column(0) - t.amplitudes()).norm() < 1e-12);
        }
        let u = unitary_from_first_column(&ket(4, 0));
        assert!(is_unitary(&u, 1e-12));
        assert!((u.column(0) - ket(4, 0)).norm() < 1e-12);
    }

    #[test]
    fn embed_matches_kronecker() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = haar_unitary(3, &mut rng);
        let full = embed_operator(&[2, 3, 2], &[1], &u);
        let expected = tensor_all(&[&identity(2), &u, &identity(2)]);
        assert!(max_abs(&(full - expected)) < 1e-13);
        // reversed factor order = swap-conjugated operator
        let v = haar_unitary(4, &mut rng);
        let a = embed_operator(&[2, 2], &[1, 0], &v);
        let swap = permutation_matrix(&[0, 2, 1, 3]).unwrap();
        assert!(max_abs(&(a - &swap * &v * &swap)) < 1e-13);
    }
}
