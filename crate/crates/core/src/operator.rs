//! Dense complex operators and the measurement-theoretic types built on them.
//!
//! Everything here works on small square matrices (a qubit, a qutrit, at most
//! a few dozen levels). Values are immutable once constructed; the
//! constructors validate the physical invariants (Hermiticity, positivity,
//! completeness) so downstream code can rely on them.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{CvError, Result};

pub type C64 = Complex64;

/// Absolute floor used by every tolerance-scaled comparison.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Relative tolerance used to merge nearly-equal eigenvalues.
pub const DEFAULT_GROUP_TOL: f64 = 1e-8;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Square complex matrix; the carrier for every operator in the crate.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix(DMatrix<C64>);

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ComplexMatrix{:?}", self.rows())
    }
}

impl ComplexMatrix {
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(CvError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(CvError::InvalidParameter("non-finite matrix entry".into()));
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let n = rows.len();
        for row in rows {
            if row.len() != n {
                return Err(CvError::NotSquare {
                    rows: n,
                    cols: row.len(),
                });
            }
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let rows: Vec<Vec<C64>> = rows.iter().map(|r| r.iter().map(|&x| c(x, 0.0)).collect()).collect();
        Self::from_rows(&rows)
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::zeros(dim, dim))
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        Self(DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                c(values[i], 0.0)
            } else {
                C64::default()
            }
        }))
    }

    pub fn pauli_x() -> Self {
        Self::from_real_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    pub fn pauli_y() -> Self {
        Self::from_rows(&[vec![c(0.0, 0.0), c(0.0, -1.0)], vec![c(0.0, 1.0), c(0.0, 0.0)]]).unwrap()
    }

    pub fn pauli_z() -> Self {
        Self::diag(&[1.0, -1.0])
    }

    /// `|v><v|` (not normalized).
    pub fn outer(v: &[C64]) -> Self {
        let n = v.len();
        Self(DMatrix::from_fn(n, n, |i, j| v[i] * v[j].conj()))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn inner(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<C64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    pub fn rows(&self) -> Vec<Vec<C64>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.0[(i, j)]).collect())
            .collect()
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.map(|z| z * s))
    }

    pub fn scale_complex(&self, s: C64) -> Self {
        Self(self.0.map(|z| z * s))
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    /// `Tr[self * other]` without forming the product.
    pub fn trace_product(&self, other: &Self) -> C64 {
        let n = self.dim();
        let mut acc = C64::default();
        for i in 0..n {
            for k in 0..n {
                acc += self.0[(i, k)] * other.0[(k, i)];
            }
        }
        acc
    }

    /// Largest singular value.
    pub fn op_norm(&self) -> f64 {
        self.0.clone().singular_values().max()
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (&self.0 - self.0.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// `(M + M^dagger) / 2`, used to scrub roundoff from results that are
    /// Hermitian by construction.
    pub fn hermitian_part(&self) -> Self {
        Self((&self.0 + self.0.adjoint()).map(|z| z * 0.5))
    }

    pub fn commutator(&self, other: &Self) -> Self {
        Self(&self.0 * &other.0 - &other.0 * &self.0)
    }

    pub fn anticommutator(&self, other: &Self) -> Self {
        Self(&self.0 * &other.0 + &other.0 * &self.0)
    }

    /// `M rho M^dagger`.
    pub fn sandwich(&self, rho: &Self) -> Self {
        Self(&self.0 * &rho.0 * self.0.adjoint())
    }

    /// Eigen-decomposition of the Hermitian part, eigenvalues in descending
    /// order with matching eigenvector columns.
    pub fn hermitian_eigen(&self) -> (Vec<f64>, DMatrix<C64>) {
        let h = self.hermitian_part();
        let eig = SymmetricEigen::new(h.0);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = DMatrix::from_fn(self.dim(), self.dim(), |i, j| eig.eigenvectors[(i, order[j])]);
        (values, vectors)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let (values, _) = self.hermitian_eigen();
        values.last().copied().unwrap_or(0.0)
    }

    /// Apply a real function to the spectrum of the Hermitian part.
    pub fn hermitian_function(&self, f: impl Fn(f64) -> C64) -> Self {
        let (values, vectors) = self.hermitian_eigen();
        let d = DMatrix::from_diagonal(&DVector::from_iterator(values.len(), values.iter().map(|&x| f(x))));
        Self(&vectors * d * vectors.adjoint())
    }

    /// Principal square root of a PSD operator; tiny negative eigenvalues are
    /// clamped to zero.
    pub fn sqrt_psd(&self) -> Self {
        self.hermitian_function(|x| c(x.max(0.0).sqrt(), 0.0))
    }

    /// `exp(i * angle * H)` for Hermitian `H`.
    pub fn exp_i(&self, angle: f64) -> Self {
        self.hermitian_function(|x| C64::from_polar(1.0, angle * x))
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        is_hermitian(self, tol)
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 - &rhs.0)
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 * &rhs.0)
    }
}

/// True iff every entry of `M - M^dagger` is at most `tol` in modulus.
pub fn is_hermitian(m: &ComplexMatrix, tol: f64) -> bool {
    m.hermiticity_defect() <= tol
}

/// Hermitian operator together with its spectral decomposition
/// `A = sum_k a_k Pi_k` over distinct eigenvalues (descending).
#[derive(Clone, Debug)]
pub struct Observable {
    matrix: ComplexMatrix,
    eigenvalues: Vec<f64>,
    projectors: Vec<ComplexMatrix>,
}

impl Observable {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let group_tol = DEFAULT_GROUP_TOL * matrix.op_norm().max(1.0);
        spectral_decompose(&matrix, group_tol)
    }

    pub fn pauli_z() -> Self {
        Self::new(ComplexMatrix::pauli_z()).unwrap()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn projectors(&self) -> &[ComplexMatrix] {
        &self.projectors
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// Eigenspace dimensions, `Tr[Pi_k]`.
    pub fn multiplicities(&self) -> Vec<usize> {
        self.projectors.iter().map(|p| p.trace().re.round() as usize).collect()
    }

    pub fn is_degenerate(&self) -> bool {
        self.eigenvalues.len() < self.dim()
    }

    pub fn power(&self, n: u32) -> ComplexMatrix {
        let mut acc = ComplexMatrix::zeros(self.dim());
        for (a, p) in self.eigenvalues.iter().zip(&self.projectors) {
            acc = &acc + &p.scale(a.powi(n as i32));
        }
        acc
    }
}

/// Spectral decomposition of a Hermitian matrix. Eigenvalues whose spacing is
/// below `group_tol` share one eigenspace projector.
pub fn spectral_decompose(m: &ComplexMatrix, group_tol: f64) -> Result<Observable> {
    let scale = m.max_abs_entry().max(1.0);
    let deviation = m.hermiticity_defect();
    if deviation > DEFAULT_TOL * scale * 100.0 {
        return Err(CvError::NotHermitian { deviation });
    }
    let (values, vectors) = m.hermitian_eigen();
    let d = m.dim();

    let mut groups: Vec<Vec<usize>> = Vec::new();
    for k in 0..values.len() {
        match groups.last_mut() {
            Some(g) if (values[g[0]] - values[k]).abs() <= group_tol => g.push(k),
            _ => groups.push(vec![k]),
        }
    }

    let mut eigenvalues = Vec::with_capacity(groups.len());
    let mut projectors = Vec::with_capacity(groups.len());
    for g in groups {
        let mean = g.iter().map(|&k| values[k]).sum::<f64>() / g.len() as f64;
        let mut p = DMatrix::<C64>::zeros(d, d);
        for &k in &g {
            let col = vectors.column(k);
            p += &col * col.adjoint();
        }
        eigenvalues.push(mean);
        projectors.push(ComplexMatrix(p).hermitian_part());
    }
    Ok(Observable {
        matrix: m.clone(),
        eigenvalues,
        projectors,
    })
}

/// A density operator: Hermitian, positive semidefinite, unit trace.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    matrix: ComplexMatrix,
}

impl DensityOperator {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        Self::with_tol(matrix, DEFAULT_TOL)
    }

    pub fn with_tol(matrix: ComplexMatrix, tol: f64) -> Result<Self> {
        let deviation = matrix.hermiticity_defect();
        if deviation > tol {
            return Err(CvError::NotHermitian { deviation });
        }
        let trace = matrix.trace().re;
        if (trace - 1.0).abs() > tol.max(1e-12) * 10.0 {
            return Err(CvError::TraceNotOne { trace });
        }
        let min_eigenvalue = matrix.min_eigenvalue();
        if min_eigenvalue < -tol {
            return Err(CvError::NotPositive { min_eigenvalue });
        }
        Ok(Self {
            matrix: matrix.hermitian_part(),
        })
    }

    /// Skip validation for matrices that are valid states by construction.
    pub(crate) fn trusted(matrix: ComplexMatrix) -> Self {
        Self {
            matrix: matrix.hermitian_part(),
        }
    }

    /// `|psi><psi|` for a (not necessarily normalized) state vector.
    pub fn pure(psi: &[C64]) -> Result<Self> {
        let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if !(norm2 > 0.0) || !norm2.is_finite() {
            return Err(CvError::InvalidParameter("zero state vector".into()));
        }
        Ok(Self::trusted(ComplexMatrix::outer(psi).scale(1.0 / norm2)))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self::trusted(ComplexMatrix::identity(dim).scale(1.0 / dim as f64))
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// `Tr[A rho]`, real part.
    pub fn expectation(&self, a: &ComplexMatrix) -> f64 {
        a.trace_product(&self.matrix).re
    }
}

/// Qubit state `(cos(angle/2), sin(angle/2))` in the z basis.
pub fn psi(angle: f64) -> Vec<C64> {
    vec![c((angle / 2.0).cos(), 0.0), c((angle / 2.0).sin(), 0.0)]
}

/// Ordered Kraus operators with their POVM `E_j = M_j^dagger M_j`.
#[derive(Clone, Debug)]
pub struct MeasurementContext {
    kraus: Vec<ComplexMatrix>,
    povm: Vec<ComplexMatrix>,
}

impl MeasurementContext {
    pub fn from_kraus(kraus: Vec<ComplexMatrix>, tol: f64) -> Result<Self> {
        context_from_kraus(kraus, tol)
    }

    /// Pure POVM: Kraus operators are the PSD square roots of the effects.
    pub fn from_povm(povm: Vec<ComplexMatrix>, tol: f64) -> Result<Self> {
        for e in &povm {
            let deviation = e.hermiticity_defect();
            if deviation > tol {
                return Err(CvError::NotHermitian { deviation });
            }
            let min_eigenvalue = e.min_eigenvalue();
            if min_eigenvalue < -tol {
                return Err(CvError::NotPositive { min_eigenvalue });
            }
        }
        context_from_kraus(povm.iter().map(ComplexMatrix::sqrt_psd).collect(), tol)
    }

    /// Projective measurement in the computational basis.
    pub fn computational(dim: usize) -> Self {
        let kraus: Vec<_> = (0..dim)
            .map(|k| {
                let mut v = vec![0.0; dim];
                v[k] = 1.0;
                ComplexMatrix::diag(&v)
            })
            .collect();
        Self::trusted(kraus)
    }

    /// Two-outcome projective measurement onto `|f>` and its complement.
    pub fn projective_onto(f: &[C64]) -> Result<Self> {
        let norm2: f64 = f.iter().map(|z| z.norm_sqr()).sum();
        if !(norm2 > 0.0) {
            return Err(CvError::InvalidParameter("zero postselection vector".into()));
        }
        let p = ComplexMatrix::outer(f).scale(1.0 / norm2);
        let q = &ComplexMatrix::identity(f.len()) - &p;
        Ok(Self::trusted(vec![p, q]))
    }

    pub(crate) fn trusted(kraus: Vec<ComplexMatrix>) -> Self {
        let povm = kraus.iter().map(|m| (&m.adjoint() * m).hermitian_part()).collect();
        Self { kraus, povm }
    }

    pub fn kraus(&self) -> &[ComplexMatrix] {
        &self.kraus
    }

    pub fn povm(&self) -> &[ComplexMatrix] {
        &self.povm
    }

    pub fn len(&self) -> usize {
        self.kraus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kraus.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.kraus[0].dim()
    }

    /// The same context with every Kraus operator followed by `u`
    /// (`M_j -> u M_j`); the POVM is unchanged only if `u` is unitary.
    pub fn followed_by(&self, u: &ComplexMatrix) -> Self {
        Self::trusted(self.kraus.iter().map(|m| u * m).collect())
    }

    /// The same context with every Kraus operator preceded by `u`.
    pub fn preceded_by(&self, u: &ComplexMatrix) -> Self {
        Self::trusted(self.kraus.iter().map(|m| m * u).collect())
    }
}

pub fn context_from_kraus(kraus: Vec<ComplexMatrix>, tol: f64) -> Result<MeasurementContext> {
    let first = kraus.first().ok_or(CvError::EmptyContext)?;
    let d = first.dim();
    for m in &kraus {
        if m.dim() != d {
            return Err(CvError::DimensionMismatch {
                expected: d,
                found: m.dim(),
            });
        }
    }
    let ctx = MeasurementContext::trusted(kraus);
    let mut total = ComplexMatrix::zeros(d);
    for e in &ctx.povm {
        total = &total + e;
    }
    let residual = (&total - &ComplexMatrix::identity(d)).op_norm();
    if residual > tol {
        return Err(CvError::IncompleteContext { residual });
    }
    Ok(ctx)
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        Err(CvError::DimensionMismatch { expected, found })
    } else {
        Ok(())
    }
}

pub(crate) fn ensure_dim(expected: usize, found: usize) -> Result<()> {
    check_dim(expected, found)
}

/// `P_j = Tr[E_j rho]`, clamped to `[0, 1]`.
pub fn outcome_probabilities(ctx: &MeasurementContext, rho: &DensityOperator) -> Result<Vec<f64>> {
    check_dim(ctx.dim(), rho.dim())?;
    Ok(ctx.povm().iter().map(|e| rho.expectation(e).clamp(0.0, 1.0)).collect())
}

/// Probability floor below which a branch counts as impossible.
pub const BRANCH_TOL: f64 = 1e-12;

/// Kraus update `rho -> M rho M^dagger / p` with `p = Tr[M rho M^dagger]`.
pub fn state_update(m: &ComplexMatrix, rho: &DensityOperator) -> Result<(DensityOperator, f64)> {
    check_dim(m.dim(), rho.dim())?;
    let unnormalized = m.sandwich(rho.matrix());
    let probability = unnormalized.trace().re;
    if probability <= BRANCH_TOL {
        return Err(CvError::ZeroProbabilityBranch { probability });
    }
    Ok((
        DensityOperator::trusted(unnormalized.scale(1.0 / probability)),
        probability,
    ))
}

/// Orthonormal completion of the column span of `basis` using the standard
/// basis vectors in order (modified Gram-Schmidt, two passes).
fn complete_basis(basis: &[DVector<C64>], dim: usize) -> Vec<DVector<C64>> {
    let mut all: Vec<DVector<C64>> = basis.to_vec();
    let mut extra = Vec::new();
    for k in 0..dim {
        if all.len() == dim {
            break;
        }
        let mut v = DVector::<C64>::zeros(dim);
        v[k] = c(1.0, 0.0);
        for _ in 0..2 {
            for b in &all {
                let overlap = b.dotc(&v);
                v -= b * overlap;
            }
        }
        let norm = v.norm();
        if norm > 1e-6 {
            v /= c(norm, 0.0);
            all.push(v.clone());
            extra.push(v);
        }
    }
    extra
}

/// Polar decomposition `M = U P` with `P = (M^dagger M)^{1/2}`.
///
/// On the kernel of `P` the unitary is completed by mapping the
/// Gram-Schmidt completion of the support onto the Gram-Schmidt completion of
/// the range, both seeded with the standard basis, so the result is
/// reproducible for rank-deficient input.
pub fn polar_decompose(m: &ComplexMatrix) -> (ComplexMatrix, ComplexMatrix) {
    let d = m.dim();
    let svd = m.inner().clone().svd(true, true);
    let w = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let sigma = svd.singular_values;
    let sigma_max = sigma.max();
    let cutoff = DEFAULT_TOL * sigma_max.max(f64::MIN_POSITIVE);

    let mut u = DMatrix::<C64>::zeros(d, d);
    let mut p = DMatrix::<C64>::zeros(d, d);
    let mut support = Vec::new();
    let mut range = Vec::new();
    for k in 0..sigma.len() {
        let vk: DVector<C64> = v_t.row(k).adjoint();
        let wk: DVector<C64> = w.column(k).into_owned();
        p += &vk * vk.adjoint() * c(sigma[k], 0.0);
        if sigma[k] > cutoff {
            u += &wk * vk.adjoint();
            support.push(vk);
            range.push(wk);
        }
    }
    let kernel = complete_basis(&support, d);
    let co_range = complete_basis(&range, d);
    for (z, r) in kernel.iter().zip(&co_range) {
        u += r * z.adjoint();
    }
    (ComplexMatrix(u), ComplexMatrix(p).hermitian_part())
}

/// True iff every polar unitary of the context leaves `rho` invariant to
/// `tol` in operator norm.
pub fn minimal_disturbance_check(ctx: &MeasurementContext, rho: &DensityOperator, tol: f64) -> bool {
    ctx.kraus().iter().all(|m| {
        let (u, _) = polar_decompose(m);
        (&u.sandwich(rho.matrix()) - rho.matrix()).op_norm() <= tol
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn assert_close(a: &ComplexMatrix, b: &ComplexMatrix, tol: f64) {
        let diff = (a - b).max_abs_entry();
        assert!(diff <= tol, "matrices differ by {diff:e}");
    }

    #[test]
    fn hermiticity() {
        assert!(is_hermitian(&ComplexMatrix::identity(2), 1e-12));
        assert!(is_hermitian(&ComplexMatrix::pauli_y(), 1e-12));
        let raising = ComplexMatrix::from_real_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert!(!is_hermitian(&raising, 1e-12));
    }

    #[test]
    fn non_square_rejected() {
        let err = ComplexMatrix::new(DMatrix::zeros(2, 3)).unwrap_err();
        assert!(matches!(err, CvError::NotSquare { .. }));
    }

    #[test]
    fn spectral_sigma_z() {
        let obs = Observable::pauli_z();
        assert_eq!(obs.eigenvalues(), &[1.0, -1.0]);
        assert_close(&obs.projectors()[0], &ComplexMatrix::diag(&[1.0, 0.0]), 1e-14);
        assert_close(&obs.projectors()[1], &ComplexMatrix::diag(&[0.0, 1.0]), 1e-14);
    }

    #[test]
    fn spectral_identity_is_fully_degenerate() {
        let obs = Observable::new(ComplexMatrix::identity(3)).unwrap();
        assert_eq!(obs.eigenvalues().len(), 1);
        assert_abs_diff_eq!(obs.eigenvalues()[0], 1.0, epsilon = 1e-14);
        assert_close(&obs.projectors()[0], &ComplexMatrix::identity(3), 1e-12);
        assert_eq!(obs.multiplicities(), vec![3]);
    }

    #[test]
    fn spectral_sigma_x() {
        let sx = ComplexMatrix::pauli_x();
        let obs = Observable::new(sx.clone()).unwrap();
        assert_eq!(obs.eigenvalues().len(), 2);
        assert_abs_diff_eq!(obs.eigenvalues()[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(obs.eigenvalues()[1], -1.0, epsilon = 1e-14);
        let id = ComplexMatrix::identity(2);
        let plus = (&id + &sx).scale(0.5);
        let minus = (&id - &sx).scale(0.5);
        assert_close(&obs.projectors()[0], &plus, 1e-14);
        assert_close(&obs.projectors()[1], &minus, 1e-14);
        // oracle: idempotence and reconstruction by direct multiplication
        assert_close(&(&plus * &plus), &plus, 1e-15);
        assert_close(&(&plus - &minus), &sx, 1e-15);
    }

    #[test]
    fn spectral_rejects_non_hermitian() {
        let raising = ComplexMatrix::from_real_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(Observable::new(raising), Err(CvError::NotHermitian { .. })));
    }

    fn polarization_kraus(gamma: f64) -> Vec<ComplexMatrix> {
        let gbar = (1.0 - gamma * gamma).sqrt();
        vec![ComplexMatrix::diag(&[gamma, gbar]), ComplexMatrix::diag(&[gbar, gamma])]
    }

    #[test]
    fn projective_context_is_its_own_povm() {
        let ctx = MeasurementContext::computational(2);
        assert_close(&ctx.povm()[0], &ctx.kraus()[0], 0.0);
        assert_close(&ctx.povm()[1], &ctx.kraus()[1], 0.0);
    }

    #[test]
    fn polarization_povm() {
        let gamma = 0.75f64.sqrt();
        let ctx = context_from_kraus(polarization_kraus(gamma), 1e-12).unwrap();
        let g = gamma * gamma - (1.0 - gamma * gamma);
        let id = ComplexMatrix::identity(2);
        let sz = ComplexMatrix::pauli_z();
        assert_close(&ctx.povm()[0], &(&id + &sz.scale(g)).scale(0.5), 1e-15);
        assert_close(&ctx.povm()[1], &(&id - &sz.scale(g)).scale(0.5), 1e-15);
    }

    #[test]
    fn incomplete_context() {
        let err = context_from_kraus(vec![ComplexMatrix::identity(2).scale(0.5)], 1e-10).unwrap_err();
        match err {
            CvError::IncompleteContext { residual } => assert_abs_diff_eq!(residual, 0.75, epsilon = 1e-14),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mismatched_kraus_dims() {
        let err = context_from_kraus(vec![ComplexMatrix::identity(2), ComplexMatrix::identity(3)], 1e-10).unwrap_err();
        assert!(matches!(err, CvError::DimensionMismatch { .. }));
    }

    #[test]
    fn probabilities() {
        let h = DensityOperator::pure(&psi(0.0)).unwrap();
        let ctx = MeasurementContext::computational(2);
        assert_eq!(outcome_probabilities(&ctx, &h).unwrap(), vec![1.0, 0.0]);

        let mixed = DensityOperator::maximally_mixed(2);
        let weak = context_from_kraus(polarization_kraus((0.75f64).sqrt()), 1e-12).unwrap();
        let p = outcome_probabilities(&weak, &mixed).unwrap();
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.5, epsilon = 1e-15);

        // oracle: Tr[(1 + g sz)/2 |H><H|] = (1 + g)/2
        for gamma2 in [0.6, 0.75, 0.9] {
            let g: f64 = 2.0 * gamma2 - 1.0;
            let ctx = context_from_kraus(polarization_kraus(gamma2.sqrt()), 1e-12).unwrap();
            let p = outcome_probabilities(&ctx, &h).unwrap();
            assert_abs_diff_eq!(p[0], (1.0 + g) / 2.0, epsilon = 1e-14);
            assert_abs_diff_eq!(p[1], (1.0 - g) / 2.0, epsilon = 1e-14);
        }

        let rho3 = DensityOperator::maximally_mixed(3);
        assert!(matches!(
            outcome_probabilities(&ctx, &rho3),
            Err(CvError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn kraus_updates() {
        let h = DensityOperator::pure(&psi(0.0)).unwrap();
        let (same, p) = state_update(&ComplexMatrix::identity(2), &h).unwrap();
        assert_eq!(p, 1.0);
        assert_close(same.matrix(), h.matrix(), 0.0);

        let ctx = MeasurementContext::computational(2);
        let (post, p) = state_update(&ctx.kraus()[0], &h).unwrap();
        assert_eq!(p, 1.0);
        assert_close(post.matrix(), h.matrix(), 0.0);

        assert!(matches!(
            state_update(&ctx.kraus()[1], &h),
            Err(CvError::ZeroProbabilityBranch { .. })
        ));
    }

    #[test]
    fn density_validation() {
        let not_unit = ComplexMatrix::identity(2);
        assert!(matches!(
            DensityOperator::new(not_unit),
            Err(CvError::TraceNotOne { .. })
        ));
        let negative = ComplexMatrix::diag(&[1.5, -0.5]);
        assert!(matches!(
            DensityOperator::new(negative),
            Err(CvError::NotPositive { .. })
        ));
        let raising = ComplexMatrix::from_real_rows(&[vec![0.5, 1.0], vec![0.0, 0.5]]).unwrap();
        assert!(matches!(
            DensityOperator::new(raising),
            Err(CvError::NotHermitian { .. })
        ));
    }

    #[test]
    fn polar_of_psd_and_unitary() {
        let e = ComplexMatrix::from_rows(&[vec![c(0.7, 0.0), c(0.1, 0.2)], vec![c(0.1, -0.2), c(0.4, 0.0)]]).unwrap();
        let (u, p) = polar_decompose(&e);
        assert_close(&u, &ComplexMatrix::identity(2), 1e-12);
        assert_close(&p, &e, 1e-12);

        let rot = ComplexMatrix::pauli_x().exp_i(0.4);
        let (u, p) = polar_decompose(&rot);
        assert_close(&u, &rot, 1e-12);
        assert_close(&p, &ComplexMatrix::identity(2), 1e-12);
    }

    #[test]
    fn polar_recovers_rotated_effect() {
        let id = ComplexMatrix::identity(2);
        let e = (&id + &ComplexMatrix::pauli_z().scale(0.3)).scale(0.5);
        let root = e.sqrt_psd();
        let rot = ComplexMatrix::pauli_x().exp_i(0.2);
        let m = &rot * &root;
        let (u, p) = polar_decompose(&m);
        assert_close(&u, &rot, 1e-12);
        assert_close(&p, &root, 1e-12);
    }

    #[test]
    fn polar_rank_deficient_is_deterministic() {
        let proj = ComplexMatrix::diag(&[1.0, 0.0]);
        let (u, p) = polar_decompose(&proj);
        assert_close(&u, &ComplexMatrix::identity(2), 1e-14);
        assert_close(&p, &proj, 1e-14);

        let zero = ComplexMatrix::zeros(2);
        let (u, p) = polar_decompose(&zero);
        assert_close(&u, &ComplexMatrix::identity(2), 0.0);
        assert_close(&p, &zero, 0.0);

        // |+><H|: range |+>, support |H>; kernel |V> maps onto |->
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let m = ComplexMatrix::from_real_rows(&[vec![s, 0.0], vec![s, 0.0]]).unwrap();
        let (u, p) = polar_decompose(&m);
        assert_close(&(&u * &p), &m, 1e-14);
        assert_close(&(&u.adjoint() * &u), &ComplexMatrix::identity(2), 1e-14);
    }

    #[test]
    fn minimal_disturbance() {
        let gamma = 0.8f64;
        let pure = context_from_kraus(polarization_kraus(gamma), 1e-12).unwrap();
        let rho = DensityOperator::pure(&[c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        assert!(minimal_disturbance_check(&pure, &rho, 1e-10));

        let g = 0.3;
        let z_kicked: Vec<_> = pure
            .kraus()
            .iter()
            .map(|m| &ComplexMatrix::pauli_z().exp_i(g) * m)
            .collect();
        let z_ctx = context_from_kraus(z_kicked, 1e-12).unwrap();
        let diag = DensityOperator::new(ComplexMatrix::diag(&[0.3, 0.7])).unwrap();
        assert!(minimal_disturbance_check(&z_ctx, &diag, 1e-10));

        let x_kicked: Vec<_> = pure
            .kraus()
            .iter()
            .map(|m| &ComplexMatrix::pauli_x().exp_i(g) * m)
            .collect();
        let x_ctx = context_from_kraus(x_kicked, 1e-12).unwrap();
        let h = DensityOperator::pure(&psi(0.0)).unwrap();
        // oracle: e^{ig sx}|H><H|e^{-ig sx} differs from |H><H| by sin(g)
        // in operator norm
        let u = ComplexMatrix::pauli_x().exp_i(g);
        let dist = (&u.sandwich(h.matrix()) - h.matrix()).op_norm();
        assert_abs_diff_eq!(dist, g.sin(), epsilon = 1e-12);
        assert!(!minimal_disturbance_check(&x_ctx, &h, 1e-10));
    }
}
