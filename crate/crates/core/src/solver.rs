//! Least-redundant contextual values.
//!
//! Given an observable `A` and a POVM `{E_j}`, find real values `alpha_j`
//! with `sum_j alpha_j E_j = A`. When more outcomes than constraints are
//! available the system is underdetermined and the minimum-norm solution
//! `alpha_0 = F^+ a` is selected through the SVD pseudoinverse.
//!
//! Two constraint maps are supported:
//!
//! * **commuting**: when every `E_j` commutes with `A`, the equation reduces
//!   to `F alpha = a` over the distinct eigenvalues of `A`, with
//!   `F_kj = Tr[Pi_k E_j]` and right-hand side `a_k Tr[Pi_k]`;
//! * **general operator space**: otherwise each `E_j` is expanded in an
//!   orthonormal Hermitian (generalized Gell-Mann) basis and the identical
//!   pseudoinverse rule is applied to the resulting `d^2 x N` real system.
//!   This is an extension of the commuting construction.

use nalgebra::{DMatrix, DVector};

use crate::error::{CvError, Result};
use crate::operator::{ensure_dim, ComplexMatrix, MeasurementContext, Observable};

pub const DEFAULT_SVD_TOL: f64 = 1e-10;
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Singular values at or below `svd_tol * sigma_max` are treated as zero.
    pub svd_tol: f64,
    /// A solution is exact when its operator-norm residual is at most
    /// `residual_tol * max(||A||, 1)`.
    pub residual_tol: f64,
    /// Commutator (Frobenius) norm below which operators count as commuting.
    pub commute_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            svd_tol: DEFAULT_SVD_TOL,
            residual_tol: DEFAULT_RESIDUAL_TOL,
            commute_tol: 1e-10,
        }
    }
}

impl SolverOptions {
    pub fn with_svd_tol(svd_tol: f64) -> Self {
        Self {
            svd_tol,
            ..Self::default()
        }
    }
}

/// `F_kj = Tr[Pi_k E_j]`, one row per distinct eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastMatrix {
    entries: DMatrix<f64>,
}

impl ContrastMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if k == 0 || n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(CvError::InvalidParameter("ragged or empty contrast matrix".into()));
        }
        if rows.iter().flatten().any(|x| !x.is_finite()) {
            return Err(CvError::InvalidParameter("non-finite contrast entry".into()));
        }
        Ok(Self {
            entries: DMatrix::from_fn(k, n, |i, j| rows[i][j]),
        })
    }

    pub fn from_matrix(entries: DMatrix<f64>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.entries[(k, j)]
    }
}

/// Thin SVD with singular values sorted descending and a fixed sign
/// convention: the largest-magnitude entry of each right singular vector is
/// positive (first such entry on ties).
pub(crate) struct RealSvd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v: DMatrix<f64>,
}

impl RealSvd {
    pub fn new(a: &DMatrix<f64>) -> Self {
        let svd = a.clone().svd(true, true);
        let u = svd.u.expect("u requested");
        let v_t = svd.v_t.expect("v_t requested");
        let s = svd.singular_values;
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.sort_by(|&x, &y| s[y].total_cmp(&s[x]));

        let mut uu = DMatrix::zeros(a.nrows(), order.len());
        let mut vv = DMatrix::zeros(a.ncols(), order.len());
        let mut sv = Vec::with_capacity(order.len());
        for (col, &k) in order.iter().enumerate() {
            let mut vk: DVector<f64> = v_t.row(k).transpose();
            let mut uk: DVector<f64> = u.column(k).into_owned();
            if leading_entry(vk.as_slice()) < 0.0 {
                vk.neg_mut();
                uk.neg_mut();
            }
            uu.set_column(col, &uk);
            vv.set_column(col, &vk);
            sv.push(s[k]);
        }
        Self {
            u: uu,
            singular_values: sv,
            v: vv,
        }
    }

    pub fn cutoff(&self, svd_tol: f64) -> f64 {
        svd_tol * self.singular_values.first().copied().unwrap_or(0.0)
    }

    pub fn rank(&self, svd_tol: f64) -> usize {
        let cutoff = self.cutoff(svd_tol);
        self.singular_values.iter().filter(|&&s| s > cutoff && s > 0.0).count()
    }

    pub fn pseudoinverse(&self, svd_tol: f64) -> DMatrix<f64> {
        let r = self.rank(svd_tol);
        let mut pinv = DMatrix::zeros(self.v.nrows(), self.u.nrows());
        for k in 0..r {
            pinv += self.v.column(k) * self.u.column(k).transpose() / self.singular_values[k];
        }
        pinv
    }

    /// Orthonormal basis of the row space (right singular vectors with
    /// nonzero singular value), as columns.
    pub fn row_space(&self, svd_tol: f64) -> DMatrix<f64> {
        self.v.columns(0, self.rank(svd_tol)).into_owned()
    }
}

fn leading_entry(v: &[f64]) -> f64 {
    let mut best = 0.0f64;
    for &x in v {
        if x.abs() > best.abs() {
            best = x;
        }
    }
    best
}

/// Orthonormal basis of the orthogonal complement of the column span of
/// `basis` (orthonormal columns, `n x r`), from the trailing columns of the
/// Householder `Q` of `basis`.
pub(crate) fn orthogonal_complement(basis: &DMatrix<f64>) -> Vec<Vec<f64>> {
    let n = basis.nrows();
    let r = basis.ncols();
    let mut work = basis.clone();
    let mut reflectors: Vec<DVector<f64>> = Vec::with_capacity(r);
    for k in 0..r {
        let x: DVector<f64> = work.column(k).rows(k, n - k).into_owned();
        let alpha = -x[0].signum() * x.norm();
        let alpha = if alpha == 0.0 { -x.norm() } else { alpha };
        let mut w = x;
        w[0] -= alpha;
        let wn = w.norm();
        let mut full = DVector::zeros(n);
        if wn > 0.0 {
            full.rows_mut(k, n - k).copy_from(&(w / wn));
        }
        for col in 0..r {
            let dot = full.dot(&work.column(col));
            let update = &full * (2.0 * dot);
            let mut c = work.column_mut(col);
            c -= update;
        }
        reflectors.push(full);
    }
    (r..n)
        .map(|j| {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            for w in reflectors.iter().rev() {
                let dot = w.dot(&e);
                e -= w * (2.0 * dot);
            }
            if leading_entry(e.as_slice()) < 0.0 {
                e.neg_mut();
            }
            e.iter().copied().collect()
        })
        .collect()
}

/// Moore-Penrose pseudoinverse `F^+ = V Sigma^+ U^T`, zeroing singular values
/// at or below `svd_tol` times the largest one.
pub fn pseudoinverse(f: &ContrastMatrix, svd_tol: f64) -> DMatrix<f64> {
    RealSvd::new(&f.entries).pseudoinverse(svd_tol)
}

/// Orthonormal basis of `{x : F x = 0}`.
pub fn null_space(f: &ContrastMatrix, svd_tol: f64) -> Vec<Vec<f64>> {
    let svd = RealSvd::new(&f.entries);
    orthogonal_complement(&svd.row_space(svd_tol))
}

/// Largest Frobenius norm of `[E_j, A]` (and of `[E_j, E_k]` when `A` is
/// degenerate, since only then is joint diagonalizability not implied).
pub fn commutation_defect(obs: &Observable, ctx: &MeasurementContext) -> f64 {
    let a = obs.matrix();
    let mut worst = ctx
        .povm()
        .iter()
        .map(|e| e.commutator(a).inner().norm())
        .fold(0.0, f64::max);
    if obs.is_degenerate() {
        let povm = ctx.povm();
        for j in 0..povm.len() {
            for k in j + 1..povm.len() {
                worst = worst.max(povm[j].commutator(&povm[k]).inner().norm());
            }
        }
    }
    worst
}

pub fn build_contrast_matrix(obs: &Observable, ctx: &MeasurementContext, commute_tol: f64) -> Result<ContrastMatrix> {
    ensure_dim(obs.dim(), ctx.dim())?;
    let norm = commutation_defect(obs, ctx);
    if norm > commute_tol * obs.matrix().op_norm().max(1.0) {
        return Err(CvError::NonCommutingContext { norm });
    }
    Ok(raw_contrast_matrix(obs, ctx))
}

fn raw_contrast_matrix(obs: &Observable, ctx: &MeasurementContext) -> ContrastMatrix {
    let k = obs.projectors().len();
    let n = ctx.len();
    let entries = DMatrix::from_fn(k, n, |row, col| {
        let t = obs.projectors()[row].trace_product(&ctx.povm()[col]);
        debug_assert!(t.im.abs() <= 1e-12 * t.re.abs().max(1.0));
        t.re
    });
    ContrastMatrix { entries }
}

/// Real coordinates of a Hermitian matrix in the orthonormal generalized
/// Gell-Mann basis (identity / sqrt(d) first, then the diagonal generators,
/// then symmetric and antisymmetric off-diagonal pairs).
pub fn hermitian_coordinates(h: &ComplexMatrix) -> Vec<f64> {
    let d = h.dim();
    let mut out = Vec::with_capacity(d * d);
    let diag: Vec<f64> = (0..d).map(|m| h.get(m, m).re).collect();
    out.push(diag.iter().sum::<f64>() / (d as f64).sqrt());
    let mut prefix = 0.0;
    for l in 1..d {
        prefix += diag[l - 1];
        let lf = l as f64;
        out.push((prefix - lf * diag[l]) / (lf * (lf + 1.0)).sqrt());
    }
    let root2 = std::f64::consts::SQRT_2;
    for j in 0..d {
        for k in j + 1..d {
            let z = h.get(j, k);
            out.push(root2 * z.re);
            out.push(-root2 * z.im);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    CommutingF,
    GeneralOperatorSpace,
}

/// Minimum-norm contextual values together with the data certifying them.
#[derive(Debug, Clone)]
pub struct ContextualValueSolution {
    pub alpha0: Vec<f64>,
    pub residual: f64,
    pub singular_values: Vec<f64>,
    pub truncation_tol: f64,
    pub rank: usize,
    pub mode: SolveMode,
    pub exact: bool,
    row_space: DMatrix<f64>,
}

impl ContextualValueSolution {
    /// Dimension of the solution affine space.
    pub fn null_dim(&self) -> usize {
        self.alpha0.len() - self.rank
    }

    /// Orthonormal basis of the null space of the constraint map. Computed on
    /// demand since it has `N - rank` vectors of length `N`.
    pub fn null_basis(&self) -> Vec<Vec<f64>> {
        orthogonal_complement(&self.row_space)
    }

    /// Fail with `NotReconstructable` unless the solution is exact.
    pub fn require_exact(self) -> Result<Self> {
        if self.exact {
            Ok(self)
        } else {
            Err(CvError::NotReconstructable {
                residual: self.residual,
            })
        }
    }

    pub fn min_value(&self) -> f64 {
        self.alpha0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.alpha0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `||sum_j alpha_j E_j - A||` in operator norm.
pub fn reconstruction_residual(alpha: &[f64], ctx: &MeasurementContext, a: &ComplexMatrix) -> f64 {
    let mut acc = a.scale(-1.0);
    for (x, e) in alpha.iter().zip(ctx.povm()) {
        acc = &acc + &e.scale(*x);
    }
    acc.op_norm()
}

fn finish(
    obs: &Observable,
    ctx: &MeasurementContext,
    constraint: &DMatrix<f64>,
    rhs: &DVector<f64>,
    mode: SolveMode,
    opts: &SolverOptions,
) -> ContextualValueSolution {
    let svd = RealSvd::new(constraint);
    let alpha: DVector<f64> = svd.pseudoinverse(opts.svd_tol) * rhs;
    let alpha0: Vec<f64> = alpha.iter().copied().collect();
    let residual = reconstruction_residual(&alpha0, ctx, obs.matrix());
    let exact = residual <= opts.residual_tol * obs.matrix().op_norm().max(1.0);
    ContextualValueSolution {
        residual,
        truncation_tol: svd.cutoff(opts.svd_tol),
        rank: svd.rank(opts.svd_tol),
        row_space: svd.row_space(opts.svd_tol),
        singular_values: svd.singular_values,
        alpha0,
        mode,
        exact,
    }
}

/// Solve with the commuting contrast matrix.
pub fn solve_commuting(
    obs: &Observable,
    ctx: &MeasurementContext,
    opts: &SolverOptions,
) -> Result<ContextualValueSolution> {
    let f = build_contrast_matrix(obs, ctx, opts.commute_tol)?;
    let rhs = DVector::from_iterator(
        obs.eigenvalues().len(),
        obs.eigenvalues()
            .iter()
            .zip(obs.multiplicities())
            .map(|(a, m)| a * m as f64),
    );
    Ok(finish(obs, ctx, &f.entries, &rhs, SolveMode::CommutingF, opts))
}

/// Solve over the full real vector space of Hermitian operators.
pub fn solve_general(
    obs: &Observable,
    ctx: &MeasurementContext,
    opts: &SolverOptions,
) -> Result<ContextualValueSolution> {
    ensure_dim(obs.dim(), ctx.dim())?;
    let d2 = obs.dim() * obs.dim();
    let mut g = DMatrix::zeros(d2, ctx.len());
    for (j, e) in ctx.povm().iter().enumerate() {
        g.set_column(j, &DVector::from_vec(hermitian_coordinates(e)));
    }
    let rhs = DVector::from_vec(hermitian_coordinates(obs.matrix()));
    Ok(finish(obs, ctx, &g, &rhs, SolveMode::GeneralOperatorSpace, opts))
}

/// Least-redundant contextual values of `obs` under `ctx`.
///
/// Uses the commuting contrast matrix when possible. If that relaxation is
/// inexact (a degenerate observable whose eigenspaces are split unevenly by
/// the POVM), the general operator-space solve is used instead. Inexact
/// solutions are returned flagged; see [`ContextualValueSolution::require_exact`].
pub fn solve_contextual_values(
    obs: &Observable,
    ctx: &MeasurementContext,
    opts: &SolverOptions,
) -> Result<ContextualValueSolution> {
    match solve_commuting(obs, ctx, opts) {
        Ok(sol) if sol.exact => Ok(sol),
        Ok(_) | Err(CvError::NonCommutingContext { .. }) => solve_general(obs, ctx, opts),
        Err(e) => Err(e),
    }
}

/// Strict variant returning only the value vector.
pub fn contextual_values(obs: &Observable, ctx: &MeasurementContext) -> Result<Vec<f64>> {
    Ok(solve_contextual_values(obs, ctx, &SolverOptions::default())?
        .require_exact()?
        .alpha0)
}
