//! Observable statistics reconstructed from contextual values: plain
//! averages, higher moments from repeated measurement sequences, averages
//! conditioned on a second (postselecting) measurement, and weak values.

use crate::error::{CvError, Result};
use crate::operator::{
    ensure_dim, outcome_probabilities, state_update, ComplexMatrix, DensityOperator, MeasurementContext, Observable,
    C64,
};

/// Postselection probabilities at or below this are rejected.
pub const POSTSELECTION_TOL: f64 = 1e-12;

/// Default cap on the moment order (`N^n` sequences are enumerated).
pub const MAX_MOMENT_ORDER: u32 = 8;

/// Upper bound on the number of enumerated outcome sequences.
pub const MAX_SEQUENCES: usize = 1 << 24;

pub(crate) fn check_cv(cv: &[f64], ctx: &MeasurementContext) -> Result<()> {
    if cv.len() != ctx.len() {
        return Err(CvError::DimensionMismatch {
            expected: ctx.len(),
            found: cv.len(),
        });
    }
    Ok(())
}

/// `sum_j alpha_j Tr[E_j rho]`.
pub fn reconstructed_average(cv: &[f64], ctx: &MeasurementContext, rho: &DensityOperator) -> Result<f64> {
    check_cv(cv, ctx)?;
    let p = outcome_probabilities(ctx, rho)?;
    Ok(cv.iter().zip(&p).map(|(a, p)| a * p).sum())
}

/// `sum_j alpha_j^n P_j`: moments of the value assignment itself, which only
/// agree with the observable's moments at `n = 1`.
pub fn cv_moment(cv: &[f64], ctx: &MeasurementContext, rho: &DensityOperator, n: u32) -> Result<f64> {
    check_cv(cv, ctx)?;
    let p = outcome_probabilities(ctx, rho)?;
    Ok(cv.iter().zip(&p).map(|(a, p)| a.powi(n as i32) * p).sum())
}

/// Joint probabilities of all `N^n` outcome sequences of `n` repeated
/// measurements, flattened with the first outcome as the most significant
/// index.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceProbabilities {
    pub outcomes: usize,
    pub order: u32,
    pub probabilities: Vec<f64>,
}

impl SequenceProbabilities {
    /// Outcome indices `(j_1, ..., j_n)` of a flat position.
    pub fn sequence(&self, mut flat: usize) -> Vec<usize> {
        let mut seq = vec![0; self.order as usize];
        for slot in seq.iter_mut().rev() {
            *slot = flat % self.outcomes;
            flat /= self.outcomes;
        }
        seq
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }
}

pub(crate) fn sequence_count(outcomes: usize, n: u32) -> Result<usize> {
    if n == 0 {
        return Err(CvError::InvalidParameter("sequence length must be at least 1".into()));
    }
    if n > MAX_MOMENT_ORDER {
        return Err(CvError::InvalidParameter(format!(
            "moment order {n} exceeds the cap of {MAX_MOMENT_ORDER}"
        )));
    }
    let mut count: usize = 1;
    for _ in 0..n {
        count = count
            .checked_mul(outcomes)
            .filter(|&c| c <= MAX_SEQUENCES)
            .ok_or(CvError::TooManySequences { count: usize::MAX })?;
    }
    Ok(count)
}

/// Chained Kraus updates over every outcome sequence of length `n`.
pub fn sequence_probabilities(
    ctx: &MeasurementContext,
    rho: &DensityOperator,
    n: u32,
) -> Result<SequenceProbabilities> {
    ensure_dim(ctx.dim(), rho.dim())?;
    let count = sequence_count(ctx.len(), n)?;
    let mut probabilities = vec![0.0; count];
    fill_sequences(ctx, rho, 1.0, n, 0, &mut probabilities);
    Ok(SequenceProbabilities {
        outcomes: ctx.len(),
        order: n,
        probabilities,
    })
}

fn fill_sequences(
    ctx: &MeasurementContext,
    rho: &DensityOperator,
    weight: f64,
    remaining: u32,
    prefix: usize,
    out: &mut [f64],
) {
    for (j, m) in ctx.kraus().iter().enumerate() {
        let index = prefix * ctx.len() + j;
        // impossible branches leave their whole subtree at zero
        let Ok((post, p)) = state_update(m, rho) else {
            continue;
        };
        if remaining == 1 {
            out[index] = weight * p;
        } else {
            fill_sequences(ctx, &post, weight * p, remaining - 1, index, out);
        }
    }
}

/// Largest Frobenius norm of a pairwise Kraus commutator, and of the
/// commutator of each Kraus operator with `a` if given.
pub fn kraus_commutation_defect(ctx: &MeasurementContext, a: Option<&ComplexMatrix>) -> f64 {
    let kraus = ctx.kraus();
    let mut worst = 0.0f64;
    for j in 0..kraus.len() {
        if let Some(a) = a {
            worst = worst.max(kraus[j].commutator(a).inner().norm());
        }
        for k in j + 1..kraus.len() {
            worst = worst.max(kraus[j].commutator(&kraus[k]).inner().norm());
        }
    }
    worst
}

pub(crate) const COMMUTE_TOL: f64 = 1e-10;

/// n-th moment from the contextual values of a commuting context:
/// `sum alpha_{j1} ... alpha_{jn} P_{j1...jn}`.
pub fn moment(cv: &[f64], ctx: &MeasurementContext, rho: &DensityOperator, n: u32) -> Result<f64> {
    check_cv(cv, ctx)?;
    let norm = kraus_commutation_defect(ctx, None);
    if norm > COMMUTE_TOL {
        return Err(CvError::NonCommutingContext { norm });
    }
    let seq = sequence_probabilities(ctx, rho, n)?;
    let mut total = 0.0;
    for (flat, p) in seq.probabilities.iter().enumerate() {
        if *p == 0.0 {
            continue;
        }
        let product: f64 = seq.sequence(flat).iter().map(|&j| cv[j]).product();
        total += product * p;
    }
    Ok(total)
}

/// As [`moment`], additionally requiring the Kraus operators to commute with
/// the observable.
pub fn observable_moment(
    obs: &Observable,
    cv: &[f64],
    ctx: &MeasurementContext,
    rho: &DensityOperator,
    n: u32,
) -> Result<f64> {
    ensure_dim(obs.dim(), ctx.dim())?;
    let norm = kraus_commutation_defect(ctx, Some(obs.matrix()));
    if norm > COMMUTE_TOL * obs.matrix().op_norm().max(1.0) {
        return Err(CvError::NonCommutingContext { norm });
    }
    moment(cv, ctx, rho, n)
}

/// First measurement (with its contextual values) followed by a second
/// measurement postselected on outcome `postselect`.
#[derive(Debug, Clone)]
pub struct ConditionedSetup {
    first: MeasurementContext,
    cv: Vec<f64>,
    second: MeasurementContext,
    postselect: usize,
}

impl ConditionedSetup {
    pub fn new(first: MeasurementContext, cv: Vec<f64>, second: MeasurementContext, postselect: usize) -> Result<Self> {
        check_cv(&cv, &first)?;
        ensure_dim(first.dim(), second.dim())?;
        if postselect >= second.len() {
            return Err(CvError::InvalidParameter(format!(
                "postselection index {postselect} out of range for {} outcomes",
                second.len()
            )));
        }
        Ok(Self {
            first,
            cv,
            second,
            postselect,
        })
    }

    pub fn first(&self) -> &MeasurementContext {
        &self.first
    }

    pub fn cv(&self) -> &[f64] {
        &self.cv
    }

    pub fn second(&self) -> &MeasurementContext {
        &self.second
    }

    pub fn postselect(&self) -> usize {
        self.postselect
    }

    /// `M^(2)_f`.
    pub fn postselection_kraus(&self) -> &ComplexMatrix {
        &self.second.kraus()[self.postselect]
    }
}

/// Conditioned average with the per-outcome joint probabilities behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedBreakdown {
    /// `P_jf = Tr[E^(1,2)_jf rho]`.
    pub joint: Vec<f64>,
    /// `P_f = sum_j P_jf`.
    pub postselection_probability: f64,
    pub value: f64,
}

impl ConditionedBreakdown {
    /// `alpha_j P_{j|f}` for each first-measurement outcome.
    pub fn weights(&self, cv: &[f64]) -> Vec<f64> {
        cv.iter()
            .zip(&self.joint)
            .map(|(a, p)| a * p / self.postselection_probability)
            .collect()
    }
}

pub fn conditioned_breakdown(setup: &ConditionedSetup, rho: &DensityOperator) -> Result<ConditionedBreakdown> {
    ensure_dim(setup.first.dim(), rho.dim())?;
    let mf = setup.postselection_kraus();
    let joint: Vec<f64> = setup
        .first
        .kraus()
        .iter()
        .map(|mj| {
            let branch = mf * mj;
            branch.sandwich(rho.matrix()).trace().re.max(0.0)
        })
        .collect();
    let pf: f64 = joint.iter().sum();
    if pf <= POSTSELECTION_TOL {
        return Err(CvError::ZeroPostselectionProbability { probability: pf });
    }
    let value = setup.cv.iter().zip(&joint).map(|(a, p)| a * p).sum::<f64>() / pf;
    Ok(ConditionedBreakdown {
        joint,
        postselection_probability: pf,
        value,
    })
}

/// `sum_j alpha_j P_{j|f}` with `P_jf = Tr[M_j^dag M_f^dag M_f M_j rho]`.
pub fn conditioned_average(setup: &ConditionedSetup, rho: &DensityOperator) -> Result<f64> {
    Ok(conditioned_breakdown(setup, rho)?.value)
}

/// Complex numerator and denominator of the generalized weak value,
/// `Tr[E_f {A, rho}] / 2` and `Tr[E_f rho]`.
pub fn weak_value_parts(obs: &Observable, e_f: &ComplexMatrix, rho: &DensityOperator) -> Result<(C64, C64)> {
    ensure_dim(obs.dim(), e_f.dim())?;
    ensure_dim(obs.dim(), rho.dim())?;
    let numerator = e_f.trace_product(&obs.matrix().anticommutator(rho.matrix())) * 0.5;
    let denominator = e_f.trace_product(rho.matrix());
    Ok((numerator, denominator))
}

/// `Tr[E_f {A, rho}] / 2 Tr[E_f rho]`.
pub fn weak_value(obs: &Observable, e_f: &ComplexMatrix, rho: &DensityOperator) -> Result<f64> {
    let scale = e_f.max_abs_entry().max(1.0);
    let deviation = e_f.hermiticity_defect();
    if deviation > 1e-10 * scale {
        return Err(CvError::NotHermitian { deviation });
    }
    let min_eigenvalue = e_f.min_eigenvalue();
    if min_eigenvalue < -1e-10 * scale {
        return Err(CvError::NotPositive { min_eigenvalue });
    }
    let (num, den) = weak_value_parts(obs, e_f, rho)?;
    if den.re <= POSTSELECTION_TOL {
        return Err(CvError::ZeroPostselectionProbability { probability: den.re });
    }
    let imag = num.im.abs().max(den.im.abs());
    debug_assert!(
        imag <= 1e-12 * scale * obs.matrix().op_norm().max(1.0),
        "imaginary residue {imag:e}"
    );
    Ok(num.re / den.re)
}

/// `<f|A|i> / <f|i>`.
pub fn aav_weak_value(obs: &Observable, psi_i: &[C64], psi_f: &[C64]) -> Result<C64> {
    ensure_dim(obs.dim(), psi_i.len())?;
    ensure_dim(obs.dim(), psi_f.len())?;
    let a = obs.matrix();
    let d = obs.dim();
    let mut overlap = C64::default();
    let mut matrix_element = C64::default();
    for r in 0..d {
        overlap += psi_f[r].conj() * psi_i[r];
        for s in 0..d {
            matrix_element += psi_f[r].conj() * a.get(r, s) * psi_i[s];
        }
    }
    let ni: f64 = psi_i.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let nf: f64 = psi_f.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if overlap.norm() <= 1e-12 * ni * nf {
        return Err(CvError::OrthogonalPostselection);
    }
    Ok(matrix_element / overlap)
}
