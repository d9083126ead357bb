//! Frequency estimates of averages, conditioned averages and moments from
//! simulated measurement records.
//!
//! Trials are split into fixed blocks of [`BLOCK_TRIALS`]; block `k` draws
//! from ChaCha8 seeded with the run seed on stream `k`. Blocks run in
//! parallel and are merged in block order, so a given seed yields the same
//! result regardless of thread count.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::averaging::{check_cv, kraus_commutation_defect, sequence_count, ConditionedSetup, COMMUTE_TOL};
use crate::error::{CvError, Result};
use crate::operator::{ensure_dim, outcome_probabilities, state_update, DensityOperator, MeasurementContext};

pub const BLOCK_TRIALS: u64 = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunConfig {
    pub trials: u64,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(trials: u64, seed: u64) -> Result<Self> {
        if trials == 0 {
            return Err(CvError::InvalidParameter("trials must be at least 1".into()));
        }
        Ok(Self { trials, seed })
    }

    fn blocks(&self) -> Vec<(u64, u64)> {
        let n = self.trials.div_ceil(BLOCK_TRIALS);
        (0..n)
            .map(|k| (k, BLOCK_TRIALS.min(self.trials - k * BLOCK_TRIALS)))
            .collect()
    }

    fn block_rng(&self, block: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(block);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalResult {
    /// Occurrences of each recorded outcome (layout depends on the estimator).
    pub counts: Vec<u64>,
    pub trials: u64,
    pub estimate: f64,
    pub stderr: f64,
    /// Fraction of trials kept; conditioned runs only.
    pub postselection_rate: Option<f64>,
}

/// Inverse-CDF sampler over a fixed discrete distribution. A distribution
/// with a single possible outcome returns it without consuming a draw.
#[derive(Debug, Clone)]
pub struct OutcomeSampler {
    cumulative: Vec<f64>,
    last_positive: usize,
    certain: bool,
}

impl OutcomeSampler {
    pub fn new(probabilities: &[f64]) -> Result<Self> {
        let mut cumulative = Vec::with_capacity(probabilities.len());
        let mut acc = 0.0;
        let mut last_positive = None;
        let mut possible = 0;
        for (j, &p) in probabilities.iter().enumerate() {
            if !(p >= 0.0) || !p.is_finite() {
                return Err(CvError::InvalidParameter(format!("invalid probability {p} at {j}")));
            }
            if p > 0.0 {
                last_positive = Some(j);
                possible += 1;
            }
            acc += p;
            cumulative.push(acc);
        }
        if (acc - 1.0).abs() > 1e-9 {
            return Err(CvError::InvalidParameter(format!("probabilities sum to {acc}")));
        }
        Ok(Self {
            cumulative,
            last_positive: last_positive.expect("positive total"),
            certain: possible == 1,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.certain {
            return self.last_positive;
        }
        let u: f64 = rng.random();
        let j = self.cumulative.partition_point(|&c| c <= u);
        j.min(self.last_positive)
    }
}

/// One inverse-CDF draw; probabilities must sum to 1 within 1e-9.
pub fn sample_outcome<R: Rng + ?Sized>(probabilities: &[f64], rng: &mut R) -> Result<usize> {
    Ok(OutcomeSampler::new(probabilities)?.sample(rng))
}

/// Mean of `values[k]` weighted by `counts[k]`, and its standard error from
/// the sample variance.
fn summarize(values: impl Fn(usize) -> f64, counts: &[u64]) -> (f64, f64, u64) {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return (f64::NAN, f64::NAN, 0);
    }
    let nf = n as f64;
    let mean = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(k, &c)| values(k) * c as f64)
        .sum::<f64>()
        / nf;
    if n < 2 {
        return (mean, 0.0, n);
    }
    let ss: f64 = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(k, &c)| (values(k) - mean).powi(2) * c as f64)
        .sum();
    (mean, (ss / (nf - 1.0) / nf).sqrt(), n)
}

fn run_blocks<S: Default>(
    cfg: &RunConfig,
    len: usize,
    trial: impl Fn(&mut ChaCha8Rng, &mut Vec<u64>, &mut S) + Sync,
) -> Vec<u64> {
    let partial: Vec<Vec<u64>> = cfg
        .blocks()
        .into_par_iter()
        .map(|(block, size)| {
            let mut rng = cfg.block_rng(block);
            let mut counts = vec![0u64; len];
            let mut scratch = S::default();
            for _ in 0..size {
                trial(&mut rng, &mut counts, &mut scratch);
            }
            counts
        })
        .collect();
    let mut total = vec![0u64; len];
    for counts in partial {
        for (t, c) in total.iter_mut().zip(counts) {
            *t += c;
        }
    }
    total
}

/// `sum_j alpha_j count_j / trials`; counts are per outcome.
pub fn empirical_average(
    cv: &[f64],
    ctx: &MeasurementContext,
    rho: &DensityOperator,
    cfg: &RunConfig,
) -> Result<EmpiricalResult> {
    check_cv(cv, ctx)?;
    let sampler = OutcomeSampler::new(&outcome_probabilities(ctx, rho)?)?;
    let counts = run_blocks(cfg, ctx.len(), |rng, counts, _: &mut ()| {
        counts[sampler.sample(rng)] += 1
    });
    let (estimate, stderr, _) = summarize(|j| cv[j], &counts);
    Ok(EmpiricalResult {
        counts,
        trials: cfg.trials,
        estimate,
        stderr,
        postselection_rate: None,
    })
}

/// Simulated two-step trajectories: first outcome `j`, state update, second
/// outcome `k`. Counts are laid out as `j * N2 + k`; only trials with
/// `k = f` enter the estimate.
pub fn empirical_conditioned_average(
    setup: &ConditionedSetup,
    rho: &DensityOperator,
    cfg: &RunConfig,
) -> Result<EmpiricalResult> {
    ensure_dim(setup.first().dim(), rho.dim())?;
    let first = OutcomeSampler::new(&outcome_probabilities(setup.first(), rho)?)?;
    let n2 = setup.second().len();
    let second: Vec<Option<OutcomeSampler>> = setup
        .first()
        .kraus()
        .iter()
        .map(|m| match state_update(m, rho) {
            Ok((post, _)) => outcome_probabilities(setup.second(), &post)
                .and_then(|p| OutcomeSampler::new(&normalized(p)))
                .map(Some),
            Err(CvError::ZeroProbabilityBranch { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    let counts = run_blocks(cfg, setup.first().len() * n2, |rng, counts, _: &mut ()| {
        let j = first.sample(rng);
        // a branch below the update floor may still be drawn at ~1e-12 odds
        let k = match &second[j] {
            Some(s) => s.sample(rng),
            None => n2,
        };
        if k < n2 {
            counts[j * n2 + k] += 1;
        }
    });
    let f = setup.postselect();
    let kept: Vec<u64> = (0..setup.first().len()).map(|j| counts[j * n2 + f]).collect();
    let (estimate, stderr, count_f) = summarize(|j| setup.cv()[j], &kept);
    if count_f == 0 {
        return Err(CvError::NoPostselectedTrials);
    }
    Ok(EmpiricalResult {
        counts,
        trials: cfg.trials,
        estimate,
        stderr,
        postselection_rate: Some(count_f as f64 / cfg.trials as f64),
    })
}

fn normalized(mut p: Vec<f64>) -> Vec<f64> {
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
    p
}

/// Mean of `alpha_{j1} ... alpha_{jn}` over sampled length-`n` sequences of
/// repeated measurements; counts are per flattened sequence (first outcome
/// most significant).
pub fn empirical_moment(
    cv: &[f64],
    ctx: &MeasurementContext,
    rho: &DensityOperator,
    n: u32,
    cfg: &RunConfig,
) -> Result<EmpiricalResult> {
    check_cv(cv, ctx)?;
    ensure_dim(ctx.dim(), rho.dim())?;
    let norm = kraus_commutation_defect(ctx, None);
    if norm > COMMUTE_TOL {
        return Err(CvError::NonCommutingContext { norm });
    }
    let outcomes = ctx.len();
    let count = sequence_count(outcomes, n)?;
    let root = OutcomeSampler::new(&outcome_probabilities(ctx, rho)?)?;
    // samplers for the conditional distribution after each outcome prefix
    type PrefixCache = HashMap<(u32, usize), Option<OutcomeSampler>>;
    let counts = run_blocks(cfg, count, |rng, counts, cache: &mut PrefixCache| {
        let mut flat = root.sample(rng);
        for depth in 1..n {
            let sampler = cache.entry((depth, flat)).or_insert_with(|| {
                let state = replay(ctx, rho, flat, depth, outcomes)?;
                let p = outcome_probabilities(ctx, &state).ok()?;
                OutcomeSampler::new(&normalized(p)).ok()
            });
            match sampler {
                Some(s) => flat = flat * outcomes + s.sample(rng),
                None => return,
            }
        }
        counts[flat] += 1;
    });
    let (estimate, stderr, _) = summarize(
        |flat| {
            let mut rest = flat;
            let mut product = 1.0;
            for _ in 0..n {
                product *= cv[rest % outcomes];
                rest /= outcomes;
            }
            product
        },
        &counts,
    );
    Ok(EmpiricalResult {
        counts,
        trials: cfg.trials,
        estimate,
        stderr,
        postselection_rate: None,
    })
}

/// State after the outcome prefix encoded in `flat` (`depth` outcomes).
fn replay(
    ctx: &MeasurementContext,
    rho: &DensityOperator,
    mut flat: usize,
    depth: u32,
    outcomes: usize,
) -> Option<DensityOperator> {
    let mut seq = vec![0; depth as usize];
    for slot in seq.iter_mut().rev() {
        *slot = flat % outcomes;
        flat /= outcomes;
    }
    let mut state = rho.clone();
    for j in seq {
        state = state_update(&ctx.kraus()[j], &state).ok()?.0;
    }
    Some(state)
}
