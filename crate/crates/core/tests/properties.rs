use cvtool_core::averaging::{conditioned_average, moment, weak_value, weak_value_parts, ConditionedSetup};
use cvtool_core::error::CvError;
use cvtool_core::montecarlo::{empirical_average, RunConfig};
use cvtool_core::operator::{
    context_from_kraus, outcome_probabilities, polar_decompose, spectral_decompose, ComplexMatrix, DensityOperator,
    MeasurementContext, Observable, C64,
};
use cvtool_core::scenarios::polarization::{gamma_for_strength, polarization_context};
use cvtool_core::solver::{contextual_values, solve_commuting, solve_contextual_values, solve_general, SolverOptions};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn matrix(d: usize, raw: &[f64]) -> ComplexMatrix {
    ComplexMatrix::new(DMatrix::from_fn(d, d, |i, j| {
        let k = 2 * (i * d + j);
        C64::new(raw[k], raw[k + 1])
    }))
    .unwrap()
}

fn hermitian(d: usize, raw: &[f64]) -> ComplexMatrix {
    matrix(d, raw).hermitian_part()
}

fn density(d: usize, raw: &[f64]) -> DensityOperator {
    let g = matrix(d, raw);
    let m = &g * &g.adjoint();
    let tr = m.trace().re;
    DensityOperator::new(m.scale(1.0 / tr)).unwrap()
}

/// `M_j = G_j S^{-1/2}` with `S = sum G_j^dag G_j`.
fn random_kraus(d: usize, raw: &[f64], n: usize) -> Option<Vec<ComplexMatrix>> {
    let gs: Vec<ComplexMatrix> = (0..n).map(|j| matrix(d, &raw[j * 2 * d * d..])).collect();
    let mut s = ComplexMatrix::zeros(d);
    for g in &gs {
        s = &s + &(&g.adjoint() * g);
    }
    if s.min_eigenvalue() < 1e-2 {
        return None;
    }
    let t = s.hermitian_function(|x| C64::new(x.powf(-0.5), 0.0));
    Some(gs.iter().map(|g| g * &t).collect())
}

fn random_context(d: usize, raw: &[f64], n: usize) -> Option<MeasurementContext> {
    context_from_kraus(random_kraus(d, raw, n)?, 1e-10).ok()
}

/// Diagonal (hence mutually commuting) Kraus operators with random phases.
fn diagonal_context(d: usize, raw: &[f64], n: usize) -> Option<MeasurementContext> {
    let weights: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..d).map(|i| 0.05 + raw[j * d + i].abs()).collect())
        .collect();
    let kraus = (0..n)
        .map(|j| {
            let diag: Vec<C64> = (0..d)
                .map(|i| {
                    let total: f64 = weights.iter().map(|w| w[i]).sum();
                    C64::from_polar((weights[j][i] / total).sqrt(), 3.0 * raw[n * d + j * d + i])
                })
                .collect();
            ComplexMatrix::new(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag))).unwrap()
        })
        .collect();
    context_from_kraus(kraus, 1e-10).ok()
}

fn frobenius(m: &ComplexMatrix) -> f64 {
    m.inner().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn reals(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

proptest! {
    #[test]
    fn kraus_contexts_are_complete_and_positive(d in 2usize..5, n in 1usize..6, raw in reals(2 * 16 * 6)) {
        if let Some(ctx) = random_context(d, &raw, n) {
            let mut sum = ComplexMatrix::zeros(d);
            for e in ctx.povm() {
                prop_assert!(e.min_eigenvalue() >= -1e-10);
                sum = &sum + e;
            }
            prop_assert!((&sum - &ComplexMatrix::identity(d)).op_norm() <= 1e-10);
        }
    }

    #[test]
    fn probabilities_sum_to_one(d in 2usize..5, n in 1usize..6, raw in reals(2 * 16 * 6), rr in reals(32)) {
        if let Some(ctx) = random_context(d, &raw, n) {
            let p = outcome_probabilities(&ctx, &density(d, &rr)).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn polar_factors(d in 2usize..5, raw in reals(32)) {
        let m = matrix(d, &raw);
        prop_assume!(m.inner().clone().svd(false, false).singular_values.min() > 1e-6);
        let (u, p) = polar_decompose(&m);
        prop_assert!((&(&u.adjoint() * &u) - &ComplexMatrix::identity(d)).op_norm() <= 1e-10);
        prop_assert!((&(&u * &p) - &m).op_norm() <= 1e-10 * m.op_norm());
        prop_assert!(p.min_eigenvalue() >= -1e-10);
    }

    #[test]
    fn exact_reconstruction_general(d in 2usize..4, extra in 0usize..4, raw in reals(2 * 9 * 12), ar in reals(18)) {
        let n = d * d + extra;
        let a = Observable::new(hermitian(d, &ar)).unwrap();
        if let Some(ctx) = random_context(d, &raw, n) {
            let sol = solve_contextual_values(&a, &ctx, &SolverOptions::default()).unwrap();
            if sol.exact {
                let mut acc = a.matrix().scale(-1.0);
                for (x, e) in sol.alpha0.iter().zip(ctx.povm()) {
                    acc = &acc + &e.scale(*x);
                }
                prop_assert!(acc.op_norm() <= 1e-9 * a.matrix().op_norm().max(1.0));
            }
            // generic informationally complete contexts always reconstruct
            prop_assert!(sol.exact || sol.rank < d * d);
        }
    }

    #[test]
    fn exact_reconstruction_commuting(d in 2usize..4, extra in 0usize..3, raw in reals(60), ar in reals(3)) {
        let n = d + extra;
        let a = Observable::new(ComplexMatrix::diag(&ar[..d])).unwrap();
        if let Some(ctx) = diagonal_context(d, &raw, n) {
            let sol = solve_contextual_values(&a, &ctx, &SolverOptions::default()).unwrap();
            if sol.exact {
                let mut acc = a.matrix().scale(-1.0);
                for (x, e) in sol.alpha0.iter().zip(ctx.povm()) {
                    acc = &acc + &e.scale(*x);
                }
                prop_assert!(acc.op_norm() <= 1e-9 * a.matrix().op_norm().max(1.0));
            }
        }
    }

    #[test]
    fn minimum_norm(d in 2usize..4, extra in 1usize..4, raw in reals(2 * 9 * 12), ar in reals(18), shifts in reals(100)) {
        let a = Observable::new(hermitian(d, &ar)).unwrap();
        if let Some(ctx) = random_context(d, &raw, d * d + extra) {
            let sol = solve_contextual_values(&a, &ctx, &SolverOptions::default()).unwrap();
            let basis = sol.null_basis();
            prop_assert_eq!(basis.len(), sol.null_dim());
            let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let base = norm(&sol.alpha0);
            for x in &basis {
                let dot: f64 = x.iter().zip(&sol.alpha0).map(|(p, q)| p * q).sum();
                prop_assert!(dot.abs() <= 1e-9 * base.max(1.0));
                for c in &shifts {
                    let moved: Vec<f64> = sol.alpha0.iter().zip(x).map(|(a, v)| a + 10.0 * c * v).collect();
                    prop_assert!(norm(&moved) >= base - 1e-12);
                }
            }
        }
    }

    #[test]
    fn mode_consistency_for_commuting_contexts(d in 2usize..4, extra in 0usize..3, raw in reals(60), ar in reals(3)) {
        let a = Observable::new(ComplexMatrix::diag(&ar[..d])).unwrap();
        prop_assume!(!a.is_degenerate());
        if let Some(ctx) = diagonal_context(d, &raw, d + extra) {
            let opts = SolverOptions::default();
            let f = solve_commuting(&a, &ctx, &opts).unwrap();
            let g = solve_general(&a, &ctx, &opts).unwrap();
            for (x, y) in f.alpha0.iter().zip(&g.alpha0) {
                prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn too_few_outcomes_cannot_reconstruct(raw in reals(2 * 9 * 2), ar in reals(18)) {
        let a = Observable::new(hermitian(3, &ar)).unwrap();
        prop_assume!(a.eigenvalues().len() == 3);
        if let Some(ctx) = random_context(3, &raw, 2) {
            let rejected = matches!(contextual_values(&a, &ctx), Err(CvError::NotReconstructable { .. }));
            prop_assert!(rejected);
        }
    }

    #[test]
    fn conditioned_average_stays_in_value_range(
        raw1 in reals(2 * 4 * 6), raw2 in reals(2 * 4 * 3), ar in reals(8), rr in reals(8), n1 in 4usize..7, n2 in 1usize..4, f in 0usize..3,
    ) {
        let a = Observable::new(hermitian(2, &ar)).unwrap();
        let (Some(first), Some(second)) = (random_context(2, &raw1, n1), random_context(2, &raw2, n2)) else {
            return Ok(());
        };
        let Ok(cv) = contextual_values(&a, &first) else { return Ok(()) };
        let lo = cv.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = cv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let setup = ConditionedSetup::new(first, cv, second, f % n2).unwrap();
        match conditioned_average(&setup, &density(2, &rr)) {
            Ok(v) => prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9),
            Err(e) => prop_assert_eq!(std::mem::discriminant(&e), std::mem::discriminant(&CvError::ZeroPostselectionProbability { probability: 0.0 })),
        }
    }

    #[test]
    fn commuting_moments(d in 2usize..4, extra in 0usize..2, raw in reals(40), ar in reals(3), rr in reals(18), n in 1u32..4) {
        let a = Observable::new(ComplexMatrix::diag(&ar[..d])).unwrap();
        if let Some(ctx) = diagonal_context(d, &raw, d + extra) {
            if let Ok(cv) = contextual_values(&a, &ctx) {
                let rho = density(d, &rr);
                let m = moment(&cv, &ctx, &rho, n).unwrap();
                let scale = cv.iter().map(|x| x.abs()).fold(1.0, f64::max).powi(n as i32);
                prop_assert!((m - rho.expectation(&a.power(n))).abs() <= 1e-8 * scale);
            }
        }
    }

    #[test]
    fn weak_value_numerator_is_real(d in 2usize..5, ar in reals(32), er in reals(32), rr in reals(32)) {
        let a = Observable::new(hermitian(d, &ar)).unwrap();
        let g = matrix(d, &er);
        let e_f = &g.adjoint() * &g;
        let (numerator, _) = weak_value_parts(&a, &e_f, &density(d, &rr)).unwrap();
        prop_assert!(numerator.im.abs() <= 1e-12 * numerator.norm().max(1.0));
    }

    #[test]
    fn monte_carlo_is_deterministic(seed in any::<u64>(), trials in 1u64..20_000, g in 0.05f64..1.0, rr in reals(8)) {
        let ctx = polarization_context(gamma_for_strength(g)).unwrap();
        let cv = contextual_values(&Observable::pauli_z(), &ctx).unwrap();
        let rho = density(2, &rr);
        let cfg = RunConfig::new(trials, seed).unwrap();
        let one = empirical_average(&cv, &ctx, &rho, &cfg).unwrap();
        let two = empirical_average(&cv, &ctx, &rho, &cfg).unwrap();
        prop_assert_eq!(one.counts.iter().sum::<u64>(), trials);
        prop_assert!(one.stderr >= 0.0);
        prop_assert_eq!(one.estimate.to_bits(), two.estimate.to_bits());
        prop_assert_eq!(one, two);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn spectral_reconstruction(k in 0usize..4, raw in reals(2 * 64)) {
        let d = [2, 3, 4, 8][k];
        let h = hermitian(d, &raw);
        let obs = spectral_decompose(&h, 1e-8).unwrap();
        let mut acc = ComplexMatrix::zeros(d);
        for (a, p) in obs.eigenvalues().iter().zip(obs.projectors()) {
            acc = &acc + &p.scale(*a);
        }
        prop_assert!(frobenius(&(&acc - &h)) <= 1e-10 * frobenius(&h).max(1e-300));
    }

    #[test]
    fn projective_limit(k in 0usize..3, raw in reals(2 * 16)) {
        let d = [2, 3, 4][k];
        let a = Observable::new(hermitian(d, &raw)).unwrap();
        let ctx = MeasurementContext::from_kraus(a.projectors().to_vec(), 1e-10).unwrap();
        let cv = contextual_values(&a, &ctx).unwrap();
        for (x, e) in cv.iter().zip(a.eigenvalues()) {
            prop_assert!((x - e).abs() <= 1e-10 * e.abs().max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn polarization_weak_limit_converges(rr in reals(8), fr in reals(4)) {
        let rho = density(2, &rr);
        let f = [C64::new(fr[0], fr[1]), C64::new(fr[2], fr[3])];
        let norm = (f[0].norm_sqr() + f[1].norm_sqr()).sqrt();
        prop_assume!(norm > 0.1);
        let second = MeasurementContext::projective_onto(&f).unwrap();
        let e_f = second.povm()[0].clone();
        prop_assume!(rho.expectation(&e_f) > 0.05);
        let target = weak_value(&Observable::pauli_z(), &e_f, &rho).unwrap();
        let mut previous: Option<f64> = None;
        for g in [0.2, 0.1, 0.05, 0.025] {
            let ctx = polarization_context(gamma_for_strength(g)).unwrap();
            let cv = contextual_values(&Observable::pauli_z(), &ctx).unwrap();
            let setup = ConditionedSetup::new(ctx, cv, second.clone(), 0).unwrap();
            let gap = (conditioned_average(&setup, &rho).unwrap() - target).abs();
            if let Some(p) = previous {
                prop_assert!(gap <= 0.55 * p + 1e-12, "gap {gap} after {p}");
            }
            previous = Some(gap);
        }
    }
}
