//! Tunable-strength photon polarization measurement in the H/V basis.

use crate::error::{CvError, Result};
use crate::operator::{c, ComplexMatrix, MeasurementContext, C64};

/// `gammabar = sqrt(1 - gamma^2)`, the unique partner making the Kraus pair
/// complete.
pub fn gamma_bar(gamma: f64) -> f64 {
    (1.0 - gamma * gamma).max(0.0).sqrt()
}

/// Measurement strength `g = gamma^2 - gammabar^2`.
pub fn strength(gamma: f64) -> f64 {
    2.0 * gamma * gamma - 1.0
}

/// `gamma` giving strength `g` (the root with `gamma >= 1/sqrt(2)` for `g >= 0`).
pub fn gamma_for_strength(g: f64) -> f64 {
    ((1.0 + g) / 2.0).sqrt()
}

/// `M_+ = gamma Pi_H + gammabar Pi_V`, `M_- = gammabar Pi_H + gamma Pi_V`,
/// giving `E_+- = (1 +- g sigma_z) / 2`.
pub fn polarization_context(gamma: f64) -> Result<MeasurementContext> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(CvError::InvalidParameter(format!(
            "gamma must lie in [0, 1], got {gamma}"
        )));
    }
    let gbar = gamma_bar(gamma);
    Ok(MeasurementContext::trusted(vec![
        ComplexMatrix::diag(&[gamma, gbar]),
        ComplexMatrix::diag(&[gbar, gamma]),
    ]))
}

/// The postselected state `(|H> - |V>) / sqrt(2)`.
pub fn antidiagonal_state() -> Vec<C64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    vec![c(s, 0.0), c(-s, 0.0)]
}

/// Closed-form conditioned average for preparation `alpha|H> + beta|V>` and
/// postselection on [`antidiagonal_state`]:
/// `(|alpha|^2 - |beta|^2) / (1 - 4 gamma gammabar Re[alpha beta*])`.
pub fn polarization_conditioned_oracle(alpha: C64, beta: C64, gamma: f64) -> Result<f64> {
    let norm = alpha.norm_sqr() + beta.norm_sqr();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(CvError::InvalidParameter(format!(
            "state must be normalized, |alpha|^2 + |beta|^2 = {norm}"
        )));
    }
    let denominator = 1.0 - 4.0 * gamma * gamma_bar(gamma) * (alpha * beta.conj()).re;
    if denominator.abs() < 1e-12 {
        return Err(CvError::DivergentPostselection { denominator });
    }
    Ok((alpha.norm_sqr() - beta.norm_sqr()) / denominator)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::Observable;
    use crate::solver::contextual_values;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    #[test]
    fn symmetric_point_is_informationless() {
        let ctx = polarization_context(FRAC_1_SQRT_2).unwrap();
        assert_abs_diff_eq!(strength(FRAC_1_SQRT_2), 0.0, epsilon = 1e-15);
        for e in ctx.povm() {
            assert!((e - &ComplexMatrix::identity(2).scale(0.5)).max_abs_entry() < 1e-15);
        }
    }

    #[test]
    fn strong_limit_is_projective() {
        let ctx = polarization_context(1.0).unwrap();
        assert_eq!(ctx.povm()[0], ComplexMatrix::diag(&[1.0, 0.0]));
        assert_eq!(ctx.povm()[1], ComplexMatrix::diag(&[0.0, 1.0]));
    }

    #[test]
    fn values_are_inverse_strength() {
        let gamma = 0.75f64.sqrt();
        assert_abs_diff_eq!(strength(gamma), 0.5, epsilon = 1e-15);
        let cv = contextual_values(&Observable::pauli_z(), &polarization_context(gamma).unwrap()).unwrap();
        assert_abs_diff_eq!(cv[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cv[1], -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(gamma_for_strength(0.5), gamma, epsilon = 1e-15);
    }

    #[test]
    fn oracle_examples() {
        for gamma in [0.2, 0.6, 0.95] {
            assert_abs_diff_eq!(
                polarization_conditioned_oracle(c(1.0, 0.0), c(0.0, 0.0), gamma).unwrap(),
                1.0,
                epsilon = 1e-15
            );
        }
        let s = FRAC_1_SQRT_2;
        assert_abs_diff_eq!(
            polarization_conditioned_oracle(c(s, 0.0), c(s, 0.0), 0.9).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        let v = polarization_conditioned_oracle(c((PI / 8.0).cos(), 0.0), c((PI / 8.0).sin(), 0.0), 0.75f64.sqrt())
            .unwrap();
        // cos(pi/4) / (1 - 2 sqrt(3/16) sin(pi/4))
        let direct = FRAC_1_SQRT_2 / (1.0 - 4.0 * 0.75f64.sqrt() * 0.5 * 0.5 * FRAC_1_SQRT_2);
        assert_abs_diff_eq!(v, direct, epsilon = 1e-14);
        assert!(v > 1.8 && v < 1.83);

        assert!(matches!(
            polarization_conditioned_oracle(c(s, 0.0), c(s, 0.0), FRAC_1_SQRT_2),
            Err(CvError::DivergentPostselection { .. })
        ));
        assert!(polarization_conditioned_oracle(c(1.0, 0.0), c(1.0, 0.0), 0.5).is_err());
    }

    #[test]
    fn gamma_out_of_range() {
        assert!(polarization_context(1.5).is_err());
    }
}
