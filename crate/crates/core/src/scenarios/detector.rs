//! Von Neumann pointer measurement of `sigma_z`.
//!
//! A pointer with density `P_D(q)` is displaced by `g sigma_z`, so the
//! system POVM is `E(q) = P_D(q - g sigma_z)`, i.e.
//! `diag(P_D(q - g), P_D(q + g))`. The continuous outcome is discretized on
//! a grid of cells (midpoint rule); the least-redundant contextual values of
//! the continuum are
//!
//! ```text
//! sigma_z(q) = [P_D(q - g) - P_D(q + g)] / (a - b(g)),
//! a = int P_D(q)^2 dq,   b(g) = int P_D(q - g) P_D(q + g) dq.
//! ```

use std::f64::consts::PI;

use crate::averaging::{conditioned_average, ConditionedSetup};
use crate::error::{CvError, Result};
use crate::operator::{psi, ComplexMatrix, DensityOperator, MeasurementContext, Observable};
use crate::solver::{solve_contextual_values, ContextualValueSolution, SolverOptions};

/// Completeness defect above which a grid is rejected outright.
pub const GRID_REJECT_DEFECT: f64 = 1e-3;

/// Completeness defect an adequate grid is expected to reach.
pub const GRID_ADEQUATE_DEFECT: f64 = 1e-6;

pub const DEFAULT_GRID_POINTS: usize = 1201;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PointerDistribution {
    /// Normal density with standard deviation `sigma`.
    Gaussian { sigma: f64 },
    /// Uniform density `1/width` on `[-width/2, width/2]`.
    Box { width: f64 },
}

impl PointerDistribution {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(CvError::InvalidParameter(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        Ok(Self::Gaussian { sigma })
    }

    pub fn boxcar(width: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(CvError::InvalidParameter(format!(
                "width must be positive, got {width}"
            )));
        }
        Ok(Self::Box { width })
    }

    /// Box with the same standard deviation as a Gaussian of width `sigma`.
    pub fn box_matching_sigma(sigma: f64) -> Result<Self> {
        Self::boxcar(sigma * 12f64.sqrt())
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Gaussian { .. } => "gaussian",
            Self::Box { .. } => "box",
        }
    }

    pub fn density(&self, q: f64) -> f64 {
        match *self {
            Self::Gaussian { sigma } => (-q * q / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * PI).sqrt()),
            Self::Box { width } => {
                if q.abs() <= width / 2.0 {
                    1.0 / width
                } else {
                    0.0
                }
            }
        }
    }

    /// Standard deviation of the density.
    pub fn std_dev(&self) -> f64 {
        match *self {
            Self::Gaussian { sigma } => sigma,
            Self::Box { width } => width / 12f64.sqrt(),
        }
    }

    /// Half-width the grid must cover beyond the shift: `5 sigma` for the
    /// Gaussian, the exact support `width/2` for the box.
    pub fn coverage(&self) -> f64 {
        match *self {
            Self::Gaussian { sigma } => 5.0 * sigma,
            Self::Box { width } => width / 2.0,
        }
    }

    /// Default half-width beyond the shift: `6 sigma` or `width`.
    pub fn default_margin(&self) -> f64 {
        match *self {
            Self::Gaussian { sigma } => 6.0 * sigma,
            Self::Box { width } => width,
        }
    }

    /// `a = int P_D^2`.
    pub fn self_overlap(&self) -> f64 {
        match *self {
            Self::Gaussian { sigma } => 1.0 / (2.0 * sigma * PI.sqrt()),
            Self::Box { width } => 1.0 / width,
        }
    }

    /// `b(g) = int P_D(q - g) P_D(q + g) dq`.
    pub fn shifted_overlap(&self, g: f64) -> f64 {
        match *self {
            Self::Gaussian { sigma } => self.self_overlap() * (-(g / sigma).powi(2)).exp(),
            Self::Box { width } => (width - 2.0 * g.abs()).max(0.0) / (width * width),
        }
    }

    /// `a - b(g)`, evaluated without cancellation for small `g`.
    pub fn overlap_gap(&self, g: f64) -> f64 {
        match *self {
            Self::Gaussian { sigma } => -self.self_overlap() * (-(g / sigma).powi(2)).exp_m1(),
            Self::Box { width } => (2.0 * g.abs()).min(width) / (width * width),
        }
    }

    /// `int sqrt(P_D(q - g) P_D(q + g)) dq`, the overlap of the two pointer
    /// amplitudes.
    pub fn amplitude_overlap(&self, g: f64) -> f64 {
        match *self {
            Self::Gaussian { sigma } => (-g * g / (2.0 * sigma * sigma)).exp(),
            Self::Box { width } => (1.0 - 2.0 * g.abs() / width).max(0.0),
        }
    }

    /// Points where `P_D(q -+ g)` is discontinuous.
    fn breakpoints(&self, g: f64) -> Vec<f64> {
        match *self {
            Self::Gaussian { .. } => Vec::new(),
            Self::Box { width } => {
                let h = width / 2.0;
                vec![-g - h, -g + h, g - h, g + h]
            }
        }
    }
}

/// Uniform grid of `points` nodes spanning `[min, max]` inclusive; node `i`
/// is the midpoint of a cell of width `(max - min) / (points - 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Grid {
    pub fn new(min: f64, max: f64, points: usize) -> Result<Self> {
        if !(min < max) || points < 3 || !min.is_finite() || !max.is_finite() {
            return Err(CvError::InvalidParameter(format!(
                "grid needs min < max and at least 3 points, got {min}:{max}:{points}"
            )));
        }
        Ok(Self { min, max, points })
    }

    pub fn symmetric(half_width: f64, points: usize) -> Result<Self> {
        Self::new(-half_width, half_width, points)
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.points - 1) as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        let step = self.step();
        (0..self.points).map(move |i| self.min + i as f64 * step)
    }

    /// Same span with the node spacing halved.
    pub fn refined(&self) -> Self {
        Self {
            points: 2 * self.points - 1,
            ..*self
        }
    }
}

/// One discretized outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub center: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorModel {
    pub distribution: PointerDistribution,
    pub coupling: f64,
    pub grid: Grid,
}

impl DetectorModel {
    pub fn new(distribution: PointerDistribution, coupling: f64, grid: Grid) -> Result<Self> {
        if !coupling.is_finite() {
            return Err(CvError::InvalidParameter("coupling must be finite".into()));
        }
        let need = coupling.abs() + distribution.coverage();
        if grid.min > -need + 1e-12 * need || grid.max < need - 1e-12 * need {
            return Err(CvError::InvalidParameter(format!(
                "grid [{}, {}] does not cover +-{need}",
                grid.min, grid.max
            )));
        }
        Ok(Self {
            distribution,
            coupling,
            grid,
        })
    }

    /// Grid spanning `+-(|g| + margin)` with the given number of points.
    pub fn with_points(distribution: PointerDistribution, coupling: f64, points: usize) -> Result<Self> {
        let grid = Grid::symmetric(coupling.abs() + distribution.default_margin(), points)?;
        Self::new(distribution, coupling, grid)
    }

    pub fn with_default_grid(distribution: PointerDistribution, coupling: f64) -> Result<Self> {
        Self::with_points(distribution, coupling, DEFAULT_GRID_POINTS)
    }

    /// Grid cells, with any cell straddling a density discontinuity split at
    /// the discontinuity so the midpoint rule stays exact for piecewise
    /// constant densities.
    pub fn cells(&self) -> Vec<Cell> {
        let step = self.grid.step();
        let mut breaks = self.distribution.breakpoints(self.coupling);
        breaks.sort_by(f64::total_cmp);
        let mut cells = Vec::with_capacity(self.grid.points + breaks.len());
        for q in self.grid.nodes() {
            let (lo, hi) = (q - step / 2.0, q + step / 2.0);
            let mut edges = vec![lo];
            for &b in &breaks {
                let margin = 1e-12 * step;
                if b > lo + margin && b < hi - margin && b > *edges.last().unwrap() + margin {
                    edges.push(b);
                }
            }
            edges.push(hi);
            for w in edges.windows(2) {
                cells.push(Cell {
                    center: 0.5 * (w[0] + w[1]),
                    width: w[1] - w[0],
                });
            }
        }
        cells
    }

    pub fn upper_density(&self, q: f64) -> f64 {
        self.distribution.density(q - self.coupling)
    }

    pub fn lower_density(&self, q: f64) -> f64 {
        self.distribution.density(q + self.coupling)
    }
}

/// Discretized pointer context with the grid it came from.
#[derive(Debug, Clone)]
pub struct DetectorContext {
    pub context: MeasurementContext,
    pub cells: Vec<Cell>,
    /// Largest deviation of the raw quadrature of either shifted density
    /// from 1, before renormalization.
    pub defect: f64,
}

/// One Kraus operator per cell,
/// `M_i = diag(sqrt(P_D(q_i - g) dq_i), sqrt(P_D(q_i + g) dq_i))`, renormalized
/// to exact completeness.
pub fn detector_context(model: &DetectorModel) -> Result<DetectorContext> {
    let cells = model.cells();
    let upper: Vec<f64> = cells.iter().map(|c| model.upper_density(c.center) * c.width).collect();
    let lower: Vec<f64> = cells.iter().map(|c| model.lower_density(c.center) * c.width).collect();
    let su: f64 = upper.iter().sum();
    let sl: f64 = lower.iter().sum();
    let defect = (su - 1.0).abs().max((sl - 1.0).abs());
    if defect > GRID_REJECT_DEFECT {
        return Err(CvError::GridInadequate { defect });
    }
    let kraus = upper
        .iter()
        .zip(&lower)
        .map(|(u, l)| ComplexMatrix::diag(&[(u / su).sqrt(), (l / sl).sqrt()]))
        .collect();
    Ok(DetectorContext {
        context: MeasurementContext::trusted(kraus),
        cells,
        defect,
    })
}

/// `[P_D(q - g) - P_D(q + g)] / (a - b(g))`.
pub fn detector_cv_analytic(model: &DetectorModel, q: f64) -> Result<f64> {
    pointer_cv(&model.distribution, model.coupling, q)
}

pub fn pointer_cv(distribution: &PointerDistribution, g: f64, q: f64) -> Result<f64> {
    let gap = distribution.overlap_gap(g);
    if gap.abs() < 1e-12 {
        return Err(CvError::DegenerateCoupling { gap });
    }
    Ok((distribution.density(q - g) - distribution.density(q + g)) / gap)
}

/// Gaussian pointer contextual values in closed form,
/// `sqrt(2) exp(-q^2 / 2 sigma^2) sinh(q g / sigma^2) / sinh(g^2 / 2 sigma^2)`,
/// evaluated in an overflow-free arrangement.
pub fn gaussian_cv(q: f64, g: f64, sigma: f64) -> f64 {
    let x = q * g / (sigma * sigma);
    let y = g * g / (2.0 * sigma * sigma);
    std::f64::consts::SQRT_2 * sinh_ratio_scaled(x, y, -q * q / (2.0 * sigma * sigma))
}

/// `exp(s) sinh(x) / sinh(y)` for `y > 0`, without overflow.
pub(crate) fn sinh_ratio_scaled(x: f64, y: f64, s: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let ax = x.abs();
    // sinh(ax)/sinh(y) = exp(ax - y) (1 - e^{-2ax}) / (1 - e^{-2y})
    x.signum() * (s + ax - y).exp() * (-(-2.0 * ax).exp_m1()) / (-(-2.0 * y).exp_m1())
}

/// Closed-form conditioned average for preparation `psi(alpha)` and
/// postselection `f(pi/2)` under a symmetric pointer:
/// `cos(alpha) / (1 + sin(alpha) B(g))` with `B` the amplitude overlap. For
/// the Gaussian `B = exp(-g^2 / 2 sigma^2)`.
pub fn pointer_conditioned_oracle(distribution: &PointerDistribution, alpha: f64, g: f64) -> Result<f64> {
    let denominator = 1.0 + alpha.sin() * distribution.amplitude_overlap(g);
    if denominator.abs() <= 1e-12 {
        return Err(CvError::DivergentPostselection { denominator });
    }
    Ok(alpha.cos() / denominator)
}

/// Gaussian special case of [`pointer_conditioned_oracle`].
pub fn aav_conditioned_oracle(alpha: f64, g: f64, sigma: f64) -> Result<f64> {
    pointer_conditioned_oracle(&PointerDistribution::gaussian(sigma)?, alpha, g)
}

/// Weak limit `cot(alpha/2 + pi/4)` of the pointer conditioned average.
pub fn aav_weak_limit(alpha: f64) -> f64 {
    1.0 / (alpha / 2.0 + PI / 4.0).tan()
}

/// Joint density of pointer reading `q` and successful postselection on
/// `f(pi/2)` after preparing `psi(alpha)`, divided by the postselection
/// probability, times the contextual value at `q`. Integrates to the
/// conditioned average.
pub fn conditioned_weight_density(distribution: &PointerDistribution, g: f64, alpha: f64, q: f64) -> Result<f64> {
    let (cos_half, sin_half) = ((alpha / 2.0).cos(), (alpha / 2.0).sin());
    let amp = cos_half * distribution.density(q - g).sqrt() + sin_half * distribution.density(q + g).sqrt();
    let joint = 0.5 * amp * amp;
    let pf = 0.5 * (1.0 + alpha.sin() * distribution.amplitude_overlap(g));
    if pf <= 1e-12 {
        return Err(CvError::ZeroPostselectionProbability { probability: pf });
    }
    Ok(pointer_cv(distribution, g, q)? * joint / pf)
}

/// Least-redundant contextual values on the discretized pointer, one per
/// cell. Minimum norm is taken in the cell-width weighted norm `sum_j alpha_j^2 dq_j`
/// so that split cells do not bias the values.
pub fn discrete_pointer_cv(model: &DetectorModel, opts: &SolverOptions) -> Result<(DetectorContext, Vec<f64>)> {
    let (det, sol) = discrete_pointer_solution(model, opts)?;
    Ok((det, sol.require_exact()?.alpha0))
}

/// Full solver report behind [`discrete_pointer_cv`]. Singular values belong
/// to the width-weighted problem; `alpha0` and the residual are in the
/// original cell values.
pub fn discrete_pointer_solution(
    model: &DetectorModel,
    opts: &SolverOptions,
) -> Result<(DetectorContext, ContextualValueSolution)> {
    let det = detector_context(model)?;
    let scaled = det
        .context
        .kraus()
        .iter()
        .zip(&det.cells)
        .map(|(m, cell)| m.scale(cell.width.powf(-0.25)))
        .collect();
    let mut sol = solve_contextual_values(&Observable::pauli_z(), &MeasurementContext::trusted(scaled), opts)?;
    for (a, cell) in sol.alpha0.iter_mut().zip(&det.cells) {
        *a /= cell.width.sqrt();
    }
    Ok((det, sol))
}

/// Pointer measurement of `sigma_z` on `psi(alpha)` followed by projective
/// postselection on `f(pi/2)`.
pub fn pointer_setup(model: &DetectorModel, opts: &SolverOptions) -> Result<ConditionedSetup> {
    let (det, cv) = discrete_pointer_cv(model, opts)?;
    let post = MeasurementContext::projective_onto(&psi(PI / 2.0))?;
    ConditionedSetup::new(det.context, cv, post, 0)
}

pub fn pointer_conditioned_average(model: &DetectorModel, alpha: f64) -> Result<f64> {
    let setup = pointer_setup(model, &SolverOptions::default())?;
    let rho = DensityOperator::pure(&psi(alpha))?;
    conditioned_average(&setup, &rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_coupling_gives_identity_effects() {
        let model = DetectorModel::with_default_grid(PointerDistribution::gaussian(0.3).unwrap(), 0.0).unwrap();
        let det = detector_context(&model).unwrap();
        for e in det.context.povm() {
            assert_abs_diff_eq!(e.get(0, 0).re, e.get(1, 1).re, epsilon = 1e-15);
            assert_eq!(e.get(0, 1).norm(), 0.0);
        }
        assert!(matches!(
            detector_cv_analytic(&model, 0.1),
            Err(CvError::DegenerateCoupling { .. })
        ));
    }

    #[test]
    fn gaussian_grid_is_adequate() {
        // quadrature oracle: midpoint sum of the shifted Gaussian over the grid
        let dist = PointerDistribution::gaussian(0.3).unwrap();
        let grid = Grid::new(-3.0, 3.0, 1201).unwrap();
        let model = DetectorModel::new(dist, 0.1, grid).unwrap();
        let det = detector_context(&model).unwrap();
        assert!(det.defect < GRID_ADEQUATE_DEFECT, "defect {}", det.defect);
        let direct: f64 = grid.nodes().map(|q| dist.density(q - 0.1) * grid.step()).sum();
        assert_abs_diff_eq!(direct, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let dist = PointerDistribution::gaussian(0.3).unwrap();
        let model = DetectorModel::new(dist, 0.1, Grid::new(-2.0, 2.0, 5).unwrap()).unwrap();
        assert!(matches!(detector_context(&model), Err(CvError::GridInadequate { .. })));
        assert!(DetectorModel::new(dist, 0.1, Grid::new(-1.0, 1.0, 101).unwrap()).is_err());
    }

    #[test]
    fn disjoint_box_is_strong() {
        let dist = PointerDistribution::boxcar(0.4).unwrap();
        let g = 0.3;
        assert_eq!(dist.shifted_overlap(g), 0.0);
        let model = DetectorModel::with_points(dist, g, 401).unwrap();
        let (det, cv) = discrete_pointer_cv(&model, &SolverOptions::default()).unwrap();
        for (cell, a) in det.cells.iter().zip(&cv) {
            let up = model.upper_density(cell.center) > 0.0;
            let down = model.lower_density(cell.center) > 0.0;
            let expect = match (up, down) {
                (true, false) => 1.0,
                (false, true) => -1.0,
                _ => 0.0,
            };
            assert_abs_diff_eq!(*a, expect, epsilon = 1e-9);
            assert_abs_diff_eq!(
                detector_cv_analytic(&model, cell.center).unwrap(),
                expect,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn analytic_values() {
        let dist = PointerDistribution::gaussian(0.3).unwrap();
        let model = DetectorModel::with_default_grid(dist, 0.1).unwrap();
        assert_eq!(detector_cv_analytic(&model, 0.0).unwrap(), 0.0);
        let boxed = DetectorModel::with_default_grid(PointerDistribution::boxcar(1.0).unwrap(), 0.1).unwrap();
        assert_eq!(detector_cv_analytic(&boxed, 0.0).unwrap(), 0.0);

        // generic quotient against the sinh closed form
        for &(g, sigma) in &[(0.1, 0.3), (1.0, 1.0), (0.03, 0.3), (2.0, 0.5)] {
            let dist = PointerDistribution::gaussian(sigma).unwrap();
            for q in [-1.0, -0.2, 0.05, 0.4, 1.3] {
                let generic = pointer_cv(&dist, g, q).unwrap();
                let closed = gaussian_cv(q, g, sigma);
                assert_abs_diff_eq!(generic, closed, epsilon = 1e-10 * closed.abs().max(1.0));
            }
        }
        // q = g = sigma: sqrt(2) e^{-1/2} sinh(1) / sinh(1/2)
        let expect = 2f64.sqrt() * (-0.5f64).exp() * 1f64.sinh() / 0.5f64.sinh();
        assert_abs_diff_eq!(gaussian_cv(0.3, 0.3, 0.3), expect, epsilon = 1e-14);
        assert_abs_diff_eq!(expect, 1.9345, epsilon = 1e-4);
    }

    #[test]
    fn overlaps_against_quadrature() {
        for dist in [
            PointerDistribution::gaussian(0.3).unwrap(),
            PointerDistribution::boxcar(0.8).unwrap(),
        ] {
            for g in [0.0, 0.05, 0.2, 0.5] {
                let model = DetectorModel::with_points(dist, g, 4001).unwrap();
                let cells = model.cells();
                let centered = DetectorModel::with_points(dist, 0.0, 4001).unwrap().cells();
                let a: f64 = centered.iter().map(|c| dist.density(c.center).powi(2) * c.width).sum();
                let b: f64 = cells
                    .iter()
                    .map(|c| model.upper_density(c.center) * model.lower_density(c.center) * c.width)
                    .sum();
                let amp: f64 = cells
                    .iter()
                    .map(|c| (model.upper_density(c.center) * model.lower_density(c.center)).sqrt() * c.width)
                    .sum();
                assert_abs_diff_eq!(a, dist.self_overlap(), epsilon = 1e-9);
                assert_abs_diff_eq!(b, dist.shifted_overlap(g), epsilon = 1e-9);
                assert_abs_diff_eq!(a - b, dist.overlap_gap(g), epsilon = 2e-9);
                // plain density tails beyond the grid margin are ~1e-9
                assert_abs_diff_eq!(amp, dist.amplitude_overlap(g), epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn oracle_limits() {
        for alpha in [PI / 6.0, PI / 3.0, 2.0] {
            assert_abs_diff_eq!(
                aav_conditioned_oracle(alpha, 10.0, 0.3).unwrap(),
                alpha.cos(),
                epsilon = 1e-12
            );
            assert_abs_diff_eq!(
                aav_conditioned_oracle(alpha, 1e-9, 0.3).unwrap(),
                aav_weak_limit(alpha),
                epsilon = 1e-9
            );
        }
        let v = aav_conditioned_oracle(47.0 * PI / 32.0, 0.1, 0.3).unwrap();
        assert!(v < -1.0);
        assert_abs_diff_eq!(v, -1.67, epsilon = 0.01);
    }

    #[test]
    fn weight_density_integrates_to_oracle() {
        let alpha = 47.0 * PI / 32.0;
        for dist in [
            PointerDistribution::gaussian(0.3).unwrap(),
            PointerDistribution::box_matching_sigma(0.3).unwrap(),
        ] {
            let model = DetectorModel::with_points(dist, 0.1, 2401).unwrap();
            let total: f64 = model
                .cells()
                .iter()
                .map(|c| conditioned_weight_density(&dist, 0.1, alpha, c.center).unwrap() * c.width)
                .sum();
            let oracle = pointer_conditioned_oracle(&dist, alpha, 0.1).unwrap();
            assert_abs_diff_eq!(total, oracle, epsilon = 1e-8 * oracle.abs());
        }
    }

    #[test]
    fn box_cells_split_at_edges() {
        let dist = PointerDistribution::boxcar(1.0).unwrap();
        let model = DetectorModel::new(dist, 0.123, Grid::symmetric(2.0, 11).unwrap()).unwrap();
        let cells = model.cells();
        let total: f64 = cells.iter().map(|c| c.width).sum();
        assert_abs_diff_eq!(total, 4.0 + 0.4, epsilon = 1e-12);
        assert_eq!(cells.len(), 11 + 4);
        let det = detector_context(&model).unwrap();
        assert!(det.defect < 1e-14);
    }
}
