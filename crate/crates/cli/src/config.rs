//! JSON scenario files and their translation into domain objects.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use cvtool_core::operator::{c, psi, ComplexMatrix, DensityOperator, MeasurementContext, Observable, C64};
use cvtool_core::scenarios::detector::{
    detector_context, discrete_pointer_solution, DetectorModel, Grid, PointerDistribution,
};
use cvtool_core::scenarios::polarization::{gamma_for_strength, polarization_context};
use cvtool_core::scenarios::qpc::{rotated_postselection, QpcParams};
use cvtool_core::solver::{solve_contextual_values, ContextualValueSolution, SolverOptions};
use serde::{Deserialize, Serialize};

/// `[re, im]`.
pub type Complex = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Named(NamedMatrix),
    /// Row-major entries.
    Entries(Vec<Vec<Complex>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedMatrix {
    SigmaX,
    SigmaY,
    SigmaZ,
}

impl MatrixSpec {
    pub fn to_matrix(&self, field: &str) -> Result<ComplexMatrix> {
        match self {
            MatrixSpec::Named(NamedMatrix::SigmaX) => Ok(ComplexMatrix::pauli_x()),
            MatrixSpec::Named(NamedMatrix::SigmaY) => Ok(ComplexMatrix::pauli_y()),
            MatrixSpec::Named(NamedMatrix::SigmaZ) => Ok(ComplexMatrix::pauli_z()),
            MatrixSpec::Entries(rows) => {
                let rows: Vec<Vec<C64>> = rows.iter().map(|r| r.iter().map(|z| c(z[0], z[1])).collect()).collect();
                ComplexMatrix::from_rows(&rows).with_context(|| format!("{field}: bad matrix"))
            }
        }
    }
}

/// `MIN:MAX:POINTS`, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn symmetric(half_width: f64, points: usize) -> Self {
        Self {
            min: -half_width,
            max: half_width,
            points,
        }
    }

    /// Nodes interpolated from both ends, so a symmetric range hits its
    /// midpoint exactly.
    pub fn nodes(&self) -> Vec<f64> {
        let last = (self.points - 1) as f64;
        (0..self.points)
            .map(|i| {
                let t = i as f64 / last;
                self.min * (1.0 - t) + self.max * t
            })
            .collect()
    }

    pub fn to_grid(self) -> Result<Grid> {
        Ok(Grid::new(self.min, self.max, self.points)?)
    }
}

impl FromStr for GridSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let [min, max, points] = parts[..] else {
            bail!("grid must look like MIN:MAX:POINTS, got `{s}`");
        };
        let min: f64 = min.trim().parse().with_context(|| format!("grid minimum `{min}`"))?;
        let max: f64 = max.trim().parse().with_context(|| format!("grid maximum `{max}`"))?;
        let points: usize = points
            .trim()
            .parse()
            .with_context(|| format!("grid point count `{points}`"))?;
        if !(min < max) || !min.is_finite() || !max.is_finite() || points < 2 {
            bail!("grid needs finite MIN < MAX and at least 2 points, got `{s}`");
        }
        Ok(Self { min, max, points })
    }
}

impl TryFrom<String> for GridSpec {
    type Error = anyhow::Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<GridSpec> for String {
    fn from(g: GridSpec) -> String {
        g.to_string()
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.min, self.max, self.points)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KrausConvention {
    /// `M_j = E_j^{1/2}`.
    #[default]
    Sqrt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ContextSpec {
    Kraus {
        operators: Vec<MatrixSpec>,
    },
    Povm {
        effects: Vec<MatrixSpec>,
        #[serde(default)]
        kraus: KrausConvention,
    },
    /// Spectral projectors of the observable.
    Projective,
    Polarization {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        strength: Option<f64>,
    },
    GaussianDetector {
        coupling: f64,
        sigma: f64,
    },
    BoxDetector {
        coupling: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        width: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma: Option<f64>,
    },
    /// Either `tau` alone or the four physical parameters.
    Qpc {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tau: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        i1: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        i2: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shot_noise: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        time: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StateSpec {
    /// `(cos(alpha/2), sin(alpha/2))`.
    Psi {
        alpha: f64,
    },
    Vector {
        amplitudes: Vec<Complex>,
    },
    Matrix {
        rho: MatrixSpec,
    },
    MaximallyMixed {
        dim: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PostselectionSpec {
    /// Projective measurement onto `(cos(theta/2), sin(theta/2))`, keeping that outcome.
    F {
        theta: f64,
    },
    /// `exp(-i theta sigma_x / 2)` then a z measurement, keeping `|+1>`.
    RotateX {
        theta: f64,
    },
    Context {
        context: ContextSpec,
        index: usize,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svd_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Options {
    fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Defaults to `sigma_z`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observable: Option<MatrixSpec>,
    pub context: ContextSpec,
    pub state: StateSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub postselection: Option<PostselectionSpec>,
    #[serde(default, skip_serializing_if = "Options::is_empty")]
    pub options: Options,
}

/// First measurement, possibly backed by a discretized pointer whose values
/// are solved in the cell-width weighted norm.
#[derive(Debug, Clone)]
pub struct BuiltContext {
    pub context: MeasurementContext,
    pub detector: Option<DetectorModel>,
    /// Quadrature defect of the detector grid.
    pub defect: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub observable: Observable,
    pub first: BuiltContext,
    pub state: DensityOperator,
    pub postselection: Option<(MeasurementContext, usize)>,
}

impl Scenario {
    pub fn solve(&self, opts: &SolverOptions) -> Result<ContextualValueSolution> {
        match &self.first.detector {
            Some(model) => Ok(discrete_pointer_solution(model, opts)?.1),
            None => Ok(solve_contextual_values(&self.observable, &self.first.context, opts)?),
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| anyhow!("config: {e}"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// `tol` bounds completeness, hermiticity and trace defects.
    pub fn build(&self, tol: f64) -> Result<Scenario> {
        let observable = match &self.observable {
            Some(spec) => Observable::new(spec.to_matrix("observable")?).context("observable")?,
            None => Observable::pauli_z(),
        };
        let grid = self.options.grid;
        let first = build_context(&self.context, &observable, grid, tol, "context")?;
        if first.detector.is_some() && (observable.matrix() - &ComplexMatrix::pauli_z()).max_abs_entry() > tol {
            bail!("observable: pointer detectors measure sigma_z");
        }
        let state = build_state(&self.state, tol)?;
        let postselection = match &self.postselection {
            None => None,
            Some(PostselectionSpec::F { theta }) => Some((MeasurementContext::projective_onto(&psi(*theta))?, 0)),
            Some(PostselectionSpec::RotateX { theta }) => Some((rotated_postselection(*theta), 0)),
            Some(PostselectionSpec::Context { context, index }) => {
                let built = build_context(context, &observable, grid, tol, "postselection.context")?;
                if *index >= built.context.len() {
                    bail!(
                        "postselection.index: {index} out of range for {} outcomes",
                        built.context.len()
                    );
                }
                Some((built.context, *index))
            }
        };
        Ok(Scenario {
            observable,
            first,
            state,
            postselection,
        })
    }
}

fn matrices(specs: &[MatrixSpec], field: &str) -> Result<Vec<ComplexMatrix>> {
    specs
        .iter()
        .enumerate()
        .map(|(i, m)| m.to_matrix(&format!("{field}[{i}]")))
        .collect()
}

fn detector(distribution: PointerDistribution, coupling: f64, grid: Option<GridSpec>) -> Result<BuiltContext> {
    let model = match grid {
        Some(g) => DetectorModel::new(distribution, coupling, g.to_grid()?)?,
        None => DetectorModel::with_default_grid(distribution, coupling)?,
    };
    let det = detector_context(&model)?;
    Ok(BuiltContext {
        context: det.context,
        detector: Some(model),
        defect: Some(det.defect),
    })
}

fn plain(context: MeasurementContext) -> BuiltContext {
    BuiltContext {
        context,
        detector: None,
        defect: None,
    }
}

fn build_context(
    spec: &ContextSpec,
    observable: &Observable,
    grid: Option<GridSpec>,
    tol: f64,
    field: &str,
) -> Result<BuiltContext> {
    let built = match spec {
        ContextSpec::Kraus { operators } => plain(MeasurementContext::from_kraus(
            matrices(operators, &format!("{field}.operators"))?,
            tol,
        )?),
        ContextSpec::Povm {
            effects,
            kraus: KrausConvention::Sqrt,
        } => plain(MeasurementContext::from_povm(
            matrices(effects, &format!("{field}.effects"))?,
            tol,
        )?),
        ContextSpec::Projective => plain(MeasurementContext::from_kraus(observable.projectors().to_vec(), tol)?),
        ContextSpec::Polarization { gamma, strength } => {
            let gamma = match (gamma, strength) {
                (Some(g), None) => *g,
                (None, Some(s)) if (-1.0..=1.0).contains(s) => gamma_for_strength(*s),
                (None, Some(s)) => bail!("{field}.strength: must lie in [-1, 1], got {s}"),
                _ => bail!("{field}: give exactly one of `gamma` or `strength`"),
            };
            plain(polarization_context(gamma)?)
        }
        ContextSpec::GaussianDetector { coupling, sigma } => {
            detector(PointerDistribution::gaussian(*sigma)?, *coupling, grid)?
        }
        ContextSpec::BoxDetector { coupling, width, sigma } => {
            let distribution = match (width, sigma) {
                (Some(w), None) => PointerDistribution::boxcar(*w)?,
                (None, Some(s)) => PointerDistribution::box_matching_sigma(*s)?,
                _ => bail!("{field}: give exactly one of `width` or `sigma`"),
            };
            detector(distribution, *coupling, grid)?
        }
        ContextSpec::Qpc {
            tau,
            i1,
            i2,
            shot_noise,
            time,
        } => {
            let tau = match (tau, i1, i2, shot_noise, time) {
                (Some(t), None, None, None, None) => *t,
                (None, Some(a), Some(b), Some(s), Some(t)) => QpcParams::new(*a, *b, *s, *t)?.tau(),
                _ => bail!("{field}: give either `tau` or all of `i1`, `i2`, `shot_noise`, `time`"),
            };
            if !(tau > 0.0) {
                bail!("{field}.tau: must be positive, got {tau}");
            }
            detector(PointerDistribution::gaussian(1.0 / tau.sqrt())?, 1.0, grid)?
        }
    };
    if built.context.dim() != observable.dim() {
        bail!(
            "{field}: acts on dimension {}, observable has dimension {}",
            built.context.dim(),
            observable.dim()
        );
    }
    Ok(built)
}

fn build_state(spec: &StateSpec, tol: f64) -> Result<DensityOperator> {
    let state = match spec {
        StateSpec::Psi { alpha } => DensityOperator::pure(&psi(*alpha)),
        StateSpec::Vector { amplitudes } => {
            DensityOperator::pure(&amplitudes.iter().map(|z| c(z[0], z[1])).collect::<Vec<_>>())
        }
        StateSpec::Matrix { rho } => DensityOperator::with_tol(rho.to_matrix("state.rho")?, tol),
        StateSpec::MaximallyMixed { dim } if *dim > 0 => Ok(DensityOperator::maximally_mixed(*dim)),
        StateSpec::MaximallyMixed { .. } => bail!("state.dim: must be positive"),
    };
    state.context("state")
}

/// Replace the number at a dotted path (`context.coupling`, `state.amplitudes.0.1`).
pub fn set_parameter(doc: &mut serde_json::Value, path: &str, value: f64) -> Result<()> {
    let mut node = doc;
    for key in path.split('.') {
        node = match node {
            serde_json::Value::Object(map) => map.get_mut(key),
            serde_json::Value::Array(items) => key.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| anyhow!("sweep parameter `{path}`: no field `{key}` in config"))?;
    }
    if !node.is_number() {
        bail!("sweep parameter `{path}` is not a number in the config");
    }
    *node = serde_json::json!(value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const POLARIZATION: &str = r#"{
        "context": {"type": "polarization", "gamma": 0.8660254037844386},
        "state": {"type": "psi", "alpha": 0.7},
        "postselection": {"type": "f", "theta": -1.5707963267948966}
    }"#;

    #[test]
    fn grid_spec_parses_and_prints() {
        let g: GridSpec = "-3:3:7".parse().unwrap();
        assert_eq!(g, GridSpec::symmetric(3.0, 7));
        assert_eq!(g.to_string(), "-3:3:7");
        assert_eq!(g.nodes()[3], 0.0);
        assert!("1:0:5".parse::<GridSpec>().is_err());
        assert!("0:1".parse::<GridSpec>().is_err());
        assert!("0:1:x".parse::<GridSpec>().is_err());
    }

    #[test]
    fn diagnostics_name_the_location() {
        let err =
            ScenarioConfig::from_json("{\"context\": {\"type\": \"polarization\"},\n \"state\": {\"type\": \"psi\"}}")
                .unwrap_err()
                .to_string();
        assert!(err.contains("alpha") && err.contains("line 2"), "{err}");
        let err = ScenarioConfig::from_json(r#"{"context": {"type": "bogus"}, "state": {"type": "psi", "alpha": 0}}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("bogus"), "{err}");
        let err = ScenarioConfig::from_json(
            r#"{"context": {"type": "polarization", "gamma": 1, "gama": 2}, "state": {"type": "psi", "alpha": 0}}"#,
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("gama"), "{err}");
    }

    #[test]
    fn build_errors_carry_the_field() {
        let cfg = ScenarioConfig::from_json(
            r#"{"context": {"type": "kraus", "operators": [[[[1,0],[0,0]],[[0,0],[1,0]]], [[[1,0]]]]},
                "state": {"type": "psi", "alpha": 0}}"#,
        )
        .unwrap();
        let err = format!("{:#}", cfg.build(1e-10).unwrap_err());
        assert!(err.contains("dimension"), "{err}");

        let cfg = ScenarioConfig::from_json(
            r#"{"context": {"type": "polarization", "gamma": 0.5, "strength": 0.1}, "state": {"type": "psi", "alpha": 0}}"#,
        )
        .unwrap();
        let err = format!("{:#}", cfg.build(1e-10).unwrap_err());
        assert!(err.contains("context"), "{err}");
    }

    #[test]
    fn polarization_builds() {
        let s = ScenarioConfig::from_json(POLARIZATION).unwrap().build(1e-10).unwrap();
        assert_eq!(s.first.context.len(), 2);
        assert!(s.first.detector.is_none());
        assert_eq!(s.postselection.as_ref().unwrap().1, 0);
    }

    #[test]
    fn sweep_paths() {
        let mut doc: serde_json::Value = serde_json::from_str(POLARIZATION).unwrap();
        set_parameter(&mut doc, "state.alpha", 1.25).unwrap();
        assert_eq!(doc["state"]["alpha"], 1.25);
        assert!(set_parameter(&mut doc, "state.beta", 1.0).is_err());
        assert!(set_parameter(&mut doc, "context.type", 1.0).is_err());
    }
}
