//! Command implementations. Each returns its rendered document plus any
//! warnings; `main` decides where output goes and how to exit.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use cvtool_core::averaging::{
    conditioned_breakdown, cv_moment, moment, reconstructed_average, weak_value, ConditionedSetup,
};
use cvtool_core::error::CvError;
use cvtool_core::montecarlo::{
    empirical_average, empirical_conditioned_average, empirical_moment, EmpiricalResult, RunConfig,
};
use cvtool_core::operator::{psi, DensityOperator};
use cvtool_core::scenarios::detector::{
    aav_weak_limit, conditioned_weight_density, detector_context, pointer_conditioned_oracle, pointer_cv,
    pointer_setup, DetectorModel, PointerDistribution, GRID_ADEQUATE_DEFECT,
};
use cvtool_core::scenarios::qpc_cv;
use cvtool_core::solver::{SolveMode, SolverOptions};
use serde_json::json;

use crate::config::{set_parameter, GridSpec, Scenario, ScenarioConfig};
use crate::output::{Format, Header, Report, Table, Value};

pub const EXIT_ERROR: u8 = 1;
pub const EXIT_NOT_RECONSTRUCTABLE: u8 = 2;
pub const EXIT_ZERO_POSTSELECTION: u8 = 3;
pub const EXIT_CHECK_FAILED: u8 = 4;

pub const DEFAULT_MC_TRIALS: u64 = 100_000;

/// An error with a fixed exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

pub fn fail(code: u8, message: impl Into<String>) -> anyhow::Error {
    Failure {
        code,
        message: message.into(),
    }
    .into()
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return f.code;
        }
        if let Some(e) = cause.downcast_ref::<CvError>() {
            return match e {
                CvError::NotReconstructable { .. } => EXIT_NOT_RECONSTRUCTABLE,
                CvError::ZeroPostselectionProbability { .. } | CvError::NoPostselectedTrials => EXIT_ZERO_POSTSELECTION,
                _ => EXIT_ERROR,
            };
        }
    }
    EXIT_ERROR
}

/// Command-line settings shared by every command; these override the
/// matching config options.
#[derive(Debug, Clone)]
pub struct Settings {
    pub config: Option<PathBuf>,
    pub format: Option<Format>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub svd_tol: Option<f64>,
    pub grid: Option<GridSpec>,
    pub tol: f64,
}

/// Rendered output together with the conditions a `--strict` run rejects.
#[derive(Debug, Default)]
pub struct Outcome {
    pub document: String,
    pub warnings: Vec<String>,
    /// Raised after the document has been written.
    pub error: Option<anyhow::Error>,
}

struct Loaded {
    config: ScenarioConfig,
    scenario: Scenario,
    solver: SolverOptions,
    warnings: Vec<String>,
}

impl Settings {
    fn effective(&self, mut config: ScenarioConfig) -> ScenarioConfig {
        let o = &mut config.options;
        o.grid = self.grid.or(o.grid);
        o.svd_tol = self.svd_tol.or(o.svd_tol);
        o.trials = self.trials.or(o.trials);
        o.seed = self.seed.or(o.seed);
        config
    }

    fn load(&self) -> Result<Loaded> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| anyhow!("this command needs --config PATH"))?;
        let config = self.effective(ScenarioConfig::load(path)?);
        self.prepare(config)
    }

    fn prepare(&self, config: ScenarioConfig) -> Result<Loaded> {
        let scenario = config.build(self.tol)?;
        let solver = SolverOptions::with_svd_tol(config.options.svd_tol.unwrap_or(self.tol));
        let warnings = grid_warning(scenario.first.defect).into_iter().collect();
        Ok(Loaded {
            config,
            scenario,
            solver,
            warnings,
        })
    }

    fn format(&self, default: Format) -> Format {
        self.format.unwrap_or(default)
    }
}

impl Loaded {
    fn header(&self, command: &str) -> Header {
        Header {
            command: command.into(),
            config: serde_json::to_value(&self.config).expect("config json"),
        }
    }

    fn cv(&self) -> Result<Vec<f64>> {
        Ok(self.scenario.solve(&self.solver)?.require_exact()?.alpha0)
    }

    fn run_config(&self) -> Result<RunConfig> {
        let o = &self.config.options;
        Ok(RunConfig::new(
            o.trials.unwrap_or(DEFAULT_MC_TRIALS),
            o.seed.unwrap_or(0),
        )?)
    }

    fn setup(&self, cv: Vec<f64>) -> Result<ConditionedSetup> {
        let (second, index) = self
            .scenario
            .postselection
            .clone()
            .ok_or_else(|| anyhow!("config has no `postselection`"))?;
        Ok(ConditionedSetup::new(
            self.scenario.first.context.clone(),
            cv,
            second,
            index,
        )?)
    }

    fn eigen_range(&self) -> (f64, f64) {
        let e = self.scenario.observable.eigenvalues();
        let lo = e.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

fn grid_warning(defect: Option<f64>) -> Option<String> {
    defect
        .filter(|d| *d > GRID_ADEQUATE_DEFECT)
        .map(|d| format!("detector grid is marginal: quadrature defect {d:.3e}"))
}

fn mc_warning(result: &EmpiricalResult, exact: f64) -> Option<String> {
    let z = (result.estimate - exact) / result.stderr;
    (result.stderr > 0.0 && z.abs() > 5.0)
        .then(|| format!("Monte Carlo estimate is {z:.1} standard errors from the exact value"))
}

fn push_mc(report: &mut Report, result: &EmpiricalResult, cfg: &RunConfig, exact: f64) {
    report.num("mc_estimate", result.estimate);
    report.num("mc_stderr", result.stderr);
    report.push("mc_trials", Value::Int(cfg.trials));
    report.push("mc_seed", Value::Int(cfg.seed));
    if let Some(rate) = result.postselection_rate {
        report.num("mc_postselection_rate", rate);
    }
    let z = if result.stderr > 0.0 {
        (result.estimate - exact) / result.stderr
    } else if result.estimate == exact {
        0.0
    } else {
        f64::INFINITY
    };
    report.num("mc_deviation_in_stderr", z);
}

pub fn solve(settings: &Settings) -> Result<Outcome> {
    let loaded = settings.load()?;
    let sol = loaded.scenario.solve(&loaded.solver)?;
    let mut r = Report::default();
    r.push(
        "mode",
        Value::Text(
            match sol.mode {
                SolveMode::CommutingF => "commuting",
                SolveMode::GeneralOperatorSpace => "general",
            }
            .into(),
        ),
    );
    r.push("outcomes", Value::Int(sol.alpha0.len() as u64));
    r.push("exact", Value::Flag(sol.exact));
    r.num("residual", sol.residual);
    r.push("rank", Value::Int(sol.rank as u64));
    r.push("null_dimension", Value::Int(sol.null_dim() as u64));
    r.num("truncation_tol", sol.truncation_tol);
    r.push(
        "eigenvalues",
        Value::Nums(loaded.scenario.observable.eigenvalues().to_vec()),
    );
    r.num("cv_min", sol.min_value());
    r.num("cv_max", sol.max_value());
    r.push("alpha0", Value::Nums(sol.alpha0.clone()));
    r.push("singular_values", Value::Nums(sol.singular_values.clone()));
    let document = r.render(settings.format(Format::Text), &loaded.header("solve"))?;
    let error = (!sol.exact).then(|| CvError::NotReconstructable { residual: sol.residual }.into());
    Ok(Outcome {
        document,
        warnings: loaded.warnings,
        error,
    })
}

pub fn conditioned(settings: &Settings) -> Result<Outcome> {
    let mut loaded = settings.load()?;
    let setup = loaded.setup(loaded.cv()?)?;
    let rho = &loaded.scenario.state;
    let breakdown = conditioned_breakdown(&setup, rho)?;
    let value = breakdown.value;
    let (lo, hi) = loaded.eigen_range();
    let outside = value < lo - 1e-12 || value > hi + 1e-12;

    let mut r = Report::default();
    r.num("conditioned_average", value);
    r.num("postselection_probability", breakdown.postselection_probability);
    r.num("eigenvalue_min", lo);
    r.num("eigenvalue_max", hi);
    r.num("cv_min", setup.cv().iter().copied().fold(f64::INFINITY, f64::min));
    r.num("cv_max", setup.cv().iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let e_f = &setup.second().povm()[setup.postselect()];
    if let Ok(w) = weak_value(&loaded.scenario.observable, e_f, rho) {
        r.num("weak_value", w);
    }
    r.push("outside_eigenvalue_range", Value::Flag(outside));
    if outside {
        r.push("note", Value::Text("outside eigenvalue range".into()));
    }
    if settings.trials.is_some() {
        let cfg = loaded.run_config()?;
        let mc = empirical_conditioned_average(&setup, rho, &cfg)?;
        loaded.warnings.extend(mc_warning(&mc, value));
        push_mc(&mut r, &mc, &cfg, value);
    }
    Ok(Outcome {
        document: r.render(settings.format(Format::Text), &loaded.header("conditioned"))?,
        warnings: loaded.warnings,
        error: None,
    })
}

pub fn moments(settings: &Settings, order: u32) -> Result<Outcome> {
    let mut loaded = settings.load()?;
    let cv = loaded.cv()?;
    let ctx = &loaded.scenario.first.context;
    let rho = &loaded.scenario.state;
    let value = moment(&cv, ctx, rho, order)?;
    let mut r = Report::default();
    r.push("order", Value::Int(order as u64));
    r.num("moment", value);
    r.num(
        "observable_moment",
        rho.expectation(&loaded.scenario.observable.power(order)),
    );
    r.num("cv_power_average", cv_moment(&cv, ctx, rho, order)?);
    if settings.trials.is_some() {
        let cfg = loaded.run_config()?;
        let mc = empirical_moment(&cv, ctx, rho, order, &cfg)?;
        loaded.warnings.extend(mc_warning(&mc, value));
        push_mc(&mut r, &mc, &cfg, value);
    }
    Ok(Outcome {
        document: r.render(settings.format(Format::Text), &loaded.header("moment"))?,
        warnings: loaded.warnings,
        error: None,
    })
}

/// Monte Carlo run of whichever estimator the config calls for.
pub fn mc(settings: &Settings, order: u32) -> Result<Outcome> {
    let mut loaded = settings.load()?;
    let cv = loaded.cv()?;
    let cfg = loaded.run_config()?;
    let rho = loaded.scenario.state.clone();
    let mut r = Report::default();
    let (estimator, exact, result) = if loaded.scenario.postselection.is_some() {
        let setup = loaded.setup(cv)?;
        let exact = conditioned_breakdown(&setup, &rho)?.value;
        ("conditioned", exact, empirical_conditioned_average(&setup, &rho, &cfg)?)
    } else if order > 1 {
        let ctx = &loaded.scenario.first.context;
        (
            "moment",
            moment(&cv, ctx, &rho, order)?,
            empirical_moment(&cv, ctx, &rho, order, &cfg)?,
        )
    } else {
        let ctx = &loaded.scenario.first.context;
        (
            "average",
            reconstructed_average(&cv, ctx, &rho)?,
            empirical_average(&cv, ctx, &rho, &cfg)?,
        )
    };
    r.push("estimator", Value::Text(estimator.into()));
    if estimator == "moment" {
        r.push("order", Value::Int(order as u64));
    }
    r.num("exact", exact);
    push_mc(&mut r, &result, &cfg, exact);
    loaded.warnings.extend(mc_warning(&result, exact));
    Ok(Outcome {
        document: r.render(settings.format(Format::Text), &loaded.header("mc"))?,
        warnings: loaded.warnings,
        error: None,
    })
}

/// Re-evaluates the config with the number at `param` set to each node of `values`.
pub fn sweep(settings: &Settings, param: &str, values: GridSpec) -> Result<Outcome> {
    let path = settings
        .config
        .as_ref()
        .ok_or_else(|| anyhow!("this command needs --config PATH"))?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let base = settings.effective(ScenarioConfig::from_json(&text)?);
    let doc = serde_json::to_value(&base)?;
    let conditioned = base.postselection.is_some();

    let mut columns = vec![param, "expectation", "cv_min", "cv_max"];
    if conditioned {
        columns.extend(["conditioned_average", "postselection_probability"]);
    }
    let mut table = Table::new(&columns);
    let mut warnings = Vec::new();
    for x in values.nodes() {
        let mut point = doc.clone();
        set_parameter(&mut point, param, x)?;
        let config: ScenarioConfig = serde_json::from_value(point).with_context(|| format!("{param} = {x}"))?;
        let loaded = settings.prepare(config).with_context(|| format!("{param} = {x}"))?;
        warnings.extend(loaded.warnings.iter().map(|w| format!("{param} = {x}: {w}")));
        let cv = loaded.cv().with_context(|| format!("{param} = {x}"))?;
        let ctx = &loaded.scenario.first.context;
        let rho = &loaded.scenario.state;
        let mut row = vec![
            x,
            reconstructed_average(&cv, ctx, rho)?,
            cv.iter().copied().fold(f64::INFINITY, f64::min),
            cv.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ];
        if conditioned {
            match conditioned_breakdown(&loaded.setup(cv)?, rho) {
                Ok(b) => row.extend([b.value, b.postselection_probability]),
                Err(CvError::ZeroPostselectionProbability { probability }) => {
                    warnings.push(format!("{param} = {x}: postselection probability {probability:.3e}"));
                    row.extend([f64::NAN, probability]);
                }
                Err(e) => return Err(e.into()),
            }
        }
        table.rows.push(row);
    }
    table.meta.push("parameter", Value::Text(param.into()));
    table.meta.push("values", Value::Text(values.to_string()));
    let header = Header {
        command: "sweep".into(),
        config: doc,
    };
    Ok(Outcome {
        document: table.render(settings.format(Format::Csv), &header)?,
        warnings,
        error: None,
    })
}

pub const FIG1_STRONG_COUPLING: f64 = 1.0;

pub fn fig1(settings: &Settings, g: f64, sigma: f64, alpha: f64) -> Result<Outcome> {
    let gauss = PointerDistribution::gaussian(sigma)?;
    let boxcar = PointerDistribution::box_matching_sigma(sigma)?;
    let grid = settings
        .grid
        .unwrap_or_else(|| GridSpec::symmetric(g.abs().max(FIG1_STRONG_COUPLING) + 6.0 * sigma, 1201));
    let mut table = Table::new(&[
        "q",
        "cv_gaussian",
        "cv_box",
        "conditioned_weight_gaussian",
        "conditioned_weight_box",
        "cv_gaussian_strong",
        "cv_box_strong",
    ]);
    for q in grid.nodes() {
        table.rows.push(vec![
            q,
            pointer_cv(&gauss, g, q)?,
            pointer_cv(&boxcar, g, q)?,
            conditioned_weight_density(&gauss, g, alpha, q)?,
            conditioned_weight_density(&boxcar, g, alpha, q)?,
            pointer_cv(&gauss, FIG1_STRONG_COUPLING, q)?,
            pointer_cv(&boxcar, FIG1_STRONG_COUPLING, q)?,
        ]);
    }

    let opts = SolverOptions::with_svd_tol(settings.svd_tol.unwrap_or(settings.tol));
    let rho = DensityOperator::pure(&psi(alpha))?;
    let mut warnings = Vec::new();
    let m = &mut table.meta;
    m.num("coupling", g);
    m.num("sigma", sigma);
    m.num("alpha", alpha);
    m.push("postselection", Value::Text("f(pi/2)".into()));
    for (name, dist) in [("gaussian", &gauss), ("box", &boxcar)] {
        let model = DetectorModel::with_default_grid(*dist, g)?;
        let setup = pointer_setup(&model, &opts)?;
        let value = conditioned_breakdown(&setup, &rho)?.value;
        warnings.extend(grid_warning(Some(detector_context(&model)?.defect)));
        m.num(&format!("conditioned_average_{name}"), value);
        m.num(
            &format!("conditioned_average_{name}_closed_form"),
            pointer_conditioned_oracle(dist, alpha, g)?,
        );
        if !(-1.0..=1.0).contains(&value) {
            m.push(&format!("note_{name}"), Value::Text("outside eigenvalue range".into()));
        }
    }
    m.num("weak_value", aav_weak_limit(alpha));
    m.num("strong_coupling", FIG1_STRONG_COUPLING);
    let header = Header {
        command: "fig1".into(),
        config: json!({"g": g, "sigma": sigma, "alpha": alpha, "grid": grid.to_string()}),
    };
    Ok(Outcome {
        document: table.render(settings.format(Format::Csv), &header)?,
        warnings,
        error: None,
    })
}

pub const FIG2_SMALL_TAU: f64 = 0.01;
/// Readings up to this magnitude must be within 1% of the linear small-`tau`
/// form; beyond it the `exp(-u^2 tau / 2)` factor alone exceeds 0.5%.
pub const FIG2_LINEAR_REACH: f64 = 1.0;

pub fn fig2(settings: &Settings, taus: &[f64]) -> Result<Outcome> {
    if taus.is_empty() {
        bail!("--tau needs at least one value");
    }
    if let Some(t) = taus.iter().find(|t| !(**t > 0.0)) {
        bail!("--tau values must be positive, got {t}");
    }
    let grid = settings.grid.unwrap_or(GridSpec {
        min: -2.0,
        max: 2.0,
        points: 401,
    });
    let names: Vec<String> = taus.iter().map(|t| format!("tau_{}", crate::output::num(*t))).collect();
    let mut columns = vec!["u"];
    columns.extend(names.iter().map(String::as_str));
    let mut table = Table::new(&columns);
    for u in grid.nodes() {
        let mut row = vec![u];
        for &t in taus {
            row.push(qpc_cv(u, t)?);
        }
        table.rows.push(row);
    }

    let smallest = taus.iter().copied().fold(f64::INFINITY, f64::min);
    let mut error = None;
    if smallest <= FIG2_SMALL_TAU {
        let mut worst: f64 = 0.0;
        for u in grid
            .nodes()
            .into_iter()
            .filter(|u| *u != 0.0 && u.abs() <= FIG2_LINEAR_REACH)
        {
            worst = worst.max((qpc_cv(u, smallest)? / (2.0 * SQRT_2 * u) - 1.0).abs());
        }
        table.meta.num("small_tau", smallest);
        table.meta.num("small_tau_max_relative_deviation", worst);
        if worst > 0.01 {
            error = Some(fail(
                EXIT_CHECK_FAILED,
                format!("tau = {smallest} column deviates from 2 sqrt(2) u by {worst:.3e} (relative)"),
            ));
        }
    }
    let header = Header {
        command: "fig2".into(),
        config: json!({"tau": taus, "grid": grid.to_string()}),
    };
    Ok(Outcome {
        document: table.render(settings.format(Format::Csv), &header)?,
        warnings: Vec::new(),
        error,
    })
}

pub fn default_alpha() -> f64 {
    47.0 * PI / 32.0
}
