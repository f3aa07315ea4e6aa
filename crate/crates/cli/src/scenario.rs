//! Scenario files: strict TOML describing a network, the analyses to run,
//! simulation settings and output preferences.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::{Path, PathBuf};

use gridcert::certificates::{OutputMapMode, RhoGrid};
use gridcert::network::{BusParams, GenerationDynamics, Line, LinearSs, NetworkModel, ScalarMap};
use gridcert::simulator::InputMode;
use nalgebra::{DMatrix, DVector, RowDVector};
use serde::Deserialize;
use sha2::{Digest, Sha256};
use toml::Spanned;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub model: ModelSpec,
    #[serde(default)]
    pub analysis: AnalysisSpec,
    #[serde(default)]
    pub simulation: SimulationSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub buses: Vec<Spanned<BusSpec>>,
    #[serde(default)]
    pub lines: Vec<Spanned<LineSpec>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusKind {
    Generator,
    Load,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusSpec {
    pub id: String,
    pub kind: BusKind,
    #[serde(rename = "M")]
    pub inertia: Option<f64>,
    #[serde(rename = "D")]
    pub damping: Option<f64>,
    pub p_star: f64,
    #[serde(rename = "V", default = "one")]
    pub voltage: f64,
    pub dynamics: Option<DynamicsSpec>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DynamicsSpec {
    Static {
        map: ScalarMap,
    },
    FirstOrder {
        tau: f64,
        map: ScalarMap,
    },
    SecondOrder {
        tau_alpha: f64,
        tau_beta: f64,
        cost_gradient: ScalarMap,
        input_map: ScalarMap,
        #[serde(default)]
        output_map: Option<ScalarMap>,
    },
    /// `xi' = A xi - B omega`, `u = C xi`; `a` is given by rows.
    LinearSs {
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        c: Vec<f64>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSpec {
    pub i: String,
    pub j: String,
    pub b_abs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    SmallGain,
    Secant,
    Popov,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    #[serde(default)]
    pub certificates: Vec<CertificateKind>,
    /// Per-bus sigma values replacing the coupling bound; must not lie below it.
    #[serde(default)]
    pub sigma: BTreeMap<String, Spanned<f64>>,
    #[serde(default)]
    pub rho_grid: Option<RhoGridSpec>,
    #[serde(default = "yes")]
    pub include_rho_limit: bool,
    #[serde(default)]
    pub secant_output_map: OutputMapMode,
    #[serde(default)]
    pub table2: Option<Table2Spec>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        AnalysisSpec {
            certificates: Vec::new(),
            sigma: BTreeMap::new(),
            rho_grid: None,
            include_rho_limit: true,
            secant_output_map: OutputMapMode::default(),
            table2: None,
            sweep: None,
        }
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RhoGridSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl From<RhoGridSpec> for RhoGrid {
    fn from(s: RhoGridSpec) -> Self {
        RhoGrid {
            min: s.min,
            max: s.max,
            points: s.points,
        }
    }
}

pub const TABLE2_SIGMAS: [f64; 6] = [0.0, 5.0, 10.0, 15.0, 20.0, 30.0];

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table2Spec {
    /// Bus whose droop gain is searched; defaults to the first bus.
    pub bus: Option<String>,
    #[serde(default = "table2_sigmas")]
    pub sigma_values: Vec<f64>,
    #[serde(default = "table2_bracket")]
    pub bracket: [f64; 2],
    #[serde(default = "table2_tol")]
    pub tol: f64,
}

impl Default for Table2Spec {
    fn default() -> Self {
        Table2Spec {
            bus: None,
            sigma_values: table2_sigmas(),
            bracket: table2_bracket(),
            tol: table2_tol(),
        }
    }
}

fn table2_sigmas() -> Vec<f64> {
    TABLE2_SIGMAS.to_vec()
}

fn table2_bracket() -> [f64; 2] {
    [1.0, 60.0]
}

fn table2_tol() -> f64 {
    0.05
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Droop gain of the generation block.
    Droop,
    Damping,
    /// Slope of the block's input nonlinearity.
    Slope,
    Sigma,
}

impl std::str::FromStr for SweepParameter {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "droop" | "k" => Ok(SweepParameter::Droop),
            "damping" | "D" => Ok(SweepParameter::Damping),
            "slope" | "rho" => Ok(SweepParameter::Slope),
            "sigma" => Ok(SweepParameter::Sigma),
            _ => Err(format!("unknown sweep parameter {s:?}; expected droop, damping, slope or sigma")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub bus: String,
    pub min: f64,
    pub max: f64,
    pub points: usize,
    #[serde(default)]
    pub spacing: Spacing,
    pub certificate: CertificateKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    /// Differential-algebraic integration when loads are present, ODE otherwise.
    #[default]
    Auto,
    Dae,
    Ode,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    #[serde(default)]
    pub mode: SimMode,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// Fixed step of the differential-algebraic integrator.
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Output spacing of the adaptive ODE integrator.
    #[serde(default = "default_sample_dt")]
    pub sample_dt: f64,
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    #[serde(default = "default_atol")]
    pub atol: f64,
    #[serde(default)]
    pub input: InputMode,
    #[serde(default)]
    pub perturbation: PerturbationSpec,
    /// Frequency deviation below which the trajectory counts as settled.
    #[serde(default = "default_settle")]
    pub settle_tol: f64,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec {
            mode: SimMode::Auto,
            horizon: default_horizon(),
            dt: default_dt(),
            sample_dt: default_sample_dt(),
            rtol: default_rtol(),
            atol: default_atol(),
            input: InputMode::ClosedLoop,
            perturbation: PerturbationSpec::default(),
            settle_tol: default_settle(),
        }
    }
}

fn default_horizon() -> f64 {
    20.0
}
fn default_dt() -> f64 {
    1e-2
}
fn default_sample_dt() -> f64 {
    0.1
}
fn default_rtol() -> f64 {
    1e-8
}
fn default_atol() -> f64 {
    1e-10
}
fn default_settle() -> f64 {
    1e-6
}

/// Offsets added to the synchronous solution to form the initial state.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    #[serde(default)]
    pub omega: BTreeMap<String, Spanned<f64>>,
    #[serde(default)]
    pub theta: BTreeMap<String, Spanned<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, serde::Serialize, clap::ValueEnum)]
pub enum Format {
    #[serde(rename = "csv")]
    #[value(name = "csv")]
    Csv,
    #[serde(rename = "json-tree")]
    #[value(name = "json-tree")]
    JsonTree,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Relative paths are resolved against the scenario file's directory.
    pub dir: Option<PathBuf>,
    pub format: Option<Format>,
}

/// A decoded scenario together with the model it describes.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub path: PathBuf,
    pub source: String,
    /// Hex SHA-256 of the file contents.
    pub hash: String,
    pub spec: Scenario,
    pub model: NetworkModel,
    /// Coupling bound with the scenario overrides applied.
    pub sigma: Vec<f64>,
}

impl LoadedScenario {
    pub fn load(path: &Path) -> Result<LoadedScenario, CliError> {
        let source = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        LoadedScenario::from_source(path, source)
    }

    pub fn from_source(path: &Path, source: String) -> Result<LoadedScenario, CliError> {
        let at = |span: Option<Range<usize>>, message: String| {
            CliError::Scenario {
                path: path.to_path_buf(),
                location: span.map(|s| line_col(&source, s.start)),
                message,
            }
        };
        let spec: Scenario = toml::from_str(&source).map_err(|e| at(e.span(), e.message().to_string()))?;

        let ids: Vec<&str> = spec.model.buses.iter().map(|b| b.get_ref().id.as_str()).collect();
        let index = |id: &str| ids.iter().position(|x| *x == id);
        let mut buses = Vec::with_capacity(ids.len());
        for (k, b) in spec.model.buses.iter().enumerate() {
            if ids[..k].contains(&ids[k]) {
                return Err(at(Some(b.span()), format!("duplicate bus id {:?}", ids[k])));
            }
            buses.push(bus_params(b.get_ref()).map_err(|m| at(Some(b.span()), m))?);
        }
        let mut lines = Vec::with_capacity(spec.model.lines.len());
        for l in &spec.model.lines {
            let ls = l.get_ref();
            let end = |id: &str| index(id).ok_or_else(|| at(Some(l.span()), format!("line endpoint {id:?} is not a bus id")));
            lines.push(Line::new(end(&ls.i)?, end(&ls.j)?, ls.b_abs));
        }
        let model = NetworkModel::new(buses, lines).map_err(|e| at(None, e.to_string()))?;

        let mut sigma = model.coupling_bound_sigma();
        for (id, value) in &spec.analysis.sigma {
            let i = index(id).ok_or_else(|| at(Some(value.span()), format!("sigma override for unknown bus {id:?}")))?;
            let v = *value.get_ref();
            let bound = sigma[i];
            if !(v >= bound * (1.0 - 1e-12)) {
                return Err(at(
                    Some(value.span()),
                    format!("sigma override {v} for bus {id:?} lies below its coupling bound {bound}"),
                ));
            }
            sigma[i] = v;
        }
        for (id, value) in spec.simulation.perturbation.omega.iter() {
            match index(id) {
                Some(i) if model.buses()[i].is_generator() => {}
                Some(_) => return Err(at(Some(value.span()), format!("bus {id:?} is a load and has no frequency state"))),
                None => return Err(at(Some(value.span()), format!("perturbation of unknown bus {id:?}"))),
            }
        }
        for (id, value) in spec.simulation.perturbation.theta.iter() {
            if index(id).is_none() {
                return Err(at(Some(value.span()), format!("perturbation of unknown bus {id:?}")));
            }
        }
        let hash = Sha256::digest(source.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
        Ok(LoadedScenario {
            path: path.to_path_buf(),
            source,
            hash,
            spec,
            model,
            sigma,
        })
    }

    pub fn bus_index(&self, id: &str) -> Result<usize, CliError> {
        self.model
            .bus_index(id)
            .ok_or_else(|| CliError::Usage(format!("no bus with id {id:?} in {}", self.path.display())))
    }

    /// Output directory from the scenario, resolved against its location.
    pub fn output_dir(&self) -> Option<PathBuf> {
        let dir = self.spec.output.dir.as_ref()?;
        Some(match self.path.parent() {
            Some(parent) if dir.is_relative() => parent.join(dir),
            _ => dir.clone(),
        })
    }
}

fn bus_params(b: &BusSpec) -> Result<BusParams, String> {
    let bus = match b.kind {
        BusKind::Load => {
            if b.inertia.is_some() || b.damping.is_some() || b.dynamics.is_some() {
                return Err(format!("load bus {:?} cannot have M, D or dynamics", b.id));
            }
            BusParams::load(&b.id, b.p_star)
        }
        BusKind::Generator => {
            let missing = |what: &str| format!("generator bus {:?} needs {what}", b.id);
            let m = b.inertia.ok_or_else(|| missing("M"))?;
            let d = b.damping.ok_or_else(|| missing("D"))?;
            let dynamics = b.dynamics.as_ref().ok_or_else(|| missing("a dynamics block"))?;
            BusParams::generator(&b.id, m, d, b.p_star, generation_dynamics(dynamics)?)
        }
    };
    Ok(bus.with_voltage(b.voltage))
}

fn generation_dynamics(d: &DynamicsSpec) -> Result<GenerationDynamics, String> {
    Ok(match d.clone() {
        DynamicsSpec::Static { map } => GenerationDynamics::StaticMonotone { map },
        DynamicsSpec::FirstOrder { tau, map } => GenerationDynamics::FirstOrder { tau, map },
        DynamicsSpec::SecondOrder {
            tau_alpha,
            tau_beta,
            cost_gradient,
            input_map,
            output_map,
        } => GenerationDynamics::SecondOrder {
            tau_alpha,
            tau_beta,
            cost_gradient,
            input_map,
            output_map,
        },
        DynamicsSpec::LinearSs { a, b, c } => {
            let n = b.len();
            if a.len() != n || a.iter().any(|r| r.len() != n) || c.len() != n {
                return Err(format!("linear_ss: a must be {n}x{n} and c of length {n}"));
            }
            GenerationDynamics::LinearSs(LinearSs::new(
                DMatrix::from_fn(n, n, |i, j| a[i][j]),
                DVector::from_vec(b),
                RowDVector::from_vec(c),
            ))
        }
    })
}

/// One-based line and column of a byte offset.
fn line_col(source: &str, offset: usize) -> (usize, usize) {
    let before = &source[..offset.min(source.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |s| s.chars().count()) + 1;
    (line, column)
}
