//! The four commands. Each returns a report document, an optional CSV
//! artifact and the process exit status; writing them is left to the caller.

use gridcert::certificates::{
    max_droop_search, popov_check, secant_check, small_gain_check_auto, CertificateReport, PopovOptions, RhoGrid,
};
use gridcert::equilibrium::{
    solve_equilibrium_dae, solve_equilibrium_linear, tree_feasibility_test, EquilibriumError, SynchronousSolution,
};
use gridcert::network::{GenerationDynamics, NetworkModel};
use gridcert::simulator::{
    format_number, passivity_identity_check, simulate_dae, simulate_ode, trajectory_csv, DaeOptions, OdeOptions, SimState, Termination,
};
use rayon::prelude::*;

use crate::error::CliError;
use crate::report::{
    min_margin, CertificateBlock, EquilibriumBlock, Metadata, Quantity, ReportDocument, SimulationStatus,
    SimulationSummary, SweepBlock, SweepRow, Table2Block, Table2Column,
};
use crate::scenario::{CertificateKind, LoadedScenario, SimMode, Spacing, SweepParameter};

pub const EXIT_PASS: u8 = 0;
pub const EXIT_FAIL: u8 = 1;

/// Settings given on the command line, overriding the scenario.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub rho_grid: Option<RhoGrid>,
    pub droop_search_tol: Option<f64>,
    pub settle_tol: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub exit: u8,
    pub report: ReportDocument,
    /// File name and contents of the command's table.
    pub csv: (String, String),
    /// One-line summary for the terminal.
    pub summary: String,
}

/// Synchronous solution: the closed form for all-linear networks, the
/// bisection on the summed balance otherwise.
pub fn equilibrium(model: &NetworkModel) -> Result<SynchronousSolution, EquilibriumError> {
    match solve_equilibrium_linear(model) {
        Err(EquilibriumError::NotLinear { .. }) => solve_equilibrium_dae(model),
        other => other,
    }
}

fn popov_options(sc: &LoadedScenario, ov: &Overrides) -> Result<PopovOptions, CliError> {
    let grid = ov
        .rho_grid
        .or(sc.spec.analysis.rho_grid.map(RhoGrid::from))
        .unwrap_or_default();
    grid.validate()?;
    Ok(PopovOptions {
        grid,
        include_limit: sc.spec.analysis.include_rho_limit,
    })
}

fn run_certificate(
    kind: CertificateKind,
    sc: &LoadedScenario,
    model: &NetworkModel,
    sigma: &[f64],
    popov: &PopovOptions,
) -> Result<CertificateReport, CliError> {
    Ok(match kind {
        CertificateKind::SmallGain => small_gain_check_auto(model)?,
        CertificateKind::Secant => secant_check(model, sc.spec.analysis.secant_output_map)?,
        CertificateKind::Popov => popov_check(model, sigma, popov)?,
    })
}

fn csv_line(fields: &[String]) -> String {
    let mut s = fields.join(",");
    s.push('\n');
    s
}

pub fn analyze(sc: &LoadedScenario, ov: &Overrides) -> Result<Outcome, CliError> {
    let model = &sc.model;
    let popov = popov_options(sc, ov)?;
    let mut doc = ReportDocument::new(Metadata::new("analyze", &sc.hash));

    let eq = equilibrium(model)?;
    doc.warnings.extend(eq.notes.iter().cloned());
    if !eq.security_ok {
        doc.warnings
            .push("the synchronous solution violates the security constraint |eta| < pi/2".into());
    }
    let mut pass = eq.security_ok;
    if model.line_count() + 1 == model.bus_count() {
        let c = injections(model, &eq);
        let tree = tree_feasibility_test(model, &c)?;
        if !tree.feasible {
            doc.warnings
                .push(format!("closed-form tree test: |flow / gamma| reaches {} >= 1", tree.norm));
        }
    }
    doc.equilibrium = Some(EquilibriumBlock::new(eq));

    let mut kinds = sc.spec.analysis.certificates.clone();
    let mut seen = Vec::new();
    kinds.retain(|k| {
        let new = !seen.contains(k);
        seen.push(*k);
        new
    });
    let mut csv = csv_line(&["certificate", "bus", "label", "verdict", "margin"].map(String::from));
    for kind in kinds {
        let report = run_certificate(kind, sc, model, &sc.sigma, &popov)?;
        pass &= report.pass;
        for b in &report.buses {
            csv.push_str(&csv_line(&[
                serde_json::to_value(kind)?.as_str().unwrap_or_default().to_string(),
                b.bus.to_string(),
                b.label.clone(),
                serde_json::to_value(b.verdict)?.as_str().unwrap_or_default().to_string(),
                format_number(b.margin),
            ]));
        }
        doc.certificates.push(CertificateBlock::new(kind, report));
    }
    let summary = doc
        .certificates
        .iter()
        .map(|c| format!("{:?}: {} (margin {})", c.certificate, if c.pass { "pass" } else { "fail" }, c.margin.display))
        .collect::<Vec<_>>()
        .join("; ");
    Ok(Outcome {
        exit: if pass { EXIT_PASS } else { EXIT_FAIL },
        report: doc,
        csv: ("certificates.csv".into(), csv),
        summary: if summary.is_empty() {
            "no certificates requested".into()
        } else {
            summary
        },
    })
}

/// Net injections `p* + u_bar - D omega_star` seen by the lines.
fn injections(model: &NetworkModel, eq: &SynchronousSolution) -> Vec<f64> {
    model
        .buses()
        .iter()
        .enumerate()
        .map(|(i, b)| match &b.generator {
            Some(g) => b.p_star + eq.u_bar[i] - g.damping * eq.omega_star,
            None => b.p_star,
        })
        .collect()
}

pub fn simulate(sc: &LoadedScenario, ov: &Overrides) -> Result<Outcome, CliError> {
    let model = &sc.model;
    let spec = &sc.spec.simulation;
    let settle = ov.settle_tol.unwrap_or(spec.settle_tol);
    let mut doc = ReportDocument::new(Metadata::new("simulate", &sc.hash));
    let eq = equilibrium(model)?;
    doc.warnings.extend(eq.notes.iter().cloned());

    let mut x0 = SimState::at_equilibrium(model, &eq);
    let gens = model.generator_indices();
    for (id, d) in &spec.perturbation.omega {
        let i = sc.bus_index(id)?;
        let k = gens.iter().position(|&g| g == i).expect("validated on load");
        x0.omega[k] += *d.get_ref();
    }
    for (id, d) in &spec.perturbation.theta {
        x0.theta[sc.bus_index(id)?] += *d.get_ref();
    }

    let mode = match spec.mode {
        SimMode::Auto if model.has_loads() => SimMode::Dae,
        SimMode::Auto => SimMode::Ode,
        m => m,
    };
    let traj = match mode {
        SimMode::Ode => {
            let opts = OdeOptions {
                rtol: spec.rtol,
                atol: spec.atol,
                sample_dt: spec.sample_dt,
                input: spec.input,
                ..OdeOptions::default()
            };
            simulate_ode(model, &x0, spec.horizon, &opts, Some(&eq))?
        }
        _ => {
            let opts = DaeOptions {
                dt: spec.dt,
                input: spec.input,
                ..DaeOptions::default()
            };
            simulate_dae(model, &x0, spec.horizon, &opts, Some(&eq))?
        }
    };

    let deviation = traj
        .last()
        .omega
        .iter()
        .map(|w| (w - eq.omega_star).abs())
        .fold(0.0, f64::max);
    let drift = traj.max_drift();
    let settling = traj.settling_time(eq.omega_star, settle);
    let status = match (&traj.termination, drift <= settle, deviation < settle) {
        (Termination::SingularityStop { .. }, _, _) => SimulationStatus::SingularityStop,
        (_, true, _) => SimulationStatus::Stationary,
        (_, _, true) => SimulationStatus::Converged,
        _ => SimulationStatus::NotConverged,
    };
    let residual = if traj.states.len() >= 3 {
        Some(passivity_identity_check(model, &traj, &eq)?.into())
    } else {
        None
    };
    if let Termination::SingularityStop { t, reason, .. } = &traj.termination {
        doc.warnings.push(format!("integration stopped at t = {t}: {reason}"));
    }
    let summary = match status {
        SimulationStatus::Stationary => "stationary".to_string(),
        SimulationStatus::Converged => format!(
            "converged: |omega - omega_star| < {settle:e} from t = {}",
            settling.map_or("?".into(), |t| t.to_string())
        ),
        SimulationStatus::NotConverged => format!("not converged: final frequency deviation {deviation:e}"),
        SimulationStatus::SingularityStop => match &traj.termination {
            Termination::SingularityStop { t, sigma_min, .. } => {
                format!("SingularityStop at t = {t}: algebraic Jacobian sigma_min = {sigma_min:e}")
            }
            Termination::Completed => unreachable!(),
        },
    };
    let csv = trajectory_csv(model, &traj, Some(&eq));
    doc.simulation = Some(SimulationSummary {
        mode,
        input: spec.input,
        horizon: spec.horizon,
        samples: traj.states.len(),
        status,
        termination: traj.termination.clone(),
        settling_time: settling.map(Quantity::new),
        final_frequency_deviation: deviation.into(),
        max_drift: drift.into(),
        passivity_residual: residual,
        stats: traj.stats.clone(),
    });
    doc.equilibrium = Some(EquilibriumBlock::new(eq));
    let exit = match status {
        SimulationStatus::Stationary | SimulationStatus::Converged => EXIT_PASS,
        _ => EXIT_FAIL,
    };
    Ok(Outcome {
        exit,
        report: doc,
        csv: ("trajectory.csv".into(), csv),
        summary,
    })
}

/// Largest certified droop gain per sigma value. Columns whose search fails
/// are reported with an error and leave the others untouched.
pub fn table2(sc: &LoadedScenario, ov: &Overrides) -> Result<Outcome, CliError> {
    let spec = sc.spec.analysis.table2.clone().unwrap_or_default();
    let bus = match &spec.bus {
        Some(id) => sc.bus_index(id)?,
        None => 0,
    };
    let popov = popov_options(sc, ov)?;
    let tol = ov.droop_search_tol.unwrap_or(spec.tol);
    let bracket = (spec.bracket[0], spec.bracket[1]);
    let columns: Vec<Table2Column> = spec
        .sigma_values
        .par_iter()
        .map(|&s| {
            let mut sigma = sc.model.coupling_bound_sigma();
            sigma[bus] = s;
            match max_droop_search(&sc.model, bus, &sigma, bracket, tol, &popov) {
                Ok(r) => Table2Column {
                    sigma: s,
                    k_max: Some(r.k_max.into()),
                    k_fail: Some(r.k_fail),
                    rho: r.rho_at_k_max,
                    evaluations: r.evaluations,
                    error: None,
                },
                Err(e) => Table2Column {
                    sigma: s,
                    k_max: None,
                    k_fail: None,
                    rho: None,
                    evaluations: 0,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let label = sc.model.buses()[bus].label.clone();
    let mut head = vec![format!("sigma_{label}")];
    let mut row = vec![format!("k_max_{label}")];
    for c in &columns {
        head.push(format_number(c.sigma));
        row.push(c.k_max.as_ref().map_or(String::new(), |q| format_number(q.value)));
    }
    let csv = csv_line(&head) + &csv_line(&row);
    let mut doc = ReportDocument::new(Metadata::new("table2", &sc.hash));
    for c in &columns {
        if let Some(e) = &c.error {
            doc.warnings.push(format!("sigma = {}: {e}", c.sigma));
        }
    }
    let failed = columns.iter().any(|c| c.error.is_some());
    let summary = columns
        .iter()
        .map(|c| format!("{} -> {}", c.sigma, c.k_max.as_ref().map_or("error", |q| q.display.as_str())))
        .collect::<Vec<_>>()
        .join(", ");
    doc.table2 = Some(Table2Block {
        bus: label,
        bracket: spec.bracket,
        tol,
        columns,
    });
    Ok(Outcome {
        exit: if failed { EXIT_FAIL } else { EXIT_PASS },
        report: doc,
        csv: ("table2.csv".into(), csv),
        summary: format!("k_max by sigma: {summary}"),
    })
}

#[derive(Debug, Clone)]
pub struct SweepRequest {
    pub parameter: SweepParameter,
    pub bus: String,
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub spacing: Spacing,
    pub certificate: CertificateKind,
}

impl SweepRequest {
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        let bad = |m: &str| CliError::Usage(format!("sweep range [{}, {}] with {} points: {m}", self.min, self.max, self.points));
        if self.points == 0 || !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return Err(bad("need finite min <= max and at least one point"));
        }
        if self.points == 1 {
            return Ok(vec![self.min]);
        }
        let step = |i: usize| i as f64 / (self.points - 1) as f64;
        Ok(match self.spacing {
            Spacing::Linear => (0..self.points).map(|i| self.min + (self.max - self.min) * step(i)).collect(),
            Spacing::Log => {
                if !(self.min > 0.0) {
                    return Err(bad("log spacing needs min > 0"));
                }
                let (a, b) = (self.min.ln(), self.max.ln());
                (0..self.points).map(|i| (a + (b - a) * step(i)).exp()).collect()
            }
        })
    }
}

fn with_parameter(
    model: &NetworkModel,
    sigma: &[f64],
    bus: usize,
    parameter: SweepParameter,
    value: f64,
) -> Result<(NetworkModel, Vec<f64>), String> {
    let mut sigma = sigma.to_vec();
    let mut params = model.buses()[bus].clone();
    if parameter == SweepParameter::Sigma {
        sigma[bus] = value;
        return Ok((model.clone(), sigma));
    }
    let label = params.label.clone();
    let g = params
        .generator
        .as_mut()
        .ok_or_else(|| format!("bus {label:?} is a load bus"))?;
    match parameter {
        SweepParameter::Droop => g.dynamics = g.dynamics.with_droop_gain(value),
        SweepParameter::Damping => g.damping = value,
        SweepParameter::Slope => {
            g.dynamics = match &g.dynamics {
                GenerationDynamics::LinearSs(_) => return Err(format!("bus {label:?} has no static nonlinearity")),
                d => d.with_droop_gain(value),
            }
        }
        SweepParameter::Sigma => unreachable!(),
    }
    let m = model.with_bus(bus, params).map_err(|e| e.to_string())?;
    Ok((m, sigma))
}

pub fn sweep(sc: &LoadedScenario, req: &SweepRequest, ov: &Overrides) -> Result<Outcome, CliError> {
    let bus = sc.bus_index(&req.bus)?;
    if req.parameter != SweepParameter::Sigma && !sc.model.buses()[bus].is_generator() {
        return Err(CliError::Usage(format!("bus {:?} is a load bus", req.bus)));
    }
    let values = req.values()?;
    let popov = popov_options(sc, ov)?;
    let rows: Vec<SweepRow> = values
        .par_iter()
        .map(|&v| {
            let evaluated = with_parameter(&sc.model, &sc.sigma, bus, req.parameter, v).and_then(|(m, sigma)| {
                run_certificate(req.certificate, sc, &m, &sigma, &popov).map_err(|e| e.to_string())
            });
            match evaluated {
                Ok(report) => SweepRow {
                    value: v,
                    pass: report.pass,
                    margin: min_margin(&report).into(),
                    bus_margin: report.bus(bus).map_or(f64::NAN, |b| b.margin).into(),
                    error: None,
                },
                Err(e) => SweepRow {
                    value: v,
                    pass: false,
                    margin: f64::NAN.into(),
                    bus_margin: f64::NAN.into(),
                    error: Some(e),
                },
            }
        })
        .collect();

    let mut csv = csv_line(&["value", "pass", "margin", "bus_margin"].map(String::from));
    for r in &rows {
        let num = |q: &Quantity| if q.value.is_nan() { String::new() } else { format_number(q.value) };
        csv.push_str(&csv_line(&[format_number(r.value), r.pass.to_string(), num(&r.margin), num(&r.bus_margin)]));
    }
    let mut doc = ReportDocument::new(Metadata::new("sweep", &sc.hash));
    doc.warnings
        .extend(rows.iter().filter_map(|r| r.error.as_ref().map(|e| format!("value {}: {e}", r.value))));
    let passing = rows.iter().filter(|r| r.pass).count();
    let summary = format!("{passing} of {} values pass", rows.len());
    let failed = rows.iter().any(|r| r.error.is_some());
    doc.sweep = Some(SweepBlock {
        parameter: req.parameter,
        bus: req.bus.clone(),
        certificate: req.certificate,
        spacing: req.spacing,
        rows,
    });
    Ok(Outcome {
        exit: if failed { EXIT_FAIL } else { EXIT_PASS },
        report: doc,
        csv: ("sweep.csv".into(), csv),
        summary,
    })
}
