//! Command-line driver for gridcert: scenario files in, certificate reports,
//! trajectories and reproduction tables out.

pub mod commands;
pub mod error;
pub mod report;
pub mod scenario;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use gridcert::certificates::RhoGrid;

use commands::{Outcome, Overrides, SweepRequest};
use error::CliError;
use scenario::{CertificateKind, Format, LoadedScenario, Spacing, SweepParameter};

#[derive(Debug, Parser)]
#[command(name = "gridcert", version, about = "Frequency-stability certificates for power networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the synchronous solution and run the requested certificates.
    Analyze(Common),
    /// Integrate the network from a perturbed synchronous solution.
    Simulate(Common),
    /// Largest certified droop gain for a list of sigma values.
    Table2(Common),
    /// Evaluate a certificate over a parameter grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// droop, damping, slope or sigma
        #[arg(long)]
        parameter: Option<SweepParameter>,
        #[arg(long)]
        bus: Option<String>,
        /// "min,max,points"
        #[arg(long)]
        range: Option<String>,
        #[arg(long, value_enum)]
        certificate: Option<CertArg>,
        #[arg(long)]
        log: bool,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum CertArg {
    SmallGain,
    Secant,
    Popov,
}

impl From<CertArg> for CertificateKind {
    fn from(c: CertArg) -> Self {
        match c {
            CertArg::SmallGain => CertificateKind::SmallGain,
            CertArg::Secant => CertificateKind::Secant,
            CertArg::Popov => CertificateKind::Popov,
        }
    }
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Write report.json and the command's CSV into this directory instead
    /// of printing to standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// "min,max,points"
    #[arg(long)]
    pub rho_grid: Option<String>,
    /// KEY=VALUE with KEY one of droop_search, settle; repeatable.
    #[arg(long)]
    pub tolerance: Vec<String>,
}

fn parse_triple(s: &str, what: &str) -> Result<(f64, f64, usize), CliError> {
    let bad = || CliError::Usage(format!("{what} must be \"min,max,points\", got {s:?}"));
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [a, b, n] = parts.as_slice() else { return Err(bad()) };
    Ok((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?, n.parse().map_err(|_| bad())?))
}

fn overrides(c: &Common) -> Result<Overrides, CliError> {
    let mut ov = Overrides::default();
    if let Some(g) = &c.rho_grid {
        let (min, max, points) = parse_triple(g, "--rho-grid")?;
        ov.rho_grid = Some(RhoGrid { min, max, points });
    }
    for t in &c.tolerance {
        let (key, value) = t
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--tolerance expects KEY=VALUE, got {t:?}")))?;
        let v: f64 = value
            .trim()
            .parse()
            .ok()
            .filter(|v: &f64| *v > 0.0 && v.is_finite())
            .ok_or_else(|| CliError::Usage(format!("tolerance {key} must be a positive number, got {value:?}")))?;
        match key.trim() {
            "droop_search" => ov.droop_search_tol = Some(v),
            "settle" => ov.settle_tol = Some(v),
            other => return Err(CliError::Usage(format!("unknown tolerance {other:?}; expected droop_search or settle"))),
        }
    }
    Ok(ov)
}

/// Thread pool sized by `GRIDCERT_THREADS`, or rayon's default.
fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("GRIDCERT_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| CliError::Usage(format!("GRIDCERT_THREADS must be a positive integer, got {v:?}")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

fn execute(command: &Command) -> Result<(Outcome, LoadedScenario), CliError> {
    let common = common(command);
    let ov = overrides(common)?;
    let sc = LoadedScenario::load(&common.scenario)?;
    let pool = thread_pool()?;
    let outcome = pool.install(|| match command {
        Command::Analyze(_) => commands::analyze(&sc, &ov),
        Command::Simulate(_) => commands::simulate(&sc, &ov),
        Command::Table2(_) => commands::table2(&sc, &ov),
        Command::Sweep {
            parameter,
            bus,
            range,
            certificate,
            log,
            ..
        } => sweep_request(&sc, *parameter, bus.clone(), range.as_deref(), *certificate, *log)
            .and_then(|req| commands::sweep(&sc, &req, &ov)),
    })?;
    Ok((outcome, sc))
}

fn common(command: &Command) -> &Common {
    match command {
        Command::Analyze(c) | Command::Simulate(c) | Command::Table2(c) => c,
        Command::Sweep { common, .. } => common,
    }
}

fn sweep_request(
    sc: &LoadedScenario,
    parameter: Option<SweepParameter>,
    bus: Option<String>,
    range: Option<&str>,
    certificate: Option<CertArg>,
    log: bool,
) -> Result<SweepRequest, CliError> {
    let spec = sc.spec.analysis.sweep.as_ref();
    let missing = |what: &str| CliError::Usage(format!("sweep needs --{what} or an [analysis.sweep] entry"));
    let (min, max, points) = match range {
        Some(r) => parse_triple(r, "--range")?,
        None => spec.map(|s| (s.min, s.max, s.points)).ok_or_else(|| missing("range"))?,
    };
    Ok(SweepRequest {
        parameter: parameter.or(spec.map(|s| s.parameter)).ok_or_else(|| missing("parameter"))?,
        bus: bus.or(spec.map(|s| s.bus.clone())).ok_or_else(|| missing("bus"))?,
        min,
        max,
        points,
        spacing: if log {
            Spacing::Log
        } else {
            spec.map_or(Spacing::Linear, |s| s.spacing)
        },
        certificate: certificate
            .map(CertificateKind::from)
            .or(spec.map(|s| s.certificate))
            .ok_or_else(|| missing("certificate"))?,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Runs a parsed command line and returns the process exit status.
pub fn run(cli: &Cli) -> u8 {
    match run_inner(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run_inner(cli: &Cli) -> Result<u8, CliError> {
    let (outcome, sc) = execute(&cli.command)?;
    let common = common(&cli.command);
    let default_format = match cli.command {
        Command::Analyze(_) => Format::JsonTree,
        _ => Format::Csv,
    };
    let format = common.format.or(sc.spec.output.format).unwrap_or(default_format);
    let json = outcome.report.to_json()?;
    match common.out.clone().or_else(|| sc.output_dir()) {
        Some(dir) => {
            std::fs::create_dir_all(&dir).map_err(|e| CliError::Io {
                path: dir.clone(),
                source: e,
            })?;
            write_file(&dir.join("report.json"), &json)?;
            write_file(&dir.join(&outcome.csv.0), &outcome.csv.1)?;
        }
        None => {
            let text = match format {
                Format::JsonTree => &json,
                Format::Csv => &outcome.csv.1,
            };
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::Io {
                    path: PathBuf::from("<stdout>"),
                    source: e,
                })?;
        }
    }
    eprintln!("{}", outcome.summary);
    for w in &outcome.report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(outcome.exit)
}
