//! `nlstefan`: run scenarios of the nonlocal Stefan problem and check them.

mod output;
mod rates;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use stefan_core::correctors::{
    principal_eigenvalue, solve_phi, solve_psi, CorrectorProfile, EigenDomain,
};
use stefan_core::kernel::{corrector_constants, second_moment};
use stefan_core::oracle::{desk_suite, oracle_case, DESK_SUITE};
use stefan_core::state::BoundaryState;
use stefan_core::stepper::Simulation;
use stefan_core::{parse_config, run, serialize_config, ScenarioConfig};

use output::{config_hash, out_dir, series_rows, snapshot_rows, stem, RecordFile, Writer, VERSION};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Numerical(stefan_core::Error),
    #[error("acceptance violation: {0}")]
    Violation(String),
}

impl CliError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io { .. } | CliError::Numerical(_) => 2,
            CliError::Violation(_) => 3,
        }
    }
}

impl From<stefan_core::Error> for CliError {
    fn from(e: stefan_core::Error) -> Self {
        match e {
            stefan_core::Error::Config(msg) => CliError::Usage(msg),
            other => CliError::Numerical(other),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "nlstefan",
    version,
    about = "Nonlocal one-phase Stefan problem: simulation and diagnostics"
)]
struct Cli {
    /// Output directory (overrides the NLSTEFAN_OUT environment variable).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate a scenario and write its time series, snapshots and record.
    Run { config: PathBuf },
    /// Tabulate the correctors and constants of a scenario's kernel.
    Correctors { config: PathBuf },
    /// Fit rates and compare predicted with measured constants.
    Rates {
        record: PathBuf,
        /// Scenario to assess against instead of the one stored in the record.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compare the stepper with the space-time fixed-point solver.
    OracleCheck {
        /// Scenario of the desk suite to run (default: all).
        #[arg(long)]
        suite: Option<String>,
    },
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn load_config(path: &Path) -> Result<ScenarioConfig, CliError> {
    parse_config(&read(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn print_json<T: Serialize>(value: &T) {
    match serde_json::to_string_pretty(value) {
        Ok(s) => println!("{s}"),
        Err(e) => eprintln!("nlstefan: cannot format output: {e}"),
    }
}

#[derive(Serialize)]
struct RunSummary<'a> {
    variant: &'a str,
    config_sha256: String,
    steps: usize,
    t_end: f64,
    final_boundary: Vec<f64>,
    final_mass: f64,
    files: Vec<String>,
}

fn command_run(path: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let config = load_config(path)?;
    let record = run(&config)?;
    let name = stem(path);
    let mut writer = Writer::new(out_dir(out), &config)?;

    let (columns, rows) = series_rows(&record);
    writer.csv(&format!("{name}.series.csv"), &[], &columns, &rows)?;
    for (k, snap) in record.snapshots.iter().enumerate() {
        writer.csv(
            &format!("{name}.snapshot{k:03}.csv"),
            &[format!("t={}", snap.t)],
            &["x", "u"],
            &snapshot_rows(snap),
        )?;
    }
    let hash = config_hash(&config)?;
    writer.json(
        &format!("{name}.record.json"),
        &RecordFile {
            tool: "nlstefan".into(),
            version: VERSION.into(),
            config_sha256: hash.clone(),
            config: serialize_config(&config)?,
            record: record.clone(),
        },
    )?;
    print_json(&RunSummary {
        variant: config.variant.name(),
        config_sha256: hash,
        steps: record.stats.steps,
        t_end: record.times.last().copied().unwrap_or(0.0),
        final_boundary: record
            .boundary
            .last()
            .map(BoundaryState::components)
            .unwrap_or_default(),
        final_mass: record.mass.last().copied().unwrap_or(0.0),
        files: writer
            .written()
            .iter()
            .map(|p| p.display().to_string())
            .collect(),
    });
    Ok(())
}

#[derive(Serialize)]
struct ProfileSummary {
    offset: f64,
    bound: f64,
    deviation: f64,
    residual: f64,
    extent_sensitivity: f64,
    nodes: usize,
}

impl From<&CorrectorProfile> for ProfileSummary {
    fn from(p: &CorrectorProfile) -> Self {
        ProfileSummary {
            offset: p.offset,
            bound: p.bound,
            deviation: p.deviation,
            residual: p.residual,
            extent_sensitivity: p.extent_sensitivity,
            nodes: p.len(),
        }
    }
}

#[derive(Serialize)]
struct CorrectorReport {
    tool: &'static str,
    version: &'static str,
    config_sha256: String,
    kernel: String,
    d: f64,
    h: f64,
    q: f64,
    c0: f64,
    c1: f64,
    alpha: f64,
    /// Principal eigenvalue on the initial habitat (bounded habitats only).
    lambda: Option<f64>,
    phi: ProfileSummary,
    psi: ProfileSummary,
}

fn profile_rows(p: &CorrectorProfile) -> Vec<Vec<String>> {
    (0..p.len())
        .map(|j| vec![p.node(j).to_string(), p.values[j].to_string()])
        .collect()
}

fn command_correctors(path: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let config = load_config(path)?;
    let kernel = config.kernel()?;
    let extent = config.corrector_extent();
    let tol = config.diagnostics.corrector_tol;
    let phi = solve_phi(&kernel, extent, tol)?;
    let psi = solve_psi(&kernel, extent, tol)?;
    let boundary = config.initial_boundary()?;
    let s1 = boundary.position().max(kernel.step());
    let (c0, c1) = corrector_constants(&kernel, &psi, s1)?;
    let lambda = match boundary {
        BoundaryState::Line1fb { .. } => None,
        BoundaryState::LineCs { s_minus, s_plus } => {
            let grid = config.layout()?.grid;
            Some(principal_eigenvalue(EigenDomain::Interval {
                kernel: &kernel,
                lo: s_minus,
                hi: s_plus,
                x0: grid.x0,
                n: grid.n,
            })?)
        }
        BoundaryState::HalfLine { s } => {
            let grid = config.layout()?.grid;
            Some(principal_eigenvalue(EigenDomain::Interval {
                kernel: &kernel,
                lo: 0.0,
                hi: s,
                x0: grid.x0,
                n: grid.n,
            })?)
        }
        BoundaryState::Radial { r, .. } => {
            let sim = Simulation::new(&config)?;
            let matrix = sim.radial_matrix().expect("radial scenario");
            Some(principal_eigenvalue(EigenDomain::Ball {
                matrix,
                radius: r,
            })?)
        }
    }
    .map(|e| e.lambda);

    let name = stem(path);
    let mut writer = Writer::new(out_dir(out), &config)?;
    writer.csv(
        &format!("{name}.phi.csv"),
        &[],
        &["x", "phi"],
        &profile_rows(&phi),
    )?;
    writer.csv(
        &format!("{name}.psi.csv"),
        &[],
        &["x", "psi"],
        &profile_rows(&psi),
    )?;
    let report = CorrectorReport {
        tool: "nlstefan",
        version: VERSION,
        config_sha256: config_hash(&config)?,
        kernel: kernel.kind().name().to_string(),
        d: kernel.support(),
        h: kernel.step(),
        q: second_moment(&kernel),
        c0,
        c1,
        alpha: psi.alpha,
        lambda,
        phi: (&phi).into(),
        psi: (&psi).into(),
    };
    writer.json(&format!("{name}.correctors.json"), &report)?;
    print_json(&report);
    Ok(())
}

#[derive(Serialize)]
struct RatesFile<'a> {
    tool: &'static str,
    version: &'static str,
    config_sha256: String,
    passed: bool,
    #[serde(flatten)]
    report: &'a rates::RatesReport,
}

fn command_rates(
    path: &Path,
    config_path: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let file: RecordFile = serde_json::from_str(&read(path)?)
        .map_err(|e| CliError::Usage(format!("{}: not a record file: {e}", path.display())))?;
    let config = match config_path {
        Some(p) => load_config(p)?,
        None => parse_config(&file.config)?,
    };
    if config.variant != file.record.variant {
        return Err(CliError::Usage(format!(
            "record is {} but the config describes {}",
            file.record.variant.name(),
            config.variant.name()
        )));
    }
    let report = rates::assess(&file.record, &config)?;
    let passed = report.passed();
    let body = RatesFile {
        tool: "nlstefan",
        version: VERSION,
        config_sha256: config_hash(&config)?,
        passed,
        report: &report,
    };
    let name = stem(path);
    let name = name.strip_suffix(".record").unwrap_or(&name);
    let mut writer = Writer::new(out_dir(out), &config)?;
    writer.json(&format!("{name}.rates.json"), &body)?;
    print_json(&body);
    if passed {
        Ok(())
    } else {
        let failed: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.as_str())
            .collect();
        Err(CliError::Violation(failed.join(", ")))
    }
}

#[derive(Serialize)]
struct OracleReport {
    tool: &'static str,
    version: &'static str,
    passed: bool,
    cases: Vec<stefan_core::oracle::OracleCase>,
}

const ORACLE_TOL: f64 = 1e-12;

fn command_oracle_check(suite: Option<&str>) -> Result<(), CliError> {
    let cases = match suite {
        None | Some("all") => desk_suite(ORACLE_TOL)?,
        Some(name) => {
            let (_, text) = DESK_SUITE.iter().find(|(n, _)| *n == name).ok_or_else(|| {
                let names: Vec<&str> = DESK_SUITE.iter().map(|p| p.0).collect();
                CliError::Usage(format!(
                    "unknown suite {name}; expected one of {}",
                    names.join(", ")
                ))
            })?;
            vec![oracle_case(name, &parse_config(text)?, ORACLE_TOL)?]
        }
    };
    let passed = cases.iter().all(|c| c.passed());
    print_json(&OracleReport {
        tool: "nlstefan",
        version: VERSION,
        passed,
        cases: cases.clone(),
    });
    if passed {
        Ok(())
    } else {
        let failed: Vec<&str> = cases
            .iter()
            .filter(|c| !c.passed())
            .map(|c| c.name.as_str())
            .collect();
        Err(CliError::Violation(failed.join(", ")))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    let out = cli.out.as_deref();
    let result = match &cli.command {
        Command::Run { config } => command_run(config, out),
        Command::Correctors { config } => command_correctors(config, out),
        Command::Rates { record, config } => command_rates(record, config.as_deref(), out),
        Command::OracleCheck { suite } => command_oracle_check(suite.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nlstefan: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
