//! Command-line surface for the zymogen activation toolkit.
//!
//! JSON configuration in, CSV / JSON artifacts out. Exit codes: 0 on
//! success, 2 for usage and configuration errors, 3 for numeric failures;
//! errors are written to stderr as a JSON object either way. The
//! `QSSLAB_LOG` environment variable controls log verbosity.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};

use qsslab_core::diagnostics::{self, DiagnosticsError};
use qsslab_core::estimation::{self, Dataset, EstimationError, FitParam, FreeParam, Observable};
use qsslab_core::export::{trajectory_csv, Coords};
use qsslab_core::model::{InitialConditions, ModelConfig, ModelError, RateConstants, System};
use qsslab_core::ode::{integrate, IntegrationSettings, OdeError};
use qsslab_core::reductions::{ReducedKind, ReducedModel, ReductionError, SlowVariable};

#[derive(Parser)]
#[command(
    name = "qsslab",
    version,
    about = "Simulate, reduce, diagnose and fit the autocatalytic zymogen activation reaction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the mass-action model and write a trajectory CSV
    Simulate {
        /// JSON file with keys k1, km1, k2, z0, e0 and optional c0, w0
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        t_end: f64,
        /// Coordinate system to integrate in
        #[arg(long, value_enum, default_value_t = CoordsArg::Full)]
        coords: CoordsArg,
        /// Append the bounded display-time column
        #[arg(long)]
        t_inf: bool,
    },
    /// Integrate a reduced model; writes CSV plus a JSON sidecar
    Reduce {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        t_end: f64,
        /// Which reduction to integrate
        #[arg(long, value_enum)]
        model: ModelArg,
    },
    /// Emit the reduction-validity report as pretty-printed JSON
    Diagnose {
        #[arg(long)]
        config: PathBuf,
        /// Qualifier tolerance for the recommendation
        #[arg(long, default_value_t = 0.01)]
        tol: f64,
        /// Write the report here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep the eigenvalue ratio and fit the distance scaling law
    SweepScaling {
        /// Comma-separated eigenvalue-ratio values (at least 3 distinct)
        #[arg(long, value_delimiter = ',', required = true)]
        eps_hat: Vec<f64>,
        /// Output CSV path; a JSON summary lands next to it
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample a synthetic time course; writes CSV plus a JSON sidecar
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ObservableArg::W)]
        observable: ObservableArg,
        #[arg(long, default_value_t = 10.0)]
        t_end: f64,
        /// Number of samples on the uniform grid
        #[arg(long, default_value_t = 50)]
        samples: usize,
        #[arg(long, default_value_t = 0.0)]
        noise_sd: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fit a reduced model to a gen-data CSV/JSON pair
    Fit {
        /// Dataset CSV (its JSON sidecar must sit next to it)
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        model: ModelArg,
        /// Write the fit result here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override an initial guess, e.g. --init k2=0.05 (repeatable)
        #[arg(long, value_parser = parse_init)]
        init: Vec<(String, f64)>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CoordsArg {
    Zc,
    Wc,
    Full,
}

impl From<CoordsArg> for Coords {
    fn from(value: CoordsArg) -> Self {
        match value {
            CoordsArg::Zc => Coords::Zc,
            CoordsArg::Wc => Coords::Wc,
            CoordsArg::Full => Coords::Full,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    ClassicalZ,
    ClassicalW,
    StandardZ,
    PSlowZ,
    TotalW,
    ReverseW,
}

impl From<ModelArg> for ReducedKind {
    fn from(value: ModelArg) -> Self {
        match value {
            ModelArg::ClassicalZ => ReducedKind::ClassicalZ,
            ModelArg::ClassicalW => ReducedKind::ClassicalW,
            ModelArg::StandardZ => ReducedKind::StandardZ,
            ModelArg::PSlowZ => ReducedKind::PSlowZ,
            ModelArg::TotalW => ReducedKind::TotalW,
            ModelArg::ReverseW => ReducedKind::ReverseW,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ObservableArg {
    Z,
    C,
    W,
}

impl From<ObservableArg> for Observable {
    fn from(value: ObservableArg) -> Self {
        match value {
            ObservableArg::Z => Observable::Z,
            ObservableArg::C => Observable::C,
            ObservableArg::W => Observable::W,
        }
    }
}

fn parse_init(text: &str) -> Result<(String, f64), String> {
    let (name, value) = text
        .split_once('=')
        .ok_or_else(|| format!("expected name=value, got '{text}'"))?;
    let value: f64 = value
        .parse()
        .map_err(|e| format!("bad value in '{text}': {e}"))?;
    Ok((name.to_string(), value))
}

/// CLI failure with its exit code class.
#[derive(Debug)]
enum CliError {
    /// Exit code 2: bad arguments, configuration or input files.
    Usage { kind: String, message: String },
    /// Exit code 3: the computation itself failed.
    Numeric { kind: String, message: String },
}

impl CliError {
    fn usage(kind: &str, message: impl ToString) -> Self {
        CliError::Usage {
            kind: kind.into(),
            message: message.to_string(),
        }
    }

    fn numeric(kind: &str, message: impl ToString) -> Self {
        CliError::Numeric {
            kind: kind.into(),
            message: message.to_string(),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let kind = match &e {
            ModelError::InvalidRates(_) => "InvalidRates",
            ModelError::InvalidInitialConditions(_) => "InvalidInitialConditions",
            ModelError::BadConfig(_) => "BadConfig",
            ModelError::NegativeDiscriminant { .. } => "NegativeDiscriminant",
            ModelError::DegenerateEigenvalue { .. } => "DegenerateEigenvalue",
        };
        match e {
            ModelError::NegativeDiscriminant { .. } | ModelError::DegenerateEigenvalue { .. } => {
                CliError::numeric(kind, e)
            }
            _ => CliError::usage(kind, e),
        }
    }
}

impl From<OdeError> for CliError {
    fn from(e: OdeError) -> Self {
        let kind = match &e {
            OdeError::BadSettings(_) => return CliError::usage("BadSettings", e),
            OdeError::StepSizeUnderflow { .. } => "StepSizeUnderflow",
            OdeError::MaxStepsExceeded { .. } => "MaxStepsExceeded",
            OdeError::NonFiniteDerivative { .. } => "NonFiniteDerivative",
            OdeError::NegativeState { .. } => "NegativeState",
        };
        CliError::numeric(kind, e)
    }
}

impl From<ReductionError> for CliError {
    fn from(e: ReductionError) -> Self {
        match &e {
            ReductionError::ZeroKm => CliError::usage("ZeroKm", e),
            ReductionError::UnsupportedC0(_) => CliError::usage("UnsupportedC0", e),
            ReductionError::SingularDfN(_) => CliError::numeric("SingularDfN", e),
        }
    }
}

impl From<DiagnosticsError> for CliError {
    fn from(e: DiagnosticsError) -> Self {
        match &e {
            DiagnosticsError::InsufficientPoints { .. } => CliError::usage("InsufficientPoints", e),
            DiagnosticsError::PreconditionViolated(_) => CliError::usage("PreconditionViolated", e),
            DiagnosticsError::Model(m) => CliError::from(m.clone()),
            DiagnosticsError::Ode(o) => CliError::from(o.clone()),
            _ => CliError::numeric("Diagnostics", e),
        }
    }
}

impl From<EstimationError> for CliError {
    fn from(e: EstimationError) -> Self {
        match &e {
            EstimationError::BadGrid(_) => CliError::usage("BadGrid", e),
            EstimationError::BadNoise(_) => CliError::usage("BadNoise", e),
            EstimationError::ObservableMismatch { .. } => CliError::usage("ObservableMismatch", e),
            EstimationError::WrongFreeParameters { .. } => {
                CliError::usage("WrongFreeParameters", e)
            }
            EstimationError::BoundsViolation { .. } => CliError::usage("BoundsViolation", e),
            EstimationError::NonConvergence { .. } => CliError::numeric("NonConvergence", e),
            EstimationError::SingularNormalEquations => {
                CliError::numeric("SingularNormalEquations", e)
            }
            EstimationError::ModelEval(_) => CliError::numeric("ModelEval", e),
            EstimationError::Ode(o) => CliError::from(o.clone()),
        }
    }
}

fn read_config(path: &Path) -> Result<System, CliError> {
    let text = fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::usage("ConfigNotFound", format!("{}: not found", path.display()))
        } else {
            CliError::usage("ConfigUnreadable", format!("{}: {e}", path.display()))
        }
    })?;
    let cfg = ModelConfig::from_json(&text)?;
    Ok(cfg.build()?)
}

/// Write atomically: temp file in the same directory, then rename.
fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp-partial");
    fs::write(&tmp, contents)
        .and_then(|_| fs::rename(&tmp, path))
        .map_err(|e| CliError::usage("OutputUnwritable", format!("{}: {e}", path.display())))
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn settings_for(t_end: f64) -> Result<IntegrationSettings, CliError> {
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(CliError::usage(
            "BadTEnd",
            format!("t_end must be > 0, got {t_end}"),
        ));
    }
    Ok(IntegrationSettings::with_t_end(t_end))
}

/// Dataset provenance written next to the samples CSV.
#[derive(Serialize, Deserialize)]
struct DatasetSidecar {
    observable: Observable,
    ics: InitialConditions,
    params: RateConstants,
    noise_sd: f64,
    seed: u64,
}

#[derive(Serialize)]
struct ReduceSidecar<'a> {
    kind: ReducedKind,
    slow_ic: f64,
    params: &'a RateConstants,
    ics: &'a InitialConditions,
}

fn cmd_simulate(
    config: &Path,
    out: &Path,
    t_end: f64,
    coords: Coords,
    with_t_inf: bool,
) -> Result<(), CliError> {
    let system = read_config(config)?;
    let settings = settings_for(t_end)?;
    let y0 = coords.initial_state(&system);
    info!("simulate: dim {} to t = {t_end}", y0.len());
    let traj = integrate(coords.ode(&system), &y0, &settings)?;
    write_atomic(out, &trajectory_csv(&system, &traj, coords, with_t_inf))?;
    info!("simulate: {} output rows -> {}", traj.len(), out.display());
    Ok(())
}

fn cmd_reduce(config: &Path, out: &Path, t_end: f64, kind: ReducedKind) -> Result<(), CliError> {
    let system = read_config(config)?;
    let settings = settings_for(t_end)?;
    let model = ReducedModel::new(kind, system.params, system.ics)?;
    let traj = integrate(model.ode(), &[model.slow_ic], &settings)?;
    let var = match kind.variable() {
        SlowVariable::Z => "z",
        SlowVariable::W => "w",
    };
    let mut csv = format!("t,{var}\n");
    for i in 0..traj.len() {
        csv.push_str(&format!(
            "{:.16e},{:.16e}\n",
            traj.times()[i],
            traj.state(i)[0]
        ));
    }
    write_atomic(out, &csv)?;
    let sidecar = ReduceSidecar {
        kind,
        slow_ic: model.slow_ic,
        params: &system.params,
        ics: &system.ics,
    };
    write_atomic(&sidecar_path(out), &to_pretty_json(&sidecar)?)?;
    Ok(())
}

fn cmd_diagnose(config: &Path, tol: f64, out: Option<&Path>) -> Result<(), CliError> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(CliError::usage(
            "BadTolerance",
            format!("tol must be > 0, got {tol}"),
        ));
    }
    let system = read_config(config)?;
    let report = diagnostics::recommend(&system.params, &system.ics, tol);
    let text = to_pretty_json(&report)?;
    match out {
        Some(path) => write_atomic(path, &text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn cmd_sweep_scaling(eps_hat: &[f64], out: &Path) -> Result<(), CliError> {
    let sweep = diagnostics::scaling_sweep(eps_hat)?;
    let mut csv = String::from("eps_hat,min_distance\n");
    for (e, d) in &sweep.points {
        csv.push_str(&format!("{e:.16e},{d:.16e}\n"));
    }
    write_atomic(out, &csv)?;
    write_atomic(&sidecar_path(out), &to_pretty_json(&sweep)?)?;
    info!(
        "sweep-scaling: slope {} +/- {}",
        sweep.slope, sweep.slope_stderr
    );
    Ok(())
}

fn cmd_gen_data(
    config: &Path,
    out: &Path,
    observable: Observable,
    t_end: f64,
    samples: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<(), CliError> {
    if samples == 0 {
        return Err(CliError::usage("BadGrid", "samples must be > 0"));
    }
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(CliError::usage(
            "BadTEnd",
            format!("t_end must be > 0, got {t_end}"),
        ));
    }
    let system = read_config(config)?;
    let grid: Vec<f64> = (1..=samples)
        .map(|i| t_end * i as f64 / samples as f64)
        .collect();
    let data = estimation::gen_synthetic(
        &system.params,
        &system.ics,
        observable,
        &grid,
        noise_sd,
        seed,
    )?;
    let mut csv = String::from("t,value\n");
    for (t, v) in &data.samples {
        csv.push_str(&format!("{t:.16e},{v:.16e}\n"));
    }
    write_atomic(out, &csv)?;
    let sidecar = DatasetSidecar {
        observable,
        ics: system.ics,
        params: system.params,
        noise_sd,
        seed,
    };
    write_atomic(&sidecar_path(out), &to_pretty_json(&sidecar)?)?;
    Ok(())
}

fn read_dataset(csv_path: &Path) -> Result<(Dataset, DatasetSidecar), CliError> {
    let text = fs::read_to_string(csv_path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::usage("DataNotFound", format!("{}: not found", csv_path.display()))
        } else {
            CliError::usage("DataUnreadable", format!("{}: {e}", csv_path.display()))
        }
    })?;
    let side_path = sidecar_path(csv_path);
    let side_text = fs::read_to_string(&side_path).map_err(|_| {
        CliError::usage(
            "SidecarNotFound",
            format!("{}: JSON sidecar missing", side_path.display()),
        )
    })?;
    let sidecar: DatasetSidecar = serde_json::from_str(&side_text)
        .map_err(|e| CliError::usage("BadSidecar", format!("{}: {e}", side_path.display())))?;
    let mut samples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            if line.trim() != "t,value" {
                return Err(CliError::usage(
                    "BadDataHeader",
                    format!("expected 't,value', got '{line}'"),
                ));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let parse = |field: Option<&str>| -> Result<f64, CliError> {
            field
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| {
                    CliError::usage("BadDataRow", format!("line {}: '{line}'", lineno + 1))
                })
        };
        let t = parse(fields.next())?;
        let v = parse(fields.next())?;
        samples.push((t, v));
    }
    let dataset = Dataset::from_samples(sidecar.observable, samples, sidecar.ics)?;
    Ok((dataset, sidecar))
}

fn fit_param_by_name(name: &str) -> Result<FitParam, CliError> {
    match name {
        "k2" => Ok(FitParam::K2),
        "ks" => Ok(FitParam::Ks),
        "km" => Ok(FitParam::Km),
        "kappa" => Ok(FitParam::Kappa),
        _ => Err(CliError::usage(
            "UnknownParameter",
            format!("unknown parameter '{name}' (expected k2, ks, km or kappa)"),
        )),
    }
}

fn cmd_fit(
    data: &Path,
    kind: ReducedKind,
    out: Option<&Path>,
    init: &[(String, f64)],
) -> Result<(), CliError> {
    let (dataset, _sidecar) = read_dataset(data)?;
    let mut free = estimation::default_free_params(kind, &dataset);
    for (name, value) in init {
        let param = fit_param_by_name(name)?;
        match free.iter_mut().find(|f| f.name == param) {
            Some(f) => f.init = *value,
            None => free.push(FreeParam::new(param, *value)),
        }
    }
    let result = estimation::fit_reduced(kind, &dataset, &free)?;
    let text = to_pretty_json(&result)?;
    match out {
        Some(path) => write_atomic(path, &text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn to_pretty_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value)
        .map_err(|e| CliError::numeric("SerialiseFailed", e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate {
            config,
            out,
            t_end,
            coords,
            t_inf,
        } => cmd_simulate(&config, &out, t_end, coords.into(), t_inf),
        Command::Reduce {
            config,
            out,
            t_end,
            model,
        } => cmd_reduce(&config, &out, t_end, model.into()),
        Command::Diagnose { config, tol, out } => cmd_diagnose(&config, tol, out.as_deref()),
        Command::SweepScaling { eps_hat, out } => cmd_sweep_scaling(&eps_hat, &out),
        Command::GenData {
            config,
            out,
            observable,
            t_end,
            samples,
            noise_sd,
            seed,
        } => cmd_gen_data(
            &config,
            &out,
            observable.into(),
            t_end,
            samples,
            noise_sd,
            seed,
        ),
        Command::Fit {
            data,
            model,
            out,
            init,
        } => cmd_fit(&data, model.into(), out.as_deref(), &init),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("QSSLAB_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, kind, message) = match &err {
                CliError::Usage { kind, message } => (2, kind, message),
                CliError::Numeric { kind, message } => (3, kind, message),
            };
            let body = serde_json::json!({"error": {"kind": kind, "message": message}});
            eprintln!("{body}");
            ExitCode::from(code)
        }
    }
}
