use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dcfem::dc_solver::Method;
use dcfem::mesh::conductor_components;
use dcfem::pipeline::{self, CheckKind};
use dcfem::postprocess::frequency_window;
use dcfem::report::{emit_reports, EmitOptions};
use dcfem::scenario::{builtin, MethodName, ScenarioConfig};
use dcfem::Error;

const EXIT_IO: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_CHECK: u8 = 4;

#[derive(Parser)]
#[command(name = "dcfem", version, about = "Layered edge-element FEM with fast DC-mode extraction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a scenario and write reports.
    Run(RunArgs),
    /// Print the mesh and partition summary without solving.
    Describe(ScenarioArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Built-in scenario (parallel_plate, two_bus).
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    builtin: Option<String>,
    /// JSON scenario file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the source frequency (Hz).
    #[arg(long)]
    freq: Option<f64>,
    /// Override the partition with this many equal z-layers.
    #[arg(long)]
    layers: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Comma separated: direct, modal, dc-projected, dc-layered, schur2, eigtable, all.
    #[arg(long)]
    methods: Option<String>,
    /// Base output directory (default: $DCFEM_OUT, then the config, then ./dcfem-runs).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 4 when an accuracy check fails.
    #[arg(long)]
    check: bool,
    /// Worker threads for the per-layer eigensolves.
    #[arg(long)]
    jobs: Option<usize>,
    /// Also write S, T, R (Matrix Market) and the excitation vector.
    #[arg(long)]
    export_matrices: bool,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::Config(_)
        | Error::InvalidGrid(_)
        | Error::InvalidMaterial(_)
        | Error::OverlappingRegions(..)
        | Error::RegionOutOfBounds(_)
        | Error::InvalidPartition(_)
        | Error::InvalidPath(_) => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

fn load(args: &ScenarioArgs, methods: Option<&str>) -> dcfem::Result<ScenarioConfig> {
    let mut cfg = match (&args.builtin, &args.config) {
        (Some(name), None) => builtin(name)?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            ScenarioConfig::from_json(&text)?
        }
        _ => return Err(Error::Config("give exactly one of --builtin or --config".into())),
    };
    if let Some(f) = args.freq {
        cfg.source.frequency_hz = f;
    }
    if let Some(n) = args.layers {
        cfg.partition.layers = Some(n);
        cfg.partition.z_ranges = None;
        if cfg.partition.schur2_split.is_some_and(|s| s >= n) {
            cfg.partition.schur2_split = (n >= 2).then_some(n / 2);
        }
    }
    if let Some(m) = methods {
        cfg.methods = MethodName::parse_list(m)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Print to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> dcfem::Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn describe(args: &ScenarioArgs) -> dcfem::Result<()> {
    let cfg = load(args, None)?;
    let prepared = cfg.prepare()?;
    let sizes: Vec<String> = prepared.partition.owned_sizes().iter().map(|s| s.to_string()).collect();
    let conductors = conductor_components(&prepared.mesh).count;
    let (lo, hi) = frequency_window(&prepared.mesh);
    let mut out = String::new();
    let _ = writeln!(out, "scenario: {}", cfg.name);
    let _ = writeln!(out, "unknowns: {}; layers: {}; conductors: {conductors}", prepared.mesh.num_unknowns(), sizes.join(","));
    let _ = writeln!(out, "z-layers: {}", prepared.partition.len());
    for (i, l) in prepared.partition.layers.iter().enumerate() {
        let _ = writeln!(
            out,
            "layer {i}: z cells {}..{}, owned {}, standalone {}",
            l.z_range.start,
            l.z_range.end,
            l.owned.len(),
            l.standalone.len()
        );
    }
    let _ = writeln!(out, "frequency window: {lo:.6e} Hz .. {hi:.6e} Hz");
    emit(&out)
}

/// `<base>/<name>_<UTC timestamp>`, with a numeric suffix on collision.
fn run_dir(base: &Path, name: &str) -> PathBuf {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let first = base.join(format!("{name}_{stamp}"));
    if !first.exists() {
        return first;
    }
    (1..).map(|i| base.join(format!("{name}_{stamp}_{i}"))).find(|p| !p.exists()).expect("unbounded suffixes")
}

fn run(args: &RunArgs) -> Result<(), u8> {
    let fail = |e: Error| {
        eprintln!("error: {e}");
        exit_code(&e)
    };
    let cfg = load(&args.scenario, args.methods.as_deref()).map_err(fail)?;
    let result = pipeline::run(&cfg, args.jobs).map_err(fail)?;

    let base = args
        .out
        .clone()
        .or_else(|| std::env::var_os("DCFEM_OUT").map(PathBuf::from))
        .or_else(|| cfg.output_dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("dcfem-runs"));
    let dir = run_dir(&base, &cfg.name);
    emit_reports(&result, &dir, EmitOptions { export_matrices: args.export_matrices }).map_err(fail)?;

    let mut out = String::new();
    let _ = writeln!(out, "scenario: {} ({} unknowns, {} layers)", cfg.name, result.mesh.num_unknowns(), result.partition.len());
    for r in &result.reports {
        let fmt = |m: Method| r.error_vs(m).map(|e| format!("{e:.3e}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(out, "  {:<13} vs direct {:>10}  vs modal {:>10}", r.method.name(), fmt(Method::Direct), fmt(Method::Modal));
    }
    for c in &result.checks {
        let status = if c.passed() { "pass" } else { "FAIL" };
        let _ = writeln!(out, "  [{status}] {} = {:.3e} (bound {:.1e})", c.name, c.value, c.bound);
    }
    let _ = writeln!(out, "reports: {}", dir.display());
    emit(&out).map_err(fail)?;

    if !result.failed(CheckKind::Internal).is_empty() {
        eprintln!("error: internal consistency check failed");
        return Err(EXIT_NUMERICAL);
    }
    if args.check && !result.failed(CheckKind::Acceptance).is_empty() {
        eprintln!("error: accuracy check failed");
        return Err(EXIT_CHECK);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(args) => run(args),
        Command::Describe(args) => describe(args).map_err(|e| {
            eprintln!("error: {e}");
            exit_code(&e)
        }),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => ExitCode::from(code),
    }
}
