use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crn_rendezvous::engine::{DEFAULT_MAX_SLOTS, DEFAULT_RANGE};
use crn_rendezvous::experiments::{
    aggregate_csv, audit, parse_grid, run_grid_traced, runs_csv, ExperimentError, GridResult,
    ScenarioGrid, TerminationChoice, DEFAULT_AREA_SIDE,
};
use crn_rendezvous::pr_activity::PrLevel;
use crn_rendezvous::topology::{Area, DeploymentSpec, GroundTopology};
use crn_rendezvous::Protocol;

#[derive(Parser)]
#[command(name = "crn-sim", version, about = "Multihop rendezvous simulator for cognitive radio networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single scenario cell.
    Run(RunArgs),
    /// Run a grid read from a `key = value` config file.
    Sweep(SweepArgs),
    /// Run a built-in grid: baseline, controlled or scale.
    Paper(GridArgs),
    /// Replay a per-run CSV and check it against ground truth.
    Audit(AuditArgs),
    /// Draw one connected deployment and print it as `id x y` lines.
    Deploy(DeployArgs),
}

#[derive(Args)]
struct OutputArgs {
    /// Worker threads; output does not depend on this.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Aggregate CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-run CSV path.
    #[arg(long)]
    runs_out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    protocol: Protocol,
    /// baseline, controlled, run-to-full or native.
    #[arg(long, default_value = "native")]
    termination: TerminationChoice,
    #[arg(long, default_value_t = 10)]
    nodes: usize,
    #[arg(long, default_value_t = 10)]
    channels: u32,
    #[arg(long, default_value_t = 2)]
    similarity: u32,
    /// off, high, or LX:LY rates.
    #[arg(long, default_value = "off")]
    pr: PrLevel,
    #[arg(long, default_value_t = 100)]
    runs: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Deployment area WIDTHxHEIGHT in meters.
    #[arg(long, default_value_t = Area::square(DEFAULT_AREA_SIDE))]
    area: Area,
    #[arg(long, default_value_t = DEFAULT_RANGE)]
    range: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_SLOTS)]
    max_slots: u64,
    /// Draw deployments from (N, C, m, run) only, shared across cells.
    #[arg(long)]
    fix_topology: bool,
    /// Replay a deployment file (`id x y` lines) in every run.
    #[arg(long)]
    topology: Option<PathBuf>,
    /// Write an event trace (`slot half node channel event detail`).
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's run count.
    #[arg(long)]
    runs: Option<usize>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct GridArgs {
    /// baseline, controlled or scale.
    grid: String,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    fix_topology: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct AuditArgs {
    /// Per-run CSV written with --runs-out.
    file: PathBuf,
    /// Deployment file, when the runs replayed one.
    #[arg(long)]
    topology: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_RANGE)]
    range: f64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct DeployArgs {
    #[arg(long, default_value_t = 10)]
    nodes: usize,
    #[arg(long, default_value_t = Area::square(DEFAULT_AREA_SIDE))]
    area: Area,
    #[arg(long, default_value_t = DEFAULT_RANGE)]
    range: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String, ExperimentError> {
    fs::read_to_string(path).map_err(|e| {
        ExperimentError::Config(format!("cannot read {}: {e}", path.display()))
    })
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), ExperimentError> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn write_outputs(result: &GridResult, output: &OutputArgs) -> Result<(), ExperimentError> {
    if result.incomplete() > 0 {
        eprintln!(
            "warning: {} run(s) hit the slot cap and were excluded from means",
            result.incomplete()
        );
    }
    emit(output.out.as_deref(), &aggregate_csv(result))?;
    if let Some(p) = &output.runs_out {
        fs::write(p, runs_csv(result))?;
    }
    Ok(())
}

fn write_trace(result: &GridResult, path: &Path) -> Result<(), ExperimentError> {
    let mut text = String::from("# slot half node channel event detail\n");
    for row in &result.runs {
        text.push_str(&format!("# run {} seed {}\n", row.run, row.record.seed));
        for ev in &row.record.trace {
            text.push_str(&ev.to_string());
            text.push('\n');
        }
    }
    fs::write(path, text)?;
    Ok(())
}

fn run(args: RunArgs) -> Result<(), ExperimentError> {
    let topology = match &args.topology {
        Some(p) => Some(GroundTopology::import(&read(p)?, args.range)?),
        None => None,
    };
    let grid = ScenarioGrid {
        name: "run".into(),
        protocols: vec![args.protocol],
        terminations: vec![args.termination],
        nodes: vec![topology.as_ref().map_or(args.nodes, GroundTopology::len)],
        channels: vec![args.channels],
        similarity: vec![args.similarity],
        pr: vec![args.pr],
        runs: args.runs,
        master_seed: args.seed,
        area: args.area,
        range: args.range,
        max_slots: args.max_slots,
        fix_topology: args.fix_topology,
        topology,
    };
    let result = run_grid_traced(&grid, args.output.workers, args.trace.is_some())?;
    if let Some(p) = &args.trace {
        write_trace(&result, p)?;
    }
    write_outputs(&result, &args.output)
}

fn sweep(args: SweepArgs) -> Result<(), ExperimentError> {
    let mut grid = parse_grid(&read(&args.config)?)?;
    if let Some(s) = args.seed {
        grid.master_seed = s;
    }
    if let Some(r) = args.runs {
        grid.runs = r;
    }
    let result = run_grid_traced(&grid, args.output.workers, false)?;
    write_outputs(&result, &args.output)
}

fn builtin_grid(args: GridArgs) -> Result<(), ExperimentError> {
    let mut grid = ScenarioGrid::builtin(&args.grid).ok_or_else(|| {
        ExperimentError::Config(format!(
            "unknown grid `{}` (expected baseline, controlled or scale)",
            args.grid
        ))
    })?;
    grid.master_seed = args.seed;
    grid.fix_topology = args.fix_topology;
    if let Some(r) = args.runs {
        grid.runs = r;
    }
    let result = run_grid_traced(&grid, args.output.workers, false)?;
    write_outputs(&result, &args.output)
}

fn audit_cmd(args: AuditArgs) -> Result<bool, ExperimentError> {
    let topology = match &args.topology {
        Some(p) => Some(GroundTopology::import(&read(p)?, args.range)?),
        None => None,
    };
    let report = audit(&read(&args.file)?, topology.as_ref(), args.workers)?;
    for p in &report.problems {
        println!("MISMATCH {p}");
    }
    println!(
        "audited {} run(s): {}",
        report.rows,
        if report.ok() { "ok" } else { "FAILED" }
    );
    Ok(report.ok())
}

fn deploy(args: DeployArgs) -> Result<(), ExperimentError> {
    let topo = DeploymentSpec::new(args.nodes, args.area, args.range).deploy(args.seed)?;
    emit(args.out.as_deref(), &topo.export())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => run(a).map(|_| true),
        Command::Sweep(a) => sweep(a).map(|_| true),
        Command::Paper(a) => builtin_grid(a).map(|_| true),
        Command::Audit(a) => audit_cmd(a),
        Command::Deploy(a) => deploy(a).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
