//! `aoi`: solve age-of-information scheduling instances from JSON files.
//!
//! Exit codes: 0 success, 1 input error, 2 infeasible instance, 3 a result
//! failed its checks (including validation gaps out of tolerance).

mod instance;
mod output;
mod solve;
mod validate;

use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use instance::{Instance, Mode, Overrides};
use output::OutDir;
use solve::Failure;

#[derive(Parser)]
#[command(name = "aoi", version, about = "Age-of-information minimal update schedules for an energy harvesting source")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Source-controlled updates with equal service times (needs N or N_max)
    Controlled(Common),
    /// Age-optimal schedule for externally arriving measurements
    Arrivals(Common),
    /// Per-packet delay optimal schedule for the same arrivals
    Delay(Common),
    /// Equal-delay policies for N = 1..N_max
    Sweep(Common),
    /// Seeded solver-versus-grid-oracle comparison (N <= 3)
    Validate(Common),
    /// Dispatch on the instance's `mode` field
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// Instance file, or `-` for stdin
    instance: PathBuf,

    /// Output directory
    #[arg(long, env = "AOI_OUT_DIR", default_value = "aoi-out")]
    out: PathBuf,

    /// Absolute tolerance of constraint checks
    #[arg(long)]
    tol: Option<f64>,

    /// Grid step of the validation oracle
    #[arg(long)]
    grid_delta: Option<f64>,

    /// Evaluation budget of the validation oracle
    #[arg(long)]
    node_budget: Option<u64>,

    /// Let the last update be received after the session end
    #[arg(long)]
    allow_late_reception: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let (mode, common) = match cli.command {
        Command::Controlled(c) => (Some(Mode::Controlled), c),
        Command::Arrivals(c) => (Some(Mode::Arrivals), c),
        Command::Delay(c) => (Some(Mode::Delay), c),
        Command::Sweep(c) => (Some(Mode::Sweep), c),
        Command::Validate(c) => (Some(Mode::Validate), c),
        Command::Run(c) => (None, c),
    };
    match execute(mode, &common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Exit::Failure(f)) => {
            eprintln!("aoi: {f}");
            ExitCode::from(f.exit_code())
        }
        Err(Exit::Io(e)) => {
            eprintln!("aoi: {e:#}");
            ExitCode::from(1)
        }
    }
}

enum Exit {
    Failure(Failure),
    Io(anyhow::Error),
}

impl From<Failure> for Exit {
    fn from(f: Failure) -> Self {
        Exit::Failure(f)
    }
}

impl From<anyhow::Error> for Exit {
    fn from(e: anyhow::Error) -> Self {
        Exit::Io(e)
    }
}

fn read_instance(path: &PathBuf) -> Result<(String, String), Exit> {
    if path.as_os_str() == "-" {
        let mut text = String::new();
        std::io::stdin().read_to_string(&mut text).map_err(|e| Failure::Input(format!("reading stdin: {e}")))?;
        return Ok((text, "<stdin>".into()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("reading {}: {e}", path.display())))?;
    Ok((text, path.display().to_string()))
}

fn execute(mode: Option<Mode>, common: &Common) -> Result<(), Exit> {
    let (text, source) = read_instance(&common.instance)?;
    let overrides = Overrides {
        tol: common.tol,
        grid_delta: common.grid_delta,
        node_budget: common.node_budget,
        allow_late_reception: common.allow_late_reception,
    };
    let instance =
        Instance::parse(&text, &source).and_then(|i| i.normalize(mode, &overrides)).map_err(|e| Failure::Input(e.0))?;
    let problem = instance.problem().map_err(|e| Failure::Input(format!("{source}: {}", e.0)))?;

    let mut out = OutDir::create(&common.out)?;
    out.json(output::INSTANCE_FILE, &instance)?;
    let outcome = solve::run(&problem)?;
    if let Some(sweep) = &outcome.sweep {
        out.sweep(sweep)?;
    }
    if let Some(solution) = &outcome.solution {
        out.json(output::SOLUTION_FILE, solution)?;
        println!("N={} age={} delay={}", solution.n, solution.age, solution.delay);
    }
    if let Some(trajectory) = &outcome.trajectory {
        out.trajectory(trajectory)?;
    }
    if let Some(report) = &outcome.validate {
        out.json(output::VALIDATE_FILE, report)?;
        let max_gap = report.max_gap.map_or("none".into(), |g| g.to_string());
        println!(
            "{} cases, {} failed, max gap {max_gap} (limit {})",
            report.cases.len(),
            report.failed,
            report.gap_limit
        );
    }
    for path in out.written() {
        println!("wrote {}", path.display());
    }
    match outcome.failure {
        Some(f) => Err(f.into()),
        None => Ok(()),
    }
}
