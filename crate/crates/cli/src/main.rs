use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use wgs_cli::bench::{self, BenchSpec};
use wgs_cli::config::RunConfig;
use wgs_cli::error::{CliError, CliResult};
use wgs_cli::suite::{run_suite, VerifySpec};
use wgs_cli::{export, logfile, run};

#[derive(Parser)]
#[command(name = "wgs", version, about = "Variational ground states of lattice models with weighted graph states")]
struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true, env = "WGS_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Multistart search at the configured parameter point.
    Run(RunArgs),
    /// Like `run`, also printing every level's trial energies.
    Multistart(RunArgs),
    /// Sweep one Hamiltonian parameter with checkpointing.
    Sweep(SweepArgs),
    /// Check the engine against the brute-force oracle and finite differences.
    Verify(VerifyArgs),
    /// Time density matrices and gradients against lattice size.
    Bench(BenchArgs),
    /// Write observable tables from a results log.
    Export(ExportArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, env = "WGS_CONFIG")]
    config: PathBuf,
    /// Overrides `search.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Results log to append to (overrides `output.log`).
    #[arg(long, env = "WGS_OUT")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Checkpoint file (overrides `output.checkpoint`); resumed when present.
    #[arg(long, env = "WGS_CHECKPOINT")]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Optional JSON with suite sizes.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Writes the JSON report here as well as to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Negates the phase block of the analytic gradient; the suite must fail.
    #[arg(long, hide = true)]
    inject_phase_sign_error: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination (standard output when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportKind {
    Table,
    Grid,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportFormat {
    Csv,
    Json,
}

#[derive(Args)]
struct ExportArgs {
    /// Results log to read.
    #[arg(long)]
    log: PathBuf,
    #[arg(long, value_enum, default_value = "table")]
    kind: ExportKind,
    #[arg(long, value_enum, default_value = "csv")]
    format: ExportFormat,
    /// Grid columns: two parameters or observables and a value column.
    #[arg(long, required_if_eq("kind", "grid"))]
    x: Option<String>,
    #[arg(long, required_if_eq("kind", "grid"))]
    y: Option<String>,
    #[arg(long, default_value = "energy")]
    value: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_optional<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn emit(text: &str, out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_run(args: &RunArgs) -> CliResult<(RunConfig, wgs_cli::config::Built, Option<PathBuf>)> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.search.seed = s;
    }
    let built = cfg.build()?;
    let log = args.out.clone().or_else(|| cfg.output.log.clone());
    Ok((cfg, built, log))
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes") + "\n"
}

fn execute(cli: Cli) -> CliResult<()> {
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::Config("--workers must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Run(args) => {
            let (cfg, built, log) = load_run(&args)?;
            let out = run::cmd_run(&cfg, &built, "run", log.as_deref())?;
            print!("{}", pretty(&run::summary(&cfg, &out.record)));
        }
        Command::Multistart(args) => {
            let (cfg, built, log) = load_run(&args)?;
            let out = run::cmd_run(&cfg, &built, "multistart", log.as_deref())?;
            for l in &out.levels {
                eprintln!(
                    "branches={} best_trial={} main={:.12} stop={:?} trials={:?}",
                    l.branches, l.best_trial, l.main_energy, l.main_stop, l.trial_energies
                );
            }
            print!("{}", pretty(&run::summary(&cfg, &out.record)));
        }
        Command::Sweep(args) => {
            let (cfg, built, log) = load_run(&args.run)?;
            let checkpoint = args.checkpoint.clone().or_else(|| cfg.output.checkpoint.clone());
            let state = run::cmd_sweep(&cfg, &built, log.as_deref(), checkpoint.as_deref())?;
            for (p, d) in state.points.iter().zip(&state.diagnostics) {
                println!("{}={:<12} energy={:<22} diagnostic={:e}", state.parameter, p.value, p.record.energy, d.value);
            }
            eprintln!("rounds={} jobs_logged={}", state.rounds_done, state.log.len());
        }
        Command::Verify(args) => {
            let mut spec: VerifySpec = load_optional(args.config.as_deref())?;
            if let Some(s) = args.seed {
                spec.seed = s;
            }
            spec.inject_phase_sign_error = args.inject_phase_sign_error;
            let report = run_suite(&spec)?;
            let text = pretty(&report);
            print!("{text}");
            if let Some(p) = &args.out {
                std::fs::write(p, &text).map_err(|e| CliError::io(p, e))?;
            }
            if !report.passed {
                let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
                return Err(CliError::Verification(failed.join(", ")));
            }
        }
        Command::Bench(args) => {
            let mut spec: BenchSpec = load_optional(args.config.as_deref())?;
            if let Some(s) = args.seed {
                spec.seed = s;
            }
            let rows = bench::run_bench(&spec)?;
            let rdm: Vec<_> = rows.iter().filter(|r| r.task == "rdm_per_bond").collect();
            if let [a, b] = rdm.as_slice() {
                eprintln!("rdm time ratio N={} vs N={}: {:.3}", b.sites, a.sites, b.median_s / a.median_s);
            }
            emit(&bench::to_csv(&rows)?, args.out.as_deref())?;
        }
        Command::Export(args) => {
            let lines = logfile::read(&args.log)?;
            let table = match args.kind {
                ExportKind::Table => export::table(&lines),
                ExportKind::Grid => {
                    let (x, y) = (args.x.as_deref().unwrap_or_default(), args.y.as_deref().unwrap_or_default());
                    export::grid(&lines, x, y, &args.value)?
                }
            };
            let text = match args.format {
                ExportFormat::Csv => export::to_csv(&table)?,
                ExportFormat::Json => export::to_json(&table) + "\n",
            };
            emit(&text, args.out.as_deref())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
