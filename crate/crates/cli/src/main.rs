use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use spiked_oamp_cli::{compare_runs, run_experiment, CliError, Command, ExperimentConfig};

#[derive(Parser)]
#[command(name = "spiked-oamp", version, about = "OAMP experiments for spiked matrices")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for independent jobs.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fixed points and trajectories of state evolution.
    Se(RunArgs),
    /// Monte-Carlo OAMP and PCA runs.
    Simulate(RunArgs),
    /// The map ω ↦ F1(F2(ω)) and its crossings with the diagonal.
    Landscape(RunArgs),
    /// Replica residuals at the state-evolution fixed points.
    ReplicaCheck(RunArgs),
    /// Power-iteration PCA against its asymptotic overlap.
    Pca(RunArgs),
    /// μ, φ, φ_poly and ν on a grid.
    SpectrumDump(RunArgs),
    /// Lifted OAMP state evolution by degree.
    Lifted(RunArgs),
    /// Deviation report between an empirical table and an SE table.
    Compare {
        #[arg(long)]
        mc: PathBuf,
        #[arg(long)]
        se: PathBuf,
        #[arg(long, default_value_t = 0.03)]
        tol: f64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn run_config(cmd: Command, args: RunArgs) -> Result<String, CliError> {
    let mut cfg = ExperimentConfig::load(&args.config, Some(cmd))?;
    cfg.apply_seed_env()?;
    if let Some(out) = args.out {
        cfg.output = out;
    }
    let run = || run_experiment(&cfg);
    let outcome = match args.workers {
        Some(0) => {
            return Err(CliError::Config(vec![spiked_oamp_cli::error::Issue {
                field: "--workers".into(),
                reason: "must be at least 1".into(),
            }]))
        }
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(run)?,
        None => run()?,
    };
    if let Some(f) = outcome.failure {
        return Err(CliError::Check(f));
    }
    Ok(format!("{cmd}: wrote {} table(s) to {}", outcome.tables.len(), cfg.output.display()))
}

fn dispatch(cli: Cli) -> Result<String, CliError> {
    let (cmd, args) = match cli.command {
        Cmd::Compare { mc, se, tol, out } => {
            let r = compare_runs(&mc, &se, tol, &out)?;
            if !r.passed() {
                return Err(CliError::Check(format!(
                    "{} of {} rows exceed {tol} (max deviation {:e})",
                    r.failed_rows,
                    r.rows.len(),
                    r.max_deviation
                )));
            }
            return Ok(format!("compare: {} rows within {tol}", r.rows.len()));
        }
        Cmd::Se(a) => (Command::Se, a),
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Landscape(a) => (Command::Landscape, a),
        Cmd::ReplicaCheck(a) => (Command::ReplicaCheck, a),
        Cmd::Pca(a) => (Command::Pca, a),
        Cmd::SpectrumDump(a) => (Command::SpectrumDump, a),
        Cmd::Lifted(a) => (Command::Lifted, a),
    };
    run_config(cmd, args)
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(msg) => {
            eprintln!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({"error": e.class(), "message": e.to_string()}));
            ExitCode::from(e.exit_code())
        }
    }
}
