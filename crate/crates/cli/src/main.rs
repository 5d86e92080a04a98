use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use loopmem::engine::RunConfig;
use loopmem_cli::config::{parse_config, read, ConfigFile};
use loopmem_cli::output::{emit_oracle_table, write_outputs};
use loopmem_cli::presets::{default_theta1_grid, execute, Plan, Preset};

#[derive(Parser)]
#[command(name = "loopmem", version, about = "Loop quantum memory simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset, or sweep θ₁ for the configured n and θ₂
    Run(RunArgs),
    /// Write the analytic expectation for the configured run as CSV
    Oracle(OracleArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration; its keys override the preset template
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Master seed, overriding the config file
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Multiplies the pump pulses of every sweep point
    #[arg(long, default_value_t = 1.0)]
    trials_scale: f64,
    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "oracle.csv")]
    out: PathBuf,
}

fn config_file(path: Option<&PathBuf>) -> anyhow::Result<ConfigFile> {
    match path {
        Some(p) => {
            let text = read(p)?;
            parse_config(&text).with_context(|| format!("in {}", p.display()))
        }
        None => Ok(ConfigFile::default()),
    }
}

fn run(args: RunArgs) -> anyhow::Result<bool> {
    if !(args.trials_scale > 0.0 && args.trials_scale.is_finite()) {
        bail!("--trials-scale must be positive, got {}", args.trials_scale);
    }
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot start worker threads")?;
    }
    let file = config_file(args.config.as_ref())?;
    let mut plan = match args.preset {
        Some(p) => p.plan().with_file(&file),
        None => Plan::custom(&file.apply(&RunConfig::default())),
    };
    if let Some(seed) = args.seed {
        plan = plan.with_seed(seed);
    }
    let plan = plan.scaled(args.trials_scale);
    let outcome = execute(&plan)?;
    write_outputs(&args.out_dir, &outcome.files)
        .with_context(|| format!("cannot write to {}", args.out_dir.display()))?;

    let report = &outcome.report;
    for v in &report.schedule.violations {
        println!("schedule: {v}");
    }
    for c in &report.checks {
        let value = c.value.map_or("n/a".to_string(), |v| format!("{v:.4}"));
        let verdict = if c.passed { "PASS" } else { "FAIL" };
        println!("{verdict} {} = {value}", c.name);
    }
    println!(
        "{}: {} files in {}",
        plan.name,
        outcome.files.len(),
        args.out_dir.display()
    );
    Ok(report.passed)
}

fn oracle(args: OracleArgs) -> anyhow::Result<()> {
    let file = config_file(args.config.as_ref())?;
    let config = file.apply(&RunConfig::default());
    emit_oracle_table(&config, &default_theta1_grid(), &args.out)
        .with_context(|| format!("cannot write {}", args.out.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Oracle(args) => oracle(args).map(|()| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
