use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use homeadam_cli::output::RunDir;
use homeadam_cli::{cmd_bounds, cmd_plotdata, cmd_stability, cmd_train, presets_table, CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "homeadam", version, about = "Optimizer, stability and bound experiments")]
struct Cli {
    /// Worker threads for parallel sweeps (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `problem.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one optimizer and write its per-step trace.
    Train(RunArgs),
    /// Twin-run stability sweep over dataset sizes.
    Stability(RunArgs),
    /// Divergence recursions and convergence-bound values.
    Bounds(RunArgs),
    /// Merge run traces into long-format `series,t,value` CSV.
    Plotdata {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Output directory for `plotdata.csv` (default: current directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the named hyperparameter presets.
    Presets,
}

fn load(args: &RunArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::from_file(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.problem.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(k) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Config(format!("--jobs: {e}")))?;
    }
    match cli.command {
        Command::Train(a) => report(cmd_train(&load(&a)?)?),
        Command::Stability(a) => report(cmd_stability(&load(&a)?)?),
        Command::Bounds(a) => report(cmd_bounds(&load(&a)?)?),
        Command::Plotdata { runs, out } => {
            let table = cmd_plotdata(&runs)?;
            let dir = RunDir::create(&out.unwrap_or_else(|| PathBuf::from(".")), true, false)?;
            let path = dir.write_text("plotdata.csv", &table.render())?;
            println!("{} rows -> {}", table.len(), path.display());
        }
        Command::Presets => print!("{}", presets_table()?.render()),
    }
    Ok(())
}

fn report(summary: homeadam_cli::RunSummary) {
    for v in &summary.verdicts {
        println!("{}: {:?} ({})", v.name, v.outcome, v.detail);
    }
    println!("{} finished in {:.2}s", summary.command, summary.wall_time_s);
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
