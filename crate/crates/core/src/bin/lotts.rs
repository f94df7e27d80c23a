use clap::{Args, Parser, Subcommand};
use lotts::harness::{load_config, run_experiment, ExperimentKind};
use std::path::PathBuf;
use std::process::ExitCode;

/// Localized test-time scaling experiments.
#[derive(Parser)]
#[command(name = "lotts", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form patch economy with its Monte Carlo check.
    Theory(RunArgs),
    /// End-to-end localized refinement on the analytic testbed.
    Testbed(RunArgs),
    /// LoTTS versus Best-of-N budget sweep.
    Scaling(RunArgs),
    /// Defect mask from attention documents.
    Maskgen(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Override a config value by dotted path, e.g. `--set economy.q=0.4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (default `lotts-out/<experiment>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core. Does not change any output.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Theory(a) => (ExperimentKind::Theory, a),
        Command::Testbed(a) => (ExperimentKind::Testbed, a),
        Command::Scaling(a) => (ExperimentKind::Scaling, a),
        Command::Maskgen(a) => (ExperimentKind::Maskgen, a),
    };
    let result = load_config(&args.config, Some(kind), &args.set).and_then(|loaded| {
        for w in &loaded.warnings {
            log::warn!("{w}");
        }
        let out = run_experiment(&loaded, args.workers)?;
        let dir = args
            .out
            .unwrap_or_else(|| PathBuf::from("lotts-out").join(kind.as_str()));
        out.write(&dir)?;
        Ok(dir)
    });
    match result {
        Ok(dir) => {
            println!("{}", dir.join("report.json").display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
