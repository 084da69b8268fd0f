use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sindy_rl::sindy_model::SindyModel;
use sindy_rl_harness::compare::{compare_runs, Speedup};
use sindy_rl_harness::{exit, fit_only, run_experiment, worker_count, ConfigError, ExperimentConfig, HarnessError};

#[derive(Parser)]
#[command(name = "sindy-rl", version, about = "Sparse dynamics identification and Dyna-style RL experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated seeds replacing the configured list.
    #[arg(long, value_delimiter = ',')]
    seed_list: Option<Vec<u64>>,
    /// Output directory replacing the configured one.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Configuration override, e.g. `dyna.model_epochs=0`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Collect, fit, train and evaluate every seed.
    Run(ConfigArgs),
    /// Collect seed data and fit the model only.
    Fit(ConfigArgs),
    /// Compare steps-to-threshold of result directories against the first.
    Compare {
        #[arg(required = true, num_args = 2..)]
        dirs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the equations of a saved model.
    PrintModel { path: PathBuf },
}

fn load(args: &ConfigArgs) -> Result<ExperimentConfig, ConfigError> {
    let mut config = ExperimentConfig::load(&args.config, &args.overrides)?;
    if let Some(seeds) = &args.seed_list {
        config.seeds = seeds.clone();
    }
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn fail(e: &dyn std::fmt::Display, code: i32) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(code as u8)
}

fn harness_code(e: &HarnessError) -> i32 {
    match e {
        HarnessError::Config(_) => exit::CONFIG,
        _ => exit::RUNTIME,
    }
}

fn run(args: &ConfigArgs) -> ExitCode {
    let config = match load(args) {
        Ok(c) => c,
        Err(e) => return fail(&e, exit::CONFIG),
    };
    let table = match run_experiment(&config, &config.output_dir, worker_count(), None) {
        Ok(t) => t,
        Err(e) => return fail(&e, harness_code(&e)),
    };
    for s in &table.seeds {
        let steps = s.steps_to_threshold().map_or("not reached".to_string(), |n| n.to_string());
        println!(
            "seed {:>4}  {:<14} steps-to-threshold {:>10}  fine-tuning episodes {:>3}  P' {}",
            s.seed,
            s.status.label(),
            steps,
            s.fine_tuning_episodes(),
            s.nonzero
        );
        if let sindy_rl_harness::SeedStatus::Failed(e) = &s.status {
            eprintln!("seed {} failed: {e}", s.seed);
        }
    }
    println!("results written to {}", config.output_dir.display());
    if table.any_failed() {
        ExitCode::from(exit::RUNTIME as u8)
    } else if !table.all_converged() {
        ExitCode::from(exit::NOT_CONVERGED as u8)
    } else {
        ExitCode::SUCCESS
    }
}

fn fit(args: &ConfigArgs) -> ExitCode {
    let config = match load(args) {
        Ok(c) => c,
        Err(e) => return fail(&e, exit::CONFIG),
    };
    for &seed in &config.seeds {
        let outcome = match fit_only(&config, seed) {
            Ok(o) => o,
            Err(e) => return fail(&e, harness_code(&e)),
        };
        println!("== seed {seed}");
        print!("{}", outcome.report);
        let dir = config.output_dir.join("fit").join(format!("seed_{seed}"));
        let written = std::fs::create_dir_all(&dir)
            .and_then(|_| std::fs::write(dir.join("model.txt"), outcome.model.to_text()))
            .and_then(|_| std::fs::write(dir.join("equations.txt"), &outcome.report));
        if let Err(e) = written {
            return fail(&format!("{}: {e}", dir.display()), exit::RUNTIME);
        }
    }
    ExitCode::SUCCESS
}

fn compare(dirs: &[PathBuf], out: &Path) -> ExitCode {
    match compare_runs(dirs, out) {
        Ok(results) => {
            for (name, seed, s) in results {
                let text = match s {
                    Speedup::Ratio(r) => format!("{r:.2}x"),
                    Speedup::ReferenceNotReached { lower_bound } => format!("not reached (at least {lower_bound:.2}x)"),
                    Speedup::NotReached => "not reached".to_string(),
                };
                println!("{name} seed {seed}: {text}");
            }
            println!("comparison written to {}", out.join("comparison.csv").display());
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e, harness_code(&e)),
    }
}

fn print_model(path: &Path) -> ExitCode {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return fail(&format!("{}: {e}", path.display()), exit::RUNTIME),
    };
    match SindyModel::from_text(&text) {
        Ok(model) => {
            println!("P = {}, P' = {}", model.parameter_count(), model.nonzero_count());
            print!("{}", model.equations_to_string());
            ExitCode::SUCCESS
        }
        Err(e) => fail(&format!("{}: {e}", path.display()), exit::RUNTIME),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run(args) => run(args),
        Command::Fit(args) => fit(args),
        Command::Compare { dirs, out } => compare(dirs, out),
        Command::PrintModel { path } => print_model(path),
    }
}
