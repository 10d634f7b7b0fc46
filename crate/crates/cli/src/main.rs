use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use icql_cli::settings;

#[derive(Parser)]
#[command(name = "icql", version, about = "Centrally-assisted multi-agent Q-learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML config file (a run manifest also works)
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set intrinsic.sigma=0`; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train all configured seeds
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// iql, iql_intrinsic or icql
        #[arg(long)]
        algorithm: Option<String>,
        /// Comma-separated seed list
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Output directory
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Print the resolved config and exit
        #[arg(long)]
        dry_run: bool,
    },
    /// Greedy decentralized test episodes from a checkpoint
    Eval {
        checkpoint: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Defaults to run.eval_episodes
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Learning-curve figures and an aggregated CSV from run directories
    Plot {
        /// One run directory per experiment group
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(short, long, default_value = "plots")]
        output: PathBuf,
        /// Training returns are averaged over bins of this many episodes
        #[arg(long, default_value_t = 200)]
        window: usize,
    },
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run {
            config,
            algorithm,
            seeds,
            episodes,
            output,
            dry_run,
        } => {
            let mut overrides = config.overrides;
            if let Some(a) = algorithm {
                overrides.push(format!("algorithm={}", toml_string(&a)));
            }
            if let Some(s) = seeds {
                overrides.push(format!("run.seeds={s:?}"));
            }
            if let Some(e) = episodes {
                overrides.push(format!("run.episodes={e}"));
            }
            if let Some(o) = output {
                overrides.push(format!("run.output_dir={}", toml_string(&o.to_string_lossy())));
            }
            let cfg = settings::resolve(config.config.as_deref(), &overrides)?;
            if dry_run {
                print!("{}", cfg.to_toml_string());
                return Ok(());
            }
            let results = icql_cli::run(&cfg)?;
            for (seed, rows) in cfg.run.seeds.iter().zip(&results) {
                let last_test = rows.iter().rev().find_map(|r| r.test_return_mean);
                match last_test {
                    Some(t) => println!("seed {seed}: {} episodes, final test return {t:.3}", rows.len()),
                    None => println!("seed {seed}: {} episodes", rows.len()),
                }
            }
        }
        Command::Eval {
            checkpoint,
            config,
            episodes,
            seed,
        } => {
            let file = config.config.or_else(|| icql_cli::manifest_for(&checkpoint));
            let cfg = settings::resolve(file.as_deref(), &config.overrides)?;
            let n = episodes.unwrap_or(cfg.run.eval_episodes);
            let r = icql_cli::eval(&checkpoint, &cfg, n, seed)?;
            println!("episodes {n} mean_return {} stderr {}", r.mean, r.stderr);
        }
        Command::Plot { runs, output, window } => {
            for p in icql_cli::plot::plot_dirs(&runs, &output, window)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}
