use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use darl1n_cli::bench::{bench, bench_table};
use darl1n_cli::outputs::summary_text;
use darl1n_cli::run::{eval, serve, train, LearnerHost};
use darl1n_cli::{CliError, RunConfig};
use darl1n_core::oracle::verification_suite;

#[derive(Parser)]
#[command(name = "darl1n", version, about = "Distributed multi-agent actor-critic training over one-hop neighborhoods")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train with the settings in a key=value config file.
    Train {
        config: PathBuf,
        /// Print only the final summary.
        #[arg(long)]
        quiet: bool,
    },
    /// Score stored policies with greedy actions.
    Eval { config: PathBuf, params_dir: PathBuf },
    /// Time one training iteration over the configured team sizes.
    Bench { config: PathBuf },
    /// Run the oracle suite.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Transitions per source and neighborhood scale.
        #[arg(long, default_value_t = 100_000)]
        steps: usize,
        /// Random tabular models per discount factor.
        #[arg(long, default_value_t = 7)]
        mdps: usize,
    },
    /// Serve one agent over TCP (started by `train` with transport=tcp).
    #[command(hide = true)]
    Learner {
        config: PathBuf,
        #[arg(long)]
        agent: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        connect: String,
    },
}

fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    RunConfig::parse(&text)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Cmd::Train { config, quiet } => {
            let cfg = load(&config)?;
            let host = LearnerHost::Processes { exe: std::env::current_exe()?, config: config.clone() };
            let last = cfg.max_iterations;
            let results = train(&cfg, &host, &mut |seed, r| {
                if !quiet && (r.iteration % 100 == 0 || r.iteration == last) {
                    println!("seed {seed} iteration {} reward {:.3} time {:.1}s", r.iteration, r.avg_total_reward, r.seconds);
                }
            })?;
            for r in results {
                println!("# run seed {} -> {}", r.seed, r.dir.display());
                print!("{}", summary_text(&r.summary));
            }
        }
        Cmd::Eval { config, params_dir } => {
            let cfg = load(&config)?;
            let totals = eval(&cfg, &params_dir)?;
            for (e, t) in totals.iter().enumerate() {
                println!("episode {e} total_reward {t}");
            }
            println!("mean_total_reward {}", totals.iter().sum::<f64>() / totals.len() as f64);
        }
        Cmd::Bench { config } => {
            let cfg = load(&config)?;
            let table = bench_table(&bench(&cfg)?);
            std::fs::create_dir_all(&cfg.output)?;
            std::fs::write(cfg.output.join("bench.csv"), &table)?;
            print!("{table}");
        }
        Cmd::Verify { seed, steps, mdps } => {
            let checks = verification_suite(seed, mdps, steps)?;
            for c in &checks {
                println!("{c}");
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                return Err(CliError::Verification(format!("{failed} of {} checks failed", checks.len())));
            }
        }
        Cmd::Learner { config, agent, seed, connect } => serve(&load(&config)?, agent, seed, &connect)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
