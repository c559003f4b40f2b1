use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use psomarl::explore::Mode;
use psomarl::harness::compare::compare_with;
use psomarl::harness::{evaluate, load_checkpoint, plot, train, RunConfig};
use psomarl::{Error, Result};

#[derive(Parser)]
#[command(name = "psomarl", version, about = "Swarm-guided exploration for multi-agent soft actor-critic")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one seeded run.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides run.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides run.output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train two exploration modes over several seeds and compare them.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "epsilon_pso,epsilon_random")]
        modes: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a metrics or curves CSV as an SVG line chart.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the greedy policy of a saved checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
    },
}

fn parse_mode(s: &str) -> Result<Mode> {
    Mode::parse(s.trim()).ok_or_else(|| Error::Config(format!("unknown mode {s:?}")))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, seed, out } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            let records = train(&cfg)?;
            let last = records.last().expect("at least one episode");
            println!(
                "trained {} episodes, final team return {}, coverage {:.3}, output in {}",
                records.len(),
                last.team_return,
                last.coverage_fraction,
                cfg.output_dir.display()
            );
        }
        Command::Compare { config, modes, seeds, out } => {
            let cfg = RunConfig::load(&config)?;
            if modes.len() != 2 {
                return Err(Error::Config(format!("--modes needs exactly two modes, got {}", modes.len())));
            }
            let a = cfg.with_mode(parse_mode(&modes[0])?);
            let b = cfg.with_mode(parse_mode(&modes[1])?);
            let report = compare_with(&a, &b, &seeds, &out, |mode, seed, r| {
                if (r.episode + 1) % 50 == 0 {
                    eprintln!("{mode} seed {seed}: episode {} team return {}", r.episode + 1, r.team_return);
                }
            })?;
            for r in &report.rows {
                println!("seed {}: auc {} {} vs {} {}", r.seed, report.mode_a, r.auc_a, report.mode_b, r.auc_b);
            }
            println!("{} wins {}/{} seeds; report in {}", report.mode_a, report.wins_a(), report.rows.len(), out.display());
        }
        Command::Plot { input, out } => {
            plot(&input, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Eval { checkpoint, episodes } => {
            let (cfg, agents) = load_checkpoint(&checkpoint)?;
            let report = evaluate(&cfg, &agents, episodes)?;
            println!(
                "episodes {} mean_return {} mean_coverage {:.4}",
                report.episodes, report.mean_return, report.mean_coverage
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
