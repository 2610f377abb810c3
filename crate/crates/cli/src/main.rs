use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use echelon_core::agent::{export_policy_grid, SavedAgent};
use echelon_core::config::{ConfigFile, RunOverrides};
use echelon_core::experiment::{run_experiment_with, summarize, timing_comparison, write_summary};
use echelon_core::gsm::{analytical_targets, enumerate_vertices, render_table, solve_exhaustive, table_csv, Network};
use echelon_core::stats::CiMethod;
use echelon_core::CostCase;

#[derive(Parser)]
#[command(name = "echelon", version, about = "Inventory control experiments on a three-stage supply chain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Q,
    A2c,
    Maa2c,
}

impl Algo {
    fn name(self) -> &'static str {
        match self {
            Algo::Q => "q",
            Algo::A2c => "a2c",
            Algo::Maa2c => "maa2c",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Ci {
    Normal,
    T,
}

#[derive(Subcommand)]
enum Command {
    /// Guaranteed-service table and optimum for one cost case.
    SolveGsm {
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=2))]
        case: u32,
        /// Print comma-separated rows with full precision.
        #[arg(long)]
        csv: bool,
    },
    /// Train one algorithm over several seeds and summarize.
    Train {
        #[arg(long)]
        algo: Option<Algo>,
        #[arg(long)]
        case: Option<u32>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seeds: Option<usize>,
        /// Base seed; run k uses seed + k.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        eval_episodes: Option<usize>,
        #[arg(long, value_enum)]
        ci: Option<Ci>,
        /// TOML file with run.*, env.* and algo.* keys.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
    /// Recompute the summary of a finished run directory.
    Summarize {
        #[arg(long = "in")]
        dir: PathBuf,
    },
    /// Export the critic value and factory policy over (I_f, I_w).
    Viz {
        #[arg(long)]
        agent: PathBuf,
        #[arg(long)]
        rp: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-episode wall time of each algorithm.
    Bench {
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=2))]
        case: u32,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(ToString::to_string).collect();
            eprintln!("error: {}", chain.join(": "));
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SolveGsm { case, csv } => solve_gsm(case, csv),
        Command::Train {
            algo,
            case,
            episodes,
            steps,
            seeds,
            seed,
            out,
            eval_episodes,
            ci,
            config,
            quiet,
        } => {
            let file = match &config {
                Some(p) => ConfigFile::load(p)?,
                None => ConfigFile::default(),
            };
            let cli = RunOverrides {
                algorithm: algo.map(|a| a.name().to_string()),
                case,
                episodes,
                steps,
                seeds,
                base_seed: seed,
                out,
                eval_episodes,
                ci_method: ci.map(|c| match c {
                    Ci::Normal => CiMethod::Normal,
                    Ci::T => CiMethod::StudentT,
                }),
            };
            let cfg = file.resolve(cli)?;
            let start = Instant::now();
            let summary = run_experiment_with(&cfg, |o| {
                if !quiet {
                    let e = &o.evaluation;
                    eprintln!(
                        "seed {}: I_f {:.2}  I_w {:.2}  rp {:.2}  stockouts/episode {:.2}  ({:.0}s)",
                        o.seed,
                        e.mean_inv_factory,
                        e.mean_inv_warehouse,
                        e.mean_rp,
                        e.stockouts_per_episode,
                        start.elapsed().as_secs_f64()
                    );
                }
            })
            .with_context(|| format!("training into {}", cfg.out_dir.display()))?;
            print!("{}", summary.table());
            Ok(())
        }
        Command::Summarize { dir } => {
            let summary = summarize(&dir)?;
            write_summary(&dir, &summary)?;
            print!("{}", summary.table());
            Ok(())
        }
        Command::Viz { agent, rp, out } => {
            let saved = SavedAgent::load(&agent)?;
            let path = export_policy_grid(&saved, rp, &out)?;
            println!("{}", path.display());
            Ok(())
        }
        Command::Bench {
            case,
            episodes,
            steps,
            seed,
        } => {
            let case = CostCase::from_number(case)?;
            println!("algorithm,seconds_per_episode");
            for (algo, secs) in timing_comparison(case, episodes, steps, seed)? {
                println!("{algo},{secs:e}");
            }
            Ok(())
        }
    }
}

fn solve_gsm(case: u32, csv: bool) -> Result<()> {
    let case = CostCase::from_number(case)?;
    let network = Network::for_case(case);
    let rows = enumerate_vertices(&network)?;
    let best = solve_exhaustive(&network)?;
    if csv {
        print!("{}", table_csv(&network, &rows, &best));
        return Ok(());
    }
    print!("{}", render_table(&network, &rows, &best));
    let t = analytical_targets(case)?;
    println!(
        "optimum S = {:?}, cost {}; targets rp {} I_factory {} I_warehouse {}",
        best.service_times(),
        best.total_cost,
        t.rp,
        t.inv_factory,
        t.inv_warehouse
    );
    Ok(())
}
