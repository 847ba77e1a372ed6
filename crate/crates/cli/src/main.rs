//! Command-line driver: loads a scenario configuration, runs the
//! optimization, and writes summaries, convergence tables, and field dumps
//! under the output directory.

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use stopt_cli::{audit, config, scenario};

#[derive(Parser)]
#[command(name = "stopt", about = "Space-time topology optimization driver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario from a TOML configuration file.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario configuration (TOML).
    config: PathBuf,
    /// Cap the worker thread count.
    #[arg(long)]
    threads: Option<usize>,
    /// Dump every intermediate-stage density field.
    #[arg(long)]
    dump_stages: bool,
    /// Dump the nodal virtual temperature field.
    #[arg(long)]
    dump_heat: bool,
    /// Check optimizer gradients against finite differences first.
    #[arg(long)]
    audit_gradients: bool,
    /// Double the grid resolution.
    #[arg(long)]
    full_res: bool,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => run(args),
    }
}

fn run(args: RunArgs) -> Result<()> {
    let threads = args.threads.unwrap_or(0);
    if let Some(k) = args.threads {
        if k == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()?;
    }

    if args.audit_gradients {
        let rows = audit::run_audit(7)?;
        let ok = audit::print_audit(&rows);
        if !ok {
            bail!("gradient audit failed; aborting the run");
        }
        println!();
    }

    let mut cfg = config::load_config(&args.config)?;
    if args.full_res {
        cfg.full_res();
    }
    let out_root = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
    std::fs::create_dir_all(&out_root)?;

    let flags = scenario::Flags {
        dump_stages: args.dump_stages,
        dump_heat: args.dump_heat,
        full_res: args.full_res,
        threads: rayon::current_num_threads().max(threads),
    };

    println!("scenario {} -> {}", cfg.scenario, out_root.display());
    let summaries = scenario::run_scenario(&cfg, &out_root, &flags)?;

    for s in &summaries {
        let verdict = if s.validity.is_valid { "valid" } else { "INVALID" };
        println!(
            "{}: objective {:.6e}, max constraint {:.3e}, {} iterations, \
             sequence {} ({} interior minima, {} enclosed maxima)",
            s.run,
            s.final_objective,
            s.constraint_max,
            s.iterations,
            verdict,
            s.validity.interior_minima,
            s.validity.enclosed_maxima,
        );
    }
    Ok(())
}
