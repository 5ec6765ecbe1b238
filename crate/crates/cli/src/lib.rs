//! Experiment driver for `ermab`: config parsing, policy × seed grids and
//! result files.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod runner;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ermab::domains::DOMAIN_NAMES;

pub use config::{ExperimentConfig, Realloc};
pub use error::CliError;

/// Environment variable holding the default output directory.
pub const OUT_DIR_ENV: &str = "ERMAB_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "ermab",
    version,
    about = "Equitable restless bandit experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every policy for every seed and write records, summary and manifest.
    Run(RunArgs),
    /// Sweep the diabetes reward weight alpha and record both reward components.
    Pareto(RunArgs),
    /// Sweep the budget and find the smallest one meeting a last-round target.
    Capacity(RunArgs),
    /// Parse and validate a config without running anything.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
    /// List the available domains.
    ListDomains,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// TOML config, or a previous run's manifest.json.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides the config's out_dir).
    #[arg(long, env = OUT_DIR_ENV)]
    pub out: Option<PathBuf>,
    /// Number of seeds (overrides the config).
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Allocation timing (overrides the config).
    #[arg(long, value_parser = clap::value_parser!(Realloc))]
    pub realloc: Option<Realloc>,
}

impl clap::ValueEnum for Realloc {
    fn value_variants<'a>() -> &'a [Self] {
        &[Realloc::EveryRound, Realloc::Once]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(match self {
            Realloc::EveryRound => "every-round",
            Realloc::Once => "once",
        }))
    }
}

impl RunArgs {
    /// Loads the config and applies command-line overrides.
    pub fn load(&self) -> Result<(ExperimentConfig, commands::RunOptions), CliError> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(seeds) = self.seeds {
            cfg.seeds = seeds;
        }
        if let Some(realloc) = self.realloc {
            cfg.realloc = realloc;
        }
        let out_dir = commands::resolve_out_dir(self.out.as_deref(), &cfg);
        Ok((
            cfg,
            commands::RunOptions {
                out_dir,
                jobs: self.jobs,
            },
        ))
    }
}

fn domain_blurb(name: &str) -> &'static str {
    match name {
        "synthetic" => "two-state arms in five groups; C is small, D and E ignore intervention",
        "maternal" => "three-state engagement arms sampled around three group means",
        "diabetes" => "54-state engagement x A1c arms from a six-row group table",
        _ => "",
    }
}

/// Executes a parsed command, printing a short report to stdout.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => {
            let (cfg, opts) = args.load()?;
            let doc = commands::cmd_run(&cfg, &opts)?;
            for p in &doc.policies {
                let s = &p.summary;
                println!(
                    "{:<8} reward/arm {:.4} ± {:.4}  gini {:.4}",
                    s.policy.name(),
                    s.mean_reward_per_arm,
                    s.stderr_reward_per_arm,
                    s.mean_gini
                );
            }
            println!("wrote {}", opts.out_dir.display());
        }
        Command::Pareto(args) => {
            let (cfg, opts) = args.load()?;
            for r in commands::cmd_pareto(&cfg, &opts)? {
                println!(
                    "alpha {:<5} {:<8} engagement {:.4}  clinical {:.4}",
                    r.alpha,
                    r.policy.name(),
                    r.engagement,
                    r.clinical
                );
            }
            println!("wrote {}", opts.out_dir.display());
        }
        Command::Capacity(args) => {
            let (cfg, opts) = args.load()?;
            let doc = commands::cmd_capacity(&cfg, &opts)?;
            for c in &doc.curves {
                match c.crossing.budget() {
                    Some(b) => println!("{:<8} reaches {} at B = {b}", c.policy.name(), doc.target),
                    None => println!("{:<8} not reached", c.policy.name()),
                }
            }
            println!("wrote {}", opts.out_dir.display());
        }
        Command::ValidateConfig { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            cfg.validate()?;
            println!(
                "ok: {} with N={}, B={}, H={}, {} policies, {} seeds",
                cfg.domain,
                cfg.n_arms(),
                cfg.budget(),
                cfg.horizon(),
                cfg.policies.len(),
                cfg.seeds
            );
        }
        Command::ListDomains => {
            for name in DOMAIN_NAMES {
                println!("{name:<10} {}", domain_blurb(name));
            }
        }
    }
    Ok(())
}
