use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use evoke::commands::{self, Ctx};
use evoke::error::CliError;
use evoke::settings::{parse_grid, parse_seeds, Overrides, RunConfig};

/// Self-evolution harness: prioritized rollout scheduling plus
/// cluster-isolated knowledge banks.
///
/// Exit codes: 0 success, 2 validation error, 3 provider error,
/// 4 corruption.
///
/// Remote embedding settings fall back to the environment:
/// EVOKE_EMBED_URL, EVOKE_EMBED_MODEL, EVOKE_EMBED_API_KEY.
#[derive(Parser)]
#[command(name = "evoke", version, about, verbatim_doc_comment)]
struct Cli {
    /// TOML config file (flags > file > environment > defaults).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run seed; drives sampling, the simulated world, and k-means.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Knowledge bank directory.
    #[arg(long, global = true)]
    bank: Option<PathBuf>,
    /// Output path (report log, inference records, or JSON tables,
    /// depending on the subcommand).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Suppress informational output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a dataset file and print its summary.
    Validate {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Embed a dataset, fit K centroids, and initialize a bank directory.
    /// Prints a silhouette table for K in [2..10] as guidance.
    Cluster {
        #[arg(long)]
        dataset: PathBuf,
        /// Number of clusters (overrides config).
        #[arg(long)]
        k: Option<usize>,
    },
    /// Run the bootstrapping loop against an initialized bank.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// Total steps to reach (overrides config).
        #[arg(long)]
        steps: Option<u64>,
        /// Batch size per step (overrides config).
        #[arg(long)]
        batch_size: Option<usize>,
        /// Sampling policy: prioritized or uniform.
        #[arg(long)]
        policy: Option<String>,
        /// Resume from the bank's latest checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Answer samples with bank knowledge injected (read-only).
    Infer {
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Inline task description instead of a dataset file.
        #[arg(long)]
        text: Option<String>,
        /// Experiences to retrieve per query (overrides config).
        #[arg(long)]
        top_k: Option<usize>,
        /// Agent provider (bundled: echo).
        #[arg(long, default_value = "echo")]
        agent: String,
    },
    /// Summarize a run report: visit histogram, reward curve, cluster
    /// growth. Optionally emits an SVG histogram.
    Stats {
        #[arg(long)]
        report: PathBuf,
        /// Write the visit histogram as an SVG file.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Grid sweep over rho and gamma: mean final success rate per cell.
    Sweep {
        #[arg(long)]
        dataset: PathBuf,
        /// Comma-separated rho values (default: the configured rho).
        #[arg(long)]
        rho: Option<String>,
        /// Comma-separated gamma values (default: the configured gamma).
        #[arg(long)]
        gamma: Option<String>,
        /// Seeds: comma list (0,1,2) or range (0..10).
        #[arg(long, default_value = "0..10")]
        seeds: String,
    },
    /// Prioritized-vs-uniform comparison over seeds.
    Compare {
        #[arg(long)]
        dataset: PathBuf,
        /// Seeds: comma list (0,1,2) or range (0..10).
        #[arg(long, default_value = "0..10")]
        seeds: String,
    },
}

fn parse_policy(raw: &str) -> Result<evoke_core::config::SamplingPolicy, CliError> {
    match raw {
        "prioritized" => Ok(evoke_core::config::SamplingPolicy::Prioritized),
        "uniform" => Ok(evoke_core::config::SamplingPolicy::Uniform),
        other => Err(CliError::validation(format!(
            "--policy must be `prioritized` or `uniform`, got `{other}`"
        ))),
    }
}

fn require_bank(bank: &Option<PathBuf>) -> Result<&PathBuf, CliError> {
    bank.as_ref()
        .ok_or_else(|| CliError::validation("this command requires --bank <dir>"))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut overrides = Overrides {
        seed: cli.seed,
        ..Overrides::default()
    };
    if let Command::Train {
        steps,
        batch_size,
        policy,
        ..
    } = &cli.command
    {
        overrides.total_steps = *steps;
        overrides.batch_size = *batch_size;
        overrides.policy = policy.as_deref().map(parse_policy).transpose()?;
    }
    if let Command::Cluster { k, .. } = &cli.command {
        overrides.k = *k;
    }
    if let Command::Infer { top_k, .. } = &cli.command {
        overrides.top_k = *top_k;
    }

    let config = RunConfig::resolve(cli.config.as_deref(), &overrides)?;
    let ctx = Ctx {
        config,
        quiet: cli.quiet,
    };

    match cli.command {
        Command::Validate { dataset } => commands::cmd_validate(&ctx, &dataset),
        Command::Cluster { dataset, .. } => {
            commands::cmd_cluster(&ctx, &dataset, require_bank(&cli.bank)?)
        }
        Command::Train {
            dataset, resume, ..
        } => commands::cmd_train(&ctx, &dataset, require_bank(&cli.bank)?, cli.out, resume),
        Command::Infer {
            dataset,
            text,
            top_k,
            agent,
        } => commands::cmd_infer(
            &ctx,
            require_bank(&cli.bank)?,
            dataset.as_deref(),
            text.as_deref(),
            &agent,
            top_k,
            cli.out,
        ),
        Command::Stats { report, plot } => commands::cmd_stats(&ctx, &report, plot, cli.out),
        Command::Sweep {
            dataset,
            rho,
            gamma,
            seeds,
        } => {
            let rho_values = match rho {
                Some(raw) => parse_grid(&raw, "rho")?,
                None => vec![ctx.config.engine.sampler.rho],
            };
            let gamma_values = match gamma {
                Some(raw) => parse_grid(&raw, "gamma")?,
                None => vec![ctx.config.engine.sampler.gamma],
            };
            let seeds = parse_seeds(&seeds)?;
            commands::cmd_sweep(&ctx, &dataset, &rho_values, &gamma_values, &seeds, cli.out)
        }
        Command::Compare { dataset, seeds } => {
            let seeds = parse_seeds(&seeds)?;
            commands::cmd_compare(&ctx, &dataset, &seeds, cli.out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(error.exit_code() as u8)
        }
    }
}
