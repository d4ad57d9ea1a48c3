use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Args, Parser, Subcommand};
use phasewise_cli::{commands, exit_code, Context, Outcome, RunConfig};

#[derive(Parser)]
#[command(
    name = "phasewise",
    version,
    about = "Multi-phase influence maximization under the Independent Cascade model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Command {
    /// Sample live graphs and save them.
    Sample,
    /// Expected spread of explicit seeds or of selector-chosen seeds.
    Spread,
    /// Run one budget split phase by phase.
    Multiphase,
    /// Search for the best budget split.
    Search,
    /// Influenceability curve and curve-based splits.
    Curve,
    /// Decay-factor analysis.
    Decay,
    /// Regression and oracle cross-checks.
    Verify,
}

#[derive(Args)]
struct Common {
    /// Flat key = value configuration file.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override any configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    #[arg(long, global = true)]
    graph: Option<String>,
    /// wc, tv, uniform or file.
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true)]
    undirected: bool,
    #[arg(long, global = true)]
    ensemble: Option<String>,
    /// Number of live graphs.
    #[arg(long, short = 'm', global = true)]
    samples: Option<String>,
    /// Master seed of the live-graph ensemble.
    #[arg(long, global = true)]
    seed: Option<String>,
    /// greedy, degree-discount or irie.
    #[arg(long, global = true)]
    selector: Option<String>,
    #[arg(long, short = 'k', global = true, allow_hyphen_values = true)]
    budget: Option<String>,
    #[arg(long, short = 'p', global = true)]
    phases: Option<String>,
    /// Budget split such as 5,15.
    #[arg(long, global = true)]
    split: Option<String>,
    /// Comma-separated node ids.
    #[arg(long, global = true)]
    seeds: Option<String>,
    /// Also compute the exact spread by enumeration (tiny graphs only).
    #[arg(long, global = true)]
    exact: bool,
    /// Output directory for CSV artifacts (also PHASEWISE_OUT).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write the effective configuration to this file.
    #[arg(long, global = true)]
    write_config: Option<PathBuf>,
    #[arg(long, short, global = true)]
    verbose: bool,
}

impl Common {
    fn config(&self) -> anyhow::Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        for kv in &self.sets {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
            config.set(k.trim(), v)?;
        }
        let flags = [
            ("graph", &self.graph),
            ("model", &self.model),
            ("ensemble", &self.ensemble),
            ("samples", &self.samples),
            ("seed", &self.seed),
            ("selector", &self.selector),
            ("budget", &self.budget),
            ("phases", &self.phases),
            ("split", &self.split),
            ("seeds", &self.seeds),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                config.set(key, v)?;
            }
        }
        if self.undirected {
            config.undirected = true;
        }
        if self.exact {
            config.exact = true;
        }
        Ok(config)
    }
}

fn run(cli: &Cli) -> anyhow::Result<Outcome> {
    let config = cli.common.config()?;
    config.selector.validate()?;
    let out_dir = config.resolve_out_dir(cli.common.out.as_deref());
    let ctx = Context::new(config, out_dir);
    if let Some(path) = &cli.common.write_config {
        commands::write_config(&ctx, path)?;
    }
    match cli.command {
        Command::Sample => commands::sample(&ctx),
        Command::Spread => commands::spread(&ctx),
        Command::Multiphase => commands::multiphase(&ctx),
        Command::Search => commands::search(&ctx),
        Command::Curve => commands::curve(&ctx),
        Command::Decay => commands::decay(&ctx),
        Command::Verify => commands::verify(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.common.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.common.threads {
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(outcome) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&outcome.summary).expect("JSON values serialize")
            );
            if outcome.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
