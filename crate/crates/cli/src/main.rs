use std::path::PathBuf;
use std::process::ExitCode;

use allocbench::commands::{self, Command};
use allocbench::config::{RunConfig, StageSelection};
use allocbench::Failure;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "allocbench", version, about = "Allocation-skill benchmarks for venture portfolios and analyst forecasts")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse deals, apply filters, build portfolios.
    Ingest,
    /// Draw stratified counterfactual portfolios.
    Benchmark,
    /// KS sweeps and rank-order profiles from a benchmark.
    Analyze,
    /// Forecast bias, prediction errors and the reshuffle benchmark.
    Analyst,
    /// Generate synthetic deals and forecasts with known ground truth.
    Synth,
    /// Seeded replications for null calibration and power.
    Experiment,
    /// Summarise the artifacts in the output directory.
    Report,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Benchmark draws per investor (also analyst and experiment draws).
    #[arg(long, global = true)]
    draws: Option<usize>,
    #[arg(long, global = true, value_parser = parse_stage)]
    stage: Option<StageSelection>,
    #[arg(long, global = true)]
    min_tail_n: Option<usize>,
    /// Comma-separated ranks for rank density artifacts.
    #[arg(long, global = true, value_delimiter = ',')]
    ranks: Option<Vec<usize>>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Monte Carlo check of analytic rank moments.
    #[arg(long, global = true)]
    oracle: bool,
    /// Write every benchmark draw.
    #[arg(long, global = true)]
    emit_draws: bool,
    /// Deals CSV, overriding [input] deals.
    #[arg(long, global = true)]
    deals: Option<PathBuf>,
    /// Forecasts CSV, overriding [input] forecasts.
    #[arg(long, global = true)]
    forecasts: Option<PathBuf>,
    /// Worker threads (0 = all cores). Does not affect results.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

fn parse_stage(s: &str) -> Result<StageSelection, String> {
    StageSelection::parse(s).map_err(|e| e.to_string())
}

fn resolve(common: Common) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = Some(seed);
    }
    if let Some(d) = common.draws {
        cfg.benchmark.draws = d;
        cfg.analyst.draws = d;
        cfg.experiment.draws = d;
    }
    if let Some(s) = common.stage {
        cfg.stage = s;
    }
    if let Some(n) = common.min_tail_n {
        cfg.ks.min_tail_n = n;
    }
    if let Some(r) = common.ranks {
        cfg.rank.ranks = r;
    }
    if let Some(o) = common.out {
        cfg.out = o;
    }
    cfg.rank.oracle |= common.oracle;
    cfg.benchmark.emit_draws |= common.emit_draws;
    if let Some(p) = common.deals {
        cfg.input.deals = Some(p);
    }
    if let Some(p) = common.forecasts {
        cfg.input.forecasts = Some(p);
    }
    if let Some(t) = common.threads {
        cfg.benchmark.threads = t;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = match cli.command {
        Cmd::Ingest => Command::Ingest,
        Cmd::Benchmark => Command::Benchmark,
        Cmd::Analyze => Command::Analyze,
        Cmd::Analyst => Command::Analyst,
        Cmd::Synth => Command::Synth,
        Cmd::Experiment => Command::Experiment,
        Cmd::Report => Command::Report,
    };
    let result = resolve(cli.common).and_then(|cfg| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.benchmark.threads)
            .build()
            .map_err(|e| Failure::Runtime(format!("thread pool: {e}")))?
            .install(|| commands::run(command, &cfg))
    });
    match result {
        Ok(paths) => {
            for p in paths {
                eprintln!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("allocbench {}: {e}", command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
