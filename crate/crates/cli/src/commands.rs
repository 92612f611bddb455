//! Subcommand bodies. Each returns the artifacts it wrote.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::PathBuf;

use allocbench_core::corpus::{CorpusStats, Stage};
use allocbench_core::rankbench::{RankProfile, RescaledProfile};
use allocbench_core::resampler::{BenchmarkConfig, InvestorDraws};
use allocbench_core::synth::{self, DealTruth, ForecastTruth};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::artifact::{read_json, write_atomic, write_json};
use crate::config::RunConfig;
use crate::experiment;
use crate::ingest::{self, IngestReport, MultipleMismatch, Rejection};
use crate::pipeline::{self, OracleRow, RankDensityReport, StageBenchmark, StageSweeps};
use crate::{CliResult, Failure};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Ingest,
    Benchmark,
    Analyze,
    Analyst,
    Synth,
    Experiment,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Benchmark => "benchmark",
            Command::Analyze => "analyze",
            Command::Analyst => "analyst",
            Command::Synth => "synth",
            Command::Experiment => "experiment",
            Command::Report => "report",
        }
    }
}

pub fn run(cmd: Command, cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    cfg.validate()?;
    match cmd {
        Command::Ingest => ingest_cmd(cfg),
        Command::Benchmark => benchmark_cmd(cfg),
        Command::Analyze => analyze_cmd(cfg),
        Command::Analyst => analyst_cmd(cfg),
        Command::Synth => synth_cmd(cfg),
        Command::Experiment => experiment_cmd(cfg),
        Command::Report => report_cmd(cfg),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioSummary {
    pub investor_id: String,
    pub stage: Stage,
    pub n: usize,
    pub mean_multiple: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusArtifact {
    pub rows: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub out_of_window: usize,
    pub stage_excluded: usize,
    pub duplicates_dropped: usize,
    pub multiple_mismatches: usize,
    pub stats: CorpusStats,
    pub portfolios: Vec<PortfolioSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionArtifact {
    pub reasons: BTreeMap<String, usize>,
    pub rejected: Vec<Rejection>,
    pub mismatches: Vec<MultipleMismatch>,
}

fn rejection_artifact(report: &IngestReport) -> RejectionArtifact {
    RejectionArtifact {
        reasons: ingest::reason_counts(&report.rejected),
        rejected: report.rejected.clone(),
        mismatches: report.mismatches.clone(),
    }
}

fn ingest_cmd(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let (corpus, report) = pipeline::load_corpus(cfg)?;
    let art = CorpusArtifact {
        rows: report.rows,
        accepted: report.accepted,
        rejected: report.rejected.len(),
        out_of_window: report.out_of_window,
        stage_excluded: report.stage_excluded,
        duplicates_dropped: corpus.duplicates_dropped,
        multiple_mismatches: report.mismatches.len(),
        stats: corpus.stats.clone(),
        portfolios: corpus
            .portfolios
            .iter()
            .map(|p| PortfolioSummary { investor_id: p.investor_id.clone(), stage: p.stage, n: p.n, mean_multiple: p.mean_multiple })
            .collect(),
    };
    Ok(vec![
        write_json(&cfg.out, "corpus.json", "ingest", cfg, &art)?,
        write_json(&cfg.out, "rejections.json", "ingest", cfg, &rejection_artifact(&report))?,
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkArtifact {
    pub seed: u64,
    pub draws: usize,
    pub stages: Vec<StageBenchmark>,
    /// Selected stages without any portfolio.
    pub empty_stages: Vec<Stage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageDraws {
    pub stage: Stage,
    pub investors: Vec<InvestorDraws>,
}

fn benchmark_cmd(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let seed = cfg.require_seed()?;
    let (corpus, _) = pipeline::load_corpus(cfg)?;
    let bcfg = BenchmarkConfig { draws: cfg.benchmark.draws, seed, fallback: cfg.benchmark.fallback };
    let mut stages = Vec::new();
    let mut draws = Vec::new();
    let mut empty_stages = Vec::new();
    for stage in cfg.stage.stages() {
        match pipeline::benchmark_stage(&corpus, stage, &bcfg, cfg.benchmark.pool, cfg.benchmark.density_bins)? {
            Some(run) => {
                stages.push(run.summary);
                if cfg.benchmark.emit_draws {
                    draws.push(StageDraws { stage, investors: run.draws.investors });
                }
            }
            None => empty_stages.push(stage),
        }
    }
    if stages.is_empty() {
        return Err(Failure::Runtime("no portfolios in the selected stages".into()));
    }
    let mut out = vec![write_json(
        &cfg.out,
        "benchmark.json",
        "benchmark",
        cfg,
        &BenchmarkArtifact { seed, draws: bcfg.draws, stages, empty_stages },
    )?];
    if cfg.benchmark.emit_draws {
        out.push(write_json(&cfg.out, "benchmark_draws.json", "benchmark", cfg, &draws)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankDensityArtifact {
    pub k: usize,
    pub stages: Vec<RankDensityReport>,
}

fn analyze_cmd(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let bench: BenchmarkArtifact = read_json(&cfg.out, "benchmark.json")?;
    let oracle_seed = if cfg.rank.oracle { Some(cfg.require_seed()?) } else { None };
    let mut sweeps: Vec<StageSweeps> = Vec::new();
    let mut profiles: Vec<RankProfile> = Vec::new();
    let mut densities: BTreeMap<usize, Vec<RankDensityReport>> = cfg.rank.ranks.iter().map(|&k| (k, Vec::new())).collect();
    let mut oracle: Vec<OracleRow> = Vec::new();
    for b in &bench.stages {
        sweeps.push(pipeline::stage_sweeps(b, cfg)?);
        let tf = pipeline::tail_functions(b, cfg)?;
        let profile = pipeline::rank_profile(b, &tf)?;
        for (&k, list) in densities.iter_mut() {
            if let Some(d) = pipeline::rank_density_report(&profile, &tf, k)? {
                list.push(d);
            }
        }
        if let Some(seed) = oracle_seed {
            oracle.extend(pipeline::oracle_table(b, &profile, cfg.rank.oracle_trials, seed)?);
        }
        profiles.push(profile);
    }
    let rescaled: RescaledProfile = pipeline::rescaled(&profiles, cfg.rank.rescale_bins)?;
    let mut out = vec![
        write_json(&cfg.out, "ks_sweep.json", "analyze", cfg, &sweeps)?,
        write_json(&cfg.out, "rank_profile.json", "analyze", cfg, &profiles)?,
        write_json(&cfg.out, "rescaled_profile.json", "analyze", cfg, &rescaled)?,
    ];
    for (k, stages) in densities {
        out.push(write_json(&cfg.out, &format!("rank_density_{k}.json"), "analyze", cfg, &RankDensityArtifact { k, stages })?);
    }
    if oracle_seed.is_some() {
        out.push(write_json(&cfg.out, "rank_oracle.json", "analyze", cfg, &oracle)?);
    }
    Ok(out)
}

fn analyst_cmd(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let seed = cfg.require_seed()?;
    let path = cfg.input.forecasts.as_ref().ok_or_else(|| Failure::Usage("no forecasts input configured ([input] forecasts)".into()))?;
    let file = File::open(path).map_err(|e| Failure::Usage(format!("cannot open {}: {e}", path.display())))?;
    let (records, ingest) = ingest::parse_forecasts(file, cfg.delimiter()?)?;
    let run = pipeline::run_analyst(&records, cfg, seed)?;
    Ok(vec![
        write_json(&cfg.out, "analyst_bias.json", "analyst", cfg, &run.bias)?,
        write_json(
            &cfg.out,
            "analyst_errors.json",
            "analyst",
            cfg,
            &serde_json::json!({
                "counts": run.errors,
                "dropped_profiles": run.dropped_profiles,
                "profiles": run.profiles,
                "distributions": run.distributions,
            }),
        )?,
        write_json(&cfg.out, "analyst_inverse.json", "analyst", cfg, &run.inverse)?,
        write_json(&cfg.out, "analyst_ks_sweep.json", "analyst", cfg, &run.sweeps)?,
        write_json(&cfg.out, "analyst_rejections.json", "analyst", cfg, &ingest)?,
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub deals: DealTruth,
    pub forecasts: ForecastTruth,
}

fn synth_cmd(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let seed = cfg.require_seed()?;
    let mut cfg = cfg.clone();
    cfg.synth.seed = seed;
    cfg.synth_forecasts.seed = seed;
    let corpus = synth::generate_deals(&cfg.synth)?;
    let panel = synth::generate_forecasts(&cfg.synth_forecasts)?;
    let delim = cfg.delimiter()?;
    let deals_path = cfg.out.join("deals.csv");
    let forecasts_path = cfg.out.join("forecasts.csv");
    let mut buf = Vec::new();
    ingest::write_deals(&mut buf, &corpus.deals, delim)?;
    write_atomic(&deals_path, &buf)?;
    buf.clear();
    ingest::write_forecasts(&mut buf, &panel.records, delim)?;
    write_atomic(&forecasts_path, &buf)?;
    let truth = SynthTruth { deals: corpus.truth, forecasts: panel.truth };
    Ok(vec![deals_path, forecasts_path, write_json(&cfg.out, "synth_truth.json", "synth", &cfg, &truth)?])
}

fn experiment_cmd(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let seed = cfg.require_seed()?;
    let report = experiment::run_experiment(cfg, seed)?;
    Ok(vec![write_json(&cfg.out, "experiment.json", "experiment", cfg, &report)?])
}

fn optional(cfg: &RunConfig, name: &str) -> CliResult<Option<Value>> {
    if cfg.out.join(name).exists() {
        read_json(&cfg.out, name).map(Some)
    } else {
        Ok(None)
    }
}

/// Summarise whatever artifacts exist in the output directory.
fn report_cmd(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let mut sections = BTreeMap::new();
    let mut lines = Vec::new();
    if let Some(c) = optional(cfg, "corpus.json")? {
        lines.push(format!(
            "corpus: {} deals accepted of {} rows, {} portfolios",
            c["accepted"], c["rows"], c["stats"]["portfolio_count"]
        ));
        sections.insert("corpus", serde_json::json!({
            "accepted": c["accepted"],
            "rejected": c["rejected"],
            "mean_startup_multiple": c["stats"]["mean_startup_multiple"],
            "mean_investor_multiple": c["stats"]["mean_investor_multiple"],
            "zero_portfolio_share": c["stats"]["zero_portfolio_share"],
        }));
    }
    if let Some(b) = optional(cfg, "benchmark.json")? {
        let stages: Vec<Value> = b["stages"]
            .as_array()
            .into_iter()
            .flatten()
            .map(|s| {
                lines.push(format!(
                    "benchmark {}: mean {} vs {} (z {}), zero share gap {}",
                    s["stage"], s["mean_check"]["empirical_mean"], s["mean_check"]["benchmark_mean"], s["mean_check"]["z"], s["zero_share_gap"]
                ));
                serde_json::json!({
                    "stage": s["stage"],
                    "investors": s["investors"].as_array().map_or(0, Vec::len),
                    "mean_check": s["mean_check"],
                    "zero_share_empirical": s["zero_share_empirical"],
                    "zero_share_benchmark": s["zero_share_benchmark"],
                    "zero_share_gap": s["zero_share_gap"],
                })
            })
            .collect();
        sections.insert("benchmark", Value::Array(stages));
    }
    if let Some(k) = optional(cfg, "ks_sweep.json")? {
        let min_p = |sweep: &Value| {
            sweep["entries"]
                .as_array()
                .into_iter()
                .flatten()
                .filter_map(|e| e["outcome"]["p_value"].as_f64())
                .fold(None, |m: Option<f64>, p| Some(m.map_or(p, |m| m.min(p))))
        };
        let stages: Vec<Value> = k
            .as_array()
            .into_iter()
            .flatten()
            .map(|s| {
                let (l, r) = (min_p(&s["left_tail"]), min_p(&s["right_tail"]));
                lines.push(format!(
                    "ks {}: unrestricted p {}, min left-tail p {:?}, min right-tail p {:?}",
                    s["stage"], s["unrestricted"]["p_value"], l, r
                ));
                serde_json::json!({ "stage": s["stage"], "unrestricted": s["unrestricted"], "min_left_p": l, "min_right_p": r })
            })
            .collect();
        sections.insert("ks", Value::Array(stages));
    }
    if let Some(e) = optional(cfg, "experiment.json")? {
        let skills: Vec<Value> = e["skills"]
            .as_array()
            .into_iter()
            .flatten()
            .map(|s| {
                lines.push(format!(
                    "experiment skill {}: rejection rate {}, right-tail power {}, mean z {}",
                    s["skill"], s["rejection_rate"], s["right_tail_power"], s["mean_z"]
                ));
                serde_json::json!({
                    "skill": s["skill"],
                    "rejection_rate": s["rejection_rate"],
                    "binomial_interval_99": s["binomial_interval_99"],
                    "right_tail_power": s["right_tail_power"],
                    "mean_z": s["mean_z"],
                    "integrity_all": s["integrity_all"],
                })
            })
            .collect();
        sections.insert("experiment", Value::Array(skills));
    }
    if sections.is_empty() {
        return Err(Failure::Runtime(format!("no artifacts found in {}", cfg.out.display())));
    }
    for (name, value) in &cfg.report.reference {
        lines.push(format!("reference {name}: {value}"));
    }
    for l in &lines {
        println!("{l}");
    }
    let body = serde_json::json!({ "sections": sections, "reference": cfg.report.reference });
    Ok(vec![write_json(&cfg.out, "report.json", "report", cfg, &body)?])
}
