//! Seeded replications of synthetic corpus → benchmark → tests, for null
//! calibration and detection power.

use allocbench_core::math;
use allocbench_core::resampler::{BenchmarkConfig, MeanCheck};
use allocbench_core::rng::{derive_seed, tag};
use allocbench_core::synth::{self, ForecastSynthConfig, SynthConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::pipeline::{self, Integrity};
use crate::CliResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub stage: allocbench_core::corpus::Stage,
    pub investors: usize,
    pub ks_p: f64,
    pub left_min_p: Option<f64>,
    pub right_min_p: Option<f64>,
    pub mean_z: Option<f64>,
    pub mean_check: MeanCheck,
    pub integrity: Integrity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub replication: usize,
    pub seed: u64,
    pub stages: Vec<StageOutcome>,
    /// Rescaled z bin means, all stages pooled.
    pub rescaled: Vec<Option<f64>>,
}

/// Mean over replications of a per-replication quantity, ignoring gaps.
fn mean_present(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| math::mean(&v))
}

/// Central binomial interval containing at least `level` of the mass.
pub fn binomial_interval(n: usize, p: f64, level: f64) -> (f64, f64) {
    let tail = (1.0 - level) / 2.0;
    let lo = (0..=n).find(|&k| math::binomial_cdf(k, n, p) > tail).unwrap_or(0);
    let hi = (0..=n).find(|&k| math::binomial_cdf(k, n, p) >= 1.0 - tail).unwrap_or(n);
    (lo as f64 / n as f64, hi as f64 / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanGap {
    /// Average over replications and stages of empirical minus benchmark mean.
    pub mean_difference: f64,
    pub standard_error: f64,
    pub z: f64,
    /// Share of individual (replication, stage) checks with |z| <= 3.
    pub within_3se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillSummary {
    pub skill: f64,
    pub replications: usize,
    /// Share of (replication, stage) pairs with unrestricted KS p < alpha.
    pub rejection_rate: f64,
    pub binomial_interval_99: (f64, f64),
    /// Share of (replication, stage) pairs with a right-tail p < alpha.
    pub right_tail_power: f64,
    pub left_tail_power: f64,
    pub mean_z: Option<f64>,
    pub rescaled_bin_means: Vec<Option<f64>>,
    pub integrity_all: bool,
    pub mean_gap: MeanGap,
    pub runs: Vec<Replication>,
}

pub fn replication_seed(master: u64, skill_index: usize, replication: usize) -> u64 {
    derive_seed(master, tag::REPLICATION, &[skill_index as u64, replication as u64])
}

pub fn run_replication(cfg: &RunConfig, synth_cfg: &SynthConfig, replication: usize, seed: u64) -> CliResult<Replication> {
    let corpus = synth::generate_deals(&SynthConfig { seed, ..synth_cfg.clone() })?;
    let corpus = pipeline::build_corpus(corpus.deal_records(), cfg);
    let bcfg = BenchmarkConfig { draws: cfg.experiment.draws, seed, fallback: cfg.benchmark.fallback };
    let mut stages = Vec::new();
    let mut profiles = Vec::new();
    for &stage in &synth_cfg.stages {
        let Some(run) = pipeline::benchmark_stage(&corpus, stage, &bcfg, cfg.benchmark.pool, cfg.benchmark.density_bins)? else {
            continue;
        };
        let b = &run.summary;
        let sweeps = pipeline::stage_sweeps(b, cfg)?;
        let tf = pipeline::tail_functions(b, cfg)?;
        let profile = pipeline::rank_profile(b, &tf)?;
        stages.push(StageOutcome {
            stage,
            investors: b.empirical.len(),
            ks_p: sweeps.unrestricted.p_value,
            left_min_p: sweeps.left_tail.min_p(),
            right_min_p: sweeps.right_tail.min_p(),
            mean_z: profile.mean_z(),
            mean_check: b.mean_check.clone(),
            integrity: pipeline::verify_integrity(&run.portfolios, &run.index, &run.draws)?,
        });
        profiles.push(profile);
    }
    let rescaled = pipeline::rescaled(&profiles, cfg.rank.rescale_bins)?.bins.iter().map(|b| b.mean_z).collect();
    Ok(Replication { replication, seed, stages, rescaled })
}

pub fn summarize(skill: f64, runs: Vec<Replication>, alpha: f64, rescale_bins: usize) -> SkillSummary {
    let outcomes: Vec<&StageOutcome> = runs.iter().flat_map(|r| &r.stages).collect();
    let n = outcomes.len().max(1) as f64;
    let share = |f: &dyn Fn(&StageOutcome) -> bool| outcomes.iter().filter(|o| f(o)).count() as f64 / n;
    let diffs: Vec<f64> = outcomes.iter().map(|o| o.mean_check.empirical_mean - o.mean_check.benchmark_mean).collect();
    let se = outcomes.iter().map(|o| o.mean_check.standard_error.powi(2)).sum::<f64>().sqrt() / n;
    let mean_difference = if diffs.is_empty() { 0.0 } else { math::mean(&diffs) };
    SkillSummary {
        skill,
        replications: runs.len(),
        rejection_rate: share(&|o| o.ks_p < alpha),
        binomial_interval_99: binomial_interval(outcomes.len().max(1), alpha, 0.99),
        right_tail_power: share(&|o| o.right_min_p.is_some_and(|p| p < alpha)),
        left_tail_power: share(&|o| o.left_min_p.is_some_and(|p| p < alpha)),
        mean_z: mean_present(outcomes.iter().map(|o| o.mean_z)),
        rescaled_bin_means: (0..rescale_bins).map(|b| mean_present(runs.iter().map(|r| r.rescaled.get(b).copied().flatten()))).collect(),
        integrity_all: outcomes.iter().all(|o| o.integrity.ok()),
        mean_gap: MeanGap {
            mean_difference,
            standard_error: se,
            z: if se > 0.0 { mean_difference / se } else { 0.0 },
            within_3se: share(&|o| o.mean_check.z.abs() <= 3.0),
        },
        runs,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalystReplication {
    pub replication: usize,
    pub seed: u64,
    pub valid_thresholds: usize,
    pub above_alpha: usize,
    pub inverse_right_min_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalystSummary {
    pub skilled_fraction: f64,
    pub replications: usize,
    /// Share of valid thresholds (both tails, all replications) with p >= alpha.
    pub share_above_alpha: f64,
    /// Share of replications where the right tail of inverse errors rejects.
    pub inverse_right_power: f64,
    pub runs: Vec<AnalystReplication>,
}

pub fn run_analyst_replication(cfg: &RunConfig, panel_cfg: &ForecastSynthConfig, replication: usize, seed: u64) -> CliResult<AnalystReplication> {
    let panel = synth::generate_forecasts(&ForecastSynthConfig { seed, ..panel_cfg.clone() })?;
    let run = pipeline::run_analyst(&panel.records, cfg, seed)?;
    let alpha = cfg.experiment.alpha;
    let ps: Vec<f64> =
        [&run.sweeps.error_left, &run.sweeps.error_right].iter().flat_map(|s| s.valid().map(|(_, r)| r.p_value)).collect();
    Ok(AnalystReplication {
        replication,
        seed,
        valid_thresholds: ps.len(),
        above_alpha: ps.iter().filter(|&&p| p >= alpha).count(),
        inverse_right_min_p: run.sweeps.inverse_right.min_p(),
    })
}

pub fn run_analyst_experiment(cfg: &RunConfig, replications: usize, master: u64) -> CliResult<AnalystSummary> {
    let runs: Vec<AnalystReplication> = (0..replications)
        .into_par_iter()
        .map(|r| run_analyst_replication(cfg, &cfg.synth_forecasts, r, derive_seed(master, tag::REPLICATION, &[u64::MAX, r as u64])))
        .collect::<CliResult<_>>()?;
    let valid: usize = runs.iter().map(|r| r.valid_thresholds).sum();
    let above: usize = runs.iter().map(|r| r.above_alpha).sum();
    let alpha = cfg.experiment.alpha;
    Ok(AnalystSummary {
        skilled_fraction: cfg.synth_forecasts.skilled_fraction,
        replications,
        share_above_alpha: if valid > 0 { above as f64 / valid as f64 } else { 1.0 },
        inverse_right_power: runs.iter().filter(|r| r.inverse_right_min_p.is_some_and(|p| p < alpha)).count() as f64
            / replications.max(1) as f64,
        runs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub skills: Vec<SkillSummary>,
    /// Detection power per skill, in the order of `skills`.
    pub power_curve: Vec<(f64, f64)>,
    pub analyst: Option<AnalystSummary>,
}

pub fn run_experiment(cfg: &RunConfig, master: u64) -> CliResult<ExperimentReport> {
    let exp = &cfg.experiment;
    let jobs: Vec<(usize, usize)> =
        (0..exp.skills.len()).flat_map(|s| (0..exp.replications).map(move |r| (s, r))).collect();
    let results: Vec<Replication> = jobs
        .par_iter()
        .map(|&(s, r)| {
            let sc = SynthConfig { skill: exp.skills[s], ..cfg.synth.clone() };
            run_replication(cfg, &sc, r, replication_seed(master, s, r))
        })
        .collect::<CliResult<_>>()?;
    let mut by_skill: Vec<Vec<Replication>> = vec![Vec::new(); exp.skills.len()];
    for ((s, _), rep) in jobs.iter().zip(results) {
        by_skill[*s].push(rep);
    }
    let skills: Vec<SkillSummary> = exp
        .skills
        .iter()
        .zip(by_skill)
        .map(|(&skill, runs)| summarize(skill, runs, exp.alpha, cfg.rank.rescale_bins))
        .collect();
    let power_curve = skills.iter().map(|s| (s.skill, s.right_tail_power)).collect();
    let analyst = match exp.analyst_replications {
        0 => None,
        n => Some(run_analyst_experiment(cfg, n, master)?),
    };
    Ok(ExperimentReport { seed: master, skills, power_curve, analyst })
}
