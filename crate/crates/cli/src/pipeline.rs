//! In-memory pipeline shared by the subcommands and the experiment runner.

use std::collections::BTreeMap;
use std::fs::File;

use allocbench_core::analyst::{self, AnalystProfile, BiasReport, ReshuffleBenchmark};
use allocbench_core::corpus::{build_portfolios, corpus_stats, dedup_deals, CorpusStats, DealFilter, DealRecord, Portfolio, Stage};
use allocbench_core::ks::{self, KsResult, KsSweep, Side};
use allocbench_core::rankbench::{self, OracleMoments, RankDensity, RankMoments, RankProfile, RescaledProfile, TailFunctions};
use allocbench_core::resampler::{
    self, draw_traced, index_strata, BenchmarkConfig, BenchmarkDraws, LogDensityTable, MeanCheck, StratumIndex,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{PoolScope, RunConfig};
use crate::ingest::{self, IngestReport};
use crate::{CliResult, Failure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub deals: Vec<DealRecord>,
    pub duplicates_dropped: usize,
    pub portfolios: Vec<Portfolio>,
    pub stats: CorpusStats,
}

pub fn deal_filter(cfg: &RunConfig) -> DealFilter {
    DealFilter { year_min: cfg.corpus.year_min, year_max: cfg.corpus.year_max, stages: cfg.stage.stages() }
}

pub fn build_corpus(deals: Vec<DealRecord>, cfg: &RunConfig) -> Corpus {
    let (deals, duplicates_dropped) = dedup_deals(deals);
    let portfolios = build_portfolios(&deals, cfg.corpus.min_investments);
    let stats = corpus_stats(&deals, &portfolios);
    Corpus { deals, duplicates_dropped, portfolios, stats }
}

pub fn load_corpus(cfg: &RunConfig) -> CliResult<(Corpus, IngestReport)> {
    let path = cfg.input.deals.as_ref().ok_or_else(|| Failure::Usage("no deals input configured ([input] deals)".into()))?;
    let file = File::open(path).map_err(|e| Failure::Usage(format!("cannot open {}: {e}", path.display())))?;
    let (deals, report) = ingest::parse_deals(file, cfg.delimiter()?, &deal_filter(cfg), cfg.corpus.horizon_months)?;
    Ok((build_corpus(deals, cfg), report))
}

/// Draws for every portfolio, parallel over investors. Each investor's values
/// depend only on the seed and its ordinal, so the result is identical for any
/// thread count.
pub fn sample_parallel(portfolios: &[Portfolio], index: &StratumIndex, config: &BenchmarkConfig) -> CliResult<BenchmarkDraws> {
    config.validate()?;
    let resolved = resampler::resolve_all(portfolios, index, config.fallback)?;
    let values: Vec<Vec<f64>> =
        resolved.par_iter().enumerate().map(|(i, r)| resampler::sample_investor(r, config, i)).collect();
    Ok(resampler::assemble(portfolios, &resolved, config, values))
}

/// Exact checks of the sampler on every draw: deal counts, stratum
/// membership of every pick, and agreement with the stored value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Integrity {
    pub size_preserved: bool,
    pub strata_preserved: bool,
    pub values_reproduced: bool,
}

impl Integrity {
    pub fn ok(&self) -> bool {
        self.size_preserved && self.strata_preserved && self.values_reproduced
    }
}

pub fn verify_integrity(portfolios: &[Portfolio], index: &StratumIndex, draws: &BenchmarkDraws) -> CliResult<Integrity> {
    let resolved = resampler::resolve_all(portfolios, index, draws.config.fallback)?;
    let all = Integrity { size_preserved: true, strata_preserved: true, values_reproduced: true };
    Ok(resolved
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let mut out = all;
            for d in 0..draws.config.draws {
                let (m, picks) = draw_traced(r, draws.config.seed, i, d);
                out.size_preserved &= picks.len() == portfolios[i].n;
                out.strata_preserved &=
                    picks.iter().zip(r.keys.iter().zip(&r.relaxations)).all(|(e, (k, relax))| index.admissible(e, k, *relax));
                out.values_reproduced &= m == draws.investors[i].values[d];
            }
            out
        })
        .reduce(
            || all,
            |a, c| Integrity {
                size_preserved: a.size_preserved && c.size_preserved,
                strata_preserved: a.strata_preserved && c.strata_preserved,
                values_reproduced: a.values_reproduced && c.values_reproduced,
            },
        ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageBenchmark {
    pub stage: Stage,
    pub investors: Vec<String>,
    pub portfolio_sizes: Vec<usize>,
    /// Observed portfolio multiples in investor order.
    pub empirical: Vec<f64>,
    /// Benchmark multiples, investor-major: all draws of investor 0 first.
    pub benchmark: Vec<f64>,
    pub draws: usize,
    pub pool_size: usize,
    pub strata: usize,
    pub relaxed_deals: usize,
    pub zero_share_empirical: f64,
    pub zero_share_benchmark: f64,
    pub zero_share_gap: f64,
    pub mean_check: MeanCheck,
    pub log_density: LogDensityTable,
}

pub struct StageRun {
    pub summary: StageBenchmark,
    pub draws: BenchmarkDraws,
    pub index: StratumIndex,
    pub portfolios: Vec<Portfolio>,
}

pub fn benchmark_stage(
    corpus: &Corpus,
    stage: Stage,
    config: &BenchmarkConfig,
    scope: PoolScope,
    density_bins: usize,
) -> CliResult<Option<StageRun>> {
    let portfolios: Vec<Portfolio> = corpus.portfolios.iter().filter(|p| p.stage == stage).cloned().collect();
    if portfolios.is_empty() {
        return Ok(None);
    }
    let pool: Vec<DealRecord> = match scope {
        PoolScope::AllDeals => corpus.deals.iter().filter(|d| d.stage == stage).cloned().collect(),
        PoolScope::PortfolioDeals => portfolios.iter().flat_map(|p| p.deals.iter().cloned()).collect(),
    };
    let index = index_strata(&pool)?;
    let draws = sample_parallel(&portfolios, &index, config)?;
    let pooled = resampler::pooled_samples(&portfolios, &draws)?;
    let zero_e = resampler::zero_share(&pooled.empirical)?;
    let zero_b = resampler::zero_share(&pooled.benchmark)?;
    let positive = pooled.empirical.iter().chain(&pooled.benchmark).copied().filter(|&x| x > 0.0);
    let (lo, hi) = positive.fold((f64::INFINITY, 0.0f64), |(lo, hi), x| (lo.min(x), hi.max(x)));
    let edges = if lo.is_finite() && hi > lo {
        resampler::log_bin_edges(lo, hi, density_bins)?
    } else {
        // no spread among positive values
        resampler::log_bin_edges(0.5, 2.0, density_bins)?
    };
    let summary = StageBenchmark {
        stage,
        investors: portfolios.iter().map(|p| p.investor_id.clone()).collect(),
        portfolio_sizes: portfolios.iter().map(|p| p.n).collect(),
        log_density: resampler::log_density_difference(&pooled.empirical, &pooled.benchmark, &edges)?,
        mean_check: resampler::mean_check(&portfolios, &draws)?,
        empirical: pooled.empirical,
        benchmark: pooled.benchmark,
        draws: config.draws,
        pool_size: index.total(),
        strata: index.stratum_count(),
        relaxed_deals: draws.relaxed_deals,
        zero_share_empirical: zero_e,
        zero_share_benchmark: zero_b,
        zero_share_gap: zero_e - zero_b,
    };
    Ok(Some(StageRun { summary, draws, index, portfolios }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSweeps {
    pub stage: Stage,
    pub unrestricted: KsResult,
    pub left_tail: KsSweep,
    pub right_tail: KsSweep,
}

pub fn stage_sweeps(b: &StageBenchmark, cfg: &RunConfig) -> CliResult<StageSweeps> {
    let thresholds = ks::default_thresholds(&b.empirical, &b.benchmark, cfg.ks.threshold_levels);
    Ok(StageSweeps {
        stage: b.stage,
        unrestricted: ks::ks_two_sample(&b.empirical, &b.benchmark)?,
        left_tail: ks::tail_sweep(&b.empirical, &b.benchmark, &thresholds, Side::LeftTail, cfg.ks.min_tail_n)?,
        right_tail: ks::tail_sweep(&b.empirical, &b.benchmark, &thresholds, Side::RightTail, cfg.ks.min_tail_n)?,
    })
}

pub fn tail_functions(b: &StageBenchmark, cfg: &RunConfig) -> CliResult<TailFunctions> {
    Ok(TailFunctions::estimate(&b.benchmark, b.empirical.len(), &cfg.rank.grid)?)
}

/// Per-rank z-scores, computed in parallel and assembled by rank.
pub fn rank_profile(b: &StageBenchmark, tf: &TailFunctions) -> CliResult<RankProfile> {
    let ranked = rankbench::rank_descending(&b.empirical);
    let moments: Vec<RankMoments> = (1..=ranked.len())
        .into_par_iter()
        .map(|k| rankbench::rank_density(tf, k).map(|rd| rankbench::rank_moments(&rd)))
        .collect::<Result<_, _>>()?;
    let ranks = ranked
        .iter()
        .zip(&moments)
        .enumerate()
        .map(|(i, (&observed, m))| rankbench::RankRecord {
            k: i + 1,
            mu: m.mean,
            sigma: m.sd,
            observed,
            z: (m.sd >= rankbench::DEFAULT_SIGMA_FLOOR).then(|| (observed - m.mean) / m.sd),
        })
        .collect();
    Ok(RankProfile { stage: Some(b.stage), ranks })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankDensityReport {
    pub stage: Stage,
    pub density: RankDensity,
    pub mean: f64,
    pub sd: f64,
    /// Observed multiple at this rank.
    pub observed: f64,
}

pub fn rank_density_report(profile: &RankProfile, tf: &TailFunctions, k: usize) -> CliResult<Option<RankDensityReport>> {
    let Some(rec) = profile.ranks.get(k.wrapping_sub(1)) else {
        return Ok(None);
    };
    let density = rankbench::rank_density(tf, k)?;
    Ok(Some(RankDensityReport { stage: profile.stage.unwrap_or(Stage::SeedToA), density, mean: rec.mu, sd: rec.sigma, observed: rec.observed }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub stage: Stage,
    pub k: usize,
    pub analytic_mean: f64,
    pub analytic_sd: f64,
    pub oracle: OracleMoments,
    /// `|analytic - oracle| / SE` for the mean and the SD.
    pub z_mean: Option<f64>,
    pub z_sd: Option<f64>,
}

pub fn oracle_table(b: &StageBenchmark, profile: &RankProfile, trials: usize, seed: u64) -> CliResult<Vec<OracleRow>> {
    let oracle = rankbench::rank_moments_oracle_all(&b.benchmark, b.empirical.len(), trials, seed)?;
    Ok(profile
        .ranks
        .iter()
        .zip(oracle)
        .map(|(r, o)| OracleRow {
            stage: b.stage,
            k: r.k,
            analytic_mean: r.mu,
            analytic_sd: r.sigma,
            z_mean: (o.se_mean > 0.0).then(|| (r.mu - o.mean).abs() / o.se_mean),
            z_sd: (o.se_sd > 0.0).then(|| (r.sigma - o.sd).abs() / o.se_sd),
            oracle: o,
        })
        .collect())
}

pub fn rescaled(profiles: &[RankProfile], bins: usize) -> CliResult<RescaledProfile> {
    let usable: Vec<RankProfile> = profiles.iter().filter(|p| p.n() >= 2).cloned().collect();
    Ok(rankbench::rescaled_profile(&usable, bins)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDistribution {
    pub horizon: u8,
    pub deltas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseComparison {
    pub empirical: Vec<f64>,
    pub benchmark: Vec<f64>,
    pub empirical_capped: usize,
    pub benchmark_capped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalystSweeps {
    pub error_left: KsSweep,
    pub error_right: KsSweep,
    pub inverse_left: KsSweep,
    pub inverse_right: KsSweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorCounts {
    pub kept: usize,
    pub excluded_small_realized: usize,
    pub excluded_firm_coverage: usize,
    pub dropped_firms: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalystRun {
    pub bias: BiasReport,
    pub errors: ErrorCounts,
    pub profiles: Vec<AnalystProfile>,
    pub dropped_profiles: usize,
    pub distributions: Vec<ErrorDistribution>,
    pub benchmark: ReshuffleBenchmark,
    pub inverse: InverseComparison,
    pub sweeps: AnalystSweeps,
}

pub fn run_analyst(records: &[analyst::ForecastRecord], cfg: &RunConfig, seed: u64) -> CliResult<AnalystRun> {
    let a = &cfg.analyst;
    let bias = analyst::consensus_bias(records);
    let errors = analyst::compute_errors(records, a.epsilon_floor, a.firm_coverage);
    let profiles = analyst::analyst_errors(&errors.records, a.analyst_coverage);
    if profiles.profiles.is_empty() {
        return Err(Failure::Runtime("no analyst passes the coverage floors".into()));
    }
    let layout = analyst::ReshuffleLayout::new(&errors.records, a.analyst_coverage);
    let sample: Vec<f64> =
        (0..a.draws).into_par_iter().map(|d| layout.draw_means(seed, d)).collect::<Vec<_>>().concat();
    let benchmark = ReshuffleBenchmark { draws: a.draws, seed, profiles: layout.keys.len(), sample };

    let mut per_h: BTreeMap<u8, Vec<f64>> = BTreeMap::new();
    for e in &errors.records {
        if a.report_horizons.contains(&e.horizon) {
            per_h.entry(e.horizon).or_default().push(e.delta);
        }
    }
    let distributions = per_h.into_iter().map(|(horizon, deltas)| ErrorDistribution { horizon, deltas }).collect();

    let empirical: Vec<f64> = profiles.profiles.iter().map(|p| p.mean_error).collect();
    let inv = |v: &[f64]| -> (Vec<f64>, usize) {
        let r: Vec<_> = v.iter().map(|&d| analyst::inverse_error(d, a.inverse_cap)).collect();
        (r.iter().map(|x| x.value).collect(), r.iter().filter(|x| x.capped).count())
    };
    let (ie, ce) = inv(&empirical);
    let (ib, cb) = inv(&benchmark.sample);
    let sweep = |e: &[f64], b: &[f64], side| -> CliResult<KsSweep> {
        let t = ks::default_thresholds(e, b, cfg.ks.threshold_levels);
        Ok(ks::tail_sweep(e, b, &t, side, cfg.ks.min_tail_n)?)
    };
    let sweeps = AnalystSweeps {
        error_left: sweep(&empirical, &benchmark.sample, Side::LeftTail)?,
        error_right: sweep(&empirical, &benchmark.sample, Side::RightTail)?,
        inverse_left: sweep(&ie, &ib, Side::LeftTail)?,
        inverse_right: sweep(&ie, &ib, Side::RightTail)?,
    };
    Ok(AnalystRun {
        bias,
        dropped_profiles: profiles.dropped,
        profiles: profiles.profiles,
        distributions,
        benchmark,
        inverse: InverseComparison { empirical: ie, benchmark: ib, empirical_capped: ce, benchmark_capped: cb },
        sweeps,
        errors: ErrorCounts {
            kept: errors.records.len(),
            excluded_small_realized: errors.excluded_small_realized,
            excluded_firm_coverage: errors.excluded_firm_coverage,
            dropped_firms: errors.dropped_firms,
        },
    })
}
