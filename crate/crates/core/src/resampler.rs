//! Conditional random sampling benchmark.
//!
//! Every deal of every portfolio is replaced by a deal drawn uniformly, with
//! replacement, from the deals of the same (year, sector, region) stratum. The
//! mean of the replacements is one benchmark multiple for that investor.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{DealRecord, Portfolio, Stage};
use crate::math;
use crate::rng::{substream, tag};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StratumKey {
    pub year: i32,
    pub sector: String,
    pub region: String,
}

impl StratumKey {
    pub fn of(deal: &DealRecord) -> Self {
        Self { year: deal.year, sector: deal.sector.clone(), region: deal.region.clone() }
    }
}

impl fmt::Display for StratumKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.year, self.sector, self.region)
    }
}

/// What to do when a deal's stratum has no deals to sample from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackPolicy {
    #[default]
    Error,
    RelaxRegion,
    RelaxRegionThenSector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relaxation {
    None,
    Region,
    RegionAndSector,
}

/// One sampleable deal outcome. `stratum` indexes [`StratumIndex::keys`] and
/// records where the entry came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolEntry {
    pub multiple: f64,
    pub stratum: u32,
}

/// Sampling population per stratum, with the coarser keys used by the
/// fallback policies.
#[derive(Debug, Clone, Default)]
pub struct StratumIndex {
    keys: Vec<StratumKey>,
    full: BTreeMap<StratumKey, Vec<PoolEntry>>,
    by_year_sector: BTreeMap<(i32, String), Vec<PoolEntry>>,
    by_year: BTreeMap<i32, Vec<PoolEntry>>,
    total: usize,
}

/// Build the sampling population from `deals`, keeping multiplicity.
pub fn index_strata(deals: &[DealRecord]) -> Result<StratumIndex> {
    if deals.is_empty() {
        return Err(Error::EmptySample("no deals to index"));
    }
    let mut full: BTreeMap<StratumKey, Vec<f64>> = BTreeMap::new();
    for d in deals {
        full.entry(StratumKey::of(d)).or_default().push(d.multiple);
    }
    let mut index = StratumIndex { total: deals.len(), ..StratumIndex::default() };
    for (id, (key, multiples)) in full.into_iter().enumerate() {
        let entries: Vec<PoolEntry> =
            multiples.into_iter().map(|multiple| PoolEntry { multiple, stratum: id as u32 }).collect();
        index
            .by_year_sector
            .entry((key.year, key.sector.clone()))
            .or_default()
            .extend_from_slice(&entries);
        index.by_year.entry(key.year).or_default().extend_from_slice(&entries);
        index.keys.push(key.clone());
        index.full.insert(key, entries);
    }
    Ok(index)
}

impl StratumIndex {
    pub fn keys(&self) -> &[StratumKey] {
        &self.keys
    }

    pub fn stratum(&self, key: &StratumKey) -> Option<&[PoolEntry]> {
        self.full.get(key).map(Vec::as_slice)
    }

    pub fn stratum_count(&self) -> usize {
        self.full.len()
    }

    /// Total number of indexed deals.
    pub fn total(&self) -> usize {
        self.total
    }

    /// Population to sample a replacement for a deal with `key` from.
    pub fn lookup(&self, key: &StratumKey, policy: FallbackPolicy) -> Result<(&[PoolEntry], Relaxation)> {
        if let Some(p) = self.full.get(key) {
            return Ok((p, Relaxation::None));
        }
        if matches!(policy, FallbackPolicy::RelaxRegion | FallbackPolicy::RelaxRegionThenSector) {
            if let Some(p) = self.by_year_sector.get(&(key.year, key.sector.clone())) {
                return Ok((p, Relaxation::Region));
            }
        }
        if policy == FallbackPolicy::RelaxRegionThenSector {
            if let Some(p) = self.by_year.get(&key.year) {
                return Ok((p, Relaxation::RegionAndSector));
            }
        }
        Err(Error::EmptyStratum(key.to_string()))
    }

    /// Whether `entry` is an admissible replacement for a deal in `key` under
    /// the given relaxation level.
    pub fn admissible(&self, entry: &PoolEntry, key: &StratumKey, relaxation: Relaxation) -> bool {
        let Some(src) = self.keys.get(entry.stratum as usize) else {
            return false;
        };
        match relaxation {
            Relaxation::None => src == key,
            Relaxation::Region => src.year == key.year && src.sector == key.sector,
            Relaxation::RegionAndSector => src.year == key.year,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub draws: usize,
    pub seed: u64,
    pub fallback: FallbackPolicy,
}

pub const DEFAULT_DRAWS: usize = 1000;

impl BenchmarkConfig {
    pub fn new(seed: u64) -> Self {
        Self { draws: DEFAULT_DRAWS, seed, fallback: FallbackPolicy::Error }
    }

    pub fn with_draws(mut self, draws: usize) -> Self {
        self.draws = draws;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.draws == 0 {
            return Err(Error::InvalidConfig("draws must be at least 1".into()));
        }
        Ok(())
    }
}

/// A portfolio with every deal's sampling population looked up once.
#[derive(Debug, Clone)]
pub struct ResolvedPortfolio<'a> {
    pub keys: Vec<StratumKey>,
    pub pools: Vec<&'a [PoolEntry]>,
    pub relaxations: Vec<Relaxation>,
}

impl ResolvedPortfolio<'_> {
    pub fn relaxed_count(&self) -> usize {
        self.relaxations.iter().filter(|r| **r != Relaxation::None).count()
    }
}

pub fn resolve<'a>(
    portfolio: &Portfolio,
    index: &'a StratumIndex,
    policy: FallbackPolicy,
) -> Result<ResolvedPortfolio<'a>> {
    let mut out = ResolvedPortfolio {
        keys: Vec::with_capacity(portfolio.n),
        pools: Vec::with_capacity(portfolio.n),
        relaxations: Vec::with_capacity(portfolio.n),
    };
    for d in &portfolio.deals {
        let key = StratumKey::of(d);
        let (pool, relax) = index.lookup(&key, policy)?;
        out.keys.push(key);
        out.pools.push(pool);
        out.relaxations.push(relax);
    }
    Ok(out)
}

fn draw_with<F: FnMut(&PoolEntry)>(resolved: &ResolvedPortfolio<'_>, seed: u64, investor: usize, draw: usize, mut visit: F) -> f64 {
    let mut rng = substream(seed, tag::BENCHMARK, investor as u64, draw as u64);
    let mut sum = 0.0;
    for pool in &resolved.pools {
        let e = &pool[rng.random_range(0..pool.len())];
        visit(e);
        sum += e.multiple;
    }
    sum / resolved.pools.len() as f64
}

/// One benchmark multiple for investor ordinal `investor` in draw `draw`.
pub fn draw_mean(resolved: &ResolvedPortfolio<'_>, seed: u64, investor: usize, draw: usize) -> f64 {
    draw_with(resolved, seed, investor, draw, |_| {})
}

/// Same as [`draw_mean`] but also returns the sampled entries, in deal order.
pub fn draw_traced(
    resolved: &ResolvedPortfolio<'_>,
    seed: u64,
    investor: usize,
    draw: usize,
) -> (f64, Vec<PoolEntry>) {
    let mut picked = Vec::with_capacity(resolved.pools.len());
    let m = draw_with(resolved, seed, investor, draw, |e| picked.push(*e));
    (m, picked)
}

/// All draws for one investor.
pub fn sample_investor(resolved: &ResolvedPortfolio<'_>, config: &BenchmarkConfig, investor: usize) -> Vec<f64> {
    (0..config.draws).map(|d| draw_mean(resolved, config.seed, investor, d)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvestorDraws {
    pub investor_id: String,
    pub stage: Stage,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkDraws {
    pub config: BenchmarkConfig,
    pub investors: Vec<InvestorDraws>,
    /// Portfolio deals whose stratum had to be relaxed.
    pub relaxed_deals: usize,
}

/// Resolve every portfolio against `index`, counting relaxed lookups.
pub fn resolve_all<'a>(
    portfolios: &[Portfolio],
    index: &'a StratumIndex,
    policy: FallbackPolicy,
) -> Result<Vec<ResolvedPortfolio<'a>>> {
    portfolios.iter().map(|p| resolve(p, index, policy)).collect()
}

/// Assemble per-investor draw vectors (in portfolio order) into a result.
pub fn assemble(
    portfolios: &[Portfolio],
    resolved: &[ResolvedPortfolio<'_>],
    config: &BenchmarkConfig,
    values: Vec<Vec<f64>>,
) -> BenchmarkDraws {
    let investors = portfolios
        .iter()
        .zip(values)
        .map(|(p, values)| InvestorDraws { investor_id: p.investor_id.clone(), stage: p.stage, values })
        .collect();
    BenchmarkDraws {
        config: config.clone(),
        investors,
        relaxed_deals: resolved.iter().map(ResolvedPortfolio::relaxed_count).sum(),
    }
}

/// Sequential benchmark sampling. Results depend only on the seed and on the
/// order of portfolios and of their deals.
pub fn sample_benchmark(
    portfolios: &[Portfolio],
    index: &StratumIndex,
    config: &BenchmarkConfig,
) -> Result<BenchmarkDraws> {
    config.validate()?;
    let resolved = resolve_all(portfolios, index, config.fallback)?;
    let values = resolved.iter().enumerate().map(|(i, r)| sample_investor(r, config, i)).collect();
    Ok(assemble(portfolios, &resolved, config, values))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledSamples {
    /// One portfolio multiple per investor.
    pub empirical: Vec<f64>,
    /// Every benchmark multiple of every investor and draw.
    pub benchmark: Vec<f64>,
}

pub fn pooled_samples(portfolios: &[Portfolio], draws: &BenchmarkDraws) -> Result<PooledSamples> {
    if portfolios.len() != draws.investors.len() {
        return Err(Error::SizeMismatch { expected: portfolios.len(), got: draws.investors.len() });
    }
    let empirical = portfolios.iter().map(|p| p.mean_multiple).collect();
    let benchmark = draws.investors.iter().flat_map(|i| i.values.iter().copied()).collect();
    Ok(PooledSamples { empirical, benchmark })
}

/// Fraction of entries exactly equal to zero.
pub fn zero_share(sample: &[f64]) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample("zero share of an empty sample"));
    }
    Ok(sample.iter().filter(|&&x| x == 0.0).count() as f64 / sample.len() as f64)
}

/// Empirical mean against the benchmark distribution of the cross-investor
/// mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanCheck {
    pub empirical_mean: f64,
    /// Mean over all investors and draws.
    pub benchmark_mean: f64,
    /// Standard deviation across draws of the per-draw cross-investor mean.
    pub standard_error: f64,
    /// `(empirical - benchmark) / standard_error`, or 0 when both agree exactly.
    pub z: f64,
}

pub fn mean_check(portfolios: &[Portfolio], draws: &BenchmarkDraws) -> Result<MeanCheck> {
    if portfolios.is_empty() {
        return Err(Error::EmptySample("no portfolios"));
    }
    let p = draws.investors.len() as f64;
    let per_draw: Vec<f64> = (0..draws.config.draws)
        .map(|d| draws.investors.iter().map(|i| i.values[d]).sum::<f64>() / p)
        .collect();
    let empirical_mean = math::mean(&portfolios.iter().map(|p| p.mean_multiple).collect::<Vec<_>>());
    let benchmark_mean = math::mean(&per_draw);
    let standard_error = libm::sqrt(math::sample_variance(&per_draw));
    let diff = empirical_mean - benchmark_mean;
    let z = if diff == 0.0 { 0.0 } else { diff / standard_error };
    Ok(MeanCheck { empirical_mean, benchmark_mean, standard_error, z })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroBin {
    pub empirical: f64,
    pub benchmark: f64,
    pub delta: f64,
}

/// Binned log-density difference between two samples of multiples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogDensityTable {
    pub edges: Vec<f64>,
    /// Fraction of the empirical sample in each bin.
    pub empirical: Vec<f64>,
    pub benchmark: Vec<f64>,
    /// `ln(p_emp + eps) - ln(p_bench + eps)` per bin.
    pub delta: Vec<f64>,
    pub zero: ZeroBin,
    pub eps: f64,
    /// Positive values below the first / above the last edge, as fractions.
    pub below_range: (f64, f64),
    pub above_range: (f64, f64),
}

/// Log-spaced edges from `lo` to `hi` (both positive).
pub fn log_bin_edges(lo: f64, hi: f64, bins: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0) || !(hi > lo) || bins == 0 {
        return Err(Error::InvalidBinEdges);
    }
    let (a, b) = (libm::log(lo), libm::log(hi));
    Ok((0..=bins).map(|j| libm::exp(a + (b - a) * j as f64 / bins as f64)).collect())
}

pub fn log_density_difference(empirical: &[f64], benchmark: &[f64], edges: &[f64]) -> Result<LogDensityTable> {
    let eps = 1.0 / (10.0 * empirical.len().max(benchmark.len()).max(1) as f64);
    log_density_difference_with_eps(empirical, benchmark, edges, eps)
}

pub fn log_density_difference_with_eps(
    empirical: &[f64],
    benchmark: &[f64],
    edges: &[f64],
    eps: f64,
) -> Result<LogDensityTable> {
    if empirical.is_empty() || benchmark.is_empty() {
        return Err(Error::EmptySample("log-density difference"));
    }
    if edges.len() < 2 || edges[0] <= 0.0 || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidBinEdges);
    }
    struct Binned {
        mass: Vec<f64>,
        zero: f64,
        below: f64,
        above: f64,
    }
    let bin = |xs: &[f64]| {
        let nb = edges.len() - 1;
        let mut counts = alloc::vec![0usize; nb];
        let (mut zero, mut below, mut above) = (0usize, 0usize, 0usize);
        let last = edges[nb];
        for &x in xs {
            if x == 0.0 {
                zero += 1;
            } else if x < edges[0] {
                below += 1;
            } else if x > last {
                above += 1;
            } else {
                // right-closed last bin
                let j = edges.partition_point(|e| *e <= x).saturating_sub(1).min(nb - 1);
                counts[j] += 1;
            }
        }
        let n = xs.len() as f64;
        Binned {
            mass: counts.into_iter().map(|c| c as f64 / n).collect(),
            zero: zero as f64 / n,
            below: below as f64 / n,
            above: above as f64 / n,
        }
    };
    let e = bin(empirical);
    let b = bin(benchmark);
    let ld = |p: f64, q: f64| libm::log(p + eps) - libm::log(q + eps);
    Ok(LogDensityTable {
        edges: edges.to_vec(),
        delta: e.mass.iter().zip(&b.mass).map(|(p, q)| ld(*p, *q)).collect(),
        empirical: e.mass,
        benchmark: b.mass,
        zero: ZeroBin { empirical: e.zero, benchmark: b.zero, delta: ld(e.zero, b.zero) },
        eps,
        below_range: (e.below, b.below),
        above_range: (e.above, b.above),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn deal(company: &str, investor: &str, year: i32, sector: &str, multiple: f64) -> DealRecord {
        DealRecord {
            company_id: company.into(),
            investor_id: investor.into(),
            stage: Stage::AToB,
            year,
            sector: sector.into(),
            region: "US".into(),
            multiple,
        }
    }

    #[test]
    fn strata_group_and_separate() {
        let deals = [deal("a", "i", 2015, "Tech", 1.0), deal("b", "j", 2015, "Tech", 2.0)];
        let idx = index_strata(&deals).unwrap();
        assert_eq!(idx.stratum_count(), 1);
        assert_eq!(idx.stratum(&StratumKey::of(&deals[0])).unwrap().len(), 2);

        let deals = [deal("a", "i", 2015, "Tech", 1.0), deal("b", "j", 2016, "Tech", 2.0)];
        let idx = index_strata(&deals).unwrap();
        assert_eq!(idx.stratum_count(), 2);
        assert_eq!(idx.total(), 2);
        assert!(index_strata(&[]).is_err());
    }

    #[test]
    fn singleton_strata_reproduce_empirical() {
        let deals = [deal("a", "i", 2015, "Tech", 1.5), deal("b", "i", 2016, "Tech", 4.0)];
        let ps = crate::corpus::build_portfolios(&deals, 2);
        let idx = index_strata(&deals).unwrap();
        let bd = sample_benchmark(&ps, &idx, &BenchmarkConfig::new(7).with_draws(50)).unwrap();
        assert!(bd.investors[0].values.iter().all(|&v| v == ps[0].mean_multiple));
    }

    #[test]
    fn two_point_stratum_is_fair() {
        // stratum {0, 4}; a one-deal portfolio
        let deals = [deal("a", "i", 2015, "Tech", 0.0), deal("b", "j", 2015, "Tech", 4.0)];
        let ps = crate::corpus::build_portfolios(&deals[..1], 1);
        let idx = index_strata(&deals).unwrap();
        let bd = sample_benchmark(&ps, &idx, &BenchmarkConfig::new(11)).unwrap();
        let v = &bd.investors[0].values;
        assert!(v.iter().all(|&x| x == 0.0 || x == 4.0));
        let share = v.iter().filter(|&&x| x == 4.0).count() as f64 / v.len() as f64;
        // binomial(1000, 1/2): 3 sigma is 0.047
        assert!((share - 0.5).abs() <= 0.05, "share {share}");
    }

    #[test]
    fn fallback_policies() {
        let pool = [deal("a", "i", 2015, "Tech", 1.0), deal("b", "i", 2015, "Health", 3.0)];
        let idx = index_strata(&pool).unwrap();
        let mut missing = deal("z", "k", 2015, "Tech", 0.0);
        missing.region = "EU".into();
        let key = StratumKey::of(&missing);
        assert!(matches!(idx.lookup(&key, FallbackPolicy::Error), Err(Error::EmptyStratum(_))));
        let (p, r) = idx.lookup(&key, FallbackPolicy::RelaxRegion).unwrap();
        assert_eq!((p.len(), r), (1, Relaxation::Region));

        missing.sector = "Energy".into();
        let key = StratumKey::of(&missing);
        assert!(idx.lookup(&key, FallbackPolicy::RelaxRegion).is_err());
        let (p, r) = idx.lookup(&key, FallbackPolicy::RelaxRegionThenSector).unwrap();
        assert_eq!((p.len(), r), (2, Relaxation::RegionAndSector));
        assert!(p.iter().all(|e| idx.admissible(e, &key, r)));

        let ps = crate::corpus::build_portfolios(&[missing.clone(), missing], 1);
        let cfg = BenchmarkConfig { draws: 3, seed: 1, fallback: FallbackPolicy::RelaxRegionThenSector };
        let bd = sample_benchmark(&ps, &idx, &cfg).unwrap();
        assert_eq!(bd.relaxed_deals, 2);
    }

    #[test]
    fn pooled_sizes() {
        let deals = [
            deal("a", "i", 2015, "Tech", 1.0),
            deal("b", "i", 2015, "Tech", 0.0),
            deal("a", "j", 2015, "Tech", 1.0),
            deal("c", "j", 2015, "Tech", 5.0),
            deal("d", "k", 2015, "Tech", 2.0),
            deal("e", "k", 2015, "Tech", 2.0),
        ];
        let ps = crate::corpus::build_portfolios(&deals, 2);
        let idx = index_strata(&deals).unwrap();
        let bd = sample_benchmark(&ps, &idx, &BenchmarkConfig::new(3).with_draws(2)).unwrap();
        let pooled = pooled_samples(&ps, &bd).unwrap();
        assert_eq!(pooled.benchmark.len(), 6);
        assert_eq!(pooled.empirical.len(), 3);
        assert!(sample_benchmark(&ps, &idx, &BenchmarkConfig::new(3).with_draws(0)).is_err());
    }

    #[test]
    fn zero_share_examples() {
        assert_eq!(zero_share(&[0.0, 1.0, 2.0, 0.0]).unwrap(), 0.5);
        assert_eq!(zero_share(&[0.5, 1.0]).unwrap(), 0.0);
        assert!(zero_share(&[]).is_err());
        let mut planted = vec![1.0; 100];
        planted[..18].iter_mut().for_each(|x| *x = 0.0);
        assert_eq!(zero_share(&planted).unwrap(), 0.18);
    }

    #[test]
    fn log_density_examples() {
        let edges = log_bin_edges(0.1, 10.0, 4).unwrap();
        let s = [0.0, 0.2, 0.5, 1.0, 3.0, 9.0];
        let t = log_density_difference(&s, &s, &edges).unwrap();
        assert!(t.delta.iter().all(|&d| d == 0.0));
        assert_eq!(t.zero.delta, 0.0);

        // empirical puts twice the benchmark mass into the first bin
        let emp = [0.15, 0.15, 5.0, 5.0];
        let bench = [0.15, 5.0, 5.0, 5.0];
        let t = log_density_difference_with_eps(&emp, &bench, &edges, 1e-12).unwrap();
        assert!((t.delta[0] - libm::log(2.0)).abs() < 1e-9);

        // benchmark with twice the zero share
        let emp = [0.0, 1.0, 1.0, 1.0];
        let bench = [0.0, 0.0, 1.0, 1.0];
        let t = log_density_difference(&emp, &bench, &edges).unwrap();
        assert!(t.zero.delta < 0.0);

        assert!(log_density_difference(&[], &bench, &edges).is_err());
        assert!(log_density_difference(&emp, &bench, &[1.0, 1.0]).is_err());
    }
}
