//! Synthetic deal corpora and forecast panels with known ground truth.
//!
//! Deals: each (year, sector, region) stratum holds a fixed number of
//! companies. A company has a latent quality `q ~ N(0,1)`; its outcome score
//! `u = r q + sqrt(1 - r²) e` is mapped through a Gaussian copula to a zero
//! atom of mass `p0` and a lognormal positive part. Investors pick companies
//! within a random stratum with weights `exp(s q)`; `s = 0` is uniform
//! selection. Every company also receives one deal from a single-deal
//! background investor, so the sampling pool covers the whole opportunity
//! set. Each requested stage is an independent copy of this design.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analyst::{ForecastRecord, MAX_HORIZON};
use crate::corpus::{DealRecord, Stage};
use crate::math;
use crate::rng::{derive_seed, substream, tag};
use crate::{Error, Result};

pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; 1 - u keeps the log argument in (0, 1]
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
}

/// Truncated discrete power law `P(n) ∝ n^-alpha` on `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLaw {
    pub min: usize,
    pub max: usize,
    pub alpha: f64,
}

impl PowerLaw {
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let weights: Vec<f64> = (self.min..=self.max).map(|n| libm::pow(n as f64, -self.alpha)).collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        for (i, w) in weights.iter().enumerate() {
            if u < *w {
                return self.min + i;
            }
            u -= w;
        }
        self.max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub seed: u64,
    pub investors: usize,
    pub deals_per_investor: PowerLaw,
    pub years: usize,
    pub sectors: usize,
    pub regions: usize,
    pub base_year: i32,
    /// Each company also gets one background deal, so a large value keeps
    /// investor deals a small share of the stratum pool.
    pub companies_per_stratum: usize,
    /// One independent corpus is generated per stage.
    pub stages: Vec<Stage>,
    pub p0: f64,
    pub mu: f64,
    pub sigma: f64,
    /// Selection tilt of skilled investors.
    pub skill: f64,
    /// Share of investors that select with the tilt; the rest select uniformly.
    pub skilled_fraction: f64,
    /// Correlation between latent quality and the outcome score.
    pub quality_correlation: f64,
    pub background_investors: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            investors: 300,
            deals_per_investor: PowerLaw { min: 2, max: 10, alpha: 2.0 },
            years: 4,
            sectors: 3,
            regions: 2,
            base_year: 2012,
            companies_per_stratum: 1000,
            stages: vec![Stage::SeedToA],
            p0: 0.18,
            mu: 0.0,
            sigma: 1.0,
            skill: 0.0,
            skilled_fraction: 1.0,
            quality_correlation: 0.8,
            background_investors: true,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(0.0..1.0).contains(&self.p0) {
            return bad("p0 must be in [0, 1)");
        }
        if !(self.sigma > 0.0) || !self.mu.is_finite() {
            return bad("sigma must be positive and mu finite");
        }
        if !(self.skill >= 0.0) || !self.skill.is_finite() {
            return bad("skill must be a finite non-negative number");
        }
        if !(0.0..=1.0).contains(&self.skilled_fraction) || !(-1.0..=1.0).contains(&self.quality_correlation) {
            return bad("skilled_fraction and quality_correlation must be in range");
        }
        let pl = &self.deals_per_investor;
        if pl.min == 0 || pl.max < pl.min || !pl.alpha.is_finite() {
            return bad("deals_per_investor needs 1 <= min <= max");
        }
        if self.years == 0 || self.sectors == 0 || self.regions == 0 || self.companies_per_stratum == 0 {
            return bad("strata layout must be non-empty");
        }
        if self.stages.is_empty() || (1..self.stages.len()).any(|i| self.stages[..i].contains(&self.stages[i])) {
            return bad("stages must be non-empty and distinct");
        }
        if pl.max > self.strata() * self.companies_per_stratum {
            return bad("an investor could request more deals than companies exist");
        }
        Ok(())
    }

    pub fn strata(&self) -> usize {
        self.years * self.sectors * self.regions
    }

    fn stratum_coords(&self, s: usize) -> (i32, String, String) {
        let r = s % self.regions;
        let sec = (s / self.regions) % self.sectors;
        let y = s / (self.regions * self.sectors);
        (self.base_year + y as i32, format!("sector{sec}"), format!("region{r}"))
    }
}

/// Deal row with the funding amounts behind its multiple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDeal {
    pub deal: DealRecord,
    pub amount_current: f64,
    pub amount_next: Option<f64>,
    pub months_to_next_round: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvestorTruth {
    pub investor_id: String,
    pub stage: Stage,
    pub skill: f64,
    pub deals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DealTruth {
    pub config: SynthConfig,
    pub companies: usize,
    pub investors: Vec<InvestorTruth>,
    /// Share of companies with a zero multiple.
    pub realized_zero_share: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub deals: Vec<SynthDeal>,
    pub truth: DealTruth,
}

impl SynthCorpus {
    pub fn deal_records(&self) -> Vec<DealRecord> {
        self.deals.iter().map(|d| d.deal.clone()).collect()
    }
}

struct Company {
    id: String,
    quality: f64,
    multiple: f64,
    amount_current: f64,
    months: u32,
}

fn outcome_multiple(u: f64, cfg: &SynthConfig) -> f64 {
    let p = math::normal_cdf(u);
    if p < cfg.p0 {
        return 0.0;
    }
    let v = ((p - cfg.p0) / (1.0 - cfg.p0)).clamp(1e-300, 1.0 - 1e-16);
    libm::exp(cfg.mu + cfg.sigma * math::normal_quantile(v))
}

pub fn generate_deals(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut deals = Vec::new();
    let mut investors = Vec::new();
    let mut zeros = 0;
    for (si, &stage) in cfg.stages.iter().enumerate() {
        let seed = derive_seed(cfg.seed, tag::SYNTH_OUTCOMES, &[si as u64]);
        zeros += generate_stage(cfg, stage, seed, &mut deals, &mut investors);
    }
    let companies = cfg.strata() * cfg.companies_per_stratum * cfg.stages.len();
    Ok(SynthCorpus {
        deals,
        truth: DealTruth {
            config: cfg.clone(),
            companies,
            investors,
            realized_zero_share: zeros as f64 / companies as f64,
        },
    })
}

/// Appends one stage's deals and investor truths; returns the zero-multiple
/// company count.
fn generate_stage(
    cfg: &SynthConfig,
    stage: Stage,
    seed: u64,
    deals: &mut Vec<SynthDeal>,
    truths: &mut Vec<InvestorTruth>,
) -> usize {
    let r = cfg.quality_correlation;
    let r_perp = libm::sqrt(1.0 - r * r);
    let strata: Vec<Vec<Company>> = (0..cfg.strata())
        .map(|s| {
            let mut rng = substream(seed, tag::SYNTH_OUTCOMES, s as u64, 0);
            (0..cfg.companies_per_stratum)
                .map(|j| {
                    let quality = standard_normal(&mut rng);
                    let u = r * quality + r_perp * standard_normal(&mut rng);
                    Company {
                        id: format!("{}_c{s}_{j}", stage.token()),
                        quality,
                        multiple: outcome_multiple(u, cfg),
                        amount_current: 1e6 * libm::exp(0.5 * standard_normal(&mut rng)),
                        months: rng.random_range(6..=36),
                    }
                })
                .collect()
        })
        .collect();
    let coords: Vec<(i32, String, String)> = (0..cfg.strata()).map(|s| cfg.stratum_coords(s)).collect();

    let make = |s: usize, c: &Company, investor: String| {
        let (year, sector, region) = coords[s].clone();
        let positive = c.multiple > 0.0;
        SynthDeal {
            deal: DealRecord { company_id: c.id.clone(), investor_id: investor, stage, year, sector, region, multiple: c.multiple },
            amount_current: c.amount_current,
            amount_next: positive.then(|| c.amount_current * c.multiple),
            months_to_next_round: positive.then_some(c.months),
        }
    };

    for i in 0..cfg.investors {
        let mut rng = substream(seed, tag::SYNTH_INVESTORS, i as u64, 0);
        let n = cfg.deals_per_investor.sample(&mut rng);
        let skilled = rng.random::<f64>() < cfg.skilled_fraction;
        let s_i = if skilled { cfg.skill } else { 0.0 };
        let id = format!("inv{i}");
        let mut chosen: Vec<(usize, usize)> = Vec::with_capacity(n);
        while chosen.len() < n {
            let s = rng.random_range(0..cfg.strata());
            let comps = &strata[s];
            let free: Vec<usize> = (0..comps.len()).filter(|j| !chosen.contains(&(s, *j))).collect();
            if free.is_empty() {
                continue;
            }
            let top = free.iter().map(|&j| comps[j].quality).fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = free.iter().map(|&j| libm::exp(s_i * (comps[j].quality - top))).collect();
            let mut u = rng.random::<f64>() * w.iter().sum::<f64>();
            let mut pick = *free.last().unwrap();
            for (&j, wj) in free.iter().zip(&w) {
                if u < *wj {
                    pick = j;
                    break;
                }
                u -= wj;
            }
            chosen.push((s, pick));
        }
        for &(s, j) in &chosen {
            deals.push(make(s, &strata[s][j], id.clone()));
        }
        truths.push(InvestorTruth { investor_id: id, stage, skill: s_i, deals: n });
    }
    if cfg.background_investors {
        for (s, comps) in strata.iter().enumerate() {
            for c in comps {
                deals.push(make(s, c, format!("bg_{}", c.id)));
            }
        }
    }
    strata.iter().flatten().filter(|c| c.multiple == 0.0).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForecastSynthConfig {
    pub seed: u64,
    pub analysts: usize,
    pub firms: usize,
    pub firms_per_analyst: usize,
    pub years: usize,
    pub base_year: i32,
    /// Realized earnings yield is `realized_scale * exp(realized_log_sd * z)`.
    pub realized_scale: f64,
    pub realized_log_sd: f64,
    pub noise: f64,
    /// Optimism at the longest horizon; bias is linear in the horizon.
    pub bias_slope: f64,
    pub skilled_fraction: f64,
    /// Error scale of skilled analysts relative to the rest.
    pub skill_scale: f64,
}

impl Default for ForecastSynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            analysts: 60,
            firms: 80,
            firms_per_analyst: 20,
            years: 3,
            base_year: 2015,
            realized_scale: 0.05,
            realized_log_sd: 0.3,
            noise: 0.01,
            bias_slope: 0.0,
            skilled_fraction: 0.0,
            skill_scale: 0.3,
        }
    }
}

impl ForecastSynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.analysts == 0 || self.firms == 0 || self.years == 0 {
            return Err(Error::InvalidConfig("panel dimensions must be positive".into()));
        }
        if self.firms_per_analyst == 0 || self.firms_per_analyst > self.firms {
            return Err(Error::InvalidConfig("firms_per_analyst must be in 1..=firms".into()));
        }
        if !(self.noise >= 0.0) || !(self.realized_scale > 0.0) || !(self.skill_scale >= 0.0) {
            return Err(Error::InvalidConfig("noise, realized_scale and skill_scale must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.skilled_fraction) {
            return Err(Error::InvalidConfig("skilled_fraction must be in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn bias(&self, horizon: u8) -> f64 {
        self.bias_slope * horizon as f64 / MAX_HORIZON as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalystTruth {
    pub analyst_id: String,
    pub error_scale: f64,
    pub skilled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastTruth {
    pub config: ForecastSynthConfig,
    pub analysts: Vec<AnalystTruth>,
    /// Planted bias at horizons 0..=11.
    pub bias_curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthPanel {
    pub records: Vec<ForecastRecord>,
    pub truth: ForecastTruth,
}

/// Every analyst covers a contiguous block of a shuffled firm list, so each
/// firm is followed by `analysts * firms_per_analyst / firms` analysts when
/// that divides evenly; every covered firm-year gets a forecast at all 12
/// horizons.
pub fn generate_forecasts(cfg: &ForecastSynthConfig) -> Result<SynthPanel> {
    use rand::seq::SliceRandom;
    cfg.validate()?;
    let mut rng = substream(cfg.seed, tag::SYNTH_FORECASTS, u64::MAX, 0);
    let mut order: Vec<usize> = (0..cfg.firms).collect();
    order.shuffle(&mut rng);
    let realized: Vec<Vec<f64>> = (0..cfg.firms)
        .map(|_| {
            (0..cfg.years).map(|_| cfg.realized_scale * libm::exp(cfg.realized_log_sd * standard_normal(&mut rng))).collect()
        })
        .collect();

    let mut analysts = Vec::with_capacity(cfg.analysts);
    let mut records = Vec::new();
    for a in 0..cfg.analysts {
        let mut rng = substream(cfg.seed, tag::SYNTH_FORECASTS, a as u64, 1);
        let skilled = rng.random::<f64>() < cfg.skilled_fraction;
        let scale = if skilled { cfg.skill_scale } else { 1.0 };
        let id = format!("an{a}");
        for j in 0..cfg.firms_per_analyst {
            let firm = order[(a * cfg.firms_per_analyst + j) % cfg.firms];
            for y in 0..cfg.years {
                let eps = realized[firm][y];
                for h in 0..=MAX_HORIZON {
                    let f = eps + cfg.bias(h) + cfg.noise * scale * standard_normal(&mut rng);
                    records.push(ForecastRecord {
                        analyst_id: id.clone(),
                        firm_id: format!("firm{firm}"),
                        year: cfg.base_year + y as i32,
                        horizon: h,
                        forecast: f,
                        realized: eps,
                    });
                }
            }
        }
        analysts.push(AnalystTruth { analyst_id: id, error_scale: scale, skilled });
    }
    let bias_curve = (0..=MAX_HORIZON).map(|h| cfg.bias(h)).collect();
    Ok(SynthPanel { records, truth: ForecastTruth { config: cfg.clone(), analysts, bias_curve } })
}
