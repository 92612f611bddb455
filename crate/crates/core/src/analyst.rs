//! Analyst forecasts: consensus bias, relative prediction errors and a
//! reshuffling benchmark that permutes errors among the analysts covering the
//! same firm, year and horizon.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::ks::{self, KsSweep, Side};
use crate::math;
use crate::rng::{substream, tag};
use crate::{Error, Result};

pub const MAX_HORIZON: u8 = 11;
pub const DEFAULT_EPSILON_FLOOR: f64 = 1e-4;
pub const DEFAULT_ANALYST_COVERAGE: usize = 10;
pub const DEFAULT_FIRM_COVERAGE: usize = 10;
pub const DEFAULT_INVERSE_CAP: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub analyst_id: String,
    pub firm_id: String,
    pub year: i32,
    /// Months before the fiscal year end.
    pub horizon: u8,
    pub forecast: f64,
    pub realized: f64,
}

impl ForecastRecord {
    pub fn validate(&self) -> Result<()> {
        if self.horizon > MAX_HORIZON {
            return Err(Error::InvalidConfig(alloc::format!("horizon {} outside 0..=11", self.horizon)));
        }
        if !self.forecast.is_finite() || !self.realized.is_finite() {
            return Err(Error::InvalidConfig("forecast and realized must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRecord {
    pub firm_id: String,
    pub year: i32,
    pub horizon: u8,
    pub analysts: usize,
    pub consensus: f64,
    pub realized: f64,
    /// Consensus minus realized; positive means optimistic.
    pub bias: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonBias {
    pub horizon: u8,
    pub count: usize,
    pub mean_bias: f64,
    pub se: f64,
    pub mean_abs_bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub records: Vec<BiasRecord>,
    pub by_horizon: Vec<HorizonBias>,
    pub mean_abs_bias: f64,
}

/// Consensus bias per (firm, year, horizon). The realized value of a group is
/// taken from its first record.
pub fn consensus_bias(records: &[ForecastRecord]) -> BiasReport {
    let mut groups: BTreeMap<(&str, i32, u8), (f64, usize, f64)> = BTreeMap::new();
    for r in records {
        let e = groups.entry((r.firm_id.as_str(), r.year, r.horizon)).or_insert((0.0, 0, r.realized));
        e.0 += r.forecast;
        e.1 += 1;
    }
    let recs: Vec<BiasRecord> = groups
        .into_iter()
        .map(|((firm, year, horizon), (sum, n, realized))| {
            let consensus = sum / n as f64;
            BiasRecord {
                firm_id: firm.into(),
                year,
                horizon,
                analysts: n,
                consensus,
                realized,
                bias: consensus - realized,
            }
        })
        .collect();

    let mut per_h: BTreeMap<u8, Vec<f64>> = BTreeMap::new();
    for r in &recs {
        per_h.entry(r.horizon).or_default().push(r.bias);
    }
    let by_horizon = per_h
        .into_iter()
        .map(|(horizon, b)| {
            let abs: Vec<f64> = b.iter().map(|x| x.abs()).collect();
            HorizonBias {
                horizon,
                count: b.len(),
                mean_bias: math::mean(&b),
                se: libm::sqrt(math::sample_variance(&b) / b.len() as f64),
                mean_abs_bias: math::mean(&abs),
            }
        })
        .collect();
    let abs: Vec<f64> = recs.iter().map(|r| r.bias.abs()).collect();
    let mean_abs_bias = if abs.is_empty() { 0.0 } else { math::mean(&abs) };
    BiasReport { records: recs, by_horizon, mean_abs_bias }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub analyst_id: String,
    pub firm_id: String,
    pub year: i32,
    pub horizon: u8,
    pub delta: f64,
}

/// `|f - ε| / |ε|`, or `None` when `|ε|` is below the floor.
pub fn prediction_error(r: &ForecastRecord, epsilon_floor: f64) -> Option<ErrorRecord> {
    let denom = r.realized.abs();
    (denom >= epsilon_floor).then(|| ErrorRecord {
        analyst_id: r.analyst_id.clone(),
        firm_id: r.firm_id.clone(),
        year: r.year,
        horizon: r.horizon,
        delta: (r.forecast - r.realized).abs() / denom,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSet {
    pub records: Vec<ErrorRecord>,
    pub excluded_small_realized: usize,
    pub excluded_firm_coverage: usize,
    pub dropped_firms: usize,
}

/// Errors for every record, restricted to firms followed by at least
/// `firm_coverage` distinct analysts.
pub fn compute_errors(records: &[ForecastRecord], epsilon_floor: f64, firm_coverage: usize) -> ErrorSet {
    let all: Vec<ErrorRecord> = records.iter().filter_map(|r| prediction_error(r, epsilon_floor)).collect();
    let excluded_small_realized = records.len() - all.len();

    let mut analysts: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for e in &all {
        analysts.entry(e.firm_id.as_str()).or_default().insert(e.analyst_id.as_str());
    }
    let keep: BTreeSet<String> =
        analysts.iter().filter(|(_, a)| a.len() >= firm_coverage).map(|(f, _)| String::from(*f)).collect();
    let dropped_firms = analysts.len() - keep.len();
    let before = all.len();
    let kept: Vec<ErrorRecord> = all.into_iter().filter(|e| keep.contains(&e.firm_id)).collect();
    ErrorSet { excluded_firm_coverage: before - kept.len(), records: kept, excluded_small_realized, dropped_firms }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalystProfile {
    pub analyst_id: String,
    pub horizon: u8,
    pub mean_error: f64,
    /// Distinct firms covered at this horizon.
    pub n_firms: usize,
    pub n_obs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalystErrors {
    pub profiles: Vec<AnalystProfile>,
    pub dropped: usize,
}

/// Mean error per (analyst, horizon) for analysts covering at least
/// `coverage_floor` firms.
pub fn analyst_errors(errors: &[ErrorRecord], coverage_floor: usize) -> AnalystErrors {
    let mut acc: BTreeMap<(&str, u8), (f64, usize, BTreeSet<&str>)> = BTreeMap::new();
    for e in errors {
        let a = acc.entry((e.analyst_id.as_str(), e.horizon)).or_default();
        a.0 += e.delta;
        a.1 += 1;
        a.2.insert(e.firm_id.as_str());
    }
    let total = acc.len();
    let profiles: Vec<AnalystProfile> = acc
        .into_iter()
        .filter(|(_, a)| a.2.len() >= coverage_floor)
        .map(|((id, horizon), (sum, n, firms))| AnalystProfile {
            analyst_id: id.into(),
            horizon,
            mean_error: sum / n as f64,
            n_firms: firms.len(),
            n_obs: n,
        })
        .collect();
    AnalystErrors { dropped: total - profiles.len(), profiles }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseError {
    pub value: f64,
    pub capped: bool,
}

pub fn inverse_error(delta: f64, cap: f64) -> InverseError {
    if delta <= 0.0 || 1.0 / delta > cap {
        InverseError { value: cap, capped: true }
    } else {
        InverseError { value: 1.0 / delta, capped: false }
    }
}

/// Errors grouped by (firm, year, horizon), with each slot remembering the
/// (analyst, horizon) profile it feeds.
#[derive(Debug, Clone)]
pub struct ReshuffleLayout {
    pub keys: Vec<(String, u8)>,
    groups: Vec<(Vec<Option<u32>>, Vec<f64>)>,
    counts: Vec<usize>,
}

impl ReshuffleLayout {
    pub fn new(errors: &[ErrorRecord], coverage_floor: usize) -> Self {
        let profiles = analyst_errors(errors, coverage_floor);
        let index: BTreeMap<(&str, u8), u32> = profiles
            .profiles
            .iter()
            .enumerate()
            .map(|(i, p)| ((p.analyst_id.as_str(), p.horizon), i as u32))
            .collect();
        let mut grouped: BTreeMap<(&str, i32, u8), (Vec<Option<u32>>, Vec<f64>)> = BTreeMap::new();
        for e in errors {
            let g = grouped.entry((e.firm_id.as_str(), e.year, e.horizon)).or_default();
            g.0.push(index.get(&(e.analyst_id.as_str(), e.horizon)).copied());
            g.1.push(e.delta);
        }
        let mut counts = alloc::vec![0usize; index.len()];
        for (slots, _) in grouped.values() {
            for s in slots.iter().flatten() {
                counts[*s as usize] += 1;
            }
        }
        let keys = profiles.profiles.iter().map(|p| (p.analyst_id.clone(), p.horizon)).collect();
        Self { keys, groups: grouped.into_values().collect(), counts }
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    /// Errors of group `g` in slot order, before reshuffling.
    pub fn group_values(&self, g: usize) -> &[f64] {
        &self.groups[g].1
    }

    /// Group `g` permuted for `draw`.
    pub fn shuffled_group(&self, seed: u64, g: usize, draw: usize) -> Vec<f64> {
        let mut v = self.groups[g].1.clone();
        if v.len() > 1 {
            v.shuffle(&mut substream(seed, tag::RESHUFFLE, g as u64, draw as u64));
        }
        v
    }

    /// Profile means after reshuffling every group for `draw`.
    pub fn draw_means(&self, seed: u64, draw: usize) -> Vec<f64> {
        let mut sums = alloc::vec![0.0; self.keys.len()];
        for g in 0..self.groups.len() {
            let vals = self.shuffled_group(seed, g, draw);
            for (slot, v) in self.groups[g].0.iter().zip(&vals) {
                if let Some(s) = slot {
                    sums[*s as usize] += v;
                }
            }
        }
        sums.iter().zip(&self.counts).map(|(s, &n)| s / n as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReshuffleBenchmark {
    pub draws: usize,
    pub seed: u64,
    pub profiles: usize,
    /// Profile means pooled over draws, draw-major.
    pub sample: Vec<f64>,
}

pub fn reshuffle_benchmark(errors: &[ErrorRecord], coverage_floor: usize, draws: usize, seed: u64) -> Result<ReshuffleBenchmark> {
    if draws == 0 {
        return Err(Error::InvalidConfig("draws must be at least 1".into()));
    }
    let layout = ReshuffleLayout::new(errors, coverage_floor);
    let sample = (0..draws).flat_map(|d| layout.draw_means(seed, d)).collect();
    Ok(ReshuffleBenchmark { draws, seed, profiles: layout.keys.len(), sample })
}

/// Tail sweep of empirical against benchmark analyst errors. With `inverse`
/// both samples are mapped through the capped inverse first.
pub fn analyst_ks_report(
    empirical: &[f64],
    benchmark: &[f64],
    thresholds: Option<&[f64]>,
    side: Side,
    min_tail_n: usize,
    inverse: Option<f64>,
) -> Result<KsSweep> {
    let map = |v: &[f64]| -> Vec<f64> {
        match inverse {
            Some(cap) => v.iter().map(|&d| inverse_error(d, cap).value).collect(),
            None => v.to_vec(),
        }
    };
    let (a, b) = (map(empirical), map(benchmark));
    let grid = match thresholds {
        Some(t) => t.to_vec(),
        None => ks::default_thresholds(&a, &b, ks::DEFAULT_THRESHOLD_LEVELS),
    };
    ks::tail_sweep(&a, &b, &grid, side, min_tail_n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;

    fn rec(a: &str, f: &str, h: u8, forecast: f64, realized: f64) -> ForecastRecord {
        ForecastRecord { analyst_id: a.into(), firm_id: f.into(), year: 2015, horizon: h, forecast, realized }
    }

    #[test]
    fn bias_sign_convention() {
        let r = consensus_bias(&[rec("a", "x", 3, 0.02, 0.01), rec("b", "x", 3, 0.04, 0.01)]);
        assert_eq!(r.records.len(), 1);
        assert!((r.records[0].consensus - 0.03).abs() < 1e-15);
        assert!((r.records[0].bias - 0.02).abs() < 1e-15);
        let r = consensus_bias(&[rec("a", "x", 0, 0.05, 0.05)]);
        assert_eq!(r.records[0].bias, 0.0);
    }

    #[test]
    fn error_arithmetic_and_floor() {
        let e = prediction_error(&rec("a", "x", 0, 0.03, 0.02), DEFAULT_EPSILON_FLOOR).unwrap();
        assert!((e.delta - 0.5).abs() < 1e-12);
        assert_eq!(prediction_error(&rec("a", "x", 0, 0.02, 0.02), 1e-4).unwrap().delta, 0.0);
        assert!(prediction_error(&rec("a", "x", 0, 0.02, 1e-6), 1e-4).is_none());
        // losses use |ε|
        let e = prediction_error(&rec("a", "x", 0, -0.01, -0.02), 1e-4).unwrap();
        assert!((e.delta - 0.5).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        assert!(rec("a", "x", 12, 0.0, 1.0).validate().is_err());
        assert!(rec("a", "x", 11, f64::NAN, 1.0).validate().is_err());
        assert!(rec("a", "x", 11, 0.0, 1.0).validate().is_ok());
    }

    #[test]
    fn aggregation_and_coverage() {
        let errs = vec![
            ErrorRecord { analyst_id: "a".into(), firm_id: "x".into(), year: 1, horizon: 0, delta: 0.0 },
            ErrorRecord { analyst_id: "a".into(), firm_id: "y".into(), year: 1, horizon: 0, delta: 1.0 },
            ErrorRecord { analyst_id: "b".into(), firm_id: "x".into(), year: 1, horizon: 0, delta: 2.0 },
        ];
        let p = analyst_errors(&errs, 1);
        assert_eq!(p.profiles[0].mean_error, 0.5);
        let p = analyst_errors(&errs, 2);
        assert_eq!((p.profiles.len(), p.dropped), (1, 1));
        assert_eq!(analyst_errors(&errs, 10).profiles.len(), 0);
    }

    #[test]
    fn firm_floor_drops_thin_firms() {
        let mut recs: Vec<ForecastRecord> = (0..10).map(|a| rec(&format!("a{a}"), "big", 0, 0.03, 0.02)).collect();
        recs.push(rec("a0", "small", 0, 0.03, 0.02));
        recs.push(rec("a0", "zero", 0, 0.03, 0.0));
        let s = compute_errors(&recs, 1e-4, 10);
        assert_eq!(s.records.len(), 10);
        assert_eq!(s.excluded_small_realized, 1);
        assert_eq!((s.excluded_firm_coverage, s.dropped_firms), (1, 1));
    }

    #[test]
    fn inverse_cap() {
        assert_eq!(inverse_error(0.0, 1e6), InverseError { value: 1e6, capped: true });
        assert_eq!(inverse_error(0.5, 1e6), InverseError { value: 2.0, capped: false });
        assert!(inverse_error(1e-9, 1e6).capped);
    }

    #[test]
    fn single_analyst_group_is_identity() {
        let errs = vec![ErrorRecord { analyst_id: "a".into(), firm_id: "x".into(), year: 1, horizon: 0, delta: 0.7 }];
        let b = reshuffle_benchmark(&errs, 1, 5, 3).unwrap();
        assert_eq!(b.sample, vec![0.7; 5]);
        assert!(reshuffle_benchmark(&errs, 1, 0, 3).is_err());
    }

    #[test]
    fn identical_coverage_preserves_mean() {
        let mut errs = Vec::new();
        for a in 0..4 {
            for f in 0..6 {
                let delta = ((a * 7 + f * 3) % 5) as f64 * 0.25;
                errs.push(ErrorRecord { analyst_id: format!("a{a}"), firm_id: format!("f{f}"), year: 1, horizon: 2, delta });
            }
        }
        let emp = analyst_errors(&errs, 1);
        let emp_mean = math::mean(&emp.profiles.iter().map(|p| p.mean_error).collect::<Vec<_>>());
        let b = reshuffle_benchmark(&errs, 1, 50, 11).unwrap();
        assert!((math::mean(&b.sample) - emp_mean).abs() < 1e-12);
    }

    #[test]
    fn reshuffle_is_seeded() {
        let errs: Vec<ErrorRecord> = (0..30)
            .map(|i| ErrorRecord {
                analyst_id: format!("a{}", i % 5),
                firm_id: format!("f{}", i / 5),
                year: 1,
                horizon: 0,
                delta: i as f64,
            })
            .collect();
        let a = reshuffle_benchmark(&errs, 1, 3, 1).unwrap();
        assert_eq!(a, reshuffle_benchmark(&errs, 1, 3, 1).unwrap());
        assert_ne!(a.sample, reshuffle_benchmark(&errs, 1, 3, 2).unwrap().sample);
    }

    #[test]
    fn ks_report_identity() {
        let v: Vec<f64> = (0..100).map(|i| i as f64 / 10.0).collect();
        let s = analyst_ks_report(&v, &v, None, Side::RightTail, 20, Some(DEFAULT_INVERSE_CAP)).unwrap();
        assert!(s.valid().all(|(_, r)| r.p_value == 1.0));
    }
}
