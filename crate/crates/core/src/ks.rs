//! Two-sample Kolmogorov–Smirnov tests and tail-restricted sweeps.
//!
//! ECDFs are right-continuous and evaluated at the pooled sample points, so
//! ties (in particular the atom at zero) are handled exactly in the statistic.
//! The p-value is the asymptotic Kolmogorov tail at `sqrt(nm/(n+m)) * D`,
//! which ignores ties and is therefore conservative for tied samples.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub m: usize,
}

/// `Q(λ) = 2 Σ_{j≥1} (-1)^{j-1} exp(-2 j² λ²)`, the survival function of the
/// Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if !(lambda > 0.0) {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi-transformed series; converges fast for small λ.
        let c = -core::f64::consts::PI * core::f64::consts::PI / (8.0 * lambda * lambda);
        let mut s = 0.0;
        for j in 0..32 {
            let k = (2 * j + 1) as f64;
            let t = libm::exp(c * k * k);
            s += t;
            if t < 1e-17 * s {
                break;
            }
        }
        let cdf = libm::sqrt(2.0 * core::f64::consts::PI) / lambda * s;
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let jf = j as f64;
        let t = libm::exp(-2.0 * jf * jf * lambda * lambda);
        s += sign * t;
        if t < 1e-17 * s.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// `sup |F_a - F_b|` for two sorted samples.
pub fn statistic_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len(), b.len());
    let log2 = |x: usize| (usize::BITS - x.leading_zeros()) as usize;
    if n.min(m) * log2(n.max(m)) < n + m {
        return statistic_sparse(a, b);
    }
    merge_statistic(a, b)
}

/// Between two jumps of the smaller sample its ECDF is flat, so the supremum
/// is attained next to one of its jumps; the larger sample is searched.
fn statistic_sparse(a: &[f64], b: &[f64]) -> f64 {
    let (nf, mf) = (a.len() as f64, b.len() as f64);
    let small_is_a = a.len() <= b.len();
    let (s, l) = if small_is_a { (a, b) } else { (b, a) };
    let gap = |cs: usize, cl: usize| {
        let (i, j) = if small_is_a { (cs, cl) } else { (cl, cs) };
        (i as f64 / nf - j as f64 / mf).abs()
    };
    let mut d: f64 = 0.0;
    let mut i0 = 0;
    while i0 < s.len() {
        let v = s[i0];
        let i1 = i0 + s[i0..].partition_point(|x| *x <= v);
        d = d.max(gap(i0, l.partition_point(|x| *x < v)));
        d = d.max(gap(i1, l.partition_point(|x| *x <= v)));
        i0 = i1;
    }
    d
}

fn merge_statistic(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len(), b.len());
    let (nf, mf) = (n as f64, m as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < n && a[i] <= v {
            i += 1;
        }
        while j < m && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / nf - j as f64 / mf).abs());
    }
    // once one sample is exhausted its ECDF is 1; the other only grows toward 1
    d = d.max((i as f64 / nf - j as f64 / mf).abs());
    d
}

fn result_from(statistic: f64, n: usize, m: usize) -> KsResult {
    let ne = (n as f64 * m as f64) / (n + m) as f64;
    let p_value = kolmogorov_sf(libm::sqrt(ne) * statistic).clamp(0.0, 1.0);
    KsResult { statistic, p_value, n, m }
}

/// Test on already sorted samples.
pub fn ks_sorted(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample("KS test needs two non-empty samples"));
    }
    Ok(result_from(statistic_sorted(a, b), a.len(), b.len()))
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample("KS test needs two non-empty samples"));
    }
    ks_sorted(&math::sorted(a), &math::sorted(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Keep values `<= threshold`.
    LeftTail,
    /// Keep values `>= threshold`.
    RightTail,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SweepOutcome {
    Valid(KsResult),
    /// At least one truncated sample is smaller than the validity cutoff.
    Insufficient { n: usize, m: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub threshold: f64,
    pub outcome: SweepOutcome,
}

impl SweepEntry {
    pub fn result(&self) -> Option<&KsResult> {
        match &self.outcome {
            SweepOutcome::Valid(r) => Some(r),
            SweepOutcome::Insufficient { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsSweep {
    pub side: Side,
    pub min_tail_n: usize,
    pub entries: Vec<SweepEntry>,
    /// Set when no threshold produced a valid test.
    pub warning: Option<alloc::string::String>,
}

impl KsSweep {
    pub fn valid(&self) -> impl Iterator<Item = (f64, &KsResult)> {
        self.entries.iter().filter_map(|e| e.result().map(|r| (e.threshold, r)))
    }

    /// Smallest valid p-value, if any.
    pub fn min_p(&self) -> Option<f64> {
        self.valid().map(|(_, r)| r.p_value).reduce(f64::min)
    }
}

pub const DEFAULT_MIN_TAIL_N: usize = 20;
pub const DEFAULT_THRESHOLD_LEVELS: usize = 200;

/// Unique values of the pooled sample at `levels` evenly spaced probability
/// levels from 0 to 1 (lower order statistic).
pub fn default_thresholds(a: &[f64], b: &[f64], levels: usize) -> Vec<f64> {
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    if pooled.is_empty() || levels == 0 {
        return Vec::new();
    }
    pooled.sort_by(f64::total_cmp);
    let last = pooled.len() - 1;
    let mut out: Vec<f64> = (0..levels)
        .map(|i| {
            let p = if levels == 1 { 1.0 } else { i as f64 / (levels - 1) as f64 };
            pooled[libm::floor(p * last as f64) as usize]
        })
        .collect();
    out.dedup();
    out
}

/// Run the KS test on both samples truncated at each threshold.
pub fn tail_sweep(
    empirical: &[f64],
    benchmark: &[f64],
    thresholds: &[f64],
    side: Side,
    min_tail_n: usize,
) -> Result<KsSweep> {
    if min_tail_n < 2 {
        return Err(Error::InvalidConfig("min_tail_n must be at least 2".into()));
    }
    if thresholds.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidConfig("sweep thresholds must be strictly increasing".into()));
    }
    let a = math::sorted(empirical);
    let b = math::sorted(benchmark);
    let truncate = |s: &'_ [f64], t: f64| -> core::ops::Range<usize> {
        match side {
            Side::LeftTail => 0..s.partition_point(|x| *x <= t),
            Side::RightTail => s.partition_point(|x| *x < t)..s.len(),
        }
    };
    let entries: Vec<SweepEntry> = thresholds
        .iter()
        .map(|&t| {
            let ta = &a[truncate(&a, t)];
            let tb = &b[truncate(&b, t)];
            let outcome = if ta.len() < min_tail_n || tb.len() < min_tail_n {
                SweepOutcome::Insufficient { n: ta.len(), m: tb.len() }
            } else {
                SweepOutcome::Valid(result_from(statistic_sorted(ta, tb), ta.len(), tb.len()))
            };
            SweepEntry { threshold: t, outcome }
        })
        .collect();
    let warning = entries
        .iter()
        .all(|e| e.result().is_none())
        .then(|| alloc::format!("no threshold left at least {min_tail_n} points in both samples"));
    Ok(KsSweep { side, min_tail_n, entries, warning })
}
