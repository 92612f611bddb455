//! Rank benchmark distributions.
//!
//! With `N` investors drawing independently from the benchmark distribution of
//! portfolio multiples, the k-th largest multiple (k = 1 is the best) has
//! density proportional to `S(M)^(k-1) ρ(M) F(M)^(N-k)`. Benchmark multiples
//! carry an atom at zero, so the k-th largest is exactly zero with the
//! binomial probability that fewer than `k` of the `N` draws are positive; the
//! continuous part is normalised to the remaining mass.
//!
//! `ρ` is a histogram on log-spaced bins. Each bin is subdivided into a finer
//! evaluation grid on which `F` is the CDF implied by the histogram (it agrees
//! with the sample ECDF at every bin edge), and integrals are trapezoidal in
//! linear `M` on each sub-interval with that bin's constant density.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Stage;
use crate::math;
use crate::rng::{substream, tag};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Log-spaced histogram bins over the positive support.
    pub bins: usize,
    /// Empty bins on each side of `[min positive, max]`, as a fraction of the
    /// log range.
    pub padding: f64,
    /// Evaluation points per bin.
    pub refine: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { bins: 200, padding: 0.05, refine: 8 }
    }
}

/// Density, CDF and survival function of the benchmark multiples plus the
/// zero atom, for a cross-section of `n_investors`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFunctions {
    pub n_investors: usize,
    pub zero_atom: f64,
    pub bin_edges: Vec<f64>,
    /// Continuous density per bin; integrates to `1 - zero_atom`.
    pub bin_density: Vec<f64>,
    pub refine: usize,
    pub grid: Vec<f64>,
    pub cdf: Vec<f64>,
    pub survival: Vec<f64>,
    /// Density at each grid point (bin to the right; last point uses the last bin).
    pub density: Vec<f64>,
    #[serde(skip)]
    ln_cdf: Vec<f64>,
    #[serde(skip)]
    ln_survival: Vec<f64>,
}

impl TailFunctions {
    /// Estimate from a pooled benchmark sample.
    pub fn estimate(sample: &[f64], n_investors: usize, grid: &GridConfig) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::EmptySample("benchmark sample"));
        }
        if n_investors == 0 {
            return Err(Error::InvalidConfig("cross-section size must be positive".into()));
        }
        if grid.bins == 0 || grid.refine == 0 || !(grid.padding >= 0.0) {
            return Err(Error::InvalidConfig("grid needs bins >= 1, refine >= 1, padding >= 0".into()));
        }
        let total = sample.len() as f64;
        let mut positive: Vec<f64> = sample.iter().copied().filter(|&x| x > 0.0).collect();
        if positive.is_empty() {
            return Err(Error::NoPositiveValues);
        }
        positive.sort_by(f64::total_cmp);
        let zero_atom = (sample.len() - positive.len()) as f64 / total;

        // data bins cover [min positive, max] exactly; padding bins carry no mass
        let mut lmin = libm::log(positive[0]);
        let mut lmax = libm::log(positive[positive.len() - 1]);
        if lmax - lmin < 1e-9 {
            lmin -= 1e-6;
            lmax += 1e-6;
        }
        let inner = (libm::round(grid.bins as f64 / (1.0 + 2.0 * grid.padding)) as usize).clamp(1, grid.bins);
        let pad_lo = (grid.bins - inner) / 2;
        let width = (lmax - lmin) / inner as f64;
        let mut edges: Vec<f64> =
            (0..=grid.bins).map(|j| libm::exp(lmin + (j as f64 - pad_lo as f64) * width)).collect();
        edges[pad_lo] = edges[pad_lo].min(positive[0]);
        edges[pad_lo + inner] = edges[pad_lo + inner].max(positive[positive.len() - 1]);

        let mut counts = alloc::vec![0usize; grid.bins];
        for &x in &positive {
            let j = edges.partition_point(|e| *e <= x).saturating_sub(1).clamp(pad_lo, pad_lo + inner - 1);
            counts[j] += 1;
        }
        let masses: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();
        Self::from_histogram(edges, &masses, zero_atom, n_investors, grid.refine)
    }

    /// Build from explicit histogram masses per bin (summing to `1 - zero_atom`).
    pub fn from_histogram(
        edges: Vec<f64>,
        masses: &[f64],
        zero_atom: f64,
        n_investors: usize,
        refine: usize,
    ) -> Result<Self> {
        if edges.len() != masses.len() + 1 || edges.len() < 2 || refine == 0 {
            return Err(Error::InvalidBinEdges);
        }
        if edges[0] <= 0.0 || edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidBinEdges);
        }
        if !(0.0..1.0).contains(&zero_atom) {
            return Err(Error::NoPositiveValues);
        }
        let bins = masses.len();
        let bin_density: Vec<f64> =
            masses.iter().enumerate().map(|(j, m)| m / (edges[j + 1] - edges[j])).collect();

        // mass strictly above each edge, accumulated from the top for accuracy
        let mut above = alloc::vec![0.0; bins + 1];
        for j in (0..bins).rev() {
            above[j] = above[j + 1] + masses[j];
        }

        let npts = bins * refine + 1;
        let mut grid_pts = Vec::with_capacity(npts);
        let mut cdf = Vec::with_capacity(npts);
        let mut survival = Vec::with_capacity(npts);
        let mut density = Vec::with_capacity(npts);
        for j in 0..bins {
            let (a, b) = (edges[j], edges[j + 1]);
            let ratio = b / a;
            for r in 0..refine {
                let m = if r == 0 { a } else { a * libm::pow(ratio, r as f64 / refine as f64) };
                let s = (above[j] - bin_density[j] * (m - a)).max(0.0);
                grid_pts.push(m);
                survival.push(s);
                cdf.push(1.0 - s);
                density.push(bin_density[j]);
            }
        }
        grid_pts.push(edges[bins]);
        survival.push(0.0);
        cdf.push(1.0);
        density.push(bin_density[bins - 1]);

        let ln_cdf = cdf.iter().map(|&f| libm::log(f)).collect();
        let ln_survival = survival.iter().map(|&s| libm::log(s)).collect();
        Ok(Self {
            n_investors,
            zero_atom,
            bin_edges: edges,
            bin_density,
            refine,
            grid: grid_pts,
            cdf,
            survival,
            density,
            ln_cdf,
            ln_survival,
        })
    }

    /// Number of evaluation intervals.
    pub fn intervals(&self) -> usize {
        self.grid.len() - 1
    }

    fn interval_density(&self, t: usize) -> f64 {
        self.bin_density[t / self.refine]
    }

    /// Probability that the k-th largest of `n_investors` draws is exactly 0.
    pub fn zero_rank_mass(&self, k: usize) -> f64 {
        if self.zero_atom == 0.0 {
            return 0.0;
        }
        // k-th largest is zero iff at most k-1 draws are positive
        math::binomial_cdf(k - 1, self.n_investors, 1.0 - self.zero_atom)
    }

    /// Continuous mass `∫ρ`, by the same quadrature used for rank densities.
    pub fn continuous_mass(&self) -> f64 {
        (0..self.intervals())
            .map(|t| self.interval_density(t) * (self.grid[t + 1] - self.grid[t]))
            .sum()
    }
}

/// Normalised distribution of the k-th largest benchmark multiple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankDensity {
    pub k: usize,
    pub n: usize,
    pub grid: Vec<f64>,
    /// Density of the continuous part at each grid point.
    pub g: Vec<f64>,
    pub zero_atom_rank_mass: f64,
    /// Density at the left and right end of every interval, using the bin
    /// density of the interval itself.
    #[serde(skip)]
    seg_lo: Vec<f64>,
    #[serde(skip)]
    seg_hi: Vec<f64>,
}

fn ln_weight(tf: &TailFunctions, k: usize, i: usize) -> f64 {
    let n = tf.n_investors;
    // power 0 is 1 even where the base is 0
    let s = if k == 1 { 0.0 } else { (k - 1) as f64 * tf.ln_survival[i] };
    let f = if n == k { 0.0 } else { (n - k) as f64 * tf.ln_cdf[i] };
    s + f
}

pub fn rank_density(tf: &TailFunctions, k: usize) -> Result<RankDensity> {
    let n = tf.n_investors;
    if k == 0 || k > n {
        return Err(Error::RankOutOfRange { k, n });
    }
    let lw: Vec<f64> = (0..tf.grid.len()).map(|i| ln_weight(tf, k, i)).collect();
    let shift = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lw.iter().map(|&l| if shift.is_finite() { libm::exp(l - shift) } else { 0.0 }).collect();

    let nt = tf.intervals();
    let mut seg_lo = Vec::with_capacity(nt);
    let mut seg_hi = Vec::with_capacity(nt);
    let mut z = 0.0;
    for t in 0..nt {
        let rho = tf.interval_density(t);
        let (a, b) = (rho * w[t], rho * w[t + 1]);
        z += 0.5 * (tf.grid[t + 1] - tf.grid[t]) * (a + b);
        seg_lo.push(a);
        seg_hi.push(b);
    }
    let q = tf.zero_rank_mass(k);
    let scale = if z > 0.0 { (1.0 - q) / z } else { 0.0 };
    seg_lo.iter_mut().chain(seg_hi.iter_mut()).for_each(|v| *v *= scale);
    let g = (0..tf.grid.len()).map(|i| tf.density[i] * w[i] * scale).collect();
    let zero_atom_rank_mass = if z > 0.0 { q } else { 1.0 };
    Ok(RankDensity { k, n, grid: tf.grid.clone(), g, zero_atom_rank_mass, seg_lo, seg_hi })
}

impl RankDensity {
    /// Total mass: atom plus the integral of the continuous part.
    pub fn total_mass(&self) -> f64 {
        self.zero_atom_rank_mass + self.integrate(|_| 1.0)
    }

    /// `E f(X)` for the k-th largest, atom included.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.zero_atom_rank_mass * f(0.0) + self.integrate(f)
    }

    fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        (0..self.seg_lo.len())
            .map(|t| {
                let (a, b) = (self.grid[t], self.grid[t + 1]);
                0.5 * (b - a) * (self.seg_lo[t] * f(a) + self.seg_hi[t] * f(b))
            })
            .sum()
    }

    /// CDF of the k-th largest at every grid point (atom included).
    pub fn cdf(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.grid.len());
        let mut acc = self.zero_atom_rank_mass;
        out.push(acc);
        for t in 0..self.seg_lo.len() {
            acc += 0.5 * (self.grid[t + 1] - self.grid[t]) * (self.seg_lo[t] + self.seg_hi[t]);
            out.push(acc);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankMoments {
    pub mean: f64,
    pub sd: f64,
}

/// Mean and standard deviation of the k-th largest, zero atom included.
pub fn rank_moments(rd: &RankDensity) -> RankMoments {
    let mean = rd.integrate(|m| m);
    let var = rd.integrate(|m| (m - mean) * (m - mean)) + rd.zero_atom_rank_mass * mean * mean;
    RankMoments { mean, sd: libm::sqrt(var.max(0.0)) }
}

pub const DEFAULT_SIGMA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankRecord {
    pub k: usize,
    pub mu: f64,
    pub sigma: f64,
    pub observed: f64,
    /// `None` where `sigma` is below the floor.
    pub z: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankProfile {
    pub stage: Option<Stage>,
    pub ranks: Vec<RankRecord>,
}

impl RankProfile {
    pub fn n(&self) -> usize {
        self.ranks.len()
    }

    pub fn mean_z(&self) -> Option<f64> {
        let zs: Vec<f64> = self.ranks.iter().filter_map(|r| r.z).collect();
        (!zs.is_empty()).then(|| math::mean(&zs))
    }
}

/// Sort observed multiples best-first. Ties keep input order.
pub fn rank_descending(observed: &[f64]) -> Vec<f64> {
    let mut v = observed.to_vec();
    v.sort_by(math::cmp_desc);
    v
}

pub fn rank_zscores(observed: &[f64], tf: &TailFunctions, stage: Option<Stage>) -> Result<RankProfile> {
    rank_zscores_with_floor(observed, tf, stage, DEFAULT_SIGMA_FLOOR)
}

pub fn rank_zscores_with_floor(
    observed: &[f64],
    tf: &TailFunctions,
    stage: Option<Stage>,
    sigma_floor: f64,
) -> Result<RankProfile> {
    if observed.len() != tf.n_investors {
        return Err(Error::SizeMismatch { expected: tf.n_investors, got: observed.len() });
    }
    let ranked = rank_descending(observed);
    let ranks = ranked
        .iter()
        .enumerate()
        .map(|(i, &obs)| {
            let k = i + 1;
            let m = rank_moments(&rank_density(tf, k)?);
            let z = (m.sd >= sigma_floor).then(|| (obs - m.mean) / m.sd);
            Ok(RankRecord { k, mu: m.mean, sigma: m.sd, observed: obs, z })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RankProfile { stage, ranks })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaledBin {
    pub lo: f64,
    pub hi: f64,
    pub center: f64,
    /// Mean z over every stage; `None` for an empty bin.
    pub mean_z: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePoints {
    pub stage: Option<Stage>,
    /// `(k - 1) / (N - 1)` per rank with a defined z.
    pub position: Vec<f64>,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaledProfile {
    pub bins: Vec<RescaledBin>,
    pub points: Vec<StagePoints>,
}

pub const DEFAULT_RESCALE_BINS: usize = 20;

/// Map ranks of several profiles onto `[0, 1]` and average z per bin.
pub fn rescaled_profile(profiles: &[RankProfile], n_bins: usize) -> Result<RescaledProfile> {
    if n_bins == 0 {
        return Err(Error::InvalidConfig("need at least one rescale bin".into()));
    }
    if let Some(p) = profiles.iter().find(|p| p.n() < 2) {
        return Err(Error::InvalidConfig(alloc::format!("rank profile with N = {} < 2", p.n())));
    }
    let mut sums = alloc::vec![0.0; n_bins];
    let mut counts = alloc::vec![0usize; n_bins];
    let mut points = Vec::with_capacity(profiles.len());
    for p in profiles {
        let denom = (p.n() - 1) as f64;
        let mut sp = StagePoints { stage: p.stage, position: Vec::new(), z: Vec::new() };
        for r in &p.ranks {
            let Some(z) = r.z else { continue };
            let pos = (r.k - 1) as f64 / denom;
            let b = (libm::floor(pos * n_bins as f64) as usize).min(n_bins - 1);
            sums[b] += z;
            counts[b] += 1;
            sp.position.push(pos);
            sp.z.push(z);
        }
        points.push(sp);
    }
    let w = 1.0 / n_bins as f64;
    let bins = (0..n_bins)
        .map(|b| RescaledBin {
            lo: b as f64 * w,
            hi: (b + 1) as f64 * w,
            center: (b as f64 + 0.5) * w,
            mean_z: (counts[b] > 0).then(|| sums[b] / counts[b] as f64),
            count: counts[b],
        })
        .collect();
    Ok(RescaledProfile { bins, points })
}

/// Brute-force moments of the k-th largest of `n` draws with replacement
/// from a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleMoments {
    pub k: usize,
    pub mean: f64,
    pub sd: f64,
    pub se_mean: f64,
    pub se_sd: f64,
    pub trials: usize,
}

/// Online central moments up to order four.
#[derive(Debug, Clone, Copy, Default)]
struct Moments4 {
    n: f64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments4 {
    fn push(&mut self, x: f64) {
        let n1 = self.n;
        self.n += 1.0;
        let n = self.n;
        let delta = x - self.mean;
        let dn = delta / n;
        let dn2 = dn * dn;
        let term1 = delta * dn * n1;
        self.mean += dn;
        self.m4 += term1 * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * self.m2 - 4.0 * dn * self.m3;
        self.m3 += term1 * dn * (n - 2.0) - 3.0 * dn * self.m2;
        self.m2 += term1;
    }

    fn finish(&self, k: usize) -> OracleMoments {
        let n = self.n;
        let var = if n > 1.0 { self.m2 / (n - 1.0) } else { 0.0 };
        let sd = libm::sqrt(var);
        let mu4 = self.m4 / n;
        let var_of_var = ((mu4 - (n - 3.0) / (n - 1.0) * var * var) / n).max(0.0);
        let se_sd = if sd > 0.0 { libm::sqrt(var_of_var) / (2.0 * sd) } else { 0.0 };
        OracleMoments { k, mean: self.mean, sd, se_mean: sd / libm::sqrt(n), se_sd, trials: n as usize }
    }
}

pub const MIN_ORACLE_TRIALS: usize = 1000;

fn check_oracle_args(sample: &[f64], n: usize, trials: usize) -> Result<()> {
    if sample.is_empty() {
        return Err(Error::EmptySample("oracle sample"));
    }
    if n == 0 {
        return Err(Error::InvalidConfig("cross-section size must be positive".into()));
    }
    if trials < MIN_ORACLE_TRIALS {
        return Err(Error::InvalidConfig(alloc::format!("oracle needs at least {MIN_ORACLE_TRIALS} trials")));
    }
    Ok(())
}

pub fn rank_moments_oracle(sample: &[f64], k: usize, n: usize, trials: usize, seed: u64) -> Result<OracleMoments> {
    check_oracle_args(sample, n, trials)?;
    if k == 0 || k > n {
        return Err(Error::RankOutOfRange { k, n });
    }
    let mut rng = substream(seed, tag::ORACLE, k as u64, n as u64);
    let mut buf = alloc::vec![0.0; n];
    let mut acc = Moments4::default();
    for _ in 0..trials {
        buf.iter_mut().for_each(|x| *x = sample[rng.random_range(0..sample.len())]);
        let (_, kth, _) = buf.select_nth_unstable_by(k - 1, math::cmp_desc);
        acc.push(*kth);
    }
    Ok(acc.finish(k))
}

/// Oracle moments for every rank at once, one sort per trial.
pub fn rank_moments_oracle_all(sample: &[f64], n: usize, trials: usize, seed: u64) -> Result<Vec<OracleMoments>> {
    check_oracle_args(sample, n, trials)?;
    let mut rng = substream(seed, tag::ORACLE, 0, n as u64);
    let mut buf = alloc::vec![0.0; n];
    let mut acc = alloc::vec![Moments4::default(); n];
    for _ in 0..trials {
        buf.iter_mut().for_each(|x| *x = sample[rng.random_range(0..sample.len())]);
        buf.sort_unstable_by(math::cmp_desc);
        for (a, &x) in acc.iter_mut().zip(&buf) {
            a.push(x);
        }
    }
    Ok(acc.iter().enumerate().map(|(i, a)| a.finish(i + 1)).collect())
}
