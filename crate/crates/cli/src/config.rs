use std::path::{Path, PathBuf};

use allocbench_core::analyst::{
    DEFAULT_ANALYST_COVERAGE, DEFAULT_EPSILON_FLOOR, DEFAULT_FIRM_COVERAGE, DEFAULT_INVERSE_CAP,
};
use allocbench_core::corpus::{Stage, DEFAULT_HORIZON_MONTHS, DEFAULT_MIN_INVESTMENTS};
use allocbench_core::ks::{DEFAULT_MIN_TAIL_N, DEFAULT_THRESHOLD_LEVELS};
use allocbench_core::rankbench::{GridConfig, DEFAULT_RESCALE_BINS};
use allocbench_core::resampler::{FallbackPolicy, DEFAULT_DRAWS};
use allocbench_core::synth::{ForecastSynthConfig, SynthConfig};
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StageSelection {
    SeedA,
    AB,
    BC,
    #[default]
    All,
}

impl StageSelection {
    pub fn stages(self) -> Vec<Stage> {
        match self {
            StageSelection::SeedA => vec![Stage::SeedToA],
            StageSelection::AB => vec![Stage::AToB],
            StageSelection::BC => vec![Stage::BToC],
            StageSelection::All => Stage::ALL.to_vec(),
        }
    }

    pub fn parse(s: &str) -> Result<Self, Failure> {
        match s {
            "all" => Ok(Self::All),
            other => match other.parse::<Stage>() {
                Ok(Stage::SeedToA) => Ok(Self::SeedA),
                Ok(Stage::AToB) => Ok(Self::AB),
                Ok(Stage::BToC) => Ok(Self::BC),
                Err(_) => Err(Failure::Usage(format!("unknown stage `{other}` (seed_a, a_b, b_c, all)"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputConfig {
    pub deals: Option<PathBuf>,
    pub forecasts: Option<PathBuf>,
    /// Single-byte field delimiter.
    pub delimiter: char,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self { deals: None, forecasts: None, delimiter: ',' }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub year_min: i32,
    pub year_max: i32,
    pub horizon_months: u32,
    pub min_investments: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self { year_min: 2010, year_max: 2022, horizon_months: DEFAULT_HORIZON_MONTHS, min_investments: DEFAULT_MIN_INVESTMENTS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkSection {
    pub draws: usize,
    pub fallback: FallbackPolicy,
    /// Worker threads; 0 lets the runtime decide. Not written to artifacts,
    /// since results do not depend on it.
    #[serde(skip_serializing)]
    pub threads: usize,
    pub emit_draws: bool,
    /// Log-density comparison bins.
    pub density_bins: usize,
    pub pool: PoolScope,
}

/// Deals the counterfactual draws come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolScope {
    /// Every deal of the stage that passes the corpus filters.
    #[default]
    AllDeals,
    /// Only deals held by investors with a portfolio.
    PortfolioDeals,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        Self {
            draws: DEFAULT_DRAWS,
            fallback: FallbackPolicy::Error,
            threads: 0,
            emit_draws: false,
            density_bins: 30,
            pool: PoolScope::AllDeals,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KsConfig {
    /// Number of pooled-quantile levels in the threshold grid.
    pub threshold_levels: usize,
    pub min_tail_n: usize,
}

impl Default for KsConfig {
    fn default() -> Self {
        Self { threshold_levels: DEFAULT_THRESHOLD_LEVELS, min_tail_n: DEFAULT_MIN_TAIL_N }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RankConfig {
    pub grid: GridConfig,
    pub rescale_bins: usize,
    pub ranks: Vec<usize>,
    pub oracle: bool,
    pub oracle_trials: usize,
}

impl Default for RankConfig {
    fn default() -> Self {
        Self { grid: GridConfig::default(), rescale_bins: DEFAULT_RESCALE_BINS, ranks: vec![1, 50], oracle: false, oracle_trials: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalystConfig {
    pub epsilon_floor: f64,
    pub analyst_coverage: usize,
    pub firm_coverage: usize,
    pub draws: usize,
    pub inverse_cap: f64,
    /// Horizons whose error distributions are reported.
    pub report_horizons: Vec<u8>,
}

impl Default for AnalystConfig {
    fn default() -> Self {
        Self {
            epsilon_floor: DEFAULT_EPSILON_FLOOR,
            analyst_coverage: DEFAULT_ANALYST_COVERAGE,
            firm_coverage: DEFAULT_FIRM_COVERAGE,
            draws: DEFAULT_DRAWS,
            inverse_cap: DEFAULT_INVERSE_CAP,
            report_horizons: vec![0, 5, 11],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub replications: usize,
    pub skills: Vec<f64>,
    /// Benchmark draws per replication.
    pub draws: usize,
    /// Significance level for rejection rates.
    pub alpha: f64,
    /// Forecast-panel replications; 0 skips the analyst experiment.
    pub analyst_replications: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self { replications: 200, skills: vec![0.0, 1.0, 2.0, 5.0], draws: 200, alpha: 0.05, analyst_replications: 0 }
    }
}

/// Externally supplied reference values shown next to computed statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ReportConfig {
    pub reference: std::collections::BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub stage: StageSelection,
    pub input: InputConfig,
    pub corpus: CorpusConfig,
    pub benchmark: BenchmarkSection,
    pub ks: KsConfig,
    pub rank: RankConfig,
    pub analyst: AnalystConfig,
    pub synth: SynthConfig,
    pub synth_forecasts: ForecastSynthConfig,
    pub experiment: ExperimentConfig,
    pub report: ReportConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            out: PathBuf::from("out"),
            stage: StageSelection::All,
            input: InputConfig::default(),
            corpus: CorpusConfig::default(),
            benchmark: BenchmarkSection::default(),
            ks: KsConfig::default(),
            rank: RankConfig::default(),
            analyst: AnalystConfig::default(),
            synth: SynthConfig::default(),
            synth_forecasts: ForecastSynthConfig::default(),
            experiment: ExperimentConfig::default(),
            report: ReportConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Failure::Schema(m) => Failure::Schema(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, Failure> {
        toml::from_str(text).map_err(|e| Failure::Schema(e.to_string()))
    }

    pub fn require_seed(&self) -> Result<u64, Failure> {
        self.seed.ok_or_else(|| Failure::Usage("this command is stochastic and needs --seed (or `seed` in the config)".into()))
    }

    pub fn delimiter(&self) -> Result<u8, Failure> {
        let d = self.input.delimiter;
        if d.is_ascii() {
            Ok(d as u8)
        } else {
            Err(Failure::Usage(format!("delimiter {d:?} is not a single byte")))
        }
    }

    pub fn validate(&self) -> Result<(), Failure> {
        let bad = |m: &str| Err(Failure::Usage(m.into()));
        if self.benchmark.draws == 0 || self.analyst.draws == 0 {
            return bad("draws must be at least 1");
        }
        if self.ks.min_tail_n < 2 {
            return bad("min_tail_n must be at least 2");
        }
        if self.corpus.horizon_months == 0 {
            return bad("horizon_months must be positive");
        }
        if self.rank.ranks.contains(&0) {
            return bad("ranks are 1-based");
        }
        if self.rank.rescale_bins == 0 || self.benchmark.density_bins == 0 {
            return bad("bin counts must be positive");
        }
        Ok(())
    }
}
