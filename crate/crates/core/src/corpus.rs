//! Deal records, multiples, sample filters and per-investor portfolios.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Funding-stage transition a deal belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "seed_a")]
    SeedToA,
    #[serde(rename = "a_b")]
    AToB,
    #[serde(rename = "b_c")]
    BToC,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::SeedToA, Stage::AToB, Stage::BToC];

    pub fn token(self) -> &'static str {
        match self {
            Stage::SeedToA => "seed_a",
            Stage::AToB => "a_b",
            Stage::BToC => "b_c",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "seed_a" => Ok(Stage::SeedToA),
            "a_b" => Ok(Stage::AToB),
            "b_c" => Ok(Stage::BToC),
            other => Err(Error::InvalidConfig(alloc::format!("unknown stage token `{other}`"))),
        }
    }
}

/// One investor's participation in one funding transition of one company.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DealRecord {
    pub company_id: String,
    pub investor_id: String,
    pub stage: Stage,
    pub year: i32,
    pub sector: String,
    pub region: String,
    /// Next-round amount over current-round amount; zero without a follow-on.
    pub multiple: f64,
}

/// Row as found in funding-round data, before the multiple is derived.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFundingRow {
    pub company_id: String,
    pub investor_id: String,
    pub stage: Stage,
    pub year: i32,
    pub sector: String,
    pub region: String,
    pub amount_current: f64,
    pub amount_next: Option<f64>,
    pub months_to_next_round: Option<u32>,
}

pub const DEFAULT_HORIZON_MONTHS: u32 = 36;

/// Ratio of the next round to the current round, or zero when no follow-on
/// round is raised within `horizon_months`.
///
/// Amounts are unitless; both rounds must be in the same currency.
pub fn compute_multiple(row: &RawFundingRow, horizon_months: u32) -> Result<f64> {
    if horizon_months == 0 {
        return Err(Error::ZeroHorizon);
    }
    if !(row.amount_current > 0.0) || !row.amount_current.is_finite() {
        return Err(Error::NonPositiveAmount(row.amount_current));
    }
    let Some(next) = row.amount_next else {
        return Ok(0.0);
    };
    if !(next >= 0.0) || !next.is_finite() {
        return Err(Error::NegativeAmount(next));
    }
    let months = row.months_to_next_round.ok_or(Error::MissingMonths)?;
    if months > horizon_months {
        return Ok(0.0);
    }
    Ok(next / row.amount_current)
}

/// Year window and stage selection applied while reading deals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DealFilter {
    pub year_min: i32,
    pub year_max: i32,
    pub stages: Vec<Stage>,
}

impl Default for DealFilter {
    fn default() -> Self {
        Self { year_min: 2010, year_max: 2022, stages: Stage::ALL.to_vec() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterVerdict {
    Accept,
    OutOfWindow,
    StageExcluded,
}

impl DealFilter {
    pub fn check(&self, stage: Stage, year: i32) -> FilterVerdict {
        if year < self.year_min || year > self.year_max {
            FilterVerdict::OutOfWindow
        } else if !self.stages.contains(&stage) {
            FilterVerdict::StageExcluded
        } else {
            FilterVerdict::Accept
        }
    }
}

/// Collapse repeated `(company, investor, stage)` rows, keeping the first.
/// Returns the kept deals in input order and the number dropped.
pub fn dedup_deals(deals: Vec<DealRecord>) -> (Vec<DealRecord>, usize) {
    let mut seen = BTreeSet::new();
    let before = deals.len();
    let kept: Vec<DealRecord> = deals
        .into_iter()
        .filter(|d| seen.insert((d.company_id.clone(), d.investor_id.clone(), d.stage)))
        .collect();
    let dropped = before - kept.len();
    (kept, dropped)
}

/// All deals of one investor within one stage transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    pub investor_id: String,
    pub stage: Stage,
    pub deals: Vec<DealRecord>,
    pub n: usize,
    pub mean_multiple: f64,
}

impl Portfolio {
    pub fn new(investor_id: String, stage: Stage, deals: Vec<DealRecord>) -> Self {
        let n = deals.len();
        let mean_multiple = deals.iter().map(|d| d.multiple).sum::<f64>() / n as f64;
        Self { investor_id, stage, deals, n, mean_multiple }
    }
}

pub const DEFAULT_MIN_INVESTMENTS: usize = 2;

/// Group deals into one portfolio per `(investor, stage)` and drop portfolios
/// with fewer than `min_investments` deals.
///
/// Output is ordered by stage, then investor id; deals keep input order. A
/// company shared by several investors appears in each of their portfolios.
pub fn build_portfolios(deals: &[DealRecord], min_investments: usize) -> Vec<Portfolio> {
    let min_investments = min_investments.max(1);
    let mut groups: BTreeMap<(Stage, &str), Vec<DealRecord>> = BTreeMap::new();
    for d in deals {
        groups.entry((d.stage, d.investor_id.as_str())).or_default().push(d.clone());
    }
    groups
        .into_iter()
        .filter(|(_, ds)| ds.len() >= min_investments)
        .map(|((stage, inv), ds)| Portfolio::new(String::from(inv), stage, ds))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorStageCount {
    pub sector: String,
    pub stage: Stage,
    /// Distinct companies (N).
    pub companies: usize,
    /// Distinct portfolio-holding investors with a deal in the cell (P).
    pub investors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTotals {
    pub stage: Stage,
    /// Sum of per-sector company counts.
    pub companies: usize,
    /// Sum of per-sector investor counts.
    pub investors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub cells: Vec<SectorStageCount>,
    pub totals: Vec<StageTotals>,
    pub deal_count: usize,
    pub portfolio_count: usize,
    pub distinct_companies: usize,
    pub distinct_investors: usize,
    /// Mean over distinct `(company, stage)` of the deal multiple.
    pub mean_startup_multiple: Option<f64>,
    /// Mean over portfolios of the portfolio multiple.
    pub mean_investor_multiple: Option<f64>,
    pub zero_portfolio_share: Option<f64>,
}

pub fn corpus_stats(deals: &[DealRecord], portfolios: &[Portfolio]) -> CorpusStats {
    let mut companies: BTreeMap<(&str, Stage), BTreeSet<&str>> = BTreeMap::new();
    let mut startup_multiple: BTreeMap<(&str, Stage), f64> = BTreeMap::new();
    for d in deals {
        companies.entry((d.sector.as_str(), d.stage)).or_default().insert(d.company_id.as_str());
        startup_multiple.entry((d.company_id.as_str(), d.stage)).or_insert(d.multiple);
    }
    let mut investors: BTreeMap<(&str, Stage), BTreeSet<&str>> = BTreeMap::new();
    for p in portfolios {
        for d in &p.deals {
            investors.entry((d.sector.as_str(), p.stage)).or_default().insert(p.investor_id.as_str());
        }
    }

    let cells: Vec<SectorStageCount> = companies
        .iter()
        .map(|(&(sector, stage), cs)| SectorStageCount {
            sector: String::from(sector),
            stage,
            companies: cs.len(),
            investors: investors.get(&(sector, stage)).map_or(0, BTreeSet::len),
        })
        .collect();

    let totals = Stage::ALL
        .iter()
        .filter_map(|&stage| {
            let (c, i) = cells
                .iter()
                .filter(|c| c.stage == stage)
                .fold((0, 0), |(c, i), cell| (c + cell.companies, i + cell.investors));
            (c > 0).then_some(StageTotals { stage, companies: c, investors: i })
        })
        .collect();

    let distinct_companies = deals.iter().map(|d| d.company_id.as_str()).collect::<BTreeSet<_>>().len();
    let distinct_investors =
        portfolios.iter().map(|p| p.investor_id.as_str()).collect::<BTreeSet<_>>().len();

    let mean_startup_multiple = (!startup_multiple.is_empty())
        .then(|| startup_multiple.values().sum::<f64>() / startup_multiple.len() as f64);
    let mean_investor_multiple = (!portfolios.is_empty())
        .then(|| portfolios.iter().map(|p| p.mean_multiple).sum::<f64>() / portfolios.len() as f64);
    let zero_portfolio_share = (!portfolios.is_empty()).then(|| {
        portfolios.iter().filter(|p| p.mean_multiple == 0.0).count() as f64 / portfolios.len() as f64
    });

    CorpusStats {
        cells,
        totals,
        deal_count: deals.len(),
        portfolio_count: portfolios.len(),
        distinct_companies,
        distinct_investors,
        mean_startup_multiple,
        mean_investor_multiple,
        zero_portfolio_share,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::string::ToString;

    fn row(current: f64, next: Option<f64>, months: Option<u32>) -> RawFundingRow {
        RawFundingRow {
            company_id: "c".into(),
            investor_id: "i".into(),
            stage: Stage::AToB,
            year: 2015,
            sector: "Tech".into(),
            region: "US".into(),
            amount_current: current,
            amount_next: next,
            months_to_next_round: months,
        }
    }

    pub(crate) fn deal(company: &str, investor: &str, multiple: f64) -> DealRecord {
        DealRecord {
            company_id: company.into(),
            investor_id: investor.into(),
            stage: Stage::AToB,
            year: 2015,
            sector: "Tech".into(),
            region: "US".into(),
            multiple,
        }
    }

    #[test]
    fn multiple_examples() {
        assert_eq!(compute_multiple(&row(10.0, Some(25.0), Some(12)), 36).unwrap(), 2.5);
        assert_eq!(compute_multiple(&row(5.0, None, None), 36).unwrap(), 0.0);
        assert_eq!(compute_multiple(&row(7.0, Some(7.0), Some(36)), 36).unwrap(), 1.0);
        assert_eq!(compute_multiple(&row(4.0, Some(8.0), Some(40)), 36).unwrap(), 0.0);
        // next round of zero is a zero multiple
        assert_eq!(compute_multiple(&row(4.0, Some(0.0), Some(10)), 36).unwrap(), 0.0);
    }

    #[test]
    fn multiple_rejects_malformed_rows() {
        assert_eq!(compute_multiple(&row(0.0, Some(1.0), Some(1)), 36), Err(Error::NonPositiveAmount(0.0)));
        assert_eq!(compute_multiple(&row(-3.0, None, None), 36), Err(Error::NonPositiveAmount(-3.0)));
        assert_eq!(compute_multiple(&row(3.0, Some(-1.0), Some(1)), 36), Err(Error::NegativeAmount(-1.0)));
        assert_eq!(compute_multiple(&row(3.0, Some(1.0), None), 36), Err(Error::MissingMonths));
        assert_eq!(compute_multiple(&row(3.0, Some(1.0), Some(1)), 0), Err(Error::ZeroHorizon));
    }

    #[test]
    fn stage_tokens_round_trip() {
        for s in Stage::ALL {
            assert_eq!(s.token().parse::<Stage>().unwrap(), s);
        }
        assert!("series_a".parse::<Stage>().is_err());
    }

    #[test]
    fn filter_window() {
        let f = DealFilter::default();
        assert_eq!(f.check(Stage::AToB, 2009), FilterVerdict::OutOfWindow);
        assert_eq!(f.check(Stage::AToB, 2010), FilterVerdict::Accept);
        assert_eq!(f.check(Stage::AToB, 2022), FilterVerdict::Accept);
        assert_eq!(f.check(Stage::AToB, 2023), FilterVerdict::OutOfWindow);
        let only_b = DealFilter { stages: alloc::vec![Stage::BToC], ..DealFilter::default() };
        assert_eq!(only_b.check(Stage::AToB, 2015), FilterVerdict::StageExcluded);
    }

    #[test]
    fn portfolio_mean_and_size() {
        let deals = [deal("a", "i", 0.0), deal("b", "i", 2.0), deal("c", "i", 4.0)];
        let ps = build_portfolios(&deals, 2);
        assert_eq!(ps.len(), 1);
        assert_eq!(ps[0].n, 3);
        assert_eq!(ps[0].mean_multiple, 2.0);
    }

    #[test]
    fn single_deal_investor_excluded() {
        let deals = [deal("a", "i", 1.0), deal("a", "j", 1.0), deal("b", "j", 3.0)];
        let ps = build_portfolios(&deals, 2);
        assert_eq!(ps.len(), 1);
        assert_eq!(ps[0].investor_id, "j");
        assert_eq!(build_portfolios(&deals, 1).len(), 2);
    }

    #[test]
    fn shared_company_in_every_portfolio() {
        let deals = [deal("alpha", "i", 3.0), deal("alpha", "j", 3.0), deal("b", "i", 1.0), deal("c", "j", 0.0)];
        let ps = build_portfolios(&deals, 2);
        assert_eq!(ps.len(), 2);
        for p in &ps {
            assert!(p.deals.iter().any(|d| d.company_id == "alpha"));
        }
    }

    #[test]
    fn portfolios_split_by_stage() {
        let mut d2 = deal("b", "i", 1.0);
        d2.stage = Stage::BToC;
        let deals = [deal("a", "i", 1.0), d2, deal("c", "i", 1.0)];
        let ps = build_portfolios(&deals, 1);
        assert_eq!(ps.len(), 2);
        for p in &ps {
            assert!(p.deals.iter().all(|d| d.stage == p.stage));
        }
    }

    #[test]
    fn dedup_keeps_first() {
        let deals = alloc::vec![deal("a", "i", 1.0), deal("a", "i", 9.0), deal("a", "j", 9.0)];
        let (kept, dropped) = dedup_deals(deals);
        assert_eq!(dropped, 1);
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].multiple, 1.0);
    }

    #[test]
    fn stats_single_deal() {
        let deals = [deal("a", "i", 2.0)];
        let s = corpus_stats(&deals, &build_portfolios(&deals, 2));
        assert_eq!(s.cells[0].companies, 1);
        assert_eq!(s.cells[0].investors, 0);
        let s = corpus_stats(&deals, &build_portfolios(&deals, 1));
        assert_eq!(s.cells[0].investors, 1);
        assert_eq!(s.mean_startup_multiple, Some(2.0));
    }

    /// Per-sector counts of the Series A column of the published data table;
    /// each sector gets its own investor pool, every investor two deals.
    #[test]
    fn stats_reproduce_table_totals() {
        let sectors = [
            ("Tech & Software", 2222, 1469),
            ("Financial & Legal", 1187, 824),
            ("Business & Services", 3679, 2001),
            ("Consumer & Commerce", 3489, 1868),
            ("Health & Environment", 3128, 1788),
            ("Communication & Ed.", 931, 674),
        ];
        let mut deals = Vec::new();
        for (s, &(name, n, p)) in sectors.iter().enumerate() {
            for inv in 0..p {
                for c in [(2 * inv) % n, (2 * inv + 1) % n] {
                    deals.push(DealRecord {
                        company_id: format!("s{s}c{c}"),
                        investor_id: format!("s{s}i{inv}"),
                        stage: Stage::SeedToA,
                        year: 2015,
                        sector: name.to_string(),
                        region: "US".into(),
                        multiple: 1.0,
                    });
                }
            }
        }
        let ps = build_portfolios(&deals, 2);
        let s = corpus_stats(&deals, &ps);
        assert_eq!(s.totals.len(), 1);
        assert_eq!(s.totals[0].companies, 14636);
        assert_eq!(s.totals[0].investors, 8624);
        for cell in &s.cells {
            let expected = sectors.iter().find(|x| x.0 == cell.sector).unwrap();
            assert_eq!((cell.companies, cell.investors), (expected.1, expected.2));
        }
    }
}
