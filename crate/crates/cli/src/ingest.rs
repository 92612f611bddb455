//! Delimited-text readers and writers for deals and forecasts.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use allocbench_core::analyst::ForecastRecord;
use allocbench_core::corpus::{compute_multiple, DealFilter, DealRecord, FilterVerdict, RawFundingRow, Stage};
use allocbench_core::synth::SynthDeal;
use serde::{Deserialize, Serialize};

use crate::{CliResult, Failure};

pub const DEAL_COLUMNS: [&str; 10] = [
    "company_id",
    "investor_id",
    "stage",
    "year",
    "sector",
    "region",
    "amount_current",
    "amount_next",
    "months_to_next_round",
    "multiple",
];
const DEAL_REQUIRED: usize = 6;

pub const FORECAST_COLUMNS: [&str; 6] = ["analyst_id", "firm_id", "year", "horizon", "forecast", "realized"];

/// Relative tolerance between an explicit multiple and the one implied by amounts.
pub const MULTIPLE_MISMATCH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    /// 1-based line number in the input, header included.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultipleMismatch {
    pub line: u64,
    pub explicit: f64,
    pub from_amounts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct IngestReport {
    pub rows: usize,
    pub accepted: usize,
    pub out_of_window: usize,
    pub stage_excluded: usize,
    pub rejected: Vec<Rejection>,
    pub mismatches: Vec<MultipleMismatch>,
}

fn reader<R: Read>(input: R, delimiter: u8) -> csv::Reader<R> {
    csv::ReaderBuilder::new().delimiter(delimiter).trim(csv::Trim::All).flexible(false).from_reader(input)
}

fn column_index(headers: &csv::StringRecord, names: &[&str], required: usize) -> CliResult<Vec<Option<usize>>> {
    let find = |n: &str| headers.iter().position(|h| h == n);
    names
        .iter()
        .enumerate()
        .map(|(i, n)| match find(n) {
            None if i < required => Err(Failure::Schema(format!("missing required column `{n}`"))),
            found => Ok(found),
        })
        .collect()
}

fn parse_opt<T: std::str::FromStr>(rec: &csv::StringRecord, idx: Option<usize>, name: &str) -> Result<Option<T>, String> {
    match idx.and_then(|i| rec.get(i)).filter(|s| !s.is_empty()) {
        None => Ok(None),
        Some(s) => s.parse().map(Some).map_err(|_| format!("cannot parse {name} `{s}`")),
    }
}

fn deal_from_row(rec: &csv::StringRecord, idx: &[Option<usize>], horizon: u32) -> Result<(DealRecord, Option<f64>), String> {
    let field = |i: usize| rec.get(idx[i].expect("required column")).unwrap_or("");
    let text = |i: usize| -> Result<String, String> {
        let v = field(i);
        if v.is_empty() {
            Err(format!("empty {}", DEAL_COLUMNS[i]))
        } else {
            Ok(v.to_string())
        }
    };
    let stage: Stage = field(2).parse().map_err(|e: allocbench_core::Error| e.to_string())?;
    let year: i32 = field(3).parse().map_err(|_| format!("cannot parse year `{}`", field(3)))?;
    let amount_current: Option<f64> = parse_opt(rec, idx[6], "amount_current")?;
    let amount_next: Option<f64> = parse_opt(rec, idx[7], "amount_next")?;
    let months: Option<u32> = parse_opt(rec, idx[8], "months_to_next_round")?;
    let explicit: Option<f64> = parse_opt(rec, idx[9], "multiple")?;

    let deal = |multiple| -> Result<DealRecord, String> {
        Ok(DealRecord {
            company_id: text(0)?,
            investor_id: text(1)?,
            stage,
            year,
            sector: text(4)?,
            region: text(5)?,
            multiple,
        })
    };
    let from_amounts = match amount_current {
        Some(amount_current) => {
            let row = RawFundingRow {
                company_id: String::new(),
                investor_id: String::new(),
                stage,
                year,
                sector: String::new(),
                region: String::new(),
                amount_current,
                amount_next,
                months_to_next_round: months,
            };
            Some(compute_multiple(&row, horizon).map_err(|e| e.to_string())?)
        }
        None => None,
    };
    match (explicit, from_amounts) {
        (Some(m), _) if !(m >= 0.0) || !m.is_finite() => Err(format!("invalid multiple {m}")),
        (Some(m), implied) => Ok((deal(m)?, implied)),
        (None, Some(m)) => Ok((deal(m)?, None)),
        (None, None) => Err("neither multiple nor amount_current given".into()),
    }
}

/// Parse deals, apply the filter and report every row that was not used.
pub fn parse_deals<R: Read>(input: R, delimiter: u8, filter: &DealFilter, horizon: u32) -> CliResult<(Vec<DealRecord>, IngestReport)> {
    let mut rdr = reader(input, delimiter);
    let headers = rdr.headers().map_err(|e| Failure::Schema(e.to_string()))?.clone();
    let idx = column_index(&headers, &DEAL_COLUMNS, DEAL_REQUIRED)?;
    let mut report = IngestReport::default();
    let mut deals = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        report.rows += 1;
        let rec = rec.map_err(|e| Failure::Schema(format!("line {line}: {e}")))?;
        match deal_from_row(&rec, &idx, horizon) {
            Err(reason) => report.rejected.push(Rejection { line, reason }),
            Ok((deal, implied)) => {
                if let Some(im) = implied {
                    if (im - deal.multiple).abs() > MULTIPLE_MISMATCH_TOL * deal.multiple.abs().max(im.abs()) {
                        report.mismatches.push(MultipleMismatch { line, explicit: deal.multiple, from_amounts: im });
                    }
                }
                match filter.check(deal.stage, deal.year) {
                    FilterVerdict::Accept => deals.push(deal),
                    FilterVerdict::OutOfWindow => report.out_of_window += 1,
                    FilterVerdict::StageExcluded => report.stage_excluded += 1,
                }
            }
        }
    }
    report.accepted = deals.len();
    Ok((deals, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ForecastIngest {
    pub rows: usize,
    pub rejected: Vec<Rejection>,
}

pub fn parse_forecasts<R: Read>(input: R, delimiter: u8) -> CliResult<(Vec<ForecastRecord>, ForecastIngest)> {
    let mut rdr = reader(input, delimiter);
    let headers = rdr.headers().map_err(|e| Failure::Schema(e.to_string()))?.clone();
    let idx: Vec<usize> =
        column_index(&headers, &FORECAST_COLUMNS, FORECAST_COLUMNS.len())?.into_iter().map(Option::unwrap).collect();
    let mut report = ForecastIngest::default();
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        report.rows += 1;
        let rec = rec.map_err(|e| Failure::Schema(format!("line {line}: {e}")))?;
        let get = |c: usize| rec.get(idx[c]).unwrap_or("");
        let parsed = (|| -> Result<ForecastRecord, String> {
            let num = |c: usize| -> Result<f64, String> {
                get(c).parse().map_err(|_| format!("cannot parse {} `{}`", FORECAST_COLUMNS[c], get(c)))
            };
            let r = ForecastRecord {
                analyst_id: get(0).to_string(),
                firm_id: get(1).to_string(),
                year: get(2).parse().map_err(|_| format!("cannot parse year `{}`", get(2)))?,
                horizon: get(3).parse().map_err(|_| format!("cannot parse horizon `{}`", get(3)))?,
                forecast: num(4)?,
                realized: num(5)?,
            };
            if r.analyst_id.is_empty() || r.firm_id.is_empty() {
                return Err("empty identifier".into());
            }
            r.validate().map_err(|e| e.to_string())?;
            Ok(r)
        })();
        match parsed {
            Ok(r) => out.push(r),
            Err(reason) => report.rejected.push(Rejection { line, reason }),
        }
    }
    Ok((out, report))
}

fn csv_err(e: csv::Error) -> Failure {
    Failure::Runtime(e.to_string())
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_deals<W: Write>(out: W, deals: &[SynthDeal], delimiter: u8) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(out);
    w.write_record(DEAL_COLUMNS).map_err(csv_err)?;
    for d in deals {
        let r = &d.deal;
        w.write_record([
            r.company_id.clone(),
            r.investor_id.clone(),
            r.stage.token().to_string(),
            r.year.to_string(),
            r.sector.clone(),
            r.region.clone(),
            d.amount_current.to_string(),
            fmt_opt(d.amount_next),
            fmt_opt(d.months_to_next_round),
            r.multiple.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_forecasts<W: Write>(out: W, records: &[ForecastRecord], delimiter: u8) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(out);
    w.write_record(FORECAST_COLUMNS).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.analyst_id.clone(),
            r.firm_id.clone(),
            r.year.to_string(),
            r.horizon.to_string(),
            r.forecast.to_string(),
            r.realized.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Rejection reasons with counts, for summaries.
pub fn reason_counts(rejected: &[Rejection]) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for r in rejected {
        *m.entry(r.reason.clone()).or_insert(0) += 1;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "company_id,investor_id,stage,year,sector,region,amount_current,amount_next,months_to_next_round,multiple\n";

    fn parse(body: &str) -> CliResult<(Vec<DealRecord>, IngestReport)> {
        parse_deals(format!("{HEADER}{body}").as_bytes(), b',', &DealFilter::default(), 36)
    }

    #[test]
    fn amounts_and_explicit_multiples() {
        let (d, r) = parse("c1,i1,seed_a,2015,bio,eu,10,25,12,\nc2,i1,seed_a,2015,bio,eu,,,,1.5\nc3,i2,a_b,2016,bio,eu,10,,,\n").unwrap();
        assert_eq!(d.iter().map(|d| d.multiple).collect::<Vec<_>>(), vec![2.5, 1.5, 0.0]);
        assert_eq!(r.accepted, 3);
        assert!(r.rejected.is_empty());
    }

    #[test]
    fn explicit_wins_and_mismatch_is_reported() {
        let (d, r) = parse("c1,i1,seed_a,2015,bio,eu,10,25,12,2.0\n").unwrap();
        assert_eq!(d[0].multiple, 2.0);
        assert_eq!(r.mismatches, vec![MultipleMismatch { line: 2, explicit: 2.0, from_amounts: 2.5 }]);
        let (_, r) = parse("c1,i1,seed_a,2015,bio,eu,10,25,12,2.5\n").unwrap();
        assert!(r.mismatches.is_empty());
    }

    #[test]
    fn rejections_and_filters() {
        let (d, r) = parse(
            "c1,i1,series_x,2015,bio,eu,10,,,\nc2,i1,seed_a,1999,bio,eu,10,,,\nc3,i1,seed_a,2015,bio,eu,-1,,,\nc4,i1,seed_a,2015,bio,eu,,,,\nc5,i1,seed_a,2015,bio,eu,10,20,,\n",
        )
        .unwrap();
        assert!(d.is_empty());
        assert_eq!(r.out_of_window, 1);
        assert_eq!(r.rejected.iter().map(|x| x.line).collect::<Vec<_>>(), vec![2, 4, 5, 6]);
    }

    #[test]
    fn missing_column_names_it() {
        let e = parse_deals("company_id,investor_id,stage,year,sector\n".as_bytes(), b',', &DealFilter::default(), 36).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("`region`"));
    }

    #[test]
    fn optional_columns_can_be_absent_and_delimiter_configurable() {
        let text = "company_id;investor_id;stage;year;sector;region;multiple\nc1;i1;b_c;2020;ai;us;3\n";
        let (d, _) = parse_deals(text.as_bytes(), b';', &DealFilter::default(), 36).unwrap();
        assert_eq!(d[0].stage, Stage::BToC);
        assert_eq!(d[0].multiple, 3.0);
    }

    #[test]
    fn forecasts_round_trip() {
        let recs = vec![ForecastRecord { analyst_id: "a".into(), firm_id: "f".into(), year: 2015, horizon: 3, forecast: 0.031, realized: 0.02 }];
        let mut buf = Vec::new();
        write_forecasts(&mut buf, &recs, b'\t').unwrap();
        let (back, rep) = parse_forecasts(buf.as_slice(), b'\t').unwrap();
        assert_eq!(back, recs);
        assert!(rep.rejected.is_empty());
        let (_, rep) = parse_forecasts("analyst_id,firm_id,year,horizon,forecast,realized\na,f,2015,12,0.1,0.1\n".as_bytes(), b',').unwrap();
        assert_eq!(rep.rejected.len(), 1);
    }

    #[test]
    fn synth_deals_round_trip() {
        use allocbench_core::synth::{generate_deals, SynthConfig};
        let c = generate_deals(&SynthConfig { investors: 10, years: 1, sectors: 1, regions: 1, companies_per_stratum: 20, base_year: 2015, ..Default::default() }).unwrap();
        let mut buf = Vec::new();
        write_deals(&mut buf, &c.deals, b',').unwrap();
        let (back, rep) = parse_deals(buf.as_slice(), b',', &DealFilter::default(), 36).unwrap();
        assert_eq!(back, c.deal_records());
        assert!(rep.mismatches.is_empty() && rep.rejected.is_empty());
    }
}
