//! Call-report, rate and market-return ingestion, expense de-cumulation,
//! asset deciles and the per-decile change panel.
//!
//! Ratios are carried as decimal fractions of assets per quarter and rates as
//! percentage points. `intincy` arrives annualized and is divided by four;
//! `eintexp` arrives cumulative within the calendar year and is differenced.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quarter::Quarter;

pub const CALL_REPORT_COLUMNS: [&str; 5] = ["cert", "date", "intincy", "eintexp", "asset"];
pub const RATE_COLUMNS: [&str; 2] = ["date", "value"];
pub const MARKET_COLUMNS: [&str; 3] = ["date", "xlf_ret", "spy_ret"];

pub const NUM_DECILES: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct BankQuarterRecord {
    pub institution_id: String,
    pub quarter: Quarter,
    /// Annualized interest income over assets.
    pub int_income_ratio: f64,
    /// Interest expense accumulated since the start of the calendar year.
    pub cum_int_expense: f64,
    pub assets: f64,
}

/// One rejected input row. Serialized one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowError {
    pub file: String,
    pub line: u64,
    pub column: Option<String>,
    pub reason: String,
}

/// Parsed rows plus everything that was rejected on the way.
#[derive(Debug, Clone)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub errors: Vec<RowError>,
}

pub fn write_error_report(path: &Path, errors: &[RowError]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for err in errors {
        let line = serde_json::to_string(err).map_err(|e| Error::Data(e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

struct Table {
    index: Vec<usize>,
    reader: csv::Reader<Box<dyn Read>>,
    name: String,
}

fn open_table(reader: Box<dyn Read>, name: &str, required: &[&str]) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("{name}: {e}")))?
        .clone();
    let mut index = Vec::with_capacity(required.len());
    for col in required {
        let pos = headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(col))
            .ok_or_else(|| Error::Schema {
                path: name.into(),
                column: col.to_string(),
            })?;
        index.push(pos);
    }
    Ok(Table {
        index,
        reader,
        name: name.to_string(),
    })
}

fn open_path(path: &Path) -> Result<Box<dyn Read>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(Box::new(file))
}

/// Iterates data rows, yielding `(line, fields in `required` order)` and
/// collecting malformed rows into `errors`.
fn for_each_row(
    table: &mut Table,
    required: &[&str],
    errors: &mut Vec<RowError>,
    mut f: impl FnMut(u64, &[&str], &mut Vec<RowError>),
) {
    for row in table.reader.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                errors.push(RowError {
                    file: table.name.clone(),
                    line,
                    column: None,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.iter().all(|f| f.is_empty()) {
            continue;
        }
        let mut fields = Vec::with_capacity(required.len());
        let mut missing = None;
        for (col, &i) in required.iter().zip(&table.index) {
            match row.get(i) {
                Some(v) => fields.push(v),
                None => {
                    missing = Some(*col);
                    break;
                }
            }
        }
        if let Some(col) = missing {
            errors.push(RowError {
                file: table.name.clone(),
                line,
                column: Some(col.to_string()),
                reason: "missing field".into(),
            });
            continue;
        }
        f(line, &fields, errors);
    }
}

fn row_error(file: &str, line: u64, column: &str, reason: impl Into<String>) -> RowError {
    RowError {
        file: file.to_string(),
        line,
        column: Some(column.to_string()),
        reason: reason.into(),
    }
}

fn parse_num(file: &str, line: u64, column: &str, raw: &str) -> std::result::Result<f64, RowError> {
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(row_error(file, line, column, format!("unparsable number `{raw}`"))),
    }
}

pub fn parse_call_report(path: &Path) -> Result<Parsed<BankQuarterRecord>> {
    parse_call_report_from(open_path(path)?, &path.display().to_string())
}

pub fn parse_call_report_from(reader: Box<dyn Read>, name: &str) -> Result<Parsed<BankQuarterRecord>> {
    let mut table = open_table(reader, name, &CALL_REPORT_COLUMNS)?;
    let mut records = Vec::new();
    let mut errors = Vec::new();
    let mut seen = BTreeSet::new();
    let file = table.name.clone();
    for_each_row(&mut table, &CALL_REPORT_COLUMNS, &mut errors, |line, f, errors| {
        let parsed = (|| {
            let id = f[0];
            if id.is_empty() {
                return Err(row_error(&file, line, "cert", "empty institution id"));
            }
            let quarter = Quarter::from_date(f[1])
                .map_err(|_| row_error(&file, line, "date", format!("unparsable date `{}`", f[1])))?;
            let int_income_ratio = parse_num(&file, line, "intincy", f[2])?;
            let cum_int_expense = parse_num(&file, line, "eintexp", f[3])?;
            let assets = parse_num(&file, line, "asset", f[4])?;
            if assets <= 0.0 {
                return Err(row_error(&file, line, "asset", "nonpositive assets"));
            }
            if cum_int_expense < 0.0 {
                return Err(row_error(&file, line, "eintexp", "negative cumulative expense"));
            }
            Ok(BankQuarterRecord {
                institution_id: id.to_string(),
                quarter,
                int_income_ratio,
                cum_int_expense,
                assets,
            })
        })();
        match parsed {
            Ok(rec) => {
                if seen.insert((rec.institution_id.clone(), rec.quarter)) {
                    records.push(rec);
                } else {
                    errors.push(row_error(&file, line, "date", "duplicate institution-quarter"));
                }
            }
            Err(e) => errors.push(e),
        }
    });
    Ok(Parsed { records, errors })
}

/// How a quarter's policy-rate value is taken from higher-frequency data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RateSampling {
    /// Latest observation dated inside the quarter.
    #[default]
    LastObservation,
    QuarterlyAverage,
}

/// Quarterly rate levels in percentage points with no interior gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSeries {
    levels: BTreeMap<Quarter, f64>,
}

impl RateSeries {
    pub fn new(levels: BTreeMap<Quarter, f64>) -> Result<Self> {
        let mut prev: Option<Quarter> = None;
        for &q in levels.keys() {
            if let Some(p) = prev {
                if p.succ() != q {
                    return Err(Error::Alignment(p.succ()));
                }
            }
            prev = Some(q);
        }
        Ok(RateSeries { levels })
    }

    pub fn get(&self, q: Quarter) -> Option<f64> {
        self.levels.get(&q).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Quarter, f64)> + '_ {
        self.levels.iter().map(|(q, v)| (*q, *v))
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Parses a `date,value` export. FRED's `.` placeholder for missing days is skipped.
pub fn parse_rates(path: &Path, sampling: RateSampling) -> Result<(RateSeries, Vec<RowError>)> {
    parse_rates_from(open_path(path)?, &path.display().to_string(), sampling)
}

pub fn parse_rates_from(
    reader: Box<dyn Read>,
    name: &str,
    sampling: RateSampling,
) -> Result<(RateSeries, Vec<RowError>)> {
    let mut table = open_table(reader, name, &RATE_COLUMNS)?;
    let mut errors = Vec::new();
    // quarter -> (date, value) observations
    let mut obs: BTreeMap<Quarter, Vec<(String, f64)>> = BTreeMap::new();
    let file = table.name.clone();
    for_each_row(&mut table, &RATE_COLUMNS, &mut errors, |line, f, errors| {
        if f[1] == "." {
            return;
        }
        let q = match Quarter::from_date(f[0]) {
            Ok(q) => q,
            Err(_) => {
                errors.push(row_error(&file, line, "date", format!("unparsable date `{}`", f[0])));
                return;
            }
        };
        match parse_num(&file, line, "value", f[1]) {
            Ok(v) => obs.entry(q).or_default().push((f[0].to_string(), v)),
            Err(e) => errors.push(e),
        }
    });
    let mut levels = BTreeMap::new();
    for (q, mut values) in obs {
        let level = match sampling {
            RateSampling::LastObservation => {
                values.sort_by(|a, b| a.0.cmp(&b.0));
                values.last().map(|v| v.1).unwrap_or(f64::NAN)
            }
            RateSampling::QuarterlyAverage => values.iter().map(|v| v.1).sum::<f64>() / values.len() as f64,
        };
        levels.insert(q, level);
    }
    Ok((RateSeries::new(levels)?, errors))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketReturn {
    pub quarter: Quarter,
    pub xlf_ret: f64,
    pub spy_ret: f64,
}

pub fn parse_market(path: &Path) -> Result<Parsed<MarketReturn>> {
    parse_market_from(open_path(path)?, &path.display().to_string())
}

pub fn parse_market_from(reader: Box<dyn Read>, name: &str) -> Result<Parsed<MarketReturn>> {
    let mut table = open_table(reader, name, &MARKET_COLUMNS)?;
    let mut errors = Vec::new();
    let mut records: BTreeMap<Quarter, MarketReturn> = BTreeMap::new();
    let file = table.name.clone();
    for_each_row(&mut table, &MARKET_COLUMNS, &mut errors, |line, f, errors| {
        let parsed = (|| {
            let quarter = Quarter::from_date(f[0])
                .map_err(|_| row_error(&file, line, "date", format!("unparsable date `{}`", f[0])))?;
            Ok(MarketReturn {
                quarter,
                xlf_ret: parse_num(&file, line, "xlf_ret", f[1])?,
                spy_ret: parse_num(&file, line, "spy_ret", f[2])?,
            })
        })();
        match parsed {
            Ok(r) => {
                if records.insert(r.quarter, r).is_some() {
                    errors.push(row_error(&file, line, "date", "duplicate quarter"));
                }
            }
            Err(e) => errors.push(e),
        }
    });
    Ok(Parsed {
        records: records.into_values().collect(),
        errors,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuarterlyExpense {
    pub quarter: Quarter,
    pub amount: f64,
    /// `amount / assets` for the same quarter.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlaggedExpense {
    pub institution_id: String,
    pub quarter: Quarter,
    pub reason: &'static str,
}

#[derive(Debug, Clone, Default)]
pub struct DeannualizedExpense {
    pub series: BTreeMap<String, Vec<QuarterlyExpense>>,
    pub flagged: Vec<FlaggedExpense>,
}

impl DeannualizedExpense {
    pub fn ratio(&self, id: &str, q: Quarter) -> Option<f64> {
        let s = self.series.get(id)?;
        s.binary_search_by(|e| e.quarter.cmp(&q)).ok().map(|i| s[i].ratio)
    }
}

/// Differences within-year cumulative expense into quarterly amounts.
///
/// The first quarter of each year is taken as-is; later quarters need the
/// preceding quarter of the same year and a non-negative difference,
/// otherwise they are flagged and left out.
pub fn deannualize_expense(records: &[BankQuarterRecord]) -> DeannualizedExpense {
    let mut by_bank: BTreeMap<&str, Vec<&BankQuarterRecord>> = BTreeMap::new();
    for r in records {
        by_bank.entry(&r.institution_id).or_default().push(r);
    }
    let mut out = DeannualizedExpense::default();
    for (id, mut recs) in by_bank {
        recs.sort_by_key(|r| r.quarter);
        let mut series = Vec::with_capacity(recs.len());
        for (i, r) in recs.iter().enumerate() {
            let amount = if r.quarter.q() == 1 {
                r.cum_int_expense
            } else {
                let prev = i
                    .checked_sub(1)
                    .map(|j| recs[j])
                    .filter(|p| p.quarter.succ() == r.quarter);
                let Some(prev) = prev else {
                    out.flagged.push(FlaggedExpense {
                        institution_id: id.to_string(),
                        quarter: r.quarter,
                        reason: "missing prior quarter",
                    });
                    continue;
                };
                let diff = r.cum_int_expense - prev.cum_int_expense;
                if diff < 0.0 {
                    out.flagged.push(FlaggedExpense {
                        institution_id: id.to_string(),
                        quarter: r.quarter,
                        reason: "decreasing cumulative expense",
                    });
                    continue;
                }
                diff
            };
            series.push(QuarterlyExpense {
                quarter: r.quarter,
                amount,
                ratio: amount / r.assets,
            });
        }
        out.series.insert(id.to_string(), series);
    }
    out
}

/// Rank-based asset deciles for one cross-section. Decile 1 holds the
/// smallest banks; ties are broken by institution id.
pub fn assign_deciles(cross_section: &[(&str, f64)], quarter: Quarter) -> Result<BTreeMap<String, u8>> {
    let n = cross_section.len();
    if n < NUM_DECILES {
        return Err(Error::InsufficientCrossSection { quarter, count: n });
    }
    let mut ranked: Vec<&(&str, f64)> = cross_section.iter().collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));
    Ok(ranked
        .into_iter()
        .enumerate()
        .map(|(rank, (id, _))| (id.to_string(), (rank * NUM_DECILES / n + 1) as u8))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    #[default]
    Equal,
    Asset,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PanelOptions {
    pub weighting: Weighting,
    /// Multiplier applied to both ratios after conversion to per-quarter
    /// fractions (400 gives annualized percent).
    pub ratio_scale: f64,
}

impl Default for PanelOptions {
    fn default() -> Self {
        PanelOptions {
            weighting: Weighting::Equal,
            ratio_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecileSeries {
    pub decile: u8,
    /// Quarters of the change observations.
    pub quarters: Vec<Quarter>,
    pub d_int_inc: Vec<f64>,
    pub d_int_exp: Vec<f64>,
    pub d_ff: Vec<f64>,
    pub d_ff_lag: Vec<f64>,
    /// Aggregate levels, one per quarter of `DecilePanel::level_quarters`.
    pub income_level: Vec<f64>,
    pub expense_level: Vec<f64>,
}

impl DecileSeries {
    pub fn len(&self) -> usize {
        self.d_ff.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d_ff.is_empty()
    }

    /// Rows `[1, dFF_t, dFF_{t-1}]`.
    pub fn regressors(&self) -> Vec<[f64; 3]> {
        self.d_ff
            .iter()
            .zip(&self.d_ff_lag)
            .map(|(&a, &b)| [1.0, a, b])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecilePanel {
    pub level_quarters: Vec<Quarter>,
    /// Deciles 1..=10 in order.
    pub deciles: Vec<DecileSeries>,
}

impl DecilePanel {
    pub fn decile(&self, d: u8) -> Option<&DecileSeries> {
        self.deciles.iter().find(|s| s.decile == d)
    }
}

fn weighted_mean(values: &[(f64, f64)], weighting: Weighting) -> f64 {
    match weighting {
        Weighting::Equal => values.iter().map(|v| v.0).sum::<f64>() / values.len() as f64,
        Weighting::Asset => {
            let w: f64 = values.iter().map(|v| v.1).sum();
            values.iter().map(|v| v.0 * v.1).sum::<f64>() / w
        }
    }
}

/// Aggregates bank rows into per-decile levels, differences them, and aligns
/// the result with rate changes and their one-quarter lag.
pub fn build_decile_panel(
    records: &[BankQuarterRecord],
    rates: &RateSeries,
    options: PanelOptions,
) -> Result<DecilePanel> {
    let expense = deannualize_expense(records);
    let mut by_quarter: BTreeMap<Quarter, Vec<&BankQuarterRecord>> = BTreeMap::new();
    for r in records {
        by_quarter.entry(r.quarter).or_default().push(r);
    }
    let level_quarters: Vec<Quarter> = by_quarter.keys().copied().collect();
    if level_quarters.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: level_quarters.len(),
        });
    }
    for w in level_quarters.windows(2) {
        if w[0].succ() != w[1] {
            return Err(Error::Data(format!("no call-report rows for {}", w[0].succ())));
        }
    }

    let mut income = (0..NUM_DECILES)
        .map(|_| Vec::with_capacity(level_quarters.len()))
        .collect::<Vec<_>>();
    let mut expense_lv = (0..NUM_DECILES)
        .map(|_| Vec::with_capacity(level_quarters.len()))
        .collect::<Vec<_>>();
    for (&q, rows) in &by_quarter {
        let cross: Vec<(&str, f64)> = rows.iter().map(|r| (r.institution_id.as_str(), r.assets)).collect();
        let deciles = assign_deciles(&cross, q)?;
        let mut inc: Vec<Vec<(f64, f64)>> = vec![Vec::new(); NUM_DECILES];
        let mut exp: Vec<Vec<(f64, f64)>> = vec![Vec::new(); NUM_DECILES];
        for r in rows {
            let d = deciles[&r.institution_id] as usize - 1;
            inc[d].push((r.int_income_ratio / 4.0 * options.ratio_scale, r.assets));
            if let Some(ratio) = expense.ratio(&r.institution_id, q) {
                exp[d].push((ratio * options.ratio_scale, r.assets));
            }
        }
        for d in 0..NUM_DECILES {
            if exp[d].is_empty() {
                return Err(Error::Data(format!(
                    "decile {} has no valid quarterly expense at {q}",
                    d + 1
                )));
            }
            income[d].push(weighted_mean(&inc[d], options.weighting));
            expense_lv[d].push(weighted_mean(&exp[d], options.weighting));
        }
    }

    let first = level_quarters[0];
    let mut ff = Vec::with_capacity(level_quarters.len() + 1);
    for q in std::iter::once(first.pred()).chain(level_quarters.iter().copied()) {
        ff.push(rates.get(q).ok_or(Error::Alignment(q))?);
    }
    // ff[i + 1] is the level at level_quarters[i]
    let d_ff: Vec<f64> = (1..level_quarters.len()).map(|i| ff[i + 1] - ff[i]).collect();
    let d_ff_lag: Vec<f64> = (1..level_quarters.len()).map(|i| ff[i] - ff[i - 1]).collect();
    let quarters = level_quarters[1..].to_vec();

    let diff = |v: &[f64]| v.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>();
    let deciles = (0..NUM_DECILES)
        .map(|d| DecileSeries {
            decile: d as u8 + 1,
            quarters: quarters.clone(),
            d_int_inc: diff(&income[d]),
            d_int_exp: diff(&expense_lv[d]),
            d_ff: d_ff.clone(),
            d_ff_lag: d_ff_lag.clone(),
            income_level: income[d].clone(),
            expense_level: expense_lv[d].clone(),
        })
        .collect();
    Ok(DecilePanel {
        level_quarters,
        deciles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(y: i32, n: u8) -> Quarter {
        Quarter::new(y, n).unwrap()
    }

    fn rec(id: &str, quarter: Quarter, inc: f64, cum: f64, assets: f64) -> BankQuarterRecord {
        BankQuarterRecord {
            institution_id: id.into(),
            quarter,
            int_income_ratio: inc,
            cum_int_expense: cum,
            assets,
        }
    }

    fn parse(text: &str) -> Result<Parsed<BankQuarterRecord>> {
        parse_call_report_from(Box::new(std::io::Cursor::new(text.to_string())), "mem.csv")
    }

    #[test]
    fn parses_well_formed_rows() {
        let text = "cert,date,intincy,eintexp,asset\n\
                    1,2001-03-31,0.06,10,1000\n\
                    1,2001-06-30,0.061,25,1010\n\
                    2,2001-03-31,0.05,3,400\n";
        let parsed = parse(text).unwrap();
        assert_eq!(parsed.records.len(), 3);
        assert!(parsed.errors.is_empty());
        assert_eq!(parsed.records[1].quarter, q(2001, 2));
        assert_eq!(parsed.records[2].assets, 400.0);
    }

    #[test]
    fn reports_row_errors_with_lines() {
        let text = "cert,date,intincy,eintexp,asset\n\
                    1,2001-03-31,0.06,10,0\n\
                    2,2001-03-31,abc,10,5\n\
                    3,2001-03-31,0.06,10,5\n";
        let parsed = parse(text).unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.errors.len(), 2);
        assert_eq!(parsed.errors[0].reason, "nonpositive assets");
        assert_eq!(parsed.errors[0].line, 2);
        assert_eq!(parsed.errors[1].column.as_deref(), Some("intincy"));
        assert_eq!(parsed.errors[1].line, 3);
    }

    #[test]
    fn missing_column_is_schema_error() {
        let err = parse("cert,date,intincy,asset\n1,2001-03-31,0.06,5\n").unwrap_err();
        assert!(matches!(err, Error::Schema { ref column, .. } if column == "eintexp"));
    }

    #[test]
    fn two_banks_four_quarters() {
        let mut text = String::from("cert,date,intincy,eintexp,asset\n");
        for bank in ["A", "B"] {
            for (i, date) in ["2010-03-31", "2010-06-30", "2010-09-30", "2010-12-31"]
                .iter()
                .enumerate()
            {
                text.push_str(&format!("{bank},{date},0.05,{},100\n", i + 1));
            }
        }
        let parsed = parse(&text).unwrap();
        assert_eq!(parsed.records.len(), 8);
        for bank in ["A", "B"] {
            let qs: Vec<Quarter> = parsed
                .records
                .iter()
                .filter(|r| r.institution_id == bank)
                .map(|r| r.quarter)
                .collect();
            assert_eq!(qs.len(), 4);
            assert!(qs.windows(2).all(|w| w[0].succ() == w[1]));
        }
    }

    #[test]
    fn duplicate_rows_are_rejected() {
        let text = "cert,date,intincy,eintexp,asset\n1,2001-03-31,0.06,10,5\n1,2001-03-31,0.06,10,5\n";
        let parsed = parse(text).unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.errors[0].reason, "duplicate institution-quarter");
    }

    fn amounts(cum: &[f64]) -> (Vec<f64>, Vec<FlaggedExpense>) {
        let records: Vec<_> = cum
            .iter()
            .enumerate()
            .map(|(i, &c)| rec("X", q(2005, i as u8 + 1), 0.05, c, 1.0))
            .collect();
        let out = deannualize_expense(&records);
        (out.series["X"].iter().map(|e| e.amount).collect(), out.flagged)
    }

    #[test]
    fn deannualize_differences_within_year() {
        assert_eq!(amounts(&[10.0, 25.0, 45.0, 70.0]).0, vec![10.0, 15.0, 20.0, 25.0]);
        assert_eq!(amounts(&[10.0, 10.0, 10.0, 10.0]).0, vec![10.0, 0.0, 0.0, 0.0]);
        let (a, flagged) = amounts(&[10.0, 8.0]);
        assert_eq!(a, vec![10.0]);
        assert_eq!(flagged.len(), 1);
        assert_eq!(flagged[0].quarter, q(2005, 2));
    }

    #[test]
    fn deannualize_restarts_each_year_and_normalizes() {
        let records = vec![
            rec("X", q(2005, 4), 0.05, 40.0, 100.0),
            rec("X", q(2006, 1), 0.05, 12.0, 200.0),
            rec("X", q(2006, 3), 0.05, 30.0, 200.0),
        ];
        let out = deannualize_expense(&records);
        let s = &out.series["X"];
        // 2005Q4 lacks Q3, 2006Q3 lacks Q2
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].ratio, 12.0 / 200.0);
        assert_eq!(out.flagged.len(), 2);
        assert!(out.flagged.iter().all(|f| f.reason == "missing prior quarter"));
    }

    #[test]
    fn deciles_one_bank_each() {
        let ids: Vec<String> = (0..10).map(|i| format!("b{i}")).collect();
        let cross: Vec<(&str, f64)> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), 100.0 - i as f64))
            .collect();
        let d = assign_deciles(&cross, q(2000, 1)).unwrap();
        assert_eq!(d["b0"], 10);
        assert_eq!(d["b9"], 1);
        let mut counts = [0; 10];
        for v in d.values() {
            counts[*v as usize - 1] += 1;
        }
        assert_eq!(counts, [1; 10]);
    }

    #[test]
    fn deciles_balanced_sizes() {
        for n in [20usize, 23, 37] {
            let ids: Vec<String> = (0..n).map(|i| format!("b{i:03}")).collect();
            let cross: Vec<(&str, f64)> = ids
                .iter()
                .enumerate()
                .map(|(i, id)| (id.as_str(), (i * 7 % n) as f64))
                .collect();
            let d = assign_deciles(&cross, q(2000, 1)).unwrap();
            let mut counts = [0usize; 10];
            for v in d.values() {
                counts[*v as usize - 1] += 1;
            }
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            assert!(hi - lo <= 1, "{counts:?}");
            if n == 20 {
                assert_eq!(counts, [2; 10]);
            }
        }
    }

    #[test]
    fn decile_ties_break_by_id() {
        let ids: Vec<String> = (0..10).map(|i| format!("b{i}")).collect();
        let mut cross: Vec<(&str, f64)> = ids.iter().map(|id| (id.as_str(), 5.0)).collect();
        let a = assign_deciles(&cross, q(2000, 1)).unwrap();
        cross.reverse();
        let b = assign_deciles(&cross, q(2000, 1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a["b0"], 1);
        assert_eq!(a["b9"], 10);
    }

    #[test]
    fn too_few_banks() {
        let cross = vec![("a", 1.0); 9];
        assert!(matches!(
            assign_deciles(&cross, q(2000, 1)),
            Err(Error::InsufficientCrossSection { count: 9, .. })
        ));
    }

    #[test]
    fn weighted_means() {
        let v = [(1.0, 1.0), (3.0, 3.0)];
        assert_eq!(weighted_mean(&v, Weighting::Equal), 2.0);
        assert_eq!(weighted_mean(&v, Weighting::Asset), 2.5);
    }

    fn rates(from: Quarter, values: &[f64]) -> RateSeries {
        let mut m = BTreeMap::new();
        let mut qq = from;
        for &v in values {
            m.insert(qq, v);
            qq = qq.succ();
        }
        RateSeries::new(m).unwrap()
    }

    /// Ten banks, all with the same ratios, so every decile carries `levels`.
    fn uniform_records(levels: &[f64], start: Quarter) -> Vec<BankQuarterRecord> {
        let mut out = Vec::new();
        for b in 0..10 {
            let mut qq = start;
            let mut cum = 0.0;
            for &lv in levels {
                if qq.q() == 1 {
                    cum = 0.0;
                }
                cum += 0.01 * (b as f64 + 1.0);
                out.push(rec(&format!("b{b}"), qq, lv * 4.0, cum, b as f64 + 1.0));
                qq = qq.succ();
            }
        }
        out
    }

    #[test]
    fn panel_differences_levels() {
        let start = q(2001, 1);
        let records = uniform_records(&[1.0, 1.2, 1.1], start);
        let panel = build_decile_panel(
            &records,
            &rates(start.pred(), &[5.0, 5.5, 5.25, 4.0]),
            PanelOptions::default(),
        )
        .unwrap();
        let d1 = panel.decile(1).unwrap();
        let expected = [0.2, -0.1];
        for (a, b) in d1.d_int_inc.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(d1.d_ff, vec![-0.25, -1.25]);
        assert_eq!(d1.d_ff_lag, vec![0.5, -0.25]);
        assert_eq!(d1.quarters, vec![q(2001, 2), q(2001, 3)]);
        // expense ratio is 0.01 per quarter for every bank
        assert!(d1.d_int_exp.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn panel_requires_lead_rate() {
        let start = q(2001, 1);
        let records = uniform_records(&[1.0, 1.2, 1.1], start);
        let err = build_decile_panel(&records, &rates(start, &[5.0, 5.5, 5.25]), PanelOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Alignment(qq) if qq == start.pred()));
    }

    #[test]
    fn rate_gap_rejected() {
        let mut m = BTreeMap::new();
        m.insert(q(2000, 1), 1.0);
        m.insert(q(2000, 3), 1.0);
        assert!(matches!(RateSeries::new(m), Err(Error::Alignment(_))));
    }

    #[test]
    fn rate_sampling_modes() {
        let text = "date,value\n2000-01-31,1.0\n2000-03-31,3.0\n2000-02-29,2.0\n2000-04-30,.\n2000-05-31,4.0\n";
        let read = |s| {
            parse_rates_from(Box::new(std::io::Cursor::new(text.to_string())), "r.csv", s)
                .unwrap()
                .0
        };
        let last = read(RateSampling::LastObservation);
        assert_eq!(last.get(q(2000, 1)), Some(3.0));
        assert_eq!(last.get(q(2000, 2)), Some(4.0));
        let avg = read(RateSampling::QuarterlyAverage);
        assert_eq!(avg.get(q(2000, 1)), Some(2.0));
    }

    #[test]
    fn market_parse() {
        let text = "date,xlf_ret,spy_ret\n2000-03-31,0.01,0.02\n2000-06-30,x,0.02\n";
        let parsed = parse_market_from(Box::new(std::io::Cursor::new(text.to_string())), "m.csv").unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.errors.len(), 1);
        assert_eq!(parsed.records[0].spy_ret, 0.02);
    }
}
