//! Parsing and aggregation of export and GDP-per-capita tables.
//!
//! Two fixed CSV schemas are accepted:
//!
//! ```text
//! year,exporter,product,value
//! country,year,gdppc
//! ```
//!
//! Both are UTF-8, use `.` as decimal point and accept `\n` or `\r\n` line endings.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TRADE_HEADER: [&str; 4] = ["year", "exporter", "product", "value"];
const GDP_HEADER: [&str; 3] = ["country", "year", "gdppc"];

/// One exporter/product/year row of raw trade data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub year: i32,
    pub exporter: String,
    pub product: String,
    /// Export value in current USD.
    pub value: f64,
}

/// Dense country x product export table for a single year.
///
/// Axes are sorted lexicographically and contain no all-zero row or column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeTable {
    pub year: i32,
    pub countries: Vec<String>,
    pub products: Vec<String>,
    /// `values[c][p]`, row-major by country.
    pub values: Vec<Vec<f64>>,
}

/// GDP per capita samples of one country, keyed by year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdpSeries {
    pub country: String,
    pub samples: BTreeMap<i32, f64>,
}

fn reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source)
}

fn malformed(line: u64, reason: impl Into<String>) -> Error {
    Error::MalformedRecord {
        line,
        reason: reason.into(),
    }
}

fn check_header(record: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let got: Vec<&str> = record.iter().collect();
    // A UTF-8 BOM on the first cell is tolerated.
    let first = got.first().map(|s| s.trim_start_matches('\u{feff}'));
    if got.len() != expected.len()
        || first != expected.first().copied()
        || got[1..] != expected[1..]
    {
        return Err(malformed(
            1,
            format!("expected header `{}`", expected.join(",")),
        ));
    }
    Ok(())
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

/// Validates an entity code: nonempty, no separators, no whitespace.
pub(crate) fn validate_code(code: &str, line: u64, what: &str) -> Result<()> {
    if code.is_empty() {
        return Err(malformed(line, format!("empty {what} code")));
    }
    if code
        .chars()
        .any(|c| c == ',' || c == ';' || c == '"' || c.is_whitespace() || c.is_control())
    {
        return Err(malformed(
            line,
            format!("{what} code {code:?} contains a delimiter character"),
        ));
    }
    Ok(())
}

fn parse_year(raw: &str, line: u64) -> Result<i32> {
    let year: i32 = raw
        .parse()
        .map_err(|_| malformed(line, format!("year {raw:?} is not an integer")))?;
    if !(1900..=2100).contains(&year) {
        return Err(malformed(line, format!("year {year} outside [1900, 2100]")));
    }
    Ok(year)
}

fn parse_real(raw: &str, line: u64, what: &str) -> Result<f64> {
    // Rust accepts "inf"/"NaN"; the schema only allows plain decimals.
    if raw.is_empty()
        || !raw
            .chars()
            .all(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'))
    {
        return Err(malformed(line, format!("{what} {raw:?} is not numeric")));
    }
    let v: f64 = raw
        .parse()
        .map_err(|_| malformed(line, format!("{what} {raw:?} is not numeric")))?;
    if !v.is_finite() {
        return Err(malformed(line, format!("{what} {raw:?} is not finite")));
    }
    Ok(v)
}

/// Parses a `year,exporter,product,value` stream into raw records.
///
/// Duplicate keys are kept as separate records; [`build_trade_table`] sums them.
pub fn parse_trade_csv<R: Read>(source: R) -> Result<Vec<TradeRecord>> {
    let mut rdr = reader(source);
    let mut rows = rdr.records();
    let header = match rows.next() {
        Some(h) => h.map_err(|e| malformed(1, e.to_string()))?,
        None => return Err(Error::EmptyInput("trade CSV has no header".into())),
    };
    check_header(&header, &TRADE_HEADER)?;

    let mut out = Vec::new();
    for row in rows {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            malformed(line, e.to_string())
        })?;
        let line = line_of(&row);
        if row.len() == 1 && row[0].is_empty() {
            continue;
        }
        if row.len() != TRADE_HEADER.len() {
            return Err(malformed(
                line,
                format!("expected 4 columns, found {}", row.len()),
            ));
        }
        let year = parse_year(&row[0], line)?;
        let exporter = row[1].to_uppercase();
        validate_code(&exporter, line, "exporter")?;
        let product = row[2].to_string();
        validate_code(&product, line, "product")?;
        let value = parse_real(&row[3], line, "value")?;
        if value < 0.0 {
            return Err(malformed(line, format!("negative value {value}")));
        }
        out.push(TradeRecord {
            year,
            exporter,
            product,
            // normalises -0.0
            value: value + 0.0,
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyInput("trade CSV has no data rows".into()));
    }
    Ok(out)
}

/// Aggregates the records of `year` into a dense table.
///
/// Duplicate (exporter, product) keys are summed in ascending value order so the
/// result does not depend on input row order. Countries and products whose total
/// is zero are dropped.
pub fn build_trade_table(records: &[TradeRecord], year: i32) -> Result<TradeTable> {
    let mut cells: BTreeMap<(&str, &str), Vec<f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.year == year) {
        cells
            .entry((r.exporter.as_str(), r.product.as_str()))
            .or_default()
            .push(r.value);
    }
    if cells.is_empty() {
        return Err(Error::EmptyInput(format!("no trade records for year {year}")));
    }

    let summed: BTreeMap<(&str, &str), f64> = cells
        .into_iter()
        .map(|(k, mut vs)| {
            vs.sort_by(f64::total_cmp);
            (k, vs.iter().sum())
        })
        .collect();

    let mut country_total: BTreeMap<&str, f64> = BTreeMap::new();
    let mut product_total: BTreeMap<&str, f64> = BTreeMap::new();
    for (&(c, p), &v) in &summed {
        *country_total.entry(c).or_default() += v;
        *product_total.entry(p).or_default() += v;
    }
    let countries: Vec<&str> = country_total
        .iter()
        .filter(|(_, &t)| t > 0.0)
        .map(|(&c, _)| c)
        .collect();
    let products: Vec<&str> = product_total
        .iter()
        .filter(|(_, &t)| t > 0.0)
        .map(|(&p, _)| p)
        .collect();
    if countries.is_empty() || products.is_empty() {
        return Err(Error::EmptyInput(format!(
            "all trade values for year {year} are zero"
        )));
    }

    let cidx: BTreeMap<&str, usize> = countries.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let pidx: BTreeMap<&str, usize> = products.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    let mut values = vec![vec![0.0; products.len()]; countries.len()];
    for (&(c, p), &v) in &summed {
        if let (Some(&i), Some(&j)) = (cidx.get(c), pidx.get(p)) {
            values[i][j] = v;
        }
    }

    Ok(TradeTable {
        year,
        countries: countries.into_iter().map(String::from).collect(),
        products: products.into_iter().map(String::from).collect(),
        values,
    })
}

impl TradeTable {
    pub fn total(&self) -> f64 {
        self.values.iter().flatten().sum()
    }

    /// Writes the nonzero cells in the trade schema with six fractional digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", TRADE_HEADER.join(","))?;
        for (c, row) in self.countries.iter().zip(&self.values) {
            for (p, &v) in self.products.iter().zip(row) {
                if v > 0.0 {
                    writeln!(out, "{},{},{},{:.6}", self.year, c, p, v)?;
                }
            }
        }
        Ok(())
    }
}

/// Parses a `country,year,gdppc` stream into one series per country.
pub fn parse_gdp_csv<R: Read>(source: R) -> Result<Vec<GdpSeries>> {
    let mut rdr = reader(source);
    let mut rows = rdr.records();
    let header = match rows.next() {
        Some(h) => h.map_err(|e| malformed(1, e.to_string()))?,
        None => return Err(Error::EmptyInput("GDP CSV has no header".into())),
    };
    check_header(&header, &GDP_HEADER)?;

    let mut by_country: BTreeMap<String, BTreeMap<i32, f64>> = BTreeMap::new();
    for row in rows {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            malformed(line, e.to_string())
        })?;
        let line = line_of(&row);
        if row.len() == 1 && row[0].is_empty() {
            continue;
        }
        if row.len() != GDP_HEADER.len() {
            return Err(malformed(
                line,
                format!("expected 3 columns, found {}", row.len()),
            ));
        }
        let country = row[0].to_uppercase();
        validate_code(&country, line, "country")?;
        let year = parse_year(&row[1], line)?;
        let gdppc = parse_real(&row[2], line, "gdppc")?;
        if gdppc <= 0.0 {
            return Err(Error::NonPositiveGdp {
                country,
                year,
                line,
            });
        }
        let samples = by_country.entry(country.clone()).or_default();
        if samples.insert(year, gdppc).is_some() {
            return Err(Error::DuplicateSample { country, year });
        }
    }
    if by_country.is_empty() {
        return Err(Error::EmptyInput("GDP CSV has no data rows".into()));
    }
    Ok(by_country
        .into_iter()
        .map(|(country, samples)| GdpSeries { country, samples })
        .collect())
}

/// Years present in a record set, ascending.
pub fn years(records: &[TradeRecord]) -> Vec<i32> {
    let mut ys: Vec<i32> = records.iter().map(|r| r.year).collect();
    ys.sort_unstable();
    ys.dedup();
    ys
}
