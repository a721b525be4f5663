//! Revealed comparative advantage, the binary country-product matrix and
//! its nestedness.

use std::collections::{BTreeSet, VecDeque};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{validate_code, TradeTable};

/// Balassa RCA values aligned with the axes of the source table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcaTable {
    pub countries: Vec<String>,
    pub products: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

/// Binary country x product matrix with cached degrees.
///
/// Every country exports at least one product and every product has at least
/// one exporter. Rows or columns removed while establishing that are kept in
/// `removed_countries` / `removed_products`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryCPMatrix {
    countries: Vec<String>,
    products: Vec<String>,
    m: Vec<Vec<u8>>,
    diversification: Vec<usize>,
    ubiquity: Vec<usize>,
    removed_countries: Vec<String>,
    removed_products: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    countries: Vec<String>,
    products: Vec<String>,
    rows: Vec<Vec<u8>>,
}

impl BinaryCPMatrix {
    /// Builds a matrix from 0/1 rows, pruning empty rows and columns.
    pub fn new(countries: Vec<String>, products: Vec<String>, rows: Vec<Vec<u8>>) -> Result<Self> {
        Self::with_removed(countries, products, rows, Vec::new(), Vec::new())
    }

    fn with_removed(
        countries: Vec<String>,
        products: Vec<String>,
        rows: Vec<Vec<u8>>,
        mut removed_countries: Vec<String>,
        mut removed_products: Vec<String>,
    ) -> Result<Self> {
        if rows.len() != countries.len() {
            return Err(Error::LengthMismatch {
                expected: countries.len(),
                got: rows.len(),
            });
        }
        for row in &rows {
            if row.len() != products.len() {
                return Err(Error::LengthMismatch {
                    expected: products.len(),
                    got: row.len(),
                });
            }
            if row.iter().any(|&v| v > 1) {
                return Err(Error::InvalidParameter("matrix cells must be 0 or 1".into()));
            }
        }
        check_unique(&countries, "country")?;
        check_unique(&products, "product")?;

        // A column can only lose exporters when rows are dropped, and dropping a
        // zero row removes no ones, so a single pass per axis suffices.
        let keep_p: Vec<bool> = (0..products.len())
            .map(|p| rows.iter().any(|r| r[p] == 1))
            .collect();
        let keep_c: Vec<bool> = rows.iter().map(|r| r.contains(&1)).collect();

        let mut new_countries = Vec::new();
        let mut new_rows = Vec::new();
        for ((c, row), keep) in countries.into_iter().zip(rows).zip(&keep_c) {
            if *keep {
                new_countries.push(c);
                new_rows.push(
                    row.into_iter()
                        .zip(&keep_p)
                        .filter_map(|(v, &k)| k.then_some(v))
                        .collect::<Vec<u8>>(),
                );
            } else {
                removed_countries.push(c);
            }
        }
        let mut new_products = Vec::new();
        for (p, keep) in products.into_iter().zip(&keep_p) {
            if *keep {
                new_products.push(p);
            } else {
                removed_products.push(p);
            }
        }
        if new_countries.is_empty() || new_products.is_empty() {
            return Err(Error::EmptyMatrix);
        }

        let diversification = new_rows
            .iter()
            .map(|r| r.iter().map(|&v| v as usize).sum())
            .collect();
        let ubiquity = (0..new_products.len())
            .map(|p| new_rows.iter().map(|r| r[p] as usize).sum())
            .collect();
        Ok(Self {
            countries: new_countries,
            products: new_products,
            m: new_rows,
            diversification,
            ubiquity,
            removed_countries,
            removed_products,
        })
    }

    pub fn countries(&self) -> &[String] {
        &self.countries
    }

    pub fn products(&self) -> &[String] {
        &self.products
    }

    pub fn n_countries(&self) -> usize {
        self.countries.len()
    }

    pub fn n_products(&self) -> usize {
        self.products.len()
    }

    #[inline]
    pub fn get(&self, c: usize, p: usize) -> bool {
        self.m[c][p] == 1
    }

    pub fn rows(&self) -> &[Vec<u8>] {
        &self.m
    }

    /// k_c, products exported by each country.
    pub fn diversification(&self) -> &[usize] {
        &self.diversification
    }

    /// k_p, exporters of each product.
    pub fn ubiquity(&self) -> &[usize] {
        &self.ubiquity
    }

    pub fn removed_countries(&self) -> &[String] {
        &self.removed_countries
    }

    pub fn removed_products(&self) -> &[String] {
        &self.removed_products
    }

    pub fn ones(&self) -> usize {
        self.diversification.iter().sum()
    }

    pub fn fill(&self) -> f64 {
        self.ones() as f64 / (self.n_countries() * self.n_products()) as f64
    }

    pub fn country_index(&self, code: &str) -> Option<usize> {
        self.countries.iter().position(|c| c == code)
    }

    pub fn product_index(&self, code: &str) -> Option<usize> {
        self.products.iter().position(|p| p == code)
    }

    /// Product indices exported by country `c`.
    pub fn basket(&self, c: usize) -> Vec<usize> {
        (0..self.n_products()).filter(|&p| self.get(c, p)).collect()
    }

    /// Whether the bipartite graph has a single connected component.
    pub fn is_connected(&self) -> bool {
        let (nc, np) = (self.n_countries(), self.n_products());
        let mut seen_c = vec![false; nc];
        let mut seen_p = vec![false; np];
        let mut queue = VecDeque::from([0usize]);
        seen_c[0] = true;
        while let Some(c) = queue.pop_front() {
            for p in 0..np {
                if self.get(c, p) && !seen_p[p] {
                    seen_p[p] = true;
                    for (c2, seen) in seen_c.iter_mut().enumerate() {
                        if !*seen && self.get(c2, p) {
                            *seen = true;
                            queue.push_back(c2);
                        }
                    }
                }
            }
        }
        seen_c.iter().all(|&s| s) && seen_p.iter().all(|&s| s)
    }

    /// Returns a copy with the given rows and columns removed; degrees are
    /// re-established and any further empty lines reported as removed.
    pub fn without(&self, drop_countries: &[usize], drop_products: &[usize]) -> Result<Self> {
        let dc: BTreeSet<usize> = drop_countries.iter().copied().collect();
        let dp: BTreeSet<usize> = drop_products.iter().copied().collect();
        let mut removed_c = self.removed_countries.clone();
        let mut removed_p = self.removed_products.clone();
        removed_c.extend(dc.iter().map(|&c| self.countries[c].clone()));
        removed_p.extend(dp.iter().map(|&p| self.products[p].clone()));
        let countries = (0..self.n_countries())
            .filter(|c| !dc.contains(c))
            .map(|c| self.countries[c].clone())
            .collect();
        let products = (0..self.n_products())
            .filter(|p| !dp.contains(p))
            .map(|p| self.products[p].clone())
            .collect();
        let rows = (0..self.n_countries())
            .filter(|c| !dc.contains(c))
            .map(|c| {
                (0..self.n_products())
                    .filter(|p| !dp.contains(p))
                    .map(|p| self.m[c][p])
                    .collect()
            })
            .collect();
        Self::with_removed(countries, products, rows, removed_c, removed_p)
    }

    /// Rebuilds the matrix with replaced cells, keeping the removal history.
    pub(crate) fn with_rows(&self, rows: Vec<Vec<u8>>) -> Result<Self> {
        Self::with_removed(
            self.countries.clone(),
            self.products.clone(),
            rows,
            self.removed_countries.clone(),
            self.removed_products.clone(),
        )
    }

    /// CSV with product codes in the header and country codes in the first column.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "country")?;
        for p in &self.products {
            write!(out, ",{p}")?;
        }
        writeln!(out)?;
        for (c, row) in self.countries.iter().zip(&self.m) {
            write!(out, "{c}")?;
            for v in row {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(source: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(source);
        let mut records = rdr.records();
        let header = records
            .next()
            .ok_or_else(|| Error::EmptyInput("matrix CSV is empty".into()))?
            .map_err(|e| Error::MalformedRecord {
                line: 1,
                reason: e.to_string(),
            })?;
        if header.len() < 2 {
            return Err(Error::MalformedRecord {
                line: 1,
                reason: "matrix header needs at least one product column".into(),
            });
        }
        let products: Vec<String> = header.iter().skip(1).map(String::from).collect();
        for p in &products {
            validate_code(p, 1, "product")?;
        }
        let mut countries = Vec::new();
        let mut rows = Vec::new();
        for rec in records {
            let rec = rec.map_err(|e| Error::MalformedRecord {
                line: e.position().map_or(0, |p| p.line()),
                reason: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() == 1 && rec[0].is_empty() {
                continue;
            }
            if rec.len() != products.len() + 1 {
                return Err(Error::MalformedRecord {
                    line,
                    reason: format!("expected {} columns, found {}", products.len() + 1, rec.len()),
                });
            }
            let code = rec[0].to_uppercase();
            validate_code(&code, line, "country")?;
            let row = rec
                .iter()
                .skip(1)
                .map(|cell| match cell {
                    "0" => Ok(0u8),
                    "1" => Ok(1u8),
                    other => Err(Error::MalformedRecord {
                        line,
                        reason: format!("cell {other:?} is not 0 or 1"),
                    }),
                })
                .collect::<Result<Vec<u8>>>()?;
            countries.push(code);
            rows.push(row);
        }
        if countries.is_empty() {
            return Err(Error::EmptyInput("matrix CSV has no data rows".into()));
        }
        Self::new(countries, products, rows)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(MatrixJson {
            countries: self.countries.clone(),
            products: self.products.clone(),
            rows: self.m.clone(),
        })
        .expect("matrix serializes")
    }

    pub fn from_json(value: &str) -> Result<Self> {
        let j: MatrixJson = serde_json::from_str(value)?;
        Self::new(j.countries, j.products, j.rows)
    }
}

fn check_unique(codes: &[String], what: &str) -> Result<()> {
    let mut seen = BTreeSet::new();
    for c in codes {
        if !seen.insert(c.as_str()) {
            return Err(Error::InvalidParameter(format!("duplicate {what} code {c}")));
        }
    }
    Ok(())
}

/// Balassa revealed comparative advantage of every country-product cell.
///
/// `RCA_cp = (V_cp / sum_p V_cp) / (sum_c V_cp / sum_cp V_cp)`; cells whose
/// row or column total is zero get 0.
pub fn rca(table: &TradeTable) -> Result<RcaTable> {
    if table.countries.is_empty() || table.products.is_empty() {
        return Err(Error::EmptyInput("trade table has no cells".into()));
    }
    let row_tot: Vec<f64> = table.values.iter().map(|r| r.iter().sum()).collect();
    let col_tot: Vec<f64> = (0..table.products.len())
        .map(|p| table.values.iter().map(|r| r[p]).sum())
        .collect();
    let world: f64 = row_tot.iter().sum();
    if world <= 0.0 {
        return Err(Error::EmptyInput("world export total is zero".into()));
    }
    let values = table
        .values
        .iter()
        .zip(&row_tot)
        .map(|(row, &rt)| {
            row.iter()
                .zip(&col_tot)
                .map(|(&v, &ct)| {
                    if rt > 0.0 && ct > 0.0 {
                        (v / rt) / (ct / world)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    Ok(RcaTable {
        countries: table.countries.clone(),
        products: table.products.clone(),
        values,
    })
}

/// Thresholds RCA into M_cp, inclusive at `threshold`.
pub fn binarize(rca: &RcaTable, threshold: f64) -> Result<BinaryCPMatrix> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "RCA threshold must be positive, got {threshold}"
        )));
    }
    let rows = rca
        .values
        .iter()
        .map(|r| r.iter().map(|&v| u8::from(v >= threshold)).collect())
        .collect();
    BinaryCPMatrix::new(rca.countries.clone(), rca.products.clone(), rows)
}

/// NODF nestedness of a binary matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NestednessReport {
    pub nodf_rows: f64,
    pub nodf_cols: f64,
    pub nodf_total: f64,
    pub fill: f64,
}

/// Sum of pair contributions over all unordered pairs of lines, and pair count.
///
/// A pair with different degrees contributes `100 * overlap / k_small`;
/// equal-degree pairs contribute zero. Lines are ordered by degree, so the
/// result does not depend on the order of rows or columns.
fn nodf_pairs(lines: &[Vec<usize>], degrees: &[usize]) -> (f64, usize) {
    let n = lines.len();
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let (ki, kj) = (degrees[i], degrees[j]);
            if ki == kj {
                continue;
            }
            let (big, small, k_small) = if ki > kj { (i, j, kj) } else { (j, i, ki) };
            let overlap = sorted_overlap(&lines[big], &lines[small]);
            sum += 100.0 * overlap as f64 / k_small as f64;
        }
    }
    (sum, n * n.saturating_sub(1) / 2)
}

fn sorted_overlap(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// NODF over rows, columns and both, in [0, 100].
///
/// A dimension with fewer than two lines has no pairs and scores 0.
pub fn nestedness(m: &BinaryCPMatrix) -> NestednessReport {
    let row_sets: Vec<Vec<usize>> = (0..m.n_countries()).map(|c| m.basket(c)).collect();
    let col_sets: Vec<Vec<usize>> = (0..m.n_products())
        .map(|p| (0..m.n_countries()).filter(|&c| m.get(c, p)).collect())
        .collect();
    let (row_sum, row_pairs) = nodf_pairs(&row_sets, m.diversification());
    let (col_sum, col_pairs) = nodf_pairs(&col_sets, m.ubiquity());
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    NestednessReport {
        nodf_rows: mean(row_sum, row_pairs),
        nodf_cols: mean(col_sum, col_pairs),
        nodf_total: mean(row_sum + col_sum, row_pairs + col_pairs),
        fill: m.fill(),
    }
}

/// Reorders rows by descending country score and columns by ascending
/// product score. Equal scores keep their current relative order.
pub fn order_by_scores(
    m: &BinaryCPMatrix,
    country_scores: &[f64],
    product_scores: &[f64],
) -> Result<BinaryCPMatrix> {
    if country_scores.len() != m.n_countries() {
        return Err(Error::LengthMismatch {
            expected: m.n_countries(),
            got: country_scores.len(),
        });
    }
    if product_scores.len() != m.n_products() {
        return Err(Error::LengthMismatch {
            expected: m.n_products(),
            got: product_scores.len(),
        });
    }
    let mut row_order: Vec<usize> = (0..m.n_countries()).collect();
    row_order.sort_by(|&a, &b| country_scores[b].total_cmp(&country_scores[a]));
    let mut col_order: Vec<usize> = (0..m.n_products()).collect();
    col_order.sort_by(|&a, &b| product_scores[a].total_cmp(&product_scores[b]));

    Ok(BinaryCPMatrix {
        countries: row_order.iter().map(|&c| m.countries[c].clone()).collect(),
        products: col_order.iter().map(|&p| m.products[p].clone()).collect(),
        m: row_order
            .iter()
            .map(|&c| col_order.iter().map(|&p| m.m[c][p]).collect())
            .collect(),
        diversification: row_order.iter().map(|&c| m.diversification[c]).collect(),
        ubiquity: col_order.iter().map(|&p| m.ubiquity[p]).collect(),
        removed_countries: m.removed_countries.clone(),
        removed_products: m.removed_products.clone(),
    })
}
