//! Product-removal experiments and cross-algorithm ranking comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::eci::{eci_eigen, EigenSolution};
use crate::error::{Error, Result};
use crate::fitness::{fitness_fixed_point, FitnessParams, FitnessResult};
use crate::matrix::BinaryCPMatrix;
use crate::ranking::{rank_desc, RankingResult};
use crate::stats;

/// Zeroes `country`'s row outside `kept_products`.
///
/// Products left without exporters are dropped and listed in the returned
/// matrix's `removed_products`.
pub fn restrict_country(
    m: &BinaryCPMatrix,
    country: &str,
    kept_products: &[String],
) -> Result<BinaryCPMatrix> {
    let c = m
        .country_index(country)
        .ok_or_else(|| Error::UnknownEntity(country.to_string()))?;
    if kept_products.is_empty() {
        return Err(Error::InvalidParameter("kept_products must be nonempty".into()));
    }
    let mut keep = BTreeSet::new();
    for code in kept_products {
        let p = m
            .product_index(code)
            .ok_or_else(|| Error::UnknownEntity(code.clone()))?;
        if !m.get(c, p) {
            return Err(Error::NotCurrentlyExported {
                country: country.to_string(),
                product: code.clone(),
            });
        }
        keep.insert(p);
    }
    let mut rows = m.rows().to_vec();
    for (p, cell) in rows[c].iter_mut().enumerate() {
        if !keep.contains(&p) {
            *cell = 0;
        }
    }
    m.with_rows(rows)
}

/// Before/after scores and ranks of one restriction experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualOutcome {
    pub country: String,
    pub kept_products: Vec<String>,
    pub fitness_rank_before: usize,
    pub fitness_rank_after: usize,
    pub eci_rank_before: usize,
    pub eci_rank_after: usize,
    pub fitness_score_before: f64,
    pub fitness_score_after: f64,
    pub eci_z_before: f64,
    pub eci_z_after: f64,
    /// Raw ECI of the country before restriction.
    pub eci_raw_before: f64,
    pub eci_raw_after: f64,
    /// PCI values were held at their pre-restriction values.
    pub frozen_pci: bool,
    /// Products that lost their last exporter.
    pub removed_products: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CounterfactualParams {
    pub fitness: FitnessParams,
    pub order_n: usize,
    pub frozen_pci: bool,
}

impl Default for CounterfactualParams {
    fn default() -> Self {
        Self {
            fitness: FitnessParams::default(),
            order_n: 2,
            frozen_pci: false,
        }
    }
}

/// Baseline solutions shared across experiments on the same matrix.
#[derive(Debug, Clone)]
pub struct Baseline {
    pub fitness: FitnessResult,
    pub eci: EigenSolution,
}

impl Baseline {
    pub fn compute(m: &BinaryCPMatrix, params: &CounterfactualParams) -> Result<Self> {
        Ok(Self {
            fitness: fitness_fixed_point(m, params.fitness)?,
            eci: eci_eigen(m, params.order_n)?,
        })
    }
}

/// Raw ECI vector when PCI is held fixed: the restricted country's value is the
/// mean old PCI of its kept products, every other country keeps its value.
fn frozen_eci(base: &EigenSolution, m: &BinaryCPMatrix, c: usize, kept: &[usize]) -> Vec<f64> {
    let mut eci = base.eci_raw.clone();
    let s: f64 = kept.iter().map(|&p| base.pci_raw[p]).sum();
    eci[c] = base.a * s / kept.len() as f64;
    debug_assert_eq!(eci.len(), m.n_countries());
    eci
}

fn z_of(v: &[f64], i: usize) -> f64 {
    let sd = stats::std_pop(v);
    if sd == 0.0 {
        0.0
    } else {
        (v[i] - stats::mean(v)) / sd
    }
}

/// Restricts `country` to `kept_products` and recomputes both rankings.
pub fn counterfactual_with_baseline(
    m: &BinaryCPMatrix,
    base: &Baseline,
    country: &str,
    kept_products: &[String],
    params: &CounterfactualParams,
) -> Result<CounterfactualOutcome> {
    let restricted = restrict_country(m, country, kept_products)?;
    let c_before = m.country_index(country).expect("checked by restrict_country");
    let c_after = restricted
        .country_index(country)
        .expect("restricted country keeps at least one product");

    let fit_after = fitness_fixed_point(&restricted, params.fitness)?;
    let fit_rank_before = rank_desc(&base.fitness.fitness, m.countries())[c_before];
    let fit_rank_after = rank_desc(&fit_after.fitness, restricted.countries())[c_after];

    let eci_rank_before = rank_desc(&base.eci.eci_z, m.countries())[c_before];
    let (eci_raw_after, eci_z_after, eci_rank_after) = if params.frozen_pci {
        let kept: Vec<usize> = kept_products
            .iter()
            .map(|p| m.product_index(p).expect("checked by restrict_country"))
            .collect();
        let raw = frozen_eci(&base.eci, m, c_before, &kept);
        let rank = rank_desc(&raw, m.countries())[c_before];
        (raw[c_before], z_of(&raw, c_before), rank)
    } else {
        let sol = eci_eigen(&restricted, params.order_n)?;
        let rank = rank_desc(&sol.eci_z, restricted.countries())[c_after];
        (sol.eci_raw[c_after], sol.eci_z[c_after], rank)
    };

    let mut kept_sorted = kept_products.to_vec();
    kept_sorted.sort();
    kept_sorted.dedup();
    let removed_products = restricted.removed_products()[m.removed_products().len()..].to_vec();
    Ok(CounterfactualOutcome {
        country: country.to_string(),
        kept_products: kept_sorted,
        fitness_rank_before: fit_rank_before,
        fitness_rank_after: fit_rank_after,
        eci_rank_before,
        eci_rank_after,
        fitness_score_before: base.fitness.fitness[c_before],
        fitness_score_after: fit_after.fitness[c_after],
        eci_z_before: base.eci.eci_z[c_before],
        eci_z_after,
        eci_raw_before: base.eci.eci_raw[c_before],
        eci_raw_after,
        frozen_pci: params.frozen_pci,
        removed_products,
    })
}

/// Keeps only `product` in `country`'s basket and reports how both rankings move.
pub fn coalfish_experiment(
    m: &BinaryCPMatrix,
    country: &str,
    product: &str,
    params: &CounterfactualParams,
) -> Result<CounterfactualOutcome> {
    let c = m
        .country_index(country)
        .ok_or_else(|| Error::UnknownEntity(country.to_string()))?;
    let p = m
        .product_index(product)
        .ok_or_else(|| Error::UnknownEntity(product.to_string()))?;
    if !m.get(c, p) {
        return Err(Error::NotCurrentlyExported {
            country: country.to_string(),
            product: product.to_string(),
        });
    }
    let base = Baseline::compute(m, params)?;
    counterfactual_with_baseline(m, &base, country, &[product.to_string()], params)
}

/// Runs [`coalfish_experiment`] for every (country, product) pair, sharing the
/// baseline solutions.
pub fn coalfish_batch(
    m: &BinaryCPMatrix,
    pairs: &[(String, String)],
    params: &CounterfactualParams,
) -> Result<Vec<CounterfactualOutcome>> {
    let base = Baseline::compute(m, params)?;
    pairs
        .iter()
        .map(|(c, p)| counterfactual_with_baseline(m, &base, c, std::slice::from_ref(p), params))
        .collect()
}

pub fn write_batch_csv<W: Write>(outcomes: &[CounterfactualOutcome], mut out: W) -> Result<()> {
    writeln!(
        out,
        "country,product,fit_rank_before,fit_rank_after,eci_rank_before,eci_rank_after"
    )?;
    for o in outcomes {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            o.country,
            o.kept_products.join(";"),
            o.fitness_rank_before,
            o.fitness_rank_after,
            o.eci_rank_before,
            o.eci_rank_after
        )?;
    }
    Ok(())
}

/// Top-k size used by [`compare_rankings`].
pub const TOP_K: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankDelta {
    pub entity: String,
    pub rank_a: usize,
    pub rank_b: usize,
    /// `rank_b - rank_a`
    pub delta: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub n: usize,
    pub spearman: f64,
    pub kendall_tau: f64,
    pub top_k: usize,
    pub top_k_overlap: usize,
    pub deltas: Vec<RankDelta>,
}

/// Rank agreement between two rankings of the same entities.
pub fn compare_rankings(a: &RankingResult, b: &RankingResult) -> Result<ComparisonReport> {
    let ranks_a: BTreeMap<&str, usize> = a
        .entities
        .iter()
        .map(String::as_str)
        .zip(a.ranks.iter().copied())
        .collect();
    let ranks_b: BTreeMap<&str, usize> = b
        .entities
        .iter()
        .map(String::as_str)
        .zip(b.ranks.iter().copied())
        .collect();
    if ranks_a.len() != a.len() || ranks_b.len() != b.len() {
        return Err(Error::EntityMismatch("duplicate entity in a ranking".into()));
    }
    if ranks_a.keys().ne(ranks_b.keys()) {
        let only_a: Vec<&str> = ranks_a.keys().filter(|k| !ranks_b.contains_key(*k)).copied().collect();
        let only_b: Vec<&str> = ranks_b.keys().filter(|k| !ranks_a.contains_key(*k)).copied().collect();
        return Err(Error::EntityMismatch(format!(
            "only in first: [{}]; only in second: [{}]",
            only_a.join(","),
            only_b.join(",")
        )));
    }
    let n = ranks_a.len();
    if n < 2 {
        return Err(Error::EntityMismatch("need at least two entities".into()));
    }

    let xa: Vec<f64> = ranks_a.values().map(|&r| r as f64).collect();
    let xb: Vec<f64> = ranks_b.values().map(|&r| r as f64).collect();
    let spearman = stats::spearman(&xa, &xb, 0.0).unwrap_or(0.0);
    let kendall_tau = stats::kendall_tau_b(&xa, &xb).unwrap_or(0.0);

    let k = TOP_K.min(n);
    let top = |ranks: &BTreeMap<&str, usize>| -> BTreeSet<String> {
        let mut v: Vec<(&str, usize)> = ranks.iter().map(|(&e, &r)| (e, r)).collect();
        v.sort_by_key(|&(e, r)| (r, e));
        v.into_iter().take(k).map(|(e, _)| e.to_string()).collect()
    };
    let top_k_overlap = top(&ranks_a).intersection(&top(&ranks_b)).count();

    let deltas = ranks_a
        .iter()
        .map(|(&e, &ra)| {
            let rb = ranks_b[e];
            RankDelta {
                entity: e.to_string(),
                rank_a: ra,
                rank_b: rb,
                delta: rb as i64 - ra as i64,
            }
        })
        .collect();
    Ok(ComparisonReport {
        n,
        spearman,
        kendall_tau,
        top_k: k,
        top_k_overlap,
        deltas,
    })
}

impl ComparisonReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "entity,rank_a,rank_b,delta")?;
        for d in &self.deltas {
            writeln!(out, "{},{},{},{}", d.entity, d.rank_a, d.rank_b, d.delta)?;
        }
        Ok(())
    }
}
