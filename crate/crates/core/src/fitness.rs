//! Country Fitness and product Complexity.
//!
//! The map alternates two coupled updates on the binary matrix `M`:
//!
//! ```text
//! F_c = sum_p M_cp Q_p                 (complexity-weighted diversification)
//! Q_p = 1 / sum_c (M_cp / F_c)         (harmonic penalty from weak exporters)
//! ```
//!
//! Each vector is divided by its arithmetic mean after every step. Fitness of
//! weak countries may decay towards zero without ever settling to a fixed
//! tolerance, so the driver also stops once both rank orders have been stable
//! for a number of consecutive steps while the relative change has stalled.
//! A residual that is still shrinking geometrically means the values are
//! converging and the tolerance rule will fire on its own.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::BinaryCPMatrix;
use crate::ranking::{RankingMeta, RankingResult};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitnessParams {
    /// Stop once the largest change of both vectors, relative to their largest
    /// entry, is below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Stop once rank orders are unchanged for this many consecutive steps
    /// and the residual has stalled over the same window.
    pub rank_patience: usize,
}

impl Default for FitnessParams {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 1000,
            rank_patience: 20,
        }
    }
}

impl FitnessParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidParameter(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
        }
        if self.rank_patience == 0 {
            return Err(Error::InvalidParameter("rank_patience must be at least 1".into()));
        }
        Ok(())
    }
}

/// Why the fixed-point driver stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Tolerance,
    RankStability,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessResult {
    pub countries: Vec<String>,
    pub products: Vec<String>,
    pub fitness: Vec<f64>,
    pub complexity: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    /// Consecutive steps with unchanged rank orders at stop.
    pub final_rank_stability: usize,
    /// Largest relative change of either vector in the last step.
    pub residual: f64,
    /// Largest |mean - 1| of either vector over all steps.
    pub max_mean_drift: f64,
}

impl FitnessResult {
    pub fn country_ranking(&self) -> RankingResult {
        RankingResult::new(self.meta(), self.countries.clone(), self.fitness.clone())
    }

    pub fn product_ranking(&self) -> RankingResult {
        RankingResult::new(self.meta(), self.products.clone(), self.complexity.clone())
    }

    fn meta(&self) -> RankingMeta {
        RankingMeta {
            algorithm: "fitness".into(),
            iterations: Some(self.iterations),
            converged: Some(self.converged),
            residual: Some(self.residual),
            ..Default::default()
        }
    }

    pub fn fitness_of(&self, country: &str) -> Option<f64> {
        self.countries
            .iter()
            .position(|c| c == country)
            .map(|i| self.fitness[i])
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// One application of the map followed by mean normalisation.
pub fn fitness_step(m: &BinaryCPMatrix, f: &[f64], q: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let (nc, np) = (m.n_countries(), m.n_products());
    if f.len() != nc {
        return Err(Error::LengthMismatch { expected: nc, got: f.len() });
    }
    if q.len() != np {
        return Err(Error::LengthMismatch { expected: np, got: q.len() });
    }
    if f.iter().chain(q).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter(
            "fitness and complexity inputs must be positive and finite".into(),
        ));
    }

    let f_raw: Vec<f64> = m
        .rows()
        .iter()
        .map(|row| row.iter().zip(q).filter(|(&x, _)| x == 1).map(|(_, &qp)| qp).sum())
        .collect();

    let mut q_raw = Vec::with_capacity(np);
    for p in 0..np {
        let denom: f64 = (0..nc).filter(|&c| m.get(c, p)).map(|c| 1.0 / f[c]).sum();
        if !(denom > 0.0 && denom.is_finite()) {
            return Err(Error::ZeroDenominator(m.products()[p].clone()));
        }
        q_raw.push(1.0 / denom);
    }

    let (mf, mq) = (mean(&f_raw), mean(&q_raw));
    Ok((
        f_raw.into_iter().map(|v| v / mf).collect(),
        q_raw.into_iter().map(|v| v / mq).collect(),
    ))
}

/// Largest absolute change relative to the largest old value. Entries that
/// decay towards zero stop contributing once they are negligible.
fn max_rel_change(new: &[f64], old: &[f64]) -> f64 {
    let scale = old.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    new.iter()
        .zip(old)
        .map(|(&a, &b)| (a - b).abs())
        .fold(0.0, f64::max)
        / scale
}

/// Values closer than this (relative to the largest) share a dense rank when
/// checking rank stability, so round-off swaps between converging twins do
/// not reset the counter.
pub const RANK_TIE_TOL: f64 = 1e-12;

/// Dense rank groups by descending value with a relative tie tolerance.
fn dense_groups(v: &[f64]) -> Vec<usize> {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    let mut groups = vec![0; v.len()];
    let mut g = 0;
    for w in 0..order.len() {
        if w > 0 && v[order[w - 1]] - v[order[w]] > RANK_TIE_TOL * scale {
            g += 1;
        }
        groups[order[w]] = g;
    }
    groups
}

/// The residual counts as stalled when it shrank by less than this factor
/// over the patience window.
pub const STALL_RATIO: f64 = 0.9;

/// Iterates [`fitness_step`] from uniform vectors until either stop rule fires.
///
/// Returns [`Error::NonConvergence`] carrying the last state when neither rule
/// is met within `max_iter` steps.
pub fn fitness_fixed_point(m: &BinaryCPMatrix, params: FitnessParams) -> Result<FitnessResult> {
    params.validate()?;
    let mut f = vec![1.0; m.n_countries()];
    let mut q = vec![1.0; m.n_products()];
    let mut f_ranks = dense_groups(&f);
    let mut q_ranks = dense_groups(&q);
    let mut stable = 0;
    let mut drift: f64 = 0.0;
    let mut residual = f64::INFINITY;
    let mut stop = StopReason::MaxIterations;
    let mut iterations = 0;
    let mut history: Vec<f64> = Vec::with_capacity(params.max_iter);

    while iterations < params.max_iter {
        let (f_new, q_new) = fitness_step(m, &f, &q)?;
        iterations += 1;
        if f_new.iter().chain(&q_new).any(|&v| !(v > 0.0 && v.is_finite())) {
            // Weak countries decayed below representable range.
            break;
        }
        residual = max_rel_change(&f_new, &f).max(max_rel_change(&q_new, &q));
        history.push(residual);
        drift = drift.max((mean(&f_new) - 1.0).abs()).max((mean(&q_new) - 1.0).abs());

        let fr = dense_groups(&f_new);
        let qr = dense_groups(&q_new);
        if fr == f_ranks && qr == q_ranks {
            stable += 1;
        } else {
            stable = 0;
        }
        f = f_new;
        q = q_new;
        f_ranks = fr;
        q_ranks = qr;

        if residual < params.tol {
            stop = StopReason::Tolerance;
            break;
        }
        let stalled = history.len() > params.rank_patience
            && residual >= STALL_RATIO * history[history.len() - 1 - params.rank_patience];
        if stable >= params.rank_patience && stalled {
            stop = StopReason::RankStability;
            break;
        }
    }

    let result = FitnessResult {
        countries: m.countries().to_vec(),
        products: m.products().to_vec(),
        fitness: f,
        complexity: q,
        iterations,
        converged: stop != StopReason::MaxIterations,
        stop_reason: stop,
        final_rank_stability: stable,
        residual,
        max_mean_drift: drift,
    };
    if result.converged {
        Ok(result)
    } else {
        Err(Error::NonConvergence(Box::new(result)))
    }
}
