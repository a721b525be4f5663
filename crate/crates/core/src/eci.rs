//! ECI / PCI as the coupled averaging equations
//!
//! ```text
//! ECI_c = a * <PCI>_c      (mean PCI over the country's basket)
//! PCI_p = b * <ECI>_p      (mean ECI over the product's exporters)
//! ```
//!
//! Substituting one into the other gives `W ECI = (1 / ab) ECI` with the
//! row-stochastic country similarity matrix
//! `W_cc' = (1/k_c) sum_p M_cp M_c'p / k_p`. Every eigenvector of `W` solves
//! the pair of equations; the conventional ECI is the one for the second
//! largest eigenvalue. The original alternating-averages recursion is kept in
//! [`method_of_reflections`].

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::BinaryCPMatrix;
use crate::ranking::{RankingMeta, RankingResult};
use crate::stats;

/// Minimum gap between neighbouring eigenvalues for a well-defined eigenvector.
pub const EIGEN_GAP_TOL: f64 = 1e-10;
/// Eigenvalues below this magnitude are treated as zero.
pub const ZERO_EIGEN_TOL: f64 = 1e-12;
/// Required accuracy `||W v - lambda v||_inf / ||v||_inf`.
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-8;

/// `W_cc' = (1/k_c) sum_p M_cp M_c'p / k_p`.
pub fn country_similarity_matrix(m: &BinaryCPMatrix) -> Vec<Vec<f64>> {
    let nc = m.n_countries();
    let kc = m.diversification();
    let kp = m.ubiquity();
    let baskets: Vec<Vec<usize>> = (0..nc).map(|c| m.basket(c)).collect();
    (0..nc)
        .map(|c| {
            (0..nc)
                .map(|c2| {
                    let s: f64 = baskets[c]
                        .iter()
                        .filter(|&&p| m.get(c2, p))
                        .map(|&p| 1.0 / kp[p] as f64)
                        .sum();
                    s / kc[c] as f64
                })
                .collect()
        })
        .collect()
}

/// `W~_pp' = (1/k_p) sum_c M_cp M_cp' / k_c`, the product-side counterpart.
pub fn product_similarity_matrix(m: &BinaryCPMatrix) -> Vec<Vec<f64>> {
    let (nc, np) = (m.n_countries(), m.n_products());
    let kc = m.diversification();
    let kp = m.ubiquity();
    let exporters: Vec<Vec<usize>> = (0..np)
        .map(|p| (0..nc).filter(|&c| m.get(c, p)).collect())
        .collect();
    (0..np)
        .map(|p| {
            (0..np)
                .map(|p2| {
                    let s: f64 = exporters[p]
                        .iter()
                        .filter(|&&c| m.get(c, p2))
                        .map(|&c| 1.0 / kc[c] as f64)
                        .sum();
                    s / kp[p] as f64
                })
                .collect()
        })
        .collect()
}

/// Symmetric matrix `D^{1/2} W D^{-1/2}` sharing the spectrum of `W`.
///
/// `degrees` are the row-side degrees used in `W`.
fn symmetrize(w: &[Vec<f64>], degrees: &[usize]) -> DMatrix<f64> {
    let n = w.len();
    let sq: Vec<f64> = degrees.iter().map(|&k| (k as f64).sqrt()).collect();
    DMatrix::from_fn(n, n, |i, j| {
        // W_ij k_i = W_ji k_j, average the two to keep exact symmetry
        0.5 * (w[i][j] * sq[i] / sq[j] + w[j][i] * sq[j] / sq[i])
    })
}

/// Eigenpairs sorted by descending eigenvalue; vectors are right eigenvectors
/// of the non-symmetric similarity matrix.
fn eigenpairs(w: &[Vec<f64>], degrees: &[usize]) -> Vec<(f64, Vec<f64>)> {
    let s = symmetrize(w, degrees);
    let eig = s.symmetric_eigen();
    let n = w.len();
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|j| {
            let u = eig.eigenvectors.column(j);
            let v = (0..n).map(|i| u[i] / (degrees[i] as f64).sqrt()).collect();
            (eig.eigenvalues[j], v)
        })
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs
}

/// Eigenvalues of `W`, descending.
pub fn country_spectrum(m: &BinaryCPMatrix) -> Vec<f64> {
    eigenpairs(&country_similarity_matrix(m), m.diversification())
        .into_iter()
        .map(|p| p.0)
        .collect()
}

/// Eigenvalues of the product-side matrix, descending.
pub fn product_spectrum(m: &BinaryCPMatrix) -> Vec<f64> {
    eigenpairs(&product_similarity_matrix(m), m.ubiquity())
        .into_iter()
        .map(|p| p.0)
        .collect()
}

fn mat_vec(w: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    w.iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

fn z_scores(v: &[f64]) -> Vec<f64> {
    let mean = stats::mean(v);
    let sd = stats::std_pop(v);
    if sd <= 1e-12 * max_abs(v) || sd == 0.0 {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| (x - mean) / sd).collect()
}

/// Mean over each product's exporters of a per-country vector.
fn product_average(m: &BinaryCPMatrix, country_values: &[f64]) -> Vec<f64> {
    let kp = m.ubiquity();
    (0..m.n_products())
        .map(|p| {
            let s: f64 = (0..m.n_countries())
                .filter(|&c| m.get(c, p))
                .map(|c| country_values[c])
                .sum();
            s / kp[p] as f64
        })
        .collect()
}

/// Mean over each country's basket of a per-product vector.
fn country_average(m: &BinaryCPMatrix, product_values: &[f64]) -> Vec<f64> {
    let kc = m.diversification();
    m.rows()
        .iter()
        .zip(kc)
        .map(|(row, &k)| {
            let s: f64 = row
                .iter()
                .zip(product_values)
                .filter(|(&x, _)| x == 1)
                .map(|(_, &v)| v)
                .sum();
            s / k as f64
        })
        .collect()
}

/// One eigen-solution of the coupled ECI/PCI equations.
///
/// The gauge is `a = 1`, `b = 1 / lambda`; `eci_raw` has unit Euclidean norm
/// and is oriented to correlate nonnegatively with diversification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSolution {
    pub order_n: usize,
    pub lambda: f64,
    /// Full spectrum of `W`, descending.
    pub eigenvalues: Vec<f64>,
    pub countries: Vec<String>,
    pub products: Vec<String>,
    pub eci_raw: Vec<f64>,
    pub pci_raw: Vec<f64>,
    pub a: f64,
    pub b: f64,
    /// Z-scores using the population standard deviation.
    pub eci_z: Vec<f64>,
    pub pci_z: Vec<f64>,
    /// `||W v - lambda v||_inf / ||v||_inf` of `eci_raw`.
    pub eigen_residual: f64,
}

impl EigenSolution {
    fn meta(&self) -> RankingMeta {
        RankingMeta {
            algorithm: "eci".into(),
            order_n: Some(self.order_n),
            lambda: Some(self.lambda),
            residual: Some(self.eigen_residual),
            standardization: Some("population".into()),
            ..Default::default()
        }
    }

    pub fn country_ranking(&self) -> RankingResult {
        RankingResult::new(self.meta(), self.countries.clone(), self.eci_z.clone())
    }

    pub fn product_ranking(&self) -> RankingResult {
        RankingResult::new(self.meta(), self.products.clone(), self.pci_z.clone())
    }

    pub fn eci_z_of(&self, country: &str) -> Option<f64> {
        self.countries
            .iter()
            .position(|c| c == country)
            .map(|i| self.eci_z[i])
    }
}

/// Sign rule: Spearman correlation with diversification nonnegative; on an
/// exact tie the lexicographically first country gets a nonnegative score.
fn orientation(m: &BinaryCPMatrix, v: &[f64]) -> f64 {
    let div: Vec<f64> = m.diversification().iter().map(|&k| k as f64).collect();
    let tol = 1e-9 * max_abs(v);
    let rho = stats::spearman(v, &div, tol).unwrap_or(0.0);
    if rho.abs() > 1e-12 {
        return rho.signum();
    }
    let first = (0..m.n_countries())
        .min_by(|&a, &b| m.countries()[a].cmp(&m.countries()[b]))
        .expect("matrix is nonempty");
    if v[first] < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Solves for the `order_n`-th eigenvector (1-based, descending eigenvalues).
pub fn eci_eigen(m: &BinaryCPMatrix, order_n: usize) -> Result<EigenSolution> {
    let nc = m.n_countries();
    if order_n == 0 || order_n > nc {
        return Err(Error::InvalidParameter(format!(
            "order_n must be in 1..={nc}, got {order_n}"
        )));
    }
    let w = country_similarity_matrix(m);
    let pairs = eigenpairs(&w, m.diversification());
    let eigenvalues: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let idx = order_n - 1;
    let lambda = eigenvalues[idx];

    if lambda.abs() < ZERO_EIGEN_TOL {
        return Err(Error::DegenerateSpectrum(format!(
            "eigenvalue {order_n} is zero ({lambda:.3e}); only the trivial solution exists"
        )));
    }
    if idx > 0 && (eigenvalues[idx - 1] - lambda).abs() < EIGEN_GAP_TOL {
        return Err(Error::DegenerateSpectrum(format!(
            "eigenvalues {} and {order_n} coincide ({lambda:.12})",
            order_n - 1
        )));
    }
    if idx + 1 < nc && (lambda - eigenvalues[idx + 1]).abs() < EIGEN_GAP_TOL {
        return Err(Error::DegenerateSpectrum(format!(
            "eigenvalues {order_n} and {} coincide ({lambda:.12})",
            order_n + 1
        )));
    }

    // One application of W both sharpens the vector and makes rows of W that are
    // bitwise identical produce bitwise identical scores.
    let v0 = &pairs[idx].1;
    let mut v: Vec<f64> = mat_vec(&w, v0).into_iter().map(|x| x / lambda).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let sign = orientation(m, &v);
    for x in &mut v {
        *x *= sign / norm;
    }

    let wv = mat_vec(&w, &v);
    let eigen_residual = wv
        .iter()
        .zip(&v)
        .map(|(a, b)| (a - lambda * b).abs())
        .fold(0.0, f64::max)
        / max_abs(&v);
    if eigen_residual > EIGEN_RESIDUAL_TOL {
        return Err(Error::DegenerateSpectrum(format!(
            "eigenvector {order_n} is inaccurate (residual {eigen_residual:.3e})"
        )));
    }

    let a = 1.0;
    let b = 1.0 / lambda;
    let pci_raw: Vec<f64> = product_average(m, &v).into_iter().map(|x| b * x).collect();
    Ok(EigenSolution {
        order_n,
        lambda,
        eigenvalues,
        countries: m.countries().to_vec(),
        products: m.products().to_vec(),
        eci_z: z_scores(&v),
        pci_z: z_scores(&pci_raw),
        eci_raw: v,
        pci_raw,
        a,
        b,
        eigen_residual,
    })
}

/// Largest violation of the two coupled equations on the raw vectors, divided
/// by the largest absolute entry of either vector.
pub fn eci_residual(m: &BinaryCPMatrix, sol: &EigenSolution) -> Result<f64> {
    if sol.eci_raw.len() != m.n_countries() {
        return Err(Error::LengthMismatch {
            expected: m.n_countries(),
            got: sol.eci_raw.len(),
        });
    }
    if sol.pci_raw.len() != m.n_products() {
        return Err(Error::LengthMismatch {
            expected: m.n_products(),
            got: sol.pci_raw.len(),
        });
    }
    let avg_pci = country_average(m, &sol.pci_raw);
    let avg_eci = product_average(m, &sol.eci_raw);
    let r1 = sol
        .eci_raw
        .iter()
        .zip(&avg_pci)
        .map(|(e, p)| (e - sol.a * p).abs());
    let r2 = sol
        .pci_raw
        .iter()
        .zip(&avg_eci)
        .map(|(p, e)| (p - sol.b * e).abs());
    let worst = r1.chain(r2).fold(0.0, f64::max);
    let scale = max_abs(&sol.eci_raw).max(max_abs(&sol.pci_raw));
    Ok(if scale == 0.0 { worst } else { worst / scale })
}

/// Levels `k^(0..=depth)` of the alternating-averages recursion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionsTrace {
    pub countries: Vec<String>,
    pub products: Vec<String>,
    pub country_levels: Vec<Vec<f64>>,
    pub product_levels: Vec<Vec<f64>>,
    pub depth: usize,
}

/// `k_c^(n) = <k_p^(n-1)>_c`, `k_p^(n) = <k_c^(n-1)>_p`, starting from the degrees.
pub fn method_of_reflections(m: &BinaryCPMatrix, depth: usize) -> ReflectionsTrace {
    let mut country_levels = vec![m.diversification().iter().map(|&k| k as f64).collect::<Vec<_>>()];
    let mut product_levels = vec![m.ubiquity().iter().map(|&k| k as f64).collect::<Vec<_>>()];
    for n in 1..=depth {
        let kc = country_average(m, &product_levels[n - 1]);
        let kp = product_average(m, &country_levels[n - 1]);
        country_levels.push(kc);
        product_levels.push(kp);
    }
    ReflectionsTrace {
        countries: m.countries().to_vec(),
        products: m.products().to_vec(),
        country_levels,
        product_levels,
        depth,
    }
}

impl ReflectionsTrace {
    /// Rows are entities, columns `level_0..=level_depth`.
    pub fn write_csv<W: Write>(&self, mut out: W, products: bool) -> Result<()> {
        let (names, levels) = if products {
            (&self.products, &self.product_levels)
        } else {
            (&self.countries, &self.country_levels)
        };
        write!(out, "entity")?;
        for n in 0..=self.depth {
            write!(out, ",level_{n}")?;
        }
        writeln!(out)?;
        for (i, name) in names.iter().enumerate() {
            write!(out, "{name}")?;
            for level in levels {
                write!(out, ",{}", level[i])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn country_level(&self, n: usize) -> Option<&[f64]> {
        self.country_levels.get(n).map(Vec::as_slice)
    }
}
