//! Independent oracles and instance generators shared by the integration tests.
//!
//! Nothing here calls the routines it is used to check: the fitness oracle is a
//! plain fixed-count iteration written from the defining equations and the
//! eigen oracle is a cyclic Jacobi solver on the symmetrised similarity matrix.

#![allow(dead_code)]

use efk_core::synth::{country_code, product_code, CounterRng};
use efk_core::BinaryCPMatrix;

/// Random matrix with every row and column nonempty and a connected bipartite
/// graph. Fill is drawn per instance from [0.35, 0.75).
pub fn random_connected(seed: u64, max_c: usize, max_p: usize) -> BinaryCPMatrix {
    let rng = CounterRng::new(seed);
    let mut attempt = 0u64;
    loop {
        let stream = 100 + attempt * 8;
        let nc = 3 + (rng.bits(stream, 0) % (max_c as u64 - 2)) as usize;
        let np = 3 + (rng.bits(stream, 1) % (max_p as u64 - 2)) as usize;
        let fill = 0.35 + 0.4 * rng.uniform(stream, 2);
        let rows: Vec<Vec<u8>> = (0..nc)
            .map(|c| {
                (0..np)
                    .map(|p| u8::from(rng.uniform(stream + 1, (c * np + p) as u64) < fill))
                    .collect()
            })
            .collect();
        attempt += 1;
        let complete = rows.iter().all(|r| r.contains(&1))
            && (0..np).all(|p| rows.iter().any(|r| r[p] == 1));
        if !complete {
            continue;
        }
        let m = BinaryCPMatrix::new(
            (0..nc).map(country_code).collect(),
            (0..np).map(product_code).collect(),
            rows,
        )
        .unwrap();
        if m.is_connected() {
            return m;
        }
    }
}

/// Random connected matrix whose fitness map has a strictly positive fixed
/// point. Seeds are scanned upward from `seed` until one qualifies.
pub fn random_developed(seed: u64, max_c: usize, max_p: usize) -> BinaryCPMatrix {
    (0..)
        .map(|k| random_connected(seed.wrapping_mul(7919).wrapping_add(k), max_c, max_p))
        .find(has_positive_fixed_point)
        .unwrap()
}

/// Matrix of fixed shape with the given fill, regenerated until connected.
pub fn random_connected_shape(seed: u64, nc: usize, np: usize, fill: f64) -> BinaryCPMatrix {
    let rng = CounterRng::new(seed);
    for attempt in 0u64.. {
        let rows: Vec<Vec<u8>> = (0..nc)
            .map(|c| {
                (0..np)
                    .map(|p| u8::from(rng.uniform(attempt, (c * np + p) as u64) < fill))
                    .collect()
            })
            .collect();
        if !(rows.iter().all(|r| r.contains(&1)) && (0..np).all(|p| rows.iter().any(|r| r[p] == 1)))
        {
            continue;
        }
        let m = BinaryCPMatrix::new(
            (0..nc).map(country_code).collect(),
            (0..np).map(product_code).collect(),
            rows,
        )
        .unwrap();
        if m.is_connected() {
            return m;
        }
    }
    unreachable!()
}

pub fn dense(m: &BinaryCPMatrix) -> Vec<Vec<f64>> {
    m.rows()
        .iter()
        .map(|r| r.iter().map(|&v| v as f64).collect())
        .collect()
}

/// Plain Fitness-Complexity iteration for `steps` steps from ones. Stops early
/// (keeping the last representable state) if a value underflows to zero.
pub fn fitness_oracle(m: &[Vec<f64>], steps: usize) -> (Vec<f64>, Vec<f64>) {
    let nc = m.len();
    let np = m[0].len();
    let mut f = vec![1.0; nc];
    let mut q = vec![1.0; np];
    for _ in 0..steps {
        let mut f2 = vec![0.0; nc];
        let mut q2 = vec![0.0; np];
        for c in 0..nc {
            for p in 0..np {
                f2[c] += m[c][p] * q[p];
            }
        }
        for p in 0..np {
            let mut s = 0.0;
            for c in 0..nc {
                s += m[c][p] / f[c];
            }
            q2[p] = 1.0 / s;
        }
        let mf = f2.iter().sum::<f64>() / nc as f64;
        let mq = q2.iter().sum::<f64>() / np as f64;
        let f2: Vec<f64> = f2.iter().map(|v| v / mf).collect();
        let q2: Vec<f64> = q2.iter().map(|v| v / mq).collect();
        if f2.iter().chain(&q2).any(|&v| !(v > 0.0 && v.is_finite())) {
            break;
        }
        f = f2;
        q = q2;
    }
    (f, q)
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
/// Returns eigenvalues and eigenvectors (as columns of the second value).
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut a: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

/// Eigenvalues (descending) and matching right eigenvectors of the country
/// similarity matrix, built from scratch from the binary matrix.
pub fn eci_oracle(m: &[Vec<f64>]) -> Vec<(f64, Vec<f64>)> {
    let nc = m.len();
    let np = m[0].len();
    let kc: Vec<f64> = m.iter().map(|r| r.iter().sum()).collect();
    let kp: Vec<f64> = (0..np).map(|p| m.iter().map(|r| r[p]).sum()).collect();
    // S = D^-1/2 M D_p^-1 M^T D^-1/2
    let s: Vec<Vec<f64>> = (0..nc)
        .map(|i| {
            (0..nc)
                .map(|j| {
                    let mut acc = 0.0;
                    for p in 0..np {
                        acc += m[i][p] * m[j][p] / kp[p];
                    }
                    acc / (kc[i] * kc[j]).sqrt()
                })
                .collect()
        })
        .collect();
    let (vals, vecs) = jacobi_eigen(&s);
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..nc)
        .map(|j| (vals[j], (0..nc).map(|i| vecs[i][j] / kc[i].sqrt()).collect()))
        .collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    pairs
}

/// Country similarity matrix straight from the definition.
pub fn similarity_oracle(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let nc = m.len();
    let np = m[0].len();
    let kc: Vec<f64> = m.iter().map(|r| r.iter().sum()).collect();
    let kp: Vec<f64> = (0..np).map(|p| m.iter().map(|r| r[p]).sum()).collect();
    (0..nc)
        .map(|i| {
            (0..nc)
                .map(|j| (0..np).map(|p| m[i][p] * m[j][p] / kp[p]).sum::<f64>() / kc[i])
                .collect()
        })
        .collect()
}

/// Brute-force NODF by explicit pair enumeration over the original row and
/// column order, with lines ordered by degree per pair.
pub fn nodf_oracle(m: &[Vec<f64>]) -> (f64, f64, f64) {
    let rows: Vec<Vec<bool>> = m.iter().map(|r| r.iter().map(|&v| v > 0.5).collect()).collect();
    let cols: Vec<Vec<bool>> = (0..m[0].len())
        .map(|p| m.iter().map(|r| r[p] > 0.5).collect())
        .collect();
    fn pairs(lines: &[Vec<bool>]) -> (f64, usize) {
        let mut total = 0.0;
        let mut n = 0;
        for i in 0..lines.len() {
            for j in 0..lines.len() {
                if i >= j {
                    continue;
                }
                n += 1;
                let ki = lines[i].iter().filter(|&&b| b).count();
                let kj = lines[j].iter().filter(|&&b| b).count();
                if ki == kj {
                    continue;
                }
                let (hi, lo, klo) = if ki > kj { (i, j, kj) } else { (j, i, ki) };
                let overlap = lines[lo]
                    .iter()
                    .zip(&lines[hi])
                    .filter(|(&a, &b)| a && b)
                    .count();
                total += 100.0 * overlap as f64 / klo as f64;
            }
        }
        (total, n)
    }
    let (rs, rn) = pairs(&rows);
    let (cs, cn) = pairs(&cols);
    let f = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    (f(rs, rn), f(cs, cn), f(rs + cs, rn + cn))
}

/// Rank labels 1..n by descending value. Values within 1e-12 of each other
/// (relative to the largest magnitude) tie and are ordered by index.
pub fn ranks(v: &[f64]) -> Vec<usize> {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].partial_cmp(&v[a]).unwrap().then(a.cmp(&b)));
    // Merge near-equal runs, then order each run by index.
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &i in &idx {
        match groups.last_mut() {
            Some(g) if v[*g.last().unwrap()] - v[i] <= 1e-12 * scale => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    let mut r = vec![0; v.len()];
    let mut pos = 1;
    for mut g in groups {
        g.sort_unstable();
        for i in g {
            r[i] = pos;
            pos += 1;
        }
    }
    r
}

pub fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / scale)
        .fold(0.0, f64::max)
}

/// Whether the fitness map has a strictly positive fixed point. By brute force
/// over country subsets: every proper nonempty subset `S` must reach products
/// `N(S)` with `P * |S| < C * |N(S)|` (scaling to uniform margins exists).
pub fn has_positive_fixed_point(m: &BinaryCPMatrix) -> bool {
    let (nc, np) = (m.n_countries(), m.n_products());
    assert!(nc <= 20, "subset enumeration is exponential");
    (1u32..(1u32 << nc) - 1).all(|mask| {
        let s = mask.count_ones() as usize;
        let reach = (0..np)
            .filter(|&p| (0..nc).any(|c| mask & (1 << c) != 0 && m.get(c, p)))
            .count();
        np * s < nc * reach
    })
}
