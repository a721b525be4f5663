//! Synthetic matrices and trajectory fields with known ground truth.
//!
//! All randomness comes from [`CounterRng`], a stateless counter-based
//! generator: draw `i` of stream `s` under seed `k` is
//!
//! ```text
//! mix(mix(k ^ (s * 0x9E3779B97F4A7C15)) ^ (i * 0xD1B54A32D192ED03))
//! ```
//!
//! where `mix` is the SplitMix64 finaliser. Uniforms take the top 53 bits.
//! Gaussian deviates are Irwin-Hall sums of twelve uniforms minus six, so
//! generation uses only integer arithmetic and IEEE addition and produces the
//! same bits on every platform.

use serde::{Deserialize, Serialize};

use crate::dynamics::TrajectorySet;
use crate::error::{Error, Result};
use crate::matrix::BinaryCPMatrix;

/// SplitMix64 output function.
pub fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stateless generator addressed by (stream, index).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    seed: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn bits(&self, stream: u64, index: u64) -> u64 {
        let key = mix(self.seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        mix(key ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
    }

    /// Uniform in [0, 1).
    pub fn uniform(&self, stream: u64, index: u64) -> f64 {
        (self.bits(stream, index) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Approximately standard normal (Irwin-Hall, twelve terms).
    pub fn gaussian(&self, stream: u64, index: u64) -> f64 {
        let base = index.wrapping_mul(12);
        (0..12)
            .map(|k| self.uniform(stream, base.wrapping_add(k)))
            .sum::<f64>()
            - 6.0
    }
}

const STREAM_CELLS: u64 = 1;
const STREAM_INIT_X: u64 = 2;
const STREAM_INIT_Y: u64 = 3;
const STREAM_NOISE_X: u64 = 4;
const STREAM_NOISE_Y: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub countries: usize,
    pub products: usize,
    /// Per-cell flip probability in [0, 1).
    pub noise: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.countries == 0 || self.products == 0 {
            return Err(Error::InvalidParameter(
                "synthetic matrix needs at least one country and one product".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.noise) {
            return Err(Error::InvalidParameter(format!(
                "noise must be in [0, 1), got {}",
                self.noise
            )));
        }
        Ok(())
    }
}

/// Zero-padded codes `C001..`, `P001..`.
pub fn country_code(i: usize) -> String {
    format!("C{:03}", i + 1)
}

pub fn product_code(i: usize) -> String {
    format!("P{:03}", i + 1)
}

/// Noisy staircase matrix.
///
/// Row `i` (0-based, most diversified first) exports products
/// `0..ceil((C - i) * P / C)`. Each cell is then flipped with probability
/// `noise`; empty rows and columns are removed afterwards.
pub fn nested_matrix(spec: &SynthSpec) -> Result<BinaryCPMatrix> {
    spec.validate()?;
    let (nc, np) = (spec.countries, spec.products);
    let rng = CounterRng::new(spec.seed);
    let rows = (0..nc)
        .map(|i| {
            let target = ((nc - i) * np).div_ceil(nc);
            (0..np)
                .map(|p| {
                    let base = u8::from(p < target);
                    let cell = (i * np + p) as u64;
                    if spec.noise > 0.0 && rng.uniform(STREAM_CELLS, cell) < spec.noise {
                        1 - base
                    } else {
                        base
                    }
                })
                .collect()
        })
        .collect();
    BinaryCPMatrix::new(
        (0..nc).map(country_code).collect(),
        (0..np).map(product_code).collect(),
        rows,
    )
}

/// Parameters of [`drift_field`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    pub countries: usize,
    pub years: usize,
    pub first_year: i32,
    /// Per-year (dx, dy).
    pub drift: (f64, f64),
    /// Per-year noise standard deviation on both axes.
    pub noise_sd: f64,
    pub seed: u64,
}

/// Initial states uniform in x in [2.5, 4.5), y in [-1, 1); each year adds
/// `drift` plus independent noise.
pub fn drift_field(spec: &DriftSpec) -> Result<TrajectorySet> {
    if spec.years < 2 {
        return Err(Error::InvalidParameter("drift field needs at least two years".into()));
    }
    if spec.countries == 0 {
        return Err(Error::InvalidParameter("drift field needs at least one country".into()));
    }
    if !(spec.noise_sd >= 0.0 && spec.noise_sd.is_finite()) {
        return Err(Error::InvalidParameter("noise_sd must be nonnegative".into()));
    }
    let rng = CounterRng::new(spec.seed);
    let mut raw = Vec::with_capacity(spec.countries * spec.years);
    for c in 0..spec.countries {
        let mut x = 2.5 + 2.0 * rng.uniform(STREAM_INIT_X, c as u64);
        let mut y = -1.0 + 2.0 * rng.uniform(STREAM_INIT_Y, c as u64);
        for t in 0..spec.years {
            if t > 0 {
                let k = (c * spec.years + t) as u64;
                x += spec.drift.0 + spec.noise_sd * rng.gaussian(STREAM_NOISE_X, k);
                y += spec.drift.1 + spec.noise_sd * rng.gaussian(STREAM_NOISE_Y, k);
            }
            raw.push((country_code(c), spec.first_year + t as i32, x, y));
        }
    }
    TrajectorySet::new(raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::nestedness;

    #[test]
    fn rng_test_vectors() {
        // Frozen outputs; see docs/rng.md.
        let rng = CounterRng::new(42);
        assert_eq!(mix(0), 0);
        assert_eq!(mix(1), 0x5692_161D_100B_05E5);
        assert_eq!(rng.bits(1, 0), 0xB29E_D950_786F_5AE3);
        assert_eq!(rng.bits(1, 1), 0x032B_D39E_1A01_CA35);
        assert_eq!(rng.bits(0, 0), 0x97EA_87F7_E45C_00A5);
        assert_eq!(rng.bits(5, 7), 0x2C33_A055_4AA8_C180);
        assert_eq!(rng.uniform(1, 0), 0.6977363416157777);
    }

    #[test]
    fn uniform_in_unit_interval() {
        let rng = CounterRng::new(7);
        let mut sum = 0.0;
        for i in 0..10_000 {
            let u = rng.uniform(0, i);
            assert!((0.0..1.0).contains(&u));
            sum += u;
        }
        assert!((sum / 10_000.0 - 0.5).abs() < 0.01);
    }

    #[test]
    fn gaussian_moments() {
        let rng = CounterRng::new(9);
        let xs: Vec<f64> = (0..20_000).map(|i| rng.gaussian(0, i)).collect();
        let m = crate::stats::mean(&xs);
        let sd = crate::stats::std_pop(&xs);
        assert!(m.abs() < 0.03);
        assert!((sd - 1.0).abs() < 0.03);
    }

    #[test]
    fn three_by_three_staircase() {
        let m = nested_matrix(&SynthSpec {
            countries: 3,
            products: 3,
            noise: 0.0,
            seed: 0,
        })
        .unwrap();
        assert_eq!(m.rows(), &[vec![1, 1, 1], vec![1, 1, 0], vec![1, 0, 0]]);
        assert_eq!(m.countries(), &["C001", "C002", "C003"]);
    }

    #[test]
    fn noise_free_square_is_perfectly_nested() {
        for n in 2..=12 {
            let m = nested_matrix(&SynthSpec {
                countries: n,
                products: n,
                noise: 0.0,
                seed: 1,
            })
            .unwrap();
            assert_eq!(nestedness(&m).nodf_total, 100.0);
        }
    }

    #[test]
    fn same_seed_same_matrix() {
        let spec = SynthSpec {
            countries: 8,
            products: 12,
            noise: 0.2,
            seed: 123,
        };
        assert_eq!(nested_matrix(&spec).unwrap(), nested_matrix(&spec).unwrap());
        let other = SynthSpec { seed: 124, ..spec };
        assert_ne!(nested_matrix(&spec).unwrap(), nested_matrix(&other).unwrap());
    }

    #[test]
    fn invalid_specs() {
        let bad = SynthSpec {
            countries: 0,
            products: 3,
            noise: 0.0,
            seed: 0,
        };
        assert!(nested_matrix(&bad).is_err());
        let bad = SynthSpec {
            countries: 3,
            products: 3,
            noise: 1.0,
            seed: 0,
        };
        assert!(nested_matrix(&bad).is_err());
    }

    #[test]
    fn drift_field_is_deterministic() {
        let spec = DriftSpec {
            countries: 5,
            years: 10,
            first_year: 2000,
            drift: (0.02, 0.01),
            noise_sd: 0.01,
            seed: 5,
        };
        assert_eq!(drift_field(&spec).unwrap(), drift_field(&spec).unwrap());
        assert!(drift_field(&DriftSpec { years: 1, ..spec }).is_err());
    }
}
