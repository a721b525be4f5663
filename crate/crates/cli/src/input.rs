//! Loading matrices, rankings and trajectories from disk.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use efk_core::dynamics::{build_trajectories, TrajectorySet};
use efk_core::fitness::{fitness_fixed_point, FitnessParams};
use efk_core::ingest::{build_trade_table, parse_gdp_csv, parse_trade_csv, years, TradeRecord};
use efk_core::matrix::{binarize, rca};
use efk_core::ranking::RankingResult;
use efk_core::{BinaryCPMatrix, Error, Result};

/// Relative paths are resolved against `EFK_DATA_DIR` when it is set.
pub fn resolve(path: &Path, data_dir: Option<&Path>) -> PathBuf {
    match data_dir {
        Some(root) if path.is_relative() => root.join(path),
        _ => path.to_path_buf(),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

pub fn read_trade(path: &Path) -> Result<Vec<TradeRecord>> {
    parse_trade_csv(open(path)?)
}

/// Binary matrix of one trade year: RCA thresholded at `threshold`.
pub fn matrix_from_trade(records: &[TradeRecord], year: i32, threshold: f64) -> Result<BinaryCPMatrix> {
    let table = build_trade_table(records, year)?;
    binarize(&rca(&table)?, threshold)
}

pub fn read_matrix(path: &Path) -> Result<BinaryCPMatrix> {
    BinaryCPMatrix::read_csv(open(path)?)
}

pub fn read_ranking(path: &Path) -> Result<RankingResult> {
    RankingResult::read_csv(open(path)?)
}

pub fn read_points(path: &Path) -> Result<TrajectorySet> {
    TrajectorySet::read_csv(open(path)?)
}

/// Trajectories from yearly Fitness of every trade year joined with GDP.
pub fn trajectories_from_trade(
    records: &[TradeRecord],
    gdp_path: &Path,
    threshold: f64,
    params: FitnessParams,
) -> Result<TrajectorySet> {
    let gdp = parse_gdp_csv(open(gdp_path)?)?;
    let mut by_year = BTreeMap::new();
    for year in years(records) {
        let m = matrix_from_trade(records, year, threshold)?;
        by_year.insert(year, fitness_fixed_point(&m, params)?);
    }
    build_trajectories(&by_year, &gdp)
}
