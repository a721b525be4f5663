//! Country trajectories in the (log10 GDPpc, log10 Fitness) plane and
//! analogue-based forecasting.
//!
//! A forecast for a state collects past states ("analogues") within a ball of
//! the normalised plane and averages what happened to them `horizon` years
//! later. Low dispersion of those displacements marks a laminar region, high
//! dispersion a turbulent one.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitness::FitnessResult;
use crate::ingest::{validate_code, GdpSeries};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub country: String,
    pub year: i32,
    /// log10 GDP per capita
    pub x: f64,
    /// log10 Fitness
    pub y: f64,
    pub xn: f64,
    pub yn: f64,
}

/// Per-axis mean and population standard deviation used for normalisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisStats {
    pub mean_x: f64,
    pub sd_x: f64,
    pub mean_y: f64,
    pub sd_y: f64,
}

impl AxisStats {
    pub fn normalize(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.mean_x) / self.sd_x, (y - self.mean_y) / self.sd_y)
    }
}

/// Immutable set of trajectory points sorted by (country, year).
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    points: Vec<TrajectoryPoint>,
    stats: AxisStats,
    index: BTreeMap<(String, i32), usize>,
    max_year: i32,
}

impl TrajectorySet {
    /// Builds the set from raw `(country, year, x, y)` states.
    pub fn new(raw: Vec<(String, i32, f64, f64)>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::EmptyInput("no trajectory points".into()));
        }
        let mut raw = raw;
        raw.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));
        for w in raw.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(Error::DuplicateSample {
                    country: w[0].0.clone(),
                    year: w[0].1,
                });
            }
        }
        if let Some(bad) = raw.iter().find(|r| !(r.2.is_finite() && r.3.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "non-finite state for {} in {}",
                bad.0, bad.1
            )));
        }
        let xs: Vec<f64> = raw.iter().map(|r| r.2).collect();
        let ys: Vec<f64> = raw.iter().map(|r| r.3).collect();
        let nonzero = |sd: f64| if sd > 0.0 { sd } else { 1.0 };
        let stats = AxisStats {
            mean_x: stats::mean(&xs),
            sd_x: nonzero(stats::std_pop(&xs)),
            mean_y: stats::mean(&ys),
            sd_y: nonzero(stats::std_pop(&ys)),
        };
        let points: Vec<TrajectoryPoint> = raw
            .into_iter()
            .map(|(country, year, x, y)| {
                let (xn, yn) = stats.normalize(x, y);
                TrajectoryPoint {
                    country,
                    year,
                    x,
                    y,
                    xn,
                    yn,
                }
            })
            .collect();
        let index = points
            .iter()
            .enumerate()
            .map(|(i, p)| ((p.country.clone(), p.year), i))
            .collect();
        let max_year = points.iter().map(|p| p.year).max().expect("nonempty");
        Ok(Self {
            points,
            stats,
            index,
            max_year,
        })
    }

    pub fn points(&self) -> &[TrajectoryPoint] {
        &self.points
    }

    pub fn stats(&self) -> AxisStats {
        self.stats
    }

    pub fn max_year(&self) -> i32 {
        self.max_year
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, country: &str, year: i32) -> Option<&TrajectoryPoint> {
        self.index
            .get(&(country.to_string(), year))
            .map(|&i| &self.points[i])
    }

    /// Point list per country, each ordered by year.
    pub fn by_country(&self) -> BTreeMap<&str, Vec<&TrajectoryPoint>> {
        let mut out: BTreeMap<&str, Vec<&TrajectoryPoint>> = BTreeMap::new();
        for p in &self.points {
            out.entry(p.country.as_str()).or_default().push(p);
        }
        out
    }

    /// Reads `country,year,log10_gdppc,log10_fitness`.
    pub fn read_csv<R: Read>(source: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(source);
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::MalformedRecord {
                line: 1,
                reason: e.to_string(),
            })?
            .iter()
            .map(String::from)
            .collect();
        if header != POINTS_HEADER {
            return Err(Error::MalformedRecord {
                line: 1,
                reason: format!("expected header `{}`", POINTS_HEADER.join(",")),
            });
        }
        let mut raw = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::MalformedRecord {
                line: e.position().map_or(0, |p| p.line()),
                reason: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            let bad = |what: &str| Error::MalformedRecord {
                line,
                reason: format!("invalid {what}"),
            };
            let country = rec[0].to_uppercase();
            validate_code(&country, line, "country")?;
            let year: i32 = rec[1].parse().map_err(|_| bad("year"))?;
            let x: f64 = rec[2].parse().map_err(|_| bad("log10_gdppc"))?;
            let y: f64 = rec[3].parse().map_err(|_| bad("log10_fitness"))?;
            if !(x.is_finite() && y.is_finite()) {
                return Err(bad("coordinate"));
            }
            raw.push((country, year, x, y));
        }
        Self::new(raw)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", POINTS_HEADER.join(","))?;
        for p in &self.points {
            writeln!(out, "{},{},{},{}", p.country, p.year, p.x, p.y)?;
        }
        Ok(())
    }
}

const POINTS_HEADER: [&str; 4] = ["country", "year", "log10_gdppc", "log10_fitness"];

/// Joins yearly Fitness results with GDP per capita.
///
/// Country-years missing from either source are skipped.
pub fn build_trajectories(
    fitness_by_year: &BTreeMap<i32, FitnessResult>,
    gdp: &[GdpSeries],
) -> Result<TrajectorySet> {
    let gdp_by_country: BTreeMap<&str, &GdpSeries> =
        gdp.iter().map(|s| (s.country.as_str(), s)).collect();
    let mut raw = Vec::new();
    for (&year, fit) in fitness_by_year {
        for (country, &f) in fit.countries.iter().zip(&fit.fitness) {
            let Some(series) = gdp_by_country.get(country.as_str()) else {
                continue;
            };
            let Some(&g) = series.samples.get(&year) else {
                continue;
            };
            if f > 0.0 && g > 0.0 {
                raw.push((country.clone(), year, g.log10(), f.log10()));
            }
        }
    }
    if raw.is_empty() {
        return Err(Error::EmptyInput(
            "no country-year present in both Fitness and GDP data".into(),
        ));
    }
    TrajectorySet::new(raw)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Laminar,
    Turbulent,
    NoData,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastParams {
    pub horizon: i32,
    /// Ball radius in normalised units.
    pub radius: f64,
    pub min_analogues: usize,
    /// Laminar iff the sample std of dx is at most this (log10 units).
    pub theta: f64,
}

impl Default for ForecastParams {
    fn default() -> Self {
        Self {
            horizon: 5,
            radius: 0.25,
            min_analogues: 5,
            theta: 0.05,
        }
    }
}

impl ForecastParams {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::InvalidParameter(format!(
                "horizon must be at least 1, got {}",
                self.horizon
            )));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "radius must be positive, got {}",
                self.radius
            )));
        }
        if self.min_analogues == 0 {
            return Err(Error::InvalidParameter("min_analogues must be at least 1".into()));
        }
        if !(self.theta >= 0.0 && self.theta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "theta must be nonnegative, got {}",
                self.theta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AnalogueRef {
    pub country: String,
    pub year: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    pub query: TrajectoryPoint,
    pub horizon: i32,
    pub analogues_used: usize,
    /// Mean (dx, dy) over the analogues, log10 units.
    pub mean_displacement: (f64, f64),
    /// Sample standard deviations of (dx, dy).
    pub dispersion: (f64, f64),
    pub regime: Regime,
    /// Laminar threshold applied to `dispersion.0`; a reporting convention.
    pub theta: f64,
    pub analogues: Vec<AnalogueRef>,
}

/// Where the neighbourhood is centred and which data it may see.
#[derive(Debug, Clone, Copy)]
struct Probe<'a> {
    xn: f64,
    yn: f64,
    country: Option<&'a str>,
    year: Option<i32>,
    /// Analogues must satisfy `year + horizon <= cutoff`.
    cutoff: Option<i32>,
}

struct Neighbourhood {
    analogues: Vec<AnalogueRef>,
    dx: Vec<f64>,
    dy: Vec<f64>,
}

fn admissible(probe: &Probe, q: &TrajectoryPoint, horizon: i32, max_year: i32) -> bool {
    let target = q.year + horizon;
    if target > max_year {
        return false;
    }
    if let (Some(c), Some(y)) = (probe.country, probe.year) {
        if q.country == c && target > y {
            return false;
        }
    }
    if let Some(cut) = probe.cutoff {
        if target > cut {
            return false;
        }
    }
    true
}

fn neighbourhood(set: &TrajectorySet, probe: &Probe, params: &ForecastParams) -> Neighbourhood {
    let mut nb = Neighbourhood {
        analogues: Vec::new(),
        dx: Vec::new(),
        dy: Vec::new(),
    };
    for q in &set.points {
        let dist = (q.xn - probe.xn).hypot(q.yn - probe.yn);
        if dist > params.radius || !admissible(probe, q, params.horizon, set.max_year) {
            continue;
        }
        let Some(future) = set.get(&q.country, q.year + params.horizon) else {
            continue;
        };
        nb.analogues.push(AnalogueRef {
            country: q.country.clone(),
            year: q.year,
        });
        nb.dx.push(future.x - q.x);
        nb.dy.push(future.y - q.y);
    }
    nb
}

fn summarize(
    query: TrajectoryPoint,
    nb: Neighbourhood,
    params: &ForecastParams,
) -> Result<ForecastResult> {
    let n = nb.analogues.len();
    if n < params.min_analogues {
        return Err(Error::InsufficientAnalogues {
            found: n,
            required: params.min_analogues,
        });
    }
    let sx = stats::std_sample(&nb.dx);
    let sy = stats::std_sample(&nb.dy);
    Ok(ForecastResult {
        query,
        horizon: params.horizon,
        analogues_used: n,
        mean_displacement: (stats::mean(&nb.dx), stats::mean(&nb.dy)),
        dispersion: (sx, sy),
        regime: if sx <= params.theta {
            Regime::Laminar
        } else {
            Regime::Turbulent
        },
        theta: params.theta,
        analogues: nb.analogues,
    })
}

/// Checks the temporal constraints of every analogue in `result`.
///
/// `cutoff` is the extra backtest restriction, if any.
pub fn verify_no_leakage(set: &TrajectorySet, result: &ForecastResult, cutoff: Option<i32>) -> bool {
    let probe = Probe {
        xn: result.query.xn,
        yn: result.query.yn,
        country: Some(&result.query.country),
        year: Some(result.query.year),
        cutoff,
    };
    result.analogues.iter().all(|a| {
        set.get(&a.country, a.year)
            .is_some_and(|q| admissible(&probe, q, result.horizon, set.max_year))
            && set.get(&a.country, a.year + result.horizon).is_some()
    })
}

fn forecast_point(
    set: &TrajectorySet,
    query: &TrajectoryPoint,
    params: &ForecastParams,
    cutoff: Option<i32>,
) -> Result<ForecastResult> {
    params.validate()?;
    let probe = Probe {
        xn: query.xn,
        yn: query.yn,
        country: Some(&query.country),
        year: Some(query.year),
        cutoff,
    };
    let nb = neighbourhood(set, &probe, params);
    let result = summarize(query.clone(), nb, params)?;
    assert!(
        verify_no_leakage(set, &result, cutoff),
        "analogue selection leaked future data for {} {}",
        query.country,
        query.year
    );
    Ok(result)
}

/// Analogue forecast of `query`'s displacement `horizon` years ahead.
///
/// The query's own future (beyond its year) is never used.
pub fn analogue_forecast(
    set: &TrajectorySet,
    query: &TrajectoryPoint,
    params: &ForecastParams,
) -> Result<ForecastResult> {
    forecast_point(set, query, params, None)
}

/// Forecast every point of the set; points without enough analogues are skipped.
pub fn forecast_all(set: &TrajectorySet, params: &ForecastParams) -> Result<Vec<ForecastResult>> {
    params.validate()?;
    let mut out = Vec::new();
    for p in &set.points {
        match analogue_forecast(set, p, params) {
            Ok(r) => out.push(r),
            Err(Error::InsufficientAnalogues { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

pub fn write_forecasts_csv<W: Write>(results: &[ForecastResult], mut out: W) -> Result<()> {
    writeln!(
        out,
        "country,year,x,y,horizon,analogues_used,mean_dx,mean_dy,sd_dx,sd_dy,regime"
    )?;
    for r in results {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.query.country,
            r.query.year,
            r.query.x,
            r.query.y,
            r.horizon,
            r.analogues_used,
            r.mean_displacement.0,
            r.mean_displacement.1,
            r.dispersion.0,
            r.dispersion.1,
            match r.regime {
                Regime::Laminar => "laminar",
                Regime::Turbulent => "turbulent",
                Regime::NoData => "no-data",
            }
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeCell {
    pub ix: usize,
    pub iy: usize,
    pub xn: f64,
    pub yn: f64,
    pub regime: Regime,
    pub analogues_used: usize,
    pub sd_dx: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeGrid {
    pub nx: usize,
    pub ny: usize,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub theta: f64,
    /// Row-major by `iy`, then `ix`.
    pub cells: Vec<RegimeCell>,
}

impl RegimeGrid {
    pub fn cell(&self, ix: usize, iy: usize) -> &RegimeCell {
        &self.cells[iy * self.nx + ix]
    }
}

/// Classifies the centres of an `nx` x `ny` grid over the normalised bounding box.
pub fn regime_map(
    set: &TrajectorySet,
    nx: usize,
    ny: usize,
    params: &ForecastParams,
) -> Result<RegimeGrid> {
    params.validate()?;
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidParameter(format!(
            "grid must be at least 2x2, got {nx}x{ny}"
        )));
    }
    if set.is_empty() {
        return Err(Error::EmptyInput("no trajectory points".into()));
    }
    let bounds = |f: fn(&TrajectoryPoint) -> f64| {
        set.points.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        })
    };
    let x_range = bounds(|p| p.xn);
    let y_range = bounds(|p| p.yn);
    let centre = |(lo, hi): (f64, f64), i: usize, n: usize| lo + (i as f64 + 0.5) * (hi - lo) / n as f64;

    let mut cells = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let xn = centre(x_range, ix, nx);
            let yn = centre(y_range, iy, ny);
            let probe = Probe {
                xn,
                yn,
                country: None,
                year: None,
                cutoff: None,
            };
            let nb = neighbourhood(set, &probe, params);
            let used = nb.analogues.len();
            let query = TrajectoryPoint {
                country: String::new(),
                year: 0,
                x: set.stats.mean_x + xn * set.stats.sd_x,
                y: set.stats.mean_y + yn * set.stats.sd_y,
                xn,
                yn,
            };
            let cell = match summarize(query, nb, params) {
                Ok(r) => RegimeCell {
                    ix,
                    iy,
                    xn,
                    yn,
                    regime: r.regime,
                    analogues_used: used,
                    sd_dx: Some(r.dispersion.0),
                },
                Err(Error::InsufficientAnalogues { .. }) => RegimeCell {
                    ix,
                    iy,
                    xn,
                    yn,
                    regime: Regime::NoData,
                    analogues_used: used,
                    sd_dx: None,
                },
                Err(e) => return Err(e),
            };
            cells.push(cell);
        }
    }
    Ok(RegimeGrid {
        nx,
        ny,
        x_range,
        y_range,
        theta: params.theta,
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub split_year: i32,
    pub horizon: i32,
    pub radius: f64,
    /// Queries with a realised outcome.
    pub candidates: usize,
    /// Queries actually scored.
    pub evaluated: usize,
    pub skipped_insufficient: usize,
    /// Mean absolute error of dx for the analogue forecast.
    pub mae_analogue: f64,
    /// Baseline predicting dx = 0.
    pub mae_persistence: f64,
    /// Baseline predicting the mean dx of all admissible training pairs.
    pub mae_global_mean: f64,
    pub leakage_violations: usize,
}

/// Out-of-sample evaluation of dx for every point at or after `split_year`.
///
/// Each query only sees analogues whose outcome year is at most the query year.
pub fn backtest(set: &TrajectorySet, params: &ForecastParams, split_year: i32) -> Result<BacktestReport> {
    params.validate()?;
    let h = params.horizon;
    let queries: Vec<(&TrajectoryPoint, f64)> = set
        .points
        .iter()
        .filter(|p| p.year >= split_year)
        .filter_map(|p| set.get(&p.country, p.year + h).map(|f| (p, f.x - p.x)))
        .collect();
    if queries.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no query at or after {split_year} has a realised outcome {h} years later"
        )));
    }

    // Training pairs (outcome year, dx) for the global-mean baseline.
    let mut training: Vec<(i32, f64)> = set
        .points
        .iter()
        .filter_map(|q| set.get(&q.country, q.year + h).map(|f| (q.year + h, f.x - q.x)))
        .collect();
    training.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let (mut err_a, mut err_p, mut err_g) = (0.0, 0.0, 0.0);
    let (mut evaluated, mut skipped, mut violations) = (0, 0, 0);
    for (q, realised) in &queries {
        let seen: Vec<f64> = training
            .iter()
            .take_while(|(t, _)| *t <= q.year)
            .map(|&(_, dx)| dx)
            .collect();
        if seen.is_empty() {
            skipped += 1;
            continue;
        }
        let forecast = match forecast_point(set, q, params, Some(q.year)) {
            Ok(r) => r,
            Err(Error::InsufficientAnalogues { .. }) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        if !verify_no_leakage(set, &forecast, Some(q.year)) {
            violations += 1;
        }
        evaluated += 1;
        err_a += (forecast.mean_displacement.0 - realised).abs();
        err_p += realised.abs();
        err_g += (stats::mean(&seen) - realised).abs();
    }
    if evaluated == 0 {
        return Err(Error::InsufficientAnalogues {
            found: 0,
            required: params.min_analogues,
        });
    }
    let n = evaluated as f64;
    Ok(BacktestReport {
        split_year,
        horizon: h,
        radius: params.radius,
        candidates: queries.len(),
        evaluated,
        skipped_insufficient: skipped,
        mae_analogue: err_a / n,
        mae_persistence: err_p / n,
        mae_global_mean: err_g / n,
        leakage_violations: violations,
    })
}
