mod input;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use efk_core::counterfactual::{
    coalfish_batch, compare_rankings, counterfactual_with_baseline, write_batch_csv, Baseline,
    CounterfactualParams,
};
use efk_core::dynamics::{
    analogue_forecast, backtest, forecast_all, regime_map, write_forecasts_csv, ForecastParams,
    Regime, TrajectorySet,
};
use efk_core::eci::{eci_eigen, method_of_reflections};
use efk_core::fitness::{fitness_fixed_point, FitnessParams};
use efk_core::matrix::nestedness;
use efk_core::ranking::RankingResult;
use efk_core::synth::{drift_field, nested_matrix, DriftSpec, SynthSpec};
use efk_core::{BinaryCPMatrix, Error, Result};

#[derive(Parser)]
#[command(name = "efk", version, about = "Economic Fitness and Complexity toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fitness-Complexity ranking of countries (or products).
    Fitness(FitnessCmd),
    /// ECI/PCI ranking from the n-th eigenvector.
    Eci(EciCmd),
    /// Levels of the method of reflections.
    Reflections(ReflectionsCmd),
    /// Rank agreement between two ranking CSVs.
    Compare(CompareCmd),
    /// Restrict a country's basket and compare both rankings before and after.
    Counterfactual(CounterfactualCmd),
    /// NODF nestedness of the binary matrix.
    Nestedness(NestednessCmd),
    /// Analogue forecasts of trajectory displacements.
    Forecast(ForecastCmd),
    /// Out-of-sample evaluation of the analogue forecaster.
    Backtest(BacktestCmd),
    /// Laminar/turbulent classification over a grid of the plane.
    RegimeMap(RegimeMapCmd),
    /// Synthetic nested matrices or trajectory fields.
    Synth(SynthCmd),
    /// Trajectories, regime grid and forecasts as one JSON document.
    PlotData(PlotDataCmd),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct OutputArgs {
    /// Output file; standard output when omitted.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Value recorded as run metadata in JSON outputs. Nothing time-dependent
    /// is written otherwise.
    #[arg(long)]
    timestamp: Option<String>,
}

#[derive(Args)]
struct DataDir {
    /// Root for relative input paths.
    #[arg(long, env = "EFK_DATA_DIR", hide_env_values = true)]
    data_dir: Option<PathBuf>,
}

#[derive(Args)]
struct MatrixInput {
    /// Trade CSV (`year,exporter,product,value`).
    #[arg(long, conflicts_with = "matrix", required_unless_present = "matrix")]
    input: Option<PathBuf>,
    /// Binary matrix CSV (`country,<products...>`), used instead of trade data.
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Trade year; defaults to the latest year in the file.
    #[arg(long, requires = "input")]
    year: Option<i32>,
    /// RCA threshold for M_cp = 1.
    #[arg(long, default_value_t = 1.0)]
    threshold: f64,
    #[command(flatten)]
    dir: DataDir,
}

impl MatrixInput {
    fn load(&self) -> Result<BinaryCPMatrix> {
        let dir = self.dir.data_dir.as_deref();
        if let Some(path) = &self.matrix {
            return input::read_matrix(&input::resolve(path, dir));
        }
        let path = self.input.as_ref().expect("clap enforces one input");
        let records = input::read_trade(&input::resolve(path, dir))?;
        let year = match self.year {
            Some(y) => y,
            None => *efk_core::ingest::years(&records)
                .last()
                .ok_or_else(|| Error::EmptyInput("trade CSV has no records".into()))?,
        };
        input::matrix_from_trade(&records, year, self.threshold)
    }
}

#[derive(Args)]
struct FitnessOpts {
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    #[arg(long, default_value_t = 20)]
    rank_patience: usize,
}

impl FitnessOpts {
    fn params(&self) -> FitnessParams {
        FitnessParams {
            tol: self.tol,
            max_iter: self.max_iter,
            rank_patience: self.rank_patience,
        }
    }
}

#[derive(Args)]
struct FitnessCmd {
    #[command(flatten)]
    input: MatrixInput,
    #[command(flatten)]
    fit: FitnessOpts,
    /// Rank products by complexity instead of countries by fitness.
    #[arg(long)]
    products: bool,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct EciCmd {
    #[command(flatten)]
    input: MatrixInput,
    /// Which eigenvector (1 = leading, trivial one).
    #[arg(long, default_value_t = 2)]
    order_n: usize,
    /// Rank products by PCI instead of countries by ECI.
    #[arg(long)]
    products: bool,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct ReflectionsCmd {
    #[command(flatten)]
    input: MatrixInput,
    #[arg(long, default_value_t = 20)]
    depth: usize,
    /// Write product levels instead of country levels (CSV only).
    #[arg(long)]
    products: bool,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct CompareCmd {
    /// First ranking CSV (`entity,score,rank`).
    #[arg(long)]
    a: PathBuf,
    /// Second ranking CSV.
    #[arg(long)]
    b: PathBuf,
    #[command(flatten)]
    dir: DataDir,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct CounterfactualCmd {
    #[command(flatten)]
    input: MatrixInput,
    #[command(flatten)]
    fit: FitnessOpts,
    #[arg(long, default_value_t = 2)]
    order_n: usize,
    /// Country to restrict.
    #[arg(long, requires = "product", conflicts_with = "pairs")]
    country: Option<String>,
    /// Product to keep; repeat to keep several.
    #[arg(long)]
    product: Vec<String>,
    /// CSV of `country,product` pairs, one single-product experiment each.
    #[arg(long, required_unless_present = "country")]
    pairs: Option<PathBuf>,
    /// Hold PCI at its pre-restriction values instead of recomputing.
    #[arg(long)]
    frozen_pci: bool,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct NestednessCmd {
    #[command(flatten)]
    input: MatrixInput,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct TrajectoryInput {
    /// Points CSV (`country,year,log10_gdppc,log10_fitness`).
    #[arg(long, conflicts_with_all = ["input", "gdp"], required_unless_present = "input")]
    points: Option<PathBuf>,
    /// Trade CSV; Fitness is computed for every year in it.
    #[arg(long, requires = "gdp")]
    input: Option<PathBuf>,
    /// GDP per capita CSV (`country,year,gdppc`).
    #[arg(long)]
    gdp: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    threshold: f64,
    #[command(flatten)]
    fit: FitnessOpts,
    #[command(flatten)]
    dir: DataDir,
}

impl TrajectoryInput {
    fn load(&self) -> Result<TrajectorySet> {
        let dir = self.dir.data_dir.as_deref();
        if let Some(p) = &self.points {
            return input::read_points(&input::resolve(p, dir));
        }
        let trade = self.input.as_ref().expect("clap enforces one input");
        let gdp = self.gdp.as_ref().expect("clap enforces --gdp");
        let records = input::read_trade(&input::resolve(trade, dir))?;
        input::trajectories_from_trade(
            &records,
            &input::resolve(gdp, dir),
            self.threshold,
            self.fit.params(),
        )
    }
}

#[derive(Args)]
struct ForecastOpts {
    #[arg(long, default_value_t = 5)]
    horizon: i32,
    /// Neighbourhood radius in normalised units.
    #[arg(long, default_value_t = 0.25)]
    radius: f64,
    #[arg(long, default_value_t = 5)]
    min_analogues: usize,
    /// Laminar threshold on the dx dispersion, log10 units.
    #[arg(long, default_value_t = 0.05)]
    theta: f64,
}

impl ForecastOpts {
    fn params(&self) -> ForecastParams {
        ForecastParams {
            horizon: self.horizon,
            radius: self.radius,
            min_analogues: self.min_analogues,
            theta: self.theta,
        }
    }
}

#[derive(Args)]
struct ForecastCmd {
    #[command(flatten)]
    traj: TrajectoryInput,
    #[command(flatten)]
    opts: ForecastOpts,
    /// Forecast one country only (with --at-year); all points otherwise.
    #[arg(long, requires = "at_year")]
    country: Option<String>,
    #[arg(long, requires = "country")]
    at_year: Option<i32>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct BacktestCmd {
    #[command(flatten)]
    traj: TrajectoryInput,
    #[command(flatten)]
    opts: ForecastOpts,
    /// Points from this year on are forecast out of sample.
    #[arg(long)]
    split_year: i32,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct RegimeMapCmd {
    #[command(flatten)]
    traj: TrajectoryInput,
    #[command(flatten)]
    opts: ForecastOpts,
    #[arg(long, default_value_t = 20)]
    nx: usize,
    #[arg(long, default_value_t = 20)]
    ny: usize,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SynthKind {
    /// Noisy staircase matrix.
    Matrix,
    /// Random-walk trajectory field.
    Drift,
}

#[derive(Args)]
struct SynthCmd {
    #[arg(long, value_enum)]
    kind: SynthKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    countries: usize,
    #[arg(long, default_value_t = 30)]
    products: usize,
    /// Cell flip probability of the matrix.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 30)]
    years: usize,
    #[arg(long, default_value_t = 1990)]
    first_year: i32,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    drift_x: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    drift_y: f64,
    #[arg(long, default_value_t = 0.0)]
    noise_sd: f64,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct PlotDataCmd {
    #[command(flatten)]
    traj: TrajectoryInput,
    #[command(flatten)]
    opts: ForecastOpts,
    #[arg(long, default_value_t = 20)]
    nx: usize,
    #[arg(long, default_value_t = 20)]
    ny: usize,
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long)]
    timestamp: Option<String>,
}

/// Rendered artifact plus the one-line summary.
struct Outcome {
    body: Vec<u8>,
    summary: String,
}

fn csv_body(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn json_body(mut value: Value, timestamp: Option<&str>) -> Result<Vec<u8>> {
    if let Value::Object(map) = &mut value {
        map.insert("schema_version".into(), json!(1));
        if let Some(t) = timestamp {
            map.insert("run".into(), json!({ "timestamp": t }));
        }
    }
    let mut buf = serde_json::to_vec_pretty(&value)?;
    buf.push(b'\n');
    Ok(buf)
}

fn render(
    out: &OutputArgs,
    csv: impl FnOnce(&mut Vec<u8>) -> Result<()>,
    json: impl FnOnce() -> Value,
) -> Result<Vec<u8>> {
    match out.format {
        Format::Csv => csv_body(csv),
        Format::Json => json_body(json(), out.timestamp.as_deref()),
    }
}

fn ranking_json(r: &RankingResult) -> Value {
    r.to_json()
}

fn stop_label(converged: bool, reason: efk_core::fitness::StopReason) -> String {
    let reason = serde_json::to_value(reason)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default();
    if converged {
        format!("converged ({reason})")
    } else {
        format!("not converged ({reason})")
    }
}

fn run_fitness(cmd: &FitnessCmd) -> Result<Outcome> {
    let m = cmd.input.load()?;
    let fit = fitness_fixed_point(&m, cmd.fit.params())?;
    let ranking = if cmd.products {
        fit.product_ranking()
    } else {
        fit.country_ranking()
    };
    let body = render(&cmd.out, |w| ranking.write_csv(w), || {
        let mut v = ranking_json(&ranking);
        v["stop_reason"] = json!(fit.stop_reason);
        v
    })?;
    Ok(Outcome {
        body,
        summary: format!(
            "fitness: {} countries, {} products, {} iterations, {}",
            m.n_countries(),
            m.n_products(),
            fit.iterations,
            stop_label(fit.converged, fit.stop_reason)
        ),
    })
}

fn run_eci(cmd: &EciCmd) -> Result<Outcome> {
    let m = cmd.input.load()?;
    let sol = eci_eigen(&m, cmd.order_n)?;
    let ranking = if cmd.products {
        sol.product_ranking()
    } else {
        sol.country_ranking()
    };
    let body = render(&cmd.out, |w| ranking.write_csv(w), || ranking_json(&ranking))?;
    Ok(Outcome {
        body,
        summary: format!(
            "eci: {} countries, {} products, order {}, lambda {:.6}, residual {:.1e}",
            m.n_countries(),
            m.n_products(),
            sol.order_n,
            sol.lambda,
            sol.eigen_residual
        ),
    })
}

fn run_reflections(cmd: &ReflectionsCmd) -> Result<Outcome> {
    let m = cmd.input.load()?;
    let trace = method_of_reflections(&m, cmd.depth);
    let body = render(&cmd.out, |w| trace.write_csv(w, cmd.products), || {
        serde_json::to_value(&trace).unwrap_or(Value::Null)
    })?;
    Ok(Outcome {
        body,
        summary: format!(
            "reflections: {} countries, {} products, depth {}",
            m.n_countries(),
            m.n_products(),
            cmd.depth
        ),
    })
}

fn run_compare(cmd: &CompareCmd) -> Result<Outcome> {
    let dir = cmd.dir.data_dir.as_deref();
    let a = input::read_ranking(&input::resolve(&cmd.a, dir))?;
    let b = input::read_ranking(&input::resolve(&cmd.b, dir))?;
    let report = compare_rankings(&a, &b)?;
    let body = render(&cmd.out, |w| report.write_csv(w), || {
        serde_json::to_value(&report).unwrap_or(Value::Null)
    })?;
    Ok(Outcome {
        body,
        summary: format!(
            "compare: {} entities, spearman {:.6}, kendall {:.6}, top-{} overlap {}",
            report.n, report.spearman, report.kendall_tau, report.top_k, report.top_k_overlap
        ),
    })
}

fn read_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim().trim_start_matches('\u{feff}') == "country,product" => {}
        _ => {
            return Err(Error::MalformedRecord {
                line: 1,
                reason: "expected header `country,product`".into(),
            })
        }
    }
    let mut pairs = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 2 || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::MalformedRecord {
                line: i as u64 + 1,
                reason: "expected `country,product`".into(),
            });
        }
        pairs.push((fields[0].to_string(), fields[1].to_string()));
    }
    if pairs.is_empty() {
        return Err(Error::EmptyInput("pairs CSV has no rows".into()));
    }
    Ok(pairs)
}

fn run_counterfactual(cmd: &CounterfactualCmd) -> Result<Outcome> {
    let m = cmd.input.load()?;
    let params = CounterfactualParams {
        fitness: cmd.fit.params(),
        order_n: cmd.order_n,
        frozen_pci: cmd.frozen_pci,
    };
    let outcomes = match (&cmd.country, &cmd.pairs) {
        (Some(country), _) => {
            let base = Baseline::compute(&m, &params)?;
            vec![counterfactual_with_baseline(&m, &base, country, &cmd.product, &params)?]
        }
        (None, Some(path)) => {
            let pairs = read_pairs(&input::resolve(path, cmd.input.dir.data_dir.as_deref()))?;
            coalfish_batch(&m, &pairs, &params)?
        }
        (None, None) => unreachable!("clap enforces --country or --pairs"),
    };
    let improved = outcomes
        .iter()
        .filter(|o| o.eci_rank_after < o.eci_rank_before)
        .count();
    let body = render(&cmd.out, |w| write_batch_csv(&outcomes, w), || {
        json!({ "frozen_pci": cmd.frozen_pci, "outcomes": outcomes })
    })?;
    Ok(Outcome {
        body,
        summary: format!(
            "counterfactual: {} experiments, ECI rank improved in {}, {}",
            outcomes.len(),
            improved,
            if cmd.frozen_pci { "frozen PCI" } else { "recomputed PCI" }
        ),
    })
}

fn run_nestedness(cmd: &NestednessCmd) -> Result<Outcome> {
    let m = cmd.input.load()?;
    let r = nestedness(&m);
    let body = render(
        &cmd.out,
        |w| {
            writeln!(w, "nodf_rows,nodf_cols,nodf_total,fill")?;
            writeln!(w, "{},{},{},{}", r.nodf_rows, r.nodf_cols, r.nodf_total, r.fill)?;
            Ok(())
        },
        || serde_json::to_value(r).unwrap_or(Value::Null),
    )?;
    Ok(Outcome {
        body,
        summary: format!(
            "nestedness: {} countries, {} products, NODF {:.3}",
            m.n_countries(),
            m.n_products(),
            r.nodf_total
        ),
    })
}

fn run_forecast(cmd: &ForecastCmd) -> Result<Outcome> {
    let set = cmd.traj.load()?;
    let params = cmd.opts.params();
    let results = match (&cmd.country, cmd.at_year) {
        (Some(c), Some(y)) => {
            let code = c.to_uppercase();
            let q = set
                .get(&code, y)
                .ok_or_else(|| Error::UnknownEntity(format!("{code} in {y}")))?;
            vec![analogue_forecast(&set, q, &params)?]
        }
        _ => forecast_all(&set, &params)?,
    };
    let laminar = results.iter().filter(|r| r.regime == Regime::Laminar).count();
    let body = render(&cmd.out, |w| write_forecasts_csv(&results, w), || {
        json!({ "theta": params.theta, "forecasts": results })
    })?;
    Ok(Outcome {
        body,
        summary: format!(
            "forecast: {} of {} points forecast, {} laminar, horizon {}",
            results.len(),
            set.len(),
            laminar,
            params.horizon
        ),
    })
}

fn run_backtest(cmd: &BacktestCmd) -> Result<Outcome> {
    let set = cmd.traj.load()?;
    let r = backtest(&set, &cmd.opts.params(), cmd.split_year)?;
    let body = render(
        &cmd.out,
        |w| {
            writeln!(
                w,
                "split_year,horizon,radius,candidates,evaluated,skipped_insufficient,\
                 mae_analogue,mae_persistence,mae_global_mean,leakage_violations"
            )?;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                r.split_year,
                r.horizon,
                r.radius,
                r.candidates,
                r.evaluated,
                r.skipped_insufficient,
                r.mae_analogue,
                r.mae_persistence,
                r.mae_global_mean,
                r.leakage_violations
            )?;
            Ok(())
        },
        || serde_json::to_value(&r).unwrap_or(Value::Null),
    )?;
    Ok(Outcome {
        body,
        summary: format!(
            "backtest: {} evaluated, {} skipped, MAE analogue {:.4} persistence {:.4} global mean {:.4}",
            r.evaluated, r.skipped_insufficient, r.mae_analogue, r.mae_persistence, r.mae_global_mean
        ),
    })
}

fn regime_label(r: Regime) -> &'static str {
    match r {
        Regime::Laminar => "laminar",
        Regime::Turbulent => "turbulent",
        Regime::NoData => "no-data",
    }
}

fn run_regime_map(cmd: &RegimeMapCmd) -> Result<Outcome> {
    let set = cmd.traj.load()?;
    let grid = regime_map(&set, cmd.nx, cmd.ny, &cmd.opts.params())?;
    let count = |r: Regime| grid.cells.iter().filter(|c| c.regime == r).count();
    let body = render(
        &cmd.out,
        |w| {
            writeln!(w, "ix,iy,xn,yn,regime,analogues_used,sd_dx")?;
            for c in &grid.cells {
                let sd = c.sd_dx.map(|v| v.to_string()).unwrap_or_default();
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    c.ix,
                    c.iy,
                    c.xn,
                    c.yn,
                    regime_label(c.regime),
                    c.analogues_used,
                    sd
                )?;
            }
            Ok(())
        },
        || serde_json::to_value(&grid).unwrap_or(Value::Null),
    )?;
    Ok(Outcome {
        body,
        summary: format!(
            "regime-map: {}x{} cells, {} laminar, {} turbulent, {} without data",
            grid.nx,
            grid.ny,
            count(Regime::Laminar),
            count(Regime::Turbulent),
            count(Regime::NoData)
        ),
    })
}

fn run_synth(cmd: &SynthCmd) -> Result<Outcome> {
    match cmd.kind {
        SynthKind::Matrix => {
            let m = nested_matrix(&SynthSpec {
                countries: cmd.countries,
                products: cmd.products,
                noise: cmd.noise,
                seed: cmd.seed,
            })?;
            let body = render(&cmd.out, |w| m.write_csv(w), || m.to_json())?;
            Ok(Outcome {
                body,
                summary: format!(
                    "synth: matrix {} countries, {} products, fill {:.3}",
                    m.n_countries(),
                    m.n_products(),
                    m.fill()
                ),
            })
        }
        SynthKind::Drift => {
            let set = drift_field(&DriftSpec {
                countries: cmd.countries,
                years: cmd.years,
                first_year: cmd.first_year,
                drift: (cmd.drift_x, cmd.drift_y),
                noise_sd: cmd.noise_sd,
                seed: cmd.seed,
            })?;
            let body = render(&cmd.out, |w| set.write_csv(w), || points_json(&set))?;
            Ok(Outcome {
                body,
                summary: format!(
                    "synth: drift field {} countries, {} years, {} points",
                    cmd.countries,
                    cmd.years,
                    set.len()
                ),
            })
        }
    }
}

fn points_json(set: &TrajectorySet) -> Value {
    json!({ "points": set.points() })
}

fn run_plot_data(cmd: &PlotDataCmd) -> Result<Outcome> {
    let set = cmd.traj.load()?;
    let params = cmd.opts.params();
    let grid = regime_map(&set, cmd.nx, cmd.ny, &params)?;
    let forecasts = forecast_all(&set, &params)?;
    let trajectories: serde_json::Map<String, Value> = set
        .by_country()
        .into_iter()
        .map(|(c, pts)| (c.to_string(), json!(pts)))
        .collect();
    let body = json_body(
        json!({
            "trajectories": trajectories,
            "regime_grid": grid,
            "forecasts": forecasts,
        }),
        cmd.timestamp.as_deref(),
    )?;
    Ok(Outcome {
        body,
        summary: format!(
            "plot-data: {} countries, {} points, {}x{} grid, {} forecasts",
            trajectories.len(),
            set.len(),
            grid.nx,
            grid.ny,
            forecasts.len()
        ),
    })
}

/// Writes via a temporary file in the target directory and renames it, so a
/// failed run never leaves a partial file behind.
fn write_atomic(path: &Path, body: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(body)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn output_path(cmd: &Command) -> Option<&Path> {
    match cmd {
        Command::Fitness(c) => c.out.output.as_deref(),
        Command::Eci(c) => c.out.output.as_deref(),
        Command::Reflections(c) => c.out.output.as_deref(),
        Command::Compare(c) => c.out.output.as_deref(),
        Command::Counterfactual(c) => c.out.output.as_deref(),
        Command::Nestedness(c) => c.out.output.as_deref(),
        Command::Forecast(c) => c.out.output.as_deref(),
        Command::Backtest(c) => c.out.output.as_deref(),
        Command::RegimeMap(c) => c.out.output.as_deref(),
        Command::Synth(c) => c.out.output.as_deref(),
        Command::PlotData(c) => c.output.as_deref(),
    }
}

fn dispatch(cmd: &Command) -> Result<Outcome> {
    match cmd {
        Command::Fitness(c) => run_fitness(c),
        Command::Eci(c) => run_eci(c),
        Command::Reflections(c) => run_reflections(c),
        Command::Compare(c) => run_compare(c),
        Command::Counterfactual(c) => run_counterfactual(c),
        Command::Nestedness(c) => run_nestedness(c),
        Command::Forecast(c) => run_forecast(c),
        Command::Backtest(c) => run_backtest(c),
        Command::RegimeMap(c) => run_regime_map(c),
        Command::Synth(c) => run_synth(c),
        Command::PlotData(c) => run_plot_data(c),
    }
}

fn report_error(code: u8, class: &str, kind: &str, message: &str) -> ExitCode {
    let obj = json!({
        "error": { "class": class, "kind": kind, "message": message, "exit_code": code }
    });
    eprintln!("{obj}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.render().to_string();
            return report_error(1, "input", "Usage", message.trim_end());
        }
    };
    let outcome = match dispatch(&cli.command) {
        Ok(o) => o,
        Err(e) => {
            let class = e.class();
            return report_error(
                class.exit_code() as u8,
                class.as_str(),
                e.kind(),
                &e.to_string(),
            );
        }
    };
    match output_path(&cli.command) {
        Some(path) => {
            if let Err(e) = write_atomic(path, &outcome.body) {
                let msg = format!("{}: {e}", path.display());
                return report_error(1, "input", "Io", &msg);
            }
            println!("{}", outcome.summary);
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            if stdout.write_all(&outcome.body).and_then(|_| stdout.flush()).is_err() {
                return report_error(1, "input", "Io", "failed to write standard output");
            }
            eprintln!("{}", outcome.summary);
        }
    }
    ExitCode::SUCCESS
}
