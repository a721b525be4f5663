use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn efk(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_efk"))
        .args(args)
        .current_dir(dir)
        .env_remove("EFK_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> Output {
    let out = efk(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn error_object(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

/// Ten-country matrix written by the generator.
fn matrix_file(dir: &Path) -> String {
    ok(
        &["synth", "--kind", "matrix", "--countries", "10", "--products", "15", "--noise", "0.1", "--seed", "3", "-o", "m.csv"],
        dir,
    );
    "m.csv".into()
}

fn points_file(dir: &Path) -> String {
    ok(
        &[
            "synth", "--kind", "drift", "--countries", "30", "--years", "25", "--noise-sd", "0.02",
            "--drift-x", "0.01", "--seed", "5", "-o", "p.csv",
        ],
        dir,
    );
    "p.csv".into()
}

#[test]
fn fitness_on_trade_fixture_writes_a_ranking() {
    let tmp = tempfile::tempdir().unwrap();
    let trade = fixture("trade.csv");
    let out = ok(
        &["fitness", "--input", trade.to_str().unwrap(), "--year", "2015", "--format", "csv"],
        tmp.path(),
    );
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("entity,score,rank"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 10);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row[2].parse::<usize>().unwrap(), i + 1);
        assert!(row[1].parse::<f64>().unwrap() > 0.0);
    }
    let mean: f64 = rows.iter().map(|r| r[1].parse::<f64>().unwrap()).sum::<f64>() / 10.0;
    assert!((mean - 1.0).abs() < 1e-9);
    let summary = String::from_utf8(out.stderr).unwrap();
    assert!(summary.starts_with("fitness: 10 countries"), "{summary}");
    assert!(summary.contains("converged"));
}

#[test]
fn summary_goes_to_stdout_when_writing_a_file() {
    let tmp = tempfile::tempdir().unwrap();
    let m = matrix_file(tmp.path());
    let out = ok(&["eci", "--matrix", &m, "-o", "eci.csv"], tmp.path());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1);
    assert!(stdout.starts_with("eci: 10 countries"));
    assert!(tmp.path().join("eci.csv").exists());
}

#[test]
fn out_of_range_order_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let m = matrix_file(tmp.path());
    let out = efk(&["eci", "--matrix", &m, "--order-n", "99", "-o", "eci.csv"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let err = error_object(&out);
    assert_eq!(err["error"]["class"], "input");
    assert_eq!(err["error"]["kind"], "InvalidParameter");
    assert_eq!(err["error"]["exit_code"], 1);
    assert!(!tmp.path().join("eci.csv").exists());
}

#[test]
fn comparing_a_ranking_with_itself_gives_full_agreement() {
    let tmp = tempfile::tempdir().unwrap();
    let m = matrix_file(tmp.path());
    ok(&["fitness", "--matrix", &m, "-o", "fitness.csv"], tmp.path());
    let out = ok(&["compare", "--a", "fitness.csv", "--b", "fitness.csv", "--format", "json"], tmp.path());
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["spearman"].as_f64(), Some(1.0));
    assert_eq!(report["kendall_tau"].as_f64(), Some(1.0));
    assert!(report["deltas"].as_array().unwrap().iter().all(|d| d["delta"] == 0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("spearman 1.000000"));
}

#[test]
fn each_error_class_has_its_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let m = matrix_file(tmp.path());
    let p = points_file(tmp.path());
    std::fs::write(
        tmp.path().join("blocks.csv"),
        "country,P1,P2,P3,P4\nA,1,1,0,0\nB,1,1,0,0\nC,0,0,1,1\nD,0,0,1,1\n",
    )
    .unwrap();
    let cases: [(&[&str], i32, &str); 5] = [
        (&["fitness", "--matrix", "missing.csv"], 1, "input"),
        (&["fitness", "--matrix", &m, "--no-such-flag"], 1, "input"),
        (&["fitness", "--matrix", &m, "--max-iter", "2", "-o", "x.csv"], 2, "convergence"),
        (&["eci", "--matrix", "blocks.csv", "-o", "x.csv"], 3, "degenerate"),
        (
            &["forecast", "--points", &p, "--country", "C001", "--at-year", "2000", "--min-analogues", "5000", "-o", "x.csv"],
            4,
            "insufficient-data",
        ),
    ];
    for (args, code, class) in cases {
        let out = efk(args, tmp.path());
        assert_eq!(out.status.code(), Some(code), "{args:?}");
        assert_eq!(error_object(&out)["error"]["class"], class, "{args:?}");
        assert!(out.stdout.is_empty(), "{args:?}");
        assert!(!tmp.path().join("x.csv").exists(), "{args:?} left a file");
    }
}

#[test]
fn relative_inputs_resolve_against_data_dir() {
    let work = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_efk"))
        .args(["nestedness", "--input", "trade.csv", "--year", "2012"])
        .current_dir(work.path())
        .env("EFK_DATA_DIR", fixture(""))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("nodf_rows,"));
}

#[test]
fn json_outputs_carry_schema_version_and_optional_timestamp() {
    let tmp = tempfile::tempdir().unwrap();
    let m = matrix_file(tmp.path());
    let plain: Value =
        serde_json::from_slice(&ok(&["eci", "--matrix", &m, "--format", "json"], tmp.path()).stdout).unwrap();
    assert_eq!(plain["schema_version"], 1);
    assert!(plain.get("run").is_none());
    let stamped: Value = serde_json::from_slice(
        &ok(&["eci", "--matrix", &m, "--format", "json", "--timestamp", "2020-01-01T00:00:00Z"], tmp.path()).stdout,
    )
    .unwrap();
    assert_eq!(stamped["run"]["timestamp"], "2020-01-01T00:00:00Z");
    assert_eq!(stamped["ranking"], plain["ranking"]);
}

#[test]
fn trajectories_can_come_from_trade_and_gdp() {
    let tmp = tempfile::tempdir().unwrap();
    let trade = fixture("trade.csv");
    let gdp = fixture("gdp.csv");
    let out = ok(
        &[
            "forecast", "--input", trade.to_str().unwrap(), "--gdp", gdp.to_str().unwrap(),
            "--horizon", "2", "--radius", "1.0", "--min-analogues", "3",
        ],
        tmp.path(),
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("country,year,x,y,horizon,"));
    assert!(text.lines().count() > 1);
}

/// Every subcommand, in both formats where it has two.
fn all_commands(m: &str, p: &str, trade: &str, gdp: &str) -> Vec<Vec<String>> {
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let mut runs = Vec::new();
    for fmt in ["csv", "json"] {
        runs.extend([
            s(&["fitness", "--matrix", m, "--format", fmt]),
            s(&["fitness", "--input", trade, "--year", "2015", "--products", "--format", fmt]),
            s(&["eci", "--matrix", m, "--format", fmt]),
            s(&["eci", "--input", trade, "--products", "--format", fmt]),
            s(&["reflections", "--matrix", m, "--depth", "8", "--format", fmt]),
            s(&["compare", "--a", "f.csv", "--b", "e.csv", "--format", fmt]),
            s(&["counterfactual", "--matrix", m, "--country", "C008", "--product", "P001", "--format", fmt]),
            s(&["counterfactual", "--matrix", m, "--pairs", "pairs.csv", "--frozen-pci", "--format", fmt]),
            s(&["nestedness", "--matrix", m, "--format", fmt]),
            s(&["forecast", "--points", p, "--radius", "0.4", "--format", fmt]),
            s(&["forecast", "--input", trade, "--gdp", gdp, "--horizon", "2", "--radius", "1.0", "--min-analogues", "3", "--format", fmt]),
            s(&["backtest", "--points", p, "--split-year", "2005", "--radius", "0.5", "--format", fmt]),
            s(&["regime-map", "--points", p, "--nx", "5", "--ny", "4", "--radius", "0.5", "--format", fmt]),
            s(&["synth", "--kind", "matrix", "--countries", "12", "--products", "20", "--noise", "0.2", "--seed", "9", "--format", fmt]),
            s(&["synth", "--kind", "drift", "--countries", "5", "--years", "6", "--noise-sd", "0.1", "--seed", "9", "--format", fmt]),
        ]);
    }
    runs.push(s(&["plot-data", "--points", p, "--nx", "4", "--ny", "4", "--radius", "0.5", "--timestamp", "fixed"]));
    runs
}

#[test]
fn every_command_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let m = matrix_file(tmp.path());
    let p = points_file(tmp.path());
    ok(&["fitness", "--matrix", &m, "-o", "f.csv"], tmp.path());
    ok(&["eci", "--matrix", &m, "-o", "e.csv"], tmp.path());
    std::fs::write(tmp.path().join("pairs.csv"), "country,product\nC007,P001\nC008,P001\nC009,P003\n").unwrap();
    let trade = fixture("trade.csv");
    let gdp = fixture("gdp.csv");
    let runs = all_commands(&m, &p, trade.to_str().unwrap(), gdp.to_str().unwrap());
    assert_eq!(runs.len(), 31);
    for (i, args) in runs.iter().enumerate() {
        let mut bodies = Vec::new();
        for rep in 0..2 {
            let name = format!("out_{i}_{rep}");
            let mut with_out: Vec<&str> = args.iter().map(String::as_str).collect();
            with_out.extend(["-o", &name]);
            let out = ok(&with_out, tmp.path());
            let body = std::fs::read(tmp.path().join(&name)).unwrap();
            assert!(!body.is_empty(), "{args:?}");
            bodies.push((body, out.stdout));
        }
        assert!(bodies[0] == bodies[1], "{args:?} differs between runs");
    }
}
