//! Command line front end and file formats.

use std::path::Path;
use std::process::{Command, Output};

use brane_lab::error::LabError;
use brane_lab::field::{make_initial, InitialKind, InitialSpec};
use brane_lab::grid::{convergence_order, Grid};
use brane_lab::lab::{csv_header, read_snapshot, write_snapshot, ExperimentConfig};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_brane-lab")).args(args).output().unwrap()
}

fn config(kind: &str, n: usize, extra_initial: &str, t_end: f64, every: f64) -> String {
    format!(
        r#"{{"m":1,"domain":{{"length":[6.283185307179586],"n":[{n}]}},
"initial":{{"kind":"{kind}","amplitude":0.2{extra_initial}}},
"solver":{{"scheme":"mol4_rk4","cfl":0.4,"t_end":{t_end},"snapshot_every":{every},"dissipation":0.0}},
"guards":{{"gamma_min":1e-8,"boundary_tol":1e-10}}}}"#
    )
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr_json(o: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&o.stderr);
    assert_eq!(text.trim().lines().count(), 1, "{text}");
    serde_json::from_str(text.trim()).unwrap()
}

#[test]
fn simulate_writes_snapshots_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &config("traveling", 64, "", 0.5, 0.25));
    let out = dir.path().join("run");
    let o = bin(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let names: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    for k in 0..3 {
        assert!(names.contains(&format!("snapshot_{k:05}.json")), "{names:?}");
    }
    // No temporary files left behind.
    assert_eq!(names.len(), 5, "{names:?}");
    let csv = std::fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header, csv_header(1));
    let mut last = f64::NEG_INFINITY;
    let mut rows = 0;
    for l in lines {
        let vals: Vec<f64> = l.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(vals.len(), header.len());
        assert!(vals.iter().all(|v| v.is_finite()));
        assert!(vals[0] > last);
        last = vals[0];
        rows += 1;
    }
    assert_eq!(rows, 3);
    let s = read_snapshot(&out.join("snapshot_00002.json")).unwrap();
    assert_eq!(s.t, 0.5);
}

#[test]
fn charges_and_characteristics_of_a_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let g = Grid::new(vec![64], vec![2.0 * std::f64::consts::PI]).unwrap();
    let s = make_initial(&g, &InitialSpec::new(InitialKind::Traveling).amplitude(0.2)).unwrap();
    let path = dir.path().join("s.json");
    write_snapshot(&s, &path).unwrap();
    let o = bin(&["charges", "--snapshot", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["P"].as_array().unwrap().len(), 3);
    assert_eq!(v["L"].as_array().unwrap().len(), 3);
    assert_eq!(v["moments"].as_array().unwrap().len(), 3);

    let o = bin(&["characteristics", "--snapshot", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    // A right-mover rides the λ+ = 1 characteristic.
    let lp = v["lambda_plus"].as_array().unwrap();
    assert!((lp[0].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert!(v["max_abs_speed"].as_f64().unwrap() <= 1.0 + 1e-14);
    assert!(v["min_speed_gap"].as_f64().unwrap() > 0.0);
}

#[test]
fn residuals_of_a_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &config("gaussian", 64, "", 0.75, 0.25));
    let out = dir.path().join("run");
    assert_eq!(
        bin(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]).status.code(),
        Some(0)
    );
    let o = bin(&["residuals", "--run", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let reports = v.as_array().unwrap();
    assert_eq!(reports.len(), 2);
    for r in reports {
        assert_eq!(r["eq4_resid"].as_array().unwrap().len(), 3);
        assert!(r["identity_resid"].as_f64().unwrap() <= 1e-12);
    }
}

#[test]
fn converge_table_reports_orders_consistent_with_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &config("traveling", 64, "", 1.0, 1.0));
    let o = bin(&["converge", "--config", &cfg, "--levels", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<Vec<&str>> = text
        .lines()
        .filter(|l| l.chars().next().is_some_and(|c| c.is_ascii_digit()))
        .map(|l| l.split_whitespace().collect())
        .collect();
    assert_eq!(rows.len(), 3, "{text}");
    assert_eq!(rows[0][1], "64");
    assert_eq!(rows[2][1], "256");
    let errs: Vec<f64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    assert_eq!(rows[0][4], "-");
    for k in 1..3 {
        let printed: f64 = rows[k][4].parse().unwrap();
        let expect = convergence_order(errs[k - 1], errs[k]).unwrap();
        assert!((printed - expect).abs() < 1e-3, "{printed} vs {expect}");
        assert!(printed > 3.5);
    }
}

#[test]
fn compare_reports_cross_solver_differences() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &config("gaussian", 64, "", 0.5, 0.25).replace("0.2", "0.1"));
    let o = bin(&["compare", "--config", &cfg, "--levels", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["levels"].as_array().unwrap().len(), 2);
    assert!(v["ratios"][0].as_f64().unwrap() > 2.0);
}

#[test]
fn config_errors_exit_with_code_two_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let bad = config("gaussian", 64, r#","colour":"red""#, 1.0, 0.5);
    let cfg = write(dir.path(), "bad.json", &bad);
    let o = bin(&["simulate", "--config", &cfg, "--out", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let v = stderr_json(&o);
    assert_eq!(v["error"], "ConfigError");
    assert_eq!(v["exit_code"], 2);

    let o = bin(&["teleport"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "ConfigError");
    let o = bin(&["converge", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn degenerate_initial_data_exits_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    // Uniform p = 1 is lightlike.
    let text = config("uniform", 64, r#","velocity":1.0"#, 1.0, 0.5).replace("\"amplitude\":0.2", "\"amplitude\":0.0");
    let cfg = write(dir.path(), "c.json", &text);
    let o = bin(&["simulate", "--config", &cfg, "--out", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stderr_json(&o)["error"], "DegenerateEvolution");
}

#[test]
fn exit_codes_by_error_kind() {
    assert_eq!(LabError::Config("x".into()).exit_code(), 2);
    assert_eq!(
        LabError::DegenerateEvolution { t: 0.0, index: 0, gamma: 0.0, guard: 1e-8 }.exit_code(),
        3
    );
    assert_eq!(LabError::CflViolation { dt: 1.0, limit: 0.5 }.exit_code(), 4);
    assert_eq!(LabError::Realizability { index: 0, u: 0.9, bound: 1.0 }.exit_code(), 4);
    assert_eq!(LabError::Support("x".into()).exit_code(), 1);
}

#[test]
fn snapshot_files_round_trip_bytewise() {
    let dir = tempfile::tempdir().unwrap();
    for (m, kind) in [(1, InitialKind::Superposed), (2, InitialKind::RandomBandlimited)] {
        let g = Grid::new(vec![16; m], vec![1.7; m]).unwrap();
        let s = make_initial(&g, &InitialSpec::new(kind).seed(3)).unwrap();
        let a = dir.path().join("a.json");
        let b = dir.path().join("b.json");
        write_snapshot(&s, &a).unwrap();
        let back = read_snapshot(&a).unwrap();
        assert_eq!(back, s);
        write_snapshot(&back, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }
}

#[test]
fn snapshot_reader_rejects_bad_files() {
    let dir = tempfile::tempdir().unwrap();
    let field = |text: &str| match read_snapshot(Path::new(&write(dir.path(), "s.json", text))) {
        Err(LabError::Format { field, .. }) => field,
        other => panic!("expected a format error, got {other:?}"),
    };
    let z8 = "[0,0,0,0,0,0,0,0]";
    assert_eq!(
        field(&format!(
            r#"{{"m":3,"t":0,"n":[8,8,8],"dx":[1,1,1],"origin":[0,0,0],"z":{z8},"p":{z8}}}"#
        )),
        "m"
    );
    assert_eq!(
        field(r#"{"m":1,"t":0,"n":[8],"dx":[0.5],"origin":[0],"z":[0,0,0],"p":[0,0,0,0,0,0,0,0]}"#),
        "z"
    );
    assert_eq!(
        field(&format!(r#"{{"m":1,"t":0,"n":[8],"dx":[0.5],"origin":[0],"z":{z8},"p":[1]}}"#)),
        "p"
    );
    assert_eq!(
        field(&format!(r#"{{"m":2,"t":0,"n":[8],"dx":[0.5],"origin":[0],"z":{z8},"p":{z8}}}"#)),
        "n"
    );
    assert_eq!(field(r#"{"m":1,"t":0,"#), "document");
    assert_eq!(
        field(&format!(r#"{{"m":1,"t":0,"n":[8],"dx":[0.5],"origin":[0],"z":{z8},"p":{z8},"extra":1}}"#)),
        "document"
    );
}

#[test]
fn config_file_round_trip() {
    let text = config("random_bandlimited", 32, r#","seed":9,"width":0.5,"center":[0.0],"velocity":0.0"#, 1.0, 0.5);
    let cfg = ExperimentConfig::from_json(&text).unwrap();
    assert_eq!(cfg.initial.seed, 9);
    let again = ExperimentConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(again, cfg);
    // Guards are optional and default.
    let no_guards = text.replace(r#","guards":{"gamma_min":1e-8,"boundary_tol":1e-10}"#, "");
    assert_eq!(ExperimentConfig::from_json(&no_guards).unwrap().guards, cfg.guards);
    assert!(ExperimentConfig::from_json(&text.replace("\"cfl\":0.4", "\"cfl\":1.5")).is_err());
}
