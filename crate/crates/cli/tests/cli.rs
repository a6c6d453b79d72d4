use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_msdhawkes"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("spawn")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn error_record(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let last = stderr.lines().last().expect("stderr record");
    serde_json::from_str(last).expect("json error record")
}

fn simulated(dir: &Path, horizon: &str) {
    ok(dir, &["simulate", "--de", "2", "--dn", "1", "--dx", "2", "--T", horizon, "--seed", "7"]);
}

#[test]
fn simulate_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    simulated(a.path(), "200");
    simulated(b.path(), "200");
    for f in ["events.csv", "state.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        assert_eq!(x, std::fs::read(b.path().join(f)).unwrap(), "{f}");
        assert!(x.len() > 100);
    }
}

#[test]
fn fit_output_feeds_downstream_commands() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    simulated(p, "400");
    let sample = ["--events", "events.csv", "--state", "state.csv"];
    let mut args = vec!["fit", "--n-starts", "3", "--output", "fit.json"];
    args.extend(sample);
    ok(p, &args);
    let fit: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p.join("fit.json")).unwrap()).unwrap();
    assert_eq!(fit["method"], "MLE");
    assert_eq!(fit["n_params"], 14);
    let params_csv = std::fs::read_to_string(p.join("fit.params.csv")).unwrap();
    assert!(params_csv.starts_with("name,value\nnu_1,"));
    assert_eq!(params_csv.lines().count(), 15);

    let mut args = vec!["residuals", "--params", "fit.json", "--output", "res.csv"];
    args.extend(sample);
    let report = ok(p, &args);
    assert!(report.starts_with("type,n,statistic,p_value,passed,low_power"));
    assert!(std::fs::read_to_string(p.join("res.csv")).unwrap().starts_with("r_1,r_2"));

    let mut args = vec!["predict", "--params", "fit.json", "--imbalance-column", "1", "--format", "json"];
    args.extend(sample);
    let pred: serde_json::Value = serde_json::from_str(&ok(p, &args)).unwrap();
    assert!(pred["accuracy_model"].as_f64().unwrap() > 0.5);
    assert!(pred["accuracy_imbalance"].is_number());

    let grid = ok(p, &["endogeneity", "--params", "fit.json", "--grid", "-1:1:3;-1,1"]);
    assert_eq!(grid.lines().count(), 7);
    assert!(grid.starts_with("x_1,x_2,radius,baseline_radius"));
}

#[test]
fn em_and_mle_agree_through_the_cli() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    simulated(p, "300");
    let sample = ["--events", "events.csv", "--state", "state.csv"];
    let mut a = vec!["fit", "--n-starts", "6", "--output", "mle.json"];
    a.extend(sample);
    ok(p, &a);
    let mut a = vec!["fit-em", "--init", "mle.json", "--n-starts", "0", "--output", "em.json"];
    a.extend(sample);
    ok(p, &a);
    let read = |f: &str| -> serde_json::Value { serde_json::from_str(&std::fs::read_to_string(p.join(f)).unwrap()).unwrap() };
    let (m, e) = (read("mle.json"), read("em.json"));
    assert_eq!(e["method"], "EM");
    let gap = (m["log_likelihood"].as_f64().unwrap() - e["log_likelihood"].as_f64().unwrap()).abs();
    assert!(gap < 1e-3, "{gap}");
}

#[test]
fn select_reports_an_aic_table() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    simulated(p, "200");
    let table = ok(
        p,
        &[
            "select", "--events", "events.csv", "--state", "state.csv", "--dn", "1..2", "--covariate-sets", "none;1,2", "--n-starts", "2",
        ],
    );
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "dn,covariates,n_params,log_likelihood,aic,rank,error");
    assert_eq!(lines.len(), 5);
    assert!(lines.iter().any(|l| l.ends_with(",1,")));
}

#[test]
fn config_file_supplies_flags_and_cli_overrides() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    std::fs::write(p.join("run.toml"), "seed = 7\n[simulate]\nT = 150\nout-dir = \"a\"\n").unwrap();
    ok(p, &["--config", "run.toml", "simulate"]);
    ok(p, &["simulate", "--seed", "7", "--T", "150", "--out-dir", "b"]);
    assert_eq!(std::fs::read(p.join("a/events.csv")).unwrap(), std::fs::read(p.join("b/events.csv")).unwrap());
    ok(p, &["--config", "run.toml", "simulate", "--out-dir", "c", "--seed", "8"]);
    assert_ne!(std::fs::read(p.join("a/events.csv")).unwrap(), std::fs::read(p.join("c/events.csv")).unwrap());

    std::fs::write(p.join("bad.toml"), "[simulate]\nnot_a_flag = 1\n").unwrap();
    let out = run(p, &["--config", "bad.toml", "simulate"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["error"]["kind"], "usage");
}

#[test]
fn exit_codes_and_error_records() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    std::fs::write(p.join("empty.csv"), "time_s,type\n").unwrap();
    let out = run(p, &["fit", "--events", "empty.csv", "--T", "10"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_record(&out)["error"]["kind"], "validation");

    let out = run(p, &["fit", "--events", "missing.csv", "--T", "10"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_record(&out)["error"]["exit_code"], 3);

    let out = run(p, &["fit", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));

    std::fs::write(p.join("dup.csv"), "time_s,type\n1.0,1\n1.0,1\n2.0,2\n").unwrap();
    let out = run(p, &["fit", "--events", "dup.csv", "--T", "10", "--n-starts", "1"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(error_record(&out)["error"]["message"].as_str().unwrap().contains("duplicate"));
    ok(p, &["fit", "--events", "dup.csv", "--T", "10", "--n-starts", "1", "--dedup"]);

    let help = ok(p, &["--help"]);
    assert!(help.contains("Exit codes"));
}

#[test]
fn prepare_builds_event_and_state_files() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    // 09:30:00.000 onwards, one row per 250 ms with a row sharing a millisecond
    let mut csv = String::from("timestamp_ms,event_type,bid_price,ask_price,bid_size,ask_size\n");
    let open = 34_200_000i64;
    csv.push_str(&format!("{},1,10.00,10.01,100,300\n", open - 5));
    for i in 1..40 {
        let ask = if i % 3 == 0 { "10.03" } else { "10.01" };
        csv.push_str(&format!("{},{},10.00,{ask},{},{}\n", open + 250 * i, 1 + i % 2, 100 + i, 300 - i));
    }
    csv.push_str(&format!("{},2,10.00,10.01,50,50\n", open + 250 * 39));
    std::fs::write(p.join("day1.csv"), csv).unwrap();
    ok(
        p,
        &["prepare", "--input", "day1.csv", "--start", "09:30", "--end", "09:30:10", "--covariates", "I,S2,S3", "--out-dir", "out"],
    );
    let events = std::fs::read_to_string(p.join("out/day1.events.csv")).unwrap();
    assert_eq!(events.lines().count(), 40);
    let state = std::fs::read_to_string(p.join("out/day1.state.csv")).unwrap();
    assert!(state.starts_with("tau_s,x_1,x_2,x_3\n0,-0.5,-1,"));
    assert!(state.trim_end().lines().last().unwrap().starts_with("10,"));

    // the prepared files fit directly
    ok(
        p,
        &["fit", "--events", "out/day1.events.csv", "--state", "out/day1.state.csv", "--covariates", "1,2", "--n-starts", "2"],
    );
}

#[test]
fn replicate_runs_a_small_study() {
    let d = tempfile::tempdir().unwrap();
    let out = ok(
        d.path(),
        &["--jobs", "1", "replicate", "--study", "table1", "--replicates", "2", "--T", "150", "--n-starts", "2"],
    );
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "T,name,truth,median,iqr,sd,failed");
    assert_eq!(lines.len(), 15);
    assert!(lines[1].starts_with("150,nu_1,0.5,"));
}
