use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ricox(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ricox"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = ricox(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

const SHORT: [&str; 4] = ["--iters", "400", "--burnin", "100"];

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (
        dir.path().join("a"),
        dir.path().join("b"),
        dir.path().join("c"),
    );
    for (out, seed) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        ok(&[
            "--mode",
            "simulate",
            "--truth",
            "constant:10",
            "--domain",
            "0:5",
            "--seed",
            seed,
            "--out",
            s(out),
        ]);
    }
    let read = |d: &Path| std::fs::read_to_string(d.join("events_sim.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    assert!(read(&a).starts_with("t\n"));
    assert_eq!(json(&a.join("report.json"))["expected_count"], 50.0);
}

#[test]
fn fit_writes_grid_and_integral_rows() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    ok(&[
        "--mode",
        "simulate",
        "--truth",
        "constant:10",
        "--domain",
        "0:5",
        "--seed",
        "1",
        "--out",
        s(&sim),
    ]);
    let fit = dir.path().join("fit");
    let events = sim.join("events_sim.csv");
    let mut args = vec![
        "--mode",
        "fit",
        "--events",
        s(&events),
        "--domain",
        "0:5",
        "--out",
        s(&fit),
    ];
    args.extend(SHORT);
    ok(&args);
    let q = std::fs::read_to_string(fit.join("quantiles.csv")).unwrap();
    let lines: Vec<&str> = q.lines().collect();
    assert_eq!(lines[0], "point,q025,q25,q50,q75,q975");
    assert_eq!(lines.len(), 1 + 100 + 1);
    assert!(lines[101].starts_with("integral,"));
    for row in &lines[1..] {
        let v: Vec<f64> = row.split(',').skip(1).map(|x| x.parse().unwrap()).collect();
        assert!(v.windows(2).all(|w| w[0] <= w[1]) && v[0] > 0.0, "{row}");
    }
    let theta = std::fs::read_to_string(fit.join("theta_trace.csv")).unwrap();
    assert_eq!(theta.lines().count(), 1 + 400);
    let report = json(&fit.join("report.json"));
    let n_events = std::fs::read_to_string(&events).unwrap().lines().count() - 1;
    assert_eq!(report["data"]["n_events"], n_events);
    assert_eq!(report["seed"], 0);
}

#[test]
fn config_echo_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    ok(&[
        "--mode",
        "simulate",
        "--truth",
        "lambda2",
        "--seed",
        "2",
        "--out",
        s(&sim),
    ]);
    let first = dir.path().join("first");
    let events = sim.join("events_sim.csv");
    let mut args = vec![
        "--mode",
        "fit",
        "--events",
        s(&events),
        "--domain",
        "0:5",
        "--seed",
        "7",
        "--out",
        s(&first),
    ];
    args.extend(SHORT);
    ok(&args);
    let mut config = json(&first.join("report.json"))["config"].clone();
    let second = dir.path().join("second");
    config["out"] = Value::String(s(&second).into());
    let cfg_path = dir.path().join("echo.json");
    std::fs::write(&cfg_path, config.to_string()).unwrap();
    ok(&["--config", s(&cfg_path)]);
    let read = |d: &Path, f: &str| std::fs::read_to_string(d.join(f)).unwrap();
    assert_eq!(
        read(&first, "quantiles.csv"),
        read(&second, "quantiles.csv")
    );
    assert_eq!(
        read(&first, "theta_trace.csv"),
        read(&second, "theta_trace.csv")
    );
}

#[test]
fn evaluate_reports_coverage() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ev");
    let mut args = vec!["--mode", "evaluate", "--truth", "lambda2", "--out", s(&out)];
    args.extend(SHORT);
    ok(&args);
    let r = json(&out.join("report.json"));
    let c = r["report"]["grid"]["coverage"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&c));
    assert!(r["report"]["grid"]["sse"].as_f64().is_some());
    assert!(out.join("events_sim.csv").exists());

    let many = dir.path().join("many");
    let mut args = vec![
        "--mode",
        "evaluate",
        "--truth",
        "lambda2",
        "--replicates",
        "3",
        "--jobs",
        "2",
        "--out",
        s(&many),
    ];
    args.extend(SHORT);
    ok(&args);
    let r = json(&many.join("report.json"));
    assert_eq!(r["replicates"].as_array().unwrap().len(), 3);
    assert_eq!(r["aggregate"]["coverage_grid"].as_array().unwrap().len(), 5);
}

#[test]
fn mixed_data_and_prediction() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    ok(&[
        "--mode",
        "simulate",
        "--truth",
        "lambda2",
        "--seed",
        "4",
        "--bin-tail",
        "3:0.5",
        "--out",
        s(&sim),
    ]);
    let bins = std::fs::read_to_string(sim.join("bins_sim.csv")).unwrap();
    assert_eq!(bins.lines().next(), Some("start,end,count"));
    assert_eq!(bins.lines().count(), 1 + 4);

    let fit = dir.path().join("fit");
    let (events, bins_path) = (sim.join("events_sim.csv"), sim.join("bins_sim.csv"));
    let mut args = vec![
        "--mode",
        "fit",
        "--events",
        s(&events),
        "--bins",
        s(&bins_path),
        "--domain",
        "0:5",
        "--out",
        s(&fit),
    ];
    args.extend(SHORT);
    ok(&args);
    assert_eq!(json(&fit.join("report.json"))["data"]["n_bins"], 4);

    let points = dir.path().join("points.csv");
    std::fs::write(&points, "t\n0.5\n2.5\n4.5\n").unwrap();
    let pred = dir.path().join("pred");
    let mut args = vec![
        "--mode",
        "predict",
        "--events",
        s(&events),
        "--points",
        s(&points),
        "--domain",
        "0:5",
        "--kernel",
        "se:10,1",
        "--out",
        s(&pred),
    ];
    args.extend(SHORT);
    ok(&args);
    let q = std::fs::read_to_string(pred.join("quantiles.csv")).unwrap();
    assert_eq!(q.lines().count(), 1 + 3 + 1);
    assert!(q.lines().nth(2).unwrap().starts_with("2.5,"));
    assert!(!pred.join("theta_trace.csv").exists());
}

#[test]
fn failures_exit_nonzero_with_reason() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "t\n6.0\n").unwrap();
    let out = ricox(&[
        "--mode",
        "fit",
        "--events",
        s(&bad),
        "--domain",
        "0:5",
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error["), "{err}");
    assert!(err.contains("line 2"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);

    let out = ricox(&["--mode", "simulate", "--domain", "0:5"]);
    assert!(!out.status.success());
    let out = ricox(&[
        "--mode",
        "fit",
        "--events",
        s(&dir.path().join("missing.csv")),
        "--domain",
        "0:5",
    ]);
    assert!(!out.status.success());
}
