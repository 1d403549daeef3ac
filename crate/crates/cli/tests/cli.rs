use std::path::PathBuf;
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adaptive-lqr")).args(args).output().expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("alqr-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn help_lists_subcommands() {
    let o = bin(&["--help"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for cmd in ["compare", "error-scaling", "demand", "synthesize", "validate"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
    let o = bin(&["compare", "--help"]);
    for flag in ["--preset", "--trials", "--horizon", "--seed", "--strategy", "--out", "--error-multiplier", "--schedule", "--cfg"] {
        assert!(stdout(&o).contains(flag), "{flag} missing");
    }
}

#[test]
fn validate_reports_each_check() {
    let dir = scratch("validate");
    let json = dir.join("report.json");
    let o = bin(&["validate", "--seed", "3", "--out", json.to_str().unwrap()]);
    let text = stdout(&o);
    // The cross-term form of the cancellation identity does not hold, so
    // the suite exits non-zero with exactly that check failing.
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(text.matches("FAIL").count(), 1);
    assert!(text.lines().any(|l| l.starts_with("cancel_identity ") && l.ends_with("FAIL")));
    assert!(text.contains("6 of 7 checks passed"));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report.as_array().unwrap().len(), 7);
}

#[test]
fn compare_writes_reproducible_output() {
    let dir = scratch("compare");
    let run = |sub: &str| {
        let out = dir.join(sub);
        let o = bin(&[
            "compare", "--trials", "2", "--horizon", "300", "--strategy", "ts", "--strategy", "nominal", "--seed", "4", "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["regret.csv", "cost.csv", "manifest.json", "plot.gp"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    // config.txt records the output directory, which is all that differs.
    let body = |d: &PathBuf| -> String {
        let text = std::fs::read_to_string(d.join("config.txt")).unwrap();
        text.lines().filter(|l| !l.starts_with("out =")).collect::<Vec<_>>().join("\n")
    };
    assert_eq!(body(&a), body(&b));
    let csv = std::fs::read_to_string(a.join("regret.csv")).unwrap();
    assert!(csv.starts_with("time,strategy,median,p90\n"));
    assert!(csv.contains(",ts,") && csv.contains(",nominal,"));
    let cfg = std::fs::read_to_string(a.join("config.txt")).unwrap();
    assert!(cfg.contains("strategies = ts, nominal") && cfg.contains("seed = 4"));
}

#[test]
fn cfg_file_with_flag_overrides() {
    let dir = scratch("cfg");
    let cfg = dir.join("exp.cfg");
    std::fs::write(&cfg, "preset = large_transient\nstrategies = ts\ntrials = 5\nhorizon = 200\nschedule = linear\n").unwrap();
    let out = dir.join("out");
    let o = bin(&["error-scaling", "--cfg", cfg.to_str().unwrap(), "--trials", "1", "--error-multiplier", "1,2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let written = std::fs::read_to_string(out.join("config.txt")).unwrap();
    for line in ["kind = error_scaling", "preset = large_transient", "trials = 1", "schedule = linear", "error_multipliers = 1.0, 2.0"] {
        assert!(written.contains(line), "{line} not in\n{written}");
    }
    let csv = std::fs::read_to_string(out.join("regret_ts.csv")).unwrap();
    assert!(csv.contains(",ts_x1,") && csv.contains(",ts_x2,"));
}

#[test]
fn demand_subcommand() {
    let dir = scratch("demand");
    let o = bin(&["demand", "--trials", "2", "--horizon", "100", "--out", dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("violations 0/2"));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("demand_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["violations"], 0);
    assert!(std::fs::read_to_string(dir.join("state.csv")).unwrap().contains(",constrained,"));
}

#[test]
fn synthesize_from_matrices() {
    let dir = scratch("synth");
    let input = dir.join("plant.txt");
    std::fs::write(
        &input,
        "a = 1.01 0.01 0; 0.01 1.01 0.01; 0 0.01 1.01\nb = 1 0 0; 0 1 0; 0 0 1\nq = 10 0 0; 0 10 0; 0 0 10\nr = 1 0 0; 0 1 0; 0 0 1\neps_a = 0.05\neps_b = 0.05\nfir_length = 6\ngamma = 0.9\n",
    )
    .unwrap();
    let out = dir.join("resp.json");
    let o = bin(&["synthesize", input.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let resp: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(resp["F"], 6);
    assert!(String::from_utf8_lossy(&o.stderr).contains("gamma 0.9000"));
}

#[test]
fn bad_input_is_an_error() {
    for args in [
        &["compare", "--trials", "0"][..],
        &["compare", "--strategy", "lqg"],
        &["compare", "--schedule", "cubic"],
        &["synthesize", "/nonexistent/plant.txt"],
    ] {
        let o = bin(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    }
    assert!(!bin(&["compare", "--trials", "many"]).status.success());
}
