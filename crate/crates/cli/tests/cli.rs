use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use transport_cli::validate_report;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

fn transport(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_transport"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// Runs with `--json` and returns the exit code and the schema-checked report.
fn report(args: &[&str]) -> (i32, Value) {
    let mut all = vec!["--json"];
    all.extend_from_slice(args);
    let out = transport(&all);
    let text = String::from_utf8(out.stdout).unwrap();
    let value: Value = serde_json::from_str(&text).unwrap_or_else(|e| panic!("{e}: {text}"));
    validate_report(&value).unwrap();
    (out.status.code().unwrap(), value)
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn estimates<'a>(report: &'a Value, kind: &str) -> Vec<&'a Value> {
    report["estimates"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| e["type"] == kind)
        .collect()
}

#[test]
fn chain_is_transportable_with_witness_v() {
    let d = data("chain.diagram");
    let (code, r) = report(&[
        "dsep",
        "--diagram",
        path(&d),
        "--query",
        "P Y | V",
        "--query",
        "P,Y",
    ]);
    assert_eq!(code, 0);
    let v = &r["verdicts"];
    assert_eq!(v[0]["separated"], true);
    assert_eq!(v[1]["separated"], false);
    assert_eq!(v[2]["type"], "transportability");
    assert_eq!(v[2]["witness_set"], serde_json::json!(["V"]));
}

#[test]
fn unblockable_paths_exit_three() {
    for file in ["latent_confounder.diagram", "direct_edge.diagram"] {
        let d = data(file);
        for cmd in ["dsep", "adjust-sets"] {
            let (code, r) = report(&[cmd, "--diagram", path(&d)]);
            assert_eq!(code, 3, "{cmd} {file}");
            assert_eq!(r["status"], "identification-failure");
            assert_eq!(r["verdicts"][0]["transportable"], false);
        }
    }
}

#[test]
fn adjust_sets_lists_minimal_sets_and_baseline_reduction() {
    let d = data("chain.diagram");
    let (code, r) = report(&["adjust-sets", "--diagram", path(&d)]);
    assert_eq!(code, 0);
    assert_eq!(r["verdicts"][0]["minimal_sets"], serde_json::json!([["V"]]));
    assert_eq!(r["verdicts"][1]["type"], "baseline-reduction");
    assert_eq!(r["verdicts"][1]["sound"], true);
}

#[test]
fn approach_one_with_odds_ratio_is_a_validation_error() {
    let c = data("or_noncollapsible.counts.csv");
    let out = transport(&[
        "standardize",
        "--counts",
        path(&c),
        "--approach",
        "1",
        "--measure",
        "or",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not collapsible"));
}

#[test]
fn malformed_diagram_reports_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("bad.diagram");
    std::fs::write(&d, "node P\nedge P => Y\n").unwrap();
    let (code, r) = report(&["dsep", "--diagram", path(&d)]);
    assert_eq!(code, 2);
    let msg = r["error"]["message"].as_str().unwrap();
    assert!(
        msg.contains("bad.diagram") && msg.contains("line 2"),
        "{msg}"
    );
}

#[test]
fn missing_input_file_exits_two() {
    let out = transport(&["check", "--claim", "rd", "--counts", "/nonexistent/x.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_exits_zero() {
    let out = transport(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("simulate"));
}

/// Scenario to files, then every estimator against the exact answer key.
#[test]
fn pipeline_estimates_match_the_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let joint = dir.path().join("d.joint.csv");
    let counts = dir.path().join("d.counts.csv");
    let scenario = data("distribution.scenario");
    let (code, sim) = report(&[
        "simulate",
        "--scenario",
        path(&scenario),
        "--joint-out",
        path(&joint),
        "--counts-out",
        path(&counts),
    ]);
    assert_eq!(code, 0);
    let truth = estimates(&sim, "truth")
        .into_iter()
        .find(|t| t["population"] == "t")
        .unwrap()
        .clone();
    let risk1 = truth["risk1"].as_f64().unwrap();
    let risk0 = truth["risk0"].as_f64().unwrap();

    for approach in ["3", "ipw"] {
        let (code, r) = report(&[
            "standardize",
            "--counts",
            path(&counts),
            "--approach",
            approach,
            "--given",
            "V",
        ]);
        assert_eq!(code, 0);
        let e = estimates(&r, "transported-risk")[0];
        assert!(
            (e["risk1"].as_f64().unwrap() - risk1).abs() <= 1e-12,
            "{approach}"
        );
        assert!(
            (e["risk0"].as_f64().unwrap() - risk0).abs() <= 1e-12,
            "{approach}"
        );
    }
    for measure in ["rd", "rr", "or"] {
        let (code, r) = report(&[
            "standardize",
            "--counts",
            path(&counts),
            "--approach",
            "2",
            "--measure",
            measure,
            "--given",
            "V",
        ]);
        assert_eq!(code, 0);
        let e = estimates(&r, "transported-risk")[0];
        assert!(
            (e["risk1"].as_f64().unwrap() - risk1).abs() <= 1e-12,
            "{measure}"
        );
    }
    let (code, r) = report(&["cost", "--joint", path(&joint), "--given", "V"]);
    assert_eq!(code, 0);
    let e = estimates(&r, "transported-risk")[0];
    assert!((e["risk1"].as_f64().unwrap() - risk1).abs() <= 1e-12);
    let (code, r) = report(&[
        "check",
        "--claim",
        "distribution",
        "--given",
        "V",
        "--counts",
        path(&counts),
    ]);
    assert_eq!(code, 0);
    assert_eq!(r["verdicts"][0]["holds"], true);
}

#[test]
fn cost_from_counts_needs_a_direction() {
    let c = data("or_noncollapsible.counts.csv");
    let out = transport(&["cost", "--counts", path(&c)]);
    assert_eq!(out.status.code(), Some(2));
    let (code, r) = report(&[
        "cost",
        "--counts",
        path(&c),
        "--given",
        "V",
        "--monotone",
        "increasing",
    ]);
    assert_eq!(code, 0, "{r}");
    assert_eq!(estimates(&r, "cost-parameters").len(), 2);
    assert_eq!(
        estimates(&r, "cost-standardized")[0]["identification"],
        "monotone-increasing"
    );
}

#[test]
fn misspec_test_from_counts_and_records() {
    let r = data("irls_reference.records.csv");
    let (code, rep) = report(&["misspec-test", "--records", path(&r)]);
    assert_eq!(code, 0);
    assert_eq!(rep["verdicts"][0]["type"], "misspecification");
    assert_eq!(estimates(&rep, "logistic-fit")[0]["labels"][2], "beta2");

    let c = data("or_noncollapsible.counts.csv");
    let (code, rep) = report(&["misspec-test", "--counts", path(&c)]);
    assert_eq!(code, 0, "{rep}");
}

#[test]
fn config_file_supplies_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(
        &cfg,
        format!(
            "claim = or\ngiven = V\ncounts = {}\n",
            path(&data("or_noncollapsible.counts.csv"))
        ),
    )
    .unwrap();
    let (code, r) = report(&["--config", path(&cfg), "check"]);
    assert_eq!(code, 0);
    assert_eq!(r["verdicts"][0]["claim"]["kind"], "or");
    assert_eq!(r["verdicts"][0]["holds"], true);
}

#[test]
fn summary_goes_to_stdout_and_report_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let out_file = dir.path().join("r.json");
    let d = data("chain.diagram");
    let out = transport(&["dsep", "--diagram", path(&d), "--output", path(&out_file)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("witness {V}"));
    let value: Value = serde_json::from_str(&std::fs::read_to_string(&out_file).unwrap()).unwrap();
    validate_report(&value).unwrap();
}

#[test]
fn simulate_is_byte_reproducible() {
    let s = data("logistic_null.scenario");
    let args = [
        "--json",
        "simulate",
        "--scenario",
        path(&s),
        "--replicates",
        "6",
        "--n",
        "500",
    ];
    let a = transport(&args);
    let b = transport(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let other = transport(&[&args[..], &["--seed", "12"]].concat());
    assert_ne!(a.stdout, other.stdout);
}
