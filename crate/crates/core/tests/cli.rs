//! Drives the `pabs` binary end to end on small inputs.

use std::fmt::Write as _;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn pabs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pabs"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json_stdout(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Two strata of a single `active` covariate. Active respondents have NPS
/// 30 (25 promoters, 15 passives, 10 detractors), inactive ones NPS -20
/// (5, 10, 10). The population is 55% active.
fn two_stratum_fixture(dir: &Path) -> (String, String) {
    let mut responses = String::from("member_id,country,score,weight,active\n");
    let mut id = 0;
    for (active, promoters, passives, detractors) in [(1, 25, 15, 10), (0, 5, 10, 10)] {
        for (score, n) in [(10, promoters), (8, passives), (3, detractors)] {
            for _ in 0..n {
                id += 1;
                writeln!(responses, "{id},US,{score},1,{active}").unwrap();
            }
        }
    }
    let strata = "country,stratum_key,count\nUS,active=1,550\nUS,active=0,450\n";
    let r = dir.join("responses.csv");
    let s = dir.join("strata.csv");
    std::fs::write(&r, responses).unwrap();
    std::fs::write(&s, strata).unwrap();
    (r.display().to_string(), s.display().to_string())
}

#[test]
fn simulate_then_audit_is_clean() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{"population": {"size": 3000}, "run": {"horizon_days": 120}}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("run");
    let summary = json_stdout(&pabs(&[
        "simulate",
        "--config",
        path_str(&config),
        "--out",
        path_str(&out_dir),
        "--seed",
        "11",
    ]));
    assert_eq!(summary["members"], 3000);
    assert!(summary["sends"].as_u64().unwrap() > 0);
    for file in [
        "sends.csv",
        "survey_responses.csv",
        "ring_states.csv",
        "responses.csv",
        "population_strata.csv",
        "config.json",
    ] {
        assert!(out_dir.join(file).exists(), "{file} missing");
    }

    let out = pabs(&["audit", "--sends", path_str(&out_dir.join("sends.csv"))]);
    let report = json_stdout(&out);
    assert_eq!(report["clean"], true);
    assert!(
        report["channels"]["email"]["sends_checked"]
            .as_u64()
            .unwrap()
            > 0
    );
}

#[test]
fn audit_flags_violations_with_exit_code_two() {
    let dir = TempDir::new().unwrap();
    let sends = dir.path().join("sends.csv");
    std::fs::write(
        &sends,
        "day,member_id,program_id\n0,1,1\n10,1,2\n50,1,1\n200,2,1\n",
    )
    .unwrap();
    let out = pabs(&["audit", "--sends", path_str(&sends)]);
    assert_eq!(out.status.code(), Some(2));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["clean"], false);
    assert_eq!(report["channels"]["email"]["any_program_violations"], 1);
    assert_eq!(report["channels"]["email"]["same_program_violations"], 1);
}

#[test]
fn estimate_reweights_to_population_shares() {
    let dir = TempDir::new().unwrap();
    let (responses, strata) = two_stratum_fixture(dir.path());
    let report = json_stdout(&pabs(&[
        "estimate",
        "--responses",
        &responses,
        "--strata",
        &strata,
        "--weighting-vars",
        "active",
        "--no-mrp",
    ]));
    let us = &report["countries"][0];
    assert_eq!(us["country"], "US");
    assert_eq!(us["respondents"], 75);
    // pooled respondents: 30 promoters and 20 detractors out of 75
    assert!((us["unadjusted"].as_f64().unwrap() - 100.0 * 10.0 / 75.0).abs() < 1e-9);
    let expected = 0.55 * 30.0 + 0.45 * -20.0;
    assert!(
        (us["weighting"].as_f64().unwrap() - expected).abs() < 1e-9,
        "{us}"
    );
}

#[test]
fn estimate_csv_has_report_columns() {
    let dir = TempDir::new().unwrap();
    let (responses, strata) = two_stratum_fixture(dir.path());
    let out = pabs(&[
        "estimate",
        "--responses",
        &responses,
        "--strata",
        &strata,
        "--weighting-vars",
        "active",
        "--format",
        "csv",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(
        header,
        "country,respondents,unadjusted,mrp_adjusted,weighting_adjusted,mrp_adjustment,weighting_adjustment,diff,error_margin"
    );
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn compare_identical_surveys_has_zero_delta() {
    let dir = TempDir::new().unwrap();
    let (responses, strata) = two_stratum_fixture(dir.path());
    let rows = json_stdout(&pabs(&[
        "compare",
        "--baseline",
        &responses,
        "--variant",
        &responses,
        "--strata",
        &strata,
        "--weighting-vars",
        "active",
    ]));
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["delta"].as_f64().unwrap(), 0.0);
    assert_eq!(rows[0]["significant"], false);
}

#[test]
fn sample_selects_each_member_at_most_once() {
    let dir = TempDir::new().unwrap();
    let mut triggers = String::from("member_id,program_id,day\n");
    for m in 1..=200 {
        for day in [1, 5, 9] {
            writeln!(triggers, "{m},1,{day}").unwrap();
        }
    }
    let t = dir.path().join("triggers.csv");
    let plan = dir.path().join("plan.json");
    std::fs::write(&t, triggers).unwrap();
    std::fs::write(
        &plan,
        r#"{"programs": [{"program": 1, "rate": 0.2, "desired_responses": 10}], "seed": 3}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let picks = json_stdout(&pabs(&[
        "sample",
        "--triggers",
        path_str(&t),
        "--plan",
        path_str(&plan),
        "--out",
        path_str(&out_dir),
    ]));
    let picks = picks.as_array().unwrap();
    assert!(!picks.is_empty());
    let mut members: Vec<u64> = picks
        .iter()
        .map(|p| p["member"].as_u64().unwrap())
        .collect();
    members.sort_unstable();
    members.dedup();
    assert_eq!(members.len(), picks.len());

    // The written ledger audits clean.
    let out = pabs(&["audit", "--sends", path_str(&out_dir.join("ledger.csv"))]);
    assert_eq!(json_stdout(&out)["clean"], true);
}

#[test]
fn malformed_input_reports_the_line() {
    let dir = TempDir::new().unwrap();
    let responses = dir.path().join("responses.csv");
    std::fs::write(
        &responses,
        "member_id,country,score,weight,active\n1,US,9,1,1\n2,US,eleven,1,0\n",
    )
    .unwrap();
    let strata = dir.path().join("strata.csv");
    std::fs::write(&strata, "country,stratum_key,count\nUS,active=1,5\n").unwrap();
    let out = pabs(&[
        "estimate",
        "--responses",
        path_str(&responses),
        "--strata",
        path_str(&strata),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).expect("stderr is JSON");
    assert_eq!(err["error"], "input");
    assert_eq!(err["line"], 3);

    let out = pabs(&[
        "audit",
        "--sends",
        path_str(&dir.path().join("missing.csv")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "input");
}

#[test]
fn simulate_is_byte_reproducible() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{"population": {"size": 2000}, "run": {"horizon_days": 60}}"#,
    )
    .unwrap();
    let runs: Vec<_> = ["a", "b"]
        .iter()
        .map(|name| {
            let out = dir.path().join(name);
            json_stdout(&pabs(&[
                "simulate",
                "--config",
                path_str(&config),
                "--out",
                path_str(&out),
                "--seed",
                "5",
            ]));
            out
        })
        .collect();
    for file in [
        "sends.csv",
        "survey_responses.csv",
        "ring_states.csv",
        "responses.csv",
        "in_product_responses.csv",
        "population_strata.csv",
        "config.json",
    ] {
        let a = std::fs::read(runs[0].join(file)).unwrap();
        let b = std::fs::read(runs[1].join(file)).unwrap();
        assert!(a == b, "{file} differs between identical runs");
    }
}
