use std::path::PathBuf;
use std::process::{Command, Output as Proc};

use coupling_rate_cli::commands::Output;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run(args: &[&str]) -> Proc {
    Command::new(env!("CARGO_BIN_EXE_coupling-rate")).args(args).output().expect("binary runs")
}

fn json(args: &[&str]) -> Output {
    let mut all = args.to_vec();
    all.extend(["--format", "json"]);
    let out = run(&all);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("output parses")
}

fn fixture_arg(name: &str) -> String {
    fixture(name).display().to_string()
}

const FIXTURES: [&str; 9] =
    ["ex1.csv", "ex2.json", "ex3.json", "ex4.json", "ex5.json", "ex6.json", "ex7.json", "ex8.json", "ex9.json"];

#[test]
fn analyze_ex5() {
    let Output::Analyze(a) = json(&["analyze", &fixture_arg("ex5.json")]) else { panic!() };
    let r = a.report;
    assert!((r.r_vhat - 0.85311289).abs() < 5e-9);
    assert!((r.second_modulus - 0.85311289).abs() < 5e-9);
    assert_eq!(1.0 - r.kappa, 1.0);
}

#[test]
fn analyze_ex1_rates_coincide() {
    let Output::Analyze(a) = json(&["analyze", &fixture_arg("ex1.csv")]) else { panic!() };
    let r = a.report;
    for x in [1.0 - r.kappa, r.r_vhat, r.second_modulus] {
        assert!((x - 0.3).abs() < 1e-12, "{x}");
    }
}

#[test]
fn every_fixture_round_trips_through_json() {
    for name in FIXTURES {
        let first = json(&["analyze", &fixture_arg(name), "--n-max", "20"]);
        let text = serde_json::to_string(&first).unwrap();
        let again: Output = serde_json::from_str(&text).unwrap();
        assert_eq!(first, again, "{name}");
    }
    let nh = json(&["nonhom", &fixture_arg("periodic2.json"), "--n-max", "20"]);
    assert_eq!(nh, serde_json::from_str::<Output>(&serde_json::to_string(&nh).unwrap()).unwrap());
}

#[test]
fn malformed_rows_exit_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "0.5,0.6\n0.5,0.5\n").unwrap();
    let out = run(&["analyze", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 0 sums to"));

    std::fs::write(&bad, "# header\n0.5,0.5\n0.5,x\n").unwrap();
    let out = run(&["analyze", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.csv:3:5"));
}

#[test]
fn size_guard_is_a_validation_error() {
    let out = run(&["analyze", &fixture_arg("ex9.json"), "--max-n-guard", "5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failed_cross_check_exits_3() {
    let out = run(&["analyze", &fixture_arg("ex8.json"), "--gelfand-squarings", "1"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("cross-check"));
}

#[test]
fn simulate_ex1_passes() {
    let Output::Simulate(s) = json(&[
        "simulate",
        &fixture_arg("ex1.csv"),
        "--init",
        "0",
        "1",
        "--trials",
        "100000",
        "--seed",
        "42",
        "--horizon",
        "10",
    ]) else {
        panic!()
    };
    assert!(s.pass);
    let st = &s.steps[5];
    assert!((st.exact - 0.00243).abs() < 1e-15);
    assert!(st.exact_in_ci, "{:?} vs {}", st.ci99, s.result.p_not_coupled[5]);
}

#[test]
fn simulate_same_start_never_apart() {
    let Output::Simulate(s) =
        json(&["simulate", &fixture_arg("ex5.json"), "--init", "2", "2", "--trials", "500"])
    else {
        panic!()
    };
    assert!(s.result.p_not_coupled.iter().all(|&p| p == 0.0));
    assert!(s.pass);
}

#[test]
fn zero_trials_is_a_usage_error() {
    let out = run(&["simulate", &fixture_arg("ex1.csv"), "--trials", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
}

#[test]
fn periodic_rate_and_unrolled_sequence() {
    let Output::Nonhom(p) = json(&["nonhom", &fixture_arg("periodic2.json")]) else { panic!() };
    let target = (5.0f64 / 288.0).sqrt();
    assert!((p.report.periodic_rate.unwrap() - target).abs() < 1e-7);
    let Output::Nonhom(u) = json(&["nonhom", &fixture_arg("periodic2.json"), "--no-periodic"]) else { panic!() };
    assert!(!u.periodic);
    assert_eq!(u.report.periodic_rate, None);
    let tail = u.tail_rates.iter().find(|(l, _)| l == "md-product").unwrap().1.unwrap();
    assert!((tail - target).abs() < 1e-7, "{tail}");
}

#[test]
fn infeasible_base_is_reported_not_failed() {
    let out = run(&["nonhom", &fixture_arg("periodic2.json"), "--base", &fixture_arg("ex1.csv")]);
    assert_eq!(out.status.code(), Some(0));
    let Output::Nonhom(n) = json(&["nonhom", &fixture_arg("periodic2.json"), "--base", &fixture_arg("ex1.csv")])
    else {
        panic!()
    };
    let w = n.infeasible.expect("witness");
    assert!(w.ratio.is_infinite());
    assert!(n.report.perturbation.is_none());
}

#[test]
fn random_ensembles() {
    let Output::Random(r) = json(&["random", "--n", "40", "--count", "1", "--seed", "11", "--n-max", "5"]) else {
        panic!()
    };
    let row = &r.rows[0];
    assert!(row.second_modulus <= row.radius + 1e-6 && row.radius <= row.md_rate + 1e-12);
    assert_eq!(r.violations, 0);

    let Output::Random(r) = json(&["random", "--n", "2", "--count", "25", "--seed", "3"]) else { panic!() };
    for row in &r.rows {
        assert!((row.radius - row.md_rate).abs() < 1e-10);
        assert!((row.radius - row.second_modulus).abs() < 1e-10);
    }

    let Output::Random(r) = json(&["random", "--n", "3", "--count", "0"]) else { panic!() };
    assert!(r.rows.is_empty());
}

#[test]
fn csv_and_file_output() {
    let dir = tempfile::tempdir().unwrap();
    let dest = dir.path().join("out.csv");
    let out = run(&["analyze", &fixture_arg("ex2.json"), "--format", "csv", "-o", dest.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(dest).unwrap();
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(data[0].starts_with("k,exact-tv,md,"));
    assert_eq!(data.len(), 52);
}

#[test]
fn table_mentions_the_rates() {
    let out = run(&["analyze", &fixture_arg("ex3.json")]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("0.608276253"));
    assert!(text.contains("r(V)"));
}
