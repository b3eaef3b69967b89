use std::path::PathBuf;
use std::process::{Command, Output};

fn meg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meg")).args(args).env_remove("MEG_OUT_DIR").output().unwrap()
}

fn scenario(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    p.to_str().unwrap().to_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn expect_prints_the_trajectory() {
    let o = meg(&["width", "expect", "--u0", "6", "--d", "2", "--k", "3", "--rounds", "2"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "round,mean_width,stddev_removal");
    assert!(lines[1].starts_with("0,6.000000000,"));
    // 6 + 3 - 38/9
    assert!(lines[2].starts_with("1,4.777777778,"), "{}", lines[2]);
    assert_eq!(lines.len(), 4);
}

#[test]
fn rounds_grid_matches_the_mean_recursion() {
    let o = meg(&["width", "rounds", "--d", "2..10", "--k", "10", "--u0-mult", "100"]);
    assert!(o.status.success());
    let got: Vec<u64> = stdout(&o).lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(got, [109, 56, 38, 29, 23, 20, 17, 15, 14]);
}

#[test]
fn pmf_lists_only_the_support() {
    let o = meg(&["width", "pmf", "--u", "6", "--d", "2", "--k", "3"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let js: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(js, ["2", "3", "4", "5", "6"]);
}

#[test]
fn bad_parameters_exit_with_usage_status() {
    for args in [
        &["width", "expect", "--u0", "6", "--d", "1", "--k", "3", "--rounds", "2"][..],
        &["width", "pmf", "--u", "2", "--d", "2", "--k", "1"],
        &["width", "rounds", "--d", "5..2", "--k", "10"],
        &["width", "mc", "--u0", "10", "--d", "2", "--k", "0", "--rounds", "1"],
        &["frobnicate"],
    ] {
        let o = meg(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn missing_scenario_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = meg(&["sim", "--scenario", "/nonexistent/x.json", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn failing_verdict_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = meg(&["sim", "--scenario", &scenario("best_effort_crash.json"), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("eventual_delivery false"));
}

#[test]
fn sim_writes_seeded_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = meg(&["sim", "--scenario", &scenario("happy3.json"), "--seed", "7", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("strong_convergence true"));
    for ext in ["summary.json", "width.csv", "trace.tsv"] {
        assert!(dir.path().join(format!("happy3-seed7.{ext}")).is_file(), "{ext}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("happy3-seed7.summary.json")).unwrap()).unwrap();
    assert!(summary.is_object());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = meg(&["sim", "--scenario", &scenario("reorder.json"), "--seed", "3", "--out", d.path().to_str().unwrap()]);
        assert!(o.status.success());
    }
    for ext in ["summary.json", "width.csv", "trace.tsv"] {
        let name = format!("reorder-seed3.{ext}");
        assert_eq!(std::fs::read(a.path().join(&name)).unwrap(), std::fs::read(b.path().join(&name)).unwrap(), "{name}");
    }
    let mc = ["width", "mc", "--u0", "50", "--d", "3", "--k", "5", "--rounds", "10", "--trials", "200", "--seed", "11"];
    assert_eq!(meg(&mc).stdout, meg(&mc).stdout);
}

#[test]
fn env_directory_overrides_the_flag() {
    let flag = tempfile::tempdir().unwrap();
    let env = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_meg"))
        .args(["width", "pmf", "--u", "6", "--d", "2", "--k", "3", "--out", flag.path().to_str().unwrap()])
        .env("MEG_OUT_DIR", env.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    let written = env.path().join("pmf-u6-d2-k3.csv");
    assert!(written.is_file());
    assert_eq!(stdout(&o).trim(), written.to_str().unwrap());
    assert_eq!(std::fs::read_dir(flag.path()).unwrap().count(), 0);
}

#[test]
fn monte_carlo_file_name_carries_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = meg(&["width", "mc", "--u0", "30", "--d", "2", "--k", "3", "--rounds", "2", "--trials", "50", "--seed", "9",
                  "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    assert!(dir.path().join("mc-u030-d2-k3-r2-t50-seed9.csv").is_file());
}

#[test]
fn verify_all_passes() {
    let o = meg(&["verify", "all"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(!stdout(&o).contains("FAIL"));
}
