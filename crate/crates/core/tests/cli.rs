//! Runs the `pit-calib` binary end to end.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pit_calib::report_io::{parse_profile_csv, parse_runs_csv, PROFILE_HEADER, RUNS_HEADER};

fn pit_calib(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pit-calib"))
        .args(args)
        .env("PIT_CALIB_THREADS", "2")
        .output()
        .expect("spawn pit-calib")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_lines(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn pit_prints_percentiles_and_regions() {
    let dir = tempfile::tempdir().unwrap();
    let r = write_lines(dir.path(), "ref.txt", "0.5\n-1\n\n1.5\n0\n");
    let o = pit_calib(&["pit", "--reference", &r, "0.25", "-2", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines: Vec<String> = stdout(&o).lines().map(str::to_owned).collect();
    assert_eq!(lines.len(), 3);
    // sorted reference -1, 0, 0.5, 1.5; 0.25 is halfway through the second gap
    assert_eq!(lines[0], "0.25\t0.5\tinterior(2)");
    assert!(lines[1].starts_with("-2\t") && lines[1].ends_with("\tlower-tail"));
    assert!(lines[2].starts_with("3\t") && lines[2].ends_with("\tupper-tail"));
}

#[test]
fn pit_input_errors_cite_lines() {
    let dir = tempfile::tempdir().unwrap();
    let r = write_lines(dir.path(), "bad.txt", "1\n2\nabc\n");
    let o = pit_calib(&["pit", "--reference", &r, "0"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.txt:3"), "{err}");

    let t = write_lines(dir.path(), "tie.txt", "1\n2\n2\n");
    let o = pit_calib(&["pit", "--reference", &t, "0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn ks_one_and_two_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_lines(dir.path(), "a.txt", "0.1\n0.4\n0.7\n");
    let b = write_lines(dir.path(), "b.txt", "0.2\n0.9\n");
    let o = pit_calib(&["ks", &a]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("mode=one-sample-uniform\t"), "{text}");
    assert!(text.contains("n_eff=3\t"));

    let o = pit_calib(&["ks", "--mode", "grid", &a]);
    assert!(stdout(&o).starts_with("mode=grid-restricted\t"));

    let o = pit_calib(&["ks", &a, &b]);
    let text = stdout(&o);
    assert!(text.starts_with("mode=two-sample\t"), "{text}");
    assert!(text.contains("n_eff=1.2\t"));

    let e = write_lines(dir.path(), "empty.txt", "\n");
    assert_eq!(pit_calib(&["ks", &e]).status.code(), Some(1));
    let out_of_range = write_lines(dir.path(), "big.txt", "0.5\n1.5\n");
    assert_eq!(pit_calib(&["ks", &out_of_range]).status.code(), Some(1));
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        &["fixed-ref", "--m", "0"][..],
        &["fixed-ref", "--bogus"],
        &["nothing"],
        &["ks"],
        &["bound-sweep", "--max-n", "1"],
    ] {
        assert_eq!(pit_calib(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn experiment_writes_named_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("reports");
    let o = pit_calib(&[
        "fixed-ref", "--n", "40", "--m", "20", "--reps", "30", "--seed", "5", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());

    let profile = fs::read_to_string(out.join("fixed-ref_n40_m20_s5.profile.csv")).unwrap();
    assert_eq!(profile.lines().next(), Some(PROFILE_HEADER));
    let rows = parse_profile_csv(&profile).unwrap();
    assert_eq!(rows.len(), 20);
    assert!(rows.iter().all(|r| r.std_emp.is_some()));

    let runs = fs::read_to_string(out.join("fixed-ref_n40_m20_s5.runs.csv")).unwrap();
    assert_eq!(runs.lines().next(), Some(RUNS_HEADER));
    let runs = parse_runs_csv(&runs).unwrap();
    assert_eq!(runs.len(), 30);
    assert!(runs.iter().all(|r| r.d_two.is_some()));

    let summary = fs::read_to_string(out.join("fixed-ref_n40_m20_s5.summary.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(json["config"]["regime"], "fixed-reference");
    assert_eq!(json["config"]["reps"], 30);
    assert!(json["appendix_bound_violations"].is_u64());
    assert!(json.get("runs").is_none());
}

#[test]
fn donsker_writes_profile_and_summary_only() {
    let dir = tempfile::tempdir().unwrap();
    let o = pit_calib(&[
        "donsker", "--n", "30", "--reps", "50", "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let mut names: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(
        names,
        ["donsker_n30_m30_s42.profile.csv", "donsker_n30_m30_s42.summary.json"]
    );
}

#[test]
fn bound_sweep_reports_counts() {
    let o = pit_calib(&["bound-sweep", "--max-m", "8", "--max-n", "8", "--trials", "500"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("trials=500\tviolations=0\t"), "{text}");
}
