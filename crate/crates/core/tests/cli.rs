use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use risim::geometry::SystemConfig;
use risim::harness::{CSV_HEADER, TRACE_HEADER};

fn risim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_risim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path, side: usize) -> PathBuf {
    let mut cfg = SystemConfig::default_scenario();
    for c in &mut cfg.clusters {
        c.ris_side = side;
    }
    let path = dir.join("cfg.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn shipped_config_parses() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/default.json");
    let cfg = SystemConfig::from_path(path).unwrap();
    assert_eq!(cfg, SystemConfig::default_scenario());
    cfg.validate().unwrap();
}

#[test]
fn sweep_power_writes_one_row_per_point_scenario_and_mode() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 3);
    let out = risim(&[
        "sweep-power",
        "--config",
        cfg.to_str().unwrap(),
        "--trials",
        "5",
        "--grid",
        "0,20,40",
        "--scenario",
        "EIF,EMI@-65",
        "--mode",
        "fixed_phase,optimized_aware",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 1 + 3 * 2 * 2);
    assert!(lines[1].starts_with("0,EIF,fixed_phase,"));
    assert!(lines[4].starts_with("0,EMI@-65,optimized_aware,"));
    for row in &lines[1..] {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols.len(), 7);
        assert!(cols[3].parse::<f64>().unwrap() > 0.0);
        assert_eq!(cols[5], "5");
    }
}

#[test]
fn default_scenarios_cover_the_six_curves() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 3);
    let out = risim(&[
        "sweep-power",
        "--config",
        cfg.to_str().unwrap(),
        "--trials",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 1 + 5 * 6);
    for label in [
        "EIF",
        "IRR",
        "EMI@-75",
        "EMI@-60",
        "EMI_IRR@-75",
        "EMI_IRR@-60",
    ] {
        assert!(text.contains(&format!(",{label},")), "{label}");
    }
}

#[test]
fn per_user_outage_adds_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 3);
    let out = risim(&[
        "sweep-elements",
        "--config",
        cfg.to_str().unwrap(),
        "--trials",
        "4",
        "--grid",
        "4,9",
        "--scenario",
        "EIF",
        "--per-user-outage",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let header = text.lines().next().unwrap();
    assert!(header.contains("outage_user1") && header.contains("outage_user2"));
    let width = header.split(',').count();
    assert!(text.lines().all(|l| l.split(',').count() == width));
}

#[test]
fn sweep_output_is_byte_identical_across_runs_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 3);
    let run = |seed: &str, name: &str| {
        let path = dir.path().join(name);
        let o = risim(&[
            "sweep-emi",
            "--config",
            cfg.to_str().unwrap(),
            "--trials",
            "6",
            "--seed",
            seed,
            "--mode",
            "optimized_unaware,optimized_aware",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
        assert!(o.stdout.is_empty());
        std::fs::read(path).unwrap()
    };
    let a = run("5", "a.csv");
    assert_eq!(a, run("5", "b.csv"));
    assert_ne!(a, run("6", "c.csv"));
}

#[test]
fn single_trial_is_deterministic_and_writes_trace_and_channels() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 3);
    let trace = dir.path().join("trace.csv");
    let dump = dir.path().join("chan");
    let args = [
        "single-trial",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "3",
        "--trial",
        "2",
        "--scenario",
        "EMI_IRR@-60",
        "--mode",
        "optimized_aware",
        "--trace",
        trace.to_str().unwrap(),
        "--dump-channels",
        dump.to_str().unwrap(),
    ];
    let a = risim(&args);
    assert_eq!(
        a.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&a.stderr)
    );
    let b = risim(&args);
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("seed,trial,scenario,mode,sum_rate_bps_hz,rates_bps_hz")
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&row[..4], &["3", "2", "EMI_IRR@-60", "optimized_aware"]);
    let rates: Vec<f64> = row[5].split(' ').map(|r| r.parse().unwrap()).collect();
    let sum: f64 = row[4].parse().unwrap();
    assert_eq!(rates.len(), 2);
    assert!((rates.iter().sum::<f64>() - sum).abs() < 1e-9);

    let trace = std::fs::read_to_string(trace).unwrap();
    let mut tl = trace.lines();
    assert_eq!(tl.next(), Some(TRACE_HEADER));
    let rows: Vec<Vec<&str>> = tl.map(|l| l.split(',').collect()).collect();
    assert!(!rows.is_empty());
    for r in &rows {
        assert_eq!(r.len(), 6);
        assert_eq!(r[0], "2");
        r[3].parse::<f64>().unwrap();
        // the starting row of each outer iteration has no gradient or step
        assert_eq!(r[2] == "0", r[4].is_empty() && r[5].is_empty());
    }
    for name in ["H1.csv", "H2.csv", "g1.csv", "g2.csv", "Z21.csv"] {
        assert!(dump.join(name).is_file(), "{name}");
    }
    let h1 = std::fs::read_to_string(dump.join("H1.csv")).unwrap();
    assert_eq!(h1.lines().count(), 1 + 9 * 2);
}

#[test]
fn sweep_dump_writes_one_directory_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 2);
    let dump = dir.path().join("d");
    let o = risim(&[
        "sweep-elements",
        "--config",
        cfg.to_str().unwrap(),
        "--trials",
        "1",
        "--grid",
        "4,16",
        "--scenario",
        "EIF",
        "--dump-channels",
        dump.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let h0 = std::fs::read_to_string(dump.join("point_0/H1.csv")).unwrap();
    let h1 = std::fs::read_to_string(dump.join("point_1/H1.csv")).unwrap();
    assert_eq!(h0.lines().count(), 1 + 4 * 2);
    assert_eq!(h1.lines().count(), 1 + 16 * 2);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 2);
    let cfg = cfg.to_str().unwrap();
    assert_eq!(risim(&["--help"]).status.code(), Some(0));
    assert_eq!(risim(&["--version"]).status.code(), Some(0));
    assert_eq!(risim(&[]).status.code(), Some(1));
    assert_eq!(risim(&["sweep-power"]).status.code(), Some(1));
    assert_eq!(
        risim(&["sweep-power", "--config", cfg, "--trace", "t.csv"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        risim(&["sweep-elements", "--config", cfg, "--grid", "10"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        risim(&["sweep-power", "--config", cfg, "--mode", "greedy"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        risim(&[
            "single-trial",
            "--scenario",
            "EIF,IRR",
            "--mode",
            "optimized_aware",
            "--trace",
            "t.csv"
        ])
        .status
        .code(),
        Some(1)
    );

    // the shipped scenario has EMI off, so a bare EMI scenario has no level
    let o = risim(&[
        "sweep-power",
        "--config",
        cfg,
        "--scenario",
        "EMI",
        "--trials",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("needs an EMI level"));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(
        risim(&["sweep-power", "--config", bad.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    let mut invalid = SystemConfig::default_scenario();
    invalid.clusters[0].num_antennas = 1;
    std::fs::write(&bad, serde_json::to_string(&invalid).unwrap()).unwrap();
    let o = risim(&["single-trial", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
}
