//! End-to-end tests of the `doa` binary.

use std::path::PathBuf;
use std::process::Command;

fn doa() -> Command {
    Command::new(env!("CARGO_BIN_EXE_doa"))
}

fn tempdir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("doa-cli-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn simulate_then_estimate_round_trip() {
    let dir = tempdir();
    let snaps = dir.join("snaps.csv");
    let out = doa()
        .args([
            "simulate",
            "--set",
            "seed=11",
            "--snr-db",
            "12",
            "--snapshots",
            "400",
            "--out",
        ])
        .arg(&snaps)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&snaps).unwrap();
    assert!(text.starts_with("#schema=snapshots-v1"));
    assert!(text.contains("# omega=1,2,3,4"));

    let out = doa()
        .args(["estimate", "--method", "foc-music", "--input"])
        .arg(&snaps)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let line = stdout
        .lines()
        .find(|l| l.starts_with("doa_estimates_deg="))
        .expect("estimate line");
    let angles: Vec<f64> = line
        .trim_start_matches("doa_estimates_deg=")
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(angles.len(), 2);
    assert!((angles[0] + 23.0).abs() < 3.0, "{angles:?}");
    assert!((angles[1] - 17.0).abs() < 3.0, "{angles:?}");
}

#[test]
fn bench_writes_deterministic_csvs() {
    let dir = tempdir();
    let cfg = dir.join("bench.cfg");
    std::fs::write(
        &cfg,
        "trials = 2\nsweep.snr_db = 9,12\nsweep.snapshots = 200\nmethods = foc-music\nseed = 3\n",
    )
    .unwrap();
    let rows = dir.join("rows.csv");
    let summary = dir.join("summary.csv");
    let run = |rows: &PathBuf, summary: &PathBuf| {
        let out = doa()
            .arg("bench")
            .arg("--config")
            .arg(&cfg)
            .arg("--rows")
            .arg(rows)
            .arg("--summary")
            .arg(summary)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    run(&rows, &summary);
    let rows2 = dir.join("rows2.csv");
    let summary2 = dir.join("summary2.csv");
    run(&rows2, &summary2);

    let strip_time = |path: &PathBuf| -> String {
        std::fs::read_to_string(path)
            .unwrap()
            .lines()
            .map(|l| {
                let cols: Vec<&str> = l.split(',').collect();
                cols.iter()
                    .enumerate()
                    .filter(|(i, _)| *i + 2 != cols.len())
                    .map(|(_, c)| *c)
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip_time(&rows), strip_time(&rows2));

    let summary_text = std::fs::read_to_string(&summary).unwrap();
    assert!(summary_text.starts_with("#schema=summary-v1"));
    // 2 SNR points x 1 method.
    assert_eq!(summary_text.lines().count(), 2 + 2);
    let rows_text = std::fs::read_to_string(&rows).unwrap();
    assert!(rows_text.starts_with("#schema=rows-v1"));
    assert_eq!(rows_text.lines().count(), 2 + 4); // schema + header + 2x2 rows
}

#[test]
fn verify_battery_passes() {
    let out = doa().arg("verify").output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(stdout.contains("PASS population-pipeline-ula"));
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn bad_config_is_a_fatal_error() {
    let dir = tempdir();
    let cfg = dir.join("bad.cfg");
    std::fs::write(&cfg, "no.such.key = 1\n").unwrap();
    let out = doa().arg("bench").arg("--config").arg(&cfg).output().unwrap();
    assert!(!out.status.success());

    let out = doa().args(["bench", "--set", "trials=0"]).output().unwrap();
    assert!(!out.status.success());

    let out = doa()
        .args(["estimate", "--input", "/definitely/not/here.csv"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
