use std::path::{Path, PathBuf};
use std::time::Instant;

use dycore_perf::fixtures;
use dycore_perf_cli::ScenarioFile;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn config(name: &str) -> String {
    configs().join(name).display().to_string()
}

fn cli(args: &[&str]) -> i32 {
    dycore_perf_cli::run(std::iter::once("dycore-perf").chain(args.iter().copied()))
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(Result::unwrap).collect()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("c.json");
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn minimal_config_gives_one_row() {
    let out = tempfile::tempdir().unwrap();
    let o = out.path().display().to_string();
    assert_eq!(cli(&["run", "--config", &config("minimal.json"), "--out", &o]), 0);
    let rows = csv_rows(&out.path().join("dyncore.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][0], "1");
    assert_eq!(&rows[0][10], "ok");
    assert!(out.path().join("summary.txt").exists());
}

#[test]
fn layout_not_filling_node_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(
        dir.path(),
        r#"{"dyncore": {"cases": [{"mesh": 8, "nodes": 1}],
                        "layouts": [{"ranks_per_node": 32, "threads_per_rank": 2}]}}"#,
    );
    let o = dir.path().join("out").display().to_string();
    assert_eq!(cli(&["run", "--config", &c, "--out", &o]), 2);
    assert!(!dir.path().join("out").exists());
    let err = ScenarioFile::load(Path::new(&c)).unwrap().resolve().unwrap_err();
    assert!(err
        .to_string()
        .contains("ranks_per_node × threads_per_rank must equal cores_per_node"));
}

#[test]
fn unknown_key_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(dir.path(), "{\n  \"machine\": {},\n  \"mesh\": 8\n}");
    assert_eq!(cli(&["run", "--config", &c]), 2);
    let err = ScenarioFile::load(Path::new(&c)).unwrap_err().to_string();
    assert!(err.contains(":3:"), "{err}");
    assert!(err.contains("mesh"), "{err}");
}

#[test]
fn missing_config_is_config_error() {
    assert_eq!(cli(&["run", "--config", "/does/not/exist.json"]), 2);
    assert_eq!(cli(&["run"]), 2);
    assert_eq!(cli(&["frobnicate"]), 2);
}

#[test]
fn single_point_memory_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(
        dir.path(),
        r#"{"dyncore": {"cases": [{"mesh": 1024, "nodes": 192}],
                        "layouts": [{"ranks_per_node": 128, "threads_per_rank": 1}]}}"#,
    );
    let o = dir.path().join("out").display().to_string();
    assert_eq!(cli(&["run", "--config", &c, "--out", &o]), 3);
}

#[test]
fn single_io_point_that_cannot_fit_exits_3() {
    let mut s = fixtures::iodev();
    s.buffer_bytes = 1;
    let text = serde_json::json!({"io": [{"name": "tiny", "scenario": s}]}).to_string();
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(dir.path(), &text);
    assert_eq!(cli(&["run", "--config", &c, "--out", &dir.path().display().to_string()]), 3);
}

#[test]
fn weak_scaling_grid_has_fifteen_rows_with_memory_guard_row() {
    let out = tempfile::tempdir().unwrap();
    let o = out.path().display().to_string();
    assert_eq!(cli(&["run", "--config", &config("fig2-weak-256.json"), "--out", &o]), 0);
    let rows = csv_rows(&out.path().join("dyncore.csv"));
    assert_eq!(rows.len(), 15);
    let keys: Vec<(&str, &str)> = rows.iter().map(|r| (&r[0], &r[3])).collect();
    assert_eq!(keys[0], ("256", "1"));
    assert_eq!(keys[14], ("1024", "16"));
    let failed: Vec<_> = rows.iter().filter(|r| &r[10] != "ok").collect();
    assert_eq!(failed.len(), 1);
    assert_eq!((&failed[0][0], &failed[0][3]), ("1024", "1"));
    assert!(failed[0][10].contains("memory"));
    assert_eq!(&failed[0][4], "");
}

#[test]
fn thread_sweep_has_five_rows() {
    let out = tempfile::tempdir().unwrap();
    let o = out.path().display().to_string();
    let c = config("fig2-threads-c512.json");
    assert_eq!(cli(&["sweep", "--config", &c, "--axis", "threads", "--out", &o]), 0);
    let rows = csv_rows(&out.path().join("sweep_threads.csv"));
    let threads: Vec<&str> = rows.iter().map(|r| &r[3]).collect();
    assert_eq!(threads, ["1", "2", "4", "8", "16"]);
}

#[test]
fn pool_sweep_has_four_rows() {
    let out = tempfile::tempdir().unwrap();
    let o = out.path().display().to_string();
    let c = config("io-c192-tuning.json");
    assert_eq!(cli(&["sweep", "--config", &c, "--axis", "pools", "--out", &o]), 0);
    let rows = csv_rows(&out.path().join("sweep_pools.csv"));
    let pools: Vec<&str> = rows.iter().map(|r| &r[0]).collect();
    assert_eq!(pools, ["1", "2", "4", "8"]);
}

#[test]
fn strong_scaling_sweep_reports_ideal_and_skips() {
    let out = tempfile::tempdir().unwrap();
    let o = out.path().display().to_string();
    let c = config("fig1-strong.json");
    assert_eq!(cli(&["sweep", "--config", &c, "--axis", "nodes", "--out", &o]), 0);
    let rows = csv_rows(&out.path().join("sweep_nodes.csv"));
    assert_eq!(rows.len(), 18);
    for r in rows.iter().filter(|r| &r[11] == "ok") {
        let (total, ideal): (f64, f64) = (r[8].parse().unwrap(), r[9].parse().unwrap());
        assert!(total >= ideal * (1.0 - 1e-12));
    }
}

#[test]
fn sweep_axis_errors() {
    let c = config("io-iodev-buffers.json");
    assert_eq!(cli(&["sweep", "--config", &c]), 2);
    assert_eq!(cli(&["sweep", "--config", &c, "--axis", "colour"]), 2);
    assert_eq!(cli(&["sweep", "--config", &c, "--axis", "pools"]), 2);
    assert_eq!(cli(&["sweep", "--config", &c, "--axis", "threads"]), 2);
}

#[test]
fn report_against_itself_is_all_ones_and_repeats_fill_sd() {
    let out = tempfile::tempdir().unwrap();
    let o = out.path().display().to_string();
    let c = config("io-c896-striping.json");
    assert_eq!(cli(&["run", "--config", &c, "--repeat", "3", "--out", &o]), 0);

    let summary = csv_rows(&out.path().join("io_summary.csv"));
    for r in &summary {
        assert_eq!(&r[1], "3");
        for col in [3, 5, 7] {
            assert!(r[col].parse::<f64>().unwrap() > 0.0);
        }
    }
    // Standard deviation against an independent computation from the runs.
    let runs = csv_rows(&out.path().join("io_runs.csv"));
    let waits: Vec<f64> =
        runs.iter().filter(|r| &r[0] == "baseline").map(|r| r[5].parse().unwrap()).collect();
    let mean = waits.iter().sum::<f64>() / 3.0;
    let sd = (waits.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / 2.0).sqrt();
    let reported: f64 = summary[0][5].parse().unwrap();
    assert!((reported - sd).abs() <= 1e-9 * sd.max(1.0));

    let runs_csv = out.path().join("io_runs.csv").display().to_string();
    let rep = out.path().join("rep");
    let r = rep.display().to_string();
    assert_eq!(cli(&["report", &runs_csv, &runs_csv, "--out", &r]), 0);
    let text = std::fs::read_to_string(rep.join("report.txt")).unwrap();
    let ratio_lines: Vec<&str> = text
        .lines()
        .skip_while(|l| !l.starts_with("ratio"))
        .skip(2)
        .take_while(|l| !l.is_empty())
        .collect();
    assert_eq!(ratio_lines.len(), 6);
    for line in ratio_lines {
        let ratios: Vec<&str> = line.split_whitespace().skip(2).take(6).collect();
        assert!(ratios.iter().all(|v| *v == "1.0000"), "{line}");
    }
    assert!(text.contains("baseline"));
    assert!(text.contains("performance"));
    assert!(text.contains("Client wait (%)"));
    assert!(text.contains(" ± "));
}

#[test]
fn report_rejects_mismatched_schemas() {
    let out = tempfile::tempdir().unwrap();
    let o = out.path().display().to_string();
    assert_eq!(cli(&["run", "--config", &config("minimal.json"), "--out", &o]), 0);
    let other = out.path().join("other.csv");
    std::fs::write(&other, "scenario,run\nx,0\n").unwrap();
    let dyn_csv = out.path().join("dyncore.csv").display().to_string();
    assert_eq!(cli(&["report", &dyn_csv, &other.display().to_string()]), 2);

    let shifted = out.path().join("shifted.csv");
    let text = std::fs::read_to_string(&dyn_csv).unwrap().replacen("\n1,1,1,1", "\n2,1,1,1", 1);
    std::fs::write(&shifted, text).unwrap();
    assert_eq!(cli(&["report", &dyn_csv, &shifted.display().to_string()]), 2);
    assert_eq!(cli(&["report", &dyn_csv, &dyn_csv]), 0);
}

#[test]
fn shipped_io_configs_match_fixtures() {
    let load = |n: &str| ScenarioFile::load(&configs().join(n)).unwrap();
    let c192 = load("io-c192-tuning.json");
    assert_eq!(c192.io[0].scenario, fixtures::c192_baseline());
    assert_eq!(c192.io[1].scenario, fixtures::c192_tuned());
    let c896 = load("io-c896-striping.json");
    assert_eq!(c896.io[1].scenario, fixtures::c896_striped());
    let off = dycore_perf::IoScenario { striping_factor: 1.0, ..fixtures::c896_striped() };
    assert_eq!(c896.io[0].scenario, off);
    let dev = load("io-iodev-buffers.json");
    assert_eq!(dev.io[0].scenario, fixtures::iodev());
    assert_eq!(dev.sweep.unwrap().buffer_bytes.unwrap(), fixtures::iodev_buffer_sizes());
}

#[test]
fn shipped_configs_round_trip_and_run_quickly() {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(configs())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    assert!(paths.len() >= 9);
    for path in paths {
        let parsed = ScenarioFile::load(&path).unwrap();
        let canonical = parsed.to_canonical();
        let again = ScenarioFile::parse(&canonical, "canonical").unwrap();
        assert_eq!(again, parsed, "{}", path.display());
        assert_eq!(again.to_canonical(), canonical, "{}", path.display());

        let out = tempfile::tempdir().unwrap();
        let t = Instant::now();
        let code = cli(&[
            "run",
            "--config",
            &path.display().to_string(),
            "--out",
            &out.path().display().to_string(),
        ]);
        assert_eq!(code, 0, "{}", path.display());
        assert!(t.elapsed().as_secs_f64() < 60.0, "{} too slow", path.display());
    }
}

#[test]
fn coupled_compute_rate_comes_from_dyncore() {
    let mut s = fixtures::iodev();
    s.compute_rate = 0.0;
    let text = serde_json::json!({
        "machine": {"preset": "archer2", "cores_per_cpu": 1, "cpus_per_node": 1, "cores_per_node": 1},
        "dyncore": {"cases": [{"mesh": 2, "nodes": 1}],
                    "layouts": [{"ranks_per_node": 1, "threads_per_rank": 1}]},
        "io": [{"name": "coupled", "scenario": s,
                "compute_from_dyncore": {"case": 0, "layout": 0, "timesteps_per_hour": 10.0}}]
    })
    .to_string();
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(dir.path(), &text);
    let o = dir.path().join("out");
    assert_eq!(cli(&["run", "--config", &c, "--out", &o.display().to_string()]), 0);
    let step: f64 = csv_rows(&o.join("dyncore.csv"))[0][8].parse().unwrap();
    let compute: f64 = csv_rows(&o.join("io_runs.csv"))[0][3].parse().unwrap();
    assert!((compute - step * 10.0 * 24.0).abs() <= 1e-9 * compute);
}
