//! End-to-end tests of the command-line interface.

use std::fs;
use std::path::Path;
use std::process::Command;

fn funlasso() -> Command {
    Command::new(env!("CARGO_BIN_EXE_funlasso"))
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

fn summary(dir: &Path, stem: &str) -> serde_json::Value {
    let report: serde_json::Value =
        serde_json::from_str(&read(&dir.join(format!("{stem}_report.json")))).unwrap();
    report["summary"].clone()
}

/// Generate a seeded dataset in `dir` and return the manifest path.
fn simulate_into(dir: &Path, example: u8, n: usize, seed: u64) -> std::path::PathBuf {
    let status = funlasso()
        .args([
            "--out-dir",
            dir.to_str().unwrap(),
            "--seed",
            &seed.to_string(),
            "simulate",
            "--example",
            &example.to_string(),
            "--n",
            &n.to_string(),
            "--sigma",
            "0.01",
            "--grid-size",
            "60",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    dir.join("sim.toml")
}

#[test]
fn simulate_writes_dataset_and_rejects_bad_example() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = simulate_into(dir.path(), 1, 60, 7);
    let (data, names) = funlasso::data::load_dataset::<f64>(&manifest).unwrap();
    assert_eq!(data.n_blocks(), 7);
    assert_eq!(data.n(), 60);
    assert_eq!(names[0], "x1");
    assert!(dir.path().join("sim_truth.csv").exists());
    let s = summary(dir.path(), "sim");
    assert_eq!(s["support"], serde_json::json!([1]));

    // Same seed reproduces the files byte for byte.
    let dir2 = tempfile::tempdir().unwrap();
    simulate_into(dir2.path(), 1, 60, 7);
    assert_eq!(
        read(&dir.path().join("sim.csv")),
        read(&dir2.path().join("sim.csv"))
    );

    // Unknown example: usage error, nonzero exit.
    let out = funlasso()
        .args(["simulate", "--example", "3"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn path_emits_full_norm_table_with_zero_top_row() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = simulate_into(dir.path(), 1, 200, 11);
    let status = funlasso()
        .args([
            "--out-dir",
            dir.path().to_str().unwrap(),
            "path",
            "--data",
            manifest.to_str().unwrap(),
            "--n-r",
            "30",
            "--kkt-tol-factor",
            "1e-4",
        ])
        .status()
        .unwrap();
    assert!(status.success());

    let table = read(&dir.path().join("path.csv"));
    let mut lines = table.lines();
    assert_eq!(lines.next().unwrap(), "r,block,norm,converged");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 30 * 7);

    // All seven blocks have zero norm at the top of the grid (r = r_max).
    for row in &rows[..7] {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[2].parse::<f64>().unwrap(), 0.0);
    }

    // Above the plug-in-selected r, only the signal block is active.
    let status = funlasso()
        .args([
            "--out-dir",
            dir.path().to_str().unwrap(),
            "fit",
            "--data",
            manifest.to_str().unwrap(),
            "--select",
            "sigma",
            "--n-r",
            "30",
            "--kkt-tol-factor",
            "1e-4",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let chosen_r = summary(dir.path(), "fit")["chosen_r"].as_f64().unwrap();
    for row in &rows {
        let cols: Vec<&str> = row.split(',').collect();
        let r: f64 = cols[0].parse().unwrap();
        let block: usize = cols[1].parse().unwrap();
        let norm: f64 = cols[2].parse().unwrap();
        if r > chosen_r && block != 1 {
            assert_eq!(norm, 0.0, "block {block} active at r = {r} above {chosen_r}");
        }
    }
}

#[test]
fn fit_sigma_rule_recovers_support_and_debias_reduces_error() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = simulate_into(dir.path(), 1, 500, 3);
    let status = funlasso()
        .args([
            "--out-dir",
            dir.path().to_str().unwrap(),
            "fit",
            "--data",
            manifest.to_str().unwrap(),
            "--select",
            "sigma",
            "--debias",
            "--truth",
            dir.path().join("sim_truth.csv").to_str().unwrap(),
            "--n-r",
            "60",
            "--kkt-tol-factor",
            "1e-3",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let s = summary(dir.path(), "fit");
    assert_eq!(s["support"], serde_json::json!([1]));
    assert!(dir.path().join("fit_beta.csv").exists());
    assert!(dir.path().join("fit_beta_debiased.csv").exists());

    let plain = s["errors"]["plain"]["per_block"][0].as_f64().unwrap();
    let debiased = s["errors"]["debiased"]["per_block"][0].as_f64().unwrap();
    assert!(
        debiased < plain,
        "debias did not reduce the signal-block error: {debiased} vs {plain}"
    );
}

#[test]
fn fit_projected_auto_recovers_support_on_example_2() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = simulate_into(dir.path(), 2, 600, 5);
    let status = funlasso()
        .args([
            "--out-dir",
            dir.path().to_str().unwrap(),
            "fit",
            "--data",
            manifest.to_str().unwrap(),
            "--select",
            "sigma",
            "--project",
            "auto",
            "--n-r",
            "60",
            "--kkt-tol-factor",
            "1e-3",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let s = summary(dir.path(), "fit");
    assert_eq!(s["support"], serde_json::json!([1, 4, 7]));
    assert_eq!(s["projected"]["support"], serde_json::json!([1, 4, 7]));
    assert!(s["projected"]["m"].as_u64().unwrap() >= 1);
    assert!(dir.path().join("fit_beta_projected.csv").exists());
}

#[test]
fn montecarlo_reports_recovery_table() {
    let dir = tempfile::tempdir().unwrap();
    let status = funlasso()
        .args([
            "--out-dir",
            dir.path().to_str().unwrap(),
            "--seed",
            "40",
            "montecarlo",
            "--reps",
            "3",
            "--example",
            "1",
            "--select",
            "sigma",
            "--n",
            "400",
            "--grid-size",
            "50",
            "--n-r",
            "40",
            "--kkt-tol-factor",
            "1e-3",
        ])
        .status()
        .unwrap();
    assert!(status.success());

    let reps = read(&dir.path().join("montecarlo_reps.csv"));
    assert_eq!(reps.lines().count(), 4); // header + 3 reps
    let summary_csv = read(&dir.path().join("montecarlo_summary.csv"));
    let last = summary_csv.lines().last().unwrap();
    let pct: f64 = last.split(',').last().unwrap().parse().unwrap();
    assert!((0.0..=100.0).contains(&pct));

    let s = summary(dir.path(), "montecarlo");
    let exact = reps.lines().skip(1).filter(|l| l.split(',').nth(4) == Some("true")).count();
    assert_eq!(
        s["recovery_pct"].as_f64().unwrap(),
        100.0 * exact as f64 / 3.0
    );
}

/// A small raw file with the UCI schema: four full days plus partial
/// boundary days.
fn write_tiny_energy(path: &Path) {
    use std::io::Write as _;
    let mut f = std::io::BufWriter::new(fs::File::create(path).unwrap());
    let mut header: Vec<String> = vec!["date".into()];
    header.extend(funlasso::data::ENERGY_VARIABLES.iter().map(|s| s.to_string()));
    header.extend(["Visibility".into(), "Tdewpoint".into(), "rv1".into(), "rv2".into()]);
    writeln!(f, "{}", header.join(",")).unwrap();
    // 2016-03-01 20:00 .. 2016-03-06 04:00, 10-minute steps.
    let mut minutes: i64 = 20 * 60;
    let mut day = 1u32;
    let mut k = 0u64;
    while day <= 6 {
        let (h, m) = (minutes / 60, minutes % 60);
        let mut row = vec![format!("\"2016-03-{day:02} {h:02}:{m:02}:00\"")];
        row.push(format!("{}", 40 + 10 * u64::from(day) + (k % 7)));
        for j in 1..24 {
            row.push(format!("{}", (k as f64 * 0.37 + j as f64).sin() * 3.0 + j as f64));
        }
        row.extend(["40".into(), "5".into(), "1".into(), "1".into()]);
        writeln!(f, "{}", row.join(",")).unwrap();
        minutes += 10;
        if minutes >= 24 * 60 {
            minutes = 0;
            day += 1;
        }
        if day == 6 && minutes > 4 * 60 {
            break;
        }
        k += 1;
    }
}

#[test]
fn energy_runs_deterministically_with_24_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("energydata.csv");
    write_tiny_energy(&raw);

    let run = |out: &Path| {
        let status = funlasso()
            .args([
                "--out-dir",
                out.to_str().unwrap(),
                "energy",
                "--raw",
                raw.to_str().unwrap(),
                "--n-r",
                "20",
                "--kkt-tol-factor",
                "1e-3",
            ])
            .status()
            .unwrap();
        assert!(status.success());
    };
    run(dir.path());

    let norms = read(&dir.path().join("energy_norms.csv"));
    let blocks: std::collections::BTreeSet<&str> = norms
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(blocks.len(), 24, "expected 24 norm trajectories");
    let s = summary(dir.path(), "energy");
    assert_eq!(s["p"], serde_json::json!(24));

    // Deterministic across reruns on the same file.
    let dir2 = tempfile::tempdir().unwrap();
    run(dir2.path());
    assert_eq!(norms, read(&dir2.path().join("energy_norms.csv")));
    assert_eq!(
        read(&dir.path().join("energy_selected.csv")),
        read(&dir2.path().join("energy_selected.csv"))
    );
}

#[test]
fn missing_data_file_fails_with_one_line_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = funlasso()
        .args([
            "--out-dir",
            dir.path().to_str().unwrap(),
            "fit",
            "--data",
            "/nonexistent/manifest.toml",
            "--select",
            "sigma",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: "), "stderr was: {err}");
}
