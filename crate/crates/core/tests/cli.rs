use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use soaksim::io::RunManifest;

fn soaksim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_soaksim"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

const SMALL: [&str; 8] = ["--kb0", "1e-8", "--particles-weight", "1e-10", "--dt", "100", "--seed", "7"];

fn simulate(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["simulate", "--out", p(out), "--workers", "2"];
    args.extend_from_slice(&SMALL);
    args.extend_from_slice(extra);
    soaksim(&args)
}

#[test]
fn reference_run_writes_the_default_snapshots() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let res = simulate(&out, &[]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let m = RunManifest::load(&out).unwrap();
    let hours: Vec<f64> = m.snapshots.iter().map(|s| s.time_s / 3600.0).collect();
    assert_eq!(hours, vec![0.0, 10.0, 25.0, 55.0]);
    m.verify(&out).unwrap();
    for s in &m.snapshots {
        assert!(out.join(&s.agar_file).exists());
        assert!(out.join(&s.consumed_file).exists());
    }
    assert!(read(&out, "timeseries.csv").lines().count() > 10);
    assert_eq!(m.max_residual_mol, 0.0);
    assert!(!out.join("error.toml").exists());
}

#[test]
fn zero_end_time_keeps_only_the_initial_row() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let res = simulate(&out, &["--end-time", "0", "--snapshot-times", "0"]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let series = read(&out, "timeseries.csv");
    let rows: Vec<&str> = series.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("0"));
}

#[test]
fn rerun_from_manifest_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let res = simulate(&a, &["--end-time", "36000", "--snapshot-times", "0,3600,36000"]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let manifest = a.join("manifest.toml");
    let res = soaksim(&["simulate", "--config", p(&manifest), "--out", p(&b), "--workers", "1"]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let (ma, mb) = (RunManifest::load(&a).unwrap(), RunManifest::load(&b).unwrap());
    assert_eq!(ma.files, mb.files);
    for f in &ma.files {
        assert_eq!(fs::read(a.join(&f.name)).unwrap(), fs::read(b.join(&f.name)).unwrap(), "{}", f.name);
    }
}

#[test]
fn missing_kb0_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    fs::create_dir_all(&out).unwrap();
    let res = soaksim(&["simulate", "--out", p(&out)]);
    assert_eq!(code(&res), 2);
    assert!(stderr(&res).contains("kb0"));
    let err = read(&out, "error.toml");
    assert!(err.contains("code = 2"));
    assert!(!out.join("manifest.toml").exists());
}

#[test]
fn invalid_config_lists_the_offending_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "kb0_m_s = 1e-8\ndiffusion_coeff_m2_s = -1.0\n").unwrap();
    let out = tmp.path().join("run");
    fs::create_dir_all(&out).unwrap();
    let res = soaksim(&["simulate", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(code(&res), 2);
    assert!(read(&out, "error.toml").contains("diffusion_coeff_m2_s"));

    fs::write(&cfg, "kb0_m_s = 1e-8\nno_such_key = 1\n").unwrap();
    let res = soaksim(&["simulate", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(code(&res), 2);
}

#[test]
fn concentration_strings_are_accepted() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "kb0_m_s = 1e-8\ndroplet_concentration = \"0.05 M\"\nend_time_s = 3600.0\n").unwrap();
    let out = tmp.path().join("run");
    let res = soaksim(&["simulate", "--config", p(&cfg), "--out", p(&out), "--particles-weight", "1e-10"]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let m = RunManifest::load(&out).unwrap();
    let c = m.config.droplet_concentration.unwrap();
    assert_eq!(soaksim::io::parse_concentration(&c).unwrap(), 50.0);
}

#[test]
fn uncapped_growth_with_a_coarse_step_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    fs::create_dir_all(&out).unwrap();
    let res = simulate(&out, &["--cap", "inf", "--end-time", "2160000", "--snapshot-times", "0"]);
    assert_eq!(code(&res), 3, "{}", stderr(&res));
    assert!(stderr(&res).contains("time_step_too_coarse"));
    assert!(read(&out, "error.toml").contains("code = 3"));
}

#[test]
fn oracle_conserves_mass() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("pde");
    let res = soaksim(&["oracle", "--kb0", "1e-8", "--out", p(&out), "--grid", "32x16"]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let m = RunManifest::load(&out).unwrap();
    m.verify(&out).unwrap();
    assert_eq!(m.kind, "oracle");
    assert_eq!(m.snapshots.len(), 4);
    // total released is C V = 1e-6 mol for the reference droplet
    assert!(m.max_residual_mol < 1e-10 * 1e-6, "{}", m.max_residual_mol);
}

#[test]
fn oracle_without_auto_shrink_rejects_an_unstable_step() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("pde");
    fs::create_dir_all(&out).unwrap();
    let res = soaksim(&[
        "oracle", "--kb0", "1e-8", "--out", p(&out), "--grid", "32x16", "--dt-pde", "1e5", "--no-auto-shrink",
    ]);
    assert_eq!(code(&res), 3);
    assert!(read(&out, "error.toml").contains("unstable"));
}

#[test]
fn oracle_without_a_source_stays_empty() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("k0.toml");
    fs::write(&cfg, "kb0_m_s = 1e-8\nsoaking_rate_m_s = 0.0\nend_time_s = 36000.0\nsnapshot_times_s = [0.0, 36000.0]\n")
        .unwrap();
    let out = tmp.path().join("pde");
    let res = soaksim(&["oracle", "--config", p(&cfg), "--out", p(&out), "--grid", "16x8"]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let m = RunManifest::load(&out).unwrap();
    for s in &m.snapshots {
        assert_eq!(s.consumed_total_mol, 0.0);
        let grid = read(&out, &s.agar_file);
        for line in grid.lines().filter(|l| !l.starts_with('#')) {
            for v in line.split(',') {
                assert!(v == "nan" || v.parse::<f64>().unwrap() == 0.0, "{line}");
            }
        }
    }
}

fn write_series(dir: &Path, name: &str, rows: &[(f64, f64)]) -> PathBuf {
    let path = dir.join(name);
    let mut text = String::from("time_s,area_m2\n");
    for (t, a) in rows {
        text.push_str(&format!("{t},{a:e}\n"));
    }
    fs::write(&path, text).unwrap();
    path
}

#[derive(serde::Deserialize)]
struct Report {
    series: Vec<Record>,
}

#[derive(serde::Deserialize)]
struct Record {
    concentration_tag: String,
    soaking_rate_m_s: f64,
    two_point_rate_m_s: f64,
}

#[test]
fn fit_recovers_synthetic_rates_in_order() {
    let tmp = tempfile::tempdir().unwrap();
    let h0 = 3.0e-5;
    let rates = [("c_low", 2.0e-9), ("c_mid", 5.5e-9), ("c_high", 1.1e-8)];
    let files: Vec<PathBuf> = rates
        .iter()
        .map(|&(tag, k)| {
            let rows: Vec<(f64, f64)> =
                (0..8).map(|i| i as f64 * 600.0).map(|t| (t, 3.14e-4 * (-k * t / h0).exp())).collect();
            write_series(tmp.path(), &format!("{tag}.csv"), &rows)
        })
        .collect();
    let report_path = tmp.path().join("fit.toml");
    let mut args = vec!["fit", "--h0", "3e-5", "--out", p(&report_path)];
    args.extend(files.iter().map(|f| p(f)));
    let res = soaksim(&args);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let report: Report = toml::from_str(&read(tmp.path(), "fit.toml")).unwrap();
    assert_eq!(report.series.len(), 3);
    for (rec, &(tag, k)) in report.series.iter().zip(&rates) {
        assert_eq!(rec.concentration_tag, tag);
        assert!(((rec.soaking_rate_m_s - k) / k).abs() < 1e-6, "{tag}: {}", rec.soaking_rate_m_s);
    }
}

#[test]
fn fit_on_two_rows_gives_equal_estimators() {
    let tmp = tempfile::tempdir().unwrap();
    let f = write_series(tmp.path(), "two.csv", &[(0.0, 3.0e-4), (1800.0, 2.0e-4)]);
    let report_path = tmp.path().join("fit.toml");
    let res = soaksim(&["fit", "--h0", "3e-5", "--out", p(&report_path), p(&f)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let report: Report = toml::from_str(&read(tmp.path(), "fit.toml")).unwrap();
    let r = &report.series[0];
    assert!((r.soaking_rate_m_s - r.two_point_rate_m_s).abs() <= 1e-12 * r.soaking_rate_m_s.abs());
}

#[test]
fn fit_rejects_times_out_of_order() {
    let tmp = tempfile::tempdir().unwrap();
    let f = write_series(tmp.path(), "bad.csv", &[(0.0, 3.0e-4), (600.0, 2.5e-4), (300.0, 2.0e-4)]);
    let res = soaksim(&["fit", "--h0", "3e-5", p(&f)]);
    assert_eq!(code(&res), 2);
    assert!(stderr(&res).contains("row 4"), "{}", stderr(&res));
}

#[test]
fn compare_against_itself_is_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let res = simulate(&a, &["--end-time", "36000", "--snapshot-times", "0,36000"]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let report = tmp.path().join("cmp.csv");
    let res = soaksim(&["compare", p(&a), p(&a), "--out", p(&report)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let text = fs::read_to_string(&report).unwrap();
    for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let fields: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(fields[1], 0.0, "{line}");
        assert_eq!(fields[2], fields[3], "{line}");
        assert_eq!(fields[4], 0.0, "{line}");
    }
}

#[test]
fn compare_rejects_different_physics() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let cfg = tmp.path().join("d.toml");
    fs::write(&cfg, "diffusion_coeff_m2_s = 1.0e-9\n").unwrap();
    let common = ["--end-time", "3600", "--snapshot-times", "0,3600"];
    assert_eq!(code(&simulate(&a, &common)), 0);
    let mut extra = vec!["--config", p(&cfg)];
    extra.extend_from_slice(&common);
    assert_eq!(code(&simulate(&b, &extra)), 0);
    let res = soaksim(&["compare", p(&a), p(&b)]);
    assert_eq!(code(&res), 2);
    assert!(stderr(&res).contains("diffusion_coeff_m2_s"), "{}", stderr(&res));
}

#[test]
fn compare_detects_tampered_output() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    assert_eq!(code(&simulate(&a, &["--end-time", "3600", "--snapshot-times", "0,3600"])), 0);
    let target = a.join("snapshot_001.csv");
    let mut text = fs::read_to_string(&target).unwrap();
    text.push('\n');
    fs::write(&target, text).unwrap();
    let res = soaksim(&["compare", p(&a), p(&a)]);
    assert_ne!(code(&res), 0);
    assert!(stderr(&res).contains("snapshot_001.csv"), "{}", stderr(&res));
}

#[test]
fn particles_agree_with_the_oracle_at_desk_scale() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("pbs");
    let pde = tmp.path().join("pde");
    let cfg = tmp.path().join("desk.toml");
    fs::write(&cfg, "histogram_bins = [16, 16]\n").unwrap();
    let settings = [
        "--config", p(&cfg), "--kb0", "1e-8", "--end-time", "36000", "--snapshot-times", "0,9000,36000", "--dt", "60",
    ];
    let mut args = vec!["simulate", "--out", p(&run), "--particles-weight", "4e-12", "--seed", "11"];
    args.extend_from_slice(&settings);
    let res = soaksim(&args);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let mut args = vec!["oracle", "--out", p(&pde), "--grid", "64x32"];
    args.extend_from_slice(&settings);
    let res = soaksim(&args);
    assert_eq!(code(&res), 0, "{}", stderr(&res));

    let thresholds = tmp.path().join("t.toml");
    fs::write(&thresholds, "max_l1 = 0.05\nmax_consumed_rel_err = 0.10\n").unwrap();
    let res = soaksim(&["compare", p(&run), p(&pde), "--thresholds", p(&thresholds)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));

    fs::write(&thresholds, "max_l1 = 0.0\n").unwrap();
    let res = soaksim(&["compare", p(&run), p(&pde), "--thresholds", p(&thresholds)]);
    assert_eq!(code(&res), 1);
}
