//! The `soaksim` command-line tool: `simulate`, `oracle`, `fit` and
//! `compare`.
//!
//! Exit codes: 0 success, 1 a comparison exceeded its thresholds, 2 bad
//! input (config, arguments, data files), 3 a run failed. Failures print a
//! one-line `soaksim-error` record on stderr and, when the output directory
//! exists, an `error.toml` with the same fields.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

use crate::calibration::{fit_soaking_rate, two_point_series, AreaSeries, SoakingFit};
use crate::error::{Error, Result};
use crate::io::{
    field_csv, fmt_real, ledger_csv, oracle_series_csv, parse_two_column_table, timeseries_csv, write_output,
    CapSetting, ConfigFile, FileRecord, GridCsv, GridRecord, RunManifest, SnapshotRecord,
};
use crate::model::{validate_config, SimulationConfig};
use crate::pbs::Simulator;
use crate::pde::{compare_profiles, project_rings, solve, CompareReport, Grid, ProfileSet, ProfileSnapshot, SolveOptions, Thresholds};

pub const EXIT_OK: i32 = 0;
pub const EXIT_THRESHOLD: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Droplet volume assumed by `fit` when neither `--h0` nor `--volume` is given.
pub const DEFAULT_FIT_VOLUME_M3: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(name = "soaksim", version, about = "Droplet soaking and diffusion simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the particle simulator.
    Simulate(SimulateArgs),
    /// Solve the same configuration with the finite-volume oracle.
    Oracle(OracleArgs),
    /// Estimate the soaking rate from droplet area (or radius) tables.
    Fit(FitArgs),
    /// Compare two run directories written by `simulate` or `oracle`.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Config file (flat key/value TOML) or a previous run's manifest.toml.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Initial lawn consumption rate K_B(0) in m/s.
    #[arg(long)]
    pub kb0: Option<f64>,
    /// Cap on the consumption rate in m/s, `auto` or `inf`.
    #[arg(long)]
    pub cap: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Particle-engine time step in seconds.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Moles represented by one particle.
    #[arg(long)]
    pub particles_weight: Option<f64>,
    #[arg(long)]
    pub end_time: Option<f64>,
    /// Comma-separated snapshot times in seconds.
    #[arg(long, value_delimiter = ',')]
    pub snapshot_times: Option<Vec<f64>>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<SimulationConfig> {
        let mut file = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        if self.kb0.is_some() {
            file.kb0_m_s = self.kb0;
        }
        if let Some(cap) = &self.cap {
            file.kb_cap_m_s = Some(CapSetting::Keyword(cap.clone()));
        }
        if self.seed.is_some() {
            file.rng_seed = self.seed;
        }
        if self.dt.is_some() {
            file.time_step_s = self.dt;
        }
        if self.particles_weight.is_some() {
            file.particle_weight_mol = self.particles_weight;
        }
        if self.end_time.is_some() {
            file.end_time_s = self.end_time;
        }
        if self.snapshot_times.is_some() {
            file.snapshot_times_s = self.snapshot_times.clone();
        }
        let config = file.to_config()?;
        validate_config(&config).into_result()?;
        Ok(config)
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; 0 uses every core. Output does not depend on it.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Radial by vertical cell counts, e.g. `64x32`.
    #[arg(long, default_value = "64x32")]
    pub grid: String,
    /// Solver time step in seconds, shrunk to the stable limit if needed.
    #[arg(long, default_value_t = 60.0)]
    pub dt_pde: f64,
    /// Fail instead of shrinking an unstable time step.
    #[arg(long)]
    pub no_auto_shrink: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Tables of `time_s, area_m2` (or `time_s, radius_m` with --radius).
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    /// Second column holds radii instead of areas.
    #[arg(long)]
    pub radius: bool,
    /// Initial droplet height in metres.
    #[arg(long, conflicts_with = "volume")]
    pub h0: Option<f64>,
    /// Droplet volume in m^3; h0 is derived from the first area.
    #[arg(long)]
    pub volume: Option<f64>,
    /// Where to write the fit report (TOML). Printed to stdout otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Run directory under test.
    pub run: PathBuf,
    /// Reference run directory.
    pub reference: PathBuf,
    /// TOML file with `max_l1` and `max_consumed_rel_err`.
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
    /// Where to write the per-snapshot report (CSV).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn main_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    run(cli)
}

pub fn run(cli: Cli) -> i32 {
    let out_dir = match &cli.command {
        Command::Simulate(a) => Some(a.out.clone()),
        Command::Oracle(a) => Some(a.out.clone()),
        Command::Fit(_) | Command::Compare(_) => None,
    };
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(&a).map(|_| EXIT_OK),
        Command::Oracle(a) => cmd_oracle(&a).map(|_| EXIT_OK),
        Command::Fit(a) => cmd_fit(&a).map(|_| EXIT_OK),
        Command::Compare(a) => cmd_compare(&a).map(|r| r.exit_code),
    };
    match result {
        Ok(code) => code,
        Err(e) => report_error(&e, out_dir.as_deref()),
    }
}

pub fn exit_code_for(e: &Error) -> i32 {
    if e.is_input_error() {
        EXIT_INPUT
    } else {
        EXIT_RUNTIME
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidArgument(_) => "invalid_argument",
        Error::InvalidConfig(_) => "invalid_config",
        Error::TimeStepTooCoarse { .. } => "time_step_too_coarse",
        Error::ReflectionDiverged { .. } => "reflection_diverged",
        Error::Unstable { .. } => "unstable",
        Error::NegativeConcentration { .. } => "negative_concentration",
        Error::Mismatch(_) => "mismatch",
        Error::Parse(_) => "parse",
        Error::Io(_) => "io",
    }
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    code: i32,
    kind: &'a str,
    message: String,
}

fn report_error(e: &Error, out_dir: Option<&Path>) -> i32 {
    let record = ErrorRecord { code: exit_code_for(e), kind: error_kind(e), message: e.to_string() };
    eprintln!("soaksim-error code={} kind={} message={:?}", record.code, record.kind, record.message);
    if let Some(dir) = out_dir.filter(|d| d.is_dir()) {
        if let Ok(text) = toml::to_string(&record) {
            let _ = fs::write(dir.join("error.toml"), text);
        }
    }
    record.code
}

fn prepare_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let stale = dir.join("error.toml");
    if stale.exists() {
        fs::remove_file(stale)?;
    }
    Ok(())
}

fn resolved_cap(config: &SimulationConfig) -> f64 {
    config.consumption_schedule().cap_m_s.unwrap_or(f64::INFINITY)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<RunManifest> {
    let config = args.config.resolve()?;
    let started = Instant::now();
    let sim = Simulator::new(&config, args.workers)?;
    info!("simulating {} steps, about {:.0} particles", config.step_count(), config.expected_total_particles());
    let out = sim.run()?;
    let elapsed = started.elapsed().as_secs_f64();

    prepare_out_dir(&args.out)?;
    let w = config.species.particle_weight_mol;
    let mut files = Vec::new();
    let mut snapshots = Vec::new();
    for (k, snap) in out.snapshots.iter().enumerate() {
        let agar_file = format!("snapshot_{k:03}.csv");
        let consumed_file = format!("consumed_{k:03}.csv");
        files.push(write_output(
            &args.out,
            &agar_file,
            &GridCsv::from_counts(snap.time_s, &snap.grid, "particles_in_agar").to_text(),
        )?);
        files.push(write_output(
            &args.out,
            &consumed_file,
            &GridCsv::from_counts(snap.time_s, &snap.consumed_grid, "particles_consumed").to_text(),
        )?);
        snapshots.push(SnapshotRecord {
            time_s: snap.time_s,
            agar_file,
            consumed_file,
            consumed_total_mol: snap.consumed_grid.total() as f64 * w,
        });
    }
    files.push(write_output(&args.out, "timeseries.csv", &timeseries_csv(&out.series))?);
    files.push(write_output(&args.out, "ledger.csv", &ledger_csv(&out.ledger))?);

    let residual = (0..out.series.len())
        .map(|i| {
            let lhs = out.series.released_counts[i] as i128;
            let rhs = (out.series.in_agar_counts[i] + out.series.consumed_counts[i]) as i128;
            (lhs - rhs).unsigned_abs() as f64 * w
        })
        .fold(0.0, f64::max);
    let manifest = RunManifest {
        kind: "pbs".into(),
        version: format!("soaksim {}", env!("CARGO_PKG_VERSION")),
        seed: config.rng_seed,
        workers: args.workers,
        wall_clock_s: elapsed,
        resolved_cap_m_s: resolved_cap(&config),
        max_residual_mol: residual,
        grid: None,
        config: ConfigFile::from_config(&config),
        snapshots,
        files,
    };
    fs::write(args.out.join(RunManifest::FILE_NAME), manifest.to_toml()?)?;
    info!("wrote {} files to {} in {:.2} s", manifest.files.len(), args.out.display(), elapsed);
    Ok(manifest)
}

pub fn parse_grid_spec(text: &str) -> Result<(usize, usize)> {
    let bad = || Error::InvalidArgument(format!("grid must look like NRxNZ, got '{text}'"));
    let (a, b) = text.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

pub fn cmd_oracle(args: &OracleArgs) -> Result<RunManifest> {
    let config = args.config.resolve()?;
    let (n_r, n_z) = parse_grid_spec(&args.grid)?;
    let grid = Grid::new(&config.geometry, n_r, n_z, args.dt_pde)?;
    let started = Instant::now();
    let out = solve(&config, grid, SolveOptions { auto_shrink: !args.no_auto_shrink })?;
    let elapsed = started.elapsed().as_secs_f64();

    prepare_out_dir(&args.out)?;
    let (nx, ny) = config.histogram_bins;
    let half = config.geometry.plate_radius_m;
    let mut files = Vec::new();
    let mut snapshots = Vec::new();
    for (k, field) in out.fields.iter().enumerate() {
        let agar = project_rings(&field.column_density(&out.grid), &out.grid, &config.geometry, (nx, ny));
        let consumed = project_rings(&field.consumed_density(&out.grid), &out.grid, &config.geometry, (nx, ny));
        let agar_file = format!("snapshot_{k:03}.csv");
        let consumed_file = format!("consumed_{k:03}.csv");
        files.push(write_output(
            &args.out,
            &agar_file,
            &GridCsv::from_moles(field.time_s, &agar, nx, ny, half, "moles_in_agar").to_text(),
        )?);
        files.push(write_output(
            &args.out,
            &consumed_file,
            &GridCsv::from_moles(field.time_s, &consumed, nx, ny, half, "moles_consumed").to_text(),
        )?);
        files.push(write_output(&args.out, &format!("field_{k:03}.csv"), &field_csv(field, &out.grid))?);
        let idx = out
            .series
            .index_at(field.time_s)
            .ok_or_else(|| Error::Mismatch(format!("no solver totals at t = {}", field.time_s)))?;
        snapshots.push(SnapshotRecord {
            time_s: field.time_s,
            agar_file,
            consumed_file,
            consumed_total_mol: out.series.consumed_mol[idx],
        });
    }
    files.push(write_output(&args.out, "timeseries.csv", &oracle_series_csv(&out.series))?);

    let manifest = RunManifest {
        kind: "oracle".into(),
        version: format!("soaksim {}", env!("CARGO_PKG_VERSION")),
        seed: config.rng_seed,
        workers: 1,
        wall_clock_s: elapsed,
        resolved_cap_m_s: resolved_cap(&config),
        max_residual_mol: out.series.max_abs_residual(),
        grid: Some(GridRecord { n_r, n_z, dt_pde_s: out.grid.dt_pde, auto_shrink: !args.no_auto_shrink }),
        config: ConfigFile::from_config(&config),
        snapshots,
        files,
    };
    fs::write(args.out.join(RunManifest::FILE_NAME), manifest.to_toml()?)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitRecord {
    pub file: String,
    pub concentration_tag: String,
    pub h0_m: f64,
    pub soaking_rate_m_s: f64,
    pub two_point_rate_m_s: f64,
    pub log_slope_per_s: f64,
    pub intercept_area_m2: f64,
    pub r_squared: f64,
    pub flags: Vec<String>,
    /// `[t_s, ln_area_residual]` rows.
    pub residuals: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub series: Vec<FitRecord>,
}

fn fit_one(path: &Path, args: &FitArgs) -> Result<FitRecord> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    let rows = parse_two_column_table(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let tag = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let series = if args.radius { AreaSeries::from_radii(tag, rows)? } else { AreaSeries::new(tag, rows)? };
    let h0 = match (args.h0, args.volume) {
        (Some(h0), _) => h0,
        (None, volume) => {
            let series = series.clone().with_volume(volume.unwrap_or(DEFAULT_FIT_VOLUME_M3));
            series.derived_height().expect("volume set")?
        }
    };
    let fit: SoakingFit = fit_soaking_rate(&series, h0)?;
    Ok(FitRecord {
        file: path.display().to_string(),
        concentration_tag: series.concentration_tag.clone(),
        h0_m: h0,
        soaking_rate_m_s: fit.soaking_rate_m_s,
        two_point_rate_m_s: two_point_series(&series, h0)?,
        log_slope_per_s: fit.log_slope_per_s,
        intercept_area_m2: fit.intercept_area_m2,
        r_squared: fit.r_squared,
        flags: fit.flags.iter().map(|f| f.describe().to_owned()).collect(),
        residuals: series.samples.iter().zip(&fit.residuals).map(|(&(t, _), &r)| [t, r]).collect(),
    })
}

pub fn cmd_fit(args: &FitArgs) -> Result<FitReport> {
    let report = FitReport { series: args.files.iter().map(|p| fit_one(p, args)).collect::<Result<_>>()? };
    let text = toml::to_string(&report).map_err(|e| Error::Parse(e.to_string()))?;
    match &args.out {
        Some(path) => fs::write(path, &text)?,
        None => print!("{text}"),
    }
    for r in &report.series {
        let flags = if r.flags.is_empty() { String::new() } else { format!(" [{}]", r.flags.join("; ")) };
        eprintln!("{}: K = {} m/s (two-point {}), R^2 = {:.6}{flags}", r.concentration_tag, fmt_real(r.soaking_rate_m_s), fmt_real(r.two_point_rate_m_s), r.r_squared);
    }
    Ok(report)
}

fn load_thresholds(path: Option<&Path>) -> Result<Thresholds> {
    #[derive(serde::Deserialize)]
    #[serde(deny_unknown_fields)]
    struct File {
        max_l1: Option<f64>,
        max_consumed_rel_err: Option<f64>,
    }
    let mut t = Thresholds::default();
    if let Some(path) = path {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
        let f: File = toml::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        t.max_l1 = f.max_l1.unwrap_or(t.max_l1);
        t.max_consumed_rel_err = f.max_consumed_rel_err.unwrap_or(t.max_consumed_rel_err);
    }
    Ok(t)
}

/// Describes the first physical setting on which two runs disagree.
pub fn physical_mismatch(a: &RunManifest, b: &RunManifest) -> Result<Option<String>> {
    let (ca, cb) = (a.config.to_config()?, b.config.to_config()?);
    let close = |x: f64, y: f64| x == y || (x - y).abs() <= 1e-12 * x.abs().max(y.abs());
    let checks: [(&str, f64, f64); 12] = [
        ("plate_radius_m", ca.geometry.plate_radius_m, cb.geometry.plate_radius_m),
        ("agar_depth_m", ca.geometry.agar_depth_m, cb.geometry.agar_depth_m),
        ("diffusion_coeff_m2_s", ca.species.diffusion_coeff_m2_s, cb.species.diffusion_coeff_m2_s),
        ("droplet_concentration", ca.species.droplet_concentration_mol_m3, cb.species.droplet_concentration_mol_m3),
        ("droplet_volume_m3", ca.droplet.initial_volume_m3, cb.droplet.initial_volume_m3),
        ("droplet_radius_m", ca.droplet.initial_radius_m, cb.droplet.initial_radius_m),
        ("droplet_center_m[0]", ca.droplet.center[0], cb.droplet.center[0]),
        ("droplet_center_m[1]", ca.droplet.center[1], cb.droplet.center[1]),
        ("soaking_rate_m_s", ca.soaking_rate_m_s, cb.soaking_rate_m_s),
        ("kb0_m_s", ca.growth.initial_consumption_rate_m_s, cb.growth.initial_consumption_rate_m_s),
        ("doubling_period_s", ca.growth.doubling_period_s, cb.growth.doubling_period_s),
        ("end_time_s", ca.end_time_s, cb.end_time_s),
    ];
    for (name, x, y) in checks {
        if !close(x, y) {
            return Ok(Some(format!("{name}: {x} vs {y}")));
        }
    }
    if !close(a.resolved_cap_m_s, b.resolved_cap_m_s) {
        return Ok(Some(format!("resolved consumption cap: {} vs {}", a.resolved_cap_m_s, b.resolved_cap_m_s)));
    }
    if ca.histogram_bins != cb.histogram_bins {
        return Ok(Some(format!("histogram_bins: {:?} vs {:?}", ca.histogram_bins, cb.histogram_bins)));
    }
    if ca.snapshot_times_s.len() != cb.snapshot_times_s.len()
        || ca.snapshot_times_s.iter().zip(&cb.snapshot_times_s).any(|(x, y)| !close(*x, *y))
    {
        return Ok(Some("snapshot_times_s differ".into()));
    }
    Ok(None)
}

/// Loads a run directory as moles per bin at each snapshot.
pub fn load_profiles(dir: &Path) -> Result<(RunManifest, ProfileSet)> {
    let manifest = RunManifest::load(dir)?;
    manifest.verify(dir)?;
    let config = manifest.config.to_config()?;
    let scale = |unit: &str| -> Result<f64> {
        match unit {
            "count" => Ok(config.species.particle_weight_mol),
            "mol" => Ok(1.0),
            other => Err(Error::Parse(format!("unknown snapshot unit '{other}'"))),
        }
    };
    let mut snapshots = Vec::with_capacity(manifest.snapshots.len());
    for rec in &manifest.snapshots {
        let text = fs::read_to_string(dir.join(&rec.agar_file))?;
        let grid = GridCsv::parse(&text)?;
        let s = scale(&grid.unit)?;
        snapshots.push(ProfileSnapshot {
            time_s: grid.time_s,
            nx: grid.nx,
            ny: grid.ny,
            half_width_m: grid.half_width_m,
            agar_mol: grid.values.iter().map(|&v| if v.is_nan() { 0.0 } else { v * s }).collect(),
            consumed_mol: rec.consumed_total_mol,
        });
    }
    let set = ProfileSet { snapshots, residual_mol: manifest.max_residual_mol };
    Ok((manifest, set))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOutcome {
    pub report: CompareReport,
    pub thresholds: Thresholds,
    pub exit_code: i32,
}

pub fn compare_report_csv(report: &CompareReport) -> String {
    let mut s = String::from("time_s,l1,consumed_run_mol,consumed_reference_mol,consumed_rel_err\n");
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            fmt_real(r.time_s),
            fmt_real(r.l1),
            fmt_real(r.consumed_a_mol),
            fmt_real(r.consumed_b_mol),
            fmt_real(r.consumed_rel_err)
        );
    }
    s
}

pub fn cmd_compare(args: &CompareArgs) -> Result<CompareOutcome> {
    let thresholds = load_thresholds(args.thresholds.as_deref())?;
    let (ma, a) = load_profiles(&args.run)?;
    let (mb, b) = load_profiles(&args.reference)?;
    if let Some(what) = physical_mismatch(&ma, &mb)? {
        return Err(Error::Mismatch(format!("runs use different settings: {what}")));
    }
    let report = compare_profiles(&a, &b)?;
    let text = compare_report_csv(&report);
    match &args.out {
        Some(path) => fs::write(path, &text)?,
        None => print!("{text}"),
    }
    let pass = report.passes(&thresholds);
    eprintln!(
        "max L1 {:.4} (limit {}), final consumed error {:.4} (limit {}): {}",
        report.max_l1(),
        thresholds.max_l1,
        report.final_consumed_rel_err(),
        thresholds.max_consumed_rel_err,
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(CompareOutcome { report, thresholds, exit_code: if pass { EXIT_OK } else { EXIT_THRESHOLD } })
}

/// Inventory entries whose checksum no longer matches, for diagnostics.
pub fn stale_files(dir: &Path, files: &[FileRecord]) -> Vec<String> {
    files
        .iter()
        .filter(|f| {
            fs::read(dir.join(&f.name)).map(|b| crate::io::sha256_hex(&b) != f.sha256).unwrap_or(true)
        })
        .map(|f| f.name.clone())
        .collect()
}
