//! On-disk formats: the key/value config file, snapshot grids, time series,
//! consumption ledgers, run manifests and fit reports.
//!
//! Every real number is written as `{:.9e}` so output does not depend on the
//! locale and re-parses to the emitted precision. Counts are written as plain
//! integers.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{
    concentration_to_si, ConcentrationUnit, DropletSpec, GrowthParams, PlateGeometry, SimulationConfig,
    SpeciesParams,
};
use crate::pbs::{ConsumptionEvent, HistogramGrid, TimeSeries};
use crate::pde::{Field, Grid, OracleSeries};

/// Formats a real number the way every output file does.
pub fn fmt_real(x: f64) -> String {
    if x.is_nan() {
        "nan".to_owned()
    } else {
        format!("{x:.9e}")
    }
}

/// `"0.1 M"`, `"100 mol/m3"`.
pub fn parse_concentration(text: &str) -> Result<f64> {
    let text = text.trim();
    let split = text
        .find(|c: char| c.is_whitespace() || c.is_alphabetic() && c != 'e' && c != 'E')
        .ok_or_else(|| Error::Parse(format!("concentration '{text}' needs a unit tag (M or mol/m3)")))?;
    let (num, unit) = text.split_at(split);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad concentration value '{num}'")))?;
    let unit = match unit.trim() {
        "M" | "molar" => ConcentrationUnit::Molar,
        "mol/m3" | "mol/m^3" | "mol_per_m3" | "moles/m^3" => ConcentrationUnit::MolPerM3,
        other => return Err(Error::Parse(format!("unknown concentration unit '{other}'"))),
    };
    concentration_to_si(value, unit).map_err(|e| Error::Parse(e.to_string()))
}

/// `auto`, `inf`, or a rate in m/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CapSetting {
    Rate(f64),
    Keyword(String),
}

impl CapSetting {
    fn resolve(&self) -> Result<Option<f64>> {
        match self {
            CapSetting::Rate(r) => Ok(Some(*r)),
            CapSetting::Keyword(k) => match k.trim() {
                "auto" => Ok(None),
                "inf" | "infinity" | "none" => Ok(Some(f64::INFINITY)),
                other => other
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|_| Error::Parse(format!("kb_cap_m_s must be a number, 'auto' or 'inf', got '{other}'"))),
            },
        }
    }

    pub fn from_option(cap: Option<f64>) -> Self {
        match cap {
            None => CapSetting::Keyword("auto".into()),
            Some(c) if c.is_infinite() => CapSetting::Keyword("inf".into()),
            Some(c) => CapSetting::Rate(c),
        }
    }
}

/// Flat key/value form of [`SimulationConfig`]. Missing keys take the
/// reference defaults, except `kb0_m_s`, which has none.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub plate_radius_m: Option<f64>,
    pub agar_depth_m: Option<f64>,
    pub diffusion_coeff_m2_s: Option<f64>,
    pub droplet_concentration: Option<String>,
    pub particle_weight_mol: Option<f64>,
    pub droplet_volume_m3: Option<f64>,
    pub droplet_radius_m: Option<f64>,
    pub droplet_center_m: Option<[f64; 2]>,
    pub soaking_rate_m_s: Option<f64>,
    pub kb0_m_s: Option<f64>,
    pub doubling_period_s: Option<f64>,
    pub kb_cap_m_s: Option<CapSetting>,
    pub time_step_s: Option<f64>,
    pub end_time_s: Option<f64>,
    pub snapshot_times_s: Option<Vec<f64>>,
    pub histogram_bins: Option<[usize; 2]>,
    pub rng_seed: Option<u64>,
    pub timeseries_stride: Option<usize>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e| Error::Parse(format!("{e}")))?;
        // a run manifest embeds its resolved config under [config]
        let table = match table.get("config") {
            Some(toml::Value::Table(inner)) => inner.clone(),
            _ => table,
        };
        table.try_into().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_config(&self) -> Result<SimulationConfig> {
        let kb0 = self
            .kb0_m_s
            .ok_or_else(|| Error::InvalidArgument("kb0_m_s is required (config key or --kb0)".into()))?;
        let r = SimulationConfig::reference(kb0);
        let end_time_s = self.end_time_s.unwrap_or(r.end_time_s);
        let snapshot_times_s = match &self.snapshot_times_s {
            Some(ts) => ts.clone(),
            None => r.snapshot_times_s.iter().copied().filter(|&t| t <= end_time_s).collect(),
        };
        let droplet_concentration_mol_m3 = match &self.droplet_concentration {
            Some(text) => parse_concentration(text)?,
            None => r.species.droplet_concentration_mol_m3,
        };
        let max_consumption_rate_m_s = match &self.kb_cap_m_s {
            Some(cap) => cap.resolve()?,
            None => None,
        };
        let bins = self.histogram_bins.unwrap_or([r.histogram_bins.0, r.histogram_bins.1]);
        Ok(SimulationConfig {
            geometry: PlateGeometry {
                plate_radius_m: self.plate_radius_m.unwrap_or(r.geometry.plate_radius_m),
                agar_depth_m: self.agar_depth_m.unwrap_or(r.geometry.agar_depth_m),
            },
            species: SpeciesParams {
                diffusion_coeff_m2_s: self.diffusion_coeff_m2_s.unwrap_or(r.species.diffusion_coeff_m2_s),
                droplet_concentration_mol_m3,
                particle_weight_mol: self.particle_weight_mol.unwrap_or(r.species.particle_weight_mol),
            },
            droplet: DropletSpec {
                initial_volume_m3: self.droplet_volume_m3.unwrap_or(r.droplet.initial_volume_m3),
                initial_radius_m: self.droplet_radius_m.unwrap_or(r.droplet.initial_radius_m),
                center: self.droplet_center_m.unwrap_or(r.droplet.center),
            },
            growth: GrowthParams {
                initial_consumption_rate_m_s: kb0,
                doubling_period_s: self.doubling_period_s.unwrap_or(r.growth.doubling_period_s),
                max_consumption_rate_m_s,
            },
            soaking_rate_m_s: self.soaking_rate_m_s.unwrap_or(r.soaking_rate_m_s),
            time_step_s: self.time_step_s.unwrap_or(r.time_step_s),
            end_time_s,
            snapshot_times_s,
            histogram_bins: (bins[0], bins[1]),
            rng_seed: self.rng_seed.unwrap_or(r.rng_seed),
            timeseries_stride: self.timeseries_stride.unwrap_or(r.timeseries_stride),
        })
    }

    /// Every field spelled out; parsing the result gives back `config`.
    pub fn from_config(config: &SimulationConfig) -> Self {
        Self {
            plate_radius_m: Some(config.geometry.plate_radius_m),
            agar_depth_m: Some(config.geometry.agar_depth_m),
            diffusion_coeff_m2_s: Some(config.species.diffusion_coeff_m2_s),
            droplet_concentration: Some(format!("{:?} mol/m3", config.species.droplet_concentration_mol_m3)),
            particle_weight_mol: Some(config.species.particle_weight_mol),
            droplet_volume_m3: Some(config.droplet.initial_volume_m3),
            droplet_radius_m: Some(config.droplet.initial_radius_m),
            droplet_center_m: Some(config.droplet.center),
            soaking_rate_m_s: Some(config.soaking_rate_m_s),
            kb0_m_s: Some(config.growth.initial_consumption_rate_m_s),
            doubling_period_s: Some(config.growth.doubling_period_s),
            kb_cap_m_s: Some(CapSetting::from_option(config.growth.max_consumption_rate_m_s)),
            time_step_s: Some(config.time_step_s),
            end_time_s: Some(config.end_time_s),
            snapshot_times_s: Some(config.snapshot_times_s.clone()),
            histogram_bins: Some([config.histogram_bins.0, config.histogram_bins.1]),
            rng_seed: Some(config.rng_seed),
            timeseries_stride: Some(config.timeseries_stride),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Header and values of one snapshot grid file.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCsv {
    pub time_s: f64,
    pub nx: usize,
    pub ny: usize,
    pub half_width_m: f64,
    pub quantity: String,
    pub unit: String,
    /// Row-major values; `NaN` marks bins outside the plate.
    pub values: Vec<f64>,
}

impl GridCsv {
    pub fn from_counts(time_s: f64, grid: &HistogramGrid, quantity: &str) -> Self {
        Self {
            time_s,
            nx: grid.nx,
            ny: grid.ny,
            half_width_m: grid.half_width_m,
            quantity: quantity.to_owned(),
            unit: "count".to_owned(),
            values: grid
                .counts
                .iter()
                .zip(&grid.outside)
                .map(|(&c, &out)| if out { f64::NAN } else { c as f64 })
                .collect(),
        }
    }

    pub fn from_moles(time_s: f64, moles: &[f64], nx: usize, ny: usize, half_width_m: f64, quantity: &str) -> Self {
        let mask = HistogramGrid::empty(nx, ny, half_width_m);
        Self {
            time_s,
            nx,
            ny,
            half_width_m,
            quantity: quantity.to_owned(),
            unit: "mol".to_owned(),
            values: moles
                .iter()
                .zip(&mask.outside)
                .map(|(&m, &out)| if out { f64::NAN } else { m })
                .collect(),
        }
    }

    pub fn total(&self) -> f64 {
        self.values.iter().filter(|v| !v.is_nan()).sum()
    }

    pub fn to_text(&self) -> String {
        let h = self.half_width_m;
        let mut s = String::new();
        let _ = writeln!(s, "# time_s={}", fmt_real(self.time_s));
        let _ = writeln!(
            s,
            "# grid nx={} ny={} x_min_m={} x_max_m={} y_min_m={} y_max_m={}",
            self.nx,
            self.ny,
            fmt_real(-h),
            fmt_real(h),
            fmt_real(-h),
            fmt_real(h)
        );
        let _ = writeln!(s, "# quantity={} unit={} outside=nan", self.quantity, self.unit);
        let count = self.unit == "count";
        for row in self.values.chunks(self.nx) {
            let cells: Vec<String> = row
                .iter()
                .map(|&v| {
                    if v.is_nan() {
                        "nan".to_owned()
                    } else if count {
                        format!("{}", v as u64)
                    } else {
                        fmt_real(v)
                    }
                })
                .collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let bad = |what: &str| Error::Parse(format!("snapshot file: {what}"));
        let l1 = lines.next().ok_or_else(|| bad("empty"))?;
        let time_s = header_value(l1, "time_s").ok_or_else(|| bad("missing time_s"))?.parse().map_err(|_| bad("time_s"))?;
        let l2 = lines.next().ok_or_else(|| bad("missing grid line"))?;
        let nx: usize = header_value(l2, "nx").and_then(|v| v.parse().ok()).ok_or_else(|| bad("nx"))?;
        let ny: usize = header_value(l2, "ny").and_then(|v| v.parse().ok()).ok_or_else(|| bad("ny"))?;
        let x_max: f64 = header_value(l2, "x_max_m").and_then(|v| v.parse().ok()).ok_or_else(|| bad("x_max_m"))?;
        let l3 = lines.next().ok_or_else(|| bad("missing quantity line"))?;
        let quantity = header_value(l3, "quantity").ok_or_else(|| bad("quantity"))?.to_owned();
        let unit = header_value(l3, "unit").ok_or_else(|| bad("unit"))?.to_owned();
        let mut values = Vec::with_capacity(nx * ny);
        for (row, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            for cell in line.split(',') {
                let v = if cell.trim() == "nan" {
                    f64::NAN
                } else {
                    cell.trim().parse().map_err(|_| bad(&format!("row {} value '{cell}'", row + 1)))?
                };
                values.push(v);
            }
        }
        if values.len() != nx * ny {
            return Err(bad(&format!("expected {} values, found {}", nx * ny, values.len())));
        }
        Ok(Self { time_s, nx, ny, half_width_m: x_max, quantity, unit, values })
    }
}

fn header_value<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    line.trim_start_matches('#')
        .split_whitespace()
        .find_map(|tok| tok.strip_prefix(key).and_then(|rest| rest.strip_prefix('=')))
}

pub fn timeseries_csv(series: &TimeSeries) -> String {
    let mut s = String::from("time_s,released,in_agar,consumed\n");
    for i in 0..series.len() {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            fmt_real(series.times_s[i]),
            series.released_counts[i],
            series.in_agar_counts[i],
            series.consumed_counts[i]
        );
    }
    s
}

pub fn parse_timeseries_csv(text: &str) -> Result<TimeSeries> {
    let mut out = TimeSeries::default();
    for (row, line) in text.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let bad = || Error::Parse(format!("timeseries row {}", row + 1));
        if cols.len() != 4 {
            return Err(bad());
        }
        out.times_s.push(cols[0].parse().map_err(|_| bad())?);
        out.released_counts.push(cols[1].parse().map_err(|_| bad())?);
        out.in_agar_counts.push(cols[2].parse().map_err(|_| bad())?);
        out.consumed_counts.push(cols[3].parse().map_err(|_| bad())?);
    }
    Ok(out)
}

pub fn oracle_series_csv(series: &OracleSeries) -> String {
    let mut s = String::from("time_s,released_mol,in_agar_mol,consumed_mol,residual_mol\n");
    for i in 0..series.times_s.len() {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            fmt_real(series.times_s[i]),
            fmt_real(series.released_mol[i]),
            fmt_real(series.in_agar_mol[i]),
            fmt_real(series.consumed_mol[i]),
            fmt_real(series.residual_mol[i])
        );
    }
    s
}

pub fn ledger_csv(ledger: &[ConsumptionEvent]) -> String {
    let mut s = String::with_capacity(48 * ledger.len() + 16);
    s.push_str("time_s,x_m,y_m\n");
    for e in ledger {
        let _ = writeln!(s, "{},{},{}", fmt_real(e.time_s), fmt_real(e.x_m), fmt_real(e.y_m));
    }
    s
}

/// Raw `(r, z)` field: one row per ring, one column per depth cell.
pub fn field_csv(field: &Field, grid: &Grid) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# time_s={}", fmt_real(field.time_s));
    let _ = writeln!(s, "# grid n_r={} n_z={} dr_m={} dz_m={}", grid.n_r, grid.n_z, fmt_real(grid.dr), fmt_real(grid.dz));
    let _ = writeln!(s, "# quantity=concentration unit=mol/m3 rows=ring columns=depth");
    for row in field.values.chunks(grid.n_z) {
        let cells: Vec<String> = row.iter().map(|&v| fmt_real(v)).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `contents` to `dir/name` and returns its inventory record.
pub fn write_output(dir: &Path, name: &str, contents: &str) -> Result<FileRecord> {
    let file = fs::File::create(dir.join(name))?;
    let mut w = BufWriter::new(file);
    w.write_all(contents.as_bytes())?;
    w.flush()?;
    Ok(FileRecord { name: name.to_owned(), sha256: sha256_hex(contents.as_bytes()) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub time_s: f64,
    pub agar_file: String,
    pub consumed_file: String,
    pub consumed_total_mol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub n_r: usize,
    pub n_z: usize,
    pub dt_pde_s: f64,
    pub auto_shrink: bool,
}

/// Everything needed to audit and re-run one CLI invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// `pbs` or `oracle`.
    pub kind: String,
    pub version: String,
    pub seed: u64,
    pub workers: usize,
    pub wall_clock_s: f64,
    pub resolved_cap_m_s: f64,
    pub max_residual_mol: f64,
    pub grid: Option<GridRecord>,
    pub config: ConfigFile,
    pub snapshots: Vec<SnapshotRecord>,
    pub files: Vec<FileRecord>,
}

impl RunManifest {
    pub const FILE_NAME: &'static str = "manifest.toml";

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(Self::FILE_NAME);
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    /// Checks that every listed file exists with its recorded checksum.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for f in &self.files {
            let bytes = fs::read(dir.join(&f.name))
                .map_err(|e| Error::Mismatch(format!("{} listed in manifest: {e}", f.name)))?;
            if sha256_hex(&bytes) != f.sha256 {
                return Err(Error::Mismatch(format!("checksum of {} does not match the manifest", f.name)));
            }
        }
        Ok(())
    }
}

/// Reads a delimited `(time_s, value)` table. Lines starting with `#` are
/// comments, a non-numeric first line is a header, and commas, semicolons,
/// tabs or spaces separate columns.
pub fn parse_two_column_table(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut rows = Vec::new();
    let mut seen_data = false;
    for (n, line) in text.lines().enumerate() {
        let row = n + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line
            .split(|c: char| c == ',' || c == ';' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        let parsed: Option<Vec<f64>> = cols.iter().map(|c| c.parse().ok()).collect();
        match parsed {
            Some(v) if v.len() == 2 => {
                if let Some(&(prev, _)) = rows.last() {
                    if v[0] <= prev {
                        return Err(Error::Parse(format!("row {row}: time {} is not after {prev}", v[0])));
                    }
                }
                if !(v[0].is_finite() && v[1].is_finite() && v[0] >= 0.0 && v[1] > 0.0) {
                    return Err(Error::Parse(format!("row {row}: times must be >= 0 and values > 0")));
                }
                rows.push((v[0], v[1]));
                seen_data = true;
            }
            None if !seen_data && rows.is_empty() => {} // header
            _ => return Err(Error::Parse(format!("row {row}: expected two numeric columns"))),
        }
    }
    if rows.len() < 2 {
        return Err(Error::Parse(format!("need at least 2 data rows, found {}", rows.len())));
    }
    Ok(rows)
}
