//! Cross-validation of the particle engine against the PDE oracle.
//!
//! Both engines are reduced to the same representation: moles per `(x, y)`
//! bin integrated over depth, plus total consumed moles, at each snapshot
//! time. The oracle's axisymmetric field is projected onto the bins by
//! sub-sampling each bin.

use super::{Grid, OracleOutput};
use crate::error::{Error, Result};
use crate::model::PlateGeometry;
use crate::pbs::{HistogramGrid, Snapshot, TimeSeries};

const SUBSAMPLES: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSnapshot {
    pub time_s: f64,
    pub nx: usize,
    pub ny: usize,
    pub half_width_m: f64,
    /// Moles per bin, row-major with `y` as the row index.
    pub agar_mol: Vec<f64>,
    pub consumed_mol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSet {
    pub snapshots: Vec<ProfileSnapshot>,
    /// Largest absolute conservation residual of the engine, in moles.
    pub residual_mol: f64,
}

impl ProfileSet {
    /// Particle counts scaled by the particle weight `w`.
    pub fn from_pbs(snapshots: &[Snapshot], series: &TimeSeries, w: f64) -> Self {
        let residual = (0..series.len())
            .map(|i| {
                let lhs = series.released_counts[i] as i128;
                let rhs = series.in_agar_counts[i] as i128 + series.consumed_counts[i] as i128;
                (lhs - rhs).unsigned_abs() as f64 * w
            })
            .fold(0.0, f64::max);
        Self {
            snapshots: snapshots.iter().map(|s| Self::grid_to_profile(s.time_s, &s.grid, &s.consumed_grid, w)).collect(),
            residual_mol: residual,
        }
    }

    pub(crate) fn grid_to_profile(time_s: f64, grid: &HistogramGrid, consumed: &HistogramGrid, w: f64) -> ProfileSnapshot {
        ProfileSnapshot {
            time_s,
            nx: grid.nx,
            ny: grid.ny,
            half_width_m: grid.half_width_m,
            agar_mol: grid.counts.iter().map(|&c| c as f64 * w).collect(),
            consumed_mol: consumed.total() as f64 * w,
        }
    }

    /// Projects the oracle fields onto an `nx` by `ny` grid.
    pub fn from_oracle(out: &OracleOutput, geometry: &PlateGeometry, bins: (usize, usize)) -> Result<Self> {
        let snapshots = out
            .fields
            .iter()
            .map(|f| {
                let idx = out
                    .series
                    .index_at(f.time_s)
                    .ok_or_else(|| Error::Mismatch(format!("no oracle totals at t = {}", f.time_s)))?;
                Ok(ProfileSnapshot {
                    time_s: f.time_s,
                    nx: bins.0,
                    ny: bins.1,
                    half_width_m: geometry.plate_radius_m,
                    agar_mol: project_rings(&f.column_density(&out.grid), &out.grid, geometry, bins),
                    consumed_mol: out.series.consumed_mol[idx],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { snapshots, residual_mol: out.series.max_abs_residual() })
    }
}

/// Integrates a ring-wise column density over each `(x, y)` bin.
pub fn project_rings(sigma: &[f64], grid: &Grid, geometry: &PlateGeometry, bins: (usize, usize)) -> Vec<f64> {
    let (nx, ny) = bins;
    let half = geometry.plate_radius_m;
    let rp2 = half * half;
    let bx = 2.0 * half / nx as f64;
    let by = 2.0 * half / ny as f64;
    let sub_area = bx * by / (SUBSAMPLES * SUBSAMPLES) as f64;
    let mut out = vec![0.0; nx * ny];
    for iy in 0..ny {
        for ix in 0..nx {
            let mut acc = 0.0;
            for sy in 0..SUBSAMPLES {
                let y = -half + (iy as f64 + (sy as f64 + 0.5) / SUBSAMPLES as f64) * by;
                for sx in 0..SUBSAMPLES {
                    let x = -half + (ix as f64 + (sx as f64 + 0.5) / SUBSAMPLES as f64) * bx;
                    let r2 = x * x + y * y;
                    if r2 <= rp2 {
                        let ring = ((r2.sqrt() / grid.dr) as usize).min(grid.n_r - 1);
                        acc += sigma[ring];
                    }
                }
            }
            out[iy * nx + ix] = acc * sub_area;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// Bound on the normalised L1 profile error at every snapshot.
    pub max_l1: f64,
    /// Bound on the relative error of total consumption at the last snapshot.
    pub max_consumed_rel_err: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { max_l1: 0.05, max_consumed_rel_err: 0.10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub time_s: f64,
    /// `sum |a - b| / sum |b|` over all bins.
    pub l1: f64,
    pub consumed_a_mol: f64,
    pub consumed_b_mol: f64,
    pub consumed_rel_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
    pub residual_a_mol: f64,
    pub residual_b_mol: f64,
}

impl CompareReport {
    pub fn max_l1(&self) -> f64 {
        self.rows.iter().map(|r| r.l1).fold(0.0, f64::max)
    }

    pub fn final_consumed_rel_err(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.consumed_rel_err)
    }

    pub fn passes(&self, t: &Thresholds) -> bool {
        self.max_l1() <= t.max_l1 && self.final_consumed_rel_err() <= t.max_consumed_rel_err
    }
}

fn relative(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else if b == 0.0 {
        f64::INFINITY
    } else {
        ((a - b) / b).abs()
    }
}

/// Compares profile set `a` against reference `b`, snapshot by snapshot.
pub fn compare_profiles(a: &ProfileSet, b: &ProfileSet) -> Result<CompareReport> {
    if a.snapshots.len() != b.snapshots.len() {
        return Err(Error::Mismatch(format!(
            "{} snapshots vs {} snapshots",
            a.snapshots.len(),
            b.snapshots.len()
        )));
    }
    let mut rows = Vec::with_capacity(a.snapshots.len());
    for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
        if (sa.time_s - sb.time_s).abs() > 1e-9 * sb.time_s.abs().max(1.0) {
            return Err(Error::Mismatch(format!("snapshot times {} and {} differ", sa.time_s, sb.time_s)));
        }
        if sa.nx != sb.nx || sa.ny != sb.ny || (sa.half_width_m - sb.half_width_m).abs() > 1e-12 * sb.half_width_m {
            return Err(Error::Mismatch("snapshot binnings differ".into()));
        }
        let diff: f64 = sa.agar_mol.iter().zip(&sb.agar_mol).map(|(x, y)| (x - y).abs()).sum();
        let norm: f64 = sb.agar_mol.iter().map(|y| y.abs()).sum();
        let l1 = if diff == 0.0 { 0.0 } else if norm == 0.0 { f64::INFINITY } else { diff / norm };
        rows.push(CompareRow {
            time_s: sb.time_s,
            l1,
            consumed_a_mol: sa.consumed_mol,
            consumed_b_mol: sb.consumed_mol,
            consumed_rel_err: relative(sa.consumed_mol, sb.consumed_mol),
        });
    }
    Ok(CompareReport { rows, residual_a_mol: a.residual_mol, residual_b_mol: b.residual_mol })
}

/// Compares a particle run (snapshots and totals, weight `w`) against the
/// oracle solution of the same configuration.
pub fn compare_to_pbs(
    oracle: &OracleOutput,
    geometry: &PlateGeometry,
    snapshots: &[Snapshot],
    series: &TimeSeries,
    w: f64,
) -> Result<CompareReport> {
    let bins = snapshots
        .first()
        .map(|s| (s.grid.nx, s.grid.ny))
        .ok_or_else(|| Error::Mismatch("particle run has no snapshots".into()))?;
    let reference = ProfileSet::from_oracle(oracle, geometry, bins)?;
    compare_profiles(&ProfileSet::from_pbs(snapshots, series, w), &reference)
}
