//! Deterministic axisymmetric finite-volume solver for the same model.
//!
//! Cells are annular rings `[r_i, r_i+1] x [z_j, z_j+1]`. Mass moves only
//! through faces, so the scheme conserves mass to round-off:
//!
//! * radial and vertical faces carry Fickian fluxes `D dc/dn`;
//! * the axis, the side wall and the plate bottom carry no flux;
//! * the top face of each surface cell receives the droplet source (the
//!   exact amount the shrinking footprint delivers over the ring during the
//!   step) and loses `K_B(t) c A` to the bacterial lawn.
//!
//! The explicit stepper is positivity-preserving when
//! `dt (2D/dr² + 2D/dz² + K_max/dz) <= 1`.

mod compare;

pub use compare::{compare_profiles, compare_to_pbs, project_rings, CompareReport, CompareRow, ProfileSet, ProfileSnapshot, Thresholds};

use std::f64::consts::PI;

use log::info;

use crate::error::{Error, Result};
use crate::droplet::SoakingModel;
use crate::model::{validate_config, PlateGeometry, SimulationConfig};

pub const MIN_CELLS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub n_r: usize,
    pub n_z: usize,
    pub dr: f64,
    pub dz: f64,
    pub dt_pde: f64,
}

impl Grid {
    pub fn new(geometry: &PlateGeometry, n_r: usize, n_z: usize, dt_pde: f64) -> Result<Self> {
        if n_r < MIN_CELLS || n_z < MIN_CELLS {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least {MIN_CELLS} cells per axis, got {n_r}x{n_z}"
            )));
        }
        if !(dt_pde > 0.0 && dt_pde.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt_pde must be > 0, got {dt_pde}")));
        }
        Ok(Self {
            n_r,
            n_z,
            dr: geometry.plate_radius_m / n_r as f64,
            dz: geometry.agar_depth_m / n_z as f64,
            dt_pde,
        })
    }

    /// Largest positivity-preserving step for diffusivity `d` and surface
    /// rate `k_max`.
    pub fn stable_dt(&self, d: f64, k_max: f64) -> f64 {
        1.0 / (2.0 * d / (self.dr * self.dr) + 2.0 * d / (self.dz * self.dz) + k_max / self.dz)
    }

    pub fn ring_area(&self, i: usize) -> f64 {
        let (a, b) = (i as f64 * self.dr, (i + 1) as f64 * self.dr);
        PI * (b * b - a * a)
    }

    pub fn cell_volume(&self, i: usize) -> f64 {
        self.ring_area(i) * self.dz
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n_z + j
    }
}

/// Cell-centre concentrations in mol/m³, stored ring-major
/// (`values[i * n_z + j]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub time_s: f64,
    pub values: Vec<f64>,
    /// Moles taken up by the lawn over each ring since `t = 0`.
    pub consumed_by_ring_mol: Vec<f64>,
}

impl Field {
    /// Moles in ring `i`, integrated over depth.
    pub fn ring_mass(&self, grid: &Grid, i: usize) -> f64 {
        let v = grid.cell_volume(i);
        self.values[i * grid.n_z..(i + 1) * grid.n_z].iter().sum::<f64>() * v
    }

    pub fn total_mass(&self, grid: &Grid) -> f64 {
        (0..grid.n_r).map(|i| self.ring_mass(grid, i)).sum()
    }

    /// Depth-integrated density (mol/m²) per ring.
    pub fn column_density(&self, grid: &Grid) -> Vec<f64> {
        (0..grid.n_r).map(|i| self.ring_mass(grid, i) / grid.ring_area(i)).collect()
    }

    /// Consumed moles per unit surface area, per ring.
    pub fn consumed_density(&self, grid: &Grid) -> Vec<f64> {
        self.consumed_by_ring_mol.iter().enumerate().map(|(i, m)| m / grid.ring_area(i)).collect()
    }
}

/// Scalar totals after every solver step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OracleSeries {
    pub times_s: Vec<f64>,
    pub released_mol: Vec<f64>,
    pub in_agar_mol: Vec<f64>,
    pub consumed_mol: Vec<f64>,
    /// `released - consumed - in_agar`.
    pub residual_mol: Vec<f64>,
}

impl OracleSeries {
    fn push(&mut self, t: f64, released: f64, in_agar: f64, consumed: f64) {
        self.times_s.push(t);
        self.released_mol.push(released);
        self.in_agar_mol.push(in_agar);
        self.consumed_mol.push(consumed);
        self.residual_mol.push(released - consumed - in_agar);
    }

    pub fn max_abs_residual(&self) -> f64 {
        self.residual_mol.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    /// Index of the entry recorded at `t`, within a relative tolerance.
    pub fn index_at(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * t.abs().max(1.0);
        self.times_s.iter().position(|&s| (s - t).abs() <= tol)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutput {
    /// The grid actually used, including any shrunken time step.
    pub grid: Grid,
    pub fields: Vec<Field>,
    pub series: OracleSeries,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Shrink `dt_pde` to the stability limit instead of failing.
    pub auto_shrink: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { auto_shrink: true }
    }
}

/// Moles the droplet delivers into ring `[a, b]` over `[t0, t1]`.
///
/// The footprint releases `C K` per unit area while it covers a point, and
/// its squared radius decays as `r0² exp(-λ t)`, so the time integral of the
/// ring's covered area is exact.
fn ring_source(model: &SoakingModel, a: f64, b: f64, t0: f64, t1: f64) -> f64 {
    let lambda = model.decay_rate();
    if lambda == 0.0 {
        return 0.0;
    }
    let r0_sq = model.initial_area_m2 / PI;
    // time at which the footprint edge passes radius rho
    let crossing = |rho: f64| if rho <= 0.0 { f64::INFINITY } else { (r0_sq / (rho * rho)).ln() / lambda };
    // integral of r(s)² over [s0, s1]
    let r_sq_integral = |s0: f64, s1: f64| r0_sq * (-lambda * s0).exp() * -(-lambda * (s1 - s0)).exp_m1() / lambda;
    let (sb, sa) = (crossing(b), crossing(a));
    let mut covered = 0.0;
    let full_end = t1.min(sb);
    if full_end > t0 {
        covered += (b * b - a * a) * (full_end - t0);
    }
    let (p0, p1) = (t0.max(sb), t1.min(sa));
    if p1 > p0 {
        covered += r_sq_integral(p0, p1) - a * a * (p1 - p0);
    }
    model.concentration_mol_m3 * model.soaking_rate_m_s * PI * covered
}

/// Integrates the model on `grid` from `t = 0` to the configured end time,
/// returning fields at the configured snapshot times.
pub fn solve(config: &SimulationConfig, grid: Grid, options: SolveOptions) -> Result<OracleOutput> {
    validate_config(config).into_result()?;
    if config.droplet.center != [0.0, 0.0] {
        return Err(Error::InvalidArgument(
            "the axisymmetric solver needs the droplet centred on the plate axis".into(),
        ));
    }
    let expected = Grid::new(&config.geometry, grid.n_r, grid.n_z, grid.dt_pde)?;
    if (expected.dr - grid.dr).abs() > 1e-12 * expected.dr || (expected.dz - grid.dz).abs() > 1e-12 * expected.dz {
        return Err(Error::Mismatch("grid spacing does not match the plate geometry".into()));
    }

    let d = config.species.diffusion_coeff_m2_s;
    let schedule = config.consumption_schedule();
    let t_end = config.end_time_s;
    let k_max = schedule.consumption_rate_at(t_end)?;
    let limit = grid.stable_dt(d, k_max);
    let mut grid = grid;
    if grid.dt_pde > limit {
        if !options.auto_shrink {
            return Err(Error::Unstable { dt: grid.dt_pde, limit });
        }
        info!("dt_pde {} s exceeds the stable limit, shrinking to {} s", grid.dt_pde, limit);
        grid.dt_pde = limit;
    }

    // Step boundaries: snapshot times, doublings of the lawn, and the end.
    let mut breaks: Vec<f64> = config.snapshot_times_s.iter().copied().filter(|&t| t > 0.0).collect();
    let period = config.growth.doubling_period_s;
    let mut n = 1.0;
    while n * period < t_end {
        breaks.push(n * period);
        n += 1.0;
    }
    breaks.push(t_end);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.abs().max(1.0));

    let model = config.soaking_model();
    let (nr, nz) = (grid.n_r, grid.n_z);
    let volumes: Vec<f64> = (0..nr).map(|i| grid.cell_volume(i)).collect();
    let areas: Vec<f64> = (0..nr).map(|i| grid.ring_area(i)).collect();
    let radial_g: Vec<f64> = (0..nr).map(|i| d * 2.0 * PI * (i + 1) as f64 * grid.dr * grid.dz / grid.dr).collect();
    let vertical_g: Vec<f64> = areas.iter().map(|a| d * a / grid.dz).collect();

    let mut mass = vec![0.0f64; nr * nz];
    let mut conc = vec![0.0f64; nr * nz];
    let mut released = 0.0f64;
    let mut consumed = 0.0f64;
    let mut series = OracleSeries::default();
    series.push(0.0, 0.0, 0.0, 0.0);

    let mut consumed_ring = vec![0.0f64; nr];
    let snapshot_field = |t: f64, mass: &[f64], consumed_ring: &[f64]| Field {
        time_s: t,
        values: mass.iter().enumerate().map(|(idx, m)| m / volumes[idx / nz]).collect(),
        consumed_by_ring_mol: consumed_ring.to_vec(),
    };
    let store = |t: f64, mass: &[f64], consumed_ring: &[f64], fields: &mut Vec<Option<Field>>| {
        for (slot, &ts) in fields.iter_mut().zip(&config.snapshot_times_s) {
            if slot.is_none() && (ts - t).abs() <= 1e-9 * ts.abs().max(1.0) {
                *slot = Some(snapshot_field(t, mass, consumed_ring));
            }
        }
    };
    let mut fields: Vec<Option<Field>> = vec![None; config.snapshot_times_s.len()];
    store(0.0, &mass, &consumed_ring, &mut fields);

    let mut t0 = 0.0;
    for &t1 in &breaks {
        let span = t1 - t0;
        let steps = (span / grid.dt_pde * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let h = span / steps as f64;
        for s in 0..steps {
            let t = t0 + s as f64 * h;
            let t_next = if s + 1 == steps { t1 } else { t0 + (s + 1) as f64 * h };
            let h = t_next - t;
            let kb = schedule.consumption_rate_at(t)?;

            for (idx, c) in conc.iter_mut().enumerate() {
                *c = mass[idx] / volumes[idx / nz];
            }
            for i in 0..nr - 1 {
                let g = radial_g[i] * h;
                for j in 0..nz {
                    let f = g * (conc[i * nz + j] - conc[(i + 1) * nz + j]);
                    mass[i * nz + j] -= f;
                    mass[(i + 1) * nz + j] += f;
                }
            }
            for i in 0..nr {
                let g = vertical_g[i] * h;
                for j in 0..nz - 1 {
                    let f = g * (conc[i * nz + j] - conc[i * nz + j + 1]);
                    mass[i * nz + j] -= f;
                    mass[i * nz + j + 1] += f;
                }
            }

            let source = model.cumulative_unchecked(t_next) - model.cumulative_unchecked(t);
            let mut step_consumed = 0.0;
            for i in 0..nr {
                let inflow = ring_source(&model, i as f64 * grid.dr, (i + 1) as f64 * grid.dr, t, t_next);
                let sink = kb * areas[i] * conc[i * nz] * h;
                mass[i * nz] += inflow - sink;
                consumed_ring[i] += sink;
                step_consumed += sink;
            }
            released += source;
            consumed += step_consumed;

            let (mut lo, mut lo_at, mut hi) = (0.0f64, 0usize, 0.0f64);
            for (idx, &m) in mass.iter().enumerate() {
                let c = m / volumes[idx / nz];
                if c < lo {
                    lo = c;
                    lo_at = idx;
                }
                hi = hi.max(c);
            }
            if lo < -1e-12 * hi {
                return Err(Error::NegativeConcentration { value: lo, i: lo_at / nz, j: lo_at % nz });
            }
            series.push(t_next, released, mass.iter().sum(), consumed);
        }
        store(t1, &mass, &consumed_ring, &mut fields);
        t0 = t1;
    }

    let fields = fields
        .into_iter()
        .map(|f| f.ok_or_else(|| Error::Mismatch("snapshot time not reached by the solver".into())))
        .collect::<Result<Vec<_>>>()?;
    Ok(OracleOutput { grid, fields, series })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(kb0: f64) -> SimulationConfig {
        let mut cfg = SimulationConfig::reference(kb0);
        cfg.geometry = PlateGeometry { plate_radius_m: 0.02, agar_depth_m: 6e-3 };
        cfg.end_time_s = 10.0 * 3600.0;
        cfg.snapshot_times_s = vec![0.0, 3600.0, 36000.0];
        cfg
    }

    #[test]
    fn ring_sources_sum_to_the_release() {
        let cfg = SimulationConfig::reference(0.0);
        let model = cfg.soaking_model();
        let grid = Grid::new(&PlateGeometry { plate_radius_m: 0.02, agar_depth_m: 6e-3 }, 64, 8, 1.0).unwrap();
        for (t0, t1) in [(0.0, 60.0), (100.0, 1000.0), (0.0, 1e5), (3000.0, 3000.5)] {
            let total: f64 = (0..64).map(|i| ring_source(&model, i as f64 * grid.dr, (i + 1) as f64 * grid.dr, t0, t1)).sum();
            let exact = model.cumulative_unchecked(t1) - model.cumulative_unchecked(t0);
            assert!((total - exact).abs() < 1e-12 * model.total_content_mol(), "{total} vs {exact}");
        }
        // rings outside the initial footprint never receive anything
        assert_eq!(ring_source(&model, 0.0105, 0.011, 0.0, 1e5), 0.0);
        // a ring inside the footprint is fully covered until the edge passes
        let inner = ring_source(&model, 0.0, 1e-3, 0.0, 10.0);
        assert!((inner - 100.0 * 1.2e-7 * PI * 1e-6 * 10.0).abs() < 1e-12 * inner);
    }

    #[test]
    fn grid_checks() {
        let g = PlateGeometry { plate_radius_m: 0.02, agar_depth_m: 6e-3 };
        assert!(Grid::new(&g, 4, 32, 1.0).is_err());
        assert!(Grid::new(&g, 64, 32, 0.0).is_err());
        let grid = Grid::new(&g, 64, 32, 1.0).unwrap();
        let total: f64 = (0..64).map(|i| grid.cell_volume(i)).sum::<f64>() * 32.0;
        assert!((total - g.volume_m3()).abs() < 1e-15);
    }

    #[test]
    fn no_source_stays_zero() {
        let mut cfg = small_config(1e-8);
        cfg.soaking_rate_m_s = 0.0;
        let grid = Grid::new(&cfg.geometry, 16, 8, 100.0).unwrap();
        let out = solve(&cfg, grid, SolveOptions::default()).unwrap();
        assert!(out.fields.len() > 1);
        for f in &out.fields {
            assert!(f.values.iter().all(|&c| c == 0.0));
        }
        assert!(out.series.released_mol.iter().all(|&m| m == 0.0));
        assert!(out.series.consumed_mol.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn mass_balance_holds_every_step() {
        let cfg = small_config(1e-8);
        let grid = Grid::new(&cfg.geometry, 32, 16, 1e9).unwrap();
        let out = solve(&cfg, grid, SolveOptions::default()).unwrap();
        let total = *out.series.released_mol.last().unwrap();
        assert!(total > 0.99e-6);
        assert!(out.series.max_abs_residual() < 1e-10 * total);
        for w in out.series.consumed_mol.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn unstable_step_is_rejected_without_auto_shrink() {
        let cfg = small_config(0.0);
        let grid = Grid::new(&cfg.geometry, 64, 32, 1e4).unwrap();
        let err = solve(&cfg, grid, SolveOptions { auto_shrink: false }).unwrap_err();
        assert!(matches!(err, Error::Unstable { .. }));
        let out = solve(&cfg, grid, SolveOptions { auto_shrink: true }).unwrap();
        assert!(out.grid.dt_pde < 1e4);
    }

    #[test]
    fn reflective_equilibrium_is_uniform() {
        let mut cfg = SimulationConfig::reference(0.0);
        cfg.geometry = PlateGeometry { plate_radius_m: 2e-3, agar_depth_m: 1e-3 };
        cfg.droplet.initial_radius_m = 1e-3;
        cfg.droplet.initial_volume_m3 = 1e-10;
        cfg.species.diffusion_coeff_m2_s = 1e-9;
        cfg.end_time_s = 40_000.0;
        cfg.snapshot_times_s = vec![40_000.0];
        let grid = Grid::new(&cfg.geometry, 16, 8, 1e9).unwrap();
        let out = solve(&cfg, grid, SolveOptions::default()).unwrap();
        let content = cfg.species.droplet_concentration_mol_m3 * cfg.droplet.initial_volume_m3;
        let uniform = content / cfg.geometry.volume_m3();
        let f = &out.fields[0];
        assert!(((f.total_mass(&out.grid) - content) / content).abs() < 1e-10);
        for &c in &f.values {
            assert!(((c - uniform) / uniform).abs() < 1e-3, "{c} vs {uniform}");
        }
        // after the source is spent the mass stays constant
        let tail: Vec<f64> = out.series.in_agar_mol.iter().rev().take(50).copied().collect();
        for m in &tail {
            assert!(((m - content) / content).abs() < 1e-12);
        }
    }

    #[test]
    fn strong_lawn_consumes_everything() {
        let mut cfg = small_config(1e-7);
        cfg.geometry.agar_depth_m = 1e-3;
        cfg.end_time_s = 200.0 * 3600.0;
        cfg.snapshot_times_s = vec![cfg.end_time_s];
        let grid = Grid::new(&cfg.geometry, 16, 8, 1e9).unwrap();
        let out = solve(&cfg, grid, SolveOptions::default()).unwrap();
        let released = *out.series.released_mol.last().unwrap();
        let consumed = *out.series.consumed_mol.last().unwrap();
        assert!((consumed - released).abs() < 1e-3 * released, "{consumed} vs {released}");
    }

    #[test]
    fn off_axis_droplet_is_rejected() {
        let mut cfg = small_config(0.0);
        cfg.droplet.center = [1e-3, 0.0];
        let grid = Grid::new(&cfg.geometry, 16, 8, 10.0).unwrap();
        assert!(solve(&cfg, grid, SolveOptions::default()).is_err());
    }

    fn profile_at(cfg: &SimulationConfig, nr: usize, nz: usize, probes: &[f64]) -> Vec<f64> {
        let grid = Grid::new(&cfg.geometry, nr, nz, 1e9).unwrap();
        let out = solve(cfg, grid, SolveOptions::default()).unwrap();
        let f = out.fields.last().unwrap();
        let sigma = f.column_density(&out.grid);
        // piecewise-linear interpolation between ring centres
        probes
            .iter()
            .map(|&r| {
                let x = r / out.grid.dr - 0.5;
                let i = (x.floor().max(0.0) as usize).min(nr - 2);
                let frac = (x - i as f64).clamp(0.0, 1.0);
                sigma[i] * (1.0 - frac) + sigma[i + 1] * frac
            })
            .collect()
    }

    #[test]
    fn refinement_increments_shrink() {
        let mut cfg = small_config(1e-8);
        cfg.end_time_s = 4.0 * 3600.0;
        cfg.snapshot_times_s = vec![cfg.end_time_s];
        let probes: Vec<f64> = (0..40).map(|k| (k as f64 + 0.5) * 0.02 / 40.0).collect();
        let coarse = profile_at(&cfg, 16, 8, &probes);
        let mid = profile_at(&cfg, 32, 16, &probes);
        let fine = profile_at(&cfg, 64, 32, &probes);
        let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
        let d1 = diff(&coarse, &mid);
        let d2 = diff(&mid, &fine);
        assert!(d2 < d1, "{d2} !< {d1}");
        // empirical order at least one
        assert!(d1 / d2 >= 1.9, "ratio {}", d1 / d2);
    }
}
