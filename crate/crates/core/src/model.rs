//! Units, plate geometry and the validated run configuration shared by both
//! engines.
//!
//! Coordinates are Cartesian `(x, y, z)` with the origin at the centre of the
//! agar surface and `z` pointing down into the agar, so the simulated domain
//! is `x² + y² ≤ r_p²`, `0 ≤ z ≤ z_a`. The bacterial lawn sits at `z = 0`.

use std::fmt;

use crate::droplet::SoakingModel;
use crate::error::{Error, Result};
use crate::growth::{self, ConsumptionSchedule};

/// Moles per cubic metre in one molar.
pub const MOL_PER_M3_PER_MOLAR: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConcentrationUnit {
    Molar,
    MolPerM3,
}

impl ConcentrationUnit {
    pub fn tag(self) -> &'static str {
        match self {
            ConcentrationUnit::Molar => "M",
            ConcentrationUnit::MolPerM3 => "mol/m3",
        }
    }
}

/// Converts a concentration to mol/m³, the unit used everywhere internally.
pub fn concentration_to_si(value: f64, unit: ConcentrationUnit) -> Result<f64> {
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "concentration must be positive and finite, got {value}"
        )));
    }
    Ok(match unit {
        ConcentrationUnit::Molar => value * MOL_PER_M3_PER_MOLAR,
        ConcentrationUnit::MolPerM3 => value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateGeometry {
    pub plate_radius_m: f64,
    pub agar_depth_m: f64,
}

impl PlateGeometry {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        p[0] * p[0] + p[1] * p[1] <= self.plate_radius_m * self.plate_radius_m
            && p[2] >= 0.0
            && p[2] <= self.agar_depth_m
    }

    pub fn surface_area_m2(&self) -> f64 {
        std::f64::consts::PI * self.plate_radius_m * self.plate_radius_m
    }

    pub fn volume_m3(&self) -> f64 {
        self.surface_area_m2() * self.agar_depth_m
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeciesParams {
    pub diffusion_coeff_m2_s: f64,
    pub droplet_concentration_mol_m3: f64,
    /// Moles of real molecules carried by one simulated particle.
    pub particle_weight_mol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropletSpec {
    pub initial_volume_m3: f64,
    pub initial_radius_m: f64,
    /// Droplet centre on the agar surface, `(x, y)` in metres.
    pub center: [f64; 2],
}

impl DropletSpec {
    pub fn initial_area_m2(&self) -> f64 {
        std::f64::consts::PI * self.initial_radius_m * self.initial_radius_m
    }

    pub fn initial_height_m(&self) -> f64 {
        self.initial_volume_m3 / self.initial_area_m2()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthParams {
    pub initial_consumption_rate_m_s: f64,
    pub doubling_period_s: f64,
    /// Upper bound on the consumption rate. `None` resolves to the largest rate
    /// whose per-step absorption probability is still at most one;
    /// `Some(f64::INFINITY)` keeps unbounded doubling.
    pub max_consumption_rate_m_s: Option<f64>,
}

/// Complete parameterisation of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub geometry: PlateGeometry,
    pub species: SpeciesParams,
    pub droplet: DropletSpec,
    pub growth: GrowthParams,
    pub soaking_rate_m_s: f64,
    pub time_step_s: f64,
    pub end_time_s: f64,
    pub snapshot_times_s: Vec<f64>,
    pub histogram_bins: (usize, usize),
    pub rng_seed: u64,
    /// Record one time-series row every this many steps.
    pub timeseries_stride: usize,
}

/// Soaking rates paired with droplet concentrations, fastest first.
///
/// The published table gives these with positive exponents; the negative
/// exponents and this pairing (higher concentration soaks faster) are the
/// physically consistent reading.
pub const ADOPTED_SOAKING_RATES: [(f64, f64); 3] = [(0.1, 1.2e-7), (0.01, 6.1e-8), (0.001, 5.5e-9)];

impl SimulationConfig {
    /// Plate, droplet and species values of the reference experiment with a
    /// 0.1 M droplet. The initial consumption rate has no published value and
    /// must be supplied.
    pub fn reference(initial_consumption_rate_m_s: f64) -> Self {
        const HOUR: f64 = 3600.0;
        Self {
            geometry: PlateGeometry { plate_radius_m: 0.1, agar_depth_m: 6e-3 },
            species: SpeciesParams {
                diffusion_coeff_m2_s: 5e-11,
                droplet_concentration_mol_m3: 100.0,
                // ~5e6 particles for the 1e-6 mol payload of a 10 uL, 0.1 M droplet
                particle_weight_mol: 2e-13,
            },
            droplet: DropletSpec {
                initial_volume_m3: 1e-8,
                initial_radius_m: 0.01,
                center: [0.0, 0.0],
            },
            growth: GrowthParams {
                initial_consumption_rate_m_s,
                doubling_period_s: 1200.0,
                max_consumption_rate_m_s: None,
            },
            soaking_rate_m_s: 1.2e-7,
            time_step_s: 10.0,
            end_time_s: 55.0 * HOUR,
            snapshot_times_s: vec![0.0, 10.0 * HOUR, 25.0 * HOUR, 55.0 * HOUR],
            histogram_bins: (64, 64),
            rng_seed: 1,
            timeseries_stride: 1,
        }
    }

    pub fn soaking_model(&self) -> SoakingModel {
        SoakingModel {
            initial_area_m2: self.droplet.initial_area_m2(),
            initial_height_m: self.droplet.initial_height_m(),
            soaking_rate_m_s: self.soaking_rate_m_s,
            concentration_mol_m3: self.species.droplet_concentration_mol_m3,
            center: self.droplet.center,
        }
    }

    /// The consumption cap used when none is configured.
    pub fn default_consumption_cap(&self) -> f64 {
        growth::max_rate_for_unit_probability(self.species.diffusion_coeff_m2_s, self.time_step_s)
    }

    pub fn consumption_schedule(&self) -> ConsumptionSchedule {
        let k0 = self.growth.initial_consumption_rate_m_s;
        let cap = self
            .growth
            .max_consumption_rate_m_s
            .unwrap_or_else(|| self.default_consumption_cap().max(k0));
        ConsumptionSchedule {
            k0_m_s: k0,
            doubling_period_s: self.growth.doubling_period_s,
            cap_m_s: Some(cap),
        }
    }

    /// Number of whole steps in the run; the run ends at `steps * dt <= T`.
    /// Start time, rate and probability of the first step whose absorption
    /// probability exceeds one, if any step of the run does.
    pub fn first_coarse_step(&self) -> Option<(f64, f64, f64)> {
        let d = self.species.diffusion_coeff_m2_s;
        let dt = self.time_step_s;
        let schedule = self.consumption_schedule();
        let t = schedule.first_time_exceeding(growth::max_rate_for_unit_probability(d, dt))?;
        // the rate only changes at period boundaries; find the first step starting at or after t
        let step = (t / dt - 1e-9).ceil().max(0.0);
        if step as usize >= self.step_count() {
            return None;
        }
        let start = step * dt;
        let k = schedule.rate_at_unchecked(start);
        Some((start, k, growth::probability_unchecked(k, d, dt)))
    }

    pub fn step_count(&self) -> usize {
        ((self.end_time_s / self.time_step_s) * (1.0 + 1e-12)).floor() as usize
    }

    /// Total droplet payload in simulated particles.
    pub fn expected_total_particles(&self) -> f64 {
        self.species.droplet_concentration_mol_m3 * self.droplet.initial_volume_m3
            / self.species.particle_weight_mol
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub constraint: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(self))
        }
    }

    fn check(&mut self, ok: bool, field: &str, constraint: impl Into<String>) {
        if !ok {
            self.violations.push(Violation { field: field.to_owned(), constraint: constraint.into() });
        }
    }

    pub fn mentions(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.constraint.contains(needle) || v.field.contains(needle))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{}: {}", v.field, v.constraint)?;
        }
        Ok(())
    }
}

fn positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

/// Checks every invariant of `config`. A config that passes is safe for both
/// engines.
pub fn validate_config(config: &SimulationConfig) -> ValidationReport {
    let mut r = ValidationReport::default();
    let g = &config.geometry;
    let s = &config.species;
    let d = &config.droplet;
    let gr = &config.growth;

    r.check(positive(g.plate_radius_m), "plate_radius_m", "must be > 0");
    r.check(positive(g.agar_depth_m), "agar_depth_m", "must be > 0");
    r.check(positive(s.diffusion_coeff_m2_s), "diffusion_coeff_m2_s", "must be > 0");
    r.check(
        positive(s.droplet_concentration_mol_m3),
        "droplet_concentration",
        "must be > 0",
    );
    r.check(positive(s.particle_weight_mol), "particle_weight_mol", "must be > 0");
    r.check(positive(d.initial_volume_m3), "droplet_volume_m3", "must be > 0");
    r.check(positive(d.initial_radius_m), "droplet_radius_m", "must be > 0");
    if positive(d.initial_radius_m) && positive(g.plate_radius_m) {
        let reach = d.center[0].hypot(d.center[1]) + d.initial_radius_m;
        r.check(
            reach <= g.plate_radius_m * (1.0 + 1e-12),
            "droplet_radius_m",
            format!("droplet exceeds plate ({reach} m > {} m)", g.plate_radius_m),
        );
        if positive(d.initial_volume_m3) {
            r.check(positive(d.initial_height_m()), "droplet_height", "derived h0 must be > 0");
        }
    }
    r.check(
        config.soaking_rate_m_s >= 0.0 && config.soaking_rate_m_s.is_finite(),
        "soaking_rate_m_s",
        "must be >= 0",
    );

    let k0 = gr.initial_consumption_rate_m_s;
    r.check(k0.is_finite() && k0 >= 0.0, "kb0_m_s", "must be >= 0");
    r.check(positive(gr.doubling_period_s), "doubling_period_s", "must be > 0");
    if let Some(cap) = gr.max_consumption_rate_m_s {
        r.check(!cap.is_nan() && cap >= k0, "kb_cap_m_s", "must be >= kb0_m_s");
    }

    let dt = config.time_step_s;
    r.check(positive(dt), "time_step_s", "must be > 0");
    r.check(
        config.end_time_s.is_finite() && config.end_time_s >= 0.0,
        "end_time_s",
        "must be >= 0",
    );
    if positive(dt) && config.end_time_s > 0.0 {
        r.check(config.end_time_s >= dt, "end_time_s", "must be >= time_step_s");
    }
    for &t in &config.snapshot_times_s {
        r.check(
            t.is_finite() && t >= 0.0 && t <= config.end_time_s,
            "snapshot_times_s",
            format!("snapshot time {t} outside [0, {}]", config.end_time_s),
        );
    }
    r.check(
        config.histogram_bins.0 >= 1 && config.histogram_bins.1 >= 1,
        "histogram_bins",
        "need at least one bin per axis",
    );
    r.check(config.timeseries_stride >= 1, "timeseries_stride", "must be >= 1");

    // Probability checks only make sense once the inputs they use are sane.
    let growth_ok = k0.is_finite() && k0 >= 0.0 && positive(gr.doubling_period_s);
    if growth_ok && positive(dt) && positive(s.diffusion_coeff_m2_s) {
        let diff = s.diffusion_coeff_m2_s;
        let p0 = growth::probability_unchecked(k0, diff, dt);
        if p0 > 1.0 {
            r.check(
                false,
                "kb0_m_s",
                format!("absorption probability > 1 at t=0 (P = {p0:.3}); reduce time_step_s"),
            );
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_config_is_valid() {
        let cfg = SimulationConfig::reference(1e-8);
        let report = validate_config(&cfg);
        assert!(report.is_ok(), "{report}");
    }

    #[test]
    fn droplet_larger_than_plate_is_rejected() {
        let mut cfg = SimulationConfig::reference(1e-8);
        cfg.droplet.initial_radius_m = 0.2;
        let report = validate_config(&cfg);
        assert!(report.mentions("droplet exceeds plate"), "{report}");
    }

    #[test]
    fn coarse_step_with_fast_consumption_is_rejected() {
        let mut cfg = SimulationConfig::reference(2e-7);
        cfg.time_step_s = 1000.0;
        let report = validate_config(&cfg);
        assert!(report.mentions("absorption probability > 1 at t=0"), "{report}");
        // P = 2e-7 * sqrt(pi * 1000 / 5e-11)
        let p = 2e-7 * (std::f64::consts::PI * 1000.0 / 5e-11_f64).sqrt();
        assert!((p - 1.585).abs() < 1e-3);
    }

    #[test]
    fn uncapped_growth_exceeds_unit_probability_mid_run() {
        let mut cfg = SimulationConfig::reference(1e-8);
        cfg.growth.max_consumption_rate_m_s = Some(f64::INFINITY);
        assert!(validate_config(&cfg).is_ok());
        // limit sqrt(5e-11 / (10 pi)) = 1.26e-6 m/s is passed after 7 doublings
        let (t, _, p) = cfg.first_coarse_step().unwrap();
        assert_eq!(t, 7.0 * 1200.0);
        assert!(p > 1.0);
        cfg.growth.max_consumption_rate_m_s = None;
        assert_eq!(cfg.first_coarse_step(), None);
        cfg.growth.max_consumption_rate_m_s = Some(f64::INFINITY);
        cfg.end_time_s = 7.0 * 1200.0;
        cfg.snapshot_times_s = vec![0.0];
        assert_eq!(cfg.first_coarse_step(), None);
    }

    #[test]
    fn snapshot_outside_horizon_is_rejected() {
        let mut cfg = SimulationConfig::reference(1e-8);
        cfg.snapshot_times_s.push(cfg.end_time_s + 1.0);
        assert!(validate_config(&cfg).mentions("snapshot_times_s"));
    }

    #[test]
    fn validation_is_idempotent() {
        let mut cfg = SimulationConfig::reference(1e-8);
        cfg.time_step_s = -1.0;
        cfg.geometry.agar_depth_m = 0.0;
        assert_eq!(validate_config(&cfg), validate_config(&cfg));
    }

    #[test]
    fn concentration_conversion() {
        assert_eq!(concentration_to_si(0.1, ConcentrationUnit::Molar).unwrap(), 100.0);
        assert_eq!(concentration_to_si(0.001, ConcentrationUnit::Molar).unwrap(), 1.0);
        assert_eq!(concentration_to_si(100.0, ConcentrationUnit::MolPerM3).unwrap(), 100.0);
        assert!(concentration_to_si(0.0, ConcentrationUnit::Molar).is_err());
        assert!(concentration_to_si(-1.0, ConcentrationUnit::MolPerM3).is_err());
    }

    #[test]
    fn step_count_tolerates_rounding() {
        let mut cfg = SimulationConfig::reference(0.0);
        cfg.time_step_s = 0.1;
        cfg.end_time_s = 0.3;
        assert_eq!(cfg.step_count(), 3);
    }
}
