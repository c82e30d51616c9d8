//! Droplet soaking kinematics and the molecule source it feeds.
//!
//! The droplet is a thin cylinder of fixed height `h0` whose footprint
//! shrinks as its volume soaks into the agar at velocity `K`:
//!
//! ```text
//! A(t) = A0 exp(-K t / h0)        r(t) = r0 exp(-K t / (2 h0))
//! dN/dt = C K A0 exp(-K t / h0)   released(t) = C V0 (1 - exp(-K t / h0))
//! ```

use std::f64::consts::PI;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::rng::CounterRng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoakingModel {
    pub initial_area_m2: f64,
    pub initial_height_m: f64,
    pub soaking_rate_m_s: f64,
    pub concentration_mol_m3: f64,
    pub center: [f64; 2],
}

/// Particles released during one step, all at `z = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReleaseBatch {
    pub time_s: f64,
    pub positions: Vec<[f64; 2]>,
    pub count: u64,
    pub moles_represented: f64,
}

/// `V / A`, the height of a cylindrical droplet.
pub fn initial_height(volume_m3: f64, area_m2: f64) -> Result<f64> {
    if !(volume_m3.is_finite() && volume_m3 > 0.0) || !(area_m2.is_finite() && area_m2 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "volume ({volume_m3}) and area ({area_m2}) must be positive"
        )));
    }
    Ok(volume_m3 / area_m2)
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("time must be >= 0, got {t}")))
    }
}

impl SoakingModel {
    /// Builds a model from droplet volume and initial footprint radius.
    pub fn from_droplet(
        volume_m3: f64,
        radius_m: f64,
        soaking_rate_m_s: f64,
        concentration_mol_m3: f64,
    ) -> Result<Self> {
        let area = PI * radius_m * radius_m;
        let height = initial_height(volume_m3, area)?;
        // K = 0 is a droplet that never soaks in: constant footprint, no release
        if !(soaking_rate_m_s >= 0.0 && soaking_rate_m_s.is_finite() && concentration_mol_m3 > 0.0) {
            return Err(Error::InvalidArgument(
                "soaking rate must be >= 0 and concentration > 0".into(),
            ));
        }
        Ok(Self {
            initial_area_m2: area,
            initial_height_m: height,
            soaking_rate_m_s,
            concentration_mol_m3,
            center: [0.0, 0.0],
        })
    }

    /// `K / h0`, the decay rate of area, volume and release.
    #[inline]
    pub fn decay_rate(&self) -> f64 {
        self.soaking_rate_m_s / self.initial_height_m
    }

    /// `h0 / K`; infinite when `K = 0`.
    pub fn time_constant_s(&self) -> f64 {
        self.initial_height_m / self.soaking_rate_m_s
    }

    pub fn initial_radius_m(&self) -> f64 {
        (self.initial_area_m2 / PI).sqrt()
    }

    pub fn initial_volume_m3(&self) -> f64 {
        self.initial_area_m2 * self.initial_height_m
    }

    /// Moles in the droplet at `t = 0`.
    pub fn total_content_mol(&self) -> f64 {
        self.concentration_mol_m3 * self.initial_volume_m3()
    }

    pub fn area_at(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.initial_area_m2 * (-self.decay_rate() * t).exp())
    }

    pub fn radius_at(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.initial_radius_m() * (-0.5 * self.decay_rate() * t).exp())
    }

    pub fn volume_at(&self, t: f64) -> Result<f64> {
        Ok(self.area_at(t)? * self.initial_height_m)
    }

    /// Molar release rate into the agar, mol/s.
    pub fn release_rate(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.concentration_mol_m3
            * self.soaking_rate_m_s
            * self.initial_area_m2
            * (-self.decay_rate() * t).exp())
    }

    /// Moles released over `[0, t]`.
    pub fn cumulative_release(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.cumulative_unchecked(t))
    }

    #[inline]
    pub(crate) fn cumulative_unchecked(&self, t: f64) -> f64 {
        -self.total_content_mol() * (-self.decay_rate() * t).exp_m1()
    }

    pub(crate) fn radius_unchecked(&self, t: f64) -> f64 {
        self.initial_radius_m() * (-0.5 * self.decay_rate() * t).exp()
    }
}

/// Uniform point on the disk of `radius` about `center`.
pub fn sample_in_disk<R: RngCore>(rng: &mut R, center: [f64; 2], radius: f64) -> [f64; 2] {
    let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    let v = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    let r = radius * u.sqrt();
    let (s, c) = (2.0 * PI * v).sin_cos();
    [center[0] + r * c, center[1] + r * s]
}

/// Samples the particles released during `[t, t + dt]`.
///
/// The expected count is the exact interval integral of the release rate
/// divided by `w`. Counts are rounded stochastically with a run-wide `phase`
/// in `[0, 1)`: the number released by time `t` is
/// `floor(released(t) / w + phase)`. Each batch is then `floor(n)` or
/// `floor(n) + 1` with the correct mean, and the total over any set of
/// consecutive batches never exceeds `ceil(C V0 / w)`. Draw `phase` uniformly
/// once per run.
///
/// Each particle gets a release instant drawn from the release rate over the
/// interval and a position uniform on the footprint at that instant, so the
/// spatial distribution does not depend on `dt`.
pub fn sample_release_batch(
    model: &SoakingModel,
    t: f64,
    dt: f64,
    w: f64,
    phase: f64,
    rng: &mut CounterRng,
) -> Result<ReleaseBatch> {
    check_time(t)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
    }
    if !(w > 0.0 && w.is_finite()) {
        return Err(Error::InvalidArgument(format!("particle weight must be > 0, got {w}")));
    }
    if !(0.0..1.0).contains(&phase) {
        return Err(Error::InvalidArgument(format!("phase must lie in [0, 1), got {phase}")));
    }
    let before = (model.cumulative_unchecked(t) / w + phase).floor();
    let after = (model.cumulative_unchecked(t + dt) / w + phase).floor();
    let count = (after - before).max(0.0) as u64;
    let lambda = model.decay_rate();
    let span = (-lambda * dt).exp_m1();
    let positions = (0..count)
        .map(|_| {
            let v = rng.next_f64();
            let s = if span.abs() < 1e-300 { v * dt } else { -(v * span).ln_1p() / lambda };
            sample_in_disk(rng, model.center, model.radius_unchecked(t + s))
        })
        .collect();
    Ok(ReleaseBatch { time_s: t, positions, count, moles_represented: count as f64 * w })
}
