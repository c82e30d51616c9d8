//! Surface consumption by the growing bacterial lawn.
//!
//! The lawn consumes molecules as a first-order surface reaction with a rate
//! proportional to the cell population, which doubles once per period. The
//! rate is piecewise constant between doublings. The particle engine turns
//! the rate into a per-encounter absorption probability; the PDE oracle uses
//! it directly as a Robin coefficient.

use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsumptionSchedule {
    pub k0_m_s: f64,
    pub doubling_period_s: f64,
    pub cap_m_s: Option<f64>,
}

impl ConsumptionSchedule {
    pub fn new(k0_m_s: f64, doubling_period_s: f64, cap_m_s: Option<f64>) -> Result<Self> {
        if !(k0_m_s.is_finite() && k0_m_s >= 0.0) {
            return Err(Error::InvalidArgument(format!("initial consumption rate {k0_m_s} must be >= 0")));
        }
        if !(doubling_period_s.is_finite() && doubling_period_s > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "doubling period {doubling_period_s} must be > 0"
            )));
        }
        if let Some(cap) = cap_m_s {
            if cap.is_nan() || cap < k0_m_s {
                return Err(Error::InvalidArgument(format!(
                    "consumption cap {cap} must be >= initial rate {k0_m_s}"
                )));
            }
        }
        Ok(Self { k0_m_s, doubling_period_s, cap_m_s })
    }

    /// `min(cap, k0 * 2^floor(t / period))`.
    pub fn consumption_rate_at(&self, t: f64) -> Result<f64> {
        if t.is_nan() || t < 0.0 {
            return Err(Error::InvalidArgument(format!("time must be >= 0, got {t}")));
        }
        Ok(self.rate_at_unchecked(t))
    }

    pub(crate) fn rate_at_unchecked(&self, t: f64) -> f64 {
        let doublings = (t / self.doubling_period_s).floor();
        // 2^1100 already overflows; clamping keeps powi in range
        let factor = 2f64.powi(doublings.min(1100.0) as i32);
        let k = if self.k0_m_s == 0.0 { 0.0 } else { self.k0_m_s * factor };
        match self.cap_m_s {
            Some(cap) => k.min(cap),
            None => k,
        }
    }

    /// First doubling time at which the rate exceeds `limit`, if any.
    pub fn first_time_exceeding(&self, limit: f64) -> Option<f64> {
        if self.k0_m_s == 0.0 {
            return None;
        }
        // the factor overflows long before 1100 doublings
        (0..1100u32)
            .map(|n| f64::from(n) * self.doubling_period_s)
            .find(|&t| self.rate_at_unchecked(t) > limit)
    }
}

/// Probability that a particle hitting the reactive surface during a step of
/// length `dt` is consumed: `k * sqrt(pi * dt / D)`.
///
/// This is the partially adsorbing boundary rule that reproduces the Robin
/// condition `D dc/dz = k c` in the small-step limit when every step ending
/// beyond the surface counts as one encounter.
pub fn absorption_probability(k: f64, diffusion: f64, dt: f64) -> Result<f64> {
    if !(k.is_finite() && k >= 0.0) {
        return Err(Error::InvalidArgument(format!("consumption rate {k} must be >= 0")));
    }
    if !(diffusion.is_finite() && diffusion > 0.0) {
        return Err(Error::InvalidArgument(format!("diffusion coefficient {diffusion} must be > 0")));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step {dt} must be > 0")));
    }
    let p = probability_unchecked(k, diffusion, dt);
    // a rate sitting on the unit-probability limit rounds to 1 + eps
    if p > 1.0 + 1e-12 {
        return Err(Error::TimeStepTooCoarse { probability: p, rate: k, diffusion, dt });
    }
    Ok(p.min(1.0))
}

pub(crate) fn probability_unchecked(k: f64, diffusion: f64, dt: f64) -> f64 {
    if k == 0.0 {
        return 0.0;
    }
    k * (PI * dt / diffusion).sqrt()
}

/// Largest rate whose absorption probability is still at most one.
pub fn max_rate_for_unit_probability(diffusion: f64, dt: f64) -> f64 {
    (diffusion / (PI * dt)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn schedule(k0: f64) -> ConsumptionSchedule {
        ConsumptionSchedule::new(k0, 1200.0, None).unwrap()
    }

    #[test]
    fn doubling_steps() {
        let s = schedule(1e-8);
        assert_eq!(s.consumption_rate_at(0.0).unwrap(), 1e-8);
        assert_eq!(s.consumption_rate_at(1199.0).unwrap(), 1e-8);
        assert_eq!(s.consumption_rate_at(1200.0).unwrap(), 2e-8);
        assert_eq!(s.consumption_rate_at(2400.0).unwrap(), 4e-8);
        assert_eq!(s.consumption_rate_at(3600.0).unwrap(), 8e-8);
        assert!(s.consumption_rate_at(-1.0).is_err());
    }

    #[test]
    fn cap_binds() {
        let s = ConsumptionSchedule::new(1e-8, 1200.0, Some(3e-8)).unwrap();
        assert_eq!(s.consumption_rate_at(2400.0).unwrap(), 3e-8);
        assert_eq!(s.consumption_rate_at(1e9).unwrap(), 3e-8);
        assert!(ConsumptionSchedule::new(1e-8, 1200.0, Some(1e-9)).is_err());
    }

    #[test]
    fn huge_horizon_uncapped_is_infinite_not_nan() {
        let s = schedule(1e-8);
        assert_eq!(s.rate_at_unchecked(1e12), f64::INFINITY);
        assert_eq!(schedule(0.0).rate_at_unchecked(1e12), 0.0);
    }

    #[test]
    fn first_exceedance() {
        let s = schedule(1e-8);
        assert_eq!(s.first_time_exceeding(1e-9), Some(0.0));
        assert_eq!(s.first_time_exceeding(1e-8), Some(1200.0));
        assert_eq!(s.first_time_exceeding(3e-8), Some(2400.0));
        assert_eq!(s.first_time_exceeding(4e-8), Some(3600.0));
        assert_eq!(schedule(0.0).first_time_exceeding(1.0), None);
    }

    #[test]
    fn probability_values() {
        assert_eq!(absorption_probability(0.0, 5e-11, 0.1).unwrap(), 0.0);
        let p = absorption_probability(1e-6, 5e-11, 0.1).unwrap();
        let expected = 1e-6 * (PI * 0.1 / 5e-11).sqrt();
        assert!((p - expected).abs() < 1e-15);
        assert!((p - 0.0793).abs() < 1e-4);
        match absorption_probability(2e-7, 5e-11, 1000.0) {
            Err(Error::TimeStepTooCoarse { probability, .. }) => {
                assert!((probability - 1.585).abs() < 1e-3)
            }
            other => panic!("expected coarse-step error, got {other:?}"),
        }
        assert!(absorption_probability(1e-8, 0.0, 1.0).is_err());
    }

    #[test]
    fn unit_probability_rate() {
        let k = max_rate_for_unit_probability(5e-11, 10.0);
        assert!((probability_unchecked(k, 5e-11, 10.0) - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn rate_is_non_decreasing_and_doubles(k0 in 1e-12f64..1e-6, t in 0f64..1e5, dt in 0f64..1e4) {
            let s = schedule(k0);
            let a = s.consumption_rate_at(t).unwrap();
            let b = s.consumption_rate_at(t + dt).unwrap();
            prop_assert!(b >= a);
            let c = s.consumption_rate_at(t + 1200.0).unwrap();
            prop_assert!((c / a - 2.0).abs() < 1e-12);
        }

        #[test]
        fn probability_scales_with_sqrt_dt(k in 0f64..1e-7, d in 1e-12f64..1e-9, dt in 1e-3f64..1.0) {
            let p1 = probability_unchecked(k, d, dt);
            let p4 = probability_unchecked(k, d, 4.0 * dt);
            prop_assert!((p4 - 2.0 * p1).abs() <= 1e-12 * p4.max(1e-300));
            prop_assert!(probability_unchecked(k * 1.5, d, dt) >= p1);
            prop_assert!(probability_unchecked(k, d * 1.5, dt) <= p1);
        }
    }
}
