//! Soaking-rate estimation from measured droplet footprints.
//!
//! Area decays as `A(t) = A0 exp(-K t / h0)`, so `ln A` is linear in `t` with
//! slope `-K / h0`. Only the ratio is identifiable from area data; `h0` is
//! taken as known from the droplet volume.

use std::f64::consts::PI;

use crate::droplet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AreaSeries {
    pub concentration_tag: String,
    /// `(t_s, area_m2)` pairs with strictly increasing times.
    pub samples: Vec<(f64, f64)>,
    pub volume_m3: Option<f64>,
}

impl AreaSeries {
    pub fn new(concentration_tag: impl Into<String>, samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 samples, got {}", samples.len())));
        }
        for (row, &(t, a)) in samples.iter().enumerate() {
            if !(t.is_finite() && a.is_finite()) {
                return Err(Error::InvalidArgument(format!("row {}: non-finite value", row + 1)));
            }
            if t < 0.0 {
                return Err(Error::InvalidArgument(format!("row {}: negative time {t}", row + 1)));
            }
            if a <= 0.0 {
                return Err(Error::InvalidArgument(format!("row {}: area {a} must be positive", row + 1)));
            }
            if row > 0 && t <= samples[row - 1].0 {
                return Err(Error::InvalidArgument(format!("row {}: times must be strictly increasing", row + 1)));
            }
        }
        Ok(Self { concentration_tag: concentration_tag.into(), samples, volume_m3: None })
    }

    /// Builds a series from `(t_s, radius_m)` pairs of a circular footprint.
    pub fn from_radii(concentration_tag: impl Into<String>, radii: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(concentration_tag, radii.into_iter().map(|(t, r)| (t, PI * r * r)).collect())
    }

    pub fn with_volume(mut self, volume_m3: f64) -> Self {
        self.volume_m3 = Some(volume_m3);
        self
    }

    /// `h0` from the droplet volume and the first measured area.
    pub fn derived_height(&self) -> Option<Result<f64>> {
        self.volume_m3.map(|v| derive_h0(v, self.samples[0].1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitFlag {
    /// Zero slope: the droplet did not shrink.
    NoSoakingDetected,
    /// The footprint grew, giving a negative soaking rate.
    NegativeRate,
}

impl FitFlag {
    pub fn describe(self) -> &'static str {
        match self {
            FitFlag::NoSoakingDetected => "no soaking detected",
            FitFlag::NegativeRate => "negative soaking rate (area increasing)",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoakingFit {
    pub soaking_rate_m_s: f64,
    /// Fitted slope of `ln A` against `t`, 1/s.
    pub log_slope_per_s: f64,
    /// Fitted `A0`.
    pub intercept_area_m2: f64,
    pub r_squared: f64,
    /// Residuals of `ln A` per sample.
    pub residuals: Vec<f64>,
    pub flags: Vec<FitFlag>,
}

/// Least-squares fit of `ln A` against `t`.
pub fn fit_soaking_rate(series: &AreaSeries, h0: f64) -> Result<SoakingFit> {
    if !(h0.is_finite() && h0 > 0.0) {
        return Err(Error::InvalidArgument(format!("droplet height must be > 0, got {h0}")));
    }
    let s = &series.samples;
    if s.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples".into()));
    }
    if s.iter().any(|(t, a)| !(t.is_finite() && a.is_finite() && *a > 0.0)) {
        return Err(Error::InvalidArgument("samples must be finite with positive areas".into()));
    }
    let n = s.len() as f64;
    let ys: Vec<f64> = s.iter().map(|&(_, a)| a.ln()).collect();
    let t_mean = s.iter().map(|&(t, _)| t).sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (&(t, _), &y) in s.iter().zip(&ys) {
        sxx += (t - t_mean) * (t - t_mean);
        sxy += (t - t_mean) * (y - y_mean);
    }
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("sample times must not all coincide".into()));
    }
    let mut slope = sxy / sxx;
    let span = s[s.len() - 1].0 - s[0].0;
    let mut flags = Vec::new();
    // round-off in the mean can leave a slope of order 1e-17 on flat data
    if (slope * span).abs() < 1e-12 {
        slope = 0.0;
        flags.push(FitFlag::NoSoakingDetected);
    } else if slope > 0.0 {
        flags.push(FitFlag::NegativeRate);
    }
    let intercept = y_mean - slope * t_mean;
    let residuals: Vec<f64> = s.iter().zip(&ys).map(|(&(t, _), &y)| y - (intercept + slope * t)).collect();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - y_mean) * (y - y_mean)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(SoakingFit {
        soaking_rate_m_s: -slope * h0,
        log_slope_per_s: slope,
        intercept_area_m2: intercept.exp(),
        r_squared,
        residuals,
        flags,
    })
}

/// Exact inversion of the area law through two samples:
/// `K = h0 ln(A0 / A1) / (t1 - t0)`.
pub fn two_point_estimate(first: (f64, f64), second: (f64, f64), h0: f64) -> Result<f64> {
    let ((t0, a0), (t1, a1)) = (first, second);
    if t1.partial_cmp(&t0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::InvalidArgument(format!("second time {t1} must exceed first {t0}")));
    }
    if !(a0 > 0.0 && a1 > 0.0 && a0.is_finite() && a1.is_finite()) {
        return Err(Error::InvalidArgument("areas must be positive".into()));
    }
    if !(h0 > 0.0 && h0.is_finite()) {
        return Err(Error::InvalidArgument(format!("droplet height must be > 0, got {h0}")));
    }
    Ok(h0 * (a0 / a1).ln() / (t1 - t0))
}

/// Two-point inversion on radii: `K = 2 h0 ln(r0 / r1) / (t1 - t0)`.
pub fn two_point_from_radii(first: (f64, f64), second: (f64, f64), h0: f64) -> Result<f64> {
    let area = |(t, r): (f64, f64)| (t, PI * r * r);
    if !(first.1 > 0.0 && second.1 > 0.0) {
        return Err(Error::InvalidArgument("radii must be positive".into()));
    }
    two_point_estimate(area(first), area(second), h0)
}

/// Two-point estimate through the first and last samples of `series`.
pub fn two_point_series(series: &AreaSeries, h0: f64) -> Result<f64> {
    let s = &series.samples;
    if s.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples".into()));
    }
    two_point_estimate(s[0], s[s.len() - 1], h0)
}

pub fn derive_h0(volume_m3: f64, initial_area_m2: f64) -> Result<f64> {
    droplet::initial_height(volume_m3, initial_area_m2)
}
