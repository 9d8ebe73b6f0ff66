//! Closed-form spatial resolution of the four depth-sensing families.
//!
//! All lengths in meters, frequencies in Hz, angles in radians.

use crate::error::{Error, Result};
use crate::signal::SPEED_OF_LIGHT;

/// Rayleigh angular resolution `ω = 1.22·λ/L`.
pub fn rayleigh_angular(wavelength: f64, aperture: f64) -> Result<f64> {
    if !(aperture > 0.0) {
        return Err(Error::invalid("aperture must be positive"));
    }
    Ok(1.22 * wavelength / aperture)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MimoResolutionParams {
    pub f_min: f64,
    pub f_max: f64,
    /// Side length of the square aperture.
    pub aperture: f64,
    /// Object distance along boresight.
    pub distance: f64,
}

impl MimoResolutionParams {
    pub fn new(f_min: f64, f_max: f64, aperture: f64, distance: f64) -> Result<Self> {
        if !(f_min > 0.0 && f_max > f_min) {
            return Err(Error::invalid("requires f_max > f_min > 0"));
        }
        if !(aperture > 0.0 && distance > 0.0) {
            return Err(Error::invalid("aperture and distance must be positive"));
        }
        Ok(MimoResolutionParams {
            f_min,
            f_max,
            aperture,
            distance,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.f_max - self.f_min
    }
}

/// `δ_{x,y} = c/(4·f_max) · √(4(z/L)² + 1)`
pub fn mimo_cross_range(p: &MimoResolutionParams) -> f64 {
    let ratio = p.distance / p.aperture;
    SPEED_OF_LIGHT / (4.0 * p.f_max) * (4.0 * ratio * ratio + 1.0).sqrt()
}

/// `δ_z = 0.5·c / (b + (1 − 1/√(1 + 0.5(L/z)²))·f_min)` with `b` the full
/// sweep bandwidth `f_max − f_min`.
pub fn mimo_range_res(p: &MimoResolutionParams) -> f64 {
    let ratio = p.aperture / p.distance;
    let aperture_term = 1.0 - 1.0 / (1.0 + 0.5 * ratio * ratio).sqrt();
    0.5 * SPEED_OF_LIGHT / (p.bandwidth() + aperture_term * p.f_min)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StereoParams {
    /// Baseline, meters.
    pub baseline: f64,
    /// Focal length, pixels.
    pub focal_px: f64,
    /// Disparity resolution, pixels.
    pub disparity_res_px: f64,
}

impl StereoParams {
    pub fn new(baseline: f64, focal_px: f64, disparity_res_px: f64) -> Result<Self> {
        if !(baseline > 0.0 && focal_px > 0.0) {
            return Err(Error::invalid("baseline and focal length must be positive"));
        }
        Ok(StereoParams {
            baseline,
            focal_px,
            disparity_res_px,
        })
    }
}

/// `d = f·B/D`
pub fn stereo_depth(p: &StereoParams, disparity_px: f64) -> Result<f64> {
    if disparity_px == 0.0 {
        return Err(Error::invalid("zero disparity"));
    }
    Ok(p.focal_px * p.baseline / disparity_px)
}

/// `δ_z = z²/(B·f) · ΔD`
pub fn stereo_depth_res(p: &StereoParams, depth: f64) -> f64 {
    depth * depth / (p.baseline * p.focal_px) * p.disparity_res_px
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmcwParams {
    pub f_m: f64,
    /// Illumination power.
    pub p_light: f64,
    /// Ambient power.
    pub p_ambient: f64,
    /// Total illuminated area.
    pub area: f64,
    pub k_optics: f64,
    pub quantum_eff: f64,
    pub reflectivity: f64,
    pub integration_time: f64,
}

/// `δ_z = (c/f_m)·√((P_l + P_a)/P_l · I/(k_o·q_e·ρ·Δt))`
pub fn amcw_range_res(p: &AmcwParams) -> Result<f64> {
    let positive = [p.f_m, p.p_light, p.area, p.k_optics, p.quantum_eff, p.reflectivity, p.integration_time];
    if positive.iter().any(|&v| !(v > 0.0)) || !(p.p_ambient >= 0.0) {
        return Err(Error::invalid("AMCW parameters must be positive"));
    }
    let power = (p.p_light + p.p_ambient) / p.p_light;
    let signal = p.area / (p.k_optics * p.quantum_eff * p.reflectivity * p.integration_time);
    Ok(SPEED_OF_LIGHT / p.f_m * (power * signal).sqrt())
}
