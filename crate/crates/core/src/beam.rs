//! Transverse intensity of the depletion beam and the intensity to Rabi
//! frequency map.
//!
//! The beam profile has no axial dependence: within a wave packet the beam is
//! taken as constant along its propagation direction.

use std::f64::consts::PI;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_non_negative, ensure_positive, GsdError, Result};
use crate::units::{TransitionSpec, CONSTANTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BeamShape {
    /// First-order Laguerre-Gauss doughnut (l = -1, σ = -1).
    Vortex,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BeamSpec {
    pub shape: BeamShape,
    power: f64,
    waist: f64,
    /// Beam axis position in the beam transverse frame (x_B, y_B), metres.
    pub center: Vector2<f64>,
    pub transition: TransitionSpec,
}

impl BeamSpec {
    pub fn new(shape: BeamShape, power: f64, waist: f64, transition: TransitionSpec) -> Result<Self> {
        ensure_non_negative("power", power)?;
        ensure_positive("waist", waist)?;
        Ok(Self {
            shape,
            power,
            waist,
            center: Vector2::zeros(),
            transition,
        })
    }

    pub fn vortex(power: f64, waist: f64) -> Result<Self> {
        Self::new(BeamShape::Vortex, power, waist, TransitionSpec::default())
    }

    pub fn gaussian(power: f64, waist: f64) -> Result<Self> {
        Self::new(BeamShape::Gaussian, power, waist, TransitionSpec::default())
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn waist(&self) -> f64 {
        self.waist
    }

    pub fn with_power(mut self, power: f64) -> Result<Self> {
        self.power = ensure_non_negative("power", power)?;
        Ok(self)
    }

    pub fn with_center(mut self, center: Vector2<f64>) -> Self {
        self.center = center;
        self
    }

    /// Intensity at distance `r` from the beam axis for either shape.
    pub fn intensity(&self, r: f64) -> Result<f64> {
        match self.shape {
            BeamShape::Vortex => lg01_intensity(r, self),
            BeamShape::Gaussian => gaussian_intensity(r, self),
        }
    }

    /// Precomputed closure-free evaluator for inner loops.
    pub fn rabi_map(&self) -> RabiMap {
        RabiMap {
            shape: self.shape,
            peak: 2.0 * self.power / (PI * self.waist * self.waist),
            inv_w2: 1.0 / (self.waist * self.waist),
            coupling: rabi_coupling(&self.transition),
            center: self.center,
        }
    }
}

fn check_radius(r: f64) -> Result<()> {
    if r.is_finite() && r >= 0.0 {
        Ok(())
    } else {
        Err(GsdError::domain(format!("radius must be non-negative, got {r}")))
    }
}

/// Normalised l = ±1 Laguerre-Gauss doughnut:
/// `I(r) = (2P/(π w²)) (2r²/w²) exp(-2r²/w²)`.
pub fn lg01_intensity(r: f64, beam: &BeamSpec) -> Result<f64> {
    check_radius(r)?;
    if beam.shape != BeamShape::Vortex {
        return Err(GsdError::domain("lg01_intensity requires a vortex beam"));
    }
    let x = 2.0 * r * r / (beam.waist * beam.waist);
    Ok(2.0 * beam.power / (PI * beam.waist * beam.waist) * x * (-x).exp())
}

pub fn gaussian_intensity(r: f64, beam: &BeamSpec) -> Result<f64> {
    check_radius(r)?;
    if beam.shape != BeamShape::Gaussian {
        return Err(GsdError::domain("gaussian_intensity requires a gaussian beam"));
    }
    let x = 2.0 * r * r / (beam.waist * beam.waist);
    Ok(2.0 * beam.power / (PI * beam.waist * beam.waist) * (-x).exp())
}

/// Quadratic approximation of the doughnut near its dark center,
/// `4 r² P / (π w⁴)`.
pub fn near_center_intensity(r: f64, beam: &BeamSpec) -> Result<f64> {
    if !r.is_finite() {
        return Err(GsdError::domain("radius must be finite"));
    }
    if beam.shape != BeamShape::Vortex {
        return Err(GsdError::domain("near_center_intensity requires a vortex beam"));
    }
    Ok(4.0 * r * r * beam.power / (PI * beam.waist.powi(4)))
}

/// `Ω² / I` for the quadrupole transition, `3λ³Γ / (4π² ħ c)`.
pub fn rabi_coupling(t: &TransitionSpec) -> f64 {
    3.0 * t.wavelength().powi(3) * t.linewidth() / (4.0 * PI * PI * CONSTANTS.hbar * CONSTANTS.c)
}

/// On-resonance Rabi frequency (rad/s) for intensity `I` (W/m²).
pub fn rabi_frequency(intensity: f64, t: &TransitionSpec) -> Result<f64> {
    ensure_non_negative("intensity", intensity)?;
    Ok((intensity * rabi_coupling(t)).sqrt())
}

/// Rabi frequency at a point of the beam transverse plane.
pub fn rabi_at(point: Vector2<f64>, beam: &BeamSpec) -> f64 {
    beam.rabi_map().at(point)
}

/// Beam evaluator with the constant factors folded in.
#[derive(Debug, Clone, Copy)]
pub struct RabiMap {
    shape: BeamShape,
    peak: f64,
    inv_w2: f64,
    coupling: f64,
    center: Vector2<f64>,
}

impl RabiMap {
    #[inline]
    pub fn intensity_r2(&self, r2: f64) -> f64 {
        let x = 2.0 * r2 * self.inv_w2;
        match self.shape {
            BeamShape::Vortex => self.peak * x * (-x).exp(),
            BeamShape::Gaussian => self.peak * (-x).exp(),
        }
    }

    #[inline]
    pub fn at(&self, point: Vector2<f64>) -> f64 {
        self.at_xy(point.x, point.y)
    }

    #[inline]
    pub fn at_xy(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.center.x;
        let dy = y - self.center.y;
        (self.intensity_r2(dx * dx + dy * dy) * self.coupling).sqrt()
    }
}
