//! Thermal Gaussian wave packets of a harmonically bound ion.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::Serialize;

use crate::error::{ensure_non_negative, ensure_positive, Result};
use crate::frames::FrameSet;
use crate::units::{ThermalState, TrapSpec, CONSTANTS};

/// Gaussian position distribution with standard deviations along the trap
/// axes, centred at a lab-frame point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WavePacket {
    sigma: [f64; 3],
    pub center: Vector3<f64>,
}

impl WavePacket {
    pub fn new(sigma: [f64; 3], center: Vector3<f64>) -> Result<Self> {
        for (name, s) in ["sigma_x", "sigma_y", "sigma_z"].iter().zip(sigma) {
            ensure_positive(name, s)?;
        }
        Ok(Self { sigma, center })
    }

    pub fn sigma(&self) -> [f64; 3] {
        self.sigma
    }

    pub fn with_center(mut self, center: Vector3<f64>) -> Self {
        self.center = center;
        self
    }

    pub fn max_sigma(&self) -> f64 {
        self.sigma.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_sigma(&self) -> f64 {
        self.sigma.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// `√(ħ / m ω)`.
pub fn ground_state_width(mass: f64, omega: f64) -> Result<f64> {
    ensure_positive("mass", mass)?;
    ensure_positive("omega", omega)?;
    Ok((CONSTANTS.hbar / (mass * omega)).sqrt())
}

/// `σ₀ √(2n̄ + 1)`.
pub fn thermal_width(sigma0: f64, nbar: f64) -> Result<f64> {
    ensure_positive("sigma0", sigma0)?;
    ensure_non_negative("nbar", nbar)?;
    Ok(sigma0 * (2.0 * nbar + 1.0).sqrt())
}

pub fn thermal_wavepacket(trap: &TrapSpec, state: &ThermalState, center: Vector3<f64>) -> Result<WavePacket> {
    let omega = trap.omega();
    let nbar = state.nbar();
    let mut sigma = [0.0; 3];
    for i in 0..3 {
        sigma[i] = thermal_width(ground_state_width(trap.mass(), omega[i])?, nbar[i])?;
    }
    WavePacket::new(sigma, center)
}

/// Probability density (1/m³) at a lab point.
pub fn density(wp: &WavePacket, frames: &FrameSet, point_lab: &Vector3<f64>) -> f64 {
    let local = frames.lab_to_trap(&(point_lab - wp.center));
    let [sx, sy, sz] = wp.sigma;
    let q = (local.x / sx).powi(2) + (local.y / sy).powi(2) + (local.z / sz).powi(2);
    (-0.5 * q).exp() / ((2.0 * PI).powf(1.5) * sx * sy * sz)
}
