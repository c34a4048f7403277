//! Effective point-spread functions and depletion scan images.
//!
//! The excitation probability is a function of the ion position in the
//! beam transverse plane only. Images are formed by averaging it over the
//! thermal wave packet, either on a 3D grid in trap coordinates
//! ([`convolve_grid`]), by Monte-Carlo sampling ([`mc_convolve`]), or on a 2D
//! quadrature over the transverse marginal of the packet ([`convolve_projected`]).

mod convolve;
mod image;
mod scan;

pub use convolve::{
    convolve_grid, convolve_projected, convolved_excitation, gauss_hermite, mc_convolve, Convolution, Convolver, GridSpec, McEstimate,
};
pub use image::{profile_cut, ImageGrid, Profile};
pub use scan::{scan_image, scan_image_with, AxisRange, ScanSpec};

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::beam::{BeamSpec, RabiMap};
use crate::dynamics::{
    coherent_excitation, dephasing_beta, thermal_excitation_with, ArgumentConvention, BetaVariant, PulseSpec,
};
use crate::error::{ensure_positive, Result};
use crate::frames::{k_projections, FrameSet};
use crate::units::{ThermalState, TransitionSpec, TrapSpec, CONSTANTS};
use crate::wavepacket::{thermal_wavepacket, WavePacket};

/// Per-position excitation model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dynamics {
    /// Coherent `sin²(Ωτ/2)` for an ion at rest.
    PointIon,
    /// Thermally dephased closed form with β from the motional state.
    ThermalClosedForm {
        #[serde(default)]
        variant: BetaVariant,
        #[serde(default)]
        convention: ArgumentConvention,
    },
}

impl Default for Dynamics {
    fn default() -> Self {
        Dynamics::ThermalClosedForm {
            variant: BetaVariant::EtaSquared,
            convention: ArgumentConvention::Normalized,
        }
    }
}

/// Everything needed to evaluate a depletion probability at a position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scene {
    pub beam: BeamSpec,
    pub pulse: PulseSpec,
    pub trap: TrapSpec,
    pub state: ThermalState,
    pub frames: FrameSet,
    pub dynamics: Dynamics,
}

impl Scene {
    pub fn new(beam: BeamSpec, pulse: PulseSpec, trap: TrapSpec, state: ThermalState) -> Self {
        Self {
            beam,
            pulse,
            trap,
            state,
            frames: FrameSet::default(),
            dynamics: Dynamics::default(),
        }
    }

    pub fn with_dynamics(mut self, dynamics: Dynamics) -> Self {
        self.dynamics = dynamics;
        self
    }

    pub fn with_frames(mut self, frames: FrameSet) -> Self {
        self.frames = frames;
        self
    }

    /// Thermal wave packet of the configured state, centred at `center`.
    pub fn wavepacket(&self, center: Vector3<f64>) -> Result<WavePacket> {
        thermal_wavepacket(&self.trap, &self.state, center)
    }

    pub fn kernel(&self) -> Result<ExcitationKernel> {
        self.kernel_for(self.dynamics)
    }

    pub fn kernel_for(&self, dynamics: Dynamics) -> Result<ExcitationKernel> {
        let (beta, convention, coherent) = match dynamics {
            Dynamics::PointIon => (0.0, ArgumentConvention::Normalized, true),
            Dynamics::ThermalClosedForm { variant, convention } => {
                let k = k_projections(&self.frames, self.beam.transition.wavenumber())?;
                (dephasing_beta(&self.trap, &self.state, k, variant)?.beta, convention, false)
            }
        };
        Ok(ExcitationKernel {
            rabi: self.beam.rabi_map(),
            tau: self.pulse.tau(),
            beta,
            convention,
            coherent,
        })
    }
}

/// Depletion probability as a function of beam transverse coordinates.
#[derive(Debug, Clone, Copy)]
pub struct ExcitationKernel {
    rabi: RabiMap,
    tau: f64,
    beta: f64,
    convention: ArgumentConvention,
    coherent: bool,
}

impl ExcitationKernel {
    #[inline]
    pub fn at_xy(&self, x: f64, y: f64) -> f64 {
        let omega = self.rabi.at_xy(x, y);
        if self.coherent {
            coherent_excitation(omega, self.tau)
        } else {
            thermal_excitation_with(omega, self.tau, self.beta, self.convention)
        }
    }

    #[inline]
    pub fn at(&self, p: Vector2<f64>) -> f64 {
        self.at_xy(p.x, p.y)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Closed-form ePSF width for a doughnut beam,
/// `√(π³ ħ c / (3 λ³ Γ)) · w² / (τ √P)`.
///
/// This is the radius at which the near-center Rabi phase `Ω τ` reaches one
/// radian; the quadratic `P_D ∝ r²` profile has no literal standard
/// deviation.
pub fn epsf_sigma(waist: f64, tau: f64, power: f64, transition: &TransitionSpec) -> Result<f64> {
    ensure_positive("waist", waist)?;
    ensure_positive("tau", tau)?;
    ensure_positive("power", power)?;
    let pi3 = std::f64::consts::PI.powi(3);
    let prefactor = (pi3 * CONSTANTS.hbar * CONSTANTS.c / (3.0 * transition.wavelength().powi(3) * transition.linewidth())).sqrt();
    Ok(prefactor * waist * waist / (tau * power.sqrt()))
}

/// Depletion probability against radial distance from the beam axis for an
/// ion at rest at that distance.
pub fn epsf_profile(scene: &Scene, mode: Dynamics, radii: &[f64]) -> Result<Profile> {
    let kernel = scene.kernel_for(mode)?;
    let c = scene.beam.center;
    let values = radii.iter().map(|&r| kernel.at_xy(c.x + r, c.y)).collect();
    Profile::new(radii.to_vec(), values, None)
}
