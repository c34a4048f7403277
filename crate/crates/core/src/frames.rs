//! Lab, trap and beam coordinate frames.
//!
//! Each frame is a rotation whose columns are that frame's unit axes written
//! in lab coordinates. The beam propagates along its third axis; its first
//! two axes span the transverse plane in which the intensity is defined.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::Serialize;

use crate::error::{GsdError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameSet {
    trap_to_lab: Matrix3<f64>,
    beam_to_lab: Matrix3<f64>,
}

fn check_rotation(name: &str, m: &Matrix3<f64>) -> Result<()> {
    let ortho = (m.transpose() * m - Matrix3::identity()).abs().max();
    let det = m.determinant();
    if !(ortho <= 1e-12) || !((det - 1.0).abs() <= 1e-12) {
        return Err(GsdError::domain(format!(
            "{name} is not a proper rotation (|RᵀR - I| = {ortho:e}, det = {det})"
        )));
    }
    Ok(())
}

impl FrameSet {
    pub fn new(trap_to_lab: Matrix3<f64>, beam_to_lab: Matrix3<f64>) -> Result<Self> {
        check_rotation("trap_to_lab", &trap_to_lab)?;
        check_rotation("beam_to_lab", &beam_to_lab)?;
        Ok(Self { trap_to_lab, beam_to_lab })
    }

    /// Builds from row-major 3×3 arrays as they appear in configuration files.
    pub fn from_rows(trap: [[f64; 3]; 3], beam: [[f64; 3]; 3]) -> Result<Self> {
        let m = |r: [[f64; 3]; 3]| Matrix3::from_fn(|i, j| r[i][j]);
        Self::new(m(trap), m(beam))
    }

    pub fn trap_to_lab(&self) -> &Matrix3<f64> {
        &self.trap_to_lab
    }

    pub fn beam_to_lab(&self) -> &Matrix3<f64> {
        &self.beam_to_lab
    }

    /// Trap axis `i` (0 = x_t, 1 = y_t, 2 = z_t) in lab coordinates.
    pub fn trap_axis(&self, i: usize) -> Vector3<f64> {
        self.trap_to_lab.column(i).into_owned()
    }

    pub fn beam_axis(&self, i: usize) -> Vector3<f64> {
        self.beam_to_lab.column(i).into_owned()
    }

    /// Unit wavevector direction (third beam axis).
    pub fn propagation(&self) -> Vector3<f64> {
        self.beam_axis(2)
    }

    pub fn lab_to_trap(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.trap_to_lab.transpose() * p
    }

    pub fn trap_to_lab_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.trap_to_lab * p
    }

    pub fn lab_to_beam(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.beam_to_lab.transpose() * p
    }

    /// Rotates both frames by the same lab rotation.
    pub fn rotated(&self, r: &Matrix3<f64>) -> Result<Self> {
        Self::new(r * self.trap_to_lab, r * self.beam_to_lab)
    }

    /// 2×3 map from trap coordinates to beam transverse coordinates.
    pub fn trap_to_transverse(&self) -> nalgebra::Matrix2x3<f64> {
        let m = self.beam_to_lab.transpose() * self.trap_to_lab;
        m.fixed_view::<2, 3>(0, 0).into_owned()
    }
}

impl Default for FrameSet {
    /// Trap axes ((x+y)/√2, (y-x)/√2, z); beam axes ((x+z)/√2, y, (z-x)/√2).
    fn default() -> Self {
        let s = FRAC_1_SQRT_2;
        let trap = Matrix3::from_columns(&[
            Vector3::new(s, s, 0.0),
            Vector3::new(-s, s, 0.0),
            Vector3::new(0.0, 0.0, 1.0),
        ]);
        let beam = Matrix3::from_columns(&[
            Vector3::new(s, 0.0, s),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(-s, 0.0, s),
        ]);
        Self::new(trap, beam).expect("default frames are rotations")
    }
}

/// Components of a lab point along the two transverse beam axes.
pub fn beam_transverse_coords(frames: &FrameSet, point_lab: &Vector3<f64>) -> Vector2<f64> {
    let b = frames.lab_to_beam(point_lab);
    Vector2::new(b.x, b.y)
}

/// Magnitudes of the beam wavevector projected on the trap axes,
/// `k |k̂ · ê_i|`, ordered x_t, y_t, z_t.
pub fn k_projections(frames: &FrameSet, k: f64) -> Result<[f64; 3]> {
    if !(k.is_finite() && k > 0.0) {
        return Err(GsdError::domain(format!("wavenumber must be positive, got {k}")));
    }
    let khat = frames.propagation();
    Ok([0, 1, 2].map(|i| k * khat.dot(&frames.trap_axis(i)).abs()))
}
