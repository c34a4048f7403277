use nalgebra::Vector2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Convolution, Convolver, ImageGrid, Scene};
use crate::error::{GsdError, Result};

/// Evenly spaced positions, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisRange {
    pub start: f64,
    pub stop: f64,
    pub pixels: usize,
}

impl AxisRange {
    pub fn new(start: f64, stop: f64, pixels: usize) -> Result<Self> {
        if pixels == 0 {
            return Err(GsdError::domain("axis needs at least one pixel"));
        }
        if !(start.is_finite() && stop.is_finite()) {
            return Err(GsdError::domain("axis bounds must be finite"));
        }
        if pixels > 1 && start == stop {
            return Err(GsdError::domain("axis with several pixels needs distinct bounds"));
        }
        Ok(Self { start, stop, pixels })
    }

    pub fn coords(&self) -> Vec<f64> {
        if self.pixels == 1 {
            return vec![0.5 * (self.start + self.stop)];
        }
        let step = (self.stop - self.start) / (self.pixels - 1) as f64;
        (0..self.pixels).map(|i| self.start + step * i as f64).collect()
    }
}

/// Image axes: `a` moves the beam along its second transverse axis, `b`
/// moves the ion along the trap axial direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanSpec {
    pub a: AxisRange,
    pub b: AxisRange,
}

pub fn scan_image(scene: &Scene, scan: &ScanSpec) -> Result<ImageGrid> {
    scan_image_with(scene, scan, &Convolution::default())
}

/// Depletion image; pixels are independent and evaluated in parallel.
pub fn scan_image_with(scene: &Scene, scan: &ScanSpec, method: &Convolution) -> Result<ImageGrid> {
    let a = scan.a.coords();
    let b = scan.b.coords();
    let base = scene.wavepacket(nalgebra::Vector3::zeros())?;
    let z_t = scene.frames.trap_axis(2);
    let beam_center = scene.beam.center;
    let convolver = Convolver::new(*method)?;
    let values = (0..a.len() * b.len())
        .into_par_iter()
        .map(|idx| {
            let (row, col) = (idx / a.len(), idx % a.len());
            let mut s = *scene;
            s.beam = s.beam.with_center(beam_center + Vector2::new(0.0, a[col]));
            let wp = base.with_center(base.center + z_t * b[row]);
            convolver.apply(&s, &wp)
        })
        .collect::<Result<Vec<f64>>>()?;
    ImageGrid::new(a, b, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beam::BeamSpec;
    use crate::dynamics::PulseSpec;
    use crate::units::{ThermalState, TrapSpec};

    #[test]
    fn axis_coords() {
        assert_eq!(AxisRange::new(-1.0, 1.0, 3).unwrap().coords(), vec![-1.0, 0.0, 1.0]);
        assert_eq!(AxisRange::new(-1.0, 3.0, 1).unwrap().coords(), vec![1.0]);
        assert!(AxisRange::new(0.0, 1.0, 0).is_err());
        assert!(AxisRange::new(1.0, 1.0, 2).is_err());
    }

    #[test]
    fn scan_is_ordered_and_symmetric() {
        let scene = Scene::new(
            BeamSpec::vortex(1.2e-3, 4.2e-6).unwrap(),
            PulseSpec::new(19e-6).unwrap(),
            TrapSpec::default(),
            ThermalState::doppler(),
        );
        let spec = ScanSpec {
            a: AxisRange::new(-200e-9, 200e-9, 9).unwrap(),
            b: AxisRange::new(-100e-9, 100e-9, 3).unwrap(),
        };
        let img = scan_image_with(&scene, &spec, &Convolution::Projected { points: 16 }).unwrap();
        assert_eq!(img.values.len(), 27);
        for row in 0..3 {
            for col in 0..9 {
                assert!((img.get(col, row) - img.get(8 - col, row)).abs() < 1e-9);
            }
        }
        // the dark centre is at a = 0 in the middle row
        let mid = img.row(1);
        assert!(mid[4] < mid[0]);
        let point = scan_image_with(&scene, &spec, &Convolution::Disabled).unwrap();
        assert!(point.get(4, 1) < 1e-12);
    }
}
