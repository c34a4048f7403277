use nalgebra::{DMatrix, Matrix2, SymmetricEigen, Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Scene;
use crate::error::{GsdError, Result};
use crate::frames::beam_transverse_coords;
use crate::wavepacket::WavePacket;

/// Cubic integration grid in trap coordinates, centred on the wave packet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub points_per_axis: usize,
    /// Edge length of the cube, metres.
    pub extent: f64,
}

impl GridSpec {
    pub fn new(points_per_axis: usize, extent: f64) -> Result<Self> {
        if points_per_axis < 8 {
            return Err(GsdError::domain(format!("grid needs at least 8 points per axis, got {points_per_axis}")));
        }
        if !(extent.is_finite() && extent > 0.0) {
            return Err(GsdError::domain(format!("grid extent must be positive, got {extent}")));
        }
        Ok(Self { points_per_axis, extent })
    }

    /// 512³ over 1 µm³, a 2 nm step.
    pub fn publication() -> Self {
        Self { points_per_axis: 512, extent: 1e-6 }
    }

    pub fn step(&self) -> f64 {
        self.extent / self.points_per_axis as f64
    }

    fn check(&self, wp: &WavePacket) -> Result<()> {
        let step = self.step();
        if step > wp.min_sigma() / 4.0 {
            return Err(GsdError::Accuracy(format!(
                "grid too coarse: step {step:e} m exceeds sigma_min/4 = {:e} m",
                wp.min_sigma() / 4.0
            )));
        }
        if self.extent < 8.0 * wp.max_sigma() {
            return Err(GsdError::Accuracy(format!(
                "grid too small: extent {:e} m is below 8 sigma_max = {:e} m",
                self.extent,
                8.0 * wp.max_sigma()
            )));
        }
        Ok(())
    }
}

impl Default for GridSpec {
    /// 128³ over 1 µm³.
    fn default() -> Self {
        Self { points_per_axis: 128, extent: 1e-6 }
    }
}

/// How the excitation probability is averaged over the wave packet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Convolution {
    /// No averaging: probability at the packet centre.
    Disabled,
    /// Full 3D grid in trap coordinates.
    Grid(GridSpec),
    /// Gauss-Hermite rule over the transverse marginal, `points` nodes per axis.
    Projected { points: usize },
}

impl Default for Convolution {
    fn default() -> Self {
        Convolution::Grid(GridSpec::default())
    }
}

pub fn convolved_excitation(scene: &Scene, wp: &WavePacket, method: &Convolution) -> Result<f64> {
    Convolver::new(*method)?.apply(scene, wp)
}

/// A [`Convolution`] with any quadrature rule precomputed, for repeated use.
#[derive(Debug, Clone)]
pub struct Convolver {
    method: Convolution,
    rule: Option<(Vec<f64>, Vec<f64>)>,
}

impl Convolver {
    pub fn new(method: Convolution) -> Result<Self> {
        let rule = match method {
            Convolution::Projected { points } => Some(projected_rule(points)?),
            _ => None,
        };
        Ok(Self { method, rule })
    }

    pub fn apply(&self, scene: &Scene, wp: &WavePacket) -> Result<f64> {
        match (&self.method, &self.rule) {
            (Convolution::Disabled, _) => {
                let kernel = scene.kernel()?;
                Ok(kernel.at(beam_transverse_coords(&scene.frames, &wp.center)))
            }
            (Convolution::Grid(grid), _) => convolve_grid(scene, wp, grid),
            (Convolution::Projected { .. }, Some((z, w))) => convolve_projected_with(scene, wp, z, w),
            (Convolution::Projected { points }, None) => convolve_projected(scene, wp, *points),
        }
    }
}

/// Normalised Gaussian weights at cell centres plus the analytic mass
/// captured by the grid along this axis.
fn axis_weights(sigma: f64, grid: &GridSpec) -> (Vec<f64>, Vec<f64>, f64) {
    let n = grid.points_per_axis;
    let step = grid.step();
    let coords: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * step - 0.5 * grid.extent).collect();
    let raw: Vec<f64> = coords.iter().map(|u| (-0.5 * (u / sigma).powi(2)).exp()).collect();
    let sum: f64 = raw.iter().sum();
    let mass = sum * step / ((2.0 * std::f64::consts::PI).sqrt() * sigma);
    (coords, raw.into_iter().map(|w| w / sum).collect(), mass)
}

/// Average of the excitation probability over the wave packet on a cubic
/// grid in trap coordinates.
///
/// The density is renormalised on the grid. Slabs along the first trap axis
/// are evaluated in parallel and reduced in index order, so the result does
/// not depend on the number of threads.
pub fn convolve_grid(scene: &Scene, wp: &WavePacket, grid: &GridSpec) -> Result<f64> {
    grid.check(wp)?;
    let kernel = scene.kernel()?;
    let sigma = wp.sigma();
    let axes: Vec<_> = sigma.iter().map(|&s| axis_weights(s, grid)).collect();
    let mass: f64 = axes.iter().map(|a| a.2).product();
    if 1.0 - mass > 1e-3 {
        return Err(GsdError::Accuracy(format!(
            "grid captures only {mass} of the wave packet; increase the extent"
        )));
    }

    let m = scene.frames.trap_to_transverse();
    let t0 = beam_transverse_coords(&scene.frames, &wp.center);
    // transverse offsets contributed by each trap axis
    let contrib: Vec<Vec<Vector2<f64>>> = (0..3)
        .map(|a| axes[a].0.iter().map(|&u| m.column(a).into_owned() * u).collect())
        .collect();
    let (wx, wy, wz) = (&axes[0].1, &axes[1].1, &axes[2].1);

    let slabs: Vec<f64> = (0..grid.points_per_axis)
        .into_par_iter()
        .map(|i| {
            let base = t0 + contrib[0][i];
            let mut slab = 0.0;
            for (j, wyj) in wy.iter().enumerate() {
                let row = base + contrib[1][j];
                let mut line = 0.0;
                for (k, wzk) in wz.iter().enumerate() {
                    let p = row + contrib[2][k];
                    line += wzk * kernel.at_xy(p.x, p.y);
                }
                slab += wyj * line;
            }
            slab
        })
        .collect();
    let total: f64 = wx.iter().zip(&slabs).map(|(w, s)| w * s).sum();
    Ok(total.clamp(0.0, 1.0))
}

/// Covariance of the wave packet projected on the beam transverse plane.
pub(crate) fn transverse_covariance(scene: &Scene, wp: &WavePacket) -> Matrix2<f64> {
    let m = scene.frames.trap_to_transverse();
    let s2 = nalgebra::Matrix3::from_diagonal(&Vector3::from(wp.sigma().map(|s| s * s)));
    m * s2 * m.transpose()
}

/// Nodes and weights of the `n`-point Gauss-Hermite rule for a standard
/// normal weight (weights sum to one), by Golub-Welsch.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let jacobi = DMatrix::from_fn(n, n, |i, j| if i + 1 == j || j + 1 == i { (i.max(j) as f64).sqrt() } else { 0.0 });
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Average over the transverse marginal of the wave packet.
///
/// The beam does not vary along its axis, so integrating the longitudinal
/// coordinate out of the density first gives the same result as the 3D
/// grid at a fraction of the cost. The excitation probability is analytic
/// in the transverse coordinates, so a tensor Gauss-Hermite rule with
/// `order` nodes per axis in whitened coordinates converges quickly.
pub fn convolve_projected(scene: &Scene, wp: &WavePacket, order: usize) -> Result<f64> {
    let (z, w) = projected_rule(order)?;
    convolve_projected_with(scene, wp, &z, &w)
}

pub(crate) fn projected_rule(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(4..=64).contains(&order) {
        return Err(GsdError::domain(format!("projected rule needs 4..=64 nodes, got {order}")));
    }
    Ok(gauss_hermite(order))
}

pub(crate) fn convolve_projected_with(scene: &Scene, wp: &WavePacket, z: &[f64], w: &[f64]) -> Result<f64> {
    let kernel = scene.kernel()?;
    let cov = transverse_covariance(scene, wp);
    let l11 = cov[(0, 0)].sqrt();
    let l21 = if l11 > 0.0 { cov[(1, 0)] / l11 } else { 0.0 };
    let l22 = (cov[(1, 1)] - l21 * l21).max(0.0).sqrt();

    let t0 = beam_transverse_coords(&scene.frames, &wp.center);
    let mut total = 0.0;
    for (a, wa) in z.iter().zip(w) {
        let x = t0.x + l11 * a;
        let y0 = t0.y + l21 * a;
        let mut line = 0.0;
        for (b, wb) in z.iter().zip(w) {
            line += wb * kernel.at_xy(x, y0 + l22 * b);
        }
        total += wa * line;
    }
    Ok(total.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Monte-Carlo average over positions drawn from the wave packet.
pub fn mc_convolve(scene: &Scene, wp: &WavePacket, samples: usize, seed: u64) -> Result<McEstimate> {
    if samples < 1000 {
        return Err(GsdError::domain(format!("need at least 1000 samples, got {samples}")));
    }
    let kernel = scene.kernel()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = wp.sigma();
    let (mut mean, mut m2) = (0.0, 0.0);
    for n in 1..=samples {
        let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
        let local = Vector3::new(sigma[0] * draw(), sigma[1] * draw(), sigma[2] * draw());
        let lab = wp.center + scene.frames.trap_to_lab_point(&local);
        let p = kernel.at(beam_transverse_coords(&scene.frames, &lab));
        let delta = p - mean;
        mean += delta / n as f64;
        m2 += delta * (p - mean);
    }
    let var = m2 / (samples - 1) as f64;
    Ok(McEstimate {
        mean,
        std_error: (var / samples as f64).sqrt(),
        samples,
    })
}
