use std::collections::BTreeMap;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{binomial_sigma, least_squares, FitOptions, FitResult, ParamSpec};
use crate::dynamics::{nbar_from_sidebands, Measured};
use crate::error::{GsdError, Result};
use crate::imaging::{Convolution, Convolver, Profile, Scene};
use crate::units::ThermalState;
use crate::wavepacket::ground_state_width;

/// Direction along which a 1D depletion profile is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileAxis {
    /// Ion displaced along the trap axis z_t, beam fixed.
    #[default]
    IonAxial,
    /// Beam displaced along its second transverse axis, ion fixed.
    BeamTransverse,
}

/// Depletion profile of a thermal ion, parameterised by name.
///
/// Recognised parameters: `nbar_z` or `sigma_z` (m), `nbar_rad` (or
/// `nbar_x`/`nbar_y`), `power` (W), `offset` (m, profile centre) and
/// `background` (additive). Anything not given keeps the value in `scene`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GsdProfileModel {
    pub scene: Scene,
    pub axis: ProfileAxis,
    pub convolution: Convolution,
}

const KNOWN: [&str; 8] = ["nbar_z", "sigma_z", "nbar_rad", "nbar_x", "nbar_y", "power", "offset", "background"];

impl GsdProfileModel {
    pub fn new(scene: Scene, axis: ProfileAxis, convolution: Convolution) -> Self {
        Self { scene, axis, convolution }
    }

    fn axial_sigma0(&self) -> Result<f64> {
        ground_state_width(self.scene.trap.mass(), self.scene.trap.omega()[2])
    }

    /// `n̄_z` that gives an axial width `sigma_z`.
    pub fn nbar_for_sigma(&self, sigma_z: f64) -> Result<f64> {
        let s0 = self.axial_sigma0()?;
        if !(sigma_z >= s0) {
            return Err(GsdError::domain(format!(
                "sigma_z = {sigma_z:e} m is below the ground-state width {s0:e} m"
            )));
        }
        Ok(0.5 * ((sigma_z / s0).powi(2) - 1.0))
    }

    pub fn sigma_for_nbar(&self, nbar_z: f64) -> Result<f64> {
        crate::wavepacket::thermal_width(self.axial_sigma0()?, nbar_z)
    }

    pub fn evaluate(&self, params: &BTreeMap<String, f64>, x: &[f64]) -> Result<Vec<f64>> {
        if let Some(bad) = params.keys().find(|k| !KNOWN.contains(&k.as_str())) {
            return Err(GsdError::domain(format!("unknown profile parameter `{bad}`")));
        }
        if params.contains_key("nbar_z") && params.contains_key("sigma_z") {
            return Err(GsdError::domain("give either nbar_z or sigma_z, not both"));
        }
        let mut scene = self.scene;
        let [mut nx, mut ny, mut nz] = scene.state.nbar();
        if let Some(&v) = params.get("nbar_rad") {
            nx = v;
            ny = v;
        }
        if let Some(&v) = params.get("nbar_x") {
            nx = v;
        }
        if let Some(&v) = params.get("nbar_y") {
            ny = v;
        }
        if let Some(&v) = params.get("nbar_z") {
            nz = v;
        }
        if let Some(&v) = params.get("sigma_z") {
            nz = self.nbar_for_sigma(v)?;
        }
        scene.state = ThermalState::new(nx, ny, nz)?;
        if let Some(&p) = params.get("power") {
            scene.beam = scene.beam.with_power(p)?;
        }
        let offset = params.get("offset").copied().unwrap_or(0.0);
        let background = params.get("background").copied().unwrap_or(0.0);

        let base = scene.wavepacket(Vector3::zeros())?;
        let z_t = scene.frames.trap_axis(2);
        let y_b = scene.frames.beam_axis(1);
        let convolver = Convolver::new(self.convolution)?;
        x.par_iter()
            .map(|&xi| {
                let d = xi - offset;
                let wp = match self.axis {
                    ProfileAxis::IonAxial => base.with_center(z_t * d),
                    // moving the beam by +d is moving the ion by -d
                    ProfileAxis::BeamTransverse => base.with_center(-y_b * d),
                };
                Ok(convolver.apply(&scene, &wp)? + background)
            })
            .collect()
    }
}

/// Evaluates the profile model with convolution as configured; pass a
/// model whose convolution is [`Convolution::Disabled`] for the point-ion
/// curve.
pub fn gsd_profile_model(model: &GsdProfileModel, params: &BTreeMap<String, f64>, x: &[f64]) -> Result<Vec<f64>> {
    model.evaluate(params, x)
}

/// Fits a depletion profile. `sigma_z` (or `nbar_z`) is added to the
/// estimates as a derived quantity when its partner is free.
pub fn fit_gsd_profile(
    model: &GsdProfileModel,
    data: &Profile,
    sigma: &[f64],
    free: &[ParamSpec],
    fixed: &BTreeMap<String, f64>,
    opts: &FitOptions,
) -> Result<FitResult> {
    if let Some(p) = free.iter().find(|p| fixed.contains_key(&p.name)) {
        return Err(GsdError::domain(format!("`{}` is both free and fixed", p.name)));
    }
    let f = |p: &[f64]| {
        let mut all = fixed.clone();
        for (spec, v) in free.iter().zip(p) {
            all.insert(spec.name.clone(), *v);
        }
        model.evaluate(&all, &data.coordinate)
    };
    let mut result = least_squares(&f, &data.value, sigma, free, opts)?;
    if let (Some(n), Some(dn)) = (result.get("nbar_z"), result.sigma("nbar_z")) {
        let s = model.sigma_for_nbar(n)?;
        let s0 = model.axial_sigma0()?;
        // dσ/dn̄ = σ0² / σ
        result.estimates.insert("sigma_z".into(), s);
        result.uncertainties.insert("sigma_z".into(), s0 * s0 / s * dn);
    } else if let (Some(s), Some(ds)) = (result.get("sigma_z"), result.sigma("sigma_z")) {
        let s0 = model.axial_sigma0()?;
        result.estimates.insert("nbar_z".into(), model.nbar_for_sigma(s)?);
        result.uncertainties.insert("nbar_z".into(), s / (s0 * s0) * ds);
    }
    Ok(result)
}

/// Profile fit for data averaged over `shots` repetitions per point.
///
/// A first pass weights points by the binomial error of the observed
/// probabilities. Observed zeros then carry the floor error and pull the
/// fit towards a darker centre, so the weights are recomputed from the
/// fitted model and the fit repeated from its last estimate until no free
/// parameter moves by more than a tenth of its uncertainty.
pub fn fit_gsd_profile_shots(
    model: &GsdProfileModel,
    data: &Profile,
    shots: u32,
    free: &[ParamSpec],
    fixed: &BTreeMap<String, f64>,
    opts: &FitOptions,
) -> Result<FitResult> {
    const MAX_PASSES: usize = 6;
    let observed: Vec<f64> = data.value.iter().map(|&p| binomial_sigma(p, shots)).collect();
    let mut current = fit_gsd_profile(model, data, &observed, free, fixed, opts)?;
    let mut iterations = current.iterations;
    let local = FitOptions { multistart: false, ..*opts };
    for _ in 1..MAX_PASSES {
        let mut at_fit = fixed.clone();
        let mut restart = Vec::with_capacity(free.len());
        for spec in free {
            let v = current.get(&spec.name).unwrap_or(spec.initial);
            at_fit.insert(spec.name.clone(), v);
            restart.push(ParamSpec { initial: v.clamp(spec.lower, spec.upper), ..spec.clone() });
        }
        let predicted = model.evaluate(&at_fit, &data.coordinate)?;
        let weights: Vec<f64> = predicted.iter().map(|&p| binomial_sigma(p, shots)).collect();
        let next = fit_gsd_profile(model, data, &weights, &restart, fixed, &local)?;
        iterations += next.iterations;
        let settled = free.iter().all(|spec| {
            let (a, b) = (current.get(&spec.name).unwrap_or(0.0), next.get(&spec.name).unwrap_or(0.0));
            (a - b).abs() <= 0.1 * next.sigma(&spec.name).unwrap_or(0.0)
        });
        current = next;
        if settled {
            break;
        }
    }
    current.iterations = iterations;
    Ok(current)
}

/// Lorentzian line fit and the fitted peak height `A + b`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LorentzianFit {
    #[serde(flatten)]
    pub result: FitResult,
    pub peak: Measured,
}

pub fn lorentzian(x: f64, amplitude: f64, center: f64, gamma: f64, background: f64) -> f64 {
    amplitude * gamma * gamma / ((x - center).powi(2) + gamma * gamma) + background
}

/// Fits `A γ² / ((x - x0)² + γ²) + b`. Without per-point sigma all points are
/// weighted equally and the covariance is scaled by the reduced χ².
pub fn fit_lorentzian(spectrum: &Profile, sigma: Option<&[f64]>, opts: &FitOptions) -> Result<LorentzianFit> {
    let (x, y) = (&spectrum.coordinate, &spectrum.value);
    if y.len() < 5 {
        return Err(GsdError::InsufficientData { points: y.len(), free: 4 });
    }
    let uniform = vec![1.0; y.len()];
    let sigma = sigma.or(spectrum.uncertainty.as_deref()).unwrap_or(&uniform);

    let (ymin, ymax) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, &v| (a.0.min(v), a.1.max(v)));
    let (xmin, xmax) = (x[0].min(x[x.len() - 1]), x[0].max(x[x.len() - 1]));
    let span = xmax - xmin;
    let dx = span / (x.len() - 1) as f64;
    let range = ymax - ymin;
    let imax = (0..y.len()).max_by(|&a, &b| y[a].total_cmp(&y[b])).unwrap_or(0);
    let above = y.iter().filter(|&&v| v - ymin >= 0.5 * range).count().max(1);
    let gamma0 = (0.5 * above as f64 * dx).clamp(0.25 * dx, span);
    let pad = 1e-3 * ymax.abs().max(1.0);

    let params = vec![
        ParamSpec::new("amplitude", range, 0.0, 2.0 * range + pad)?,
        ParamSpec::new("center", x[imax], xmin, xmax)?,
        ParamSpec::new("gamma", gamma0, 0.25 * dx, span)?,
        ParamSpec::new("background", ymin, ymin - range - pad, ymax + pad)?,
    ];
    let f = |p: &[f64]| Ok(x.iter().map(|&xi| lorentzian(xi, p[0], p[1], p[2], p[3])).collect());
    let result = least_squares(&f, y, sigma, &params, opts)?;

    let a = result.get("amplitude").unwrap_or(0.0);
    if a <= 1e-12 * ymax.abs().max(1e-300) {
        return Err(GsdError::RankDeficient {
            first: "amplitude".into(),
            second: "center".into(),
        });
    }
    let b = result.get("background").unwrap_or(0.0);
    let var = result.covariance_of("amplitude", "amplitude").unwrap_or(0.0)
        + result.covariance_of("background", "background").unwrap_or(0.0)
        + 2.0 * result.covariance_of("amplitude", "background").unwrap_or(0.0);
    Ok(LorentzianFit {
        peak: Measured::new(a + b, var.max(0.0).sqrt()),
        result,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Thermometry {
    /// `None` when the red sideband is identically zero.
    pub red: Option<LorentzianFit>,
    pub blue: LorentzianFit,
    pub ratio: f64,
    pub nbar: Measured,
}

/// `n̄` from red and blue sideband spectra via their fitted peak heights.
/// A spectrum with no resolvable peak on the red side counts as `n̄ = 0`.
pub fn thermometry(
    red: &Profile,
    red_sigma: Option<&[f64]>,
    blue: &Profile,
    blue_sigma: Option<&[f64]>,
    opts: &FitOptions,
) -> Result<Thermometry> {
    let blue_fit = fit_lorentzian(blue, blue_sigma, opts)?;
    let red_fit = match fit_lorentzian(red, red_sigma, opts) {
        Ok(f) => f,
        Err(GsdError::RankDeficient { .. }) if red.value.iter().all(|&v| v == 0.0) => {
            return Ok(Thermometry {
                nbar: nbar_from_sidebands(Measured::exact(0.0), blue_fit.peak)?,
                ratio: 0.0,
                red: None,
                blue: blue_fit,
            })
        }
        Err(e) => return Err(e),
    };
    let nbar = nbar_from_sidebands(red_fit.peak, blue_fit.peak)?;
    Ok(Thermometry {
        ratio: red_fit.peak.value / blue_fit.peak.value,
        red: Some(red_fit),
        blue: blue_fit,
        nbar,
    })
}
