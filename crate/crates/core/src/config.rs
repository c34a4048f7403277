//! JSON run configuration.
//!
//! Dimensioned fields accept either a bare number in SI base units or a
//! string with a unit, e.g. `"4.2um"` or `"2pi*760kHz"`. Angles are plain
//! numbers in degrees. Unknown keys are rejected with their JSON path.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::PathBuf;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::beam::{BeamShape, BeamSpec};
use crate::budget::SetupSpec;
use crate::dynamics::PulseSpec;
use crate::error::{GsdError, Result};
use crate::fit::{FitOptions, ParamSpec, ProfileAxis};
use crate::frames::FrameSet;
use crate::imaging::{AxisRange, Convolution, Dynamics, ScanSpec, Scene};
use crate::units::{parse_as, ThermalState, TransitionSpec, TrapSpec, Unit};

/// A dimensioned value as written in the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Qty {
    Si(f64),
    Text(String),
}

impl Qty {
    pub fn resolve(&self, path: &str, unit: Unit) -> Result<f64> {
        match self {
            Qty::Si(v) if v.is_finite() => Ok(*v),
            Qty::Si(v) => Err(GsdError::config(path, format!("{v} is not finite"))),
            Qty::Text(s) => parse_as(s, unit).map_err(|e| GsdError::config(path, e.to_string())),
        }
    }
}

impl From<f64> for Qty {
    fn from(v: f64) -> Self {
        Qty::Si(v)
    }
}

impl From<&str> for Qty {
    fn from(s: &str) -> Self {
        Qty::Text(s.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionSection {
    pub wavelength: Qty,
    /// Upper-state lifetime; the linewidth is derived from it unless
    /// `linewidth` (Hz) is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lifetime: Option<Qty>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linewidth: Option<Qty>,
}

impl Default for TransitionSection {
    fn default() -> Self {
        Self {
            wavelength: "729nm".into(),
            lifetime: Some(TransitionSpec::DEFAULT_LIFETIME.into()),
            linewidth: None,
        }
    }
}

impl TransitionSection {
    pub fn build(&self) -> Result<TransitionSpec> {
        let wl = self.wavelength.resolve("transition.wavelength", Unit::Meter)?;
        let spec = match (&self.linewidth, &self.lifetime) {
            (Some(_), Some(_)) => {
                return Err(GsdError::config("transition", "give either lifetime or linewidth, not both"))
            }
            (Some(lw), None) => TransitionSpec::new(wl, lw.resolve("transition.linewidth", Unit::Hertz)?),
            (None, Some(lt)) => TransitionSpec::from_lifetime(wl, lt.resolve("transition.lifetime", Unit::Second)?),
            (None, None) => TransitionSpec::from_lifetime(wl, TransitionSpec::DEFAULT_LIFETIME),
        };
        spec.map_err(|e| GsdError::config("transition", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapSection {
    pub mass_amu: f64,
    pub omega_x: Qty,
    pub omega_y: Qty,
    pub omega_z: Qty,
}

impl Default for TrapSection {
    fn default() -> Self {
        Self {
            mass_amu: 40.0,
            omega_x: "2pi*1.5MHz".into(),
            omega_y: "2pi*1.5MHz".into(),
            omega_z: "2pi*760kHz".into(),
        }
    }
}

impl TrapSection {
    pub fn build(&self) -> Result<TrapSpec> {
        TrapSpec::from_amu(
            self.mass_amu,
            self.omega_x.resolve("trap.omega_x", Unit::RadPerSecond)?,
            self.omega_y.resolve("trap.omega_y", Unit::RadPerSecond)?,
            self.omega_z.resolve("trap.omega_z", Unit::RadPerSecond)?,
        )
        .map_err(|e| GsdError::config("trap", e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSection {
    pub nbar_x: f64,
    pub nbar_y: f64,
    pub nbar_z: f64,
}

impl Default for StateSection {
    fn default() -> Self {
        let [nbar_x, nbar_y, nbar_z] = ThermalState::default().nbar();
        Self { nbar_x, nbar_y, nbar_z }
    }
}

impl StateSection {
    pub fn build(&self) -> Result<ThermalState> {
        ThermalState::new(self.nbar_x, self.nbar_y, self.nbar_z).map_err(|e| GsdError::config("state", e.to_string()))
    }
}

/// Row-major rotation matrices whose columns are the frame axes in lab
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FramesSection {
    pub trap_to_lab: [[f64; 3]; 3],
    pub beam_to_lab: [[f64; 3]; 3],
}

impl FramesSection {
    pub fn build(&self) -> Result<FrameSet> {
        FrameSet::from_rows(self.trap_to_lab, self.beam_to_lab).map_err(|e| GsdError::config("frames", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamSection {
    pub shape: BeamShape,
    pub power: Qty,
    pub waist: Qty,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<[Qty; 2]>,
}

impl Default for BeamSection {
    fn default() -> Self {
        Self {
            shape: BeamShape::Vortex,
            power: "1.2mW".into(),
            waist: "4.2um".into(),
            center: None,
        }
    }
}

impl BeamSection {
    pub fn build(&self, transition: TransitionSpec) -> Result<BeamSpec> {
        let power = self.power.resolve("beam.power", Unit::Watt)?;
        let waist = self.waist.resolve("beam.waist", Unit::Meter)?;
        let mut beam =
            BeamSpec::new(self.shape, power, waist, transition).map_err(|e| GsdError::config("beam", e.to_string()))?;
        if let Some([x, y]) = &self.center {
            let c = Vector2::new(x.resolve("beam.center[0]", Unit::Meter)?, y.resolve("beam.center[1]", Unit::Meter)?);
            beam = beam.with_center(c);
        }
        Ok(beam)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSection {
    pub tau: Qty,
}

impl Default for PulseSection {
    fn default() -> Self {
        Self { tau: "19us".into() }
    }
}

impl PulseSection {
    pub fn build(&self) -> Result<PulseSpec> {
        PulseSpec::new(self.tau.resolve("pulse.tau", Unit::Second)?).map_err(|e| GsdError::config("pulse", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSection {
    pub start: Qty,
    pub stop: Qty,
    pub pixels: usize,
}

impl RangeSection {
    fn build(&self, path: &str) -> Result<AxisRange> {
        AxisRange::new(
            self.start.resolve(&format!("{path}.start"), Unit::Meter)?,
            self.stop.resolve(&format!("{path}.stop"), Unit::Meter)?,
            self.pixels,
        )
        .map_err(|e| GsdError::config(path, e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    /// Beam displacement along y_B.
    pub a: RangeSection,
    /// Ion displacement along z_t.
    pub b: RangeSection,
    /// Binomial resampling of each pixel, if set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<u32>,
    #[serde(default)]
    pub pgm: bool,
}

impl ScanSection {
    pub fn build(&self) -> Result<ScanSpec> {
        Ok(ScanSpec {
            a: self.a.build("scan.a")?,
            b: self.b.build("scan.b")?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSection {
    pub name: String,
    pub initial: Qty,
    pub lower: Qty,
    pub upper: Qty,
}

/// The unit a profile-model parameter is expressed in.
pub fn param_unit(name: &str) -> Unit {
    match name {
        "sigma_z" | "offset" => Unit::Meter,
        "power" => Unit::Watt,
        _ => Unit::Dimensionless,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    #[serde(default)]
    pub axis: ProfileAxis,
    pub free: Vec<ParamSection>,
    #[serde(default)]
    pub fixed: BTreeMap<String, Qty>,
    /// Shots per point when the data file has no uncertainty column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<u32>,
    #[serde(default)]
    pub options: FitOptions,
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            axis: ProfileAxis::IonAxial,
            free: vec![
                ParamSection {
                    name: "sigma_z".into(),
                    initial: "40nm".into(),
                    lower: "18.3nm".into(),
                    upper: "200nm".into(),
                },
                ParamSection {
                    name: "power".into(),
                    initial: "1mW".into(),
                    lower: "10uW".into(),
                    upper: "10mW".into(),
                },
                ParamSection {
                    name: "offset".into(),
                    initial: 0.0.into(),
                    lower: "-100nm".into(),
                    upper: "100nm".into(),
                },
            ],
            fixed: BTreeMap::new(),
            shots: Some(10),
            options: FitOptions::default(),
        }
    }
}

impl FitSection {
    pub fn free_params(&self) -> Result<Vec<ParamSpec>> {
        self.free
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let path = format!("fit.free[{i}]");
                let unit = param_unit(&p.name);
                ParamSpec::new(
                    p.name.clone(),
                    p.initial.resolve(&format!("{path}.initial"), unit)?,
                    p.lower.resolve(&format!("{path}.lower"), unit)?,
                    p.upper.resolve(&format!("{path}.upper"), unit)?,
                )
                .map_err(|e| GsdError::config(path, e.to_string()))
            })
            .collect()
    }

    pub fn fixed_params(&self) -> Result<BTreeMap<String, f64>> {
        self.fixed
            .iter()
            .map(|(k, v)| Ok((k.clone(), v.resolve(&format!("fit.fixed.{k}"), param_unit(k))?)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waist: Option<Qty>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<Qty>,
    #[serde(default = "default_theta_b")]
    pub theta_b_deg: f64,
    #[serde(default = "default_gamma_pol")]
    pub gamma_pol_deg: f64,
    #[serde(default = "default_gamma_reference")]
    pub gamma_reference_deg: f64,
    #[serde(default = "default_pol_error")]
    pub pol_error: f64,
    #[serde(default = "default_delta")]
    pub delta: Qty,
    #[serde(default = "default_leakage")]
    pub leakage_factor: f64,
    #[serde(default = "default_p_max")]
    pub p_max: f64,
}

fn default_theta_b() -> f64 {
    SetupSpec::default().theta_b.to_degrees()
}
fn default_gamma_pol() -> f64 {
    SetupSpec::default().gamma_pol.to_degrees()
}
fn default_gamma_reference() -> f64 {
    SetupSpec::default().gamma_reference.to_degrees()
}
fn default_pol_error() -> f64 {
    SetupSpec::default().pol_error
}
fn default_delta() -> Qty {
    "2pi*4MHz".into()
}
fn default_leakage() -> f64 {
    SetupSpec::default().leakage_factor
}
fn default_p_max() -> f64 {
    0.01
}

impl Default for BudgetSection {
    fn default() -> Self {
        Self {
            waist: None,
            tau: None,
            theta_b_deg: default_theta_b(),
            gamma_pol_deg: default_gamma_pol(),
            gamma_reference_deg: default_gamma_reference(),
            pol_error: default_pol_error(),
            delta: default_delta(),
            leakage_factor: default_leakage(),
            p_max: default_p_max(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stem: Option<String>,
}

/// Complete run description. Every section is optional and falls back to
/// the defaults of the corresponding library type.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub transition: TransitionSection,
    #[serde(default)]
    pub trap: TrapSection,
    #[serde(default)]
    pub state: StateSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<FramesSection>,
    #[serde(default)]
    pub beam: BeamSection,
    #[serde(default)]
    pub pulse: PulseSection,
    #[serde(default)]
    pub dynamics: Dynamics,
    #[serde(default)]
    pub grid: Convolution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanSection>,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub budget: BudgetSection,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            GsdError::config(path, e.into_inner().to_string())
        })
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GsdError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn scene(&self) -> Result<Scene> {
        let transition = self.transition.build()?;
        let mut scene = Scene::new(
            self.beam.build(transition)?,
            self.pulse.build()?,
            self.trap.build()?,
            self.state.build()?,
        )
        .with_dynamics(self.dynamics);
        if let Some(f) = &self.frames {
            scene = scene.with_frames(f.build()?);
        }
        Ok(scene)
    }

    /// The budget setup; waist and pulse length default to the beam and
    /// pulse sections.
    pub fn setup(&self) -> Result<SetupSpec> {
        let b = &self.budget;
        let waist = match &b.waist {
            Some(w) => w.resolve("budget.waist", Unit::Meter)?,
            None => self.beam.waist.resolve("beam.waist", Unit::Meter)?,
        };
        let tau = match &b.tau {
            Some(t) => t.resolve("budget.tau", Unit::Second)?,
            None => self.pulse.tau.resolve("pulse.tau", Unit::Second)?,
        };
        let setup = SetupSpec {
            waist,
            tau,
            transition: self.transition.build()?,
            theta_b: b.theta_b_deg * PI / 180.0,
            gamma_pol: b.gamma_pol_deg * PI / 180.0,
            gamma_reference: b.gamma_reference_deg * PI / 180.0,
            pol_error: b.pol_error,
            delta: b.delta.resolve("budget.delta", Unit::RadPerSecond)?,
            leakage_factor: b.leakage_factor,
        };
        setup.validate().map_err(|e| GsdError::config("budget", e.to_string()))?;
        if !(b.p_max > 0.0 && b.p_max <= 1.0) {
            return Err(GsdError::config("budget.p_max", format!("must lie in (0, 1], got {}", b.p_max)));
        }
        Ok(setup)
    }
}
