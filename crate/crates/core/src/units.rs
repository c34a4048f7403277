//! Physical constants, unit handling and the validated parameter records
//! shared by every other module.
//!
//! Everything inside the crate is strict SI. Human-facing strings such as
//! `"4.2um"` or `"2pi*760kHz"` are converted at the boundary by
//! [`parse_quantity`] and printed back with [`format_quantity`].

use std::f64::consts::{E, PI};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_non_negative, ensure_positive, GsdError, Result};

/// CODATA 2018 values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Reduced Planck constant, J·s.
    pub hbar: f64,
    /// Speed of light, m/s.
    pub c: f64,
    /// Unified atomic mass unit, kg.
    pub atomic_mass_unit: f64,
    /// Euler's number.
    pub euler: f64,
}

pub const CONSTANTS: PhysicalConstants = PhysicalConstants {
    hbar: 1.054_571_817e-34,
    c: 299_792_458.0,
    atomic_mass_unit: 1.660_539_066_60e-27,
    euler: E,
};

pub fn default_constants() -> PhysicalConstants {
    CONSTANTS
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        CONSTANTS
    }
}

/// Natural linewidth in cycles per second for a state of the given lifetime,
/// `1 / (2π τ)`. This is the convention under which the ePSF width formula
/// yields its 75 nm prefactor.
pub fn gamma_from_lifetime(lifetime: f64) -> Result<f64> {
    ensure_positive("lifetime", lifetime)?;
    Ok(1.0 / (2.0 * PI * lifetime))
}

/// The depletion transition. The wavenumber is always derived from the
/// wavelength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransitionSpec {
    wavelength: f64,
    linewidth: f64,
}

impl TransitionSpec {
    pub const DEFAULT_WAVELENGTH: f64 = 729e-9;
    pub const DEFAULT_LIFETIME: f64 = 1.168;

    /// `linewidth` is the natural linewidth in Hz (see [`gamma_from_lifetime`]).
    pub fn new(wavelength: f64, linewidth: f64) -> Result<Self> {
        ensure_positive("wavelength", wavelength)?;
        ensure_positive("linewidth", linewidth)?;
        Ok(Self { wavelength, linewidth })
    }

    pub fn from_lifetime(wavelength: f64, lifetime: f64) -> Result<Self> {
        Self::new(wavelength, gamma_from_lifetime(lifetime)?)
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn linewidth(&self) -> f64 {
        self.linewidth
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }
}

impl Default for TransitionSpec {
    fn default() -> Self {
        Self::from_lifetime(Self::DEFAULT_WAVELENGTH, Self::DEFAULT_LIFETIME)
            .expect("default transition is valid")
    }
}

/// Ion mass and the three secular frequencies along the trap axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrapSpec {
    mass: f64,
    omega: [f64; 3],
}

impl TrapSpec {
    pub fn new(mass: f64, omega_x: f64, omega_y: f64, omega_z: f64) -> Result<Self> {
        ensure_positive("mass", mass)?;
        ensure_positive("omega_x", omega_x)?;
        ensure_positive("omega_y", omega_y)?;
        ensure_positive("omega_z", omega_z)?;
        Ok(Self {
            mass,
            omega: [omega_x, omega_y, omega_z],
        })
    }

    pub fn from_amu(mass_amu: f64, omega_x: f64, omega_y: f64, omega_z: f64) -> Result<Self> {
        ensure_positive("mass_amu", mass_amu)?;
        Self::new(mass_amu * CONSTANTS.atomic_mass_unit, omega_x, omega_y, omega_z)
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Secular frequencies (rad/s) ordered x_t, y_t, z_t.
    pub fn omega(&self) -> [f64; 3] {
        self.omega
    }
}

impl Default for TrapSpec {
    /// ⁴⁰Ca⁺ at 2π·1.5 MHz radial and 2π·760 kHz axial.
    fn default() -> Self {
        Self::from_amu(40.0, 2.0 * PI * 1.5e6, 2.0 * PI * 1.5e6, 2.0 * PI * 760e3)
            .expect("default trap is valid")
    }
}

/// Mean phonon numbers per trap mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThermalState {
    nbar: [f64; 3],
}

impl ThermalState {
    pub fn new(nbar_x: f64, nbar_y: f64, nbar_z: f64) -> Result<Self> {
        ensure_non_negative("nbar_x", nbar_x)?;
        ensure_non_negative("nbar_y", nbar_y)?;
        ensure_non_negative("nbar_z", nbar_z)?;
        Ok(Self {
            nbar: [nbar_x, nbar_y, nbar_z],
        })
    }

    pub fn ground() -> Self {
        Self { nbar: [0.0; 3] }
    }

    /// Doppler-limit occupations: 5 radial, 10 axial.
    pub fn doppler() -> Self {
        Self { nbar: [5.0, 5.0, 10.0] }
    }

    pub fn nbar(&self) -> [f64; 3] {
        self.nbar
    }

    pub fn with_axial(&self, nbar_z: f64) -> Result<Self> {
        Self::new(self.nbar[0], self.nbar[1], nbar_z)
    }
}

impl Default for ThermalState {
    fn default() -> Self {
        Self::doppler()
    }
}

/// The unit dimensions understood by the parser.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Unit {
    Meter,
    Second,
    Watt,
    Hertz,
    RadPerSecond,
    Dimensionless,
}

impl Unit {
    fn symbol(self) -> &'static str {
        match self {
            Unit::Meter => "m",
            Unit::Second => "s",
            Unit::Watt => "W",
            Unit::Hertz => "Hz",
            Unit::RadPerSecond => "rad/s",
            Unit::Dimensionless => "",
        }
    }

    fn from_symbol(symbol: &str) -> Option<Unit> {
        Some(match symbol {
            "m" => Unit::Meter,
            "s" => Unit::Second,
            "W" => Unit::Watt,
            "Hz" => Unit::Hertz,
            "rad/s" => Unit::RadPerSecond,
            "" => Unit::Dimensionless,
            _ => return None,
        })
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Unit::Dimensionless => f.write_str("dimensionless"),
            u => f.write_str(u.symbol()),
        }
    }
}

const PREFIXES: [(&str, f64); 6] = [
    ("n", 1e-9),
    ("u", 1e-6),
    ("µ", 1e-6),
    ("m", 1e-3),
    ("k", 1e3),
    ("M", 1e6),
];

/// A value in base SI units together with its dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub value: f64,
    pub unit: Unit,
}

impl Quantity {
    pub fn new(value: f64, unit: Unit) -> Self {
        Self { value, unit }
    }

    /// Returns the SI value if the dimension matches.
    pub fn expect(self, unit: Unit) -> Result<f64> {
        if self.unit == unit {
            Ok(self.value)
        } else {
            Err(GsdError::parse(
                format_quantity(&self),
                format!("expected a quantity in {unit}, found {}", self.unit),
            ))
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_quantity(self))
    }
}

fn split_number(text: &str) -> (&str, &str) {
    let bytes = text.as_bytes();
    let mut i = 0;
    if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
        i += 1;
    }
    while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
        i += 1;
    }
    // exponent only when followed by digits, so "1e-3" parses but "1em" does not
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        if j < bytes.len() && bytes[j].is_ascii_digit() {
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
            i = j;
        }
    }
    text.split_at(i)
}

fn resolve_unit(token: &str) -> Option<(Unit, f64)> {
    if let Some(unit) = Unit::from_symbol(token) {
        return Some((unit, 1.0));
    }
    PREFIXES.iter().find_map(|(prefix, scale)| {
        token
            .strip_prefix(prefix)
            .and_then(|rest| if rest.is_empty() { None } else { Unit::from_symbol(rest) })
            .map(|unit| (unit, *scale))
    })
}

/// Parses `<number><optional whitespace><prefixed unit>` into base SI.
///
/// A leading `2pi*` turns a frequency in Hz into an angular frequency in
/// rad/s, e.g. `"2pi*760kHz"`.
pub fn parse_quantity(text: &str) -> Result<Quantity> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(GsdError::parse(text, "empty quantity"));
    }
    let (angular, body) = match trimmed
        .strip_prefix("2pi*")
        .or_else(|| trimmed.strip_prefix("2π*"))
    {
        Some(rest) => (true, rest.trim_start()),
        None => (false, trimmed),
    };

    let (number, unit_text) = split_number(body);
    if number.is_empty() || number == "+" || number == "-" {
        return Err(GsdError::parse(body, "expected a leading number"));
    }
    let value: f64 = number
        .parse()
        .map_err(|_| GsdError::parse(number, "malformed number"))?;
    if !value.is_finite() {
        return Err(GsdError::parse(number, "number is not finite"));
    }
    let unit_token = unit_text.trim();
    let (unit, scale) =
        resolve_unit(unit_token).ok_or_else(|| GsdError::parse(unit_token, "unknown unit"))?;

    if angular {
        if unit != Unit::Hertz {
            return Err(GsdError::parse(unit_token, "`2pi*` requires a frequency in Hz"));
        }
        return Ok(Quantity::new(2.0 * PI * value * scale, Unit::RadPerSecond));
    }
    Ok(Quantity::new(value * scale, unit))
}

/// Parses and checks the dimension in one go.
pub fn parse_as(text: &str, unit: Unit) -> Result<f64> {
    let q = parse_quantity(text)?;
    if q.unit == Unit::Dimensionless && unit != Unit::Dimensionless {
        return Err(GsdError::parse(text, format!("missing unit, expected {unit}")));
    }
    q.expect(unit)
}

/// Formats with an SI prefix such that the mantissa lies in [1, 1000) where
/// possible. The output parses back to the same value within a few ulp.
pub fn format_quantity(q: &Quantity) -> String {
    if q.unit == Unit::Dimensionless {
        return format!("{}", q.value);
    }
    let magnitude = q.value.abs();
    let (prefix, scale) = if magnitude == 0.0 {
        ("", 1.0)
    } else {
        [("n", 1e-9), ("u", 1e-6), ("m", 1e-3), ("", 1.0), ("k", 1e3), ("M", 1e6)]
            .iter()
            .rev()
            .find(|(_, s)| magnitude >= *s)
            .copied()
            .unwrap_or(("n", 1e-9))
    };
    format!("{}{}{}", q.value / scale, prefix, q.unit.symbol())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn constants_are_codata() {
        let c = default_constants();
        assert!(rel(c.hbar, 1.0546e-34) < 1e-4);
        assert!(rel(c.atomic_mass_unit, 1.6605e-27) < 1e-4);
        assert!(rel(c.euler, 2.718_281_828) < 1e-9);
        assert!(rel(c.hbar * c.c, 3.1615e-26) < 1e-4);
        assert!(c.hbar > 0.0 && c.c > 0.0 && c.atomic_mass_unit > 0.0 && c.euler > 0.0);
    }

    #[test]
    fn parses_examples() {
        let q = parse_quantity("4.2um").unwrap();
        assert_eq!(q.unit, Unit::Meter);
        assert!(rel(q.value, 4.2e-6) < 1e-15);

        let q = parse_quantity("19us").unwrap();
        assert_eq!(q.unit, Unit::Second);
        assert!(rel(q.value, 1.9e-5) < 1e-15);

        let q = parse_quantity("2pi*760kHz").unwrap();
        assert_eq!(q.unit, Unit::RadPerSecond);
        assert!(rel(q.value, 4.775e6) < 1e-3);
        assert!(rel(q.value, 2.0 * PI * 760e3) < 1e-15);
    }

    #[test]
    fn parses_prefix_and_base_ambiguities() {
        assert_eq!(parse_quantity("3 m").unwrap(), Quantity::new(3.0, Unit::Meter));
        assert!(rel(parse_quantity("3mm").unwrap().value, 3e-3) < 1e-15);
        assert!(rel(parse_quantity("250uW").unwrap().value, 250e-6) < 1e-15);
        assert!(rel(parse_quantity("1.2mW").unwrap().value, 1.2e-3) < 1e-15);
        assert!(rel(parse_quantity("1e-3 W").unwrap().value, 1e-3) < 1e-15);
        assert!(rel(parse_quantity("2 Mrad/s").unwrap().value, 2e6) < 1e-15);
        assert_eq!(parse_quantity("40").unwrap(), Quantity::new(40.0, Unit::Dimensionless));
        assert_eq!(parse_quantity("-5nm").unwrap().value, -5e-9);
    }

    #[test]
    fn parse_errors_name_the_token() {
        match parse_quantity("4.2furlongs") {
            Err(GsdError::Parse { token, .. }) => assert_eq!(token, "furlongs"),
            other => panic!("unexpected {other:?}"),
        }
        match parse_quantity("um") {
            Err(GsdError::Parse { .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_quantity("2pi*4um").is_err());
        assert!(parse_quantity("").is_err());
        assert!(parse_as("4", Unit::Meter).is_err());
        assert!(parse_as("4s", Unit::Meter).is_err());
    }

    #[test]
    fn linewidth_from_lifetime() {
        assert!(rel(gamma_from_lifetime(1.168).unwrap(), 0.1363) < 1e-3);
        assert!(rel(gamma_from_lifetime(1.2).unwrap(), 0.1326) < 1e-3);
        assert!(rel(gamma_from_lifetime(1.0 / (2.0 * PI)).unwrap(), 1.0) < 1e-15);
        assert!(gamma_from_lifetime(0.0).is_err());
        assert!(gamma_from_lifetime(-1.0).is_err());
    }

    #[test]
    fn constructors_reject_non_positive() {
        assert!(TransitionSpec::new(0.0, 1.0).is_err());
        assert!(TransitionSpec::new(729e-9, -1.0).is_err());
        assert!(TrapSpec::new(1e-26, 1.0, 0.0, 1.0).is_err());
        assert!(ThermalState::new(0.0, -0.1, 0.0).is_err());
        assert!(ThermalState::new(0.0, 1.5, 0.0).is_ok());
        let t = TransitionSpec::default();
        assert_eq!(t.wavenumber(), 2.0 * PI / t.wavelength());
    }

    proptest! {
        #[test]
        fn format_parse_round_trip(
            mantissa in 1.0f64..1000.0,
            exp in -9i32..=7,
            unit in prop::sample::select(vec![Unit::Meter, Unit::Second, Unit::Watt, Unit::Hertz, Unit::RadPerSecond, Unit::Dimensionless]),
            negative in any::<bool>(),
        ) {
            let value = if negative { -mantissa } else { mantissa } * 10f64.powi(exp);
            let q = Quantity::new(value, unit);
            let back = parse_quantity(&format_quantity(&q)).unwrap();
            prop_assert_eq!(back.unit, unit);
            prop_assert!(rel(back.value, value) < 1e-12);
        }
    }
}
