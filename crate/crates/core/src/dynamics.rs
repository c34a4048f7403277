//! Coherent and thermally dephased excitation of the depletion transition,
//! Lamb-Dicke parameters and sideband thermometry.
//!
//! Throughout, `omega` is the on-resonance Rabi frequency such that a cold,
//! point-like ion ends up in the upper state with probability
//! `sin²(Ω τ / 2)`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_non_negative, ensure_positive, GsdError, Result};
use crate::units::{ThermalState, TrapSpec, CONSTANTS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PulseSpec {
    tau: f64,
}

impl PulseSpec {
    pub fn new(tau: f64) -> Result<Self> {
        ensure_positive("tau", tau)?;
        Ok(Self { tau })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

/// How the per-mode dephasing weights are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaVariant {
    /// `β = Σ η² n̄`, the thermal average of `Ω_n = Ω (1 - η² n)`.
    #[default]
    EtaSquared,
    /// `β = Σ η n̄`, linear in η.
    Verbatim,
}

/// Argument of the dephased closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgumentConvention {
    /// `φ = Ω τ`; reduces to `sin²(Ω τ / 2)` at β = 0.
    #[default]
    Normalized,
    /// `φ = 2 Ω τ`, literal form; reduces to `sin²(Ω τ)` at β = 0.
    Verbatim,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DephasingBeta {
    pub beta: f64,
    pub per_mode: [f64; 3],
}

impl DephasingBeta {
    pub const ZERO: DephasingBeta = DephasingBeta {
        beta: 0.0,
        per_mode: [0.0; 3],
    };

    pub fn from_modes(per_mode: [f64; 3]) -> Result<Self> {
        for c in per_mode {
            ensure_non_negative("beta contribution", c)?;
        }
        Ok(Self {
            beta: per_mode.iter().sum(),
            per_mode,
        })
    }
}

pub fn coherent_excitation(omega: f64, tau: f64) -> f64 {
    (0.5 * omega * tau).sin().powi(2)
}

/// `η = k √(ħ / 2 m ω)` for a wavevector component `k_eff` along the mode.
pub fn lamb_dicke(k_eff: f64, mass: f64, omega_mode: f64) -> Result<f64> {
    ensure_positive("k_eff", k_eff)?;
    ensure_positive("mass", mass)?;
    ensure_positive("omega_mode", omega_mode)?;
    Ok(k_eff * (CONSTANTS.hbar / (2.0 * mass * omega_mode)).sqrt())
}

/// Lamb-Dicke parameters of all three modes; a zero projection gives η = 0.
pub fn lamb_dicke_all(trap: &TrapSpec, k_projections: [f64; 3]) -> Result<[f64; 3]> {
    let omega = trap.omega();
    let mut eta = [0.0; 3];
    for i in 0..3 {
        ensure_non_negative("k projection", k_projections[i])?;
        if k_projections[i] > 0.0 {
            eta[i] = lamb_dicke(k_projections[i], trap.mass(), omega[i])?;
        }
    }
    Ok(eta)
}

pub fn dephasing_beta(
    trap: &TrapSpec,
    state: &ThermalState,
    k_projections: [f64; 3],
    variant: BetaVariant,
) -> Result<DephasingBeta> {
    let eta = lamb_dicke_all(trap, k_projections)?;
    let nbar = state.nbar();
    let per_mode = [0, 1, 2].map(|i| match variant {
        BetaVariant::EtaSquared => eta[i] * eta[i] * nbar[i],
        BetaVariant::Verbatim => eta[i] * nbar[i],
    });
    DephasingBeta::from_modes(per_mode)
}

/// Excitation averaged over a thermal spread of Rabi frequencies:
/// `½ [1 - (cos φ + φβ sin φ) / (1 + (φβ)²)]` with `φ = Ω τ`.
pub fn thermal_excitation(omega: f64, tau: f64, beta: &DephasingBeta) -> f64 {
    thermal_excitation_with(omega, tau, beta.beta, ArgumentConvention::Normalized)
}

#[inline]
pub fn thermal_excitation_with(omega: f64, tau: f64, beta: f64, convention: ArgumentConvention) -> f64 {
    let phi = match convention {
        ArgumentConvention::Normalized => omega * tau,
        ArgumentConvention::Verbatim => 2.0 * omega * tau,
    };
    let pb = phi * beta;
    let (s, c) = phi.sin_cos();
    let p = 0.5 * (1.0 - (c + pb * s) / (1.0 + pb * pb));
    p.clamp(0.0, 1.0)
}

/// Ratio q = n̄/(n̄+1) and the geometric weights (1-q) qⁿ up to `n_max`.
fn geometric_weights(nbar: f64, n_max: usize) -> Vec<f64> {
    if nbar == 0.0 {
        return vec![1.0];
    }
    let q = nbar / (nbar + 1.0);
    let mut w = Vec::with_capacity(n_max + 1);
    let mut term = 1.0 - q;
    for _ in 0..=n_max {
        w.push(term);
        term *= q;
    }
    w
}

/// Smallest cutoff with tail weight `q^(n+1)` below `tol`.
fn adaptive_cutoff(nbar: f64, tol: f64) -> usize {
    if nbar == 0.0 {
        return 0;
    }
    let q = nbar / (nbar + 1.0);
    (tol.ln() / q.ln()).ceil().max(1.0) as usize
}

/// Brute-force thermal average over Fock states,
/// `Σ p(n) sin²(Ω_n τ / 2)` with `Ω_n = Ω Π (1 - η_i² n_i)`.
///
/// With `n_max = None` the cutoff is chosen per mode so the discarded
/// thermal weight stays below 1e-9.
pub fn thermal_excitation_fock_oracle(
    omega: f64,
    tau: f64,
    trap: &TrapSpec,
    state: &ThermalState,
    k_projections: [f64; 3],
    n_max: Option<usize>,
) -> Result<f64> {
    ensure_non_negative("omega", omega)?;
    ensure_positive("tau", tau)?;
    let eta = lamb_dicke_all(trap, k_projections)?;
    let nbar = state.nbar();
    let cutoffs = match n_max {
        Some(n) => [n; 3],
        None => nbar.map(|nb| adaptive_cutoff(nb, 1e-9 / 3.0)),
    };
    let weights: Vec<Vec<f64>> = (0..3).map(|i| geometric_weights(nbar[i], cutoffs[i])).collect();
    let retained: f64 = weights.iter().map(|w| w.iter().sum::<f64>()).product();
    if retained < 1.0 - 1e-9 {
        return Err(GsdError::Accuracy(format!(
            "Fock cutoff {cutoffs:?} keeps only {retained} of the thermal weight"
        )));
    }
    let factors: Vec<Vec<f64>> = (0..3)
        .map(|i| {
            (0..weights[i].len())
                .map(|n| 1.0 - eta[i] * eta[i] * n as f64)
                .collect()
        })
        .collect();

    let half_phase = 0.5 * omega * tau;
    let mut total = 0.0;
    for (wx, fx) in weights[0].iter().zip(&factors[0]) {
        for (wy, fy) in weights[1].iter().zip(&factors[1]) {
            let wxy = wx * wy;
            if wxy < 1e-300 {
                continue;
            }
            let fxy = fx * fy;
            let mut inner = 0.0;
            for (wz, fz) in weights[2].iter().zip(&factors[2]) {
                inner += wz * (half_phase * fxy * fz).sin().powi(2);
            }
            total += wxy * inner;
        }
    }
    Ok(total / retained)
}

pub fn sideband_excitation_ratio(nbar: f64) -> Result<f64> {
    ensure_non_negative("nbar", nbar)?;
    Ok(nbar / (nbar + 1.0))
}

/// A value with its one-sigma uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub value: f64,
    pub sigma: f64,
}

impl Measured {
    pub fn new(value: f64, sigma: f64) -> Self {
        Self { value, sigma }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, sigma: 0.0 }
    }

    /// Excitation probability from `shots` repetitions with binomial error.
    pub fn binomial(p: f64, shots: u32) -> Self {
        let n = shots.max(1) as f64;
        Self {
            value: p,
            sigma: (p * (1.0 - p) / n).sqrt(),
        }
    }
}

/// `n̄ = p / (1 - p)` with `p = P_rsb / P_bsb`.
pub fn nbar_from_sideband_ratio(p_rsb: f64, p_bsb: f64) -> Result<f64> {
    Ok(nbar_from_sidebands(Measured::exact(p_rsb), Measured::exact(p_bsb))?.value)
}

/// Same as [`nbar_from_sideband_ratio`] with first-order error propagation.
pub fn nbar_from_sidebands(rsb: Measured, bsb: Measured) -> Result<Measured> {
    let (r, b) = (rsb.value, bsb.value);
    if !(r.is_finite() && b.is_finite()) || r < 0.0 || b <= 0.0 || b > 1.0 {
        return Err(GsdError::domain(format!(
            "sideband probabilities must satisfy 0 <= rsb and 0 < bsb <= 1, got {r}, {b}"
        )));
    }
    if r >= b {
        return Err(GsdError::domain(format!(
            "red/blue sideband ratio {} >= 1 has no thermal solution",
            r / b
        )));
    }
    let p = r / b;
    let nbar = p / (1.0 - p);
    // dp = p √((σr/r)² + (σb/b)²), written to stay finite at r = 0
    let sigma_p = ((rsb.sigma / b).powi(2) + (r * bsb.sigma / (b * b)).powi(2)).sqrt();
    let sigma = sigma_p / (1.0 - p).powi(2);
    Ok(Measured::new(nbar, sigma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{k_projections, FrameSet};
    use crate::units::TransitionSpec;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn beta(b: f64) -> DephasingBeta {
        DephasingBeta { beta: b, per_mode: [0.0, 0.0, b] }
    }

    /// A trap whose z mode has the requested η for k = 2π/729 nm along z.
    fn single_mode(eta: f64) -> (TrapSpec, [f64; 3]) {
        let k = TransitionSpec::default().wavenumber();
        let mass = TrapSpec::default().mass();
        let omega = CONSTANTS.hbar * k * k / (2.0 * mass * eta * eta);
        (TrapSpec::new(mass, 1.0, 1.0, omega).unwrap(), [0.0, 0.0, k])
    }

    #[test]
    fn coherent_examples() {
        let tau = 19e-6;
        assert_eq!(coherent_excitation(0.0, tau), 0.0);
        assert!((coherent_excitation(PI / tau, tau) - 1.0).abs() < 1e-15);
        assert!((coherent_excitation(1.0 / tau, tau) - 0.22985).abs() < 1e-5);
    }

    #[test]
    fn lamb_dicke_examples() {
        let k = TransitionSpec::default().wavenumber();
        let trap = TrapSpec::default();
        let wz = trap.omega()[2];
        let eta = lamb_dicke(k, trap.mass(), wz).unwrap();
        assert!((eta - 0.111).abs() < 5e-4, "{eta}");
        // cross-check through the ground-state width
        let s0 = crate::wavepacket::ground_state_width(trap.mass(), wz).unwrap();
        assert!((eta - k * s0 / 2f64.sqrt()).abs() < 1e-12);
        assert!((lamb_dicke(k, trap.mass(), 4.0 * wz).unwrap() / eta - 0.5).abs() < 1e-14);
        assert!((lamb_dicke(k / 2f64.sqrt(), trap.mass(), wz).unwrap() - 0.0786).abs() < 2e-4);
        assert!(lamb_dicke(0.0, trap.mass(), wz).is_err());
    }

    #[test]
    fn beta_examples() {
        let (trap, kp) = single_mode(0.111);
        let b = dephasing_beta(&trap, &ThermalState::ground(), kp, BetaVariant::EtaSquared).unwrap();
        assert_eq!(b.beta, 0.0);
        let hot = ThermalState::new(0.0, 0.0, 10.0).unwrap();
        let b = dephasing_beta(&trap, &hot, kp, BetaVariant::EtaSquared).unwrap();
        assert!((b.beta - 0.1232).abs() < 1e-4);
        let b = dephasing_beta(&trap, &hot, kp, BetaVariant::Verbatim).unwrap();
        assert!((b.beta - 1.11).abs() < 1e-9);

        let frames = FrameSet::default();
        let kp = k_projections(&frames, TransitionSpec::default().wavenumber()).unwrap();
        let b = dephasing_beta(&TrapSpec::default(), &ThermalState::doppler(), kp, BetaVariant::EtaSquared).unwrap();
        assert!((b.beta - b.per_mode.iter().sum::<f64>()).abs() < 1e-15);
    }

    #[test]
    fn thermal_examples() {
        let tau = 20e-6;
        for omega in [0.0, 1e4, 3e5, 2e6] {
            assert_eq!(thermal_excitation(omega, tau, &DephasingBeta::ZERO), {
                let c = (omega * tau).cos();
                (0.5 * (1.0 - c)).clamp(0.0, 1.0)
            });
            assert!((thermal_excitation(omega, tau, &DephasingBeta::ZERO) - coherent_excitation(omega, tau)).abs() < 1e-15);
        }
        assert!((thermal_excitation(1e6, tau, &beta(1e9)) - 0.5).abs() < 1e-6);
        let p = thermal_excitation(PI / tau, tau, &beta(0.1232));
        // ½[1 + 1/(1 + (0.1232π)²)]
        assert!((p - 0.934857).abs() < 1e-5, "{p}");
    }

    #[test]
    fn verbatim_convention_doubles_the_argument() {
        let tau = 10e-6;
        let omega = 0.3 / tau;
        let v = thermal_excitation_with(omega, tau, 0.0, ArgumentConvention::Verbatim);
        assert!((v - (omega * tau).sin().powi(2)).abs() < 1e-15);
    }

    #[test]
    fn fock_oracle_examples() {
        let tau = 20e-6;
        let (trap, kp) = single_mode(0.1);
        let omega = PI / tau;
        let cold = thermal_excitation_fock_oracle(omega, tau, &trap, &ThermalState::ground(), kp, None).unwrap();
        assert!((cold - coherent_excitation(omega, tau)).abs() < 1e-15);
        let a = thermal_excitation_fock_oracle(0.7 * omega, tau, &trap, &ThermalState::ground(), kp, Some(0)).unwrap();
        let b = thermal_excitation_fock_oracle(0.7 * omega, tau, &trap, &ThermalState::ground(), kp, Some(100)).unwrap();
        assert_eq!(a, b);

        let warm = ThermalState::new(0.0, 0.0, 5.0).unwrap();
        let oracle = thermal_excitation_fock_oracle(omega, tau, &trap, &warm, kp, None).unwrap();
        let b = dephasing_beta(&trap, &warm, kp, BetaVariant::EtaSquared).unwrap();
        let closed = thermal_excitation(omega, tau, &b);
        assert!((oracle - closed).abs() < 2e-2, "{oracle} vs {closed}");

        assert!(matches!(
            thermal_excitation_fock_oracle(omega, tau, &trap, &warm, kp, Some(10)),
            Err(GsdError::Accuracy(_))
        ));
    }

    #[test]
    fn sideband_ratio_examples() {
        assert_eq!(sideband_excitation_ratio(0.0).unwrap(), 0.0);
        assert_eq!(sideband_excitation_ratio(1.0).unwrap(), 0.5);
        assert!((sideband_excitation_ratio(1.1).unwrap() - 0.5238).abs() < 1e-4);
        assert_eq!(nbar_from_sideband_ratio(0.0, 0.4).unwrap(), 0.0);
        assert!((nbar_from_sideband_ratio(0.5238 * 0.6, 0.6).unwrap() - 1.1).abs() < 1e-3);
        assert!(nbar_from_sideband_ratio(0.5, 0.5).is_err());
        assert!(nbar_from_sideband_ratio(0.6, 0.5).is_err());
        assert!(nbar_from_sideband_ratio(0.1, 0.0).is_err());
    }

    #[test]
    fn sideband_uncertainty_from_shots() {
        let m = nbar_from_sidebands(Measured::binomial(0.2, 50), Measured::binomial(0.4, 50)).unwrap();
        assert!((m.value - 1.0).abs() < 1e-12);
        // finite-difference propagation check
        let f = |r: f64, b: f64| (r / b) / (1.0 - r / b);
        let (sr, sb) = (Measured::binomial(0.2, 50).sigma, Measured::binomial(0.4, 50).sigma);
        let h = 1e-7;
        let dr = (f(0.2 + h, 0.4) - f(0.2 - h, 0.4)) / (2.0 * h);
        let db = (f(0.2, 0.4 + h) - f(0.2, 0.4 - h)) / (2.0 * h);
        let expected = ((dr * sr).powi(2) + (db * sb).powi(2)).sqrt();
        assert!((m.sigma - expected).abs() < 1e-6 * expected);
    }

    proptest! {
        #[test]
        fn probabilities_in_unit_interval(omega in 0.0f64..1e7, tau in 1e-7f64..1e-4, b in 0.0f64..10.0) {
            let p = thermal_excitation(omega, tau, &beta(b));
            prop_assert!((0.0..=1.0).contains(&p));
            let c = coherent_excitation(omega, tau);
            prop_assert!((0.0..=1.0).contains(&c));
        }

        #[test]
        fn contrast_envelope_non_increasing_in_beta(phi in 0.0f64..30.0, b1 in 0.0f64..5.0, b2 in 0.0f64..5.0, n in 0u32..10) {
            let (lo, hi) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
            // |P - 1/2| = |cos(φ - atan φβ)| / (2 √(1 + (φβ)²)); the envelope decays with β
            let envelope = |b: f64| 0.5 / (1.0 + (phi * b).powi(2)).sqrt();
            prop_assert!(envelope(hi) <= envelope(lo));
            let c = |b: f64| (thermal_excitation_with(phi, 1.0, b, ArgumentConvention::Normalized) - 0.5).abs();
            prop_assert!(c(hi) <= envelope(hi) + 1e-12);
            // at the fringe extrema φ = nπ the contrast itself is monotone
            let extremum = n as f64 * PI;
            let ce = |b: f64| (thermal_excitation_with(extremum, 1.0, b, ArgumentConvention::Normalized) - 0.5).abs();
            prop_assert!(ce(hi) <= ce(lo) + 1e-12);
        }

        #[test]
        fn thermometry_round_trip(nbar in 0.0f64..100.0, q in 0.01f64..1.0) {
            let r = sideband_excitation_ratio(nbar).unwrap();
            let back = nbar_from_sideband_ratio(r * q, q).unwrap();
            prop_assert!((back - nbar).abs() <= 1e-12 * nbar.max(1.0));
        }
    }
}
