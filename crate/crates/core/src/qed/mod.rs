//! Steady state of a coherently driven atom-cavity system.
//!
//! Conventions, fixed once for the whole crate:
//!
//! * every rate and detuning here is an angular frequency (rad/s);
//! * `Δ_c = ω_l − ω_c` is the probe detuning from the bare cavity;
//! * `Δ_ac = ω_a − ω_c` is the atom detuning from the bare cavity;
//! * `Δ_a = Δ_c − Δ_ac` is the probe detuning from the atom.
//!
//! Worked example: with the atom 35 MHz *below* the cavity
//! (`Δ_ac = −2π·35 MHz`) and the probe on the bare cavity (`Δ_c = 0`),
//! the probe sits 35 MHz above the atom, `Δ_a = +2π·35 MHz`.
//!
//! In the weak-excitation limit the atom behaves as a second damped
//! oscillator and the intracavity field is
//! `a = η / [(κ − iΔ_c) + g² / (γ − iΔ_a)]`.
//! [`master_equation_steady_state`] solves the full driven Jaynes–Cummings
//! master equation in a truncated Fock space as an independent check.

mod master;

use num_complex::Complex64;

pub use master::{master_equation_steady_state, MasterSolution, DEFAULT_FOCK_TRUNCATION};

use crate::error::{Error, Result};
use crate::modes::{CavityGeometry, ModeProfile, Position};
use crate::units::mhz_to_angular;

/// Photon number above which the weak-excitation formulas are flagged.
pub const SATURATION_PHOTONS: f64 = 0.5;
/// Atomic excitation above which the weak-excitation formulas are flagged.
pub const SATURATION_EXCITATION: f64 = 0.1;

/// Rates and detunings of the coupled system (all angular).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QedParams {
    /// Maximum atom-cavity coupling.
    pub g0: f64,
    /// Cavity field decay rate.
    pub kappa: f64,
    /// Atomic polarization decay rate.
    pub gamma: f64,
    /// Probe detuning from the bare cavity, `ω_l − ω_c`.
    pub delta_c: f64,
    /// Atom detuning from the bare cavity, `ω_a − ω_c`.
    pub delta_ac: f64,
    /// Coherent drive amplitude η.
    pub drive: f64,
    /// Overall probability that a photon leaving the cavity is detected.
    pub detection_efficiency: f64,
}

impl QedParams {
    /// `(g0, κ, γ)/2π = (16, 1.4, 3) MHz`, `Δ_ac/2π = −35 MHz`, probe on
    /// the bare cavity, 5 % detection efficiency, drive giving 0.44 photons
    /// in the empty resonant cavity.
    pub fn reference() -> Self {
        let kappa = mhz_to_angular(1.4);
        Self {
            g0: mhz_to_angular(16.0),
            kappa,
            gamma: mhz_to_angular(3.0),
            delta_c: 0.0,
            delta_ac: mhz_to_angular(-35.0),
            drive: kappa * 0.44f64.sqrt(),
            detection_efficiency: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(Error::InvalidParams("kappa must be positive".into()));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidParams("gamma must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.detection_efficiency) {
            return Err(Error::InvalidParams(
                "detection efficiency must lie in [0, 1]".into(),
            ));
        }
        if ![self.g0, self.delta_c, self.delta_ac, self.drive]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::InvalidParams("non-finite rate or detuning".into()));
        }
        Ok(())
    }

    /// Probe detuning from the atom, `Δ_a = Δ_c − Δ_ac`.
    pub fn delta_a(&self) -> f64 {
        self.delta_c - self.delta_ac
    }

    pub fn with_delta_c(mut self, delta_c: f64) -> Self {
        self.delta_c = delta_c;
        self
    }

    pub fn with_drive(mut self, drive: f64) -> Self {
        self.drive = drive;
        self
    }

    /// Sets the drive so the empty cavity on resonance holds `photons`.
    pub fn with_empty_cavity_photons(self, photons: f64) -> Self {
        let kappa = self.kappa;
        self.with_drive(kappa * photons.max(0.0).sqrt())
    }

    /// Photon number of the empty cavity on resonance for this drive.
    pub fn empty_cavity_photons(&self) -> f64 {
        (self.drive / self.kappa).powi(2)
    }

    /// Rescales the drive so that the coupled system at `g_eff` holds
    /// exactly `photons` intracavity photons.
    pub fn normalized_to_photons(self, g_eff: f64, photons: f64) -> Result<Self> {
        let unit = steady_state_response(&self.with_drive(1.0), g_eff)?;
        if unit.photon_number <= 0.0 {
            return Err(Error::InvalidParams("system does not respond to the drive".into()));
        }
        Ok(self.with_drive((photons / unit.photon_number).sqrt()))
    }

    /// Photon detection rate (1/s) for a given intracavity photon number:
    /// all photons leave at `2κ`, a fraction `detection_efficiency` is counted.
    pub fn detected_rate(&self, photons: f64) -> f64 {
        2.0 * self.kappa * photons * self.detection_efficiency
    }
}

/// Steady-state observables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QedResponse {
    /// `⟨a⟩ κ / η`: field relative to the empty resonant cavity.
    pub field_ratio: Complex64,
    /// `⟨a†a⟩`.
    pub photon_number: f64,
    /// `⟨σ⁺σ⁻⟩`.
    pub atomic_excitation: f64,
    /// Spontaneous scattering rate into free space, `2γ⟨σ⁺σ⁻⟩` (1/s).
    pub scatter_rate: f64,
    /// Outside the weak-excitation regime.
    pub saturation_warning: bool,
    /// Master-equation only: the top Fock level is populated.
    pub truncation_warning: bool,
}

impl QedResponse {
    /// `|⟨a⟩κ/η|²`.
    pub fn relative_transmission(&self) -> f64 {
        self.field_ratio.norm_sqr()
    }
}

/// Weak-excitation steady state for an atom coupled with strength `g_eff`.
pub fn steady_state_response(params: &QedParams, g_eff: f64) -> Result<QedResponse> {
    params.validate()?;
    let field_ratio = field_ratio_unchecked(params, g_eff);
    let field = field_ratio * (params.drive / params.kappa);
    let photon_number = field.norm_sqr();
    let delta_a = params.delta_a();
    let atomic_excitation =
        photon_number * g_eff * g_eff / (delta_a * delta_a + params.gamma * params.gamma);
    Ok(QedResponse {
        field_ratio,
        photon_number,
        atomic_excitation,
        scatter_rate: 2.0 * params.gamma * atomic_excitation,
        saturation_warning: photon_number > SATURATION_PHOTONS
            || atomic_excitation > SATURATION_EXCITATION,
        truncation_warning: false,
    })
}

/// `κ / [(κ − iΔ_c) + g²/(γ − iΔ_a)]` without validation; hot path for
/// dynamics and fitting.
pub(crate) fn field_ratio_unchecked(params: &QedParams, g_eff: f64) -> Complex64 {
    let atom = Complex64::new(params.gamma, -params.delta_a());
    let denom = Complex64::new(params.kappa, -params.delta_c) + g_eff * g_eff / atom;
    params.kappa / denom
}

/// Transmission relative to the empty cavity on resonance.
pub fn relative_transmission(params: &QedParams, g_eff: f64) -> Result<f64> {
    params.validate()?;
    Ok(field_ratio_unchecked(params, g_eff).norm_sqr())
}

/// Coupling `g0 · sqrt(I_probe(r))` at `r`: Gaussian envelope times the
/// standing-wave factor of the probe mode.
pub fn position_dependent_coupling(geometry: &CavityGeometry, r: &Position, g0: f64) -> Result<f64> {
    geometry.check_inside(r.z)?;
    Ok(g0 * ModeProfile::probe(geometry).intensity(r).sqrt())
}
