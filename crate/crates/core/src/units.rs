//! Physical constants and the ordinary/angular frequency conversions.
//!
//! Internally every rate and detuning is an angular frequency (rad/s).
//! Everything a user reads or writes is an ordinary frequency, usually MHz,
//! matching the `X/2π` notation common in cavity QED. Trap heights are
//! energies quoted as `h × frequency`.

use std::f64::consts::PI;

/// Speed of light in vacuum (m/s).
pub const C: f64 = 299_792_458.0;
/// Planck constant (J s).
pub const H: f64 = 6.626_070_15e-34;
/// Reduced Planck constant (J s).
pub const HBAR: f64 = H / (2.0 * PI);
/// Boltzmann constant (J/K).
pub const KB: f64 = 1.380_649e-23;
/// Standard gravitational acceleration (m/s^2).
pub const G_EARTH: f64 = 9.80665;
/// Mass of a rubidium-85 atom (kg).
pub const RB85_MASS: f64 = 1.4099e-25;

/// 1 pW of transmitted probe power corresponds to this many intracavity photons.
pub const PHOTONS_PER_PW: f64 = 1.2;

/// Ordinary frequency in MHz → angular frequency in rad/s.
pub fn mhz_to_angular(mhz: f64) -> f64 {
    2.0 * PI * mhz * 1e6
}

/// Angular frequency in rad/s → ordinary frequency in MHz.
pub fn angular_to_mhz(omega: f64) -> f64 {
    omega / (2.0 * PI * 1e6)
}

/// Ordinary frequency in Hz → angular frequency.
pub fn hz_to_angular(hz: f64) -> f64 {
    2.0 * PI * hz
}

/// Angular frequency → ordinary frequency in Hz.
pub fn angular_to_hz(omega: f64) -> f64 {
    omega / (2.0 * PI)
}

/// Energy `h × f` for an ordinary frequency given in MHz.
pub fn h_mhz_to_joules(mhz: f64) -> f64 {
    H * mhz * 1e6
}

/// Energy in joules expressed as `h × MHz`.
pub fn joules_to_h_mhz(energy: f64) -> f64 {
    energy / (H * 1e6)
}

/// Transmitted power (pW) → intracavity photon number.
pub fn picowatts_to_photons(pw: f64) -> f64 {
    pw * PHOTONS_PER_PW
}

/// Intracavity photon number → transmitted power (pW).
pub fn photons_to_picowatts(photons: f64) -> f64 {
    photons / PHOTONS_PER_PW
}
