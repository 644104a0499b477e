//! Hermite-Gaussian standing-wave cavity modes.
//!
//! A mode is a transverse Hermite-Gaussian profile (TEM00, TEM10 or TEM01)
//! times a longitudinal standing wave `sin((n_p + q) π (z/L + 1/2))` that
//! vanishes on both mirrors. The axial coordinate `z` is measured from the
//! cavity center. Because the probe index `n_p` is odd, the probe has an
//! antinode at the center; a trap mode offset by an odd number of free
//! spectral ranges has a node there, an even offset an antinode.
//!
//! The waist is taken as constant over the cavity and the Gouy phase is
//! ignored: for the default geometry the Rayleigh range (≈3.4 mm) is more
//! than fifty times the half-length (≈61 µm). Transverse-mode frequency
//! offsets are absorbed into the integer FSR offsets.

use std::f64::consts::{E, PI};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::units::{self, C};

/// Point in the cavity frame: `x` transverse (funnel nodal coordinate),
/// `y` vertical (injection axis), `z` along the cavity axis from its center.
pub type Position = Vector3<f64>;

/// Shared geometry of the optical cavity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityGeometry {
    /// Mirror separation (m). Always `probe_index * probe_wavelength / 2`.
    pub length: f64,
    /// Waist of the fundamental transverse mode (m).
    pub waist: f64,
    /// Probe wavelength (m).
    pub probe_wavelength: f64,
    /// Longitudinal index of the probe mode; odd so the center is an antinode.
    pub probe_index: u32,
    /// Cavity finesse. Metadata only.
    pub finesse: f64,
}

impl CavityGeometry {
    /// Builds a geometry whose length closes the probe boundary condition exactly.
    pub fn new(probe_index: u32, probe_wavelength: f64, waist: f64, finesse: f64) -> Result<Self> {
        let geometry = Self {
            length: probe_index as f64 * probe_wavelength / 2.0,
            waist,
            probe_wavelength,
            probe_index,
            finesse,
        };
        geometry.validate()?;
        Ok(geometry)
    }

    /// Builds a geometry from a nominal length, rounding to the nearest odd
    /// probe index and redefining the length from it.
    pub fn from_nominal_length(
        length: f64,
        probe_wavelength: f64,
        waist: f64,
        finesse: f64,
    ) -> Result<Self> {
        if !(length > 0.0) || !(probe_wavelength > 0.0) {
            return Err(Error::InvalidGeometry(
                "length and wavelength must be positive".into(),
            ));
        }
        let exact = 2.0 * length / probe_wavelength;
        let below = (((exact - 1.0) / 2.0).floor() * 2.0 + 1.0).max(1.0);
        let above = below + 2.0;
        let index = if (exact - below).abs() <= (above - exact).abs() {
            below
        } else {
            above
        };
        Self::new(index as u32, probe_wavelength, waist, finesse)
    }

    /// The experimental cavity: 780.2 nm probe, n_p = 313 (L ≈ 0.122 mm),
    /// 29 µm waist, finesse 4.4e5.
    pub fn reference() -> Self {
        Self::new(313, 780.2e-9, 29e-6, 4.4e5).expect("default geometry is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0) || !self.length.is_finite() {
            return Err(Error::InvalidGeometry("length must be positive".into()));
        }
        if !(self.waist > 0.0) || !(self.probe_wavelength > 0.0) {
            return Err(Error::InvalidGeometry(
                "waist and probe wavelength must be positive".into(),
            ));
        }
        if self.probe_index % 2 == 0 {
            return Err(Error::InvalidGeometry(format!(
                "probe index {} must be odd so the cavity center is a probe antinode",
                self.probe_index
            )));
        }
        let closure = self.probe_index as f64 * self.probe_wavelength / 2.0;
        if ((self.length - closure) / closure).abs() > 1e-12 {
            return Err(Error::InvalidGeometry(format!(
                "length {:e} m does not equal n_p·λ/2 = {:e} m",
                self.length, closure
            )));
        }
        if self.rayleigh_range() <= 10.0 * self.half_length() {
            return Err(Error::InvalidGeometry(format!(
                "Rayleigh range {:e} m is not >10× the half-length; constant-waist model invalid",
                self.rayleigh_range()
            )));
        }
        Ok(())
    }

    pub fn half_length(&self) -> f64 {
        self.length / 2.0
    }

    pub fn rayleigh_range(&self) -> f64 {
        PI * self.waist * self.waist / self.probe_wavelength
    }

    /// Free spectral range `c / 2L` in Hz.
    pub fn free_spectral_range(&self) -> f64 {
        C / (2.0 * self.length)
    }

    /// Longitudinal index `n_p + q` of a mode offset by `q` free spectral ranges.
    pub fn longitudinal_index(&self, fsr_offset: i32) -> Result<u32> {
        let index = self.probe_index as i64 + fsr_offset as i64;
        if index < 1 {
            return Err(Error::InvalidMode(format!(
                "longitudinal index n_p + q = {index} must be at least 1"
            )));
        }
        Ok(index as u32)
    }

    /// Vacuum wavelength of the mode offset by `q` free spectral ranges.
    pub fn mode_wavelength(&self, fsr_offset: i32) -> Result<f64> {
        Ok(2.0 * self.length / self.longitudinal_index(fsr_offset)? as f64)
    }

    /// Angular-frequency detuning of the mode `q` from the probe mode.
    pub fn mode_detuning(&self, fsr_offset: i32) -> f64 {
        units::hz_to_angular(fsr_offset as f64 * self.free_spectral_range())
    }

    pub fn check_inside(&self, z: f64) -> Result<()> {
        if z.abs() <= self.half_length() {
            Ok(())
        } else {
            Err(Error::OutOfCavity {
                z,
                half_length: self.half_length(),
            })
        }
    }
}

/// Free spectral range `c / 2L` (Hz) for a bare mirror separation.
pub fn free_spectral_range(length: f64) -> Result<f64> {
    if !(length > 0.0) || !length.is_finite() {
        return Err(Error::InvalidGeometry(format!(
            "cavity length must be positive, got {length}"
        )));
    }
    Ok(C / (2.0 * length))
}

/// Transverse Hermite-Gaussian order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TransverseOrder {
    pub m: u32,
    pub n: u32,
}

impl TransverseOrder {
    pub const TEM00: Self = Self { m: 0, n: 0 };
    pub const TEM10: Self = Self { m: 1, n: 0 };
    pub const TEM01: Self = Self { m: 0, n: 1 };

    pub fn new(m: u32, n: u32) -> Result<Self> {
        let order = Self { m, n };
        order.check_supported()?;
        Ok(order)
    }

    fn check_supported(&self) -> Result<()> {
        if self.m + self.n > 1 {
            Err(Error::UnsupportedMode {
                m: self.m,
                n: self.n,
            })
        } else {
            Ok(())
        }
    }
}

impl std::fmt::Display for TransverseOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "TEM{}{}", self.m, self.n)
    }
}

/// One blue-detuned standing-wave trap mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeSpec {
    pub order: TransverseOrder,
    /// Offset from the probe longitudinal index in free spectral ranges.
    pub fsr_offset: i32,
    /// Peak potential of this mode alone at full amplitude (J).
    pub barrier_height: f64,
    /// Time-switchable amplitude scale in [0, 1].
    pub amplitude_scale: f64,
}

impl ModeSpec {
    /// New mode at full amplitude with its height given as `h × MHz`.
    pub fn new(order: TransverseOrder, fsr_offset: i32, height_h_mhz: f64) -> Result<Self> {
        let mode = Self {
            order,
            fsr_offset,
            barrier_height: units::h_mhz_to_joules(height_h_mhz),
            amplitude_scale: 1.0,
        };
        mode.validate()?;
        Ok(mode)
    }

    pub fn with_scale(mut self, scale: f64) -> Result<Self> {
        self.amplitude_scale = scale;
        self.validate()?;
        Ok(self)
    }

    pub fn height_h_mhz(&self) -> f64 {
        units::joules_to_h_mhz(self.barrier_height)
    }

    pub fn validate(&self) -> Result<()> {
        self.order.check_supported()?;
        if !(self.barrier_height >= 0.0) || !self.barrier_height.is_finite() {
            return Err(Error::InvalidMode(format!(
                "barrier height must be non-negative (blue detuned), got {:e} J",
                self.barrier_height
            )));
        }
        if !(0.0..=1.0).contains(&self.amplitude_scale) {
            return Err(Error::InvalidMode(format!(
                "amplitude scale {} outside [0, 1]",
                self.amplitude_scale
            )));
        }
        Ok(())
    }

    pub fn validate_for(&self, geometry: &CavityGeometry) -> Result<()> {
        self.validate()?;
        geometry.longitudinal_index(self.fsr_offset)?;
        Ok(())
    }
}

/// `sin(π r)` with exact zeros at integers and exact ±1 at half-integers.
fn sin_pi(v: f64) -> f64 {
    let r = v - 2.0 * (v / 2.0).round();
    if r == 0.0 || r.abs() == 1.0 {
        0.0
    } else if r == 0.5 {
        1.0
    } else if r == -0.5 {
        -1.0
    } else {
        (PI * r).sin()
    }
}

/// `cos(π r)` with exact zeros at half-integers.
fn cos_pi(v: f64) -> f64 {
    let r = v - 2.0 * (v / 2.0).round();
    if r.abs() == 0.5 {
        0.0
    } else if r == 0.0 {
        1.0
    } else if r.abs() == 1.0 {
        -1.0
    } else {
        (PI * r).cos()
    }
}

/// Standing wave `sin(n π (z/L + 1/2))` and its z-derivative.
fn standing_wave(index: u32, length: f64, z: f64) -> (f64, f64) {
    // sin(π v + n π/2) with v = n z / L, split by parity of n
    let v = index as f64 * (z / length);
    let sign = if (index / 2) % 2 == 0 { 1.0 } else { -1.0 };
    let scale = PI * index as f64 / length;
    if index % 2 == 0 {
        (sign * sin_pi(v), sign * scale * cos_pi(v))
    } else {
        (sign * cos_pi(v), -sign * scale * sin_pi(v))
    }
}

/// Longitudinal standing-wave amplitude of the mode offset by `q` FSR.
pub fn longitudinal_amplitude(geometry: &CavityGeometry, fsr_offset: i32, z: f64) -> Result<f64> {
    geometry.check_inside(z)?;
    let index = geometry.longitudinal_index(fsr_offset)?;
    Ok(standing_wave(index, geometry.length, z).0)
}

/// Normalized intensity profile of a single mode (global maximum 1).
pub fn intensity_normalized(
    geometry: &CavityGeometry,
    mode: &ModeSpec,
    r: &Position,
) -> Result<f64> {
    geometry.check_inside(r.z)?;
    let profile = ModeProfile::new(geometry, mode)?;
    Ok(profile.intensity(r))
}

/// Precomputed evaluation of one mode's normalized intensity and gradient.
///
/// Does not check that `r` lies inside the cavity; callers do.
#[derive(Debug, Clone, Copy)]
pub struct ModeProfile {
    order: TransverseOrder,
    index: u32,
    length: f64,
    inv_w0_sq: f64,
}

impl ModeProfile {
    pub fn new(geometry: &CavityGeometry, mode: &ModeSpec) -> Result<Self> {
        mode.order.check_supported()?;
        Ok(Self {
            order: mode.order,
            index: geometry.longitudinal_index(mode.fsr_offset)?,
            length: geometry.length,
            inv_w0_sq: 1.0 / (geometry.waist * geometry.waist),
        })
    }

    /// Profile of the probe mode (TEM00, q = 0).
    pub fn probe(geometry: &CavityGeometry) -> Self {
        Self {
            order: TransverseOrder::TEM00,
            index: geometry.probe_index,
            length: geometry.length,
            inv_w0_sq: 1.0 / (geometry.waist * geometry.waist),
        }
    }

    /// Standing-wave wavenumber `n π / L`.
    pub fn wavenumber(&self) -> f64 {
        self.index as f64 * std::f64::consts::PI / self.length
    }

    pub fn inverse_waist_sq(&self) -> f64 {
        self.inv_w0_sq
    }

    /// Transverse factor and its (x, y) gradient.
    fn transverse(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let a = 2.0 * self.inv_w0_sq;
        let envelope = (-a * (x * x + y * y)).exp();
        match (self.order.m, self.order.n) {
            (0, 0) => (envelope, -2.0 * a * x * envelope, -2.0 * a * y * envelope),
            (1, 0) => {
                let poly = E * a * x * x;
                let value = poly * envelope;
                (
                    value,
                    E * a * envelope * 2.0 * x * (1.0 - a * x * x),
                    -2.0 * a * y * value,
                )
            }
            (0, 1) => {
                let poly = E * a * y * y;
                let value = poly * envelope;
                (
                    value,
                    -2.0 * a * x * value,
                    E * a * envelope * 2.0 * y * (1.0 - a * y * y),
                )
            }
            _ => unreachable!("order checked at construction"),
        }
    }

    pub fn intensity(&self, r: &Position) -> f64 {
        let (t, _, _) = self.transverse(r.x, r.y);
        let (s, _) = standing_wave(self.index, self.length, r.z);
        t * s * s
    }

    /// Intensity and its gradient (1/m).
    pub fn intensity_and_gradient(&self, r: &Position) -> (f64, Vector3<f64>) {
        let (t, tx, ty) = self.transverse(r.x, r.y);
        let (s, ds) = standing_wave(self.index, self.length, r.z);
        let s2 = s * s;
        (t * s2, Vector3::new(tx * s2, ty * s2, t * 2.0 * s * ds))
    }
}
