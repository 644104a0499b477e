//! The blue-trap potential landscape, its analytic force, trap metrics and
//! the position-dependent Stark shift of the atomic transition.
//!
//! Every trap mode is blue detuned, so each contributes a non-negative
//! potential `s_i · U_i · I_i(r)` with `I_i` the normalized intensity.
//! The canonical trap keeps the origin dark: an odd-offset TEM00 mode
//! ("pancakes") for axial confinement plus an even-offset TEM10 (funnel)
//! or TEM10 + TEM01 pair (doughnut) for the transverse directions.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::modes::{CavityGeometry, ModeProfile, ModeSpec, Position, TransverseOrder};
use crate::numerics::golden_section_max;
use crate::units::{self, G_EARTH, H, RB85_MASS};

/// Offsets used by the canonical configurations.
pub const AXIAL_FSR_OFFSET: i32 = 3;
pub const TRANSVERSE_FSR_OFFSET: i32 = 2;

/// Full potential landscape.
#[derive(Debug, Clone, PartialEq)]
pub struct TrapConfig {
    pub geometry: CavityGeometry,
    pub modes: Vec<ModeSpec>,
    pub gravity_on: bool,
    /// Atom mass (kg).
    pub atom_mass: f64,
    /// Transition shift per unit ground-state shift; −2 for a two-level atom.
    pub stark_coefficient: f64,
    /// Constant transition shift added everywhere (MHz), e.g. from a red
    /// stabilization laser. Zero disables it.
    pub stabilization_shift_mhz: f64,
}

impl TrapConfig {
    /// Gravity off, ⁸⁵Rb mass, two-level Stark coefficient.
    pub fn new(geometry: CavityGeometry, modes: Vec<ModeSpec>) -> Result<Self> {
        let config = Self {
            geometry,
            modes,
            gravity_on: false,
            atom_mass: RB85_MASS,
            stark_coefficient: -2.0,
            stabilization_shift_mhz: 0.0,
        };
        config.validate()?;
        Ok(config)
    }

    /// Axial pancakes only.
    pub fn axial_only(geometry: CavityGeometry, axial_h_mhz: f64) -> Result<Self> {
        Self::new(
            geometry,
            vec![ModeSpec::new(TransverseOrder::TEM00, AXIAL_FSR_OFFSET, axial_h_mhz)?],
        )
    }

    /// Pancakes plus the TEM10 guide: the loading funnel. The TEM01 half of
    /// the doughnut is present at zero amplitude so the mode list matches
    /// [`TrapConfig::doughnut`].
    pub fn funnel(geometry: CavityGeometry, axial_h_mhz: f64, guiding_h_mhz: f64) -> Result<Self> {
        Self::new(
            geometry,
            vec![
                ModeSpec::new(TransverseOrder::TEM00, AXIAL_FSR_OFFSET, axial_h_mhz)?,
                ModeSpec::new(TransverseOrder::TEM10, TRANSVERSE_FSR_OFFSET, guiding_h_mhz)?,
                ModeSpec::new(TransverseOrder::TEM01, TRANSVERSE_FSR_OFFSET, guiding_h_mhz)?
                    .with_scale(0.0)?,
            ],
        )
    }

    /// Pancakes plus the doughnut. Each half carries the full ring height so
    /// the time-averaged ring maximum equals `radial_h_mhz`.
    pub fn doughnut(geometry: CavityGeometry, axial_h_mhz: f64, radial_h_mhz: f64) -> Result<Self> {
        Self::new(
            geometry,
            vec![
                ModeSpec::new(TransverseOrder::TEM00, AXIAL_FSR_OFFSET, axial_h_mhz)?,
                ModeSpec::new(TransverseOrder::TEM10, TRANSVERSE_FSR_OFFSET, radial_h_mhz)?,
                ModeSpec::new(TransverseOrder::TEM01, TRANSVERSE_FSR_OFFSET, radial_h_mhz)?,
            ],
        )
    }

    pub fn with_gravity(mut self, on: bool) -> Self {
        self.gravity_on = on;
        self
    }

    pub fn with_stabilization_shift(mut self, mhz: f64) -> Self {
        self.stabilization_shift_mhz = mhz;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if self.modes.is_empty() {
            return Err(Error::InvalidConfig("trap needs at least one mode".into()));
        }
        for mode in &self.modes {
            mode.validate_for(&self.geometry)?;
        }
        if !(self.atom_mass > 0.0) {
            return Err(Error::InvalidConfig("atom mass must be positive".into()));
        }
        if !self.stark_coefficient.is_finite() || !self.stabilization_shift_mhz.is_finite() {
            return Err(Error::InvalidConfig("Stark parameters must be finite".into()));
        }
        Ok(())
    }

    /// Precomputes mode profiles for repeated evaluation.
    pub fn field(&self) -> Result<TrapField> {
        let mut terms = Vec::with_capacity(self.modes.len());
        for mode in &self.modes {
            mode.validate_for(&self.geometry)?;
            let weight = mode.amplitude_scale * mode.barrier_height;
            if weight > 0.0 {
                terms.push(FieldTerm {
                    weight,
                    profile: ModeProfile::new(&self.geometry, mode)?,
                    detuning: self.geometry.mode_detuning(mode.fsr_offset),
                });
            }
        }
        Ok(TrapField {
            terms,
            gravity_force: if self.gravity_on {
                self.atom_mass * G_EARTH
            } else {
                0.0
            },
            half_length: self.geometry.half_length(),
        })
    }
}

#[derive(Debug, Clone)]
struct FieldTerm {
    weight: f64,
    profile: ModeProfile,
    /// Angular detuning of the mode above the probe (≈ above the atom).
    detuning: f64,
}

/// A compiled [`TrapConfig`]: weighted mode profiles plus gravity.
#[derive(Debug, Clone)]
pub struct TrapField {
    terms: Vec<FieldTerm>,
    gravity_force: f64,
    half_length: f64,
}

impl TrapField {
    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn inside(&self, r: &Position) -> bool {
        r.z.abs() <= self.half_length
    }

    /// Optical part of the potential (J), gravity excluded.
    pub fn optical_energy(&self, r: &Position) -> f64 {
        self.terms.iter().map(|t| t.weight * t.profile.intensity(r)).sum()
    }

    pub fn energy(&self, r: &Position) -> f64 {
        self.optical_energy(r) + self.gravity_force * r.y
    }

    pub fn force(&self, r: &Position) -> Vector3<f64> {
        self.energy_and_force(r).1
    }

    pub fn energy_and_force(&self, r: &Position) -> (f64, Vector3<f64>) {
        let mut energy = self.gravity_force * r.y;
        let mut grad = Vector3::new(0.0, self.gravity_force, 0.0);
        for t in &self.terms {
            let (i, di) = t.profile.intensity_and_gradient(r);
            energy += t.weight * i;
            grad += t.weight * di;
        }
        (energy, -grad)
    }

    /// Scattering rate of trap light (1/s) at `r`: `(Γ/Δ_i)·U_i(r)/ħ` summed
    /// over the modes, with `Γ = 2γ` and `Δ_i` the mode detuning.
    pub fn trap_light_scatter_rate(&self, r: &Position, gamma: f64) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.detuning > 0.0)
            .map(|t| 2.0 * gamma / t.detuning * t.weight * t.profile.intensity(r) / units::HBAR)
            .sum()
    }

    /// Force and trap-light scattering rate from a single pass over the modes.
    pub fn force_and_scatter_rate(&self, r: &Position, gamma: f64) -> (Vector3<f64>, f64) {
        let mut grad = Vector3::new(0.0, self.gravity_force, 0.0);
        let mut rate = 0.0;
        for t in &self.terms {
            let (i, di) = t.profile.intensity_and_gradient(r);
            grad += t.weight * di;
            if t.detuning > 0.0 {
                rate += 2.0 * gamma / t.detuning * t.weight * i / units::HBAR;
            }
        }
        (-grad, rate)
    }

    /// Upper bound on the potential curvature (J/m²) anywhere in the cavity.
    pub fn max_curvature(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let k = t.profile.wavenumber();
                t.weight * (2.0 * k * k + 8.0 * t.profile.inverse_waist_sq())
            })
            .sum()
    }
}

/// Potential energy (J) at `r`.
pub fn potential_energy(config: &TrapConfig, r: &Position) -> Result<f64> {
    config.geometry.check_inside(r.z)?;
    Ok(config.field()?.energy(r))
}

/// Force `−∇U` (N) at `r`.
pub fn force(config: &TrapConfig, r: &Position) -> Result<Vector3<f64>> {
    config.geometry.check_inside(r.z)?;
    Ok(config.field()?.force(r))
}

/// Shift of the atomic transition frequency (MHz) at `r`.
pub fn stark_shift(config: &TrapConfig, r: &Position) -> Result<f64> {
    config.geometry.check_inside(r.z)?;
    let optical = config.field()?.optical_energy(r);
    Ok(config.stark_coefficient * optical / H / 1e6 + config.stabilization_shift_mhz)
}

/// Barrier heights, trap frequencies and center Stark shift.
#[derive(Debug, Clone, PartialEq)]
pub struct TrapMetrics {
    /// Barrier along the cavity axis (h·MHz).
    pub axial_barrier: f64,
    /// Lowest transverse barrier over all azimuths (h·MHz).
    pub radial_barrier: f64,
    /// Barrier along the guiding direction x (h·MHz).
    pub guiding_barrier: f64,
    /// Angular trap frequencies (ω_x, ω_y, ω_z), zero along unconfined axes.
    pub trap_frequencies: [f64; 3],
    /// Transition shift at the origin (MHz).
    pub center_stark_shift: f64,
    /// Unit vector of the lowest-barrier direction.
    pub escape_direction: Vector3<f64>,
    /// Location of the minimum the frequencies were evaluated at.
    pub minimum: Position,
}

impl TrapMetrics {
    pub fn frequencies_hz(&self) -> [f64; 3] {
        self.trap_frequencies.map(units::angular_to_hz)
    }

    /// `true` when some direction has no barrier.
    pub fn is_open(&self) -> bool {
        self.radial_barrier <= 0.0 || self.axial_barrier <= 0.0
    }
}

const AZIMUTHS: usize = 16;
const AXIAL_STEP: f64 = 1e-9;
const TRANSVERSE_STEP: f64 = 1e-8;

/// Trap metrics with gravity switched off.
pub fn trap_metrics(config: &TrapConfig) -> Result<TrapMetrics> {
    let mut flat = config.clone();
    flat.gravity_on = false;
    flat.validate()?;
    let field = flat.field()?;
    let geometry = &flat.geometry;

    // axial ray out to the first antinode of the shortest TEM00 trap mode
    let axial_reach = flat
        .modes
        .iter()
        .filter(|m| m.order == TransverseOrder::TEM00)
        .filter_map(|m| geometry.mode_wavelength(m.fsr_offset).ok())
        .fold(f64::NAN, f64::min);
    let axial_reach = if axial_reach.is_nan() {
        geometry.probe_wavelength / 2.0
    } else {
        axial_reach / 2.0
    };
    let tol = 1e-13;
    let (_, axial) = golden_section_max(
        |z| field.optical_energy(&Position::new(0.0, 0.0, z)),
        0.0,
        axial_reach,
        tol * axial_reach,
    );

    let reach = 3.0 * geometry.waist;
    let ray_max = |theta: f64| {
        // exact zeros on the coordinate axes keep nodal planes dark
        let snap = |v: f64| if v.abs() < 1e-15 { 0.0 } else { v };
        let (c, s) = (snap(theta.cos()), snap(theta.sin()));
        golden_section_max(
            |rho| field.optical_energy(&Position::new(rho * c, rho * s, 0.0)),
            0.0,
            reach,
            tol * reach,
        )
        .1
    };
    let guiding = ray_max(0.0);
    let mut radial = f64::INFINITY;
    let mut radial_theta = 0.0;
    for k in 0..AZIMUTHS {
        let theta = std::f64::consts::PI * k as f64 / AZIMUTHS as f64;
        let b = ray_max(theta);
        if b < radial {
            radial = b;
            radial_theta = theta;
        }
    }
    let escape_direction = if axial < radial {
        Vector3::z()
    } else {
        Vector3::new(radial_theta.cos(), radial_theta.sin(), 0.0)
    };

    let minimum = locate_minimum(&field, Position::zeros());
    let hessian = hessian(&field, &minimum);
    let trap_frequencies =
        [0, 1, 2].map(|i| (hessian[(i, i)].max(0.0) / flat.atom_mass).sqrt());

    Ok(TrapMetrics {
        axial_barrier: units::joules_to_h_mhz(axial),
        radial_barrier: units::joules_to_h_mhz(radial),
        guiding_barrier: units::joules_to_h_mhz(guiding),
        trap_frequencies,
        center_stark_shift: stark_shift(&flat, &Position::zeros())?,
        escape_direction,
        minimum,
    })
}

/// Hessian of the potential from central differences of the analytic force.
pub fn hessian(field: &TrapField, r: &Position) -> Matrix3<f64> {
    let steps = [TRANSVERSE_STEP, TRANSVERSE_STEP, AXIAL_STEP];
    let mut h = Matrix3::zeros();
    for j in 0..3 {
        let mut plus = *r;
        let mut minus = *r;
        plus[j] += steps[j];
        minus[j] -= steps[j];
        let df = (field.force(&plus) - field.force(&minus)) / (2.0 * steps[j]);
        for i in 0..3 {
            h[(i, j)] = -df[i];
        }
    }
    (h + h.transpose()) / 2.0
}

/// Newton iteration toward the nearest stationary point, stopping where the
/// Hessian is not positive definite.
fn locate_minimum(field: &TrapField, start: Position) -> Position {
    let mut r = start;
    for _ in 0..20 {
        let f = field.force(&r);
        if f.norm() == 0.0 {
            break;
        }
        let h = hessian(field, &r);
        let Some(chol) = h.cholesky() else { break };
        let step = chol.solve(&f);
        r += step;
        if step.norm() < 1e-15 {
            break;
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geometry() -> CavityGeometry {
        CavityGeometry::reference()
    }

    #[test]
    fn dark_origin() {
        for config in [
            TrapConfig::doughnut(geometry(), 265.0, 30.0).unwrap(),
            TrapConfig::funnel(geometry(), 346.0, 20.6).unwrap(),
        ] {
            assert_eq!(potential_energy(&config, &Position::zeros()).unwrap(), 0.0);
            assert_eq!(force(&config, &Position::zeros()).unwrap(), Vector3::zeros());
            assert_eq!(stark_shift(&config, &Position::zeros()).unwrap(), 0.0);
        }
    }

    #[test]
    fn axial_antinode_height() {
        let config = TrapConfig::axial_only(geometry(), 346.0).unwrap();
        let z = geometry().mode_wavelength(3).unwrap() / 4.0;
        let u = potential_energy(&config, &Position::new(0.0, 0.0, z)).unwrap();
        assert!((units::joules_to_h_mhz(u) - 346.0).abs() < 1e-9);
        let f = force(&config, &Position::new(0.0, 0.0, z)).unwrap();
        assert!(f.z.abs() < 1e-12 * units::h_mhz_to_joules(346.0) / z);
        let dz = 1e-10;
        let curvature = potential_energy(&config, &Position::new(0.0, 0.0, z + dz)).unwrap()
            + potential_energy(&config, &Position::new(0.0, 0.0, z - dz)).unwrap()
            - 2.0 * u;
        assert!(curvature < 0.0);
    }

    #[test]
    fn doughnut_ring_height() {
        let config = TrapConfig::doughnut(geometry(), 265.0, 30.0).unwrap();
        let r = Position::new(geometry().waist / 2f64.sqrt(), 0.0, 0.0);
        let u = units::joules_to_h_mhz(potential_energy(&config, &r).unwrap());
        assert!((u - 30.0).abs() < 1e-9, "{u}");
    }

    #[test]
    fn stabilization_offset_is_constant() {
        let config = TrapConfig::doughnut(geometry(), 265.0, 30.0)
            .unwrap()
            .with_stabilization_shift(2.2);
        assert_eq!(stark_shift(&config, &Position::zeros()).unwrap(), 2.2);
        let off = Position::new(3e-6, -2e-6, 5e-8);
        let bare = TrapConfig::doughnut(geometry(), 265.0, 30.0).unwrap();
        let delta = stark_shift(&config, &off).unwrap() - stark_shift(&bare, &off).unwrap();
        assert!((delta - 2.2).abs() < 1e-12);
    }

    #[test]
    fn blue_fields_shift_transition_down() {
        let config = TrapConfig::doughnut(geometry(), 265.0, 30.0).unwrap();
        let r = Position::new(geometry().waist / 2f64.sqrt(), 0.0, 0.0);
        let shift = stark_shift(&config, &r).unwrap();
        assert!((shift + 60.0).abs() < 1e-9, "{shift}");
    }

    #[test]
    fn out_of_cavity_rejected() {
        let config = TrapConfig::axial_only(geometry(), 1.0).unwrap();
        let r = Position::new(0.0, 0.0, geometry().length);
        assert!(matches!(
            potential_energy(&config, &r),
            Err(Error::OutOfCavity { .. })
        ));
        assert!(force(&config, &r).is_err());
        assert!(stark_shift(&config, &r).is_err());
    }

    #[test]
    fn config_invariants() {
        assert!(TrapConfig::new(geometry(), vec![]).is_err());
        let mut c = TrapConfig::axial_only(geometry(), 1.0).unwrap();
        c.atom_mass = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn funnel_metrics_report_escape() {
        let config = TrapConfig::funnel(geometry(), 346.0, 20.6).unwrap();
        let m = trap_metrics(&config).unwrap();
        assert!((m.guiding_barrier - 20.6).abs() < 20.6e-9);
        assert_eq!(m.radial_barrier, 0.0);
        assert!(m.is_open());
        assert!(m.escape_direction.y.abs() > 0.99);
        assert_eq!(m.trap_frequencies[1], 0.0);
    }

    #[test]
    fn gravity_enters_energy_and_force() {
        let config = TrapConfig::doughnut(geometry(), 265.0, 30.0)
            .unwrap()
            .with_gravity(true);
        let field = config.field().unwrap();
        let r = Position::new(0.0, 1e-6, 0.0);
        let (u, f) = field.energy_and_force(&r);
        assert!(u > 0.0);
        assert!(f.y < 0.0);
        assert!((field.force(&Position::zeros()).y + RB85_MASS * G_EARTH).abs() < 1e-40);
    }
}
