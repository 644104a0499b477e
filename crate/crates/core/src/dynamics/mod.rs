//! Semiclassical point-atom motion in the trap.
//!
//! The atom follows the dipole force with a velocity-Verlet integrator.
//! Photon scattering is a Poisson process whose rate follows the atom:
//! probe light scattered through the cavity coupling, plus trap light
//! scattered off the blue-detuned modes. Each event kicks the atom by one
//! probe recoil `ħk` along `±z` (absorption from the standing wave) and one
//! `ħk` in a uniformly random direction (emission). Per event the mean
//! squared momentum therefore grows by `(ħk)²·(1 + 1/3)` along `z` and by
//! `(ħk)²/3` along `x` and `y`.
//!
//! Axial cavity cooling is a phenomenological friction `−β v_z`, applied
//! only while a cooling interval is active.

mod capture;
mod storage;

pub use capture::{
    qualify_intervals, run_capture, EventKind, EventTrace, IntervalSchedule, ProbeInterval,
    ProtocolSpec, Qualification, TraceEvent, TraceSample,
};
pub use storage::{storage_time_ensemble, StorageSettings, StorageSummary};

use nalgebra::Vector3;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal, UnitSphere};

use crate::error::{Error, Result};
use crate::modes::{ModeProfile, Position};
use crate::potential::{TrapConfig, TrapField};
use crate::qed::QedParams;
use crate::units::{HBAR, KB};

/// Default friction: a 1 mK axial atom loses its energy in about 5 ms.
pub const DEFAULT_COOLING_TIME: f64 = 5e-3;
/// Upper bound on the time step (s).
pub const MAX_TIME_STEP: f64 = 50e-9;
/// Steps per shortest oscillation period for the default time step.
pub const STEPS_PER_PERIOD: f64 = 64.0;
/// Steps per period below which a step is split.
pub const MIN_STEPS_PER_PERIOD: f64 = 50.0;

/// Position, velocity and time of one atom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomState {
    pub position: Position,
    pub velocity: Vector3<f64>,
    pub time: f64,
}

impl AtomState {
    pub fn at_rest(position: Position) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            time: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(self.velocity.iter()).all(|v| v.is_finite()) && self.time.is_finite()
    }
}

/// Which stochastic and dissipative processes act on the atom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionSettings {
    /// Axial friction coefficient β (kg/s) during cooling intervals.
    pub friction_beta: f64,
    pub probe_scattering: bool,
    pub trap_light_scattering: bool,
    /// Holds the atom in place; only the momentum evolves.
    pub pinned: bool,
}

impl MotionSettings {
    /// No friction, no scattering.
    pub fn conservative() -> Self {
        Self {
            friction_beta: 0.0,
            probe_scattering: false,
            trap_light_scattering: false,
            pinned: false,
        }
    }

    pub fn with_default_friction(mass: f64) -> Self {
        Self {
            friction_beta: mass / DEFAULT_COOLING_TIME,
            probe_scattering: true,
            trap_light_scattering: true,
            pinned: false,
        }
    }
}

/// One atom under integration: its state, random stream and pending hazard.
#[derive(Debug, Clone)]
pub struct Walker {
    pub state: AtomState,
    pub scatter_events: u64,
    rng: ChaCha8Rng,
    hazard_left: f64,
    force: Vector3<f64>,
    force_generation: u64,
}

impl Walker {
    /// Walker on stream `stream` of the ChaCha8 generator seeded by `seed`.
    pub fn new(state: AtomState, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let hazard_left = Exp1.sample(&mut rng);
        Self {
            state,
            scatter_events: 0,
            rng,
            hazard_left,
            force: Vector3::zeros(),
            force_generation: u64::MAX,
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Momentum kick by one absorbed standing-wave photon and one
    /// isotropically emitted photon, as a velocity change.
    fn recoil(&mut self, recoil_velocity: f64) {
        let sign = if self.rng.random::<bool>() { 1.0 } else { -1.0 };
        let [x, y, z]: [f64; 3] = UnitSphere.sample(&mut self.rng);
        self.state.velocity += recoil_velocity * Vector3::new(x, y, z + sign);
        self.scatter_events += 1;
    }
}

/// Result of one [`Integrator::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub scatter_events: u32,
    /// Relative cavity transmission at the final position.
    pub transmission: f64,
    pub substeps: u32,
}

/// Compiled trap, probe and settings; shared immutably by many walkers.
#[derive(Debug, Clone)]
pub struct Integrator {
    field: TrapField,
    probe: ModeProfile,
    mass: f64,
    params: QedParams,
    probe_photons: f64,
    recoil_velocity: f64,
    settings: MotionSettings,
    max_substep: f64,
    default_dt: f64,
    generation: u64,
}

impl Integrator {
    /// `probe_photons` is the empty-cavity photon number of the probe on
    /// resonance; the probe detuning is `params.delta_c`.
    pub fn new(
        config: &TrapConfig,
        params: &QedParams,
        probe_photons: f64,
        settings: MotionSettings,
    ) -> Result<Self> {
        params.validate()?;
        if !(probe_photons >= 0.0) || !probe_photons.is_finite() {
            return Err(Error::InvalidParams(format!(
                "probe photon number must be non-negative, got {probe_photons}"
            )));
        }
        if !(settings.friction_beta >= 0.0) {
            return Err(Error::InvalidParams("friction coefficient must be non-negative".into()));
        }
        let k = 2.0 * std::f64::consts::PI / config.geometry.probe_wavelength;
        let mut integrator = Self {
            field: config.field()?,
            probe: ModeProfile::probe(&config.geometry),
            mass: config.atom_mass,
            params: *params,
            probe_photons,
            recoil_velocity: HBAR * k / config.atom_mass,
            settings,
            max_substep: MAX_TIME_STEP,
            default_dt: MAX_TIME_STEP,
            generation: 0,
        };
        integrator.set_trap(config)?;
        Ok(integrator)
    }

    /// Swaps the trap light configuration (geometry and mass are kept).
    pub fn set_trap(&mut self, config: &TrapConfig) -> Result<()> {
        config.validate()?;
        self.field = config.field()?;
        let curvature = self.field.max_curvature();
        let period = if curvature > 0.0 {
            2.0 * std::f64::consts::PI * (self.mass / curvature).sqrt()
        } else {
            f64::INFINITY
        };
        self.default_dt = MAX_TIME_STEP.min(period / STEPS_PER_PERIOD);
        self.max_substep = period / MIN_STEPS_PER_PERIOD;
        self.generation += 1;
        Ok(())
    }

    pub fn set_probe_photons(&mut self, photons: f64) {
        self.probe_photons = photons.max(0.0);
    }

    pub fn probe_photons(&self) -> f64 {
        self.probe_photons
    }

    pub fn settings(&self) -> &MotionSettings {
        &self.settings
    }

    pub fn field(&self) -> &TrapField {
        &self.field
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// `min(50 ns, T_min/64)` with `T_min` the shortest oscillation period
    /// the trap can produce.
    pub fn default_dt(&self) -> f64 {
        self.default_dt
    }

    /// Recoil velocity `ħk/m` of one probe photon.
    pub fn recoil_velocity(&self) -> f64 {
        self.recoil_velocity
    }

    /// Kinetic plus potential energy (J).
    pub fn energy(&self, state: &AtomState) -> f64 {
        0.5 * self.mass * state.velocity.norm_squared() + self.field.energy(&state.position)
    }

    /// Relative transmission and probe scattering rate at `r`.
    pub fn probe_response(&self, r: &Position) -> (f64, f64) {
        let p = &self.params;
        let g2 = p.g0 * p.g0 * self.probe.intensity(r);
        let delta_a = p.delta_a();
        let atom = Complex64::new(p.gamma, -delta_a);
        let ratio = p.kappa / (Complex64::new(p.kappa, -p.delta_c) + g2 / atom);
        let transmission = ratio.norm_sqr();
        let excitation = self.probe_photons * transmission * g2 / (delta_a * delta_a + p.gamma * p.gamma);
        (transmission, 2.0 * p.gamma * excitation)
    }

    /// Total scattering rate (1/s) at `r` for the enabled processes.
    pub fn scatter_rate(&self, r: &Position) -> f64 {
        let mut rate = 0.0;
        if self.settings.probe_scattering {
            rate += self.probe_response(r).1;
        }
        if self.settings.trap_light_scattering {
            rate += self.field.trap_light_scatter_rate(r, self.params.gamma);
        }
        rate
    }

    /// Advances `walker` by `dt`, splitting the step when it exceeds 1/50 of
    /// the shortest trap period. Friction acts only when `cooling` is set.
    pub fn step(&self, walker: &mut Walker, dt: f64, cooling: bool) -> StepOutcome {
        let substeps = if self.settings.pinned {
            1
        } else {
            (dt / self.max_substep).ceil().max(1.0) as u32
        };
        let h = dt / substeps as f64;
        let mut events = 0;
        let mut transmission = 0.0;
        for _ in 0..substeps {
            let (t, e) = self.substep(walker, h, cooling);
            transmission = t;
            events += e;
        }
        StepOutcome {
            scatter_events: events,
            transmission,
            substeps,
        }
    }

    fn substep(&self, walker: &mut Walker, h: f64, cooling: bool) -> (f64, u32) {
        let gamma = self.params.gamma;
        let trap_rate = if self.settings.pinned {
            if self.settings.trap_light_scattering {
                self.field.trap_light_scatter_rate(&walker.state.position, gamma)
            } else {
                0.0
            }
        } else {
            if walker.force_generation != self.generation {
                walker.force = self.field.force(&walker.state.position);
                walker.force_generation = self.generation;
            }
            let damping = if cooling && self.settings.friction_beta > 0.0 {
                (-0.5 * self.settings.friction_beta / self.mass * h).exp()
            } else {
                1.0
            };
            let s = &mut walker.state;
            s.velocity.z *= damping;
            s.velocity += walker.force * (0.5 * h / self.mass);
            s.position += s.velocity * h;
            let (force, rate) = self.field.force_and_scatter_rate(&s.position, gamma);
            walker.force = force;
            s.velocity += force * (0.5 * h / self.mass);
            s.velocity.z *= damping;
            if self.settings.trap_light_scattering {
                rate
            } else {
                0.0
            }
        };
        walker.state.time += h;

        let (transmission, probe_rate) = self.probe_response(&walker.state.position);
        let rate = trap_rate + if self.settings.probe_scattering { probe_rate } else { 0.0 };
        walker.hazard_left -= rate * h;
        let mut events = 0;
        while walker.hazard_left <= 0.0 {
            walker.recoil(self.recoil_velocity);
            walker.hazard_left += <Exp1 as Distribution<f64>>::sample(&Exp1, &mut walker.rng);
            events += 1;
        }
        (transmission, events)
    }
}

/// Advances a single atom by `dt` from `state`, drawing from `rng_seed`.
///
/// Convenience form of [`Integrator::step`] for one-off use; repeated
/// stepping should keep a [`Walker`].
pub fn step(
    state: &AtomState,
    config: &TrapConfig,
    params: &QedParams,
    probe_photons: f64,
    settings: MotionSettings,
    dt: f64,
    rng_seed: u64,
) -> Result<AtomState> {
    let integrator = Integrator::new(config, params, probe_photons, settings)?;
    let mut walker = Walker::new(*state, rng_seed, 0);
    integrator.step(&mut walker, dt, settings.friction_beta > 0.0);
    Ok(walker.state)
}

/// Thermal state around the origin: Gaussian velocities of variance
/// `k_B T / m` and Gaussian positions of variance `k_B T / (m ω_i²)` per axis.
pub fn thermal_state<R: Rng + ?Sized>(
    temperature: f64,
    mass: f64,
    trap_frequencies: [f64; 3],
    rng: &mut R,
) -> AtomState {
    let sigma_v = (KB * temperature / mass).sqrt();
    let mut position = Position::zeros();
    let mut velocity = Vector3::zeros();
    for i in 0..3 {
        let n1: f64 = StandardNormal.sample(rng);
        let n2: f64 = StandardNormal.sample(rng);
        let omega = trap_frequencies[i];
        position[i] = if omega > 0.0 { sigma_v / omega * n1 } else { 0.0 };
        velocity[i] = sigma_v * n2;
    }
    AtomState {
        position,
        velocity,
        time: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modes::CavityGeometry;
    use crate::potential::trap_metrics;
    use crate::qed::steady_state_response;
    use crate::units::RB85_MASS;

    fn doughnut() -> TrapConfig {
        TrapConfig::doughnut(CavityGeometry::reference(), 346.0, 30.0).unwrap()
    }

    #[test]
    fn default_time_step_resolves_axial_motion() {
        let cfg = doughnut();
        let int = Integrator::new(&cfg, &QedParams::reference(), 0.0, MotionSettings::conservative()).unwrap();
        let m = trap_metrics(&cfg).unwrap();
        let period = 2.0 * std::f64::consts::PI / m.trap_frequencies[2];
        assert!(int.default_dt() <= period / 64.0);
        assert!(int.default_dt() > period / 80.0);
    }

    #[test]
    fn oversized_steps_are_split() {
        let cfg = doughnut();
        let int = Integrator::new(&cfg, &QedParams::reference(), 0.0, MotionSettings::conservative()).unwrap();
        let mut w = Walker::new(AtomState::at_rest(Position::new(1e-6, 0.0, 2e-8)), 0, 0);
        let out = int.step(&mut w, 1e-6, false);
        assert!(out.substeps >= 100);
        assert!((w.state.time - 1e-6).abs() < 1e-18);
    }

    #[test]
    fn energy_is_conserved_without_noise() {
        let cfg = doughnut();
        let int = Integrator::new(&cfg, &QedParams::reference(), 0.0, MotionSettings::conservative()).unwrap();
        let mut w = Walker::new(
            AtomState {
                position: Position::new(3e-6, -2e-6, 3e-8),
                velocity: Vector3::new(0.02, 0.01, 0.05),
                time: 0.0,
            },
            0,
            0,
        );
        let e0 = int.energy(&w.state);
        let dt = int.default_dt() / 8.0;
        let mut worst: f64 = 0.0;
        for _ in 0..20_000 {
            int.step(&mut w, dt, false);
            worst = worst.max((int.energy(&w.state) / e0 - 1.0).abs());
        }
        // velocity-Verlet error scales as (ω dt)²
        assert!(worst < 5e-5, "{worst}");
    }

    #[test]
    fn friction_drains_axial_energy() {
        let cfg = TrapConfig::axial_only(CavityGeometry::reference(), 346.0).unwrap();
        let settings = MotionSettings {
            friction_beta: RB85_MASS / 1e-4,
            ..MotionSettings::conservative()
        };
        let int = Integrator::new(&cfg, &QedParams::reference(), 0.0, settings).unwrap();
        let mut w = Walker::new(
            AtomState {
                position: Position::zeros(),
                velocity: Vector3::new(0.0, 0.0, 0.3),
                time: 0.0,
            },
            0,
            0,
        );
        let dt = int.default_dt();
        let mut last = int.energy(&w.state);
        // sample once per microsecond, about two axial periods
        for _ in 0..200 {
            for _ in 0..(1e-6 / dt) as usize {
                int.step(&mut w, dt, true);
            }
            let e = int.energy(&w.state);
            assert!(e < last, "{e} {last}");
            last = e;
        }
        assert!(last < 0.2 * 0.5 * RB85_MASS * 0.09);
    }

    #[test]
    fn pinned_atom_scatters_at_the_analytic_rate() {
        let cfg = doughnut();
        let p = QedParams::reference();
        let settings = MotionSettings {
            pinned: true,
            trap_light_scattering: false,
            ..MotionSettings::conservative()
        };
        let settings = MotionSettings {
            probe_scattering: true,
            ..settings
        };
        let int = Integrator::new(&cfg, &p, 0.44, settings).unwrap();
        let r = Position::zeros();
        let expected_rate = steady_state_response(&p.with_empty_cavity_photons(0.44), p.g0)
            .unwrap()
            .scatter_rate;
        assert!((int.scatter_rate(&r) / expected_rate - 1.0).abs() < 1e-12);
        let mut w = Walker::new(AtomState::at_rest(r), 9, 0);
        let dt = 1e-6;
        let duration = 0.05;
        for _ in 0..(duration / dt) as usize {
            int.step(&mut w, dt, false);
        }
        let mean = expected_rate * w.state.time;
        let z = (w.scatter_events as f64 - mean) / mean.sqrt();
        assert!(z.abs() < 3.0, "{z}");
        assert_eq!(w.state.position, r);
    }

    #[test]
    fn walkers_are_deterministic() {
        let cfg = doughnut();
        let int = Integrator::new(&cfg, &QedParams::reference(), 4.0, MotionSettings::with_default_friction(cfg.atom_mass)).unwrap();
        let run = |stream| {
            let mut w = Walker::new(AtomState::at_rest(Position::new(1e-6, 0.0, 0.0)), 3, stream);
            for _ in 0..5000 {
                int.step(&mut w, int.default_dt(), true);
            }
            (w.state, w.scatter_events)
        };
        assert_eq!(run(0), run(0));
        assert_ne!(run(0), run(1));
    }
}
