//! Plain-text run configuration.
//!
//! ```text
//! # comment
//! [qed]
//! g0 = 16 MHz
//! kappa = 1400 kHz
//! ```
//!
//! Sections hold `key = value` lines. Numbers take an optional unit suffix
//! with an SI prefix; a bare number is read in the key's base unit
//! (MHz for frequencies and trap heights, m, s, K, kg, m/s, and Hz for
//! count rates). Lists are comma separated. Keys left out keep the values of
//! the default profile. [`emit_config`] writes every key in its base unit
//! with shortest round-trip formatting, so parsing the emitted text gives
//! back the same configuration field by field.

use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::detect::DetectionSetup;
use crate::dynamics::{AtomState, IntervalSchedule, ProtocolSpec, StorageSettings};
use crate::error::{Error, Result};
use crate::modes::{CavityGeometry, Position};
use crate::potential::TrapConfig;
use crate::qed::{steady_state_response, QedParams};
use crate::spectrum::SynthesisSettings;
use crate::units::{mhz_to_angular, RB85_MASS};

#[derive(Debug, Clone, PartialEq)]
pub struct GeometrySection {
    pub probe_index: u64,
    pub probe_wavelength: f64,
    pub waist: f64,
    pub finesse: f64,
}

/// Cavity QED rates as ordinary frequencies (MHz).
#[derive(Debug, Clone, PartialEq)]
pub struct QedSection {
    pub g0: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub delta_ac: f64,
    pub delta_c: f64,
    /// Empty-cavity photon number of the probe on resonance.
    pub probe_photons: f64,
    pub detection_efficiency: f64,
    /// `g_eff / g0` of the atom used by `qed-response`, `spectrum` and `detect`.
    pub coupling_ratio: f64,
    pub fock_truncation: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrapSection {
    /// `axial`, `funnel` or `doughnut`.
    pub kind: String,
    /// h·MHz.
    pub axial_height: f64,
    /// Guide or ring height (h·MHz).
    pub transverse_height: f64,
    pub gravity: bool,
    pub atom_mass: f64,
    pub stark_coefficient: f64,
    pub stabilization_shift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialSection {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectSection {
    pub atom_photons: f64,
    /// Empty-cavity photons over with-atom photons.
    pub contrast: f64,
    pub prior: f64,
    pub tau: f64,
    pub dark_rate: f64,
    pub target: f64,
    pub tau_max: f64,
    pub tau_points: u64,
    pub trials: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSection {
    pub stark_shift: f64,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
    pub samples: u64,
    pub probe_interval: f64,
    pub cooling_interval: f64,
    pub bare_photons: f64,
    pub noise: bool,
    /// Qualification threshold; 0 disables the filter.
    pub qualification: f64,
    pub coupling_spread: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StorageSection {
    pub probe_photons: Vec<f64>,
    pub temperature: f64,
    pub max_time: f64,
    pub atoms: u64,
    pub cooling: bool,
    pub friction_time: f64,
    pub trap_light_scattering: bool,
    pub escape_radius_waists: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapSection {
    /// `xy`, `xz` or `yz`.
    pub plane: String,
    pub extent: f64,
    pub points: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSection {
    pub seed: u64,
}

/// Everything a run needs, in user-facing units.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub geometry: GeometrySection,
    pub qed: QedSection,
    pub trap: TrapSection,
    pub protocol: ProtocolSpec,
    pub initial: InitialSection,
    pub detect: DetectSection,
    pub spectrum: SpectrumSection,
    pub storage: StorageSection,
    pub map: MapSection,
    pub run: RunSection,
}

/// Shipped profiles, by name.
pub const PROFILES: [(&str, &str); 5] = [
    ("reference", include_str!("../profiles/reference.profile")),
    ("capture", include_str!("../profiles/capture.profile")),
    ("spectrum", include_str!("../profiles/spectrum.profile")),
    ("detect", include_str!("../profiles/detect.profile")),
    ("storage", include_str!("../profiles/storage.profile")),
];

pub fn shipped_profile(name: &str) -> Option<&'static str> {
    PROFILES.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

/// The shipped `reference` profile.
impl Default for RunConfig {
    fn default() -> Self {
        let mut config = Self::skeleton();
        apply_config(&mut config, PROFILES[0].1).expect("reference profile parses");
        config
    }
}

impl RunConfig {
    fn skeleton() -> Self {
        Self {
            geometry: GeometrySection {
                probe_index: 313,
                probe_wavelength: 780.2e-9,
                waist: 29e-6,
                finesse: 4.4e5,
            },
            qed: QedSection {
                g0: 16.0,
                kappa: 1.4,
                gamma: 3.0,
                delta_ac: -35.0,
                delta_c: 0.0,
                probe_photons: 0.44,
                detection_efficiency: 0.05,
                coupling_ratio: 0.83,
                fock_truncation: 5,
            },
            trap: TrapSection {
                kind: "doughnut".into(),
                axial_height: 346.0,
                transverse_height: 30.0,
                gravity: false,
                atom_mass: RB85_MASS,
                stark_coefficient: -2.0,
                stabilization_shift: 0.0,
            },
            protocol: ProtocolSpec::default(),
            initial: InitialSection {
                position: [0.0, -87e-6, 0.0],
                velocity: [0.0, 0.08, 0.0],
            },
            detect: DetectSection {
                atom_photons: 0.022,
                contrast: 20.0,
                prior: 0.5,
                tau: 10e-6,
                dark_rate: 0.0,
                target: 0.95,
                tau_max: 50e-6,
                tau_points: 50,
                trials: 1_000_000,
            },
            spectrum: SpectrumSection {
                stark_shift: 0.7,
                start: -50.0,
                stop: 15.0,
                step: 0.5,
                samples: 400,
                probe_interval: 0.1e-3,
                cooling_interval: 0.5e-3,
                bare_photons: 0.5,
                noise: true,
                qualification: 0.1,
                coupling_spread: 0.0,
            },
            storage: StorageSection {
                probe_photons: vec![1.0, 2.0, 4.0, 8.0],
                temperature: 1e-4,
                max_time: 0.1,
                atoms: 100,
                cooling: true,
                friction_time: crate::dynamics::DEFAULT_COOLING_TIME,
                trap_light_scattering: true,
                escape_radius_waists: 1.0,
            },
            map: MapSection {
                plane: "xy".into(),
                extent: 60e-6,
                points: 61,
            },
            run: RunSection { seed: 1 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dim {
    /// MHz; also trap heights in h·MHz.
    Frequency,
    /// Hz; detector count rates.
    Rate,
    Length,
    Time,
    Temperature,
    Mass,
    Velocity,
    Damping,
    None,
}

impl Dim {
    fn base(self) -> &'static str {
        match self {
            Dim::Frequency => "MHz",
            Dim::Rate => "Hz",
            Dim::Length => "m",
            Dim::Time => "s",
            Dim::Temperature => "K",
            Dim::Mass => "kg",
            Dim::Velocity => "m/s",
            Dim::Damping => "kg/s",
            Dim::None => "",
        }
    }

    /// Conversion of `unit` to the base unit as `(multiplier, power of ten)`.
    fn factor(self, unit: &str) -> Option<(f64, i32)> {
        let prefixed = |base: &str| -> Option<(f64, i32)> {
            let prefix = unit.strip_suffix(base)?;
            let exp = match prefix {
                "" => 0,
                "G" => 9,
                "M" => 6,
                "k" => 3,
                "m" => -3,
                "u" | "µ" | "μ" => -6,
                "n" => -9,
                "p" => -12,
                _ => return None,
            };
            Some((1.0, exp))
        };
        let shifted = |f: Option<(f64, i32)>, by: i32| f.map(|(m, e)| (m, e + by));
        match self {
            Dim::Frequency => shifted(prefixed("Hz"), -6),
            Dim::Rate => prefixed("Hz").or_else(|| (unit == "/s" || unit == "1/s").then_some((1.0, 0))),
            Dim::Length => prefixed("m"),
            Dim::Time => prefixed("s"),
            Dim::Temperature => prefixed("K"),
            Dim::Mass => match unit {
                "u" | "amu" => Some((1.660_539_066_6, -27)),
                _ => shifted(prefixed("g"), -3),
            },
            Dim::Velocity => unit.strip_suffix("/s").and_then(|m| match m {
                "m" => Some((1.0, 0)),
                "mm" => Some((1.0, -3)),
                "um" | "µm" => Some((1.0, -6)),
                _ => None,
            }),
            Dim::Damping => unit.strip_suffix("/s").and_then(|m| shifted(prefixed_mass(m), 0)),
            Dim::None => None,
        }
    }
}

fn prefixed_mass(unit: &str) -> Option<(f64, i32)> {
    match unit {
        "kg" => Some((1.0, 0)),
        "g" => Some((1.0, -3)),
        _ => None,
    }
}

enum Slot<'a> {
    Num(&'a mut f64, Dim),
    Int(&'a mut u64),
    Bool(&'a mut bool),
    List(&'a mut Vec<f64>, Dim),
    Vec3(&'a mut [f64; 3], Dim),
    Choice(&'a mut String, &'static [&'static str]),
}

impl RunConfig {
    fn slots(&mut self) -> Vec<(&'static str, &'static str, Slot<'_>)> {
        use Dim::*;
        use Slot::*;
        let g = &mut self.geometry;
        let q = &mut self.qed;
        let t = &mut self.trap;
        let p = &mut self.protocol;
        let i = &mut self.initial;
        let d = &mut self.detect;
        let s = &mut self.spectrum;
        let st = &mut self.storage;
        let m = &mut self.map;
        vec![
            ("geometry", "probe_index", Int(&mut g.probe_index)),
            ("geometry", "probe_wavelength", Num(&mut g.probe_wavelength, Length)),
            ("geometry", "waist", Num(&mut g.waist, Length)),
            ("geometry", "finesse", Num(&mut g.finesse, None)),
            ("qed", "g0", Num(&mut q.g0, Frequency)),
            ("qed", "kappa", Num(&mut q.kappa, Frequency)),
            ("qed", "gamma", Num(&mut q.gamma, Frequency)),
            ("qed", "delta_ac", Num(&mut q.delta_ac, Frequency)),
            ("qed", "delta_c", Num(&mut q.delta_c, Frequency)),
            ("qed", "probe_photons", Num(&mut q.probe_photons, None)),
            ("qed", "detection_efficiency", Num(&mut q.detection_efficiency, None)),
            ("qed", "coupling_ratio", Num(&mut q.coupling_ratio, None)),
            ("qed", "fock_truncation", Int(&mut q.fock_truncation)),
            ("trap", "kind", Choice(&mut t.kind, &["axial", "funnel", "doughnut"])),
            ("trap", "axial_height", Num(&mut t.axial_height, Frequency)),
            ("trap", "transverse_height", Num(&mut t.transverse_height, Frequency)),
            ("trap", "gravity", Bool(&mut t.gravity)),
            ("trap", "atom_mass", Num(&mut t.atom_mass, Mass)),
            ("trap", "stark_coefficient", Num(&mut t.stark_coefficient, None)),
            ("trap", "stabilization_shift", Num(&mut t.stabilization_shift, Frequency)),
            ("protocol", "arm_time", Num(&mut p.arm_time, Time)),
            ("protocol", "trigger_fraction", Num(&mut p.trigger_fraction, None)),
            ("protocol", "escape_fraction", Num(&mut p.escape_fraction, None)),
            ("protocol", "probe_photons_before", Num(&mut p.probe_photons_before, None)),
            ("protocol", "probe_photons_after", Num(&mut p.probe_photons_after, None)),
            ("protocol", "axial_height", Num(&mut p.axial_height, Frequency)),
            ("protocol", "guiding_height", Num(&mut p.guiding_height, Frequency)),
            ("protocol", "doughnut_height", Num(&mut p.doughnut_height, Frequency)),
            ("protocol", "cooling_interval", Num(&mut p.schedule.cooling, Time)),
            ("protocol", "probing_interval", Num(&mut p.schedule.probing, Time)),
            ("protocol", "friction_beta", Num(&mut p.friction_beta, Damping)),
            ("protocol", "bin_width", Num(&mut p.bin_width, Time)),
            ("protocol", "estimator_window", Num(&mut p.estimator_window, Time)),
            ("protocol", "switch_delay", Num(&mut p.switch_delay, Time)),
            ("protocol", "exit_radius_waists", Num(&mut p.exit_radius_waists, None)),
            ("protocol", "max_time", Num(&mut p.max_time, Time)),
            ("protocol", "tail", Num(&mut p.tail, Time)),
            ("protocol", "probe_scattering", Bool(&mut p.probe_scattering)),
            ("protocol", "trap_light_scattering", Bool(&mut p.trap_light_scattering)),
            ("initial", "position", Vec3(&mut i.position, Length)),
            ("initial", "velocity", Vec3(&mut i.velocity, Velocity)),
            ("detect", "atom_photons", Num(&mut d.atom_photons, None)),
            ("detect", "contrast", Num(&mut d.contrast, None)),
            ("detect", "prior", Num(&mut d.prior, None)),
            ("detect", "tau", Num(&mut d.tau, Time)),
            ("detect", "dark_rate", Num(&mut d.dark_rate, Rate)),
            ("detect", "target", Num(&mut d.target, None)),
            ("detect", "tau_max", Num(&mut d.tau_max, Time)),
            ("detect", "tau_points", Int(&mut d.tau_points)),
            ("detect", "trials", Int(&mut d.trials)),
            ("spectrum", "stark_shift", Num(&mut s.stark_shift, Frequency)),
            ("spectrum", "start", Num(&mut s.start, Frequency)),
            ("spectrum", "stop", Num(&mut s.stop, Frequency)),
            ("spectrum", "step", Num(&mut s.step, Frequency)),
            ("spectrum", "samples", Int(&mut s.samples)),
            ("spectrum", "probe_interval", Num(&mut s.probe_interval, Time)),
            ("spectrum", "cooling_interval", Num(&mut s.cooling_interval, Time)),
            ("spectrum", "bare_photons", Num(&mut s.bare_photons, None)),
            ("spectrum", "noise", Bool(&mut s.noise)),
            ("spectrum", "qualification", Num(&mut s.qualification, None)),
            ("spectrum", "coupling_spread", Num(&mut s.coupling_spread, None)),
            ("storage", "probe_photons", List(&mut st.probe_photons, None)),
            ("storage", "temperature", Num(&mut st.temperature, Temperature)),
            ("storage", "max_time", Num(&mut st.max_time, Time)),
            ("storage", "atoms", Int(&mut st.atoms)),
            ("storage", "cooling", Bool(&mut st.cooling)),
            ("storage", "friction_time", Num(&mut st.friction_time, Time)),
            ("storage", "trap_light_scattering", Bool(&mut st.trap_light_scattering)),
            ("storage", "escape_radius_waists", Num(&mut st.escape_radius_waists, None)),
            ("map", "plane", Choice(&mut m.plane, &["xy", "xz", "yz"])),
            ("map", "extent", Num(&mut m.extent, Length)),
            ("map", "points", Int(&mut m.points)),
            ("run", "seed", Int(&mut self.run.seed)),
        ]
    }

    /// Sets one key from its textual value, as a config line would.
    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        self.set_at(section, key, value, 0, 1)
    }

    fn set_at(&mut self, section: &str, key: &str, value: &str, line: usize, column: usize) -> Result<()> {
        let err = |message: String| Error::Parse { line, column, message };
        let mut slots = self.slots();
        let Some((_, _, slot)) = slots.iter_mut().find(|(s, k, _)| *s == section && *k == key) else {
            return Err(err(format!("unknown key '{key}' in section [{section}]")));
        };
        match slot {
            Slot::Num(v, dim) => **v = parse_quantity(value, *dim).map_err(err)?,
            Slot::Int(v) => {
                **v = value
                    .parse()
                    .map_err(|_| err(format!("'{value}' is not a non-negative integer")))?
            }
            Slot::Bool(v) => {
                **v = match value {
                    "true" | "on" | "yes" => true,
                    "false" | "off" | "no" => false,
                    _ => return Err(err(format!("'{value}' is not a boolean"))),
                }
            }
            Slot::List(v, dim) => {
                **v = value
                    .split(',')
                    .map(|x| parse_quantity(x.trim(), *dim))
                    .collect::<std::result::Result<_, _>>()
                    .map_err(err)?
            }
            Slot::Vec3(v, dim) => {
                let parts: Vec<&str> = value.split(',').collect();
                if parts.len() != 3 {
                    return Err(err(format!("expected three comma-separated values, got '{value}'")));
                }
                for (k, part) in parts.iter().enumerate() {
                    v[k] = parse_quantity(part.trim(), *dim).map_err(err)?;
                }
            }
            Slot::Choice(v, options) => {
                if !options.contains(&value) {
                    return Err(err(format!("'{value}' is not one of {}", options.join(", "))));
                }
                **v = value.to_string();
            }
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<CavityGeometry> {
        let index = u32::try_from(self.geometry.probe_index)
            .map_err(|_| Error::InvalidGeometry("probe_index is too large".into()))?;
        CavityGeometry::new(index, self.geometry.probe_wavelength, self.geometry.waist, self.geometry.finesse)
    }

    /// QED parameters in angular units, driven at `probe_photons`.
    pub fn qed_params(&self) -> Result<QedParams> {
        let q = &self.qed;
        let params = QedParams {
            g0: mhz_to_angular(q.g0),
            kappa: mhz_to_angular(q.kappa),
            gamma: mhz_to_angular(q.gamma),
            delta_c: mhz_to_angular(q.delta_c),
            delta_ac: mhz_to_angular(q.delta_ac),
            drive: 0.0,
            detection_efficiency: q.detection_efficiency,
        }
        .with_empty_cavity_photons(q.probe_photons);
        params.validate()?;
        if !(q.g0 >= 0.0) {
            return Err(Error::InvalidParams("g0 must be non-negative".into()));
        }
        if !(q.probe_photons >= 0.0) {
            return Err(Error::InvalidParams("probe_photons must be non-negative".into()));
        }
        if !(q.coupling_ratio >= 0.0) {
            return Err(Error::InvalidParams("coupling_ratio must be non-negative".into()));
        }
        Ok(params)
    }

    pub fn g_eff(&self) -> f64 {
        self.qed.coupling_ratio * mhz_to_angular(self.qed.g0)
    }

    pub fn trap_config(&self) -> Result<TrapConfig> {
        let geometry = self.geometry()?;
        let t = &self.trap;
        let shape = match t.kind.as_str() {
            "axial" => TrapConfig::axial_only(geometry, t.axial_height)?,
            "funnel" => TrapConfig::funnel(geometry, t.axial_height, t.transverse_height)?,
            _ => TrapConfig::doughnut(geometry, t.axial_height, t.transverse_height)?,
        };
        let config = TrapConfig {
            gravity_on: t.gravity,
            atom_mass: t.atom_mass,
            stark_coefficient: t.stark_coefficient,
            stabilization_shift_mhz: t.stabilization_shift,
            ..shape
        };
        config.validate()?;
        Ok(config)
    }

    pub fn initial_state(&self) -> AtomState {
        let [x, y, z] = self.initial.position;
        let [vx, vy, vz] = self.initial.velocity;
        AtomState {
            position: Position::new(x, y, z),
            velocity: nalgebra::Vector3::new(vx, vy, vz),
            time: 0.0,
        }
    }

    /// Detection setup with the atom's scattering rate at `coupling_ratio`.
    pub fn detection_setup(&self) -> Result<DetectionSetup> {
        let params = self.qed_params()?;
        let d = &self.detect;
        let g = self.g_eff();
        let mut setup = DetectionSetup::from_photon_numbers(
            &params,
            d.contrast * d.atom_photons,
            d.atom_photons,
            d.prior,
            d.tau,
        )
        .with_dark_rate(d.dark_rate);
        if d.atom_photons > 0.0 && g > 0.0 {
            let driven = params.normalized_to_photons(g, d.atom_photons)?;
            setup.atom_scatter_rate = steady_state_response(&driven, g)?.scatter_rate;
        }
        setup.validate()?;
        Ok(setup)
    }

    pub fn tau_grid(&self) -> Vec<f64> {
        let n = self.detect.tau_points.max(1);
        (1..=n).map(|k| self.detect.tau_max * k as f64 / n as f64).collect()
    }

    pub fn synthesis_settings(&self) -> Result<SynthesisSettings> {
        let s = &self.spectrum;
        if !(s.step > 0.0 && s.stop > s.start) {
            return Err(Error::InvalidConfig("spectrum grid needs step > 0 and stop > start".into()));
        }
        let n = ((s.stop - s.start) / s.step + 1e-9).floor() as usize;
        let settings = SynthesisSettings {
            grid_mhz: (0..=n).map(|k| s.start + s.step * k as f64).collect(),
            samples_per_point: s.samples as usize,
            probe_interval: s.probe_interval,
            cooling_interval: s.cooling_interval,
            bare_photons: s.bare_photons,
            noise: s.noise,
            qualification_threshold: (s.qualification > 0.0).then_some(s.qualification),
            coupling_spread: s.coupling_spread,
            seed: self.run.seed,
        };
        settings.validate()?;
        Ok(settings)
    }

    pub fn storage_settings(&self, probe_photons: f64) -> Result<StorageSettings> {
        let st = &self.storage;
        if !(st.friction_time > 0.0) {
            return Err(Error::InvalidConfig("friction_time must be positive".into()));
        }
        Ok(StorageSettings {
            probe_photons,
            temperature: st.temperature,
            max_time: st.max_time,
            schedule: st.cooling.then_some(IntervalSchedule {
                cooling: self.protocol.schedule.cooling,
                probing: self.protocol.schedule.probing,
            }),
            friction_beta: self.trap.atom_mass / st.friction_time,
            probe_scattering: true,
            trap_light_scattering: st.trap_light_scattering,
            escape_radius_waists: st.escape_radius_waists,
            ..StorageSettings::default()
        })
    }

    /// Checks every section against the invariants of the objects built from it.
    pub fn validate(&self) -> Result<()> {
        self.trap_config()?;
        self.qed_params()?;
        self.protocol.validate()?;
        self.detection_setup()?;
        self.synthesis_settings()?;
        if self.storage.probe_photons.is_empty() || self.storage.probe_photons.iter().any(|&n| !(n >= 0.0)) {
            return Err(Error::InvalidConfig("storage probe_photons must be a non-empty list of values >= 0".into()));
        }
        if self.storage.atoms < 10 {
            return Err(Error::InvalidConfig("storage atoms must be at least 10".into()));
        }
        self.storage_settings(0.0)?;
        if !(self.detect.tau_max > 0.0 && self.detect.tau_points >= 1) {
            return Err(Error::InvalidConfig("tau_max must be positive and tau_points >= 1".into()));
        }
        if !(self.map.extent > 0.0 && self.map.points >= 2) {
            return Err(Error::InvalidConfig("map extent must be positive and points >= 2".into()));
        }
        if !(self.qed.fock_truncation >= 2) {
            return Err(Error::InvalidConfig("fock_truncation must be at least 2".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical emitted text.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(emit_config(self).as_bytes()))
    }
}

fn parse_quantity(text: &str, dim: Dim) -> std::result::Result<f64, String> {
    let text = text.trim();
    let bytes = text.as_bytes();
    let mut split = 0;
    while split < bytes.len() {
        let c = bytes[split];
        let exponent = (c == b'e' || c == b'E')
            && split > 0
            && bytes.get(split + 1).is_some_and(|d| d.is_ascii_digit() || *d == b'-' || *d == b'+');
        if !(c.is_ascii_digit() || c == b'.' || c == b'+' || c == b'-' || exponent) {
            break;
        }
        split += if exponent { 2 } else { 1 };
    }
    let (number, unit) = text.split_at(split);
    let unit = unit.trim();
    let (multiplier, shift) = if unit.is_empty() {
        (1.0, 0)
    } else {
        dim.factor(unit).ok_or_else(|| match dim {
            Dim::None => format!("'{text}' is dimensionless and takes no unit"),
            _ => format!("unit '{unit}' does not measure {}", dim.base()),
        })?
    };
    let bad = || format!("'{text}' does not start with a number");
    // shift the decimal exponent in the text so prefixes convert exactly
    let (mantissa, exponent) = match number.find(['e', 'E']) {
        Some(i) => (&number[..i], number[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (number, 0),
    };
    mantissa.parse::<f64>().map_err(|_| bad())?;
    let value = format!("{mantissa}e{}", exponent + shift).parse::<f64>().map_err(|_| bad())? * multiplier;
    if !value.is_finite() {
        return Err(format!("'{text}' is not finite"));
    }
    Ok(value)
}

/// Parses and validates a configuration, starting from the defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut config = RunConfig::default();
    apply_config(&mut config, text)?;
    config.validate()?;
    Ok(config)
}

/// Applies the keys in `text` on top of `config` without validating.
pub fn apply_config(config: &mut RunConfig, text: &str) -> Result<()> {
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        let indent = content.len() - content.trim_start().len();
        if let Some(rest) = trimmed.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| Error::Parse {
                line: line_no,
                column: indent + 1,
                message: "section header must end with ']'".into(),
            })?;
            let name = name.trim();
            if !SECTIONS.contains(&name) {
                return Err(Error::Parse {
                    line: line_no,
                    column: indent + 2,
                    message: format!("unknown section [{name}]"),
                });
            }
            section = name.to_string();
            continue;
        }
        let Some(eq) = content.find('=') else {
            return Err(Error::Parse {
                line: line_no,
                column: indent + 1,
                message: "expected 'key = value'".into(),
            });
        };
        if section.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                column: indent + 1,
                message: "key outside of a section".into(),
            });
        }
        let key = content[..eq].trim();
        let value_part = &content[eq + 1..];
        let value_col = eq + 2 + (value_part.len() - value_part.trim_start().len());
        let value = value_part.trim();
        let mut probe = config.clone();
        let known = probe.slots().iter().any(|(s, k, _)| *s == section && *k == key);
        let column = if known { value_col } else { indent + 1 };
        config.set_at(&section, key, value, line_no, column)?;
    }
    Ok(())
}

const SECTIONS: [&str; 10] = [
    "geometry", "qed", "trap", "protocol", "initial", "detect", "spectrum", "storage", "map", "run",
];

/// Writes every key in its base unit.
pub fn emit_config(config: &RunConfig) -> String {
    let mut copy = config.clone();
    let mut out = String::new();
    let mut current = "";
    let fmt = |v: f64, dim: Dim| {
        let unit = dim.base();
        if unit.is_empty() {
            format!("{v:?}")
        } else {
            format!("{v:?} {unit}")
        }
    };
    for (section, key, slot) in copy.slots() {
        if section != current {
            if !current.is_empty() {
                out.push('\n');
            }
            let _ = writeln!(out, "[{section}]");
            current = section;
        }
        let value = match slot {
            Slot::Num(v, dim) => fmt(*v, dim),
            Slot::Int(v) => v.to_string(),
            Slot::Bool(v) => v.to_string(),
            Slot::List(v, dim) => v.iter().map(|x| fmt(*x, dim)).collect::<Vec<_>>().join(", "),
            Slot::Vec3(v, dim) => v.iter().map(|x| fmt(*x, dim)).collect::<Vec<_>>().join(", "),
            Slot::Choice(v, _) => v.clone(),
        };
        let _ = writeln!(out, "{key} = {value}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(parse_config("").unwrap(), RunConfig::default());
        assert_eq!(parse_config("# nothing\n\n").unwrap(), RunConfig::default());
    }

    #[test]
    fn units_and_prefixes() {
        let c = parse_config("[geometry]\nwaist = 29 um\n[qed]\nkappa = 1400 kHz\n[detect]\ntau = 10us\ndark_rate = 2 kHz\n").unwrap();
        assert!((c.geometry.waist - 29e-6).abs() < 1e-18);
        assert!((c.qed.kappa - 1.4).abs() < 1e-12);
        assert!((c.detect.tau - 1e-5).abs() < 1e-18);
        assert_eq!(c.detect.dark_rate, 2000.0);
        let c = parse_config("[storage]\ntemperature = 100 uK\nprobe_photons = 0.5, 1, 2, 4\n").unwrap();
        assert!((c.storage.temperature - 1e-4).abs() < 1e-16);
        assert_eq!(c.storage.probe_photons, vec![0.5, 1.0, 2.0, 4.0]);
        assert_eq!(parse_quantity("-1.5e3 Hz", Dim::Rate).unwrap(), -1500.0);
        assert_eq!(parse_quantity("2e-3", Dim::None).unwrap(), 2e-3);
    }

    #[test]
    fn negative_kappa_names_the_invariant() {
        let err = parse_config("[qed]\nkappa = -1 MHz\n").unwrap_err();
        assert!(err.to_string().contains("kappa"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_keys_report_location() {
        let err = parse_config("[qed]\n  kapa = 1 MHz\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, column: 3, .. }), "{err:?}");
        let err = parse_config("[cavity]\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err:?}");
        let err = parse_config("[qed]\ng0 = 16 m\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, column: 6, .. }), "{err:?}");
        assert!(parse_config("g0 = 1\n").is_err());
        assert!(parse_config("[finesse]\n").is_err());
        assert!(parse_config("[geometry]\nfinesse = 3 MHz\n").is_err());
    }

    #[test]
    fn emit_then_parse_is_identity() {
        let mut c = RunConfig::default();
        c.geometry.waist = 29e-6 * (1.0 + 1e-13);
        c.qed.delta_ac = -35.123456789012345;
        c.trap.kind = "funnel".into();
        c.storage.probe_photons = vec![0.1, 0.3];
        c.spectrum.noise = false;
        let text = emit_config(&c);
        assert_eq!(parse_config(&text).unwrap(), c);
        assert_eq!(emit_config(&parse_config(&text).unwrap()), text);
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.run.seed = 2;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn internal_units_are_angular() {
        let c = RunConfig::default();
        let p = c.qed_params().unwrap();
        let two_pi = 2.0 * std::f64::consts::PI;
        assert!((p.g0 / two_pi - 16e6).abs() < 1e-6);
        assert!((p.kappa / two_pi - 1.4e6).abs() < 1e-6);
        assert!((p.gamma / two_pi - 3e6).abs() < 1e-6);
        assert!((p.delta_ac / two_pi + 35e6).abs() < 1e-6);
        assert!((p.empty_cavity_photons() - 0.44).abs() < 1e-12);
        assert!((c.g_eff() / two_pi - 0.83 * 16e6).abs() < 1e-6);
        let trap = c.trap_config().unwrap();
        assert!((trap.modes[0].height_h_mhz() - 346.0).abs() < 1e-9);
    }
}
