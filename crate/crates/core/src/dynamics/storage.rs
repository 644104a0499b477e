use rayon::prelude::*;

use super::{thermal_state, AtomState, IntervalSchedule, Integrator, MotionSettings, Walker};
use crate::error::{Error, Result};
use crate::potential::{trap_metrics, TrapConfig, AXIAL_FSR_OFFSET};
use crate::qed::QedParams;

/// Trapped-start ensemble settings.
#[derive(Debug, Clone, PartialEq)]
pub struct StorageSettings {
    /// Empty-cavity probe photon number on resonance, held constant.
    pub probe_photons: f64,
    /// Initial temperature (K).
    pub temperature: f64,
    /// Atoms still trapped at this time are right-censored.
    pub max_time: f64,
    /// Friction acts during its cooling intervals; `None` disables friction.
    pub schedule: Option<IntervalSchedule>,
    pub friction_beta: f64,
    pub probe_scattering: bool,
    pub trap_light_scattering: bool,
    /// Escape when the distance from the axis exceeds this many waists.
    pub escape_radius_waists: f64,
    /// Escape when `|z|` exceeds this many axial-mode wavelengths.
    pub escape_axial_wavelengths: f64,
    pub histogram_bins: usize,
}

impl Default for StorageSettings {
    fn default() -> Self {
        Self {
            probe_photons: 1.0,
            temperature: 1e-4,
            max_time: 0.1,
            schedule: Some(IntervalSchedule::default()),
            friction_beta: crate::units::RB85_MASS / super::DEFAULT_COOLING_TIME,
            probe_scattering: true,
            trap_light_scattering: true,
            escape_radius_waists: 1.0,
            escape_axial_wavelengths: 0.375,
            histogram_bins: 20,
        }
    }
}

/// Storage-time statistics. Censored atoms enter with `max_time`, so the
/// mean and median are lower bounds whenever `censored > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct StorageSummary {
    /// Per-atom storage time, in atom order.
    pub times: Vec<f64>,
    pub censored_flags: Vec<bool>,
    pub censored: usize,
    pub mean: f64,
    pub median: f64,
    /// `(bin start, count)` over `[0, max_time]`.
    pub histogram: Vec<(f64, usize)>,
    pub max_time: f64,
}

impl StorageSummary {
    fn from_times(times: Vec<f64>, censored_flags: Vec<bool>, max_time: f64, bins: usize) -> Self {
        let n = times.len();
        let mut sorted = times.clone();
        sorted.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        let bins = bins.max(1);
        let width = max_time / bins as f64;
        let mut histogram: Vec<(f64, usize)> = (0..bins).map(|i| (i as f64 * width, 0)).collect();
        for &t in &times {
            let i = ((t / width) as usize).min(bins - 1);
            histogram[i].1 += 1;
        }
        Self {
            mean: times.iter().sum::<f64>() / n as f64,
            median,
            censored: censored_flags.iter().filter(|&&c| c).count(),
            times,
            censored_flags,
            histogram,
            max_time,
        }
    }
}

/// Runs `n_atoms` thermal atoms started at the trap center until they leave
/// the trapping site or `max_time` passes.
///
/// Atom `i` draws from stream `i` of the ChaCha8 generator seeded by
/// `seed`, so results do not depend on the number of worker threads.
pub fn storage_time_ensemble(
    config: &TrapConfig,
    settings: &StorageSettings,
    params: &QedParams,
    n_atoms: usize,
    seed: u64,
) -> Result<StorageSummary> {
    if n_atoms < 10 {
        return Err(Error::InvalidParams(format!("need at least 10 atoms, got {n_atoms}")));
    }
    if !(settings.temperature >= 0.0 && settings.max_time > 0.0) {
        return Err(Error::InvalidConfig("temperature must be >= 0 and max_time > 0".into()));
    }
    if let Some(s) = &settings.schedule {
        s.validate()?;
    }
    let metrics = trap_metrics(config)?;
    let motion = MotionSettings {
        friction_beta: if settings.schedule.is_some() { settings.friction_beta } else { 0.0 },
        probe_scattering: settings.probe_scattering,
        trap_light_scattering: settings.trap_light_scattering,
        pinned: false,
    };
    let integrator = Integrator::new(config, params, settings.probe_photons, motion)?;
    let radius = settings.escape_radius_waists * config.geometry.waist;
    let axial = settings.escape_axial_wavelengths * config.geometry.mode_wavelength(AXIAL_FSR_OFFSET)?;
    let dt = integrator.default_dt();

    let results: Vec<(f64, bool)> = (0..n_atoms as u64)
        .into_par_iter()
        .map(|i| {
            let mut walker = Walker::new(AtomState::at_rest(Default::default()), seed, i);
            let start = thermal_state(settings.temperature, config.atom_mass, metrics.trap_frequencies, walker.rng());
            walker.state = start;
            loop {
                let t = walker.state.time;
                if t >= settings.max_time {
                    return (settings.max_time, true);
                }
                let r = walker.state.position;
                if r.x * r.x + r.y * r.y > radius * radius || r.z.abs() > axial {
                    return (t, false);
                }
                let cooling = settings.schedule.is_some_and(|s| s.is_cooling(t));
                integrator.step(&mut walker, dt, cooling);
            }
        })
        .collect();
    let (times, flags) = results.into_iter().unzip();
    Ok(StorageSummary::from_times(times, flags, settings.max_time, settings.histogram_bins))
}
