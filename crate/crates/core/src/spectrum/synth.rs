use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::{model_unchecked, SpectrumData, SpectrumPoint};
use crate::error::{Error, Result};
use crate::qed::QedParams;
use crate::units::{mhz_to_angular, PHOTONS_PER_PW};

/// Measurement protocol for a synthetic spectrum.
///
/// Each grid point collects `samples_per_point` qualified probe intervals.
/// A probe interval counts only when both neighbouring cooling intervals
/// (probe on the bare cavity) transmit less than
/// `qualification_threshold` of the empty-cavity level.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisSettings {
    /// Probe detunings `Δ_c/2π` (MHz), strictly increasing.
    pub grid_mhz: Vec<f64>,
    pub samples_per_point: usize,
    /// Probe interval length (s).
    pub probe_interval: f64,
    /// Cooling interval length (s).
    pub cooling_interval: f64,
    /// Empty-cavity photon number on resonance at the probe power.
    pub bare_photons: f64,
    /// Poisson counting noise; when off the expected counts are used.
    pub noise: bool,
    /// Qualification rule; `None` keeps every interval.
    pub qualification_threshold: Option<f64>,
    /// Relative spread of the coupling between intervals (0 = fixed `g`).
    pub coupling_spread: f64,
    pub seed: u64,
}

impl Default for SynthesisSettings {
    fn default() -> Self {
        Self {
            grid_mhz: reference_grid_mhz(),
            samples_per_point: 400,
            probe_interval: 0.1e-3,
            cooling_interval: 0.5e-3,
            bare_photons: 0.5,
            noise: true,
            qualification_threshold: Some(0.10),
            coupling_spread: 0.0,
            seed: 0,
        }
    }
}

/// −50 MHz to +15 MHz in 0.5 MHz steps: covers both normal modes for
/// `Δ_ac/2π = −35 MHz`.
pub fn reference_grid_mhz() -> Vec<f64> {
    (0..=130).map(|k| -50.0 + 0.5 * k as f64).collect()
}

impl SynthesisSettings {
    pub fn validate(&self) -> Result<()> {
        if self.grid_mhz.is_empty() {
            return Err(Error::InvalidConfig("detuning grid is empty".into()));
        }
        if self.grid_mhz.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidConfig("detuning grid must increase".into()));
        }
        if self.samples_per_point == 0 {
            return Err(Error::InvalidConfig("samples_per_point must be at least 1".into()));
        }
        if !(self.probe_interval > 0.0) || !(self.cooling_interval > 0.0) {
            return Err(Error::InvalidConfig("interval durations must be positive".into()));
        }
        if !(self.bare_photons > 0.0) {
            return Err(Error::InvalidConfig("bare photon number must be positive".into()));
        }
        if !(self.coupling_spread >= 0.0) {
            return Err(Error::InvalidConfig("coupling spread must be non-negative".into()));
        }
        Ok(())
    }
}

/// Draws a photon-counting spectrum from the fixed-coupling model.
///
/// Transmission is reported relative to the expected empty-cavity counts;
/// the uncertainty is the empirical standard error of the mean, floored at
/// one count over all intervals of the point.
pub fn synthesize_spectrum(
    params: &QedParams,
    g_eff: f64,
    stark_shift: f64,
    settings: &SynthesisSettings,
) -> Result<SpectrumData> {
    params.validate()?;
    settings.validate()?;
    let per_photon = params.detected_rate(1.0);
    let bare_probe = settings.bare_photons * per_photon * settings.probe_interval;
    let bare_cooling = settings.bare_photons * per_photon * settings.cooling_interval;
    if !(bare_probe > 0.0) {
        return Err(Error::InvalidConfig(
            "no photons are detected: check detection efficiency".into(),
        ));
    }
    let n = settings.samples_per_point;
    let floor = 1.0 / (n as f64 * bare_probe);

    if !settings.noise {
        let points = settings
            .grid_mhz
            .iter()
            .map(|&d| {
                let t = model_unchecked(mhz_to_angular(d), g_eff, stark_shift, params);
                let mean = t * bare_probe;
                SpectrumPoint {
                    delta_c_mhz: d,
                    transmission: t,
                    uncertainty: ((mean / n as f64).sqrt() / bare_probe).max(floor),
                }
            })
            .collect();
        return Ok(SpectrumData {
            points,
            photon_calibration: 1.0 / PHOTONS_PER_PW,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let spread = Normal::new(0.0, settings.coupling_spread.max(1e-300))
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let poisson = |mean: f64, rng: &mut ChaCha8Rng| -> f64 {
        if mean > 0.0 {
            Poisson::new(mean).map(|p| p.sample(rng)).unwrap_or(0.0)
        } else {
            0.0
        }
    };

    let max_attempts = 100 * n;
    let mut points = Vec::with_capacity(settings.grid_mhz.len());
    for &d in &settings.grid_mhz {
        let delta_c = mhz_to_angular(d);
        let (mut sum, mut sum_sq, mut kept, mut attempts) = (0.0, 0.0, 0usize, 0usize);
        while kept < n {
            attempts += 1;
            if attempts > max_attempts {
                return Err(Error::InvalidConfig(format!(
                    "fewer than {n} of {max_attempts} probe intervals qualified at {d} MHz"
                )));
            }
            let g = if settings.coupling_spread > 0.0 {
                (g_eff * (1.0 + spread.sample(&mut rng))).clamp(0.0, params.g0)
            } else {
                g_eff
            };
            if let Some(threshold) = settings.qualification_threshold {
                let cooling_mean = model_unchecked(0.0, g, stark_shift, params) * bare_cooling;
                let before = poisson(cooling_mean, &mut rng);
                let after = poisson(cooling_mean, &mut rng);
                let limit = threshold * bare_cooling;
                if before >= limit || after >= limit {
                    continue;
                }
            }
            let counts = poisson(model_unchecked(delta_c, g, stark_shift, params) * bare_probe, &mut rng);
            sum += counts;
            sum_sq += counts * counts;
            kept += 1;
        }
        let mean = sum / n as f64;
        let var = if n > 1 {
            ((sum_sq - n as f64 * mean * mean) / (n as f64 - 1.0)).max(0.0)
        } else {
            mean
        };
        points.push(SpectrumPoint {
            delta_c_mhz: d,
            transmission: mean / bare_probe,
            uncertainty: ((var / n as f64).sqrt() / bare_probe).max(floor),
        });
    }
    Ok(SpectrumData {
        points,
        photon_calibration: 1.0 / PHOTONS_PER_PW,
    })
}
