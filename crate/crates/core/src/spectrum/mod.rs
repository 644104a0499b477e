//! Normal-mode transmission spectra: the fixed-coupling model, synthetic
//! photon-counting data and the least-squares fit that extracts the
//! effective coupling and the residual Stark shift of the atom.
//!
//! Detunings in [`SpectrumData`] are ordinary frequencies in MHz, as they
//! appear in data files. Model functions take angular frequencies.

mod fit;
mod synth;

pub use fit::{fit_normal_modes, FitOptions, FitResult};
pub use synth::{reference_grid_mhz, synthesize_spectrum, SynthesisSettings};

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::qed::{field_ratio_unchecked, QedParams};
use crate::units::PHOTONS_PER_PW;

/// Transmission relative to the empty resonant cavity at probe detuning
/// `delta_c`, with the atomic resonance displaced by `stark_shift`:
/// `Δ_a = Δ_c − (Δ_ac + Δ_s)`.
pub fn model_transmission(
    delta_c: f64,
    g_eff: f64,
    stark_shift: f64,
    params: &QedParams,
) -> Result<f64> {
    params.validate()?;
    Ok(model_unchecked(delta_c, g_eff, stark_shift, params))
}

pub(crate) fn model_unchecked(delta_c: f64, g_eff: f64, stark_shift: f64, params: &QedParams) -> f64 {
    let shifted = QedParams {
        delta_c,
        delta_ac: params.delta_ac + stark_shift,
        ..*params
    };
    field_ratio_unchecked(&shifted, g_eff).norm_sqr()
}

/// Dressed-state positions relative to the bare cavity,
/// `Δ_ac/2 ∓ sqrt(g² + Δ_ac²/4)`, returned as `(lower, upper)` in the
/// units of the inputs.
pub fn normal_mode_frequencies(g_eff: f64, delta_ac: f64) -> (f64, f64) {
    let half = delta_ac / 2.0;
    let root = (g_eff * g_eff + half * half).sqrt();
    (half - root, half + root)
}

/// One spectrum sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumPoint {
    pub delta_c_mhz: f64,
    pub transmission: f64,
    pub uncertainty: f64,
}

/// Transmission versus probe detuning.
///
/// Transmission is relative to the empty resonant cavity unless the file
/// says otherwise; `photon_calibration` converts intracavity photons to
/// transmitted power (pW per photon).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumData {
    pub points: Vec<SpectrumPoint>,
    pub photon_calibration: f64,
}

pub const SPECTRUM_HEADER: &str = "delta_c_MHz,transmission,uncertainty";

impl SpectrumData {
    pub fn new(points: Vec<SpectrumPoint>) -> Result<Self> {
        let data = Self {
            points,
            photon_calibration: 1.0 / PHOTONS_PER_PW,
        };
        data.validate()?;
        Ok(data)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.windows(2).any(|w| !(w[1].delta_c_mhz > w[0].delta_c_mhz)) {
            return Err(Error::InvalidParams(
                "spectrum detunings must be strictly increasing".into(),
            ));
        }
        if let Some(p) = self.points.iter().find(|p| !(p.uncertainty > 0.0)) {
            return Err(Error::InvalidParams(format!(
                "uncertainty at {} MHz must be positive",
                p.delta_c_mhz
            )));
        }
        if self.points.iter().any(|p| !p.transmission.is_finite()) {
            return Err(Error::InvalidParams("non-finite transmission".into()));
        }
        if !(self.photon_calibration > 0.0) {
            return Err(Error::InvalidParams("photon calibration must be positive".into()));
        }
        Ok(())
    }

    /// Multiplies every transmission and uncertainty by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            points: self
                .points
                .iter()
                .map(|p| SpectrumPoint {
                    transmission: p.transmission * factor,
                    uncertainty: p.uncertainty * factor,
                    ..*p
                })
                .collect(),
            photon_calibration: self.photon_calibration,
        }
    }

    /// Comma-separated text: optional `#` comment lines, the header, then
    /// one row per point.
    pub fn to_csv(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            let _ = writeln!(out, "# {c}");
        }
        let _ = writeln!(out, "# photon_calibration_pW_per_photon={}", self.photon_calibration);
        let _ = writeln!(out, "{SPECTRUM_HEADER}");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p.delta_c_mhz, p.transmission, p.uncertainty);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        let mut calibration = 1.0 / PHOTONS_PER_PW;
        let mut seen_header = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let line_no = i + 1;
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("photon_calibration_pW_per_photon=") {
                    calibration = v.trim().parse().map_err(|_| Error::Parse {
                        line: line_no,
                        column: 1,
                        message: format!("bad calibration '{v}'"),
                    })?;
                }
                continue;
            }
            if !seen_header {
                if line.replace(' ', "") != SPECTRUM_HEADER {
                    return Err(Error::Parse {
                        line: line_no,
                        column: 1,
                        message: format!("expected header '{SPECTRUM_HEADER}'"),
                    });
                }
                seen_header = true;
                continue;
            }
            let mut fields = [0.0; 3];
            let mut column = 1;
            let parts: Vec<&str> = raw.split(',').collect();
            if parts.len() != 3 {
                return Err(Error::Parse {
                    line: line_no,
                    column: 1,
                    message: format!("expected 3 fields, found {}", parts.len()),
                });
            }
            for (k, part) in parts.iter().enumerate() {
                fields[k] = part.trim().parse().map_err(|_| Error::Parse {
                    line: line_no,
                    column,
                    message: format!("not a number: '{}'", part.trim()),
                })?;
                column += part.len() + 1;
            }
            points.push(SpectrumPoint {
                delta_c_mhz: fields[0],
                transmission: fields[1],
                uncertainty: fields[2],
            });
        }
        if !seen_header {
            return Err(Error::Parse {
                line: 1,
                column: 1,
                message: "missing header".into(),
            });
        }
        let data = Self {
            points,
            photon_calibration: calibration,
        };
        data.validate()?;
        Ok(data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{angular_to_mhz, mhz_to_angular};

    #[test]
    fn bare_cavity_lorentzian() {
        let p = QedParams::reference();
        assert_eq!(model_transmission(0.0, 0.0, 0.0, &p).unwrap(), 1.0);
        let t = model_transmission(p.kappa, 0.0, 0.0, &p).unwrap();
        assert!((t - 0.5).abs() < 1e-15);
    }

    #[test]
    fn normal_modes_closed_form() {
        let (lo, hi) = normal_mode_frequencies(0.0, -35.0);
        assert_eq!((lo, hi), (-35.0, 0.0));
        let (lo, hi) = normal_mode_frequencies(16.0, 0.0);
        assert_eq!((lo, hi), (-16.0, 16.0));
        let (lo, hi) = normal_mode_frequencies(0.83 * 16.0, -35.0);
        assert!((lo + 39.468).abs() < 1e-3, "{lo}");
        assert!((hi - 4.468).abs() < 1e-3, "{hi}");
    }

    #[test]
    fn atom_like_peak_is_weak() {
        let p = QedParams::reference();
        let g = 0.83 * p.g0;
        let (lo, hi) = normal_mode_frequencies(g, p.delta_ac);
        let peak = |center: f64| {
            (-200..=200)
                .map(|k| center + mhz_to_angular(0.01 * k as f64))
                .map(|d| (d, model_transmission(d, g, 0.0, &p).unwrap()))
                .fold((0.0, 0.0), |a, b| if b.1 > a.1 { b } else { a })
        };
        let (d_atom, t_atom) = peak(lo);
        let (d_cav, t_cav) = peak(hi);
        assert!(t_cav / t_atom > 50.0, "{}", t_cav / t_atom);
        assert!((angular_to_mhz(d_atom - lo)).abs() < 1.4);
        assert!((angular_to_mhz(d_cav - hi)).abs() < 1.4);
    }

    #[test]
    fn csv_rejects_bad_rows() {
        let err = SpectrumData::from_csv("delta_c_MHz,transmission,uncertainty\n1,2,x\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, column: 5, .. }), "{err:?}");
        assert!(SpectrumData::from_csv("a,b,c\n").is_err());
        assert!(SpectrumData::from_csv("delta_c_MHz,transmission,uncertainty\n2,1,1\n1,1,1\n").is_err());
        assert!(SpectrumData::from_csv("delta_c_MHz,transmission,uncertainty\n1,1,0\n").is_err());
    }

    #[test]
    fn csv_keeps_calibration() {
        let data = SpectrumData {
            points: vec![SpectrumPoint {
                delta_c_mhz: -1.5,
                transmission: 0.25,
                uncertainty: 0.01,
            }],
            photon_calibration: 0.5,
        };
        let text = data.to_csv(&["config_hash=abc".into()]);
        assert!(text.starts_with("# config_hash=abc\n"));
        assert_eq!(SpectrumData::from_csv(&text).unwrap(), data);
    }
}
