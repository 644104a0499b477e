//! Synthesize a noisy transmission spectrum and recover the coupling and
//! Stark shift.

use bluetrap::qed::QedParams;
use bluetrap::spectrum::{fit_normal_modes, synthesize_spectrum, FitOptions, SynthesisSettings};
use bluetrap::units::{angular_to_mhz, mhz_to_angular};

fn main() -> bluetrap::Result<()> {
    let params = QedParams::reference();
    let settings = SynthesisSettings {
        seed: 7,
        ..SynthesisSettings::default()
    };
    let data = synthesize_spectrum(&params, 0.83 * params.g0, mhz_to_angular(0.7), &settings)?;
    let fit = fit_normal_modes(&data, &params, None, &FitOptions::default())?;
    println!(
        "g/g0 = {:.4} +- {:.4}",
        fit.g_eff / params.g0,
        fit.g_uncertainty() / params.g0
    );
    println!(
        "Stark shift = {:.2} +- {:.2} MHz",
        angular_to_mhz(fit.stark_shift),
        angular_to_mhz(fit.stark_uncertainty())
    );
    println!(
        "amplitude = {:.3}, reduced chi2 = {:.2}, {} evaluations",
        fit.amplitude_scale,
        fit.reduced_chi_squared(),
        fit.evaluations
    );
    Ok(())
}
