//! Weak-excitation transmission and scattering across the probe detuning,
//! and the dispersive operating point.

use bluetrap::detect::scattered_photon_budget;
use bluetrap::qed::{steady_state_response, QedParams};
use bluetrap::spectrum::normal_mode_frequencies;
use bluetrap::units::{angular_to_mhz, mhz_to_angular};

fn main() -> bluetrap::Result<()> {
    let params = QedParams::reference();
    let g = 0.83 * params.g0;
    let (lower, upper) = normal_mode_frequencies(angular_to_mhz(g), angular_to_mhz(params.delta_ac));
    println!("normal modes at {lower:.2} and {upper:.2} MHz");

    println!("\n dc (MHz)   T/T0      excitation");
    for d in (-50..=15).step_by(5) {
        let r = steady_state_response(&params.with_delta_c(mhz_to_angular(d as f64)), g)?;
        println!("{d:8}   {:.5}   {:.3e}", r.relative_transmission(), r.atomic_excitation);
    }

    let point = params.normalized_to_photons(g, 0.022)?;
    let r = steady_state_response(&point, g)?;
    println!(
        "\nat 0.022 photons: excitation {:.2e}, scattering {:.0} kHz, {:.2} photons in 10 us",
        r.atomic_excitation,
        r.scatter_rate / 1e3,
        scattered_photon_budget(&r, 10e-6)
    );
    Ok(())
}
