//! Truncated-Fock master equation against the weak-excitation formula as
//! the drive grows.

use bluetrap::qed::{master_equation_steady_state, steady_state_response, QedParams};

fn main() -> bluetrap::Result<()> {
    let params = QedParams::reference();
    let g = 0.83 * params.g0;
    println!(" photons   master      weak        rel. diff   top level");
    for photons in [1e-4, 1e-3, 0.022, 0.1, 0.3] {
        let p = params.normalized_to_photons(g, photons)?;
        let weak = steady_state_response(&p, g)?;
        let me = master_equation_steady_state(&p, g, 5)?;
        let diff = me.response.photon_number / weak.photon_number - 1.0;
        println!(
            "{photons:8.4}   {:.4e}  {:.4e}  {diff:+.2e}   {:.1e}",
            me.response.photon_number, weak.photon_number, me.top_level_population
        );
    }
    Ok(())
}
