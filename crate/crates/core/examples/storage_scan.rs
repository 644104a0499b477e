//! Median storage time of a thermal ensemble against probe power.

use bluetrap::dynamics::{storage_time_ensemble, StorageSettings};
use bluetrap::modes::CavityGeometry;
use bluetrap::potential::TrapConfig;
use bluetrap::qed::QedParams;
use bluetrap::units::photons_to_picowatts;

fn main() -> bluetrap::Result<()> {
    let config = TrapConfig::doughnut(CavityGeometry::reference(), 346.0, 10.0)?;
    for photons in [2.0, 8.0] {
        let settings = StorageSettings {
            probe_photons: photons,
            max_time: 20e-3,
            ..StorageSettings::default()
        };
        let s = storage_time_ensemble(&config, &settings, &QedParams::reference(), 20, 1)?;
        println!(
            "{:.2} pW: median {:.2} ms, mean {:.2} ms, {} of {} still trapped",
            photons_to_picowatts(photons),
            s.median * 1e3,
            s.mean * 1e3,
            s.censored,
            s.times.len()
        );
    }
    Ok(())
}
