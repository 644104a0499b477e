//! Funnel and doughnut potentials: barriers, trap frequencies and a cut
//! through the ring.

use bluetrap::modes::{CavityGeometry, Position};
use bluetrap::potential::{trap_metrics, TrapConfig};
use bluetrap::units::joules_to_h_mhz;

fn main() -> bluetrap::Result<()> {
    let geometry = CavityGeometry::reference();
    for (name, config) in [
        ("funnel", TrapConfig::funnel(geometry.clone(), 346.0, 20.6)?),
        ("doughnut", TrapConfig::doughnut(geometry.clone(), 346.0, 30.0)?),
    ] {
        let m = trap_metrics(&config)?;
        let f = m.frequencies_hz();
        println!(
            "{name:>8}: axial {:.1}, radial {:.2}, guiding {:.2} h*MHz; f = ({:.0}, {:.0}, {:.0}) Hz",
            m.axial_barrier, m.radial_barrier, m.guiding_barrier, f[0], f[1], f[2]
        );
    }

    let doughnut = TrapConfig::doughnut(geometry.clone(), 346.0, 30.0)?.field()?;
    println!("\n y/w0   U/h (MHz)");
    for i in 0..=12 {
        let y = geometry.waist * i as f64 / 8.0;
        let u = joules_to_h_mhz(doughnut.energy(&Position::new(0.0, y, 0.0)));
        println!("{:5.3}   {u:8.3}", y / geometry.waist);
    }
    Ok(())
}
