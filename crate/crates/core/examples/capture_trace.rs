//! Triggered capture of a slow atom guided along the funnel.

use bluetrap::dynamics::{run_capture, AtomState, ProtocolSpec};
use bluetrap::modes::{CavityGeometry, Position};
use bluetrap::potential::TrapConfig;
use bluetrap::qed::QedParams;
use nalgebra::Vector3;

fn main() -> bluetrap::Result<()> {
    let geometry = CavityGeometry::reference();
    let config = TrapConfig::axial_only(geometry.clone(), 346.0)?.with_gravity(true);
    let protocol = ProtocolSpec {
        max_time: 10e-3,
        ..ProtocolSpec::default()
    };
    for x in [0.0, 3.0 * geometry.waist] {
        let start = AtomState {
            position: Position::new(x, -3.0 * geometry.waist, 0.0),
            velocity: Vector3::new(0.0, 0.08, 0.0),
            time: 0.0,
        };
        let trace = run_capture(&start, &protocol, &config, &QedParams::reference(), 2)?;
        println!("injected at x = {:.0} um:", x * 1e6);
        for e in &trace.events {
            println!("  {:8.3} ms  {}", e.time * 1e3, e.kind.name());
        }
    }
    Ok(())
}
