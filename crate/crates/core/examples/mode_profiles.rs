//! Axial and transverse intensity of the trap modes near the cavity center.

use bluetrap::modes::{intensity_normalized, CavityGeometry, ModeSpec, Position, TransverseOrder};

fn main() -> bluetrap::Result<()> {
    let geometry = CavityGeometry::reference();
    println!(
        "L = {:.2} um, FSR = {:.3} GHz, z_R = {:.1} mm",
        geometry.length * 1e6,
        geometry.free_spectral_range() / 1e9,
        geometry.rayleigh_range() * 1e3
    );
    let axial = ModeSpec::new(TransverseOrder::TEM00, 3, 346.0)?;
    let guide = ModeSpec::new(TransverseOrder::TEM10, 2, 30.0)?;
    let lambda = geometry.mode_wavelength(3)?;

    println!("\n z/lambda   TEM00(q=+3)");
    for i in 0..=8 {
        let z = lambda * i as f64 / 16.0;
        let v = intensity_normalized(&geometry, &axial, &Position::new(0.0, 0.0, z))?;
        println!("{:9.4}   {v:.4}", z / lambda);
    }

    println!("\n x/w0      TEM10(q=+2)");
    for i in 0..=8 {
        let x = geometry.waist * i as f64 / 4.0;
        let v = intensity_normalized(&geometry, &guide, &Position::new(x, 0.0, 0.0))?;
        println!("{:9.3}   {v:.4}", x / geometry.waist);
    }
    Ok(())
}
