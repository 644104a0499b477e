use bluetrap::dynamics::{
    storage_time_ensemble, AtomState, Integrator, MotionSettings, StorageSettings, Walker,
};
use bluetrap::modes::{CavityGeometry, Position};
use bluetrap::potential::TrapConfig;
use bluetrap::qed::QedParams;

#[test]
fn pinned_momentum_diffusion_matches_recoil_kicks() {
    let config = TrapConfig::doughnut(CavityGeometry::reference(), 346.0, 30.0).unwrap();
    let params = QedParams::reference();
    let settings = MotionSettings {
        friction_beta: 0.0,
        probe_scattering: true,
        trap_light_scattering: false,
        pinned: true,
    };
    let integrator = Integrator::new(&config, &params, 0.44, settings).unwrap();
    let r = Position::zeros();
    let rate = integrator.scatter_rate(&r);
    let vr = integrator.recoil_velocity();
    let (atoms, dt, steps) = (2000u64, 1e-6, 1000);
    let duration = dt * steps as f64;

    let mut sum_sq = [0.0f64; 3];
    for i in 0..atoms {
        let mut w = Walker::new(AtomState::at_rest(r), 21, i);
        for _ in 0..steps {
            integrator.step(&mut w, dt, false);
        }
        for (k, s) in sum_sq.iter_mut().enumerate() {
            *s += w.state.velocity[k].powi(2);
        }
    }
    let expected_events = rate * duration;
    assert!(expected_events > 20.0, "{expected_events}");
    for (k, share) in [1.0 / 3.0, 1.0 / 3.0, 4.0 / 3.0].into_iter().enumerate() {
        let measured = sum_sq[k] / atoms as f64;
        let expected = vr * vr * expected_events * share;
        let rel = measured / expected - 1.0;
        assert!(rel.abs() < 0.1, "axis {k}: {measured:e} vs {expected:e}");
    }
}

#[test]
fn dark_unheated_atoms_outlive_the_window() {
    let config = TrapConfig::doughnut(CavityGeometry::reference(), 346.0, 30.0).unwrap();
    let settings = StorageSettings {
        probe_photons: 0.0,
        schedule: None,
        max_time: 30e-3,
        ..StorageSettings::default()
    };
    let s = storage_time_ensemble(&config, &settings, &QedParams::reference(), 10, 5).unwrap();
    assert!(s.median > 20e-3, "median {} s", s.median);
}
