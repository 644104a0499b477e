//! End-to-end acceptance checks at the reference operating point.
//!
//! Each criterion prints one `PASS`/`FAIL` line straight to stdout so the
//! verdicts show up without `--nocapture`.

use std::io::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bluetrap::app::layered_config;
use bluetrap::config::shipped_profile;
use bluetrap::detect::{confidence, scattered_photon_budget, simulate_detection, DetectionSetup};
use bluetrap::dynamics::{
    run_capture, storage_time_ensemble, AtomState, EventKind, Integrator, MotionSettings, ProtocolSpec,
    Walker,
};
use bluetrap::modes::{CavityGeometry, Position};
use bluetrap::potential::{trap_metrics, TrapConfig, AXIAL_FSR_OFFSET};
use bluetrap::qed::{master_equation_steady_state, steady_state_response, QedParams};
use bluetrap::spectrum::{
    fit_normal_modes, normal_mode_frequencies, synthesize_spectrum, FitOptions, SynthesisSettings,
};
use bluetrap::units::{angular_to_mhz, mhz_to_angular, RB85_MASS};

type Verdict = (bool, String);

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn reference_point() -> (QedParams, f64) {
    let p = QedParams::reference();
    let g = 0.83 * p.g0;
    (p.normalized_to_photons(g, 0.022).unwrap(), g)
}

fn atomic_excitation() -> Verdict {
    let (p, g) = reference_point();
    let r = steady_state_response(&p, g).unwrap();
    let e = rel(r.atomic_excitation, 3.1e-3);
    (e < 0.03, format!("excitation {:.4e} (rel. err {:.2}%)", r.atomic_excitation, 100.0 * e))
}

fn scattering_budget() -> Verdict {
    let (p, g) = reference_point();
    let r = steady_state_response(&p, g).unwrap();
    let e = rel(r.scatter_rate, 117e3);
    let photons = scattered_photon_budget(&r, 10e-6);
    (
        e < 0.03 && (0.9..=1.5).contains(&photons),
        format!(
            "rate {:.1} kHz (rel. err {:.2}%), {photons:.3} photons in 10 us",
            r.scatter_rate / 1e3,
            100.0 * e
        ),
    )
}

fn detection_confidence() -> Verdict {
    let setup = DetectionSetup::reference();
    let exact = confidence(&setup).unwrap().p_correct;
    let mc = simulate_detection(&setup, 1_000_000, 2024).unwrap();
    let z = (mc.p_correct() - exact).abs() / mc.standard_error();
    let means_ok = (setup.mean_empty() - 3.87).abs() < 0.01 && (setup.mean_atom() - 0.19).abs() < 0.01;
    (
        means_ok && (0.94..=0.955).contains(&exact) && z <= 3.0,
        format!(
            "means {:.3}/{:.3}, p_correct {exact:.4}, Monte Carlo {:.4} ({z:.2} SE)",
            setup.mean_empty(),
            setup.mean_atom(),
            mc.p_correct()
        ),
    )
}

fn normal_mode_positions() -> Verdict {
    let p = QedParams::reference();
    let g = 0.83 * p.g0;
    let (lo, hi) = normal_mode_frequencies(angular_to_mhz(g), angular_to_mhz(p.delta_ac));
    let closed_ok = (lo + 39.5).abs() < 0.1 && (hi - 4.5).abs() < 0.1;

    let settings = SynthesisSettings {
        seed: 4,
        ..SynthesisSettings::default()
    };
    let data = synthesize_spectrum(&p, g, 0.0, &settings).unwrap();
    let mid = 0.5 * (lo + hi);
    // three-point running mean suppresses single-point shot noise
    let pts = &data.points;
    let peak = (1..pts.len() - 1)
        .filter(|&i| pts[i].delta_c_mhz < mid)
        .max_by(|&a, &b| {
            let s = |i: usize| pts[i - 1].transmission + pts[i].transmission + pts[i + 1].transmission;
            s(a).total_cmp(&s(b))
        })
        .map(|i| pts[i].delta_c_mhz)
        .unwrap();
    (
        closed_ok && (peak + 40.0).abs() <= 1.0,
        format!("closed form {lo:.2} / {hi:.2} MHz, synthesized atom-like peak {peak:.1} MHz"),
    )
}

fn fit_round_trip() -> Verdict {
    let p = QedParams::reference();
    let g = 0.83 * p.g0;
    let stark = mhz_to_angular(0.7);
    let mut ok = 0;
    let mut worst = (0.0f64, 0.0f64);
    for seed in 0..20 {
        let settings = SynthesisSettings {
            seed: 500 + seed,
            ..SynthesisSettings::default()
        };
        let data = synthesize_spectrum(&p, g, stark, &settings).unwrap();
        let fit = fit_normal_modes(&data, &p, None, &FitOptions::default()).unwrap();
        let dg = rel(fit.g_eff, g);
        let ds = angular_to_mhz((fit.stark_shift - stark).abs());
        worst = (worst.0.max(dg), worst.1.max(ds));
        if dg < 0.02 && ds < 0.3 {
            ok += 1;
        }
    }
    (
        ok >= 18,
        format!(
            "{ok}/20 within tolerance (worst g err {:.2}%, worst Stark err {:.2} MHz)",
            100.0 * worst.0,
            worst.1
        ),
    )
}

/// Worst relative master-equation vs weak-excitation difference over 20
/// random sets driven to `max(photons, excitation) = level`.
fn oracle_worst(level: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let base = QedParams {
            g0: mhz_to_angular(16.0),
            kappa: mhz_to_angular(rng.random_range(0.5..5.0)),
            gamma: mhz_to_angular(rng.random_range(1.0..6.0)),
            delta_c: mhz_to_angular(rng.random_range(-20.0..20.0)),
            delta_ac: mhz_to_angular(rng.random_range(-50.0..50.0)),
            drive: 0.0,
            detection_efficiency: 0.05,
        };
        let g = base.g0 * rng.random_range(0.2..1.2);
        let target = level * rng.random_range(0.05..1.0);
        let probe = steady_state_response(&base.with_drive(base.kappa), g).unwrap();
        let largest = probe.photon_number.max(probe.atomic_excitation);
        let p = base.with_drive(base.kappa * (target / largest).sqrt());
        let weak = steady_state_response(&p, g).unwrap();
        let me = master_equation_steady_state(&p, g, 5).unwrap().response;
        for (a, b) in [
            (me.photon_number, weak.photon_number),
            (me.atomic_excitation, weak.atomic_excitation),
            (me.relative_transmission(), weak.relative_transmission()),
        ] {
            worst = worst.max(rel(a, b));
        }
    }
    worst
}

fn oracle_equivalence() -> Verdict {
    // the gap is second order in the drive; near-resonant strongly coupled
    // sets reach ~27 % per unit excitation, so the check runs at 1e-4
    let weak = oracle_worst(1e-4);
    let stronger = oracle_worst(2e-3);
    (
        weak < 0.01,
        format!(
            "worst relative difference {:.3}% at max(n, exc) <= 1e-4; {:.2}% at <= 2e-3",
            100.0 * weak,
            100.0 * stronger
        ),
    )
}

fn potential_correctness() -> Verdict {
    let geometry = CavityGeometry::reference();
    let doughnut = TrapConfig::doughnut(geometry.clone(), 346.0, 30.0).unwrap();
    let funnel = TrapConfig::funnel(geometry.clone(), 346.0, 20.6).unwrap();
    let mut origin_ok = true;
    for cfg in [&doughnut, &funnel] {
        for gravity in [false, true] {
            let field = cfg.clone().with_gravity(gravity).field().unwrap();
            origin_ok &= field.energy(&Position::zeros()) == 0.0;
        }
    }
    let d = trap_metrics(&doughnut).unwrap();
    let f = trap_metrics(&funnel).unwrap();
    let barrier_err = [
        rel(d.axial_barrier, 346.0),
        rel(d.radial_barrier, 30.0),
        rel(f.guiding_barrier, 20.6),
        rel(f.axial_barrier, 346.0),
    ]
    .into_iter()
    .fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_force: f64 = 0.0;
    let fields = [
        doughnut.clone().with_gravity(true).field().unwrap(),
        funnel.clone().with_gravity(true).field().unwrap(),
    ];
    let w0 = geometry.waist;
    for i in 0..1000 {
        let field = &fields[i % 2];
        let r = Position::new(
            rng.random_range(-2.0 * w0..2.0 * w0),
            rng.random_range(-2.0 * w0..2.0 * w0),
            rng.random_range(-1.5e-6..1.5e-6),
        );
        let f = field.force(&r);
        let mut numeric = Vector3::zeros();
        for axis in 0..3 {
            let h = if axis == 2 { 1e-12 } else { 1e-10 };
            let (mut a, mut b) = (r, r);
            a[axis] += h;
            b[axis] -= h;
            numeric[axis] = -(field.energy(&a) - field.energy(&b)) / (2.0 * h);
        }
        worst_force = worst_force.max((numeric - f).norm() / f.norm());
    }
    (
        origin_ok && barrier_err < 1e-9 && worst_force < 1e-6,
        format!(
            "U(0) = 0: {origin_ok}, worst barrier err {barrier_err:.1e}, worst force err {worst_force:.1e}"
        ),
    )
}

fn trap_frequencies() -> Verdict {
    let geometry = CavityGeometry::reference();
    let cfg = TrapConfig::doughnut(geometry.clone(), 265.0, 30.0).unwrap();
    let m = trap_metrics(&cfg).unwrap();
    let two_pi = std::f64::consts::TAU;
    let k = two_pi / geometry.mode_wavelength(AXIAL_FSR_OFFSET).unwrap();
    let ua = bluetrap::units::h_mhz_to_joules(265.0);
    let ur = bluetrap::units::h_mhz_to_joules(30.0);
    let fz = k * (2.0 * ua / RB85_MASS).sqrt() / two_pi;
    let frho = (4.0 * std::f64::consts::E * ur / (RB85_MASS * geometry.waist.powi(2))).sqrt() / two_pi;
    let [fx, fy, fzz] = m.frequencies_hz();
    let worst = [rel(fzz, fz), rel(fx, frho), rel(fy, frho)].into_iter().fold(0.0, f64::max);
    (
        worst < 0.01,
        format!(
            "axial {:.4} MHz vs {:.4} MHz, radial {:.3}/{:.3} kHz vs {:.3} kHz",
            fzz / 1e6,
            fz / 1e6,
            fx / 1e3,
            fy / 1e3,
            frho / 1e3
        ),
    )
}

fn dynamics_properties() -> Verdict {
    let geometry = CavityGeometry::reference();
    let params = QedParams::reference();

    // conservative energy over 10 ms
    let cfg = TrapConfig::doughnut(geometry.clone(), 346.0, 30.0).unwrap();
    let int = Integrator::new(&cfg, &params, 0.0, MotionSettings::conservative()).unwrap();
    let mut w = Walker::new(
        AtomState {
            position: Position::new(3e-6, -2e-6, 3e-8),
            velocity: Vector3::new(0.02, 0.01, 0.05),
            time: 0.0,
        },
        0,
        0,
    );
    let e0 = int.energy(&w.state);
    let dt = int.default_dt() / 64.0;
    let steps = (10e-3 / dt).ceil() as u64;
    let mut drift: f64 = 0.0;
    for i in 0..steps {
        int.step(&mut w, dt, false);
        if i % 64 == 0 {
            drift = drift.max(rel(int.energy(&w.state), e0));
        }
    }
    drift = drift.max(rel(int.energy(&w.state), e0));
    let energy_ok = drift < 1e-6;

    // recoil-event rate of a pinned atom at g = 0.83 g0
    let x = geometry.waist * (-(0.83f64.powi(2)).ln() / 2.0).sqrt();
    let r = Position::new(x, 0.0, 0.0);
    let pinned = MotionSettings {
        friction_beta: 0.0,
        probe_scattering: true,
        trap_light_scattering: false,
        pinned: true,
    };
    let int = Integrator::new(&cfg, &params, 0.44, pinned).unwrap();
    let analytic = steady_state_response(&params.with_empty_cavity_photons(0.44), 0.83 * params.g0)
        .unwrap()
        .scatter_rate;
    let duration = 1.0;
    let mut w = Walker::new(AtomState::at_rest(r), 9, 0);
    for _ in 0..1_000_000 {
        int.step(&mut w, duration / 1e6, false);
    }
    let expected = analytic * duration;
    let sigmas = (w.scatter_events as f64 - expected) / expected.sqrt();
    let recoil_ok = sigmas.abs() <= 3.0;

    // funnel guidance: 20 seeds on axis and at x = 3 w0
    let trap = TrapConfig::axial_only(geometry.clone(), 346.0).unwrap().with_gravity(true);
    let launch = |x: f64| AtomState {
        position: Position::new(x, -3.0 * geometry.waist, 0.0),
        velocity: Vector3::new(0.0, 0.08, 0.0),
        time: 0.0,
    };
    let mut counts = [[0u32; 2]; 2];
    for (k, heating) in [false, true].into_iter().enumerate() {
        let protocol = ProtocolSpec {
            max_time: 3e-3,
            probe_scattering: heating,
            trap_light_scattering: heating,
            ..ProtocolSpec::default()
        };
        for seed in 0..20 {
            let on = run_capture(&launch(0.0), &protocol, &trap, &params, seed).unwrap();
            counts[k][0] += on.has(EventKind::TrapClosed) as u32;
            let off = run_capture(&launch(3.0 * geometry.waist), &protocol, &trap, &params, seed).unwrap();
            counts[k][1] += off.has(EventKind::Triggered) as u32;
        }
    }
    let capture_ok = counts[0] == [20, 0] && counts[1][1] == 0 && counts[1][0] >= 5;

    (
        energy_ok && recoil_ok && capture_ok,
        format!(
            "energy drift {drift:.2e}; {} events vs {expected:.0} expected ({sigmas:+.2} sigma); \
             capture on/off axis {}/{} of 20 without heating, {}/{} with heating",
            w.scatter_events, counts[0][0], counts[0][1], counts[1][0], counts[1][1]
        ),
    )
}

fn storage_scan() -> Verdict {
    let config = layered_config(shipped_profile("storage").unwrap(), None, &[]).unwrap();
    let trap = config.trap_config().unwrap();
    let params = config.qed_params().unwrap();
    let mut medians = Vec::new();
    for &n in &[1.0, 2.0, 4.0, 8.0] {
        let settings = config.storage_settings(n).unwrap();
        let s = storage_time_ensemble(&trap, &settings, &params, 100, config.run.seed).unwrap();
        medians.push(s.median);
    }
    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
    let shown: Vec<String> = medians.iter().map(|m| format!("{:.3}", m * 1e3)).collect();
    (decreasing, format!("median storage [ms] at 1, 2, 4, 8 photons: {}", shown.join(", ")))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("atomic excitation", atomic_excitation),
        ("scattering rate and photon budget", scattering_budget),
        ("detection confidence", detection_confidence),
        ("normal-mode positions", normal_mode_positions),
        ("fit round trip", fit_round_trip),
        ("master-equation oracle", oracle_equivalence),
        ("potential correctness", potential_correctness),
        ("trap frequencies", trap_frequencies),
        ("dynamics properties", dynamics_properties),
        ("storage time against probe power", storage_scan),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let start = std::time::Instant::now();
        let (pass, detail) = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|e| (false, format!("panicked: {:?}", e.downcast_ref::<String>())));
        let line = format!(
            "{} {:2} {name}: {detail} [{:.1} s]\n",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64()
        );
        std::io::stdout().write_all(line.as_bytes()).unwrap();
        if !pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
