use std::path::Path;
use std::process::{Command, Output};

use bluetrap::app::{layered_config, run_subcommand, Command as Sub, RunInputs};
use bluetrap::config::{emit_config, parse_config, shipped_profile, RunConfig, PROFILES};
use bluetrap::units::mhz_to_angular;

fn bluetrap(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bluetrap"))
        .args(args)
        .arg("--output")
        .arg(out)
        .env_remove("BLUETRAP_PROFILE_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn reference_profile_carries_the_operating_point() {
    let c = parse_config(shipped_profile("reference").unwrap()).unwrap();
    assert_eq!(c, RunConfig::default());
    assert_eq!((c.qed.g0, c.qed.gamma, c.qed.kappa), (16.0, 3.0, 1.4));
    assert_eq!(c.geometry.waist, 29e-6);
    assert_eq!(c.qed.delta_ac, -35.0);
    let length = c.geometry().unwrap().length;
    assert!((length - 0.122e-3).abs() < 0.001e-3, "{length}");
    let p = c.qed_params().unwrap();
    assert!((p.g0 - mhz_to_angular(16.0)).abs() < 1e-6);
}

#[test]
fn reference_profile_lists_every_key() {
    let profile = shipped_profile("reference").unwrap();
    let listed: Vec<String> = profile
        .lines()
        .filter_map(|l| l.split_once('=').map(|(k, _)| k.trim().to_string()))
        .collect();
    let mut section = "";
    for line in emit_config(&RunConfig::default()).lines() {
        if let Some(s) = line.strip_prefix('[') {
            section = s.trim_end_matches(']');
            continue;
        }
        if let Some((key, _)) = line.split_once('=') {
            assert!(listed.iter().any(|k| k == key.trim()), "[{section}] {key} missing from reference.profile");
        }
    }
}

#[test]
fn shipped_profiles_validate() {
    for (name, text) in PROFILES {
        let c = layered_config(text, None, &[]).unwrap_or_else(|e| panic!("{name}: {e}"));
        c.validate().unwrap();
    }
}

#[test]
fn same_seed_gives_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["detect", "--set", "detect.trials=20000"];
    assert!(bluetrap(&args, a.path()).status.success());
    assert!(bluetrap(&args, b.path()).status.success());
    for name in ["detect.csv", "detect_curve.csv", "run.profile", "manifest.txt"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
    let other = tempfile::tempdir().unwrap();
    assert!(bluetrap(&["detect", "--set", "detect.trials=20000", "--seed", "9"], other.path()).status.success());
    assert_ne!(read(a.path(), "detect.csv"), read(other.path(), "detect.csv"));
}

#[test]
fn manifest_reproduces_the_run() {
    let first = tempfile::tempdir().unwrap();
    let args = ["spectrum", "--set", "spectrum.samples=50", "--seed", "17"];
    assert!(bluetrap(&args, first.path()).status.success());
    let manifest = read(first.path(), "manifest.txt");
    let hash = manifest
        .lines()
        .find_map(|l| l.strip_prefix("config_hash = "))
        .unwrap()
        .to_string();
    assert!(read(first.path(), "spectrum.csv").contains(&format!("config_hash={hash}")));

    let profile = first.path().join("run.profile");
    let second = tempfile::tempdir().unwrap();
    let o = bluetrap(&["spectrum", "--config", profile.to_str().unwrap()], second.path());
    assert!(o.status.success());
    assert_eq!(read(first.path(), "spectrum.csv"), read(second.path(), "spectrum.csv"));
    assert_eq!(manifest, read(second.path(), "manifest.txt"));
}

#[test]
fn spectrum_then_fit_recovers_the_coupling() {
    let dir = tempfile::tempdir().unwrap();
    assert!(bluetrap(&["spectrum"], dir.path()).status.success());
    let input = dir.path().join("spectrum.csv");
    let fit_dir = tempfile::tempdir().unwrap();
    let o = bluetrap(&["fit", "--input", input.to_str().unwrap()], fit_dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fit = read(fit_dir.path(), "fit.csv");
    let value = |name: &str| -> f64 {
        fit.lines()
            .find_map(|l| l.strip_prefix(&format!("{name},")))
            .and_then(|rest| rest.split(',').next())
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!((value("g_over_g0") - 0.83).abs() < 0.12);
    assert!((value("stark_shift_MHz") - 0.7).abs() < 1.3);
}

#[test]
fn detect_reports_reference_confidence() {
    let dir = tempfile::tempdir().unwrap();
    let o = bluetrap(&["detect", "--set", "detect.trials=0"], dir.path());
    assert!(o.status.success());
    let line = stdout(&o).lines().find(|l| l.starts_with("p_correct")).unwrap().to_string();
    let p: f64 = line.rsplit(' ').next().unwrap().parse().unwrap();
    assert!((0.94..=0.955).contains(&p), "{p}");
}

#[test]
fn exit_codes_follow_error_classes() {
    let dir = tempfile::tempdir().unwrap();
    let o = bluetrap(&["qed-response", "--set", "qed.kappa=-1 MHz"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("kappa"));

    let o = bluetrap(&["qed-response", "--set", "qed.kapa=1 MHz"], dir.path());
    assert_eq!(o.status.code(), Some(2));

    let o = bluetrap(
        &["detect", "--set", "detect.target=0.9999", "--set", "detect.tau_max=5 us", "--set", "detect.trials=0"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(4));
    assert!(dir.path().join("detect_curve.csv").exists());

    let o = bluetrap(&["potential-map", "--set", "map.plane=xz", "--set", "map.extent=100 um"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn profile_directory_from_environment() {
    let profiles = tempfile::tempdir().unwrap();
    std::fs::write(profiles.path().join("custom.profile"), "[qed]\ng0 = 12 MHz\n").unwrap();
    let out = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_bluetrap"))
        .args(["qed-response", "--profile", "custom", "--dump-config", "--output"])
        .arg(out.path())
        .env("BLUETRAP_PROFILE_DIR", profiles.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(stdout(&o).contains("g0 = 12.0 MHz"));
}

#[test]
fn every_subcommand_writes_a_manifest() {
    let mut c = RunConfig::default();
    c.storage.atoms = 10;
    c.storage.max_time = 1e-3;
    c.storage.probe_photons = vec![8.0];
    c.detect.trials = 1000;
    c.spectrum.samples = 20;
    c.protocol.max_time = 2e-3;
    c.map.points = 5;
    for cmd in Sub::ALL {
        let out = run_subcommand(cmd, &c, &RunInputs::default()).unwrap_or_else(|e| panic!("{}: {e}", cmd.name()));
        let manifest = out.file("manifest.txt").unwrap();
        assert!(manifest.contains(&c.hash()), "{}", cmd.name());
        for f in &out.files {
            if f.name.ends_with(".csv") {
                assert!(f.contents.contains(&format!("config_hash={}", c.hash())), "{}", f.name);
            }
        }
    }
}
