//! Subcommand pipelines behind the `bluetrap` binary.
//!
//! Each pipeline returns its report and output files as text so the binary
//! only touches the filesystem. Outputs carry no timestamps: the same
//! configuration and seed give byte-identical files.

use std::fmt::Write as _;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::config::{emit_config, RunConfig};
use crate::detect::{confidence, confidence_vs_time, scattered_photon_budget, simulate_detection};
use crate::dynamics::{run_capture, storage_time_ensemble};
use crate::error::{Error, Result};
use crate::modes::Position;
use crate::potential::{stark_shift, trap_metrics};
use crate::qed::{master_equation_steady_state, steady_state_response};
use crate::spectrum::{
    fit_normal_modes, normal_mode_frequencies, synthesize_spectrum, FitOptions, SpectrumData,
};
use crate::units::{angular_to_mhz, joules_to_h_mhz, mhz_to_angular, photons_to_picowatts};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    PotentialMap,
    QedResponse,
    Spectrum,
    Fit,
    Detect,
    Trace,
    Storage,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::PotentialMap,
        Command::QedResponse,
        Command::Spectrum,
        Command::Fit,
        Command::Detect,
        Command::Trace,
        Command::Storage,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::PotentialMap => "potential-map",
            Command::QedResponse => "qed-response",
            Command::Spectrum => "spectrum",
            Command::Fit => "fit",
            Command::Detect => "detect",
            Command::Trace => "trace",
            Command::Storage => "storage",
        }
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown subcommand '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFile {
    pub name: String,
    pub contents: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutput {
    /// Human-readable report.
    pub report: String,
    /// Data files, then `run.profile` and `manifest.txt`.
    pub files: Vec<OutputFile>,
    /// Process exit status: 0, or 4 when a requested target is out of reach.
    pub status: i32,
}

impl RunOutput {
    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|f| f.name == name).map(|f| f.contents.as_str())
    }
}

/// Extra inputs a subcommand may take besides the configuration.
#[derive(Debug, Clone, Default)]
pub struct RunInputs {
    /// Spectrum CSV for `fit`; synthesized from the configuration if absent.
    pub spectrum_csv: Option<String>,
}

struct Context<'a> {
    command: Command,
    config: &'a RunConfig,
    hash: String,
    report: String,
    files: Vec<OutputFile>,
    status: i32,
}

impl Context<'_> {
    fn header(&self) -> Vec<String> {
        vec![
            format!("bluetrap {} {}", self.command.name(), env!("CARGO_PKG_VERSION")),
            format!("config_hash={}", self.hash),
            format!("seed={}", self.config.run.seed),
        ]
    }

    /// CSV with the provenance header, a schema line and the rows.
    fn csv(&mut self, name: &str, schema: &str, rows: impl IntoIterator<Item = String>) {
        let mut text = String::new();
        for c in self.header() {
            let _ = writeln!(text, "# {c}");
        }
        let _ = writeln!(text, "{schema}");
        for row in rows {
            let _ = writeln!(text, "{row}");
        }
        self.add(name, text);
    }

    fn add(&mut self, name: &str, contents: String) {
        self.files.push(OutputFile { name: name.into(), contents });
    }

    fn say(&mut self, line: impl AsRef<str>) {
        self.report.push_str(line.as_ref());
        self.report.push('\n');
    }
}

/// Runs one subcommand on a validated configuration.
pub fn run_subcommand(command: Command, config: &RunConfig, inputs: &RunInputs) -> Result<RunOutput> {
    config.validate()?;
    let mut cx = Context {
        command,
        config,
        hash: config.hash(),
        report: String::new(),
        files: Vec::new(),
        status: 0,
    };
    match command {
        Command::PotentialMap => potential_map(&mut cx)?,
        Command::QedResponse => qed_response(&mut cx)?,
        Command::Spectrum => spectrum(&mut cx)?,
        Command::Fit => fit(&mut cx, inputs)?,
        Command::Detect => detect(&mut cx)?,
        Command::Trace => trace(&mut cx)?,
        Command::Storage => storage(&mut cx)?,
    }

    let mut manifest = String::new();
    let _ = writeln!(manifest, "command = {}", command.name());
    let _ = writeln!(manifest, "version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(manifest, "config_hash = {}", cx.hash);
    let _ = writeln!(manifest, "seed = {}", config.run.seed);
    let _ = writeln!(manifest, "profile = run.profile");
    let _ = writeln!(manifest, "rerun = bluetrap {} --config run.profile", command.name());
    for f in &cx.files {
        let _ = writeln!(manifest, "output = {} sha256={}", f.name, hex::encode(Sha256::digest(f.contents.as_bytes())));
    }
    let profile = format!("# config_hash={}\n{}", cx.hash, emit_config(config));
    cx.add("run.profile", profile);
    cx.add("manifest.txt", manifest);
    Ok(RunOutput {
        report: cx.report,
        files: cx.files,
        status: cx.status,
    })
}

fn potential_map(cx: &mut Context) -> Result<()> {
    let trap = cx.config.trap_config()?;
    let field = trap.field()?;
    let map = &cx.config.map;
    let n = map.points as usize;
    let coords: Vec<f64> = (0..n)
        .map(|i| -map.extent + 2.0 * map.extent * i as f64 / (n - 1) as f64)
        .collect();
    let place = |a: f64, b: f64| match map.plane.as_str() {
        "xz" => Position::new(a, 0.0, b),
        "yz" => Position::new(0.0, a, b),
        _ => Position::new(a, b, 0.0),
    };
    let mut rows = Vec::with_capacity(n * n);
    for &a in &coords {
        for &b in &coords {
            let r = place(a, b);
            trap.geometry.check_inside(r.z)?;
            let energy = joules_to_h_mhz(field.energy(&r));
            let shift = stark_shift(&trap, &r)?;
            rows.push(format!("{a},{b},{energy},{shift}"));
        }
    }
    let (ax, bx) = (&map.plane[..1], &map.plane[1..]);
    let schema = format!("{ax}_m,{bx}_m,energy_h_MHz,stark_shift_MHz");
    cx.csv("potential_map.csv", &schema, rows);

    let m = trap_metrics(&trap)?;
    let f = m.frequencies_hz();
    cx.say(format!("trap: {} ({} modes)", cx.config.trap.kind, trap.modes.len()));
    cx.say(format!("axial barrier      {:.3} h*MHz", m.axial_barrier));
    cx.say(format!("radial barrier     {:.3} h*MHz", m.radial_barrier));
    cx.say(format!("guiding barrier    {:.3} h*MHz", m.guiding_barrier));
    cx.say(format!("trap frequencies   {:.1} Hz, {:.1} Hz, {:.1} Hz", f[0], f[1], f[2]));
    cx.say(format!("center Stark shift {:.4} MHz", m.center_stark_shift));
    Ok(())
}

fn qed_response(cx: &mut Context) -> Result<()> {
    let params = cx.config.qed_params()?;
    let g = cx.config.g_eff();
    let grid = cx.config.synthesis_settings()?.grid_mhz;
    let mut rows = Vec::with_capacity(grid.len());
    for &d in &grid {
        let p = params.with_delta_c(mhz_to_angular(d));
        let r = steady_state_response(&p, g)?;
        rows.push(format!(
            "{d},{},{},{},{},{},{}",
            r.relative_transmission(),
            r.photon_number,
            r.atomic_excitation,
            r.scatter_rate,
            p.detected_rate(r.photon_number),
            photons_to_picowatts(r.photon_number),
        ));
    }
    cx.csv(
        "qed_response.csv",
        "delta_c_MHz,relative_transmission,photons,excitation,scatter_rate_Hz,detected_rate_Hz,power_pW",
        rows,
    );

    let photons = cx.config.detect.atom_photons;
    let tau = cx.config.detect.tau;
    let driven = params.normalized_to_photons(g, photons)?;
    let r = steady_state_response(&driven, g)?;
    let me = master_equation_steady_state(&driven, g, cx.config.qed.fock_truncation as usize)?;
    let (lower, upper) = normal_mode_frequencies(angular_to_mhz(g), angular_to_mhz(params.delta_ac));
    cx.say(format!(
        "coupling g/2pi = {:.3} MHz ({} g0)",
        angular_to_mhz(g),
        cx.config.qed.coupling_ratio
    ));
    cx.say(format!("normal modes       {lower:.2} MHz, {upper:.2} MHz"));
    cx.say(format!(
        "at {photons} photons ({:.4} pW): excitation {:.4e}, scatter rate {:.1} kHz",
        photons_to_picowatts(photons),
        r.atomic_excitation,
        r.scatter_rate / 1e3
    ));
    cx.say(format!(
        "photons scattered in {:.1} us: {:.3}",
        tau * 1e6,
        scattered_photon_budget(&r, tau)
    ));
    cx.say(format!(
        "master equation:   photons {:.5}, excitation {:.4e}, transmission {:.5}",
        me.response.photon_number,
        me.response.atomic_excitation,
        me.response.relative_transmission()
    ));
    cx.say(format!(
        "weak excitation:   photons {:.5}, excitation {:.4e}, transmission {:.5}",
        r.photon_number,
        r.atomic_excitation,
        r.relative_transmission()
    ));
    if r.saturation_warning {
        cx.say("warning: drive outside the weak-excitation regime");
    }
    Ok(())
}

fn synthesized(cx: &Context) -> Result<SpectrumData> {
    let params = cx.config.qed_params()?;
    let settings = cx.config.synthesis_settings()?;
    synthesize_spectrum(
        &params,
        cx.config.g_eff(),
        mhz_to_angular(cx.config.spectrum.stark_shift),
        &settings,
    )
}

fn spectrum(cx: &mut Context) -> Result<()> {
    let data = synthesized(cx)?;
    let csv = data.to_csv(&cx.header());
    cx.add("spectrum.csv", csv);
    let params = cx.config.qed_params()?;
    let (lower, upper) = normal_mode_frequencies(
        angular_to_mhz(cx.config.g_eff()),
        angular_to_mhz(params.delta_ac) + cx.config.spectrum.stark_shift,
    );
    let atom_like = data
        .points
        .iter()
        .filter(|p| p.delta_c_mhz < 0.5 * (lower + upper))
        .max_by(|a, b| a.transmission.total_cmp(&b.transmission));
    cx.say(format!("{} points, normal modes at {lower:.2} and {upper:.2} MHz", data.points.len()));
    if let Some(p) = atom_like {
        cx.say(format!(
            "atom-like peak at {:.1} MHz, transmission {:.4}",
            p.delta_c_mhz, p.transmission
        ));
    }
    Ok(())
}

fn fit(cx: &mut Context, inputs: &RunInputs) -> Result<()> {
    let data = match &inputs.spectrum_csv {
        Some(text) => SpectrumData::from_csv(text)?,
        None => synthesized(cx)?,
    };
    let params = cx.config.qed_params()?;
    let result = fit_normal_modes(&data, &params, None, &FitOptions::default())?;
    let g0 = params.g0;
    let rows = vec![
        format!("g_over_g0,{},{}", result.g_eff / g0, result.g_uncertainty() / g0),
        format!("g_eff_MHz,{},{}", angular_to_mhz(result.g_eff), angular_to_mhz(result.g_uncertainty())),
        format!(
            "stark_shift_MHz,{},{}",
            angular_to_mhz(result.stark_shift),
            angular_to_mhz(result.stark_uncertainty())
        ),
        format!("amplitude_scale,{},{}", result.amplitude_scale, result.covariance[(2, 2)].sqrt()),
        format!("chi_squared,{},", result.chi_squared),
        format!("degrees_of_freedom,{},", result.degrees_of_freedom),
        format!("converged,{},", result.converged),
        format!("degenerate,{},", result.degenerate),
    ];
    cx.csv("fit.csv", "parameter,value,uncertainty", rows);
    let curve = data
        .points
        .iter()
        .map(|p| {
            let model = crate::spectrum::model_transmission(
                mhz_to_angular(p.delta_c_mhz),
                result.g_eff,
                result.stark_shift,
                &params,
            )
            .map(|t| t * result.amplitude_scale)
            .unwrap_or(f64::NAN);
            format!("{},{},{},{}", p.delta_c_mhz, p.transmission, p.uncertainty, model)
        })
        .collect::<Vec<_>>();
    cx.csv("fit_curve.csv", "delta_c_MHz,transmission,uncertainty,model", curve);
    cx.say(format!(
        "g/g0 = {:.3}({:.0})",
        result.g_eff / g0,
        1e3 * result.g_uncertainty() / g0
    ));
    cx.say(format!(
        "Stark shift = {:.2} +- {:.2} MHz",
        angular_to_mhz(result.stark_shift),
        angular_to_mhz(result.stark_uncertainty())
    ));
    cx.say(format!(
        "reduced chi2 = {:.3} ({} dof)",
        result.reduced_chi_squared(),
        result.degrees_of_freedom
    ));
    if result.degenerate {
        cx.say("warning: the data constrain at most one normal mode");
    }
    if !result.converged {
        cx.say("warning: fit stopped at the evaluation budget");
    }
    Ok(())
}

fn detect(cx: &mut Context) -> Result<()> {
    let setup = cx.config.detection_setup()?;
    let report = confidence(&setup)?;
    let rule = crate::detect::bayes_rule(&setup)?;
    let tau_grid = cx.config.tau_grid();
    let target = cx.config.detect.target;
    let curve = confidence_vs_time(&setup, &tau_grid, target)?;
    let rows = curve.points.iter().map(|(t, p)| format!("{t},{p}")).collect::<Vec<_>>();
    cx.csv("detect_curve.csv", "tau_s,p_correct", rows);

    let trials = cx.config.detect.trials;
    let mc = (trials > 0)
        .then(|| simulate_detection(&setup, trials, cx.config.run.seed))
        .transpose()?;
    let mut summary = vec![
        format!("mean_counts_empty,{}", setup.mean_empty()),
        format!("mean_counts_atom,{}", setup.mean_atom()),
        format!("p_correct,{}", report.p_correct),
        format!("p_false_atom,{}", report.p_false_atom),
        format!("p_missed_atom,{}", report.p_missed_atom),
        format!("expected_scattered_photons,{}", report.expected_scattered_photons),
    ];
    if let Some(m) = &mc {
        summary.push(format!("monte_carlo_p_correct,{}", m.p_correct()));
        summary.push(format!("monte_carlo_standard_error,{}", m.standard_error()));
    }
    if let Some(t) = curve.tau_star {
        summary.push(format!("tau_star_s,{t}"));
    }
    cx.csv("detect.csv", "quantity,value", summary);

    cx.say(format!(
        "mean counts in {:.1} us: empty {:.3}, atom {:.3}",
        setup.tau * 1e6,
        setup.mean_empty(),
        setup.mean_atom()
    ));
    cx.say(format!("decision rule: {rule:?}"));
    cx.say(format!("p_correct = {:.4}", report.p_correct));
    cx.say(format!("scattered photons = {:.3}", report.expected_scattered_photons));
    if let Some(m) = &mc {
        cx.say(format!(
            "Monte Carlo ({} trials): {:.4} +- {:.4}",
            m.trials(),
            m.p_correct(),
            m.standard_error()
        ));
    }
    match curve.tau_star {
        Some(t) => cx.say(format!("target {target} reached at tau = {:.1} us", t * 1e6)),
        None => {
            let err = Error::Unreachable { target };
            cx.say(format!("error: {err} within {:.1} us", cx.config.detect.tau_max * 1e6));
            cx.status = err.exit_code();
        }
    }
    Ok(())
}

fn trace(cx: &mut Context) -> Result<()> {
    let trap = cx.config.trap_config()?;
    let params = cx.config.qed_params()?;
    let trace = run_capture(
        &cx.config.initial_state(),
        &cx.config.protocol,
        &trap,
        &params,
        cx.config.run.seed,
    )?;
    let header = cx.header();
    cx.add("trace_samples.csv", trace.samples_csv(&header));
    cx.add("trace_events.csv", trace.events_csv(&header));
    cx.add("trace.svg", trace.to_svg(800.0, 300.0));
    for e in &trace.events {
        cx.say(format!("{:>10.3} ms  {}", e.time * 1e3, e.kind.name()));
    }
    cx.say(format!("{} scattering events", trace.scatter_events));
    Ok(())
}

fn storage(cx: &mut Context) -> Result<()> {
    let trap = cx.config.trap_config()?;
    let params = cx.config.qed_params()?;
    let st = &cx.config.storage;
    let mut rows = Vec::new();
    let mut per_atom = Vec::new();
    for &n in &st.probe_photons {
        let settings = cx.config.storage_settings(n)?;
        let s = storage_time_ensemble(&trap, &settings, &params, st.atoms as usize, cx.config.run.seed)?;
        rows.push(format!(
            "{n},{},{},{},{},{}",
            photons_to_picowatts(n),
            s.median,
            s.mean,
            s.censored,
            s.times.len()
        ));
        for (i, (t, c)) in s.times.iter().zip(&s.censored_flags).enumerate() {
            per_atom.push(format!("{n},{i},{t},{c}"));
        }
        cx.say(format!(
            "probe {n} photons ({:.3} pW): median {:.3} ms, mean {:.3} ms, censored {}/{}",
            photons_to_picowatts(n),
            s.median * 1e3,
            s.mean * 1e3,
            s.censored,
            s.times.len()
        ));
    }
    cx.csv(
        "storage.csv",
        "probe_photons,probe_power_pW,median_s,mean_s,censored,atoms",
        rows,
    );
    cx.csv("storage_times.csv", "probe_photons,atom,time_s,censored", per_atom);
    Ok(())
}

/// Environment variable naming a directory searched for `<name>.profile`
/// before the shipped profiles.
pub const PROFILE_DIR_ENV: &str = "BLUETRAP_PROFILE_DIR";

/// Profile used when none is named on the command line.
pub fn default_profile(command: Command) -> &'static str {
    match command {
        Command::Spectrum | Command::Fit => "spectrum",
        Command::Detect => "detect",
        Command::Trace => "capture",
        Command::Storage => "storage",
        Command::PotentialMap | Command::QedResponse => "reference",
    }
}

/// Text of profile `name`: a file path, `<dir>/<name>.profile`, or a
/// shipped profile, in that order.
pub fn resolve_profile(name: &str, profile_dir: Option<&std::path::Path>) -> Result<String> {
    let path = std::path::Path::new(name);
    if name.ends_with(".profile") && path.is_file() {
        return Ok(std::fs::read_to_string(path)?);
    }
    if let Some(dir) = profile_dir {
        let candidate = dir.join(format!("{name}.profile"));
        if candidate.is_file() {
            return Ok(std::fs::read_to_string(candidate)?);
        }
    }
    crate::config::shipped_profile(name)
        .map(str::to_string)
        .ok_or_else(|| Error::InvalidConfig(format!("no profile named '{name}'")))
}

/// Layers a run configuration: the reference defaults, the profile, an optional
/// config file, then `section.key=value` overrides.
pub fn layered_config(profile: &str, config_text: Option<&str>, overrides: &[String]) -> Result<RunConfig> {
    let mut config = RunConfig::default();
    crate::config::apply_config(&mut config, profile)?;
    if let Some(text) = config_text {
        crate::config::apply_config(&mut config, text)?;
    }
    for o in overrides {
        let (key, value) = o
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("override '{o}' is not section.key=value")))?;
        let (section, key) = key
            .trim()
            .split_once('.')
            .ok_or_else(|| Error::InvalidConfig(format!("override '{o}' is not section.key=value")))?;
        config.set(section, key, value.trim())?;
    }
    config.validate()?;
    Ok(config)
}
