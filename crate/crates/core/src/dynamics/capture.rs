use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use super::{AtomState, Integrator, MotionSettings, Walker, DEFAULT_COOLING_TIME};
use crate::error::{Error, Result};
use crate::potential::TrapConfig;
use crate::qed::QedParams;
use crate::units::RB85_MASS;

/// Alternating cooling and probing intervals, cooling first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalSchedule {
    pub cooling: f64,
    pub probing: f64,
}

impl Default for IntervalSchedule {
    fn default() -> Self {
        Self {
            cooling: 0.5e-3,
            probing: 0.1e-3,
        }
    }
}

impl IntervalSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.cooling > 0.0 && self.probing > 0.0) {
            return Err(Error::InvalidConfig("interval durations must be positive".into()));
        }
        Ok(())
    }

    pub fn period(&self) -> f64 {
        self.cooling + self.probing
    }

    /// Whether time `t` after the schedule start falls in a cooling interval.
    pub fn is_cooling(&self, t: f64) -> bool {
        t >= 0.0 && t.rem_euclid(self.period()) < self.cooling
    }
}

/// Capture protocol: guide the atom in, close the trap on a transmission
/// drop, watch for the transmission to recover.
///
/// Heights are in h·MHz, photon numbers are empty-cavity values on
/// resonance, times in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolSpec {
    /// Trigger is ignored before this time.
    pub arm_time: f64,
    /// Trigger when the transmission estimate drops below this fraction of
    /// the empty cavity.
    pub trigger_fraction: f64,
    /// Declare escape when the estimate recovers above this fraction.
    pub escape_fraction: f64,
    pub probe_photons_before: f64,
    pub probe_photons_after: f64,
    pub axial_height: f64,
    pub guiding_height: f64,
    pub doughnut_height: f64,
    /// Starts when the trap closes; friction acts during cooling intervals.
    pub schedule: IntervalSchedule,
    /// Axial friction β (kg/s).
    pub friction_beta: f64,
    pub bin_width: f64,
    /// Time constant of the exponentially weighted transmission estimate.
    pub estimator_window: f64,
    /// Delay between trigger and trap closure.
    pub switch_delay: f64,
    /// Untriggered atoms moving outward beyond this many waists from the
    /// axis are lost.
    pub exit_radius_waists: f64,
    pub max_time: f64,
    /// Recording continues this long after the escape.
    pub tail: f64,
    pub probe_scattering: bool,
    pub trap_light_scattering: bool,
}

impl Default for ProtocolSpec {
    fn default() -> Self {
        Self {
            arm_time: 0.0,
            trigger_fraction: 0.10,
            escape_fraction: 0.5,
            probe_photons_before: 0.44,
            probe_photons_after: 0.22,
            axial_height: 346.0,
            guiding_height: 20.6,
            doughnut_height: 30.0,
            schedule: IntervalSchedule::default(),
            friction_beta: RB85_MASS / DEFAULT_COOLING_TIME,
            bin_width: 1e-6,
            estimator_window: 100e-6,
            switch_delay: 1e-6,
            exit_radius_waists: 3.0,
            max_time: 50e-3,
            tail: 0.2e-3,
            probe_scattering: true,
            trap_light_scattering: true,
        }
    }
}

impl ProtocolSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(0.0 < self.trigger_fraction && self.trigger_fraction < self.escape_fraction && self.escape_fraction <= 1.0) {
            return bad("need 0 < trigger_fraction < escape_fraction <= 1");
        }
        if !(self.arm_time >= 0.0) {
            return bad("arm_time must be non-negative");
        }
        if !(self.probe_photons_before > 0.0 && self.probe_photons_after > 0.0) {
            return bad("probe photon numbers must be positive");
        }
        if !(self.axial_height > 0.0 && self.guiding_height > 0.0 && self.doughnut_height > 0.0) {
            return bad("trap heights must be positive");
        }
        self.schedule.validate()?;
        if !(self.friction_beta >= 0.0) {
            return bad("friction must be non-negative");
        }
        if !(self.bin_width > 0.0 && self.estimator_window >= self.bin_width) {
            return bad("need 0 < bin_width <= estimator_window");
        }
        if !(self.switch_delay > 0.0 && self.exit_radius_waists > 0.0 && self.max_time > 0.0 && self.tail >= 0.0) {
            return bad("switch_delay, exit_radius_waists and max_time must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Armed,
    Triggered,
    TrapClosed,
    Escaped,
    Lost,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Armed => "armed",
            EventKind::Triggered => "triggered",
            EventKind::TrapClosed => "trap_closed",
            EventKind::Escaped => "escaped",
            EventKind::Lost => "lost",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEvent {
    pub time: f64,
    pub kind: EventKind,
}

/// One counting bin; `time` is the end of the bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub time: f64,
    /// Bin-averaged relative transmission.
    pub transmission_expected: f64,
    pub detected_counts: u64,
    /// Expected counts of the empty cavity at the current probe power.
    pub bare_counts: f64,
    /// Running transmission estimate used by the trigger.
    pub estimate: f64,
    pub position: [f64; 3],
}

/// Sampled transmission record with the protocol events, in time order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventTrace {
    pub bin_width: f64,
    pub samples: Vec<TraceSample>,
    pub events: Vec<TraceEvent>,
    /// Total spontaneous scattering events.
    pub scatter_events: u64,
}

pub const SAMPLES_HEADER: &str = "t_s,transmission_expected,detected_counts,bare_counts,estimate,x_m,y_m,z_m";
pub const EVENTS_HEADER: &str = "t_s,event";

impl EventTrace {
    pub fn event_time(&self, kind: EventKind) -> Option<f64> {
        self.events.iter().find(|e| e.kind == kind).map(|e| e.time)
    }

    pub fn has(&self, kind: EventKind) -> bool {
        self.event_time(kind).is_some()
    }

    /// `armed ≤ triggered < trap_closed ≤ escaped|lost`, events sorted.
    pub fn is_well_ordered(&self) -> bool {
        if self.events.windows(2).any(|w| w[1].time < w[0].time) {
            return false;
        }
        let t = |k| self.event_time(k);
        match (t(EventKind::Triggered), t(EventKind::TrapClosed)) {
            (Some(a), Some(b)) if !(a < b) => return false,
            (None, Some(_)) => return false,
            _ => {}
        }
        if let (Some(armed), Some(trig)) = (t(EventKind::Armed), t(EventKind::Triggered)) {
            if trig < armed {
                return false;
            }
        }
        for end in [EventKind::Escaped, EventKind::Lost] {
            if let (Some(c), Some(e)) = (t(EventKind::TrapClosed), t(end)) {
                if e < c {
                    return false;
                }
            }
        }
        true
    }

    pub fn samples_csv(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            let _ = writeln!(out, "# {c}");
        }
        let _ = writeln!(out, "{SAMPLES_HEADER}");
        for s in &self.samples {
            let _ = writeln!(
                out,
                "{:.9},{},{},{},{},{},{},{}",
                s.time,
                s.transmission_expected,
                s.detected_counts,
                s.bare_counts,
                s.estimate,
                s.position[0],
                s.position[1],
                s.position[2]
            );
        }
        out
    }

    pub fn events_csv(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            let _ = writeln!(out, "# {c}");
        }
        let _ = writeln!(out, "{EVENTS_HEADER}");
        for e in &self.events {
            let _ = writeln!(out, "{:.9},{}", e.time, e.kind.name());
        }
        out
    }

    /// Transmission estimate versus time as a standalone SVG polyline with
    /// event markers.
    pub fn to_svg(&self, width: f64, height: f64) -> String {
        let t_end = self.samples.last().map_or(1.0, |s| s.time).max(f64::MIN_POSITIVE);
        let y_max = self
            .samples
            .iter()
            .map(|s| s.estimate.max(s.transmission_expected))
            .fold(1.0, f64::max)
            * 1.05;
        let (mx, my) = (50.0, 20.0);
        let (pw, ph) = (width - 2.0 * mx, height - 2.0 * my);
        let px = |t: f64| mx + pw * t / t_end;
        let py = |v: f64| my + ph * (1.0 - v / y_max);
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
        );
        let _ = writeln!(
            svg,
            r#"<rect x="{mx}" y="{my}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for (series, colour) in [(0, "steelblue"), (1, "black")] {
            let points: Vec<String> = self
                .samples
                .iter()
                .map(|s| {
                    let v = if series == 0 { s.transmission_expected } else { s.estimate };
                    format!("{:.2},{:.2}", px(s.time), py(v))
                })
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{colour}" stroke-width="1" points="{}"/>"#,
                points.join(" ")
            );
        }
        for e in &self.events {
            let x = px(e.time);
            let _ = writeln!(
                svg,
                r#"<line x1="{x:.2}" y1="{my}" x2="{x:.2}" y2="{}" stroke="crimson" stroke-dasharray="4 3"/><text x="{:.2}" y="{}" font-size="10">{}</text>"#,
                my + ph,
                x + 2.0,
                my + 10.0,
                e.kind.name()
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{mx}" y="{}" font-size="11">time (ms), 0 to {:.3}</text>"#,
            height - 4.0,
            t_end * 1e3
        );
        svg.push_str("</svg>\n");
        svg
    }
}

fn with_modes(base: &TrapConfig, shape: TrapConfig) -> TrapConfig {
    TrapConfig {
        modes: shape.modes,
        ..base.clone()
    }
}

/// Runs the capture protocol for one atom.
///
/// The atom starts in the funnel (axial pancakes plus the TEM10 guide).
/// Counts are drawn per bin from the bin-averaged transmission. When the
/// estimate drops below `trigger_fraction` after `arm_time`, the probe is
/// reduced and, `switch_delay` later, the doughnut replaces the guide.
pub fn run_capture(
    initial: &AtomState,
    protocol: &ProtocolSpec,
    config: &TrapConfig,
    params: &QedParams,
    seed: u64,
) -> Result<EventTrace> {
    protocol.validate()?;
    config.validate()?;
    if !initial.is_finite() {
        return Err(Error::InvalidParams("initial state is not finite".into()));
    }
    config.geometry.check_inside(initial.position.z)?;
    let geometry = config.geometry;
    let funnel = with_modes(
        config,
        TrapConfig::funnel(geometry, protocol.axial_height, protocol.guiding_height)?,
    );
    let doughnut = with_modes(
        config,
        TrapConfig::doughnut(geometry, protocol.axial_height, protocol.doughnut_height)?,
    );
    let settings = MotionSettings {
        friction_beta: protocol.friction_beta,
        probe_scattering: protocol.probe_scattering,
        trap_light_scattering: protocol.trap_light_scattering,
        pinned: false,
    };
    let mut integrator = Integrator::new(&funnel, params, protocol.probe_photons_before, settings)?;
    let mut walker = Walker::new(*initial, seed, 0);
    let mut counting_rng = ChaCha8Rng::seed_from_u64(seed);
    counting_rng.set_stream(1);

    let t0 = initial.time;
    let bin = protocol.bin_width;
    let alpha = bin / protocol.estimator_window;
    let mut trace = EventTrace {
        bin_width: bin,
        ..EventTrace::default()
    };
    let mut estimate = 1.0;
    let mut armed = false;
    let mut triggered_at: Option<f64> = None;
    let mut closed_at: Option<f64> = None;
    let mut stop_at: Option<f64> = None;
    let half_length = geometry.half_length();
    let exit_radius = protocol.exit_radius_waists * geometry.waist;

    loop {
        let t = walker.state.time;
        if !armed && t - t0 >= protocol.arm_time {
            armed = true;
            trace.events.push(TraceEvent {
                time: t,
                kind: EventKind::Armed,
            });
        }
        let mut dt = integrator.default_dt();
        let steps = (bin / dt).ceil().max(1.0);
        dt = bin / steps;
        let cooling = closed_at.is_some_and(|c| protocol.schedule.is_cooling(t - c));
        let mut transmission = 0.0;
        for _ in 0..steps as usize {
            transmission += integrator.step(&mut walker, dt, cooling).transmission;
        }
        transmission /= steps;
        let t = walker.state.time;
        let bare = params.detected_rate(integrator.probe_photons()) * bin;
        let mean = transmission * bare;
        let counts = if mean > 0.0 {
            Poisson::new(mean)
                .map(|d| d.sample(&mut counting_rng) as u64)
                .unwrap_or(0)
        } else {
            0
        };
        estimate += (counts as f64 / bare - estimate) * alpha;
        let r = walker.state.position;
        trace.samples.push(TraceSample {
            time: t,
            transmission_expected: transmission,
            detected_counts: counts,
            bare_counts: bare,
            estimate,
            position: [r.x, r.y, r.z],
        });

        if let Some(end) = stop_at {
            if t >= end {
                break;
            }
            continue;
        }
        match (triggered_at, closed_at) {
            (None, _) => {
                if armed && estimate < protocol.trigger_fraction {
                    triggered_at = Some(t);
                    trace.events.push(TraceEvent {
                        time: t,
                        kind: EventKind::Triggered,
                    });
                    integrator.set_probe_photons(protocol.probe_photons_after);
                    // keep the estimate in units of the reduced empty cavity
                    continue;
                }
                let rho_sq = r.x * r.x + r.y * r.y;
                let outward = r.x * walker.state.velocity.x + r.y * walker.state.velocity.y > 0.0;
                let exited = (rho_sq > exit_radius.powi(2) && outward) || r.z.abs() > half_length;
                if exited || t - t0 >= protocol.max_time {
                    trace.events.push(TraceEvent {
                        time: t,
                        kind: EventKind::Lost,
                    });
                    break;
                }
            }
            (Some(trig), None) => {
                if t >= trig + protocol.switch_delay {
                    integrator.set_trap(&doughnut)?;
                    closed_at = Some(t);
                    trace.events.push(TraceEvent {
                        time: t,
                        kind: EventKind::TrapClosed,
                    });
                }
            }
            (Some(_), Some(_)) => {
                if estimate > protocol.escape_fraction {
                    trace.events.push(TraceEvent {
                        time: t,
                        kind: EventKind::Escaped,
                    });
                    stop_at = Some(t + protocol.tail);
                    if protocol.tail == 0.0 {
                        break;
                    }
                    continue;
                }
                if t - t0 >= protocol.max_time {
                    break;
                }
            }
        }
        if r.z.abs() > half_length || !walker.state.is_finite() {
            break;
        }
    }
    trace.scatter_events = walker.scatter_events;
    Ok(trace)
}

/// One probing interval and the verdict of its neighbouring cooling intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeInterval {
    pub start: f64,
    pub end: f64,
    pub qualified: bool,
    /// Measured relative transmission of the cooling intervals before and after.
    pub cooling_transmission: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Qualification {
    pub intervals: Vec<ProbeInterval>,
    /// The schedule ran past the end of the trace; later intervals are missing.
    pub truncated: bool,
}

impl Qualification {
    pub fn qualified_count(&self) -> usize {
        self.intervals.iter().filter(|i| i.qualified).count()
    }
}

/// Marks each probing interval qualified iff the measured transmission
/// (counts over expected empty-cavity counts) of both adjacent cooling
/// intervals is below `threshold_fraction`. The schedule starts at `start`.
pub fn qualify_intervals(
    trace: &EventTrace,
    schedule: &IntervalSchedule,
    start: f64,
    threshold_fraction: f64,
) -> Result<Qualification> {
    schedule.validate()?;
    if !(threshold_fraction > 0.0) {
        return Err(Error::InvalidConfig("threshold fraction must be positive".into()));
    }
    let Some(last) = trace.samples.last() else {
        return Ok(Qualification {
            intervals: Vec::new(),
            truncated: true,
        });
    };
    let end = last.time;
    let measured = |a: f64, b: f64| {
        let (mut counts, mut bare) = (0.0, 0.0);
        for s in &trace.samples {
            let centre = s.time - 0.5 * trace.bin_width;
            if centre >= a && centre < b {
                counts += s.detected_counts as f64;
                bare += s.bare_counts;
            }
        }
        if bare > 0.0 {
            counts / bare
        } else {
            f64::NAN
        }
    };
    let period = schedule.period();
    let mut out = Qualification::default();
    let mut k = 0u64;
    loop {
        let cool_a = start + k as f64 * period;
        let probe_start = cool_a + schedule.cooling;
        let probe_end = probe_start + schedule.probing;
        let cool_b_end = probe_end + schedule.cooling;
        if cool_b_end > end + 1e-12 {
            out.truncated = probe_end < end || cool_a < end;
            break;
        }
        let before = measured(cool_a, probe_start);
        let after = measured(probe_end, cool_b_end);
        out.intervals.push(ProbeInterval {
            start: probe_start,
            end: probe_end,
            qualified: before < threshold_fraction && after < threshold_fraction,
            cooling_transmission: (before, after),
        });
        k += 1;
    }
    Ok(out)
}
