//! Deciding "atom present" versus "cavity empty" from photon counts.
//!
//! Counts in an interval `τ` are Poisson with mean
//! `λ = (rate + dark_rate) · τ` under either hypothesis. The Bayes-optimal
//! rule compares posteriors and reduces to a count threshold; ties go to
//! "atom present".

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::qed::{QedParams, QedResponse};

/// Photon numbers and rates defining one detection experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionSetup {
    /// Detected count rate with the cavity empty (1/s).
    pub rate_empty: f64,
    /// Detected count rate with an atom present (1/s).
    pub rate_atom: f64,
    /// Background count rate under both hypotheses (1/s).
    pub dark_rate: f64,
    /// Prior probability that an atom is present.
    pub prior_atom: f64,
    /// Counting interval (s).
    pub tau: f64,
    /// Spontaneous scattering rate of a present atom (1/s), for the photon budget.
    pub atom_scatter_rate: f64,
}

impl DetectionSetup {
    /// Builds the rates from intracavity photon numbers: photons leave at
    /// `2κ` and a fraction `detection_efficiency` is counted.
    pub fn from_photon_numbers(
        params: &QedParams,
        photons_empty: f64,
        photons_atom: f64,
        prior_atom: f64,
        tau: f64,
    ) -> Self {
        Self {
            rate_empty: params.detected_rate(photons_empty),
            rate_atom: params.detected_rate(photons_atom),
            dark_rate: 0.0,
            prior_atom,
            tau,
            atom_scatter_rate: 0.0,
        }
    }

    /// Operating point of the dispersive measurement: 0.022 photons with the
    /// atom, twenty times that without, 5 % efficiency, 10 µs, even prior.
    pub fn reference() -> Self {
        let params = QedParams::reference();
        let g = 0.83 * params.g0;
        let photons_atom = 0.022;
        let mut setup = Self::from_photon_numbers(&params, 20.0 * photons_atom, photons_atom, 0.5, 10e-6);
        if let Ok(p) = params.normalized_to_photons(g, photons_atom) {
            if let Ok(r) = crate::qed::steady_state_response(&p, g) {
                setup.atom_scatter_rate = r.scatter_rate;
            }
        }
        setup
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_dark_rate(mut self, dark_rate: f64) -> Self {
        self.dark_rate = dark_rate;
        self
    }

    pub fn with_prior(mut self, prior_atom: f64) -> Self {
        self.prior_atom = prior_atom;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rate_empty", self.rate_empty),
            ("rate_atom", self.rate_atom),
            ("dark_rate", self.dark_rate),
            ("atom_scatter_rate", self.atom_scatter_rate),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParams(format!("{name} must be non-negative")));
            }
        }
        if !(self.prior_atom > 0.0 && self.prior_atom < 1.0) {
            return Err(Error::InvalidParams("prior must lie in (0, 1)".into()));
        }
        if !(self.tau >= 0.0) || !self.tau.is_finite() {
            return Err(Error::InvalidParams("interval must be non-negative".into()));
        }
        Ok(())
    }

    /// Mean counts with the cavity empty.
    pub fn mean_empty(&self) -> f64 {
        (self.rate_empty + self.dark_rate) * self.tau
    }

    /// Mean counts with an atom present.
    pub fn mean_atom(&self) -> f64 {
        (self.rate_atom + self.dark_rate) * self.tau
    }

    /// Swaps the roles of the two hypotheses and the prior.
    pub fn swapped(&self) -> Self {
        Self {
            rate_empty: self.rate_atom,
            rate_atom: self.rate_empty,
            prior_atom: 1.0 - self.prior_atom,
            ..*self
        }
    }
}

/// Which hypothesis a rule picks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Hypothesis {
    Empty,
    Atom,
}

/// Count-threshold decision rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionRule {
    /// Atom iff `n <= threshold` (the atom darkens the cavity).
    AtomIfAtMost(u64),
    /// Atom iff `n >= threshold` (the atom brightens the cavity).
    AtomIfAtLeast(u64),
    /// The prior outweighs any count; the data are ignored.
    Always(Hypothesis),
}

impl DecisionRule {
    pub fn decide(&self, counts: u64) -> Hypothesis {
        let atom = match *self {
            DecisionRule::AtomIfAtMost(t) => counts <= t,
            DecisionRule::AtomIfAtLeast(t) => counts >= t,
            DecisionRule::Always(h) => return h,
        };
        if atom {
            Hypothesis::Atom
        } else {
            Hypothesis::Empty
        }
    }

    /// `n*` of the rule, if it has one.
    pub fn threshold(&self) -> Option<u64> {
        match *self {
            DecisionRule::AtomIfAtMost(t) | DecisionRule::AtomIfAtLeast(t) => Some(t),
            DecisionRule::Always(_) => None,
        }
    }

    /// True when the prior alone decides.
    pub fn is_degenerate(&self) -> bool {
        matches!(self, DecisionRule::Always(_))
    }
}

/// Log posterior odds `ln[P(atom|n) / P(empty|n)]`.
fn log_odds(setup: &DetectionSetup, n: u64) -> f64 {
    let (la, le) = (setup.mean_atom(), setup.mean_empty());
    let n = n as f64;
    let term = |lambda: f64| {
        if lambda == 0.0 {
            if n == 0.0 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        } else {
            n * lambda.ln()
        }
    };
    (setup.prior_atom / (1.0 - setup.prior_atom)).ln() - la + le + term(la) - term(le)
}

/// Bayes-optimal threshold rule for `setup`.
pub fn bayes_rule(setup: &DetectionSetup) -> Result<DecisionRule> {
    setup.validate()?;
    let (la, le) = (setup.mean_atom(), setup.mean_empty());
    if la == le {
        return Err(Error::NoInformation { mean: la });
    }
    let atom_darker = la < le;
    let prior_term = (setup.prior_atom / (1.0 - setup.prior_atom)).ln();
    // log-odds is linear in n; its zero crossing is the threshold
    let crossing = if la == 0.0 || le == 0.0 {
        // one hypothesis forbids any count: only n = 0 is ambiguous
        if log_odds(setup, 0) >= 0.0 {
            if atom_darker { 0.0 } else { f64::NEG_INFINITY }
        } else if atom_darker {
            -1.0
        } else {
            1.0
        }
    } else {
        (le - la + prior_term) / (le / la).ln()
    };

    let rule = if atom_darker {
        if crossing < 0.0 && log_odds(setup, 0) < 0.0 {
            return Ok(DecisionRule::Always(Hypothesis::Empty));
        }
        if !crossing.is_finite() || crossing > 1e15 {
            return Ok(DecisionRule::Always(Hypothesis::Atom));
        }
        let mut t = crossing.max(0.0).floor() as u64;
        while log_odds(setup, t) < 0.0 && t > 0 {
            t -= 1;
        }
        while log_odds(setup, t + 1) >= 0.0 {
            t += 1;
        }
        if log_odds(setup, t) < 0.0 {
            DecisionRule::Always(Hypothesis::Empty)
        } else {
            DecisionRule::AtomIfAtMost(t)
        }
    } else {
        if crossing <= 0.0 && log_odds(setup, 0) >= 0.0 {
            return Ok(DecisionRule::Always(Hypothesis::Atom));
        }
        if !crossing.is_finite() || crossing > 1e15 {
            return Ok(DecisionRule::Always(Hypothesis::Empty));
        }
        let mut t = crossing.max(0.0).ceil() as u64;
        while t > 0 && log_odds(setup, t - 1) >= 0.0 {
            t -= 1;
        }
        while log_odds(setup, t) < 0.0 {
            t += 1;
        }
        DecisionRule::AtomIfAtLeast(t)
    };
    Ok(flag_dominant_prior(setup, rule))
}

/// Replaces a threshold rule whose outcome is fixed up to `PRIOR_DOMINANCE`
/// under both hypotheses by the corresponding constant rule.
fn flag_dominant_prior(setup: &DetectionSetup, rule: DecisionRule) -> DecisionRule {
    let under_empty = p_decide_atom(&rule, setup.mean_empty());
    let under_atom = p_decide_atom(&rule, setup.mean_atom());
    if under_empty > 1.0 - PRIOR_DOMINANCE && under_atom > 1.0 - PRIOR_DOMINANCE {
        DecisionRule::Always(Hypothesis::Atom)
    } else if under_empty < PRIOR_DOMINANCE && under_atom < PRIOR_DOMINANCE {
        DecisionRule::Always(Hypothesis::Empty)
    } else {
        rule
    }
}

const PRIOR_DOMINANCE: f64 = 1e-12;

/// Error probabilities of a decision rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceReport {
    pub p_correct: f64,
    /// P(decide atom | empty).
    pub p_false_atom: f64,
    /// P(decide empty | atom).
    pub p_missed_atom: f64,
    /// Photons scattered by a present atom during the interval.
    pub expected_scattered_photons: f64,
}

/// Poisson CDF `P(N <= k)` for mean `lambda`.
fn poisson_cdf(lambda: f64, k: u64) -> f64 {
    if lambda == 0.0 {
        return 1.0;
    }
    let mut term = (-lambda).exp();
    let mut sum = term;
    // the sum is finite; beyond the mode, stop once terms are negligible
    for j in 1..=k {
        term *= lambda / j as f64;
        sum += term;
        if j as f64 > lambda && term < 1e-17 * sum {
            break;
        }
    }
    sum.min(1.0)
}

/// Probability that `rule` decides "atom" when counts have mean `lambda`.
fn p_decide_atom(rule: &DecisionRule, lambda: f64) -> f64 {
    match *rule {
        DecisionRule::AtomIfAtMost(t) => poisson_cdf(lambda, t),
        DecisionRule::AtomIfAtLeast(0) => 1.0,
        DecisionRule::AtomIfAtLeast(t) => 1.0 - poisson_cdf(lambda, t - 1),
        DecisionRule::Always(Hypothesis::Atom) => 1.0,
        DecisionRule::Always(Hypothesis::Empty) => 0.0,
    }
}

/// Evaluates an arbitrary rule against `setup`.
pub fn evaluate_rule(setup: &DetectionSetup, rule: &DecisionRule) -> ConfidenceReport {
    let p_false_atom = p_decide_atom(rule, setup.mean_empty());
    let p_missed_atom = 1.0 - p_decide_atom(rule, setup.mean_atom());
    let p = setup.prior_atom;
    ConfidenceReport {
        p_correct: 1.0 - p * p_missed_atom - (1.0 - p) * p_false_atom,
        p_false_atom,
        p_missed_atom,
        expected_scattered_photons: setup.atom_scatter_rate * setup.tau,
    }
}

/// Exact error probabilities of the Bayes-optimal rule.
///
/// Indistinguishable hypotheses are not an error here: the best one can do
/// is follow the prior, giving `max(p, 1 − p)`.
pub fn confidence(setup: &DetectionSetup) -> Result<ConfidenceReport> {
    let rule = match bayes_rule(setup) {
        Ok(rule) => rule,
        Err(Error::NoInformation { .. }) => DecisionRule::Always(if setup.prior_atom >= 0.5 {
            Hypothesis::Atom
        } else {
            Hypothesis::Empty
        }),
        Err(e) => return Err(e),
    };
    Ok(evaluate_rule(setup, &rule))
}

/// Confidence as a function of interval length.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceCurve {
    /// `(τ, p_correct)` for each grid point.
    pub points: Vec<(f64, f64)>,
    pub target: f64,
    /// Smallest grid `τ` reaching `target`, if any.
    pub tau_star: Option<f64>,
}

/// Evaluates [`confidence`] over an increasing grid of intervals.
pub fn confidence_vs_time(setup: &DetectionSetup, tau_grid: &[f64], target: f64) -> Result<ConfidenceCurve> {
    if tau_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParams("interval grid must be increasing".into()));
    }
    let points = tau_grid
        .iter()
        .map(|&tau| confidence(&setup.with_tau(tau)).map(|r| (tau, r.p_correct)))
        .collect::<Result<Vec<_>>>()?;
    let tau_star = points.iter().find(|(_, p)| *p >= target).map(|(t, _)| *t);
    Ok(ConfidenceCurve {
        points,
        target,
        tau_star,
    })
}

/// Photons scattered into free space during `tau`.
pub fn scattered_photon_budget(response: &QedResponse, tau: f64) -> f64 {
    response.scatter_rate * tau
}

/// Empirical outcome of [`simulate_detection`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    /// `counts[truth][decision]`, index 0 = empty, 1 = atom.
    pub counts: [[u64; 2]; 2],
}

impl ConfusionMatrix {
    pub fn trials(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        self.counts[0][0] + self.counts[1][1]
    }

    pub fn p_correct(&self) -> f64 {
        self.correct() as f64 / self.trials() as f64
    }

    /// Binomial standard error of [`ConfusionMatrix::p_correct`].
    pub fn standard_error(&self) -> f64 {
        let p = self.p_correct();
        (p * (1.0 - p) / self.trials() as f64).sqrt()
    }

    fn merge(mut self, other: Self) -> Self {
        for i in 0..2 {
            for j in 0..2 {
                self.counts[i][j] += other.counts[i][j];
            }
        }
        self
    }
}

/// Trials per independently seeded block.
///
/// Block `b` draws from a ChaCha8 stream seeded with `seed` and stream id `b`;
/// the result therefore does not depend on how blocks are spread over threads.
pub const TRIALS_PER_BLOCK: u64 = 1 << 16;

/// Monte Carlo check of [`confidence`]: draws the truth from the prior, the
/// counts from the matching Poisson law, and applies [`bayes_rule`].
pub fn simulate_detection(setup: &DetectionSetup, trials: u64, seed: u64) -> Result<ConfusionMatrix> {
    let rule = bayes_rule(setup)?;
    let blocks = trials.div_ceil(TRIALS_PER_BLOCK);
    let draw = |lambda: f64, rng: &mut ChaCha8Rng| -> u64 {
        if lambda > 0.0 {
            Poisson::new(lambda).map(|d| d.sample(rng) as u64).unwrap_or(0)
        } else {
            0
        }
    };
    let matrix = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b);
            let n = TRIALS_PER_BLOCK.min(trials - b * TRIALS_PER_BLOCK);
            let mut m = ConfusionMatrix::default();
            for _ in 0..n {
                let atom = rng.random::<f64>() < setup.prior_atom;
                let lambda = if atom { setup.mean_atom() } else { setup.mean_empty() };
                let counts = draw(lambda, &mut rng);
                let decided_atom = rule.decide(counts) == Hypothesis::Atom;
                m.counts[atom as usize][decided_atom as usize] += 1;
            }
            m
        })
        .reduce(ConfusionMatrix::default, ConfusionMatrix::merge);
    Ok(matrix)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(le: f64, la: f64, prior: f64) -> DetectionSetup {
        DetectionSetup {
            rate_empty: le,
            rate_atom: la,
            dark_rate: 0.0,
            prior_atom: prior,
            tau: 1.0,
            atom_scatter_rate: 0.0,
        }
    }

    /// Brute-force rule: compare posteriors count by count.
    fn brute_force(s: &DetectionSetup, n: u64) -> Hypothesis {
        let pmf = |l: f64, k: u64| (-l).exp() * l.powi(k as i32) / (1..=k).map(|j| j as f64).product::<f64>();
        if s.prior_atom * pmf(s.mean_atom(), n) >= (1.0 - s.prior_atom) * pmf(s.mean_empty(), n) {
            Hypothesis::Atom
        } else {
            Hypothesis::Empty
        }
    }

    #[test]
    fn reference_threshold() {
        let s = setup(3.87, 0.19, 0.5);
        assert_eq!(bayes_rule(&s).unwrap(), DecisionRule::AtomIfAtMost(1));
        assert!(((3.87 - 0.19) / (3.87f64 / 0.19).ln() - 1.221).abs() < 1e-3);
    }

    #[test]
    fn threshold_matches_brute_force() {
        for &(le, la, p) in &[
            (2.0, 1.0, 0.5),
            (8.0, 4.0, 0.5),
            (20.0, 10.0, 0.3),
            (0.5, 3.0, 0.5),
            (12.0, 1.0, 0.9),
            (1.3, 0.2, 0.05),
        ] {
            let s = setup(le, la, p);
            let rule = bayes_rule(&s).unwrap();
            for n in 0..=50 {
                assert_eq!(rule.decide(n), brute_force(&s, n), "le={le} la={la} n={n}");
            }
        }
        // λ_empty = 2 λ_atom: n* = floor(λ_atom / ln 2)
        let s = setup(8.0, 4.0, 0.5);
        assert_eq!(bayes_rule(&s).unwrap().threshold(), Some((4.0 / 2f64.ln()).floor() as u64));
    }

    #[test]
    fn dominant_prior_ignores_data() {
        let s = setup(0.02, 0.01, 0.999);
        let rule = bayes_rule(&s).unwrap();
        assert_eq!(rule, DecisionRule::Always(Hypothesis::Atom));
        assert!((0..60).all(|n| rule.decide(n) == Hypothesis::Atom));
        let s = setup(0.02, 0.01, 0.001);
        assert_eq!(bayes_rule(&s).unwrap(), DecisionRule::Always(Hypothesis::Empty));
        let r = confidence(&s).unwrap();
        assert!(r.p_correct >= s.prior_atom - 1e-15);
    }

    #[test]
    fn no_information() {
        assert!(matches!(
            bayes_rule(&setup(1.0, 1.0, 0.5)),
            Err(Error::NoInformation { .. })
        ));
        let r = confidence(&setup(1.0, 1.0, 0.3)).unwrap();
        assert!((r.p_correct - 0.7).abs() < 1e-15);
    }

    #[test]
    fn zero_interval_gives_prior() {
        let s = DetectionSetup::reference().with_tau(0.0);
        assert!((confidence(&s).unwrap().p_correct - 0.5).abs() < 1e-15);
    }

    #[test]
    fn reference_confidence() {
        let s = DetectionSetup::reference();
        assert!((s.mean_empty() - 3.87).abs() < 0.01);
        assert!((s.mean_atom() - 0.19).abs() < 0.01);
        let r = confidence(&s).unwrap();
        assert!(r.p_correct >= 0.94 && r.p_correct <= 0.955, "{}", r.p_correct);
        let identity = 1.0 - 0.5 * r.p_missed_atom - 0.5 * r.p_false_atom;
        assert!((r.p_correct - identity).abs() < 1e-15);
        assert!((r.expected_scattered_photons - 1.185).abs() < 0.01);
    }

    #[test]
    fn budget_linear() {
        let resp = QedResponse {
            field_ratio: num_complex::Complex64::new(0.0, 0.0),
            photon_number: 0.0,
            atomic_excitation: 0.0,
            scatter_rate: 117e3,
            saturation_warning: false,
            truncation_warning: false,
        };
        assert!((scattered_photon_budget(&resp, 10e-6) - 1.17).abs() < 1e-12);
        assert!((scattered_photon_budget(&resp, 20e-6) - 2.34).abs() < 1e-12);
        let dark = QedResponse { scatter_rate: 0.0, ..resp };
        assert_eq!(scattered_photon_budget(&dark, 10e-6), 0.0);
    }

    #[test]
    fn single_trial_and_determinism() {
        let s = DetectionSetup::reference();
        assert_eq!(simulate_detection(&s, 1, 3).unwrap().trials(), 1);
        assert_eq!(
            simulate_detection(&s, 200_000, 11).unwrap(),
            simulate_detection(&s, 200_000, 11).unwrap()
        );
    }

    #[test]
    fn grid_must_increase() {
        let s = DetectionSetup::reference();
        assert!(confidence_vs_time(&s, &[1e-6, 1e-6], 0.9).is_err());
        let c = confidence_vs_time(&s, &[1e-6, 2e-6], 0.999).unwrap();
        assert_eq!(c.tau_star, None);
    }
}
