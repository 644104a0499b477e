use nalgebra::{Matrix3, SymmetricEigen};

use super::{model_unchecked, SpectrumData};
use crate::error::{Error, Result};
use crate::numerics::nelder_mead;
use crate::qed::QedParams;
use crate::units::{angular_to_mhz, mhz_to_angular};

/// Search ranges and stopping rules for [`fit_normal_modes`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Upper end of the coarse coupling scan, in units of `g0`.
    pub max_g_ratio: f64,
    pub g_ratio_step: f64,
    /// Half-width of the coarse Stark-shift scan (MHz).
    pub max_stark_mhz: f64,
    pub stark_step_mhz: f64,
    pub max_evaluations: usize,
    /// Relative change of χ² across the simplex that ends the refinement.
    pub rel_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_g_ratio: 1.2,
            g_ratio_step: 0.01,
            max_stark_mhz: 10.0,
            stark_step_mhz: 0.2,
            max_evaluations: 2000,
            rel_tolerance: 1e-10,
        }
    }
}

/// Best-fit fixed-coupling model.
///
/// Parameter order in `covariance` is `(g_eff, stark_shift, amplitude_scale)`
/// with rates in rad/s.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub g_eff: f64,
    pub stark_shift: f64,
    pub amplitude_scale: f64,
    pub chi_squared: f64,
    pub covariance: Matrix3<f64>,
    pub converged: bool,
    /// χ² is flat along some direction: at most one normal mode constrains
    /// the data and the covariance has been floored.
    pub degenerate: bool,
    pub evaluations: usize,
    pub degrees_of_freedom: usize,
}

impl FitResult {
    pub fn g_uncertainty(&self) -> f64 {
        self.covariance[(0, 0)].sqrt()
    }

    pub fn stark_uncertainty(&self) -> f64 {
        self.covariance[(1, 1)].sqrt()
    }

    pub fn reduced_chi_squared(&self) -> f64 {
        self.chi_squared / self.degrees_of_freedom.max(1) as f64
    }
}

struct Problem<'a> {
    delta_c: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
    params: &'a QedParams,
}

impl Problem<'_> {
    fn model(&self, g: f64, stark: f64) -> Vec<f64> {
        self.delta_c
            .iter()
            .map(|&d| model_unchecked(d, g, stark, self.params))
            .collect()
    }

    fn chi2(&self, g: f64, stark: f64, amplitude: f64) -> f64 {
        self.model(g, stark)
            .iter()
            .zip(&self.y)
            .zip(&self.w)
            .map(|((m, y), w)| w * (y - amplitude * m).powi(2))
            .sum()
    }

    /// χ² minimized over the amplitude, which enters linearly.
    fn profiled(&self, g: f64, stark: f64) -> (f64, f64) {
        let m = self.model(g, stark);
        let (mut wym, mut wmm) = (0.0, 0.0);
        for ((m, y), w) in m.iter().zip(&self.y).zip(&self.w) {
            wym += w * y * m;
            wmm += w * m * m;
        }
        let amplitude = if wmm > 0.0 { wym / wmm } else { 0.0 };
        let chi2 = m
            .iter()
            .zip(&self.y)
            .zip(&self.w)
            .map(|((m, y), w)| w * (y - amplitude * m).powi(2))
            .sum();
        (chi2, amplitude)
    }
}

/// Weighted least-squares fit of the fixed-coupling transmission model.
///
/// A coarse scan over `(g, Δ_s)` with the amplitude profiled out seeds a
/// simplex refinement; `init`, when given, competes with the best scan
/// point as the starting guess.
pub fn fit_normal_modes(
    data: &SpectrumData,
    params: &QedParams,
    init: Option<&FitResult>,
    options: &FitOptions,
) -> Result<FitResult> {
    params.validate()?;
    data.validate()?;
    if data.points.len() < 8 {
        return Err(Error::InvalidParams(format!(
            "at least 8 spectrum points are needed, got {}",
            data.points.len()
        )));
    }
    if !(options.g_ratio_step > 0.0 && options.stark_step_mhz > 0.0 && options.max_evaluations > 0) {
        return Err(Error::InvalidConfig("fit grid steps and budget must be positive".into()));
    }
    let problem = Problem {
        delta_c: data.points.iter().map(|p| mhz_to_angular(p.delta_c_mhz)).collect(),
        y: data.points.iter().map(|p| p.transmission).collect(),
        w: data.points.iter().map(|p| p.uncertainty.powi(-2)).collect(),
        params,
    };
    let g0 = params.g0;

    let g_steps = (options.max_g_ratio / options.g_ratio_step).round() as usize;
    let s_steps = (options.max_stark_mhz / options.stark_step_mhz).round() as i64;
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 0..=g_steps {
        let r = i as f64 * options.g_ratio_step;
        for j in -s_steps..=s_steps {
            let s = j as f64 * options.stark_step_mhz;
            let (chi2, _) = problem.profiled(r * g0, mhz_to_angular(s));
            if chi2 < best.0 {
                best = (chi2, r, s);
            }
        }
    }
    if let Some(init) = init {
        let (r, s) = (init.g_eff / g0, angular_to_mhz(init.stark_shift));
        let (chi2, _) = problem.profiled(r * g0, mhz_to_angular(s));
        if chi2 < best.0 {
            best = (chi2, r, s);
        }
    }

    let objective = |x: &[f64]| problem.profiled(x[0].abs() * g0, mhz_to_angular(x[1])).0;
    let mut start = [best.1, best.2];
    let mut steps = [options.g_ratio_step, options.stark_step_mhz];
    let mut evaluations = 0;
    let mut converged = false;
    let mut value = best.0;
    // restart from the optimum until a fresh simplex confirms it
    while evaluations < options.max_evaluations {
        let budget = options.max_evaluations - evaluations;
        let run = nelder_mead(objective, &start, &steps, options.rel_tolerance, 1e-15, budget);
        evaluations += run.evaluations;
        let improved = run.value < value * (1.0 - options.rel_tolerance) - 1e-15;
        start = [run.point[0], run.point[1]];
        value = run.value.min(value);
        if !run.converged {
            break;
        }
        if !improved && converged {
            break;
        }
        converged = true;
        steps = [steps[0] * 0.1, steps[1] * 0.1];
    }

    let g_eff = start[0].abs() * g0;
    let stark_shift = mhz_to_angular(start[1]);
    let (chi_squared, amplitude_scale) = problem.profiled(g_eff, stark_shift);
    let (covariance, degenerate) = covariance(&problem, g_eff, stark_shift, amplitude_scale, g0);
    Ok(FitResult {
        g_eff,
        stark_shift,
        amplitude_scale,
        chi_squared,
        covariance,
        converged: converged && chi_squared.is_finite(),
        degenerate,
        evaluations,
        degrees_of_freedom: data.points.len().saturating_sub(3),
    })
}

/// `2 H⁻¹` of χ² by central differences in scaled coordinates.
fn covariance(problem: &Problem, g: f64, stark: f64, amplitude: f64, g0: f64) -> (Matrix3<f64>, bool) {
    let scale = [1e-3 * g0, mhz_to_angular(1e-3), 1e-3 * amplitude.abs().max(1e-12)];
    let x0 = [g, stark, amplitude];
    let f = |dx: [f64; 3]| {
        problem.chi2(
            x0[0] + dx[0] * scale[0],
            x0[1] + dx[1] * scale[1],
            x0[2] + dx[2] * scale[2],
        )
    };
    let mut h = Matrix3::zeros();
    let f0 = f([0.0; 3]);
    for i in 0..3 {
        let mut e = [0.0; 3];
        e[i] = 1.0;
        let neg = e.map(|v| -v);
        h[(i, i)] = f(e) - 2.0 * f0 + f(neg);
        for j in 0..i {
            let mut pp = [0.0; 3];
            pp[i] = 1.0;
            pp[j] = 1.0;
            let mut pm = pp;
            pm[j] = -1.0;
            let mp = pm.map(|v| -v);
            let mm = pp.map(|v| -v);
            let v = (f(pp) - f(pm) - f(mp) + f(mm)) / 4.0;
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(h);
    let top = eig.eigenvalues.max().max(0.0);
    let floor = 1e-9 * top;
    let degenerate = !(top > 0.0) || eig.eigenvalues.iter().any(|&l| !(l > floor));
    let floor = if top > 0.0 { floor } else { 1e-300 };
    let inv = Matrix3::from_diagonal(&eig.eigenvalues.map(|l| 2.0 / l.max(floor)));
    let scaled = eig.eigenvectors * inv * eig.eigenvectors.transpose();
    let s = Matrix3::from_diagonal(&nalgebra::Vector3::from(scale));
    (s * scaled * s, degenerate)
}
