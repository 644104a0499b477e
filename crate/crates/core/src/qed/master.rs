//! Driven, damped Jaynes–Cummings master equation solved for its steady
//! state in the space (two-level atom) ⊗ (Fock states 0..=N).
//!
//! In the frame rotating at the probe frequency
//!
//! ```text
//! H/ħ = −Δ_c a†a − Δ_a σ⁺σ⁻ + g (a†σ⁻ + σ⁺a) + iη (a† − a)
//! ```
//!
//! with collapse operators `√(2κ) a` and `√(2γ) σ⁻`. The density matrix is
//! column-stacked, so `vec(AρB) = (Bᵀ ⊗ A) vec(ρ)`. The null space of the
//! Liouvillian is found by replacing its first row with the trace
//! constraint and solving the bordered system by LU.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{QedParams, QedResponse, SATURATION_EXCITATION, SATURATION_PHOTONS};
use crate::error::{Error, Result};

pub const DEFAULT_FOCK_TRUNCATION: usize = 5;
/// Top Fock-level population above which the truncation is flagged.
pub const TRUNCATION_POPULATION: f64 = 1e-6;
const MAX_CONDITION: f64 = 1e14;

/// Steady-state density matrix with its observables and sanity figures.
#[derive(Debug, Clone)]
pub struct MasterSolution {
    pub response: QedResponse,
    /// Basis index `atom * (N + 1) + n`, atom 0 = ground.
    pub density_matrix: DMatrix<Complex64>,
    pub top_level_population: f64,
    pub trace_error: f64,
    pub hermiticity_error: f64,
    pub min_eigenvalue: f64,
    /// Ratio of largest to smallest pivot magnitude in the LU factorization.
    pub condition_estimate: f64,
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn annihilation(levels: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(levels, levels, |i, j| {
        if j == i + 1 {
            c((j as f64).sqrt())
        } else {
            c(0.0)
        }
    })
}

fn dagger(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    m.adjoint()
}

/// Solves the master equation with Fock levels `0..=fock_truncation`.
pub fn master_equation_steady_state(
    params: &QedParams,
    g_eff: f64,
    fock_truncation: usize,
) -> Result<MasterSolution> {
    params.validate()?;
    if fock_truncation < 2 {
        return Err(Error::InvalidParams(format!(
            "Fock truncation must be at least 2, got {fock_truncation}"
        )));
    }
    let levels = fock_truncation + 1;
    let dim = 2 * levels;
    let id_atom = DMatrix::<Complex64>::identity(2, 2);
    let id_field = DMatrix::<Complex64>::identity(levels, levels);
    let id = DMatrix::<Complex64>::identity(dim, dim);

    let lower = DMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(0.0), c(0.0)]);
    let a = id_atom.kronecker(&annihilation(levels));
    let sm = lower.kronecker(&id_field);
    let ad = dagger(&a);
    let sp = dagger(&sm);
    let n_op = &ad * &a;
    let e_op = &sp * &sm;

    let i = Complex64::i();
    let hamiltonian = &n_op * c(-params.delta_c)
        + &e_op * c(-params.delta_a())
        + (&ad * &sm + &sp * &a) * c(g_eff)
        + (&ad - &a) * (i * params.drive);

    let mut liouvillian =
        (id.kronecker(&hamiltonian) - hamiltonian.transpose().kronecker(&id)) * (-i);
    for (op, rate) in [(&a, 2.0 * params.kappa), (&sm, 2.0 * params.gamma)] {
        let op_dag_op = dagger(op) * op;
        let term = op.conjugate().kronecker(op)
            - id.kronecker(&op_dag_op) * c(0.5)
            - op_dag_op.transpose().kronecker(&id) * c(0.5);
        liouvillian += term * c(rate);
    }

    let size = dim * dim;
    for col in 0..size {
        liouvillian[(0, col)] = c(0.0);
    }
    for k in 0..dim {
        liouvillian[(0, k * dim + k)] = c(1.0);
    }
    let mut rhs = DVector::<Complex64>::zeros(size);
    rhs[0] = c(1.0);

    let lu = liouvillian.lu();
    let u = lu.u();
    let pivots: Vec<f64> = (0..size).map(|k| u[(k, k)].norm()).collect();
    let max_pivot = pivots.iter().cloned().fold(0.0, f64::max);
    let min_pivot = pivots.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition_estimate = if min_pivot > 0.0 {
        max_pivot / min_pivot
    } else {
        f64::INFINITY
    };
    if !(condition_estimate < MAX_CONDITION) {
        return Err(Error::Solver {
            reason: "steady-state Liouvillian is singular or ill conditioned".into(),
            condition: condition_estimate,
        });
    }
    let solution = lu.solve(&rhs).ok_or_else(|| Error::Solver {
        reason: "LU solve failed".into(),
        condition: condition_estimate,
    })?;

    let rho = DMatrix::from_column_slice(dim, dim, solution.as_slice());
    let expect = |op: &DMatrix<Complex64>| (op * &rho).trace();

    let photon_number = expect(&n_op).re;
    let atomic_excitation = expect(&e_op).re;
    let field = expect(&a);
    let top_level_population =
        rho[(fock_truncation, fock_truncation)].re + rho[(dim - 1, dim - 1)].re;

    let trace_error = (rho.trace() - c(1.0)).norm();
    let hermiticity_error = (&rho - rho.adjoint())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    let hermitian = (&rho + rho.adjoint()) * c(0.5);
    let min_eigenvalue = hermitian
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);

    let field_ratio = if params.drive != 0.0 {
        field * params.kappa / params.drive
    } else {
        c(0.0)
    };
    Ok(MasterSolution {
        response: QedResponse {
            field_ratio,
            photon_number,
            atomic_excitation,
            scatter_rate: 2.0 * params.gamma * atomic_excitation,
            saturation_warning: photon_number > SATURATION_PHOTONS
                || atomic_excitation > SATURATION_EXCITATION,
            truncation_warning: top_level_population > TRUNCATION_POPULATION,
        },
        density_matrix: rho,
        top_level_population,
        trace_error,
        hermiticity_error,
        min_eigenvalue,
        condition_estimate,
    })
}
