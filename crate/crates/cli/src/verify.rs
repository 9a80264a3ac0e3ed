//! Independent re-check of a solve report.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use shm_core::problem::Problem;
use shm_core::signal::{fourier_closed_form, is_staircase, Coefficients};
use shm_core::solver::{pmp_agreement, SolveReport};
use shm_core::Result;

/// The extracted signal must reproduce the targets this closely.
pub const FOURIER_TOL: f64 = 3e-2;
/// Minimum share of nodes agreeing with the maximum principle.
pub const PMP_MIN: f64 = 0.98;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Verification {
    pub converged: bool,
    /// Closed-form coefficients of the extracted signal.
    pub fourier: Option<Coefficients>,
    /// Distance of `fourier` from the targets.
    pub fourier_residual: Option<f64>,
    pub fourier_ok: bool,
    /// `‖x_{N_t}‖` recomputed from the control.
    pub terminal_residual: f64,
    pub pmp_agreement: f64,
    pub pmp_ok: bool,
    pub staircase: bool,
    /// `4 ε π max|𝓛|`, which bounds the squared residual for reachable
    /// targets.
    pub residual_bound: f64,
    pub bound_ok: bool,
    pub all_pass: bool,
}

pub fn verify(report: &SolveReport) -> Result<Verification> {
    let problem = Problem::new(report.problem.clone(), report.control.grid().clone())?;
    let u = report.control.values();
    let x = problem.map().terminal(problem.initial_state(), u);
    let terminal_residual = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mu = problem.map().switching_function(&x);
    let agreement = pmp_agreement(problem.model(), u, &mu, &report.options);
    let fourier = report
        .extracted
        .as_ref()
        .map(|s| fourier_closed_form(s, problem.harmonics()));
    let fourier_residual = fourier.as_ref().map(|c| c.distance(&report.problem.targets));
    let staircase = report
        .extracted
        .as_ref()
        .is_some_and(|s| is_staircase(s, problem.levels()));
    let model = problem.model();
    let residual_bound = 4.0 * model.epsilon() * PI * model.max_abs();
    let fourier_ok = fourier_residual.is_some_and(|r| r <= FOURIER_TOL);
    let pmp_ok = agreement >= PMP_MIN;
    let bound_ok = terminal_residual * terminal_residual <= residual_bound;
    Ok(Verification {
        all_pass: report.converged && fourier_ok && pmp_ok && staircase && bound_ok,
        converged: report.converged,
        fourier,
        fourier_residual,
        fourier_ok,
        terminal_residual,
        pmp_agreement: agreement,
        pmp_ok,
        staircase,
        residual_bound,
        bound_ok,
    })
}
