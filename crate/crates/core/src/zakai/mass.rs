//! Total-mass identity and innovation increments of a grid run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::Scenario;
use crate::simulate::ObservationPath;

use super::solver::FilterRun;

/// Comparison of the solver's `log rho_T(1)` with the closed-form
/// exponential of the normalised filter's `pi(h)` path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassFormulaReport {
    /// `log rho_T(1) - log rho_0(1)` from the solver.
    pub log_mass_solver: f64,
    /// Left-point (Ito) quadrature of
    /// `int gamma^{-1} pi(h) dBbar - 1/2 int |gamma^{-1} pi(h)|^2 ds`.
    pub log_formula: f64,
    pub discrepancy: f64,
    /// Same quadrature with the second-order Ito correction
    /// `1/2 (dBbar^T V dBbar - tr(V) dt)`, `V = gamma^{-1} Cov_pi(h) gamma^{-1}`.
    pub log_formula_corrected: f64,
    pub discrepancy_corrected: f64,
}

/// Evaluate the mass identity on a finished run, with `dBbar = gamma^{-1} dY`.
pub fn mass_formula_check(
    run: &FilterRun,
    y: &ObservationPath,
    s: &Scenario,
) -> Result<MassFormulaReport> {
    y.check_grid(s)?;
    let steps = s.time_grid().steps();
    if run.pi_h.len() != steps + 1 {
        return Err(Error::GridMismatch(
            "run does not cover the scenario grid".into(),
        ));
    }
    let n = s.n();
    let dt = s.time_grid().dt();
    let mut left = 0.0;
    let mut correction = 0.0;
    for k in 0..steps {
        let g_inv = s.gamma_inv_at(k)?;
        let dy = y.increment(k);
        let dbbar: Vec<f64> = (0..n)
            .map(|l| (0..n).map(|j| g_inv[(l, j)] * dy[j]).sum())
            .collect();
        let u: Vec<f64> = (0..n)
            .map(|l| (0..n).map(|j| g_inv[(l, j)] * run.pi_h[k][j]).sum())
            .collect();
        left += u.iter().zip(&dbbar).map(|(a, b)| a * b).sum::<f64>()
            - 0.5 * u.iter().map(|a| a * a).sum::<f64>() * dt;

        let v = g_inv * &run.h_cov[k] * g_inv.transpose();
        let mut quad = 0.0;
        for l in 0..n {
            for j in 0..n {
                quad += dbbar[l] * v[(l, j)] * dbbar[j];
            }
        }
        correction += 0.5 * (quad - v.trace() * dt);
    }
    let solver = run.log_mass[steps] - run.log_mass[0];
    let corrected = left + correction;
    Ok(MassFormulaReport {
        log_mass_solver: solver,
        log_formula: left,
        discrepancy: (solver - left).abs(),
        log_formula_corrected: corrected,
        discrepancy_corrected: (solver - corrected).abs(),
    })
}

/// Innovation increments `dI_k = gamma^{-1} dY_k - gamma^{-1} pi_{t_k}(h) dt`,
/// `steps * n` values.
pub fn innovation_increments(
    run: &FilterRun,
    y: &ObservationPath,
    s: &Scenario,
) -> Result<Vec<f64>> {
    y.check_grid(s)?;
    let n = s.n();
    let dt = s.time_grid().dt();
    let steps = s.time_grid().steps();
    let mut out = Vec::with_capacity(steps * n);
    for k in 0..steps {
        let g_inv = s.gamma_inv_at(k)?;
        let dy = y.increment(k);
        for l in 0..n {
            let mut v = 0.0;
            for j in 0..n {
                v += g_inv[(l, j)] * (dy[j] - run.pi_h[k][j] * dt);
            }
            out.push(v);
        }
    }
    Ok(out)
}
