//! Kalman-Bucy filter for linear-Gaussian scenarios, with the
//! bounded-variation input entering as a known additive control.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scenario::{min_eigenvalue, validate_scenario, LinearGaussian, Scenario};
use crate::simulate::ObservationPath;

/// Allowed negative eigenvalue of the covariance after symmetrisation.
pub const PSD_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// `log rho_t(1)`.
    pub log_mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanRun {
    pub times: Vec<f64>,
    pub beliefs: Vec<GaussianBelief>,
    /// `H m_t + g`.
    pub pi_h: Vec<DVector<f64>>,
    /// Kalman gain `P H^T (gamma gamma^T)^{-1}` used on `[t_k, t_{k+1}]`.
    pub gains: Vec<DMatrix<f64>>,
    /// Beliefs just before each jump node: `(node, belief)`.
    pub pre_jump: Vec<(usize, GaussianBelief)>,
}

fn linear_model(s: &Scenario) -> Result<LinearGaussian> {
    s.linear_gaussian().ok_or(Error::NotLinearGaussian)
}

fn observation_precision(s: &Scenario, k: usize) -> Result<DMatrix<f64>> {
    let g_inv = s.gamma_inv_at(k)?;
    Ok(g_inv.transpose() * g_inv)
}

fn riccati_rhs(
    lg: &LinearGaussian,
    q: &DMatrix<f64>,
    r_inv: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> DMatrix<f64> {
    &lg.a * p + p * lg.a.transpose() + q - p * lg.h.transpose() * r_inv * &lg.h * p
}

fn symmetrize_checked(p: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = (&p + p.transpose()) * 0.5;
    let lo = min_eigenvalue(&p);
    if lo < -PSD_TOLERANCE || !lo.is_finite() {
        return Err(Error::CovarianceNotPsd(lo));
    }
    Ok(p)
}

/// Run the filter along `y` on the scenario time grid.
pub fn kalman_run(s: &Scenario, y: &ObservationPath) -> Result<KalmanRun> {
    let lg = linear_model(s)?;
    validate_scenario(s).into_result()?;
    y.check_grid(s)?;
    let grid = s.time_grid();
    let (steps, dt) = (grid.steps(), grid.dt());
    let nu = s.nu();
    let q = &lg.sigma * lg.sigma.transpose();

    let mut mean = lg.mean0.clone();
    if let Some(j) = nu.initial_jump() {
        mean += DVector::from_column_slice(j);
    }
    let mut cov = symmetrize_checked(lg.cov0.clone())?;
    let mut log_mass = 0.0;

    let mut beliefs = Vec::with_capacity(steps + 1);
    let mut pi_h = Vec::with_capacity(steps + 1);
    let mut gains = Vec::with_capacity(steps);
    let mut pre_jump = Vec::new();
    beliefs.push(GaussianBelief {
        mean: mean.clone(),
        cov: cov.clone(),
        log_mass,
    });
    pi_h.push(&lg.h * &mean + &lg.g);

    for k in 0..steps {
        let r_inv = observation_precision(s, k)?;
        let g_inv = s.gamma_inv_at(k)?;
        let dy = DVector::from_vec(y.increment(k));
        let predicted = &pi_h[k];
        let gain = &cov * lg.h.transpose() * &r_inv;

        let u = g_inv * predicted;
        log_mass += u.dot(&(g_inv * &dy)) - 0.5 * u.norm_squared() * dt;

        let innovation = &dy - predicted * dt;
        let drift = &lg.a * &mean + &lg.c;
        mean = &mean
            + drift * dt
            + DVector::from_column_slice(nu.continuous_increment(k))
            + &gain * innovation;
        cov = symmetrize_checked(&cov + riccati_rhs(&lg, &q, &r_inv, &cov) * dt)?;
        gains.push(gain);

        if let Some(j) = nu.jump_at(k + 1) {
            pre_jump.push((
                k + 1,
                GaussianBelief {
                    mean: mean.clone(),
                    cov: cov.clone(),
                    log_mass,
                },
            ));
            mean += DVector::from_column_slice(j);
        }
        if mean.iter().any(|v| !v.is_finite()) || !log_mass.is_finite() {
            return Err(Error::NonFinite {
                step: k,
                what: "kalman mean".into(),
            });
        }
        pi_h.push(&lg.h * &mean + &lg.g);
        beliefs.push(GaussianBelief {
            mean: mean.clone(),
            cov: cov.clone(),
            log_mass,
        });
    }
    Ok(KalmanRun {
        times: grid.nodes(),
        beliefs,
        pi_h,
        gains,
        pre_jump,
    })
}

/// Covariance path of the Riccati equation alone, `steps + 1` nodes.
pub fn riccati_path(s: &Scenario) -> Result<Vec<DMatrix<f64>>> {
    let lg = linear_model(s)?;
    let grid = s.time_grid();
    let q = &lg.sigma * lg.sigma.transpose();
    let mut cov = symmetrize_checked(lg.cov0.clone())?;
    let mut out = Vec::with_capacity(grid.steps() + 1);
    out.push(cov.clone());
    for k in 0..grid.steps() {
        let r_inv = observation_precision(s, k)?;
        cov = symmetrize_checked(&cov + riccati_rhs(&lg, &q, &r_inv, &cov) * grid.dt())?;
        out.push(cov.clone());
    }
    Ok(out)
}

/// `max |P_T(dt) - P_T(dt / 2)|`, the step-halving error estimate of the
/// terminal covariance.
pub fn riccati_halving_error(s: &Scenario) -> Result<f64> {
    let coarse = riccati_path(s)?;
    let fine = riccati_path(&s.with_steps(2 * s.time_grid().steps())?)?;
    let diff = coarse.last().unwrap() - fine.last().unwrap();
    Ok(diff.amax())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpIdentity {
    /// `max_n |P_{T_n} - P_{T_n-}|`.
    pub max_cov_jump: f64,
    /// `max_n |(m_{T_n} - m_{T_n-}) - dnu_{T_n}|`.
    pub max_mean_jump_error: f64,
    pub jumps: usize,
}

/// Discontinuities of the oracle at the jump nodes of the input.
pub fn kalman_jump_identity_check(s: &Scenario, y: &ObservationPath) -> Result<JumpIdentity> {
    let run = kalman_run(s, y)?;
    let mut out = JumpIdentity {
        max_cov_jump: 0.0,
        max_mean_jump_error: 0.0,
        jumps: run.pre_jump.len(),
    };
    for (k, before) in &run.pre_jump {
        let after = &run.beliefs[*k];
        let jump = DVector::from_column_slice(s.nu().jump_at(*k).unwrap_or(&[]));
        out.max_cov_jump = out.max_cov_jump.max((&after.cov - &before.cov).amax());
        out.max_mean_jump_error = out
            .max_mean_jump_error
            .max((&after.mean - &before.mean - jump).amax());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::tests::ou_spec;
    use crate::scenario::{
        DiffusionSpec, DriftSpec, GammaSpec, InitialLawSpec, MixtureComponent, NuSpec,
        ObservationSpec,
    };
    use crate::simulate::{simulate_bundle, Measure};

    fn scalar(a: f64, s: f64, h: f64, g: f64, p0: f64, horizon: f64, steps: usize) -> Scenario {
        let mut spec = ou_spec();
        spec.horizon = horizon;
        spec.steps = steps;
        spec.grid = None;
        spec.coeffs.b = DriftSpec::Linear {
            a: vec![vec![a]],
            c: None,
        };
        spec.coeffs.sigma = DiffusionSpec::Scalar { s };
        spec.coeffs.h = ObservationSpec::Linear {
            h: vec![vec![h]],
            g: None,
        };
        spec.coeffs.gamma = GammaSpec::Scalar { g };
        spec.xi = InitialLawSpec::Gaussian {
            mean: vec![0.0],
            cov: vec![vec![p0]],
        };
        spec.nu = NuSpec::default();
        Scenario::from_spec(spec).unwrap()
    }

    /// Closed-form scalar Riccati solution of `P' = 2aP + s^2 - (h/g)^2 P^2`.
    fn riccati_exact(a: f64, s: f64, h: f64, g: f64, p0: f64, t: f64) -> f64 {
        let k = (h / g).powi(2);
        let disc = (a * a + k * s * s).sqrt();
        let (p1, p2) = ((a + disc) / k, (a - disc) / k);
        let r = (p0 - p1) / (p0 - p2) * (-k * (p1 - p2) * t).exp();
        (p1 - r * p2) / (1.0 - r)
    }

    #[test]
    fn riccati_steady_state_is_one() {
        let s = scalar(0.0, 1.0, 1.0, 1.0, 3.0, 12.0, 12_000);
        let path = riccati_path(&s).unwrap();
        let vals: Vec<f64> = path.iter().map(|p| p[(0, 0)]).collect();
        assert!(vals.windows(2).all(|w| w[1] <= w[0]));
        assert!((vals.last().unwrap() - 1.0).abs() < 1e-6);
        let s = scalar(0.0, 1.0, 1.0, 1.0, 0.2, 12.0, 12_000);
        let vals: Vec<f64> = riccati_path(&s)
            .unwrap()
            .iter()
            .map(|p| p[(0, 0)])
            .collect();
        assert!(vals.windows(2).all(|w| w[1] >= w[0]));
        assert!((vals.last().unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn algebraic_fixed_point_is_reached() {
        let s = scalar(-1.0, 1.0, 1.0, 0.5, 1.0, 20.0, 20_000);
        let p_inf = (5.0f64.sqrt() - 1.0) / 4.0;
        let last = riccati_path(&s).unwrap().last().unwrap()[(0, 0)];
        assert!((last - p_inf).abs() < 1e-6, "{last} vs {p_inf}");
    }

    #[test]
    fn euler_riccati_matches_closed_form_within_two_dt() {
        for steps in [100, 1000] {
            let s = scalar(-1.0, 1.0, 1.0, 0.5, 1.0, 1.0, steps);
            let dt = s.time_grid().dt();
            let last = riccati_path(&s).unwrap().last().unwrap()[(0, 0)];
            let exact = riccati_exact(-1.0, 1.0, 1.0, 0.5, 1.0, 1.0);
            assert!(
                (last - exact).abs() <= 2.0 * dt,
                "steps {steps}: {last} vs {exact}"
            );
            // the step-halving estimate is a usable proxy for the error
            let est = riccati_halving_error(&s).unwrap();
            assert!(est <= 2.0 * dt && est >= 0.25 * (last - exact).abs());
        }
    }

    #[test]
    fn no_information_follows_prior() {
        let mut spec = ou_spec();
        spec.coeffs.h = ObservationSpec::Zero;
        spec.nu = NuSpec {
            jumps: vec![(0.5, vec![0.5])],
            continuous: vec![(1.0, vec![0.25])],
        };
        spec.xi = InitialLawSpec::Gaussian {
            mean: vec![1.0],
            cov: vec![vec![0.3]],
        };
        let s = Scenario::from_spec(spec).unwrap();
        let y = simulate_bundle(&s, 0, Measure::Reference)
            .unwrap()
            .observation;
        let run = kalman_run(&s, &y).unwrap();
        let dt = s.time_grid().dt();
        let (mut m, mut p) = (1.0, 0.3);
        for k in 0..s.time_grid().steps() {
            assert!((run.beliefs[k].mean[0] - m).abs() < 1e-12);
            assert!((run.beliefs[k].cov[(0, 0)] - p).abs() < 1e-12);
            assert_eq!(run.beliefs[k].log_mass, 0.0);
            m += -m * dt + 0.25 * dt;
            p += (-2.0 * p + 1.0) * dt;
            if let Some(j) = s.nu().jump_at(k + 1) {
                m += j[0];
            }
        }
    }

    #[test]
    fn jumps_move_mean_only() {
        let mut spec = ou_spec();
        spec.nu = NuSpec {
            jumps: vec![(0.3, vec![0.4]), (0.7, vec![-0.35])],
            continuous: vec![],
        };
        let s = Scenario::from_spec(spec).unwrap();
        let y = simulate_bundle(&s, 2, Measure::Physical)
            .unwrap()
            .observation;
        let id = kalman_jump_identity_check(&s, &y).unwrap();
        assert_eq!(id.jumps, 2);
        assert_eq!(id.max_cov_jump, 0.0);
        assert!(id.max_mean_jump_error < 1e-15);

        let mut spec = ou_spec();
        spec.nu = NuSpec::default();
        let s = Scenario::from_spec(spec).unwrap();
        let y = simulate_bundle(&s, 2, Measure::Physical)
            .unwrap()
            .observation;
        let run = kalman_run(&s, &y).unwrap();
        assert!(run.pre_jump.is_empty());
        let dt = s.time_grid().dt();
        let max_step = run
            .beliefs
            .windows(2)
            .map(|w| (w[1].mean[0] - w[0].mean[0]).abs())
            .fold(0.0, f64::max);
        assert!(max_step < 10.0 * dt.sqrt(), "{max_step}");
    }

    #[test]
    fn extra_jump_response_is_homogeneous() {
        let base = ou_spec();
        let mut shifted = ou_spec();
        shifted.fuel_k = 2.0;
        shifted.nu.jumps.push((0.3, vec![0.6]));
        let (s0, s1) = (
            Scenario::from_spec(base).unwrap(),
            Scenario::from_spec(shifted).unwrap(),
        );
        let y = simulate_bundle(&s0, 4, Measure::Physical)
            .unwrap()
            .observation;
        let (a, b) = (kalman_run(&s0, &y).unwrap(), kalman_run(&s1, &y).unwrap());
        let grid = s0.time_grid();
        let k0 = grid.index_of(0.3).unwrap();
        let dt = grid.dt();
        let mut eps = 0.6;
        for k in 0..=grid.steps() {
            let diff = b.beliefs[k].mean[0] - a.beliefs[k].mean[0];
            if k < k0 {
                assert_eq!(diff, 0.0);
                continue;
            }
            assert!((diff - eps).abs() <= dt, "step {k}: {diff} vs {eps}");
            if k < grid.steps() {
                eps += (-1.0 - a.gains[k][(0, 0)]) * eps * dt;
            }
        }
    }

    #[test]
    fn covariance_stays_psd_in_two_dimensions() {
        let mut spec = ou_spec();
        spec.dims = crate::scenario::Dims { m: 2, n: 1, d: 2 };
        spec.grid = None;
        spec.coeffs.b = DriftSpec::Linear {
            a: vec![vec![0.0, 1.0], vec![-2.0, -0.3]],
            c: None,
        };
        spec.coeffs.sigma = DiffusionSpec::Constant {
            matrix: vec![vec![0.0, 0.0], vec![0.0, 0.7]],
        };
        spec.coeffs.h = ObservationSpec::Linear {
            h: vec![vec![1.0, 0.0]],
            g: Some(vec![0.2]),
        };
        spec.xi = InitialLawSpec::Gaussian {
            mean: vec![0.0, 0.0],
            cov: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        };
        spec.nu = NuSpec {
            jumps: vec![(0.5, vec![0.3, -0.2])],
            continuous: vec![],
        };
        let s = Scenario::from_spec(spec).unwrap();
        let y = simulate_bundle(&s, 0, Measure::Physical)
            .unwrap()
            .observation;
        let run = kalman_run(&s, &y).unwrap();
        for b in &run.beliefs {
            assert_eq!(b.cov, b.cov.transpose());
            assert!(min_eigenvalue(&b.cov) >= -PSD_TOLERANCE);
        }
    }

    #[test]
    fn rejects_non_linear_models() {
        let mut spec = ou_spec();
        spec.coeffs.h = ObservationSpec::Tanh { scale: 1.0 };
        let s = Scenario::from_spec(spec).unwrap();
        let y = simulate_bundle(&s, 0, Measure::Reference)
            .unwrap()
            .observation;
        let err = kalman_run(&s, &y).unwrap_err();
        assert!(err.to_string().contains("oracle requires linear-Gaussian"));

        let mut spec = ou_spec();
        spec.xi = InitialLawSpec::Mixture {
            components: vec![
                MixtureComponent {
                    weight: 0.5,
                    mean: vec![-1.0],
                    cov: vec![vec![0.5]],
                },
                MixtureComponent {
                    weight: 0.5,
                    mean: vec![1.0],
                    cov: vec![vec![0.5]],
                },
            ],
        };
        let s = Scenario::from_spec(spec).unwrap();
        assert!(matches!(kalman_run(&s, &y), Err(Error::NotLinearGaussian)));
    }
}
