//! Invariant suites run by `bvfilter checks` and the refinement studies
//! behind them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixtures;
use crate::mollify::standard_suite;
use crate::scenario::{ObservationSpec, Scenario};
use crate::simulate::{simulate_bundle, MeanSe, Measure};
use crate::zakai::{mass_formula_check, run_zakai, MassFormulaReport};

/// One line of a suite report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub check: String,
    pub value: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub pass: bool,
}

impl CheckResult {
    pub fn within(
        check: impl Into<String>,
        value: f64,
        lower: Option<f64>,
        upper: Option<f64>,
    ) -> Self {
        let pass = value.is_finite()
            && lower.is_none_or(|l| value >= l)
            && upper.is_none_or(|u| value <= u);
        Self {
            check: check.into(),
            value,
            lower,
            upper,
            pass,
        }
    }

    pub fn at_most(check: impl Into<String>, value: f64, upper: f64) -> Self {
        Self::within(check, value, None, Some(upper))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Eta,
    Mass,
    Mollify,
    Convergence,
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eta" => Ok(Self::Eta),
            "mass" => Ok(Self::Mass),
            "mollify" => Ok(Self::Mollify),
            "convergence" => Ok(Self::Convergence),
            other => Err(Error::InvalidArgument(format!("unknown suite '{other}'"))),
        }
    }
}

pub fn run_suite(suite: Suite) -> Result<Vec<CheckResult>> {
    match suite {
        Suite::Eta => eta_suite(),
        Suite::Mass => mass_suite(),
        Suite::Mollify => mollify_suite(),
        Suite::Convergence => convergence_suite(),
    }
}

/// Terminal Girsanov densities `eta_T` of `paths` reference-measure replications.
pub fn eta_terminal(s: &Scenario, paths: usize) -> Result<Vec<f64>> {
    let steps = s.time_grid().steps();
    (0..paths as u64)
        .into_par_iter()
        .map(|r| Ok(simulate_bundle(s, r, Measure::Reference)?.log_eta[steps].exp()))
        .collect()
}

pub fn eta_suite() -> Result<Vec<CheckResult>> {
    let mut spec = fixtures::ou(100);
    spec.coeffs.h = ObservationSpec::Zero;
    let flat = eta_terminal(&Scenario::from_spec(spec)?, 200)?;
    let worst = flat.iter().map(|e| (e - 1.0).abs()).fold(0.0, f64::max);
    let mut out = vec![CheckResult::at_most("h = 0: max |eta_T - 1|", worst, 0.0)];

    let etas = eta_terminal(&Scenario::from_spec(fixtures::ou(100))?, 20_000)?;
    let est = MeanSe::from_samples(&etas);
    out.push(CheckResult::within(
        "ou: (mean eta_T - 1) / SE",
        (est.mean - 1.0) / est.se,
        Some(-3.0),
        Some(3.0),
    ));
    Ok(out)
}

/// Mass identity measured at `dt` and `dt / 2` on a shared observation path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassStudy {
    pub coarse: Vec<MassFormulaReport>,
    pub fine: Vec<MassFormulaReport>,
    pub mean_coarse: f64,
    pub mean_fine: f64,
    /// `mean_fine / mean_coarse` of the corrected discrepancy.
    pub ratio: f64,
    pub mean_coarse_left_point: f64,
    pub mean_fine_left_point: f64,
}

pub fn mass_study(s: &Scenario, replications: usize) -> Result<MassStudy> {
    let fine_s = s.with_steps(2 * s.time_grid().steps())?;
    let pairs: Vec<(MassFormulaReport, MassFormulaReport)> = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let y_fine = simulate_bundle(&fine_s, r, Measure::Physical)?.observation;
            let y = y_fine.coarsen(2)?;
            let coarse = mass_formula_check(&run_zakai(s, &y)?, &y, s)?;
            let fine = mass_formula_check(&run_zakai(&fine_s, &y_fine)?, &y_fine, &fine_s)?;
            Ok((coarse, fine))
        })
        .collect::<Result<_>>()?;
    let mean = |f: &dyn Fn(&(MassFormulaReport, MassFormulaReport)) -> f64| {
        pairs.iter().map(f).sum::<f64>() / pairs.len() as f64
    };
    let mean_coarse = mean(&|p| p.0.discrepancy_corrected);
    let mean_fine = mean(&|p| p.1.discrepancy_corrected);
    Ok(MassStudy {
        mean_coarse_left_point: mean(&|p| p.0.discrepancy),
        mean_fine_left_point: mean(&|p| p.1.discrepancy),
        coarse: pairs.iter().map(|p| p.0).collect(),
        fine: pairs.iter().map(|p| p.1).collect(),
        mean_coarse,
        mean_fine,
        ratio: mean_fine / mean_coarse,
    })
}

pub fn mass_suite() -> Result<Vec<CheckResult>> {
    let s = Scenario::from_spec(fixtures::linear_with_jumps(256, 1000))?;
    let study = mass_study(&s, 8)?;
    Ok(vec![
        CheckResult::within(
            "discrepancy ratio dt/2 : dt",
            study.ratio,
            Some(0.35),
            Some(0.65),
        ),
        CheckResult::at_most("discrepancy at dt/2", study.mean_fine, 0.05),
    ])
}

pub fn mollify_suite() -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for eps in [0.05, 0.2] {
        for c in standard_suite(eps)? {
            out.push(CheckResult {
                check: format!("eps = {eps}: {}", c.identity),
                value: c.abs_error,
                lower: None,
                upper: None,
                pass: c.pass,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Refinement {
    Time,
    Space,
}

/// Normalised terminal mean across successive halvings of `dt` or `dx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub refinement: Refinement,
    pub resolutions: Vec<f64>,
    /// Replication-averaged `|M_l - M_{l+1}|` (max over components).
    pub differences: Vec<f64>,
    /// `log2(d_l / d_{l+1})`.
    pub orders: Vec<f64>,
    /// Least-squares slope of `-log2 d_l` against `l`.
    pub fitted_order: f64,
}

/// `levels` grid or step halvings of `s` (at least 3), each compared on the
/// same observation paths.
pub fn convergence_study(
    s: &Scenario,
    refinement: Refinement,
    levels: usize,
    replications: usize,
) -> Result<ConvergenceStudy> {
    if levels < 3 {
        return Err(Error::InvalidArgument(
            "a convergence study needs at least three levels".into(),
        ));
    }
    let base_grid = s
        .spatial_grid()
        .ok_or_else(|| Error::InvalidScenario("convergence study needs a spatial grid".into()))?
        .clone();
    let scenarios: Vec<Scenario> = match refinement {
        Refinement::Time => (0..levels)
            .map(|l| s.with_steps(s.time_grid().steps() << l))
            .collect::<Result<_>>()?,
        Refinement::Space => {
            let mut grids = vec![base_grid];
            for _ in 1..levels {
                let next = grids.last().unwrap().halved();
                grids.push(next);
            }
            grids
                .iter()
                .map(|g| s.with_grid(g))
                .collect::<Result<_>>()?
        }
    };
    let resolutions = scenarios
        .iter()
        .map(|sc| match refinement {
            Refinement::Time => sc.time_grid().dt(),
            Refinement::Space => sc.spatial_grid().map_or(f64::NAN, |g| g.spacing(0)),
        })
        .collect();
    let finest = scenarios.last().unwrap();
    let per_rep: Vec<Vec<f64>> = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let y_finest = simulate_bundle(finest, r, Measure::Physical)?.observation;
            let means: Vec<Vec<f64>> = scenarios
                .iter()
                .map(|sc| {
                    let y = match refinement {
                        Refinement::Time => {
                            y_finest.coarsen(finest.time_grid().steps() / sc.time_grid().steps())?
                        }
                        Refinement::Space => y_finest.clone(),
                    };
                    Ok(run_zakai(sc, &y)?.mean.last().cloned().unwrap_or_default())
                })
                .collect::<Result<_>>()?;
            Ok(means
                .windows(2)
                .map(|w| {
                    w[0].iter()
                        .zip(&w[1])
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max)
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let differences: Vec<f64> = (0..levels - 1)
        .map(|l| per_rep.iter().map(|d| d[l]).sum::<f64>() / per_rep.len() as f64)
        .collect();
    let orders = differences
        .windows(2)
        .map(|w| (w[0] / w[1]).log2())
        .collect();
    let fitted_order = fitted_order(&differences);
    Ok(ConvergenceStudy {
        refinement,
        resolutions,
        differences,
        orders,
        fitted_order,
    })
}

fn fitted_order(differences: &[f64]) -> f64 {
    let n = differences.len() as f64;
    let xbar = (n - 1.0) / 2.0;
    let ys: Vec<f64> = differences.iter().map(|d| -d.log2()).collect();
    let ybar = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - xbar;
        sxy += dx * (y - ybar);
        sxx += dx * dx;
    }
    sxy / sxx
}

pub fn convergence_suite() -> Result<Vec<CheckResult>> {
    let s = Scenario::from_spec(fixtures::nonlinear_with_jumps(121, 200))?;
    let time = convergence_study(&s, Refinement::Time, 5, 64)?;
    Ok(vec![CheckResult::within(
        "dt order of the terminal mean",
        time.fitted_order,
        Some(0.7),
        Some(1.3),
    )])
}
