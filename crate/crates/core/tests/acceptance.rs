//! Acceptance criteria 1-9. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::time::{Duration, Instant};

use bvfilter::checks::{convergence_study, eta_terminal, mass_study, mollify_suite, Refinement};
use bvfilter::fixtures;
use bvfilter::grid::{Axis, DensityField, SpatialGrid};
use bvfilter::oracle::kalman_run;
use bvfilter::particle::{run_particle, ParticleOptions};
use bvfilter::scenario::{ObservationSpec, Scenario, ScenarioSpec};
use bvfilter::simulate::{simulate_bundle, MeanSe, Measure, ObservationPath};
use bvfilter::zakai::{jump_reset, FilterRun, RunOptions, ZakaiSolver};

const C1_PATHS: usize = 100_000;
const C1_SE_BAND: f64 = 3.0;
const C1_BUDGET: Duration = Duration::from_secs(60);

const C2_NODES: usize = 1024;
const C2_STEPS: usize = 10_000;
const C2_MEAN_TOL: f64 = 0.01;
const C2_VAR_TOL: f64 = 0.02;
const C2_BUDGET: Duration = Duration::from_secs(120);

const C3_STEPS: usize = 1_000;
const C3_PARTICLES: usize = 100_000;
const C3_SEEDS: u64 = 20;
const C3_MEAN_TOL: f64 = 0.02;
const C3_REQUIRED: usize = 18;
const C3_BUDGET: Duration = Duration::from_secs(180);

const C4_STEPS: usize = 10_000;
const C4_REPLICATIONS: usize = 4;
const C4_RATIO: (f64, f64) = (0.35, 0.65);
const C4_MAX_DISCREPANCY: f64 = 0.05;

const C5_MASS_TOL: f64 = 1e-8;

const C7_NODEWISE_TOL: f64 = 1e-12;
const C7_MASS_TOL: f64 = 1e-6;

const C8_TIME_ORDER: f64 = 0.7;
const C8_SPACE_ORDER: f64 = 1.7;
const C8_LEVELS: usize = 5;
const C8_TIME_REPLICATIONS: usize = 64;
const C8_SPACE_REPLICATIONS: usize = 8;

const C9_TOL: f64 = 1e-12;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn scenario(spec: ScenarioSpec) -> Scenario {
    Scenario::from_spec(spec).expect("fixture builds")
}

fn observation(s: &Scenario, replication: u64) -> ObservationPath {
    simulate_bundle(s, replication, Measure::Physical)
        .expect("simulation runs")
        .observation
}

fn sup_diff(a: impl IntoIterator<Item = f64>, b: impl IntoIterator<Item = f64>) -> f64 {
    a.into_iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Sup-norm distance between a KS run and the normalised Zakai run.
fn ks_gap(z: &FilterRun, ks: &FilterRun) -> f64 {
    let means = sup_diff(
        z.mean.iter().flatten().copied(),
        ks.mean.iter().flatten().copied(),
    );
    let covs = sup_diff(
        z.cov.iter().flat_map(|c| c.iter().copied()),
        ks.cov.iter().flat_map(|c| c.iter().copied()),
    );
    let density = sup_diff(
        z.final_density.normalized().values,
        ks.final_density.values.iter().copied(),
    );
    means.max(covs).max(density)
}

fn c1() -> Outcome {
    let s = scenario(fixtures::ou(1000));
    let start = Instant::now();
    let etas = eta_terminal(&s, C1_PATHS).expect("eta paths");
    let elapsed = start.elapsed();
    let est = MeanSe::from_samples(&etas);
    let z = (est.mean - 1.0) / est.se;
    outcome(
        est.within(1.0, C1_SE_BAND) && elapsed <= C1_BUDGET,
        format!(
            "mean eta_T = {:.5} (SE {:.5}, z = {z:.2}, band {C1_SE_BAND}), {C1_PATHS} paths in {:.1}s (budget {}s)",
            est.mean,
            est.se,
            elapsed.as_secs_f64(),
            C1_BUDGET.as_secs()
        ),
    )
}

fn c2(ks_gaps: &mut Vec<(String, f64)>) -> Outcome {
    let s = scenario(fixtures::linear_with_jumps(C2_NODES, C2_STEPS));
    let y = observation(&s, 0);
    let start = Instant::now();
    let solver = ZakaiSolver::new(&s).expect("solver");
    let z = solver
        .run_zakai(&y, RunOptions::default())
        .expect("zakai run");
    let kf = kalman_run(&s, &y).expect("kalman run");
    let elapsed = start.elapsed();
    let mean_err = sup_diff(
        z.mean.iter().map(|m| m[0]),
        kf.beliefs.iter().map(|b| b.mean[0]),
    );
    let var_err = sup_diff(
        z.cov.iter().map(|c| c[(0, 0)]),
        kf.beliefs.iter().map(|b| b.cov[(0, 0)]),
    );
    let ks = solver.run_ks(&y, RunOptions::default()).expect("ks run");
    ks_gaps.push(("linear_with_jumps dt=1e-4".into(), ks_gap(&z, &ks)));
    outcome(
        mean_err <= C2_MEAN_TOL && var_err <= C2_VAR_TOL && elapsed <= C2_BUDGET,
        format!(
            "sup mean error {mean_err:.2e} (tol {C2_MEAN_TOL}), sup variance error {var_err:.2e} (tol {C2_VAR_TOL}), {:.1}s (budget {}s)",
            elapsed.as_secs_f64(),
            C2_BUDGET.as_secs()
        ),
    )
}

fn c3() -> Outcome {
    let s = scenario(fixtures::linear_with_jumps(C2_NODES, C3_STEPS));
    let start = Instant::now();
    let errors: Vec<f64> = (0..C3_SEEDS)
        .map(|r| {
            let y = observation(&s, r);
            let mut opts = ParticleOptions::new(C3_PARTICLES, s.seed());
            opts.replication = r;
            let pf = run_particle(&s, &y, opts).expect("particle run");
            let kf = kalman_run(&s, &y).expect("kalman run");
            let total: f64 = pf
                .estimates
                .iter()
                .zip(&kf.beliefs)
                .map(|(e, b)| (e.mean[0] - b.mean[0]).abs())
                .sum();
            total / pf.estimates.len() as f64
        })
        .collect();
    let elapsed = start.elapsed();
    let good = errors.iter().filter(|&&e| e <= C3_MEAN_TOL).count();
    let worst = errors.iter().copied().fold(0.0, f64::max);
    outcome(
        good >= C3_REQUIRED && elapsed <= C3_BUDGET,
        format!(
            "{good}/{C3_SEEDS} seeds with time-averaged mean error <= {C3_MEAN_TOL} (need {C3_REQUIRED}, worst {worst:.2e}), N = {C3_PARTICLES}, dt = {}, {:.1}s (budget {}s)",
            s.time_grid().dt(),
            elapsed.as_secs_f64(),
            C3_BUDGET.as_secs()
        ),
    )
}

fn c4(ks_gaps: &mut Vec<(String, f64)>) -> Outcome {
    let s = scenario(fixtures::linear_with_jumps(C2_NODES, C4_STEPS));
    let study = mass_study(&s, C4_REPLICATIONS).expect("mass study");
    let fine = s.with_steps(2 * C4_STEPS).expect("fine scenario");
    let y = observation(&fine, 0);
    let solver = ZakaiSolver::new(&fine).expect("solver");
    let z = solver
        .run_zakai(&y, RunOptions::default())
        .expect("zakai run");
    let ks = solver.run_ks(&y, RunOptions::default()).expect("ks run");
    ks_gaps.push(("linear_with_jumps dt=5e-5".into(), ks_gap(&z, &ks)));
    let pass = (C4_RATIO.0..=C4_RATIO.1).contains(&study.ratio)
        && study.mean_coarse <= C4_MAX_DISCREPANCY
        && study.mean_fine <= C4_MAX_DISCREPANCY;
    outcome(
        pass,
        format!(
            "discrepancy {:.3e} at dt, {:.3e} at dt/2, ratio {:.3} (band [{}, {}]); left-point rule ratio {:.3}",
            study.mean_coarse,
            study.mean_fine,
            study.ratio,
            C4_RATIO.0,
            C4_RATIO.1,
            study.mean_fine_left_point / study.mean_coarse_left_point
        ),
    )
}

fn gaussian_density(grid: SpatialGrid, mean: &[f64], var: f64) -> DensityField {
    DensityField::from_fn(grid, 0.0, |x| {
        let r2: f64 = x.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
        (-r2 / (2.0 * var)).exp()
    })
}

fn c5() -> Outcome {
    let grid = SpatialGrid::uniform_1d(-10.0, 10.0, 1024).expect("grid");
    let dx = grid.spacing(0);
    let p = gaussian_density(grid.clone(), &[0.2], 0.5);

    let cells = 7;
    let aligned = jump_reset(&p, &[cells as f64 * dx]);
    let mut bitwise = aligned.values[..cells].iter().all(|&v| v == 0.0)
        && aligned.values[cells..]
            .iter()
            .zip(&p.values)
            .all(|(a, b)| a.to_bits() == b.to_bits());

    let grid2 = SpatialGrid::new(vec![
        Axis {
            lower: -4.0,
            upper: 4.0,
            nodes: 81,
        },
        Axis {
            lower: -3.0,
            upper: 3.0,
            nodes: 61,
        },
    ])
    .expect("grid");
    let p2 = gaussian_density(grid2.clone(), &[0.3, -0.2], 0.4);
    let shifted2 = jump_reset(&p2, &[-2.0 * grid2.spacing(0), 3.0 * grid2.spacing(1)]);
    let (nx, ny) = (81usize, 61usize);
    for i in 0..nx {
        for j in 0..ny {
            let v = shifted2.values[i * ny + j];
            let expected = match (i.checked_add(2).filter(|&s| s < nx), j.checked_sub(3)) {
                (Some(si), Some(sj)) => p2.values[si * ny + sj],
                _ => 0.0,
            };
            bitwise &= v.to_bits() == expected.to_bits();
        }
    }

    let shift = 0.3217;
    let moved = jump_reset(&p, &[shift]);
    let (before, after) = (p.moments(), moved.moments());
    let mass_change = (after.mass - before.mass).abs() / before.mass;
    let mean_err = (after.mean[0] - before.mean[0] - shift).abs();
    let cov_change = (after.cov[(0, 0)] - before.cov[(0, 0)]).abs();
    let pass = bitwise && mass_change <= C5_MASS_TOL && mean_err <= dx && cov_change <= dx * dx;
    outcome(
        pass,
        format!(
            "aligned shifts bitwise (1-D and 2-D): {bitwise}; shift {shift}: relative mass change {mass_change:.1e} (tol {C5_MASS_TOL:e}), mean error {mean_err:.1e} (tol dx = {dx:.2e}), covariance change {cov_change:.1e} (tol dx^2 = {:.2e})",
            dx * dx
        ),
    )
}

fn c6() -> Outcome {
    let checks = mollify_suite().expect("mollify suite");
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.check.clone())
        .collect();
    let worst = checks.iter().map(|c| c.value).fold(0.0, f64::max);
    outcome(
        failed.is_empty(),
        format!(
            "{}/{} identity checks pass on dirac, gaussian and sine fixtures (largest error {worst:.1e}){}",
            checks.len() - failed.len(),
            checks.len(),
            if failed.is_empty() { String::new() } else { format!("; failed: {}", failed.join(", ")) }
        ),
    )
}

fn c7(ks_gaps: &mut Vec<(String, f64)>) -> Outcome {
    let mut spec = fixtures::linear_with_jumps(401, 1000);
    spec.coeffs.h = ObservationSpec::Zero;
    let s = scenario(spec);
    let y = simulate_bundle(&s, 0, Measure::Reference)
        .expect("simulation")
        .observation;
    let solver = ZakaiSolver::new(&s).expect("solver");
    let every = RunOptions {
        snapshot_every: Some(50),
        skip_observation: false,
    };
    let z = solver.run_zakai(&y, every).expect("zakai run");
    let fp = solver
        .run_zakai(
            &y,
            RunOptions {
                skip_observation: true,
                ..every
            },
        )
        .expect("fokker-planck run");
    let nodewise = z
        .snapshots
        .iter()
        .zip(&fp.snapshots)
        .map(|((_, a), (_, b))| sup_diff(a.values.iter().copied(), b.values.iter().copied()))
        .fold(0.0, f64::max);
    let mass_err = z
        .log_mass
        .iter()
        .map(|l| (l.exp() - 1.0).abs())
        .fold(0.0, f64::max);

    let pf = run_particle(&s, &y, ParticleOptions::new(2_000, s.seed())).expect("particle run");
    let constant = pf
        .estimates
        .iter()
        .all(|e| e.log_mass == 0.0 && e.ess == 2_000.0)
        && pf.resampled == 0;

    let ks = solver.run_ks(&y, RunOptions::default()).expect("ks run");
    ks_gaps.push(("unobserved".into(), ks_gap(&z, &ks)));
    outcome(
        nodewise <= C7_NODEWISE_TOL && mass_err <= C7_MASS_TOL && constant,
        format!(
            "nodewise gap to Fokker-Planck + transport {nodewise:.1e} (tol {C7_NODEWISE_TOL:e}), max |rho_t(1) - 1| {mass_err:.1e} (tol {C7_MASS_TOL:e}), particle weights constant: {constant}"
        ),
    )
}

fn c8(ks_gaps: &mut Vec<(String, f64)>) -> Outcome {
    let time_base = scenario(fixtures::nonlinear_with_jumps(121, 200));
    let time = convergence_study(
        &time_base,
        Refinement::Time,
        C8_LEVELS,
        C8_TIME_REPLICATIONS,
    )
    .expect("time study");
    let space_base = scenario(fixtures::nonlinear_with_jumps(61, 8000));
    let space = convergence_study(
        &space_base,
        Refinement::Space,
        C8_LEVELS,
        C8_SPACE_REPLICATIONS,
    )
    .expect("space study");

    let s = scenario(fixtures::nonlinear_with_jumps(241, 2000));
    let y = observation(&s, 0);
    let solver = ZakaiSolver::new(&s).expect("solver");
    let z = solver
        .run_zakai(&y, RunOptions::default())
        .expect("zakai run");
    let ks = solver.run_ks(&y, RunOptions::default()).expect("ks run");
    ks_gaps.push(("nonlinear_with_jumps".into(), ks_gap(&z, &ks)));

    let fmt = |v: &[f64]| {
        v.iter()
            .map(|o| format!("{o:.2}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    outcome(
        time.fitted_order >= C8_TIME_ORDER && space.fitted_order >= C8_SPACE_ORDER,
        format!(
            "fitted dt order {:.2} (need {C8_TIME_ORDER}; per level {}), fitted dx order {:.2} (need {C8_SPACE_ORDER}; per level {})",
            time.fitted_order,
            fmt(&time.orders),
            space.fitted_order,
            fmt(&space.orders)
        ),
    )
}

fn c9(ks_gaps: &[(String, f64)]) -> Outcome {
    let worst = ks_gaps.iter().map(|(_, g)| *g).fold(0.0, f64::max);
    let listed = ks_gaps
        .iter()
        .map(|(name, g)| format!("{name} {g:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(
        ks_gaps.len() == 4 && worst <= C9_TOL,
        format!("sup-norm gap per scenario: {listed} (tol {C9_TOL:e})"),
    )
}

fn main() {
    let mut ks_gaps = Vec::new();
    let mut all_pass = true;
    let mut report = |n: usize, name: &str, run: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = run();
        all_pass &= o.pass;
        println!(
            "criterion {n} {}: {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    };
    report(1, "Girsanov density is a martingale", &mut c1);
    report(2, "grid filter agrees with the Kalman oracle", &mut || {
        c2(&mut ks_gaps)
    });
    report(3, "particle filter agrees with the Kalman oracle", &mut c3);
    report(4, "mass identity converges at order 1", &mut || {
        c4(&mut ks_gaps)
    });
    report(5, "jump reset translates the density", &mut c5);
    report(6, "heat-kernel mollifier identities", &mut c6);
    report(7, "degenerate observation", &mut || c7(&mut ks_gaps));
    report(8, "self-convergence in dt and dx", &mut || c8(&mut ks_gaps));
    report(
        9,
        "normalised equation equals normalised unnormalised run",
        &mut || c9(&ks_gaps),
    );
    if !all_pass {
        std::process::exit(1);
    }
}
