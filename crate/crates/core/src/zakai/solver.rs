//! Operator-splitting solver for the unnormalised filter density.
//!
//! One time cell `[t_k, t_{k+1}]` is advanced in three sub-steps:
//!
//! 1. explicit Fokker-Planck step `p += dt A*_t p` (negatives clipped),
//! 2. transport `p(x) <- p(x - dnu^c)` by linear interpolation,
//! 3. exponential observation update
//!    `p(x) *= exp(u(x) . gamma^{-1} dY - |u(x)|^2 dt / 2)`, `u = gamma^{-1} h`.
//!
//! Jumps of the input process act as translations `p(x) <- p(x - dnu)`
//! between cells. The normalised variant divides by the mass after every
//! cell and after every jump.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{DensityField, Quadrature, SpatialGrid};
use crate::scenario::{validate_scenario, Scenario};
use crate::simulate::ObservationPath;

use super::stencil::GeneratorStencil;

/// Shifts closer than this (in grid cells) to an integer are exact index shifts.
const ALIGN_TOL: f64 = 1e-9;

/// Mass below which the normalised filter is declared collapsed.
pub const COLLAPSE_MASS: f64 = 1e-300;

/// Shift one line of values by `cells` grid cells: `out[j] = in(j - cells)`.
fn shift_line(src: &[f64], cells: f64, dst: &mut [f64]) {
    let n = src.len() as isize;
    let r = cells.round();
    if (cells - r).abs() <= ALIGN_TOL {
        let r = r as isize;
        for (j, d) in dst.iter_mut().enumerate() {
            let from = j as isize - r;
            *d = if (0..n).contains(&from) {
                src[from as usize]
            } else {
                0.0
            };
        }
        return;
    }
    let base = cells.floor();
    let theta = cells - base;
    let base = base as isize;
    let get = |i: isize| {
        if (0..n).contains(&i) {
            src[i as usize]
        } else {
            0.0
        }
    };
    for (j, d) in dst.iter_mut().enumerate() {
        let i = j as isize - base;
        *d = (1.0 - theta) * get(i) + theta * get(i - 1);
    }
}

/// `values(x) <- values(x - shift)` with multilinear interpolation and zero
/// outside the grid. A zero shift leaves the values untouched.
pub fn shift_values(grid: &SpatialGrid, values: &mut [f64], shift: &[f64]) {
    let mut line_in = Vec::new();
    let mut line_out = Vec::new();
    for (axis, &s) in shift.iter().enumerate() {
        if s == 0.0 {
            continue;
        }
        let cells = s / grid.spacing(axis);
        let n = grid.axis(axis).nodes;
        let stride = grid.stride(axis);
        line_in.resize(n, 0.0);
        line_out.resize(n, 0.0);
        for start in 0..values.len() {
            if grid.multi_index(start)[axis] != 0 {
                continue;
            }
            for i in 0..n {
                line_in[i] = values[start + i * stride];
            }
            shift_line(&line_in, cells, &mut line_out);
            for i in 0..n {
                values[start + i * stride] = line_out[i];
            }
        }
    }
}

/// Translate a density by a jump: `p_new(x) = p_old(x - dnu)`.
pub fn jump_reset(p: &DensityField, dnu: &[f64]) -> DensityField {
    let mut out = p.clone();
    shift_values(&out.grid, &mut out.values, dnu);
    out
}

/// Options for a full run.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Keep a copy of the density every this many steps (plus the final one).
    pub snapshot_every: Option<usize>,
    /// Skip the observation sub-step (pure Fokker-Planck + transport evolution).
    pub skip_observation: bool,
}

/// Time series recorded by a grid run.
#[derive(Debug, Clone)]
pub struct FilterRun {
    pub times: Vec<f64>,
    /// `log rho_t(1)`.
    pub log_mass: Vec<f64>,
    /// Normalised mean `pi_t(x)`.
    pub mean: Vec<Vec<f64>>,
    /// Normalised covariance `pi_t(x x^T) - pi_t(x) pi_t(x)^T`.
    pub cov: Vec<DMatrix<f64>>,
    /// `pi_t(h_t)`.
    pub pi_h: Vec<Vec<f64>>,
    /// `pi_t(h h^T) - pi_t(h) pi_t(h)^T`.
    pub h_cov: Vec<DMatrix<f64>>,
    pub snapshots: Vec<(usize, DensityField)>,
    pub final_density: DensityField,
}

/// Grid solver bound to one scenario and spatial grid.
#[derive(Debug, Clone)]
pub struct ZakaiSolver<'a> {
    scenario: &'a Scenario,
    grid: SpatialGrid,
    quad: Quadrature,
    stencil: GeneratorStencil,
    h_nodes: Vec<f64>,
    observation_zero: bool,
}

impl<'a> ZakaiSolver<'a> {
    /// Solver on the scenario's own spatial grid.
    pub fn new(s: &'a Scenario) -> Result<Self> {
        let grid = s
            .spatial_grid()
            .cloned()
            .ok_or_else(|| Error::InvalidScenario("grid solver needs a spatial grid".into()))?;
        Self::with_grid(s, grid)
    }

    pub fn with_grid(s: &'a Scenario, grid: SpatialGrid) -> Result<Self> {
        validate_scenario(s).into_grid_result()?;
        if grid.dim() != s.m() {
            return Err(Error::GridMismatch(format!(
                "grid has {} axes, signal has {}",
                grid.dim(),
                s.m()
            )));
        }
        let dt = s.time_grid().dt();
        let mut ratio = 0.0f64;
        let m = s.m();
        for i in 0..m {
            let h = grid.spacing(i);
            let mut max_a = 0.0f64;
            for k in 0..grid.len() {
                max_a = max_a.max(s.diffusion(0.0, &grid.point(k)[..m])[(i, i)].abs());
            }
            ratio += max_a * dt / (h * h);
        }
        if ratio > 0.5 {
            return Err(Error::Cfl { ratio });
        }
        let stencil = GeneratorStencil::build(s, &grid, 0.0);
        let n = s.n();
        let mut h_nodes = vec![0.0; grid.len() * n];
        for k in 0..grid.len() {
            s.observation(0.0, &grid.point(k)[..m], &mut h_nodes[k * n..(k + 1) * n]);
        }
        Ok(Self {
            scenario: s,
            quad: Quadrature::new(&grid),
            grid,
            stencil,
            h_nodes,
            observation_zero: s.observation_is_zero(),
        })
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    /// Initial law on the grid at unit mass, with the jump at `t = 0` applied.
    pub fn initial_density(&self) -> Result<DensityField> {
        let mut p = self.scenario.initial_density(&self.grid)?;
        let mass = self.quad.integrate(&p.values);
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::UnsupportedInitialLaw(
                "initial law has no mass on the grid".into(),
            ));
        }
        for v in &mut p.values {
            *v /= mass;
        }
        if let Some(j) = self.scenario.nu().initial_jump() {
            shift_values(&self.grid, &mut p.values, j);
        }
        Ok(p)
    }

    fn check(values: &[f64], step: usize, what: &str) -> Result<()> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                step,
                what: what.into(),
            });
        }
        Ok(())
    }

    fn step_in_place(
        &self,
        p: &mut Vec<f64>,
        scratch: &mut Vec<f64>,
        k: usize,
        dy: &[f64],
        dnu_c: &[f64],
        skip_observation: bool,
    ) -> Result<()> {
        let dt = self.scenario.time_grid().dt();
        scratch.resize(p.len(), 0.0);
        self.stencil.explicit_step(p, dt, scratch);
        std::mem::swap(p, scratch);
        for v in p.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        Self::check(p, k, "fokker-planck")?;

        shift_values(&self.grid, p, dnu_c);
        Self::check(p, k, "transport")?;

        if !(skip_observation || self.observation_zero) {
            let n = self.scenario.n();
            let g_inv = self.scenario.gamma_inv_at(k)?;
            let dbbar: Vec<f64> = (0..n)
                .map(|l| (0..n).map(|j| g_inv[(l, j)] * dy[j]).sum())
                .collect();
            let mut u = vec![0.0; n];
            for (node, v) in p.iter_mut().enumerate() {
                let h = &self.h_nodes[node * n..(node + 1) * n];
                for l in 0..n {
                    u[l] = (0..n).map(|j| g_inv[(l, j)] * h[j]).sum();
                }
                let drive: f64 = u.iter().zip(&dbbar).map(|(a, b)| a * b).sum();
                let norm2: f64 = u.iter().map(|a| a * a).sum();
                *v *= (drive - 0.5 * norm2 * dt).exp();
            }
            Self::check(p, k, "observation")?;
        }
        Ok(())
    }

    /// Advance over cell `k` (no jump inside the cell).
    pub fn zakai_step(
        &self,
        p: &DensityField,
        k: usize,
        dy: &[f64],
        dnu_c: &[f64],
    ) -> Result<DensityField> {
        if p.grid != self.grid {
            return Err(Error::GridMismatch(
                "density lives on a different grid".into(),
            ));
        }
        let mut values = p.values.clone();
        let mut scratch = Vec::new();
        self.step_in_place(&mut values, &mut scratch, k, dy, dnu_c, false)?;
        Ok(DensityField {
            grid: self.grid.clone(),
            values,
            time: self.scenario.time_grid().node(k + 1),
        })
    }

    fn record(&self, run: &mut FilterRun, values: &[f64], t: f64, log_scale: f64) -> Result<()> {
        let mom = self.quad.moments(values);
        if !(mom.mass > 0.0 && mom.mass.is_finite()) {
            return Err(Error::FilterCollapse);
        }
        let n = self.scenario.n();
        let mut pi_h = vec![0.0; n];
        let mut second = DMatrix::<f64>::zeros(n, n);
        for (node, (&v, &w)) in values.iter().zip(&self.quad.weights).enumerate() {
            let vw = v * w;
            if vw == 0.0 {
                continue;
            }
            let h = &self.h_nodes[node * n..(node + 1) * n];
            for l in 0..n {
                pi_h[l] += vw * h[l];
                for j in 0..n {
                    second[(l, j)] += vw * h[l] * h[j];
                }
            }
        }
        for v in &mut pi_h {
            *v /= mom.mass;
        }
        let h_cov = DMatrix::from_fn(n, n, |l, j| second[(l, j)] / mom.mass - pi_h[l] * pi_h[j]);
        run.times.push(t);
        run.log_mass.push(log_scale + mom.mass.ln());
        run.mean.push(mom.mean);
        run.cov.push(mom.cov);
        run.pi_h.push(pi_h);
        run.h_cov.push(h_cov);
        Ok(())
    }

    fn run(&self, y: &ObservationPath, opts: RunOptions, normalize: bool) -> Result<FilterRun> {
        y.check_grid(self.scenario)?;
        let tg = self.scenario.time_grid();
        let nu = self.scenario.nu();
        let steps = tg.steps();
        let mut p = self.initial_density()?;
        let mut values = std::mem::take(&mut p.values);
        let mut scratch = Vec::with_capacity(values.len());
        let mut log_scale = 0.0;
        let mut run = FilterRun {
            times: Vec::with_capacity(steps + 1),
            log_mass: Vec::with_capacity(steps + 1),
            mean: Vec::with_capacity(steps + 1),
            cov: Vec::with_capacity(steps + 1),
            pi_h: Vec::with_capacity(steps + 1),
            h_cov: Vec::with_capacity(steps + 1),
            snapshots: Vec::new(),
            final_density: p.clone(),
        };

        let normalize_now = |values: &mut [f64], log_scale: &mut f64| -> Result<()> {
            let mass = self.quad.integrate(values);
            if !(mass >= COLLAPSE_MASS && mass.is_finite()) {
                return Err(Error::FilterCollapse);
            }
            for v in values.iter_mut() {
                *v /= mass;
            }
            *log_scale += mass.ln();
            Ok(())
        };

        if normalize {
            normalize_now(&mut values, &mut log_scale)?;
        }
        self.record(&mut run, &values, 0.0, log_scale)?;
        let snap = |k: usize| opts.snapshot_every.is_some_and(|e| e > 0 && k.is_multiple_of(e));
        if snap(0) {
            run.snapshots.push((
                0,
                DensityField {
                    grid: self.grid.clone(),
                    values: values.clone(),
                    time: 0.0,
                },
            ));
        }

        for k in 0..steps {
            let dy = y.increment(k);
            self.step_in_place(
                &mut values,
                &mut scratch,
                k,
                &dy,
                nu.continuous_increment(k),
                opts.skip_observation,
            )?;
            if normalize {
                normalize_now(&mut values, &mut log_scale)?;
            }
            if let Some(j) = nu.jump_at(k + 1) {
                shift_values(&self.grid, &mut values, j);
                if normalize {
                    normalize_now(&mut values, &mut log_scale)?;
                }
            }
            let t = tg.node(k + 1);
            self.record(&mut run, &values, t, log_scale)?;
            if snap(k + 1) {
                run.snapshots.push((
                    k + 1,
                    DensityField {
                        grid: self.grid.clone(),
                        values: values.clone(),
                        time: t,
                    },
                ));
            }
        }
        run.final_density = DensityField {
            grid: self.grid.clone(),
            values,
            time: tg.horizon(),
        };
        Ok(run)
    }

    /// Unnormalised (Zakai) run over the whole horizon.
    pub fn run_zakai(&self, y: &ObservationPath, opts: RunOptions) -> Result<FilterRun> {
        self.run(y, opts, false)
    }

    /// Normalised (Kushner-Stratonovich) run: same sub-steps, mass divided
    /// out after every cell and every jump.
    pub fn run_ks(&self, y: &ObservationPath, opts: RunOptions) -> Result<FilterRun> {
        self.run(y, opts, true)
    }
}

/// Convenience wrapper on the scenario's own grid.
pub fn run_zakai(s: &Scenario, y: &ObservationPath) -> Result<FilterRun> {
    ZakaiSolver::new(s)?.run_zakai(y, RunOptions::default())
}

/// Convenience wrapper on the scenario's own grid.
pub fn run_ks(s: &Scenario, y: &ObservationPath) -> Result<FilterRun> {
    ZakaiSolver::new(s)?.run_ks(y, RunOptions::default())
}
