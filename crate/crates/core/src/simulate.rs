//! Euler-Maruyama sampling of the signal, the observation under both
//! measures, and the Girsanov density along a path.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{purpose, RngStream};
use crate::scenario::Scenario;

/// Signal path on the time grid: post-jump values `X_{t_k}`, pre-jump
/// values `X_{t_k-}` and the Brownian increments that drove it.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalPath {
    pub m: usize,
    pub d: usize,
    pub x: Vec<f64>,
    pub x_pre: Vec<f64>,
    pub dw: Vec<f64>,
}

impl SignalPath {
    pub fn len(&self) -> usize {
        self.x.len() / self.m
    }
    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
    pub fn at(&self, k: usize) -> &[f64] {
        &self.x[k * self.m..(k + 1) * self.m]
    }
    pub fn pre(&self, k: usize) -> &[f64] {
        &self.x_pre[k * self.m..(k + 1) * self.m]
    }
}

/// Observation path `Y_{t_k}`, `k = 0..=steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationPath {
    pub n: usize,
    pub dt: f64,
    pub y: Vec<f64>,
}

impl ObservationPath {
    pub fn new(n: usize, dt: f64, y: Vec<f64>) -> Result<Self> {
        if n == 0 || !y.len().is_multiple_of(n) || y.len() < 2 * n {
            return Err(Error::InvalidArgument(
                "observation path needs at least two nodes".into(),
            ));
        }
        Ok(Self { n, dt, y })
    }

    pub fn steps(&self) -> usize {
        self.y.len() / self.n - 1
    }

    pub fn at(&self, k: usize) -> &[f64] {
        &self.y[k * self.n..(k + 1) * self.n]
    }

    /// `Y_{t_{k+1}} - Y_{t_k}`.
    pub fn increment(&self, k: usize) -> Vec<f64> {
        (0..self.n)
            .map(|l| self.y[(k + 1) * self.n + l] - self.y[k * self.n + l])
            .collect()
    }

    /// Keep every `factor`-th node.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.steps().is_multiple_of(factor) {
            return Err(Error::GridMismatch(format!(
                "cannot coarsen {} steps by a factor {factor}",
                self.steps()
            )));
        }
        let y = (0..=self.steps() / factor)
            .flat_map(|k| self.at(k * factor).to_vec())
            .collect();
        Ok(Self {
            n: self.n,
            dt: self.dt * factor as f64,
            y,
        })
    }

    pub(crate) fn check_grid(&self, s: &Scenario) -> Result<()> {
        let steps = s.time_grid().steps();
        if self.n != s.n()
            || self.steps() != steps
            || (self.dt - s.time_grid().dt()).abs() > 1e-12 * self.dt
        {
            return Err(Error::GridMismatch(format!(
                "observation path has {} steps of size {} (n = {}), scenario expects {steps} steps of size {} (n = {})",
                self.steps(),
                self.dt,
                self.n,
                s.time_grid().dt(),
                s.n()
            )));
        }
        Ok(())
    }
}

/// Euler-Maruyama path of the signal with the bounded-variation input
/// applied at grid nodes.
pub fn simulate_signal<R: Rng + ?Sized>(s: &Scenario, rng: &mut R) -> Result<SignalPath> {
    let (m, d) = (s.m(), s.d());
    let grid = s.time_grid();
    let (steps, dt) = (grid.steps(), grid.dt());
    let sqrt_dt = dt.sqrt();
    let nu = s.nu();

    let mut x = vec![0.0; (steps + 1) * m];
    let mut x_pre = vec![0.0; (steps + 1) * m];
    let mut dw = vec![0.0; steps * d];

    s.sample_initial(rng, &mut x_pre[..m])?;
    x[..m].copy_from_slice(&x_pre[..m]);
    if let Some(j) = nu.initial_jump() {
        for i in 0..m {
            x[i] += j[i];
        }
    }

    let mut drift = vec![0.0; m];
    for k in 0..steps {
        let t = grid.node(k);
        let noise = &mut dw[k * d..(k + 1) * d];
        for v in noise.iter_mut() {
            *v = sqrt_dt * rng.sample::<f64, _>(StandardNormal);
        }
        let (head, tail) = x.split_at_mut((k + 1) * m);
        let xk = &head[k * m..];
        s.drift(t, xk, &mut drift);
        let next_pre = &mut x_pre[(k + 1) * m..(k + 2) * m];
        let dnu = nu.continuous_increment(k);
        for i in 0..m {
            next_pre[i] = xk[i] + drift[i] * dt + dnu[i];
        }
        s.add_sigma_dw(t, xk, noise, next_pre);
        let next = &mut tail[..m];
        next.copy_from_slice(next_pre);
        if let Some(j) = nu.jump_at(k + 1) {
            for i in 0..m {
                next[i] += j[i];
            }
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                step: k,
                what: "signal".into(),
            });
        }
    }
    Ok(SignalPath { m, d, x, x_pre, dw })
}

fn draw_bbar<R: Rng + ?Sized>(s: &Scenario, rng: &mut R) -> Vec<f64> {
    let sqrt_dt = s.time_grid().dt().sqrt();
    (0..s.time_grid().steps() * s.n())
        .map(|_| sqrt_dt * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Observation under the reference measure: `dY = gamma(t) dBbar`.
/// Returns the path and the `Bbar` increments.
pub fn simulate_observation_reference<R: Rng + ?Sized>(
    s: &Scenario,
    rng: &mut R,
) -> Result<(ObservationPath, Vec<f64>)> {
    let n = s.n();
    let grid = s.time_grid();
    let dbbar = draw_bbar(s, rng);
    let mut y = vec![0.0; (grid.steps() + 1) * n];
    y[..n].copy_from_slice(s.y0());
    for k in 0..grid.steps() {
        let g = s.gamma(grid.node(k));
        for l in 0..n {
            let mut v = 0.0;
            for j in 0..n {
                v += g[(l, j)] * dbbar[k * n + j];
            }
            y[(k + 1) * n + l] = y[k * n + l] + v;
            if !y[(k + 1) * n + l].is_finite() {
                return Err(Error::NonFinite {
                    step: k,
                    what: "observation".into(),
                });
            }
        }
    }
    Ok((ObservationPath::new(n, grid.dt(), y)?, dbbar))
}

/// Observation under the physical measure: `dY = h(t, X) dt + gamma(t) dB`.
/// Returns the path and the implied `Bbar = B + int gamma^{-1} h dt` increments.
pub fn simulate_observation_physical<R: Rng + ?Sized>(
    s: &Scenario,
    x: &SignalPath,
    rng: &mut R,
) -> Result<(ObservationPath, Vec<f64>)> {
    let n = s.n();
    let grid = s.time_grid();
    let (steps, dt) = (grid.steps(), grid.dt());
    if x.m != s.m() || x.len() != steps + 1 {
        return Err(Error::GridMismatch(format!(
            "signal path has {} nodes, scenario grid has {}",
            x.len(),
            steps + 1
        )));
    }
    let db = draw_bbar(s, rng);
    let mut dbbar = vec![0.0; steps * n];
    let mut y = vec![0.0; (steps + 1) * n];
    y[..n].copy_from_slice(s.y0());
    let mut h = vec![0.0; n];
    for k in 0..steps {
        let t = grid.node(k);
        let g = s.gamma(t);
        let g_inv = s.gamma_inv_at(k)?;
        s.observation(t, x.at(k), &mut h);
        for l in 0..n {
            let mut v = 0.0;
            let mut u = 0.0;
            for j in 0..n {
                v += g[(l, j)] * db[k * n + j];
                u += g_inv[(l, j)] * h[j];
            }
            y[(k + 1) * n + l] = y[k * n + l] + (h[l] * dt + v);
            dbbar[k * n + l] = db[k * n + l] + u * dt;
            if !y[(k + 1) * n + l].is_finite() {
                return Err(Error::NonFinite {
                    step: k,
                    what: "observation".into(),
                });
            }
        }
    }
    Ok((ObservationPath::new(n, dt, y)?, dbbar))
}

/// `log eta_{t_k}` along a path, `k = 0..=steps`, with `log eta_0 = 0`.
pub fn girsanov_log_density(s: &Scenario, x: &SignalPath, dbbar: &[f64]) -> Result<Vec<f64>> {
    let n = s.n();
    let grid = s.time_grid();
    let (steps, dt) = (grid.steps(), grid.dt());
    if x.len() != steps + 1 || dbbar.len() != steps * n {
        return Err(Error::GridMismatch(
            "signal and noise paths do not share the scenario grid".into(),
        ));
    }
    let mut log_eta = vec![0.0; steps + 1];
    let mut h = vec![0.0; n];
    let mut u = vec![0.0; n];
    for k in 0..steps {
        let t = grid.node(k);
        let g_inv = s.gamma_inv_at(k)?;
        s.observation(t, x.at(k), &mut h);
        for l in 0..n {
            u[l] = (0..n).map(|j| g_inv[(l, j)] * h[j]).sum();
        }
        let drive: f64 = (0..n).map(|l| u[l] * dbbar[k * n + l]).sum();
        let norm2: f64 = u.iter().map(|v| v * v).sum();
        log_eta[k + 1] = log_eta[k] + drive - 0.5 * norm2 * dt;
    }
    Ok(log_eta)
}

/// Which measure the observation is simulated under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Reference,
    Physical,
}

/// Everything sampled for one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub times: Vec<f64>,
    pub signal: SignalPath,
    pub observation: ObservationPath,
    pub dbbar: Vec<f64>,
    pub log_eta: Vec<f64>,
}

/// Sample replication `replication` of the scenario; the signal and the
/// observation noise use separate streams derived from the scenario seed.
pub fn simulate_bundle(s: &Scenario, replication: u64, measure: Measure) -> Result<PathBundle> {
    let mut sig_rng = RngStream::new(s.seed(), purpose::SIGNAL)
        .substream(replication)
        .rng();
    let mut obs_rng = RngStream::new(s.seed(), purpose::OBSERVATION)
        .substream(replication)
        .rng();
    let signal = simulate_signal(s, &mut sig_rng)?;
    let (observation, dbbar) = match measure {
        Measure::Reference => simulate_observation_reference(s, &mut obs_rng)?,
        Measure::Physical => simulate_observation_physical(s, &signal, &mut obs_rng)?,
    };
    let log_eta = girsanov_log_density(s, &signal, &dbbar)?;
    Ok(PathBundle {
        times: s.time_grid().nodes(),
        signal,
        observation,
        dbbar,
        log_eta,
    })
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            se: (var / n).sqrt(),
        }
    }

    /// `|mean - target| <= k * se`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.se
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub paths: usize,
    pub measure: Measure,
    pub x_terminal: Vec<MeanSe>,
    pub y_terminal: Vec<MeanSe>,
    pub y_terminal_var: Vec<f64>,
    pub eta_terminal: MeanSe,
}

/// Terminal signal, observation and `eta_T` of one replication.
type Terminal = (Vec<f64>, Vec<f64>, f64);

/// Monte Carlo moments at `T` over `paths` replications (parallel,
/// result independent of the worker count).
pub fn simulate_batch(s: &Scenario, paths: usize, measure: Measure) -> Result<BatchSummary> {
    simulate_batch_with(s, paths, measure, |_, _| Ok(()))
}

/// [`simulate_batch`], handing every replication to `visit` as it is drawn.
pub fn simulate_batch_with<F>(
    s: &Scenario,
    paths: usize,
    measure: Measure,
    visit: F,
) -> Result<BatchSummary>
where
    F: Fn(u64, &PathBundle) -> Result<()> + Sync,
{
    let (m, n) = (s.m(), s.n());
    let steps = s.time_grid().steps();
    let terminal: Vec<Terminal> = (0..paths as u64)
        .into_par_iter()
        .map(|r| {
            let b = simulate_bundle(s, r, measure)?;
            visit(r, &b)?;
            Ok((
                b.signal.at(steps).to_vec(),
                b.observation.at(steps).to_vec(),
                b.log_eta[steps].exp(),
            ))
        })
        .collect::<Result<_>>()?;
    let column = |f: &dyn Fn(&Terminal) -> f64| -> Vec<f64> {
        terminal.iter().map(f).collect()
    };
    let x_terminal = (0..m)
        .map(|i| MeanSe::from_samples(&column(&|r| r.0[i])))
        .collect();
    let y_cols: Vec<Vec<f64>> = (0..n).map(|l| column(&|r| r.1[l])).collect();
    let y_terminal = y_cols.iter().map(|c| MeanSe::from_samples(c)).collect();
    let y_terminal_var = y_cols
        .iter()
        .map(|c| {
            let mu = c.iter().sum::<f64>() / c.len() as f64;
            c.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (c.len().max(2) - 1) as f64
        })
        .collect();
    let eta_terminal = MeanSe::from_samples(&column(&|r| r.2));
    Ok(BatchSummary {
        paths,
        measure,
        x_terminal,
        y_terminal,
        y_terminal_var,
        eta_terminal,
    })
}
