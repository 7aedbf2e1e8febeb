//! The bounded-variation input process: a finite jump schedule on grid
//! nodes plus a piecewise-linear continuous part.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// A jump of the process at a time-grid node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub index: usize,
    pub time: f64,
    pub size: Vec<f64>,
}

/// Increment of the process over one time cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BvIncrement {
    pub continuous: Vec<f64>,
    pub jump: Option<Vec<f64>>,
}

/// Càdlàg process of finite variation with `nu_{0-} = 0`, sampled on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BVPath {
    grid: TimeGrid,
    dim: usize,
    fuel: f64,
    jumps: Vec<Jump>,
    knots: Vec<(f64, Vec<f64>)>,
    jump_slot: Vec<Option<usize>>,
    continuous_increments: Vec<f64>,
    values: Vec<f64>,
}

impl BVPath {
    /// Build from jump times/sizes and knots of the continuous part.
    ///
    /// Jump times are snapped to the nearest grid node and jumps landing on
    /// the same node are merged. The continuous part interpolates the knots
    /// linearly and is held constant after the last knot.
    pub fn new(
        grid: TimeGrid,
        dim: usize,
        jumps: &[(f64, Vec<f64>)],
        knots: &[(f64, Vec<f64>)],
        fuel: f64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidScenario(
                "nu needs at least one component".into(),
            ));
        }
        if !(fuel.is_finite() && fuel > 0.0) {
            return Err(Error::InvalidScenario(format!(
                "fuel bound must be positive, got {fuel}"
            )));
        }
        let tol = 1e-9 * grid.dt();

        let mut snapped: Vec<Jump> = Vec::new();
        let mut raw: Vec<&(f64, Vec<f64>)> = jumps.iter().collect();
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (t, size) in raw {
            if size.len() != dim {
                return Err(Error::InvalidScenario(format!(
                    "jump at t={t} has {} components, expected {dim}",
                    size.len()
                )));
            }
            if !t.is_finite() || *t < -tol || *t > grid.horizon() + tol {
                return Err(Error::InvalidScenario(format!(
                    "jump time {t} outside [0, T]"
                )));
            }
            if size.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidScenario(format!(
                    "jump at t={t} is not finite"
                )));
            }
            let index = grid.nearest_index(*t);
            match snapped.last_mut() {
                Some(last) if last.index == index => {
                    for (a, b) in last.size.iter_mut().zip(size) {
                        *a += b;
                    }
                }
                _ => snapped.push(Jump {
                    index,
                    time: grid.node(index),
                    size: size.clone(),
                }),
            }
        }
        snapped.retain(|j| j.size.iter().any(|&v| v != 0.0));

        let mut knots: Vec<(f64, Vec<f64>)> = knots.to_vec();
        for (t, v) in &knots {
            if v.len() != dim {
                return Err(Error::InvalidScenario(format!(
                    "continuous knot at t={t} has {} components, expected {dim}",
                    v.len()
                )));
            }
            if !t.is_finite() || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidScenario(
                    "continuous knot is not finite".into(),
                ));
            }
        }
        if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidScenario(
                "continuous knots must have increasing times".into(),
            ));
        }
        match knots.first() {
            None => knots.push((0.0, vec![0.0; dim])),
            Some((t, v)) if t.abs() <= tol => {
                if v.iter().any(|&x| x != 0.0) {
                    return Err(Error::InvalidScenario(
                        "continuous part must start at 0 (put initial offsets in a jump at t=0)"
                            .into(),
                    ));
                }
            }
            Some((t, _)) if *t > 0.0 => knots.insert(0, (0.0, vec![0.0; dim])),
            Some((t, _)) => {
                return Err(Error::InvalidScenario(format!(
                    "continuous knot at negative time {t}"
                )))
            }
        }

        Ok(Self::assemble(grid, dim, fuel, snapped, knots))
    }

    /// The zero process.
    pub fn zero(grid: TimeGrid, dim: usize, fuel: f64) -> Result<Self> {
        Self::new(grid, dim, &[], &[], fuel)
    }

    fn assemble(
        grid: TimeGrid,
        dim: usize,
        fuel: f64,
        jumps: Vec<Jump>,
        knots: Vec<(f64, Vec<f64>)>,
    ) -> Self {
        let steps = grid.steps();
        let sample = |t: f64| -> Vec<f64> { interpolate_knots(&knots, t, dim) };
        let mut node_c: Vec<Vec<f64>> = (0..=steps).map(|k| sample(grid.node(k))).collect();
        node_c[0] = vec![0.0; dim];

        let mut continuous_increments = Vec::with_capacity(steps * dim);
        for k in 0..steps {
            for i in 0..dim {
                continuous_increments.push(node_c[k + 1][i] - node_c[k][i]);
            }
        }
        let mut jump_slot = vec![None; steps + 1];
        for (n, j) in jumps.iter().enumerate() {
            jump_slot[j.index] = Some(n);
        }

        let mut values = vec![0.0; (steps + 1) * dim];
        if let Some(n) = jump_slot[0] {
            values[..dim].copy_from_slice(&jumps[n].size);
        }
        for k in 0..steps {
            for i in 0..dim {
                let mut v = values[k * dim + i] + continuous_increments[k * dim + i];
                if let Some(n) = jump_slot[k + 1] {
                    v += jumps[n].size[i];
                }
                values[(k + 1) * dim + i] = v;
            }
        }
        Self {
            grid,
            dim,
            fuel,
            jumps,
            knots,
            jump_slot,
            continuous_increments,
            values,
        }
    }

    /// Same process re-sampled on another time grid with the same horizon.
    pub fn on_grid(&self, grid: TimeGrid) -> Result<Self> {
        let jumps: Vec<(f64, Vec<f64>)> = self
            .jumps
            .iter()
            .map(|j| (j.time, j.size.clone()))
            .collect();
        Self::new(grid, self.dim, &jumps, &self.knots, self.fuel)
    }

    /// Random process whose per-component total variation stays below `fuel`.
    pub fn sample_random<R: Rng + ?Sized>(
        grid: TimeGrid,
        dim: usize,
        fuel: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let n_jumps = rng.random_range(0..=4usize);
        let jumps: Vec<(f64, Vec<f64>)> = (0..n_jumps)
            .map(|_| {
                let t = rng.random_range(0.0..=grid.horizon());
                (t, (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            })
            .collect();
        let n_knots = rng.random_range(0..=5usize);
        let mut times: Vec<f64> = (0..n_knots)
            .map(|_| rng.random_range(0.0..grid.horizon()))
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let knots: Vec<(f64, Vec<f64>)> = times
            .into_iter()
            .filter(|&t| t > 0.0)
            .map(|t| (t, (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()))
            .collect();
        let raw = Self::new(grid, dim, &jumps, &knots, f64::MAX)?;

        let target = 0.99 * fuel * rng.random_range(0.0..1.0f64);
        let scales: Vec<f64> = (0..dim)
            .map(|i| {
                let tv = raw.total_variation(i);
                if tv > 0.0 {
                    target / tv
                } else {
                    0.0
                }
            })
            .collect();
        let scale = |v: &[f64]| -> Vec<f64> { v.iter().zip(&scales).map(|(a, s)| a * s).collect() };
        let jumps: Vec<(f64, Vec<f64>)> =
            raw.jumps.iter().map(|j| (j.time, scale(&j.size))).collect();
        let knots: Vec<(f64, Vec<f64>)> = raw.knots.iter().map(|(t, v)| (*t, scale(v))).collect();
        Self::new(grid, dim, &jumps, &knots, fuel)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fuel(&self) -> f64 {
        self.fuel
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    pub fn knots(&self) -> &[(f64, Vec<f64>)] {
        &self.knots
    }

    /// `|nu^i|_T`: absolute jumps plus the variation of the sampled continuous part.
    pub fn total_variation(&self, i: usize) -> f64 {
        let jumps: f64 = self.jumps.iter().map(|j| j.size[i].abs()).sum();
        let cont: f64 = (0..self.grid.steps())
            .map(|k| self.continuous_increments[k * self.dim + i].abs())
            .sum();
        jumps + cont
    }

    /// Jump at node `k`, if any.
    pub fn jump_at(&self, k: usize) -> Option<&[f64]> {
        self.jump_slot
            .get(k)
            .copied()
            .flatten()
            .map(|n| self.jumps[n].size.as_slice())
    }

    /// Jump at `t = 0`, applied to the initial law.
    pub fn initial_jump(&self) -> Option<&[f64]> {
        self.jump_at(0)
    }

    /// Continuous increment over cell `[t_k, t_{k+1}]`.
    pub fn continuous_increment(&self, k: usize) -> &[f64] {
        &self.continuous_increments[k * self.dim..(k + 1) * self.dim]
    }

    /// `nu_{t_k}` including all jumps at times `<= t_k`.
    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn is_zero(&self) -> bool {
        self.jumps.is_empty() && self.continuous_increments.iter().all(|&v| v == 0.0)
    }

    /// Increment over the grid cell `[t_k, t_{k+1}]`; the jump is reported
    /// only when it sits at `t_{k+1}`.
    pub fn increment(&self, t_k: f64, t_k1: f64) -> Result<BvIncrement> {
        let k = self
            .grid
            .index_of(t_k)
            .ok_or(Error::MisalignedInterval(t_k, t_k1))?;
        let k1 = self
            .grid
            .index_of(t_k1)
            .ok_or(Error::MisalignedInterval(t_k, t_k1))?;
        if k1 != k + 1 {
            return Err(Error::MisalignedInterval(t_k, t_k1));
        }
        Ok(BvIncrement {
            continuous: self.continuous_increment(k).to_vec(),
            jump: self.jump_at(k1).map(<[f64]>::to_vec),
        })
    }
}

fn interpolate_knots(knots: &[(f64, Vec<f64>)], t: f64, dim: usize) -> Vec<f64> {
    let Some(last) = knots.last() else {
        return vec![0.0; dim];
    };
    if t >= last.0 {
        return last.1.clone();
    }
    let pos = knots.partition_point(|(tk, _)| *tk <= t);
    if pos == 0 {
        return knots[0].1.clone();
    }
    let (t0, v0) = &knots[pos - 1];
    let (t1, v1) = &knots[pos];
    let w = (t - t0) / (t1 - t0);
    v0.iter().zip(v1).map(|(a, b)| a + w * (b - a)).collect()
}
