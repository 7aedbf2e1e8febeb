//! Time and space discretisation plus grid-sampled densities.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used to decide whether a time lies on a grid node.
const NODE_TOL: f64 = 1e-9;

/// Uniform time grid `0 = t_0 < t_1 < ... < t_steps = T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidScenario(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidScenario(
                "time grid needs at least one step".into(),
            ));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Time of node `k`.
    pub fn node(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            self.horizon * k as f64 / self.steps as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.node(k)).collect()
    }

    /// Index of the node closest to `t` (clamped to the grid).
    pub fn nearest_index(&self, t: f64) -> usize {
        let k = (t / self.dt()).round();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(self.steps)
        }
    }

    /// Index of `t` if it is a grid node.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = self.nearest_index(t);
        ((self.node(k) - t).abs() <= NODE_TOL * self.dt().max(1.0)).then_some(k)
    }

    /// Refine by an integer factor (same horizon).
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            horizon: self.horizon,
            steps: self.steps * factor,
        }
    }
}

/// One axis of a rectangular grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lower: f64,
    pub upper: f64,
    pub nodes: usize,
}

impl Axis {
    pub fn spacing(&self) -> f64 {
        (self.upper - self.lower) / (self.nodes - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        if i + 1 == self.nodes {
            self.upper
        } else {
            self.lower + i as f64 * self.spacing()
        }
    }

    /// Trapezoidal weight of node `i`.
    pub fn weight(&self, i: usize) -> f64 {
        let h = self.spacing();
        if i == 0 || i + 1 == self.nodes {
            0.5 * h
        } else {
            h
        }
    }
}

/// Rectangular grid in one or two dimensions, stored row-major
/// (last axis varies fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    axes: Vec<Axis>,
}

impl SpatialGrid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::InvalidScenario(format!(
                "spatial grid must have 1 or 2 dimensions, got {}",
                axes.len()
            )));
        }
        for (i, ax) in axes.iter().enumerate() {
            if ax.nodes < 3 {
                return Err(Error::InvalidScenario(format!(
                    "axis {i} needs at least 3 nodes"
                )));
            }
            if !(ax.lower.is_finite() && ax.upper.is_finite() && ax.upper > ax.lower) {
                return Err(Error::InvalidScenario(format!(
                    "axis {i} has invalid bounds"
                )));
            }
        }
        Ok(Self { axes })
    }

    pub fn uniform_1d(lower: f64, upper: f64, nodes: usize) -> Result<Self> {
        Self::new(vec![Axis {
            lower,
            upper,
            nodes,
        }])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, i: usize) -> &Axis {
        &self.axes[i]
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.nodes).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, i: usize) -> f64 {
        self.axes[i].spacing()
    }

    /// Stride of axis `i` in the flat layout.
    pub fn stride(&self, i: usize) -> usize {
        self.axes[i + 1..].iter().map(|a| a.nodes).product()
    }

    pub fn multi_index(&self, mut flat: usize) -> [usize; 2] {
        let mut idx = [0usize; 2];
        for i in (0..self.dim()).rev() {
            idx[i] = flat % self.axes[i].nodes;
            flat /= self.axes[i].nodes;
        }
        idx
    }

    pub fn point(&self, flat: usize) -> [f64; 2] {
        let idx = self.multi_index(flat);
        let mut p = [0.0; 2];
        for i in 0..self.dim() {
            p[i] = self.axes[i].coord(idx[i]);
        }
        p
    }

    /// Node coordinates, `len() * dim()` values.
    pub fn coords(&self) -> Vec<f64> {
        let m = self.dim();
        let mut out = Vec::with_capacity(self.len() * m);
        for k in 0..self.len() {
            out.extend_from_slice(&self.point(k)[..m]);
        }
        out
    }

    /// Product trapezoidal quadrature weights.
    pub fn weights(&self) -> Vec<f64> {
        (0..self.len())
            .map(|k| {
                let idx = self.multi_index(k);
                (0..self.dim())
                    .map(|i| self.axes[i].weight(idx[i]))
                    .product()
            })
            .collect()
    }

    /// Same grid with every axis refined so that the spacing halves.
    pub fn halved(&self) -> Self {
        Self {
            axes: self
                .axes
                .iter()
                .map(|a| Axis {
                    nodes: 2 * a.nodes - 1,
                    ..*a
                })
                .collect(),
        }
    }

    pub fn sample<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> Vec<f64> {
        let m = self.dim();
        (0..self.len()).map(|k| f(&self.point(k)[..m])).collect()
    }
}

/// Cached quadrature data for repeated moment evaluation on one grid.
#[derive(Debug, Clone)]
pub struct Quadrature {
    pub weights: Vec<f64>,
    pub coords: Vec<f64>,
    pub dim: usize,
}

impl Quadrature {
    pub fn new(grid: &SpatialGrid) -> Self {
        Self {
            weights: grid.weights(),
            coords: grid.coords(),
            dim: grid.dim(),
        }
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// Mass, normalised mean and normalised covariance of a nonnegative field.
    pub fn moments(&self, values: &[f64]) -> Moments {
        let m = self.dim;
        let mut mass = 0.0;
        let mut first = vec![0.0; m];
        let mut second = DMatrix::<f64>::zeros(m, m);
        for (k, (&v, &w)) in values.iter().zip(&self.weights).enumerate() {
            let vw = v * w;
            if vw == 0.0 {
                continue;
            }
            mass += vw;
            let x = &self.coords[k * m..(k + 1) * m];
            for i in 0..m {
                first[i] += vw * x[i];
                for j in 0..=i {
                    second[(i, j)] += vw * x[i] * x[j];
                }
            }
        }
        let mean: Vec<f64> = first.iter().map(|s| s / mass).collect();
        let mut cov = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let c = second[(i, j)] / mass - mean[i] * mean[j];
                cov[(i, j)] = c;
                cov[(j, i)] = c;
            }
        }
        Moments { mass, mean, cov }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub mass: f64,
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
}

/// Unnormalised density sampled on a spatial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub grid: SpatialGrid,
    pub values: Vec<f64>,
    pub time: f64,
}

impl DensityField {
    pub fn new(grid: SpatialGrid, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values, time })
    }

    pub fn from_fn<F: FnMut(&[f64]) -> f64>(grid: SpatialGrid, time: f64, f: F) -> Self {
        let values = grid.sample(f);
        Self { grid, values, time }
    }

    /// Trapezoidal integral of the field.
    pub fn mass(&self) -> f64 {
        self.grid
            .weights()
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v)
            .sum()
    }

    pub fn moments(&self) -> Moments {
        Quadrature::new(&self.grid).moments(&self.values)
    }

    /// Copy scaled to unit trapezoidal mass.
    pub fn normalized(&self) -> Self {
        let mass = self.mass();
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v / mass).collect(),
            time: self.time,
        }
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}
