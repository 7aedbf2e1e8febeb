//! Heat-kernel smoothing of grid functions and discrete signed measures.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DensityField, SpatialGrid};
use crate::zakai::stencil::partial;

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveEpsilon(eps))
    }
}

/// `psi_eps(x) = (2 pi eps)^{-m/2} exp(-|x|^2 / (2 eps))`.
pub fn heat_kernel(x: &[f64], eps: f64) -> Result<f64> {
    check_eps(eps)?;
    Ok(kernel(x, eps))
}

fn kernel(x: &[f64], eps: f64) -> f64 {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    (2.0 * PI * eps).powf(-0.5 * x.len() as f64) * (-r2 / (2.0 * eps)).exp()
}

/// Finite signed measure `sum_k w_k delta_{x_k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    pub dim: usize,
    pub atoms: Vec<(Vec<f64>, f64)>,
}

impl DiscreteMeasure {
    pub fn new(dim: usize, atoms: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        if atoms
            .iter()
            .any(|(x, w)| x.len() != dim || !w.is_finite() || x.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::InvalidArgument(
                "measure atoms must be finite points of the right dimension".into(),
            ));
        }
        Ok(Self { dim, atoms })
    }

    pub fn dirac(at: Vec<f64>) -> Self {
        Self {
            dim: at.len(),
            atoms: vec![(at, 1.0)],
        }
    }

    pub fn total_variation(&self) -> f64 {
        self.atoms.iter().map(|(_, w)| w.abs()).sum()
    }

    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|(_, w)| w).sum()
    }

    /// The variation measure `|mu|`.
    pub fn abs(&self) -> Self {
        Self {
            dim: self.dim,
            atoms: self
                .atoms
                .iter()
                .map(|(x, w)| (x.clone(), w.abs()))
                .collect(),
        }
    }

    /// `mu(f)` for a pointwise function.
    pub fn integrate<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        self.atoms.iter().map(|(x, w)| w * f(x)).sum()
    }
}

/// `T_eps mu(y) = sum_k w_k psi_eps(x_k - y)` sampled on `grid`.
pub fn t_eps_measure(mu: &DiscreteMeasure, eps: f64, grid: &SpatialGrid) -> Result<DensityField> {
    check_eps(eps)?;
    if mu.dim != grid.dim() {
        return Err(Error::GridMismatch(format!(
            "measure in R^{} on a {}-d grid",
            mu.dim,
            grid.dim()
        )));
    }
    let m = grid.dim();
    let values = (0..grid.len())
        .map(|k| {
            let y = grid.point(k);
            mu.atoms
                .iter()
                .map(|(x, w)| {
                    let d: Vec<f64> = (0..m).map(|i| x[i] - y[i]).collect();
                    w * kernel(&d, eps)
                })
                .sum()
        })
        .collect();
    DensityField::new(grid.clone(), values, 0.0)
}

/// Trapezoid-weighted 1-D kernel matrix of one axis, row-major `n x n`.
fn axis_kernel(grid: &SpatialGrid, axis: usize, eps: f64) -> Vec<f64> {
    let ax = grid.axis(axis);
    let n = ax.nodes;
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = ax.weight(j) * kernel(&[ax.coord(i) - ax.coord(j)], eps);
        }
    }
    out
}

/// `T_eps f(x_i) = sum_j W_j psi_eps(x_i - x_j) f(x_j)` with trapezoid weights
/// `W`; the product kernel is applied one axis at a time.
pub fn t_eps_function(f: &DensityField, eps: f64) -> Result<DensityField> {
    check_eps(eps)?;
    let grid = &f.grid;
    let mut values = f.values.clone();
    let mut line = Vec::new();
    for axis in 0..grid.dim() {
        let k = axis_kernel(grid, axis, eps);
        let n = grid.axis(axis).nodes;
        let stride = grid.stride(axis);
        line.resize(n, 0.0);
        for start in 0..values.len() {
            if grid.multi_index(start)[axis] != 0 {
                continue;
            }
            for (j, v) in line.iter_mut().enumerate() {
                *v = values[start + j * stride];
            }
            for i in 0..n {
                let row = &k[i * n..(i + 1) * n];
                values[start + i * stride] = row.iter().zip(&line).map(|(a, b)| a * b).sum();
            }
        }
    }
    DensityField::new(grid.clone(), values, f.time)
}

/// `T_eps f(y)` at an arbitrary point.
pub fn t_eps_function_at(f: &DensityField, eps: f64, y: &[f64]) -> Result<f64> {
    check_eps(eps)?;
    let grid = &f.grid;
    let m = grid.dim();
    let mut acc = 0.0;
    for (k, (v, w)) in f.values.iter().zip(grid.weights()).enumerate() {
        let x = grid.point(k);
        let d: Vec<f64> = (0..m).map(|i| y[i] - x[i]).collect();
        acc += w * v * kernel(&d, eps);
    }
    Ok(acc)
}

/// Discrete `L^2` norm with trapezoid weights.
pub fn l2_norm(f: &DensityField) -> f64 {
    f.values
        .iter()
        .zip(f.grid.weights())
        .map(|(v, w)| w * v * v)
        .sum::<f64>()
        .sqrt()
}

/// Discrete `L^2` pairing of two functions on the same grid.
pub fn pairing(a: &DensityField, b: &DensityField) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch(
            "pairing of functions on different grids".into(),
        ));
    }
    Ok(a.values
        .iter()
        .zip(&b.values)
        .zip(a.grid.weights())
        .map(|((x, y), w)| w * x * y)
        .sum())
}

pub const PAIRING_TOLERANCE: f64 = 1e-6;
pub const SEMIGROUP_TOLERANCE: f64 = 2e-6;
/// Distance from the boundary, in units of `sqrt(eps)`, beyond which the
/// derivative identity is checked.
pub const INTERIOR_WIDTHS: f64 = 8.0;

/// One line of the property report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpropCheck {
    pub identity: String,
    pub lhs: f64,
    pub rhs: f64,
    pub abs_error: f64,
    pub pass: bool,
}

impl TpropCheck {
    fn inequality(identity: &str, lhs: f64, rhs: f64) -> Self {
        Self {
            identity: identity.into(),
            lhs,
            rhs,
            abs_error: (lhs - rhs).max(0.0),
            pass: lhs <= rhs,
        }
    }

    fn equality(identity: &str, lhs: f64, rhs: f64, tol: f64) -> Self {
        let abs_error = (lhs - rhs).abs();
        Self {
            identity: identity.into(),
            lhs,
            rhs,
            abs_error,
            pass: abs_error <= tol,
        }
    }
}

/// Run the operator identities on a measure `mu`, a grid function `f` and
/// its sampled partial derivatives `df` (one field per axis).
pub fn tprop_suite(
    mu: &DiscreteMeasure,
    f: &DensityField,
    df: &[DensityField],
    eps: f64,
) -> Result<Vec<TpropCheck>> {
    check_eps(eps)?;
    let grid = &f.grid;
    if df.len() != grid.dim() || df.iter().any(|d| d.grid != *grid) {
        return Err(Error::GridMismatch(
            "derivative fixtures must cover every axis on the same grid".into(),
        ));
    }
    let mut out = Vec::new();

    let abs = mu.abs();
    let n1 = l2_norm(&t_eps_measure(&abs, eps, grid)?);
    let n2 = l2_norm(&t_eps_measure(&abs, 2.0 * eps, grid)?);
    out.push(TpropCheck::inequality(
        "(i) |T_2eps |mu|| <= |T_eps |mu||",
        n2,
        n1,
    ));

    let tf = t_eps_function(f, eps)?;
    out.push(TpropCheck::inequality(
        "(ii) |T_eps f| <= |f|",
        l2_norm(&tf),
        l2_norm(f),
    ));

    let lhs = pairing(&t_eps_measure(mu, eps, grid)?, f)?;
    let mut rhs = 0.0;
    for (x, w) in &mu.atoms {
        rhs += w * t_eps_function_at(f, eps, x)?;
    }
    out.push(TpropCheck::equality(
        "(iii) <T_eps mu, f> = mu(T_eps f)",
        lhs,
        rhs,
        PAIRING_TOLERANCE,
    ));

    let margin = INTERIOR_WIDTHS * eps.sqrt();
    let interior: Vec<usize> = (0..grid.len())
        .filter(|&k| {
            let p = grid.point(k);
            grid.axes()
                .iter()
                .enumerate()
                .all(|(i, ax)| p[i] - ax.lower >= margin && ax.upper - p[i] >= margin)
        })
        .collect();
    for (axis, d) in df.iter().enumerate() {
        let tol = grid.spacing(axis).powi(2);
        let lhs_field = partial(grid, &tf.values, axis);
        let rhs_field = t_eps_function(d, eps)?;
        let (mut worst, mut at) = (0.0f64, (0.0, 0.0));
        for &k in &interior {
            let e = (lhs_field[k] - rhs_field.values[k]).abs();
            if e >= worst {
                worst = e;
                at = (lhs_field[k], rhs_field.values[k]);
            }
        }
        let mut check = TpropCheck::equality(
            &format!("(v) d_{axis} T_eps f = T_eps d_{axis} f"),
            at.0,
            at.1,
            tol,
        );
        check.abs_error = worst;
        check.pass = !interior.is_empty() && worst <= tol;
        out.push(check);
    }
    Ok(out)
}

/// Suite on the standard fixtures: a signed two-atom measure with a Gaussian
/// function, then a Dirac measure with a sine function, on a 1-D grid.
pub fn standard_suite(eps: f64) -> Result<Vec<TpropCheck>> {
    check_eps(eps)?;
    let half = (INTERIOR_WIDTHS + 4.0) * eps.sqrt() + 2.0;
    let grid = SpatialGrid::uniform_1d(-half, half, 1201)?;
    let mut out = Vec::new();

    let mu = DiscreteMeasure::new(1, vec![(vec![-0.4], 1.5), (vec![0.55], -0.7)])?;
    let f = DensityField::from_fn(grid.clone(), 0.0, |x| (-x[0] * x[0] / 2.0).exp());
    let df = DensityField::from_fn(grid.clone(), 0.0, |x| -x[0] * (-x[0] * x[0] / 2.0).exp());
    for mut c in tprop_suite(&mu, &f, &[df], eps)? {
        c.identity = format!("gaussian: {}", c.identity);
        out.push(c);
    }

    let mu = DiscreteMeasure::dirac(vec![0.3]);
    let f = DensityField::from_fn(grid.clone(), 0.0, |x| x[0].sin());
    let df = DensityField::from_fn(grid.clone(), 0.0, |x| x[0].cos());
    for mut c in tprop_suite(&mu, &f, &[df], eps)? {
        c.identity = format!("sine: {}", c.identity);
        out.push(c);
    }
    Ok(out)
}
