//! Problem instances: coefficient presets, initial law, input process and
//! the validation rules every solver relies on.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bv::BVPath;
use crate::error::{Error, Result};
use crate::grid::{Axis, DensityField, SpatialGrid, TimeGrid};

/// Default eigenvalue floor for gamma when the scenario file does not set one.
pub const DEFAULT_GAMMA_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dims {
    pub m: usize,
    pub n: usize,
    pub d: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub nodes: Vec<usize>,
}

/// Drift presets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftSpec {
    Zero,
    /// `b(x) = A x + c`
    Linear {
        a: Vec<Vec<f64>>,
        #[serde(default)]
        c: Option<Vec<f64>>,
    },
    /// `b_i(x) = clamp(-coef * x_i^3, -clip, clip)`
    Cubic {
        #[serde(default = "one")]
        coef: f64,
        clip: f64,
    },
}

/// Diffusion presets (state independent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiffusionSpec {
    /// `sigma = s * I` (requires `d == m`)
    Scalar { s: f64 },
    /// Constant `m x d` matrix.
    Constant { matrix: Vec<Vec<f64>> },
}

/// Observation-function presets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservationSpec {
    Zero,
    /// `h(x) = H x + g`
    Linear {
        h: Vec<Vec<f64>>,
        #[serde(default)]
        g: Option<Vec<f64>>,
    },
    /// `h_l(x) = tanh(scale * x_l)` (requires `n == m`)
    Tanh {
        #[serde(default = "one")]
        scale: f64,
    },
}

/// Observation-noise presets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GammaSpec {
    /// `gamma = g * I`
    Scalar {
        g: f64,
    },
    Constant {
        matrix: Vec<Vec<f64>>,
    },
    /// `gamma(t) = g0 + t * g1`
    TimeLinear {
        g0: Vec<Vec<f64>>,
        g1: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

/// Initial law of `X_{0-}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialLawSpec {
    Gaussian {
        mean: Vec<f64>,
        cov: Vec<Vec<f64>>,
    },
    Mixture {
        components: Vec<MixtureComponent>,
    },
    /// Density values on the scenario's spatial grid (row-major).
    Grid {
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NuSpec {
    #[serde(default)]
    pub jumps: Vec<(f64, Vec<f64>)>,
    #[serde(default)]
    pub continuous: Vec<(f64, Vec<f64>)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub k_b: f64,
    pub k_sigma: f64,
    pub k_h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffSpec {
    pub b: DriftSpec,
    pub sigma: DiffusionSpec,
    pub h: ObservationSpec,
    pub gamma: GammaSpec,
}

/// Scenario file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    #[serde(default)]
    pub name: Option<String>,
    pub dims: Dims,
    pub horizon: f64,
    pub steps: usize,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    pub coeffs: CoeffSpec,
    pub xi: InitialLawSpec,
    #[serde(default)]
    pub nu: NuSpec,
    #[serde(rename = "fuel_K")]
    pub fuel_k: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub y0: Option<Vec<f64>>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub bounds: Option<Bounds>,
}

fn one() -> f64 {
    1.0
}

impl ScenarioSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario spec serialises")
    }
}

fn matrix(rows: &[Vec<f64>], r: usize, c: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(Error::InvalidScenario(format!("{what} must be {r}x{c}")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidScenario(format!(
            "{what} has non-finite entries"
        )));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn vector(v: Option<&Vec<f64>>, len: usize, what: &str) -> Result<Vec<f64>> {
    match v {
        None => Ok(vec![0.0; len]),
        Some(v) if v.len() == len && v.iter().all(|x| x.is_finite()) => Ok(v.clone()),
        Some(_) => Err(Error::InvalidScenario(format!(
            "{what} must have {len} finite entries"
        ))),
    }
}

#[derive(Debug, Clone)]
enum Drift {
    Zero,
    Linear { a: DMatrix<f64>, c: Vec<f64> },
    Cubic { coef: f64, clip: f64 },
}

#[derive(Debug, Clone)]
enum Observation {
    Zero,
    Linear { h: DMatrix<f64>, g: Vec<f64> },
    Tanh { scale: f64 },
}

#[derive(Debug, Clone)]
enum Gamma {
    Constant(DMatrix<f64>),
    TimeLinear(DMatrix<f64>, DMatrix<f64>),
}

#[derive(Debug, Clone)]
struct GaussianComponent {
    weight: f64,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    sqrt: DMatrix<f64>,
}

#[derive(Debug, Clone)]
enum InitialLaw {
    Mixture(Vec<GaussianComponent>),
    Grid { values: Vec<f64>, cdf: Vec<f64> },
}

/// Symmetric square root of a PSD matrix (negative eigenvalues clamped).
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Validated-shape problem instance. Semantic constraints are checked
/// separately by [`validate_scenario`].
#[derive(Debug, Clone)]
pub struct Scenario {
    spec: ScenarioSpec,
    m: usize,
    n: usize,
    d: usize,
    time: TimeGrid,
    grid: Option<SpatialGrid>,
    drift: Drift,
    sigma: DMatrix<f64>,
    diffusion_a: DMatrix<f64>,
    observation: Observation,
    gamma: Gamma,
    gamma_inv_nodes: Vec<Option<DMatrix<f64>>>,
    xi: InitialLaw,
    nu: BVPath,
    y0: Vec<f64>,
    delta: f64,
    bounds: Option<Bounds>,
}

/// Parameters of a linear-Gaussian scenario.
#[derive(Debug, Clone)]
pub struct LinearGaussian {
    pub a: DMatrix<f64>,
    pub c: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub mean0: DVector<f64>,
    pub cov0: DMatrix<f64>,
}

impl Scenario {
    pub fn from_spec(spec: ScenarioSpec) -> Result<Self> {
        let Dims { m, n, d } = spec.dims;
        if m == 0 || n == 0 || d == 0 {
            return Err(Error::InvalidScenario("dimensions must be positive".into()));
        }
        let time = TimeGrid::new(spec.horizon, spec.steps)?;
        let grid = match &spec.grid {
            None => None,
            Some(g) => {
                if g.lower.len() != m || g.upper.len() != m || g.nodes.len() != m {
                    return Err(Error::InvalidScenario(format!("grid must have {m} axes")));
                }
                let axes = (0..m)
                    .map(|i| Axis {
                        lower: g.lower[i],
                        upper: g.upper[i],
                        nodes: g.nodes[i],
                    })
                    .collect();
                Some(SpatialGrid::new(axes)?)
            }
        };

        let drift = match &spec.coeffs.b {
            DriftSpec::Zero => Drift::Zero,
            DriftSpec::Linear { a, c } => Drift::Linear {
                a: matrix(a, m, m, "drift matrix a")?,
                c: vector(c.as_ref(), m, "drift offset c")?,
            },
            DriftSpec::Cubic { coef, clip } => {
                if !(coef.is_finite() && clip.is_finite() && *clip > 0.0) {
                    return Err(Error::InvalidScenario(
                        "cubic drift needs finite coef and positive clip".into(),
                    ));
                }
                Drift::Cubic {
                    coef: *coef,
                    clip: *clip,
                }
            }
        };

        let sigma = match &spec.coeffs.sigma {
            DiffusionSpec::Scalar { s } => {
                if d != m {
                    return Err(Error::InvalidScenario(
                        "scalar sigma requires d == m".into(),
                    ));
                }
                DMatrix::identity(m, m) * *s
            }
            DiffusionSpec::Constant { matrix: rows } => matrix(rows, m, d, "sigma")?,
        };
        let diffusion_a = &sigma * sigma.transpose() * 0.5;

        let observation = match &spec.coeffs.h {
            ObservationSpec::Zero => Observation::Zero,
            ObservationSpec::Linear { h, g } => Observation::Linear {
                h: matrix(h, n, m, "observation matrix h")?,
                g: vector(g.as_ref(), n, "observation offset g")?,
            },
            ObservationSpec::Tanh { scale } => {
                if n != m {
                    return Err(Error::InvalidScenario(
                        "tanh observation requires n == m".into(),
                    ));
                }
                Observation::Tanh { scale: *scale }
            }
        };

        let gamma = match &spec.coeffs.gamma {
            GammaSpec::Scalar { g } => Gamma::Constant(DMatrix::identity(n, n) * *g),
            GammaSpec::Constant { matrix: rows } => Gamma::Constant(matrix(rows, n, n, "gamma")?),
            GammaSpec::TimeLinear { g0, g1 } => {
                Gamma::TimeLinear(matrix(g0, n, n, "gamma g0")?, matrix(g1, n, n, "gamma g1")?)
            }
        };

        let xi = build_initial_law(&spec.xi, m, grid.as_ref())?;
        let nu = BVPath::new(time, m, &spec.nu.jumps, &spec.nu.continuous, spec.fuel_k)?;
        let y0 = vector(spec.y0.as_ref(), n, "y0")?;
        let delta = spec.delta.unwrap_or(DEFAULT_GAMMA_FLOOR);

        let mut s = Self {
            m,
            n,
            d,
            time,
            grid,
            drift,
            sigma,
            diffusion_a,
            observation,
            gamma,
            gamma_inv_nodes: Vec::new(),
            xi,
            nu,
            y0,
            delta,
            bounds: spec.bounds,
            spec,
        };
        s.gamma_inv_nodes = (0..=s.time.steps())
            .map(|k| s.gamma(s.time.node(k)).try_inverse())
            .collect();
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_spec(ScenarioSpec::from_json(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_spec(ScenarioSpec::load(path)?)
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    /// Same scenario on a time grid with a different number of steps.
    pub fn with_steps(&self, steps: usize) -> Result<Self> {
        let mut spec = self.spec.clone();
        spec.steps = steps;
        Self::from_spec(spec)
    }

    pub fn with_seed(&self, seed: u64) -> Result<Self> {
        let mut spec = self.spec.clone();
        spec.seed = seed;
        Self::from_spec(spec)
    }

    /// Same scenario on a different spatial grid.
    pub fn with_grid(&self, grid: &SpatialGrid) -> Result<Self> {
        let mut spec = self.spec.clone();
        spec.grid = Some(GridSpec {
            lower: grid.axes().iter().map(|a| a.lower).collect(),
            upper: grid.axes().iter().map(|a| a.upper).collect(),
            nodes: grid.axes().iter().map(|a| a.nodes).collect(),
        });
        Self::from_spec(spec)
    }

    pub fn m(&self) -> usize {
        self.m
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn d(&self) -> usize {
        self.d
    }
    pub fn time_grid(&self) -> &TimeGrid {
        &self.time
    }
    pub fn spatial_grid(&self) -> Option<&SpatialGrid> {
        self.grid.as_ref()
    }
    pub fn nu(&self) -> &BVPath {
        &self.nu
    }
    pub fn y0(&self) -> &[f64] {
        &self.y0
    }
    pub fn seed(&self) -> u64 {
        self.spec.seed
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `b(t, x)` written into `out`.
    #[inline]
    pub fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        match &self.drift {
            Drift::Zero => out.fill(0.0),
            Drift::Linear { a, c } => {
                for i in 0..self.m {
                    let mut v = c[i];
                    for j in 0..self.m {
                        v += a[(i, j)] * x[j];
                    }
                    out[i] = v;
                }
            }
            Drift::Cubic { coef, clip } => {
                for i in 0..self.m {
                    out[i] = (-coef * x[i] * x[i] * x[i]).clamp(-clip, *clip);
                }
            }
        }
    }

    /// `sigma(t, x)`, an `m x d` matrix.
    pub fn sigma(&self, _t: f64, _x: &[f64]) -> &DMatrix<f64> {
        &self.sigma
    }

    /// `a(t, x) = sigma sigma^T / 2`.
    pub fn diffusion(&self, _t: f64, _x: &[f64]) -> &DMatrix<f64> {
        &self.diffusion_a
    }

    /// `out += sigma(t, x) dw`.
    #[inline]
    pub fn add_sigma_dw(&self, _t: f64, _x: &[f64], dw: &[f64], out: &mut [f64]) {
        for i in 0..self.m {
            let mut v = 0.0;
            for j in 0..self.d {
                v += self.sigma[(i, j)] * dw[j];
            }
            out[i] += v;
        }
    }

    /// `h(t, x)` written into `out`.
    #[inline]
    pub fn observation(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        match &self.observation {
            Observation::Zero => out.fill(0.0),
            Observation::Linear { h, g } => {
                for l in 0..self.n {
                    let mut v = g[l];
                    for j in 0..self.m {
                        v += h[(l, j)] * x[j];
                    }
                    out[l] = v;
                }
            }
            Observation::Tanh { scale } => {
                for l in 0..self.n {
                    out[l] = (scale * x[l]).tanh();
                }
            }
        }
    }

    /// [`Self::drift`] over a row-major block of states.
    pub fn drift_batch(&self, t: f64, xs: &[f64], out: &mut [f64]) {
        match &self.drift {
            Drift::Zero => out.fill(0.0),
            Drift::Linear { a, c } if self.m == 1 => {
                let (a, c) = (a[(0, 0)], c[0]);
                for (o, x) in out.iter_mut().zip(xs) {
                    *o = c + a * x;
                }
            }
            Drift::Cubic { coef, clip } => {
                for (o, x) in out.iter_mut().zip(xs) {
                    *o = (-coef * x * x * x).clamp(-clip, *clip);
                }
            }
            Drift::Linear { .. } => {
                for (o, x) in out.chunks_mut(self.m).zip(xs.chunks(self.m)) {
                    self.drift(t, x, o);
                }
            }
        }
    }

    /// [`Self::observation`] over a row-major block of states.
    pub fn observation_batch(&self, t: f64, xs: &[f64], out: &mut [f64]) {
        match &self.observation {
            Observation::Zero => out.fill(0.0),
            Observation::Linear { h, g } if self.m == 1 && self.n == 1 => {
                let (h, g) = (h[(0, 0)], g[0]);
                for (o, x) in out.iter_mut().zip(xs) {
                    *o = g + h * x;
                }
            }
            Observation::Tanh { scale } => {
                for (o, x) in out.iter_mut().zip(xs) {
                    *o = (scale * x).tanh();
                }
            }
            Observation::Linear { .. } => {
                for (o, x) in out.chunks_mut(self.n).zip(xs.chunks(self.m)) {
                    self.observation(t, x, o);
                }
            }
        }
    }

    pub fn observation_is_zero(&self) -> bool {
        match &self.observation {
            Observation::Zero => true,
            Observation::Linear { h, g } => {
                h.iter().all(|&v| v == 0.0) && g.iter().all(|&v| v == 0.0)
            }
            Observation::Tanh { .. } => false,
        }
    }

    pub fn gamma(&self, t: f64) -> DMatrix<f64> {
        match &self.gamma {
            Gamma::Constant(g) => g.clone(),
            Gamma::TimeLinear(g0, g1) => g0 + g1 * t,
        }
    }

    /// `gamma^{-1}(t_k)` at time-grid node `k`.
    pub fn gamma_inv_at(&self, k: usize) -> Result<&DMatrix<f64>> {
        self.gamma_inv_nodes
            .get(k)
            .and_then(Option::as_ref)
            .ok_or_else(|| Error::SingularGamma(self.time.node(k.min(self.time.steps()))))
    }

    /// Linear-Gaussian parameters, if the scenario has that structure.
    pub fn linear_gaussian(&self) -> Option<LinearGaussian> {
        let (a, c) = match &self.drift {
            Drift::Zero => (DMatrix::zeros(self.m, self.m), DVector::zeros(self.m)),
            Drift::Linear { a, c } => (a.clone(), DVector::from_column_slice(c)),
            Drift::Cubic { .. } => return None,
        };
        let (h, g) = match &self.observation {
            Observation::Zero => (DMatrix::zeros(self.n, self.m), DVector::zeros(self.n)),
            Observation::Linear { h, g } => (h.clone(), DVector::from_column_slice(g)),
            Observation::Tanh { .. } => return None,
        };
        let (mean0, cov0) = match &self.xi {
            InitialLaw::Mixture(c) if c.len() == 1 => (c[0].mean.clone(), c[0].cov.clone()),
            _ => return None,
        };
        Some(LinearGaussian {
            a,
            c,
            sigma: self.sigma.clone(),
            h,
            g,
            mean0,
            cov0,
        })
    }

    /// Draw `X_{0-}` from the initial law.
    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> Result<()> {
        match &self.xi {
            InitialLaw::Mixture(comps) => {
                let comp = if comps.len() == 1 {
                    &comps[0]
                } else {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut chosen = &comps[comps.len() - 1];
                    for c in comps {
                        acc += c.weight;
                        if u < acc {
                            chosen = c;
                            break;
                        }
                    }
                    chosen
                };
                let z: Vec<f64> = (0..self.m).map(|_| rng.sample(StandardNormal)).collect();
                for i in 0..self.m {
                    let mut v = comp.mean[i];
                    for j in 0..self.m {
                        v += comp.sqrt[(i, j)] * z[j];
                    }
                    out[i] = v;
                }
                Ok(())
            }
            InitialLaw::Grid { cdf, .. } => {
                let grid = self.grid.as_ref().ok_or_else(|| {
                    Error::UnsupportedInitialLaw("grid law without a spatial grid".into())
                })?;
                let total = *cdf.last().unwrap_or(&0.0);
                if !(total > 0.0 && total.is_finite()) {
                    return Err(Error::UnsupportedInitialLaw("grid law has no mass".into()));
                }
                let u: f64 = rng.random::<f64>() * total;
                let k = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
                let idx = grid.multi_index(k);
                for i in 0..self.m {
                    let ax = grid.axis(i);
                    let h = ax.spacing();
                    let jitter: f64 = rng.random_range(-0.5..0.5);
                    out[i] = (ax.coord(idx[i]) + jitter * h).clamp(ax.lower, ax.upper);
                }
                Ok(())
            }
        }
    }

    /// Initial law sampled on the spatial grid (unnormalised values).
    pub fn initial_density(&self, grid: &SpatialGrid) -> Result<DensityField> {
        match &self.xi {
            InitialLaw::Mixture(comps) => {
                let mut values = vec![0.0; grid.len()];
                for c in comps {
                    let chol = c.cov.clone().cholesky().ok_or_else(|| {
                        Error::UnsupportedInitialLaw(
                            "initial covariance is singular (no square-integrable density)".into(),
                        )
                    })?;
                    let logdet: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
                    let norm =
                        c.weight * (-(0.5 * self.m as f64 * (2.0 * PI).ln() + 0.5 * logdet)).exp();
                    for (k, v) in values.iter_mut().enumerate() {
                        let p = grid.point(k);
                        let diff = DVector::from_fn(self.m, |i, _| p[i] - c.mean[i]);
                        let q = chol.solve(&diff).dot(&diff);
                        *v += norm * (-0.5 * q).exp();
                    }
                }
                DensityField::new(grid.clone(), values, 0.0)
            }
            InitialLaw::Grid { values, .. } => match &self.grid {
                Some(own) if own == grid => DensityField::new(grid.clone(), values.clone(), 0.0),
                _ => Err(Error::UnsupportedInitialLaw(
                    "grid initial law can only be used on the scenario's own grid".into(),
                )),
            },
        }
    }

    fn xi_square_integrable(&self) -> bool {
        match &self.xi {
            InitialLaw::Mixture(comps) => comps.iter().all(|c| c.cov.clone().cholesky().is_some()),
            InitialLaw::Grid { values, .. } => {
                values.iter().all(|v| v.is_finite() && *v >= 0.0) && values.iter().any(|&v| v > 0.0)
            }
        }
    }
}

fn build_initial_law(
    spec: &InitialLawSpec,
    m: usize,
    grid: Option<&SpatialGrid>,
) -> Result<InitialLaw> {
    let component =
        |weight: f64, mean: &Vec<f64>, cov: &Vec<Vec<f64>>| -> Result<GaussianComponent> {
            if mean.len() != m {
                return Err(Error::InvalidScenario(format!(
                    "xi mean must have {m} entries"
                )));
            }
            let cov = matrix(cov, m, m, "xi covariance")?;
            if (&cov - cov.transpose()).amax() > 1e-12 || min_eigenvalue(&cov) < -1e-12 {
                return Err(Error::InvalidScenario(
                    "xi covariance must be symmetric PSD".into(),
                ));
            }
            Ok(GaussianComponent {
                weight,
                mean: DVector::from_column_slice(mean),
                sqrt: psd_sqrt(&cov),
                cov,
            })
        };
    match spec {
        InitialLawSpec::Gaussian { mean, cov } => {
            Ok(InitialLaw::Mixture(vec![component(1.0, mean, cov)?]))
        }
        InitialLawSpec::Mixture { components } => {
            if components.is_empty() {
                return Err(Error::InvalidScenario(
                    "mixture needs at least one component".into(),
                ));
            }
            let total: f64 = components.iter().map(|c| c.weight).sum();
            if components.iter().any(|c| !(c.weight >= 0.0)) || !(total > 0.0 && total.is_finite())
            {
                return Err(Error::InvalidScenario(
                    "mixture weights must be nonnegative with positive sum".into(),
                ));
            }
            let comps = components
                .iter()
                .map(|c| component(c.weight / total, &c.mean, &c.cov))
                .collect::<Result<Vec<_>>>()?;
            Ok(InitialLaw::Mixture(comps))
        }
        InitialLawSpec::Grid { values } => {
            let grid = grid.ok_or_else(|| {
                Error::InvalidScenario("grid initial law needs a spatial grid".into())
            })?;
            if values.len() != grid.len() {
                return Err(Error::InvalidScenario(format!(
                    "grid initial law has {} values, grid has {} nodes",
                    values.len(),
                    grid.len()
                )));
            }
            let mut acc = 0.0;
            let cdf = values
                .iter()
                .zip(grid.weights())
                .map(|(v, w)| {
                    acc += (v * w).max(0.0);
                    acc
                })
                .collect();
            Ok(InitialLaw::Grid {
                values: values.clone(),
                cdf,
            })
        }
    }
}

/// One violated modelling constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Whether the initial law has a square-integrable density (needed by the grid solver).
    pub xi_square_integrable: bool,
}

impl ValidationReport {
    pub fn passes(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.passes() {
            Ok(())
        } else {
            Err(Error::ValidationFailed(
                self.violations.into_iter().map(|v| v.message).collect(),
            ))
        }
    }

    /// Stricter check for grid-solver runs.
    pub fn into_grid_result(mut self) -> Result<()> {
        if !self.xi_square_integrable {
            self.violations.push(Violation {
                constraint: "xi_density".into(),
                message: "initial law has no square-integrable density".into(),
            });
        }
        self.into_result()
    }
}

/// Check the modelling assumptions; never fails, returns the violations.
pub fn validate_scenario(s: &Scenario) -> ValidationReport {
    let mut violations = Vec::new();
    let mut push = |constraint: &str, message: String| {
        violations.push(Violation {
            constraint: constraint.into(),
            message,
        });
    };

    for i in 0..s.m {
        let tv = s.nu.total_variation(i);
        if tv > s.nu.fuel() * (1.0 + 1e-12) {
            push(
                "fuel",
                format!(
                    "fuel bound exceeded: |nu^{}|_T = {tv} > K = {}",
                    i + 1,
                    s.nu.fuel()
                ),
            );
        }
    }

    let mut worst_eig = f64::INFINITY;
    let mut asym = 0.0f64;
    for k in 0..=s.time.steps() {
        let g = s.gamma(s.time.node(k));
        asym = asym.max((&g - g.transpose()).amax());
        worst_eig = worst_eig.min(min_eigenvalue(&g));
    }
    if asym > 1e-12 {
        push(
            "gamma_symmetric",
            format!("gamma not symmetric (max asymmetry {asym:e})"),
        );
    }
    if !(worst_eig >= s.delta) {
        push(
            "gamma_pd",
            format!("gamma not uniformly positive definite (min eigenvalue {worst_eig:e} < delta = {:e})", s.delta),
        );
    }
    if !(s.delta > 0.0) {
        push(
            "gamma_pd",
            format!("delta must be positive, got {}", s.delta),
        );
    }

    if let (Some(bounds), Some(grid)) = (s.bounds, s.grid.as_ref()) {
        let mut max_b = 0.0f64;
        let mut max_a = 0.0f64;
        let mut max_h = 0.0f64;
        let mut b = vec![0.0; s.m];
        let mut h = vec![0.0; s.n];
        let samples = [0, s.time.steps() / 2, s.time.steps()];
        for &k in &samples {
            let t = s.time.node(k);
            for node in 0..grid.len() {
                let x = &grid.point(node)[..s.m];
                s.drift(t, x, &mut b);
                s.observation(t, x, &mut h);
                max_b = b.iter().fold(max_b, |acc, v| acc.max(v.abs()));
                max_h = h.iter().fold(max_h, |acc, v| acc.max(v.abs()));
                max_a = max_a.max(s.diffusion(t, x).amax());
            }
        }
        if max_b > bounds.k_b {
            push(
                "bound_b",
                format!(
                    "drift bound exceeded: max |b_i| = {max_b} > K_b = {}",
                    bounds.k_b
                ),
            );
        }
        if max_a > bounds.k_sigma {
            push(
                "bound_a",
                format!(
                    "diffusion bound exceeded: max |a_ij| = {max_a} > K_sigma = {}",
                    bounds.k_sigma
                ),
            );
        }
        if max_h > bounds.k_h {
            push(
                "bound_h",
                format!(
                    "observation bound exceeded: max |h_l| = {max_h} > K_h = {}",
                    bounds.k_h
                ),
            );
        }
    }

    ValidationReport {
        violations,
        xi_square_integrable: s.xi_square_integrable(),
    }
}
