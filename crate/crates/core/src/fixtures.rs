//! Built-in scenarios used by the check suites, the acceptance tests and
//! the Python bindings.

use crate::scenario::{
    Bounds, CoeffSpec, DiffusionSpec, Dims, DriftSpec, GammaSpec, GridSpec, InitialLawSpec, NuSpec,
    ObservationSpec, ScenarioSpec,
};

/// 1-D Ornstein-Uhlenbeck signal observed linearly: `b = -x`, `sigma = 1`,
/// `h = x`, `gamma = 1`, `xi = N(0, 1)`, `T = 1`, no input.
pub fn ou(steps: usize) -> ScenarioSpec {
    ScenarioSpec {
        name: Some("ou".into()),
        dims: Dims { m: 1, n: 1, d: 1 },
        horizon: 1.0,
        steps,
        grid: None,
        coeffs: CoeffSpec {
            b: DriftSpec::Linear {
                a: vec![vec![-1.0]],
                c: None,
            },
            sigma: DiffusionSpec::Scalar { s: 1.0 },
            h: ObservationSpec::Linear {
                h: vec![vec![1.0]],
                g: None,
            },
            gamma: GammaSpec::Scalar { g: 1.0 },
        },
        xi: InitialLawSpec::Gaussian {
            mean: vec![0.0],
            cov: vec![vec![1.0]],
        },
        nu: NuSpec::default(),
        fuel_k: 1.0,
        seed: 20_240_601,
        y0: None,
        delta: None,
        bounds: None,
    }
}

/// Linear-Gaussian scenario with a sloped continuous input and two jumps
/// (`+0.8` at `0.4`, `-0.5` at `0.7`) on `[-10, 10]`.
pub fn linear_with_jumps(nodes: usize, steps: usize) -> ScenarioSpec {
    let mut spec = ou(steps);
    spec.name = Some("linear_with_jumps".into());
    spec.grid = Some(GridSpec {
        lower: vec![-10.0],
        upper: vec![10.0],
        nodes: vec![nodes],
    });
    spec.nu = NuSpec {
        jumps: vec![(0.4, vec![0.8]), (0.7, vec![-0.5])],
        continuous: vec![(1.0, vec![0.3])],
    };
    spec.fuel_k = 2.0;
    spec
}

/// Nonlinear scenario: clipped cubic drift, `h = tanh x`, two off-grid
/// jumps, no continuous input.
pub fn nonlinear_with_jumps(nodes: usize, steps: usize) -> ScenarioSpec {
    ScenarioSpec {
        name: Some("nonlinear_with_jumps".into()),
        dims: Dims { m: 1, n: 1, d: 1 },
        horizon: 1.0,
        steps,
        grid: Some(GridSpec {
            lower: vec![-6.0],
            upper: vec![6.0],
            nodes: vec![nodes],
        }),
        coeffs: CoeffSpec {
            b: DriftSpec::Cubic {
                coef: 1.0,
                clip: 4.0,
            },
            sigma: DiffusionSpec::Scalar { s: 1.0 },
            h: ObservationSpec::Tanh { scale: 1.0 },
            gamma: GammaSpec::Scalar { g: 0.5 },
        },
        xi: InitialLawSpec::Gaussian {
            mean: vec![0.2],
            cov: vec![vec![0.5]],
        },
        nu: NuSpec {
            jumps: vec![(0.3, vec![0.61]), (0.65, vec![-0.47])],
            continuous: vec![],
        },
        fuel_k: 2.0,
        seed: 8_675_309,
        y0: None,
        delta: None,
        bounds: Some(Bounds {
            k_b: 4.0,
            k_sigma: 0.5,
            k_h: 1.0,
        }),
    }
}

/// `ou` with the observation switched off and a grid attached.
pub fn unobserved(nodes: usize, steps: usize) -> ScenarioSpec {
    let mut spec = linear_with_jumps(nodes, steps);
    spec.name = Some("unobserved".into());
    spec.coeffs.h = ObservationSpec::Zero;
    spec
}
