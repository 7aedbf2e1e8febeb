//! Finite-difference forms of the signal generator and its adjoint.

use crate::grid::SpatialGrid;
use crate::scenario::Scenario;

/// Per-node coefficients of the discrete adjoint generator
/// `A*p = -sum_i d_i(b_i p) + sum_ij d_ij(a_ij p)` with zero values
/// outside the grid.
///
/// Row `j` holds the coefficients applied to `p` at `neighbors[j * slots + s]`;
/// slots whose neighbour falls outside the grid carry a zero coefficient.
#[derive(Debug, Clone)]
pub struct GeneratorStencil {
    slots: usize,
    neighbors: Vec<u32>,
    coeffs: Vec<f64>,
}

impl GeneratorStencil {
    pub fn build(s: &Scenario, grid: &SpatialGrid, t: f64) -> Self {
        let m = grid.dim();
        let len = grid.len();
        let slots = 3usize.pow(m as u32);
        let mut neighbors = vec![0u32; len * slots];
        let mut coeffs = vec![0.0; len * slots];

        let mut drift = vec![0.0; len * m];
        let mut diff = vec![0.0; len * m * m];
        for k in 0..len {
            let x = &grid.point(k)[..m];
            s.drift(t, x, &mut drift[k * m..(k + 1) * m]);
            let a = s.diffusion(t, x);
            for i in 0..m {
                for j in 0..m {
                    diff[k * m * m + i * m + j] = a[(i, j)];
                }
            }
        }

        let nodes: Vec<usize> = grid.axes().iter().map(|a| a.nodes).collect();
        let h: Vec<f64> = (0..m).map(|i| grid.spacing(i)).collect();
        let strides: Vec<usize> = (0..m).map(|i| grid.stride(i)).collect();
        // slot index of an offset vector (each entry in -1..=1)
        let slot_of =
            |off: &[isize]| -> usize { off.iter().fold(0, |acc, &o| acc * 3 + (o + 1) as usize) };

        for row in 0..len {
            let idx = grid.multi_index(row);
            for slot in 0..slots {
                let mut off = [0isize; 2];
                let mut rem = slot;
                for i in (0..m).rev() {
                    off[i] = (rem % 3) as isize - 1;
                    rem /= 3;
                }
                let inside = (0..m).all(|i| {
                    let p = idx[i] as isize + off[i];
                    p >= 0 && (p as usize) < nodes[i]
                });
                neighbors[row * slots + slot] = if inside {
                    let mut col = row as isize;
                    for i in 0..m {
                        col += off[i] * strides[i] as isize;
                    }
                    col as u32
                } else {
                    row as u32
                };
            }
            let mut add = |off: &[isize], value: f64| {
                let slot = slot_of(off);
                if neighbors[row * slots + slot] as usize != row || off.iter().all(|&o| o == 0) {
                    coeffs[row * slots + slot] += value;
                }
            };
            let at = |col: usize, i: usize, j: usize| diff[col * m * m + i * m + j];
            for i in 0..m {
                let mut plus = [0isize; 2];
                plus[i] = 1;
                let mut minus = [0isize; 2];
                minus[i] = -1;
                let p_slot = row * slots + slot_of(&plus[..m]);
                let m_slot = row * slots + slot_of(&minus[..m]);
                let p_col = neighbors[p_slot] as usize;
                let m_col = neighbors[m_slot] as usize;
                // -d_i(b_i p), central
                add(&plus[..m], -drift[p_col * m + i] / (2.0 * h[i]));
                add(&minus[..m], drift[m_col * m + i] / (2.0 * h[i]));
                // d_ii(a_ii p)
                let h2 = h[i] * h[i];
                add(&plus[..m], at(p_col, i, i) / h2);
                add(&minus[..m], at(m_col, i, i) / h2);
                add(&[0, 0][..m], -2.0 * at(row, i, i) / h2);
            }
            for i in 0..m {
                for j in 0..m {
                    if i == j {
                        continue;
                    }
                    let denom = 4.0 * h[i] * h[j];
                    for (si, sj, sign) in [
                        (1isize, 1isize, 1.0),
                        (1, -1, -1.0),
                        (-1, 1, -1.0),
                        (-1, -1, 1.0),
                    ] {
                        let mut off = [0isize; 2];
                        off[i] = si;
                        off[j] = sj;
                        let col = neighbors[row * slots + slot_of(&off[..m])] as usize;
                        add(&off[..m], sign * at(col, i, j) / denom);
                    }
                }
            }
        }
        Self {
            slots,
            neighbors,
            coeffs,
        }
    }

    /// `out = p + dt * A* p`.
    pub fn explicit_step(&self, p: &[f64], dt: f64, out: &mut [f64]) {
        let s = self.slots;
        for (row, o) in out.iter_mut().enumerate() {
            let c = &self.coeffs[row * s..(row + 1) * s];
            let nb = &self.neighbors[row * s..(row + 1) * s];
            let mut acc = 0.0;
            for k in 0..s {
                acc += c[k] * p[nb[k] as usize];
            }
            *o = p[row] + dt * acc;
        }
    }

    /// `A* p`.
    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        let s = self.slots;
        (0..p.len())
            .map(|row| {
                (0..s)
                    .map(|k| self.coeffs[row * s + k] * p[self.neighbors[row * s + k] as usize])
                    .sum()
            })
            .collect()
    }

    /// Column sums of the discrete adjoint; zero away from the boundary.
    pub fn column_sums(&self) -> Vec<f64> {
        let len = self.coeffs.len() / self.slots;
        let mut sums = vec![0.0; len];
        for row in 0..len {
            for k in 0..self.slots {
                sums[self.neighbors[row * self.slots + k] as usize] +=
                    self.coeffs[row * self.slots + k];
            }
        }
        sums
    }
}

/// First derivative of `f` along `axis`: central inside, second-order
/// one-sided at the two ends.
pub fn partial(grid: &SpatialGrid, f: &[f64], axis: usize) -> Vec<f64> {
    let n = grid.axis(axis).nodes;
    let h = grid.spacing(axis);
    let stride = grid.stride(axis);
    (0..f.len())
        .map(|k| {
            let i = grid.multi_index(k)[axis];
            let at = |o: isize| f[(k as isize + o * stride as isize) as usize];
            if i == 0 {
                (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
            } else if i + 1 == n {
                (3.0 * at(0) - 4.0 * at(-1) + at(-2)) / (2.0 * h)
            } else {
                (at(1) - at(-1)) / (2.0 * h)
            }
        })
        .collect()
}

/// Second derivative of `f` along `axis`; the boundary rows reuse the
/// neighbouring interior stencil.
pub fn second_partial(grid: &SpatialGrid, f: &[f64], axis: usize) -> Vec<f64> {
    let n = grid.axis(axis).nodes;
    let h = grid.spacing(axis);
    let stride = grid.stride(axis) as isize;
    (0..f.len())
        .map(|k| {
            let i = grid.multi_index(k)[axis];
            let c = k as isize
                + if i == 0 {
                    stride
                } else if i + 1 == n {
                    -stride
                } else {
                    0
                };
            let at = |o: isize| f[(c + o * stride) as usize];
            (at(1) - 2.0 * at(0) + at(-1)) / (h * h)
        })
        .collect()
}

/// `A phi = b . D phi + tr(D^2 phi a)` by finite differences.
pub fn generator_apply(s: &Scenario, grid: &SpatialGrid, t: f64, phi: &[f64]) -> Vec<f64> {
    let m = grid.dim();
    let grads: Vec<Vec<f64>> = (0..m).map(|i| partial(grid, phi, i)).collect();
    let mut hess: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); m]; m];
    for i in 0..m {
        hess[i][i] = second_partial(grid, phi, i);
        for j in 0..i {
            let mixed = partial(grid, &grads[i], j);
            hess[i][j] = mixed.clone();
            hess[j][i] = mixed;
        }
    }
    let mut b = vec![0.0; m];
    (0..phi.len())
        .map(|k| {
            let x = &grid.point(k)[..m];
            s.drift(t, x, &mut b);
            let a = s.diffusion(t, x);
            let mut v = 0.0;
            for i in 0..m {
                v += b[i] * grads[i][k];
                for j in 0..m {
                    v += a[(i, j)] * hess[i][j][k];
                }
            }
            v
        })
        .collect()
}
