//! Finite-volume spatial operators with no-flux walls.
//!
//! Every operator is written as a difference of face fluxes, with the flux
//! through boundary faces fixed at zero. This is the mirrored-ghost-cell
//! Neumann condition, and it makes the discrete integral of each divergence
//! telescope to zero.

use thiserror::Error;

use crate::grid::{Field, Grid, GridError};
use crate::model::sensitivity;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscretizationError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("chemotaxis requires u >= 0; cell {cell} has u = {value}")]
    NegativeDensity { cell: usize, value: f64 },
    #[error("implicit step size must be positive, got {0}")]
    InvalidStep(f64),
    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:e}, target {tol:e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        tol: f64,
    },
}

/// Face-centred normal derivatives, one array per axis.
///
/// Entry `c` of axis `k` holds the derivative on the face between cell `c`
/// and its `+k` neighbour. Cells on the upper wall of axis `k` have no such
/// neighbour; their entry is the wall face and is always zero. Lower-wall
/// faces are implicit zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceVelocity {
    axes: Vec<Vec<f64>>,
}

impl FaceVelocity {
    pub fn axis(&self, axis: usize) -> &[f64] {
        &self.axes[axis]
    }

    pub fn ndim(&self) -> usize {
        self.axes.len()
    }

    /// Largest absolute face value over all axes.
    pub fn max_abs(&self) -> f64 {
        self.axes
            .iter()
            .flatten()
            .fold(0.0, |m: f64, g| m.max(g.abs()))
    }
}

/// Per-axis face fluxes -> cell divergence `Σ_k (F_{+k} - F_{-k}) / h_k`.
fn flux_divergence(face_flux: &[Vec<f64>], grid: &Grid) -> Field {
    let mut out = vec![0.0; grid.len()];
    for (c, slot) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (axis, flux) in face_flux.iter().enumerate() {
            let upper = flux[c];
            let lower = if grid.axis_index(c, axis) > 0 {
                flux[c - grid.stride(axis)]
            } else {
                0.0
            };
            acc += (upper - lower) / grid.spacing()[axis];
        }
        *slot = acc;
    }
    Field::from_vec(out)
}

/// Face differences `(f_{c+e_k} - f_c)/h_k`, zero on wall faces.
fn face_differences(vals: &[f64], grid: &Grid) -> Vec<Vec<f64>> {
    (0..grid.ndim())
        .map(|axis| {
            let n = grid.shape()[axis];
            let h = grid.spacing()[axis];
            let stride = grid.stride(axis);
            (0..vals.len())
                .map(|c| {
                    if grid.axis_index(c, axis) + 1 < n {
                        (vals[c + stride] - vals[c]) / h
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// `2·ndim + 1`-point Laplacian with homogeneous Neumann walls.
pub fn laplacian_neumann(field: &Field, grid: &Grid) -> Result<Field, DiscretizationError> {
    grid.check(field)?;
    Ok(flux_divergence(
        &face_differences(field.values(), grid),
        grid,
    ))
}

pub fn face_gradient(v: &Field, grid: &Grid) -> Result<FaceVelocity, DiscretizationError> {
    grid.check(v)?;
    Ok(FaceVelocity {
        axes: face_differences(v.values(), grid),
    })
}

pub(crate) fn check_nonnegative(u: &Field) -> Result<(), DiscretizationError> {
    match u.values().iter().position(|&x| x.is_nan() || x < 0.0) {
        Some(cell) => Err(DiscretizationError::NegativeDensity {
            cell,
            value: u[cell],
        }),
        None => Ok(()),
    }
}

/// Upwinded face fluxes `φ(u_donor) ∂v/∂n` for a precomputed face gradient.
pub(crate) fn chemotaxis_fluxes(
    u: &Field,
    grad_v: &FaceVelocity,
    grid: &Grid,
    alpha: f64,
) -> Vec<Vec<f64>> {
    let u = u.values();
    grad_v
        .axes
        .iter()
        .enumerate()
        .map(|(axis, g)| {
            let stride = grid.stride(axis);
            let n = grid.shape()[axis];
            g.iter()
                .enumerate()
                .map(|(c, &gv)| {
                    if grid.axis_index(c, axis) + 1 >= n {
                        return 0.0;
                    }
                    let donor = if gv >= 0.0 { u[c] } else { u[c + stride] };
                    sensitivity(donor, alpha) * gv
                })
                .collect()
        })
        .collect()
}

/// Conservative divergence of the chemotactic flux `φ(u)∇v`, with `φ(u)`
/// taken from the upwind (donor) cell of each face.
///
/// The transport contribution to `u_t` is the negative of the returned field.
pub fn chemotaxis_divergence(
    u: &Field,
    v: &Field,
    grid: &Grid,
    alpha: f64,
) -> Result<Field, DiscretizationError> {
    grid.check(u)?;
    check_nonnegative(u)?;
    let grad_v = face_gradient(v, grid)?;
    Ok(flux_divergence(
        &chemotaxis_fluxes(u, &grad_v, grid, alpha),
        grid,
    ))
}

/// Default relative residual tolerance for [`helmholtz_solve`].
pub const DEFAULT_SOLVER_TOL: f64 = 1e-10;

/// The SPD operator `shift·I - tau·Δ_N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HelmholtzOperator {
    pub shift: f64,
    pub tau: f64,
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Field,
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl HelmholtzOperator {
    pub fn new(shift: f64, tau: f64) -> Result<Self, DiscretizationError> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(DiscretizationError::InvalidStep(tau));
        }
        if !(shift.is_finite() && shift > 0.0) {
            return Err(DiscretizationError::InvalidStep(shift));
        }
        Ok(Self { shift, tau })
    }

    /// `out = (shift·I - tau·Δ_N) x`
    pub fn apply(&self, x: &Field, grid: &Grid) -> Result<Field, DiscretizationError> {
        let lap = laplacian_neumann(x, grid)?;
        Ok(x.axpby(self.shift, &lap, -self.tau))
    }

    fn diagonal(&self, grid: &Grid) -> Vec<f64> {
        (0..grid.len())
            .map(|c| {
                let mut d = self.shift;
                for axis in 0..grid.ndim() {
                    let i = grid.axis_index(c, axis);
                    let n = grid.shape()[axis];
                    let h = grid.spacing()[axis];
                    let neighbours = usize::from(i > 0) + usize::from(i + 1 < n);
                    d += self.tau * neighbours as f64 / (h * h);
                }
                d
            })
            .collect()
    }

    /// Iteration cap `10·(cells)^{1/ndim}`.
    pub fn max_iterations(grid: &Grid) -> usize {
        let per_axis = (grid.len() as f64).powf(1.0 / grid.ndim() as f64).round();
        (10.0 * per_axis) as usize
    }

    /// Jacobi-preconditioned conjugate gradients until
    /// `‖A x - rhs‖₂ <= tol·‖rhs‖₂`.
    pub fn solve(
        &self,
        rhs: &Field,
        grid: &Grid,
        tol: f64,
    ) -> Result<Solution, DiscretizationError> {
        grid.check(rhs)?;
        let b = rhs.values();
        let b_norm = dot(b, b).sqrt();
        if b_norm == 0.0 {
            return Ok(Solution {
                x: Field::zeros(grid),
                iterations: 0,
                relative_residual: 0.0,
            });
        }
        let diag = self.diagonal(grid);
        let max_iter = Self::max_iterations(grid);

        // Start from rhs/shift: exact for spatially constant data.
        let mut x = rhs.map(|r| r / self.shift);
        let ax = self.apply(&x, grid)?;
        let mut r: Vec<f64> = b.iter().zip(ax.values()).map(|(b, a)| b - a).collect();
        let mut res = dot(&r, &r).sqrt() / b_norm;
        if res <= tol {
            return Ok(Solution {
                x,
                iterations: 0,
                relative_residual: res,
            });
        }
        let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
        let mut p = Field::from_vec(z.clone());
        let mut rz = dot(&r, &z);

        for it in 1..=max_iter {
            let ap = self.apply(&p, grid)?;
            let pap = dot(p.values(), ap.values());
            if pap.is_nan() || pap <= 0.0 {
                break;
            }
            let step = rz / pap;
            for (xi, pi) in x.values_mut().iter_mut().zip(p.values()) {
                *xi += step * pi;
            }
            for (ri, api) in r.iter_mut().zip(ap.values()) {
                *ri -= step * api;
            }
            res = dot(&r, &r).sqrt() / b_norm;
            if res <= tol {
                return Ok(Solution {
                    x,
                    iterations: it,
                    relative_residual: res,
                });
            }
            for ((zi, ri), d) in z.iter_mut().zip(&r).zip(&diag) {
                *zi = ri / d;
            }
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for (pi, zi) in p.values_mut().iter_mut().zip(&z) {
                *pi = zi + beta * *pi;
            }
        }
        Err(DiscretizationError::NotConverged {
            iterations: max_iter,
            residual: res,
            tol,
        })
    }
}

/// Solves `(I - tau·Δ_N) x = rhs`.
pub fn helmholtz_solve(
    rhs: &Field,
    tau: f64,
    grid: &Grid,
    tol: f64,
) -> Result<Field, DiscretizationError> {
    Ok(HelmholtzOperator::new(1.0, tau)?.solve(rhs, grid, tol)?.x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{integrate, lp_norm};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(grid: &Grid, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Field {
        Field::from_vec((0..grid.len()).map(|_| rng.gen_range(lo..hi)).collect())
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        let g = Grid::unit(&[5, 4, 3]).unwrap();
        let lap = laplacian_neumann(&Field::constant(&g, 2.75), &g).unwrap();
        assert!(lap.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn laplacian_of_quadratic_is_two_in_the_interior() {
        let g = Grid::uniform(1, 10).unwrap();
        let f = Field::from_fn(&g, |p| p[0] * p[0]);
        let lap = laplacian_neumann(&f, &g).unwrap();
        for c in 1..9 {
            assert!((lap[c] - 2.0).abs() < 1e-10, "cell {c}: {}", lap[c]);
        }
        // x² has zero slope at x = 0 but not at x = 1, where the wall flux differs.
        assert!((lap[9] - 2.0).abs() > 0.1);
    }

    #[test]
    fn laplacian_integrates_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for shape in [vec![17], vec![6, 9], vec![3, 5, 4]] {
            let g = Grid::unit(&shape).unwrap();
            let f = random_field(&g, &mut rng, -3.0, 3.0);
            let total = integrate(&laplacian_neumann(&f, &g).unwrap(), &g).unwrap();
            assert!(total.abs() <= 1e-12 * lp_norm(&f, &g, 1.0).unwrap() * g.len() as f64);
        }
    }

    #[test]
    fn face_gradient_examples() {
        let g = Grid::uniform(1, 12).unwrap();
        let flat = face_gradient(&Field::constant(&g, 4.0), &g).unwrap();
        assert_eq!(flat.max_abs(), 0.0);

        let s = 2.0;
        let lin = face_gradient(&Field::from_fn(&g, |p| s * p[0]), &g).unwrap();
        for c in 0..11 {
            assert!((lin.axis(0)[c] - s).abs() < 1e-12);
        }
        assert_eq!(lin.axis(0)[11], 0.0);

        let g = Grid::unit(&[4, 5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let fv = face_gradient(&random_field(&g, &mut rng, 0.0, 1.0), &g).unwrap();
        for c in 0..g.len() {
            for axis in 0..2 {
                if g.axis_index(c, axis) == g.shape()[axis] - 1 {
                    assert_eq!(fv.axis(axis)[c], 0.0);
                }
            }
        }
    }

    #[test]
    fn chemotaxis_trivial_cases() {
        let g = Grid::unit(&[6, 5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_field(&g, &mut rng, 0.0, 2.0);
        let v = random_field(&g, &mut rng, 0.0, 2.0);
        let flat = chemotaxis_divergence(&u, &Field::constant(&g, 1.3), &g, 0.8).unwrap();
        assert!(flat.values().iter().all(|&x| x == 0.0));
        let empty = chemotaxis_divergence(&Field::zeros(&g), &v, &g, 0.8).unwrap();
        assert!(empty.values().iter().all(|&x| x == 0.0));

        let mut neg = u.clone();
        neg[4] = -1e-9;
        assert!(matches!(
            chemotaxis_divergence(&neg, &v, &g, 1.0),
            Err(DiscretizationError::NegativeDensity { cell: 4, .. })
        ));
    }

    #[test]
    fn chemotaxis_matches_analytic_divergence() {
        // u ≡ 1, alpha = 1: φ ≡ 1/2, so ∇·(φ∇v) = (1/2) v'' = -(π²/2) cos(πx).
        let g = Grid::uniform(1, 128).unwrap();
        let u = Field::constant(&g, 1.0);
        let v = Field::from_fn(&g, |p| (PI * p[0]).cos());
        let div = chemotaxis_divergence(&u, &v, &g, 1.0).unwrap();
        let amplitude = PI * PI / 2.0;
        let max_err = (0..g.len())
            .map(|c| (div[c] + amplitude * (PI * g.cell_center(c)[0]).cos()).abs())
            .fold(0.0, f64::max);
        assert!(max_err <= 0.05 * amplitude, "max error {max_err}");
    }

    #[test]
    fn chemotaxis_moves_mass_up_the_gradient() {
        let g = Grid::uniform(1, 8).unwrap();
        let u = Field::constant(&g, 1.0);
        let v = Field::from_fn(&g, |p| p[0]);
        let div = chemotaxis_divergence(&u, &v, &g, 0.0).unwrap();
        // -div is the rate of change: left wall loses, right wall gains.
        assert!(div[0] > 0.0);
        assert!(div[7] < 0.0);
        assert!(div[3].abs() < 1e-12);
    }

    fn mirror(f: &Field, grid: &Grid, axis: usize) -> Field {
        let n = grid.shape()[axis];
        Field::from_vec(
            (0..grid.len())
                .map(|c| {
                    let mut idx = grid.multi_index(c);
                    idx[axis] = n - 1 - idx[axis];
                    f[grid.linear_index(&idx)]
                })
                .collect(),
        )
    }

    #[test]
    fn chemotaxis_commutes_with_mirroring() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = Grid::unit(&[5, 4, 6]).unwrap();
        let u = random_field(&g, &mut rng, 0.0, 3.0);
        let v = random_field(&g, &mut rng, 0.0, 3.0);
        let base = chemotaxis_divergence(&u, &v, &g, 0.9).unwrap();
        for axis in 0..3 {
            let got = chemotaxis_divergence(&mirror(&u, &g, axis), &mirror(&v, &g, axis), &g, 0.9)
                .unwrap();
            assert_eq!(got, mirror(&base, &g, axis), "axis {axis}");
        }
    }

    #[test]
    fn helmholtz_constant_rhs() {
        let g = Grid::unit(&[8, 6]).unwrap();
        let x = helmholtz_solve(&Field::constant(&g, 3.5), 0.2, &g, 1e-12).unwrap();
        assert!(x.values().iter().all(|&v| (v - 3.5).abs() < 1e-14));
    }

    #[test]
    fn helmholtz_cosine_mode() {
        let g = Grid::uniform(1, 64).unwrap();
        let tau = 0.01;
        let rhs = Field::from_fn(&g, |p| (1.0 + tau * PI * PI) * (PI * p[0]).cos());
        let x = helmholtz_solve(&rhs, tau, &g, 1e-12).unwrap();
        // Discrete eigenvalue of cos(πx): (2 sin(πh/2)/h)², i.e. π² up to O(h²).
        let h = 1.0 / 64.0;
        let lambda_h = (2.0 * (PI * h / 2.0).sin() / h).powi(2);
        let ratio = (1.0 + tau * PI * PI) / (1.0 + tau * lambda_h);
        let bound = (ratio - 1.0).abs() + 1e-9;
        for c in 0..g.len() {
            let exact = (PI * g.cell_center(c)[0]).cos();
            assert!((x[c] - exact).abs() <= bound, "cell {c}");
        }
    }

    #[test]
    fn helmholtz_residual_round_trip_and_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = Grid::unit(&[9, 7]).unwrap();
        let rhs = random_field(&g, &mut rng, -1.0, 4.0);
        let tol = 1e-10;
        let op = HelmholtzOperator::new(1.0, 0.05).unwrap();
        let sol = op.solve(&rhs, &g, tol).unwrap();
        let back = op.apply(&sol.x, &g).unwrap();
        let res = back.axpby(1.0, &rhs, -1.0);
        assert!(lp_norm(&res, &g, 2.0).unwrap() <= tol * lp_norm(&rhs, &g, 2.0).unwrap());
        let m_x = integrate(&sol.x, &g).unwrap();
        let m_b = integrate(&rhs, &g).unwrap();
        assert!((m_x - m_b).abs() < 1e-8);
    }

    #[test]
    fn helmholtz_rejects_bad_tau_and_reports_nonconvergence() {
        let g = Grid::uniform(1, 16).unwrap();
        let rhs = Field::from_fn(&g, |p| p[0]);
        assert!(matches!(
            helmholtz_solve(&rhs, 0.0, &g, 1e-10),
            Err(DiscretizationError::InvalidStep(_))
        ));
        // Ill-conditioned operator and an unreachable tolerance.
        assert!(matches!(
            helmholtz_solve(&rhs, 1e12, &g, 1e-300),
            Err(DiscretizationError::NotConverged { .. })
        ));
    }

    /// Dense assembly of `I - tau Δ_N` from unit-vector probes of the Laplacian
    /// stencil written out independently, solved by LU.
    fn dense_solve(rhs: &Field, tau: f64, g: &Grid) -> Vec<f64> {
        let n = g.len();
        let mut a = nalgebra::DMatrix::<f64>::identity(n, n);
        for c in 0..n {
            let idx = g.multi_index(c);
            for axis in 0..g.ndim() {
                let h2 = g.spacing()[axis].powi(2);
                for dir in [-1i64, 1] {
                    let j = idx[axis] as i64 + dir;
                    if j < 0 || j >= g.shape()[axis] as i64 {
                        continue;
                    }
                    let mut nb = idx.clone();
                    nb[axis] = j as usize;
                    let nc = g.linear_index(&nb);
                    a[(c, c)] += tau / h2;
                    a[(c, nc)] -= tau / h2;
                }
            }
        }
        let b = nalgebra::DVector::from_column_slice(rhs.values());
        a.lu().solve(&b).unwrap().iter().copied().collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn helmholtz_agrees_with_dense_solve(
            seed in any::<u64>(),
            shape_ix in 0usize..4,
            tau in 1e-4f64..0.05,
        ) {
            let shapes = [vec![512], vec![16, 32], vec![8, 8, 8], vec![3, 7, 5]];
            let g = Grid::unit(&shapes[shape_ix]).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rhs = random_field(&g, &mut rng, -2.0, 2.0);
            let x = HelmholtzOperator::new(1.0, tau).unwrap().solve(&rhs, &g, DEFAULT_SOLVER_TOL).unwrap().x;
            let oracle = dense_solve(&rhs, tau, &g);
            for (a, b) in x.values().iter().zip(&oracle) {
                prop_assert!((a - b).abs() <= 1e-8, "{} vs {}", a, b);
            }
        }

        #[test]
        fn conservative_operators_integrate_to_zero(seed in any::<u64>(), ndim in 1usize..=3, alpha in 0.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let shape: Vec<usize> = (0..ndim).map(|_| rng.gen_range(3..9)).collect();
            let g = Grid::unit(&shape).unwrap();
            let u = random_field(&g, &mut rng, 0.0, 5.0);
            let v = random_field(&g, &mut rng, 0.0, 5.0);
            let scale = 1e-12 * g.len() as f64;
            let lap = integrate(&laplacian_neumann(&u, &g).unwrap(), &g).unwrap();
            prop_assert!(lap.abs() <= scale * lp_norm(&u, &g, 1.0).unwrap());
            let chem = integrate(&chemotaxis_divergence(&u, &v, &g, alpha).unwrap(), &g).unwrap();
            prop_assert!(chem.abs() <= scale * lp_norm(&u, &g, 1.0).unwrap().max(lp_norm(&v, &g, 1.0).unwrap()));
        }

        #[test]
        fn upwind_update_keeps_u_nonnegative(seed in any::<u64>(), alpha in 0.0f64..3.0, frac in 0.0f64..0.99) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = Grid::unit(&[7, 6]).unwrap();
            let u = random_field(&g, &mut rng, 0.0, 4.0);
            let v = random_field(&g, &mut rng, 0.0, 4.0);
            // Admissible transport step: outflow through 2·ndim faces at the
            // largest face speed φ(u)/u·|∇v| <= |∇v| stays below the cell content.
            let speed = face_gradient(&v, &g).unwrap().max_abs();
            let dt = frac * g.min_spacing() / (2.0 * g.ndim() as f64 * speed);
            let div = chemotaxis_divergence(&u, &v, &g, alpha).unwrap();
            let next = u.axpby(1.0, &div, -dt);
            prop_assert!(next.min() >= 0.0, "min {}", next.min());
        }
    }
}
