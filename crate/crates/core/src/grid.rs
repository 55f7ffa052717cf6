//! Cell-centered uniform Cartesian meshes on boxes, per-cell fields, and
//! midpoint quadrature.

use std::ops::{Index, IndexMut};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid dimension must be 1, 2 or 3, got {0}")]
    InvalidDimension(usize),
    #[error("axis {axis} has {cells} cells; at least 3 are required")]
    TooFewCells { axis: usize, cells: usize },
    #[error("axis {axis} has length {length}; lengths must be finite and positive")]
    InvalidLength { axis: usize, length: f64 },
    #[error("expected {expected} entries per axis list, got {got}")]
    AxisCount { expected: usize, got: usize },
    #[error("grid has too many cells")]
    TooLarge,
    #[error("field has {got} values but the grid has {expected} cells")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("norm exponent must be >= 1, got {0}")]
    InvalidExponent(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    shape: Vec<usize>,
    lengths: Vec<f64>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
    cell_volume: f64,
    len: usize,
}

impl Grid {
    /// Box `[0, L_0] x ... x [0, L_{d-1}]` split into `shape[k]` cells along axis `k`.
    pub fn new(shape: &[usize], lengths: &[f64]) -> Result<Self, GridError> {
        let ndim = shape.len();
        if !(1..=3).contains(&ndim) {
            return Err(GridError::InvalidDimension(ndim));
        }
        if lengths.len() != ndim {
            return Err(GridError::AxisCount {
                expected: ndim,
                got: lengths.len(),
            });
        }
        for (axis, (&cells, &length)) in shape.iter().zip(lengths).enumerate() {
            if cells < 3 {
                return Err(GridError::TooFewCells { axis, cells });
            }
            if !(length.is_finite() && length > 0.0) {
                return Err(GridError::InvalidLength { axis, length });
            }
        }
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &s| acc.checked_mul(s))
            .filter(|&n| n <= isize::MAX as usize / 8)
            .ok_or(GridError::TooLarge)?;
        let spacing: Vec<f64> = shape
            .iter()
            .zip(lengths)
            .map(|(&s, &l)| l / s as f64)
            .collect();
        let mut strides = vec![1; ndim];
        for k in (0..ndim.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * shape[k + 1];
        }
        let cell_volume = spacing.iter().product();
        Ok(Self {
            shape: shape.to_vec(),
            lengths: lengths.to_vec(),
            spacing,
            strides,
            cell_volume,
            len,
        })
    }

    /// Unit-length box.
    pub fn unit(shape: &[usize]) -> Result<Self, GridError> {
        Self::new(shape, &vec![1.0; shape.len()])
    }

    /// Unit box with `cells` cells along each of `ndim` axes.
    pub fn uniform(ndim: usize, cells: usize) -> Result<Self, GridError> {
        Self::unit(&vec![cells; ndim])
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Distance between linearly-indexed neighbours along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    /// `|Ω|`
    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Index of `cell` along `axis`.
    #[inline]
    pub fn axis_index(&self, cell: usize, axis: usize) -> usize {
        (cell / self.strides[axis]) % self.shape[axis]
    }

    pub fn multi_index(&self, cell: usize) -> Vec<usize> {
        (0..self.ndim()).map(|k| self.axis_index(cell, k)).collect()
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    /// Coordinates of the centre of `cell`.
    pub fn cell_center(&self, cell: usize) -> Vec<f64> {
        (0..self.ndim())
            .map(|k| (self.axis_index(cell, k) as f64 + 0.5) * self.spacing[k])
            .collect()
    }

    pub(crate) fn check(&self, field: &Field) -> Result<(), GridError> {
        if field.len() != self.len {
            return Err(GridError::ShapeMismatch {
                expected: self.len,
                got: field.len(),
            });
        }
        Ok(())
    }
}

/// One scalar per cell, row-major over the grid shape (last axis fastest).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Field(Vec<f64>);

impl Field {
    pub fn zeros(grid: &Grid) -> Self {
        Self(vec![0.0; grid.len()])
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        Self(vec![value; grid.len()])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Self(values)
    }

    /// Samples `f` at every cell centre.
    pub fn from_fn(grid: &Grid, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        Self((0..grid.len()).map(|c| f(&grid.cell_center(c))).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    /// Elementwise `a*self + b*other`.
    pub fn axpby(&self, a: f64, other: &Field, b: f64) -> Field {
        Field(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        )
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field(self.0.iter().map(|&x| f(x)).collect())
    }
}

impl Index<usize> for Field {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Field {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// Solution triple `(u, v, w)` at time `t`: healthy cells, infected cells, virus/cytokine.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub u: Field,
    pub v: Field,
    pub w: Field,
    pub t: f64,
}

impl State {
    pub fn new(u: Field, v: Field, w: Field, t: f64) -> Self {
        Self { u, v, w, t }
    }

    pub fn uniform(grid: &Grid, u: f64, v: f64, w: f64) -> Self {
        Self {
            u: Field::constant(grid, u),
            v: Field::constant(grid, v),
            w: Field::constant(grid, w),
            t: 0.0,
        }
    }

    pub fn fields(&self) -> [&Field; 3] {
        [&self.u, &self.v, &self.w]
    }

    pub fn check(&self, grid: &Grid) -> Result<(), GridError> {
        self.fields().into_iter().try_for_each(|f| grid.check(f))
    }

    /// Smallest value over all three components.
    pub fn min_value(&self) -> f64 {
        self.fields()
            .into_iter()
            .map(Field::min)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Midpoint rule: `cell_volume * Σ values`.
pub fn integrate(field: &Field, grid: &Grid) -> Result<f64, GridError> {
    grid.check(field)?;
    Ok(grid.cell_volume() * field.values().iter().sum::<f64>())
}

/// Norm exponent for [`lp_norm`]; use `f64::INFINITY` for the max norm.
pub fn lp_norm(field: &Field, grid: &Grid, p: f64) -> Result<f64, GridError> {
    grid.check(field)?;
    if p.is_nan() || p < 1.0 {
        return Err(GridError::InvalidExponent(p));
    }
    let vals = field.values();
    if p.is_infinite() {
        return Ok(vals.iter().fold(0.0, |m, x| m.max(x.abs())));
    }
    let sum: f64 = if p == 1.0 {
        vals.iter().map(|x| x.abs()).sum()
    } else if p == 2.0 {
        vals.iter().map(|x| x * x).sum()
    } else {
        vals.iter().map(|x| x.abs().powf(p)).sum()
    };
    Ok((sum * grid.cell_volume()).powf(1.0 / p))
}

/// Discrete `∫|∇f|²` from face differences.
///
/// Each interior face along axis `k` contributes `((f_r - f_l)/h_k)²` weighted by
/// `cell_volume * N_k/(N_k - 1)`, so that the interior faces of each axis
/// carry the full domain volume. Boundary faces have zero normal derivative.
/// Exact for linear fields.
pub fn grad_norm_sq(field: &Field, grid: &Grid) -> Result<f64, GridError> {
    grid.check(field)?;
    let vals = field.values();
    let mut total = 0.0;
    for axis in 0..grid.ndim() {
        let n = grid.shape()[axis];
        let h = grid.spacing()[axis];
        let stride = grid.stride(axis);
        let mut acc = 0.0;
        for c in 0..vals.len() {
            if grid.axis_index(c, axis) + 1 < n {
                let d = (vals[c + stride] - vals[c]) / h;
                acc += d * d;
            }
        }
        total += acc * grid.cell_volume() * n as f64 / (n - 1) as f64;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn construction_checks() {
        assert!(matches!(
            Grid::uniform(0, 8),
            Err(GridError::InvalidDimension(0))
        ));
        assert!(matches!(
            Grid::uniform(4, 8),
            Err(GridError::InvalidDimension(4))
        ));
        assert!(matches!(
            Grid::unit(&[8, 2]),
            Err(GridError::TooFewCells { axis: 1, cells: 2 })
        ));
        assert!(Grid::new(&[4, 4], &[1.0, 0.0]).is_err());
        assert!(Grid::new(&[4, 4], &[1.0]).is_err());
        assert!(Grid::new(&[usize::MAX, 4], &[1.0, 1.0]).is_err());

        let g = Grid::new(&[4, 5, 8], &[2.0, 1.0, 4.0]).unwrap();
        assert_eq!(g.len(), 160);
        assert_eq!(g.spacing(), &[0.5, 0.2, 0.5]);
        assert!((g.cell_volume() - 0.05).abs() < 1e-16);
        assert_eq!(g.stride(0), 40);
        assert_eq!(g.stride(2), 1);
        assert_eq!(g.multi_index(g.linear_index(&[3, 1, 6])), vec![3, 1, 6]);
    }

    #[test]
    fn integrate_examples() {
        let g = Grid::uniform(2, 7).unwrap();
        let one = Field::constant(&g, 1.0);
        assert!((integrate(&one, &g).unwrap() - 1.0).abs() < 1e-14);

        let g = Grid::new(&[5, 6], &[2.0, 3.0]).unwrap();
        let c = Field::constant(&g, 2.5);
        assert!((integrate(&c, &g).unwrap() - 15.0).abs() < 1e-13);

        let g = Grid::uniform(1, 10).unwrap();
        let x = Field::from_fn(&g, |p| p[0]);
        assert!((integrate(&x, &g).unwrap() - 0.5).abs() < 1e-15);

        assert!(matches!(
            integrate(&Field::zeros(&Grid::uniform(1, 9).unwrap()), &g),
            Err(GridError::ShapeMismatch {
                expected: 10,
                got: 9
            })
        ));
    }

    #[test]
    fn lp_norm_examples() {
        let g = Grid::uniform(2, 6).unwrap();
        let two = Field::constant(&g, 2.0);
        assert!((lp_norm(&two, &g, 2.0).unwrap() - 2.0).abs() < 1e-14);

        let mut spike = Field::zeros(&g);
        spike[7] = 5.0;
        assert_eq!(lp_norm(&spike, &g, f64::INFINITY).unwrap(), 5.0);

        let alt = Field::from_vec(
            (0..36)
                .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
                .collect(),
        );
        assert!((lp_norm(&alt, &g, 1.0).unwrap() - 1.0).abs() < 1e-14);

        assert!(matches!(
            lp_norm(&two, &g, 0.5),
            Err(GridError::InvalidExponent(_))
        ));
        assert!(lp_norm(&two, &g, f64::NAN).is_err());
    }

    #[test]
    fn grad_norm_examples() {
        let g = Grid::uniform(1, 20).unwrap();
        assert_eq!(grad_norm_sq(&Field::constant(&g, 3.0), &g).unwrap(), 0.0);

        for s in [1.0, -2.5, 7.0] {
            let lin = Field::from_fn(&g, |p| s * p[0]);
            let got = grad_norm_sq(&lin, &g).unwrap();
            assert!((got - s * s).abs() <= 1e-12 * s * s, "slope {s}: {got}");
        }

        let g = Grid::uniform(1, 64).unwrap();
        let c = Field::from_fn(&g, |p| (PI * p[0]).cos());
        let got = grad_norm_sq(&c, &g).unwrap();
        let exact = PI * PI / 2.0;
        assert!((got - exact).abs() <= 0.02 * exact, "{got} vs {exact}");
    }

    #[test]
    fn grad_norm_linear_in_2d_box() {
        let g = Grid::new(&[6, 9], &[2.0, 0.5]).unwrap();
        let f = Field::from_fn(&g, |p| 3.0 * p[0] - 4.0 * p[1]);
        let got = grad_norm_sq(&f, &g).unwrap();
        let exact = 25.0 * g.volume();
        assert!((got - exact).abs() < 1e-12 * exact);
    }

    fn small_field() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-100.0f64..100.0, 24)
    }

    proptest! {
        #[test]
        fn integrate_is_linear(f in small_field(), h in small_field(), a in -5.0f64..5.0, b in -5.0f64..5.0) {
            let g = Grid::unit(&[4, 6]).unwrap();
            let (f, h) = (Field::from_vec(f), Field::from_vec(h));
            let lhs = integrate(&f.axpby(a, &h, b), &g).unwrap();
            let rhs = a * integrate(&f, &g).unwrap() + b * integrate(&h, &g).unwrap();
            let scale = a.abs() * lp_norm(&f, &g, 1.0).unwrap() + b.abs() * lp_norm(&h, &g, 1.0).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * scale.max(1e-300));
        }

        #[test]
        fn lp_norm_triangle_and_monotone(f in small_field(), h in small_field(), p in 1.0f64..6.0) {
            let g = Grid::unit(&[3, 8]).unwrap();
            let (f, h) = (Field::from_vec(f), Field::from_vec(h));
            for q in [p, f64::INFINITY] {
                let sum = lp_norm(&f.axpby(1.0, &h, 1.0), &g, q).unwrap();
                let bound = lp_norm(&f, &g, q).unwrap() + lp_norm(&h, &g, q).unwrap();
                prop_assert!(sum <= bound * (1.0 + 1e-12));
                let bigger = Field::from_vec(f.values().iter().map(|x| x.abs() + 0.5).collect());
                prop_assert!(lp_norm(&f, &g, q).unwrap() <= lp_norm(&bigger, &g, q).unwrap());
            }
        }

        #[test]
        fn grad_norm_translation_invariant(
            vals in prop::collection::vec(-1000i32..1000, 3 * 4 * 5),
            shift in -1000i32..1000,
        ) {
            let g = Grid::unit(&[3, 4, 5]).unwrap();
            let f = Field::from_vec(vals.iter().map(|&x| f64::from(x)).collect());
            let shifted = f.map(|x| x + f64::from(shift));
            prop_assert_eq!(grad_norm_sq(&f, &g).unwrap(), grad_norm_sq(&shifted, &g).unwrap());
        }
    }
}
