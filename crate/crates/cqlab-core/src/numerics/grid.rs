//! Uniform tensor grids and sampled real/complex fields.
//!
//! A 2D field stores its samples row-major in x: `values[ix * ny + iy]`.
//! Periodic axes exclude the upper bound node, so spacing is span / n on
//! every axis and node k sits at `min + k * dx`.

use crate::error::{Error, Result};
use num_complex::Complex64;

/// Minimum node count per axis; coarser grids cannot resolve any test state.
pub const MIN_NODES: usize = 8;

/// One uniform axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    pub n: usize,
    pub min: f64,
    pub max: f64,
    pub periodic: bool,
}

impl Grid1D {
    /// Builds an axis with `n` nodes on [min, max), upper bound excluded.
    pub fn new(n: usize, min: f64, max: f64, periodic: bool) -> Result<Self> {
        if n < MIN_NODES {
            return Err(Error::InvalidGrid(format!("n = {n} < {MIN_NODES}")));
        }
        if !(max > min) || !min.is_finite() || !max.is_finite() {
            return Err(Error::InvalidGrid(format!("bad bounds [{min}, {max}]")));
        }
        Ok(Self { n, min, max, periodic })
    }

    /// Node spacing, span / n.
    pub fn dx(&self) -> f64 {
        (self.max - self.min) / self.n as f64
    }

    /// Coordinate of node `i`.
    pub fn node(&self, i: usize) -> f64 {
        self.min + i as f64 * self.dx()
    }

    /// All node coordinates in index order.
    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Index of the node nearest to `a`, with the snap distance.
    pub fn nearest_node(&self, a: f64) -> (usize, f64) {
        let raw = (a - self.min) / self.dx();
        let mut i = raw.round() as isize;
        if i < 0 {
            i = 0;
        }
        if i >= self.n as isize {
            i = self.n as isize - 1;
        }
        let i = i as usize;
        (i, (self.node(i) - a).abs())
    }
}

/// Uniform periodic tensor grid over (x, y).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub periodic_x: bool,
    pub periodic_y: bool,
}

impl Grid2D {
    /// Builds a grid periodic on both axes.
    ///
    /// Fails if either axis has fewer than `MIN_NODES` nodes or empty span.
    pub fn new(nx: usize, ny: usize, x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        Grid1D::new(nx, x_min, x_max, true)?;
        Grid1D::new(ny, y_min, y_max, true)?;
        Ok(Self {
            nx,
            ny,
            x_min,
            x_max,
            y_min,
            y_max,
            periodic_x: true,
            periodic_y: true,
        })
    }

    /// Builds a square grid centered on the origin, periodic on both axes.
    pub fn square(n: usize, half_width: f64) -> Result<Self> {
        Self::new(n, n, -half_width, half_width, -half_width, half_width)
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        (self.y_max - self.y_min) / self.ny as f64
    }

    pub fn x(&self, ix: usize) -> f64 {
        self.x_min + ix as f64 * self.dx()
    }

    pub fn y(&self, iy: usize) -> f64 {
        self.y_min + iy as f64 * self.dy()
    }

    /// Flat index of node (ix, iy).
    #[inline]
    pub fn idx(&self, ix: usize, iy: usize) -> usize {
        ix * self.ny + iy
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Cell area dx * dy.
    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    pub fn x_axis(&self) -> Grid1D {
        Grid1D {
            n: self.nx,
            min: self.x_min,
            max: self.x_max,
            periodic: self.periodic_x,
        }
    }

    pub fn y_axis(&self) -> Grid1D {
        Grid1D {
            n: self.ny,
            min: self.y_min,
            max: self.y_max,
            periodic: self.periodic_y,
        }
    }
}

/// Axis selector for derivatives and reductions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Real samples on a 2D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RealField2D {
    grid: Grid2D,
    values: Vec<f64>,
}

/// Complex samples on a 2D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField2D {
    grid: Grid2D,
    values: Vec<Complex64>,
}

/// Real samples along one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct RealField1D {
    grid: Grid1D,
    values: Vec<f64>,
}

impl RealField2D {
    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    /// Samples `f(x, y)` at every node.
    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for ix in 0..grid.nx {
            let x = grid.x(ix);
            for iy in 0..grid.ny {
                values.push(f(x, grid.y(iy)));
            }
        }
        Self { grid, values }
    }

    /// Wraps existing samples. Fails on length mismatch or non-finite values.
    pub fn from_values(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch { context: "RealField2D::from_values" });
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite field sample".into()));
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_values_unchecked(grid: Grid2D, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[self.grid.idx(ix, iy)]
    }

    #[inline]
    pub fn set(&mut self, ix: usize, iy: usize, v: f64) {
        let k = self.grid.idx(ix, iy);
        self.values[k] = v;
    }

    /// Pointwise map.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination with another field on the same grid.
    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch { context: "RealField2D::zip_with" });
        }
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, &v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    /// Largest |a - b| over the grid.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch { context: "RealField2D::max_abs_diff" });
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (&a, &b)| m.max((a - b).abs())))
    }
}

impl ComplexField2D {
    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    /// Samples `f(x, y)` at every node.
    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> Complex64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for ix in 0..grid.nx {
            let x = grid.x(ix);
            for iy in 0..grid.ny {
                values.push(f(x, grid.y(iy)));
            }
        }
        Self { grid, values }
    }

    /// Wraps existing samples. Fails on length mismatch or non-finite values.
    pub fn from_values(grid: Grid2D, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch { context: "ComplexField2D::from_values" });
        }
        if !values.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::InvalidParameter("non-finite field sample".into()));
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_values_unchecked(grid: Grid2D, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    #[inline]
    pub fn at(&self, ix: usize, iy: usize) -> Complex64 {
        self.values[self.grid.idx(ix, iy)]
    }

    /// Field of sample moduli.
    pub fn abs(&self) -> RealField2D {
        RealField2D {
            grid: self.grid,
            values: self.values.iter().map(|v| v.norm()).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch { context: "ComplexField2D::max_abs_diff" });
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (&a, &b)| m.max((a - b).norm())))
    }
}

impl RealField1D {
    pub fn zeros(grid: Grid1D) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.n],
        }
    }

    /// Samples `f(x)` at every node.
    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid,
            values: (0..grid.n).map(|i| f(grid.node(i))).collect(),
        }
    }

    /// Wraps existing samples. Fails on length mismatch or non-finite values.
    pub fn from_values(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(Error::GridMismatch { context: "RealField1D::from_values" });
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite field sample".into()));
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_values_unchecked(grid: Grid1D, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n);
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn at(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, &v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch { context: "RealField1D::max_abs_diff" });
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (&a, &b)| m.max((a - b).abs())))
    }

    /// Broadcasts the per-x values across y onto a 2D grid.
    pub fn broadcast_x(&self, grid: Grid2D) -> Result<RealField2D> {
        if grid.x_axis() != self.grid {
            return Err(Error::GridMismatch { context: "RealField1D::broadcast_x" });
        }
        let mut values = Vec::with_capacity(grid.len());
        for ix in 0..grid.nx {
            let v = self.values[ix];
            values.extend(std::iter::repeat(v).take(grid.ny));
        }
        Ok(RealField2D { grid, values })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_degenerate_shapes() {
        assert!(Grid2D::new(4, 64, 0.0, 1.0, 0.0, 1.0).is_err());
        assert!(Grid2D::new(64, 64, 1.0, 1.0, 0.0, 1.0).is_err());
        assert!(Grid2D::new(64, 64, 0.0, 1.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn spacing_excludes_upper_bound() {
        let g = Grid2D::new(8, 16, 0.0, 1.0, -2.0, 2.0).unwrap();
        assert_eq!(g.dx(), 0.125);
        assert_eq!(g.dy(), 0.25);
        assert_eq!(g.x(0), 0.0);
        assert_eq!(g.x(7), 0.875);
        assert_eq!(g.y(15), 1.75);
    }

    #[test]
    fn field_layout_is_row_major_in_x() {
        let g = Grid2D::new(8, 8, 0.0, 8.0, 0.0, 8.0).unwrap();
        let f = RealField2D::from_fn(g, |x, y| 10.0 * x + y);
        assert_eq!(f.at(3, 5), 35.0);
        assert_eq!(f.values()[g.idx(3, 5)], 35.0);
    }

    #[test]
    fn from_values_rejects_non_finite() {
        let g = Grid2D::new(8, 8, 0.0, 1.0, 0.0, 1.0).unwrap();
        let mut v = vec![0.0; g.len()];
        v[10] = f64::NAN;
        assert!(RealField2D::from_values(g, v).is_err());
    }

    #[test]
    fn nearest_node_snaps_and_reports_distance() {
        let g = Grid1D::new(8, 0.0, 8.0, true).unwrap();
        let (i, d) = g.nearest_node(3.4);
        assert_eq!(i, 3);
        assert!((d - 0.4).abs() < 1e-12);
    }

    #[test]
    fn broadcast_replicates_along_y() {
        let g = Grid2D::new(8, 8, 0.0, 1.0, 0.0, 1.0).unwrap();
        let f1 = RealField1D::from_fn(g.x_axis(), |x| x * x);
        let f2 = f1.broadcast_x(g).unwrap();
        for iy in 0..8 {
            assert_eq!(f2.at(5, iy), f1.at(5));
        }
    }
}
