use crate::error::{Error, Result};

/// Coordinate axis of the parameter domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
}

/// Uniform rectangular grid on the asymptotic coordinate domain.
///
/// Node `(i, j)` sits at `(x0 + i dx, y0 + j dy)` and is stored at index
/// `i + nx * j`, so x varies fastest.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    x0: f64,
    y0: f64,
    dx: f64,
    dy: f64,
}

impl Grid {
    pub const MIN_NODES: usize = 5;

    pub fn new(nx: usize, ny: usize, x0: f64, y0: f64, dx: f64, dy: f64) -> Result<Self> {
        if nx < Self::MIN_NODES || ny < Self::MIN_NODES {
            return Err(Error::GridTooSmall(format!(
                "{nx}x{ny} nodes, need at least {m}x{m}",
                m = Self::MIN_NODES
            )));
        }
        if !(dx > 0.0 && dy > 0.0) || !dx.is_finite() || !dy.is_finite() {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got dx={dx}, dy={dy}")));
        }
        if !x0.is_finite() || !y0.is_finite() {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        Ok(Self { nx, ny, x0, y0, dx, dy })
    }

    /// Square grid with `n` nodes per side covering `[0, 1]^2`.
    pub fn unit(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::GridTooSmall(format!("{n} nodes")));
        }
        let h = 1.0 / (n - 1) as f64;
        Self::new(n, n, 0.0, 0.0, h, h)
    }

    /// The 101x101 grid on the unit square used throughout the examples.
    pub fn default_unit() -> Self {
        Self::unit(101).expect("default grid is valid")
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn x0(&self) -> f64 {
        self.x0
    }
    pub fn y0(&self) -> f64 {
        self.y0
    }
    pub fn dx(&self) -> f64 {
        self.dx
    }
    pub fn dy(&self) -> f64 {
        self.dy
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }

    pub fn node(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }

    pub fn y(&self, j: usize) -> f64 {
        self.y0 + j as f64 * self.dy
    }

    pub fn point(&self, k: usize) -> (f64, f64) {
        let (i, j) = self.node(k);
        (self.x(i), self.y(j))
    }

    pub fn extent(&self, axis: Axis) -> usize {
        match axis {
            Axis::X => self.nx,
            Axis::Y => self.ny,
        }
    }

    pub fn spacing(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.dx,
            Axis::Y => self.dy,
        }
    }

    /// Grid of the same shape after the affine change `x -> lx * x`, `y -> ly * y`.
    pub fn rescaled(&self, lx: f64, ly: f64) -> Result<Self> {
        if lx <= 0.0 || ly <= 0.0 {
            return Err(Error::InvalidGrid("rescaling factors must be positive".into()));
        }
        Self::new(self.nx, self.ny, self.x0 * lx, self.y0 * ly, self.dx * lx, self.dy * ly)
    }

    /// True when a node lies at least `margin` nodes away from every edge.
    pub fn is_interior(&self, k: usize, margin: usize) -> bool {
        let (i, j) = self.node(k);
        i >= margin && j >= margin && i + margin < self.nx && j + margin < self.ny
    }

    /// Grids are compatible when shapes agree and coordinates agree to round-off.
    pub fn same_as(&self, other: &Grid) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()));
        self.nx == other.nx
            && self.ny == other.ny
            && close(self.x0, other.x0)
            && close(self.y0, other.y0)
            && close(self.dx, other.dx)
            && close(self.dy, other.dy)
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

impl Default for Grid {
    fn default() -> Self {
        Self::default_unit()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_is_x_fastest() {
        let g = Grid::new(5, 7, 0.0, 1.0, 0.5, 0.25).unwrap();
        assert_eq!(g.index(2, 3), 17);
        assert_eq!(g.node(17), (2, 3));
        assert_eq!(g.point(17), (1.0, 1.75));
    }

    #[test]
    fn rejects_small_or_bad_grids() {
        assert!(matches!(Grid::new(4, 9, 0.0, 0.0, 0.1, 0.1), Err(Error::GridTooSmall(_))));
        assert!(Grid::new(9, 9, 0.0, 0.0, 0.0, 0.1).is_err());
        assert!(Grid::new(9, 9, 0.0, 0.0, 0.1, -0.1).is_err());
    }

    #[test]
    fn default_grid_spacing() {
        let g = Grid::default_unit();
        assert_eq!(g.len(), 101 * 101);
        assert!((g.dx() - 0.01).abs() < 1e-15);
        assert!((g.x(100) - 1.0).abs() < 1e-14);
    }
}
