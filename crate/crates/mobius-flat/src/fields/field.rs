use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Matrix4, SMatrix, Vector4};
use rayon::prelude::*;

use super::fd::{lagrange_weights, Stencil};
use super::grid::{Axis, Grid};
use super::jet::{ncoef, Jet, JetValue, MAX_ORDER};
use crate::error::{Error, Result};

/// Stencil order used when an exact field runs out of jet order.
pub const FALLBACK_STENCIL: usize = 4;

/// A field on a grid.
///
/// Exact fields carry a Taylor jet at every node, so derivatives are taken
/// analytically until the jet order is used up. Sampled fields carry plain
/// node values and differentiate with finite differences of a fixed order.
#[derive(Clone, Debug)]
pub struct Field<T> {
    grid: Grid,
    order: usize,
    data: Vec<T>,
    stencil: Option<usize>,
}

pub type ScalarField = Field<f64>;
pub type MatrixField = Field<Matrix4<f64>>;
pub type VectorField = Field<Vector4<f64>>;

fn merge_stencil(a: Option<usize>, b: Option<usize>) -> Option<usize> {
    match (a, b) {
        (None, None) => None,
        (Some(p), None) | (None, Some(p)) => Some(p),
        (Some(p), Some(q)) => Some(p.max(q)),
    }
}

impl<T: JetValue> Field<T> {
    /// Exact field from one jet per node; the field order is the smallest jet order.
    pub fn from_jets(grid: Grid, jets: Vec<Jet<T>>) -> Self {
        assert_eq!(jets.len(), grid.len(), "one jet per node");
        let order = jets.iter().map(|j| j.order()).min().unwrap_or(0);
        let n = ncoef(order);
        let mut data = Vec::with_capacity(grid.len() * n);
        for jet in &jets {
            data.extend_from_slice(&jet.coeffs()[..n]);
        }
        Self { grid, order, data, stencil: None }
    }

    /// Exact field from a jet-valued node function whose jets share one order.
    fn collect_jets(grid: Grid, f: impl Fn(usize) -> Jet<T> + Sync) -> Self {
        let order = f(0).order();
        let n = ncoef(order);
        let mut data = vec![T::zero(); grid.len() * n];
        data.par_chunks_mut(n).enumerate().for_each(|(k, slot)| {
            let jet = f(k);
            debug_assert_eq!(jet.order(), order, "node jets must share one order");
            slot.copy_from_slice(&jet.coeffs()[..n]);
        });
        Self { grid, order, data, stencil: None }
    }

    /// Exact field built from the coordinate jets `(x, y)` at each node.
    pub fn from_jet_fn<F>(grid: Grid, order: usize, f: F) -> Self
    where
        F: Fn(Jet<f64>, Jet<f64>) -> Jet<T> + Sync,
    {
        let order = order.min(MAX_ORDER);
        let jets: Vec<Jet<T>> = (0..grid.len())
            .into_par_iter()
            .map(|k| {
                let (x, y) = grid.point(k);
                f(Jet::variable(x, Axis::X, order), Jet::variable(y, Axis::Y, order))
            })
            .collect();
        Self::from_jets(grid, jets)
    }

    /// Sampled field differentiated with stencils of the given order.
    pub fn sampled(grid: Grid, values: Vec<T>, stencil: usize) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Invalid(format!(
                "expected {} node values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Stencil::new(stencil, grid.nx())?;
        Stencil::new(stencil, grid.ny())?;
        Ok(Self { grid, order: 0, data: values, stencil: Some(stencil) })
    }

    /// Sampled field from a pointwise function of the coordinates.
    pub fn from_fn<F>(grid: Grid, stencil: usize, f: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> T + Sync,
    {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|k| {
                let (x, y) = grid.point(k);
                f(x, y)
            })
            .collect();
        Self::sampled(grid, values, stencil)
    }

    /// Exact constant field.
    pub fn constant(grid: Grid, value: T) -> Self {
        let n = ncoef(MAX_ORDER);
        let mut data = vec![T::zero(); grid.len() * n];
        for k in 0..grid.len() {
            data[k * n] = value;
        }
        Self { grid, order: MAX_ORDER, data, stencil: None }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, T::zero())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn is_exact(&self) -> bool {
        self.stencil.is_none()
    }

    /// Jet order carried per node (0 for sampled fields).
    pub fn order(&self) -> usize {
        self.order
    }

    /// Finite-difference order for sampled fields.
    pub fn stencil(&self) -> Option<usize> {
        self.stencil
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn value(&self, k: usize) -> T {
        self.data[k * ncoef(self.order)]
    }

    pub fn at(&self, i: usize, j: usize) -> T {
        self.value(self.grid.index(i, j))
    }

    pub fn jet(&self, k: usize) -> Jet<T> {
        let n = ncoef(self.order);
        Jet::from_coeffs(self.order, &self.data[k * n..(k + 1) * n])
    }

    pub fn values(&self) -> Vec<T> {
        (0..self.len()).map(|k| self.value(k)).collect()
    }

    /// Drops the jets and keeps node values with the given stencil order.
    pub fn to_sampled(&self, stencil: usize) -> Result<Self> {
        Self::sampled(self.grid, self.values(), stencil)
    }

    /// Same data, different stencil order for later finite differences.
    pub fn with_stencil(&self, stencil: usize) -> Result<Self> {
        Stencil::new(stencil, self.grid.nx())?;
        Stencil::new(stencil, self.grid.ny())?;
        let mut out = self.clone();
        if out.stencil.is_some() {
            out.stencil = Some(stencil);
        }
        Ok(out)
    }

    /// The same function viewed in the coordinates `X = lx * x`, `Y = ly * y`.
    pub fn rescale_coordinates(&self, lx: f64, ly: f64) -> Result<Self> {
        let grid = self.grid.rescaled(lx, ly)?;
        let mut out = self.map_jets(|j| j.rescaled(lx, ly));
        out.grid = grid;
        Ok(out)
    }

    /// Pointwise map on jets. `f` must return jets of one common order.
    pub fn map_jets<U, F>(&self, f: F) -> Field<U>
    where
        U: JetValue,
        F: Fn(&Jet<T>) -> Jet<U> + Sync,
    {
        let mut out = Field::collect_jets(self.grid, |k| f(&self.jet(k)));
        out.stencil = self.stencil;
        out
    }

    /// Pointwise binary operation on jets. `f` must return jets of one common order.
    pub fn zip_jets<B, U, F>(&self, other: &Field<B>, f: F) -> Field<U>
    where
        B: JetValue,
        U: JetValue,
        F: Fn(&Jet<T>, &Jet<B>) -> Jet<U> + Sync,
    {
        assert!(self.grid.same_as(other.grid()), "fields live on different grids");
        let mut out = Field::collect_jets(self.grid, |k| f(&self.jet(k), &other.jet(k)));
        out.stencil = merge_stencil(self.stencil, other.stencil);
        out
    }

    /// `sum_k c_k f_k` in one pass; all terms must share a grid.
    pub fn linear_combination(terms: &[(&Self, f64)]) -> Self {
        let (first, c0) = terms[0];
        if terms.iter().any(|(f, _)| f.order != first.order || !f.grid.same_as(&first.grid)) {
            return terms[1..].iter().fold(first * c0, |acc, (f, c)| &acc + &(*f * *c));
        }
        let stencil = terms.iter().fold(None, |acc, (f, _)| merge_stencil(acc, f.stencil));
        let data = (0..first.data.len())
            .into_par_iter()
            .map(|i| terms[1..].iter().fold(first.data[i] * c0, |acc, (f, c)| acc + f.data[i] * *c))
            .collect();
        Field { grid: first.grid, order: first.order, data, stencil }
    }

    /// Coefficient-wise sum or difference; equal orders skip the jet round trip.
    fn combine(&self, other: &Self, sign: f64) -> Self {
        if self.order != other.order || !self.grid.same_as(other.grid()) {
            return self.zip_jets(other, |a, b| *a + *b * sign);
        }
        Field {
            grid: self.grid,
            order: self.order,
            data: self.data.par_iter().zip(&other.data).map(|(&a, &b)| a + b * sign).collect(),
            stencil: merge_stencil(self.stencil, other.stencil),
        }
    }

    /// Coefficient-wise linear map (transpose, entry extraction, constant products).
    pub fn map_linear<U, F>(&self, f: F) -> Field<U>
    where
        U: JetValue,
        F: Fn(T) -> U + Sync,
    {
        Field {
            grid: self.grid,
            order: self.order,
            data: self.data.par_iter().map(|&v| f(v)).collect(),
            stencil: self.stencil,
        }
    }

    /// First derivative along `axis`.
    pub fn d(&self, axis: Axis) -> Self {
        if self.stencil.is_none() && self.order > 0 {
            return self.map_jets(|j| j.derivative(axis).expect("order checked"));
        }
        let order = self.stencil.unwrap_or(FALLBACK_STENCIL);
        let n = self.grid.extent(axis);
        let stencil = Stencil::new(order, n).expect("stencil validated at construction");
        let h = self.grid.spacing(axis);
        let grid = self.grid;
        let values: Vec<T> = (0..self.len())
            .into_par_iter()
            .map(|k| {
                let (i, j) = grid.node(k);
                let pos = if axis == Axis::X { i } else { j };
                let (start, w) = stencil.row(pos);
                let mut acc = T::zero();
                for (a, wa) in w.iter().enumerate() {
                    let kk = match axis {
                        Axis::X => grid.index(start + a, j),
                        Axis::Y => grid.index(i, start + a),
                    };
                    acc = acc + self.value(kk) * *wa;
                }
                acc * (1.0 / h)
            })
            .collect();
        Field { grid, order: 0, data: values, stencil: Some(order) }
    }

    pub fn dx(&self) -> Self {
        self.d(Axis::X)
    }

    pub fn dy(&self) -> Self {
        self.d(Axis::Y)
    }

    /// Value at a fractional node offset `s` from node `(i, j)` along `axis`.
    ///
    /// Fields carrying full jets use the Taylor polynomial of the nearest node;
    /// others use six-point Lagrange interpolation along the line.
    pub fn sample_on_line(&self, axis: Axis, i: usize, j: usize, s: f64) -> T {
        let n = self.grid.extent(axis);
        let pos = if axis == Axis::X { i } else { j } as f64;
        let z = (pos + s).clamp(0.0, (n - 1) as f64);
        if self.stencil.is_none() && self.order >= MAX_ORDER {
            let near = z.round() as usize;
            let off = (z - near as f64) * self.grid.spacing(axis);
            let (k, hx, hy) = match axis {
                Axis::X => (self.grid.index(near, j), off, 0.0),
                Axis::Y => (self.grid.index(i, near), 0.0, off),
            };
            return self.jet(k).eval_offset(hx, hy);
        }
        let width = 6.min(n);
        let base = (z.floor() as isize - (width as isize / 2 - 1)).max(0) as usize;
        let start = base.min(n - width);
        let w = lagrange_weights(z, start, width);
        let mut acc = T::zero();
        for (a, wa) in w.iter().enumerate() {
            let k = match axis {
                Axis::X => self.grid.index(start + a, j),
                Axis::Y => self.grid.index(i, start + a),
            };
            acc = acc + self.value(k) * *wa;
        }
        acc
    }

    /// Largest entry magnitude over all nodes.
    pub fn max_abs(&self) -> f64 {
        (0..self.len()).into_par_iter().map(|k| self.value(k).max_abs()).reduce(|| 0.0, f64::max)
    }

    /// Largest entry magnitude over nodes at least `margin` away from the edges.
    pub fn max_abs_interior(&self, margin: usize) -> f64 {
        (0..self.len())
            .into_par_iter()
            .filter(|&k| self.grid.is_interior(k, margin))
            .map(|k| self.value(k).max_abs())
            .reduce(|| 0.0, f64::max)
    }

    /// Max norm that skips the boundary ring for sampled fields, where
    /// one-sided stencils dominate the error.
    pub fn residual_norm(&self) -> f64 {
        match self.stencil {
            None => self.max_abs(),
            Some(p) => self.max_abs_interior(p / 2),
        }
    }

    /// First node whose value is not finite.
    pub fn check_finite(&self) -> Result<()> {
        for k in 0..self.len() {
            if !self.value(k).all_finite() {
                let (x, y) = self.grid.point(k);
                return Err(Error::NonFinite { x, y });
            }
        }
        Ok(())
    }
}

impl ScalarField {
    pub fn exp(&self) -> Self {
        self.map_jets(|j| j.exp())
    }

    pub fn powi(&self, n: i32) -> Self {
        self.map_jets(|j| j.powi(n))
    }

    /// Mean value over the nodes.
    pub fn mean(&self) -> f64 {
        self.values().iter().sum::<f64>() / self.len() as f64
    }
}

macro_rules! square_field_ops {
    ($n:literal) => {
        impl Field<SMatrix<f64, $n, $n>> {
            pub fn transpose(&self) -> Self {
                self.map_linear(|m| m.transpose())
            }

            pub fn trace(&self) -> ScalarField {
                self.map_linear(|m| m.trace())
            }

            pub fn determinant(&self) -> ScalarField {
                self.map_jets(|j| j.determinant())
            }

            /// Pointwise inverse; fails with the first node whose determinant is below
            /// `tol` times the product of its column norms.
            pub fn try_inverse(&self, tol: f64) -> std::result::Result<Self, (usize, usize)> {
                for k in 0..self.len() {
                    let m = self.value(k);
                    let det = m.determinant();
                    // Hadamard bound: |det| never exceeds the product of column norms.
                    let bound: f64 = m.column_iter().map(|c| c.norm()).product();
                    if !det.is_finite() || det.abs() <= tol * bound {
                        return Err(self.grid.node(k));
                    }
                }
                Ok(self.map_jets(|j| j.try_inverse().expect("determinant checked")))
            }

            pub fn identity(grid: Grid) -> Self {
                Self::constant(grid, SMatrix::identity())
            }
        }
    };
}

square_field_ops!(2);
square_field_ops!(3);
square_field_ops!(4);

impl<const R: usize, const C: usize> Field<SMatrix<f64, R, C>> {
    /// Scalar field of one matrix entry (0-based).
    pub fn entry(&self, r: usize, c: usize) -> ScalarField {
        self.map_linear(|m| m[(r, c)])
    }

    /// Adds `s * E_{rc}` to the field.
    pub fn with_entry_added(&self, r: usize, c: usize, s: &ScalarField) -> Self {
        let placed = s.map_linear(|v| {
            let mut m = SMatrix::<f64, R, C>::zeros();
            m[(r, c)] = v;
            m
        });
        self + &placed
    }

    /// Builds a matrix field from `(row, col, field)` entries; unspecified entries are zero.
    pub fn from_entries(grid: Grid, entries: &[(usize, usize, &ScalarField)]) -> Self {
        for (_, _, s) in entries {
            assert!(grid.same_as(s.grid()), "fields live on different grids");
        }
        // A sampled entry makes the whole field sampled.
        let stencil = entries.iter().fold(None, |acc, (_, _, s)| merge_stencil(acc, s.stencil));
        let order = if stencil.is_some() {
            0
        } else {
            entries.iter().map(|(_, _, s)| s.order).min().unwrap_or(MAX_ORDER)
        };
        let n = ncoef(order);
        let mut data = vec![SMatrix::<f64, R, C>::zeros(); grid.len() * n];
        data.par_chunks_mut(n).enumerate().for_each(|(k, slot)| {
            for &(r, c, s) in entries {
                let m = ncoef(s.order);
                for (q, v) in slot.iter_mut().enumerate() {
                    v[(r, c)] += s.data[k * m + q];
                }
            }
        });
        Self { grid, order, data, stencil }
    }
}

/// Pointwise commutator `[a, b] = ab - ba`.
pub fn commutator(a: &MatrixField, b: &MatrixField) -> MatrixField {
    a.zip_jets(b, |p, q| (p * q) - (q * p))
}

impl<T: JetValue> Add for &Field<T> {
    type Output = Field<T>;
    fn add(self, rhs: Self) -> Field<T> {
        self.combine(rhs, 1.0)
    }
}

impl<T: JetValue> Sub for &Field<T> {
    type Output = Field<T>;
    fn sub(self, rhs: Self) -> Field<T> {
        self.combine(rhs, -1.0)
    }
}

impl<T: JetValue> Neg for &Field<T> {
    type Output = Field<T>;
    fn neg(self) -> Field<T> {
        self.map_linear(|v| -v)
    }
}

impl<T: JetValue> Mul<f64> for &Field<T> {
    type Output = Field<T>;
    fn mul(self, rhs: f64) -> Field<T> {
        self.map_linear(|v| v * rhs)
    }
}

impl<'a, A, B> Mul<&'a Field<B>> for &'a Field<A>
where
    A: JetValue + Mul<B>,
    B: JetValue,
    <A as Mul<B>>::Output: JetValue,
{
    type Output = Field<<A as Mul<B>>::Output>;
    fn mul(self, rhs: &'a Field<B>) -> Self::Output {
        self.zip_jets(rhs, |a, b| a * b)
    }
}

impl<T: JetValue> Add for Field<T> {
    type Output = Field<T>;
    fn add(self, rhs: Self) -> Field<T> {
        &self + &rhs
    }
}

impl<T: JetValue> Sub for Field<T> {
    type Output = Field<T>;
    fn sub(self, rhs: Self) -> Field<T> {
        &self - &rhs
    }
}

impl<T: JetValue> Mul<f64> for Field<T> {
    type Output = Field<T>;
    fn mul(self, rhs: f64) -> Field<T> {
        &self * rhs
    }
}

/// Ensures a list of fields share one grid.
pub fn same_grid<T: JetValue>(fields: &[&Field<T>]) -> Result<Grid> {
    let first = fields.first().ok_or_else(|| Error::Invalid("no fields".into()))?;
    for f in &fields[1..] {
        first.grid().check_same(f.grid())?;
    }
    Ok(*first.grid())
}
