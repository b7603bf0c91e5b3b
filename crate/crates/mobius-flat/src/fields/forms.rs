use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::Matrix4;

use super::field::{commutator, Field, MatrixField, ScalarField};
use super::grid::{Axis, Grid};
use super::jet::JetValue;
use crate::error::Result;

/// A one-form `x dx + y dy` with values in `T`.
#[derive(Clone, Debug)]
pub struct OneForm<T> {
    pub x: Field<T>,
    pub y: Field<T>,
}

impl<T: JetValue> OneForm<T> {
    pub fn new(x: Field<T>, y: Field<T>) -> Result<Self> {
        x.grid().check_same(y.grid())?;
        Ok(Self { x, y })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { x: Field::zeros(grid), y: Field::zeros(grid) }
    }

    pub fn grid(&self) -> &Grid {
        self.x.grid()
    }

    pub fn component(&self, axis: Axis) -> &Field<T> {
        match axis {
            Axis::X => &self.x,
            Axis::Y => &self.y,
        }
    }

    /// Applies the same field map to both components.
    pub fn map<U: JetValue>(&self, f: impl Fn(&Field<T>) -> Field<U>) -> OneForm<U> {
        OneForm { x: f(&self.x), y: f(&self.y) }
    }

    /// Largest entry over both components.
    pub fn max_abs(&self) -> f64 {
        self.x.max_abs().max(self.y.max_abs())
    }

    pub fn residual_norm(&self) -> f64 {
        self.x.residual_norm().max(self.y.residual_norm())
    }

    /// Exterior derivative of a scalar-like zero-form.
    pub fn exterior(f: &Field<T>) -> Self {
        Self { x: f.dx(), y: f.dy() }
    }

    /// The `dx ^ dy` coefficient of the exterior derivative.
    pub fn curl(&self) -> Field<T> {
        &self.y.dx() - &self.x.dy()
    }
}

impl OneForm<Matrix4<f64>> {
    pub fn transpose(&self) -> Self {
        self.map(|f| f.transpose())
    }

    /// Scalar one-form of a single matrix entry (0-based).
    pub fn entry(&self, r: usize, c: usize) -> OneForm<f64> {
        self.map(|f| f.entry(r, c))
    }

    /// Scales both components pointwise by a scalar field.
    pub fn scaled_by(&self, s: &ScalarField) -> Self {
        self.map(|f| s * f)
    }
}

/// The `e1 ^ e2` component of `[w ^ n]`, that is `[w_x, n_y] - [w_y, n_x]`.
pub fn wedge_bracket(w: &OneForm<Matrix4<f64>>, n: &OneForm<Matrix4<f64>>) -> Result<MatrixField> {
    w.grid().check_same(n.grid())?;
    Ok(&commutator(&w.x, &n.y) - &commutator(&w.y, &n.x))
}

impl<T: JetValue> Add for &OneForm<T> {
    type Output = OneForm<T>;
    fn add(self, rhs: Self) -> OneForm<T> {
        OneForm { x: &self.x + &rhs.x, y: &self.y + &rhs.y }
    }
}

impl<T: JetValue> Sub for &OneForm<T> {
    type Output = OneForm<T>;
    fn sub(self, rhs: Self) -> OneForm<T> {
        OneForm { x: &self.x - &rhs.x, y: &self.y - &rhs.y }
    }
}

impl<T: JetValue> Neg for &OneForm<T> {
    type Output = OneForm<T>;
    fn neg(self) -> OneForm<T> {
        OneForm { x: -&self.x, y: -&self.y }
    }
}

impl<T: JetValue> Mul<f64> for &OneForm<T> {
    type Output = OneForm<T>;
    fn mul(self, rhs: f64) -> OneForm<T> {
        OneForm { x: &self.x * rhs, y: &self.y * rhs }
    }
}

impl<T: JetValue> Add for OneForm<T> {
    type Output = OneForm<T>;
    fn add(self, rhs: Self) -> OneForm<T> {
        &self + &rhs
    }
}

impl<T: JetValue> Sub for OneForm<T> {
    type Output = OneForm<T>;
    fn sub(self, rhs: Self) -> OneForm<T> {
        &self - &rhs
    }
}

impl<T: JetValue> Mul<f64> for OneForm<T> {
    type Output = OneForm<T>;
    fn mul(self, rhs: f64) -> OneForm<T> {
        &self * rhs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_form(g: Grid, rng: &mut ChaCha8Rng) -> OneForm<Matrix4<f64>> {
        let a = Matrix4::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let b = Matrix4::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let s = ScalarField::from_jet_fn(g, 2, |x, y| (&x * &y).sin());
        OneForm {
            x: s.map_linear(move |v| a * v),
            y: &MatrixField::constant(g, b) + &s.map_linear(move |v| a * (v * v)),
        }
    }

    fn grid() -> Grid {
        Grid::unit(9).unwrap()
    }

    #[test]
    fn self_bracket_doubles_commutator() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = random_form(grid(), &mut rng);
        let lhs = wedge_bracket(&w, &w).unwrap();
        let rhs = &commutator(&w.x, &w.y) * 2.0;
        assert!((&lhs - &rhs).max_abs() < 1e-14);
    }

    #[test]
    fn equal_components_give_zero() {
        let g = grid();
        let m = MatrixField::constant(g, Matrix4::from_fn(|r, c| (r * 4 + c) as f64));
        let w = OneForm { x: m.clone(), y: m };
        assert_eq!(wedge_bracket(&w, &w).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn bilinear_in_first_slot() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = grid();
        let (w1, w2, n) = (random_form(g, &mut rng), random_form(g, &mut rng), random_form(g, &mut rng));
        let lhs = wedge_bracket(&(&(&w1 * 2.5) + &w2), &n).unwrap();
        let rhs = &(&wedge_bracket(&w1, &n).unwrap() * 2.5) + &wedge_bracket(&w2, &n).unwrap();
        assert!((&lhs - &rhs).max_abs() < 1e-12);
    }

    #[test]
    fn symmetric_for_matrix_valued_forms() {
        // [w ^ n] = [n ^ w] for Lie-algebra-valued one-forms.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = grid();
        let (w, n) = (random_form(g, &mut rng), random_form(g, &mut rng));
        let a = wedge_bracket(&w, &n).unwrap();
        let b = wedge_bracket(&n, &w).unwrap();
        assert!((&a - &b).max_abs() < 1e-13);
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let w = OneForm::<Matrix4<f64>>::zeros(grid());
        let n = OneForm::<Matrix4<f64>>::zeros(Grid::unit(11).unwrap());
        assert!(wedge_bracket(&w, &n).is_err());
    }
}
