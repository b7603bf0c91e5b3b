//! Truncated bivariate Taylor jets.
//!
//! A jet of order `k` stores the Taylor coefficients `f_{ij} / (i! j!)` of a
//! function at a point for all `i + j <= k`. Ring operations on jets are exact
//! up to the truncation order, so derivatives of products, inverses and
//! compositions come out without symbolic expression swell.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::SMatrix;

use super::grid::Axis;

pub const MAX_ORDER: usize = 4;
pub const MAX_LEN: usize = ncoef(MAX_ORDER);

/// Number of coefficients of a jet of the given order.
pub const fn ncoef(order: usize) -> usize {
    (order + 1) * (order + 2) / 2
}

/// Storage slot of the monomial `x^i y^j`.
pub const fn idx(i: usize, j: usize) -> usize {
    let d = i + j;
    d * (d + 1) / 2 + j
}

const MONO: [(usize, usize); MAX_LEN] = {
    let mut out = [(0, 0); MAX_LEN];
    let mut d = 0;
    while d <= MAX_ORDER {
        let mut j = 0;
        while j <= d {
            out[idx(d - j, j)] = (d - j, j);
            j += 1;
        }
        d += 1;
    }
    out
};

const FACT: [f64; 9] = [1.0, 1.0, 2.0, 6.0, 24.0, 120.0, 720.0, 5040.0, 40320.0];

/// Values that can sit in a jet coefficient slot.
pub trait JetValue:
    Copy
    + Send
    + Sync
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Neg<Output = Self>
    + Mul<f64, Output = Self>
    + 'static
{
    fn zero() -> Self;
    fn max_abs(&self) -> f64;
    fn all_finite(&self) -> bool;
}

impl JetValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn max_abs(&self) -> f64 {
        self.abs()
    }
    fn all_finite(&self) -> bool {
        self.is_finite()
    }
}

impl<const R: usize, const C: usize> JetValue for SMatrix<f64, R, C> {
    fn zero() -> Self {
        Self::zeros()
    }
    fn max_abs(&self) -> f64 {
        self.amax()
    }
    fn all_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Jet<T> {
    order: usize,
    c: [T; MAX_LEN],
}

impl<T: JetValue> Jet<T> {
    pub fn constant(value: T, order: usize) -> Self {
        let mut c = [T::zero(); MAX_LEN];
        c[0] = value;
        Self { order: order.min(MAX_ORDER), c }
    }

    pub fn zero(order: usize) -> Self {
        Self::constant(T::zero(), order)
    }

    /// Builds a jet from `ncoef(order)` stored coefficients.
    pub fn from_coeffs(order: usize, coeffs: &[T]) -> Self {
        assert!(order <= MAX_ORDER, "jet order {order} exceeds {MAX_ORDER}");
        assert_eq!(coeffs.len(), ncoef(order));
        let mut c = [T::zero(); MAX_LEN];
        c[..coeffs.len()].copy_from_slice(coeffs);
        Self { order, c }
    }

    pub fn coeffs(&self) -> &[T] {
        &self.c[..ncoef(self.order)]
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn value(&self) -> T {
        self.c[0]
    }

    /// Taylor coefficient of `x^i y^j`.
    pub fn taylor(&self, i: usize, j: usize) -> T {
        assert!(i + j <= self.order, "jet of order {} has no ({i},{j}) term", self.order);
        self.c[idx(i, j)]
    }

    /// Partial derivative `d^{i+j} f / dx^i dy^j` at the expansion point.
    pub fn partial(&self, i: usize, j: usize) -> Option<T> {
        (i + j <= self.order).then(|| self.c[idx(i, j)] * (FACT[i] * FACT[j]))
    }

    /// Jet of the first derivative along `axis`, one order lower.
    pub fn derivative(&self, axis: Axis) -> Option<Self> {
        if self.order == 0 {
            return None;
        }
        let order = self.order - 1;
        let mut c = [T::zero(); MAX_LEN];
        for (k, slot) in c.iter_mut().enumerate().take(ncoef(order)) {
            let (i, j) = MONO[k];
            *slot = match axis {
                Axis::X => self.c[idx(i + 1, j)] * (i + 1) as f64,
                Axis::Y => self.c[idx(i, j + 1)] * (j + 1) as f64,
            };
        }
        Some(Self { order, c })
    }

    pub fn truncate(&self, order: usize) -> Self {
        let order = order.min(self.order);
        let mut c = self.c;
        for slot in c.iter_mut().skip(ncoef(order)) {
            *slot = T::zero();
        }
        Self { order, c }
    }

    /// Evaluates the Taylor polynomial at offset `(hx, hy)` from the expansion point.
    pub fn eval_offset(&self, hx: f64, hy: f64) -> T {
        let mut acc = T::zero();
        for k in (0..ncoef(self.order)).rev() {
            let (i, j) = MONO[k];
            acc = acc + self.c[k] * (hx.powi(i as i32) * hy.powi(j as i32));
        }
        acc
    }

    /// Jet of the same function in the coordinates `X = lx * x`, `Y = ly * y`.
    pub fn rescaled(&self, lx: f64, ly: f64) -> Self {
        let mut c = self.c;
        for (k, slot) in c.iter_mut().enumerate().take(ncoef(self.order)) {
            let (i, j) = MONO[k];
            *slot = *slot * (1.0 / (lx.powi(i as i32) * ly.powi(j as i32)));
        }
        Self { order: self.order, c }
    }

    /// Applies a linear map coefficient-wise.
    pub fn map<U: JetValue>(&self, f: impl Fn(T) -> U) -> Jet<U> {
        let mut c = [U::zero(); MAX_LEN];
        for k in 0..ncoef(self.order) {
            c[k] = f(self.c[k]);
        }
        Jet { order: self.order, c }
    }

    /// Cauchy product of two jets under a bilinear map.
    pub fn bilinear<A: JetValue, B: JetValue>(a: &Jet<A>, b: &Jet<B>, f: impl Fn(A, B) -> T) -> Self {
        let order = a.order.min(b.order);
        let n = ncoef(order);
        let mut c = [T::zero(); MAX_LEN];
        // Inputs are often polynomials of low degree; skip their zero slots.
        let mut live_b = [false; MAX_LEN];
        for (live, v) in live_b.iter_mut().zip(&b.c[..n]) {
            *live = v.max_abs() != 0.0;
        }
        for p in 0..n {
            if a.c[p].max_abs() == 0.0 {
                continue;
            }
            let (ip, jp) = MONO[p];
            let dp = ip + jp;
            for q in 0..n {
                let (iq, jq) = MONO[q];
                if dp + iq + jq > order {
                    // Later slots have higher degree.
                    break;
                }
                if !live_b[q] {
                    continue;
                }
                let r = idx(ip + iq, jp + jq);
                c[r] = c[r] + f(a.c[p], b.c[q]);
            }
        }
        Self { order, c }
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs().iter().map(|v| v.max_abs()).fold(0.0, f64::max)
    }
}

impl Jet<f64> {
    /// The coordinate function along `axis`, expanded at `value`.
    pub fn variable(value: f64, axis: Axis, order: usize) -> Self {
        let mut jet = Self::constant(value, order);
        if jet.order >= 1 {
            match axis {
                Axis::X => jet.c[idx(1, 0)] = 1.0,
                Axis::Y => jet.c[idx(0, 1)] = 1.0,
            }
        }
        jet
    }

    /// Composes with a scalar function whose derivatives at the base value are `derivs`.
    fn compose(&self, derivs: &[f64]) -> Self {
        let mut delta = *self;
        delta.c[0] = 0.0;
        let mut out = Self::constant(derivs[0], self.order);
        let mut power = Self::constant(1.0, self.order);
        for (n, d) in derivs.iter().enumerate().take(self.order + 1).skip(1) {
            power = &power * &delta;
            out = out + power * (d / FACT[n]);
        }
        out
    }

    pub fn exp(&self) -> Self {
        let e = self.c[0].exp();
        self.compose(&[e; MAX_ORDER + 1])
    }

    pub fn sin(&self) -> Self {
        let (s, c) = self.c[0].sin_cos();
        self.compose(&[s, c, -s, -c, s])
    }

    pub fn cos(&self) -> Self {
        let (s, c) = self.c[0].sin_cos();
        self.compose(&[c, -s, -c, s, c])
    }

    pub fn sinh(&self) -> Self {
        let (s, c) = (self.c[0].sinh(), self.c[0].cosh());
        self.compose(&[s, c, s, c, s])
    }

    pub fn cosh(&self) -> Self {
        let (s, c) = (self.c[0].sinh(), self.c[0].cosh());
        self.compose(&[c, s, c, s, c])
    }

    pub fn recip(&self) -> Self {
        let a = self.c[0];
        let mut derivs = [0.0; MAX_ORDER + 1];
        let mut inv_pow = 1.0 / a;
        for (n, d) in derivs.iter_mut().enumerate() {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            *d = sign * FACT[n] * inv_pow;
            inv_pow /= a;
        }
        self.compose(&derivs)
    }

    /// Real power `x^p`; the base value must be positive unless `p` is an integer.
    pub fn powf(&self, p: f64) -> Self {
        let a = self.c[0];
        let mut derivs = [0.0; MAX_ORDER + 1];
        let mut coef = 1.0;
        for (n, d) in derivs.iter_mut().enumerate() {
            *d = coef * a.powf(p - n as f64);
            coef *= p - n as f64;
        }
        self.compose(&derivs)
    }

    pub fn powi(&self, n: i32) -> Self {
        if n < 0 {
            return self.recip().powi(-n);
        }
        let mut base = *self;
        let mut out = Self::constant(1.0, self.order);
        let mut e = n as u32;
        while e > 0 {
            if e & 1 == 1 {
                out = &out * &base;
            }
            base = &base * &base;
            e >>= 1;
        }
        out
    }
}

impl<const N: usize> Jet<SMatrix<f64, N, N>> {
    /// Inverse through the Neumann series around the value, exact to the jet order.
    pub fn try_inverse(&self) -> Option<Self> {
        let m0_inv = self.c[0].try_inverse()?;
        let mut delta = *self;
        delta.c[0] = SMatrix::zeros();
        let k = delta.map(|m| -(m0_inv * m));
        let id = Self::constant(SMatrix::identity(), self.order);
        let mut term = id;
        let mut sum = id;
        for _ in 0..self.order {
            term = &term * &k;
            sum = sum + term;
        }
        Some(sum.map(|m| m * m0_inv))
    }

    pub fn transpose(&self) -> Self {
        self.map(|m| m.transpose())
    }

    pub fn trace(&self) -> Jet<f64> {
        self.map(|m| m.trace())
    }

    /// Determinant by cofactor expansion on entry jets.
    pub fn determinant(&self) -> Jet<f64> {
        let entries: Vec<Jet<f64>> = (0..N * N).map(|k| self.map(|m| m[(k / N, k % N)])).collect();
        cofactor_det(&entries, N, self.order)
    }
}

fn cofactor_det(entries: &[Jet<f64>], n: usize, order: usize) -> Jet<f64> {
    if n == 1 {
        return entries[0];
    }
    let mut total = Jet::zero(order);
    for col in 0..n {
        let minor: Vec<Jet<f64>> = (1..n)
            .flat_map(|r| (0..n).filter(move |&c| c != col).map(move |c| (r, c)))
            .map(|(r, c)| entries[r * n + c])
            .collect();
        let term = &entries[col] * &cofactor_det(&minor, n - 1, order);
        total = if col % 2 == 0 { total + term } else { total - term };
    }
    total
}

impl<T: JetValue> Add for Jet<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let order = self.order.min(rhs.order);
        let mut c = [T::zero(); MAX_LEN];
        for k in 0..ncoef(order) {
            c[k] = self.c[k] + rhs.c[k];
        }
        Self { order, c }
    }
}

impl<T: JetValue> AddAssign for Jet<T> {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<T: JetValue> Sub for Jet<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl<T: JetValue> Neg for Jet<T> {
    type Output = Self;
    fn neg(self) -> Self {
        self.map(|v| -v)
    }
}

impl<T: JetValue> Mul<f64> for Jet<T> {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        self.map(|v| v * rhs)
    }
}

impl<'a, A, B> Mul<&'a Jet<B>> for &'a Jet<A>
where
    A: JetValue + Mul<B>,
    B: JetValue,
    <A as Mul<B>>::Output: JetValue,
{
    type Output = Jet<<A as Mul<B>>::Output>;
    fn mul(self, rhs: &'a Jet<B>) -> Self::Output {
        Jet::bilinear(self, rhs, |a, b| a * b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix4;

    fn xy(x: f64, y: f64) -> (Jet<f64>, Jet<f64>) {
        (Jet::variable(x, Axis::X, MAX_ORDER), Jet::variable(y, Axis::Y, MAX_ORDER))
    }

    #[test]
    fn slot_layout_is_graded() {
        assert_eq!(idx(0, 0), 0);
        assert_eq!(idx(1, 0), 1);
        assert_eq!(idx(0, 1), 2);
        assert_eq!(idx(0, 4), 14);
        for (k, &(i, j)) in MONO.iter().enumerate() {
            assert_eq!(idx(i, j), k);
        }
    }

    #[test]
    fn polynomial_derivatives_are_exact() {
        let (x, y) = xy(0.7, -1.3);
        // f = x^3 y + 2 x y^2
        let g = &x.powi(3) * &y + (&x * &y.powi(2)) * 2.0;
        assert!((g.partial(0, 0).unwrap() - (0.343 * -1.3 + 2.0 * 0.7 * 1.69)).abs() < 1e-12);
        assert!((g.partial(1, 0).unwrap() - (3.0 * 0.49 * -1.3 + 2.0 * 1.69)).abs() < 1e-12);
        assert!((g.partial(1, 1).unwrap() - (3.0 * 0.49 + 4.0 * -1.3)).abs() < 1e-12);
        assert!((g.partial(3, 1).unwrap() - 6.0).abs() < 1e-12);
        assert!(g.partial(4, 1).is_none());
    }

    #[test]
    fn transcendental_chain_rule() {
        let (x, y) = xy(0.3, 0.5);
        let u = &x * &y;
        let f = u.sin();
        // d/dx sin(xy) = y cos(xy); d2/dxdy = cos(xy) - xy sin(xy)
        let v = 0.15f64;
        assert!((f.partial(1, 0).unwrap() - 0.5 * v.cos()).abs() < 1e-14);
        assert!((f.partial(1, 1).unwrap() - (v.cos() - v * v.sin())).abs() < 1e-14);
        let e = (x * 2.0).exp();
        assert!((e.partial(4, 0).unwrap() - 16.0 * 0.6f64.exp()).abs() < 1e-12);
        let r = x.recip();
        assert!((r.partial(3, 0).unwrap() + 6.0 / 0.3f64.powi(4)).abs() < 1e-9);
        let c = (y * 3.0).cosh();
        assert!((c.partial(2, 0).unwrap()).abs() < 1e-15);
        assert!((c.partial(0, 2).unwrap() - 9.0 * 1.5f64.cosh()).abs() < 1e-12);
        let p = x.powf(0.5);
        assert!((p.partial(2, 0).unwrap() + 0.25 * 0.3f64.powf(-1.5)).abs() < 1e-12);
    }

    #[test]
    fn derivative_shifts_the_jet() {
        let (x, y) = xy(1.0, 2.0);
        let f = &x.powi(2) * &y.powi(2);
        let fx = f.derivative(Axis::X).unwrap();
        assert_eq!(fx.order(), MAX_ORDER - 1);
        // fx = 2 x y^2, fxy = 4 x y
        assert!((fx.value() - 8.0).abs() < 1e-14);
        assert!((fx.partial(0, 1).unwrap() - 8.0).abs() < 1e-14);
    }

    #[test]
    fn matrix_inverse_jet() {
        let (x, y) = xy(0.2, 0.4);
        let mut m = Jet::<Matrix4<f64>>::constant(Matrix4::identity() * 2.0, MAX_ORDER);
        m = m + x.map(|v| Matrix4::new(0.0, v, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, v, 0.0, 0.0, 0.0));
        m = m + y.sin().map(|v| Matrix4::from_diagonal_element(v));
        let inv = m.try_inverse().unwrap();
        let prod = &m * &inv;
        for k in 0..ncoef(MAX_ORDER) {
            let target = if k == 0 { Matrix4::identity() } else { Matrix4::zeros() };
            assert!((prod.c[k] - target).amax() < 1e-12, "slot {k}");
        }
        let det = m.determinant();
        let det_inv = inv.determinant();
        let one = &det * &det_inv;
        assert!((one.value() - 1.0).abs() < 1e-12);
        assert!(one.partial(2, 1).unwrap().abs() < 1e-10);
    }

    #[test]
    fn taylor_evaluation_matches_function() {
        let (x, y) = xy(0.1, 0.2);
        let f = (&x * &y).exp();
        let approx = f.eval_offset(0.005, -0.005);
        let exact = (0.105f64 * 0.195).exp();
        assert!((approx - exact).abs() < 1e-12);
    }
}
