//! Surface BGG calculus in the frame `(sigma, sigma_x, sigma_y, sigma_hat)`.
//!
//! Lie-algebra values are acted on by the constant matrices `eps1`, `eps2`
//! through the commutator. Two-forms are represented by their `e1 ^ e2`
//! component, one-forms by their `x` and `y` components.

use nalgebra::Matrix4;

use crate::connection::{metric_split, ConnectionForm, MetricField};
use crate::error::{Error, Result};
use crate::fields::forms::wedge_bracket;
use crate::fields::{commutator, Grid, MatrixField, ScalarField};
use crate::wilczynski::{build_connection, hat_change, lie_quadric_metric, WilczynskiData};

/// Default bound on the quabla verification residual.
pub const QUABLA_TOL: f64 = 1e-9;

/// The pair `eps1 = E12 + E34`, `eps2 = E13 + E24`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsilonAction {
    pub eps1: Matrix4<f64>,
    pub eps2: Matrix4<f64>,
}

impl Default for EpsilonAction {
    fn default() -> Self {
        let mut eps1 = Matrix4::zeros();
        eps1[(0, 1)] = 1.0;
        eps1[(2, 3)] = 1.0;
        let mut eps2 = Matrix4::zeros();
        eps2[(0, 2)] = 1.0;
        eps2[(1, 3)] = 1.0;
        Self { eps1, eps2 }
    }
}

impl EpsilonAction {
    fn fields(&self, grid: Grid) -> (MatrixField, MatrixField) {
        (MatrixField::constant(grid, self.eps1), MatrixField::constant(grid, self.eps2))
    }

    /// `(d alpha)_x = -[eps2, alpha]`, `(d alpha)_y = [eps1, alpha]` on the
    /// `e1 ^ e2` component of a two-form.
    pub fn boundary_two(&self, alpha: &MatrixField) -> ConnectionForm {
        let (e1, e2) = self.fields(*alpha.grid());
        ConnectionForm { x: -&commutator(&e2, alpha), y: commutator(&e1, alpha) }
    }

    /// `[eps1, w_x] + [eps2, w_y]` on a one-form.
    pub fn boundary_one(&self, w: &ConnectionForm) -> MatrixField {
        let (e1, e2) = self.fields(*w.grid());
        &commutator(&e1, &w.x) + &commutator(&e2, &w.y)
    }
}

/// `boundary` with the standard epsilon pair.
pub fn boundary(alpha: &MatrixField) -> ConnectionForm {
    EpsilonAction::default().boundary_two(alpha)
}

/// Trace-free quadratic differential `q = a eps1 (x) eps1 + b eps2 (x) eps2`.
#[derive(Clone, Debug)]
pub struct QuadraticDifferential {
    pub a: ScalarField,
    pub b: ScalarField,
}

impl QuadraticDifferential {
    pub fn new(a: ScalarField, b: ScalarField) -> Result<Self> {
        a.grid().check_same(b.grid())?;
        Ok(Self { a, b })
    }

    pub fn zero(grid: Grid) -> Self {
        Self { a: ScalarField::zeros(grid), b: ScalarField::zeros(grid) }
    }

    /// The `(a, b)` carried by the data.
    pub fn from_data(w: &WilczynskiData) -> Result<Self> {
        let (a, b) = w.quadratic()?;
        Self::new(a.clone(), b.clone())
    }

    pub fn grid(&self) -> &Grid {
        self.a.grid()
    }

    /// As an endomorphism-valued one-form, `q_x = a eps1`, `q_y = b eps2`.
    pub fn form(&self) -> ConnectionForm {
        let g = *self.grid();
        ConnectionForm {
            x: MatrixField::from_entries(g, &[(0, 1, &self.a), (2, 3, &self.a)]),
            y: MatrixField::from_entries(g, &[(0, 2, &self.b), (1, 3, &self.b)]),
        }
    }
}

/// The frame system in the hat frame, split against the transformed metric.
#[derive(Clone, Debug)]
pub struct HatConnection {
    pub omega: ConnectionForm,
    pub metric: MetricField,
    pub d: ConnectionForm,
    pub n: ConnectionForm,
}

impl HatConnection {
    pub fn new(w: &WilczynskiData) -> Self {
        let p = hat_change(w);
        // P = I - tau with tau nilpotent, so P^{-1} = 2I - P.
        let pinv = &(&MatrixField::identity(*w.grid()) * 2.0) - &p;
        let om = build_connection(w);
        let act = |m: &MatrixField, dp: MatrixField| &(&(&pinv * m) * &p) + &(&pinv * &dp);
        let omega = ConnectionForm { x: act(&om.x, p.dx()), y: act(&om.y, p.dy()) };
        let g = lie_quadric_metric(w);
        let gh = &(&p.transpose() * g.matrix()) * &p;
        let metric = MetricField::new(gh).expect("congruent to the Lie-quadric metric");
        let (d, n) = metric_split(&omega, &metric).expect("same grid");
        Self { omega, metric, d, n }
    }
}

/// `e1 ^ e2` component of `d^D w`.
pub fn exterior_covariant(d: &ConnectionForm, w: &ConnectionForm) -> MatrixField {
    &w.curl() + &wedge_bracket(d, w).expect("same grid")
}

/// `d^D s` of a section.
pub fn covariant_zero(d: &ConnectionForm, s: &MatrixField) -> ConnectionForm {
    ConnectionForm { x: &s.dx() + &commutator(&d.x, s), y: &s.dy() + &commutator(&d.y, s) }
}

/// `quabla = d^D boundary + boundary d^D` on one-forms.
pub fn quabla(d: &ConnectionForm, w: &ConnectionForm) -> ConnectionForm {
    let eps = EpsilonAction::default();
    let first = covariant_zero(d, &eps.boundary_one(w));
    let second = eps.boundary_two(&exterior_covariant(d, w));
    &first + &second
}

/// `[N ^ q]` for the hat-frame `N`.
pub fn wedge_nq(hat: &HatConnection, q: &QuadraticDifferential) -> Result<MatrixField> {
    wedge_bracket(&hat.n, &q.form())
}

/// `psi = -quabla^{-1} boundary [N ^ q] = (beta b dx + gamma a dy) E14`,
/// verified against the quabla equation.
pub fn solve_psi(w: &WilczynskiData, q: &QuadraticDifferential) -> Result<ConnectionForm> {
    solve_psi_with(w, q, QUABLA_TOL)
}

pub fn solve_psi_with(w: &WilczynskiData, q: &QuadraticDifferential, tol: f64) -> Result<ConnectionForm> {
    w.grid().check_same(q.grid())?;
    let g = *w.grid();
    let psi = ConnectionForm {
        x: MatrixField::from_entries(g, &[(0, 3, &(&w.beta * &q.b))]),
        y: MatrixField::from_entries(g, &[(0, 3, &(&w.gamma * &q.a))]),
    };
    let hat = HatConnection::new(w);
    let source = boundary(&wedge_nq(&hat, q)?);
    let res = (&quabla(&hat.d, &psi) + &source).residual_norm();
    let scale = 1.0 + source.residual_norm();
    if !(res <= tol * scale) {
        return Err(Error::QuablaMismatch(res));
    }
    Ok(psi)
}

/// `Q_x = (beta gamma / 2) eps2`, `Q_y = (beta gamma / 2) eps1`, which makes
/// `D - Q` normal.
pub fn normal_correction(w: &WilczynskiData) -> ConnectionForm {
    let g = *w.grid();
    let half = &w.beta_gamma() * 0.5;
    ConnectionForm {
        x: MatrixField::from_entries(g, &[(0, 2, &half), (1, 3, &half)]),
        y: MatrixField::from_entries(g, &[(0, 1, &half), (2, 3, &half)]),
    }
}

/// Largest entry of `boundary R^{D - Q}`.
pub fn normality_residual(w: &WilczynskiData) -> f64 {
    let hat = HatConnection::new(w);
    let dq = &hat.d - &normal_correction(w);
    let r = crate::connection::curvature(&dq).expect("same grid");
    boundary(&r).residual_norm()
}

/// `(2 a_y - 2 beta gamma_x - beta_x gamma, 2 b_x - 2 beta_y gamma - beta gamma_y)`.
pub fn cotton_york_residual(w: &WilczynskiData, q: &QuadraticDifferential) -> Result<(ScalarField, ScalarField)> {
    w.grid().check_same(q.grid())?;
    let (be, ga) = (&w.beta, &w.gamma);
    let first = &(&(&q.a.dy() * 2.0) - &(&(be * &ga.dx()) * 2.0)) - &(&be.dx() * ga);
    let second = &(&(&q.b.dx() * 2.0) - &(&(&be.dy() * ga) * 2.0)) - &(be * &ga.dy());
    Ok((first, second))
}

/// The `(1,4)` entry of `d^D psi + [N ^ q]`.
pub fn cup_residual(w: &WilczynskiData, q: &QuadraticDifferential) -> Result<ScalarField> {
    let hat = HatConnection::new(w);
    let psi = solve_psi(w, q)?;
    let total = &exterior_covariant(&hat.d, &psi) + &wedge_nq(&hat, q)?;
    Ok(total.entry(0, 3))
}

/// `chi = Q + q` for the gauged spectral family.
pub fn chi_from_quadratic(w: &WilczynskiData, q: &QuadraticDifferential) -> ConnectionForm {
    &normal_correction(w) + &q.form()
}
