//! The Wilczynski frame system of a surface in asymptotic coordinates.
//!
//! A lift `sigma` of the surface satisfies
//!
//! ```text
//! sigma_xx = beta  sigma_y + (V - beta_y)  / 2 sigma
//! sigma_yy = gamma sigma_x + (W - gamma_x) / 2 sigma
//! ```
//!
//! and the frame `F = (sigma, sigma_x, sigma_y, sigma_xy)` obeys `dF = F Omega`
//! with `Omega` the transpose of the classical row-action matrices.

use nalgebra::{Matrix4, Vector4};

use crate::connection::{curvature, metric_split, ConnectionForm, MetricField};
use crate::error::{Error, Result};
use crate::fields::io::Assignments;
use crate::fields::{commutator, Axis, Grid, MatrixField, ScalarField, VectorField};

/// Keys accepted in a coefficient file.
pub const COEFFICIENT_KEYS: [&str; 7] = ["beta", "gamma", "V", "W", "a", "b", "alpha"];

/// Jet order used for analytic inputs.
pub const INPUT_ORDER: usize = 4;

/// Coefficients `(beta, gamma, V, W)` with optional quadratic differential
/// `(a, b)` and Chebyshev potential `alpha`.
#[derive(Clone, Debug)]
pub struct WilczynskiData {
    pub beta: ScalarField,
    pub gamma: ScalarField,
    pub v: ScalarField,
    pub w: ScalarField,
    pub a: Option<ScalarField>,
    pub b: Option<ScalarField>,
    pub alpha: Option<ScalarField>,
}

impl WilczynskiData {
    pub fn new(beta: ScalarField, gamma: ScalarField, v: ScalarField, w: ScalarField) -> Result<Self> {
        for f in [&gamma, &v, &w] {
            beta.grid().check_same(f.grid())?;
        }
        Ok(Self { beta, gamma, v, w, a: None, b: None, alpha: None })
    }

    /// Constant coefficients on a grid.
    pub fn constant(grid: Grid, beta: f64, gamma: f64, v: f64, w: f64) -> Self {
        let c = |s| ScalarField::constant(grid, s);
        Self { beta: c(beta), gamma: c(gamma), v: c(v), w: c(w), a: None, b: None, alpha: None }
    }

    /// The quadric: all coefficients zero.
    pub fn quadric(grid: Grid) -> Self {
        Self::constant(grid, 0.0, 0.0, 0.0, 0.0)
    }

    /// Builds exact fields from a parsed coefficient file; missing `grid` falls back to `default_grid`.
    pub fn from_assignments(a: &Assignments, default_grid: Grid) -> Result<Self> {
        let grid = a.grid.unwrap_or(default_grid);
        let field = |key: &str| a.require(key).and_then(|e| e.to_field(grid, INPUT_ORDER));
        let optional = |key: &str| a.get(key).map(|e| e.to_field(grid, INPUT_ORDER)).transpose();
        let mut out = Self::new(field("beta")?, field("gamma")?, field("V")?, field("W")?)?;
        out.a = optional("a")?;
        out.b = optional("b")?;
        out.alpha = optional("alpha")?;
        Ok(out)
    }

    pub fn with_quadratic(mut self, a: ScalarField, b: ScalarField) -> Result<Self> {
        self.grid().check_same(a.grid())?;
        self.grid().check_same(b.grid())?;
        self.a = Some(a);
        self.b = Some(b);
        Ok(self)
    }

    pub fn with_potential(mut self, alpha: ScalarField) -> Result<Self> {
        self.grid().check_same(alpha.grid())?;
        self.alpha = Some(alpha);
        Ok(self)
    }

    pub fn grid(&self) -> &Grid {
        self.beta.grid()
    }

    /// `(a, b)`, or `missing-key` naming the first absent one.
    pub fn quadratic(&self) -> Result<(&ScalarField, &ScalarField)> {
        let a = self.a.as_ref().ok_or_else(|| Error::MissingKey("a".into()))?;
        let b = self.b.as_ref().ok_or_else(|| Error::MissingKey("b".into()))?;
        Ok((a, b))
    }

    /// Spectral insertion `(t beta, t gamma, t^2 V, t^2 W)`.
    ///
    /// The quadratic differential scales by `t^2` along with `chi`; the
    /// potential is dropped since the conserved quantity is rescaled.
    pub fn spectral(&self, t: f64) -> Self {
        let t2 = t * t;
        Self {
            beta: &self.beta * t,
            gamma: &self.gamma * t,
            v: &self.v * t2,
            w: &self.w * t2,
            a: self.a.as_ref().map(|f| f * t2),
            b: self.b.as_ref().map(|f| f * t2),
            alpha: None,
        }
    }

    /// Coefficients in the coordinates `X = lambda x`, `Y = mu y`.
    ///
    /// `beta -> mu beta / lambda^2`, `gamma -> lambda gamma / mu^2`,
    /// `V -> V / lambda^2`, `W -> W / mu^2`, and the quadratic differential
    /// `a -> a / lambda^2`, `b -> b / mu^2`. The potential is unchanged.
    pub fn rescale(&self, lambda: f64, mu: f64) -> Result<Self> {
        let re = |f: &ScalarField, s: f64| f.rescale_coordinates(lambda, mu).map(|g| &g * s);
        let (l2, m2) = (lambda * lambda, mu * mu);
        Ok(Self {
            beta: re(&self.beta, mu / l2)?,
            gamma: re(&self.gamma, lambda / m2)?,
            v: re(&self.v, 1.0 / l2)?,
            w: re(&self.w, 1.0 / m2)?,
            a: self.a.as_ref().map(|f| re(f, 1.0 / l2)).transpose()?,
            b: self.b.as_ref().map(|f| re(f, 1.0 / m2)).transpose()?,
            alpha: self.alpha.as_ref().map(|f| re(f, 1.0)).transpose()?,
        })
    }

    pub fn beta_gamma(&self) -> ScalarField {
        &self.beta * &self.gamma
    }
}

/// Matrix field with entries given in the classical row-action layout, stored transposed.
fn transposed_from_rows(grid: Grid, rows: &[(usize, usize, &ScalarField)]) -> MatrixField {
    let swapped: Vec<(usize, usize, &ScalarField)> = rows.iter().map(|&(r, c, f)| (c, r, f)).collect();
    MatrixField::from_entries(grid, &swapped)
}

/// The trivial connection in the frame `(sigma, sigma_x, sigma_y, sigma_xy)`.
pub fn build_connection(w: &WilczynskiData) -> ConnectionForm {
    let g = *w.grid();
    let one = ScalarField::constant(g, 1.0);
    let (be, ga, v, ww) = (&w.beta, &w.gamma, &w.v, &w.w);
    let (be_y, ga_x) = (be.dy(), ga.dx());
    let bg = w.beta_gamma();

    let x10 = &(v - &be_y) * 0.5;
    let x30 = &(&(&(&(be * ww) - &(be * &ga_x)) + &v.dy()) - &be_y.dy()) * 0.5;
    let x32 = &(v + &be_y) * 0.5;
    let ax = transposed_from_rows(
        g,
        &[(0, 1, &one), (1, 0, &x10), (1, 2, be), (2, 3, &one), (3, 0, &x30), (3, 1, &bg), (3, 2, &x32)],
    );

    let y20 = &(ww - &ga_x) * 0.5;
    let y30 = &(&(&(&(ga * v) - &(ga * &be_y)) + &ww.dx()) - &ga_x.dx()) * 0.5;
    let y31 = &(ww + &ga_x) * 0.5;
    let ay = transposed_from_rows(
        g,
        &[(0, 2, &one), (1, 3, &one), (2, 0, &y20), (2, 1, ga), (3, 0, &y30), (3, 1, &y31), (3, 2, &bg)],
    );
    ConnectionForm { x: ax, y: ay }
}

/// Max-norm of the curvature of the frame system; zero iff it is integrable.
pub fn compatibility_residual(w: &WilczynskiData) -> f64 {
    curvature(&build_connection(w)).expect("components share a grid").residual_norm()
}

/// Gram matrix of the Lie-quadric congruence.
pub fn lie_quadric_metric(w: &WilczynskiData) -> MetricField {
    let g = *w.grid();
    let one = ScalarField::constant(g, 1.0);
    let minus = ScalarField::constant(g, -1.0);
    let bg = w.beta_gamma();
    let m = MatrixField::from_entries(g, &[(0, 3, &one), (3, 0, &one), (1, 2, &minus), (2, 1, &minus), (3, 3, &bg)]);
    MetricField::new(m).expect("the Lie-quadric metric has determinant 1")
}

/// `d = D + N` against the Lie-quadric metric.
pub fn split_lie_quadric(w: &WilczynskiData) -> (ConnectionForm, ConnectionForm) {
    metric_split(&build_connection(w), &lie_quadric_metric(w)).expect("same grid")
}

/// The canonical `(chi, psi, tau)` of the spectral family.
pub fn canonical_chi_psi_tau(w: &WilczynskiData) -> (ConnectionForm, ConnectionForm, MatrixField) {
    let g = *w.grid();
    let half_v = &w.v * 0.5;
    let half_w = &w.w * 0.5;
    let half_bg = &w.beta_gamma() * 0.5;
    let chi = ConnectionForm {
        x: MatrixField::from_entries(g, &[(0, 1, &half_v), (0, 2, &half_bg), (1, 3, &half_bg), (2, 3, &half_v)]),
        y: MatrixField::from_entries(g, &[(0, 1, &half_bg), (0, 2, &half_w), (1, 3, &half_w), (2, 3, &half_bg)]),
    };
    let psi = ConnectionForm {
        x: MatrixField::from_entries(g, &[(0, 3, &(&w.beta * &half_w))]),
        y: MatrixField::from_entries(g, &[(0, 3, &(&w.gamma * &half_v))]),
    };
    let tau = MatrixField::from_entries(g, &[(0, 3, &half_bg)]);
    (chi, psi, tau)
}

/// The `(chi, psi)` determined by a quadratic differential `(a, b)`, written in
/// the frame `(sigma, sigma_x, sigma_y, sigma_hat)`:
/// `chi = (a dx + bg/2 dy) eps1 + (bg/2 dx + b dy) eps2` and
/// `psi = (beta b dx + gamma a dy) E_14`.
pub fn chi_psi_from_quadratic(w: &WilczynskiData, a: &ScalarField, b: &ScalarField) -> (ConnectionForm, ConnectionForm) {
    let g = *w.grid();
    let half_bg = &w.beta_gamma() * 0.5;
    let eps = |one: &ScalarField, two: &ScalarField| {
        MatrixField::from_entries(g, &[(0, 1, one), (2, 3, one), (0, 2, two), (1, 3, two)])
    };
    let chi = ConnectionForm { x: eps(a, &half_bg), y: eps(&half_bg, b) };
    let psi = ConnectionForm {
        x: MatrixField::from_entries(g, &[(0, 3, &(&w.beta * b))]),
        y: MatrixField::from_entries(g, &[(0, 3, &(&w.gamma * a))]),
    };
    (chi, psi)
}

/// How the spectral family is built.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Route {
    /// Frame system with `(t beta, t gamma, t^2 V, t^2 W)`.
    Insertion,
    /// `D + t N + (t^2 - 1)(chi + d^D tau) + (t^3 - t) psi`.
    Assembled,
}

/// Covariant derivative `d tau + [D, tau]` of a matrix section.
pub fn covariant_derivative(d: &ConnectionForm, tau: &MatrixField) -> ConnectionForm {
    ConnectionForm { x: &tau.dx() + &commutator(&d.x, tau), y: &tau.dy() + &commutator(&d.y, tau) }
}

/// The pieces `D`, `N`, `chi + d^D tau` and `psi` of the assembled family,
/// computed once for evaluation at many `t`.
#[derive(Clone, Debug)]
pub struct SpectralFamily {
    pub d: ConnectionForm,
    pub n: ConnectionForm,
    pub quadratic: ConnectionForm,
    pub psi: ConnectionForm,
}

impl SpectralFamily {
    pub fn new(w: &WilczynskiData) -> Self {
        let (d, n) = split_lie_quadric(w);
        let (chi, psi, tau) = canonical_chi_psi_tau(w);
        let quadratic = &chi + &covariant_derivative(&d, &tau);
        Self { d, n, quadratic, psi }
    }

    /// `D + t N + (t^2 - 1)(chi + d^D tau) + (t^3 - t) psi`.
    pub fn at(&self, t: f64) -> ConnectionForm {
        let (s, u) = (t * t - 1.0, t * t * t - t);
        let comb = |a: &MatrixField, b: &MatrixField, c: &MatrixField, d: &MatrixField| {
            MatrixField::linear_combination(&[(a, 1.0), (b, t), (c, s), (d, u)])
        };
        ConnectionForm {
            x: comb(&self.d.x, &self.n.x, &self.quadratic.x, &self.psi.x),
            y: comb(&self.d.y, &self.n.y, &self.quadratic.y, &self.psi.y),
        }
    }
}

/// The connection `d_t` of the spectral family.
pub fn spectral_connection(w: &WilczynskiData, t: f64, route: Route) -> ConnectionForm {
    match route {
        Route::Insertion => build_connection(&w.spectral(t)),
        Route::Assembled => SpectralFamily::new(w).at(t),
    }
}

/// `D + t N + (t^2 - 1) chi + (t^3 - t) psi`, the family after removing `tau`.
pub fn gauged_family(
    d: &ConnectionForm,
    n: &ConnectionForm,
    chi: &ConnectionForm,
    psi: &ConnectionForm,
    t: f64,
) -> ConnectionForm {
    &(&(d + &(n * t)) + &(chi * (t * t - 1.0))) + &(psi * (t * t * t - t))
}

/// Sign of the `gamma a_x` term in the first Möbius-flat equation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CmfSign {
    /// `2 beta_y b - beta b_y = 2 gamma_x a - gamma a_x`.
    #[default]
    Intro,
    /// `2 beta_y b - beta b_y = 2 gamma_x a + gamma a_x`.
    Derived,
}

/// Max-norm residuals of the three Möbius-flat equations and the classical condition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MoebiusResiduals {
    pub r_a: f64,
    pub r_b: f64,
    pub r_c: f64,
    pub r_classical: f64,
}

impl MoebiusResiduals {
    pub fn max(&self) -> f64 {
        self.r_a.max(self.r_b).max(self.r_c).max(self.r_classical)
    }
}

/// Pointwise residual fields `(r_a, r_b, r_c, r_classical)`.
pub fn moebius_flat_fields(w: &WilczynskiData, sign: CmfSign) -> Result<[ScalarField; 4]> {
    let (a, b) = w.quadratic()?;
    let (be, ga) = (&w.beta, &w.gamma);
    let (be_y, ga_x) = (be.dy(), ga.dx());
    let sgn = match sign {
        CmfSign::Intro => 1.0,
        CmfSign::Derived => -1.0,
    };
    let r_a = &(&(&(&be_y * b) * 2.0) - &(be * &b.dy())) - &(&(&(&ga_x * a) * 2.0) - &(&(ga * &a.dx()) * sgn));
    let r_b = &(&(&b.dx() * 2.0) - &(&(ga * &be_y) * 2.0)) - &(be * &ga.dy());
    let r_c = &(&(&a.dy() * 2.0) - &(&(be * &ga_x) * 2.0)) - &(ga * &be.dx());
    let r_cl = &be_y.dy().dy() - &ga_x.dx().dx();
    Ok([r_a, r_b, r_c, r_cl])
}

pub fn moebius_flat_residuals(w: &WilczynskiData, sign: CmfSign) -> Result<MoebiusResiduals> {
    let [a, b, c, cl] = moebius_flat_fields(w, sign)?;
    Ok(MoebiusResiduals {
        r_a: a.residual_norm(),
        r_b: b.residual_norm(),
        r_c: c.residual_norm(),
        r_classical: cl.residual_norm(),
    })
}

fn place_column(k: usize) -> impl Fn(Vector4<f64>) -> Matrix4<f64> + Sync {
    move |v| {
        let mut m = Matrix4::zeros();
        m.set_column(k, &v);
        m
    }
}

/// Matrix field whose columns are the given vector fields.
pub fn frame_from_columns(cols: [&VectorField; 4]) -> Result<MatrixField> {
    let g = *cols[0].grid();
    let mut acc = MatrixField::zeros(g);
    for (k, c) in cols.iter().enumerate() {
        g.check_same(c.grid())?;
        acc = &acc + &c.map_linear(place_column(k));
    }
    Ok(acc)
}

/// Column `k` of a matrix field.
pub fn column(m: &MatrixField, k: usize) -> VectorField {
    m.map_linear(move |a| a.column(k).into_owned())
}

/// A frame `F = L * G(x, y)` with constant left factor `L`; the columns of
/// `F` are `(sigma, sigma_x, sigma_y, sigma_xy)`.
///
/// Keeping `L` apart lets integrated frames stay well conditioned: only the
/// local factor `G` enters coefficient extraction.
#[derive(Clone, Debug)]
pub struct SurfaceFrame {
    left: Matrix4<f64>,
    local: MatrixField,
}

impl SurfaceFrame {
    pub fn new(frame: MatrixField) -> Self {
        Self { left: Matrix4::identity(), local: frame }
    }

    pub fn factored(left: Matrix4<f64>, local: MatrixField) -> Self {
        Self { left, local }
    }

    /// Frame of a lift: `(sigma, sigma_x, sigma_y, sigma_xy)`.
    pub fn from_lift(sigma: &VectorField) -> Self {
        let (sx, sy) = (sigma.dx(), sigma.dy());
        let sxy = sx.dy();
        Self::new(frame_from_columns([sigma, &sx, &sy, &sxy]).expect("one grid"))
    }

    pub fn left(&self) -> &Matrix4<f64> {
        &self.left
    }

    pub fn local(&self) -> &MatrixField {
        &self.local
    }

    pub fn grid(&self) -> &Grid {
        self.local.grid()
    }

    pub fn frame(&self) -> MatrixField {
        let l = self.left;
        self.local.map_linear(move |m| l * m)
    }

    /// The lift `sigma`, first column of `F`.
    pub fn lift(&self) -> VectorField {
        let l = self.left;
        self.local.map_linear(move |m| l * m.column(0).into_owned())
    }

    pub fn determinant(&self) -> ScalarField {
        &self.local.determinant() * self.left.determinant()
    }

    /// Largest mismatch in `col2 = d_x col1`, `col3 = d_y col1`, `col4 = d_y col2`,
    /// measured on the local factor.
    pub fn column_residual(&self) -> f64 {
        let c: Vec<VectorField> = (0..4).map(|k| column(&self.local, k)).collect();
        let r1 = (&c[1] - &c[0].dx()).residual_norm();
        let r2 = (&c[2] - &c[0].dy()).residual_norm();
        let r3 = (&c[3] - &c[1].dy()).residual_norm();
        r1.max(r2).max(r3)
    }

    /// Rescales the lift so that `det F = 1`.
    ///
    /// A constant determinant is fixed by a constant factor; otherwise the
    /// lift `lambda sigma` with `lambda = |det F|^(-1/4)` is differentiated
    /// afresh. A negative determinant also flips the first ambient axis.
    pub fn normalize(&self) -> Result<Self> {
        let det = self.determinant();
        let vals = det.values();
        if let Some(k) = vals.iter().position(|d| !d.is_finite() || *d == 0.0) {
            let (i, j) = self.grid().node(k);
            return Err(Error::FrameDegenerate { i, j });
        }
        let sign = vals[0].signum();
        if vals.iter().any(|d| d.signum() != sign) {
            return Err(Error::Invalid("frame determinant changes sign".into()));
        }
        let flip = Matrix4::from_diagonal(&Vector4::new(sign, 1.0, 1.0, 1.0));
        let (lo, hi) = vals.iter().fold((f64::MAX, 0.0f64), |(lo, hi), d| (lo.min(d.abs()), hi.max(d.abs())));
        if hi - lo <= 1e-12 * hi {
            let s = (vals[0].abs()).powf(-0.25);
            return Ok(Self { left: flip * self.left * s, local: self.local.clone() });
        }
        let lambda = det.map_jets(|j| (j.map(f64::abs)).powf(-0.25));
        let l = flip * self.left;
        let sigma = self.local.map_linear(move |m| l * m.column(0).into_owned());
        let scaled = lambda.zip_jets(&sigma, |s, v| Jet::bilinear(s, v, |p: f64, q: Vector4<f64>| q * p));
        Ok(Self::from_lift(&scaled))
    }
}

use crate::fields::Jet;

/// Frame with fourth column `sigma_hat = sigma_xy - (beta gamma / 2) sigma`.
#[derive(Clone, Debug)]
pub struct HatFrame {
    pub frame: MatrixField,
}

impl HatFrame {
    pub fn from_frame(f: &SurfaceFrame, w: &WilczynskiData) -> Result<Self> {
        f.grid().check_same(w.grid())?;
        Ok(Self { frame: &f.frame() * &hat_change(w) })
    }
}

/// `P = I - tau`, the change of frame `F_hat = F P`.
pub fn hat_change(w: &WilczynskiData) -> MatrixField {
    let minus_half_bg = &w.beta_gamma() * -0.5;
    MatrixField::identity(*w.grid()).with_entry_added(0, 3, &minus_half_bg)
}

/// Default bound on the mixed `sigma_xy` coefficient in extraction.
pub const ASYMPTOTIC_TOL: f64 = 1e-6;

/// Recovers `(beta, gamma, V, W)` from a lift `sigma` in asymptotic coordinates.
pub fn extract_from_immersion(sigma: &VectorField) -> Result<WilczynskiData> {
    extract_from_immersion_with(sigma, ASYMPTOTIC_TOL)
}

pub fn extract_from_immersion_with(sigma: &VectorField, tol: f64) -> Result<WilczynskiData> {
    let frame = SurfaceFrame::from_lift(sigma);
    let sx = sigma.dx();
    let sy = sigma.dy();
    extract_core(frame.local(), &sx.dx(), &sy.dy(), tol)
}

/// Recovers the coefficients from a frame, using `sigma_xx = d_x(col 2)` and
/// `sigma_yy = d_y(col 3)`. The constant left factor drops out.
pub fn extract_from_frame(frame: &SurfaceFrame, tol: f64) -> Result<WilczynskiData> {
    let g = frame.local();
    extract_core(g, &column(g, 1).dx(), &column(g, 2).dy(), tol)
}

/// Solves `sigma_xx = C sigma + A sigma_x + B sigma_y + D sigma_xy` (and the
/// mirror for `sigma_yy`) at every node. For an arbitrary lift `lambda s` of
/// the normalized lift `s`, `A = 2 (log lambda)_x`, which gives
/// `(V - beta_y) / 2 = C - A_x / 2 + A^2 / 4 + B A' / 2` without rescaling.
fn extract_core(m: &MatrixField, sxx: &VectorField, syy: &VectorField, tol: f64) -> Result<WilczynskiData> {
    let inv = m.try_inverse(1e-12).map_err(|(i, j)| Error::FrameDegenerate { i, j })?;
    let cx: VectorField = &inv * sxx;
    let cy: VectorField = &inv * syy;
    let mixed = cx.entry(3, 0).residual_norm().max(cy.entry(3, 0).residual_norm());
    let scale = 1.0 + cx.residual_norm().max(cy.residual_norm());
    if !(mixed <= tol * scale) {
        return Err(Error::NotAsymptotic(mixed));
    }
    let (c, a, beta) = (cx.entry(0, 0), cx.entry(1, 0), cx.entry(2, 0));
    let (c2, gamma, a2) = (cy.entry(0, 0), cy.entry(1, 0), cy.entry(2, 0));
    let p = &(&(&c - &(&a.dx() * 0.5)) + &(&(&a * &a) * 0.25)) + &(&(&beta * &a2) * 0.5);
    let q = &(&(&c2 - &(&a2.dy() * 0.5)) + &(&(&a2 * &a2) * 0.25)) + &(&(&gamma * &a) * 0.5);
    let v = &(&p * 2.0) + &beta.dy();
    let w = &(&q * 2.0) + &gamma.dx();
    WilczynskiData::new(beta, gamma, v, w)
}

/// Axis-indexed access used by callers iterating over both directions.
pub fn component(w: &ConnectionForm, axis: Axis) -> &MatrixField {
    w.component(axis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connection::{log_derivative_gauge, symmetry_residual};
    use crate::fields::{Expr, Jet};

    fn grid() -> Grid {
        Grid::unit(21).unwrap()
    }

    fn e3(g: Grid) -> WilczynskiData {
        WilczynskiData::constant(g, 2.0, 1.0, 2.5, 1.5)
    }

    fn e2(g: Grid) -> WilczynskiData {
        WilczynskiData::constant(g, 1.0, 1.0, 0.0, 0.0)
    }

    fn stack(parts: &[Jet<f64>; 4]) -> Jet<Vector4<f64>> {
        let mut acc = Jet::<Vector4<f64>>::zero(4);
        for (k, p) in parts.iter().enumerate() {
            acc += p.map(move |v| {
                let mut e = Vector4::zeros();
                e[k] = v;
                e
            });
        }
        acc
    }

    fn expr_field(src: &str, g: Grid) -> ScalarField {
        Expr::parse(src).unwrap().to_field(g, INPUT_ORDER).unwrap()
    }

    /// Compatible data with a nonconstant cubic form: beta = y, gamma = x.
    fn curved(g: Grid) -> WilczynskiData {
        WilczynskiData::new(
            expr_field("y", g),
            expr_field("x", g),
            expr_field("y^2 + x^2/2", g),
            expr_field("x^2 + y^2/2", g),
        )
        .unwrap()
    }

    /// The quadratic differential with 2 a_y = 2 beta gamma_x + gamma beta_x and its mirror.
    fn curved_ab(g: Grid) -> WilczynskiData {
        curved(g).with_quadratic(expr_field("y^2/2", g), expr_field("x^2/2", g)).unwrap()
    }

    #[test]
    fn zero_data_connection() {
        let om = build_connection(&WilczynskiData::quadric(grid()));
        let mut ex = Matrix4::zeros();
        ex[(0, 1)] = 1.0;
        ex[(2, 3)] = 1.0;
        let mut ey = Matrix4::zeros();
        ey[(0, 2)] = 1.0;
        ey[(1, 3)] = 1.0;
        assert_eq!(om.x.value(7), ex.transpose());
        assert_eq!(om.y.value(7), ey.transpose());
        assert_eq!(compatibility_residual(&WilczynskiData::quadric(grid())), 0.0);
    }

    #[test]
    fn e3_connection_entries() {
        let om = build_connection(&e3(grid()));
        let ax = om.x.value(0).transpose();
        assert_eq!(ax[(1, 0)], 1.25);
        assert_eq!(ax[(3, 1)], 2.0);
        let ax2 = build_connection(&e2(grid())).x.value(3).transpose();
        let expect = Matrix4::new(0., 1., 0., 0., 0., 0., 1., 0., 0., 0., 0., 1., 0., 1., 0., 0.);
        assert_eq!(ax2, expect);
    }

    #[test]
    fn constant_data_is_compatible() {
        assert!(compatibility_residual(&e3(grid())) < 1e-12);
        assert!(compatibility_residual(&WilczynskiData::constant(grid(), -0.3, 1.7, 0.4, 2.2)) < 1e-12);
    }

    #[test]
    fn incompatible_data_is_detected() {
        let g = grid();
        let z = ScalarField::zeros(g);
        // beta = y alone is still integrable since beta_yyy = 0; beta = y^3 is not.
        let w = WilczynskiData::new(expr_field("y", g), z.clone(), z.clone(), z.clone()).unwrap();
        assert!(compatibility_residual(&w) < 1e-12);
        let w = WilczynskiData::new(expr_field("y^3", g), z.clone(), z.clone(), z).unwrap();
        assert!((compatibility_residual(&w) - 3.0).abs() < 1e-10);
    }

    #[test]
    fn curved_example_is_compatible() {
        let w = curved(grid());
        assert!(compatibility_residual(&w) < 1e-12, "{}", compatibility_residual(&w));
    }

    #[test]
    fn lie_quadric_metric_entries() {
        let g = lie_quadric_metric(&e3(grid()));
        assert_eq!(g.matrix().value(0)[(3, 3)], 2.0);
        let det = g.matrix().determinant();
        assert!((det.values().iter().fold(0.0f64, |m, d| m.max((d - 1.0).abs()))) < 1e-14);
        let det_curved = lie_quadric_metric(&curved(grid())).matrix().determinant();
        assert!(det_curved.values().iter().all(|d| (d - 1.0).abs() < 1e-12));
    }

    #[test]
    fn e3_split_matches_display() {
        let (_, n) = split_lie_quadric(&e3(grid()));
        let mut nx = Matrix4::zeros();
        nx[(0, 3)] = 1.5;
        nx[(2, 1)] = 2.0;
        assert!((n.x.value(5) - nx).amax() < 1e-14);
        let mut ny = Matrix4::zeros();
        ny[(0, 3)] = 1.25;
        ny[(1, 2)] = 1.0;
        assert!((n.y.value(5) - ny).amax() < 1e-14);
        assert!(symmetry_residual(&n, &lie_quadric_metric(&e3(grid()))) < 1e-14);
    }

    #[test]
    fn split_matches_display_for_curved_data() {
        let w = curved(grid());
        let (_, n) = split_lie_quadric(&w);
        let (be, ga, v, ww) = (&w.beta, &w.gamma, &w.v, &w.w);
        for k in [0, 17, 220, 440] {
            let (x, y) = w.grid().point(k);
            let (b, by, byy, bx) = (y, 1.0, 0.0, 0.0);
            let (gm, gx, gxx, gy) = (x, 1.0, 0.0, 0.0);
            let vy = v.dy().value(k);
            let wx = ww.dx().value(k);
            let (vv, wv) = (v.value(k), ww.value(k));
            assert!((be.value(k) - b).abs() < 1e-14 && (ga.value(k) - gm).abs() < 1e-14);
            let nx = n.x.value(k);
            let ny = n.y.value(k);
            let n14 = 0.5 * (vy - byy + b * wv - 2.0 * b * gx - gm * bx);
            let m14 = 0.5 * (wx - gxx + gm * vv - 2.0 * gm * by - b * gy);
            assert!((nx[(0, 1)] + 0.5 * by).abs() < 1e-12);
            assert!((nx[(0, 3)] - n14).abs() < 1e-12);
            assert!((nx[(2, 1)] - b).abs() < 1e-12);
            assert!((nx[(2, 3)] - 0.5 * by).abs() < 1e-12);
            assert!((ny[(0, 2)] + 0.5 * gx).abs() < 1e-12);
            assert!((ny[(0, 3)] - m14).abs() < 1e-12);
            assert!((ny[(1, 2)] - gm).abs() < 1e-12);
            assert!((ny[(1, 3)] - 0.5 * gx).abs() < 1e-12);
        }
    }

    #[test]
    fn canonical_pieces() {
        let (chi, psi, tau) = canonical_chi_psi_tau(&e3(grid()));
        assert_eq!(chi.x.value(0)[(0, 1)], 1.25);
        assert_eq!(psi.x.value(0)[(0, 3)], 1.5);
        assert_eq!(tau.value(0)[(0, 3)], 1.0);
        let (chi0, psi0, tau0) = canonical_chi_psi_tau(&WilczynskiData::quadric(grid()));
        assert_eq!(chi0.max_abs() + psi0.max_abs() + tau0.max_abs(), 0.0);
        let one = ScalarField::constant(grid(), 1.0);
        let (chi, psi) = chi_psi_from_quadratic(&e3(grid()), &one, &one);
        assert_eq!(chi.x.value(0)[(0, 1)], 1.0);
        assert_eq!(chi.x.value(0)[(0, 2)], 1.0);
        assert_eq!(psi.x.value(0)[(0, 3)], 2.0);
        assert_eq!(psi.y.value(0)[(0, 3)], 1.0);
    }

    #[test]
    fn routes_agree_and_are_flat() {
        for w in [e3(grid()), e2(grid()), curved(grid())] {
            for t in [-2.0, -0.5, 0.0, 1.0, 2.0] {
                let a = spectral_connection(&w, t, Route::Insertion);
                let b = spectral_connection(&w, t, Route::Assembled);
                assert!((&a - &b).max_abs() < 1e-11, "t = {t}");
                assert!(curvature(&a).unwrap().max_abs() < 1e-10, "t = {t}");
            }
        }
    }

    #[test]
    fn unit_parameter_gives_trivial_connection() {
        let w = curved(grid());
        let d = build_connection(&w);
        for route in [Route::Insertion, Route::Assembled] {
            assert!((&spectral_connection(&w, 1.0, route) - &d).max_abs() < 1e-12);
        }
    }

    #[test]
    fn tau_removal() {
        for w in [e3(grid()), curved(grid())] {
            let (d, n) = split_lie_quadric(&w);
            let (chi, psi, tau) = canonical_chi_psi_tau(&w);
            for t in [-1.0, 0.5, 2.0] {
                let dt = spectral_connection(&w, t, Route::Insertion);
                let gauged = log_derivative_gauge(&(&tau * (t * t - 1.0)), &dt).unwrap();
                let expect = gauged_family(&d, &n, &chi, &psi, t);
                assert!((&gauged - &expect).max_abs() < 1e-11, "t = {t}");
            }
        }
    }

    #[test]
    fn moebius_residuals() {
        let g = grid();
        let one = ScalarField::constant(g, 1.0);
        let w = e3(g).with_quadratic(one.clone(), one.clone()).unwrap();
        for sign in [CmfSign::Intro, CmfSign::Derived] {
            assert!(moebius_flat_residuals(&w, sign).unwrap().max() < 1e-12);
        }
        let w = e3(g).with_quadratic(expr_field("y", g), ScalarField::zeros(g)).unwrap();
        let r = moebius_flat_residuals(&w, CmfSign::Intro).unwrap();
        assert!((r.r_c - 2.0).abs() < 1e-12);
        let w = e3(g).with_quadratic(expr_field("x", g), ScalarField::zeros(g)).unwrap();
        let intro = moebius_flat_fields(&w, CmfSign::Intro).unwrap();
        let derived = moebius_flat_fields(&w, CmfSign::Derived).unwrap();
        // r_a = -2 gamma_x a +- gamma a_x with gamma = 1, a_x = 1.
        assert!((intro[0].value(3) - 1.0).abs() < 1e-12);
        assert!((derived[0].value(3) + 1.0).abs() < 1e-12);
        assert!(matches!(moebius_flat_residuals(&e3(g), CmfSign::Intro), Err(Error::MissingKey(_))));
    }

    #[test]
    fn curved_example_satisfies_the_derivative_equations() {
        let r = moebius_flat_residuals(&curved_ab(grid()), CmfSign::Intro).unwrap();
        assert!(r.r_b < 1e-12 && r.r_c < 1e-12 && r.r_classical < 1e-12, "{r:?}");
    }

    #[test]
    fn quadratic_differential_rescaling() {
        let g = grid();
        let w = curved_ab(g);
        let (lambda, mu) = (2.0, 0.5);
        let r = w.rescale(lambda, mu).unwrap();
        assert!(compatibility_residual(&r) < 1e-11);
        let k = 150;
        assert!((r.a.as_ref().unwrap().value(k) - w.a.as_ref().unwrap().value(k) / 4.0).abs() < 1e-14);
        assert!((r.b.as_ref().unwrap().value(k) - w.b.as_ref().unwrap().value(k) * 4.0).abs() < 1e-14);
        let before = moebius_flat_residuals(&w, CmfSign::Intro).unwrap();
        let after = moebius_flat_residuals(&r, CmfSign::Intro).unwrap();
        assert!(after.r_b < 1e-11 && after.r_c < 1e-11);
        assert!((after.r_classical - before.r_classical).abs() < 1e-11);
    }

    #[test]
    fn quadric_lift_extracts_zero() {
        let g = grid();
        let sigma = VectorField::from_jet_fn(g, 4, |x, y| {
            let xy = &x * &y;
            let one = Jet::constant(1.0, 4);
            let parts = [one, x, y, xy];
            stack(&parts)
        });
        let w = extract_from_immersion(&sigma).unwrap();
        for f in [&w.beta, &w.gamma, &w.v, &w.w] {
            assert!(f.max_abs() < 1e-10);
        }
    }

    #[test]
    fn exponential_basis_of_e2_extracts_exactly() {
        let g = grid();
        let s3 = 3f64.sqrt() / 2.0;
        let sigma = VectorField::from_jet_fn(g, 4, move |x, y| {
            let s = x + y;
            let th = (x - y) * s3;
            let damp = (s * -0.5).exp();
            let parts = [Jet::constant(1.0, 4), s.exp(), &damp * &th.cos(), &damp * &th.sin()];
            stack(&parts)
        });
        let w = extract_from_immersion(&sigma).unwrap();
        let expect = [1.0, 1.0, 0.0, 0.0];
        for (f, e) in [&w.beta, &w.gamma, &w.v, &w.w].iter().zip(expect) {
            assert!((f.values().iter().fold(0.0f64, |m, v| m.max((v - e).abs()))) < 1e-10);
        }
    }

    #[test]
    fn rescaled_lift_gives_same_coefficients() {
        // Multiplying the lift by a positive function must not change the invariants.
        let g = grid();
        let s3 = 3f64.sqrt() / 2.0;
        let sigma = VectorField::from_jet_fn(g, 4, move |x, y| {
            let s = x + y;
            let th = (x - y) * s3;
            let damp = (s * -0.5).exp();
            let lam = (&x * &y + Jet::constant(1.0, 4)).exp();
            let parts = [Jet::constant(1.0, 4), s.exp(), &damp * &th.cos(), &damp * &th.sin()];
            stack(&parts.map(|p| &lam * &p))
        });
        let w = extract_from_immersion(&sigma).unwrap();
        assert!((w.beta.values()[40] - 1.0).abs() < 1e-10);
        assert!(w.v.max_abs() < 1e-9);
        assert!(w.w.max_abs() < 1e-9);
    }

    #[test]
    fn non_asymptotic_and_degenerate_lifts_are_rejected() {
        let g = grid();
        // (1, x, y, x^2 + y^2): sigma_xx = 2 e4 is not in span(sigma, sigma_x, sigma_y, sigma_xy).
        let flat = VectorField::from_jet_fn(g, 4, |x, y| {
            let q = &x * &x;
            let parts = [Jet::constant(1.0, 4), x, y, q];
            stack(&parts)
        });
        assert!(matches!(extract_from_immersion(&flat), Err(Error::FrameDegenerate { .. })));
        let tilted = VectorField::from_jet_fn(g, 4, |x, y| {
            let parts = [Jet::constant(1.0, 4), x, y, (&x * &y) + (&x * &x)];
            stack(&parts)
        });
        assert!(matches!(extract_from_immersion(&tilted), Err(Error::NotAsymptotic(_))));
    }

    #[test]
    fn frame_normalization() {
        let g = grid();
        let m = MatrixField::constant(g, Matrix4::from_diagonal(&Vector4::new(2.0, 1.0, 1.0, 8.0)));
        let f = SurfaceFrame::new(m).normalize().unwrap();
        assert!(f.determinant().values().iter().all(|d| (d - 1.0).abs() < 1e-14));
    }

    #[test]
    fn hat_frame_fourth_column() {
        let g = grid();
        let w = e3(g);
        let m = MatrixField::constant(g, Matrix4::from_fn(|r, c| (r * 4 + c) as f64 + if r == c { 5.0 } else { 0.0 }));
        let f = SurfaceFrame::new(m.clone());
        let h = HatFrame::from_frame(&f, &w).unwrap();
        let (a, b) = (h.frame.value(0), m.value(0));
        let expect = b.column(3) - b.column(0) * 1.0;
        assert!((a.column(3) - expect).amax() < 1e-14);
        assert_eq!(a.column(0), b.column(0));
    }
}
