//! Centro-affine surfaces `r: Sigma -> R^3`.
//!
//! The trivial connection splits as `d_X Y = nabla_X Y + g(X, Y) r`; the
//! difference of `nabla` and the Levi-Civita connection of `g` is the cubic
//! form `h`, and its trace is the Chebyshev covector `T`. The immersion is
//! placed in `R^4` by `v -> v + p`.

use nalgebra::{Matrix2, Matrix3, Matrix4, Vector3, Vector4};

use crate::connection::{metric_split, MetricField};
use crate::error::{Error, Result};
use crate::fields::io::Assignments;
use crate::fields::{Field, Grid, MatrixField, ScalarField, VectorField};
use crate::wilczynski::INPUT_ORDER;

pub type Metric2Field = Field<Matrix2<f64>>;
pub type Vector3Field = Field<Vector3<f64>>;

/// Keys accepted in an immersion input file.
pub const IMMERSION_KEYS: [&str; 3] = ["r1", "r2", "r3"];

const SINGULAR_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct CentroAffineImmersion {
    pub r: Vector3Field,
    /// Origin shift; a point `v` of `R^3` is identified with the line through `(v, 0) + p`.
    pub p: Vector4<f64>,
}

impl CentroAffineImmersion {
    pub fn new(r: Vector3Field) -> Self {
        Self { r, p: Vector4::new(0.0, 0.0, 0.0, 1.0) }
    }

    pub fn with_origin(mut self, p: Vector4<f64>) -> Result<Self> {
        if p[3] == 0.0 {
            return Err(Error::Invalid("origin shift must leave the hyperplane".into()));
        }
        self.p = p;
        Ok(self)
    }

    pub fn from_components(r1: &ScalarField, r2: &ScalarField, r3: &ScalarField) -> Result<Self> {
        crate::fields::field::same_grid(&[r1, r2, r3])?;
        let r = Vector3Field::from_entries(*r1.grid(), &[(0, 0, r1), (1, 0, r2), (2, 0, r3)]);
        Ok(Self::new(r))
    }

    /// Reads `r1`, `r2`, `r3`; a missing `grid` falls back to `default_grid`.
    pub fn from_assignments(a: &Assignments, default_grid: Grid) -> Result<Self> {
        let grid = a.grid.unwrap_or(default_grid);
        let f = |k: &str| a.require(k).and_then(|e| e.to_field(grid, INPUT_ORDER));
        Self::from_components(&f("r1")?, &f("r2")?, &f("r3")?)
    }

    pub fn grid(&self) -> &Grid {
        self.r.grid()
    }

    fn embed(&self, v: &Vector3Field) -> VectorField {
        v.map_linear(|u| Vector4::new(u[0], u[1], u[2], 0.0))
    }

    /// `R = p + r`.
    pub fn lift(&self) -> VectorField {
        let p = VectorField::constant(*self.grid(), self.p);
        &p + &self.embed(&self.r)
    }

    /// `R_hat = p - r`.
    pub fn dual_lift(&self) -> VectorField {
        let p = VectorField::constant(*self.grid(), self.p);
        &p - &self.embed(&self.r)
    }

    /// The frame `(R, R_u, R_v, R_hat)` as matrix columns.
    pub fn adapted_frame(&self) -> MatrixField {
        let cols = [self.lift(), self.embed(&self.r.dx()), self.embed(&self.r.dy()), self.dual_lift()];
        let mut f = MatrixField::zeros(*self.grid());
        for (k, c) in cols.iter().enumerate() {
            for i in 0..4 {
                f = f.with_entry_added(i, k, &c.entry(i, 0));
            }
        }
        f
    }
}

/// Induced metric, cubic form and Chebyshev covector.
#[derive(Clone, Debug)]
pub struct CentroAffineData {
    pub g: Metric2Field,
    /// `h[k][(i, j)] = h^k_{ij}`.
    pub h: [Metric2Field; 2],
    pub chebyshev: [ScalarField; 2],
}

impl CentroAffineData {
    /// `h_{ijk} = g_{kl} h^l_{ij}`.
    pub fn lowered(&self, i: usize, j: usize, k: usize) -> ScalarField {
        &(&self.g.entry(k, 0) * &self.h[0].entry(i, j)) + &(&self.g.entry(k, 1) * &self.h[1].entry(i, j))
    }

    /// Largest failure of total symmetry of the lowered cubic form.
    pub fn symmetry_residual(&self) -> f64 {
        let d = |a: ScalarField, b: ScalarField| (&a - &b).residual_norm();
        d(self.lowered(0, 0, 1), self.lowered(0, 1, 0)).max(d(self.lowered(1, 1, 0), self.lowered(0, 1, 1)))
    }
}

/// Solves `r_ij = Gamma^1_ij r_u + Gamma^2_ij r_v + g_ij r` node by node.
pub fn decompose(imm: &CentroAffineImmersion) -> Result<CentroAffineData> {
    let grid = *imm.grid();
    let (ru, rv) = (imm.r.dx(), imm.r.dy());
    let mut m = Field::<Matrix3<f64>>::zeros(grid);
    for (k, c) in [&ru, &rv, &imm.r].iter().enumerate() {
        for i in 0..3 {
            m = m.with_entry_added(i, k, &c.entry(i, 0));
        }
    }
    let minv = m.try_inverse(SINGULAR_TOL).map_err(|(i, j)| Error::NotCentroAffine { i, j })?;
    let second = [[ru.dx(), ru.dy()], [rv.dx(), rv.dy()]];
    let coeffs: Vec<Vec<Vector3Field>> =
        second.iter().map(|row| row.iter().map(|s| &minv * s).collect()).collect();
    let gather = |slot: usize| {
        Metric2Field::from_entries(
            grid,
            &[
                (0, 0, &coeffs[0][0].entry(slot, 0)),
                (0, 1, &coeffs[0][1].entry(slot, 0)),
                (1, 0, &coeffs[1][0].entry(slot, 0)),
                (1, 1, &coeffs[1][1].entry(slot, 0)),
            ],
        )
    };
    let g = gather(2);
    let ambient = [gather(0), gather(1)];
    let lc = christoffel(&g)?;
    let h = [&ambient[0] - &lc[0], &ambient[1] - &lc[1]];
    let chebyshev = [
        &h[0].entry(0, 0) + &h[1].entry(0, 1),
        &h[0].entry(1, 0) + &h[1].entry(1, 1),
    ];
    Ok(CentroAffineData { g, h, chebyshev })
}

fn metric_inverse(g: &Metric2Field) -> Result<Metric2Field> {
    g.try_inverse(SINGULAR_TOL).map_err(|(i, j)| Error::DegenerateMetric { i, j })
}

/// Levi-Civita symbols, `out[k][(i, j)] = Gamma^k_{ij}`.
pub fn christoffel(g: &Metric2Field) -> Result<[Metric2Field; 2]> {
    let ginv = metric_inverse(g)?;
    let dg = [g.dx(), g.dy()];
    // first[l][(i, j)] = (d_i g_jl + d_j g_il - d_l g_ij) / 2
    let first: Vec<Vec<Vec<ScalarField>>> = (0..2)
        .map(|l| {
            (0..2)
                .map(|i| {
                    (0..2)
                        .map(|j| {
                            let s = &(&dg[i].entry(j, l) + &dg[j].entry(i, l)) - &dg[l].entry(i, j);
                            &s * 0.5
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let symbol = |k: usize| {
        let e = |i: usize, j: usize| {
            &(&ginv.entry(k, 0) * &first[0][i][j]) + &(&ginv.entry(k, 1) * &first[1][i][j])
        };
        Metric2Field::from_entries(*g.grid(), &[(0, 0, &e(0, 0)), (0, 1, &e(0, 1)), (1, 0, &e(1, 0)), (1, 1, &e(1, 1))])
    };
    Ok([symbol(0), symbol(1)])
}

/// Gaussian curvature `g(R(e1, e2) e2, e1) / det g`.
pub fn gauss_curvature(g: &Metric2Field) -> Result<ScalarField> {
    let gam = christoffel(g)?;
    let c = |k: usize, i: usize, j: usize| gam[k].entry(i, j);
    let mut num = ScalarField::zeros(*g.grid());
    for l in 0..2 {
        let mut r = &c(l, 1, 1).dx() - &c(l, 0, 1).dy();
        for m in 0..2 {
            r = &r + &(&(&c(m, 1, 1) * &c(l, 0, m)) - &(&c(m, 0, 1) * &c(l, 1, m)));
        }
        num = &num + &(&g.entry(0, l) * &r);
    }
    let det_inv = g.determinant().map_jets(|j| j.recip());
    Ok(&num * &det_inv)
}

/// Gram matrix of the adapted metric in the frame `(R, R_u, R_v, R_hat)`.
pub fn adapted_metric(g: &Metric2Field) -> Result<MetricField> {
    let mut m = MatrixField::constant(*g.grid(), {
        let mut c = Matrix4::zeros();
        c[(0, 3)] = -2.0;
        c[(3, 0)] = -2.0;
        c
    });
    for i in 0..2 {
        for j in 0..2 {
            m = m.with_entry_added(i + 1, j + 1, &-&g.entry(i, j));
        }
    }
    MetricField::new(m)
}

/// Max residual of `d_t (R_hat + t^2 R)`, the conserved quantity of the adapted metric.
pub fn adapted_conserved_check(imm: &CentroAffineImmersion) -> Result<f64> {
    adapted_conserved_residual(imm, &Vector4::new(0.0, 0.0, 0.0, 1.0), &Vector4::new(1.0, 0.0, 0.0, 0.0))
}

/// Max residual of `d_t (v0 + t^2 v2)` for constant coefficient columns in the
/// frame `(R, R_u, R_v, R_hat)`, with `d_t = D + t N + (t^2 - 1) chi` and
/// `chi` the part of `D` raising `R_hat -> U -> R`.
pub fn adapted_conserved_residual(imm: &CentroAffineImmersion, v0: &Vector4<f64>, v2: &Vector4<f64>) -> Result<f64> {
    let data = decompose(imm)?;
    let det = data.g.determinant();
    if det.values().iter().any(|&d| d > 0.0) {
        return Err(Error::EllipticMetric);
    }
    let frame = imm.adapted_frame();
    let finv = frame.try_inverse(SINGULAR_TOL).map_err(|(i, j)| Error::NotCentroAffine { i, j })?;
    let omega = crate::connection::ConnectionForm { x: &finv * &frame.dx(), y: &finv * &frame.dy() };
    let gram = adapted_metric(&data.g)?;
    let (d, n) = metric_split(&omega, &gram)?;
    let raise = |m: &MatrixField| {
        MatrixField::from_entries(
            *m.grid(),
            &[(0, 1, &m.entry(0, 1)), (0, 2, &m.entry(0, 2)), (1, 3, &m.entry(1, 3)), (2, 3, &m.entry(2, 3))],
        )
    };
    let grid = *imm.grid();
    let (q0, q2) = (VectorField::constant(grid, *v0), VectorField::constant(grid, *v2));
    let mut worst = 0.0f64;
    for (dd, nn) in [(&d.x, &n.x), (&d.y, &n.y)] {
        let chi = raise(dd);
        let base = dd - &chi;
        // t^0 .. t^4 coefficients of (base + t N + t^2 chi)(q0 + t^2 q2)
        let coeffs = [
            &base * &q0,
            nn * &q0,
            &(&chi * &q0) + &(&base * &q2),
            nn * &q2,
            &chi * &q2,
        ];
        for c in &coeffs {
            worst = worst.max(c.residual_norm());
        }
    }
    Ok(worst)
}
