//! Spectral deformation by integrating the frame system `dF = F Omega`.
//!
//! The frame is stored as `F = C G` with `G = I` at the grid centre. Marching
//! out from the centre keeps the integrated factor well conditioned, and the
//! constant `C` is chosen so that `F` takes the requested initial value at the
//! grid origin.

use std::io::Write;

use nalgebra::{Matrix4, Vector4};
use rayon::prelude::*;

use crate::connection::ConnectionForm;
use crate::error::{Error, Result};
use crate::fields::{Axis, Grid, MatrixField, ScalarField, VectorField};
use crate::wilczynski::{build_connection, extract_from_frame, SurfaceFrame, WilczynskiData, ASYMPTOTIC_TOL};

/// Path residual above which the data is declared not integrable.
pub const INTEGRATION_TOL: f64 = 1e-8;

/// Runge-Kutta steps per grid spacing.
pub const SUBSTEPS: usize = 4;

/// Stencil order used for derivatives of the integrated frame.
pub const FRAME_STENCIL: usize = 6;

/// Integrated frame and the flatness certificate.
#[derive(Clone, Debug)]
pub struct Integration {
    pub frame: SurfaceFrame,
    /// Relative discrepancy between x-first and y-first marching.
    pub path_residual: f64,
}

/// Classical RK4 for `F' = F Omega(s)` over one grid spacing along `axis`,
/// starting at node `(i, j)` and moving by `dir = +-1`.
fn step(
    om: &MatrixField,
    axis: Axis,
    i: usize,
    j: usize,
    dir: f64,
    f: Matrix4<f64>,
) -> Matrix4<f64> {
    let h = dir * om.grid().spacing(axis) / SUBSTEPS as f64;
    let ds = dir / SUBSTEPS as f64;
    let at = |s: f64| om.sample_on_line(axis, i, j, s);
    let mut f = f;
    for k in 0..SUBSTEPS {
        let s0 = k as f64 * ds;
        let (o0, o1, o2) = (at(s0), at(s0 + 0.5 * ds), at(s0 + ds));
        let k1 = f * o0;
        let k2 = (f + k1 * (0.5 * h)) * o1;
        let k3 = (f + k2 * (0.5 * h)) * o1;
        let k4 = (f + k3 * h) * o2;
        f += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
    }
    f
}

/// Fills a line of `n` nodes from the value at `c`, marching both ways.
fn march(n: usize, c: usize, start: Matrix4<f64>, mut advance: impl FnMut(usize, f64, Matrix4<f64>) -> Matrix4<f64>) -> Vec<Matrix4<f64>> {
    let mut out = vec![Matrix4::zeros(); n];
    out[c] = start;
    for k in c + 1..n {
        out[k] = advance(k - 1, 1.0, out[k - 1]);
    }
    for k in (0..c).rev() {
        out[k] = advance(k + 1, -1.0, out[k + 1]);
    }
    out
}

/// Local factor with `G = I` at the centre; `x_first` selects the marching order.
fn local_factor(om: &ConnectionForm, x_first: bool) -> Vec<Matrix4<f64>> {
    let g = *om.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let (cx, cy) = (nx / 2, ny / 2);
    let mut vals = vec![Matrix4::zeros(); g.len()];
    if x_first {
        let spine = march(nx, cx, Matrix4::identity(), |i, d, f| step(&om.x, Axis::X, i, cy, d, f));
        let cols: Vec<Vec<Matrix4<f64>>> = (0..nx)
            .into_par_iter()
            .map(|i| march(ny, cy, spine[i], |j, d, f| step(&om.y, Axis::Y, i, j, d, f)))
            .collect();
        for (i, col) in cols.into_iter().enumerate() {
            for (j, m) in col.into_iter().enumerate() {
                vals[g.index(i, j)] = m;
            }
        }
    } else {
        let spine = march(ny, cy, Matrix4::identity(), |j, d, f| step(&om.y, Axis::Y, cx, j, d, f));
        let rows: Vec<Vec<Matrix4<f64>>> = (0..ny)
            .into_par_iter()
            .map(|j| march(nx, cx, spine[j], |i, d, f| step(&om.x, Axis::X, i, j, d, f)))
            .collect();
        for (j, row) in rows.into_iter().enumerate() {
            for (i, m) in row.into_iter().enumerate() {
                vals[g.index(i, j)] = m;
            }
        }
    }
    vals
}

/// Integrates `dF = F Omega` with `F = initial` at the grid origin.
pub fn integrate_frame(w: &WilczynskiData, initial: &Matrix4<f64>) -> Result<Integration> {
    integrate_frame_with(w, initial, INTEGRATION_TOL)
}

pub fn integrate_frame_with(w: &WilczynskiData, initial: &Matrix4<f64>, tol: f64) -> Result<Integration> {
    let grid = *w.grid();
    if grid.nx() <= FRAME_STENCIL || grid.ny() <= FRAME_STENCIL {
        return Err(Error::GridTooSmall(format!("frame integration needs more than {FRAME_STENCIL} nodes per side")));
    }
    if initial.determinant().abs() < 1e-14 {
        return Err(Error::Invalid("initial frame is singular".into()));
    }
    let om = build_connection(w);
    om.x.check_finite()?;
    om.y.check_finite()?;
    let a = local_factor(&om, true);
    let b = local_factor(&om, false);
    let scale = a.iter().map(|m| m.amax()).fold(1.0, f64::max);
    let path_residual = a.iter().zip(&b).map(|(p, q)| (p - q).amax()).fold(0.0, f64::max) / scale;
    if !(path_residual <= 100.0 * tol) {
        return Err(Error::NotIntegrable(path_residual));
    }
    let origin = a[grid.index(0, 0)];
    let oinv = origin.try_inverse().ok_or(Error::FrameDegenerate { i: 0, j: 0 })?;
    let local = MatrixField::sampled(grid, a, FRAME_STENCIL)?;
    Ok(Integration { frame: SurfaceFrame::factored(initial * oinv, local), path_residual })
}

/// Output of [`deform_surface`].
#[derive(Clone, Debug)]
pub struct DeformationResult {
    pub t: f64,
    pub frame: SurfaceFrame,
    pub surface_lift: VectorField,
    pub extracted: WilczynskiData,
    pub path_residual: f64,
    /// Largest interior mismatch between the extracted and the inserted coefficients.
    pub coefficient_error: f64,
}

/// Integrates the system with `(t beta, t gamma, t^2 V, t^2 W)` and reads the
/// coefficients back off the resulting surface.
pub fn deform_surface(w: &WilczynskiData, t: f64) -> Result<DeformationResult> {
    let target = w.spectral(t);
    let run = integrate_frame(&target, &Matrix4::identity())?;
    let extracted = extract_from_frame(&run.frame, ASYMPTOTIC_TOL)?;
    let coefficient_error = coefficient_distance(&extracted, &target);
    Ok(DeformationResult {
        t,
        surface_lift: run.frame.lift(),
        frame: run.frame,
        extracted,
        path_residual: run.path_residual,
        coefficient_error,
    })
}

/// Largest interior difference of `(beta, gamma, V, W)`.
pub fn coefficient_distance(a: &WilczynskiData, b: &WilczynskiData) -> f64 {
    [(&a.beta, &b.beta), (&a.gamma, &b.gamma), (&a.v, &b.v), (&a.w, &b.w)]
        .iter()
        .map(|(p, q)| (*p - *q).residual_norm())
        .fold(0.0, f64::max)
}

/// Components `(beta, gamma)` of the Darboux cubic form `beta dx^3 + gamma dy^3`.
pub fn darboux_cubic(w: &WilczynskiData) -> (ScalarField, ScalarField) {
    (w.beta.clone(), w.gamma.clone())
}

/// Writes `# surface nx ny` followed by one line of four homogeneous components per node.
pub fn write_surface<W: Write>(mut out: W, lift: &VectorField) -> Result<()> {
    let g = lift.grid();
    writeln!(out, "# surface {} {}", g.nx(), g.ny())?;
    for v in lift.values() {
        writeln!(out, "{:.16e} {:.16e} {:.16e} {:.16e}", v[0], v[1], v[2], v[3])?;
    }
    Ok(())
}

/// Affine chart `sigma / l(sigma)` with the coordinate where `l` is largest dropped.
pub fn affine_chart(lift: &VectorField, functional: &Vector4<f64>) -> Result<Vec<[f64; 3]>> {
    let drop = functional.iamax();
    lift.values()
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let d = functional.dot(v);
            if d.abs() < 1e-300 || !d.is_finite() {
                let (i, j) = lift.grid().node(k);
                return Err(Error::Invalid(format!("surface meets the hyperplane at infinity at node ({i}, {j})")));
            }
            let mut p = [0.0; 3];
            let mut n = 0;
            for c in 0..4 {
                if c != drop {
                    p[n] = v[c] / d;
                    n += 1;
                }
            }
            Ok(p)
        })
        .collect()
}

/// Writes `# chart nx ny` and then `x y X Y Z` per node.
pub fn write_affine_chart<W: Write>(mut out: W, grid: &Grid, chart: &[[f64; 3]]) -> Result<()> {
    writeln!(out, "# chart {} {}", grid.nx(), grid.ny())?;
    for (k, p) in chart.iter().enumerate() {
        let (x, y) = grid.point(k);
        writeln!(out, "{x:.10} {y:.10} {:.16e} {:.16e} {:.16e}", p[0], p[1], p[2])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Expr;
    use crate::wilczynski::column;

    fn grid(n: usize) -> Grid {
        Grid::unit(n).unwrap()
    }

    fn e2(g: Grid) -> WilczynskiData {
        WilczynskiData::constant(g, 1.0, 1.0, 0.0, 0.0)
    }

    #[test]
    fn quadric_frame_is_polynomial() {
        let g = grid(21);
        let run = integrate_frame(&WilczynskiData::quadric(g), &Matrix4::identity()).unwrap();
        let lift = run.frame.lift();
        for k in 0..g.len() {
            let (x, y) = g.point(k);
            assert!((lift.value(k) - Vector4::new(1.0, x, y, x * y)).amax() < 1e-12);
        }
        assert!(run.path_residual < 1e-13);
    }

    #[test]
    fn initial_value_is_attained_at_the_origin() {
        let g = grid(21);
        let init = Matrix4::new(
            2.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.5, 1.0, 0.0, 1.0, 0.0, 0.0, 3.0,
        );
        let run = integrate_frame(&e2(g), &init).unwrap();
        assert!((run.frame.frame().at(0, 0) - init).amax() < 1e-12);
    }

    #[test]
    fn e2_frame_matches_exponential_basis() {
        // Solutions of sigma_xx = sigma_y, sigma_yy = sigma_x are spanned by
        // e^{a x + a^2 y} with a^3 = 1, plus the constant.
        let g = grid(51);
        let run = integrate_frame(&e2(g), &Matrix4::identity()).unwrap();
        let lift = run.frame.lift();
        let s3 = 3f64.sqrt() / 2.0;
        let basis = |x: f64, y: f64| {
            let s = x + y;
            let th = s3 * (x - y);
            let d = (-0.5 * s).exp();
            Vector4::new(1.0, s.exp(), d * th.cos(), d * th.sin())
        };
        // Express sigma in the basis using four nodes, then check everywhere.
        let nodes = [0, 7, 300, 2000];
        let bm = Matrix4::from_columns(&nodes.map(|k| {
            let (x, y) = g.point(k);
            basis(x, y)
        }));
        let sm = Matrix4::from_columns(&nodes.map(|k| lift.value(k)));
        let coef = sm * bm.try_inverse().unwrap();
        for k in 0..g.len() {
            let (x, y) = g.point(k);
            assert!((lift.value(k) - coef * basis(x, y)).amax() < 1e-9);
        }
    }

    #[test]
    fn constant_data_paths_agree() {
        for (b, c, v, w) in [(1.0, 1.0, 0.0, 0.0), (2.0, 1.0, 2.5, 1.5), (-0.7, 1.3, 0.4, -2.0)] {
            let run = integrate_frame(&WilczynskiData::constant(Grid::unit(101).unwrap(), b, c, v, w), &Matrix4::identity())
                .unwrap();
            assert!(run.path_residual < 1e-9, "{}", run.path_residual);
        }
    }

    #[test]
    fn incompatible_data_is_rejected() {
        let g = grid(41);
        let f = |s: &str| Expr::parse(s).unwrap().to_field(g, 4).unwrap();
        let w = WilczynskiData::new(f("y^3"), f("0"), f("0"), f("0")).unwrap();
        assert!(matches!(integrate_frame(&w, &Matrix4::identity()), Err(Error::NotIntegrable(_))));
    }

    #[test]
    fn frame_columns_are_derivatives() {
        let g = grid(41);
        let run = integrate_frame(&WilczynskiData::constant(g, 2.0, 1.0, 2.5, 1.5), &Matrix4::identity()).unwrap();
        assert!(run.frame.column_residual() < 1e-7);
    }

    #[test]
    fn identity_deformation() {
        let g = grid(101);
        let w = WilczynskiData::constant(g, 2.0, 1.0, 2.5, 1.5);
        let r = deform_surface(&w, 1.0).unwrap();
        assert!(r.coefficient_error < 1e-8, "{}", r.coefficient_error);
    }

    #[test]
    fn e2_at_two() {
        let r = deform_surface(&e2(grid(101)), 2.0).unwrap();
        assert!(r.coefficient_error < 1e-6);
        assert!((r.extracted.beta.values()[5000] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn e3_at_zero_is_a_quadric() {
        let r = deform_surface(&WilczynskiData::constant(grid(41), 2.0, 1.0, 2.5, 1.5), 0.0).unwrap();
        for f in [&r.extracted.beta, &r.extracted.gamma, &r.extracted.v, &r.extracted.w] {
            assert!(f.max_abs() < 1e-10);
        }
    }

    #[test]
    fn darboux_cubic_scales() {
        let (b, c) = darboux_cubic(&WilczynskiData::quadric(grid(11)));
        assert_eq!(b.max_abs().max(c.max_abs()), 0.0);
        let r = deform_surface(&WilczynskiData::constant(grid(101), 2.0, 1.0, 2.5, 1.5), 3.0).unwrap();
        let (b, c) = darboux_cubic(&r.extracted);
        assert!((&b - &ScalarField::constant(*b.grid(), 6.0)).residual_norm() < 1e-6);
        assert!((&c - &ScalarField::constant(*c.grid(), 3.0)).residual_norm() < 1e-6);
    }

    #[test]
    fn lift_is_first_column() {
        let g = grid(21);
        let r = deform_surface(&e2(g), 1.5).unwrap();
        let first = column(&r.frame.frame(), 0);
        assert_eq!((&first - &r.surface_lift).max_abs(), 0.0);
    }

    #[test]
    fn surface_and_chart_files() {
        let g = grid(11);
        let run = integrate_frame(&WilczynskiData::quadric(g), &Matrix4::identity()).unwrap();
        let lift = run.frame.lift();
        let mut buf = Vec::new();
        write_surface(&mut buf, &lift).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# surface 11 11\n"));
        assert_eq!(text.lines().count(), 1 + 121);
        let chart = affine_chart(&lift, &Vector4::new(1.0, 0.0, 0.0, 0.0)).unwrap();
        let (x, y) = g.point(40);
        assert!((chart[40][0] - x).abs() < 1e-12 && (chart[40][2] - x * y).abs() < 1e-12);
        let mut buf = Vec::new();
        write_affine_chart(&mut buf, &g, &chart).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("# chart 11 11\n"));
    }

    #[test]
    fn chart_rejects_points_at_infinity() {
        let g = grid(11);
        let lift = VectorField::constant(g, Vector4::new(0.0, 1.0, 0.0, 0.0));
        assert!(affine_chart(&lift, &Vector4::new(1.0, 0.0, 0.0, 0.0)).is_err());
    }
}
