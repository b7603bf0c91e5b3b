//! Connections as matrix one-forms in the Wilczynski frame.
//!
//! Convention: sections are `s = F u` with `F = (sigma, sigma_x, sigma_y,
//! sigma_xy)` and `u` a coefficient column. A connection acts as
//! `nabla u = du + Omega u`, so the frame satisfies `dF = F Omega`. A metric
//! is stored as its Gram matrix `G`, with `g(u, v) = u^T G v`.

use nalgebra::{Matrix4, SMatrix};

use crate::error::{Error, Result};
use crate::fields::{commutator, Grid, MatrixField, OneForm, ScalarField};

pub type ConnectionForm = OneForm<Matrix4<f64>>;

/// Relative determinant threshold below which a matrix counts as singular.
const SINGULAR_TOL: f64 = 1e-12;

/// Gram matrix field of a metric on the trivial rank-4 bundle.
#[derive(Clone, Debug)]
pub struct MetricField {
    g: MatrixField,
    inv: MatrixField,
}

impl MetricField {
    pub fn new(g: MatrixField) -> Result<Self> {
        let scale = g.max_abs().max(1.0);
        for k in 0..g.len() {
            let m = g.value(k);
            let (i, j) = g.grid().node(k);
            if (m - m.transpose()).amax() > 1e-12 * scale {
                return Err(Error::AsymmetricMetric { i, j });
            }
        }
        let inv = g.try_inverse(SINGULAR_TOL).map_err(|(i, j)| Error::DegenerateMetric { i, j })?;
        Ok(Self { g, inv })
    }

    pub fn constant(grid: Grid, g: Matrix4<f64>) -> Result<Self> {
        Self::new(MatrixField::constant(grid, g))
    }

    pub fn matrix(&self) -> &MatrixField {
        &self.g
    }

    pub fn grid(&self) -> &Grid {
        self.g.grid()
    }

    pub fn inverse(&self) -> &MatrixField {
        &self.inv
    }
}

/// Pointwise invertible matrix field acting on connections.
#[derive(Clone, Debug)]
pub struct GaugeField {
    phi: MatrixField,
    inv: MatrixField,
}

impl GaugeField {
    pub fn new(phi: MatrixField) -> Result<Self> {
        let inv = phi.try_inverse(SINGULAR_TOL).map_err(|(i, j)| Error::SingularGauge { i, j })?;
        Ok(Self { phi, inv })
    }

    pub fn matrix(&self) -> &MatrixField {
        &self.phi
    }

    pub fn inverse(&self) -> &MatrixField {
        &self.inv
    }

    /// Composition `self * other` (apply `other` first).
    pub fn compose(&self, other: &GaugeField) -> Result<GaugeField> {
        GaugeField::new(&self.phi * &other.phi)
    }
}

/// The `e1 ^ e2` component `d_x Omega_y - d_y Omega_x + [Omega_x, Omega_y]`.
pub fn curvature(w: &ConnectionForm) -> Result<MatrixField> {
    w.x.grid().check_same(w.y.grid())?;
    Ok(&w.curl() + &commutator(&w.x, &w.y))
}

/// Splits `Omega = D + N` into a `G`-compatible connection and a `G`-symmetric one-form.
pub fn metric_split(w: &ConnectionForm, g: &MetricField) -> Result<(ConnectionForm, ConnectionForm)> {
    w.grid().check_same(g.grid())?;
    let gm = g.matrix();
    let ginv = g.inverse();
    let half = |om: &MatrixField, dg: &MatrixField| -> MatrixField {
        let adj = &(ginv * &om.transpose()) * gm;
        let corr = ginv * dg;
        &(&(om + &adj) - &corr) * 0.5
    };
    let n = ConnectionForm { x: half(&w.x, &gm.dx()), y: half(&w.y, &gm.dy()) };
    let d = w - &n;
    Ok((d, n))
}

/// Largest entry of `G N - N^T G` over both components.
pub fn symmetry_residual(n: &ConnectionForm, g: &MetricField) -> f64 {
    let gm = g.matrix();
    let r = |m: &MatrixField| (&(gm * m) - &(&m.transpose() * gm)).residual_norm();
    r(&n.x).max(r(&n.y))
}

/// Largest entry of `dG - D^T G - G D` over both components.
pub fn compatibility_residual(d: &ConnectionForm, g: &MetricField) -> f64 {
    let gm = g.matrix();
    let r = |m: &MatrixField, dg: MatrixField| (&(&dg - &(&m.transpose() * gm)) - &(gm * m)).residual_norm();
    r(&d.x, gm.dx()).max(r(&d.y, gm.dy()))
}

/// Gauge action `Omega' = Phi Omega Phi^{-1} - (d Phi) Phi^{-1}`.
pub fn gauge(phi: &GaugeField, w: &ConnectionForm) -> Result<ConnectionForm> {
    w.grid().check_same(phi.matrix().grid())?;
    let p = phi.matrix();
    let pinv = phi.inverse();
    let act = |om: &MatrixField, dp: MatrixField| &(&(p * om) * pinv) - &(&dp * pinv);
    Ok(ConnectionForm { x: act(&w.x, p.dx()), y: act(&w.y, p.dy()) })
}

fn nilpotency_defect(m: &Matrix4<f64>) -> f64 {
    let m2 = m * m;
    let scale = m.amax().max(1.0).powi(4);
    (m2 * m2).amax() / scale
}

/// `exp(M) = I + M + M^2/2 + M^3/6` for `M^4 = 0`.
pub fn exp_nilpotent(m: &Matrix4<f64>) -> Result<Matrix4<f64>> {
    let defect = nilpotency_defect(m);
    if defect > 1e-12 {
        return Err(Error::NotNilpotent(defect));
    }
    let m2 = m * m;
    Ok(Matrix4::identity() + m + m2 * 0.5 + m2 * m / 6.0)
}

/// Pointwise nilpotent exponential of a matrix field, keeping its jets.
pub fn exp_nilpotent_field(m: &MatrixField) -> Result<MatrixField> {
    let defect = m.values().iter().map(nilpotency_defect).fold(0.0, f64::max);
    if defect > 1e-12 {
        return Err(Error::NotNilpotent(defect));
    }
    let id = MatrixField::identity(*m.grid());
    let m2 = m * m;
    let m3 = &m2 * m;
    Ok(&(&(&id + m) + &(&m2 * 0.5)) + &(&m3 * (1.0 / 6.0)))
}

/// Right logarithmic derivative formula
/// `exp(tau) . nabla = nabla - sum_k ad(tau)^k (nabla tau) / (k+1)!`.
///
/// For nilpotent 4x4 `tau` the series stops after `ad^6`; a non-vanishing
/// seventh term is reported as `ad-not-nilpotent`.
pub fn log_derivative_gauge(tau: &MatrixField, w: &ConnectionForm) -> Result<ConnectionForm> {
    w.grid().check_same(tau.grid())?;
    let series = |om: &MatrixField, dtau: MatrixField| -> Result<MatrixField> {
        let nabla_tau = &dtau + &commutator(om, tau);
        let scale = nabla_tau.max_abs().max(1.0) * tau.max_abs().max(1.0).powi(7);
        let mut term = nabla_tau;
        let mut sum = MatrixField::zeros(*tau.grid());
        let mut fact = 1.0;
        for k in 0..7 {
            fact *= (k + 1) as f64;
            sum = &sum + &(&term * (1.0 / fact));
            term = commutator(tau, &term);
        }
        let tail = term.max_abs();
        if tail > 1e-12 * scale {
            return Err(Error::AdNotNilpotent(tail));
        }
        Ok(om - &sum)
    };
    Ok(ConnectionForm { x: series(&w.x, tau.dx())?, y: series(&w.y, tau.dy())? })
}

/// Outcome of the enveloping, unimodularity, kernel and flatness checks.
#[derive(Clone, Debug)]
pub struct EnvelopeReport {
    pub enveloped: bool,
    pub unimodular: bool,
    /// `2 - rank` of `X -> N(X)` at every node, x fastest.
    pub kernel_rank: Vec<usize>,
    pub dg_flat: bool,
    pub null_residual: f64,
    pub filtration_residual: f64,
    pub trace_residual: f64,
    pub dg_curvature: f64,
}

impl EnvelopeReport {
    pub fn max_kernel_rank(&self) -> usize {
        self.kernel_rank.iter().copied().max().unwrap_or(0)
    }

    pub fn min_kernel_rank(&self) -> usize {
        self.kernel_rank.iter().copied().min().unwrap_or(0)
    }
}

/// Rank deficiency of `X -> a X^1 + b X^2` from the tangent plane into 4x4 matrices.
pub fn kernel_rank(nx: &Matrix4<f64>, ny: &Matrix4<f64>) -> usize {
    let mut a = SMatrix::<f64, 16, 2>::zeros();
    for k in 0..16 {
        a[(k, 0)] = nx[(k / 4, k % 4)];
        a[(k, 1)] = ny[(k / 4, k % 4)];
    }
    let sv = a.svd(false, false).singular_values;
    let smax = sv.max();
    if smax == 0.0 {
        return 2;
    }
    2 - sv.iter().filter(|&&s| s > 1e-8 * smax).count()
}

/// Checks the filtration `E1 = <e1> c E2 = <e1, e2, e3>` against `N` and `G`,
/// unimodularity of `N`, the kernel of `N`, and flatness of `D = Omega - N`.
pub fn envelope_checks(
    omega: &ConnectionForm,
    n: &ConnectionForm,
    g: &MetricField,
    tol: f64,
) -> Result<EnvelopeReport> {
    omega.grid().check_same(n.grid())?;
    n.grid().check_same(g.grid())?;
    let null_residual = g.matrix().entry(0, 0).max_abs();
    let block = |m: &Matrix4<f64>| {
        let col = (1..4).map(|r| m[(r, 0)].abs()).fold(0.0, f64::max);
        let row = (0..3).map(|c| m[(3, c)].abs()).fold(0.0, f64::max);
        col.max(row)
    };
    let filtration_residual = n
        .x
        .values()
        .iter()
        .chain(n.y.values().iter())
        .map(block)
        .fold(0.0, f64::max);
    let trace_residual = n.x.trace().max_abs().max(n.y.trace().max_abs());
    let (xs, ys) = (n.x.values(), n.y.values());
    let kernel = xs.iter().zip(&ys).map(|(a, b)| kernel_rank(a, b)).collect();
    let dg_curvature = curvature(&(omega - n))?.residual_norm();
    Ok(EnvelopeReport {
        enveloped: null_residual < tol && filtration_residual < tol,
        unimodular: trace_residual < tol,
        kernel_rank: kernel,
        dg_flat: dg_curvature < tol,
        null_residual,
        filtration_residual,
        trace_residual,
        dg_curvature,
    })
}

/// Trace-free check used by callers that only hold `N`.
pub fn trace_field(n: &ConnectionForm) -> (ScalarField, ScalarField) {
    (n.x.trace(), n.y.trace())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> Grid {
        Grid::unit(21).unwrap()
    }

    fn rand_mat(rng: &mut ChaCha8Rng, s: f64) -> Matrix4<f64> {
        Matrix4::from_fn(|_, _| rng.gen_range(-s..s))
    }

    fn smooth_matrix_field(g: Grid, rng: &mut ChaCha8Rng, base: Matrix4<f64>, s: f64) -> MatrixField {
        let (a, b) = (rand_mat(rng, s), rand_mat(rng, s));
        let (p, q) = (rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0));
        MatrixField::from_jet_fn(g, 3, move |x, y| {
            let u = (x * p + y * q).sin();
            let v = &x * &y;
            nalgebra_jet(base) + u.map(|t| a * t) + v.map(|t| b * t)
        })
    }

    fn nalgebra_jet(m: Matrix4<f64>) -> crate::fields::Jet<Matrix4<f64>> {
        crate::fields::Jet::constant(m, 3)
    }

    fn random_connection(g: Grid, rng: &mut ChaCha8Rng) -> ConnectionForm {
        ConnectionForm {
            x: smooth_matrix_field(g, rng, Matrix4::zeros(), 1.0),
            y: smooth_matrix_field(g, rng, Matrix4::zeros(), 1.0),
        }
    }

    fn random_gauge(g: Grid, rng: &mut ChaCha8Rng) -> GaugeField {
        GaugeField::new(smooth_matrix_field(g, rng, Matrix4::identity() * 2.0, 0.3)).unwrap()
    }

    #[test]
    fn trivial_connection_is_flat() {
        let w = ConnectionForm::zeros(grid());
        assert_eq!(curvature(&w).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn constant_commuting_nilpotents_are_flat() {
        let g = grid();
        let mut ax = Matrix4::zeros();
        ax[(0, 1)] = 1.0;
        ax[(2, 3)] = 1.0;
        let mut ay = Matrix4::zeros();
        ay[(0, 2)] = 1.0;
        ay[(1, 3)] = 1.0;
        let w = ConnectionForm { x: MatrixField::constant(g, ax.transpose()), y: MatrixField::constant(g, ay.transpose()) };
        assert!(curvature(&w).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn split_of_skew_connection_is_trivial() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = grid();
        let a = rand_mat(&mut rng, 1.0);
        let gm = a * a.transpose() + Matrix4::identity();
        let ginv = gm.try_inverse().unwrap();
        let skew = |m: Matrix4<f64>| (m - ginv * m.transpose() * gm) * 0.5;
        let w = ConnectionForm {
            x: MatrixField::constant(g, skew(rand_mat(&mut rng, 1.0))),
            y: MatrixField::constant(g, skew(rand_mat(&mut rng, 1.0))),
        };
        let metric = MetricField::constant(g, gm).unwrap();
        let (_, n) = metric_split(&w, &metric).unwrap();
        assert!(n.max_abs() < 1e-12);
    }

    #[test]
    fn split_contracts_hold_for_random_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = grid();
        for _ in 0..5 {
            let a = rand_mat(&mut rng, 1.0);
            let gm = a + a.transpose() + Matrix4::identity() * 0.5;
            let metric = MetricField::constant(g, gm).unwrap();
            let w = ConnectionForm {
                x: MatrixField::constant(g, rand_mat(&mut rng, 1.0)),
                y: MatrixField::constant(g, rand_mat(&mut rng, 1.0)),
            };
            let (d, n) = metric_split(&w, &metric).unwrap();
            assert!(symmetry_residual(&n, &metric) < 1e-12);
            assert!(compatibility_residual(&d, &metric) < 1e-12);
        }
        // Non-constant metric: the dG term matters.
        let h = smooth_matrix_field(g, &mut rng, Matrix4::identity() * 3.0, 0.2);
        let metric = MetricField::new(&(&h + &h.transpose()) * 0.5).unwrap();
        let w = random_connection(g, &mut rng);
        let (d, n) = metric_split(&w, &metric).unwrap();
        assert!(symmetry_residual(&n, &metric) < 1e-11);
        assert!(compatibility_residual(&d, &metric) < 1e-11);
    }

    #[test]
    fn degenerate_and_asymmetric_metrics_are_rejected() {
        let g = grid();
        let mut m = Matrix4::identity();
        m[(3, 3)] = 0.0;
        assert!(matches!(MetricField::constant(g, m), Err(Error::DegenerateMetric { i: 0, j: 0 })));
        m[(3, 3)] = 1.0;
        m[(0, 1)] = 0.5;
        assert!(matches!(MetricField::constant(g, m), Err(Error::AsymmetricMetric { .. })));
    }

    #[test]
    fn identity_gauge_is_trivial() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = grid();
        let w = random_connection(g, &mut rng);
        let id = GaugeField::new(MatrixField::identity(g)).unwrap();
        assert!((&gauge(&id, &w).unwrap() - &w).max_abs() < 1e-15);
        assert!(GaugeField::new(MatrixField::zeros(g)).is_err());
    }

    #[test]
    fn constant_gauge_preserves_flatness() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = grid();
        let mut ax = Matrix4::zeros();
        ax[(1, 0)] = 1.0;
        ax[(3, 2)] = 1.0;
        let w = ConnectionForm { x: MatrixField::constant(g, ax), y: MatrixField::constant(g, ax * 2.0) };
        let phi = GaugeField::new(MatrixField::constant(g, rand_mat(&mut rng, 1.0) + Matrix4::identity() * 3.0)).unwrap();
        assert!(curvature(&gauge(&phi, &w).unwrap()).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn gauge_is_a_group_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = grid();
        let w = random_connection(g, &mut rng);
        let phi = random_gauge(g, &mut rng);
        let psi = random_gauge(g, &mut rng);
        let lhs = gauge(&phi, &gauge(&psi, &w).unwrap()).unwrap();
        let rhs = gauge(&phi.compose(&psi).unwrap(), &w).unwrap();
        assert!((&lhs - &rhs).max_abs() < 1e-11);
    }

    #[test]
    fn curvature_is_gauge_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = grid();
        let w = random_connection(g, &mut rng);
        let phi = random_gauge(g, &mut rng);
        let lhs = curvature(&gauge(&phi, &w).unwrap()).unwrap();
        let rhs = &(phi.matrix() * &curvature(&w).unwrap()) * phi.inverse();
        assert!((&lhs - &rhs).max_abs() < 1e-10);
    }

    #[test]
    fn nilpotent_exponential() {
        assert_eq!(exp_nilpotent(&Matrix4::zeros()).unwrap(), Matrix4::identity());
        let mut tau = Matrix4::zeros();
        tau[(0, 3)] = 0.5 * 2.0;
        assert_eq!(exp_nilpotent(&tau).unwrap(), Matrix4::identity() + tau);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let m = Matrix4::from_fn(|r, c| if c > r { rng.gen_range(-2.0..2.0) } else { 0.0 });
            let e = exp_nilpotent(&m).unwrap();
            let back = exp_nilpotent(&(-m)).unwrap();
            assert!((e * back - Matrix4::identity()).amax() < 1e-13);
        }
        assert!(matches!(exp_nilpotent(&Matrix4::identity()), Err(Error::NotNilpotent(_))));
    }

    #[test]
    fn nu_series_terminates() {
        // nu = a/2 E12 + b/2 E13 + c E14 + b E24 + a E34 style pattern.
        let (a, b, c) = (0.7, -1.1, 0.4);
        let mut nu = Matrix4::zeros();
        nu[(0, 1)] = a / 2.0;
        nu[(0, 2)] = b / 2.0;
        nu[(0, 3)] = c;
        nu[(1, 3)] = b;
        nu[(2, 3)] = a;
        assert!((nu * nu * nu).amax() < 1e-15);
        let series = Matrix4::identity() + nu + nu * nu * 0.5;
        assert!((exp_nilpotent(&nu).unwrap() - series).amax() < 1e-15);
    }

    fn random_nilpotent_field(g: Grid, rng: &mut ChaCha8Rng) -> MatrixField {
        let coeffs: Vec<(usize, usize, f64, f64)> = (0..4)
            .flat_map(|r| (r + 1..4).map(move |c| (r, c)))
            .map(|(r, c)| (r, c, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        MatrixField::from_jet_fn(g, 3, move |x, y| {
            let mut acc = crate::fields::Jet::<Matrix4<f64>>::zero(3);
            for &(r, c, p, q) in &coeffs {
                let s = (x * p + y * q).sin();
                acc = acc + s.map(|v| {
                    let mut m = Matrix4::zeros();
                    m[(r, c)] = v;
                    m
                });
            }
            acc
        })
    }

    #[test]
    fn log_derivative_matches_gauge_by_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = grid();
        for _ in 0..3 {
            let tau = random_nilpotent_field(g, &mut rng);
            let w = random_connection(g, &mut rng);
            let via_log = log_derivative_gauge(&tau, &w).unwrap();
            let phi = GaugeField::new(exp_nilpotent_field(&tau).unwrap()).unwrap();
            let via_gauge = gauge(&phi, &w).unwrap();
            assert!((&via_log - &via_gauge).max_abs() < 1e-11);
        }
        let w = random_connection(g, &mut rng);
        let zero = MatrixField::zeros(g);
        assert!((&log_derivative_gauge(&zero, &w).unwrap() - &w).max_abs() == 0.0);
    }

    #[test]
    fn log_derivative_rejects_non_nilpotent() {
        let g = grid();
        let w = ConnectionForm { x: MatrixField::constant(g, Matrix4::from_fn(|r, c| (r + 2 * c) as f64)), y: MatrixField::zeros(g) };
        let tau = MatrixField::constant(g, Matrix4::from_diagonal(&nalgebra::Vector4::new(1.0, -1.0, 0.5, 2.0)));
        assert!(matches!(log_derivative_gauge(&tau, &w), Err(Error::AdNotNilpotent(_))));
    }

    #[test]
    fn kernel_rank_counts_deficiency() {
        let z = Matrix4::zeros();
        let mut a = Matrix4::zeros();
        a[(0, 1)] = 1.0;
        let mut b = Matrix4::zeros();
        b[(2, 3)] = 1.0;
        assert_eq!(kernel_rank(&z, &z), 2);
        assert_eq!(kernel_rank(&a, &(a * 3.0)), 1);
        assert_eq!(kernel_rank(&a, &b), 0);
    }
}
