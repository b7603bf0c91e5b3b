//! Quadratic polynomial conserved quantities and the flat centro-affine
//! characterisation in terms of a Chebyshev potential `alpha`.

use nalgebra::Vector4;

use crate::centroaffine::{decompose, gauss_curvature, CentroAffineImmersion};
use crate::connection::ConnectionForm;
use crate::error::Result;
use crate::fields::{Axis, MatrixField, ScalarField, VectorField};
use crate::wilczynski::{canonical_chi_psi_tau, compatibility_residual, split_lie_quadric, WilczynskiData};

/// `q(t) = v0 + t v1 + t^2 v2` in coefficient columns of `(sigma, sigma_x, sigma_y, sigma_xy)`,
/// together with the potential whose differential shifts the pencil.
#[derive(Clone, Debug)]
pub struct PolyConservedQuantity {
    pub v0: VectorField,
    pub v1: VectorField,
    pub v2: VectorField,
    pub potential: ScalarField,
}

impl PolyConservedQuantity {
    /// How far `v0` is from a multiple of `sigma_hat` and `v2` from a multiple of `sigma`.
    pub fn shape_residual(&self, w: &WilczynskiData) -> f64 {
        let bg = &(&w.beta * &w.gamma) * 0.5;
        let hat = &self.v0.entry(0, 0) + &(&bg * &self.v0.entry(3, 0));
        [hat, self.v0.entry(1, 0), self.v0.entry(2, 0), self.v2.entry(1, 0), self.v2.entry(2, 0), self.v2.entry(3, 0)]
            .iter()
            .map(|f| f.residual_norm())
            .fold(0.0, f64::max)
    }

    fn coefficient(&self, k: usize) -> &VectorField {
        match k {
            0 => &self.v0,
            1 => &self.v1,
            _ => &self.v2,
        }
    }
}

fn column(entries: [&ScalarField; 4]) -> VectorField {
    VectorField::from_entries(
        *entries[0].grid(),
        &[(0, 0, entries[0]), (1, 0, entries[1]), (2, 0, entries[2]), (3, 0, entries[3])],
    )
}

/// `e^{t alpha}`-stripped quantity `-2 sigma_hat + t (c sigma + b sigma_x + a sigma_y) + t^2 (1 + ab/2) sigma`
/// with `a = 2 alpha_x`, `b = 2 alpha_y`, `c = -2 alpha_xy`.
pub fn build_from_potential(alpha: &ScalarField, w: &WilczynskiData) -> Result<PolyConservedQuantity> {
    w.grid().check_same(alpha.grid())?;
    let g = *w.grid();
    let ax = alpha.dx();
    let a = &ax * 2.0;
    let b = &alpha.dy() * 2.0;
    let c = &ax.dy() * -2.0;
    let zero = ScalarField::zeros(g);
    let bg = &w.beta * &w.gamma;
    let v0 = column([&bg, &zero, &zero, &ScalarField::constant(g, -2.0)]);
    let v1 = column([&c, &b, &a, &zero]);
    let lead = &ScalarField::constant(g, 1.0) + &(&(&a * &b) * 0.5);
    let v2 = column([&lead, &zero, &zero, &zero]);
    Ok(PolyConservedQuantity { v0, v1, v2, potential: alpha.clone() })
}

/// Per-equation maxima of `d_t q(t)` for the pencil `D + t (N + d alpha) + (t^2 - 1) chi + (t^3 - t) psi`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConservationReport {
    /// Coefficients of `t^0, ..., t^5`.
    pub powers: [f64; 6],
    /// The three equations left after discarding terms that vanish on
    /// `v2 in span(sigma)` and `v1 in span(sigma, sigma_x, sigma_y)`.
    pub reduced: [f64; 3],
}

impl ConservationReport {
    pub fn max(&self) -> f64 {
        self.powers.iter().copied().fold(0.0, f64::max)
    }

    pub fn reduced_max(&self) -> f64 {
        self.reduced.iter().copied().fold(0.0, f64::max)
    }
}

/// Conservation equations with the pencil built from the Lie-quadric split of `w`.
pub fn conservation_residual(
    q: &PolyConservedQuantity,
    w: &WilczynskiData,
    chi: &ConnectionForm,
    psi: &ConnectionForm,
) -> Result<ConservationReport> {
    w.grid().check_same(q.v0.grid())?;
    w.grid().check_same(chi.grid())?;
    w.grid().check_same(psi.grid())?;
    let (d, n) = split_lie_quadric(w);
    let ident = MatrixField::identity(*w.grid());
    let mut powers = [0.0f64; 6];
    let mut reduced = [0.0f64; 3];
    for axis in [Axis::X, Axis::Y] {
        let (dd, nn, ch, ps) = (d.component(axis), n.component(axis), chi.component(axis), psi.component(axis));
        let shift = &q.potential.d(axis) * &ident;
        // t^k coefficients of the pencil
        let pencil = [dd - ch, &(nn + &shift) - ps, ch.clone(), ps.clone()];
        for (m, slot) in powers.iter_mut().enumerate() {
            let mut acc = if m <= 2 { q.coefficient(m).d(axis) } else { VectorField::zeros(*w.grid()) };
            for (k, om) in pencil.iter().enumerate() {
                if m >= k && m - k <= 2 {
                    acc = &acc + &(om * q.coefficient(m - k));
                }
            }
            *slot = slot.max(acc.residual_norm());
        }
        let (v0, v1, v2) = (&q.v0, &q.v1, &q.v2);
        let r1 = &(&(&(&v1.d(axis) + &(dd * v1)) + &(nn * v0)) + &(&shift * v0)) - &(&(ch * v1) + &(ps * v0));
        let r2 = &(&(&v2.d(axis) + &(dd * v2)) + &(nn * v1)) + &(&(&shift * v1) + &(ch * v0));
        let r3 = &(&(&shift * v2) + &(ch * v1)) + &(&(ps * v0) - &(ps * v2));
        for (slot, r) in reduced.iter_mut().zip([r1, r2, r3]) {
            *slot = slot.max(r.residual_norm());
        }
    }
    Ok(ConservationReport { powers, reduced })
}

/// [`conservation_residual`] with the canonical `chi`, `psi` of the spectral family.
pub fn conservation_residual_canonical(q: &PolyConservedQuantity, w: &WilczynskiData) -> Result<ConservationReport> {
    let (chi, psi, _) = canonical_chi_psi_tau(w);
    conservation_residual(q, w, &chi, &psi)
}

/// Maxima of the five equations
/// `beta_y = 2 alpha_xx`, `gamma_x = 2 alpha_yy`, `V = 2(beta alpha_y + alpha_x^2)`,
/// `W = 2(gamma alpha_x + alpha_y^2)`, `1 = beta gamma - 4 alpha_x alpha_y`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Theorem1Residuals {
    pub beta_y: f64,
    pub gamma_x: f64,
    pub v: f64,
    pub w: f64,
    pub unit: f64,
}

impl Theorem1Residuals {
    pub fn as_array(&self) -> [f64; 5] {
        [self.beta_y, self.gamma_x, self.v, self.w, self.unit]
    }

    pub fn max(&self) -> f64 {
        self.as_array().into_iter().fold(0.0, f64::max)
    }
}

pub fn theorem1_residuals(alpha: &ScalarField, w: &WilczynskiData) -> Result<Theorem1Residuals> {
    theorem1_residuals_scaled(alpha, w, 1.0)
}

/// As [`theorem1_residuals`] with the unit equation read as `scale = beta gamma - 4 alpha_x alpha_y`.
/// Spectrally deformed data `(t beta, t gamma, t^2 V, t^2 W)` satisfy it with `t alpha` and `scale = t^2`.
pub fn theorem1_residuals_scaled(alpha: &ScalarField, w: &WilczynskiData, scale: f64) -> Result<Theorem1Residuals> {
    w.grid().check_same(alpha.grid())?;
    let (ax, ay) = (alpha.dx(), alpha.dy());
    let (be, ga) = (&w.beta, &w.gamma);
    let n = |f: ScalarField| f.residual_norm();
    let sq = |f: &ScalarField| f * f;
    Ok(Theorem1Residuals {
        beta_y: n(&be.dy() - &(&ax.dx() * 2.0)),
        gamma_x: n(&ga.dx() - &(&ay.dy() * 2.0)),
        v: n(&w.v - &(&(&(be * &ay) + &sq(&ax)) * 2.0)),
        w: n(&w.w - &(&(&(ga * &ax) + &sq(&ay)) * 2.0)),
        unit: n(&(&ScalarField::constant(*w.grid(), scale) - &(be * ga)) + &(&(&ax * &ay) * 4.0)),
    })
}

#[derive(Clone, Debug)]
pub struct EquivalenceReport {
    pub compatibility: f64,
    pub flat_metric: Theorem1Residuals,
    pub conservation: ConservationReport,
    /// Largest centro-affine Gaussian curvature of an attached immersion.
    pub curvature: Option<f64>,
}

impl EquivalenceReport {
    /// Whether every section is within `tol`.
    pub fn passes(&self, tol: f64) -> bool {
        self.compatibility <= tol
            && self.flat_metric.max() <= tol
            && self.conservation.max() <= tol
            && self.curvature.is_none_or(|k| k <= tol)
    }
}

/// Flat-metric residuals, conservation of the quantity built from `alpha`, and
/// optionally the flatness of an immersion realising the same surface.
pub fn equivalence_check(
    w: &WilczynskiData,
    alpha: &ScalarField,
    immersion: Option<&CentroAffineImmersion>,
) -> Result<EquivalenceReport> {
    let q = build_from_potential(alpha, w)?;
    let curvature = match immersion {
        Some(imm) => Some(gauss_curvature(&decompose(imm)?.g)?.residual_norm()),
        None => None,
    };
    Ok(EquivalenceReport {
        compatibility: compatibility_residual(w),
        flat_metric: theorem1_residuals(alpha, w)?,
        conservation: conservation_residual_canonical(&q, w)?,
        curvature,
    })
}

/// Coefficient column of `sigma_hat = sigma_xy - (beta gamma / 2) sigma` at one node.
pub fn sigma_hat_column(beta: f64, gamma: f64) -> Vector4<f64> {
    Vector4::new(-0.5 * beta * gamma, 0.0, 0.0, 1.0)
}
