//! Numeric substrate: grids, exact and sampled fields, expressions, stencils
//! and one-forms.

pub mod expr;
pub mod fd;
pub mod field;
pub mod forms;
pub mod grid;
pub mod io;
pub mod jet;

pub use expr::Expr;
pub use field::{commutator, Field, MatrixField, ScalarField, VectorField};
pub use forms::{wedge_bracket, OneForm};
pub use grid::{Axis, Grid};
pub use jet::{Jet, JetValue};

use crate::error::Result;

/// Derivative of a scalar field along an axis.
///
/// Fails with `grid-too-small` when a sampled field's stencil does not fit.
pub fn derivative(f: &ScalarField, axis: Axis) -> Result<ScalarField> {
    if let Some(p) = f.stencil() {
        fd::Stencil::new(p, f.grid().extent(axis))?;
    }
    Ok(f.d(axis))
}
