//! Gauge-theoretic verification of Möbius-flat surfaces in projective 3-space.
//!
//! Surfaces are encoded by the coefficients `(beta, gamma, V, W)` of their
//! Wilczynski frame system in asymptotic coordinates. The crate builds the
//! associated connections, splits them against the Lie-quadric metric, checks
//! the spectral family of flat connections, the surface BGG identities,
//! polynomial conserved quantities and centro-affine invariants, and
//! integrates the spectral deformation numerically.

pub mod bgg;
pub mod centroaffine;
pub mod cli;
pub mod connection;
pub mod conserved;
pub mod deform;
pub mod error;
pub mod fields;
pub mod wilczynski;

pub use error::{Error, Result};
