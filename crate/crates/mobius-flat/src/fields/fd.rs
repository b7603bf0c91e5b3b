//! Finite-difference stencils on uniform grids.
//!
//! Weights come from Fornberg's recursion, so any even accuracy order is
//! available. Interior nodes use the centred stencil. Nodes closer than half a
//! stencil to an edge use a shifted stencil with one extra point, which keeps
//! the boundary error constant well below the interior one.

use crate::error::{Error, Result};

/// Finite-difference weights for the `m`-th derivative at `z` from samples at `xs`.
pub fn fornberg(z: f64, xs: &[f64], m: usize) -> Vec<f64> {
    let n = xs.len();
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - z;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

/// First-derivative stencil of a given accuracy order along a line of `n` nodes.
#[derive(Clone, Debug)]
pub struct Stencil {
    order: usize,
    n: usize,
    /// `(start, weights)` for each node along the line, weights in units of 1/h.
    rows: Vec<(usize, Vec<f64>)>,
}

impl Stencil {
    pub fn new(order: usize, n: usize) -> Result<Self> {
        if order == 0 || order % 2 != 0 {
            return Err(Error::Invalid(format!("stencil order must be even and positive, got {order}")));
        }
        let width = order + 1;
        if n < width {
            return Err(Error::GridTooSmall(format!(
                "order-{order} stencil needs {width} nodes along an axis, grid has {n}"
            )));
        }
        let half = order / 2;
        let rows = (0..n)
            .map(|i| {
                let centred = i >= half && i + half < n;
                let w = if centred { width } else { (width + 1).min(n) };
                let start = i.saturating_sub(half).min(n - w);
                let xs: Vec<f64> = (start..start + w).map(|k| k as f64).collect();
                (start, fornberg(i as f64, &xs, 1))
            })
            .collect();
        Ok(Self { order, n, rows })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `(start, weights)` for node `i`.
    pub fn row(&self, i: usize) -> (usize, &[f64]) {
        let (s, w) = &self.rows[i];
        (*s, w)
    }
}

/// Lagrange weights for interpolating at `z` from samples at integer positions `start..start+w`.
pub fn lagrange_weights(z: f64, start: usize, width: usize) -> Vec<f64> {
    (0..width)
        .map(|a| {
            let xa = (start + a) as f64;
            (0..width)
                .filter(|&b| b != a)
                .map(|b| {
                    let xb = (start + b) as f64;
                    (z - xb) / (xa - xb)
                })
                .product()
        })
        .collect()
}
