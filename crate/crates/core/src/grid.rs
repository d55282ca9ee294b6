//! Uniform symmetric grids on `[-L, L]` and sampled fields.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("grid: need at least 5 nodes (got {0})")]
    TooFewNodes(usize),
    #[error("grid: half width must be positive and finite (got {0})")]
    BadHalfWidth(f64),
    #[error("grid: fields live on different grids")]
    Mismatch,
    #[error("grid: {len} values for a grid of {n} nodes")]
    Length { len: usize, n: usize },
}

/// Uniform grid `y_i = -L + i h`, `i = 0..n`, with `h = 2L/(n-1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    half_width: f64,
    n: usize,
}

impl Grid1D {
    pub fn new(half_width: f64, n: usize) -> Result<Self, GridError> {
        if n < 5 {
            return Err(GridError::TooFewNodes(n));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(GridError::BadHalfWidth(half_width));
        }
        Ok(Self { half_width, n })
    }

    /// Grid on `[-L, L]` whose spacing is at most `h`; the node count is odd so
    /// that `y = 0` is a node.
    pub fn with_spacing(half_width: f64, h: f64) -> Result<Self, GridError> {
        if !(h.is_finite() && h > 0.0) {
            return Err(GridError::BadHalfWidth(h));
        }
        let cells = (2.0 * half_width / h).ceil() as usize;
        let cells = cells + cells % 2;
        Self::new(half_width, cells.max(4) + 1)
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        // Symmetric evaluation keeps y_i = -y_{n-1-i} exactly.
        let h = self.spacing();
        let mid = (self.n - 1) as f64 / 2.0;
        (i as f64 - mid) * h
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.node(i))
    }

    pub fn mirror(&self, i: usize) -> usize {
        self.n - 1 - i
    }

    /// Same node count, every coordinate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, GridError> {
        Self::new(self.half_width * factor, self.n)
    }

    /// Index of the node nearest to `y`, clamped to the grid.
    pub fn nearest(&self, y: f64) -> usize {
        let x = (y + self.half_width) / self.spacing();
        x.round().clamp(0.0, (self.n - 1) as f64) as usize
    }

    /// Composite Simpson weights; an odd interval count closes with the 3/8 rule.
    pub fn simpson_weights(&self) -> Vec<f64> {
        let n = self.n;
        let h = self.spacing();
        let mut w = vec![0.0; n];
        let intervals = n - 1;
        let simpson_end = if intervals % 2 == 0 { n - 1 } else { n - 4 };
        let mut i = 0;
        while i + 2 <= simpson_end {
            w[i] += h / 3.0;
            w[i + 1] += 4.0 * h / 3.0;
            w[i + 2] += h / 3.0;
            i += 2;
        }
        if simpson_end != n - 1 {
            let j = simpson_end;
            let c = 3.0 * h / 8.0;
            w[j] += c;
            w[j + 1] += 3.0 * c;
            w[j + 2] += 3.0 * c;
            w[j + 3] += c;
        }
        w
    }
}

/// Values sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: Grid1D,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::Length { len: values.len(), n: grid.len() });
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().map(f).collect();
        Self { grid, values }
    }

    pub fn zeros(grid: Grid1D) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn same_grid(&self, other: &Field) -> Result<(), GridError> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(GridError::Mismatch)
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `sup (1 + |y|^m) |f(y)|`.
    pub fn weighted_sup(&self, m: f64) -> f64 {
        self.grid
            .nodes()
            .zip(&self.values)
            .fold(0.0, |acc, (y, v)| acc.max((1.0 + y.abs().powf(m)) * v.abs()))
    }

    /// `sup |f(y)| / (1 + |y|^m)`.
    pub fn inverse_weighted_sup(&self, m: f64) -> f64 {
        self.grid
            .nodes()
            .zip(&self.values)
            .fold(0.0, |acc, (y, v)| acc.max(v.abs() / (1.0 + y.abs().powf(m))))
    }

    pub fn sub(&self, other: &Field) -> Result<Field, GridError> {
        self.same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Field { grid: self.grid, values })
    }

    pub fn add(&self, other: &Field) -> Result<Field, GridError> {
        self.same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(Field { grid: self.grid, values })
    }

    pub fn scale(&self, c: f64) -> Field {
        Field { grid: self.grid, values: self.values.iter().map(|v| c * v).collect() }
    }

    /// Second-order finite-difference derivative; one-sided at the edges.
    pub fn gradient(&self) -> Field {
        let mut out = vec![0.0; self.values.len()];
        gradient_into(&self.values, self.grid.spacing(), &mut out);
        Field { grid: self.grid, values: out }
    }

    /// Linear interpolation, constant extension outside the grid.
    pub fn interpolate(&self, y: f64) -> f64 {
        let h = self.grid.spacing();
        let x = (y + self.grid.half_width()) / h;
        if x <= 0.0 {
            return self.values[0];
        }
        let last = self.values.len() - 1;
        if x >= last as f64 {
            return self.values[last];
        }
        let i = x.floor() as usize;
        let t = x - i as f64;
        self.values[i] * (1.0 - t) + self.values[i + 1] * t
    }
}

pub(crate) fn gradient_into(v: &[f64], h: f64, out: &mut [f64]) {
    let n = v.len();
    for i in 1..n - 1 {
        out[i] = (v[i + 1] - v[i - 1]) / (2.0 * h);
    }
    out[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
    out[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_are_symmetric() {
        let g = Grid1D::new(3.7, 101).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.node(i), -g.node(g.mirror(i)));
        }
        assert_eq!(g.node(50), 0.0);
    }

    #[test]
    fn simpson_integrates_cubics_exactly() {
        for n in [11, 12, 13, 14] {
            let g = Grid1D::new(2.0, n).unwrap();
            let w = g.simpson_weights();
            let integral: f64 = g.nodes().zip(&w).map(|(y, w)| w * (y + 2.0).powi(3)).sum();
            assert!((integral - 64.0).abs() < 1e-11, "n = {n}: {integral}");
        }
    }

    #[test]
    fn gradient_exact_for_quadratics() {
        let g = Grid1D::new(1.0, 21).unwrap();
        let f = Field::from_fn(g, |y| 3.0 * y * y - y + 2.0);
        let d = f.gradient();
        for (y, v) in g.nodes().zip(&d.values) {
            assert!((v - (6.0 * y - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn spacing_request_gives_odd_count() {
        let g = Grid1D::with_spacing(10.0, 0.3).unwrap();
        assert_eq!(g.len() % 2, 1);
        assert!(g.spacing() <= 0.3);
    }
}
