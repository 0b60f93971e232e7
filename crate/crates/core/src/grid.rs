//! Uniform grids, discretized paths and fields.

use crate::error::{Error, Result};
use crate::sum::pairwise_by;
use serde::{Deserialize, Serialize};

/// Uniform 1D grid on `[lo, hi]` with `n` nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub lo: f64,
    pub h: f64,
    pub n: usize,
}

impl Grid1D {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::with_min_nodes(lo, hi, n, 16)
    }

    /// Constructor with a relaxed node minimum (tensor-grid axes can be short).
    pub fn with_min_nodes(lo: f64, hi: f64, n: usize, min_nodes: usize) -> Result<Self> {
        if n < min_nodes {
            return Err(Error::InvalidInput(format!(
                "grid needs at least {min_nodes} nodes, got {n}"
            )));
        }
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidInput("grid extent must be finite and increasing".into()));
        }
        Ok(Self {
            lo,
            h: (hi - lo) / (n - 1) as f64,
            n,
        })
    }

    /// Symmetric grid on `[-extent, extent]` with spacing close to `h` (exact node count).
    pub fn symmetric(extent: f64, h: f64) -> Result<Self> {
        let n = (2.0 * extent / h).round() as usize + 1;
        Self::new(-extent, extent, n)
    }

    /// Build from explicit nodes, checking uniformity to 1e-12.
    pub fn from_nodes(nodes: &[f64]) -> Result<Self> {
        if nodes.len() < 16 {
            return Err(Error::InvalidInput("grid needs at least 16 nodes".into()));
        }
        let h = nodes[1] - nodes[0];
        for w in nodes.windows(2) {
            if ((w[1] - w[0]) - h).abs() > 1e-12 * (1.0 + h.abs()) {
                return Err(Error::InvalidInput("grid spacing is not uniform".into()));
            }
        }
        Ok(Self {
            lo: nodes[0],
            h,
            n: nodes.len(),
        })
    }

    pub fn hi(&self) -> f64 {
        self.lo + self.h * (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.lo + self.h * i as f64
    }

    /// Trapezoid weight of node `i` (h, halved at the ends).
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.n - 1 {
            0.5 * self.h
        } else {
            self.h
        }
    }

    /// Grid with halved spacing on the same extent.
    pub fn refined(&self) -> Self {
        Self {
            lo: self.lo,
            h: 0.5 * self.h,
            n: 2 * self.n - 1,
        }
    }
}

/// A discretized map `grid -> R^m`, stored flat node-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Path1D {
    pub grid: Grid1D,
    pub m: usize,
    pub values: Vec<f64>,
}

impl Path1D {
    pub fn zeros(grid: Grid1D, m: usize) -> Self {
        let values = vec![0.0; grid.n * m];
        Self { grid, m, values }
    }

    pub fn from_fn(grid: Grid1D, m: usize, f: impl Fn(f64, &mut [f64])) -> Self {
        let mut p = Self::zeros(grid, m);
        for i in 0..p.grid.n {
            let y = p.grid.node(i);
            let s = &mut p.values[i * m..(i + 1) * m];
            f(y, s);
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.grid.n * self.m {
            return Err(Error::InvalidInput(format!(
                "path has {} values, grid expects {}",
                self.values.len(),
                self.grid.n * self.m
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("path contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.m..(i + 1) * self.m]
    }

    pub fn point_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.m..(i + 1) * self.m]
    }

    /// Trapezoid L2 inner product with another path on the same grid.
    pub fn l2_inner(&self, other: &Path1D) -> f64 {
        debug_assert_eq!(self.grid.n, other.grid.n);
        let m = self.m;
        pairwise_by(self.grid.n, |i| {
            let mut dot = 0.0;
            for a in 0..m {
                dot += self.values[i * m + a] * other.values[i * m + a];
            }
            self.grid.weight(i) * dot
        })
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_inner(self).sqrt()
    }

    /// Squared L2 norm of the cell-difference derivative, consistent with the
    /// discrete action (midpoint differences, cell weights).
    pub fn deriv_sq_norm(&self) -> f64 {
        let m = self.m;
        let h = self.grid.h;
        pairwise_by(self.grid.n - 1, |i| {
            let mut dot = 0.0;
            for a in 0..m {
                let d = (self.values[(i + 1) * m + a] - self.values[i * m + a]) / h;
                dot += d * d;
            }
            h * dot
        })
    }

    /// H1 norm: sqrt(|u|^2 + |u'|^2).
    pub fn h1_norm(&self) -> f64 {
        (self.l2_inner(self) + self.deriv_sq_norm()).sqrt()
    }

    /// Nodal derivative by centered differences (one-sided at the ends).
    pub fn nodal_derivative(&self) -> Path1D {
        let m = self.m;
        let h = self.grid.h;
        let n = self.grid.n;
        let mut d = Path1D::zeros(self.grid.clone(), m);
        for a in 0..m {
            d.values[a] = (self.values[m + a] - self.values[a]) / h;
            d.values[(n - 1) * m + a] =
                (self.values[(n - 1) * m + a] - self.values[(n - 2) * m + a]) / h;
            for i in 1..n - 1 {
                d.values[i * m + a] =
                    (self.values[(i + 1) * m + a] - self.values[(i - 1) * m + a]) / (2.0 * h);
            }
        }
        d
    }

    /// Max over nodes of the euclidean distance to `target`.
    pub fn sup_distance_to_point(&self, target: &[f64]) -> f64 {
        let m = self.m;
        let mut sup = 0.0f64;
        for i in 0..self.grid.n {
            let mut d2 = 0.0;
            for a in 0..m {
                let d = self.values[i * m + a] - target[a];
                d2 += d * d;
            }
            sup = sup.max(d2.sqrt());
        }
        sup
    }
}

/// Tensor grid for the reduced strip `[0, L/4] x [-Y, Y]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub x: Grid1D,
    pub y: Grid1D,
    /// Full period in x; the x grid covers a quarter of it.
    pub period_l: f64,
}

impl Grid2D {
    pub fn reduced(period_l: f64, y_extent: f64, hx: f64, hy: f64) -> Result<Self> {
        let nx = (0.25 * period_l / hx).round() as usize + 1;
        let ny = (2.0 * y_extent / hy).round() as usize + 1;
        Ok(Self {
            x: Grid1D::with_min_nodes(0.0, 0.25 * period_l, nx, 3)?,
            y: Grid1D::with_min_nodes(-y_extent, y_extent, ny, 3)?,
            period_l,
        })
    }
}

/// Discretized field on the reduced strip, x-major rows.
///
/// Boundary conventions: the `x = 0` column lies on the fixed plane of the
/// reflection, `x = L/4` is a free (natural) column, and the `y = -Y`, `y = Y`
/// rows are pinned to the potential minima.
#[derive(Clone, Debug, PartialEq)]
pub struct Field2D {
    pub grid: Grid2D,
    pub m: usize,
    pub values: Vec<f64>,
}

impl Field2D {
    pub fn zeros(grid: Grid2D, m: usize) -> Self {
        let values = vec![0.0; grid.x.n * grid.y.n * m];
        Self { grid, m, values }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        (i * self.grid.y.n + j) * self.m
    }

    pub fn at(&self, i: usize, j: usize) -> &[f64] {
        let k = self.idx(i, j);
        &self.values[k..k + self.m]
    }

    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let k = self.idx(i, j);
        &mut self.values[k..k + self.m]
    }

    /// Extract the fiber u(x_i, .) as a path on the y grid.
    pub fn fiber(&self, i: usize) -> Path1D {
        let ny = self.grid.y.n;
        let m = self.m;
        let mut p = Path1D::zeros(self.grid.y.clone(), m);
        p.values
            .copy_from_slice(&self.values[i * ny * m..(i + 1) * ny * m]);
        p
    }

    pub fn max_norm(&self) -> f64 {
        let m = self.m;
        let mut sup = 0.0f64;
        for k in (0..self.values.len()).step_by(m) {
            let mut d2 = 0.0;
            for a in 0..m {
                d2 += self.values[k + a] * self.values[k + a];
            }
            sup = sup.max(d2);
        }
        sup.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_tiny_grids() {
        assert!(Grid1D::new(0.0, 1.0, 8).is_err());
    }

    #[test]
    fn from_nodes_checks_uniformity() {
        let good: Vec<f64> = (0..32).map(|i| 0.1 * i as f64).collect();
        assert!(Grid1D::from_nodes(&good).is_ok());
        let mut bad = good.clone();
        bad[20] += 1e-6;
        assert!(Grid1D::from_nodes(&bad).is_err());
    }

    #[test]
    fn trapezoid_weights_sum_to_extent() {
        let g = Grid1D::new(-3.0, 5.0, 33).unwrap();
        let total: f64 = (0..g.n).map(|i| g.weight(i)).sum();
        assert!((total - 8.0).abs() < 1e-12);
    }

    #[test]
    fn constant_path_norms() {
        let g = Grid1D::new(0.0, 2.0, 21).unwrap();
        let p = Path1D::from_fn(g, 2, |_, s| {
            s[0] = 3.0;
            s[1] = 4.0;
        });
        // |(3,4)| = 5 over an interval of length 2: L2 norm = 5*sqrt(2)
        assert!((p.l2_norm() - 5.0 * 2.0f64.sqrt()).abs() < 1e-12);
        assert!(p.deriv_sq_norm().abs() < 1e-24);
    }
}
