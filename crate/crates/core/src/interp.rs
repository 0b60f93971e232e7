//! C1 cubic Hermite interpolation of discretized paths, with exponential
//! extension beyond the grid. Used to evaluate translates of connection
//! profiles at off-grid points (Newton shift solves need a smooth dependence).

use crate::grid::Path1D;

/// Exponential tail model `a + z_edge * exp(-k * dist)` past one end of the grid.
#[derive(Clone, Debug)]
pub struct TailModel {
    pub limit: Vec<f64>,
    pub rate: f64,
}

#[derive(Clone, Debug)]
pub struct CubicInterp {
    lo: f64,
    h: f64,
    n: usize,
    m: usize,
    values: Vec<f64>,
    /// Nodal slopes, centered differences (one-sided at the ends).
    slopes: Vec<f64>,
    tail_minus: TailModel,
    tail_plus: TailModel,
}

impl CubicInterp {
    pub fn new(path: &Path1D, tail_minus: TailModel, tail_plus: TailModel) -> Self {
        let d = path.nodal_derivative();
        Self {
            lo: path.grid.lo,
            h: path.grid.h,
            n: path.grid.n,
            m: path.m,
            values: path.values.clone(),
            slopes: d.values,
            tail_minus,
            tail_plus,
        }
    }

    /// Interpolant with constant extension by the path's end values.
    pub fn with_flat_tails(path: &Path1D) -> Self {
        let m = path.m;
        let n = path.grid.n;
        let tail_minus = TailModel {
            limit: path.values[0..m].to_vec(),
            rate: 1.0,
        };
        let tail_plus = TailModel {
            limit: path.values[(n - 1) * m..n * m].to_vec(),
            rate: 1.0,
        };
        Self::new(path, tail_minus, tail_plus)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Evaluate at `y` into `out`.
    pub fn eval(&self, y: f64, out: &mut [f64]) {
        self.eval_impl(y, out, false, &mut []);
    }

    /// Evaluate value and derivative at `y`.
    pub fn eval_with_deriv(&self, y: f64, out: &mut [f64], dout: &mut [f64]) {
        self.eval_impl(y, out, true, dout);
    }

    fn eval_impl(&self, y: f64, out: &mut [f64], want_deriv: bool, dout: &mut [f64]) {
        let m = self.m;
        let hi = self.lo + self.h * (self.n - 1) as f64;
        if y < self.lo {
            let dist = self.lo - y;
            let e = (-self.tail_minus.rate * dist).exp();
            for a in 0..m {
                let z = self.values[a] - self.tail_minus.limit[a];
                out[a] = self.tail_minus.limit[a] + z * e;
                if want_deriv {
                    dout[a] = self.tail_minus.rate * z * e;
                }
            }
            return;
        }
        if y > hi {
            let dist = y - hi;
            let e = (-self.tail_plus.rate * dist).exp();
            let base = (self.n - 1) * m;
            for a in 0..m {
                let z = self.values[base + a] - self.tail_plus.limit[a];
                out[a] = self.tail_plus.limit[a] + z * e;
                if want_deriv {
                    dout[a] = -self.tail_plus.rate * z * e;
                }
            }
            return;
        }
        let s = (y - self.lo) / self.h;
        let mut i = s.floor() as usize;
        if i >= self.n - 1 {
            i = self.n - 2;
        }
        let t = s - i as f64;
        let (h00, h10, h01, h11) = (
            (2.0 * t - 3.0) * t * t + 1.0,
            ((t - 2.0) * t + 1.0) * t,
            (3.0 - 2.0 * t) * t * t,
            (t - 1.0) * t * t,
        );
        let (g00, g10, g01, g11) = (
            6.0 * t * (t - 1.0),
            (3.0 * t - 4.0) * t + 1.0,
            6.0 * t * (1.0 - t),
            (3.0 * t - 2.0) * t,
        );
        let b0 = i * m;
        let b1 = (i + 1) * m;
        for a in 0..m {
            let (p0, p1) = (self.values[b0 + a], self.values[b1 + a]);
            let (s0, s1) = (self.slopes[b0 + a], self.slopes[b1 + a]);
            out[a] = h00 * p0 + h01 * p1 + self.h * (h10 * s0 + h11 * s1);
            if want_deriv {
                dout[a] = (g00 * p0 + g01 * p1) / self.h + g10 * s0 + g11 * s1;
            }
        }
    }

    /// Sample the translate `y -> self(y - shift)` on the grid of `template`.
    pub fn translate_onto(&self, template: &Path1D, shift: f64) -> Path1D {
        let mut p = Path1D::zeros(template.grid.clone(), self.m);
        for i in 0..template.grid.n {
            let y = template.grid.node(i);
            let k = i * self.m;
            self.eval(y - shift, &mut p.values[k..k + self.m]);
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid1D;

    #[test]
    fn reproduces_nodes_exactly() {
        let g = Grid1D::new(-2.0, 2.0, 41).unwrap();
        let p = Path1D::from_fn(g.clone(), 1, |y, s| s[0] = (1.3 * y).sin());
        let c = CubicInterp::with_flat_tails(&p);
        let mut out = [0.0];
        for i in 0..g.n {
            c.eval(g.node(i), &mut out);
            assert!((out[0] - p.values[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn fourth_order_between_nodes() {
        let g = Grid1D::new(-2.0, 2.0, 81).unwrap();
        let p = Path1D::from_fn(g, 1, |y, s| s[0] = (1.3 * y).sin());
        let c = CubicInterp::with_flat_tails(&p);
        let mut out = [0.0];
        let mut dout = [0.0];
        let mut emax = 0.0f64;
        let mut dmax = 0.0f64;
        for k in 0..200 {
            let y = -1.9 + 3.8 * (k as f64 + 0.31) / 200.0;
            c.eval_with_deriv(y, &mut out, &mut dout);
            emax = emax.max((out[0] - (1.3 * y).sin()).abs());
            dmax = dmax.max((dout[0] - 1.3 * (1.3 * y).cos()).abs());
        }
        assert!(emax < 2e-5, "value error {emax}");
        assert!(dmax < 2e-3, "derivative error {dmax}");
    }

    #[test]
    fn exponential_tail_extension() {
        let g = Grid1D::new(0.0, 1.0, 21).unwrap();
        let p = Path1D::from_fn(g, 1, |y, s| s[0] = 1.0 + y);
        let c = CubicInterp::new(
            &p,
            TailModel { limit: vec![1.0], rate: 2.0 },
            TailModel { limit: vec![1.0], rate: 2.0 },
        );
        let mut out = [0.0];
        c.eval(2.0, &mut out);
        // edge value 2, limit 1, dist 1: 1 + 1*exp(-2)
        assert!((out[0] - (1.0 + (-2.0f64).exp())).abs() < 1e-14);
    }
}
