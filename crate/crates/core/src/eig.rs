//! Symmetric banded eigenvalue machinery: LDL^T factorization with inertia
//! count, bisection for the lowest eigenvalues, inverse iteration for
//! eigenvectors, and banded linear solves (also used by the 1D Newton steps).

use crate::error::{Error, Result};

/// Symmetric banded matrix, lower storage: `band(d)[i] = A[i+d][i]`,
/// `d = 0..=bw`.
#[derive(Clone, Debug)]
pub struct SymBanded {
    pub n: usize,
    pub bw: usize,
    bands: Vec<f64>,
}

impl SymBanded {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            bands: vec![0.0; (bw + 1) * n],
        }
    }

    #[inline]
    pub fn get(&self, d: usize, i: usize) -> f64 {
        self.bands[d * self.n + i]
    }

    #[inline]
    pub fn set(&mut self, d: usize, i: usize, v: f64) {
        self.bands[d * self.n + i] = v;
    }

    #[inline]
    pub fn add(&mut self, d: usize, i: usize, v: f64) {
        self.bands[d * self.n + i] += v;
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            out[i] += self.get(0, i) * x[i];
            for d in 1..=self.bw {
                if i + d < n {
                    let a = self.get(d, i);
                    out[i + d] += a * x[i];
                    out[i] += a * x[i + d];
                }
            }
        }
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.n;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut radius = 0.0;
            for d in 1..=self.bw {
                if i + d < n {
                    radius += self.get(d, i).abs();
                }
                if i >= d {
                    radius += self.get(d, i - d).abs();
                }
            }
            let a = self.get(0, i);
            lo = lo.min(a - radius);
            hi = hi.max(a + radius);
        }
        (lo, hi)
    }

    /// LDL^T of `A - shift I`. Returns the factor and the count of negative
    /// pivots (= number of eigenvalues below `shift`). Zero pivots are
    /// perturbed, which is harmless for inertia-based bisection.
    pub fn ldlt(&self, shift: f64) -> (BandedLdlt, usize) {
        let n = self.n;
        let bw = self.bw;
        let mut l = vec![0.0; bw * n]; // l[(d-1)*n + j] = L[j+d][j]
        let mut diag = vec![0.0; n];
        let scale = {
            let mut s = 0.0f64;
            for i in 0..n {
                s = s.max(self.get(0, i).abs() + shift.abs());
            }
            s.max(1.0)
        };
        let tiny = 1e-300_f64.max(scale * 1e-18);
        let mut negatives = 0;
        for j in 0..n {
            let start = j.saturating_sub(bw);
            let mut dj = self.get(0, j) - shift;
            for k in start..j {
                let ljk = l[(j - k - 1) * n + k];
                dj -= ljk * ljk * diag[k];
            }
            if dj < 0.0 {
                negatives += 1;
            }
            if dj.abs() < tiny {
                dj = if dj < 0.0 { -tiny } else { tiny };
            }
            diag[j] = dj;
            let imax = (j + bw).min(n - 1);
            for i in j + 1..=imax {
                let mut a = if i - j <= bw { self.get(i - j, j) } else { 0.0 };
                let kstart = i.saturating_sub(bw);
                for k in kstart.max(start)..j {
                    a -= l[(i - k - 1) * n + k] * l[(j - k - 1) * n + k] * diag[k];
                }
                l[(i - j - 1) * n + j] = a / dj;
            }
        }
        (
            BandedLdlt {
                n,
                bw,
                l,
                diag,
            },
            negatives,
        )
    }

    pub fn eigs_below(&self, shift: f64) -> usize {
        self.ldlt(shift).1
    }

    /// The `k` lowest eigenvalues, ascending, by inertia bisection.
    pub fn lowest_eigenvalues(&self, k: usize, tol: f64) -> Result<Vec<f64>> {
        if k == 0 || k > self.n {
            return Err(Error::Eigensolver(format!(
                "requested {k} eigenvalues of an order-{} matrix",
                self.n
            )));
        }
        let (glo, ghi) = self.gershgorin();
        let span = (ghi - glo).max(1.0);
        let mut out = Vec::with_capacity(k);
        for j in 1..=k {
            let mut lo = glo - 1e-8 * span;
            let mut hi = ghi + 1e-8 * span;
            for _ in 0..200 {
                if hi - lo <= tol * (1.0 + lo.abs().max(hi.abs())) {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                if self.eigs_below(mid) >= j {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            out.push(0.5 * (lo + hi));
        }
        Ok(out)
    }

    /// Eigenvector for an isolated eigenvalue by shifted inverse iteration.
    pub fn eigenvector(&self, lambda: f64, seed: u64) -> Result<Vec<f64>> {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let (glo, ghi) = self.gershgorin();
        let shift = lambda + 1e-10 * (ghi - glo).max(1.0);
        let (fac, _) = self.ldlt(shift);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x: Vec<f64> = (0..self.n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        normalize(&mut x);
        let mut y = vec![0.0; self.n];
        for _ in 0..8 {
            y.copy_from_slice(&x);
            fac.solve_in_place(&mut y);
            let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !norm.is_finite() || norm == 0.0 {
                return Err(Error::Eigensolver("inverse iteration diverged".into()));
            }
            for i in 0..self.n {
                x[i] = y[i] / norm;
            }
        }
        Ok(x)
    }
}

fn normalize(x: &mut [f64]) {
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
}

/// Factored form of `A - shift I`.
pub struct BandedLdlt {
    n: usize,
    bw: usize,
    l: Vec<f64>,
    diag: Vec<f64>,
}

impl BandedLdlt {
    /// Solve (L D L^T) x = b in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let bw = self.bw;
        for j in 0..n {
            let bj = b[j];
            let imax = (j + bw).min(n - 1);
            for i in j + 1..=imax {
                b[i] -= self.l[(i - j - 1) * n + j] * bj;
            }
        }
        for j in 0..n {
            b[j] /= self.diag[j];
        }
        for j in (0..n).rev() {
            let imax = (j + bw).min(n - 1);
            let mut s = b[j];
            for i in j + 1..=imax {
                s -= self.l[(i - j - 1) * n + j] * b[i];
            }
            b[j] = s;
        }
    }
}
