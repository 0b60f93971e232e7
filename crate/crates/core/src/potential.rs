//! The potential family W, its symmetry data, and derived constants.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// Relative margin applied to curvature bounds so the two-sided quadratic
/// estimates hold on a neighborhood, not just at the minima.
pub const CURVATURE_MARGIN: f64 = 0.05;

pub type PointFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
pub type HessFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// User-supplied potential with optional derivative oracles.
#[derive(Clone)]
pub struct CustomPotential {
    pub w: PointFn,
    pub grad: Option<GradFn>,
    pub hess: Option<HessFn>,
}

impl fmt::Debug for CustomPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomPotential")
            .field("grad", &self.grad.is_some())
            .field("hess", &self.hess.is_some())
            .finish()
    }
}

#[derive(Clone, Debug)]
pub enum PotentialKind {
    /// W(u) = 1/4 (1 - u^2)^2 on the line; minima at +-1, reflection u -> -u.
    ScalarQuartic,
    /// Planar two-channel family
    /// W(u1,u2) = (u2^2-1)^2 + kappa (u1^2 - delta(1-u2^2))^2 + lambda u1^2 u2^2,
    /// minima a+- = (0, +-1), reflection (u1,u2) -> (-u1,u2).
    TwoChannel { kappa: f64, delta: f64, lambda: f64 },
    Custom(CustomPotential),
}

/// Serializable description {kind, params, m}; the Custom kind is not serializable.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    ScalarQuartic,
    TwoChannel {
        #[serde(default = "default_kappa")]
        kappa: f64,
        #[serde(default = "default_delta")]
        delta: f64,
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
}

fn default_kappa() -> f64 {
    1.0
}
fn default_delta() -> f64 {
    0.5
}
fn default_lambda() -> f64 {
    0.1
}

#[derive(Clone, Debug)]
pub struct Potential {
    pub m: usize,
    pub kind: PotentialKind,
    pub a_minus: Vec<f64>,
    pub a_plus: Vec<f64>,
    /// Orthogonal involution (m x m, row-major) leaving W invariant.
    pub gamma: Vec<f64>,
    /// Involution exchanging the minima (gamma itself for ScalarQuartic,
    /// the second reflection (u1,u2) -> (u1,-u2) for TwoChannel). Needed by
    /// the periodic-orbit reduction, where the turning symmetry swaps a-+.
    pub minima_swap: Option<Vec<f64>>,
}

impl Potential {
    pub fn scalar_quartic() -> Self {
        Self {
            m: 1,
            kind: PotentialKind::ScalarQuartic,
            a_minus: vec![-1.0],
            a_plus: vec![1.0],
            gamma: vec![-1.0],
            minima_swap: Some(vec![-1.0]),
        }
    }

    pub fn two_channel(kappa: f64, delta: f64, lambda: f64) -> Self {
        Self {
            m: 2,
            kind: PotentialKind::TwoChannel { kappa, delta, lambda },
            a_minus: vec![0.0, -1.0],
            a_plus: vec![0.0, 1.0],
            gamma: vec![-1.0, 0.0, 0.0, 1.0],
            minima_swap: Some(vec![1.0, 0.0, 0.0, -1.0]),
        }
    }

    /// TwoChannel with the frozen defaults kappa=1, delta=0.5, lambda=0.1.
    pub fn two_channel_default() -> Self {
        Self::two_channel(default_kappa(), default_delta(), default_lambda())
    }

    pub fn custom(
        m: usize,
        a_minus: Vec<f64>,
        a_plus: Vec<f64>,
        gamma: Vec<f64>,
        minima_swap: Option<Vec<f64>>,
        custom: CustomPotential,
    ) -> Result<Self> {
        if a_minus.len() != m || a_plus.len() != m || gamma.len() != m * m {
            return Err(Error::Config("custom potential dimension mismatch".into()));
        }
        let p = Self {
            m,
            kind: PotentialKind::Custom(custom),
            a_minus,
            a_plus,
            gamma,
            minima_swap,
        };
        p.check_involution(&p.gamma)?;
        Ok(p)
    }

    pub fn from_spec(spec: &PotentialSpec) -> Self {
        match spec {
            PotentialSpec::ScalarQuartic => Self::scalar_quartic(),
            PotentialSpec::TwoChannel { kappa, delta, lambda } => {
                Self::two_channel(*kappa, *delta, *lambda)
            }
        }
    }

    pub fn spec(&self) -> Result<PotentialSpec> {
        match &self.kind {
            PotentialKind::ScalarQuartic => Ok(PotentialSpec::ScalarQuartic),
            PotentialKind::TwoChannel { kappa, delta, lambda } => Ok(PotentialSpec::TwoChannel {
                kappa: *kappa,
                delta: *delta,
                lambda: *lambda,
            }),
            PotentialKind::Custom(_) => Err(Error::Config(
                "custom potentials are not serializable".into(),
            )),
        }
    }

    fn check_involution(&self, g: &[f64]) -> Result<()> {
        let m = self.m;
        for i in 0..m {
            for j in 0..m {
                let mut s = 0.0;
                for k in 0..m {
                    s += g[i * m + k] * g[k * m + j];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                if (s - expect).abs() > 1e-14 {
                    return Err(Error::Config("gamma is not an involution".into()));
                }
            }
        }
        Ok(())
    }

    /// W(u).
    pub fn eval_w(&self, u: &[f64]) -> f64 {
        match &self.kind {
            PotentialKind::ScalarQuartic => {
                let s = 1.0 - u[0] * u[0];
                0.25 * s * s
            }
            PotentialKind::TwoChannel { kappa, delta, lambda } => {
                let (u1, u2) = (u[0], u[1]);
                let w2 = u2 * u2 - 1.0;
                let ch = u1 * u1 - delta * (1.0 - u2 * u2);
                w2 * w2 + kappa * ch * ch + lambda * u1 * u1 * u2 * u2
            }
            PotentialKind::Custom(c) => (c.w)(u),
        }
    }

    /// Gradient of W into `out`.
    pub fn grad_w(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
        match &self.kind {
            PotentialKind::ScalarQuartic => {
                out[0] = u[0] * (u[0] * u[0] - 1.0);
                Ok(())
            }
            PotentialKind::TwoChannel { kappa, delta, lambda } => {
                let (u1, u2) = (u[0], u[1]);
                let ch = u1 * u1 - delta * (1.0 - u2 * u2);
                out[0] = 4.0 * kappa * u1 * ch + 2.0 * lambda * u1 * u2 * u2;
                out[1] = 4.0 * u2 * (u2 * u2 - 1.0)
                    + 4.0 * kappa * delta * u2 * ch
                    + 2.0 * lambda * u1 * u1 * u2;
                Ok(())
            }
            PotentialKind::Custom(c) => match &c.grad {
                Some(g) => {
                    g(u, out);
                    Ok(())
                }
                None => Err(Error::Config(
                    "custom potential lacks a gradient oracle".into(),
                )),
            },
        }
    }

    /// Hessian of W into `out` (m x m row-major).
    pub fn hess_w(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
        match &self.kind {
            PotentialKind::ScalarQuartic => {
                out[0] = 3.0 * u[0] * u[0] - 1.0;
                Ok(())
            }
            PotentialKind::TwoChannel { kappa, delta, lambda } => {
                let (u1, u2) = (u[0], u[1]);
                let ch = u1 * u1 - delta * (1.0 - u2 * u2);
                out[0] = 4.0 * kappa * ch + 8.0 * kappa * u1 * u1 + 2.0 * lambda * u2 * u2;
                let cross = 8.0 * kappa * delta * u1 * u2 + 4.0 * lambda * u1 * u2;
                out[1] = cross;
                out[2] = cross;
                out[3] = 12.0 * u2 * u2 - 4.0
                    + 4.0 * kappa * delta * ch
                    + 8.0 * kappa * delta * delta * u2 * u2
                    + 2.0 * lambda * u1 * u1;
                Ok(())
            }
            PotentialKind::Custom(c) => match &c.hess {
                Some(h) => {
                    h(u, out);
                    Ok(())
                }
                None => Err(Error::Config(
                    "custom potential lacks a Hessian oracle".into(),
                )),
            },
        }
    }

    /// Apply gamma to a point.
    pub fn apply_gamma(&self, u: &[f64], out: &mut [f64]) {
        apply_matrix(&self.gamma, self.m, u, out);
    }

    /// Projection of `u` onto the +1 eigenspace of `g`: (u + g u)/2.
    pub fn project_fixed_plane(g: &[f64], m: usize, u: &[f64], out: &mut [f64]) {
        let mut gu = vec![0.0; m];
        apply_matrix(g, m, u, &mut gu);
        for a in 0..m {
            out[a] = 0.5 * (u[a] + gu[a]);
        }
    }

    /// Norm of the component of `u` in the -1 eigenspace of `g`.
    pub fn antisym_norm(g: &[f64], m: usize, u: &[f64]) -> f64 {
        let mut gu = vec![0.0; m];
        apply_matrix(g, m, u, &mut gu);
        let mut s = 0.0;
        for a in 0..m {
            let d = 0.5 * (u[a] - gu[a]);
            s += d * d;
        }
        s.sqrt()
    }

    /// The reflection exchanging a- and a+, required by the periodic-orbit
    /// reduction. Errors if the family does not carry one.
    pub fn minima_swap(&self) -> Result<&[f64]> {
        self.minima_swap.as_deref().ok_or_else(|| {
            Error::Config("potential has no reflection exchanging the minima".into())
        })
    }

    pub fn minima_radius(&self) -> f64 {
        let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        n(&self.a_minus).max(n(&self.a_plus))
    }
}

fn apply_matrix(g: &[f64], m: usize, u: &[f64], out: &mut [f64]) {
    for i in 0..m {
        let mut s = 0.0;
        for j in 0..m {
            s += g[i * m + j] * u[j];
        }
        out[i] = s;
    }
}

/// Orthonormal basis of the +1 eigenspace (fixed plane) of a reflection.
/// Diagonal reflections get exact coordinate vectors.
pub fn fixed_plane_basis(g: &[f64], m: usize) -> Vec<Vec<f64>> {
    let diagonal = (0..m * m).all(|k| k / m == k % m || g[k] == 0.0);
    if diagonal {
        let mut cols = Vec::new();
        for a in 0..m {
            if g[a * m + a] > 0.0 {
                let mut e = vec![0.0; m];
                e[a] = 1.0;
                cols.push(e);
            }
        }
        return cols;
    }
    let mat = DMatrix::from_row_slice(m, m, g);
    let eig = mat.symmetric_eigen();
    let mut cols = Vec::new();
    for k in 0..m {
        if eig.eigenvalues[k] > 0.0 {
            cols.push(eig.eigenvectors.column(k).iter().copied().collect());
        }
    }
    cols
}

/// Constants of the two-sided quadratic bound near the minima:
/// 1/2 gamma_lo^2 |z|^2 <= W(a +- + z) <= 1/2 Gamma_hi^2 |z|^2 for |z| <= r0.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NondegeneracyConstants {
    pub r0: f64,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
}

/// Unit directions used for sphere sampling: golden-angle sequence on the
/// circle for m = 2, Fibonacci sphere for m = 3, seeded Gaussian directions
/// above that. For m = 1 the sphere is just two points.
pub fn sphere_directions(m: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    match m {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => {
            let golden = 0.5 * (1.0 + 5.0f64.sqrt());
            (0..count)
                .map(|k| {
                    let t = 2.0 * std::f64::consts::PI * ((k as f64 / golden) % 1.0);
                    vec![t.cos(), t.sin()]
                })
                .collect()
        }
        3 => {
            let golden = 0.5 * (1.0 + 5.0f64.sqrt());
            (0..count)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let t = 2.0 * std::f64::consts::PI * ((k as f64 / golden) % 1.0);
                    vec![r * t.cos(), r * t.sin(), z]
                })
                .collect()
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count)
                .map(|_| {
                    let mut v: Vec<f64> = (0..m)
                        .map(|_| {
                            let (a, b): (f64, f64) = (rng.gen(), rng.gen());
                            (-2.0 * a.ln()).sqrt() * (2.0 * std::f64::consts::PI * b).cos()
                        })
                        .collect();
                    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    v.iter_mut().for_each(|x| *x /= n);
                    v
                })
                .collect()
        }
    }
}

/// Smallest/largest Hessian eigenvalue at a point.
fn hessian_eig_range(p: &Potential, u: &[f64]) -> Result<(f64, f64)> {
    let m = p.m;
    let mut h = vec![0.0; m * m];
    p.hess_w(u, &mut h)?;
    let mat = DMatrix::from_row_slice(m, m, &h);
    let sym = mat.symmetric_eigen();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &e in sym.eigenvalues.iter() {
        lo = lo.min(e);
        hi = hi.max(e);
    }
    Ok((lo, hi))
}

/// Curvature constants near the minima. gamma_lo carries the 5% safety
/// margin; r0 is found by halving from an initial radius until the sampled
/// two-sided bound holds on spheres of radius r0, r0/2 and r0/4.
pub fn nondegeneracy_constants(p: &Potential) -> Result<NondegeneracyConstants> {
    let mut lam_min = f64::INFINITY;
    let mut lam_max: f64 = 0.0;
    for a in [&p.a_minus, &p.a_plus] {
        let (lo, hi) = hessian_eig_range(p, a)?;
        if lo <= 0.0 {
            return Err(Error::Degenerate(format!(
                "smallest Hessian eigenvalue at a minimum is {lo:.3e}"
            )));
        }
        lam_min = lam_min.min(lo);
        lam_max = lam_max.max(hi);
    }
    let gamma_lo = lam_min.sqrt() * (1.0 - CURVATURE_MARGIN);
    let gamma_hi = lam_max.sqrt() * (1.0 + CURVATURE_MARGIN);
    let dirs = sphere_directions(p.m, 200, 7);
    let bound_holds = |r: f64| -> bool {
        for a in [&p.a_minus, &p.a_plus] {
            for d in &dirs {
                let u: Vec<f64> = a.iter().zip(d).map(|(ai, di)| ai + r * di).collect();
                let w = p.eval_w(&u);
                let lo = 0.5 * gamma_lo * gamma_lo * r * r;
                let hi = 0.5 * gamma_hi * gamma_hi * r * r;
                if w < lo || w > hi {
                    return false;
                }
            }
        }
        true
    };
    let mut r0 = 0.5_f64.min(0.25 * dist(&p.a_minus, &p.a_plus));
    for _ in 0..60 {
        if [1.0, 0.5, 0.25].iter().all(|s| bound_holds(s * r0)) {
            return Ok(NondegeneracyConstants { r0, gamma_lo, gamma_hi });
        }
        r0 *= 0.5;
    }
    Err(Error::Degenerate(
        "no radius satisfies the two-sided quadratic bound".into(),
    ))
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Tabulated radial lower bound sigma(r) = min over the sphere |z| = r of sqrt(W(z)).
#[derive(Clone, Debug)]
pub struct SigmaTable {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
}

impl SigmaTable {
    pub fn eval(&self, r: f64) -> f64 {
        let rs = &self.radii;
        if r <= rs[0] {
            return self.values[0];
        }
        if r >= *rs.last().unwrap() {
            return *self.values.last().unwrap();
        }
        let dr = rs[1] - rs[0];
        let k = (((r - rs[0]) / dr).floor() as usize).min(rs.len() - 2);
        let t = (r - rs[k]) / dr;
        self.values[k] * (1.0 - t) + self.values[k + 1] * t
    }
}

pub const SIGMA_RADII: usize = 64;
pub const SIGMA_SPHERE_SAMPLES: usize = 256;

/// Tabulate sigma on [0, r_max] and solve
/// C0 = sqrt(2) * integral_{2 max|a|}^{M} sigma(s) ds for M.
pub fn sigma_and_m(p: &Potential, c0: f64, r_max: f64) -> Result<(SigmaTable, f64)> {
    if c0 < 0.0 {
        return Err(Error::InvalidInput("C0 must be non-negative".into()));
    }
    let r_lo = 2.0 * p.minima_radius();
    if r_max <= r_lo {
        return Err(Error::InvalidInput(format!(
            "r_max = {r_max} must exceed 2 max(|a+|,|a-|) = {r_lo}"
        )));
    }
    let dirs = sphere_directions(p.m, SIGMA_SPHERE_SAMPLES, 11);
    let radii: Vec<f64> = (0..SIGMA_RADII)
        .map(|k| r_max * k as f64 / (SIGMA_RADII - 1) as f64)
        .collect();
    let values: Vec<f64> = radii
        .iter()
        .map(|&r| {
            dirs.iter()
                .map(|d| {
                    let u: Vec<f64> = d.iter().map(|di| r * di).collect();
                    p.eval_w(&u).max(0.0).sqrt()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let table = SigmaTable { radii, values };
    if c0 == 0.0 {
        return Ok((table, r_lo));
    }
    // Integrate sqrt(2) sigma from r_lo on a fine grid; bisect for M.
    let n = 4096;
    let dr = (r_max - r_lo) / n as f64;
    let mut acc = vec![0.0; n + 1];
    for k in 0..n {
        let a = r_lo + k as f64 * dr;
        let b = a + dr;
        acc[k + 1] =
            acc[k] + std::f64::consts::SQRT_2 * 0.5 * (table.eval(a) + table.eval(b)) * dr;
    }
    if acc[n] < c0 {
        return Err(Error::RMaxTooSmall {
            reached: acc[n],
            required: c0,
            r_max,
        });
    }
    let k = acc.partition_point(|&v| v < c0);
    let (a0, a1) = (acc[k - 1], acc[k]);
    let t = if a1 > a0 { (c0 - a0) / (a1 - a0) } else { 0.0 };
    let m_ball = r_lo + (k - 1) as f64 * dr + t * dr;
    Ok((table, m_ball))
}

/// Report from the growth-hypothesis check: W(su) >= W(u) for |u| = M, s >= 1.
#[derive(Clone, Debug, Serialize)]
pub struct H1Report {
    pub pass: bool,
    pub worst_ratio: f64,
    pub min_w_outside: f64,
    pub witness: Option<Vec<f64>>,
}

pub fn check_h1(p: &Potential, m_probe: f64) -> H1Report {
    let dirs = sphere_directions(p.m, 256, 13);
    let mut pass = true;
    let mut worst = f64::INFINITY;
    let mut witness = None;
    let mut min_outside = f64::INFINITY;
    for d in &dirs {
        let u: Vec<f64> = d.iter().map(|di| m_probe * di).collect();
        let w_u = p.eval_w(&u);
        for k in 0..=48 {
            let s = 1.0 + 3.0 * k as f64 / 48.0;
            let su: Vec<f64> = u.iter().map(|ui| s * ui).collect();
            let w_su = p.eval_w(&su);
            let ratio = if w_u > 0.0 { w_su / w_u } else { 1.0 };
            if ratio < worst {
                worst = ratio;
                if ratio < 1.0 - 1e-12 {
                    witness = Some(su.clone());
                }
            }
            if w_su < min_outside {
                min_outside = w_su;
            }
        }
    }
    if worst < 1.0 - 1e-12 {
        pass = false;
    }
    H1Report {
        pass,
        worst_ratio: worst,
        min_w_outside: min_outside,
        witness,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn fd_grad(p: &Potential, u: &[f64]) -> Vec<f64> {
        let m = p.m;
        let eps = 1e-6;
        (0..m)
            .map(|a| {
                let mut up = u.to_vec();
                let mut um = u.to_vec();
                up[a] += eps;
                um[a] -= eps;
                (p.eval_w(&up) - p.eval_w(&um)) / (2.0 * eps)
            })
            .collect()
    }

    #[test]
    fn scalar_quartic_values() {
        let p = Potential::scalar_quartic();
        assert_relative_eq!(p.eval_w(&[0.0]), 0.25);
        assert_eq!(p.eval_w(&[1.0]), 0.0);
        assert_eq!(p.eval_w(&[-1.0]), 0.0);
        let mut g = [0.0];
        p.grad_w(&[1.0], &mut g).unwrap();
        assert_eq!(g[0], 0.0);
        let mut h = [0.0];
        p.hess_w(&[1.0], &mut h).unwrap();
        assert_relative_eq!(h[0], 2.0);
    }

    #[test]
    fn two_channel_constructed_zero_and_hessian() {
        let p = Potential::two_channel(1.0, 0.5, 0.1);
        assert_eq!(p.eval_w(&[0.0, 1.0]), 0.0);
        assert_eq!(p.eval_w(&[0.0, -1.0]), 0.0);
        let mut h = [0.0; 4];
        p.hess_w(&[0.0, 1.0], &mut h).unwrap();
        // diag(2 lambda, 8 + 8 kappa delta^2), confirmed by central differences below
        assert_relative_eq!(h[0], 0.2, max_relative = 1e-12);
        assert_relative_eq!(h[3], 8.0 + 8.0 * 0.5 * 0.5, max_relative = 1e-12);
        assert_eq!(h[1], 0.0);
        let eps = 1e-4;
        let fd = (p.eval_w(&[0.0, 1.0 + eps]) - 2.0 * p.eval_w(&[0.0, 1.0])
            + p.eval_w(&[0.0, 1.0 - eps]))
            / (eps * eps);
        assert_relative_eq!(h[3], fd, max_relative = 1e-6);
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for p in [Potential::scalar_quartic(), Potential::two_channel_default()] {
            for _ in 0..100 {
                let u: Vec<f64> = (0..p.m).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let mut g = vec![0.0; p.m];
                p.grad_w(&u, &mut g).unwrap();
                let fd = fd_grad(&p, &u);
                for a in 0..p.m {
                    let scale = 1.0 + g[a].abs();
                    assert!((g[a] - fd[a]).abs() / scale < 1e-6, "{:?} {:?}", g, fd);
                }
            }
        }
    }

    #[test]
    fn gamma_symmetry_sampled() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for p in [Potential::scalar_quartic(), Potential::two_channel_default()] {
            for _ in 0..200 {
                let u: Vec<f64> = (0..p.m).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let mut gu = vec![0.0; p.m];
                p.apply_gamma(&u, &mut gu);
                let (w, wg) = (p.eval_w(&u), p.eval_w(&gu));
                assert!((w - wg).abs() <= 1e-12 * (1.0 + w.abs()));
            }
            // the swap reflection is also a symmetry and exchanges the minima
            let swap = p.minima_swap().unwrap().to_vec();
            let mut sm = vec![0.0; p.m];
            apply_matrix(&swap, p.m, &p.a_minus, &mut sm);
            assert_eq!(sm, p.a_plus);
        }
    }

    #[test]
    fn involution_exact() {
        for p in [Potential::scalar_quartic(), Potential::two_channel_default()] {
            p.check_involution(&p.gamma).unwrap();
        }
    }

    #[test]
    fn nondegeneracy_scalar_and_two_channel() {
        let p = Potential::scalar_quartic();
        let c = nondegeneracy_constants(&p).unwrap();
        assert_relative_eq!(c.gamma_lo, 2.0f64.sqrt() * 0.95, max_relative = 1e-12);
        assert!(c.r0 > 0.01);

        let p2 = Potential::two_channel_default();
        let c2 = nondegeneracy_constants(&p2).unwrap();
        assert_relative_eq!(c2.gamma_lo, 0.2f64.sqrt() * 0.95, max_relative = 1e-12);
        assert!(c2.gamma_hi >= 10.0f64.sqrt());

        // two-sided bound on sphere samples at r0, r0/2, r0/4
        for p in [&p, &p2] {
            let c = nondegeneracy_constants(p).unwrap();
            let dirs = sphere_directions(p.m, 1000, 3);
            for scale in [1.0, 0.5, 0.25] {
                let r = scale * c.r0;
                for a in [&p.a_minus, &p.a_plus] {
                    for d in &dirs {
                        let u: Vec<f64> = a.iter().zip(d).map(|(ai, di)| ai + r * di).collect();
                        let w = p.eval_w(&u);
                        assert!(w >= 0.5 * c.gamma_lo * c.gamma_lo * r * r - 1e-15);
                        assert!(w <= 0.5 * c.gamma_hi * c.gamma_hi * r * r + 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn degenerate_saddle_rejected() {
        // W with a saddle at a+: negative curvature in u1.
        let w: PointFn = Arc::new(|u: &[f64]| {
            let s = u[1] * u[1] - 1.0;
            s * s - 0.5 * u[0] * u[0] + 0.25 * u[0] * u[0] * u[0] * u[0]
        });
        let hess: HessFn = Arc::new(|u: &[f64], out: &mut [f64]| {
            out[0] = -1.0 + 3.0 * u[0] * u[0];
            out[1] = 0.0;
            out[2] = 0.0;
            out[3] = 12.0 * u[1] * u[1] - 4.0;
        });
        let p = Potential::custom(
            2,
            vec![0.0, -1.0],
            vec![0.0, 1.0],
            vec![-1.0, 0.0, 0.0, 1.0],
            None,
            CustomPotential { w, grad: None, hess: Some(hess) },
        )
        .unwrap();
        assert!(matches!(
            nondegeneracy_constants(&p),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn sigma_closed_form_scalar() {
        // sigma(r) = (r^2-1)/2 for r > 1; M solves
        // C0 = sqrt(2)/2 (M^3/3 - M - 2/3), i.e. M^3 - 3M - 2 - 3 sqrt(2) C0 = 0.
        let p = Potential::scalar_quartic();
        let c0 = 1.0;
        let (table, m_ball) = sigma_and_m(&p, c0, 4.0).unwrap();
        for r in [1.5, 2.0, 3.0] {
            assert_relative_eq!(table.eval(r), (r * r - 1.0) / 2.0, max_relative = 2e-3);
        }
        let mut lo = 2.0f64;
        let mut hi = 4.0f64;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            let f = mid.powi(3) - 3.0 * mid - 2.0 - 3.0 * 2.0f64.sqrt() * c0;
            if f < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert_relative_eq!(m_ball, 0.5 * (lo + hi), max_relative = 5e-3);
    }

    #[test]
    fn sigma_edge_cases() {
        let p = Potential::scalar_quartic();
        let (_, m_ball) = sigma_and_m(&p, 0.0, 4.0).unwrap();
        assert_eq!(m_ball, 2.0);
        // flat-at-infinity custom potential: sqrt(W) bounded, integral saturates
        let w: PointFn = Arc::new(|u: &[f64]| {
            let s = 1.0 - u[0] * u[0];
            (0.25 * s * s).min(0.01)
        });
        let flat = Potential::custom(
            1,
            vec![-1.0],
            vec![1.0],
            vec![-1.0],
            Some(vec![-1.0]),
            CustomPotential { w, grad: None, hess: None },
        )
        .unwrap();
        assert!(matches!(
            sigma_and_m(&flat, 100.0, 50.0),
            Err(Error::RMaxTooSmall { .. })
        ));
    }

    #[test]
    fn h1_checks() {
        assert!(check_h1(&Potential::scalar_quartic(), 2.0).pass);
        assert!(check_h1(&Potential::two_channel_default(), 3.0).pass);
        // decreasing along a ray: a potential with a dip outside the probe sphere
        let w: PointFn = Arc::new(|u: &[f64]| {
            let s = 1.0 - u[0] * u[0];
            let d = u[0].abs() - 3.0;
            0.25 * s * s * (-d * d).exp() + 0.001 * (u[0] * u[0])
        });
        let dip = Potential::custom(
            1,
            vec![-1.0],
            vec![1.0],
            vec![-1.0],
            None,
            CustomPotential { w, grad: None, hess: None },
        )
        .unwrap();
        assert!(!check_h1(&dip, 2.0).pass);
    }
}
