//! L-periodic-in-x solutions of Delta u = W_u(u) on the strip by energy
//! minimization over the symmetry-reduced quarter domain [0, L/4] x [-Y, Y]:
//! the x = 0 column lies on the fixed plane of the reflection, x = L/4 is a
//! free brake column, and the y rows are pinned to the minima with the
//! truncation chosen so the pinned tails are negligible.

use crate::error::{Error, Result};
use crate::fiber::{decompose, ConnectionPair, FiberDecomposition};
use crate::grid::{Field2D, Grid2D, Path1D};
use crate::interp::CubicInterp;
use crate::minimize::{minimize, MinimizeConfig, MinimizeResult, Objective};
use crate::potential::{fixed_plane_basis, nondegeneracy_constants, Potential};
use crate::profile1d::discrete_action;
use crate::sum::pairwise;
use serde::Serialize;

/// Reduced-domain discrete energy: midpoint differences for the derivative
/// terms, tensor trapezoid for the potential.
pub fn reduced_energy(p: &Potential, f: &Field2D) -> f64 {
    let (nx, ny, m) = (f.grid.x.n, f.grid.y.n, f.m);
    let (hx, hy) = (f.grid.x.h, f.grid.y.h);
    let wx = |i: usize| if i == 0 || i == nx - 1 { 0.5 * hx } else { hx };
    let wy = |j: usize| if j == 0 || j == ny - 1 { 0.5 * hy } else { hy };
    let mut cols = vec![0.0; 2 * nx - 1];
    for i in 0..nx {
        let mut s = 0.0;
        for j in 0..ny {
            let u = f.at(i, j);
            s += wx(i) * wy(j) * p.eval_w(u);
            if j + 1 < ny {
                let un = f.at(i, j + 1);
                let mut d2 = 0.0;
                for a in 0..m {
                    let d = (un[a] - u[a]) / hy;
                    d2 += d * d;
                }
                s += 0.5 * wx(i) * hy * d2;
            }
        }
        cols[i] = s;
    }
    for i in 0..nx - 1 {
        let mut s = 0.0;
        for j in 0..ny {
            let u = f.at(i, j);
            let ur = f.at(i + 1, j);
            let mut d2 = 0.0;
            for a in 0..m {
                let d = (ur[a] - u[a]) / hx;
                d2 += d * d;
            }
            s += 0.5 * hx * wy(j) * d2;
        }
        cols[nx + i] = s;
    }
    pairwise(&cols)
}

/// Energy of the full period: 4x the reduced value (the y tails are pinned,
/// so the analytic tail correction vanishes identically).
pub fn action_strip(p: &Potential, f: &Field2D) -> f64 {
    4.0 * reduced_energy(p, f)
}

/// Apply the reflection pointwise to a field.
pub fn reflect_field(p: &Potential, f: &Field2D) -> Field2D {
    let mut out = f.clone();
    let m = f.m;
    let mut gu = vec![0.0; m];
    for k in (0..f.values.len()).step_by(m) {
        p.apply_gamma(&f.values[k..k + m], &mut gu);
        out.values[k..k + m].copy_from_slice(&gu);
    }
    out
}

/// Unfold the reduced field to one full period [0, L] x [-Y, Y]
/// (last column duplicates the first for plotting convenience).
pub fn unfold_strip(p: &Potential, f: &Field2D) -> (Vec<f64>, usize) {
    let (nx, ny, m) = (f.grid.x.n, f.grid.y.n, f.m);
    let quarter = nx - 1;
    let nfull = 4 * quarter + 1;
    let mut out = vec![0.0; nfull * ny * m];
    let mut gu = vec![0.0; m];
    for i_full in 0..nfull {
        let k = i_full % (4 * quarter);
        let (reflect, half) = if k <= 2 * quarter {
            (false, k)
        } else {
            (true, 4 * quarter - k)
        };
        let i_red = if half <= quarter { half } else { 2 * quarter - half };
        for j in 0..ny {
            let src = f.at(i_red, j);
            let dst = &mut out[(i_full * ny + j) * m..(i_full * ny + j + 1) * m];
            if reflect {
                p.apply_gamma(src, &mut gu);
                dst.copy_from_slice(&gu);
            } else {
                dst.copy_from_slice(src);
            }
        }
    }
    (out, nfull)
}

/// Energy of the unfolded field with the periodic x convention.
pub fn unfolded_energy(p: &Potential, f: &Field2D) -> f64 {
    let (values, nfull) = unfold_strip(p, f);
    let (ny, m) = (f.grid.y.n, f.m);
    let (hx, hy) = (f.grid.x.h, f.grid.y.h);
    let wy = |j: usize| if j == 0 || j == ny - 1 { 0.5 * hy } else { hy };
    let at = |i: usize, j: usize| &values[(i * ny + j) * m..(i * ny + j + 1) * m];
    let mut cols = vec![0.0; 2 * (nfull - 1)];
    for i in 0..nfull - 1 {
        let mut s = 0.0;
        let mut sx = 0.0;
        for j in 0..ny {
            let u = at(i, j);
            s += hx * wy(j) * p.eval_w(u);
            if j + 1 < ny {
                let un = at(i, j + 1);
                let mut d2 = 0.0;
                for a in 0..m {
                    let d = (un[a] - u[a]) / hy;
                    d2 += d * d;
                }
                s += 0.5 * hx * hy * d2;
            }
            let ur = at(i + 1, j);
            let mut d2 = 0.0;
            for a in 0..m {
                let d = (ur[a] - u[a]) / hx;
                d2 += d * d;
            }
            sx += 0.5 * hx * wy(j) * d2;
        }
        cols[i] = s;
        cols[nfull - 1 + i] = sx;
    }
    pairwise(&cols)
}

/// Pointwise radial projection onto the ball |u| <= ball_m; the growth
/// hypothesis makes this energy non-increasing, which is checked.
pub fn radial_clamp(p: &Potential, f: &Field2D, ball_m: f64) -> Result<(Field2D, f64, f64)> {
    let before = action_strip(p, f);
    let mut out = f.clone();
    let m = f.m;
    for k in (0..out.values.len()).step_by(m) {
        let b = &mut out.values[k..k + m];
        let norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > ball_m {
            let s = ball_m / norm;
            b.iter_mut().for_each(|v| *v *= s);
        }
    }
    let after = action_strip(p, &out);
    if after > before + 1e-12 * (1.0 + before.abs()) {
        return Err(Error::InvalidInput(format!(
            "radial clamp increased the energy ({before:.12} -> {after:.12}); growth hypothesis violated"
        )));
    }
    Ok((out, before, after))
}

/// Objective over the reduced-domain dofs: the x = 0 column is stored in
/// fixed-plane coordinates, interior y nodes only.
pub struct StripObjective<'a> {
    pub p: &'a Potential,
    pub field: Field2D,
    basis: Vec<Vec<f64>>,
    ball: f64,
    grad_full: Vec<f64>,
    diag: Vec<f64>,
}

impl<'a> StripObjective<'a> {
    pub fn new(p: &'a Potential, template: Field2D, ball: f64) -> Self {
        let basis = fixed_plane_basis(&p.gamma, p.m);
        let (nx, ny, m) = (template.grid.x.n, template.grid.y.n, template.m);
        let (hx, hy) = (template.grid.x.h, template.grid.y.h);
        let n_full = nx * ny * m;
        // diagonal of the Laplacian part plus a curvature floor, as preconditioner
        let gamma_hi2 = nondegeneracy_constants(p)
            .map(|c| c.gamma_hi * c.gamma_hi)
            .unwrap_or(1.0);
        let mut diag = vec![0.0; n_full];
        for i in 0..nx {
            let wx = if i == 0 || i == nx - 1 { 0.5 * hx } else { hx };
            let cx = if i == 0 || i == nx - 1 { 1.0 } else { 2.0 };
            for j in 0..ny {
                let wy = if j == 0 || j == ny - 1 { 0.5 * hy } else { hy };
                let cy = if j == 0 || j == ny - 1 { 1.0 } else { 2.0 };
                let d = cx * wy / hx + cy * wx / hy + wx * wy * gamma_hi2;
                for a in 0..m {
                    diag[(i * ny + j) * m + a] = d;
                }
            }
        }
        Self {
            p,
            field: template,
            basis,
            ball,
            grad_full: vec![0.0; n_full],
            diag,
        }
    }

    pub fn mp(&self) -> usize {
        self.basis.len()
    }

    fn ny_int(&self) -> usize {
        self.field.grid.y.n - 2
    }

    pub fn dofs_from_field(&self, f: &Field2D) -> Vec<f64> {
        let (nx, ny, m) = (f.grid.x.n, f.grid.y.n, f.m);
        let mp = self.mp();
        let mut x = Vec::with_capacity(self.dim());
        for j in 1..ny - 1 {
            let u = f.at(0, j);
            for b in &self.basis {
                x.push(u.iter().zip(b).map(|(v, e)| v * e).sum());
            }
        }
        for i in 1..nx {
            for j in 1..ny - 1 {
                x.extend_from_slice(f.at(i, j));
            }
        }
        debug_assert_eq!(x.len(), mp * (ny - 2) + (nx - 1) * (ny - 2) * m);
        x
    }

    pub fn write_dofs(&mut self, x: &[f64]) {
        let (nx, ny, m) = (self.field.grid.x.n, self.field.grid.y.n, self.field.m);
        let mp = self.mp();
        let basis = std::mem::take(&mut self.basis);
        for j in 1..ny - 1 {
            let u = self.field.at_mut(0, j);
            u.iter_mut().for_each(|v| *v = 0.0);
            for (k, b) in basis.iter().enumerate() {
                let c = x[(j - 1) * mp + k];
                for a in 0..m {
                    u[a] += c * b[a];
                }
            }
        }
        self.basis = basis;
        let off = mp * (ny - 2);
        for i in 1..nx {
            for j in 1..ny - 1 {
                let s = off + ((i - 1) * (ny - 2) + (j - 1)) * m;
                self.field.at_mut(i, j).copy_from_slice(&x[s..s + m]);
            }
        }
    }

    /// Gradient with respect to every node of the full field.
    fn grad_full_field(&mut self) {
        let f = &self.field;
        let (nx, ny, m) = (f.grid.x.n, f.grid.y.n, f.m);
        let (hx, hy) = (f.grid.x.h, f.grid.y.h);
        let wx = |i: usize| if i == 0 || i == nx - 1 { 0.5 * hx } else { hx };
        let wy = |j: usize| if j == 0 || j == ny - 1 { 0.5 * hy } else { hy };
        let g = &mut self.grad_full;
        g.iter_mut().for_each(|v| *v = 0.0);
        let mut gw = vec![0.0; m];
        for i in 0..nx {
            for j in 0..ny {
                let u = f.at(i, j);
                self.p.grad_w(u, &mut gw).expect("potential gradient");
                let w = wx(i) * wy(j);
                let k = f.idx(i, j);
                for a in 0..m {
                    g[k + a] += w * gw[a];
                }
                if j + 1 < ny {
                    let un = f.at(i, j + 1);
                    let kk = f.idx(i, j + 1);
                    let c = wx(i) / hy;
                    for a in 0..m {
                        let d = (un[a] - u[a]) * c;
                        g[k + a] -= d;
                        g[kk + a] += d;
                    }
                }
                if i + 1 < nx {
                    let ur = f.at(i + 1, j);
                    let kk = f.idx(i + 1, j);
                    let c = wy(j) / hx;
                    for a in 0..m {
                        let d = (ur[a] - u[a]) * c;
                        g[k + a] -= d;
                        g[kk + a] += d;
                    }
                }
            }
        }
    }

    fn full_to_dofs(&self, full: &[f64], out: &mut [f64]) {
        let (nx, ny, m) = (self.field.grid.x.n, self.field.grid.y.n, self.field.m);
        let mp = self.mp();
        for j in 1..ny - 1 {
            let k = self.field.idx(0, j);
            for (c, b) in self.basis.iter().enumerate() {
                out[(j - 1) * mp + c] = b.iter().zip(&full[k..k + m]).map(|(e, v)| e * v).sum();
            }
        }
        let off = mp * (ny - 2);
        for i in 1..nx {
            for j in 1..ny - 1 {
                let s = off + ((i - 1) * (ny - 2) + (j - 1)) * m;
                let k = self.field.idx(i, j);
                out[s..s + m].copy_from_slice(&full[k..k + m]);
            }
        }
    }
}

impl<'a> Objective for StripObjective<'a> {
    fn dim(&self) -> usize {
        let ny_int = self.ny_int();
        self.mp() * ny_int + (self.field.grid.x.n - 1) * ny_int * self.field.m
    }

    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.write_dofs(x);
        let f = reduced_energy(self.p, &self.field);
        self.grad_full_field();
        let full = std::mem::take(&mut self.grad_full);
        self.full_to_dofs(&full, grad);
        self.grad_full = full;
        f
    }

    fn hess_vec(&mut self, x: &[f64], v: &[f64], out: &mut [f64]) -> bool {
        self.write_dofs(x);
        let (nx, ny, m) = (self.field.grid.x.n, self.field.grid.y.n, self.field.m);
        let (hx, hy) = (self.field.grid.x.h, self.field.grid.y.h);
        let wx = |i: usize| if i == 0 || i == nx - 1 { 0.5 * hx } else { hx };
        let wy = |j: usize| if j == 0 || j == ny - 1 { 0.5 * hy } else { hy };
        // assemble the full-space direction (zero on Dirichlet rows)
        let mut vf = vec![0.0; nx * ny * m];
        let mp = self.mp();
        for j in 1..ny - 1 {
            let k = self.field.idx(0, j);
            for (c, b) in self.basis.iter().enumerate() {
                let coef = v[(j - 1) * mp + c];
                for a in 0..m {
                    vf[k + a] += coef * b[a];
                }
            }
        }
        let off = mp * (ny - 2);
        for i in 1..nx {
            for j in 1..ny - 1 {
                let s = off + ((i - 1) * (ny - 2) + (j - 1)) * m;
                let k = self.field.idx(i, j);
                vf[k..k + m].copy_from_slice(&v[s..s + m]);
            }
        }
        let mut hvf = vec![0.0; nx * ny * m];
        let mut hw = vec![0.0; m * m];
        for i in 0..nx {
            for j in 0..ny {
                let k = self.field.idx(i, j);
                self.p
                    .hess_w(self.field.at(i, j), &mut hw)
                    .expect("potential Hessian");
                let w = wx(i) * wy(j);
                for a in 0..m {
                    let mut s = 0.0;
                    for b in 0..m {
                        s += hw[a * m + b] * vf[k + b];
                    }
                    hvf[k + a] += w * s;
                }
                if j + 1 < ny {
                    let kk = self.field.idx(i, j + 1);
                    let c = wx(i) / hy;
                    for a in 0..m {
                        let d = (vf[kk + a] - vf[k + a]) * c;
                        hvf[k + a] -= d;
                        hvf[kk + a] += d;
                    }
                }
                if i + 1 < nx {
                    let kk = self.field.idx(i + 1, j);
                    let c = wy(j) / hx;
                    for a in 0..m {
                        let d = (vf[kk + a] - vf[k + a]) * c;
                        hvf[k + a] -= d;
                        hvf[kk + a] += d;
                    }
                }
            }
        }
        self.full_to_dofs(&hvf, out);
        true
    }

    fn project_point(&self, x: &mut [f64]) -> bool {
        let m = self.field.m;
        let mp = self.mp();
        let ny_int = self.ny_int();
        let mut changed = false;
        let mut clamp = |blk: &mut [f64]| {
            let n2: f64 = blk.iter().map(|v| v * v).sum();
            let n = n2.sqrt();
            if n > self.ball {
                let s = self.ball / n;
                blk.iter_mut().for_each(|v| *v *= s);
                changed = true;
            }
        };
        let off = mp * ny_int;
        if mp > 0 {
            for blk in x[..off].chunks_mut(mp) {
                clamp(blk);
            }
        }
        for blk in x[off..].chunks_mut(m) {
            clamp(blk);
        }
        changed
    }

    fn precondition(&self, g: &[f64], out: &mut [f64]) {
        // diagonal scaling in dof space (the fixed-plane basis is orthonormal,
        // so the per-node scale carries over)
        let (_, ny, m) = (self.field.grid.x.n, self.field.grid.y.n, self.field.m);
        let mp = self.mp();
        let ny_int = self.ny_int();
        for j in 1..ny - 1 {
            let k = self.field.idx(0, j);
            for c in 0..mp {
                out[(j - 1) * mp + c] = g[(j - 1) * mp + c] / self.diag[k];
            }
        }
        let off = mp * ny_int;
        let nx = self.field.grid.x.n;
        for i in 1..nx {
            for j in 1..ny - 1 {
                let s = off + ((i - 1) * ny_int + (j - 1)) * m;
                let k = self.field.idx(i, j);
                for a in 0..m {
                    out[s + a] = g[s + a] / self.diag[k + a];
                }
            }
        }
    }
}

/// The explicit comparison field: fiberwise interpolation from the symmetric
/// average at x = 0 to the plus connection for x >= 1.
pub fn strip_tilde(p: &Potential, pair: ConnectionPair<'_>, grid: &Grid2D) -> Field2D {
    let (nx, ny, m) = (grid.x.n, grid.y.n, p.m);
    let mut f = Field2D::zeros(grid.clone(), m);
    for i in 0..nx {
        let t = grid.x.node(i).clamp(0.0, 1.0);
        for j in 0..ny {
            let up = pair.plus.path.point(j);
            let um = pair.minus.path.point(j);
            let dst = f.at_mut(i, j);
            for a in 0..m {
                dst[a] = 0.5 * (up[a] + um[a]) + 0.5 * t * (up[a] - um[a]);
            }
        }
    }
    // pin the y rows exactly
    for i in 0..nx {
        f.at_mut(i, 0).copy_from_slice(&p.a_minus);
        let last = ny - 1;
        f.at_mut(i, last).copy_from_slice(&p.a_plus);
    }
    f
}

/// C0 of the energy bound: action(tilde) - c0 L.
pub fn strip_energy_bound_c0(p: &Potential, pair: ConnectionPair<'_>, grid: &Grid2D) -> f64 {
    let c0 = pair.plus.action.min(pair.minus.action);
    action_strip(p, &strip_tilde(p, pair, grid)) - c0 * grid.period_l
}

/// Smallest band depth d such that |u - a+-| < r0/2 for +-y > d.
/// None when no band with d <= Y - hy exists.
pub fn trap_depth(p: &Potential, f: &Field2D, r0: f64) -> Option<f64> {
    let (nx, ny) = (f.grid.x.n, f.grid.y.n);
    let mut worst_plus: f64 = 0.0;
    let mut worst_minus: f64 = 0.0;
    let mut any = false;
    for j in 0..ny {
        let y = f.grid.y.node(j);
        let mut sup_p = 0.0f64;
        let mut sup_m = 0.0f64;
        for i in 0..nx {
            let u = f.at(i, j);
            sup_p = sup_p.max(dist(u, &p.a_plus));
            sup_m = sup_m.max(dist(u, &p.a_minus));
        }
        if y > 0.0 && sup_p >= 0.5 * r0 {
            worst_plus = worst_plus.max(y);
            any = true;
        }
        if y < 0.0 && sup_m >= 0.5 * r0 {
            worst_minus = worst_minus.max(-y);
            any = true;
        }
    }
    let d = if any {
        worst_plus.max(worst_minus) + f.grid.y.h
    } else {
        0.0
    };
    if d <= f.grid.y.hi() - f.grid.y.h {
        Some(d)
    } else {
        None
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[derive(Clone, Debug, Serialize)]
pub struct StripInfo {
    pub action: f64,
    pub c0_bound: f64,
    pub ball_m: f64,
    pub trap_depth: f64,
    pub clamp_was_active: bool,
    pub max_norm: f64,
    pub minimize: MinimizeResult,
}

pub struct StripSolution {
    pub field: Field2D,
    pub info: StripInfo,
}

/// Minimize the reduced energy. `warm` optionally seeds the interior from a
/// previous solution (already on a compatible grid).
pub fn minimize_strip(
    p: &Potential,
    pair: ConnectionPair<'_>,
    grid: &Grid2D,
    ball_m: f64,
    cfg: &MinimizeConfig,
    warm: Option<&Field2D>,
) -> Result<StripSolution> {
    if grid.x.n < 9 {
        return Err(Error::NonConvergence(format!(
            "strip domain too small: {} x-nodes on [0, L/4], need at least 9",
            grid.x.n
        )));
    }
    if pair.plus.path.grid != grid.y || pair.minus.path.grid != grid.y {
        return Err(Error::Config(
            "connections must live on the strip y grid".into(),
        ));
    }
    let ndc = nondegeneracy_constants(p)?;
    let c0_bound = strip_energy_bound_c0(p, pair, grid);
    let guess = match warm {
        Some(w) => {
            let mut g = strip_tilde(p, pair, grid);
            let nx_copy = w.grid.x.n.min(grid.x.n);
            if (w.grid.x.h - grid.x.h).abs() > 1e-12 || w.grid.y != grid.y {
                return Err(Error::Config("warm start grid mismatch".into()));
            }
            for i in 0..nx_copy {
                for j in 0..w.grid.y.n {
                    let src = w.at(i, j).to_vec();
                    g.at_mut(i, j).copy_from_slice(&src);
                }
            }
            // continue the last warm column to the new brake column
            let last = w.grid.x.n - 1;
            for i in nx_copy..grid.x.n {
                for j in 0..w.grid.y.n {
                    let src = w.at(last, j).to_vec();
                    g.at_mut(i, j).copy_from_slice(&src);
                }
            }
            g
        }
        None => strip_tilde(p, pair, grid),
    };
    let mut current = guess;
    let mut clamp_was_active = false;
    let mut last_res = None;
    for _ in 0..3 {
        let (clamped, before, after) = radial_clamp(p, &current, ball_m)?;
        if after < before - 1e-12 * (1.0 + before.abs()) {
            clamp_was_active = true;
        }
        current = clamped;
        let mut obj = StripObjective::new(p, current.clone(), ball_m);
        let mut x = obj.dofs_from_field(&current);
        let res = minimize(&mut obj, &mut x, cfg)?;
        obj.write_dofs(&x);
        current = obj.field.clone();
        let converged = res.converged;
        last_res = Some(res);
        // check the clamp is inactive on the minimizer
        let (reclamped, b2, a2) = radial_clamp(p, &current, ball_m)?;
        if (b2 - a2).abs() <= 1e-12 * (1.0 + b2.abs()) {
            current = reclamped;
            if converged {
                break;
            } else {
                return Err(Error::NonConvergence(format!(
                    "strip solve stalled at |g| = {:.3e}",
                    last_res.as_ref().unwrap().grad_inf
                )));
            }
        }
        clamp_was_active = true;
        current = reclamped;
    }
    let res = last_res.unwrap();
    let depth = trap_depth(p, &current, ndc.r0).ok_or(Error::TrapViolation {
        measured_d: f64::INFINITY,
        limit: grid.y.hi() - grid.y.h,
    })?;
    let max_norm = current.max_norm();
    if max_norm > ball_m * (1.0 + 1e-9) {
        return Err(Error::ConstraintActive { max_norm, ball_m });
    }
    let action = action_strip(p, &current);
    Ok(StripSolution {
        field: current,
        info: StripInfo {
            action,
            c0_bound,
            ball_m,
            trap_depth: depth,
            clamp_was_active,
            max_norm,
            minimize: res,
        },
    })
}

/// Max residual of the 5-point discretization of Delta u = W_u(u), with the
/// symmetric extensions at the x boundaries (interior y rows).
pub fn pde_residual(p: &Potential, f: &Field2D) -> f64 {
    let (nx, ny, m) = (f.grid.x.n, f.grid.y.n, f.m);
    let (hx, hy) = (f.grid.x.h, f.grid.y.h);
    let mut gw = vec![0.0; m];
    let mut gu = vec![0.0; m];
    let mut worst = 0.0f64;
    for i in 0..nx {
        for j in 1..ny - 1 {
            let u = f.at(i, j);
            p.grad_w(u, &mut gw).expect("potential gradient");
            for a in 0..m {
                let (left, right) = if i == 0 {
                    p.apply_gamma(f.at(1, j), &mut gu);
                    (gu[a], f.at(1, j)[a])
                } else if i == nx - 1 {
                    (f.at(nx - 2, j)[a], f.at(nx - 2, j)[a])
                } else {
                    (f.at(i - 1, j)[a], f.at(i + 1, j)[a])
                };
                let uxx = (right - 2.0 * u[a] + left) / (hx * hx);
                let uyy = (f.at(i, j + 1)[a] - 2.0 * u[a] + f.at(i, j - 1)[a]) / (hy * hy);
                worst = worst.max((uxx + uyy - gw[a]).abs());
            }
        }
    }
    worst
}

/// u_x trace at column i (centered, with the symmetric x extensions).
pub fn fiber_x_trace(p: &Potential, f: &Field2D, i: usize) -> Path1D {
    let (nx, ny, m) = (f.grid.x.n, f.grid.y.n, f.m);
    let hx = f.grid.x.h;
    let mut out = Path1D::zeros(f.grid.y.clone(), m);
    let mut gu = vec![0.0; m];
    for j in 0..ny {
        let dst = &mut out.values[j * m..(j + 1) * m];
        if i == 0 {
            p.apply_gamma(f.at(1, j), &mut gu);
            for a in 0..m {
                dst[a] = (f.at(1, j)[a] - gu[a]) / (2.0 * hx);
            }
        } else if i == nx - 1 {
            dst.iter_mut().for_each(|v| *v = 0.0);
        } else {
            for a in 0..m {
                dst[a] = (f.at(i + 1, j)[a] - f.at(i - 1, j)[a]) / (2.0 * hx);
            }
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct HamiltonianRow {
    pub x: f64,
    pub a: f64,
    pub b: f64,
    pub j_fiber: f64,
    pub ux_norm_sq: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct HamiltonianReport {
    pub omega: f64,
    /// max over x of |<u_x, u_y>|.
    pub omega_tilde_max: f64,
    /// max over x of |1/2 |u_x|^2 - (J(u(x,.)) - c0 - omega)|.
    pub a_variation: f64,
    pub rows: Vec<HamiltonianRow>,
    pub c0: f64,
}

pub fn hamiltonian_identities(
    p: &Potential,
    f: &Field2D,
    pair: ConnectionPair<'_>,
) -> HamiltonianReport {
    let nx = f.grid.x.n;
    let c0 = pair.plus.action.min(pair.minus.action);
    let mut j_fib = vec![0.0; nx];
    let mut ux2 = vec![0.0; nx];
    let mut bvals = vec![0.0; nx];
    for i in 0..nx {
        let fiber = f.fiber(i);
        j_fib[i] = discrete_action(p, &fiber);
        let ux = fiber_x_trace(p, f, i);
        ux2[i] = ux.l2_inner(&ux);
        let uy = fiber.nodal_derivative();
        bvals[i] = ux.l2_inner(&uy);
    }
    let omega = j_fib[nx - 1] - c0;
    let mut a_var = 0.0f64;
    let mut b_max = 0.0f64;
    let mut rows = Vec::with_capacity(nx);
    for i in 0..nx {
        let a = 0.5 * ux2[i] - (j_fib[i] - c0 - omega);
        a_var = a_var.max(a.abs());
        b_max = b_max.max(bvals[i].abs());
        rows.push(HamiltonianRow {
            x: f.grid.x.node(i),
            a,
            b: bvals[i],
            j_fiber: j_fib[i],
            ux_norm_sq: ux2[i],
        });
    }
    HamiltonianReport {
        omega,
        omega_tilde_max: b_max,
        a_variation: a_var,
        rows,
        c0,
    }
}

/// Per-fiber decompositions of a strip field, ordered by x, with the
/// decomposition-frame residuals needed by the energy representation checks.
pub struct FiberSeries {
    pub x: Vec<f64>,
    pub decs: Vec<FiberDecomposition>,
    pub j_fiber: Vec<f64>,
    pub ux_norm_sq: Vec<f64>,
    /// Residual in the decomposition frame: v(s) = fiber(s + h) - conn(s).
    pub shifted_v: Vec<Path1D>,
    pub h_prime: Vec<Option<f64>>,
    pub c0: f64,
    pub hx: f64,
    pub qbar: f64,
}

impl FiberSeries {
    pub fn len(&self) -> usize {
        self.x.len()
    }
    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
    pub fn q(&self, i: usize) -> f64 {
        self.decs[i].q
    }
    pub fn q1(&self, i: usize) -> f64 {
        self.decs[i].q1
    }
    pub fn h(&self, i: usize) -> f64 {
        self.decs[i].h
    }
}

pub fn fiber_series(
    p: &Potential,
    f: &Field2D,
    pair: ConnectionPair<'_>,
    qbar: f64,
) -> Result<FiberSeries> {
    let nx = f.grid.x.n;
    let c0 = pair.plus.action.min(pair.minus.action);
    let mut xs = Vec::with_capacity(nx);
    let mut decs = Vec::with_capacity(nx);
    let mut j_fiber = Vec::with_capacity(nx);
    let mut ux2 = Vec::with_capacity(nx);
    let mut shifted = Vec::with_capacity(nx);
    let mut hps = Vec::with_capacity(nx);
    for i in 0..nx {
        let fiber = f.fiber(i);
        let dec = decompose(&fiber, pair, qbar)?;
        let conn = pair.get(dec.sign);
        // decomposition-frame residual
        let fi = CubicInterp::with_flat_tails(&fiber);
        let mut v = Path1D::zeros(f.grid.y.clone(), f.m);
        for j in 0..f.grid.y.n {
            let y = f.grid.y.node(j);
            let k = j * f.m;
            fi.eval(y + dec.h, &mut v.values[k..k + f.m]);
            for a in 0..f.m {
                v.values[k + a] -= conn.path.values[k + a];
            }
        }
        let ux = fiber_x_trace(p, f, i);
        let hp = if dec.ambiguous {
            None
        } else {
            crate::fiber::h_prime(&dec, &ux, conn).ok()
        };
        xs.push(f.grid.x.node(i));
        j_fiber.push(discrete_action(p, &fiber));
        ux2.push(ux.l2_inner(&ux));
        shifted.push(v);
        hps.push(hp);
        decs.push(dec);
    }
    Ok(FiberSeries {
        x: xs,
        decs,
        j_fiber,
        ux_norm_sq: ux2,
        shifted_v: shifted,
        h_prime: hps,
        c0,
        hx: f.grid.x.h,
        qbar,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct StayInReport {
    /// First x with q1 <= p_level (entry into the tube).
    pub x_p: Option<f64>,
    /// q(x) <= p_level holds for all x in [x_p, L/4].
    pub band_ok: bool,
    pub violations: Vec<f64>,
    /// The bound x_p <= C0 / e_p.
    pub xp_bound: f64,
    pub xp_bound_ok: bool,
}

pub fn stay_in_audit(
    series: &FiberSeries,
    p_level: f64,
    ep_estimate: f64,
    c0_bound: f64,
) -> StayInReport {
    let mut x_p = None;
    let mut idx_p = None;
    for i in 0..series.len() {
        if series.q1(i) <= p_level {
            x_p = Some(series.x[i]);
            idx_p = Some(i);
            break;
        }
    }
    let mut violations = Vec::new();
    if let Some(i0) = idx_p {
        for i in i0..series.len() {
            if series.q(i) > p_level * (1.0 + 1e-6) + 1e-9 {
                violations.push(series.x[i]);
            }
        }
    }
    let xp_bound = c0_bound / ep_estimate.max(1e-300);
    StayInReport {
        band_ok: idx_p.is_some() && violations.is_empty(),
        xp_bound_ok: x_p.map(|x| x <= xp_bound).unwrap_or(false),
        x_p,
        violations,
        xp_bound,
    }
}
