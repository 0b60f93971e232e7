//! 1D heteroclinic profiles: global minimizers of the action
//! J(u) = int 1/2 |u'|^2 + W(u) with pinned limits, their action value,
//! exponential tail rates, and the spectrum of the linearization
//! T v = -v'' + W_uu(u) v.

use crate::eig::SymBanded;
use crate::error::{Error, Result};
use crate::grid::{Grid1D, Path1D};
use crate::interp::{CubicInterp, TailModel};
use crate::minimize::{minimize, MinimizeConfig, MinimizeResult, Objective};
use crate::potential::{nondegeneracy_constants, NondegeneracyConstants, Potential};
use crate::sum::pairwise_by;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Minus,
    Plus,
}

/// Discrete action: cell-midpoint derivative quadrature plus trapezoid
/// potential quadrature. Its critical points satisfy the standard
/// second-order difference equation u'' = W_u(u).
pub fn discrete_action(p: &Potential, path: &Path1D) -> f64 {
    let m = path.m;
    let h = path.grid.h;
    let n = path.grid.n;
    let deriv = pairwise_by(n - 1, |i| {
        let mut s = 0.0;
        for a in 0..m {
            let d = (path.values[(i + 1) * m + a] - path.values[i * m + a]) / h;
            s += d * d;
        }
        0.5 * h * s
    });
    let pot = pairwise_by(n, |i| path.grid.weight(i) * p.eval_w(path.point(i)));
    deriv + pot
}

/// Gradient of `discrete_action` with respect to every node, written into
/// `grad` (length n*m).
pub fn discrete_action_grad(p: &Potential, path: &Path1D, grad: &mut [f64]) {
    let m = path.m;
    let h = path.grid.h;
    let n = path.grid.n;
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut gw = vec![0.0; m];
    for i in 0..n {
        p.grad_w(path.point(i), &mut gw)
            .expect("potential gradient oracle");
        let w = path.grid.weight(i);
        for a in 0..m {
            grad[i * m + a] += w * gw[a];
        }
    }
    for i in 0..n - 1 {
        for a in 0..m {
            let d = (path.values[(i + 1) * m + a] - path.values[i * m + a]) / h;
            grad[i * m + a] -= d;
            grad[(i + 1) * m + a] += d;
        }
    }
}

/// Action value with the quadratic tail estimate past the grid ends.
#[derive(Clone, Debug, Serialize)]
pub struct ActionValue {
    pub value: f64,
    pub tail_correction: f64,
    pub endpoints_flagged: bool,
}

/// J(u) over the whole line: grid quadrature plus the analytic estimate of
/// the truncated tails (exact zero for paths pinned at the minima).
pub fn action_jr(p: &Potential, path: &Path1D, ndc: &NondegeneracyConstants) -> ActionValue {
    let base = discrete_action(p, path);
    let n = path.grid.n;
    let mut correction = 0.0;
    let mut flagged = false;
    for (node, a) in [(0usize, &p.a_minus), (n - 1, &p.a_plus)] {
        let u = path.point(node);
        let z2: f64 = u
            .iter()
            .zip(a.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        if z2.sqrt() > ndc.r0 {
            flagged = true;
        } else {
            // linearized tail a + z e^{-gamma s}: integral of |u'|^2/2 + W
            // with W ~ gamma^2 |z|^2 e^{-2 gamma s} / 2 gives gamma |z|^2 / 2 each
            correction += 0.5 * ndc.gamma_lo * z2;
        }
    }
    ActionValue {
        value: base + correction,
        tail_correction: correction,
        endpoints_flagged: flagged,
    }
}

/// Max interior residual of the pointwise identity 1/2 |u'|^2 - W(u) = 0
/// satisfied by heteroclinic profiles (centered differences).
pub fn equipartition_residual_path(p: &Potential, path: &Path1D) -> f64 {
    let m = path.m;
    let h = path.grid.h;
    let n = path.grid.n;
    let mut worst = 0.0f64;
    for i in 1..n - 1 {
        let mut speed2 = 0.0;
        for a in 0..m {
            let d = (path.values[(i + 1) * m + a] - path.values[(i - 1) * m + a]) / (2.0 * h);
            speed2 += d * d;
        }
        worst = worst.max((0.5 * speed2 - p.eval_w(path.point(i))).abs());
    }
    worst
}

/// Max interior residual of u'' = W_u(u) (second differences).
pub fn el_residual_path(p: &Potential, path: &Path1D) -> f64 {
    let m = path.m;
    let h = path.grid.h;
    let n = path.grid.n;
    let mut gw = vec![0.0; m];
    let mut worst = 0.0f64;
    for i in 1..n - 1 {
        p.grad_w(path.point(i), &mut gw).expect("potential gradient");
        for a in 0..m {
            let dd = (path.values[(i + 1) * m + a] - 2.0 * path.values[i * m + a]
                + path.values[(i - 1) * m + a])
                / (h * h);
            worst = worst.max((dd - gw[a]).abs());
        }
    }
    worst
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TailFit {
    /// Exponential rate k in |u - a| ~ K e^{-k |y|}.
    pub rate: f64,
    pub prefactor: f64,
    pub r2: f64,
    pub window_nodes: usize,
    /// False when the window was too short and the linearization rate
    /// sqrt(min eig W_uu(a)) was substituted.
    pub fitted: bool,
}

/// A computed connection between the minima.
#[derive(Clone, Debug)]
pub struct Connection {
    pub path: Path1D,
    pub sign: Sign,
    pub action: f64,
    pub tail_minus: TailFit,
    pub tail_plus: TailFit,
    pub equipartition: f64,
    pub ndc: NondegeneracyConstants,
    /// Set when an m>1 minimizer landed on the fixed plane of gamma.
    pub channel_collapsed: bool,
    /// Set when the grid extent is below 10/gamma_lo per side.
    pub short_grid: bool,
    pub minimize: MinimizeResult,
}

impl Connection {
    /// Interpolant with exponential tail extension, for evaluating translates.
    pub fn interp(&self) -> CubicInterp {
        let p = &self.path;
        CubicInterp::new(
            p,
            TailModel {
                limit: p.values[0..p.m].to_vec(),
                rate: self.tail_minus.rate.max(1e-6),
            },
            TailModel {
                limit: p.values[(p.grid.n - 1) * p.m..p.grid.n * p.m].to_vec(),
                rate: self.tail_plus.rate.max(1e-6),
            },
        )
    }

    /// Nodal derivative u' of the profile.
    pub fn derivative(&self) -> Path1D {
        self.path.nodal_derivative()
    }

    /// The gamma-conjugate connection (requires gamma to fix the minima).
    pub fn gamma_image(&self, p: &Potential) -> Result<Self> {
        let m = p.m;
        let mut ga = vec![0.0; m];
        p.apply_gamma(&p.a_plus, &mut ga);
        if ga
            .iter()
            .zip(&p.a_plus)
            .any(|(x, y)| (x - y).abs() > 1e-12)
        {
            return Err(Error::InvalidInput(
                "gamma does not fix the minima; no conjugate connection".into(),
            ));
        }
        let mut out = self.clone();
        for i in 0..self.path.grid.n {
            let mut v = vec![0.0; m];
            p.apply_gamma(self.path.point(i), &mut v);
            out.path.point_mut(i).copy_from_slice(&v);
        }
        out.sign = match self.sign {
            Sign::Minus => Sign::Plus,
            Sign::Plus => Sign::Minus,
        };
        Ok(out)
    }
}

/// The explicit low-energy comparison map: linear interpolation between the
/// minima on [-1, 1], constant outside.
pub fn tilde_guess(p: &Potential, grid: &Grid1D) -> Path1D {
    let m = p.m;
    Path1D::from_fn(grid.clone(), m, |y, s| {
        let t = y.clamp(-1.0, 1.0);
        for a in 0..m {
            s[a] = 0.5 * (p.a_plus[a] + p.a_minus[a] + t * (p.a_plus[a] - p.a_minus[a]));
        }
    })
}

/// Objective over interior nodes with both ends pinned.
pub struct PinnedActionObjective<'a> {
    pub p: &'a Potential,
    pub path: Path1D,
    grad_full: Vec<f64>,
    precond: Option<crate::eig::BandedLdlt>,
}

impl<'a> PinnedActionObjective<'a> {
    pub fn new(p: &'a Potential, template: Path1D) -> Self {
        let n = template.grid.n;
        let m = template.m;
        let h = template.grid.h;
        // (h (alpha I - Lap))^{-1} per component on interior nodes
        let ni = n - 2;
        let alpha = 1.0;
        let mut lap = SymBanded::zeros(ni, 1);
        for i in 0..ni {
            lap.set(0, i, 2.0 / h + alpha * h);
            if i + 1 < ni {
                lap.set(1, i, -1.0 / h);
            }
        }
        let (fac, _) = lap.ldlt(0.0);
        Self {
            p,
            path: template,
            grad_full: vec![0.0; n * m],
            precond: Some(fac),
        }
    }

    pub fn dofs_from_path(&self, path: &Path1D) -> Vec<f64> {
        let m = path.m;
        let n = path.grid.n;
        path.values[m..(n - 1) * m].to_vec()
    }

    pub fn write_dofs(&mut self, x: &[f64]) {
        let m = self.path.m;
        let n = self.path.grid.n;
        self.path.values[m..(n - 1) * m].copy_from_slice(x);
    }

    pub fn path_with_dofs(&mut self, x: &[f64]) -> &Path1D {
        self.write_dofs(x);
        &self.path
    }
}

impl<'a> Objective for PinnedActionObjective<'a> {
    fn dim(&self) -> usize {
        (self.path.grid.n - 2) * self.path.m
    }

    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.write_dofs(x);
        let f = discrete_action(self.p, &self.path);
        discrete_action_grad(self.p, &self.path, &mut self.grad_full);
        let m = self.path.m;
        let n = self.path.grid.n;
        grad.copy_from_slice(&self.grad_full[m..(n - 1) * m]);
        f
    }

    fn hess_vec(&mut self, x: &[f64], v: &[f64], out: &mut [f64]) -> bool {
        self.write_dofs(x);
        let m = self.path.m;
        let n = self.path.grid.n;
        let h = self.path.grid.h;
        let mut hw = vec![0.0; m * m];
        out.iter_mut().for_each(|o| *o = 0.0);
        let vat = |i: usize, a: usize, v: &[f64]| -> f64 {
            if i == 0 || i == n - 1 {
                0.0
            } else {
                v[(i - 1) * m + a]
            }
        };
        for i in 1..n - 1 {
            self.p
                .hess_w(self.path.point(i), &mut hw)
                .expect("potential Hessian oracle");
            let w = self.path.grid.weight(i);
            for a in 0..m {
                let mut s = 0.0;
                for b in 0..m {
                    s += hw[a * m + b] * vat(i, b, v);
                }
                out[(i - 1) * m + a] += w * s
                    + (2.0 * vat(i, a, v) - vat(i - 1, a, v) - vat(i + 1, a, v)) / h;
            }
        }
        true
    }

    fn precondition(&self, g: &[f64], out: &mut [f64]) {
        match &self.precond {
            Some(fac) => {
                let m = self.path.m;
                let ni = self.path.grid.n - 2;
                let mut comp = vec![0.0; ni];
                for a in 0..m {
                    for i in 0..ni {
                        comp[i] = g[i * m + a];
                    }
                    fac.solve_in_place(&mut comp);
                    for i in 0..ni {
                        out[i * m + a] = comp[i];
                    }
                }
            }
            None => out.copy_from_slice(g),
        }
    }
}

/// Minimize the discrete action with endpoints pinned to the minima.
/// `hint` selects the side of the transverse bump in the initial guess
/// (two-channel potentials have a pair of conjugate minimizers).
pub fn solve_connection(
    p: &Potential,
    grid: &Grid1D,
    hint: Sign,
    cfg: &MinimizeConfig,
) -> Result<Connection> {
    let ndc = nondegeneracy_constants(p)?;
    let m = p.m;
    let mut guess = tilde_guess(p, grid);
    if m > 1 {
        // transverse bump on the -1 eigenspace of gamma
        let dir = antisym_basis_vector(&p.gamma, m)?;
        let amp = 0.15
            * dist(&p.a_plus, &p.a_minus)
            * match hint {
                Sign::Plus => 1.0,
                Sign::Minus => -1.0,
            };
        for i in 0..grid.n {
            let y = grid.node(i);
            let bump = amp / (0.5 * y).cosh();
            for a in 0..m {
                guess.values[i * m + a] += bump * dir[a];
            }
        }
    }
    guess.point_mut(0).copy_from_slice(&p.a_minus);
    let n = grid.n;
    guess.point_mut(n - 1).copy_from_slice(&p.a_plus);

    let mut obj = PinnedActionObjective::new(p, guess.clone());
    let mut x = obj.dofs_from_path(&guess);
    let res = minimize(&mut obj, &mut x, cfg)?;
    if !res.converged {
        return Err(Error::NonConvergence(format!(
            "connection solve stalled at |g| = {:.3e} after {} iterations",
            res.grad_inf, res.iterations
        )));
    }
    let path = obj.path_with_dofs(&x).clone();
    finish_connection(p, path, ndc, res)
}

fn finish_connection(
    p: &Potential,
    path: Path1D,
    ndc: NondegeneracyConstants,
    res: MinimizeResult,
) -> Result<Connection> {
    let m = p.m;
    let grid = path.grid.clone();
    let action = discrete_action(p, &path);
    let equip = equipartition_residual_path(p, &path);
    let short_grid = grid.hi().min(-grid.lo) < 10.0 / ndc.gamma_lo;

    let mut channel_collapsed = false;
    let mut sign = Sign::Plus;
    if m > 1 {
        let mut max_anti = 0.0f64;
        for i in 0..grid.n {
            max_anti = max_anti.max(Potential::antisym_norm(&p.gamma, m, path.point(i)));
        }
        channel_collapsed = max_anti < 1e-6;
        let dir = antisym_basis_vector(&p.gamma, m)?;
        let mid = grid.n / 2;
        let proj: f64 = path.point(mid).iter().zip(&dir).map(|(u, d)| u * d).sum();
        sign = if proj >= 0.0 { Sign::Plus } else { Sign::Minus };
    }

    let tail_minus = tail_rate_path(&path, &p.a_minus, SideSel::Minus, ndc.r0)
        .unwrap_or_else(|_| tail_fallback(&path, &p.a_minus, SideSel::Minus, &ndc));
    let tail_plus = tail_rate_path(&path, &p.a_plus, SideSel::Plus, ndc.r0)
        .unwrap_or_else(|_| tail_fallback(&path, &p.a_plus, SideSel::Plus, &ndc));
    Ok(Connection {
        path,
        sign,
        action,
        tail_minus,
        tail_plus,
        equipartition: equip,
        ndc,
        channel_collapsed,
        short_grid,
        minimize: res,
    })
}

/// First unit vector of the -1 eigenspace of the reflection.
pub fn antisym_basis_vector(gamma: &[f64], m: usize) -> Result<Vec<f64>> {
    let g = nalgebra::DMatrix::from_row_slice(m, m, gamma);
    let eig = g.symmetric_eigen();
    for k in 0..m {
        if eig.eigenvalues[k] < 0.0 {
            let col = eig.eigenvectors.column(k);
            return Ok(col.iter().copied().collect());
        }
    }
    Err(Error::InvalidInput(
        "gamma has no -1 eigenspace; no transverse direction".into(),
    ))
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[derive(Clone, Copy, Debug)]
enum SideSel {
    Minus,
    Plus,
}

fn tail_rate_path(path: &Path1D, limit: &[f64], side: SideSel, r0: f64) -> Result<TailFit> {
    let n = path.grid.n;
    let mut ys = Vec::new();
    let mut logs = Vec::new();
    for i in 0..n {
        let y = path.grid.node(i);
        let on_side = match side {
            SideSel::Plus => y > 0.0,
            SideSel::Minus => y < 0.0,
        };
        if !on_side {
            continue;
        }
        let d = dist(path.point(i), limit);
        if d > 1e-12 && d < r0 {
            ys.push(y.abs());
            logs.push(d.ln());
        }
    }
    if ys.len() < 10 {
        return Err(Error::TailTooShort(ys.len()));
    }
    let (slope, intercept, r2) = linear_fit(&ys, &logs);
    Ok(TailFit {
        rate: -slope,
        prefactor: intercept.exp(),
        r2,
        window_nodes: ys.len(),
        fitted: true,
    })
}

/// Linearization-rate fallback when the grid has no usable fit window.
fn tail_fallback(path: &Path1D, limit: &[f64], side: SideSel, ndc: &NondegeneracyConstants) -> TailFit {
    let rate = ndc.gamma_lo / (1.0 - crate::potential::CURVATURE_MARGIN);
    let n = path.grid.n;
    let probe = match side {
        SideSel::Plus => n.saturating_sub(n / 8).min(n - 2),
        SideSel::Minus => (n / 8).max(1),
    };
    let y = path.grid.node(probe).abs();
    let d = dist(path.point(probe), limit).max(1e-300);
    TailFit {
        rate,
        prefactor: d * (rate * y).exp(),
        r2: 0.0,
        window_nodes: 0,
        fitted: false,
    }
}

/// Least-squares line fit returning (slope, intercept, r^2).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let (mx, my) = (sx / n, sy / n);
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, intercept, r2)
}

/// Fitted exponential tail of a computed connection.
pub fn tail_rate(conn: &Connection, side: Sign, p: &Potential) -> Result<TailFit> {
    match side {
        Sign::Plus => tail_rate_path(&conn.path, &p.a_plus, SideSel::Plus, conn.ndc.r0),
        Sign::Minus => tail_rate_path(&conn.path, &p.a_minus, SideSel::Minus, conn.ndc.r0),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumReport {
    /// Lowest eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    /// Overlap of the eigenvector of the smallest-|.| eigenvalue with u'.
    pub zero_mode_overlap: f64,
    /// Two near-zero eigenvalues: the zero mode fails to be simple.
    pub h3_violation: bool,
}

/// Whether a spectrum shows a doubled near-zero eigenvalue. The scale for
/// "near zero" is a tenth of the first clearly nonzero eigenvalue.
pub fn h3_flag(eigs: &[f64]) -> bool {
    if eigs.len() < 2 {
        return false;
    }
    let scale = eigs
        .iter()
        .map(|e| e.abs())
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let gap = eigs
        .iter()
        .map(|e| e.abs())
        .filter(|a| *a > 1e-3 * scale)
        .fold(f64::INFINITY, f64::min);
    let thresh = gap / 10.0;
    eigs.iter().filter(|e| e.abs() < thresh).count() >= 2
}

/// Assemble T = -d2/dy2 + W_uu(u(y)) on the interior nodes (Dirichlet ends).
pub fn assemble_t_operator(p: &Potential, path: &Path1D) -> SymBanded {
    let m = path.m;
    let n = path.grid.n;
    let h = path.grid.h;
    let ni = n - 2;
    let mut t = SymBanded::zeros(ni * m, 2 * m - 1);
    let mut hw = vec![0.0; m * m];
    for i in 0..ni {
        p.hess_w(path.point(i + 1), &mut hw)
            .expect("potential Hessian oracle");
        for a in 0..m {
            t.add(0, i * m + a, 2.0 / (h * h) + hw[a * m + a]);
            for b in a + 1..m {
                t.add(b - a, i * m + a, hw[a * m + b]);
            }
            if i + 1 < ni {
                t.add(m, i * m + a, -1.0 / (h * h));
            }
        }
    }
    t
}

pub fn operator_t_spectrum(
    p: &Potential,
    conn: &Connection,
    n_eigs: usize,
) -> Result<SpectrumReport> {
    let t = assemble_t_operator(p, &conn.path);
    let eigenvalues = t.lowest_eigenvalues(n_eigs.max(2), 1e-10)?;
    // eigenvector of the eigenvalue closest to zero
    let (zi, &zval) = eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .unwrap();
    let vec = t.eigenvector(zval, 17 + zi as u64)?;
    let du = conn.path.nodal_derivative();
    let m = conn.path.m;
    let ni = conn.path.grid.n - 2;
    let mut dot = 0.0;
    let mut nv = 0.0;
    let mut nd = 0.0;
    for i in 0..ni * m {
        let d = du.values[m + i];
        dot += vec[i] * d;
        nv += vec[i] * vec[i];
        nd += d * d;
    }
    let overlap = dot.abs() / (nv.sqrt() * nd.sqrt());
    Ok(SpectrumReport {
        h3_violation: h3_flag(&eigenvalues),
        eigenvalues,
        zero_mode_overlap: overlap,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct MuEstimate {
    pub mu: f64,
    pub lambda_gap: f64,
    /// min over samples of d2/dq2 W(q nu) / (1 + |nu'|^2), must stay >= mu.
    pub min_curvature_ratio: f64,
    pub samples: usize,
    pub convexity_flag: bool,
}

/// Second difference of the effective potential q -> J(u + q nu) - J(u),
/// normalized by 1 + |nu'|^2. Rejects directions not orthogonal to u'.
pub fn effective_curvature_sample(
    p: &Potential,
    conn: &Connection,
    nu: &Path1D,
    q: f64,
) -> Result<f64> {
    let du = conn.path.nodal_derivative();
    let ip = nu.l2_inner(&du);
    if ip.abs() > 1e-6 * du.l2_norm() * nu.l2_norm().max(1e-300) {
        return Err(Error::InvalidInput(
            "sample direction is not orthogonal to the profile derivative".into(),
        ));
    }
    let base = discrete_action(p, &conn.path);
    let weff = |s: f64| -> f64 {
        let mut path = conn.path.clone();
        for i in 0..path.values.len() {
            path.values[i] += s * nu.values[i];
        }
        discrete_action(p, &path) - base
    };
    let d = q / 10.0;
    let cur = (weff(q + d) - 2.0 * weff(q) + weff(q - d)) / (d * d);
    Ok(cur / (1.0 + nu.deriv_sq_norm()))
}

/// Smooth random directions orthogonal to u', unit L2 norm, zero at the ends.
pub fn smooth_orthogonal_directions(
    conn: &Connection,
    count: usize,
    seed: u64,
) -> Vec<Path1D> {
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = &conn.path.grid;
    let m = conn.path.m;
    let du = conn.path.nodal_derivative();
    let du_norm2 = du.l2_inner(&du);
    let span = grid.hi() - grid.lo;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut nu = Path1D::zeros(grid.clone(), m);
        for a in 0..m {
            for k in 1..=8usize {
                let c: f64 = rng.gen_range(-1.0..1.0);
                for i in 0..grid.n {
                    let t = (grid.node(i) - grid.lo) / span;
                    nu.values[i * m + a] +=
                        c * (std::f64::consts::PI * k as f64 * t).sin();
                }
            }
        }
        let ip = nu.l2_inner(&du) / du_norm2;
        for i in 0..nu.values.len() {
            nu.values[i] -= ip * du.values[i];
        }
        // endpoints back to zero (projection moves them by du = 0 there anyway)
        let norm = nu.l2_norm();
        nu.values.iter_mut().for_each(|v| *v /= norm);
        out.push(nu);
    }
    out
}

/// Spectral-gap proxy for the convexity constant of the effective potential,
/// cross-validated by curvature samples along smooth orthogonal directions.
pub fn estimate_mu(
    p: &Potential,
    conn: &Connection,
    spectrum: &SpectrumReport,
    q_sample: f64,
    seed: u64,
) -> Result<MuEstimate> {
    if spectrum.eigenvalues.len() < 2 {
        return Err(Error::InvalidInput("need at least two eigenvalues".into()));
    }
    let lambda_gap = spectrum.eigenvalues[1];
    let mu = lambda_gap.min(conn.ndc.gamma_lo * conn.ndc.gamma_lo)
        * (1.0 - crate::potential::CURVATURE_MARGIN);
    let dirs = smooth_orthogonal_directions(conn, 20, seed);
    let mut min_ratio = f64::INFINITY;
    let mut convexity_flag = false;
    for nu in &dirs {
        let r = effective_curvature_sample(p, conn, nu, q_sample)?;
        if r < 0.0 {
            convexity_flag = true;
        }
        min_ratio = min_ratio.min(r);
    }
    Ok(MuEstimate {
        mu,
        lambda_gap,
        min_curvature_ratio: min_ratio,
        samples: dirs.len(),
        convexity_flag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn quartic_grid() -> Grid1D {
        Grid1D::symmetric(12.0, 0.01).unwrap()
    }

    /// c0 for the scalar quartic: integral of sqrt(2W) du = 2 sqrt(2) / 3.
    const C0_SCALAR: f64 = 0.942809041582063;

    #[test]
    fn action_of_constant_path_is_zero() {
        let p = Potential::scalar_quartic();
        let g = Grid1D::new(0.0, 5.0, 64).unwrap();
        let path = Path1D::from_fn(g, 1, |_, s| s[0] = 1.0);
        assert_eq!(discrete_action(&p, &path), 0.0);
    }

    #[test]
    fn action_of_tanh_profile_matches_c0() {
        let p = Potential::scalar_quartic();
        let path = Path1D::from_fn(quartic_grid(), 1, |y, s| {
            s[0] = (y / 2.0f64.sqrt()).tanh()
        });
        let ndc = nondegeneracy_constants(&p).unwrap();
        let a = action_jr(&p, &path, &ndc);
        assert!((a.value - C0_SCALAR).abs() < 1e-4, "{}", a.value);
        assert!(!a.endpoints_flagged);
        // reversed relabeling leaves the quadrature unchanged
        let mut rev = path.clone();
        rev.values.reverse();
        assert_relative_eq!(
            discrete_action(&p, &rev),
            discrete_action(&p, &path),
            max_relative = 1e-12
        );
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = Potential::two_channel_default();
        let g = Grid1D::symmetric(6.0, 0.05).unwrap();
        let guess = tilde_guess(&p, &g);
        let mut obj = PinnedActionObjective::new(&p, guess.clone());
        let x = obj.dofs_from_path(&guess);
        let err = crate::minimize::gradient_check(&mut obj, &x, 20, 3);
        assert!(err < 1e-6, "gradient check failed: {err}");
    }

    #[test]
    fn scalar_connection_matches_tanh() {
        let p = Potential::scalar_quartic();
        let cfg = MinimizeConfig::default();
        let conn = solve_connection(&p, &quartic_grid(), Sign::Plus, &cfg).unwrap();
        assert!((conn.action - C0_SCALAR).abs() < 1e-3);
        // sup distance to the best shift of tanh(y/sqrt2)
        let mut best = f64::INFINITY;
        for k in -40..=40 {
            let r = k as f64 * 0.005;
            let mut sup = 0.0f64;
            for i in 0..conn.path.grid.n {
                let y = conn.path.grid.node(i);
                sup = sup.max((conn.path.values[i] - ((y - r) / 2.0f64.sqrt()).tanh()).abs());
            }
            best = best.min(sup);
        }
        assert!(best < 1e-3, "sup distance {best}");
        assert!(conn.equipartition < 1e-4);
        assert!((conn.tail_plus.rate - 2.0f64.sqrt()).abs() < 0.05 * 2.0f64.sqrt());
        assert!(!conn.short_grid);
    }

    #[test]
    fn equipartition_examples() {
        let p = Potential::scalar_quartic();
        let tanh = Path1D::from_fn(quartic_grid(), 1, |y, s| {
            s[0] = (y / 2.0f64.sqrt()).tanh()
        });
        assert!(equipartition_residual_path(&p, &tanh) < 1e-4); // O(h^2)
        let lin = tilde_guess(&p, &quartic_grid());
        assert!(equipartition_residual_path(&p, &lin) > 0.1);
    }

    #[test]
    fn constant_path_tail_too_short() {
        let p = Potential::scalar_quartic();
        let path = Path1D::from_fn(quartic_grid(), 1, |_, s| s[0] = 1.0);
        let ndc = nondegeneracy_constants(&p).unwrap();
        assert!(matches!(
            tail_rate_path(&path, &p.a_plus, SideSel::Plus, ndc.r0),
            Err(Error::TailTooShort(_))
        ));
    }

    #[test]
    fn h3_flag_logic() {
        assert!(!h3_flag(&[1e-5, 1.5, 2.0]));
        assert!(h3_flag(&[1e-9, 1e-7, 1.5]));
        assert!(!h3_flag(&[0.3, 1.5]));
    }

    #[test]
    fn mu_sample_rejects_parallel_direction() {
        let p = Potential::scalar_quartic();
        let g = Grid1D::symmetric(8.0, 0.02).unwrap();
        let conn = solve_connection(&p, &g, Sign::Plus, &MinimizeConfig::default()).unwrap();
        let mut nu = conn.path.nodal_derivative();
        let norm = nu.l2_norm();
        nu.values.iter_mut().for_each(|v| *v /= norm);
        assert!(matches!(
            effective_curvature_sample(&p, &conn, &nu, 0.05),
            Err(Error::InvalidInput(_))
        ));
    }
}
