//! Nearest-translate decomposition of a fiber against the manifold of
//! translated connections, the shift-derivative and transverse-energy
//! representation formulas, the effective potential, and the constrained
//! excess-energy estimator e_p.

use crate::error::{Error, Result};
use crate::grid::Path1D;
use crate::interp::CubicInterp;
use crate::minimize::{minimize, MinimizeConfig, Objective};
use crate::potential::Potential;
use crate::profile1d::{discrete_action, Connection, Sign};
use serde::Serialize;

/// The two reference connections (for a scalar potential both slots may hold
/// the same profile).
#[derive(Clone, Copy)]
pub struct ConnectionPair<'a> {
    pub minus: &'a Connection,
    pub plus: &'a Connection,
}

impl<'a> ConnectionPair<'a> {
    pub fn get(&self, s: Sign) -> &'a Connection {
        match s {
            Sign::Minus => self.minus,
            Sign::Plus => self.plus,
        }
    }
}

/// Metric for the nearest-translate fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    L2,
    H1,
}

#[derive(Clone, Debug, Serialize)]
pub struct FiberDecomposition {
    pub sign: Sign,
    /// Optimal shift of the reference connection (L2 metric).
    pub h: f64,
    /// L2 distance to the manifold.
    pub q: f64,
    /// H1 distance to the manifold (its own optimal shift).
    pub q1: f64,
    /// Residual v = fiber - u(. - h), sampled on the fiber grid,
    /// orthogonal to the translated profile derivative.
    pub v: Path1D,
    /// Unit residual, v = q nu (zero path when q = 0).
    pub nu: Path1D,
    /// Uniqueness of the decomposition is not guaranteed: q >= qbar, near-tied
    /// signs, or a shift fit that fell back to the scan minimum.
    pub ambiguous: bool,
    /// Orthogonality residual |<v, u'(.-h)>| / (|u'| |v|).
    pub orthogonality: f64,
}

/// Squared distance between `fiber` and the translate `conn(. - r)` in the
/// given metric, via the trapezoid quadrature of the fiber grid.
pub fn translate_distance_sq(
    fiber: &Path1D,
    interp: &CubicInterp,
    r: f64,
    metric: Metric,
) -> f64 {
    let m = fiber.m;
    let n = fiber.grid.n;
    let h = fiber.grid.h;
    let mut val = vec![0.0; m];
    let mut prev = vec![0.0; m];
    let mut acc = 0.0;
    for i in 0..n {
        let y = fiber.grid.node(i);
        interp.eval(y - r, &mut val);
        let mut d2 = 0.0;
        for a in 0..m {
            let d = fiber.values[i * m + a] - val[a];
            d2 += d * d;
        }
        acc += fiber.grid.weight(i) * d2;
        if metric == Metric::H1 && i > 0 {
            let mut dd2 = 0.0;
            for a in 0..m {
                let df = (fiber.values[i * m + a] - fiber.values[(i - 1) * m + a]) / h;
                let dv = (val[a] - prev[a]) / h;
                let d = df - dv;
                dd2 += d * d;
            }
            acc += h * dd2;
        }
        prev.copy_from_slice(&val);
    }
    acc
}

/// Orthogonality functional psi(r) = <fiber - u(.-r), u'(.-r)> and its
/// r-derivative; psi = 0 at the L2-optimal shift.
fn shift_residual(fiber: &Path1D, interp: &CubicInterp, r: f64) -> (f64, f64) {
    let m = fiber.m;
    let n = fiber.grid.n;
    let mut val = vec![0.0; m];
    let mut dval = vec![0.0; m];
    let mut psi = 0.0;
    let mut dpsi = 0.0;
    for i in 0..n {
        let y = fiber.grid.node(i);
        interp.eval_with_deriv(y - r, &mut val, &mut dval);
        let w = fiber.grid.weight(i);
        for a in 0..m {
            let diff = fiber.values[i * m + a] - val[a];
            psi += w * diff * dval[a];
            // d/dr [ (f - u(y-r)) u'(y-r) ] = u'^2 - (f - u) u''
            dpsi += w * dval[a] * dval[a];
        }
    }
    // second derivative term of u is dropped: near the minimizer it is O(q),
    // and Newton only needs a consistent slope. Guard in caller.
    (psi, dpsi)
}

/// L2- or H1-optimal shift of `conn` against `fiber`: coarse scan at grid
/// spacing over [-extent/4, extent/4], then Newton on the orthogonality
/// equation (L2) or golden-section refinement (H1).
pub fn optimal_shift(
    fiber: &Path1D,
    conn: &Connection,
    metric: Metric,
) -> (f64, f64, bool) {
    optimal_shift_warm(fiber, conn, metric, None)
}

/// Warm-started shift fit: `warm` skips the coarse scan and refines locally
/// (solver inner loops call this with the previous iterate's shift).
pub fn optimal_shift_warm(
    fiber: &Path1D,
    conn: &Connection,
    metric: Metric,
    warm: Option<f64>,
) -> (f64, f64, bool) {
    let interp = conn.interp();
    let ext = 0.25 * (fiber.grid.hi() - fiber.grid.lo);
    let step = fiber.grid.h;
    let (best_r, _best_d) = match warm {
        Some(r0) => (r0, translate_distance_sq(fiber, &interp, r0, metric)),
        None => {
            let nsteps = (2.0 * ext / step).round() as usize;
            let mut best_r = 0.0;
            let mut best_d = f64::INFINITY;
            for k in 0..=nsteps {
                let r = -ext + k as f64 * step;
                let d = translate_distance_sq(fiber, &interp, r, metric);
                if d < best_d {
                    best_d = d;
                    best_r = r;
                }
            }
            (best_r, best_d)
        }
    };
    let mut fallback = false;
    let r = match metric {
        Metric::L2 => {
            let mut r = best_r;
            let mut converged = false;
            for _ in 0..60 {
                let (psi, dpsi) = shift_residual(fiber, &interp, r);
                if dpsi <= 0.0 {
                    break;
                }
                let dr = psi / dpsi;
                let dr = dr.clamp(-2.0 * step.max(0.1), 2.0 * step.max(0.1));
                r += dr;
                if dr.abs() < 1e-13 * (1.0 + r.abs()) {
                    converged = true;
                    break;
                }
            }
            if !converged || (r - best_r).abs() > 4.0 * step + 0.5 {
                // Newton left the scan basin; trust the scan.
                let (psi, _) = shift_residual(fiber, &interp, r);
                if !converged || psi.abs() > 1e-8 {
                    fallback = true;
                    r = best_r;
                }
            }
            r
        }
        Metric::H1 => {
            // golden-section with adaptive bracket growth: a warm start may
            // sit more than one grid step from the current minimizer
            let mut width = step;
            let mut r;
            loop {
                let (mut a, mut b) = (best_r - width, best_r + width);
                let phi = 0.5 * (5.0f64.sqrt() - 1.0);
                let mut c = b - phi * (b - a);
                let mut d = a + phi * (b - a);
                let mut fc = translate_distance_sq(fiber, &interp, c, metric);
                let mut fd = translate_distance_sq(fiber, &interp, d, metric);
                for _ in 0..90 {
                    if fc < fd {
                        b = d;
                        d = c;
                        fd = fc;
                        c = b - phi * (b - a);
                        fc = translate_distance_sq(fiber, &interp, c, metric);
                    } else {
                        a = c;
                        c = d;
                        fc = fd;
                        d = a + phi * (b - a);
                        fd = translate_distance_sq(fiber, &interp, d, metric);
                    }
                    if b - a < 1e-12 {
                        break;
                    }
                }
                r = 0.5 * (a + b);
                let at_edge = (r - (best_r - width)).abs() < 2.0 * (b - a).max(1e-12)
                    || ((best_r + width) - r).abs() < 2.0 * (b - a).max(1e-12);
                if !at_edge || width > 2.0 * ext {
                    break;
                }
                width *= 4.0;
            }
            r
        }
    };
    let dist = translate_distance_sq(fiber, &interp, r, metric).max(0.0).sqrt();
    (r, dist, fallback)
}

/// Decompose a fiber into the nearest translated connection plus an
/// orthogonal residual.
pub fn decompose(
    fiber: &Path1D,
    conns: ConnectionPair<'_>,
    qbar: f64,
) -> Result<FiberDecomposition> {
    fiber.validate()?;
    let m = fiber.m;
    let n = fiber.grid.n;
    let (r_minus, d_minus, fb_minus) = optimal_shift(fiber, conns.minus, Metric::L2);
    let (r_plus, d_plus, fb_plus) = optimal_shift(fiber, conns.plus, Metric::L2);
    // tie-break toward plus
    let tie = (d_minus - d_plus).abs() <= 1e-10 * (1.0 + d_plus);
    let (sign, h, q, fallback) = if d_plus <= d_minus || tie {
        (Sign::Plus, r_plus, d_plus, fb_plus)
    } else {
        (Sign::Minus, r_minus, d_minus, fb_minus)
    };
    let conn = conns.get(sign);
    let interp = conn.interp();

    let mut v = Path1D::zeros(fiber.grid.clone(), m);
    let mut val = vec![0.0; m];
    for i in 0..n {
        interp.eval(fiber.grid.node(i) - h, &mut val);
        for a in 0..m {
            v.values[i * m + a] = fiber.values[i * m + a] - val[a];
        }
    }
    let q_check = v.l2_inner(&v).sqrt();
    debug_assert!((q_check - q).abs() <= 1e-8 * (1.0 + q));

    // orthogonality residual against the translated derivative
    let mut dval = vec![0.0; m];
    let mut ip = 0.0;
    let mut du_norm2 = 0.0;
    for i in 0..n {
        interp.eval_with_deriv(fiber.grid.node(i) - h, &mut val, &mut dval);
        let w = fiber.grid.weight(i);
        for a in 0..m {
            ip += w * v.values[i * m + a] * dval[a];
            du_norm2 += w * dval[a] * dval[a];
        }
    }
    let orthogonality = ip.abs() / (du_norm2.sqrt() * q_check.max(1e-300));

    let mut nu = v.clone();
    if q_check > 0.0 {
        nu.values.iter_mut().for_each(|x| *x /= q_check);
    }

    let (_, q1, _) = optimal_shift(fiber, conn, Metric::H1);
    let q1 = q1.max(q_check);
    let ambiguous = q_check >= qbar || tie || fallback;
    Ok(FiberDecomposition {
        sign,
        h,
        q: q_check,
        q1,
        v,
        nu,
        ambiguous,
        orthogonality,
    })
}

/// Shift a trace by `h` (sampled through cubic interpolation with flat
/// extension) and remove its component along the translated profile
/// derivative.
pub fn shift_and_project(
    trace: &Path1D,
    conn: &Connection,
    h: f64,
) -> Path1D {
    let m = trace.m;
    let n = trace.grid.n;
    let ti = CubicInterp::with_flat_tails(trace);
    let mut out = Path1D::zeros(trace.grid.clone(), m);
    for i in 0..n {
        let y = trace.grid.node(i);
        let k = i * m;
        ti.eval(y + h, &mut out.values[k..k + m]);
    }
    let du = conn.path.nodal_derivative();
    let ip = out.l2_inner(&du);
    let nn = du.l2_inner(&du);
    for i in 0..out.values.len() {
        out.values[i] -= (ip / nn) * du.values[i];
    }
    out
}

/// Shift derivative h'(x) = <v_x, v_y> / |u' + v_y|^2 evaluated from a
/// decomposition and the x-derivative trace of the fiber.
pub fn h_prime(
    dec: &FiberDecomposition,
    fiber_x: &Path1D,
    conn: &Connection,
) -> Result<f64> {
    if dec.ambiguous {
        return Err(Error::InvalidInput(
            "shift derivative undefined for ambiguous decompositions".into(),
        ));
    }
    let du = conn.path.nodal_derivative();
    let du_norm = du.l2_norm();
    let v_y = dec.v.nodal_derivative();
    let vy_norm = v_y.l2_norm();
    if vy_norm > 0.5 * du_norm {
        return Err(Error::GuardViolated {
            vy_norm,
            limit: 0.5 * du_norm,
        });
    }
    let v_x = shift_and_project(fiber_x, conn, dec.h);
    let mut denom = 0.0;
    let mut numer = 0.0;
    let m = dec.v.m;
    for i in 0..dec.v.grid.n {
        let w = dec.v.grid.weight(i);
        for a in 0..m {
            let s = du.values[i * m + a] + v_y.values[i * m + a];
            denom += w * s * s;
            numer += w * v_x.values[i * m + a] * v_y.values[i * m + a];
        }
    }
    Ok(numer / denom)
}

/// Effective potential W(v) = J(u + v) - J(u) for a residual on the
/// connection grid.
pub fn effective_potential(p: &Potential, conn: &Connection, v: &Path1D) -> f64 {
    let mut path = conn.path.clone();
    for i in 0..path.values.len() {
        path.values[i] += v.values[i];
    }
    discrete_action(p, &path) - conn.action
}

#[derive(Clone, Debug, Serialize)]
pub struct MonotoneFReport {
    pub pass: bool,
    pub failing_p: Option<f64>,
    pub values: Vec<(f64, f64)>,
}

/// Check that p -> f(p,x) |nu_x|^2 = p^2 |nu_x|^2 - p^4 <nu_x,nu_y>^2 / |u' + p nu_y|^2
/// is non-negative and non-decreasing on (0, q].
pub fn monotone_f_check(
    dec: &FiberDecomposition,
    fiber_x: &Path1D,
    conn: &Connection,
    samples: usize,
) -> Result<MonotoneFReport> {
    if dec.q <= 0.0 {
        return Err(Error::InvalidInput("monotone check needs q > 0".into()));
    }
    let v_x = shift_and_project(fiber_x, conn, dec.h);
    let mut nu_x = v_x.clone();
    // nu_x = (v_x - <v_x, nu> nu) / q
    let ip = v_x.l2_inner(&dec.nu);
    for i in 0..nu_x.values.len() {
        nu_x.values[i] = (v_x.values[i] - ip * dec.nu.values[i]) / dec.q;
    }
    let nu_y = dec.nu.nodal_derivative();
    let du = conn.path.nodal_derivative();
    let nx2 = nu_x.l2_inner(&nu_x);
    let cross = nu_x.l2_inner(&nu_y);
    let mut values = Vec::with_capacity(samples);
    let mut pass = true;
    let mut failing_p = None;
    let mut prev = 0.0;
    for k in 1..=samples {
        let pv = dec.q * k as f64 / samples as f64;
        let mut denom = 0.0;
        let m = du.m;
        for i in 0..du.grid.n {
            let w = du.grid.weight(i);
            for a in 0..m {
                let s = du.values[i * m + a] + pv * nu_y.values[i * m + a];
                denom += w * s * s;
            }
        }
        let f = pv * pv * nx2 - pv.powi(4) * cross * cross / denom;
        if f < -1e-12 || f + 1e-12 * (1.0 + f.abs()) < prev {
            pass = false;
            if failing_p.is_none() {
                failing_p = Some(pv);
            }
        }
        values.push((pv, f));
        prev = f;
    }
    Ok(MonotoneFReport {
        pass,
        failing_p,
        values,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct LinftyReport {
    pub pass: bool,
    pub max_abs: f64,
    pub bound: f64,
}

/// Interpolation-type check |v|_inf <= C1 |v|_L2^{2/3} (valid for residuals
/// with bounded derivative).
pub fn linfty_interpolation_check(v: &Path1D, c1: f64) -> LinftyReport {
    let m = v.m;
    let mut sup = 0.0f64;
    for i in 0..v.grid.n {
        let mut d2 = 0.0;
        for a in 0..m {
            d2 += v.values[i * m + a] * v.values[i * m + a];
        }
        sup = sup.max(d2.sqrt());
    }
    let bound = c1 * v.l2_norm().powf(2.0 / 3.0);
    LinftyReport {
        pass: sup <= bound + 1e-12,
        max_abs: sup,
        bound,
    }
}

/// Calibrate the constants of the metric-equivalence bounds
/// |h_L2 - h_H1| <= C q1 and |u - u(.-h_L2)|_H1 <= C~ q1 over random
/// perturbations of the connection.
pub fn calibrate_shift_constants(
    conn: &Connection,
    trials: usize,
    seed: u64,
) -> (f64, f64) {
    let dirs = crate::profile1d::smooth_orthogonal_directions(conn, trials, seed);
    let mut c_shift = 0.0f64;
    let mut c_metric = 1.0f64;
    let interp = conn.interp();
    for (k, nu) in dirs.iter().enumerate() {
        let amp = 0.01 + 0.04 * (k as f64 / trials.max(1) as f64);
        let mut fiber = conn.path.clone();
        for i in 0..fiber.values.len() {
            fiber.values[i] += amp * nu.values[i];
        }
        let (h0, _, _) = optimal_shift(&fiber, conn, Metric::L2);
        let (h1, q1, _) = optimal_shift(&fiber, conn, Metric::H1);
        if q1 > 0.0 {
            c_shift = c_shift.max((h0 - h1).abs() / q1);
            // H1 norm of the residual at the L2 shift
            let mut v = Path1D::zeros(fiber.grid.clone(), fiber.m);
            let mut val = vec![0.0; fiber.m];
            for i in 0..fiber.grid.n {
                interp.eval(fiber.grid.node(i) - h0, &mut val);
                for a in 0..fiber.m {
                    v.values[i * fiber.m + a] = fiber.values[i * fiber.m + a] - val[a];
                }
            }
            c_metric = c_metric.max(v.h1_norm() / q1);
        }
    }
    (c_shift, c_metric)
}

/// Default small-distance threshold under which decompositions are unique:
/// min(0.1, |u'| / (3 Ctilde)) with Ctilde from the shift calibration.
pub fn default_qbar(conn: &Connection, seed: u64) -> f64 {
    let (_, c_metric) = calibrate_shift_constants(conn, 24, seed);
    let du_norm = conn.path.nodal_derivative().l2_norm();
    (du_norm / (3.0 * c_metric)).min(0.1)
}

/// Penalized objective for the constrained excess-energy estimator.
struct PenalizedObjective<'a> {
    inner: crate::profile1d::PinnedActionObjective<'a>,
    conns: ConnectionPair<'a>,
    p_level: f64,
    rho: f64,
    warm_minus: Option<f64>,
    warm_plus: Option<f64>,
    single_connection: bool,
}

impl<'a> PenalizedObjective<'a> {
    fn q1(&mut self, path: &Path1D) -> (f64, Sign, f64) {
        let (rp, dp, _) = optimal_shift_warm(path, self.conns.plus, Metric::H1, self.warm_plus);
        self.warm_plus = Some(rp);
        if self.single_connection {
            return (dp, Sign::Plus, rp);
        }
        let (rm, dm, _) = optimal_shift_warm(path, self.conns.minus, Metric::H1, self.warm_minus);
        self.warm_minus = Some(rm);
        if dp <= dm {
            (dp, Sign::Plus, rp)
        } else {
            (dm, Sign::Minus, rm)
        }
    }
}

impl<'a> Objective for PenalizedObjective<'a> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        let mut f = self.inner.eval(x, grad);
        let path = self.inner.path.clone();
        let (q1, sign, r) = self.q1(&path);
        let gap = self.p_level - q1;
        if gap > 0.0 && q1 > 0.0 {
            f += self.rho * gap * gap;
            // d/du [rho (p - q1)^2] = -2 rho (p - q1) dq1/du,
            // dq1/du = grad of the H1 distance at the frozen optimal shift.
            let conn = self.conns.get(sign);
            let interp = conn.interp();
            let m = path.m;
            let n = path.grid.n;
            let h = path.grid.h;
            let mut v = Path1D::zeros(path.grid.clone(), m);
            let mut val = vec![0.0; m];
            for i in 0..n {
                interp.eval(path.grid.node(i) - r, &mut val);
                for a in 0..m {
                    v.values[i * m + a] = path.values[i * m + a] - val[a];
                }
            }
            let coef = -2.0 * self.rho * gap / q1;
            // L2 part
            for i in 1..n - 1 {
                let w = path.grid.weight(i);
                for a in 0..m {
                    grad[(i - 1) * m + a] += coef * w * v.values[i * m + a];
                }
            }
            // derivative part: d/du_i sum_cells h |(v_{i+1} - v_i)/h|^2 / 2-free form
            for i in 0..n - 1 {
                for a in 0..m {
                    let d = (v.values[(i + 1) * m + a] - v.values[i * m + a]) / h;
                    if i > 0 {
                        grad[(i - 1) * m + a] += coef * (-d);
                    }
                    if i + 1 < n - 1 {
                        grad[i * m + a] += coef * d;
                    }
                }
            }
        }
        f
    }

    fn precondition(&self, g: &[f64], out: &mut [f64]) {
        self.inner.precondition(g, out);
    }
}

/// Gradient check of the penalized excess-energy objective at a state where
/// the constraint is active (exercises the envelope term of the shift fit).
pub fn ep_objective_gradient_check(
    p: &Potential,
    conns: ConnectionPair<'_>,
    p_level: f64,
    grid: &crate::grid::Grid1D,
    n_dirs: usize,
    seed: u64,
) -> Result<f64> {
    let conn = conns.plus;
    let dirs = crate::profile1d::smooth_orthogonal_directions(conn, 1, seed.wrapping_add(1));
    let mut guess = conn.path.clone();
    if guess.grid != *grid {
        return Err(Error::InvalidInput("grid must match the connection".into()));
    }
    let nu_h1 = dirs[0].h1_norm();
    for i in 0..guess.values.len() {
        // half the constraint level: the penalty is active with margin
        guess.values[i] += 0.5 * p_level / nu_h1 * dirs[0].values[i];
    }
    guess.point_mut(0).copy_from_slice(&p.a_minus);
    guess.point_mut(grid.n - 1).copy_from_slice(&p.a_plus);
    let inner = crate::profile1d::PinnedActionObjective::new(p, guess.clone());
    let mut obj = PenalizedObjective {
        inner,
        conns,
        p_level,
        rho: 100.0,
        warm_minus: None,
        warm_plus: None,
        single_connection: std::ptr::eq(conns.minus, conns.plus),
    };
    let x = obj.inner.dofs_from_path(&guess);
    Ok(crate::minimize::gradient_check(&mut obj, &x, n_dirs, seed))
}

#[derive(Clone, Debug, Serialize)]
pub struct EpEstimate {
    pub value: f64,
    pub p_level: f64,
    pub q1_final: f64,
    pub rho_final: f64,
    /// Constraint never activated to within 1%: the minimizer escaped and the
    /// estimate is unreliable; raise the penalty cap.
    pub escaped: bool,
}

/// Upper estimate of the excess-energy lower bound e_p: minimize
/// J(u) + rho max(0, p - q1(u))^2 with increasing rho until the constraint is
/// active to 1%, and report J(minimizer) - c0.
pub fn estimate_ep(
    p: &Potential,
    conns: ConnectionPair<'_>,
    p_level: f64,
    grid: &crate::grid::Grid1D,
    cfg: &MinimizeConfig,
) -> Result<EpEstimate> {
    if p_level <= 0.0 {
        return Err(Error::InvalidInput("p must be positive".into()));
    }
    let c0 = conns.plus.action.min(conns.minus.action);
    // start from the connection plus a transverse H1-normalized bump of size p
    let conn = conns.plus;
    let dirs = crate::profile1d::smooth_orthogonal_directions(conn, 1, 91);
    let mut guess = conn.path.clone();
    if guess.grid != *grid {
        // resample the connection onto the requested grid
        let interp = conn.interp();
        guess = Path1D::from_fn(grid.clone(), p.m, |y, s| interp.eval(y, s));
        guess.point_mut(0).copy_from_slice(&p.a_minus);
        guess.point_mut(grid.n - 1).copy_from_slice(&p.a_plus);
    }
    let nu = if dirs[0].grid == *grid {
        dirs[0].clone()
    } else {
        let ni = CubicInterp::with_flat_tails(&dirs[0]);
        Path1D::from_fn(grid.clone(), p.m, |y, s| ni.eval(y, s))
    };
    let nu_h1 = nu.h1_norm();
    for i in 0..guess.values.len() {
        guess.values[i] += 1.05 * p_level / nu_h1 * nu.values[i];
    }
    guess.point_mut(0).copy_from_slice(&p.a_minus);
    guess.point_mut(grid.n - 1).copy_from_slice(&p.a_plus);

    let mut rho = 10.0;
    let mut best = None;
    for _ in 0..8 {
        let inner = crate::profile1d::PinnedActionObjective::new(p, guess.clone());
        let mut obj = PenalizedObjective {
            inner,
            conns,
            p_level,
            rho,
            warm_minus: None,
            warm_plus: None,
            single_connection: std::ptr::eq(conns.minus, conns.plus),
        };
        let mut x = obj.inner.dofs_from_path(&guess);
        let res = minimize(&mut obj, &mut x, cfg)?;
        let path = obj.inner.path_with_dofs(&x).clone();
        let (q1, _, _) = obj.q1(&path);
        let value = discrete_action(p, &path) - c0;
        best = Some(EpEstimate {
            value,
            p_level,
            q1_final: q1,
            rho_final: rho,
            escaped: false,
        });
        let _ = res;
        guess = path;
        if q1 >= 0.99 * p_level {
            break;
        }
        rho *= 10.0;
    }
    let mut est = best.unwrap();
    if est.q1_final < 0.99 * p_level {
        est.escaped = true;
    }
    Ok(est)
}
