//! T-periodic brake orbits of u'' = W_u(u) by minimization of the action on
//! the symmetry-reduced quarter domain [0, T/4]: the turning symmetry
//! u(T/4 + t) = u(T/4 - t) and the equivariance u(-t) = g u(t) (g the
//! reflection exchanging the minima) reduce the period to a quarter with the
//! t = 0 node constrained to the fixed plane of g and a free node at T/4.

use crate::error::{Error, Result};
use crate::grid::{Grid1D, Path1D};
use crate::minimize::{minimize, MinimizeConfig, MinimizeResult, Objective};
use crate::potential::{nondegeneracy_constants, sigma_and_m, Potential};
use crate::profile1d::Connection;
use crate::sum::pairwise_by;
use serde::Serialize;

/// A computed T-periodic brake orbit, stored as its quarter trace.
#[derive(Clone, Debug)]
pub struct BrakeOrbit {
    pub quarter: Path1D,
    pub t_period: f64,
    /// Action over the full period (4x the quarter value).
    pub action: f64,
    /// The conserved value 1/2 |u'|^2 - W(u) = -W(u(T/4)).
    pub energy_constant: f64,
    pub w_turn: f64,
    /// Ball radius M of the a-priori sup bound.
    pub ball_radius_m: f64,
    /// Energy bound C0 of the explicit comparison map.
    pub c0_bound: f64,
    /// Orbit touches a minimum strictly inside the half period.
    pub finite_time_contact: bool,
    pub minimize: MinimizeResult,
}

/// Quarter-domain action: cells on [0, T/4], trapezoid potential weights.
pub fn quarter_action(p: &Potential, quarter: &Path1D) -> f64 {
    let m = quarter.m;
    let h = quarter.grid.h;
    let n = quarter.grid.n;
    let deriv = pairwise_by(n - 1, |i| {
        let mut s = 0.0;
        for a in 0..m {
            let d = (quarter.values[(i + 1) * m + a] - quarter.values[i * m + a]) / h;
            s += d * d;
        }
        0.5 * h * s
    });
    let pot = pairwise_by(n, |i| quarter.grid.weight(i) * p.eval_w(quarter.point(i)));
    deriv + pot
}

/// Full-period action of a quarter trace (symmetry unfolding).
pub fn action_j0t(p: &Potential, quarter: &Path1D) -> f64 {
    4.0 * quarter_action(p, quarter)
}

/// Unfold the quarter to the half period [0, T/2] via the turning symmetry.
pub fn unfold_half(orbit: &BrakeOrbit) -> Path1D {
    let q = &orbit.quarter;
    let n = q.grid.n;
    let m = q.m;
    let mut out = Path1D::zeros(
        Grid1D {
            lo: 0.0,
            h: q.grid.h,
            n: 2 * n - 1,
        },
        m,
    );
    for i in 0..n {
        out.point_mut(i).copy_from_slice(q.point(i));
    }
    for k in 1..n {
        let src = q.point(n - 1 - k).to_vec();
        out.point_mut(n - 1 + k).copy_from_slice(&src);
    }
    out
}

/// Unfold to one full period [0, T]: u(T/2 + s) = g u(s).
pub fn unfold_period(orbit: &BrakeOrbit, p: &Potential) -> Result<Path1D> {
    let g = p.minima_swap()?;
    let half = unfold_half(orbit);
    let n2 = half.grid.n;
    let m = half.m;
    let mut out = Path1D::zeros(
        Grid1D {
            lo: 0.0,
            h: half.grid.h,
            n: 2 * n2 - 1,
        },
        m,
    );
    for i in 0..n2 {
        out.point_mut(i).copy_from_slice(half.point(i));
    }
    let mut gu = vec![0.0; m];
    for k in 1..n2 {
        apply(g, m, half.point(k), &mut gu);
        out.point_mut(n2 - 1 + k).copy_from_slice(&gu);
    }
    Ok(out)
}

/// Sample the unfolded orbit at an arbitrary time in [-T/2, T/2] by symmetry
/// and linear interpolation of the quarter trace.
pub fn eval_unfolded(orbit: &BrakeOrbit, p: &Potential, t: f64, out: &mut [f64]) -> Result<()> {
    let g = p.minima_swap()?;
    let m = orbit.quarter.m;
    let tq = 0.25 * orbit.t_period;
    let mut s = t;
    let mut reflect = false;
    if s < 0.0 {
        s = -s;
        reflect = true;
    }
    if s > 2.0 * tq {
        return Err(Error::InvalidInput("time outside the unfolded half period".into()));
    }
    if s > tq {
        s = 2.0 * tq - s;
    }
    let grid = &orbit.quarter.grid;
    let x = (s - grid.lo) / grid.h;
    let i = (x.floor() as usize).min(grid.n - 2);
    let t_loc = x - i as f64;
    let mut val = vec![0.0; m];
    for a in 0..m {
        val[a] = orbit.quarter.values[i * m + a] * (1.0 - t_loc)
            + orbit.quarter.values[(i + 1) * m + a] * t_loc;
    }
    if reflect {
        apply(g, m, &val, out);
    } else {
        out.copy_from_slice(&val);
    }
    Ok(())
}

fn apply(g: &[f64], m: usize, u: &[f64], out: &mut [f64]) {
    for i in 0..m {
        let mut s = 0.0;
        for j in 0..m {
            s += g[i * m + j] * u[j];
        }
        out[i] = s;
    }
}

use crate::potential::fixed_plane_basis;

/// Objective on the quarter domain: node 0 in fixed-plane coordinates,
/// nodes 1..n-1 free, all node values clamped to |u| <= 2M.
pub struct QuarterObjective<'a> {
    pub p: &'a Potential,
    pub quarter: Path1D,
    basis: Vec<Vec<f64>>,
    ball_2m: f64,
    ball_m: f64,
    c0_bound: f64,
    /// Set when an iterate with action <= C0 exceeds the a-priori bound M.
    pub sup_bound_violated: bool,
    grad_full: Vec<f64>,
    precond: Option<crate::eig::BandedLdlt>,
    diag_gamma: bool,
}

impl<'a> QuarterObjective<'a> {
    pub fn new(
        p: &'a Potential,
        template: Path1D,
        ball_m: f64,
        c0_bound: f64,
    ) -> Result<Self> {
        let g = p.minima_swap()?;
        let m = p.m;
        let basis = fixed_plane_basis(g, m);
        let diag_gamma = (0..m * m).all(|k| {
            let (i, j) = (k / m, k % m);
            i == j || g[k].abs() < 1e-15
        });
        let n = template.grid.n;
        let h = template.grid.h;
        // (h(alpha I - Lap))^{-1} on nodes 1..n-1, free end at n-1
        let ni = n - 1;
        let alpha = 1.0;
        let mut lap = crate::eig::SymBanded::zeros(ni, 1);
        for i in 0..ni {
            let d = if i == ni - 1 {
                1.0 / h + 0.5 * alpha * h
            } else {
                2.0 / h + alpha * h
            };
            lap.set(0, i, d);
            if i + 1 < ni {
                lap.set(1, i, -1.0 / h);
            }
        }
        let (fac, _) = lap.ldlt(0.0);
        Ok(Self {
            p,
            quarter: template,
            basis,
            ball_2m: 2.0 * ball_m,
            ball_m,
            c0_bound,
            sup_bound_violated: false,
            grad_full: vec![0.0; n * m],
            precond: Some(fac),
            diag_gamma,
        })
    }

    pub fn mp(&self) -> usize {
        self.basis.len()
    }

    pub fn dofs_from_quarter(&self, q: &Path1D) -> Vec<f64> {
        let m = q.m;
        let mp = self.mp();
        let mut x = Vec::with_capacity(self.dim());
        let u0 = q.point(0);
        for b in &self.basis {
            x.push(u0.iter().zip(b).map(|(u, e)| u * e).sum());
        }
        x.extend_from_slice(&q.values[m..]);
        debug_assert_eq!(x.len(), mp + (q.grid.n - 1) * m);
        x
    }

    pub fn write_dofs(&mut self, x: &[f64]) {
        let m = self.quarter.m;
        let mp = self.basis.len();
        {
            let basis = &self.basis;
            let u0 = self.quarter.point_mut(0);
            u0.iter_mut().for_each(|v| *v = 0.0);
            for (c, b) in x[..mp].iter().zip(basis) {
                for a in 0..m {
                    u0[a] += c * b[a];
                }
            }
        }
        self.quarter.values[m..].copy_from_slice(&x[mp..]);
    }
}

impl<'a> Objective for QuarterObjective<'a> {
    fn dim(&self) -> usize {
        self.mp() + (self.quarter.grid.n - 1) * self.quarter.m
    }

    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.write_dofs(x);
        let p = self.p;
        let q = &self.quarter;
        let m = q.m;
        let h = q.grid.h;
        let n = q.grid.n;
        let f = quarter_action(p, q);
        // gradient over all nodes
        let gf = &mut self.grad_full;
        gf.iter_mut().for_each(|g| *g = 0.0);
        let mut gw = vec![0.0; m];
        for i in 0..n {
            p.grad_w(q.point(i), &mut gw).expect("potential gradient");
            let w = q.grid.weight(i);
            for a in 0..m {
                gf[i * m + a] += w * gw[a];
            }
        }
        for i in 0..n - 1 {
            for a in 0..m {
                let d = (q.values[(i + 1) * m + a] - q.values[i * m + a]) / h;
                gf[i * m + a] -= d;
                gf[(i + 1) * m + a] += d;
            }
        }
        let mp = self.basis.len();
        for (k, b) in self.basis.iter().enumerate() {
            grad[k] = b.iter().zip(&gf[..m]).map(|(e, g)| e * g).sum();
        }
        grad[mp..].copy_from_slice(&gf[m..]);
        // a-priori sup bound audit on energy-feasible iterates
        if 4.0 * f <= self.c0_bound {
            let mut sup = 0.0f64;
            for i in 0..n {
                let norm2: f64 = q.point(i).iter().map(|v| v * v).sum();
                sup = sup.max(norm2);
            }
            if sup.sqrt() > self.ball_m * (1.0 + 1e-9) {
                self.sup_bound_violated = true;
            }
        }
        f
    }

    fn hess_vec(&mut self, x: &[f64], v: &[f64], out: &mut [f64]) -> bool {
        self.write_dofs(x);
        let p = self.p;
        let m = self.quarter.m;
        let n = self.quarter.grid.n;
        let h = self.quarter.grid.h;
        let mp = self.basis.len();
        // assemble full-space direction
        let mut vf = vec![0.0; n * m];
        for (c, b) in v[..mp].iter().zip(&self.basis) {
            for a in 0..m {
                vf[a] += c * b[a];
            }
        }
        vf[m..].copy_from_slice(&v[mp..]);
        let mut hvf = vec![0.0; n * m];
        let mut hw = vec![0.0; m * m];
        for i in 0..n {
            p.hess_w(self.quarter.point(i), &mut hw)
                .expect("potential Hessian");
            let w = self.quarter.grid.weight(i);
            for a in 0..m {
                let mut s = 0.0;
                for b in 0..m {
                    s += hw[a * m + b] * vf[i * m + b];
                }
                hvf[i * m + a] += w * s;
            }
        }
        for i in 0..n - 1 {
            for a in 0..m {
                let d = (vf[(i + 1) * m + a] - vf[i * m + a]) / h;
                hvf[i * m + a] -= d;
                hvf[(i + 1) * m + a] += d;
            }
        }
        for (k, b) in self.basis.iter().enumerate() {
            out[k] = b.iter().zip(&hvf[..m]).map(|(e, g)| e * g).sum();
        }
        out[mp..].copy_from_slice(&hvf[m..]);
        true
    }

    fn project_point(&self, x: &mut [f64]) -> bool {
        let m = self.quarter.m;
        let mp = self.basis.len();
        let mut changed = false;
        let clamp = |block: &mut [f64], changed: &mut bool, r: f64| {
            let norm2: f64 = block.iter().map(|v| v * v).sum();
            let norm = norm2.sqrt();
            if norm > r {
                let s = r / norm;
                block.iter_mut().for_each(|v| *v *= s);
                *changed = true;
            }
        };
        if mp > 0 {
            clamp(&mut x[..mp], &mut changed, self.ball_2m);
        }
        for blk in x[mp..].chunks_mut(m) {
            clamp(blk, &mut changed, self.ball_2m);
        }
        changed
    }

    fn precondition(&self, g: &[f64], out: &mut [f64]) {
        let h = self.quarter.grid.h;
        match (&self.precond, self.diag_gamma) {
            (Some(fac), true) => {
                let m = self.quarter.m;
                let mp = self.basis.len();
                let ni = self.quarter.grid.n - 1;
                // node-0 coords: diagonal scaling consistent with the tridiagonal row
                for k in 0..mp {
                    out[k] = g[k] / (1.0 / h + 0.5 * h);
                }
                let mut comp = vec![0.0; ni];
                for a in 0..m {
                    for i in 0..ni {
                        comp[i] = g[mp + i * m + a];
                    }
                    fac.solve_in_place(&mut comp);
                    for i in 0..ni {
                        out[mp + i * m + a] = comp[i];
                    }
                }
            }
            _ => out.copy_from_slice(g),
        }
    }
}

/// Energy bound of the explicit comparison map (linear transition on [0,1],
/// constant at a+ afterwards), independent of T.
pub fn energy_bound_c0(p: &Potential) -> f64 {
    let grid = Grid1D::new(0.0, 2.0, 2001).unwrap();
    let tilde = Path1D::from_fn(grid, p.m, |t, s| {
        let c = t.clamp(-1.0, 1.0);
        for a in 0..p.m {
            s[a] = 0.5 * (p.a_plus[a] + p.a_minus[a] + c * (p.a_plus[a] - p.a_minus[a]));
        }
    });
    action_j0t(p, &tilde)
}

/// Ball radius M for the a-priori sup bound, with the radial growth table
/// extended until the integral reaches C0.
pub fn ball_radius(p: &Potential, c0_bound: f64) -> Result<f64> {
    let mut r_max = (4.0 * p.minima_radius()).max(4.0);
    for _ in 0..8 {
        match sigma_and_m(p, c0_bound, r_max) {
            Ok((_, m_ball)) => return Ok(m_ball),
            Err(Error::RMaxTooSmall { .. }) => r_max *= 2.0,
            Err(e) => return Err(e),
        }
    }
    sigma_and_m(p, c0_bound, r_max).map(|(_, m)| m)
}

/// Initial guess on the quarter domain: smoothed transition from the fixed
/// plane toward a+, plus a transverse channel bump for m > 1.
pub fn brake_guess(p: &Potential, grid: &Grid1D, width: f64) -> Result<Path1D> {
    let g = p.minima_swap()?;
    let m = p.m;
    let mut mid = vec![0.0; m];
    for a in 0..m {
        mid[a] = 0.5 * (p.a_minus[a] + p.a_plus[a]);
    }
    let mut mid_proj = vec![0.0; m];
    Potential::project_fixed_plane(g, m, &mid, &mut mid_proj);
    let mut guess = Path1D::from_fn(grid.clone(), m, |t, s| {
        let w = (width * t).tanh();
        for a in 0..m {
            s[a] = mid_proj[a] + w * (p.a_plus[a] - mid_proj[a]);
        }
    });
    if m > 1 {
        if let Ok(dir) = crate::profile1d::antisym_basis_vector(&p.gamma, m) {
            let amp = 0.15 * dist(&p.a_plus, &p.a_minus);
            for i in 0..grid.n {
                let t = grid.node(i);
                let bump = amp / (width * t).cosh();
                for a in 0..m {
                    guess.values[i * m + a] += bump * dir[a];
                }
            }
            // keep the t = 0 node on the fixed plane
            let u0 = guess.point(0).to_vec();
            let mut u0p = vec![0.0; m];
            Potential::project_fixed_plane(g, m, &u0, &mut u0p);
            guess.point_mut(0).copy_from_slice(&u0p);
        }
    }
    Ok(guess)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Minimize the reduced action for one period.
pub fn minimize_brake(
    p: &Potential,
    t_period: f64,
    h: f64,
    cfg: &MinimizeConfig,
) -> Result<BrakeOrbit> {
    minimize_brake_from(p, t_period, h, cfg, None)
}

/// Same, with an explicit initial guess (used by the symmetry checks).
pub fn minimize_brake_from(
    p: &Potential,
    t_period: f64,
    h: f64,
    cfg: &MinimizeConfig,
    guess: Option<Path1D>,
) -> Result<BrakeOrbit> {
    let n = (0.25 * t_period / h).round() as usize + 1;
    if n < 16 {
        return Err(Error::NonConvergence(format!(
            "period too short for the grid: {n} quarter nodes, need at least 16"
        )));
    }
    let grid = Grid1D::new(0.0, 0.25 * t_period, n)?;
    let ndc = nondegeneracy_constants(p)?;
    let c0_bound = energy_bound_c0(p);
    let ball_m = ball_radius(p, c0_bound)?;
    let width = ndc.gamma_hi / (2.0 * std::f64::consts::SQRT_2);
    let guess = match guess {
        Some(g) => {
            if g.grid != grid || g.m != p.m {
                return Err(Error::InvalidInput("guess grid mismatch".into()));
            }
            g
        }
        None => brake_guess(p, &grid, width)?,
    };
    let mut obj = QuarterObjective::new(p, guess.clone(), ball_m, c0_bound)?;
    let mut x = obj.dofs_from_quarter(&guess);
    obj.project_point(&mut x);
    let res = minimize(&mut obj, &mut x, cfg)?;
    if !res.converged {
        return Err(Error::NonConvergence(format!(
            "brake solve stalled at |g| = {:.3e} after {} iterations",
            res.grad_inf, res.iterations
        )));
    }
    if obj.sup_bound_violated {
        return Err(Error::ConstraintActive {
            max_norm: obj.quarter.max_norm_nodes(),
            ball_m,
        });
    }
    obj.write_dofs(&x);
    let quarter = obj.quarter.clone();
    let sup = quarter.max_norm_nodes();
    if sup > ball_m * (1.0 + 1e-9) {
        return Err(Error::ConstraintActive {
            max_norm: sup,
            ball_m,
        });
    }
    let w_turn = p.eval_w(quarter.point(n - 1));
    let action = 4.0 * res.value;
    // contact with a minimum strictly inside (0, T/2)
    let mut contact = false;
    for i in 1..n {
        let d = dist(quarter.point(i), &p.a_plus).min(dist(quarter.point(i), &p.a_minus));
        if d <= 1e-10 {
            contact = true;
            break;
        }
    }
    Ok(BrakeOrbit {
        quarter,
        t_period,
        action,
        energy_constant: -w_turn,
        w_turn,
        ball_radius_m: ball_m,
        c0_bound,
        finite_time_contact: contact,
        minimize: res,
    })
}

impl Path1D {
    /// Max euclidean node norm.
    pub fn max_norm_nodes(&self) -> f64 {
        let mut sup = 0.0f64;
        for i in 0..self.grid.n {
            let norm2: f64 = self.point(i).iter().map(|v| v * v).sum();
            sup = sup.max(norm2);
        }
        sup.sqrt()
    }
}

/// Max residual of the conservation identity 1/2 |u'|^2 - W(u) + W(u(T/4)),
/// centered differences with the symmetric extensions at both ends.
pub fn energy_residual(p: &Potential, orbit: &BrakeOrbit) -> Result<f64> {
    let g = p.minima_swap()?;
    let q = &orbit.quarter;
    let m = q.m;
    let n = q.grid.n;
    let h = q.grid.h;
    let w_turn = orbit.w_turn;
    let mut worst = 0.0f64;
    let mut gu = vec![0.0; m];
    for i in 0..n {
        let mut speed2 = 0.0;
        for a in 0..m {
            let (prev, next) = if i == 0 {
                apply(g, m, q.point(1), &mut gu);
                (gu[a], q.values[m + a])
            } else if i == n - 1 {
                (q.values[(n - 2) * m + a], q.values[(n - 2) * m + a])
            } else {
                (q.values[(i - 1) * m + a], q.values[(i + 1) * m + a])
            };
            let d = (next - prev) / (2.0 * h);
            speed2 += d * d;
        }
        let r = (0.5 * speed2 - p.eval_w(q.point(i)) + w_turn).abs();
        worst = worst.max(r);
    }
    Ok(worst)
}

/// Max residual of the equation u'' = W_u(u), second differences with
/// symmetric extensions.
pub fn el_residual(p: &Potential, orbit: &BrakeOrbit) -> Result<f64> {
    let g = p.minima_swap()?;
    let q = &orbit.quarter;
    let m = q.m;
    let n = q.grid.n;
    let h = q.grid.h;
    let mut worst = 0.0f64;
    let mut gw = vec![0.0; m];
    let mut gu = vec![0.0; m];
    for i in 0..n {
        p.grad_w(q.point(i), &mut gw)?;
        for a in 0..m {
            let (prev, next) = if i == 0 {
                apply(g, m, q.point(1), &mut gu);
                (gu[a], q.values[m + a])
            } else if i == n - 1 {
                (q.values[(n - 2) * m + a], q.values[(n - 2) * m + a])
            } else {
                (q.values[(i - 1) * m + a], q.values[(i + 1) * m + a])
            };
            let dd = (next - 2.0 * q.values[i * m + a] + prev) / (h * h);
            worst = worst.max((dd - gw[a]).abs());
        }
    }
    Ok(worst)
}

/// The ramp width of the excursion replacement: (q - q')^2 / C0.
pub fn delta_qq(q: f64, q_prime: f64, c0_bound: f64) -> f64 {
    (q - q_prime) * (q - q_prime) / c0_bound
}

/// min W over { dist(u, a-) >= s and dist(u, a+) >= s, |u| <= sup_bound },
/// tabulated over s by box sampling.
pub fn w_min_table(p: &Potential, sup_bound: f64, s_values: &[f64]) -> Vec<f64> {
    let m = p.m;
    let samples_per_dim: usize = match m {
        1 => 20001,
        2 => 401,
        _ => 41,
    };
    let mut mins = vec![f64::INFINITY; s_values.len()];
    let mut u = vec![0.0; m];
    let total: usize = samples_per_dim.pow(m as u32);
    for idx in 0..total {
        let mut rest = idx;
        for a in 0..m {
            let k = rest % samples_per_dim;
            rest /= samples_per_dim;
            u[a] = -sup_bound + 2.0 * sup_bound * k as f64 / (samples_per_dim - 1) as f64;
        }
        let d = dist(&u, &p.a_minus).min(dist(&u, &p.a_plus));
        let w = p.eval_w(&u);
        for (j, &s) in s_values.iter().enumerate() {
            if d >= s && w < mins[j] {
                mins[j] = w;
            }
        }
    }
    mins
}

/// max W over the ball dist(u, a) <= s.
pub fn w_max_ball(p: &Potential, a: &[f64], s: f64) -> f64 {
    let dirs = crate::potential::sphere_directions(p.m, 128, 23);
    let mut w = p.eval_w(a);
    for frac in [0.25, 0.5, 0.75, 1.0] {
        for d in &dirs {
            let u: Vec<f64> = a.iter().zip(d).map(|(ai, di)| ai + frac * s * di).collect();
            w = w.max(p.eval_w(&u));
        }
    }
    w
}

/// Replace an excursion above level q between q'-contact points by ramps of
/// width (q-q')^2/C0 into the minimum `a` and a constant stretch, exactly as
/// the descent construction prescribes. Returns the modified path and the
/// discrete action change (negative when the smallness test has margin).
pub fn clamp_excursion(
    p: &Potential,
    path: &Path1D,
    q: f64,
    q_prime: f64,
    a: &[f64],
    c0_bound: f64,
) -> Result<(Path1D, f64)> {
    if !(q_prime > 0.0 && q_prime < q) {
        return Err(Error::InvalidInput("need 0 < q' < q".into()));
    }
    let m = path.m;
    let n = path.grid.n;
    let d_at = |i: usize| dist(path.point(i), a);
    // the peak of the excursion
    let mut t_star = None;
    let mut peak = 0.0;
    for i in 0..n {
        let d = d_at(i);
        if d >= q && d > peak {
            peak = d;
            t_star = Some(i);
        }
    }
    let t_star = t_star.ok_or_else(|| {
        Error::PreconditionNotMet(format!("no node with |u - a| >= q = {q}"))
    })?;
    let mut tau1 = None;
    for i in (0..t_star).rev() {
        if d_at(i) <= q_prime {
            tau1 = Some(i);
            break;
        }
    }
    let mut tau2 = None;
    for i in t_star + 1..n {
        if d_at(i) <= q_prime {
            tau2 = Some(i);
            break;
        }
    }
    let (i1, i2) = match (tau1, tau2) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::PreconditionNotMet(format!(
                "no contact points |u - a| <= q' = {q_prime} flanking the excursion"
            )));
        }
    };
    let delta = delta_qq(q, q_prime, c0_bound);
    let h = path.grid.h;
    // smallness test, padded for grid sampling of the ramps
    let sup_bound = path.max_norm_nodes();
    let ns = 256;
    let s_values: Vec<f64> = (0..ns)
        .map(|k| q_prime + (q - q_prime) * k as f64 / (ns - 1) as f64)
        .collect();
    let wmin = w_min_table(p, sup_bound.max(p.minima_radius() * 2.0), &s_values);
    let ds = (q - q_prime) / (ns - 1) as f64;
    let mut rhs = 0.0;
    for k in 0..ns - 1 {
        rhs += 0.5 * ((2.0 * wmin[k]).sqrt() + (2.0 * wmin[k + 1]).sqrt()) * ds;
    }
    let wmax = w_max_ball(p, a, q_prime);
    let lhs = 0.5 * q_prime * q_prime / delta + (delta + 2.0 * h) * wmax;
    if lhs >= rhs {
        return Err(Error::SmallnessFails { lhs, rhs });
    }
    // construct the replacement
    let t1 = path.grid.node(i1);
    let t2 = path.grid.node(i2);
    let mut v = path.clone();
    for i in i1..=i2 {
        let t = path.grid.node(i);
        let out = v.point_mut(i);
        if t <= t1 + delta {
            let s = (t - t1) / delta;
            for b in 0..m {
                out[b] = path.values[i1 * m + b] * (1.0 - s) + a[b] * s;
            }
        } else if t >= t2 - delta {
            let s = (t2 - t) / delta;
            for b in 0..m {
                out[b] = path.values[i2 * m + b] * (1.0 - s) + a[b] * s;
            }
        } else {
            out.copy_from_slice(a);
        }
    }
    let action_delta = crate::profile1d::discrete_action(p, &v)
        - crate::profile1d::discrete_action(p, path);
    Ok((v, action_delta))
}

/// Smallest band entry time tau such that |u(t) - a+| < q for all
/// t in [tau, T/4] on the quarter trace (hence on [tau, T/2 - tau] unfolded).
pub fn confinement_check(orbit: &BrakeOrbit, p: &Potential, q: f64) -> Option<f64> {
    let quarter = &orbit.quarter;
    let n = quarter.grid.n;
    let mut last_bad: Option<usize> = None;
    for i in 0..n {
        if dist(quarter.point(i), &p.a_plus) >= q {
            last_bad = Some(i);
        }
    }
    match last_bad {
        None => Some(0.0),
        Some(i) if i + 1 < n => Some(quarter.grid.node(i + 1)),
        Some(_) => None,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BrakeSweepRow {
    pub t_period: f64,
    pub action: f64,
    pub w_turn: f64,
    pub tau_q: Option<f64>,
    pub window_dist: f64,
    pub energy_residual: f64,
    pub el_residual: f64,
    pub turn_amplitude: f64,
}

/// Solve for each period in `t_list` and compare the unfolded orbits to the
/// reference connection on the window [-window, window]. Periods too short
/// for the grid are skipped. Instances run on up to `threads` workers.
pub fn sweep_t(
    p: &Potential,
    t_list: &[f64],
    h: f64,
    window: f64,
    conn: &Connection,
    cfg: &MinimizeConfig,
    threads: usize,
) -> Result<Vec<BrakeSweepRow>> {
    let mut rows: Vec<Option<Result<BrakeSweepRow>>> = (0..t_list.len()).map(|_| None).collect();
    let threads = threads.max(1);
    let run_one = |&t_period: &f64| -> Result<BrakeSweepRow> {
        let orbit = minimize_brake(p, t_period, h, cfg)?;
        let e_res = energy_residual(p, &orbit)?;
        let el_res = el_residual(p, &orbit)?;
        let tau = confinement_check(&orbit, p, 0.1);
        let interp = conn.interp();
        let l = window.min(0.45 * t_period);
        let nsamp = (2.0 * l / h).round() as usize;
        let mut sup = 0.0f64;
        let mut uref = vec![0.0; p.m];
        let mut uorb = vec![0.0; p.m];
        for k in 0..=nsamp {
            let t = -l + 2.0 * l * k as f64 / nsamp as f64;
            interp.eval(t, &mut uref);
            eval_unfolded(&orbit, p, t, &mut uorb)?;
            let d = dist(&uorb, &uref);
            sup = sup.max(d);
        }
        let turn = orbit.quarter.point(orbit.quarter.grid.n - 1).to_vec();
        Ok(BrakeSweepRow {
            t_period,
            action: orbit.action,
            w_turn: orbit.w_turn,
            tau_q: tau,
            window_dist: sup,
            energy_residual: e_res,
            el_residual: el_res,
            turn_amplitude: dist(&turn, &vec![0.0; p.m]),
        })
    };
    if threads == 1 {
        for (i, t) in t_list.iter().enumerate() {
            rows[i] = Some(run_one(t));
        }
    } else {
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for chunk in t_list
                .iter()
                .enumerate()
                .collect::<Vec<_>>()
                .chunks((t_list.len() + threads - 1) / threads)
            {
                let chunk: Vec<(usize, f64)> = chunk.iter().map(|(i, t)| (*i, **t)).collect();
                handles.push(scope.spawn(move || {
                    chunk
                        .into_iter()
                        .map(|(i, t)| (i, run_one(&t)))
                        .collect::<Vec<_>>()
                }));
            }
            for hd in handles {
                for (i, r) in hd.join().expect("sweep worker panicked") {
                    rows[i] = Some(r);
                }
            }
        });
    }
    rows.into_iter()
        .map(|r| r.expect("sweep row missing"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_formula() {
        assert!((delta_qq(0.2, 0.05, 1.0) - 0.0225).abs() < 1e-15);
        assert_eq!(delta_qq(0.2, 0.05, 1.0), (0.2 - 0.05) * (0.2 - 0.05) / 1.0);
    }

    #[test]
    fn c0_bound_scalar() {
        // transition cost: int_{-1}^{1} (1/2 + (1-t^2)^2/4) dt = 1 + 4/15, twice per period
        let c0 = energy_bound_c0(&Potential::scalar_quartic());
        assert!((c0 - 2.0 * (1.0 + 4.0 / 15.0)).abs() < 1e-4, "{c0}");
    }

    #[test]
    fn constant_center_path_action() {
        // path identically 0 in the scalar case: J = T W(0) = T/4 * 4 * 0.25
        let p = Potential::scalar_quartic();
        let grid = Grid1D::new(0.0, 10.0, 1001).unwrap();
        let path = Path1D::zeros(grid, 1);
        assert!((action_j0t(&p, &path) - 40.0 * 0.25).abs() < 1e-12);
    }

    #[test]
    fn scalar_brake_orbit_basics() {
        let p = Potential::scalar_quartic();
        let cfg = MinimizeConfig::default();
        let orbit = minimize_brake(&p, 40.0, 0.01, &cfg).unwrap();
        assert!(orbit.action <= orbit.c0_bound);
        assert!(orbit.w_turn < 1e-3);
        assert!(orbit.quarter.max_norm_nodes() <= orbit.ball_radius_m);
        assert!(energy_residual(&p, &orbit).unwrap() < 5e-4);
        assert!(el_residual(&p, &orbit).unwrap() < 5e-4);
        // descent contract
        assert!(orbit.minimize.value <= orbit.minimize.initial_value);
    }

    #[test]
    fn unfolding_action_identity() {
        let p = Potential::scalar_quartic();
        let cfg = MinimizeConfig::default();
        let orbit = minimize_brake(&p, 20.0, 0.01, &cfg).unwrap();
        let full = unfold_period(&orbit, &p).unwrap();
        // periodic full-period quadrature: all nodes weight h, first = last identified
        let m = full.m;
        let h = full.grid.h;
        let n = full.grid.n;
        let deriv = crate::sum::pairwise_by(n - 1, |i| {
            let mut s = 0.0;
            for a in 0..m {
                let d = (full.values[(i + 1) * m + a] - full.values[i * m + a]) / h;
                s += d * d;
            }
            0.5 * h * s
        });
        let pot = crate::sum::pairwise_by(n - 1, |i| h * p.eval_w(full.point(i)));
        let full_action = deriv + pot;
        assert!(
            (full_action - orbit.action).abs() < 1e-12 * (1.0 + orbit.action),
            "{} vs {}",
            full_action,
            orbit.action
        );
    }

    #[test]
    fn clamp_excursion_examples() {
        let p = Potential::scalar_quartic();
        let grid = Grid1D::new(0.0, 20.0, 4001).unwrap();
        // path near a+ = 1 with a bump leaving the q-ball between q'-contacts
        let path = Path1D::from_fn(grid.clone(), 1, |t, s| {
            s[0] = 1.0 + 0.3 * (-((t - 10.0) / 1.5).powi(2)).exp();
        });
        let (v, d) = clamp_excursion(&p, &path, 0.2, 0.02, &[1.0], 1.0).unwrap();
        assert!(d < 0.0, "action delta {d}");
        for i in 0..grid.n {
            assert!((v.values[i] - 1.0).abs() < 0.2 + 1e-12);
        }
        // no excursion
        let flat = Path1D::from_fn(grid.clone(), 1, |_, s| s[0] = 1.05);
        assert!(matches!(
            clamp_excursion(&p, &flat, 0.2, 0.02, &[1.0], 1.0),
            Err(Error::PreconditionNotMet(_))
        ));
        // q' too large: ramp cost beats the barrier integral
        let res = clamp_excursion(&p, &path, 0.2, 0.199, &[1.0], 1.0);
        assert!(matches!(res, Err(Error::SmallnessFails { .. })));
    }

    #[test]
    fn confinement_basics() {
        let p = Potential::scalar_quartic();
        let cfg = MinimizeConfig::default();
        let orbit = minimize_brake(&p, 40.0, 0.01, &cfg).unwrap();
        let tau = confinement_check(&orbit, &p, 0.1).unwrap();
        assert!(tau <= 5.0, "tau_q = {tau}");
        // q larger than the max deviation
        assert_eq!(confinement_check(&orbit, &p, 3.0), Some(0.0));
    }
}
