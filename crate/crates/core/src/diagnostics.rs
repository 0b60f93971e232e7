//! Cross-cutting verification: exponential decay fits of the fiber distance
//! q(x), shift-variation audits, the folded test-map energy comparison, and
//! self-convergence of the strip solutions as the period grows.

use crate::error::{Error, Result};
use crate::fiber::{effective_potential, ConnectionPair};
use crate::grid::{Field2D, Grid2D};
use crate::interp::CubicInterp;
use crate::minimize::MinimizeConfig;
use crate::potential::Potential;
use crate::profile1d::linear_fit;
use crate::strip2d::{
    fiber_series, hamiltonian_identities, minimize_strip, pde_residual, FiberSeries,
    StripSolution,
};
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct DecayFit {
    pub window: (f64, f64),
    pub rate: f64,
    pub prefactor: f64,
    pub r2: f64,
    pub samples: usize,
    /// q(x) <= sqrt(2) p e^{-rate (x - x_p)} at every sample in the window.
    pub pointwise_ok: bool,
    /// The cosh barrier p^2 cosh(sqrt(mu)(x - L/4)) / cosh(sqrt(mu)(x_p - L/4))
    /// dominates q^2 on the window.
    pub barrier_ok: bool,
    /// Fitted rate >= 0.9 * sqrt(mu)/2.
    pub rate_ok: bool,
}

/// Log-linear fit of q(x) on [x_p, L/4 - buffer].
pub fn fit_q_decay(
    series: &FiberSeries,
    mu_hat: f64,
    p_level: f64,
    buffer: f64,
) -> Result<DecayFit> {
    let n = series.len();
    let l_quarter = series.x[n - 1];
    let mut idx_p = None;
    for i in 0..n {
        if series.q1(i) <= p_level {
            idx_p = Some(i);
            break;
        }
    }
    let i0 = idx_p.ok_or_else(|| {
        Error::InvalidInput(format!("no fiber reaches q1 <= p = {p_level}"))
    })?;
    let x_p = series.x[i0];
    let x_hi = l_quarter - buffer;
    let mut xs = Vec::new();
    let mut logs = Vec::new();
    for i in i0..n {
        let x = series.x[i];
        let q = series.q(i);
        if x <= x_hi && q > 1e-13 {
            xs.push(x);
            logs.push(q.ln());
        }
    }
    if xs.len() < 10 {
        return Err(Error::TailTooShort(xs.len()));
    }
    let (slope, intercept, r2) = linear_fit(&xs, &logs);
    let rate = -slope;
    let mut pointwise_ok = true;
    let mut barrier_ok = true;
    let smu = mu_hat.sqrt();
    let denom = (smu * (x_p - l_quarter)).cosh();
    for (&x, &lq) in xs.iter().zip(&logs) {
        let q = lq.exp();
        if q > std::f64::consts::SQRT_2 * p_level * (-rate * (x - x_p)).exp() + 1e-12 {
            pointwise_ok = false;
        }
        let phi = p_level * p_level * (smu * (x - l_quarter)).cosh() / denom;
        if q * q > phi + 1e-12 {
            barrier_ok = false;
        }
    }
    Ok(DecayFit {
        window: (x_p, x_hi),
        rate,
        prefactor: intercept.exp(),
        r2,
        samples: xs.len(),
        pointwise_ok,
        barrier_ok,
        rate_ok: rate >= 0.9 * 0.5 * smu,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct HVariationReport {
    /// Range of the shift over non-ambiguous fibers, one entry per series.
    pub c_h: Vec<f64>,
    /// Total variation of the shift over non-ambiguous fibers.
    pub total_variation: Vec<f64>,
    /// x-measure of { J(u(x,.)) - c0 > e_p } per series.
    pub excess_measure: Vec<f64>,
    /// The bound C0 / e_p on that measure.
    pub measure_bound: f64,
    pub measure_ok: bool,
    /// C(h) estimates of the two largest runs agree within 20%
    /// (None when fewer than two series are given).
    pub stable: Option<bool>,
}

pub fn h_variation_audit(
    series_list: &[&FiberSeries],
    ep_estimate: f64,
    c0_bound: f64,
) -> HVariationReport {
    let mut c_h = Vec::new();
    let mut tv = Vec::new();
    let mut measures = Vec::new();
    for s in series_list {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut total = 0.0;
        let mut prev: Option<f64> = None;
        for i in 0..s.len() {
            if s.decs[i].ambiguous {
                continue;
            }
            let h = s.h(i);
            lo = lo.min(h);
            hi = hi.max(h);
            if let Some(ph) = prev {
                total += (h - ph).abs();
            }
            prev = Some(h);
        }
        c_h.push(if hi >= lo { hi - lo } else { 0.0 });
        tv.push(total);
        let mut meas = 0.0;
        for i in 0..s.len() {
            if s.j_fiber[i] - s.c0 > ep_estimate {
                meas += s.hx;
            }
        }
        // reduced domain covers a quarter period
        measures.push(4.0 * meas);
    }
    let bound = c0_bound / ep_estimate.max(1e-300);
    let measure_ok = measures.iter().all(|&m| m <= bound);
    let stable = if series_list.len() >= 2 {
        let a = c_h[c_h.len() - 2];
        let b = c_h[c_h.len() - 1];
        Some((a - b).abs() <= 0.2 * a.max(b).max(1e-12))
    } else {
        None
    };
    HVariationReport {
        c_h,
        total_variation: tv,
        excess_measure: measures,
        measure_bound: bound,
        measure_ok,
        stable,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TestmapRow {
    pub x: f64,
    pub q: f64,
    pub qhat: f64,
    /// Raw per-x energy density 1/2 |u_x|^2 + J(u(x,.)).
    pub density_actual: f64,
    /// The same density through the decomposition representation.
    pub density_repr: f64,
    /// Density of the folded test map.
    pub density_test: f64,
    pub fold_active: bool,
    /// Fold active but the test density fails to descend.
    pub violation: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct TestmapTable {
    pub rows: Vec<TestmapRow>,
    pub p_fold: f64,
    pub max_repr_error: f64,
    pub violations: usize,
}

/// Per-x comparison of the actual energy density against the folded test map
/// q -> qhat (identity below p, reflected on (p, 2p]). On a minimizer the
/// fold never activates; where it does, the test density must descend.
pub fn testmap_energy(
    p: &Potential,
    series: &FiberSeries,
    pair: ConnectionPair<'_>,
    p_fold: f64,
) -> TestmapTable {
    let n = series.len();
    let hx = series.hx;
    let mut rows = Vec::with_capacity(n);
    let mut max_err = 0.0f64;
    let mut violations = 0;
    for i in 0..n {
        let dec = &series.decs[i];
        let conn = pair.get(dec.sign);
        let q = dec.q;
        // q'(x) by centered differences (q mirrors at both ends)
        let qm = if i == 0 { series.q(1) } else { series.q(i - 1) };
        let qp = if i == n - 1 {
            series.q(n - 2)
        } else {
            series.q(i + 1)
        };
        let dq = (qp - qm) / (2.0 * hx);
        // nu and its x derivative in the decomposition frame
        let vm = &series.shifted_v[if i == 0 { 1 } else { i - 1 }];
        let vp = &series.shifted_v[if i == n - 1 { n - 2 } else { i + 1 }];
        let v = &series.shifted_v[i];
        let mut nu = v.clone();
        if q > 0.0 {
            nu.values.iter_mut().for_each(|z| *z /= q);
        }
        let mut v_x = v.clone();
        let sx = if i == 0 || i == n - 1 { -1.0 } else { 1.0 };
        for k in 0..v_x.values.len() {
            // at the mirrored ends v(x +- t) are equal, giving v_x = 0
            v_x.values[k] = sx * (vp.values[k] - vm.values[k]) / (2.0 * hx);
        }
        let mut nu_x = v_x.clone();
        if q > 0.0 {
            let ip = v_x.l2_inner(&nu);
            for k in 0..nu_x.values.len() {
                nu_x.values[k] = (v_x.values[k] - ip * nu.values[k]) / q;
            }
        }
        let nu_y = nu.nodal_derivative();
        let du = conn.path.nodal_derivative();
        let nx2 = nu_x.l2_inner(&nu_x);
        let cross = nu_x.l2_inner(&nu_y);
        let denom_at = |qq: f64| -> f64 {
            let m = du.m;
            let mut s = 0.0;
            for jj in 0..du.grid.n {
                let w = du.grid.weight(jj);
                for a in 0..m {
                    let z = du.values[jj * m + a] + qq * nu_y.values[jj * m + a];
                    s += w * z * z;
                }
            }
            s
        };
        let weff = |qq: f64| -> f64 {
            let mut vv = nu.clone();
            vv.values.iter_mut().for_each(|z| *z *= qq);
            effective_potential(p, conn, &vv)
        };
        let c0 = series.c0;
        let density_actual = 0.5 * series.ux_norm_sq[i] + series.j_fiber[i];
        let repr = |qq: f64, dqq: f64| -> f64 {
            let transverse = if qq > 0.0 {
                qq * qq * nx2 - qq.powi(4) * cross * cross / denom_at(qq)
            } else {
                0.0
            };
            0.5 * (dqq * dqq + transverse) + weff(qq) + c0
        };
        let density_repr = repr(q, dq);
        let fold_active = q > p_fold && q <= 2.0 * p_fold;
        let qhat = if fold_active { 2.0 * p_fold - q } else { q };
        let density_test = if fold_active {
            repr(qhat, -dq)
        } else {
            density_repr
        };
        let violation = fold_active && density_test >= density_actual;
        if violation {
            violations += 1;
        }
        max_err = max_err.max((density_actual - density_repr).abs());
        rows.push(TestmapRow {
            x: series.x[i],
            q,
            qhat,
            density_actual,
            density_repr,
            density_test,
            fold_active,
            violation,
        });
    }
    TestmapTable {
        rows,
        p_fold,
        max_repr_error: max_err,
        violations,
    }
}

/// Shift a field vertically by `dy` (cubic interpolation per column, flat
/// extension), re-pinning the Dirichlet rows. Used to normalize the frame so
/// the brake-column shift vanishes.
pub fn shift_field_y(p: &Potential, f: &Field2D, dy: f64) -> Field2D {
    let mut out = f.clone();
    let (nx, ny, m) = (f.grid.x.n, f.grid.y.n, f.m);
    for i in 0..nx {
        let fiber = f.fiber(i);
        let ci = CubicInterp::with_flat_tails(&fiber);
        for j in 0..ny {
            let y = f.grid.y.node(j);
            let k = out.idx(i, j);
            ci.eval(y + dy, &mut out.values[k..k + m]);
        }
        out.at_mut(i, 0).copy_from_slice(&p.a_minus);
        out.at_mut(i, ny - 1).copy_from_slice(&p.a_plus);
    }
    out
}

/// Sup distances between two fields on the window [0, l] x [-Y, Y],
/// in values, first differences, and second differences.
pub fn window_distances(a: &Field2D, b: &Field2D, l: f64) -> (f64, f64, f64) {
    let m = a.m;
    let ny = a.grid.y.n.min(b.grid.y.n);
    let ni = ((l / a.grid.x.h).round() as usize + 1)
        .min(a.grid.x.n)
        .min(b.grid.x.n);
    let mut c0 = 0.0f64;
    let mut c1 = 0.0f64;
    let mut c2 = 0.0f64;
    let da = |f: &Field2D, i: usize, j: usize, k: usize| f.at(i, j)[k];
    for i in 0..ni {
        for j in 0..ny {
            for k in 0..m {
                let diff = (da(a, i, j, k) - da(b, i, j, k)).abs();
                c0 = c0.max(diff);
                if i + 1 < ni {
                    let ga = (da(a, i + 1, j, k) - da(a, i, j, k)) / a.grid.x.h;
                    let gb = (da(b, i + 1, j, k) - da(b, i, j, k)) / b.grid.x.h;
                    c1 = c1.max((ga - gb).abs());
                }
                if j + 1 < ny {
                    let ga = (da(a, i, j + 1, k) - da(a, i, j, k)) / a.grid.y.h;
                    let gb = (da(b, i, j + 1, k) - da(b, i, j, k)) / b.grid.y.h;
                    c1 = c1.max((ga - gb).abs());
                }
                if i + 1 < ni && i > 0 {
                    let sa = (da(a, i + 1, j, k) - 2.0 * da(a, i, j, k) + da(a, i - 1, j, k))
                        / (a.grid.x.h * a.grid.x.h);
                    let sb = (da(b, i + 1, j, k) - 2.0 * da(b, i, j, k) + da(b, i - 1, j, k))
                        / (b.grid.x.h * b.grid.x.h);
                    c2 = c2.max((sa - sb).abs());
                }
                if j + 1 < ny && j > 0 {
                    let sa = (da(a, i, j + 1, k) - 2.0 * da(a, i, j, k) + da(a, i, j - 1, k))
                        / (a.grid.y.h * a.grid.y.h);
                    let sb = (da(b, i, j + 1, k) - 2.0 * da(b, i, j, k) + da(b, i, j - 1, k))
                        / (b.grid.y.h * b.grid.y.h);
                    c2 = c2.max((sa - sb).abs());
                }
            }
        }
    }
    (c0, c1, c2)
}

/// Fitted exponential rate of max_x |u(x, y) - a+| over y in [Y/2, Y-1].
pub fn y_decay_rate(p: &Potential, f: &Field2D) -> Result<(f64, f64)> {
    let (nx, ny) = (f.grid.x.n, f.grid.y.n);
    let y_hi = f.grid.y.hi();
    let mut xs = Vec::new();
    let mut logs = Vec::new();
    for j in 0..ny {
        let y = f.grid.y.node(j);
        if y >= 0.5 * y_hi && y <= y_hi - 1.0 {
            let mut sup = 0.0f64;
            for i in 0..nx {
                let u = f.at(i, j);
                let d: f64 = u
                    .iter()
                    .zip(&p.a_plus)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                sup = sup.max(d);
            }
            if sup > 1e-14 {
                xs.push(y);
                logs.push(sup.ln());
            }
        }
    }
    if xs.len() < 10 {
        return Err(Error::TailTooShort(xs.len()));
    }
    let (slope, _, r2) = linear_fit(&xs, &logs);
    Ok((-slope, r2))
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepLRow {
    pub period_l: f64,
    pub action: f64,
    pub omega: f64,
    pub q_end: f64,
    pub q1_at_zero: f64,
    /// Shift at the brake column before frame normalization.
    pub h_end_raw: f64,
    /// Shift at the domain midpoint after normalization (the limit proxy).
    pub eta: f64,
    pub pde_residual: f64,
    pub y_decay: f64,
    pub window_c0: Option<f64>,
    pub window_c1: Option<f64>,
    pub window_c2: Option<f64>,
    /// max over the far tube of |h'(x)| e^{ sqrt(mu)(x - x_p)/4 }.
    pub h_prime_weighted: f64,
}

pub struct SweepLArtifacts {
    pub rows: Vec<SweepLRow>,
    pub runs: Vec<(StripSolution, FiberSeries)>,
}

/// Solve the strip problem for each period in `l_list` (warm-started in
/// order), normalize the vertical frame so the brake-column shift vanishes,
/// and collect self-convergence diagnostics.
#[allow(clippy::too_many_arguments)]
pub fn sweep_l(
    p: &Potential,
    pair: ConnectionPair<'_>,
    l_list: &[f64],
    y_extent: f64,
    hx: f64,
    hy: f64,
    ball_m: f64,
    qbar: f64,
    mu_hat: f64,
    cfg: &MinimizeConfig,
) -> Result<SweepLArtifacts> {
    if l_list.len() < 2 || l_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("period list must be increasing".into()));
    }
    let window_l = 0.25 * l_list[0];
    let mut rows: Vec<SweepLRow> = Vec::new();
    let mut runs: Vec<(StripSolution, FiberSeries)> = Vec::new();
    let mut warm: Option<Field2D> = None;
    let mut prev_field: Option<Field2D> = None;
    for &l in l_list {
        let grid = Grid2D::reduced(l, y_extent, hx, hy)?;
        let sol = minimize_strip(p, pair, &grid, ball_m, cfg, warm.as_ref())?;
        let series_raw = fiber_series(p, &sol.field, pair, qbar)?;
        let n = series_raw.len();
        let h_end_raw = series_raw.h(n - 1);
        // normalize the frame: shift so h(L/4) = 0
        let field = shift_field_y(p, &sol.field, h_end_raw);
        let series = fiber_series(p, &field, pair, qbar)?;
        let ham = hamiltonian_identities(p, &field, pair);
        let resid = pde_residual(p, &field);
        let (ydec, _) = y_decay_rate(p, &field)?;
        let mid = n / 2;
        let eta = series.h(mid);
        // weighted shift-derivative tail bound
        let mut idx_p = None;
        for i in 0..n {
            if series.q1(i) <= qbar * 0.5 {
                idx_p = Some(i);
                break;
            }
        }
        let mut hw = 0.0f64;
        if let Some(i0) = idx_p {
            let x_p = series.x[i0];
            for i in i0..n {
                if let Some(hp) = series.h_prime[i] {
                    let w = (0.25 * mu_hat.sqrt() * (series.x[i] - x_p)).exp();
                    hw = hw.max(hp.abs() * w);
                }
            }
        }
        let (wc0, wc1, wc2) = match &prev_field {
            Some(prev) => {
                let (a, b, c) = window_distances(&field, prev, window_l);
                (Some(a), Some(b), Some(c))
            }
            None => (None, None, None),
        };
        rows.push(SweepLRow {
            period_l: l,
            action: sol.info.action,
            omega: ham.omega,
            q_end: series.q(n - 1),
            q1_at_zero: series.q1(0),
            h_end_raw,
            eta,
            pde_residual: resid,
            y_decay: ydec,
            window_c0: wc0,
            window_c1: wc1,
            window_c2: wc2,
            h_prime_weighted: hw,
        });
        warm = Some(sol.field.clone());
        prev_field = Some(field.clone());
        runs.push((
            StripSolution {
                field,
                info: sol.info,
            },
            series,
        ));
    }
    Ok(SweepLArtifacts { rows, runs })
}

/// Convenience wrapper: solve connections on the strip y grid (the plus
/// profile and its exact reflection) with the given minimizer settings.
pub fn strip_connections(
    p: &Potential,
    y_extent: f64,
    hy: f64,
    cfg: &MinimizeConfig,
) -> Result<(crate::profile1d::Connection, crate::profile1d::Connection)> {
    let yg = crate::grid::Grid1D::symmetric(y_extent, hy)?;
    let plus = crate::profile1d::solve_connection(p, &yg, crate::profile1d::Sign::Plus, cfg)?;
    let minus = if p.m == 1 {
        plus.clone()
    } else {
        plus.gamma_image(p)?
    };
    Ok((plus, minus))
}
