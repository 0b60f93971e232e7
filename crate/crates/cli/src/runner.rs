//! Mode pipelines: solve, verify, persist.

use crate::config::{Mode, RunConfig};
use crate::io::{self, Sidecar, Stored};
use crate::manifest::Manifest;
use brakeorb_core::brake1d::{
    self, confinement_check, el_residual, energy_residual, minimize_brake, BrakeOrbit,
};
use brakeorb_core::diagnostics::{
    fit_q_decay, h_variation_audit, strip_connections, sweep_l, testmap_energy, y_decay_rate,
};
use brakeorb_core::fiber::{default_qbar, estimate_ep, ConnectionPair};
use brakeorb_core::potential::check_h1;
use brakeorb_core::profile1d::{
    estimate_mu, operator_t_spectrum, solve_connection, Connection, PinnedActionObjective,
    Sign,
};
use brakeorb_core::strip2d::{
    fiber_series, hamiltonian_identities, minimize_strip, pde_residual, stay_in_audit,
    strip_energy_bound_c0, StripObjective,
};
use brakeorb_core::{gradient_check, Error as CoreError, Grid1D, Grid2D, Potential};
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum RunError {
    /// Exit code 2.
    Config(String),
    /// Exit code 3.
    Convergence(String),
    Io(String),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(s) => write!(f, "config error: {s}"),
            RunError::Convergence(s) => write!(f, "convergence failure: {s}"),
            RunError::Io(s) => write!(f, "io error: {s}"),
        }
    }
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Io(_) => 2,
            RunError::Convergence(_) => 3,
        }
    }
}

impl From<CoreError> for RunError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::NonConvergence(_)
            | CoreError::ConstraintActive { .. }
            | CoreError::TrapViolation { .. }
            | CoreError::Eigensolver(_) => RunError::Convergence(e.to_string()),
            other => RunError::Config(other.to_string()),
        }
    }
}

impl From<io::IoError> for RunError {
    fn from(e: io::IoError) -> Self {
        RunError::Io(e.to_string())
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), RunError> {
    std::fs::write(path, text).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))
}

pub struct RunOutcome {
    pub manifest: Manifest,
    pub out_dir: PathBuf,
}

pub fn run(mut cfg: RunConfig, out_override: Option<PathBuf>) -> Result<RunOutcome, RunError> {
    let out_dir = out_override
        .or_else(|| cfg.out_dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| RunError::Io(format!("{}: {e}", out_dir.display())))?;
    cfg.out_dir = Some(out_dir.display().to_string());
    if cfg.threads == 0 {
        cfg.threads = 1;
    }
    cfg.minimize.seed = cfg.seed;
    let p = Potential::from_spec(&cfg.potential);
    let mut manifest = Manifest::new(cfg.clone());
    match cfg.mode {
        Mode::Connection => run_connection(&p, &cfg, &out_dir, &mut manifest)?,
        Mode::Brake => run_brake(&p, &cfg, &out_dir, &mut manifest)?,
        Mode::SweepT => run_sweep_t(&p, &cfg, &out_dir, &mut manifest)?,
        Mode::Strip => run_strip(&p, &cfg, &out_dir, &mut manifest)?,
        Mode::SweepL => run_sweep_l(&p, &cfg, &out_dir, &mut manifest)?,
        Mode::Verify => {
            let path = cfg
                .field_path
                .clone()
                .ok_or_else(|| RunError::Config("mode=verify needs field_path".into()))?;
            verify_stored(Path::new(&path), &mut manifest)?;
        }
    }
    write_file(&out_dir.join("manifest.json"), &manifest.to_json())?;
    Ok(RunOutcome { manifest, out_dir })
}

fn connection_sidecar(p: &Potential, conn: &Connection, role: &str) -> Sidecar {
    Sidecar {
        object: "path".into(),
        role: role.into(),
        potential: p.spec().expect("serializable potential"),
        m: p.m,
        nx: conn.path.grid.n,
        ny: 0,
        sign: Some(format!("{:?}", conn.sign)),
        action: Some(conn.action),
        tail_k: Some(conn.tail_plus.rate),
        tail_big_k: Some(conn.tail_plus.prefactor),
        t_period: None,
        period_l: None,
        grid_1d: Some(conn.path.grid.clone()),
        grid_2d: None,
    }
}

fn run_connection(
    p: &Potential,
    cfg: &RunConfig,
    out_dir: &Path,
    man: &mut Manifest,
) -> Result<(), RunError> {
    let grid = Grid1D::symmetric(cfg.grid.extent, cfg.grid.h)?;
    let conn = solve_connection(p, &grid, Sign::Plus, &cfg.minimize)?;
    // gradient check at the (non-critical) comparison map
    let guess = brakeorb_core::profile1d::tilde_guess(p, &grid);
    let mut obj = PinnedActionObjective::new(p, guess.clone());
    let dofs = obj.dofs_from_path(&guess);
    let gerr = gradient_check(&mut obj, &dofs, 20, cfg.seed.wrapping_add(1));
    let spectrum = operator_t_spectrum(p, &conn, 3)?;
    let mu = estimate_mu(p, &conn, &spectrum, 0.05, cfg.seed.wrapping_add(2))?;
    man.record("c0", conn.action);
    man.record("equipartition_residual", conn.equipartition);
    man.record("el_residual", brakeorb_core::profile1d::el_residual_path(p, &conn.path));
    man.record("tail_rate_plus", &conn.tail_plus);
    man.record("tail_rate_minus", &conn.tail_minus);
    man.record("eigenvalues", &spectrum.eigenvalues);
    man.record("zero_mode_overlap", spectrum.zero_mode_overlap);
    man.record("mu_hat", mu.mu);
    man.record("gradient_check", gerr);
    man.record("channel_collapsed", conn.channel_collapsed);
    man.record("short_grid", conn.short_grid);
    man.record("descent", conn.minimize.value <= conn.minimize.initial_value);
    if p.m > 1 {
        let other = solve_connection(p, &grid, Sign::Minus, &cfg.minimize)?;
        man.record("pair_action_gap", (other.action - conn.action).abs());
        man.check_le(
            "gamma_pair_action_gap",
            (other.action - conn.action).abs(),
            1e-8 * (1.0 + conn.action),
        );
    }
    let h2 = cfg.grid.h * cfg.grid.h;
    man.check_le("gradient_check", gerr, 1e-6);
    man.check_le("equipartition_residual", conn.equipartition, (h2 / 1e-4) * 1e-4);
    man.check_le(
        "zero_eigenvalue",
        spectrum.eigenvalues[0].abs(),
        5e-2,
    );
    man.check_ge("zero_mode_overlap", spectrum.zero_mode_overlap, 0.99);
    man.check_bool("h3_simple_zero", !spectrum.h3_violation);
    man.check_bool("descent", conn.minimize.value <= conn.minimize.initial_value);
    io::save_path(
        &conn.path,
        &out_dir.join("connection.bin"),
        &connection_sidecar(p, &conn, "connection"),
    )?;
    Ok(())
}

fn orbit_sidecar(p: &Potential, orbit: &BrakeOrbit) -> Sidecar {
    Sidecar {
        object: "path".into(),
        role: "brake_quarter".into(),
        potential: p.spec().expect("serializable potential"),
        m: p.m,
        nx: orbit.quarter.grid.n,
        ny: 0,
        sign: None,
        action: Some(orbit.action),
        tail_k: None,
        tail_big_k: None,
        t_period: Some(orbit.t_period),
        period_l: None,
        grid_1d: Some(orbit.quarter.grid.clone()),
        grid_2d: None,
    }
}

fn run_brake(
    p: &Potential,
    cfg: &RunConfig,
    out_dir: &Path,
    man: &mut Manifest,
) -> Result<(), RunError> {
    let orbit = minimize_brake(p, cfg.brake.t_period, cfg.brake.h, &cfg.minimize)?;
    let e_res = energy_residual(p, &orbit)?;
    let el_res = el_residual(p, &orbit)?;
    let tau = confinement_check(&orbit, p, cfg.brake.q_band);
    let guess = brakeorb_core::brake1d::brake_guess(p, &orbit.quarter.grid, 1.0)?;
    let mut obj = brakeorb_core::brake1d::QuarterObjective::new(
        p,
        guess.clone(),
        orbit.ball_radius_m,
        orbit.c0_bound,
    )?;
    let dofs = obj.dofs_from_quarter(&guess);
    let gerr = gradient_check(&mut obj, &dofs, 20, cfg.seed.wrapping_add(3));
    man.record("action", orbit.action);
    man.record("w_turn", orbit.w_turn);
    man.record("energy_constant", orbit.energy_constant);
    man.record("ball_radius_m", orbit.ball_radius_m);
    man.record("c0_bound", orbit.c0_bound);
    man.record("energy_residual", e_res);
    man.record("el_residual", el_res);
    man.record("tau_q", tau);
    man.record("finite_time_contact", orbit.finite_time_contact);
    man.record("gradient_check", gerr);
    let scale = (cfg.brake.h / 0.01).powi(2);
    man.check_le("gradient_check", gerr, 1e-6);
    man.check_le("energy_residual", e_res, 5e-4 * scale.max(1.0));
    man.check_le("el_residual", el_res, 5e-4 * scale.max(1.0));
    man.check_le("action_le_c0", orbit.action, orbit.c0_bound);
    man.check_le(
        "sup_bound",
        orbit.quarter.max_norm_nodes(),
        orbit.ball_radius_m * (1.0 + 1e-9),
    );
    man.check_bool("confinement_band_found", tau.is_some());
    io::save_path(
        &orbit.quarter,
        &out_dir.join("orbit.bin"),
        &orbit_sidecar(p, &orbit),
    )?;
    Ok(())
}

fn run_sweep_t(
    p: &Potential,
    cfg: &RunConfig,
    out_dir: &Path,
    man: &mut Manifest,
) -> Result<(), RunError> {
    let grid = Grid1D::symmetric(cfg.grid.extent, cfg.grid.h)?;
    let conn = solve_connection(p, &grid, Sign::Plus, &cfg.minimize)?;
    let rows = brake1d::sweep_t(
        p,
        &cfg.sweep_t.t_list,
        cfg.sweep_t.h,
        cfg.sweep_t.window,
        &conn,
        &cfg.minimize,
        cfg.threads,
    )?;
    let mut csv = String::from("T,action,W_turn,tau_q,window_dist\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{:.12},{:.6e},{},{:.6e}\n",
            r.t_period,
            r.action,
            r.w_turn,
            r.tau_q.map(|t| t.to_string()).unwrap_or_else(|| "nan".into()),
            r.window_dist
        ));
    }
    write_file(&out_dir.join("sweep_t.csv"), &csv)?;
    man.record("rows", &rows);
    let w_monotone = rows.windows(2).all(|w| w[1].w_turn <= w[0].w_turn);
    let d_monotone = rows
        .windows(2)
        .all(|w| w[1].window_dist <= w[0].window_dist * (1.0 + 1e-9));
    man.check_bool("w_turn_non_increasing", w_monotone);
    man.check_bool("w_turn_positive", rows.iter().all(|r| r.w_turn > 0.0));
    man.check_bool("window_dist_non_increasing", d_monotone);
    for r in &rows {
        man.check_le(
            &format!("energy_residual_T{}", r.t_period),
            r.energy_residual,
            5e-4,
        );
    }
    Ok(())
}

struct StripSetup {
    plus: Connection,
    minus: Connection,
    ball: f64,
    qbar: f64,
}

fn strip_setup(p: &Potential, y_extent: f64, hy: f64, ball_factor: f64, qbar_cfg: f64, cfg: &RunConfig) -> Result<StripSetup, RunError> {
    let (plus, minus) = strip_connections(p, y_extent, hy, &cfg.minimize)?;
    let ball = ball_factor * p.minima_radius();
    let qbar = if qbar_cfg > 0.0 {
        qbar_cfg
    } else {
        default_qbar(&plus, cfg.seed.wrapping_add(5))
    };
    Ok(StripSetup { plus, minus, ball, qbar })
}

fn run_strip(
    p: &Potential,
    cfg: &RunConfig,
    out_dir: &Path,
    man: &mut Manifest,
) -> Result<(), RunError> {
    let sc = &cfg.strip;
    let setup = strip_setup(p, sc.y_extent, sc.hy, sc.ball_factor, sc.qbar, cfg)?;
    let pair = ConnectionPair {
        minus: &setup.minus,
        plus: &setup.plus,
    };
    let grid = Grid2D::reduced(sc.period_l, sc.y_extent, sc.hx, sc.hy)?;
    let h1 = check_h1(p, setup.ball);
    let sol = minimize_strip(p, pair, &grid, setup.ball, &cfg.minimize, None)?;
    let resid = pde_residual(p, &sol.field);
    let ham = hamiltonian_identities(p, &sol.field, pair);
    let series = fiber_series(p, &sol.field, pair, setup.qbar)?;
    let c0_strip = strip_energy_bound_c0(p, pair, &grid);
    let p_level = 0.5 * setup.qbar;
    let ep = estimate_ep(p, pair, 0.5 * p_level, &setup.plus.path.grid, &cfg.minimize)?;
    let audit = stay_in_audit(&series, p_level, ep.value, c0_strip);
    let spectrum = operator_t_spectrum(p, &setup.plus, 3)?;
    let mu = estimate_mu(p, &setup.plus, &spectrum, p_level, cfg.seed.wrapping_add(7))?;
    let fit = fit_q_decay(&series, mu.mu, p_level, 1.0);
    let tm = testmap_energy(p, &series, pair, p_level);
    let ydec = y_decay_rate(p, &sol.field)?;
    // gradient check at the comparison map
    let tilde = brakeorb_core::strip2d::strip_tilde(p, pair, &grid);
    let mut obj = StripObjective::new(p, tilde.clone(), setup.ball);
    let dofs = obj.dofs_from_field(&tilde);
    let gerr = gradient_check(&mut obj, &dofs, 20, cfg.seed.wrapping_add(9));

    man.record("action", sol.info.action);
    man.record("c0", series.c0);
    man.record("c0_bound_strip", c0_strip);
    man.record("omega", ham.omega);
    man.record("omega_tilde_max", ham.omega_tilde_max);
    man.record("a_variation", ham.a_variation);
    man.record("pde_residual", resid);
    man.record("trap_depth", sol.info.trap_depth);
    man.record("qbar", setup.qbar);
    man.record("ep_estimate", &ep);
    man.record("stay_in", &audit);
    man.record("mu_hat", mu.mu);
    man.record("y_decay_rate", ydec.0);
    man.record("gradient_check", gerr);
    man.record("h1_growth_check", &h1);
    man.record("q_end", series.q(series.len() - 1));
    man.record("q1_at_zero", series.q1(0));
    match &fit {
        Ok(f) => man.record("q_decay_fit", f),
        Err(e) => man.record("q_decay_fit_error", e.to_string()),
    }
    man.record("testmap_violations", tm.violations);
    man.record("testmap_repr_error", tm.max_repr_error);

    let mut csv = String::from("x,sign,h,q,q1,ambiguous\n");
    for (i, d) in series.decs.iter().enumerate() {
        csv.push_str(&format!(
            "{:.6},{},{:.9},{:.6e},{:.6e},{}\n",
            series.x[i],
            match d.sign {
                Sign::Plus => "plus",
                Sign::Minus => "minus",
            },
            d.h,
            d.q,
            d.q1,
            d.ambiguous
        ));
    }
    write_file(&out_dir.join("fibers.csv"), &csv)?;
    let mut csv = String::from("x,q,q1,h,sign,A,B\n");
    for (i, row) in ham.rows.iter().enumerate() {
        csv.push_str(&format!(
            "{:.6},{:.6e},{:.6e},{:.9},{},{:.6e},{:.6e}\n",
            row.x,
            series.q(i),
            series.q1(i),
            series.h(i),
            match series.decs[i].sign {
                Sign::Plus => "plus",
                Sign::Minus => "minus",
            },
            row.a,
            row.b
        ));
    }
    write_file(&out_dir.join("per_x.csv"), &csv)?;
    io::save_field(
        &sol.field,
        &out_dir.join("strip.bin"),
        &Sidecar {
            object: "field".into(),
            role: "strip_reduced".into(),
            potential: p.spec().map_err(|e| RunError::Config(e.to_string()))?,
            m: p.m,
            nx: grid.x.n,
            ny: grid.y.n,
            sign: None,
            action: Some(sol.info.action),
            tail_k: None,
            tail_big_k: None,
            t_period: None,
            period_l: Some(sc.period_l),
            grid_1d: None,
            grid_2d: Some(grid.clone()),
        },
    )?;

    man.check_le("gradient_check", gerr, 1e-6);
    man.check_le("pde_residual", resid, 1e-2);
    man.check_le("omega_tilde_max", ham.omega_tilde_max, 1e-3);
    man.check_le("a_variation", ham.a_variation, 1e-3 * (1.0 + ham.omega.abs()));
    man.check_ge("omega", ham.omega, -1e-6);
    man.check_bool("h1_growth", h1.pass);
    man.check_bool("stay_in_band", audit.band_ok);
    man.check_bool("stay_in_xp_bound", audit.xp_bound_ok);
    man.check_bool("testmap_no_violation", tm.violations == 0);
    if let Ok(f) = &fit {
        man.check_ge("q_decay_rate", f.rate, 0.9 * 0.5 * mu.mu.sqrt());
        man.check_ge("q_decay_r2", f.r2, 0.9);
    }
    man.check_ge(
        "y_decay_rate",
        ydec.0,
        0.9 * brakeorb_core::nondegeneracy_constants(p)?.gamma_lo,
    );
    Ok(())
}

fn run_sweep_l(
    p: &Potential,
    cfg: &RunConfig,
    out_dir: &Path,
    man: &mut Manifest,
) -> Result<(), RunError> {
    let scfg = &cfg.sweep_l;
    let setup = strip_setup(p, scfg.y_extent, scfg.hy, scfg.ball_factor, scfg.qbar, cfg)?;
    let pair = ConnectionPair {
        minus: &setup.minus,
        plus: &setup.plus,
    };
    let spectrum = operator_t_spectrum(p, &setup.plus, 3)?;
    let mu = estimate_mu(p, &setup.plus, &spectrum, 0.5 * setup.qbar, cfg.seed.wrapping_add(7))?;
    let art = sweep_l(
        p,
        pair,
        &scfg.l_list,
        scfg.y_extent,
        scfg.hx,
        scfg.hy,
        setup.ball,
        setup.qbar,
        mu.mu,
        &cfg.minimize,
    )?;
    // shift-variation audit across the runs
    let p_level = 0.5 * setup.qbar;
    let ep = estimate_ep(p, pair, 0.5 * p_level, &setup.plus.path.grid, &cfg.minimize)?;
    let series_refs: Vec<&brakeorb_core::strip2d::FiberSeries> =
        art.runs.iter().map(|(_, s)| s).collect();
    let grid_last = Grid2D::reduced(
        *scfg.l_list.last().unwrap(),
        scfg.y_extent,
        scfg.hx,
        scfg.hy,
    )?;
    let c0_strip = strip_energy_bound_c0(p, pair, &grid_last);
    let hv = h_variation_audit(&series_refs, ep.value, c0_strip);
    man.record("h_variation", &hv);
    man.check_bool("h_variation_stable", hv.stable.unwrap_or(true));
    man.check_bool("excess_measure_bound", hv.measure_ok);
    let mut csv =
        String::from("L,action,omega,q_end,h_end,eta,window_c0,window_c1,decay_rate\n");
    for r in &art.rows {
        csv.push_str(&format!(
            "{},{:.12},{:.6e},{:.6e},{:.9},{:.9},{},{},{:.6}\n",
            r.period_l,
            r.action,
            r.omega,
            r.q_end,
            r.h_end_raw,
            r.eta,
            r.window_c0.map(|v| format!("{v:.6e}")).unwrap_or_else(|| "nan".into()),
            r.window_c1.map(|v| format!("{v:.6e}")).unwrap_or_else(|| "nan".into()),
            r.y_decay,
        ));
    }
    write_file(&out_dir.join("sweep_l.csv"), &csv)?;
    man.record("rows", &art.rows);
    man.record("mu_hat", mu.mu);
    let n = art.rows.len();
    let omega_monotone = art.rows.windows(2).all(|w| w[1].omega <= w[0].omega + 1e-6);
    man.check_bool("omega_non_increasing", omega_monotone);
    man.check_le("omega_final", art.rows[n - 1].omega, 1e-3);
    man.check_le("q_end_final", art.rows[n - 1].q_end, 1e-2);
    if n >= 3 {
        let d1 = art.rows[n - 2].window_c0.unwrap_or(f64::INFINITY);
        let d2 = art.rows[n - 1].window_c0.unwrap_or(f64::INFINITY);
        man.check_le("window_c0_decreasing", d2, d1);
        let c1a = art.rows[n - 2].window_c1.unwrap_or(f64::INFINITY);
        let c1b = art.rows[n - 1].window_c1.unwrap_or(f64::INFINITY);
        man.check_le("window_c1_decreasing", c1b, c1a);
    }
    if n >= 2 {
        man.check_le(
            "eta_drift",
            (art.rows[n - 1].eta - art.rows[n - 2].eta).abs(),
            5e-2,
        );
        // stability across the sweep: all rates within 10% of their mean
        let mean = art.rows.iter().map(|r| r.y_decay).sum::<f64>() / n as f64;
        let dev = art
            .rows
            .iter()
            .map(|r| (r.y_decay - mean).abs())
            .fold(0.0f64, f64::max);
        man.check_le("y_decay_stable", dev, 0.1 * mean);
    }
    Ok(())
}

fn verify_stored(path: &Path, man: &mut Manifest) -> Result<(), RunError> {
    let stored = io::load(path)?;
    match stored {
        Stored::Path(path1d, sc) => {
            let p = Potential::from_spec(&sc.potential);
            let h2 = (path1d.grid.h / 0.01).powi(2).max(1.0);
            match sc.role.as_str() {
                "brake_quarter" => {
                    let t_period = sc
                        .t_period
                        .ok_or_else(|| RunError::Config("sidecar lacks t_period".into()))?;
                    let w_turn = p.eval_w(path1d.point(path1d.grid.n - 1));
                    let orbit = BrakeOrbit {
                        quarter: path1d,
                        t_period,
                        action: sc.action.unwrap_or(0.0),
                        energy_constant: -w_turn,
                        w_turn,
                        ball_radius_m: f64::INFINITY,
                        c0_bound: f64::INFINITY,
                        finite_time_contact: false,
                        minimize: brakeorb_core::MinimizeResult {
                            value: 0.0,
                            grad_inf: 0.0,
                            iterations: 0,
                            newton_iterations: 0,
                            converged: true,
                            initial_value: 0.0,
                        },
                    };
                    let e_res = energy_residual(&p, &orbit)?;
                    let el_res = el_residual(&p, &orbit)?;
                    man.record("energy_residual", e_res);
                    man.record("el_residual", el_res);
                    man.check_le("energy_residual", e_res, 5e-4 * h2);
                    man.check_le("el_residual", el_res, 5e-4 * h2);
                }
                _ => {
                    let equip =
                        brakeorb_core::profile1d::equipartition_residual_path(&p, &path1d);
                    let el = brakeorb_core::profile1d::el_residual_path(&p, &path1d);
                    man.record("equipartition_residual", equip);
                    man.record("el_residual", el);
                    man.check_le("equipartition_residual", equip, 1e-4 * h2);
                    man.check_le("el_residual", el, 1e-3 * h2);
                }
            }
        }
        Stored::Field(field, sc) => {
            let p = Potential::from_spec(&sc.potential);
            let resid = pde_residual(&p, &field);
            man.record("pde_residual", resid);
            man.check_le("pde_residual", resid, 1e-2);
            // rebuild the reference connections on the stored y grid
            let hy = field.grid.y.h;
            let y_extent = field.grid.y.hi();
            let (plus, minus) = strip_connections(&p, y_extent, hy, &Default::default())?;
            let pair = ConnectionPair {
                minus: &minus,
                plus: &plus,
            };
            let ham = hamiltonian_identities(&p, &field, pair);
            man.record("omega", ham.omega);
            man.record("omega_tilde_max", ham.omega_tilde_max);
            man.record("a_variation", ham.a_variation);
            man.check_le("omega_tilde_max", ham.omega_tilde_max, 1e-3);
            man.check_le("a_variation", ham.a_variation, 1e-3 * (1.0 + ham.omega.abs()));
            man.check_ge("omega", ham.omega, -1e-6);
            let ndc = brakeorb_core::nondegeneracy_constants(&p)?;
            let depth = brakeorb_core::strip2d::trap_depth(&p, &field, ndc.r0);
            man.record("trap_depth", depth);
            man.check_bool("trap_band_exists", depth.is_some());
        }
    }
    Ok(())
}
