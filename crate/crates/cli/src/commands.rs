use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use vortexwave::ansatz::{
    compute_lambdas, pair_bracket, pair_reduced_normalized, pair_reduced_root, reduced_residual,
    residual_scan, AnsatzConfig as Ansatz, EXACT_RESIDUAL,
};
use vortexwave::dynamics::{
    blob_moments, discretize_theta, invariant_drift, invariants_csv, simulate, trajectory_csv,
    IntegratorConfig, Scheme, SimState,
};
use vortexwave::equilibria::{
    find_equilibrium, kr_grad, make_traveling_pair, nondegenerate, pair_half_distance, pair_speed,
    polygon_omega, velocity_residual, VortexSystem,
};
use vortexwave::output::csv_table;
use vortexwave::profile::{solve_profile, ProfileGrid, ProfileParams, RadialProfile};
use vortexwave::{Error, KernelConstants, Vec2};

use crate::config::*;
use crate::CliError;

type Out = Result<Value, CliError>;

fn inf_norm(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn write(out: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let path = out.join(name);
    fs::write(&path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn solve(s: f64, gamma: f64, grid: &ProfileGrid, tol: f64) -> Result<RadialProfile, CliError> {
    Ok(solve_profile(&ProfileParams::new(s, gamma)?, grid, tol)?)
}

/// Sampled range of the far-field ratio on `[r_N/4, r_N/2]`.
fn tail_range(prof: &RadialProfile) -> (f64, f64) {
    let rn = prof.r_max();
    (0..=16)
        .map(|i| prof.tail_ratio(rn / 4.0 * 2f64.powf(i as f64 / 16.0)))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
            (lo.min(t), hi.max(t))
        })
}

pub fn constants(cfg: &ConstantsConfig) -> Out {
    let k = KernelConstants::new(cfg.s)?;
    if !(cfg.kappa > 0.0) || !(cfg.d > 0.0) || !(cfg.rho > 0.0) || cfg.k == 0 {
        return Err(Error::Domain("kappa, d and rho must be positive and k >= 1".into()).into());
    }
    Ok(json!({
        "s": cfg.s,
        "c2s": k.c2s(),
        "gamma_ratio": k.gamma_ratio(),
        "pair": {"kappa": cfg.kappa, "d": cfg.d, "U": pair_speed(&k, cfg.kappa, cfg.d)},
        "polygon": {"kappa": cfg.kappa, "rho": cfg.rho, "k": cfg.k,
                    "omega": polygon_omega(&k, cfg.kappa, cfg.rho, cfg.k)},
    }))
}

pub fn profile(cfg: &ProfileConfig, out: &Path) -> Out {
    let prof = solve(cfg.s, cfg.gamma, &cfg.grid, cfg.tol)?;
    let path = write(out, "profile.csv", &prof.to_table())?;
    let (lo, hi) = tail_range(&prof);
    Ok(json!({
        "s": cfg.s,
        "gamma": cfg.gamma,
        "M_gamma": prof.m_gamma,
        "R1": prof.r1,
        "W0": prof.w0(),
        "r_max": prof.r_max(),
        "tail_ratio": prof.tail_ratio(prof.r_max() / 2.0),
        "tail_ratio_range": [lo, hi],
        "nodes": prof.radii.len(),
        "newton_iterations": prof.diagnostics.newton_iterations,
        "monotone_violations": prof.diagnostics.monotone_violations,
        "file": path,
    }))
}

fn system_report(sys: &VortexSystem, cfg: &EquilibriaConfig) -> Result<Value, CliError> {
    let res = velocity_residual(sys)?;
    let grad = kr_grad(sys, cfg.convention)?;
    let nd = nondegenerate(sys, cfg.convention)?;
    Ok(json!({
        "s": sys.consts.s(),
        "convention": cfg.convention,
        "positions": sys.vortices.iter().map(|v| [v.pos.x, v.pos.y]).collect::<Vec<_>>(),
        "kappas": sys.vortices.iter().map(|v| v.kappa).collect::<Vec<_>>(),
        "frame": sys.frame,
        "residual_inf": inf_norm(&res),
        "kr_grad_norm": inf_norm(&grad),
        "nondegenerate": nd,
    }))
}

fn vortex_csv(sys: &VortexSystem) -> String {
    let mut s = String::from("id,");
    s += &csv_table(
        &["x", "y", "kappa"],
        sys.vortices.iter().map(|v| vec![v.pos.x, v.pos.y, v.kappa]),
    );
    // prepend ids to the numeric rows
    let mut lines = s.lines();
    let mut out = format!("{}\n", lines.next().unwrap_or_default());
    for (i, l) in lines.enumerate() {
        out += &format!("{i},{l}\n");
    }
    out
}

pub enum EqMode {
    Make,
    Verify,
    Find,
}

pub fn equilibria(mode: EqMode, cfg: &EquilibriaConfig, out: &Path) -> Out {
    let consts = KernelConstants::new(cfg.s)?;
    let sys = cfg.system.build(consts)?;
    match mode {
        EqMode::Make => {
            let mut rep = system_report(&sys, cfg)?;
            rep["file"] = json!(write(out, "equilibrium.csv", &vortex_csv(&sys))?);
            Ok(rep)
        }
        EqMode::Verify => system_report(&sys, cfg),
        EqMode::Find => {
            let free: Vec<usize> = cfg
                .free
                .clone()
                .unwrap_or_else(|| (0..2 * sys.len()).collect());
            let sol = find_equilibrium(&sys, &free, cfg.convention, cfg.newton.options())?;
            let mut rep = system_report(&sol.system, cfg)?;
            rep["converged"] = json!(true);
            rep["iterations"] = json!(sol.iterations);
            rep["newton_residual_inf"] = json!(sol.residual_inf);
            rep["file"] = json!(write(out, "equilibrium.csv", &vortex_csv(&sol.system))?);
            Ok(rep)
        }
    }
}

pub enum AnsatzMode {
    Lambdas,
    Scan,
    Reduced,
}

fn build_ansatz(
    spec: AnsatzSpec,
    c: &AnsatzCommon,
    prof: &RadialProfile,
    eps: f64,
) -> Result<Ansatz, CliError> {
    Ok(match spec {
        AnsatzSpec::Pair { kappa, d, u } => {
            let u = u.unwrap_or_else(|| pair_speed(&prof.params.consts, kappa, d));
            Ansatz::vortex_pair(prof, kappa, d, u, eps, c.delta)?
        }
        AnsatzSpec::Isolated { mu } => Ansatz::isolated(prof, mu, eps, c.delta)?,
    })
}

pub fn ansatz(mode: AnsatzMode, cfg: &AnsatzConfig, out: &Path) -> Out {
    let c = &cfg.common;
    let prof = solve(c.s, c.gamma, &c.profile_grid, c.profile_tol)?;
    let base = build_ansatz(cfg.configuration, c, &prof, cfg.epsilon)?;
    let p = base.p();
    match mode {
        AnsatzMode::Lambdas => {
            let eps_list = cfg.epsilons.clone().unwrap_or_else(|| vec![cfg.epsilon]);
            let mut rows = Vec::new();
            for &eps in &eps_list {
                let a = base.with_epsilon(eps);
                a.validate(&prof)?;
                let lam = compute_lambdas(&a, &prof)?;
                for (j, (w, l)) in a.waves.iter().zip(&lam.values).enumerate() {
                    let lead = w.mu.powf(-p);
                    let scaled = (l - lead).abs() / eps.powf(2.0 - 2.0 * c.s);
                    rows.push((eps, j, *l, lead, scaled));
                }
            }
            let table = csv_table(
                &["epsilon", "index", "lambda", "leading", "scaled_deviation"],
                rows.iter().map(|r| vec![r.0, r.1 as f64, r.2, r.3, r.4]),
            );
            let path = write(out, "lambdas.csv", &table)?;
            let scaled: Vec<f64> = rows.iter().map(|r| r.4).filter(|x| *x > 0.0).collect();
            let variation = if scaled.is_empty() {
                1.0
            } else {
                scaled.iter().cloned().fold(0.0, f64::max)
                    / scaled.iter().cloned().fold(f64::INFINITY, f64::min)
            };
            Ok(json!({
                "lambdas": rows.iter().map(|r| json!({"epsilon": r.0, "index": r.1, "lambda": r.2,
                    "leading": r.3, "scaled_deviation": r.4})).collect::<Vec<_>>(),
                "scaled_deviation_variation": variation,
                "file": path,
            }))
        }
        AnsatzMode::Scan => {
            let eps_list = cfg
                .epsilons
                .clone()
                .ok_or_else(|| CliError::Config("ansatz scan needs an `epsilons` list".into()))?;
            let scan = residual_scan(&base, &prof, &eps_list, &c.polar)?;
            let table = csv_table(
                &["epsilon", "sup_residual", "slope_partial"],
                scan.rows
                    .iter()
                    .map(|r| vec![r.epsilon, r.sup_residual, r.slope_partial]),
            );
            let path = write(out, "residual_scan.csv", &table)?;
            Ok(json!({
                "slope": scan.slope,
                "expected_slope": 3.0 - 2.0 * c.s,
                "max_scaled_residual": scan.max_scaled,
                "exact": scan.max_scaled < EXACT_RESIDUAL,
                "rows": scan.rows,
                "file": path,
            }))
        }
        AnsatzMode::Reduced => {
            base.validate(&prof)?;
            let lam = compute_lambdas(&base, &prof)?;
            let entries = reduced_residual(&base, &prof, &lam, &c.polar)?;
            let table = csv_table(
                &["center_index", "component", "value", "normalized_value"],
                entries.iter().map(|e| {
                    vec![
                        e.center_index as f64,
                        e.component as f64,
                        e.value,
                        e.normalized_value,
                    ]
                }),
            );
            let path = write(out, "reduced.csv", &table)?;
            let mut rep = json!({"entries": entries, "file": path});
            if let AnsatzSpec::Pair { kappa, d, u } = cfg.configuration {
                let u = u.unwrap_or_else(|| pair_speed(&prof.params.consts, kappa, d));
                let mu = base.mu_ref;
                let norm = prof.m_gamma * cfg.epsilon.powf(3.0 - 2.0 * c.s) * mu.powf(p + 1.0);
                rep["pair_normalized"] = json!(entries[0].value / norm);
                rep["pair_bracket"] = json!(pair_bracket(&prof.params, kappa, d, u)?);
            }
            Ok(rep)
        }
    }
}

pub fn bracket(cfg: &BracketConfig, out: &Path) -> Out {
    let c = &cfg.common;
    let prof = solve(c.s, c.gamma, &c.profile_grid, c.profile_tol)?;
    let consts = prof.params.consts;
    let u = cfg
        .u
        .unwrap_or_else(|| pair_speed(&consts, cfg.kappa, cfg.d_expected));
    let exact = pair_half_distance(&consts, cfg.kappa, u)?;
    let root = pair_reduced_root(
        &prof,
        cfg.kappa,
        u,
        cfg.epsilon,
        c.delta,
        cfg.d_lo,
        cfg.d_hi,
        &c.polar,
    )?;
    let mut rep = json!({
        "kappa": cfg.kappa,
        "U": u,
        "epsilon": cfg.epsilon,
        "d_root": root,
        "d_exact": exact,
        "relative_error": (root - exact).abs() / exact,
    });
    if !cfg.d_values.is_empty() {
        let rows = cfg
            .d_values
            .iter()
            .map(|&d| -> Result<Vec<f64>, CliError> {
                let f = pair_reduced_normalized(
                    &prof,
                    cfg.kappa,
                    d,
                    u,
                    cfg.epsilon,
                    c.delta,
                    &c.polar,
                )?;
                Ok(vec![d, f, pair_bracket(&prof.params, cfg.kappa, d, u)?])
            })
            .collect::<Result<Vec<_>, _>>()?;
        rep["file"] = json!(write(
            out,
            "bracket.csv",
            &csv_table(&["d", "normalized", "bracket"], rows)
        )?);
    }
    Ok(rep)
}

/// Position predicted by rigid motion with the frame: translation `(0, u t)`,
/// or rotation at rate `omega` about the point it leaves fixed.
fn rigid(x0: Vec2, u: f64, omega: f64, t: f64) -> Vec2 {
    if omega == 0.0 {
        x0 + Vec2::new(0.0, u * t)
    } else {
        let c = Vec2::new(-u / omega, 0.0);
        c + (x0 - c).rotate(omega * t)
    }
}

pub fn points(cfg: &PointsConfig, out: &Path) -> Out {
    let consts = KernelConstants::new(cfg.s)?;
    let sys = cfg.system.build(consts)?;
    let st = SimState::new(consts, sys.vortices.clone(), Vec::new())?;
    let ic = IntegratorConfig {
        dt: cfg.integration.dt,
        scheme: Scheme::Rk4,
        t_end: cfg.integration.t_end,
    };
    let traj = simulate(&st, &ic, cfg.integration.sample_every)?;
    let (dh, dp, di) = invariant_drift(&traj);
    let rigid_err = traj
        .samples
        .iter()
        .flat_map(|s| {
            s.vortices.iter().zip(&sys.vortices).map(move |(v, v0)| {
                (v.pos - rigid(v0.pos, sys.frame.u, sys.frame.omega, s.t)).norm()
            })
        })
        .fold(0.0, f64::max);
    let tp = write(out, "trajectory.csv", &trajectory_csv(&traj))?;
    let ip = write(out, "invariants.csv", &invariants_csv(&traj))?;
    Ok(json!({
        "t_end": traj.samples.last().map(|s| s.t),
        "samples": traj.samples.len(),
        "frame": sys.frame,
        "max_rigid_error": rigid_err,
        "drift": {"H": dh, "P": dp, "I": di},
        "files": [tp, ip],
    }))
}

pub fn vortexwave(cfg: &VortexWaveConfig, out: &Path) -> Out {
    let prof = solve(cfg.s, cfg.gamma, &cfg.profile_grid, cfg.profile_tol)?;
    let consts = prof.params.consts;
    let pair = make_traveling_pair(consts, cfg.kappa, cfg.d)?;
    let u = pair.frame.u;
    let a = Ansatz::vortex_pair(&prof, cfg.kappa, cfg.d, u, cfg.epsilon, cfg.delta)?;
    let lam = compute_lambdas(&a, &prof)?;
    let blobs = discretize_theta(&a, &prof, &lam, cfg.n_per_axis)?;
    let total_weight: f64 = blobs.iter().map(|b| b.w).sum();
    let st = SimState::new(consts, a.vortices.clone(), blobs)?;
    let t_end = cfg.t_end.unwrap_or(cfg.transit / u.abs());
    let ic = IntegratorConfig {
        dt: cfg.dt,
        scheme: Scheme::Rk4,
        t_end,
    };
    let traj = simulate(&st, &ic, cfg.sample_every)?;
    let (c0, g0) = blob_moments(&st.blobs);
    let last = traj
        .samples
        .last()
        .expect("simulation keeps the initial state");
    let (c1, _) = blob_moments(&last.blobs);
    let growth = traj
        .samples
        .iter()
        .map(|s| blob_moments(&s.blobs).1 / g0 - 1.0)
        .fold(0.0, f64::max);
    let speed = (c1 - c0).norm() / (last.t - st.t);
    let (dh, dp, di) = invariant_drift(&traj);
    let tp = write(out, "trajectory.csv", &trajectory_csv(&traj))?;
    let ip = write(out, "invariants.csv", &invariants_csv(&traj))?;
    Ok(json!({
        "blobs": st.blobs.len(),
        "total_weight": total_weight,
        "kappa": cfg.kappa,
        "U": u,
        "t_end": last.t,
        "centroid_start": c0,
        "centroid_end": c1,
        "centroid_speed": speed,
        "speed_ratio": speed / u.abs(),
        "max_gyration_growth": growth,
        "drift": {"H": dh, "P": dp, "I": di},
        "files": [tp, ip],
    }))
}
